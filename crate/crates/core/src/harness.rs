//! Benchmark driver template for generated kernels.
//!
//! The template is plain C99 with `@@NAME@@` anchors. `instantiate`
//! substitutes every anchor and refuses unbound or unknown ones.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub const ANCHOR_STYLE: &str = "SKT_STYLE";
pub const ANCHOR_REPS: &str = "SKT_REPS";
pub const ANCHOR_N_FEATURES: &str = "SKT_N_FEATURES";
pub const ANCHOR_N_CLASSES: &str = "SKT_N_CLASSES";
pub const ANCHOR_PREDICT: &str = "SKT_PREDICT";

pub const DEFAULT_REPS: usize = 50;

/// Loads the test CSV (header skipped, first `N_FEATURES` columns parsed,
/// the rest ignored), runs one untimed pass for the histogram and checksum,
/// then times `REPS` passes over all rows on the monotonic clock.
pub const DRIVER_TEMPLATE: &str = r#"/* benchmark driver; links against a generated kernel */
#define _POSIX_C_SOURCE 199309L
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>

#define DRV_STYLE "@@SKT_STYLE@@"
#define DRV_REPS @@SKT_REPS@@
#define DRV_N_FEATURES @@SKT_N_FEATURES@@
#define DRV_N_CLASSES @@SKT_N_CLASSES@@

int32_t @@SKT_PREDICT@@(const double *x);

static char *read_file(const char *path, size_t *len)
{
    FILE *f = fopen(path, "rb");
    char *buf;
    long size;
    if (f == NULL) {
        return NULL;
    }
    if (fseek(f, 0, SEEK_END) != 0 || (size = ftell(f)) < 0 || fseek(f, 0, SEEK_SET) != 0) {
        fclose(f);
        return NULL;
    }
    buf = (char *)malloc((size_t)size + 1);
    if (buf == NULL) {
        fclose(f);
        return NULL;
    }
    *len = fread(buf, 1, (size_t)size, f);
    buf[*len] = '\0';
    fclose(f);
    return buf;
}

static char *skip_line(char *p)
{
    while (*p != '\0' && *p != '\n') {
        ++p;
    }
    return *p == '\n' ? p + 1 : p;
}

static double *load_csv(const char *path, size_t *n_rows)
{
    size_t len = 0;
    size_t cap = 1024;
    size_t rows = 0;
    char *text = read_file(path, &len);
    char *p;
    double *data;
    if (text == NULL) {
        return NULL;
    }
    data = (double *)malloc(cap * DRV_N_FEATURES * sizeof(double));
    if (data == NULL) {
        free(text);
        return NULL;
    }
    p = skip_line(text);
    while (*p != '\0') {
        int j;
        if (*p == '\n' || *p == '\r') {
            ++p;
            continue;
        }
        if (rows == cap) {
            double *grown;
            cap *= 2;
            grown = (double *)realloc(data, cap * DRV_N_FEATURES * sizeof(double));
            if (grown == NULL) {
                free(data);
                free(text);
                return NULL;
            }
            data = grown;
        }
        for (j = 0; j < DRV_N_FEATURES; ++j) {
            char *end;
            double v = strtod(p, &end);
            if (end == p) {
                fprintf(stderr, "bad number at data row %lu column %d\n", (unsigned long)rows + 1, j + 1);
                free(data);
                free(text);
                return NULL;
            }
            data[rows * DRV_N_FEATURES + (size_t)j] = v;
            p = end;
            if (*p == ',') {
                ++p;
            }
        }
        p = skip_line(p);
        ++rows;
    }
    free(text);
    *n_rows = rows;
    return data;
}

static double now_ns(void)
{
#ifdef CLOCK_MONOTONIC
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (double)ts.tv_sec * 1e9 + (double)ts.tv_nsec;
#else
    return (double)clock() * (1e9 / (double)CLOCKS_PER_SEC);
#endif
}

int main(int argc, char **argv)
{
    size_t n_rows = 0;
    size_t i;
    long rep;
    long histogram[DRV_N_CLASSES];
    long sink[DRV_N_CLASSES];
    uint64_t checksum = 14695981039346656037ULL;
    double *data;
    double start;
    double elapsed;
    int c;

    if (argc < 2) {
        fprintf(stderr, "usage: %s test.csv\n", argv[0]);
        return 2;
    }
    data = load_csv(argv[1], &n_rows);
    if (data == NULL || n_rows == 0) {
        fprintf(stderr, "cannot load %s\n", argv[1]);
        return 1;
    }
    memset(histogram, 0, sizeof histogram);
    memset(sink, 0, sizeof sink);
    for (i = 0; i < n_rows; ++i) {
        int32_t pred = @@SKT_PREDICT@@(data + i * DRV_N_FEATURES);
        int b;
        histogram[pred] += 1;
        for (b = 0; b < 4; ++b) {
            checksum ^= (uint64_t)(((uint32_t)pred >> (8 * b)) & 0xffu);
            checksum *= 1099511628211ULL;
        }
    }
    start = now_ns();
    for (rep = 0; rep < DRV_REPS; ++rep) {
        for (i = 0; i < n_rows; ++i) {
            sink[@@SKT_PREDICT@@(data + i * DRV_N_FEATURES)] += 1;
        }
    }
    elapsed = now_ns() - start;
    for (c = 0; c < DRV_N_CLASSES; ++c) {
        if (sink[c] != histogram[c] * DRV_REPS) {
            fprintf(stderr, "nondeterministic kernel\n");
            return 1;
        }
    }
    printf("RESULT style=%s reps=%d rows=%lu mean_ns_per_sample=%.4f histogram=",
           DRV_STYLE, DRV_REPS, (unsigned long)n_rows, elapsed / ((double)n_rows * DRV_REPS));
    for (c = 0; c < DRV_N_CLASSES; ++c) {
        printf(c == 0 ? "%ld" : ",%ld", histogram[c]);
    }
    printf("\nCHECKSUM %016llx\n", (unsigned long long)checksum);
    free(data);
    return 0;
}
"#;

/// Anchor names in order of first appearance.
pub fn anchors(template: &str) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("@@") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("@@") else { break };
        let name = &after[..end];
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            if seen.insert(name.to_string()) {
                out.push(name.to_string());
            }
            rest = &after[end + 2..];
        } else {
            rest = after;
        }
    }
    out
}

pub fn instantiate(template: &str, bindings: &[(&str, String)]) -> Result<String> {
    let names = anchors(template);
    for (key, _) in bindings {
        if !names.iter().any(|n| n == key) {
            return Err(Error::UnknownAnchor(key.to_string()));
        }
    }
    let mut text = template.to_string();
    for name in &names {
        let value = bindings
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::UnboundAnchor(name.clone()))?;
        text = text.replace(&format!("@@{name}@@"), value);
    }
    Ok(text)
}

pub fn driver_source(
    style: &str,
    reps: usize,
    n_features: usize,
    n_classes: usize,
    predict_fn: &str,
) -> Result<String> {
    if reps == 0 {
        return Err(Error::Invalid("reps must be at least 1".into()));
    }
    instantiate(
        DRIVER_TEMPLATE,
        &[
            (ANCHOR_STYLE, style.to_string()),
            (ANCHOR_REPS, reps.to_string()),
            (ANCHOR_N_FEATURES, n_features.to_string()),
            (ANCHOR_N_CLASSES, n_classes.to_string()),
            (ANCHOR_PREDICT, predict_fn.to_string()),
        ],
    )
}
