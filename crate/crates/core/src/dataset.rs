//! Tabular classification data: CSV ingestion, label encoding and
//! reproducible train/test splits.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of mixture-origin flags recorded for synthetic rows.
pub const N_ORIGINS: usize = 5;

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    Last,
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by zero-based index, `last` selects the last
    /// column, anything else is a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(if s.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = s.parse::<usize>() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Name(s.to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
    origins: Option<Vec<[bool; N_ORIGINS]>>,
}

impl Dataset {
    /// Builds a dataset from row-major features. Validates every invariant.
    pub fn new(
        n_features: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if n_features == 0 || features.len() != labels.len() * n_features {
            return Err(Error::Invalid(format!(
                "feature buffer of length {} does not match {} rows x {} columns",
                features.len(),
                labels.len(),
                n_features
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::SingleClass(class_names.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Invalid(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n_features + 1,
                column: format!("x{}", pos % n_features + 1),
            });
        }
        let feature_names = (1..=n_features).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            n_features,
            features,
            labels,
            class_names,
            feature_names,
            origins: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::Invalid(format!(
                "{} feature names for {} features",
                names.len(),
                self.n_features
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_origins(mut self, origins: Vec<[bool; N_ORIGINS]>) -> Result<Self> {
        if origins.len() != self.n_rows() {
            return Err(Error::Invalid(format!(
                "{} origin rows for {} samples",
                origins.len(),
                self.n_rows()
            )));
        }
        self.origins = Some(origins);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features + feature]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn origins(&self) -> Option<&[[bool; N_ORIGINS]]> {
        self.origins.as_deref()
    }

    /// Rows picked by index, in the given order. Class names are kept so
    /// label indices stay comparable with the source.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            n_features: self.n_features,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            origins: self
                .origins
                .as_ref()
                .map(|o| indices.iter().map(|&i| o[i]).collect()),
        }
    }

    /// SHA-256 over the canonical CSV rendering.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv_to(&mut buf).expect("writing to memory");
        hex::encode(Sha256::digest(&buf))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Features followed by a `label` column holding class names. Floats use
    /// shortest round-trip formatting.
    pub fn write_csv_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push("label");
        out.write_record(&header)?;
        let mut record = Vec::with_capacity(self.n_features + 1);
        for (row, &label) in self.rows().zip(&self.labels) {
            record.clear();
            record.extend(row.iter().map(|v| format!("{v:?}")));
            record.push(self.class_names[label].clone());
            out.write_record(&record)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Sidecar with the five origin flags per row, as 0/1.
    pub fn write_origins_csv(&self, path: &Path) -> Result<()> {
        let origins = self
            .origins
            .as_ref()
            .ok_or_else(|| Error::Invalid("dataset has no origin flags".into()))?;
        let mut out = csv::Writer::from_path(path)?;
        out.write_record((1..=N_ORIGINS).map(|i| format!("o{i}")))?;
        for flags in origins {
            out.write_record(flags.iter().map(|&f| if f { "1" } else { "0" }))?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub fn load_csv(path: &Path, label_column: &LabelColumn) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, label_column: &LabelColumn) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 {
        return Err(Error::Invalid(
            "need at least one feature column and one label column".into(),
        ));
    }
    let label_idx = match label_column {
        LabelColumn::Last => headers.len() - 1,
        LabelColumn::Index(i) if *i < headers.len() => *i,
        LabelColumn::Index(i) => return Err(Error::MissingLabelColumn(i.to_string())),
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingLabelColumn(name.clone()))?,
    };

    let n_features = headers.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();

    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                let name = cell.trim();
                let next = class_index.len();
                let idx = *class_index.entry(name.to_string()).or_insert_with(|| {
                    class_names.push(name.to_string());
                    next
                });
                labels.push(idx);
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::ParseCell {
                row,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: headers[c].clone(),
                });
            }
            features.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if class_names.len() < 2 {
        return Err(Error::SingleClass(class_names.len()));
    }
    let feature_names = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(n_features, features, labels, class_names)?.with_feature_names(feature_names)
}

pub fn class_counts(ds: &Dataset) -> Vec<usize> {
    let mut counts = vec![0; ds.n_classes()];
    for &l in ds.labels() {
        counts[l] += 1;
    }
    counts
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
    pub repetition_index: usize,
}

/// Uniform random (unstratified) split. The permutation is a pure function
/// of `seed`.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitPair> {
    if ds.n_rows() < 4 {
        return Err(Error::Invalid(format!(
            "need at least 4 rows to split, got {}",
            ds.n_rows()
        )));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = ds.n_rows();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::Invalid(format!(
            "test fraction {test_fraction} leaves an empty partition for {n} rows"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test_rows = perm[..n_test].to_vec();
    let train_rows = perm[n_test..].to_vec();
    Ok(SplitPair {
        train: ds.subset(&train_rows),
        test: ds.subset(&test_rows),
        train_rows,
        test_rows,
        seed,
        repetition_index: 0,
    })
}

/// `repetitions` splits seeded `seed, seed+1, ...`.
pub fn repeated_splits(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
    repetitions: usize,
) -> Result<Vec<SplitPair>> {
    (0..repetitions)
        .map(|r| {
            let mut pair = split(ds, test_fraction, seed.wrapping_add(r as u64))?;
            pair.repetition_index = r;
            Ok(pair)
        })
        .collect()
}
