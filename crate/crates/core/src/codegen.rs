//! C99 inference kernels for trained forests.
//!
//! Two styles are emitted. `ifelse` writes one function of nested
//! conditionals per tree. `native` writes a static node array in a chosen
//! layout and a single traversal loop. Both export
//! `int32_t skt_predict(const double *x)` with the interpreter's semantics:
//! `x[f] <= threshold` goes left and the vote picks the lowest class on
//! ties. Thresholds are printed as shortest round-trip literals, so the C
//! comparisons see the same doubles as the interpreter.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::harness;
use crate::layout::{flatten, LayoutStrategy};
use crate::tree::{Forest, NodeKind, Tree};

pub const PREDICT_FN: &str = "skt_predict";
pub const DEFAULT_NESTING_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelStyle {
    Ifelse,
    Native,
}

impl std::fmt::Display for KernelStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelStyle::Ifelse => "ifelse",
            KernelStyle::Native => "native",
        })
    }
}

impl std::str::FromStr for KernelStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ifelse" => Ok(KernelStyle::Ifelse),
            "native" => Ok(KernelStyle::Native),
            _ => Err(Error::Invalid(format!(
                "unknown kernel style `{s}`; expected ifelse or native"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedBundle {
    pub kernel_source: String,
    /// Driver translation unit; empty until `emit_driver` fills it.
    pub harness_source: String,
    pub kernel_style: KernelStyle,
    pub layout: Option<LayoutStrategy>,
    pub forest_fingerprint: String,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Shortest decimal that parses back to the same double.
pub fn c_double(v: f64) -> String {
    debug_assert!(v.is_finite());
    format!("{v:?}")
}

fn preamble(out: &mut String, forest: &Forest, style: KernelStyle, fingerprint: &str) {
    let _ = writeln!(out, "/* {style} kernel for forest {fingerprint} */");
    out.push_str("#include <stdint.h>\n\n");
    let _ = writeln!(out, "#define SKT_N_FEATURES {}", forest.n_features);
    let _ = writeln!(out, "#define SKT_N_CLASSES {}", forest.n_classes());
    let _ = writeln!(out, "#define SKT_N_TREES {}\n", forest.trees.len());
    let _ = writeln!(out, "int32_t {PREDICT_FN}(const double *x);\n");
}

fn emit_vote_tail(out: &mut String) {
    out.push_str("    best = 0;\n");
    out.push_str("    for (c = 1; c < SKT_N_CLASSES; ++c) {\n");
    out.push_str("        if (votes[c] > votes[best]) {\n");
    out.push_str("            best = c;\n");
    out.push_str("        }\n");
    out.push_str("    }\n");
    out.push_str("    return best;\n}\n");
}

fn emit_node(out: &mut String, tree: &Tree, idx: usize, indent: usize) {
    let pad = "    ".repeat(indent);
    match tree.nodes[idx].kind {
        NodeKind::Leaf { class } => {
            let _ = writeln!(out, "{pad}return {class};");
        }
        NodeKind::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            let _ = writeln!(out, "{pad}if (x[{feature}] <= {}) {{", c_double(threshold));
            emit_node(out, tree, left, indent + 1);
            let _ = writeln!(out, "{pad}}} else {{");
            emit_node(out, tree, right, indent + 1);
            let _ = writeln!(out, "{pad}}}");
        }
    }
}

pub fn emit_ifelse(forest: &Forest, nesting_limit: usize) -> Result<EmittedBundle> {
    let depth = forest.trees.iter().map(Tree::max_depth).max().unwrap_or(0);
    if depth > nesting_limit {
        return Err(Error::NestingLimit {
            depth,
            limit: nesting_limit,
        });
    }
    let fingerprint = forest.fingerprint();
    let mut out = String::new();
    preamble(&mut out, forest, KernelStyle::Ifelse, &fingerprint);
    for (t, tree) in forest.trees.iter().enumerate() {
        // a lone leaf reads no feature; strict warnings reject the unused parameter
        let param = if tree.root().is_leaf() {
            "void"
        } else {
            "const double *x"
        };
        let _ = writeln!(out, "static int32_t skt_tree_{t}({param})\n{{");
        emit_node(&mut out, tree, 0, 1);
        out.push_str("}\n\n");
    }
    let _ = writeln!(out, "int32_t {PREDICT_FN}(const double *x)\n{{");
    out.push_str("    int32_t votes[SKT_N_CLASSES] = {0};\n");
    out.push_str("    int32_t best;\n    int32_t c;\n");
    if forest.trees.iter().all(|t| t.root().is_leaf()) {
        out.push_str("    (void)x;\n");
    }
    for (t, tree) in forest.trees.iter().enumerate() {
        let arg = if tree.root().is_leaf() { "" } else { "x" };
        let _ = writeln!(out, "    votes[skt_tree_{t}({arg})] += 1;");
    }
    emit_vote_tail(&mut out);
    Ok(EmittedBundle {
        kernel_source: out,
        harness_source: String::new(),
        kernel_style: KernelStyle::Ifelse,
        layout: None,
        forest_fingerprint: fingerprint,
        n_features: forest.n_features,
        n_classes: forest.n_classes(),
    })
}

pub fn emit_native(forest: &Forest, strategy: LayoutStrategy) -> Result<EmittedBundle> {
    let fingerprint = forest.fingerprint();
    let mut out = String::new();
    preamble(&mut out, forest, KernelStyle::Native, &fingerprint);
    out.push_str("/* leaves store -1 - class in `left` */\n");
    out.push_str("typedef struct {\n    double threshold;\n    int32_t feature;\n");
    out.push_str("    int32_t left;\n    int32_t right;\n} skt_node;\n\n");
    let _ = writeln!(out, "/* layout: {strategy} */");
    out.push_str("static const skt_node skt_nodes[] = {\n");
    let mut roots = Vec::with_capacity(forest.trees.len());
    let mut base = 0usize;
    for (t, tree) in forest.trees.iter().enumerate() {
        roots.push(base);
        let array = flatten(tree, strategy);
        let _ = writeln!(out, "    /* tree {t} */");
        for n in &array.nodes {
            if n.leaf {
                let _ = writeln!(out, "    {{0.0, 0, {}, -1}},", -1 - n.class_index as i64);
            } else {
                let _ = writeln!(
                    out,
                    "    {{{}, {}, {}, {}}},",
                    c_double(n.threshold),
                    n.feature_index,
                    base + n.left_index,
                    base + n.right_index
                );
            }
        }
        base += array.nodes.len();
    }
    out.push_str("};\n\n");
    let roots: Vec<String> = roots.iter().map(usize::to_string).collect();
    let _ = writeln!(
        out,
        "static const int32_t skt_roots[SKT_N_TREES] = {{{}}};\n",
        roots.join(", ")
    );
    let _ = writeln!(out, "int32_t {PREDICT_FN}(const double *x)\n{{");
    out.push_str("    int32_t votes[SKT_N_CLASSES] = {0};\n");
    out.push_str("    int32_t best;\n    int32_t c;\n    int32_t t;\n");
    out.push_str("    for (t = 0; t < SKT_N_TREES; ++t) {\n");
    out.push_str("        const skt_node *n = &skt_nodes[skt_roots[t]];\n");
    out.push_str("        while (n->left >= 0) {\n");
    out.push_str(
        "            n = &skt_nodes[x[n->feature] <= n->threshold ? n->left : n->right];\n",
    );
    out.push_str("        }\n");
    out.push_str("        votes[-1 - n->left] += 1;\n");
    out.push_str("    }\n");
    emit_vote_tail(&mut out);
    Ok(EmittedBundle {
        kernel_source: out,
        harness_source: String::new(),
        kernel_style: KernelStyle::Native,
        layout: Some(strategy),
        forest_fingerprint: fingerprint,
        n_features: forest.n_features,
        n_classes: forest.n_classes(),
    })
}

/// Emits the requested style; if-else output deeper than `nesting_limit`
/// falls back to the native style in the given layout.
pub fn emit_kernel(
    forest: &Forest,
    style: KernelStyle,
    strategy: LayoutStrategy,
    nesting_limit: usize,
) -> Result<EmittedBundle> {
    match style {
        KernelStyle::Ifelse => match emit_ifelse(forest, nesting_limit) {
            Err(Error::NestingLimit { .. }) => emit_native(forest, strategy),
            other => other,
        },
        KernelStyle::Native => emit_native(forest, strategy),
    }
}

/// Attaches a driver timing `reps` passes over `test`. The test set must
/// have the forest's feature count.
pub fn emit_driver(
    mut bundle: EmittedBundle,
    test: &Dataset,
    reps: usize,
) -> Result<EmittedBundle> {
    if test.n_features() != bundle.n_features {
        return Err(Error::FeatureMismatch {
            expected: bundle.n_features,
            got: test.n_features(),
        });
    }
    bundle.harness_source = harness::driver_source(
        &bundle.kernel_style.to_string(),
        reps,
        bundle.n_features,
        bundle.n_classes,
        PREDICT_FN,
    )?;
    Ok(bundle)
}
