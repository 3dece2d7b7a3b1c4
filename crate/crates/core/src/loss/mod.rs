//! Episodic losses over query/prototype similarities.
//!
//! Every loss maps a similarity layout to a [`LossResult`]: the scalar loss
//! (lower is better) plus the exact partial derivative with respect to each
//! similarity entry. The derivatives carry enough provenance ([`Source`],
//! category index) for the embedding head to route them back to samples.
//!
//! * [`ce_loss`]: softmax cross entropy of each query against all prototypes.
//! * [`qr_loss`]: query-relative loss, one coupled term per category.
//! * [`qr_margin_loss`]: query-relative loss with adaptive hard margins.
//! * [`jsd_mi_loss`]: negated Jensen-Shannon mutual-information estimator.

mod ce;
mod jsd;
mod qr;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ce::ce_loss;
pub use jsd::jsd_mi_loss;
pub use qr::{compute_margins, qr_loss, qr_margin_loss, qr_margin_loss_with};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Qr,
    QrMargin,
    JsdMi,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Ce, LossKind::Qr, LossKind::QrMargin, LossKind::JsdMi];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Qr => "qr",
            LossKind::QrMargin => "qr_margin",
            LossKind::JsdMi => "jsd_mi",
        }
    }

    /// Whether the loss consumes a per-category [`SimilarityPartition`]
    /// rather than a query-by-prototype matrix.
    pub fn is_relative(self) -> bool {
        !matches!(self, LossKind::Ce)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ce" => Ok(LossKind::Ce),
            "qr" => Ok(LossKind::Qr),
            "qr_margin" => Ok(LossKind::QrMargin),
            "jsd_mi" => Ok(LossKind::JsdMi),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss kind `{other}` (expected ce, qr, qr_margin or jsd_mi)"
            ))),
        }
    }
}

/// Which episode sample a similarity was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Query(usize),
    Support(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEntry {
    pub sim: f64,
    pub source: Source,
}

impl SimEntry {
    pub fn new(sim: f64, source: Source) -> Self {
        Self { sim, source }
    }
}

/// Positive and negative similarities against one category's prototype.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategorySims {
    pub pos: Vec<SimEntry>,
    pub neg: Vec<SimEntry>,
}

/// Similarities grouped by category: `pos` holds queries of that category,
/// `neg` holds queries and individual support samples of every other category.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimilarityPartition {
    pub categories: Vec<CategorySims>,
}

impl SimilarityPartition {
    /// Builds a partition from bare similarity lists. Sources are numbered
    /// sequentially per list, which is enough for loss-level work.
    pub fn from_values(categories: &[(Vec<f64>, Vec<f64>)]) -> Self {
        let categories = categories
            .iter()
            .map(|(pos, neg)| CategorySims {
                pos: pos
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| SimEntry::new(s, Source::Query(i)))
                    .collect(),
                neg: neg
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| SimEntry::new(s, Source::Query(i)))
                    .collect(),
            })
            .collect();
        Self { categories }
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    /// All similarities, category by category, positives before negatives.
    pub fn values(&self) -> Vec<f64> {
        self.categories
            .iter()
            .flat_map(|c| c.pos.iter().chain(&c.neg).map(|e| e.sim))
            .collect()
    }

    /// Copy of `self` with similarities replaced, in [`Self::values`] order.
    pub fn with_values(&self, values: &[f64]) -> Self {
        let mut out = self.clone();
        let mut it = values.iter();
        for c in &mut out.categories {
            for e in c.pos.iter_mut().chain(c.neg.iter_mut()) {
                e.sim = *it.next().expect("value count matches partition size");
            }
        }
        out
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (j, c) in self.categories.iter().enumerate() {
            if c.pos.is_empty() {
                return Err(Error::EmptyCategory { category: j, set: "positive" });
            }
            if c.neg.is_empty() {
                return Err(Error::EmptyCategory { category: j, set: "negative" });
            }
            if c.pos.iter().chain(&c.neg).any(|e| !e.sim.is_finite()) {
                return Err(Error::NonFinite(format!("similarities of category {j}")));
            }
        }
        Ok(())
    }
}

/// Query-by-category similarity matrix with the true label of each query.
/// Row `i` belongs to query `i` of the episode.
#[derive(Debug, Clone, PartialEq)]
pub struct CePartition {
    pub sims: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl CePartition {
    pub fn values(&self) -> Vec<f64> {
        self.sims.concat()
    }

    pub fn with_values(&self, values: &[f64]) -> Self {
        let width = self.sims.first().map_or(0, Vec::len);
        Self {
            sims: values.chunks(width.max(1)).map(<[f64]>::to_vec).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Input to any of the four losses.
#[derive(Debug, Clone, PartialEq)]
pub enum Partition {
    Relative(SimilarityPartition),
    CrossEntropy(CePartition),
}

impl Partition {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Partition::Relative(p) => p.values(),
            Partition::CrossEntropy(p) => p.values(),
        }
    }

    pub fn with_values(&self, values: &[f64]) -> Self {
        match self {
            Partition::Relative(p) => Partition::Relative(p.with_values(values)),
            Partition::CrossEntropy(p) => Partition::CrossEntropy(p.with_values(values)),
        }
    }
}

/// `∂L/∂s` for one similarity entry, `s = cos(c_category, source)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimGrad {
    pub category: usize,
    pub source: Source,
    pub polarity: Polarity,
    pub grad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// One entry per similarity, in the partition's `values()` order.
    pub grads: Vec<SimGrad>,
}

impl LossResult {
    pub fn grad_values(&self) -> Vec<f64> {
        self.grads.iter().map(|g| g.grad).collect()
    }
}

/// Adaptive margin statistics of one category.
///
/// `e_plus` is the mean of the category's negative-valued positive
/// similarities, `e_minus` the mean of its positive-valued negative
/// similarities; either is 0 when nothing qualifies.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MarginPair {
    pub e_plus: f64,
    pub e_minus: f64,
}

impl MarginPair {
    pub fn is_zero(&self) -> bool {
        self.e_plus == 0.0 && self.e_minus == 0.0
    }
}

/// Loss selection plus the one tunable the family has.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub ce_temperature: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, ce_temperature: 1.0 }
    }
}

/// Evaluates the configured loss. `frozen_margins` replaces the margins
/// `qr_margin` would otherwise compute from `partition`; other kinds ignore it.
pub fn compute(
    cfg: &LossConfig,
    partition: &Partition,
    frozen_margins: Option<&[MarginPair]>,
) -> Result<LossResult> {
    match (cfg.kind, partition) {
        (LossKind::Ce, Partition::CrossEntropy(p)) => ce_loss(p, cfg.ce_temperature),
        (LossKind::Qr, Partition::Relative(p)) => qr_loss(p),
        (LossKind::JsdMi, Partition::Relative(p)) => jsd_mi_loss(p),
        (LossKind::QrMargin, Partition::Relative(p)) => match frozen_margins {
            Some(m) => qr_margin_loss_with(p, m),
            None => qr_margin_loss(p),
        },
        (kind, _) => Err(Error::Shape(format!(
            "loss `{kind}` received the wrong partition layout"
        ))),
    }
}
