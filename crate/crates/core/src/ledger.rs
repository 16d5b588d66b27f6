//! Exact multiply-add accounting.
//!
//! One flop is one multiply-add. Every matrix product in the reference model
//! charges `m·k·p` to a [`Category`] and a [`Direction`]; layer norms charge
//! one multiply-add per normalized element. Nothing else is counted.

use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    QkvProjection,
    AttentionScores,
    AttentionValues,
    OutputProjection,
    FfnExpand,
    FfnContract,
    LogitProjection,
    LayerNorm,
    Other,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::QkvProjection,
        Category::AttentionScores,
        Category::AttentionValues,
        Category::OutputProjection,
        Category::FfnExpand,
        Category::FfnContract,
        Category::LogitProjection,
        Category::LayerNorm,
        Category::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::QkvProjection => "qkv_projection",
            Category::AttentionScores => "attention_scores",
            Category::AttentionValues => "attention_values",
            Category::OutputProjection => "output_projection",
            Category::FfnExpand => "ffn_expand",
            Category::FfnContract => "ffn_contract",
            Category::LogitProjection => "logit_projection",
            Category::LayerNorm => "layer_norm",
            Category::Other => "other",
        }
    }

    /// Whether the category is charged by matrix products (as opposed to
    /// elementwise normalization).
    pub fn is_matmul(self) -> bool {
        !matches!(self, Category::LayerNorm)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }
}

/// Categorized multiply-add counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlopLedger {
    counts: [[u64; 2]; Category::ALL.len()],
}

impl FlopLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, category: Category, direction: Direction, flops: u64) {
        self.counts[category.index()][direction.index()] += flops;
    }

    pub fn get(&self, category: Category, direction: Direction) -> u64 {
        self.counts[category.index()][direction.index()]
    }

    pub fn direction_total(&self, direction: Direction) -> u64 {
        Category::ALL.iter().map(|&c| self.get(c, direction)).sum()
    }

    /// Matrix-product flops only (layer norms excluded).
    pub fn matmul_total(&self, direction: Direction) -> u64 {
        Category::ALL
            .iter()
            .filter(|c| c.is_matmul())
            .map(|&c| self.get(c, direction))
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.direction_total(Direction::Forward) + self.direction_total(Direction::Backward)
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Per-category difference `self - earlier`. Panics if `earlier` is not a
    /// prefix of this ledger's history.
    pub fn since(&self, earlier: &FlopLedger) -> FlopLedger {
        let mut out = FlopLedger::new();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                out.counts[i][j] = v
                    .checked_sub(earlier.counts[i][j])
                    .expect("ledger snapshot is newer than the ledger");
            }
        }
        out
    }

    pub fn merge(&mut self, other: &FlopLedger) {
        for (row, other_row) in self.counts.iter_mut().zip(other.counts.iter()) {
            for (v, o) in row.iter_mut().zip(other_row.iter()) {
                *v += o;
            }
        }
    }

    pub fn report(&self) -> LedgerReport {
        LedgerReport {
            rows: Category::ALL
                .iter()
                .map(|&category| LedgerRow {
                    category,
                    forward: self.get(category, Direction::Forward),
                    backward: self.get(category, Direction::Backward),
                })
                .collect(),
            forward_total: self.direction_total(Direction::Forward),
            backward_total: self.direction_total(Direction::Backward),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerRow {
    pub category: Category,
    pub forward: u64,
    pub backward: u64,
}

/// Snapshot of a ledger in fixed category order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LedgerReport {
    pub rows: Vec<LedgerRow>,
    pub forward_total: u64,
    pub backward_total: u64,
}

impl fmt::Display for LedgerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>16} {:>16}", "category", "forward", "backward")?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<20} {:>16} {:>16}",
                row.category.name(),
                row.forward,
                row.backward
            )?;
        }
        write!(
            f,
            "{:<20} {:>16} {:>16}",
            "total", self.forward_total, self.backward_total
        )
    }
}
