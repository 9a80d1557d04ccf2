use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Half-open integer intervals `[start_i, start_{i+1})`, the last one
/// unbounded above. Only the starts are stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct BinEdges(Vec<u32>);

impl BinEdges {
    pub fn new(starts: Vec<u32>) -> Result<Self> {
        if starts.is_empty() {
            return domain("bin list must contain at least one interval");
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) {
            return domain(format!("bin starts must be strictly ascending, got {starts:?}"));
        }
        Ok(Self(starts))
    }

    pub fn starts(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the interval containing `q`, or `None` below the first start.
    pub fn index_of(&self, q: f64) -> Option<usize> {
        if q < self.0[0] as f64 {
            return None;
        }
        Some(self.0.partition_point(|&s| s as f64 <= q) - 1)
    }

    pub fn index_of_size(&self, size: u32) -> Option<usize> {
        if size < self.0[0] {
            return None;
        }
        Some(self.0.partition_point(|&s| s <= size) - 1)
    }

    /// Exclusive upper end of interval `k`, `None` for the last one.
    pub fn end(&self, k: usize) -> Option<u32> {
        self.0.get(k + 1).copied()
    }

    pub fn contains(&self, k: usize, size: u32) -> bool {
        self.index_of_size(size) == Some(k)
    }

    pub fn label(&self, k: usize) -> String {
        match self.end(k) {
            Some(e) => format!("[{},{})", self.0[k], e),
            None => format!("[{},inf)", self.0[k]),
        }
    }
}

impl TryFrom<Vec<u32>> for BinEdges {
    type Error = crate::Error;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BinEdges> for Vec<u32> {
    fn from(b: BinEdges) -> Self {
        b.0
    }
}

/// Estimation bins carry the size fixed effects; pricing bins are the tariff
/// segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBinConfig {
    pub estimation_bins: BinEdges,
    pub pricing_bins: BinEdges,
}

impl SizeBinConfig {
    pub fn new(estimation: Vec<u32>, pricing: Vec<u32>) -> Result<Self> {
        let estimation_bins = BinEdges::new(estimation)?;
        let pricing_bins = BinEdges::new(pricing)?;
        if estimation_bins.starts()[0] > 1 {
            return domain("estimation bins must cover every size >= 1");
        }
        if pricing_bins.starts()[0] > 1 {
            return domain("pricing bins must cover every size >= 1");
        }
        Ok(Self {
            estimation_bins,
            pricing_bins,
        })
    }
}

impl Default for SizeBinConfig {
    fn default() -> Self {
        Self {
            estimation_bins: BinEdges(vec![1, 20, 50]),
            pricing_bins: BinEdges(vec![0, 10, 20, 50, 100]),
        }
    }
}
