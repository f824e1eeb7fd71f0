//! Server result offsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted set of k server result offsets, strictly increasing and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OffsetSet {
    offsets: Vec<f64>,
}

impl OffsetSet {
    pub fn new(offsets: Vec<f64>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::EmptyOffsets);
        }
        for w in offsets.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::GapOrOverlap(format!(
                    "offsets not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if offsets.iter().any(|x| !x.is_finite()) {
            return Err(Error::GapOrOverlap("offsets must be finite".into()));
        }
        Ok(Self { offsets })
    }

    /// Sort and drop exact duplicates (set semantics), then construct.
    pub fn from_unsorted(mut offsets: Vec<f64>) -> Result<Self> {
        offsets.sort_by(|a, b| a.partial_cmp(b).unwrap());
        offsets.dedup();
        Self::new(offsets)
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.offsets
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.offsets.iter().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_unsorted() {
        assert!(matches!(OffsetSet::new(vec![]), Err(Error::EmptyOffsets)));
        assert!(OffsetSet::new(vec![1.0, 0.0]).is_err());
        assert!(OffsetSet::new(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn from_unsorted_dedupes() {
        let s = OffsetSet::from_unsorted(vec![2.0, -1.0, 2.0, 0.5]).unwrap();
        assert_eq!(s.as_slice(), &[-1.0, 0.5, 2.0]);
    }
}
