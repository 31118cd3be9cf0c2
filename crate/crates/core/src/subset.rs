//! Ground sets and fixed-size subsets stored as 64-bit masks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::MAX_UNIVERSE;

/// The finite universe of `M` labeled items.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundSet {
    labels: Vec<String>,
}

impl GroundSet {
    /// Ground set labeled `"1"..="M"`.
    pub fn new(size: usize) -> Result<Self> {
        Self::with_labels((1..=size).map(|i| i.to_string()).collect())
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let size = labels.len();
        if size < 2 {
            return Err(Error::invalid(format!("ground set needs at least 2 items, got {size}")));
        }
        if size > MAX_UNIVERSE {
            return Err(Error::invalid(format!(
                "ground set of {size} items exceeds the supported maximum of {MAX_UNIVERSE}"
            )));
        }
        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("duplicate ground-set label {:?}", w[0])));
        }
        Ok(GroundSet { labels })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Mask with every item of the universe set.
    pub fn full_mask(&self) -> u64 {
        full_mask(self.size())
    }

    /// Builds a subset from 0-based item indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Subset> {
        Subset::from_indices(self.size(), indices)
    }

    /// Renders a subset with this ground set's labels, e.g. `{1, 2, 3}`.
    pub fn display(&self, subset: &Subset) -> String {
        let parts: Vec<&str> = subset.indices().map(|i| self.label(i)).collect();
        format!("{{{}}}", parts.join(", "))
    }
}

pub(crate) fn full_mask(size: usize) -> u64 {
    if size >= 64 {
        u64::MAX
    } else {
        (1u64 << size) - 1
    }
}

/// A subset of a ground set of `universe` items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subset {
    bits: u64,
    universe: u8,
}

impl Subset {
    pub fn from_bits(universe: usize, bits: u64) -> Result<Self> {
        if universe == 0 || universe > MAX_UNIVERSE {
            return Err(Error::invalid(format!("universe size {universe} not in 1..=64")));
        }
        if bits & !full_mask(universe) != 0 {
            return Err(Error::invalid(format!(
                "mask {bits:#x} has items outside a universe of {universe}"
            )));
        }
        Ok(Subset {
            bits,
            universe: universe as u8,
        })
    }

    /// Unchecked constructor for hot loops where `bits` is known to fit.
    #[inline]
    pub(crate) fn from_raw(universe: usize, bits: u64) -> Self {
        debug_assert!(bits & !full_mask(universe) == 0);
        Subset {
            bits,
            universe: universe as u8,
        }
    }

    pub fn from_indices(universe: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = 0u64;
        for &i in indices {
            if i >= universe {
                return Err(Error::invalid(format!(
                    "item index {} outside a universe of {universe}",
                    i + 1
                )));
            }
            if bits & (1 << i) != 0 {
                return Err(Error::invalid(format!("item {} listed twice", i + 1)));
            }
            bits |= 1 << i;
        }
        Self::from_bits(universe, bits)
    }

    #[inline]
    pub fn bits(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn universe(&self) -> usize {
        self.universe as usize
    }

    #[inline]
    pub fn cardinality(&self) -> usize {
        self.bits.count_ones() as usize
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        index < 64 && self.bits & (1 << index) != 0
    }

    pub fn complement(&self) -> Subset {
        Subset::from_raw(self.universe(), !self.bits & full_mask(self.universe()))
    }

    #[inline]
    pub fn intersection_size(&self, other: &Subset) -> usize {
        (self.bits & other.bits).count_ones() as usize
    }

    /// Ascending 0-based indices of the members.
    pub fn indices(&self) -> impl Iterator<Item = usize> {
        BitIter(self.bits)
    }

    /// Returns this subset with `out` removed and `inn` added.
    pub fn swap(&self, out: usize, inn: usize) -> Subset {
        Subset::from_raw(self.universe(), (self.bits & !(1 << out)) | (1 << inn))
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (pos, i) in self.indices().enumerate() {
            if pos > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Iterates over set bit positions, lowest first.
pub(crate) struct BitIter(pub(crate) u64);

impl Iterator for BitIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }
}

/// Number of elements of `x` outside `center`, i.e. `#(X ∩ A^c)`.
pub fn overlap_outside(x: &Subset, center: &Subset) -> Result<usize> {
    if x.universe != center.universe {
        return Err(Error::invalid(format!(
            "subsets come from universes of size {} and {}",
            x.universe, center.universe
        )));
    }
    if x.cardinality() != center.cardinality() {
        return Err(Error::invalid(format!(
            "subsets have cardinalities {} and {}",
            x.cardinality(),
            center.cardinality()
        )));
    }
    Ok((x.bits & !center.bits).count_ones() as usize)
}

#[inline]
pub(crate) fn outside_count(x: u64, center: u64) -> usize {
    (x & !center).count_ones() as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(items: &[usize]) -> Subset {
        let idx: Vec<usize> = items.iter().map(|i| i - 1).collect();
        Subset::from_indices(10, &idx).unwrap()
    }

    #[test]
    fn overlap_outside_examples() {
        let a = s(&[1, 2, 3]);
        assert_eq!(overlap_outside(&a, &a).unwrap(), 0);
        assert_eq!(overlap_outside(&s(&[1, 2, 3]), &s(&[1, 2, 7])).unwrap(), 1);
        assert_eq!(overlap_outside(&s(&[5, 6, 8]), &a).unwrap(), 3);
    }

    #[test]
    fn overlap_outside_rejects_mismatches() {
        let a = s(&[1, 2, 3]);
        let b = Subset::from_indices(11, &[0, 1, 2]).unwrap();
        assert!(overlap_outside(&a, &b).is_err());
        assert!(overlap_outside(&a, &s(&[1, 2])).is_err());
    }

    #[test]
    fn overlap_outside_is_n_minus_intersection() {
        let x = s(&[2, 3, 8]);
        let a = s(&[1, 2, 3]);
        assert_eq!(overlap_outside(&x, &a).unwrap(), 3 - x.intersection_size(&a));
    }

    #[test]
    fn ground_set_validation() {
        assert!(GroundSet::new(1).is_err());
        assert!(GroundSet::new(65).is_err());
        assert!(GroundSet::with_labels(vec!["a".into(), "a".into()]).is_err());
        let g = GroundSet::new(10).unwrap();
        assert_eq!(g.display(&s(&[1, 2, 3])), "{1, 2, 3}");
        assert!(g.subset(&[0, 0]).is_err());
        assert!(g.subset(&[10]).is_err());
    }

    #[test]
    fn complement_and_display() {
        let a = s(&[1, 2, 3]);
        assert_eq!(a.complement().cardinality(), 7);
        assert_eq!(a.to_string(), "{1, 2, 3}");
        assert_eq!(a.swap(0, 9).to_string(), "{2, 3, 10}");
    }
}
