//! Counting and enumeration over the family of size-`n` subsets.

use crate::error::{Error, Result};
use crate::math::{binomial, MAX_UNIVERSE};
use crate::subset::Subset;

/// Default ceiling on `C(M, n)` for exhaustive loops.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

/// Number of size-`n` subsets with exactly `k` items outside a fixed size-`n`
/// center, in a universe with `big_n` items outside it: `C(n,k)·C(N,k)`.
pub fn count_at_distance(n: usize, big_n: usize, k: usize) -> u64 {
    binomial(n, k) * binomial(big_n, k)
}

/// Number of size-`n` subsets sharing exactly `r` items with a fixed size-`n`
/// subset: `C(n, r)·C(N, n − r)`.
pub fn count_with_overlap(n: usize, big_n: usize, r: usize) -> u64 {
    if r > n {
        return 0;
    }
    binomial(n, r) * binomial(big_n, n - r)
}

/// Size of the family of size-`n` subsets of an `m`-item universe.
pub fn family_size(m: usize, n: usize) -> u64 {
    binomial(m, n)
}

/// Checks that an exhaustive loop over all size-`n` subsets fits the budget.
pub fn check_enumeration_budget(m: usize, n: usize, budget: u64) -> Result<u64> {
    if m > MAX_UNIVERSE || m == 0 {
        return Err(Error::invalid(format!("universe size {m} not in 1..=64")));
    }
    if n > m {
        return Err(Error::invalid(format!("subset size {n} exceeds universe size {m}")));
    }
    let total = family_size(m, n);
    if total > budget {
        return Err(Error::size_limit(
            format!("enumerating all size-{n} subsets of {m} items"),
            total as u128,
            budget as u128,
        ));
    }
    Ok(total)
}

/// Streams every size-`n` subset of `{0..m}` in ascending bitmask order.
pub fn enumerate_subsets(m: usize, n: usize, budget: u64) -> Result<SubsetIter> {
    let total = check_enumeration_budget(m, n, budget)?;
    Ok(SubsetIter::range(m, n, 0, total))
}

/// Gosper's-hack successor: next larger integer with the same popcount.
#[inline]
pub fn next_same_popcount(x: u64) -> Option<u64> {
    if x == 0 {
        return None;
    }
    let c = x & x.wrapping_neg();
    let (r, overflow) = x.overflowing_add(c);
    if overflow || r == 0 {
        return None;
    }
    Some((((r ^ x) >> 2) / c) | r)
}

/// The subset of rank `rank` in ascending bitmask order (combinatorial number system).
pub fn unrank_subset(m: usize, n: usize, mut rank: u64) -> Option<u64> {
    if rank >= family_size(m, n) {
        return None;
    }
    let mut bits = 0u64;
    let mut upper = m;
    for i in (1..=n).rev() {
        // largest c < upper with C(c, i) <= rank
        let mut c = upper - 1;
        while binomial(c, i) > rank {
            c -= 1;
        }
        rank -= binomial(c, i);
        bits |= 1 << c;
        upper = c;
    }
    Some(bits)
}

/// Iterator over a contiguous rank range of size-`n` subsets.
#[derive(Debug, Clone)]
pub struct SubsetIter {
    m: usize,
    current: Option<u64>,
    remaining: u64,
}

impl SubsetIter {
    /// Subsets with ranks in `start..end`; ranges partition the family across workers.
    pub fn range(m: usize, n: usize, start: u64, end: u64) -> Self {
        let end = end.min(family_size(m, n));
        let remaining = end.saturating_sub(start);
        let current = if remaining > 0 {
            unrank_subset(m, n, start)
        } else {
            None
        };
        SubsetIter {
            m,
            current,
            remaining,
        }
    }
}

impl Iterator for SubsetIter {
    type Item = Subset;

    fn next(&mut self) -> Option<Subset> {
        if self.remaining == 0 {
            return None;
        }
        let bits = self.current?;
        self.remaining -= 1;
        self.current = if self.remaining > 0 {
            next_same_popcount(bits)
        } else {
            None
        };
        Some(Subset::from_raw(self.m, bits))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining as usize;
        (r, Some(r))
    }
}

impl ExactSizeIterator for SubsetIter {}

/// Splits the rank space `0..total` into at most `parts` contiguous ranges.
pub fn rank_chunks(total: u64, parts: usize) -> Vec<(u64, u64)> {
    let parts = (parts.max(1) as u64).min(total.max(1));
    let step = total.div_ceil(parts);
    (0..parts)
        .map(|i| (i * step, ((i + 1) * step).min(total)))
        .filter(|(a, b)| a < b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn count_at_distance_examples() {
        assert_eq!(count_at_distance(3, 7, 0), 1);
        assert_eq!(count_at_distance(3, 7, 1), 21);
        assert_eq!(count_at_distance(3, 7, 3), 35);
        assert_eq!(count_at_distance(3, 2, 3), 0);
    }

    #[test]
    fn count_at_distance_matches_enumeration() {
        // brute force: classify every size-3 subset of {0..9} by items outside A
        let a = 0b111u64;
        let mut hist = [0u64; 4];
        for bits in 0u64..(1 << 10) {
            if bits.count_ones() == 3 {
                hist[(bits & !a).count_ones() as usize] += 1;
            }
        }
        assert_eq!(hist, [1, 21, 63, 35]);
        for k in 0..4 {
            assert_eq!(count_at_distance(3, 7, k), hist[k]);
        }
    }

    #[test]
    fn enumeration_small_cases() {
        let all: Vec<_> = enumerate_subsets(3, 3, 100).unwrap().collect();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].bits(), 0b111);
        assert_eq!(enumerate_subsets(4, 2, 100).unwrap().count(), 6);
        let ten: Vec<_> = enumerate_subsets(10, 3, 1000).unwrap().collect();
        assert_eq!(ten.len(), 120);
        assert!(ten.iter().all(|s| s.cardinality() == 3));
        let uniq: HashSet<u64> = ten.iter().map(|s| s.bits()).collect();
        assert_eq!(uniq.len(), 120);
        assert!(ten.windows(2).all(|w| w[0].bits() < w[1].bits()));
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let err = enumerate_subsets(55, 10, DEFAULT_ENUMERATION_BUDGET).unwrap_err();
        assert!(matches!(err, Error::SizeLimit { .. }));
    }

    #[test]
    fn unrank_agrees_with_successor_walk() {
        let walked: Vec<u64> = enumerate_subsets(9, 4, 1000).unwrap().map(|s| s.bits()).collect();
        for (rank, bits) in walked.iter().enumerate() {
            assert_eq!(unrank_subset(9, 4, rank as u64), Some(*bits));
        }
        assert_eq!(unrank_subset(9, 4, walked.len() as u64), None);
    }

    #[test]
    fn rank_chunks_cover_everything_once() {
        let total = family_size(12, 5);
        let chunks = rank_chunks(total, 7);
        let mut seen = HashSet::new();
        for (a, b) in chunks {
            for s in SubsetIter::range(12, 5, a, b) {
                assert!(seen.insert(s.bits()));
            }
        }
        assert_eq!(seen.len() as u64, total);
    }

    #[test]
    fn full_universe_64() {
        let mut it = SubsetIter::range(64, 64, 0, 1);
        assert_eq!(it.next().unwrap().bits(), u64::MAX);
        assert!(it.next().is_none());
    }
}
