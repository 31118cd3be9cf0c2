//! Membership-pattern partitions of the universe and the integer
//! compositions over them.
//!
//! For reference subsets `Y_1..Y_p`, cell `I` (a `p`-bit mask) holds the items
//! that belong to exactly the `Y_j` with `j ∈ I`. A composition assigns a
//! count `s_I ≤ #cell_I` to every cell with total `n`; it describes how a
//! size-`n` subset meets the cells. Grouping compositions by their marginals
//! `r_j = Σ_{I∋j} s_I` gives the number of subsets with prescribed overlaps.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::math::binomial;
use crate::subset::Subset;

/// Default ceiling on the number of reference subsets per partition.
pub const DEFAULT_MAX_REFERENCES: usize = 8;
/// Default ceiling on the number of generated compositions.
pub const DEFAULT_MAX_COMPOSITIONS: u64 = 5_000_000;

/// Size limits for the partition machinery; cost grows like `2^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AlphaBudget {
    pub max_references: usize,
    pub max_compositions: u64,
}

impl Default for AlphaBudget {
    fn default() -> Self {
        AlphaBudget {
            max_references: DEFAULT_MAX_REFERENCES,
            max_compositions: DEFAULT_MAX_COMPOSITIONS,
        }
    }
}

/// Cell counts `#α_I` (and the cells themselves) for `p` reference subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphaPartition {
    p: usize,
    universe: usize,
    cells: Vec<u64>,
}

/// Count vector over the `2^p` cells, indexed by the cell's membership mask.
pub type Composition = Vec<u8>;

impl AlphaPartition {
    pub fn references(&self) -> usize {
        self.p
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Items of cell `pattern`, as a mask.
    pub fn cell(&self, pattern: usize) -> u64 {
        self.cells[pattern]
    }

    pub fn count(&self, pattern: usize) -> usize {
        self.cells[pattern].count_ones() as usize
    }

    pub fn counts(&self) -> Vec<usize> {
        self.cells.iter().map(|c| c.count_ones() as usize).collect()
    }

    /// Partition for `(Y_1..Y_p, extra)`: the new reference takes bit `p`.
    pub fn extend_with(&self, extra: &Subset) -> AlphaPartition {
        let a = extra.bits();
        let half = self.cells.len();
        let mut cells = vec![0u64; 2 * half];
        for (pattern, &cell) in self.cells.iter().enumerate() {
            cells[pattern] = cell & !a;
            cells[pattern | half] = cell & a;
        }
        AlphaPartition {
            p: self.p + 1,
            universe: self.universe,
            cells,
        }
    }

    /// `#(α_I ∩ A)` for every cell; the only way `A` enters the lab-level sums.
    pub fn overlap_counts(&self, a: &Subset) -> Composition {
        self.cells
            .iter()
            .map(|&c| (c & a.bits()).count_ones() as u8)
            .collect()
    }
}

/// Partitions the universe by membership in each of `refs`.
pub fn alpha_partition(refs: &[Subset], max_references: usize) -> Result<AlphaPartition> {
    let Some(first) = refs.first() else {
        return Err(Error::invalid("alpha partition needs at least one reference subset"));
    };
    if refs.len() > max_references {
        return Err(Error::size_limit(
            format!("partitioning by {} reference subsets", refs.len()),
            1u128 << refs.len().min(127),
            1u128 << max_references.min(127),
        ));
    }
    let universe = first.universe();
    if refs.iter().any(|r| r.universe() != universe) {
        return Err(Error::invalid("reference subsets come from different universes"));
    }
    let p = refs.len();
    let mut cells = vec![0u64; 1 << p];
    for item in 0..universe {
        let pattern = refs
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, r)| acc | ((r.contains(item) as usize) << j));
        cells[pattern] |= 1 << item;
    }
    Ok(AlphaPartition { p, universe, cells })
}

/// Encodes marginal tuples `(r_1..r_p)` as base-`(n+1)` integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarginalKey {
    n: usize,
    p: usize,
}

impl MarginalKey {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        let radix = (n + 1) as u128;
        let span = (0..p).try_fold(1u128, |acc, _| acc.checked_mul(radix));
        match span {
            Some(v) if v <= u64::MAX as u128 => Ok(MarginalKey { n, p }),
            _ => Err(Error::size_limit(
                format!("marginal keys for {p} references with subset size {n}"),
                u128::MAX,
                u64::MAX as u128,
            )),
        }
    }

    pub fn encode(&self, r: &[usize]) -> u64 {
        debug_assert_eq!(r.len(), self.p);
        r.iter()
            .rev()
            .fold(0u64, |acc, &v| acc * (self.n as u64 + 1) + v as u64)
    }

    pub fn decode(&self, mut key: u64) -> Vec<usize> {
        let radix = self.n as u64 + 1;
        (0..self.p)
            .map(|_| {
                let v = (key % radix) as usize;
                key /= radix;
                v
            })
            .collect()
    }

    /// Marginals `r_j = Σ_{I∋j} s_I` of a composition.
    pub fn marginals(&self, s: &[u8]) -> Vec<usize> {
        let mut r = vec![0usize; self.p];
        for (pattern, &count) in s.iter().enumerate() {
            if count == 0 {
                continue;
            }
            for (j, rj) in r.iter_mut().enumerate() {
                if pattern >> j & 1 == 1 {
                    *rj += count as usize;
                }
            }
        }
        r
    }

    pub fn key_of(&self, s: &[u8]) -> u64 {
        self.encode(&self.marginals(s))
    }

    /// Number of distinct keys, `(n+1)^p`.
    pub fn span(&self) -> u64 {
        (self.n as u64 + 1).pow(self.p as u32)
    }
}

/// Every composition of `n` over the cells, grouped by marginal tuple.
#[derive(Debug, Clone)]
pub struct CompositionIndex {
    pub key: MarginalKey,
    pub compositions: Vec<Composition>,
    groups: HashMap<u64, Vec<usize>>,
    lookup: HashMap<Composition, usize>,
}

impl CompositionIndex {
    pub fn len(&self) -> usize {
        self.compositions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.compositions.is_empty()
    }

    /// Indices of the compositions with marginals `r`.
    pub fn group(&self, r: &[usize]) -> &[usize] {
        self.groups
            .get(&self.key.encode(r))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Non-empty groups as `(encoded marginals, composition indices)`, in key order.
    pub fn groups(&self) -> Vec<(u64, &[usize])> {
        let mut out: Vec<(u64, &[usize])> =
            self.groups.iter().map(|(k, v)| (*k, v.as_slice())).collect();
        out.sort_unstable_by_key(|(k, _)| *k);
        out
    }

    /// Position of a composition in `compositions`.
    pub fn position(&self, s: &[u8]) -> Option<usize> {
        self.lookup.get(s).copied()
    }
}

/// Generates every `s` with `0 ≤ s_I ≤ #α_I` and `Σ s_I = n`.
pub fn generate_compositions(
    alpha: &AlphaPartition,
    n: usize,
    max_compositions: u64,
) -> Result<CompositionIndex> {
    let key = MarginalKey::new(n, alpha.references())?;
    let counts = alpha.counts();
    let caps: Vec<usize> = counts.iter().map(|&c| c.min(n)).collect();
    let mut suffix = vec![0usize; caps.len() + 1];
    for i in (0..caps.len()).rev() {
        suffix[i] = suffix[i + 1] + caps[i];
    }
    let mut compositions = Vec::new();
    let mut current = vec![0u8; caps.len()];
    let mut produced = 0u64;
    fill_compositions(
        0,
        n,
        &caps,
        &suffix,
        &mut current,
        &mut compositions,
        &mut produced,
        max_compositions,
    )?;
    let mut groups: HashMap<u64, Vec<usize>> = HashMap::new();
    let mut lookup = HashMap::with_capacity(compositions.len());
    for (idx, s) in compositions.iter().enumerate() {
        groups.entry(key.key_of(s)).or_default().push(idx);
        lookup.insert(s.clone(), idx);
    }
    Ok(CompositionIndex {
        key,
        compositions,
        groups,
        lookup,
    })
}

#[allow(clippy::too_many_arguments)]
fn fill_compositions(
    cell: usize,
    remaining: usize,
    caps: &[usize],
    suffix: &[usize],
    current: &mut [u8],
    out: &mut Vec<Composition>,
    produced: &mut u64,
    limit: u64,
) -> Result<()> {
    if cell == caps.len() {
        if remaining == 0 {
            *produced += 1;
            if *produced > limit {
                return Err(Error::size_limit(
                    "generating cell compositions",
                    *produced as u128,
                    limit as u128,
                ));
            }
            out.push(current.to_vec());
        }
        return Ok(());
    }
    if suffix[cell] < remaining {
        return Ok(());
    }
    let hi = caps[cell].min(remaining);
    for v in 0..=hi {
        current[cell] = v as u8;
        fill_compositions(cell + 1, remaining - v, caps, suffix, current, out, produced, limit)?;
    }
    current[cell] = 0;
    Ok(())
}

/// `Π_I C(#α_I, s_I)`: subsets meeting each cell in exactly `s_I` items.
pub fn composition_weight(counts: &[usize], s: &[u8]) -> u64 {
    counts
        .iter()
        .zip(s)
        .map(|(&c, &v)| binomial(c, v as usize))
        .product()
}

/// `#{Y ∈ 𝒫_n : #(Y ∩ Y_j) = r_j ∀j}` through the composition sums.
pub fn c_n_count(refs: &[Subset], r: &[usize], budget: AlphaBudget) -> Result<u64> {
    if r.len() != refs.len() {
        return Err(Error::invalid(format!(
            "{} overlap targets for {} reference subsets",
            r.len(),
            refs.len()
        )));
    }
    let n = refs[0].cardinality();
    if r.iter().any(|&v| v > n) {
        return Ok(0);
    }
    let alpha = alpha_partition(refs, budget.max_references)?;
    let index = generate_compositions(&alpha, n, budget.max_compositions)?;
    let counts = alpha.counts();
    Ok(index
        .group(r)
        .iter()
        .map(|&i| composition_weight(&counts, &index.compositions[i]))
        .sum())
}

/// All ways of splitting each `s_I` into `(s̃_I, s̃_{I∪{p+1}})`, bucketed by
/// `q = Σ_I s̃_{I∪{p+1}}`. Extended compositions have `2^(p+1)` entries; the
/// upper half holds the counts inside the extra reference.
pub fn split_composition(s: &[u8]) -> Vec<Vec<Composition>> {
    split_composition_bounded(s, None)
}

/// As [`split_composition`], keeping only splits with `s̃_J ≤ bounds[J]`.
pub fn split_composition_bounded(s: &[u8], bounds: Option<&[usize]>) -> Vec<Vec<Composition>> {
    let half = s.len();
    let total: usize = s.iter().map(|&v| v as usize).sum();
    let mut buckets = vec![Vec::new(); total + 1];
    let mut current = vec![0u8; 2 * half];
    fill_splits(0, 0, s, bounds, &mut current, &mut buckets);
    buckets
}

fn fill_splits(
    cell: usize,
    q: usize,
    s: &[u8],
    bounds: Option<&[usize]>,
    current: &mut [u8],
    buckets: &mut [Vec<Composition>],
) {
    let half = s.len();
    if cell == half {
        buckets[q].push(current.to_vec());
        return;
    }
    for inside in 0..=s[cell] {
        let outside = s[cell] - inside;
        if let Some(b) = bounds {
            if outside as usize > b[cell] || inside as usize > b[cell + half] {
                continue;
            }
        }
        current[cell] = outside;
        current[cell + half] = inside;
        fill_splits(cell + 1, q + inside as usize, s, bounds, current, buckets);
    }
    current[cell] = 0;
    current[cell + half] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::{count_with_overlap, enumerate_subsets};

    fn sub(m: usize, items: &[usize]) -> Subset {
        Subset::from_indices(m, items).unwrap()
    }

    #[test]
    fn single_reference_partition() {
        let y = sub(10, &[0, 1, 2]);
        let a = alpha_partition(&[y], 8).unwrap();
        assert_eq!(a.counts(), vec![7, 3]);
    }

    #[test]
    fn two_reference_partition() {
        let a = alpha_partition(&[sub(4, &[0, 1]), sub(4, &[1, 2])], 8).unwrap();
        assert_eq!(a.counts(), vec![1, 1, 1, 1]);
        assert_eq!(a.cell(0b11), 0b0010);
    }

    #[test]
    fn too_many_references_is_a_size_limit() {
        let refs = vec![sub(6, &[0, 1]); 9];
        assert!(matches!(
            alpha_partition(&refs, 8),
            Err(Error::SizeLimit { .. })
        ));
        assert!(alpha_partition(&[], 8).is_err());
    }

    #[test]
    fn single_reference_full_overlap_group() {
        let y = sub(10, &[0, 1, 2]);
        let alpha = alpha_partition(&[y], 8).unwrap();
        let index = generate_compositions(&alpha, 3, 1000).unwrap();
        let g = index.group(&[3]);
        assert_eq!(g.len(), 1);
        assert_eq!(index.compositions[g[0]], vec![0, 3]);
    }

    #[test]
    fn single_reference_groups_reproduce_overlap_counts() {
        let y = sub(10, &[0, 1, 2]);
        let alpha = alpha_partition(&[y], 8).unwrap();
        let index = generate_compositions(&alpha, 3, 1000).unwrap();
        let counts = alpha.counts();
        for r in 0..=3 {
            let g = index.group(&[r]);
            assert_eq!(g.len(), 1);
            let total: u64 = g
                .iter()
                .map(|&i| composition_weight(&counts, &index.compositions[i]))
                .sum();
            assert_eq!(total, count_with_overlap(3, 7, r));
        }
    }

    #[test]
    fn c_n_count_examples() {
        let y = sub(10, &[0, 1, 2]);
        let b = AlphaBudget::default();
        assert_eq!(c_n_count(&[y], &[3], b).unwrap(), 1);
        assert_eq!(c_n_count(&[y], &[1], b).unwrap(), 63);
        assert_eq!(c_n_count(&[y], &[4], b).unwrap(), 0);
    }

    #[test]
    fn two_reference_counts_match_enumeration() {
        let refs = [sub(6, &[0, 3]), sub(6, &[3, 5])];
        let b = AlphaBudget::default();
        let mut direct = [[0u64; 3]; 3];
        for y in enumerate_subsets(6, 2, 100).unwrap() {
            direct[y.intersection_size(&refs[0])][y.intersection_size(&refs[1])] += 1;
        }
        for r1 in 0..3 {
            for r2 in 0..3 {
                assert_eq!(c_n_count(&refs, &[r1, r2], b).unwrap(), direct[r1][r2]);
            }
        }
    }

    #[test]
    fn split_examples() {
        let zero = split_composition(&[0, 0]);
        assert_eq!(zero.len(), 1);
        assert_eq!(zero[0], vec![vec![0, 0, 0, 0]]);

        let two = split_composition(&[0, 2]);
        assert_eq!(two.len(), 3);
        assert_eq!(two[0], vec![vec![0, 2, 0, 0]]);
        assert_eq!(two[1], vec![vec![0, 1, 0, 1]]);
        assert_eq!(two[2], vec![vec![0, 0, 0, 2]]);
    }

    #[test]
    fn split_respects_bounds() {
        let b = split_composition_bounded(&[0, 2], Some(&[5, 1, 5, 5]));
        assert!(b[0].is_empty());
        assert_eq!(b[1].len(), 1);
        assert_eq!(b[2].len(), 1);
    }

    #[test]
    fn marginal_key_round_trip() {
        let k = MarginalKey::new(10, 3).unwrap();
        let r = [3, 0, 10];
        assert_eq!(k.decode(k.encode(&r)), r.to_vec());
        assert_eq!(k.span(), 1331);
        assert!(MarginalKey::new(63, 12).is_err());
    }
}
