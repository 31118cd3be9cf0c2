use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::integrals::IntegralCache;
use super::{GroupedDataset, Lab, QuadConfig, TwoStageSpec};
use crate::alpha::{alpha_partition, generate_compositions, AlphaPartition, CompositionIndex};
use crate::error::{Error, Result};
use crate::math::{binomial_f64, ln_binomial, log_sum_exp};
use crate::model::ModelSpec;
use crate::subset::Subset;

/// Ceiling on `#𝒮(X)²`, the number of (composition, center-count) pairs
/// visited while filling one lab's table.
pub const DEFAULT_MAX_PAIR_WORK: u128 = 20_000_000_000;

/// Precomputed `D(q, s̄)` for one laboratory.
#[derive(Debug, Clone)]
pub struct LabTable {
    pub lab_id: String,
    pub(crate) alpha: AlphaPartition,
    pub(crate) index: CompositionIndex,
    /// `ln G(r)` for the marginals of each composition, aligned with `index`.
    pub(crate) log_g: Vec<f64>,
    /// `D(q, s̄)`, row-major by composition position, `n + 1` columns.
    pub(crate) d: Vec<f64>,
    pub(crate) data_hash: [u8; 32],
    pub(crate) n: usize,
}

impl LabTable {
    pub fn operators(&self) -> usize {
        self.alpha.references()
    }

    /// `#𝒮(X_i)`.
    pub fn num_compositions(&self) -> usize {
        self.index.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Counts `#(α_I(X_i) ∩ A)` of a center.
    pub fn center_counts(&self, a: &Subset) -> Vec<u8> {
        self.alpha.overlap_counts(a)
    }

    /// Row position of `A` in the table.
    pub fn position(&self, a: &Subset) -> Result<usize> {
        self.index.position(&self.center_counts(a)).ok_or_else(|| {
            Error::Internal(format!(
                "center {a} has no entry in the table of laboratory {:?}",
                self.lab_id
            ))
        })
    }

    /// `D(q, s̄)` for `q = 0..=n`.
    pub fn row(&self, position: usize) -> &[f64] {
        let w = self.n + 1;
        &self.d[position * w..(position + 1) * w]
    }

    /// `D(q, s̄(A))` for `q = 0..=n`.
    pub fn d_values(&self, a: &Subset) -> Result<&[f64]> {
        Ok(self.row(self.position(a)?))
    }

    /// `ln Σ_q exp(top_row[n−q]) D(q, ·)` for a row of top-level subset log
    /// probabilities indexed by distance.
    pub(crate) fn log_marginal(&self, position: usize, top_row: &[f64]) -> f64 {
        let n = self.n;
        let terms: Vec<f64> = self
            .row(position)
            .iter()
            .enumerate()
            .map(|(q, &d)| if d > 0.0 { top_row[n - q] + d.ln() } else { f64::NEG_INFINITY })
            .collect();
        log_sum_exp(&terms)
    }

    pub(crate) fn log_g_of_group(&self, members: &[usize]) -> f64 {
        self.log_g[members[0]]
    }
}

/// Per-lab tables plus the settings they were built with.
#[derive(Debug, Clone)]
pub struct DTable {
    pub(crate) universe: usize,
    pub(crate) n: usize,
    pub(crate) config_hash: [u8; 32],
    pub labs: Vec<LabTable>,
}

impl DTable {
    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config_hash(&self) -> [u8; 32] {
        self.config_hash
    }

    /// Errors unless the table was built from `data` under `spec` and `quad`.
    pub fn check_matches(
        &self,
        data: &GroupedDataset,
        spec: &TwoStageSpec,
        quad: &QuadConfig,
    ) -> Result<()> {
        if self.universe != data.universe() || self.n != data.n() {
            return Err(Error::CacheMismatch(format!(
                "table is for M={}, n={}; data has M={}, n={}",
                self.universe,
                self.n,
                data.universe(),
                data.n()
            )));
        }
        if self.config_hash != config_hash(&spec.lab, quad) {
            return Err(Error::CacheMismatch(
                "table was built with a different lab-level model or quadrature".into(),
            ));
        }
        if self.labs.len() != data.num_labs() {
            return Err(Error::CacheMismatch(format!(
                "table has {} laboratories; data has {}",
                self.labs.len(),
                data.num_labs()
            )));
        }
        for (table, lab) in self.labs.iter().zip(data.labs()) {
            if table.data_hash != lab_hash(lab, data.universe(), data.n()) {
                return Err(Error::CacheMismatch(format!(
                    "data of laboratory {:?} changed since the table was built",
                    lab.id
                )));
            }
        }
        Ok(())
    }
}

/// Digest of the settings that determine every `D` value.
pub(crate) fn config_hash(lab: &ModelSpec, quad: &QuadConfig) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"lab-model");
    h.update(format!("{:?}", lab.family.kind()).as_bytes());
    h.update((lab.n() as u64).to_le_bytes());
    h.update((lab.family.big_n() as u64).to_le_bytes());
    h.update(lab.family.upper().to_le_bytes());
    h.update(format!("{:?}", lab.prior).as_bytes());
    h.update((quad.nodes as u64).to_le_bytes());
    h.finalize().into()
}

/// Digest of one laboratory's data in operator order.
pub(crate) fn lab_hash(lab: &Lab, universe: usize, n: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((universe as u64).to_le_bytes());
    h.update((n as u64).to_le_bytes());
    h.update((lab.id.len() as u64).to_le_bytes());
    h.update(lab.id.as_bytes());
    for o in &lab.observations {
        h.update((o.id.len() as u64).to_le_bytes());
        h.update(o.id.as_bytes());
        h.update(o.subset.bits().to_le_bytes());
    }
    h.finalize().into()
}

/// `ln C_n(r) = ln(C(n,r)·C(N,n−r))` for `r = 0..=n`.
pub(crate) fn ln_overlap_counts(n: usize, big_n: usize) -> Vec<f64> {
    (0..=n)
        .map(|r| ln_binomial(n, r) + ln_binomial(big_n, n - r))
        .collect()
}

/// Nonzero cells of a composition as `(cell, count)`.
pub(crate) fn support_of(s: &[u8]) -> Vec<(usize, u8)> {
    s.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0)
        .map(|(i, &v)| (i, v))
        .collect()
}

/// `Σ_{s̃ ∈ T(s;q), feasible} Π_I C(#α_I − s̄_I, s̃_I)·C(s̄_I, s̃_{I∪{p+1}})` for
/// every `q`, written into `out` (length `n + 1`). Each cell contributes the
/// polynomial `Σ_t C(#α_I − s̄_I, s_I − t)·C(s̄_I, t)·z^t` and `q` is the power
/// of `z`; infeasible splits carry a zero binomial.
pub(crate) fn split_weights(
    support: &[(usize, u8)],
    counts: &[usize],
    center: &[u8],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    out[0] = 1.0;
    let mut deg = 0usize;
    let mut next = vec![0.0; out.len()];
    for &(cell, s) in support {
        let inside = center[cell] as usize;
        let outside = counts[cell] - inside;
        let s = s as usize;
        next.iter_mut().for_each(|v| *v = 0.0);
        let mut any = false;
        for t in 0..=s.min(inside) {
            if s - t > outside {
                continue;
            }
            let f = binomial_f64(outside, s - t) * binomial_f64(inside, t);
            any = true;
            for (q, &cur) in out.iter().enumerate().take(deg + 1) {
                if cur != 0.0 {
                    next[q + t] += cur * f;
                }
            }
        }
        if !any {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        deg += s.min(inside);
        out.copy_from_slice(&next);
    }
}

/// Builds `D(q, s̄)` for one laboratory.
///
/// Loops over marginal tuples `r`, the compositions `s ∈ 𝒮(X; r)` and every
/// `s̄ ∈ 𝒮(X)`, accumulating `G(r)` times the split weights of `s` at `s̄`.
/// Rows are filled in parallel, one row per `s̄`, so no reduction is needed
/// and the result does not depend on the thread count.
pub fn precompute_d(
    lab: &Lab,
    universe: usize,
    lab_spec: &ModelSpec,
    integrals: &mut IntegralCache,
    quad: &QuadConfig,
) -> Result<LabTable> {
    quad.validate()?;
    let n = lab_spec.n();
    let name_lab = |e: Error| match e {
        Error::SizeLimit { what, size, limit } => Error::SizeLimit {
            what: format!("{what} for laboratory {:?} ({} operators); split or subsample it", lab.id, lab.len()),
            size,
            limit,
        },
        other => other,
    };
    let budget = quad.budget();
    let refs: Vec<Subset> = lab.observations.iter().map(|o| o.subset).collect();
    let alpha = alpha_partition(&refs, budget.max_references).map_err(name_lab)?;
    let index = generate_compositions(&alpha, n, budget.max_compositions).map_err(name_lab)?;
    let total = index.len();
    let work = (total as u128) * (total as u128);
    if work > DEFAULT_MAX_PAIR_WORK {
        return Err(name_lab(Error::size_limit(
            "filling the D table",
            work,
            DEFAULT_MAX_PAIR_WORK,
        )));
    }
    let counts = alpha.counts();
    let ln_cn = ln_overlap_counts(n, lab_spec.family.big_n());

    // G(r) per marginal tuple
    let groups = index.groups();
    let mut log_g = vec![0.0; total];
    let mut blocks: Vec<(f64, Vec<Vec<(usize, u8)>>)> = Vec::with_capacity(groups.len());
    for (key, members) in &groups {
        let r = index.key.decode(*key);
        let distances: Vec<usize> = r.iter().map(|&rj| n - rj).collect();
        let g = integrals.log_integral(&distances) - r.iter().map(|&rj| ln_cn[rj]).sum::<f64>();
        for &i in members.iter() {
            log_g[i] = g;
        }
        let supports = members
            .iter()
            .map(|&i| support_of(&index.compositions[i]))
            .collect();
        blocks.push((g.exp(), supports));
    }

    let width = n + 1;
    let rows: Vec<Vec<f64>> = index
        .compositions
        .par_iter()
        .map(|center| {
            let mut row = vec![0.0; width];
            let mut w = vec![0.0; width];
            for (g, supports) in &blocks {
                for support in supports {
                    split_weights(support, &counts, center, &mut w);
                    for (acc, v) in row.iter_mut().zip(&w) {
                        *acc += g * v;
                    }
                }
            }
            row
        })
        .collect();

    Ok(LabTable {
        lab_id: lab.id.clone(),
        alpha,
        index,
        log_g,
        d: rows.concat(),
        data_hash: lab_hash(lab, universe, n),
        n,
    })
}

/// Tables for every laboratory, sharing one integral cache.
pub fn precompute_tables(
    data: &GroupedDataset,
    spec: &TwoStageSpec,
    quad: &QuadConfig,
) -> Result<DTable> {
    spec.check_data(data)?;
    let mut integrals = IntegralCache::new(&spec.lab, quad.nodes)?;
    let labs = data
        .labs()
        .iter()
        .map(|lab| precompute_d(lab, data.universe(), &spec.lab, &mut integrals, quad))
        .collect::<Result<Vec<_>>>()?;
    Ok(DTable {
        universe: data.universe(),
        n: data.n(),
        config_hash: config_hash(&spec.lab, quad),
        labs,
    })
}

/// `ln P(X_i^(1..p_i) | A, u)` through the lab's table.
pub fn group_marginal_log_likelihood(
    table: &DTable,
    lab: usize,
    a: &Subset,
    u: f64,
    top: &ModelSpec,
) -> Result<f64> {
    let lab_table = table
        .labs
        .get(lab)
        .ok_or_else(|| Error::invalid(format!("no laboratory with index {lab}")))?;
    let mut row = vec![0.0; top.n() + 1];
    top.subset_log_pmf_into(u, &mut row)?;
    Ok(lab_table.log_marginal(lab_table.position(a)?, &row))
}
