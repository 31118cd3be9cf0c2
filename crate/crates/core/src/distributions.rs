//! Hamming-distance distributions over size-`n` subsets.
//!
//! A center `A` and a pmf `e` on `{0..n}` define
//! `Q(X) = e(k) / (C(n,k)·C(N,k))` with `k = #(X ∩ A^c)`: the number of items
//! outside the center is `e`-distributed and, given `k`, `X` is uniform among
//! the subsets at that distance. The dispersion families below map a scalar
//! `u` to `e_u`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::count_at_distance;
use crate::error::{Error, Result};
use crate::math::{ln_binomial, log_sum_exp};
use crate::subset::{outside_count, Subset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Fisher's noncentral hypergeometric, `e_u(k) ∝ C(N,k)·C(n,n−k)·u^k`, `u ∈ (0, 1]`.
    FisherNch,
    /// `e_u = Bin(n, u)`, `u ∈ [0, u_max]`.
    Binomial,
}

/// The map `u ↦ e_u` together with its parameter domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionFamily {
    kind: FamilyKind,
    n: usize,
    big_n: usize,
    upper: f64,
    /// `ln C(n,k) + ln C(N,k)` for `k = 0..=n`.
    log_counts: Vec<f64>,
    /// `ln C(N,k) + ln C(n, n−k)` (Fisher) or `ln C(n,k)` (binomial).
    log_base: Vec<f64>,
}

impl DispersionFamily {
    pub fn fisher(n: usize, big_n: usize) -> Result<Self> {
        Self::build(FamilyKind::FisherNch, n, big_n, 1.0)
    }

    /// Binomial family truncated to `u ≤ N/(N+n)`.
    pub fn binomial(n: usize, big_n: usize) -> Result<Self> {
        let upper = big_n as f64 / (big_n + n) as f64;
        Self::build(FamilyKind::Binomial, n, big_n, upper)
    }

    /// Binomial family on `[0, upper]`, with `upper ≤ N/(N+n)`.
    pub fn binomial_with_upper(n: usize, big_n: usize, upper: f64) -> Result<Self> {
        let max = big_n as f64 / (big_n + n) as f64;
        if !(upper > 0.0 && upper <= max + 1e-15) {
            return Err(Error::domain(upper, format!("(0, N/(N+n)] = (0, {max}]")));
        }
        Self::build(FamilyKind::Binomial, n, big_n, upper.min(max))
    }

    pub fn new(kind: FamilyKind, n: usize, big_n: usize) -> Result<Self> {
        match kind {
            FamilyKind::FisherNch => Self::fisher(n, big_n),
            FamilyKind::Binomial => Self::binomial(n, big_n),
        }
    }

    fn build(kind: FamilyKind, n: usize, big_n: usize, upper: f64) -> Result<Self> {
        if n == 0 || big_n == 0 {
            return Err(Error::invalid(format!(
                "dispersion family needs n ≥ 1 and N ≥ 1, got n={n}, N={big_n}"
            )));
        }
        if n + big_n > crate::math::MAX_UNIVERSE {
            return Err(Error::invalid(format!("universe of {} items is too large", n + big_n)));
        }
        if kind == FamilyKind::Binomial && n > big_n {
            // k = n items outside A would be impossible while Bin(n, u) gives it mass
            return Err(Error::invalid(format!(
                "binomial family needs n ≤ N, got n={n}, N={big_n}"
            )));
        }
        let log_counts = (0..=n)
            .map(|k| ln_binomial(n, k) + ln_binomial(big_n, k))
            .collect();
        let log_base = (0..=n)
            .map(|k| match kind {
                FamilyKind::FisherNch => ln_binomial(big_n, k) + ln_binomial(n, n - k),
                FamilyKind::Binomial => ln_binomial(n, k),
            })
            .collect();
        Ok(DispersionFamily {
            kind,
            n,
            big_n,
            upper,
            log_counts,
            log_base,
        })
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `N = M − n`.
    pub fn big_n(&self) -> usize {
        self.big_n
    }

    pub fn universe(&self) -> usize {
        self.n + self.big_n
    }

    /// Upper end of the parameter domain; the lower end is always 0.
    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn contains(&self, u: f64) -> bool {
        match self.kind {
            FamilyKind::FisherNch => u > 0.0 && u <= self.upper,
            FamilyKind::Binomial => (0.0..=self.upper).contains(&u),
        }
    }

    /// `ln(C(n,k)·C(N,k))`, the log number of subsets at distance `k`.
    pub fn log_counts(&self) -> &[f64] {
        &self.log_counts
    }

    /// `ln e_u(k)` for `k = 0..=n`.
    pub fn log_pmf(&self, u: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n + 1];
        self.log_pmf_into(u, &mut out)?;
        Ok(out)
    }

    pub fn pmf(&self, u: f64) -> Result<Vec<f64>> {
        Ok(self.log_pmf(u)?.into_iter().map(f64::exp).collect())
    }

    /// Allocation-free variant of [`log_pmf`](Self::log_pmf) for hot loops.
    pub fn log_pmf_into(&self, u: f64, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.n + 1);
        match self.kind {
            FamilyKind::FisherNch => {
                if !(u >= 0.0) || u.is_infinite() {
                    return Err(Error::domain(u, "[0, ∞)"));
                }
                if u == 0.0 {
                    point_mass(out, 0);
                    return Ok(());
                }
                let lu = u.ln();
                for (k, o) in out.iter_mut().enumerate() {
                    *o = self.log_base[k] + k as f64 * lu;
                }
                let lse = log_sum_exp(out);
                out.iter_mut().for_each(|o| *o -= lse);
            }
            FamilyKind::Binomial => {
                if !(0.0..=1.0).contains(&u) {
                    return Err(Error::domain(u, "[0, 1]"));
                }
                if u == 0.0 {
                    point_mass(out, 0);
                    return Ok(());
                }
                if u == 1.0 {
                    point_mass(out, self.n);
                    return Ok(());
                }
                let (lu, lv) = (u.ln(), (-u).ln_1p());
                for (k, o) in out.iter_mut().enumerate() {
                    *o = self.log_base[k] + k as f64 * lu + (self.n - k) as f64 * lv;
                }
            }
        }
        Ok(())
    }

    /// `Σ k·e_u(k)`.
    pub fn mean(&self, u: f64) -> Result<f64> {
        Ok(self
            .pmf(u)?
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum())
    }
}

fn point_mass(out: &mut [f64], at: usize) {
    out.iter_mut().for_each(|o| *o = f64::NEG_INFINITY);
    out[at] = 0.0;
}

/// Fisher's noncentral hypergeometric pmf on `{0..n}`.
pub fn fisher_nch_pmf(u: f64, family: &DispersionFamily) -> Result<Vec<f64>> {
    if u < 0.0 {
        return Err(Error::domain(u, "[0, ∞)"));
    }
    let fisher = DispersionFamily::fisher(family.n, family.big_n)?;
    fisher.pmf(u)
}

/// `Bin(n, u)` pmf on `{0..n}`.
pub fn binomial_pmf(u: f64, family: &DispersionFamily) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(u, "[0, 1]"));
    }
    let n = family.n;
    let (lu, lv) = (u.ln(), (-u).ln_1p());
    Ok((0..=n)
        .map(|k| {
            if (u == 0.0 && k == 0) || (u == 1.0 && k == n) {
                1.0
            } else {
                (ln_binomial(n, k) + k as f64 * lu + (n - k) as f64 * lv).exp()
            }
        })
        .collect())
}

/// `Σ k·e_u(k)` for the family's pmf.
pub fn dispersion_mean(u: f64, family: &DispersionFamily) -> Result<f64> {
    family.mean(u)
}

/// The distribution `P_{A,u}` over size-`n` subsets.
#[derive(Debug, Clone)]
pub struct HammingModel {
    center: Subset,
    u: f64,
    family: DispersionFamily,
    log_pmf: Vec<f64>,
}

impl HammingModel {
    pub fn new(center: Subset, u: f64, family: DispersionFamily) -> Result<Self> {
        if center.cardinality() != family.n() || center.universe() != family.universe() {
            return Err(Error::invalid(format!(
                "center of size {} in a universe of {} does not match family (n={}, M={})",
                center.cardinality(),
                center.universe(),
                family.n(),
                family.universe()
            )));
        }
        let ok = family.contains(u) || (u == 0.0 && family.kind() == FamilyKind::FisherNch);
        if !ok {
            return Err(Error::domain(u, format!("(0, {}]", family.upper())));
        }
        let log_pmf = family.log_pmf(u)?;
        Ok(HammingModel {
            center,
            u,
            family,
            log_pmf,
        })
    }

    pub fn center(&self) -> &Subset {
        &self.center
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn family(&self) -> &DispersionFamily {
        &self.family
    }

    /// `ln e_u(k)` for `k = 0..=n`.
    pub fn dispersion_log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    /// Log-probability of any subset at distance `k` from the center.
    pub fn log_pmf_at_distance(&self, k: usize) -> f64 {
        if k > self.family.n() {
            return f64::NEG_INFINITY;
        }
        self.log_pmf[k] - self.family.log_counts()[k]
    }
}

/// `ln P_{A,u}(X)`.
pub fn hamming_log_pmf(model: &HammingModel, x: &Subset) -> Result<f64> {
    let k = crate::subset::overlap_outside(x, &model.center)?;
    Ok(model.log_pmf_at_distance(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Monotonicity {
    /// Probability strictly decreases with the distance to the center.
    Decreasing,
    /// Probability never increases with the distance, with at least one tie.
    NonIncreasing,
    Neither,
}

/// Relative tolerance under which two log-probabilities count as equal.
const TIE_TOLERANCE: f64 = 1e-12;

/// Exact monotonicity verdict from the per-distance probabilities.
pub fn check_hamming_monotone(model: &HammingModel) -> Monotonicity {
    let reachable = model.family.n().min(model.family.big_n());
    let values: Vec<f64> = (0..=reachable).map(|k| model.log_pmf_at_distance(k)).collect();
    monotonicity_of(&values)
}

pub(crate) fn monotonicity_of(log_values: &[f64]) -> Monotonicity {
    let mut strict = true;
    for w in log_values.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            strict = false;
            continue;
        }
        let diff = a - b;
        let scale = a.abs().max(b.abs()).max(1.0);
        if diff.abs() <= TIE_TOLERANCE * scale {
            strict = false;
        } else if diff < 0.0 {
            return Monotonicity::Neither;
        }
    }
    if strict {
        Monotonicity::Decreasing
    } else {
        Monotonicity::NonIncreasing
    }
}

/// Findings about the binomial family's mode and monotonicity at one `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeReport {
    /// `u < N/(N+n)`.
    pub unique_mode_premise: bool,
    /// `u ≤ 1/2` and `n ≤ N/2`.
    pub decreasing_premise: bool,
    /// The center is strictly more probable than every other subset.
    pub unique_mode: bool,
    pub monotonicity: Monotonicity,
}

impl ModeReport {
    /// Whether every conclusion whose premise holds was observed.
    pub fn consistent(&self) -> bool {
        (!self.unique_mode_premise || self.unique_mode)
            && (!self.decreasing_premise || self.monotonicity == Monotonicity::Decreasing)
    }
}

pub fn binomial_mode_property(family: &DispersionFamily, u: f64) -> Result<ModeReport> {
    if family.kind() != FamilyKind::Binomial {
        return Err(Error::invalid("mode property applies to the binomial family"));
    }
    let (n, big_n) = (family.n(), family.big_n());
    let pmf = binomial_pmf(u, family)?;
    let values: Vec<f64> = (0..=n.min(big_n))
        .map(|k| pmf[k].ln() - family.log_counts()[k])
        .collect();
    let unique_mode = values[1..].iter().all(|&v| {
        let scale = values[0].abs().max(v.abs()).max(1.0);
        values[0] - v > TIE_TOLERANCE * scale
    });
    Ok(ModeReport {
        unique_mode_premise: u < big_n as f64 / (big_n + n) as f64,
        decreasing_premise: u <= 0.5 && 2 * n <= big_n,
        unique_mode,
        monotonicity: monotonicity_of(&values),
    })
}

/// Inclusion probabilities for the rejection sampler: items of the center
/// with probability `p1`, the others with probability `p2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliPair {
    pub p1: f64,
    pub p2: f64,
}

impl BernoulliPair {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) || !(0.0..=1.0).contains(&p2) {
            return Err(Error::invalid(format!(
                "inclusion probabilities ({p1}, {p2}) must lie in [0, 1]"
            )));
        }
        Ok(BernoulliPair { p1, p2 })
    }

    /// The Fisher parameter the sampler targets: the odds ratio
    /// `(1 − p1)·p2 / (p1·(1 − p2))` of an outside item against a center item.
    pub fn dispersion(&self) -> f64 {
        let num = (1.0 - self.p1) * self.p2;
        let den = self.p1 * (1.0 - self.p2);
        if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    }

    /// Pair with odds ratio `u` whose expected subset size is `n`, which keeps
    /// the rejection rate low.
    pub fn for_dispersion(u: f64, n: usize, big_n: usize) -> Result<Self> {
        if !(u >= 0.0) || u.is_infinite() {
            return Err(Error::domain(u, "[0, ∞)"));
        }
        if u == 0.0 {
            return Ok(BernoulliPair { p1: 1.0, p2: 0.0 });
        }
        // odds o1 for center items, u·o1 outside; bisect on ln o1 for E[#X] = n
        let expected = |lo: f64| {
            let o1 = lo.exp();
            let o2 = u * o1;
            n as f64 * o1 / (1.0 + o1) + big_n as f64 * o2 / (1.0 + o2)
        };
        let (mut a, mut b) = (-60.0f64, 60.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if expected(mid) < n as f64 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let o1 = (0.5 * (a + b)).exp();
        let o2 = u * o1;
        Ok(BernoulliPair {
            p1: o1 / (1.0 + o1),
            p2: o2 / (1.0 + o2),
        })
    }
}

pub const DEFAULT_REJECTION_CAP: u64 = 1_000_000;

/// Rejection sampler for the Fisher family: independent inclusions, retried
/// until exactly `n` items are drawn.
pub fn sample_fisher_subset<R: Rng + ?Sized>(
    center: &Subset,
    pair: BernoulliPair,
    rng: &mut R,
    max_iterations: u64,
) -> Result<Subset> {
    let n = center.cardinality();
    let m = center.universe();
    let a = center.bits();
    for _ in 0..max_iterations {
        let mut bits = 0u64;
        for item in 0..m {
            let p = if a >> item & 1 == 1 { pair.p1 } else { pair.p2 };
            if rng.random::<f64>() < p {
                bits |= 1 << item;
            }
        }
        if bits.count_ones() as usize == n {
            return Ok(Subset::from_raw(m, bits));
        }
    }
    Err(Error::NonTermination {
        iterations: max_iterations,
    })
}

/// Sequential sampler for the binomial family: `n` rounds, each taking a
/// fresh outside item with probability `u` and a fresh center item otherwise.
pub fn sample_binomial_subset<R: Rng + ?Sized>(
    center: &Subset,
    u: f64,
    rng: &mut R,
) -> Result<Subset> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(u, "[0, 1]"));
    }
    let n = center.cardinality();
    let mut inside: Vec<usize> = center.indices().collect();
    let mut outside: Vec<usize> = center.complement().indices().collect();
    let mut bits = 0u64;
    for _ in 0..n {
        let pool = if rng.random::<f64>() < u {
            &mut outside
        } else {
            &mut inside
        };
        if pool.is_empty() {
            return Err(Error::Internal("binomial sampler drew from an exhausted pool".into()));
        }
        let pick = pool.swap_remove(rng.random_range(0..pool.len()));
        bits |= 1 << pick;
    }
    Ok(Subset::from_raw(center.universe(), bits))
}

/// Exact sampler for `P_{A,u}` of either family: draw `k ~ e_u`, then a
/// uniform subset with `k` items outside `A`.
pub fn sample_hamming_subset<R: Rng + ?Sized>(model: &HammingModel, rng: &mut R) -> Result<Subset> {
    let probs: Vec<f64> = model.dispersion_log_pmf().iter().map(|l| l.exp()).collect();
    let k = crate::sampling::sample_index(&probs, rng)
        .ok_or_else(|| Error::Numerical("dispersion pmf has no mass".into()))?;
    let a = model.center();
    let n = a.cardinality();
    let keep = crate::sampling::sample_without_replacement(a.bits(), n - k, rng);
    let add = crate::sampling::sample_without_replacement(a.complement().bits(), k, rng);
    Ok(Subset::from_raw(a.universe(), keep | add))
}

/// Distance `#(X ∩ A^c)` for raw masks.
#[inline]
pub fn distance(x: &Subset, center: &Subset) -> usize {
    outside_count(x.bits(), center.bits())
}

/// Number of subsets at each distance from a center: `C(n,k)·C(N,k)`.
pub fn distance_counts(family: &DispersionFamily) -> Vec<u64> {
    (0..=family.n())
        .map(|k| count_at_distance(family.n(), family.big_n(), k))
        .collect()
}
