//! Discrete draws and grid-based inverse-CDF sampling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::log_sum_exp;

/// Index drawn proportionally to non-negative `weights`; `None` if all vanish.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let mut target = rng.random::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if target < w {
                return Some(i);
            }
            target -= w;
            last = Some(i);
        }
    }
    last
}

/// Index drawn proportionally to `exp(log_weights)`.
pub fn sample_log_index<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Option<usize> {
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return None;
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - lse).exp()).collect();
    sample_index(&w, rng)
}

/// Uniform `k`-subset of the set bits of `mask`, as a mask.
pub fn sample_without_replacement<R: Rng + ?Sized>(mask: u64, k: usize, rng: &mut R) -> u64 {
    let mut pool: Vec<usize> = crate::subset::BitIter(mask).collect();
    debug_assert!(k <= pool.len());
    let mut out = 0u64;
    for _ in 0..k {
        let i = rng.random_range(0..pool.len());
        out |= 1 << pool.swap_remove(i);
    }
    out
}

/// Cumulative-sum table over sorted weights for repeated categorical draws.
#[derive(Debug, Clone)]
pub struct CategoricalTable {
    cumulative: Vec<f64>,
}

impl CategoricalTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let cumulative: Vec<f64> = weights
            .iter()
            .map(|&w| {
                acc += w.max(0.0);
                acc
            })
            .collect();
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::Numerical("categorical weights have no finite mass".into()));
        }
        Ok(CategoricalTable { cumulative })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let t = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= t);
        i.min(self.cumulative.len() - 1)
    }
}

/// Uniform midpoint grid on `(0, upper]` used to tabulate 1-D densities.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    upper: f64,
    points: Vec<f64>,
}

impl UniformGrid {
    /// `size` cells of width `upper/size`, represented by their midpoints.
    pub fn new(upper: f64, size: usize) -> Result<Self> {
        if size == 0 || !(upper > 0.0) {
            return Err(Error::invalid(format!("grid needs size ≥ 1 and upper > 0, got {size}, {upper}")));
        }
        let h = upper / size as f64;
        let points = (0..size).map(|i| (i as f64 + 0.5) * h).collect();
        Ok(UniformGrid { upper, points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn width(&self) -> f64 {
        self.upper / self.points.len() as f64
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Piecewise-constant density on a [`UniformGrid`], sampled by inverting its
/// piecewise-linear CDF.
#[derive(Debug, Clone)]
pub struct GridSampler {
    width: f64,
    cdf: Vec<f64>,
    log_mass: f64,
}

impl GridSampler {
    /// Builds from log-density values at the grid midpoints (unnormalized).
    pub fn from_log_density(grid: &UniformGrid, log_density: &[f64]) -> Result<Self> {
        debug_assert_eq!(grid.len(), log_density.len());
        let max = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical("conditional density vanishes on the whole grid".into()));
        }
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(log_density.len() + 1);
        cdf.push(0.0);
        for &l in log_density {
            acc += (l - max).exp();
            cdf.push(acc);
        }
        let total = acc;
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(GridSampler {
            width: grid.width(),
            cdf,
            log_mass: max + (total * grid.width()).ln(),
        })
    }

    /// Log of the integral of the unnormalized density over the grid.
    pub fn log_mass(&self) -> f64 {
        self.log_mass
    }

    /// CDF at `u`.
    pub fn cdf(&self, u: f64) -> f64 {
        let cells = self.cdf.len() - 1;
        let pos = (u / self.width).clamp(0.0, cells as f64);
        let i = (pos.floor() as usize).min(cells - 1);
        let frac = pos - i as f64;
        self.cdf[i] + frac * (self.cdf[i + 1] - self.cdf[i])
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= p).clamp(1, self.cdf.len() - 1) - 1;
        let (lo, hi) = (self.cdf[i], self.cdf[i + 1]);
        let frac = if hi > lo { (p - lo) / (hi - lo) } else { 0.5 };
        (i as f64 + frac.clamp(0.0, 1.0)) * self.width
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut u = self.quantile(rng.random::<f64>());
        // keep draws strictly positive for families whose domain excludes 0
        if u <= 0.0 {
            u = f64::MIN_POSITIVE;
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn sample_index_skips_zero_weights() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..100 {
            let i = sample_index(&[0.0, 1.0, 0.0, 2.0], &mut rng).unwrap();
            assert!(i == 1 || i == 3);
        }
        assert!(sample_index(&[0.0, 0.0], &mut rng).is_none());
    }

    #[test]
    fn without_replacement_picks_from_mask() {
        let mut rng = stream_rng(3, 1);
        for _ in 0..100 {
            let s = sample_without_replacement(0b1011_0110, 3, &mut rng);
            assert_eq!(s.count_ones(), 3);
            assert_eq!(s & !0b1011_0110, 0);
        }
    }

    #[test]
    fn grid_sampler_inverts_linear_density() {
        // density 2u on (0,1]: CDF u^2, quantile sqrt(p)
        let grid = UniformGrid::new(1.0, 10_000).unwrap();
        let logd: Vec<f64> = grid.points().iter().map(|u| (2.0 * u).ln()).collect();
        let s = GridSampler::from_log_density(&grid, &logd).unwrap();
        for &p in &[0.01, 0.25, 0.5, 0.9] {
            assert!((s.quantile(p) - p.sqrt()).abs() < 1e-4);
            assert!((s.cdf(p.sqrt()) - p).abs() < 1e-4);
        }
        assert!(s.log_mass().abs() < 1e-6);
    }

    #[test]
    fn categorical_table_draws() {
        let t = CategoricalTable::new(&[0.0, 3.0, 1.0]).unwrap();
        let mut rng = stream_rng(9, 0);
        let mut hits = [0usize; 3];
        for _ in 0..4000 {
            hits[t.sample(&mut rng)] += 1;
        }
        assert_eq!(hits[0], 0);
        assert!(hits[1] > 2700 && hits[1] < 3300);
        assert!(CategoricalTable::new(&[0.0]).is_err());
    }
}
