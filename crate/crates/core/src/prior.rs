//! Priors for the dispersion parameter.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_unit;

const SERIES_RADIUS: f64 = 1e-4;

/// Density on `(0, 1]` of the odds ratio `(1 − p1)·p2 / (p1·(1 − p2))` when
/// `(p1, p2)` is uniform on the triangle `0 < p2 ≤ p1 < 1`:
/// `g(u) = (4(1 − u) + 2(u + 1) ln u) / (u − 1)^3`.
pub fn prior_density_u(u: f64) -> Result<f64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::domain(u, "(0, 1]"));
    }
    let h = u - 1.0;
    if h.abs() < SERIES_RADIUS {
        return Ok(density_series(h));
    }
    Ok(density_direct(u))
}

/// Closed form rewritten as `4(u + 1)(atanh z − z) / (u − 1)^3` with
/// `z = (u − 1)/(u + 1)`; the naive numerator cancels to `O(h^3)`.
fn density_direct(u: f64) -> f64 {
    let h = u - 1.0;
    let z = h / (u + 1.0);
    4.0 * (u + 1.0) * atanh_minus_identity(z) / (h * h * h)
}

/// `atanh(z) − z` without cancellation for small `z`.
fn atanh_minus_identity(z: f64) -> f64 {
    if z.abs() >= 0.1 {
        return z.atanh() - z;
    }
    let z2 = z * z;
    let mut term = z * z2;
    let mut sum = 0.0f64;
    let mut k = 3.0;
    while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
        sum += term / k;
        term *= z2;
        k += 2.0;
    }
    sum
}

/// Taylor expansion around `u = 1`: `Σ_m (−1)^m · 2(m+1)/((m+2)(m+3)) · h^m`.
fn density_series(h: f64) -> f64 {
    let mut sum = 0.0;
    let mut pow = 1.0;
    for m in 0..8 {
        let mf = m as f64;
        let c = 2.0 * (mf + 1.0) / ((mf + 2.0) * (mf + 3.0));
        sum += if m % 2 == 0 { c } else { -c } * pow;
        pow *= h;
    }
    sum
}

/// CDF of [`prior_density_u`]: `G(u) = 2u(u − ln u − 1) / (u − 1)^2`.
pub fn prior_cdf_u(u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::domain(u, "[0, 1]"));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let h = u - 1.0;
    // u − 1 − ln u = h − ln(1 + h)
    let gap = if h.abs() < 1e-3 {
        let mut sum = 0.0f64;
        let mut pow = h * h;
        for j in 2..12 {
            let term = pow / j as f64;
            sum += if j % 2 == 0 { term } else { -term };
            pow *= h;
        }
        sum
    } else {
        h - h.ln_1p()
    };
    if h == 0.0 {
        return Ok(1.0);
    }
    Ok((2.0 * u * gap / (h * h)).clamp(0.0, 1.0))
}

/// Prior on the dispersion parameter over a family's domain `[0, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DispersionPrior {
    /// Push-forward of the uniform triangle prior; support `(0, 1]`.
    Triangle,
    /// `Beta(alpha, beta)` truncated to `[0, upper]`.
    Beta { alpha: f64, beta: f64, upper: f64 },
}

impl DispersionPrior {
    /// Truncated uniform prior on `[0, upper]`.
    pub fn flat(upper: f64) -> Self {
        DispersionPrior::Beta {
            alpha: 1.0,
            beta: 1.0,
            upper,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            DispersionPrior::Triangle => 1.0,
            DispersionPrior::Beta { upper, .. } => upper,
        }
    }

    fn beta(&self) -> Result<Option<(Beta, f64)>> {
        match *self {
            DispersionPrior::Triangle => Ok(None),
            DispersionPrior::Beta { alpha, beta, upper } => {
                if !(upper > 0.0 && upper <= 1.0) {
                    return Err(Error::domain(upper, "(0, 1] for a truncation point"));
                }
                let d = Beta::new(alpha, beta)
                    .map_err(|e| Error::invalid(format!("beta prior: {e}")))?;
                let mass = d.cdf(upper);
                Ok(Some((d, mass)))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.beta().map(|_| ())
    }

    pub fn density(&self, u: f64) -> Result<f64> {
        match self.beta()? {
            None => prior_density_u(u),
            Some((d, mass)) => {
                if !(0.0..=self.upper()).contains(&u) {
                    return Err(Error::domain(u, format!("[0, {}]", self.upper())));
                }
                Ok(d.pdf(u) / mass)
            }
        }
    }

    pub fn ln_density(&self, u: f64) -> Result<f64> {
        Ok(self.density(u)?.ln())
    }

    /// Exact draw from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self.beta()? {
            None => loop {
                let (a, b): (f64, f64) = (rng.random(), rng.random());
                let (p1, p2) = (a.max(b), a.min(b));
                if p1 == 0.0 || p2 == 0.0 {
                    continue;
                }
                let u = (1.0 - p1) * p2 / (p1 * (1.0 - p2));
                if u > 0.0 && u <= 1.0 {
                    return Ok(u);
                }
            },
            Some((d, mass)) => {
                let p: f64 = rng.random::<f64>() * mass;
                Ok(d.inverse_cdf(p).clamp(0.0, self.upper()))
            }
        }
    }

    pub fn cdf(&self, u: f64) -> Result<f64> {
        match self.beta()? {
            None => prior_cdf_u(u.clamp(0.0, 1.0)),
            Some((d, mass)) => Ok((d.cdf(u.clamp(0.0, self.upper())) / mass).clamp(0.0, 1.0)),
        }
    }

    /// Inverse CDF, by bisection on [`cdf`](Self::cdf).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(p, "[0, 1]"));
        }
        let (mut lo, mut hi) = (0.0, self.upper());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid)? < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1e-300) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `count` prior draws, one uniformly placed in each of `count`
    /// equal-probability strata. Every draw is marginally distributed as the
    /// prior; the stratification lowers the variance of prior averages.
    pub fn stratified_sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        (0..count)
            .map(|j| {
                let p = (j as f64 + rng.random::<f64>()) / count as f64;
                let u = self.quantile(p)?;
                Ok(u.max(f64::MIN_POSITIVE))
            })
            .collect()
    }

    /// Quadrature rule for `∫ h(u)·prior(u) du` with `nodes` points.
    pub fn quadrature(&self, nodes: usize) -> Result<PriorQuadrature> {
        PriorQuadrature::new(self, nodes)
    }
}

/// Nodes `u_m` and prior-weighted weights `w_m` with `Σ w_m h(u_m) ≈ ∫ h·prior`.
///
/// Uses Gauss–Legendre in `t` with `u = upper·t²`, which tames the logarithmic
/// singularity of the triangle prior at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PriorQuadrature {
    pub fn new(prior: &DispersionPrior, nodes: usize) -> Result<Self> {
        let upper = prior.upper();
        let (t, w) = gauss_legendre_unit(nodes);
        let mut us = Vec::with_capacity(nodes);
        let mut ws = Vec::with_capacity(nodes);
        for (ti, wi) in t.into_iter().zip(w) {
            let u = upper * ti * ti;
            us.push(u);
            ws.push(wi * 2.0 * upper * ti * prior.density(u)?);
        }
        Ok(PriorQuadrature {
            nodes: us,
            weights: ws,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn density_at_one_is_a_third() {
        assert!((prior_density_u(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(prior_density_u(0.0).is_err());
        assert!(prior_density_u(1.01).is_err());
    }

    #[test]
    fn series_branch_is_continuous() {
        for &h in &[-SERIES_RADIUS, -0.99 * SERIES_RADIUS, -1e-3] {
            let direct = density_direct(1.0 + h);
            assert!((direct - density_series(h)).abs() < 1e-9, "h={h}");
        }
        // away from 1 the rewrite agrees with the textbook form
        for &u in &[1e-6, 0.01, 0.3, 0.8] {
            let naive = (4.0 * (1.0 - u) + 2.0 * (u + 1.0) * f64::ln(u)) / (u - 1.0f64).powi(3);
            assert!((density_direct(u) - naive).abs() < 1e-10 * naive.abs());
        }
        // numerical limit from below
        let approach = prior_density_u(1.0 - 2e-3).unwrap();
        assert!((approach - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn quadrature_integrates_the_prior() {
        let q = DispersionPrior::Triangle.quadrature(256).unwrap();
        let total: f64 = q.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-8, "total {total}");
        let flat = DispersionPrior::flat(0.7).quadrature(64).unwrap();
        assert!((flat.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_reference_values() {
        // 30-digit reference values of ∫_0^u g
        let cases = [
            (0.2, 0.505_898_695_271_312_75),
            (0.5, 0.772_588_722_239_781_24),
            (0.9, 0.964_892_818_408_734_23),
        ];
        for (u, want) in cases {
            assert!((prior_cdf_u(u).unwrap() - want).abs() < 1e-14, "u={u}");
        }
        assert_eq!(prior_cdf_u(0.0).unwrap(), 0.0);
        assert_eq!(prior_cdf_u(1.0).unwrap(), 1.0);
        let below = prior_cdf_u(1.0 - 1e-3 - 1e-12).unwrap();
        let above = prior_cdf_u(1.0 - 1e-3 + 1e-12).unwrap();
        assert!((below - above).abs() < 1e-11);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for prior in [DispersionPrior::Triangle, DispersionPrior::flat(0.7)] {
            for &p in &[0.001, 0.3, 0.77, 0.999] {
                let u = prior.quantile(p).unwrap();
                assert!((prior.cdf(u).unwrap() - p).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stratified_draws_cover_each_stratum() {
        let mut rng = stream_rng(2, 0);
        let us = DispersionPrior::Triangle.stratified_sample(50, &mut rng).unwrap();
        for (j, u) in us.iter().enumerate() {
            let c = prior_cdf_u(*u).unwrap();
            assert!(c >= j as f64 / 50.0 - 1e-12 && c <= (j + 1) as f64 / 50.0 + 1e-12);
        }
    }

    #[test]
    fn samples_stay_in_support() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..1000 {
            let u = DispersionPrior::Triangle.sample(&mut rng).unwrap();
            assert!(u > 0.0 && u <= 1.0);
            let v = DispersionPrior::flat(0.7).sample(&mut rng).unwrap();
            assert!((0.0..=0.7).contains(&v));
        }
    }
}
