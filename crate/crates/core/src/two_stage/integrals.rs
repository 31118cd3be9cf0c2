use std::collections::HashMap;

use crate::error::Result;
use crate::math::log_sum_exp;
use crate::model::ModelSpec;
use crate::prior::PriorQuadrature;

/// Memoized `ln ∫ Π_j e_v(k_j) g(v) dv` over the lab-level prior, keyed by the
/// sorted multiset of distances `k_j = n − r_j`.
#[derive(Debug, Clone)]
pub struct IntegralCache {
    n: usize,
    /// `ln w_m` per quadrature node.
    log_weights: Vec<f64>,
    /// `ln e_{v_m}(k)`, node-major.
    log_pmf: Vec<Vec<f64>>,
    values: HashMap<Vec<u8>, f64>,
}

impl IntegralCache {
    pub fn new(lab: &ModelSpec, nodes: usize) -> Result<Self> {
        let quad = PriorQuadrature::new(&lab.prior, nodes)?;
        let n = lab.n();
        let log_pmf = quad
            .nodes
            .iter()
            .map(|&v| lab.family.log_pmf(v))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntegralCache {
            n,
            log_weights: quad.weights.iter().map(|w| w.ln()).collect(),
            log_pmf,
            values: HashMap::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn key(distances: &[usize]) -> Vec<u8> {
        let mut key: Vec<u8> = distances.iter().map(|&k| k as u8).collect();
        key.sort_unstable();
        key
    }

    fn compute(&self, key: &[u8]) -> f64 {
        let terms: Vec<f64> = self
            .log_weights
            .iter()
            .zip(&self.log_pmf)
            .map(|(lw, row)| lw + key.iter().map(|&k| row[k as usize]).sum::<f64>())
            .collect();
        log_sum_exp(&terms)
    }

    /// `ln ∫ Π_j e_v(distances[j]) g(v) dv`, computed once per multiset.
    pub fn log_integral(&mut self, distances: &[usize]) -> f64 {
        let key = Self::key(distances);
        if let Some(&v) = self.values.get(&key) {
            return v;
        }
        let v = self.compute(&key);
        self.values.insert(key, v);
        v
    }

    /// Read-only variant; computes without storing on a miss.
    pub fn peek(&self, distances: &[usize]) -> f64 {
        let key = Self::key(distances);
        self.values
            .get(&key)
            .copied()
            .unwrap_or_else(|| self.compute(&key))
    }
}
