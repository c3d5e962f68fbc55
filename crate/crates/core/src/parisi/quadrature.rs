use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;

use crate::error::{Error, Result};

/// Gauss–Hermite rule rescaled to integrate against the standard normal:
/// `E f(Z) ≈ Σ w_k f(z_k)` with `Σ w_k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    pub fn new(order: usize) -> Result<Self> {
        if order < 3 {
            return Err(Error::InvalidParameter(format!(
                "quadrature order must be at least 3, got {order}"
            )));
        }
        let rule = GaussHermite::new(NonZeroUsize::new(order).expect("order >= 3"));
        let norm = std::f64::consts::PI.sqrt();
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
            .unzip();
        Ok(Self { nodes, weights })
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments() {
        let r = NormalRule::new(41).unwrap();
        assert!((r.expect(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!(r.expect(|z| z).abs() < 1e-13);
        assert!((r.expect(|z| z * z) - 1.0).abs() < 1e-12);
        assert!((r.expect(|z| z.powi(4)) - 3.0).abs() < 1e-11);
        assert!(NormalRule::new(2).is_err());
    }
}
