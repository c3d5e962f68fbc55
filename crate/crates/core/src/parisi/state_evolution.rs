use serde::{Deserialize, Serialize};

use super::amp::AmpDenoiser;
use super::functional::FieldDistribution;
use super::pde::{GridParams, ParisiMeasure};
use super::quadrature::NormalRule;
use crate::error::Result;

/// `a_0 = 0`, `a_{k+1} = φ(a_k)` with
/// `φ(t) = β² E[(E_{G2} g(F + G1√t + G2√(β²q − t)))²]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEvolution {
    pub beta: f64,
    pub q: f64,
    /// `a_0, …, a_M`.
    pub a: Vec<f64>,
    /// `φ(a_k)/β²` for `k = 0..M`; the predicted overlap `E[M^j M^k]`,
    /// `j < k`, is entry `j`.
    pub overlaps: Vec<f64>,
}

impl StateEvolution {
    /// `Var W = β²q`.
    pub fn predicted_field_variance(&self) -> f64 {
        self.beta * self.beta * self.q
    }

    /// `E[M²] = q`.
    pub fn predicted_second_moment(&self) -> f64 {
        self.q
    }
}

pub fn state_evolution(
    beta: f64,
    fields: &FieldDistribution,
    mu: &ParisiMeasure,
    iterations: usize,
) -> Result<StateEvolution> {
    let q = mu.inf_support();
    let grid = GridParams::for_fields(fields.max_abs(), beta);
    let den = AmpDenoiser::new(mu, beta, &grid)?;
    let rule = NormalRule::new(grid.order)?;
    let total = beta * beta * q;
    // E over (F, G1) of the squared G2-smoothing; divided by β² already.
    let overlap = |t: f64| {
        let t = t.clamp(0.0, total);
        let (s1, s2) = (t.sqrt(), (total - t).sqrt());
        fields.expect(|f| {
            rule.expect(|g1| {
                let inner = rule.expect(|g2| den.g(f.value + s1 * g1 + s2 * g2));
                inner * inner
            })
        })
    };
    let mut a = vec![0.0];
    let mut overlaps = Vec::with_capacity(iterations + 1);
    for _ in 0..=iterations {
        let o = overlap(*a.last().expect("nonempty"));
        overlaps.push(o);
        if a.len() <= iterations {
            a.push(beta * beta * o);
        }
    }
    Ok(StateEvolution {
        beta,
        q,
        a,
        overlaps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parisi::functional::{minimize_parisi, MinimizeOptions};

    #[test]
    fn sequence_starts_at_zero_and_increases_to_the_cap() {
        let fields = FieldDistribution::treated(0.5, &[(0.0, 1.0)]).unwrap();
        let sol = minimize_parisi(0.3, &fields, 0.0, &MinimizeOptions::new(1)).unwrap();
        let se = state_evolution(0.3, &fields, &sol.measure, 20).unwrap();
        assert_eq!(se.a[0], 0.0);
        assert_eq!(se.a.len(), 21);
        let cap = se.predicted_field_variance();
        for w in se.a.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(se.a.iter().all(|&v| v <= cap + 1e-6));
        // At the J = 1 stationary point the limit of the overlaps is q.
        assert!((se.overlaps[20] - se.q).abs() < 1e-4);
    }
}
