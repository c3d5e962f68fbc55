//! Report types and the replicate machinery shared by every estimator.
//!
//! Each replicate draws a hypothetical allocation `T̄` (uniform on `{±1}ⁿ`)
//! and covariates `X̄ ~ P_X`, and contributes
//!
//! ```text
//! DE_r = (2/n) Σ T̄_i ⟨Y_i⟩_{T̄,X̄}
//! IE_r = (1/n) Σ ⟨Y_i⟩_{T̄,X̄} − (1/n) Σ ⟨Y_i⟩_{−1,X̄} − DE_r / 2
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{uniform_spins, CovariateLaw, CovariateMatrix, Spin};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    /// Replicate standard error, `sd / √k`; zero for exact evaluations.
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }

    /// `|value − target| ≤ z·se + slack`.
    pub fn agrees_with(&self, target: f64, z: f64, slack: f64) -> bool {
        (self.value - target).abs() <= z * self.se + slack
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub method: String,
    pub n: usize,
    pub de: Estimate,
    pub ie: Estimate,
    pub replicates: usize,
    pub seed: Option<u64>,
    pub notes: Vec<String>,
    /// Filled by callers that own a clock; the library never reads time.
    pub runtime_secs: Option<f64>,
}

impl EffectEstimate {
    pub fn new(method: &str, n: usize, de: Estimate, ie: Estimate) -> Self {
        Self {
            method: method.to_string(),
            n,
            de,
            ie,
            replicates: 0,
            seed: None,
            notes: Vec::new(),
            runtime_secs: None,
        }
    }
}

/// One hypothetical allocation and covariate draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateDraw {
    pub t_bar: Vec<Spin>,
    pub x_bar: CovariateMatrix,
    pub seed: u64,
}

pub fn draw_replicate(n: usize, law: &CovariateLaw, seed: u64) -> Result<ReplicateDraw> {
    let mut rng = rng::seeded(seed);
    let t_bar = uniform_spins(n, &mut rng);
    let x_bar = law.sample(n, &mut rng)?;
    Ok(ReplicateDraw { t_bar, x_bar, seed })
}

/// Population sums from one replicate: `Σ T̄_i⟨Y_i⟩`, `Σ⟨Y_i⟩` under `T̄`,
/// and `Σ⟨Y_i⟩` under the all-minus allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateSums {
    pub treated_alignment: f64,
    pub total: f64,
    pub total_all_minus: f64,
}

impl ReplicateSums {
    pub fn from_marginals(t_bar: &[Spin], marg: &[f64], marg_minus: &[f64]) -> Self {
        Self {
            treated_alignment: t_bar.iter().zip(marg).map(|(&t, m)| f64::from(t) * m).sum(),
            total: marg.iter().sum(),
            total_all_minus: marg_minus.iter().sum(),
        }
    }

    pub fn effects(&self, n: usize) -> (f64, f64) {
        let nf = n as f64;
        let de = 2.0 * self.treated_alignment / nf;
        let ie = (self.total - self.total_all_minus) / nf - 0.5 * de;
        (de, ie)
    }
}

/// Mean and `sd/√k` of a sample.
pub fn mean_and_se(xs: &[f64]) -> Estimate {
    let k = xs.len();
    if k == 0 {
        return Estimate::exact(f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return Estimate { value: mean, se: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Estimate {
        value: mean,
        se: (var / k as f64).sqrt(),
    }
}

/// Maps `0..count` in parallel when the `parallel` feature is on. Output
/// order is the index order either way.
pub(crate) fn par_map<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Runs `k` independent replicates with seeds `child_seed(seed, r)` and
/// aggregates them into an estimate.
pub fn replicate_effects<F>(
    method: &str,
    n: usize,
    law: &CovariateLaw,
    k: usize,
    seed: u64,
    per_draw: F,
) -> Result<EffectEstimate>
where
    F: Fn(&ReplicateDraw) -> Result<ReplicateSums> + Sync + Send,
{
    if k == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    let sums: Vec<Result<(f64, f64)>> = par_map(k, |r| {
        let draw = draw_replicate(n, law, rng::child_seed(seed, r as u64))?;
        Ok(per_draw(&draw)?.effects(n))
    });
    let mut de = Vec::with_capacity(k);
    let mut ie = Vec::with_capacity(k);
    for s in sums {
        let (a, b) = s?;
        de.push(a);
        ie.push(b);
    }
    let mut est = EffectEstimate::new(method, n, mean_and_se(&de), mean_and_se(&ie));
    est.replicates = k;
    est.seed = Some(seed);
    Ok(est)
}
