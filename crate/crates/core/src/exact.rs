//! Brute-force enumeration of the outcome Gibbs measure.
//!
//! States are visited in Gray-code order so consecutive states differ in one
//! spin; the energy and the local fields `(Ay)_i` are updated in `O(n)` per
//! state and re-synchronised from scratch every [`RESYNC`] states to stop
//! round-off drift. Partition sums are accumulated in a streaming
//! log-sum-exp with a moving reference energy.
//!
//! Averaging over all `2ⁿ` hypothetical allocations `T̄` uses a per-axis
//! transform instead of `2ⁿ` separate enumerations. With
//! `c(y) = exp(½yᵀAy + yᵀh)` the treated partition function is
//! `Z(t) = Σ_y c(y) Π_i e^{τ t_i y_i}`, a tensor product of `2×2` kernels, so
//! `Z`, `∂_τ Z` and `∂_γ Z` for every `t` cost `O(n·2ⁿ)` in total.

use serde::{Deserialize, Serialize};

use crate::effects::{
    mean_and_se, par_map, replicate_effects, EffectEstimate, Estimate, ReplicateSums,
};
use crate::error::{Error, Result};
use crate::model::{
    check_len, check_spins, energy_with_field, external_field, CovariateLaw, CovariateMatrix,
    InteractionMatrix, OutcomeParams, Spin,
};
use crate::rng;

pub const HARD_MAX_N: usize = 24;
const RESYNC: usize = 1 << 12;
const CHUNK: usize = 1 << 10;
/// Covariate configurations enumerated exactly before falling back to sampling.
pub const MAX_COVARIATE_CONFIGS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLimit {
    pub max_n: usize,
    pub max_treatment_n: usize,
}

impl Default for OracleLimit {
    fn default() -> Self {
        Self {
            max_n: 20,
            max_treatment_n: 20,
        }
    }
}

impl OracleLimit {
    fn check(&self, n: usize) -> Result<()> {
        let max = self.max_n.min(HARD_MAX_N);
        if n > max {
            return Err(Error::PopulationTooLarge { n, max });
        }
        Ok(())
    }

    fn check_treatments(&self, n: usize) -> Result<()> {
        self.check(n)?;
        if n > self.max_treatment_n {
            return Err(Error::PopulationTooLarge {
                n,
                max: self.max_treatment_n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsMoments {
    pub log_z: f64,
    pub marginals: Vec<f64>,
}

/// Calls `visit(mask, y, energy)` for every `y ∈ {±1}ⁿ` in Gray-code order,
/// starting from all-minus. Bit `i` of `mask` is set iff `y_i = +1`.
fn gray_walk(a: &InteractionMatrix, field: &[f64], mut visit: impl FnMut(usize, &[Spin], f64)) {
    let n = a.n();
    let mut y: Vec<Spin> = vec![-1; n];
    let mut local = a.spin_matvec(&y);
    let mut energy = energy_with_field(a, field, &y);
    visit(0, &y, energy);
    for k in 1..(1usize << n) {
        let i = k.trailing_zeros() as usize;
        let s = f64::from(y[i]);
        energy -= 2.0 * s * (local[i] + field[i]);
        y[i] = -y[i];
        if k % RESYNC == 0 {
            local = a.spin_matvec(&y);
            energy = energy_with_field(a, field, &y);
        } else {
            for (l, c) in local.iter_mut().zip(a.row(i)) {
                *l -= 2.0 * s * c;
            }
        }
        visit(k ^ (k >> 1), &y, energy);
    }
}

/// `log Z` and `⟨Y_i⟩` for the measure `∝ exp(½yᵀAy + yᵀfield)`.
pub fn gibbs_moments(
    a: &InteractionMatrix,
    field: &[f64],
    limit: &OracleLimit,
) -> Result<GibbsMoments> {
    let n = a.n();
    limit.check(n)?;
    check_len("field", n, field.len())?;
    let mut reference = f64::NEG_INFINITY;
    let mut total = 0.0;
    let mut chunk = 0.0;
    let mut total_m = vec![0.0; n];
    let mut chunk_m = vec![0.0; n];
    let mut count = 0usize;
    gray_walk(a, field, |_, y, e| {
        if e > reference + 30.0 {
            let f = if reference.is_finite() { (reference - e).exp() } else { 0.0 };
            total *= f;
            chunk *= f;
            total_m.iter_mut().chain(chunk_m.iter_mut()).for_each(|v| *v *= f);
            reference = e;
        }
        let w = (e - reference).exp();
        chunk += w;
        for (c, &s) in chunk_m.iter_mut().zip(y) {
            *c += w * f64::from(s);
        }
        count += 1;
        if count % CHUNK == 0 {
            total += chunk;
            chunk = 0.0;
            for (t, c) in total_m.iter_mut().zip(chunk_m.iter_mut()) {
                *t += *c;
                *c = 0.0;
            }
        }
    });
    total += chunk;
    for (t, c) in total_m.iter_mut().zip(&chunk_m) {
        *t += c;
    }
    let marginals = total_m.iter().map(|m| (m / total).clamp(-1.0, 1.0)).collect();
    Ok(GibbsMoments {
        log_z: reference + total.ln(),
        marginals,
    })
}

pub fn exact_log_partition(
    a: &InteractionMatrix,
    t: &[Spin],
    x: &CovariateMatrix,
    p: &OutcomeParams,
    limit: &OracleLimit,
) -> Result<f64> {
    check_spins(t)?;
    Ok(gibbs_moments(a, &external_field(t, x, p)?, limit)?.log_z)
}

pub fn exact_marginals(
    a: &InteractionMatrix,
    t: &[Spin],
    x: &CovariateMatrix,
    p: &OutcomeParams,
    limit: &OracleLimit,
) -> Result<Vec<f64>> {
    check_spins(t)?;
    Ok(gibbs_moments(a, &external_field(t, x, p)?, limit)?.marginals)
}

/// Averages over all `2ⁿ` allocations for a fixed covariate-and-tilt field
/// `base_i = θᵀx_i + γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreatmentAverages {
    /// `mean_t Σ_i t_i ⟨Y_i⟩_t`.
    pub alignment: f64,
    /// `mean_t Σ_i ⟨Y_i⟩_t`.
    pub total: f64,
    /// `Σ_i ⟨Y_i⟩` at `t = (−1, …, −1)`.
    pub total_all_minus: f64,
    /// `mean_t log Z(t)`.
    pub mean_log_z: f64,
}

impl TreatmentAverages {
    pub fn sums(&self) -> ReplicateSums {
        ReplicateSums {
            treated_alignment: self.alignment,
            total: self.total,
            total_all_minus: self.total_all_minus,
        }
    }
}

pub fn treatment_averages(
    a: &InteractionMatrix,
    base: &[f64],
    tau: f64,
    limit: &OracleLimit,
) -> Result<TreatmentAverages> {
    let n = a.n();
    limit.check_treatments(n)?;
    check_len("field", n, base.len())?;
    let size = 1usize << n;
    let mut z = vec![0.0; size];
    gray_walk(a, base, |mask, _, e| z[mask] = e);
    let emax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nf = n as i64;
    let mut zg = vec![0.0; size];
    for (s, v) in z.iter_mut().enumerate() {
        *v = (*v - emax).exp();
        zg[s] = *v * (2 * i64::from(s.count_ones()) - nf) as f64;
    }
    let mut zt = vec![0.0; size];
    let ka = (tau - tau.abs()).exp();
    let kb = (-tau - tau.abs()).exp();
    for i in 0..n {
        let bit = 1usize << i;
        for lo in (0..size).filter(|s| s & bit == 0) {
            let hi = lo | bit;
            let (cm, cp) = (z[lo], z[hi]);
            z[hi] = ka * cp + kb * cm;
            z[lo] = kb * cp + ka * cm;
            let (gm, gp) = (zg[lo], zg[hi]);
            zg[hi] = ka * gp + kb * gm;
            zg[lo] = kb * gp + ka * gm;
            let (tm, tp) = (zt[lo], zt[hi]);
            zt[hi] = ka * tp + kb * tm + ka * cp - kb * cm;
            zt[lo] = kb * tp + ka * tm - kb * cp + ka * cm;
        }
    }
    if z.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Numerical(
            "treated partition function underflowed".into(),
        ));
    }
    let inv = 1.0 / size as f64;
    let alignment = zt.iter().zip(&z).map(|(a, b)| a / b).sum::<f64>() * inv;
    let total = zg.iter().zip(&z).map(|(a, b)| a / b).sum::<f64>() * inv;
    let offset = emax + n as f64 * tau.abs();
    let mean_log_z = z.iter().map(|v| v.ln()).sum::<f64>() * inv + offset;
    Ok(TreatmentAverages {
        alignment,
        total,
        total_all_minus: zg[0] / z[0],
        mean_log_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleMode {
    /// All `2ⁿ` allocations; covariates enumerated when the support allows,
    /// otherwise sampled with `covariate_draws` draws from `seed`.
    Full { covariate_draws: usize, seed: u64 },
    /// `k` sampled `(T̄, X̄)` replicates.
    MonteCarlo { k: usize, seed: u64 },
}

impl OracleMode {
    pub fn full() -> Self {
        OracleMode::Full {
            covariate_draws: 256,
            seed: 0,
        }
    }
}

/// Enumerates every covariate configuration of a finite law, or `None`
/// when there are too many.
fn covariate_configs(law: &CovariateLaw, n: usize) -> Option<Vec<(Vec<usize>, f64, Vec<Vec<f64>>)>> {
    let (points, probs) = law.finite_support()?;
    let m = points.len();
    if (m as f64).powi(n as i32) > MAX_COVARIATE_CONFIGS {
        return None;
    }
    let total = m.pow(n as u32);
    Some(
        (0..total)
            .map(|mut code| {
                let mut idx = vec![0; n];
                let mut w = 1.0;
                for slot in idx.iter_mut() {
                    *slot = code % m;
                    code /= m;
                    w *= probs[*slot];
                }
                (idx, w, points.clone())
            })
            .collect(),
    )
}

/// Exact DE/IE for fixed covariates, averaged over all allocations.
pub fn treatment_averaged_effects(
    a: &InteractionMatrix,
    x: &CovariateMatrix,
    p: &OutcomeParams,
    limit: &OracleLimit,
) -> Result<(f64, f64)> {
    let n = a.n();
    check_len("covariate rows", n, x.n())?;
    let base: Vec<f64> = x.linear(&p.theta)?.iter().map(|h| h + p.gamma).collect();
    Ok(treatment_averages(a, &base, p.tau, limit)?.sums().effects(n))
}

/// Exact DE and IE. See [`OracleMode`] for how the outer expectation is taken.
pub fn exact_effects(
    a: &InteractionMatrix,
    law: &CovariateLaw,
    p: &OutcomeParams,
    mode: OracleMode,
    limit: &OracleLimit,
) -> Result<EffectEstimate> {
    let n = a.n();
    limit.check(n)?;
    check_len("theta", law.dim(), p.theta.len())?;
    match mode {
        OracleMode::MonteCarlo { k, seed } => {
            replicate_effects("oracle_mc", n, law, k, seed, |draw| {
                let field = external_field(&draw.t_bar, &draw.x_bar, p)?;
                let marg = gibbs_moments(a, &field, limit)?.marginals;
                let minus = external_field(&vec![-1; n], &draw.x_bar, p)?;
                let marg_minus = gibbs_moments(a, &minus, limit)?.marginals;
                Ok(ReplicateSums::from_marginals(&draw.t_bar, &marg, &marg_minus))
            })
        }
        OracleMode::Full {
            covariate_draws,
            seed,
        } => {
            limit.check_treatments(n)?;
            if let Some(configs) = covariate_configs(law, n) {
                let parts = par_map(configs.len(), |c| {
                    let (idx, w, points) = &configs[c];
                    let x = CovariateMatrix::from_support(points.clone(), idx.clone())?;
                    let (de, ie) = treatment_averaged_effects(a, &x, p, limit)?;
                    Ok::<_, Error>((w * de, w * ie))
                });
                let (mut de, mut ie) = (0.0, 0.0);
                for part in parts {
                    let (d, i): (f64, f64) = part?;
                    de += d;
                    ie += i;
                }
                let mut est =
                    EffectEstimate::new("oracle_full", n, Estimate::exact(de), Estimate::exact(ie));
                est.replicates = configs.len();
                Ok(est)
            } else {
                if covariate_draws == 0 {
                    return Err(Error::InvalidParameter(
                        "covariate fallback needs at least one draw".into(),
                    ));
                }
                let parts = par_map(covariate_draws, |r| {
                    let mut g = rng::seeded(rng::child_seed(seed, r as u64));
                    let x = law.sample(n, &mut g)?;
                    treatment_averaged_effects(a, &x, p, limit)
                });
                let mut de = Vec::with_capacity(covariate_draws);
                let mut ie = Vec::with_capacity(covariate_draws);
                for part in parts {
                    let (d, i) = part?;
                    de.push(d);
                    ie.push(i);
                }
                let mut est = EffectEstimate::new("oracle_full", n, mean_and_se(&de), mean_and_se(&ie));
                est.replicates = covariate_draws;
                est.seed = Some(seed);
                est.notes
                    .push("covariate expectation by Monte Carlo".to_string());
                Ok(est)
            }
        }
    }
}

pub fn exact_direct_effect(
    a: &InteractionMatrix,
    law: &CovariateLaw,
    p: &OutcomeParams,
    mode: OracleMode,
    limit: &OracleLimit,
) -> Result<Estimate> {
    Ok(exact_effects(a, law, p, mode, limit)?.de)
}

pub fn exact_indirect_effect(
    a: &InteractionMatrix,
    law: &CovariateLaw,
    p: &OutcomeParams,
    mode: OracleMode,
    limit: &OracleLimit,
) -> Result<Estimate> {
    Ok(exact_effects(a, law, p, mode, limit)?.ie)
}

/// `(DE_i, IE_i)` for unit `i` given the other units' treatments
/// (`t_minus_i` has length `n − 1`, unit `i` removed).
pub fn unit_effects(
    i: usize,
    t_minus_i: &[Spin],
    a: &InteractionMatrix,
    x: &CovariateMatrix,
    p: &OutcomeParams,
    limit: &OracleLimit,
) -> Result<(f64, f64)> {
    let n = a.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    check_len("other units' treatments", n - 1, t_minus_i.len())?;
    check_spins(t_minus_i)?;
    let mut t: Vec<Spin> = t_minus_i.to_vec();
    t.insert(i, 1);
    let plus = exact_marginals(a, &t, x, p, limit)?[i];
    t[i] = -1;
    let minus = exact_marginals(a, &t, x, p, limit)?[i];
    let all_minus = exact_marginals(a, &vec![-1; n], x, p, limit)?[i];
    Ok((plus - minus, minus - all_minus))
}
