//! Maximum pseudo-likelihood fitting and plug-in estimation.
//!
//! Both the outcome and the propensity model have single-site conditionals
//! `P(r_i = +1 | rest) = e^{m_i}/(2cosh m_i)` with `m_i = (C r)_i + βᵀz_i`, so
//! one Newton engine fits either: response `r`, coupling `C`, features `z`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::block::{estimate_effects, BlockEstimatorOptions};
use crate::effects::EffectEstimate;
use crate::error::{Error, Result};
use crate::glauber::HeatBath;
use crate::model::{
    check_len, check_spins, external_field, log2cosh, sample_treatments, uniform_spins, CovariateLaw,
    CovariateMatrix, InteractionMatrix, OutcomeParams, ParamBounds, PropensityParams, Spin,
};
use crate::parisi::{amp_effects, AmpOptions};
use crate::rng;

/// Observed `(Y, T, X)` with the outcome couplings `A` and, when the
/// propensity model is coupled, its matrix `M_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub y: Vec<Spin>,
    pub t: Vec<Spin>,
    pub x: CovariateMatrix,
    pub a: InteractionMatrix,
    pub propensity_coupling: Option<InteractionMatrix>,
}

impl ObservedData {
    pub fn new(
        y: Vec<Spin>,
        t: Vec<Spin>,
        x: CovariateMatrix,
        a: InteractionMatrix,
        propensity_coupling: Option<InteractionMatrix>,
    ) -> Result<Self> {
        let n = a.n();
        check_len("outcomes", n, y.len())?;
        check_len("treatments", n, t.len())?;
        check_len("covariate rows", n, x.n())?;
        check_spins(&y)?;
        check_spins(&t)?;
        if let Some(m) = &propensity_coupling {
            check_len("propensity coupling", n, m.n())?;
        }
        Ok(Self {
            y,
            t,
            x,
            a,
            propensity_coupling,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Same data with units relabelled: unit `i` becomes `perm[i]`'s old unit.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            y: perm.iter().map(|&i| self.y[i]).collect(),
            t: perm.iter().map(|&i| self.t[i]).collect(),
            x: self.x.permuted(perm),
            a: self.a.permuted(perm),
            propensity_coupling: self.propensity_coupling.as_ref().map(|m| m.permuted(perm)),
        }
    }
}

/// Simulates one dataset: covariates from `law`, treatments from the
/// propensity model, outcomes after `sweeps` heat-bath sweeps from a uniform
/// start.
pub fn simulate_data(
    a: &InteractionMatrix,
    law: &CovariateLaw,
    p: &OutcomeParams,
    prop: &PropensityParams,
    sweeps: usize,
    seed: u64,
) -> Result<ObservedData> {
    let n = a.n();
    let x = law.sample(n, &mut rng::stream_rng(seed, 0))?;
    let t = sample_treatments(prop, &x, sweeps.max(1) * n, rng::child_seed(seed, 1))?;
    let field = external_field(&t, &x, p)?;
    let mut g = rng::stream_rng(seed, 2);
    let init = uniform_spins(n, &mut g);
    let mut chain = HeatBath::new(a, field, init)?;
    for _ in 0..sweeps {
        chain.sweep(crate::glauber::Scan::Random, &mut g);
    }
    let coupling = (!prop.coupling.is_zero()).then(|| prop.coupling.clone());
    ObservedData::new(chain.into_state(), t, x, a.clone(), coupling)
}

/// One conditional-logistic problem.
struct Problem<'a> {
    response: &'a [Spin],
    offset: Vec<f64>,
    /// Row-major `n × p`.
    features: Vec<f64>,
    p: usize,
}

impl<'a> Problem<'a> {
    fn new(response: &'a [Spin], coupling: &InteractionMatrix, features: Vec<f64>, p: usize) -> Self {
        Self {
            response,
            offset: coupling.spin_matvec(response),
            features,
            p,
        }
    }

    fn fields(&self, beta: &[f64]) -> Vec<f64> {
        self.offset
            .iter()
            .enumerate()
            .map(|(i, o)| {
                o + self.features[i * self.p..(i + 1) * self.p]
                    .iter()
                    .zip(beta)
                    .map(|(z, b)| z * b)
                    .sum::<f64>()
            })
            .collect()
    }

    fn value(&self, beta: &[f64]) -> f64 {
        self.fields(beta)
            .iter()
            .zip(self.response)
            .map(|(m, &r)| f64::from(r) * m - log2cosh(*m))
            .sum()
    }

    fn gradient_hessian(&self, beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let p = self.p;
        let mut g = vec![0.0; p];
        let mut h = DMatrix::zeros(p, p);
        for (i, m) in self.fields(beta).iter().enumerate() {
            let th = m.tanh();
            let resid = f64::from(self.response[i]) - th;
            let w = 1.0 - th * th;
            let z = &self.features[i * p..(i + 1) * p];
            for a in 0..p {
                g[a] += resid * z[a];
                for b in 0..=a {
                    h[(a, b)] += w * z[a] * z[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        (g, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub max_iters: usize,
    /// Stop once `‖gradient‖_∞` falls below this.
    pub tolerance: f64,
    /// Ridge added to the Hessian before solving.
    pub damping: f64,
    pub bounds: ParamBounds,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tolerance: 1e-8,
            damping: 1e-8,
            bounds: ParamBounds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FitFlags {
    pub converged: bool,
    pub iteration_cap: bool,
    pub boundary: bool,
    /// Response constant across units; the optimum sits on the box.
    pub degenerate: bool,
}

impl FitFlags {
    pub fn clean(&self) -> bool {
        self.converged && !self.iteration_cap && !self.boundary && !self.degenerate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MplFit {
    pub coefficients: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub flags: FitFlags,
}

fn newton(problem: &Problem, init: Vec<f64>, lo: &[f64], hi: &[f64], opts: &NewtonOptions) -> MplFit {
    let project = |b: &mut Vec<f64>| {
        for ((v, l), h) in b.iter_mut().zip(lo).zip(hi) {
            *v = v.clamp(*l, *h);
        }
    };
    let mut beta = init;
    project(&mut beta);
    let mut value = problem.value(&beta);
    let mut flags = FitFlags {
        degenerate: problem.response.windows(2).all(|w| w[0] == w[1]),
        ..FitFlags::default()
    };
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;
    while iterations < opts.max_iters {
        let (g, h) = problem.gradient_hessian(&beta);
        grad_norm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if grad_norm <= opts.tolerance {
            flags.converged = true;
            break;
        }
        iterations += 1;
        let reg = h + DMatrix::identity(problem.p, problem.p) * opts.damping;
        let gv = DVector::from_vec(g.clone());
        let dir: Vec<f64> = match reg.cholesky() {
            Some(c) => c.solve(&gv).iter().copied().collect(),
            None => g.clone(),
        };
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = beta.iter().zip(&dir).map(|(b, d)| b + step * d).collect();
            project(&mut cand);
            let v = problem.value(&cand);
            // Near the optimum the objective is flat to rounding; accept
            // steps that do not lose more than that.
            if v >= value - 1e-13 * value.abs().max(1.0) {
                moved = cand != beta;
                beta = cand;
                value = v;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // No ascent left inside the box: stationary up to projection.
            let (g, _) = problem.gradient_hessian(&beta);
            grad_norm = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
            flags.converged = grad_norm <= opts.tolerance;
            break;
        }
    }
    if iterations >= opts.max_iters && !flags.converged {
        flags.iteration_cap = true;
    }
    flags.boundary = beta
        .iter()
        .zip(lo.iter().zip(hi))
        .any(|(b, (l, h))| *b <= *l || *b >= *h);
    MplFit {
        coefficients: beta,
        value,
        grad_norm,
        iterations,
        flags,
    }
}

fn outcome_problem<'a>(data: &'a ObservedData) -> Problem<'a> {
    let n = data.n();
    let d = data.x.d();
    let mut features = Vec::with_capacity(n * (d + 1));
    for i in 0..n {
        features.push(f64::from(data.t[i]));
        features.extend_from_slice(data.x.row(i));
    }
    Problem::new(&data.y, &data.a, features, d + 1)
}

/// `Σ_i [y_i m_i − log 2cosh m_i]` and its gradient in `(τ, θ)`, with
/// `m_i = (Ay)_i + τt_i + θᵀx_i + γ`.
pub fn pseudo_log_likelihood(p: &OutcomeParams, data: &ObservedData) -> Result<(f64, Vec<f64>)> {
    check_len("theta", data.x.d(), p.theta.len())?;
    let mut prob = outcome_problem(data);
    for o in prob.offset.iter_mut() {
        *o += p.gamma;
    }
    let mut beta = vec![p.tau];
    beta.extend_from_slice(&p.theta);
    let (g, _) = prob.gradient_hessian(&beta);
    Ok((prob.value(&beta), g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFit {
    pub params: OutcomeParams,
    pub fit: MplFit,
}

/// MPL estimate of `(τ, θ)`; `init.gamma` is held fixed.
pub fn fit_mpl(data: &ObservedData, init: &OutcomeParams, opts: &NewtonOptions) -> Result<OutcomeFit> {
    check_len("theta", data.x.d(), init.theta.len())?;
    let mut prob = outcome_problem(data);
    for o in prob.offset.iter_mut() {
        *o += init.gamma;
    }
    let d = data.x.d();
    let mut lo = vec![-opts.bounds.tau];
    lo.extend(std::iter::repeat_n(-opts.bounds.theta, d));
    let hi: Vec<f64> = lo.iter().map(|v| -v).collect();
    let mut start = vec![init.tau];
    start.extend_from_slice(&init.theta);
    let fit = newton(&prob, start, &lo, &hi, opts);
    let params = OutcomeParams {
        tau: fit.coefficients[0],
        theta: fit.coefficients[1..].to_vec(),
        gamma: init.gamma,
    };
    Ok(OutcomeFit { params, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityFit {
    pub gamma: Vec<f64>,
    pub fit: MplFit,
}

/// MPL estimate of the propensity coefficients `γ` from the observed
/// treatments; uncoupled designs reduce to logistic regression.
pub fn fit_propensity(data: &ObservedData, opts: &NewtonOptions) -> Result<PropensityFit> {
    let n = data.n();
    let d = data.x.d();
    if d == 0 {
        return Err(Error::InvalidParameter("propensity model needs covariates".into()));
    }
    let zero = InteractionMatrix::zeros(n);
    let coupling = data.propensity_coupling.as_ref().unwrap_or(&zero);
    let prob = Problem::new(&data.t, coupling, data.x.data().to_vec(), d);
    let hi = vec![opts.bounds.theta; d];
    let lo: Vec<f64> = hi.iter().map(|v| -v).collect();
    let fit = newton(&prob, vec![0.0; d], &lo, &hi, opts);
    Ok(PropensityFit {
        gamma: fit.coefficients.clone(),
        fit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlugInMethod {
    Block(BlockEstimatorOptions),
    /// `beta` is the scale of `A = βG`.
    Amp { beta: f64, options: AmpOptions },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlugInReport {
    pub estimate: EffectEstimate,
    pub fitted: OutcomeParams,
    pub reference: Option<OutcomeParams>,
}

/// Runs the chosen estimator on `data.a` with the fitted parameters.
pub fn plug_in(
    method: &PlugInMethod,
    data: &ObservedData,
    law: &CovariateLaw,
    fitted: &OutcomeParams,
    reference: Option<&OutcomeParams>,
) -> Result<PlugInReport> {
    let mut estimate = match method {
        PlugInMethod::Block(opts) => estimate_effects(&data.a, law, fitted, opts)?.0,
        PlugInMethod::Amp { beta, options } => amp_effects(&data.a, *beta, law, fitted, options)?.0,
    };
    estimate.notes.push(format!(
        "plug-in tau = {:.6}, theta = {:?}",
        fitted.tau, fitted.theta
    ));
    Ok(PlugInReport {
        estimate,
        fitted: fitted.clone(),
        reference: reference.cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_interaction, InteractionKind};
    use proptest::prelude::*;

    fn random_data(n: usize, d: usize, seed: u64) -> ObservedData {
        let a = make_interaction(&InteractionKind::CurieWeiss { beta: 0.4 }, n, seed).unwrap();
        let law = if d == 0 {
            CovariateLaw::None
        } else {
            CovariateLaw::Rademacher { d }
        };
        let p = OutcomeParams::new(0.3, vec![0.2; d]);
        let prop = PropensityParams {
            coupling: InteractionMatrix::zeros(n),
            gamma0: vec![0.1; d],
        };
        simulate_data(&a, &law, &p, &prop, 5, seed).unwrap()
    }

    #[test]
    fn decoupled_zero_parameters() {
        let mut data = random_data(30, 2, 1);
        data.a = InteractionMatrix::zeros(30);
        let (v, g) = pseudo_log_likelihood(&OutcomeParams::new(0.0, vec![0.0; 2]), &data).unwrap();
        assert!((v + 30.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let yt: f64 = data.y.iter().zip(&data.t).map(|(&a, &b)| f64::from(a * b)).sum();
        assert!((g[0] - yt).abs() < 1e-12);
        for k in 0..2 {
            let yx: f64 = (0..30).map(|i| f64::from(data.y[i]) * data.x.row(i)[k]).sum();
            assert!((g[k + 1] - yx).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let data = random_data(60, 2, seed);
            let p = OutcomeParams::new(0.4, vec![-0.3, 0.5]).with_gamma(0.1);
            let (_, g) = pseudo_log_likelihood(&p, &data).unwrap();
            let h = 1e-5;
            let shift = |k: usize, s: f64| {
                let mut q = p.clone();
                if k == 0 {
                    q.tau += s;
                } else {
                    q.theta[k - 1] += s;
                }
                pseudo_log_likelihood(&q, &data).unwrap().0
            };
            for k in 0..3 {
                let fd = (shift(k, h) - shift(k, -h)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6, "seed {seed} k {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn fit_reaches_stationarity_and_is_permutation_invariant() {
        let data = random_data(300, 1, 7);
        let init = OutcomeParams::new(0.0, vec![0.0]);
        let fit = fit_mpl(&data, &init, &NewtonOptions::default()).unwrap();
        assert!(fit.fit.flags.clean());
        assert!(fit.fit.grad_norm <= 1e-7);
        let perm: Vec<usize> = (0..300).map(|i| (i * 7 + 3) % 300).collect();
        let other = fit_mpl(&data.permuted(&perm), &init, &NewtonOptions::default()).unwrap();
        assert!((fit.params.tau - other.params.tau).abs() < 1e-10);
        assert!((fit.params.theta[0] - other.params.theta[0]).abs() < 1e-10);
    }

    #[test]
    fn constant_outcomes_hit_the_box() {
        let mut data = random_data(40, 0, 3);
        data.y = vec![1; 40];
        let fit = fit_mpl(&data, &OutcomeParams::tau_only(0.0), &NewtonOptions::default()).unwrap();
        assert!(fit.fit.flags.degenerate);
        assert!(!fit.fit.flags.clean());
    }

    #[test]
    fn propensity_logistic_recovery() {
        let n = 4000;
        let a = InteractionMatrix::zeros(n);
        let law = CovariateLaw::Rademacher { d: 2 };
        let prop = PropensityParams {
            coupling: InteractionMatrix::zeros(n),
            gamma0: vec![0.5, -0.3],
        };
        let data = simulate_data(&a, &law, &OutcomeParams::new(0.0, vec![0.0; 2]), &prop, 1, 5).unwrap();
        let fit = fit_propensity(&data, &NewtonOptions::default()).unwrap();
        assert!(fit.fit.flags.clean(), "{:?}", fit.fit);
        let tol = 5.0 / (n as f64).sqrt();
        assert!((fit.gamma[0] - 0.5).abs() < tol);
        assert!((fit.gamma[1] + 0.3).abs() < tol);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn objective_is_concave_on_segments(
            seed in 0u64..1000,
            a in prop::collection::vec(-2.0f64..2.0, 3),
            b in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let data = random_data(40, 2, seed);
            let at = |s: f64| {
                let v: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect();
                pseudo_log_likelihood(&OutcomeParams::new(v[0], v[1..].to_vec()), &data).unwrap().0
            };
            let h = 0.25;
            for k in 1..4 {
                let s = k as f64 * h;
                let second = at(s - h) - 2.0 * at(s) + at(s + h);
                prop_assert!(second <= 1e-9);
            }
        }
    }
}
