use serde::{Deserialize, Serialize};

use super::functional::{minimize_parisi, FieldDistribution, MinimizeOptions};
use super::pde::{solve_parisi_pde, GridParams, ParisiMeasure, PdeSlice};
use super::state_evolution::state_evolution;
use crate::effects::{mean_and_se, par_map, EffectEstimate};
use crate::error::{Error, Result};
use crate::model::{check_len, CovariateLaw, InteractionMatrix, OutcomeParams, Spin};
use crate::rng;

/// `g = ∂_xΦ_μ(q, ·)` and its derivative at `q = inf supp μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmpDenoiser {
    pub q: f64,
    pub beta: f64,
    slice: PdeSlice,
}

impl AmpDenoiser {
    pub fn new(mu: &ParisiMeasure, beta: f64, grid: &GridParams) -> Result<Self> {
        let q = mu.inf_support();
        let sol = solve_parisi_pde(mu, beta, grid)?;
        let slice = sol.slice(q)?.clone();
        Ok(Self { q, beta, slice })
    }

    pub fn half_width(&self) -> f64 {
        self.slice.half_width()
    }

    pub fn g(&self, x: f64) -> f64 {
        self.slice.eval(x).1
    }

    /// `∂_xxΦ_μ(q, x)`, the Onsager derivative.
    pub fn dg(&self, x: f64) -> f64 {
        self.slice.eval(x).2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapPoint {
    pub k: usize,
    /// `(1/n)‖m^k‖²`.
    pub second_moment: f64,
    /// `d_k`.
    pub onsager: f64,
    /// `(1/n)‖m^k − m^{k−1}‖²`.
    pub drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    /// `d_1, …, d_M`.
    pub onsager: Vec<f64>,
    pub k: usize,
    /// `m^1, …, m^M`.
    pub iterates: Vec<Vec<f64>>,
    pub history: Vec<OverlapPoint>,
    /// Final drift below `1e−6`.
    pub converged: bool,
}

impl AmpState {
    /// `(1/n)⟨m^j, m^k⟩`, 1-based.
    pub fn overlap(&self, j: usize, k: usize) -> f64 {
        let (a, b) = (&self.iterates[j - 1], &self.iterates[k - 1]);
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
    }
}

fn matvec(a: &InteractionMatrix, v: &[f64]) -> Vec<f64> {
    par_map(a.n(), |i| a.row(i).iter().zip(v).map(|(x, y)| x * y).sum())
}

enum Run {
    Done(AmpState),
    OutOfRange(f64),
}

fn iterate(a: &InteractionMatrix, beta: f64, h: &[f64], den: &AmpDenoiser, iterations: usize) -> Run {
    let n = h.len();
    let nf = n as f64;
    let limit = den.half_width();
    let mut w = vec![0.0; n];
    let mut m_prev = vec![0.0; n];
    let mut iterates = Vec::with_capacity(iterations);
    let mut history = Vec::with_capacity(iterations);
    let mut onsager = Vec::with_capacity(iterations);
    let mut x = Vec::new();
    let mut m = Vec::new();
    for k in 1..=iterations {
        if k > 1 {
            let d_prev = onsager[k - 2];
            let am = matvec(a, &m);
            w = am
                .iter()
                .zip(&m_prev)
                .map(|(u, p)| u - beta * beta * d_prev * p)
                .collect();
            m_prev = std::mem::take(&mut m);
        }
        x = w.iter().zip(h).map(|(a, b)| a + b).collect();
        if let Some(bad) = x.iter().copied().find(|v| v.abs() > limit) {
            return Run::OutOfRange(bad);
        }
        m = x.iter().map(|&v| den.g(v)).collect();
        let d = (x.iter().map(|&v| den.dg(v)).sum::<f64>() / nf).clamp(0.0, 1.0);
        onsager.push(d);
        let drift = m.iter().zip(&m_prev).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / nf;
        history.push(OverlapPoint {
            k,
            second_moment: m.iter().map(|v| v * v).sum::<f64>() / nf,
            onsager: d,
            drift,
        });
        iterates.push(m.clone());
    }
    let converged = history.last().is_some_and(|p| p.drift < 1e-6);
    Run::Done(AmpState {
        w,
        x,
        m,
        onsager,
        k: iterations,
        iterates,
        history,
        converged,
    })
}

/// Runs `M` AMP iterations on `a = βG` with fields `h1 + h2`:
/// `w^{k+1} = a m^k − β² d_k m^{k−1}`, `x^k = w^k + h1 + h2`, `m^k = g(x^k)`,
/// starting from `w^1 = 0`, `m^0 = 0`. When an iterate leaves the PDE grid the
/// grid is widened once.
pub fn amp_run(
    a: &InteractionMatrix,
    beta: f64,
    h1: &[f64],
    h2: &[f64],
    mu: &ParisiMeasure,
    iterations: usize,
    grid: Option<GridParams>,
) -> Result<AmpState> {
    let n = a.n();
    check_len("h1", n, h1.len())?;
    check_len("h2", n, h2.len())?;
    if iterations == 0 {
        return Err(Error::InvalidParameter("AMP needs at least one iteration".into()));
    }
    let h: Vec<f64> = h1.iter().zip(h2).map(|(a, b)| a + b).collect();
    let max_h = h.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let grid = grid.unwrap_or_else(|| GridParams::for_fields(max_h, beta));
    let den = AmpDenoiser::new(mu, beta, &grid)?;
    match iterate(a, beta, &h, &den, iterations) {
        Run::Done(s) => Ok(s),
        Run::OutOfRange(v) => {
            let wider = GridParams::for_fields(2.0 * v.abs(), beta);
            let den = AmpDenoiser::new(mu, beta, &wider)?;
            match iterate(a, beta, &h, &den, iterations) {
                Run::Done(s) => Ok(s),
                Run::OutOfRange(v) => Err(Error::GridRangeExceeded {
                    value: v,
                    half_width: wider.half_width,
                }),
            }
        }
    }
}

/// `(2/n) Σ T̄_i m_i`, or `(1/n) Σ T̄_i m_i` with `paper_literal`.
pub fn amp_de(state: &AmpState, t_bar: &[Spin], paper_literal: bool) -> Result<f64> {
    check_len("t_bar", state.m.len(), t_bar.len())?;
    let s: f64 = t_bar.iter().zip(&state.m).map(|(&t, m)| f64::from(t) * m).sum();
    let scale = if paper_literal { 1.0 } else { 2.0 };
    Ok(scale * s / state.m.len() as f64)
}

/// `(1/n)Σm − (1/n)Σm̄ − DE/2`, or `− DE` with `paper_literal`.
pub fn amp_ie(state_t: &AmpState, state_minus: &AmpState, de: f64, paper_literal: bool) -> Result<f64> {
    check_len("all-minus state", state_t.m.len(), state_minus.m.len())?;
    let nf = state_t.m.len() as f64;
    let diff = (state_t.m.iter().sum::<f64>() - state_minus.m.iter().sum::<f64>()) / nf;
    Ok(if paper_literal { diff - de } else { diff - 0.5 * de })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpOptions {
    pub minimize: MinimizeOptions,
    pub iterations: usize,
    pub replicates: usize,
    pub seed: u64,
    pub paper_literal_amp_estimators: bool,
}

impl AmpOptions {
    pub fn new(iterations: usize, replicates: usize, seed: u64) -> Self {
        Self {
            minimize: MinimizeOptions::new(2),
            iterations,
            replicates,
            seed,
            paper_literal_amp_estimators: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmpSummary {
    pub atoms: usize,
    pub q: f64,
    pub q_all_minus: f64,
    pub iterations: usize,
    /// State-evolution `a_M` for the treated branch.
    pub a_m: f64,
    pub measure: ParisiMeasure,
    pub measure_all_minus: ParisiMeasure,
    /// Replicates whose final AMP drift stayed above `1e−6`.
    pub unconverged: usize,
}

fn h_law(law: &CovariateLaw, p: &OutcomeParams) -> Result<Vec<(f64, f64)>> {
    Ok(law
        .projected_law(&p.theta)?
        .into_iter()
        .map(|(h, w)| (h + p.gamma, w))
        .collect())
}

/// AMP estimates of DE and IE on the observed coupling `a = βG`. The
/// minimizers are computed once and shared across replicates.
pub fn amp_effects(
    a: &InteractionMatrix,
    beta: f64,
    law: &CovariateLaw,
    p: &OutcomeParams,
    opts: &AmpOptions,
) -> Result<(EffectEstimate, AmpSummary)> {
    let n = a.n();
    if opts.replicates == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    let hl = h_law(law, p)?;
    let fields = FieldDistribution::treated(p.tau, &hl)?;
    let minus = FieldDistribution::all_minus(p.tau, &hl)?;
    let mu = minimize_parisi(beta, &fields, 0.0, &opts.minimize)?;
    let mu_minus = minimize_parisi(beta, &minus, 0.0, &opts.minimize)?;
    let literal = opts.paper_literal_amp_estimators;
    let runs: Vec<Result<(f64, f64, bool)>> = par_map(opts.replicates, |r| {
        let mut g = rng::seeded(rng::child_seed(opts.seed, r as u64));
        let t_bar = crate::model::uniform_spins(n, &mut g);
        let x_bar = law.sample(n, &mut g)?;
        let h1: Vec<f64> = t_bar.iter().map(|&t| p.tau * f64::from(t)).collect();
        let h2: Vec<f64> = x_bar.linear(&p.theta)?.iter().map(|v| v + p.gamma).collect();
        let h1_minus = vec![-p.tau; n];
        let st = amp_run(a, beta, &h1, &h2, &mu.measure, opts.iterations, None)?;
        let sm = amp_run(a, beta, &h1_minus, &h2, &mu_minus.measure, opts.iterations, None)?;
        let de = amp_de(&st, &t_bar, literal)?;
        let ie = amp_ie(&st, &sm, de, literal)?;
        Ok((de, ie, st.converged && sm.converged))
    });
    let mut des = Vec::with_capacity(opts.replicates);
    let mut ies = Vec::with_capacity(opts.replicates);
    let mut unconverged = 0;
    for r in runs {
        let (de, ie, ok) = r?;
        des.push(de);
        ies.push(ie);
        unconverged += usize::from(!ok);
    }
    let se = state_evolution(beta, &fields, &mu.measure, opts.iterations)?;
    let mut est = EffectEstimate::new("amp", n, mean_and_se(&des), mean_and_se(&ies));
    est.replicates = opts.replicates;
    est.seed = Some(opts.seed);
    est.notes.push(format!("J = {}", opts.minimize.atoms));
    est.notes.push(format!("q = {:.6}", mu.q()));
    est.notes.push(format!("M = {}", opts.iterations));
    if literal {
        est.notes.push("literal AMP displays: DE without factor 2, IE subtracts DE".into());
    }
    if unconverged > 0 {
        est.notes.push(format!("{unconverged} replicates did not converge"));
    }
    let summary = AmpSummary {
        atoms: opts.minimize.atoms,
        q: mu.q(),
        q_all_minus: mu_minus.q(),
        iterations: opts.iterations,
        a_m: *se.a.last().expect("a_0 always present"),
        measure: mu.measure,
        measure_all_minus: mu_minus.measure,
        unconverged,
    };
    Ok((est, summary))
}

/// One AMP problem: coupling, split fields, and the law the fields follow.
#[derive(Debug, Clone)]
pub struct AmpInstance {
    pub a: InteractionMatrix,
    pub beta: f64,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub fields: FieldDistribution,
    pub minimize: MinimizeOptions,
    pub iterations: usize,
}

/// `Δ_k = (1/n)‖m^k − m̃^k‖²` where `m̃` runs on fields shifted by `eps`
/// with the minimizer re-fitted to the shifted law.
pub fn amp_stability_probe(inst: &AmpInstance, eps: f64) -> Result<Vec<f64>> {
    let mu = minimize_parisi(inst.beta, &inst.fields, 0.0, &inst.minimize)?;
    let mu_eps = minimize_parisi(inst.beta, &inst.fields, eps, &inst.minimize)?;
    let shifted: Vec<f64> = inst.h2.iter().map(|v| v + eps).collect();
    let base = amp_run(&inst.a, inst.beta, &inst.h1, &inst.h2, &mu.measure, inst.iterations, None)?;
    let pert = amp_run(&inst.a, inst.beta, &inst.h1, &shifted, &mu_eps.measure, inst.iterations, None)?;
    let nf = inst.a.n() as f64;
    Ok(base
        .iterates
        .iter()
        .zip(&pert.iterates)
        .map(|(u, v)| u.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / nf)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_interaction, InteractionKind};

    #[test]
    fn no_interaction_is_tanh() {
        let n = 50;
        let a = InteractionMatrix::zeros(n);
        let h1: Vec<f64> = (0..n).map(|i| 0.05 * i as f64 - 1.0).collect();
        let h2 = vec![0.2; n];
        let mu = ParisiMeasure::delta(0.3).unwrap();
        let s = amp_run(&a, 0.0, &h1, &h2, &mu, 5, None).unwrap();
        for m in &s.iterates {
            for (i, v) in m.iter().enumerate() {
                assert!((v - (h1[i] + h2[i]).tanh()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_iteration_is_denoised_field() {
        let n = 40;
        let a = make_interaction(&InteractionKind::Gaussian { beta: 0.8 }, n, 3).unwrap();
        let mu = ParisiMeasure::new(vec![0.2, 0.6], vec![0.5, 1.0]).unwrap();
        let h1 = vec![0.4; n];
        let h2: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let s = amp_run(&a, 0.8, &h1, &h2, &mu, 1, None).unwrap();
        let grid = GridParams::for_fields(1.4, 0.8);
        let den = AmpDenoiser::new(&mu, 0.8, &grid).unwrap();
        for i in 0..n {
            assert_eq!(s.w[i], 0.0);
            assert!((s.m[i] - den.g(h1[i] + h2[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn iterate_bounds() {
        let n = 300;
        let a = make_interaction(&InteractionKind::Gaussian { beta: 1.5 }, n, 9).unwrap();
        let mu = ParisiMeasure::new(vec![0.3, 0.8], vec![0.3, 1.0]).unwrap();
        let h1 = vec![0.2; n];
        let s = amp_run(&a, 1.5, &h1, &vec![0.0; n], &mu, 10, None).unwrap();
        for m in &s.iterates {
            assert!(m.iter().all(|v| v.abs() <= 1.0));
        }
        assert!(s.onsager.iter().all(|d| (0.0..=1.0).contains(d)));
    }

    #[test]
    fn narrow_grid_is_widened() {
        let n = 20;
        let a = InteractionMatrix::zeros(n);
        let mu = ParisiMeasure::delta(0.0).unwrap();
        let h1 = vec![3.0; n];
        let tiny = GridParams {
            half_width: 1.0,
            step: 0.01,
            order: 41,
        };
        let s = amp_run(&a, 0.0, &h1, &vec![0.0; n], &mu, 2, Some(tiny)).unwrap();
        assert!((s.m[0] - 3.0f64.tanh()).abs() < 1e-9);
    }

    #[test]
    fn literal_switch_changes_only_scaling() {
        let st = AmpState {
            w: vec![],
            x: vec![],
            m: vec![0.5, -0.1],
            onsager: vec![],
            k: 1,
            iterates: vec![],
            history: vec![],
            converged: true,
        };
        let sm = AmpState {
            m: vec![-0.3, -0.4],
            ..st.clone()
        };
        let t = [1, -1];
        let de = amp_de(&st, &t, false).unwrap();
        let de_lit = amp_de(&st, &t, true).unwrap();
        assert!((de - 0.6).abs() < 1e-15);
        assert!((de_lit - 0.3).abs() < 1e-15);
        // Halving DE and subtracting it whole land on the same IE.
        let ie = amp_ie(&st, &sm, de, false).unwrap();
        let ie_lit = amp_ie(&st, &sm, de_lit, true).unwrap();
        assert!((ie - ie_lit).abs() < 1e-15);
    }
}
