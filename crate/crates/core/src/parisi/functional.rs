use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use super::pde::{solve_parisi_pde, GridParams, ParisiMeasure, PdeSolution};
use super::quadrature::NormalRule;
use crate::error::{Error, Result};
use crate::model::CovariateLaw;

/// One atom of the law of `(T, τT + H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldAtom {
    pub t: f64,
    pub value: f64,
    pub prob: f64,
}

/// Finite law of the treatment and the field `τT + H` it induces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDistribution {
    atoms: Vec<FieldAtom>,
}

impl FieldDistribution {
    pub fn new(atoms: Vec<FieldAtom>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if atoms.is_empty() || atoms.iter().any(|a| !(a.prob >= 0.0 && a.value.is_finite())) {
            return Err(Error::InvalidParameter("field law needs finite atoms".into()));
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "field probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms })
    }

    /// `T` uniform on `±1`, `H` distributed as the `(value, prob)` pairs.
    pub fn treated(tau: f64, h_law: &[(f64, f64)]) -> Result<Self> {
        let atoms = [1.0, -1.0]
            .iter()
            .flat_map(|&t| {
                h_law.iter().map(move |&(h, p)| FieldAtom {
                    t,
                    value: tau * t + h,
                    prob: 0.5 * p,
                })
            })
            .collect();
        Self::new(atoms)
    }

    /// `T ≡ −1`.
    pub fn all_minus(tau: f64, h_law: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            h_law
                .iter()
                .map(|&(h, p)| FieldAtom {
                    t: -1.0,
                    value: -tau + h,
                    prob: p,
                })
                .collect(),
        )
    }

    /// Treated branch with `H = θᵀX`, `X ~ law`.
    pub fn from_law(law: &CovariateLaw, theta: &[f64], tau: f64) -> Result<Self> {
        Self::treated(tau, &law.projected_law(theta)?)
    }

    pub fn atoms(&self) -> &[FieldAtom] {
        &self.atoms
    }

    pub fn max_abs(&self) -> f64 {
        self.atoms.iter().map(|a| a.value.abs()).fold(0.0, f64::max)
    }

    pub fn expect(&self, mut f: impl FnMut(&FieldAtom) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.prob * f(a)).sum()
    }
}

fn grid_for(fields: &FieldDistribution, gamma: f64, beta: f64, grid: Option<GridParams>) -> Result<GridParams> {
    let max_field = fields.max_abs() + gamma.abs();
    let g = grid.unwrap_or_else(|| GridParams::for_fields(max_field, beta));
    g.check_covers(max_field, beta)?;
    Ok(g)
}

fn functional_on(sol: &PdeSolution, mu: &ParisiMeasure, fields: &FieldDistribution, gamma: f64) -> f64 {
    let s = sol.initial();
    fields.expect(|a| s.eval(a.value + gamma).0) - 0.5 * sol.beta * sol.beta * mu.penalty_integral()
}

/// `E Φ_μ(0, τT + H + γ) − (β²/2)∫ t μ[0,t] dt`.
pub fn parisi_functional(
    mu: &ParisiMeasure,
    beta: f64,
    fields: &FieldDistribution,
    gamma: f64,
) -> Result<f64> {
    let grid = grid_for(fields, gamma, beta, None)?;
    let sol = solve_parisi_pde(mu, beta, &grid)?;
    Ok(functional_on(&sol, mu, fields, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Atom budget `J`.
    pub atoms: usize,
    pub max_iters: u64,
    pub tolerance: f64,
    pub grid: Option<GridParams>,
}

impl MinimizeOptions {
    pub fn new(atoms: usize) -> Self {
        Self {
            atoms,
            max_iters: 400,
            tolerance: 1e-10,
            grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParisiSolution {
    pub measure: ParisiMeasure,
    pub value: f64,
    /// `false` when the simplex hit the iteration cap.
    pub converged: bool,
    pub iterations: u64,
    /// `|q − E (∂_xΦ(q, F + β√q Z))²|` at `q = inf supp μ`; zero at a
    /// stationary point.
    pub stationarity: f64,
}

impl ParisiSolution {
    pub fn q(&self) -> f64 {
        self.measure.inf_support()
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn softmax_with_zero(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(0.0, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    e.push((-top).exp());
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Unconstrained parameters to a `J`-atom measure. `J = 1` is `q = σ(u)`;
/// otherwise `J` logits give the gaps between atoms (with one slack gap up
/// to 1) and `J − 1` logits give the mass increments.
fn decode(params: &[f64], j: usize) -> Option<ParisiMeasure> {
    if j == 1 {
        return ParisiMeasure::delta(sigmoid(params[0])).ok();
    }
    let gaps = softmax_with_zero(&params[..j]);
    let mut atoms = Vec::with_capacity(j);
    let mut acc = 0.0;
    for g in &gaps[..j] {
        acc += g;
        atoms.push(acc.min(1.0));
    }
    let incs = softmax_with_zero(&params[j..]);
    let mut masses = Vec::with_capacity(j);
    let mut acc = 0.0;
    for inc in &incs[..j - 1] {
        acc += inc;
        masses.push(acc.min(1.0));
    }
    masses.push(1.0);
    ParisiMeasure::new(atoms, masses).ok()
}

struct Objective<'a> {
    beta: f64,
    fields: &'a FieldDistribution,
    gamma: f64,
    grid: GridParams,
    j: usize,
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let Some(mu) = decode(p, self.j) else {
            return Ok(f64::INFINITY);
        };
        match solve_parisi_pde(&mu, self.beta, &self.grid) {
            Ok(sol) => Ok(functional_on(&sol, &mu, self.fields, self.gamma)),
            Err(_) => Ok(f64::INFINITY),
        }
    }
}

fn stationarity(sol: &PdeSolution, mu: &ParisiMeasure, fields: &FieldDistribution, gamma: f64) -> Result<f64> {
    let q = mu.inf_support();
    let s = sol.slice(q)?;
    let rule = NormalRule::new(41)?;
    let sd = sol.beta * q.sqrt();
    let second = fields.expect(|a| rule.expect(|z| s.eval(a.value + gamma + sd * z).1.powi(2)));
    Ok((q - second).abs())
}

fn finish(
    mu: ParisiMeasure,
    beta: f64,
    fields: &FieldDistribution,
    gamma: f64,
    grid: &GridParams,
    converged: bool,
    iterations: u64,
) -> Result<ParisiSolution> {
    // Replica-symmetric clamp: a vanishing first atom is read as q = 0.
    let mu = if mu.inf_support() < 1e-4 && mu.inf_support() > 0.0 {
        mu.with_atom(0, 0.0)?
    } else {
        mu
    };
    let sol = solve_parisi_pde(&mu, beta, grid)?;
    Ok(ParisiSolution {
        value: functional_on(&sol, &mu, fields, gamma),
        stationarity: stationarity(&sol, &mu, fields, gamma)?,
        measure: mu,
        converged,
        iterations,
    })
}

fn minimize_exact_j(
    beta: f64,
    fields: &FieldDistribution,
    gamma: f64,
    opts: &MinimizeOptions,
    grid: &GridParams,
    j: usize,
) -> Result<ParisiSolution> {
    let dim = if j == 1 { 1 } else { 2 * j - 1 };
    let start = vec![0.0; dim];
    let mut simplex = vec![start.clone()];
    for k in 0..dim {
        let mut v = start.clone();
        v[k] += 1.0;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(opts.tolerance)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let problem = Objective {
        beta,
        fields,
        gamma,
        grid: *grid,
        j,
    };
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(opts.max_iters))
        .run()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    let state = res.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::Numerical("optimizer returned no iterate".into()))?;
    let iterations = state.get_iter();
    let converged = iterations < opts.max_iters;
    let mu = decode(&best, j).ok_or_else(|| Error::Numerical("optimizer left the measure family".into()))?;
    finish(mu, beta, fields, gamma, grid, converged, iterations)
}

/// Best `J`-atom measure, never worse than the best `(J−1)`-atom one.
pub fn minimize_parisi(
    beta: f64,
    fields: &FieldDistribution,
    gamma: f64,
    opts: &MinimizeOptions,
) -> Result<ParisiSolution> {
    if opts.atoms == 0 {
        return Err(Error::InvalidParameter("atom budget must be at least 1".into()));
    }
    let grid = grid_for(fields, gamma, beta, opts.grid)?;
    if beta == 0.0 {
        // Φ(0,·) = log 2cosh for every μ; the functional is constant.
        return finish(ParisiMeasure::delta(0.0)?, beta, fields, gamma, &grid, true, 0);
    }
    let mut best = minimize_exact_j(beta, fields, gamma, opts, &grid, 1)?;
    for j in 2..=opts.atoms {
        let cand = minimize_exact_j(beta, fields, gamma, opts, &grid, j)?;
        if cand.value < best.value {
            best = cand;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitingEffects {
    pub de: f64,
    pub ie: f64,
    /// Minimizer for uniform treatments.
    pub treated: ParisiSolution,
    /// Minimizer for the all-minus branch.
    pub all_minus: ParisiSolution,
}

/// `DE = 2E[T ∂_xΦ_μ*(0, τT+H)]`,
/// `IE = E ∂_xΦ_μ*(0, τT+H) − E ∂_xΦ_μ̂*(0, −τ+H) − DE/2`.
pub fn limiting_effects(
    beta: f64,
    tau: f64,
    h_law: &[(f64, f64)],
    opts: &MinimizeOptions,
) -> Result<LimitingEffects> {
    let fields = FieldDistribution::treated(tau, h_law)?;
    let minus = FieldDistribution::all_minus(tau, h_law)?;
    let treated = minimize_parisi(beta, &fields, 0.0, opts)?;
    let all_minus = minimize_parisi(beta, &minus, 0.0, opts)?;
    let g = grid_for(&fields, 0.0, beta, opts.grid)?;
    let sol = solve_parisi_pde(&treated.measure, beta, &g)?;
    let sol_minus = solve_parisi_pde(&all_minus.measure, beta, &g)?;
    let d = |a: &FieldAtom| sol.initial().eval(a.value).1;
    let de = 2.0 * fields.expect(|a| a.t * d(a));
    let mean = fields.expect(d);
    let mean_minus = minus.expect(|a| sol_minus.initial().eval(a.value).1);
    Ok(LimitingEffects {
        de,
        ie: mean - mean_minus - 0.5 * de,
        treated,
        all_minus,
    })
}
