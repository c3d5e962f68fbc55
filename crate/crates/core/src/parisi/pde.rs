use serde::{Deserialize, Serialize};

use super::quadrature::NormalRule;
use crate::error::{Error, Result};
use crate::model::log2cosh;

/// Atomic step measure on `[0,1]`: `μ[0,t] = masses[j]` for
/// `t ∈ [atoms[j], atoms[j+1])`, zero below the first atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParisiMeasure {
    atoms: Vec<f64>,
    masses: Vec<f64>,
}

impl ParisiMeasure {
    pub fn new(atoms: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != masses.len() {
            return Err(Error::InvalidParameter(
                "measure needs matching, non-empty atom and mass lists".into(),
            ));
        }
        if atoms.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidParameter("atoms must lie in [0,1]".into()));
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("atoms must be strictly increasing".into()));
        }
        if masses.iter().any(|m| !(0.0..=1.0).contains(m)) || masses.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidParameter(
                "cumulative masses must be nondecreasing in [0,1]".into(),
            ));
        }
        if masses[masses.len() - 1] != 1.0 {
            return Err(Error::InvalidParameter("final cumulative mass must be 1".into()));
        }
        Ok(Self { atoms, masses })
    }

    /// Point mass at `q`.
    pub fn delta(q: f64) -> Result<Self> {
        Self::new(vec![q], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `inf supp μ`.
    pub fn inf_support(&self) -> f64 {
        self.atoms[0]
    }

    /// `μ[0,t]`.
    pub fn cdf(&self, t: f64) -> f64 {
        match self.atoms.iter().rposition(|&q| q <= t) {
            Some(j) => self.masses[j],
            None => 0.0,
        }
    }

    /// `∫₀¹ t μ[0,t] dt`.
    pub fn penalty_integral(&self) -> f64 {
        (0..self.atoms.len())
            .map(|j| {
                let hi = self.atoms.get(j + 1).copied().unwrap_or(1.0);
                self.masses[j] * (hi * hi - self.atoms[j] * self.atoms[j]) / 2.0
            })
            .sum()
    }

    /// Copy with atom `j` moved to `q`.
    pub fn with_atom(&self, j: usize, q: f64) -> Result<Self> {
        let mut atoms = self.atoms.clone();
        atoms[j] = q;
        Self::new(atoms, self.masses.clone())
    }
}

/// Spatial grid and quadrature order for the PDE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub half_width: f64,
    pub step: f64,
    pub order: usize,
}

impl GridParams {
    /// `X = 12 + max|field| + 4β`, spacing 0.01, 41 nodes.
    pub fn for_fields(max_field: f64, beta: f64) -> Self {
        Self {
            half_width: 12.0 + max_field + 4.0 * beta,
            step: 0.01,
            order: 41,
        }
    }

    /// Errors when fields plus three diffusion widths leave the grid.
    pub fn check_covers(&self, max_field: f64, beta: f64) -> Result<()> {
        let required = max_field + 3.0 * beta;
        if self.half_width < required {
            return Err(Error::GridTooSmall {
                half_width: self.half_width,
                required,
            });
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.half_width > self.step && self.half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bad grid: half width {}, step {}",
                self.half_width, self.step
            )));
        }
        Ok(())
    }
}

/// `Φ(t,·)`, `∂_xΦ(t,·)`, `∂_xxΦ(t,·)` on the grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSlice {
    pub time: f64,
    x0: f64,
    step: f64,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub ddphi: Vec<f64>,
}

impl PdeSlice {
    pub fn half_width(&self) -> f64 {
        -self.x0
    }

    /// Cubic Hermite for `Φ` and `∂_xΦ`, linear for `∂_xxΦ`; linear
    /// extrapolation outside the grid. Derivatives are clamped to their
    /// known ranges.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let last = self.phi.len() - 1;
        let u = (x - self.x0) / self.step;
        if u <= 0.0 {
            let dx = x - self.x0;
            return (
                self.phi[0] + self.dphi[0] * dx,
                (self.dphi[0] + self.ddphi[0] * dx).clamp(-1.0, 1.0),
                self.ddphi[0],
            );
        }
        if u >= last as f64 {
            let dx = x - (self.x0 + last as f64 * self.step);
            return (
                self.phi[last] + self.dphi[last] * dx,
                (self.dphi[last] + self.ddphi[last] * dx).clamp(-1.0, 1.0),
                self.ddphi[last],
            );
        }
        let i = (u.floor() as usize).min(last - 1);
        let s = u - i as f64;
        let h = self.step;
        let hermite = |f0: f64, f1: f64, d0: f64, d1: f64| {
            let s2 = s * s;
            let s3 = s2 * s;
            (2.0 * s3 - 3.0 * s2 + 1.0) * f0
                + (s3 - 2.0 * s2 + s) * h * d0
                + (-2.0 * s3 + 3.0 * s2) * f1
                + (s3 - s2) * h * d1
        };
        let phi = hermite(self.phi[i], self.phi[i + 1], self.dphi[i], self.dphi[i + 1]);
        let dphi = hermite(self.dphi[i], self.dphi[i + 1], self.ddphi[i], self.ddphi[i + 1]);
        let ddphi = (1.0 - s) * self.ddphi[i] + s * self.ddphi[i + 1];
        (phi, dphi.clamp(-1.0, 1.0), ddphi.clamp(0.0, 1.0))
    }

    pub fn x_grid(&self) -> Vec<f64> {
        (0..self.phi.len()).map(|i| self.x0 + i as f64 * self.step).collect()
    }
}

/// Solution at `t = 0`, at every atom and at `t = 1`, in increasing time.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeSolution {
    pub beta: f64,
    pub grid: GridParams,
    slices: Vec<PdeSlice>,
}

impl PdeSolution {
    pub fn slices(&self) -> &[PdeSlice] {
        &self.slices
    }

    pub fn times(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.time).collect()
    }

    /// The stored slice at time `t` (0, 1, or an atom).
    pub fn slice(&self, t: f64) -> Result<&PdeSlice> {
        self.slices
            .iter()
            .find(|s| (s.time - t).abs() < 1e-12)
            .ok_or_else(|| Error::InvalidParameter(format!("no stored PDE slice at t = {t}")))
    }

    pub fn initial(&self) -> &PdeSlice {
        &self.slices[0]
    }

    pub fn x_grid(&self) -> Vec<f64> {
        self.slices[0].x_grid()
    }
}

fn sech2(x: f64) -> f64 {
    let t = x.tanh();
    1.0 - t * t
}

/// One backward step over an interval of length `dt` with constant mass `m`:
/// `Φ(s,x) = (1/m) log E exp(mΦ(t, x + β√dt Z))`, or the plain expectation at
/// `m = 0`, with derivatives from the tilted measure.
fn step<F>(next: F, x: f64, sigma: f64, m: f64, rule: &NormalRule) -> (f64, f64, f64)
where
    F: Fn(f64) -> (f64, f64, f64),
{
    let k = rule.nodes.len();
    let mut vals = [(0.0, 0.0, 0.0); 64];
    let mut vals_heap;
    let vals: &mut [(f64, f64, f64)] = if k <= 64 {
        &mut vals[..k]
    } else {
        vals_heap = vec![(0.0, 0.0, 0.0); k];
        &mut vals_heap
    };
    for (v, &z) in vals.iter_mut().zip(&rule.nodes) {
        *v = next(x + sigma * z);
    }
    if m == 0.0 {
        let mut out = (0.0, 0.0, 0.0);
        for (v, &w) in vals.iter().zip(&rule.weights) {
            out.0 += w * v.0;
            out.1 += w * v.1;
            out.2 += w * v.2;
        }
        return out;
    }
    let top = vals.iter().map(|v| m * v.0).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let (mut d1, mut d1sq, mut d2) = (0.0, 0.0, 0.0);
    for (v, &w) in vals.iter().zip(&rule.weights) {
        let om = w * (m * v.0 - top).exp();
        total += om;
        d1 += om * v.1;
        d1sq += om * v.1 * v.1;
        d2 += om * v.2;
    }
    let phi = (top + total.ln()) / m;
    let d1 = d1 / total;
    let d2 = d2 / total + m * (d1sq / total - d1 * d1);
    (phi, d1, d2)
}

pub fn solve_parisi_pde(mu: &ParisiMeasure, beta: f64, grid: &GridParams) -> Result<PdeSolution> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("beta must be non-negative, got {beta}")));
    }
    grid.validate()?;
    let rule = NormalRule::new(grid.order)?;
    let points = (2.0 * grid.half_width / grid.step).round() as usize + 1;
    let x0 = -grid.half_width;
    let xs: Vec<f64> = (0..points).map(|i| x0 + i as f64 * grid.step).collect();

    // Breakpoints 0 = b_0 < … < b_L = 1 with μ constant on each gap.
    let mut breaks = vec![0.0];
    breaks.extend(mu.atoms().iter().copied().filter(|&q| q > 0.0 && q < 1.0));
    breaks.push(1.0);

    let terminal = PdeSlice {
        time: 1.0,
        x0,
        step: grid.step,
        phi: xs.iter().map(|&x| log2cosh(x)).collect(),
        dphi: xs.iter().map(|&x| x.tanh()).collect(),
        ddphi: xs.iter().map(|&x| sech2(x)).collect(),
    };
    let mut slices = vec![terminal];
    for w in breaks.windows(2).rev() {
        let (s, t) = (w[0], w[1]);
        let m = mu.cdf(s);
        let sigma = beta * (t - s).sqrt();
        let prev = slices.last().expect("terminal slice");
        let first = prev.time == 1.0;
        let mut phi = Vec::with_capacity(points);
        let mut dphi = Vec::with_capacity(points);
        let mut ddphi = Vec::with_capacity(points);
        for &x in &xs {
            let (a, b, c) = if first {
                step(|y| (log2cosh(y), y.tanh(), sech2(y)), x, sigma, m, &rule)
            } else {
                step(|y| prev.eval(y), x, sigma, m, &rule)
            };
            phi.push(a);
            dphi.push(b.clamp(-1.0, 1.0));
            ddphi.push(c.clamp(0.0, 1.0));
        }
        slices.push(PdeSlice {
            time: s,
            x0,
            step: grid.step,
            phi,
            dphi,
            ddphi,
        });
    }
    slices.reverse();
    Ok(PdeSolution {
        beta,
        grid: *grid,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridParams {
        GridParams::for_fields(1.0, 1.0)
    }

    #[test]
    fn terminal_condition_exact() {
        let sol = solve_parisi_pde(&ParisiMeasure::delta(0.5).unwrap(), 1.0, &grid()).unwrap();
        let last = sol.slice(1.0).unwrap();
        let err = last
            .x_grid()
            .iter()
            .zip(&last.phi)
            .map(|(x, p)| (p - log2cosh(*x)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12);
    }

    #[test]
    fn delta_one_is_gaussian_smoothing() {
        let beta = 0.9;
        let sol = solve_parisi_pde(&ParisiMeasure::delta(1.0).unwrap(), beta, &grid()).unwrap();
        let fine = NormalRule::new(120).unwrap();
        for &x in &[0.0, 0.37, -1.2] {
            let direct = fine.expect(|z| log2cosh(x + beta * z));
            assert!((sol.initial().eval(x).0 - direct).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn zero_beta_keeps_terminal() {
        let mu = ParisiMeasure::new(vec![0.2, 0.7], vec![0.4, 1.0]).unwrap();
        let sol = solve_parisi_pde(&mu, 0.0, &grid()).unwrap();
        for &x in &[0.0, 0.5, -2.25] {
            assert!((sol.initial().eval(x).0 - log2cosh(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn replica_symmetric_closed_form() {
        // δ_q: Φ(q,x) = log 2cosh x + β²(1−q)/2.
        let (beta, q) = (1.3, 0.4);
        let sol = solve_parisi_pde(&ParisiMeasure::delta(q).unwrap(), beta, &grid()).unwrap();
        let s = sol.slice(q).unwrap();
        for &x in &[0.0, 0.8, -3.0] {
            let want = log2cosh(x) + beta * beta * (1.0 - q) / 2.0;
            assert!((s.eval(x).0 - want).abs() < 1e-8);
            assert!((s.eval(x).1 - x.tanh()).abs() < 1e-7);
        }
    }

    #[test]
    fn derivative_bounds_hold() {
        let mu = ParisiMeasure::new(vec![0.1, 0.5, 0.9], vec![0.2, 0.6, 1.0]).unwrap();
        let sol = solve_parisi_pde(&mu, 2.0, &GridParams::for_fields(2.0, 2.0)).unwrap();
        for s in sol.slices() {
            assert!(s.dphi.iter().all(|d| d.abs() <= 1.0));
            assert!(s.ddphi.iter().all(|d| (0.0..=1.0).contains(d)));
        }
    }

    #[test]
    fn martingale_identity() {
        // E ∂_xΦ(q, x + β√q Z) = ∂_xΦ(0, x) when μ vanishes on [0,q).
        let (beta, q) = (1.1, 0.35);
        let mu = ParisiMeasure::new(vec![q, 0.8], vec![0.5, 1.0]).unwrap();
        let sol = solve_parisi_pde(&mu, beta, &grid()).unwrap();
        let at_q = sol.slice(q).unwrap();
        let rule = NormalRule::new(41).unwrap();
        for &x in &[0.0, 0.6, -1.4] {
            let lhs = rule.expect(|z| at_q.eval(x + beta * q.sqrt() * z).1);
            assert!((lhs - sol.initial().eval(x).1).abs() < 1e-6);
        }
    }

    #[test]
    fn measure_continuity() {
        // Lipschitz constant in the atom location, fitted once: observed
        // ratios stay below 1 at β = 1; frozen at 2.
        const C: f64 = 2.0;
        let mu = ParisiMeasure::new(vec![0.3, 0.7], vec![0.4, 1.0]).unwrap();
        let nu = mu.with_atom(0, 0.301).unwrap();
        let g = grid();
        let a = solve_parisi_pde(&mu, 1.0, &g).unwrap();
        let b = solve_parisi_pde(&nu, 1.0, &g).unwrap();
        let sup = |f: fn(&PdeSlice) -> &Vec<f64>| {
            f(a.initial())
                .iter()
                .zip(f(b.initial()))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        assert!(sup(|s| &s.phi) <= C * 1e-3);
        assert!(sup(|s| &s.dphi) <= C * 1e-3);
        assert!(sup(|s| &s.ddphi) <= C * 1e-3);
    }

    #[test]
    fn measure_validation() {
        assert!(ParisiMeasure::new(vec![0.5, 0.4], vec![0.5, 1.0]).is_err());
        assert!(ParisiMeasure::new(vec![0.2, 0.4], vec![0.5, 0.9]).is_err());
        assert!(ParisiMeasure::new(vec![0.2, 0.4], vec![0.6, 0.5]).is_err());
        let mu = ParisiMeasure::new(vec![0.2, 0.4], vec![0.5, 1.0]).unwrap();
        assert_eq!(mu.cdf(0.1), 0.0);
        assert_eq!(mu.cdf(0.3), 0.5);
        assert_eq!(mu.cdf(1.0), 1.0);
        let want = 0.5 * (0.16 - 0.04) / 2.0 + (1.0 - 0.16) / 2.0;
        assert!((mu.penalty_integral() - want).abs() < 1e-15);
        assert!(GridParams::for_fields(1.0, 1.0).check_covers(20.0, 1.0).is_err());
    }
}
