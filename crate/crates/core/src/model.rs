//! Outcome and propensity Gibbs measures, their fields, and synthetic
//! generators for interaction matrices, covariates and treatments.
//!
//! The outcome law conditional on treatments `t` and covariates `x` is
//!
//! ```text
//! P(y | t, x) ∝ exp( ½ yᵀA y + Σ_i y_i (τ t_i + θᵀx_i + γ) ),   y ∈ {±1}ⁿ
//! ```
//!
//! and treatments follow the analogous law with coupling `M` and field
//! `γ₀ᵀx_i`. Interaction matrices always carry a zero diagonal, so the local
//! field of site `i` is exactly `(A y)_i` plus the external field.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glauber::HeatBath;
use crate::rng;

/// Spin configurations are stored as `i8` with entries exactly ±1.
pub type Spin = i8;

pub fn check_spins(v: &[Spin]) -> Result<()> {
    match v.iter().position(|&s| s != 1 && s != -1) {
        Some(index) => Err(Error::NotASpin {
            index,
            value: v[index],
        }),
        None => Ok(()),
    }
}

/// `log(2cosh x)` without overflow.
pub fn log2cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Symmetric coupling matrix with zero diagonal, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl InteractionMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        check_len("interaction entries", n * n, entries.len())?;
        for i in 0..n {
            let d = entries[i * n + i];
            if d != 0.0 {
                return Err(Error::NonZeroDiagonal { i, value: d });
            }
            for j in (i + 1)..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if a != b || !a.is_finite() {
                    return Err(Error::NotSymmetric { i, j, a, b });
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// Builds a matrix from the strict upper triangle `f(i, j)`, `i < j`.
    pub fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Self { n, entries }
    }

    /// Symmetrizes and zeroes the diagonal of an arbitrary square array.
    pub fn from_dense_lossy(n: usize, entries: &[f64]) -> Result<Self> {
        check_len("interaction entries", n * n, entries.len())?;
        Ok(Self::from_upper(n, |i, j| {
            0.5 * (entries[i * n + j] + entries[j * n + i])
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn spin_matvec(&self, y: &[Spin]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(y)
                    .map(|(a, &s)| a * f64::from(s))
                    .sum()
            })
            .collect()
    }

    /// `max_{i,j} |n · A(i,j)|`, the dense-scaling statistic.
    pub fn max_scaled_entry(&self) -> f64 {
        let n = self.n as f64;
        self.entries.iter().fold(0.0_f64, |m, a| m.max((n * a).abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&a| a == 0.0)
    }

    pub fn trace(&self) -> f64 {
        0.0
    }

    /// Entrywise `self - other`.
    pub fn difference(&self, other: &InteractionMatrix) -> Result<Vec<f64>> {
        check_len("matrix difference", self.n, other.n)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect())
    }

    pub fn add_scaled(&self, other: &InteractionMatrix, scale: f64) -> Result<Self> {
        check_len("matrix sum", self.n, other.n)?;
        Ok(Self {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + scale * b)
                .collect(),
        })
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_upper(self.n, |i, j| self.get(perm[i], perm[j]))
    }

    /// Text form: `n <int>` then `n` rows of `n` decimal floats.
    pub fn to_text(&self) -> String {
        let mut out = format!("n {}\n", self.n);
        for i in 0..self.n {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty matrix file".into(),
        })?;
        let mut head = header.split_whitespace();
        let n = match (head.next(), head.next(), head.next()) {
            (Some("n"), Some(v), None) => v.parse::<usize>().map_err(|e| Error::Parse {
                line: hl + 1,
                message: format!("bad population size: {e}"),
            })?,
            _ => {
                return Err(Error::Parse {
                    line: hl + 1,
                    message: "expected header `n <int>`".into(),
                })
            }
        };
        let mut entries = Vec::with_capacity(n * n);
        let mut rows = 0;
        for (ln, line) in lines {
            if rows == n {
                return Err(Error::Parse {
                    line: ln + 1,
                    message: "more rows than declared".into(),
                });
            }
            let before = entries.len();
            for tok in line.split_whitespace() {
                entries.push(tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: ln + 1,
                    message: format!("bad entry `{tok}`: {e}"),
                })?);
            }
            if entries.len() - before != n {
                return Err(Error::Parse {
                    line: ln + 1,
                    message: format!("expected {n} entries, found {}", entries.len() - before),
                });
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Parse {
                line: rows + 2,
                message: format!("expected {n} rows, found {rows}"),
            });
        }
        Self::new(n, entries)
    }
}

/// Generator families for interaction matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InteractionKind {
    Zero,
    /// `(β/n)(11ᵀ − I)`.
    CurieWeiss { beta: f64 },
    /// `α/n` within the two halves, `β/n` across.
    BlockModel { alpha: f64, beta: f64 },
    /// `(β/n)·1(i ~ j)` on G(n, p).
    ErdosRenyi { beta: f64, p: f64 },
    /// `(β/d)·1(i ~ j)` on the circulant `d`-regular ring.
    RegularGraph { beta: f64, degree: usize },
    /// `βG` with `G(i,j) ~ N(0, 1/n)` above the diagonal.
    Gaussian { beta: f64 },
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be finite and non-negative, got {v}"
        )));
    }
    Ok(())
}

pub fn make_interaction(kind: &InteractionKind, n: usize, seed: u64) -> Result<InteractionMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("population size must be positive".into()));
    }
    let nf = n as f64;
    match *kind {
        InteractionKind::Zero => Ok(InteractionMatrix::zeros(n)),
        InteractionKind::CurieWeiss { beta } => {
            non_negative("beta", beta)?;
            Ok(InteractionMatrix::from_upper(n, |_, _| beta / nf))
        }
        InteractionKind::BlockModel { alpha, beta } => {
            non_negative("alpha", alpha)?;
            non_negative("beta", beta)?;
            let half = n / 2;
            Ok(InteractionMatrix::from_upper(n, |i, j| {
                if (i < half) == (j < half) {
                    alpha / nf
                } else {
                    beta / nf
                }
            }))
        }
        InteractionKind::ErdosRenyi { beta, p } => {
            non_negative("beta", beta)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "edge probability must lie in [0,1], got {p}"
                )));
            }
            let mut rng = rng::seeded(seed);
            Ok(InteractionMatrix::from_upper(n, |_, _| {
                if rng.random::<f64>() < p {
                    beta / nf
                } else {
                    0.0
                }
            }))
        }
        InteractionKind::RegularGraph { beta, degree } => {
            non_negative("beta", beta)?;
            if degree == 0 || degree >= n || (degree % 2 == 1 && n % 2 == 1) {
                return Err(Error::InvalidParameter(format!(
                    "no circulant {degree}-regular graph on {n} vertices"
                )));
            }
            let reach = degree / 2;
            let opposite = degree % 2 == 1;
            let w = beta / degree as f64;
            Ok(InteractionMatrix::from_upper(n, |i, j| {
                let d = (j - i).min(n - (j - i));
                if d <= reach || (opposite && 2 * d == n) {
                    w
                } else {
                    0.0
                }
            }))
        }
        InteractionKind::Gaussian { beta } => {
            non_negative("beta", beta)?;
            let normal = Normal::new(0.0, 1.0 / nf.sqrt())
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            let mut rng = rng::seeded(seed);
            Ok(InteractionMatrix::from_upper(n, |_, _| {
                beta * normal.sample(&mut rng)
            }))
        }
    }
}

/// Box bounds on the outcome parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub tau: f64,
    pub theta: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            tau: 5.0,
            theta: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeParams {
    pub tau: f64,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
}

impl OutcomeParams {
    pub fn new(tau: f64, theta: Vec<f64>) -> Self {
        Self {
            tau,
            theta,
            gamma: 0.0,
        }
    }

    pub fn tau_only(tau: f64) -> Self {
        Self::new(tau, Vec::new())
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_tau(&self, tau: f64) -> Self {
        Self {
            tau,
            ..self.clone()
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            tau: -self.tau,
            theta: self.theta.iter().map(|t| -t).collect(),
            gamma: -self.gamma,
        }
    }

    pub fn validate(&self, bounds: &ParamBounds) -> Result<()> {
        if !(self.tau.abs() <= bounds.tau) {
            return Err(Error::InvalidParameter(format!(
                "|tau| = {} exceeds bound {}",
                self.tau.abs(),
                bounds.tau
            )));
        }
        if let Some(t) = self.theta.iter().find(|t| !(t.abs() <= bounds.theta)) {
            return Err(Error::InvalidParameter(format!(
                "|theta_j| = {} exceeds bound {}",
                t.abs(),
                bounds.theta
            )));
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityParams {
    pub coupling: InteractionMatrix,
    pub gamma0: Vec<f64>,
}

/// Finite support `{h_1..h_m}` together with each row's support index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub points: Vec<Vec<f64>>,
    pub index: Vec<usize>,
}

/// `n` covariate rows in `[-1,1]^d`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
    support: Option<Support>,
}

impl CovariateMatrix {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        check_len("covariate entries", n * d, data.len())?;
        if let Some(v) = data.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "covariate entry {v} outside [-1, 1]"
            )));
        }
        Ok(Self {
            n,
            d,
            data,
            support: None,
        })
    }

    /// Rows drawn from a finite support, given as indices into `points`.
    pub fn from_support(points: Vec<Vec<f64>>, index: Vec<usize>) -> Result<Self> {
        let d = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidParameter("ragged support points".into()));
        }
        let n = index.len();
        let mut data = Vec::with_capacity(n * d);
        for (row, &k) in index.iter().enumerate() {
            let p = points.get(k).ok_or(Error::OutsideSupport { row })?;
            data.extend_from_slice(p);
        }
        let mut m = Self::new(n, d, data)?;
        m.support = Some(Support { points, index });
        Ok(m)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            d: 0,
            data: Vec::new(),
            support: Some(Support {
                points: vec![Vec::new()],
                index: vec![0; n],
            }),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn support(&self) -> Option<&Support> {
        self.support.as_ref()
    }

    /// `θᵀx_i` for every row.
    pub fn linear(&self, theta: &[f64]) -> Result<Vec<f64>> {
        check_len("theta", self.d, theta.len())?;
        Ok((0..self.n)
            .map(|i| self.row(i).iter().zip(theta).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        let support = self.support.as_ref().map(|s| Support {
            points: s.points.clone(),
            index: perm.iter().map(|&p| s.index[p]).collect(),
        });
        Self {
            n: self.n,
            d: self.d,
            data,
            support,
        }
    }
}

/// Law of a single covariate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateLaw {
    /// No covariates (`d = 0`).
    None,
    /// Independent coordinates, each uniform on `levels` equispaced points of `[-1,1]`.
    UniformGrid { d: usize, levels: usize },
    /// Independent ±1 coordinates.
    Rademacher { d: usize },
    Finite {
        support: Vec<Vec<f64>>,
        probs: Vec<f64>,
    },
    /// Continuous uniform on `[-1,1]^d`.
    Uniform { d: usize },
}

fn grid_levels(levels: usize) -> Vec<f64> {
    if levels == 1 {
        return vec![0.0];
    }
    (0..levels)
        .map(|k| -1.0 + 2.0 * k as f64 / (levels - 1) as f64)
        .collect()
}

impl CovariateLaw {
    pub fn dim(&self) -> usize {
        match self {
            CovariateLaw::None => 0,
            CovariateLaw::UniformGrid { d, .. }
            | CovariateLaw::Rademacher { d }
            | CovariateLaw::Uniform { d } => *d,
            CovariateLaw::Finite { support, .. } => support.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CovariateLaw::UniformGrid { levels, .. } if *levels == 0 => Err(
                Error::InvalidParameter("uniform grid needs at least one level".into()),
            ),
            CovariateLaw::Finite { support, probs } => {
                if support.is_empty() || support.len() != probs.len() {
                    return Err(Error::InvalidParameter(
                        "finite law needs one probability per support point".into(),
                    ));
                }
                let d = support[0].len();
                if support.iter().any(|p| p.len() != d || p.iter().any(|v| !(v.abs() <= 1.0))) {
                    return Err(Error::InvalidParameter(
                        "support points must share a dimension and lie in [-1,1]".into(),
                    ));
                }
                if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter("probabilities must sum to 1".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Support points and probabilities, or `None` for the continuous law.
    pub fn finite_support(&self) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
        match self {
            CovariateLaw::None => Some((vec![Vec::new()], vec![1.0])),
            CovariateLaw::UniformGrid { d, levels } => {
                Some(product_support(&grid_levels(*levels), *d))
            }
            CovariateLaw::Rademacher { d } => Some(product_support(&[-1.0, 1.0], *d)),
            CovariateLaw::Finite { support, probs } => Some((support.clone(), probs.clone())),
            CovariateLaw::Uniform { .. } => None,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut rng::Rng) -> Result<CovariateMatrix> {
        self.validate()?;
        match self {
            CovariateLaw::None => Ok(CovariateMatrix::empty(n)),
            CovariateLaw::Uniform { d } => {
                let data = (0..n * d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                CovariateMatrix::new(n, *d, data)
            }
            CovariateLaw::UniformGrid { d, levels } => {
                let index = (0..n)
                    .map(|_| {
                        (0..*d).fold(0usize, |acc, _| acc * levels + rng.random_range(0..*levels))
                    })
                    .collect();
                CovariateMatrix::from_support(product_support(&grid_levels(*levels), *d).0, index)
            }
            CovariateLaw::Rademacher { d } => {
                let index = (0..n)
                    .map(|_| (0..*d).fold(0usize, |acc, _| acc * 2 + rng.random_range(0..2)))
                    .collect();
                CovariateMatrix::from_support(product_support(&[-1.0, 1.0], *d).0, index)
            }
            CovariateLaw::Finite { support, probs } => {
                let dist = WeightedIndex::new(probs)
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let index = (0..n).map(|_| dist.sample(rng)).collect();
                CovariateMatrix::from_support(support.clone(), index)
            }
        }
    }

    /// Law of `θᵀX` as `(value, probability)` pairs. The continuous uniform
    /// law is replaced by a tensor Gauss–Legendre rule.
    pub fn projected_law(&self, theta: &[f64]) -> Result<Vec<(f64, f64)>> {
        check_len("theta", self.dim(), theta.len())?;
        let mut pairs: Vec<(f64, f64)> = match self.finite_support() {
            Some((points, probs)) => points
                .iter()
                .zip(probs)
                .map(|(p, w)| (p.iter().zip(theta).map(|(a, b)| a * b).sum(), w))
                .collect(),
            None => {
                let d = self.dim();
                if d > 3 {
                    return Err(Error::InvalidParameter(
                        "continuous covariate law supported up to d = 3".into(),
                    ));
                }
                let rule = gauss_quad::GaussLegendre::new(
                    std::num::NonZeroUsize::new(12).expect("nonzero"),
                );
                let nodes: Vec<(f64, f64)> = rule
                    .as_node_weight_pairs()
                    .iter()
                    .map(|&(x, w)| (x, 0.5 * w))
                    .collect();
                let mut acc = vec![(0.0, 1.0)];
                for &t in theta {
                    acc = acc
                        .iter()
                        .flat_map(|&(v, p)| nodes.iter().map(move |&(x, w)| (v + t * x, p * w)))
                        .collect();
                }
                acc
            }
        };
        pairs.retain(|(_, p)| *p > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            match merged.last_mut() {
                Some(last) if (last.0 - v).abs() < 1e-14 => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Ok(merged)
    }
}

fn product_support(levels: &[f64], d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut points = vec![Vec::new()];
    for _ in 0..d {
        points = points
            .iter()
            .flat_map(|p| {
                levels.iter().map(move |&l| {
                    let mut q = p.clone();
                    q.push(l);
                    q
                })
            })
            .collect();
    }
    let w = 1.0 / points.len() as f64;
    let probs = vec![w; points.len()];
    (points, probs)
}

pub fn sample_covariates(law: &CovariateLaw, n: usize, seed: u64) -> Result<CovariateMatrix> {
    law.sample(n, &mut rng::seeded(seed))
}

/// External field `τ t_i + θᵀx_i + γ`.
pub fn external_field(t: &[Spin], x: &CovariateMatrix, p: &OutcomeParams) -> Result<Vec<f64>> {
    check_len("treatment vector", x.n(), t.len())?;
    let h = x.linear(&p.theta)?;
    Ok(t
        .iter()
        .zip(h)
        .map(|(&ti, hi)| p.tau * f64::from(ti) + hi + p.gamma)
        .collect())
}

/// `½ yᵀA y + Σ_i y_i (τ t_i + θᵀx_i + γ)`.
pub fn hamiltonian(
    y: &[Spin],
    t: &[Spin],
    x: &CovariateMatrix,
    a: &InteractionMatrix,
    p: &OutcomeParams,
) -> Result<f64> {
    let n = a.n();
    check_len("outcome vector", n, y.len())?;
    check_len("covariate rows", n, x.n())?;
    check_spins(y)?;
    check_spins(t)?;
    let field = external_field(t, x, p)?;
    Ok(energy_with_field(a, &field, y))
}

pub(crate) fn energy_with_field(a: &InteractionMatrix, field: &[f64], y: &[Spin]) -> f64 {
    let ay = a.spin_matvec(y);
    y.iter()
        .zip(ay.iter().zip(field))
        .map(|(&s, (l, h))| f64::from(s) * (0.5 * l + h))
        .sum()
}

/// Local field `m_i = (A y)_i + τ t_i + θᵀx_i + γ`, so that
/// `P(y_i = s | y_{-i}) = exp(s m_i) / (2 cosh m_i)`.
pub fn conditional_field(
    i: usize,
    y: &[Spin],
    t: &[Spin],
    x: &CovariateMatrix,
    a: &InteractionMatrix,
    p: &OutcomeParams,
) -> Result<f64> {
    let n = a.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    check_len("outcome vector", n, y.len())?;
    check_len("treatment vector", n, t.len())?;
    check_len("covariate rows", n, x.n())?;
    check_len("theta", x.d(), p.theta.len())?;
    let coupling: f64 = a.row(i).iter().zip(y).map(|(c, &s)| c * f64::from(s)).sum();
    let cov: f64 = x.row(i).iter().zip(&p.theta).map(|(a, b)| a * b).sum();
    Ok(coupling + p.tau * f64::from(t[i]) + cov + p.gamma)
}

/// Uniform draw from `{±1}ⁿ`.
pub fn uniform_spins(n: usize, rng: &mut rng::Rng) -> Vec<Spin> {
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

/// Draws treatments from the propensity law. Independent sites are sampled
/// exactly; coupled ones by `glauber_steps` random-scan heat-bath updates.
pub fn sample_treatments(
    prop: &PropensityParams,
    x: &CovariateMatrix,
    glauber_steps: usize,
    seed: u64,
) -> Result<Vec<Spin>> {
    let n = prop.coupling.n();
    check_len("covariate rows", n, x.n())?;
    let field = x.linear(&prop.gamma0)?;
    let mut rng = rng::seeded(seed);
    if prop.coupling.is_zero() {
        return Ok(field
            .iter()
            .map(|&h| {
                if rng.random::<f64>() < crate::glauber::prob_plus(h) {
                    1
                } else {
                    -1
                }
            })
            .collect());
    }
    if glauber_steps < n {
        return Err(Error::InvalidParameter(format!(
            "need at least one sweep ({n} steps), got {glauber_steps}"
        )));
    }
    let init = uniform_spins(n, &mut rng);
    let mut chain = HeatBath::new(&prop.coupling, field, init)?;
    for _ in 0..glauber_steps {
        let i = rng.random_range(0..n);
        chain.update(i, &mut rng);
    }
    Ok(chain.into_state())
}
