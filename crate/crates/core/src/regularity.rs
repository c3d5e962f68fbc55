//! Block approximations `Ã = Σ_{k,l} c_{kl} 1_{U_k} 1_{U_l}ᵀ` of dense
//! coupling matrices with a certified spectral-norm residual.
//!
//! The decomposition is a greedy spectral cut: take the top eigenvector of
//! the current residual, split every block by its sign, refit the block
//! averages, repeat. Coefficients average `A` over off-diagonal pairs only and
//! the residual is measured with its diagonal zeroed: diagonal terms of `Ã`
//! add a constant `Σ_i c_{k(i)k(i)}` to the Hamiltonian and never affect the
//! Gibbs measure.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_len, InteractionMatrix};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn matvec(m: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    let row = |i: usize| -> f64 { m[i * n..(i + 1) * n].iter().zip(v).map(|(a, b)| a * b).sum() };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n >= 256 {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row(i));
            return;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = row(i);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Largest `|λ|` of a symmetric `n×n` matrix with its leading eigenvector.
///
/// Power iteration on `M²`, so `±λ` pairs cannot stall it. `value` is
/// `‖M v‖` for a unit `v`, a lower bound that converges quadratically in
/// the eigenvector error.
pub fn spectral_decomposition(
    m: &[f64],
    n: usize,
    tol: f64,
    seed: u64,
) -> Result<(NormEstimate, Vec<f64>)> {
    check_len("matrix entries", n * n, m.len())?;
    const MAX_ITER: usize = 20_000;
    if n == 0 {
        return Ok((
            NormEstimate {
                value: 0.0,
                converged: true,
                iterations: 0,
            },
            Vec::new(),
        ));
    }
    let mut g = rng::seeded(seed);
    let mut v: Vec<f64> = (0..n).map(|_| g.random::<f64>() - 0.5).collect();
    normalize(&mut v);
    let mut mv = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut prev = 0.0;
    for it in 1..=MAX_ITER {
        matvec(m, n, &v, &mut mv);
        let value = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
        matvec(m, n, &mv, &mut w);
        let wn = normalize(&mut w);
        if value == 0.0 || wn == 0.0 {
            return Ok((
                NormEstimate {
                    value: 0.0,
                    converged: true,
                    iterations: it,
                },
                v,
            ));
        }
        std::mem::swap(&mut v, &mut w);
        if it > 3 && (value - prev).abs() <= tol * value {
            return Ok((
                NormEstimate {
                    value,
                    converged: true,
                    iterations: it,
                },
                v,
            ));
        }
        prev = value;
    }
    matvec(m, n, &v, &mut mv);
    let value = mv.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok((
        NormEstimate {
            value: value.max(prev),
            converged: false,
            iterations: MAX_ITER,
        },
        v,
    ))
}

pub fn spectral_norm(m: &[f64], n: usize, tol: f64) -> Result<NormEstimate> {
    Ok(spectral_decomposition(m, n, tol, 0x5eed)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockOptions {
    pub eps: f64,
    pub max_blocks: usize,
    /// Blocks smaller than this are moved to the remainder set `U_0`.
    pub min_block_size: usize,
    pub norm_tol: f64,
    pub seed: u64,
}

impl BlockOptions {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            max_blocks: 8,
            min_block_size: 1,
            norm_tol: 1e-10,
            seed: 0,
        }
    }

    pub fn with_max_blocks(mut self, max_blocks: usize) -> Self {
        self.max_blocks = max_blocks;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockApproximation {
    n: usize,
    /// `0` marks the remainder `U_0`; blocks are labelled `1..=K`.
    assignment: Vec<usize>,
    k: usize,
    /// `K×K`, row-major, indexed by `label − 1`.
    coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub rounds_used: usize,
    pub target_met: bool,
    /// Best certified residual after each round.
    pub history: Vec<f64>,
}

impl BlockApproximation {
    /// Builds an approximation from labels and coefficients, with the
    /// residual left unset.
    pub fn from_parts(assignment: Vec<usize>, k: usize, coefficients: Vec<f64>) -> Result<Self> {
        check_len("block coefficients", k * k, coefficients.len())?;
        if let Some(&bad) = assignment.iter().find(|&&a| a > k) {
            return Err(Error::InvalidParameter(format!(
                "block label {bad} exceeds block count {k}"
            )));
        }
        for a in 0..k {
            for b in 0..a {
                if coefficients[a * k + b] != coefficients[b * k + a] {
                    return Err(Error::NotSymmetric {
                        i: a,
                        j: b,
                        a: coefficients[a * k + b],
                        b: coefficients[b * k + a],
                    });
                }
            }
        }
        Ok(Self {
            n: assignment.len(),
            assignment,
            k,
            coefficients,
            residual_norm: f64::NAN,
            rounds_used: 0,
            target_met: false,
            history: Vec::new(),
        })
    }

    /// Labels `1..=K` with least-squares coefficients fitted to `a`.
    pub fn fit(a: &InteractionMatrix, assignment: Vec<usize>) -> Result<Self> {
        check_len("assignment", a.n(), assignment.len())?;
        let k = assignment.iter().copied().max().unwrap_or(0);
        let coefficients = block_averages(a, &assignment, k);
        Self::from_parts(assignment, k, coefficients)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_blocks(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `c_{kl}` for labels `k, l ∈ 1..=K`.
    pub fn coefficient(&self, k: usize, l: usize) -> f64 {
        self.coefficients[(k - 1) * self.k + (l - 1)]
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Member lists of `U_0, U_1, …, U_K`.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k + 1];
        for (i, &b) in self.assignment.iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    /// Dense `Ã` including its diagonal.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (self.assignment[i], self.assignment[j]);
                if a > 0 && b > 0 {
                    out[i * n + j] = self.coefficient(a, b);
                }
            }
        }
        out
    }

    /// `Ã` with the diagonal zeroed, the coupling the collapsed measure uses.
    pub fn interaction(&self) -> InteractionMatrix {
        InteractionMatrix::from_upper(self.n, |i, j| {
            let (a, b) = (self.assignment[i], self.assignment[j]);
            if a > 0 && b > 0 {
                self.coefficient(a, b)
            } else {
                0.0
            }
        })
    }

    /// Residual `A − Ã` with zero diagonal, dense.
    pub fn residual(&self, a: &InteractionMatrix) -> Result<Vec<f64>> {
        check_len("block approximation size", a.n(), self.n)?;
        a.difference(&self.interaction())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("n {} K {}\n", self.n, self.k);
        let labels: Vec<String> = self.assignment.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "{}", labels.join(" "));
        for a in 0..self.k {
            let row: Vec<String> = self.coefficients[a * self.k..(a + 1) * self.k]
                .iter()
                .map(|c| format!("{c}"))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        let _ = writeln!(out, "residual_norm {}", self.residual_norm);
        let _ = writeln!(out, "rounds {}", self.rounds_used);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let perr = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_string(),
        };
        let (l0, head) = *lines.first().ok_or_else(|| perr(1, "empty block file"))?;
        let h: Vec<&str> = head.split_whitespace().collect();
        let (n, k) = match h.as_slice() {
            ["n", n, "K", k] => (
                n.parse::<usize>().map_err(|_| perr(l0, "bad n"))?,
                k.parse::<usize>().map_err(|_| perr(l0, "bad K"))?,
            ),
            _ => return Err(perr(l0, "expected header `n <int> K <int>`")),
        };
        if lines.len() != k + 4 {
            return Err(perr(l0, "wrong number of lines for declared K"));
        }
        let (la, labels) = lines[1];
        let assignment: Vec<usize> = labels
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|_| perr(la, "bad block label")))
            .collect::<Result<_>>()?;
        if assignment.len() != n {
            return Err(perr(la, "assignment length differs from n"));
        }
        let mut coefficients = Vec::with_capacity(k * k);
        for &(lc, row) in &lines[2..2 + k] {
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| perr(lc, "bad coefficient")))
                .collect::<Result<_>>()?;
            if vals.len() != k {
                return Err(perr(lc, "coefficient row length differs from K"));
            }
            coefficients.extend(vals);
        }
        let tagged = |idx: usize, tag: &str| -> Result<&str> {
            let (l, s) = lines[idx];
            s.strip_prefix(tag)
                .map(str::trim)
                .ok_or_else(|| perr(l, &format!("expected `{tag} <value>`")))
        };
        let residual = tagged(k + 2, "residual_norm")?
            .parse::<f64>()
            .map_err(|_| perr(lines[k + 2].0, "bad residual"))?;
        let rounds = tagged(k + 3, "rounds")?
            .parse::<usize>()
            .map_err(|_| perr(lines[k + 3].0, "bad round count"))?;
        let mut b = Self::from_parts(assignment, k, coefficients)?;
        b.residual_norm = residual;
        b.rounds_used = rounds;
        b.target_met = true;
        Ok(b)
    }
}

/// Off-diagonal block averages of `a`; singleton diagonal blocks get zero.
fn block_averages(a: &InteractionMatrix, assignment: &[usize], k: usize) -> Vec<f64> {
    let n = a.n();
    let mut sums = vec![0.0; k * k];
    let mut sizes = vec![0usize; k];
    for (i, &b) in assignment.iter().enumerate() {
        if b > 0 {
            sizes[b - 1] += 1;
        }
        for j in 0..n {
            let c = assignment[j];
            if b > 0 && c > 0 && i != j {
                sums[(b - 1) * k + (c - 1)] += a.get(i, j);
            }
        }
    }
    let mut out = vec![0.0; k * k];
    for p in 0..k {
        for q in 0..k {
            let pairs = if p == q {
                sizes[p] * sizes[p].saturating_sub(1)
            } else {
                sizes[p] * sizes[q]
            };
            if pairs > 0 {
                out[p * k + q] = sums[p * k + q] / pairs as f64;
            }
        }
    }
    // Exact symmetry regardless of summation order.
    for p in 0..k {
        for q in 0..p {
            let v = 0.5 * (out[p * k + q] + out[q * k + p]);
            out[p * k + q] = v;
            out[q * k + p] = v;
        }
    }
    out
}

/// Relabels to `1..=K` in order of first appearance; `0` stays `0`.
fn canonical(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let mut next = 0;
    let out = labels
        .iter()
        .map(|&l| {
            if l == 0 {
                return 0;
            }
            *map.entry(l).or_insert_with(|| {
                next += 1;
                next
            })
        })
        .collect();
    (out, next)
}

/// Splits every block by `side`; blocks under `min_size` go to `U_0`.
fn refine(assignment: &[usize], side: &[bool], min_size: usize) -> (Vec<usize>, usize) {
    let raw: Vec<usize> = assignment
        .iter()
        .zip(side)
        .map(|(&a, &s)| if a == 0 { 0 } else { 2 * a + usize::from(s) })
        .collect();
    let mut counts = std::collections::HashMap::new();
    for &r in &raw {
        *counts.entry(r).or_insert(0usize) += 1;
    }
    let pruned: Vec<usize> = raw
        .iter()
        .map(|&r| if r != 0 && counts[&r] < min_size { 0 } else { r })
        .collect();
    canonical(&pruned)
}

/// Greedy spectral cut decomposition; see the module docs.
pub fn block_approximation(a: &InteractionMatrix, opts: &BlockOptions) -> Result<BlockApproximation> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "block tolerance must be positive, got {}",
            opts.eps
        )));
    }
    if opts.max_blocks == 0 {
        return Err(Error::InvalidParameter("max_blocks must be at least 1".into()));
    }
    let n = a.n();
    let mut current = BlockApproximation::fit(a, vec![1; n])?;
    let mut best: Option<BlockApproximation> = None;
    let mut history = Vec::new();
    let mut rounds = 0;
    loop {
        let r = current.residual(a)?;
        let (norm, v) = spectral_decomposition(&r, n, opts.norm_tol, rng::child_seed(opts.seed, rounds as u64))?;
        let mut certified = current.clone();
        certified.residual_norm = norm.value;
        certified.rounds_used = rounds;
        if best.as_ref().is_none_or(|b| certified.residual_norm < b.residual_norm) {
            best = Some(certified);
        }
        let best_ref = best.as_mut().expect("set above");
        history.push(best_ref.residual_norm);
        if best_ref.residual_norm <= opts.eps {
            best_ref.target_met = true;
            break;
        }
        // Sign split of the top eigenvector; fall back to a mean split when
        // the sign pattern does not cut any block.
        let mut candidates = vec![v.iter().map(|&x| x >= 0.0).collect::<Vec<bool>>()];
        let mean = v.iter().sum::<f64>() / n.max(1) as f64;
        candidates.push(v.iter().map(|&x| x >= mean).collect());
        let refined = candidates
            .iter()
            .map(|side| refine(&current.assignment, side, opts.min_block_size))
            .find(|(_, k)| *k > current.k);
        match refined {
            Some((labels, k)) if k <= opts.max_blocks => {
                current = BlockApproximation::fit(a, labels)?;
                rounds += 1;
            }
            _ => break,
        }
    }
    let mut out = best.expect("at least one round");
    out.history = history;
    Ok(out)
}

/// `Ã v` (diagonal included) in `O(n + K²)`.
pub fn apply_block_matrix(b: &BlockApproximation, v: &[f64]) -> Result<Vec<f64>> {
    check_len("vector", b.n, v.len())?;
    let mut partial = vec![0.0; b.k + 1];
    for (&l, x) in b.assignment.iter().zip(v) {
        partial[l] += x;
    }
    let per_block: Vec<f64> = (1..=b.k)
        .map(|p| (1..=b.k).map(|q| b.coefficient(p, q) * partial[q]).sum())
        .collect();
    Ok(b
        .assignment
        .iter()
        .map(|&l| if l == 0 { 0.0 } else { per_block[l - 1] })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_interaction, InteractionKind};
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn dense_eig_norm(m: &[f64], n: usize) -> f64 {
        let mat = nalgebra::DMatrix::from_row_slice(n, n, m);
        mat.symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0_f64, |acc, e| acc.max(e.abs()))
    }

    #[test]
    fn norm_of_simple_matrices() {
        let mut id = vec![0.0; 25];
        for i in 0..5 {
            id[i * 5 + i] = 1.0;
        }
        assert_abs_diff_eq!(spectral_norm(&id, 5, 1e-12).unwrap().value, 1.0, epsilon = 1e-12);
        let u = [1.0, 1.0, 1.0];
        let r1: Vec<f64> = (0..9).map(|k| u[k / 3] * u[k % 3]).collect();
        assert_abs_diff_eq!(spectral_norm(&r1, 3, 1e-12).unwrap().value, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn norm_matches_dense_eigensolver() {
        let n = 50;
        let mut g = rng::seeded(3);
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v: f64 = StandardNormal.sample(&mut g);
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        let est = spectral_norm(&m, n, 1e-13).unwrap();
        assert!(est.converged);
        assert_abs_diff_eq!(est.value, dense_eig_norm(&m, n), epsilon = 1e-6);
    }

    #[test]
    fn curie_weiss_is_one_exact_block() {
        let beta = 0.9;
        let n = 30;
        let a = make_interaction(&InteractionKind::CurieWeiss { beta }, n, 0).unwrap();
        let b = block_approximation(&a, &BlockOptions::new(1e-6)).unwrap();
        assert_eq!(b.num_blocks(), 1);
        assert_abs_diff_eq!(b.coefficient(1, 1), beta / n as f64, epsilon = 1e-15);
        assert!(b.residual_norm <= 1e-12);
        assert!(b.target_met);
    }

    #[test]
    fn exact_two_block_input_is_recovered() {
        let n = 40;
        let labels: Vec<usize> = (0..n).map(|i| if (i * 7) % 5 < 2 { 1 } else { 2 }).collect();
        let c = [0.02, -0.01, -0.01, 0.03];
        let a = InteractionMatrix::from_upper(n, |i, j| c[(labels[i] - 1) * 2 + labels[j] - 1]);
        let b = block_approximation(&a, &BlockOptions::new(1e-9)).unwrap();
        assert!(b.residual_norm <= 1e-9, "{}", b.residual_norm);
        assert!(b.num_blocks() <= 2);
    }

    #[test]
    fn noisy_blockmodel_recovers_halves() {
        let n = 100;
        let base = make_interaction(&InteractionKind::BlockModel { alpha: 0.8, beta: 0.4 }, n, 0).unwrap();
        let mut g = rng::seeded(12);
        let noise = InteractionMatrix::from_upper(n, |_, _| if g.random::<bool>() { 0.1 } else { -0.1 } / n as f64);
        let a = base.add_scaled(&noise, 1.0).unwrap();
        let b = block_approximation(&a, &BlockOptions::new(0.15)).unwrap();
        assert_eq!(b.num_blocks(), 2);
        assert!(b.residual_norm <= 0.15);
        let lab = b.assignment();
        assert!((0..n / 2).all(|i| lab[i] == lab[0]));
        assert!((n / 2..n).all(|i| lab[i] == lab[n / 2]));
        assert_ne!(lab[0], lab[n / 2]);
        // Recompute block averages directly.
        for p in 1..=2 {
            for q in 1..=2 {
                let (mut s, mut c) = (0.0, 0);
                for i in 0..n {
                    for j in 0..n {
                        if i != j && lab[i] == p && lab[j] == q {
                            s += a.get(i, j);
                            c += 1;
                        }
                    }
                }
                assert_abs_diff_eq!(b.coefficient(p, q), s / c as f64, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn history_is_monotone_and_certified() {
        let n = 60;
        let a = make_interaction(&InteractionKind::Gaussian { beta: 0.5 }, n, 4).unwrap();
        let b = block_approximation(&a, &BlockOptions::new(1e-3)).unwrap();
        assert!(!b.target_met);
        assert!(b.num_blocks() <= 8);
        for w in b.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        let r = b.residual(&a).unwrap();
        let (check, _) = spectral_decomposition(&r, n, 1e-12, 991).unwrap();
        assert!(check.value <= b.residual_norm + 1e-6 * n as f64);
    }

    #[test]
    fn idempotent_on_own_output() {
        let n = 48;
        let a = make_interaction(&InteractionKind::Gaussian { beta: 0.5 }, n, 6).unwrap();
        let b = block_approximation(&a, &BlockOptions::new(1e-3).with_max_blocks(4)).unwrap();
        let again = block_approximation(&b.interaction(), &BlockOptions::new(1e-9)).unwrap();
        assert!(again.residual_norm <= 1e-9);
        // Same partition up to relabelling.
        let mut pairs = std::collections::HashMap::new();
        for (p, q) in b.assignment().iter().zip(again.assignment()) {
            assert_eq!(*pairs.entry(*q).or_insert(*p), *p);
        }
    }

    #[test]
    fn apply_matches_dense_product() {
        let b = BlockApproximation::from_parts(vec![1, 2, 0, 2, 1, 1], 2, vec![0.5, -0.25, -0.25, 2.0]).unwrap();
        let v = [0.3, -1.0, 2.0, 0.7, 0.1, -0.4];
        let fast = apply_block_matrix(&b, &v).unwrap();
        let d = b.dense();
        for i in 0..6 {
            let slow: f64 = (0..6).map(|j| d[i * 6 + j] * v[j]).sum();
            assert_abs_diff_eq!(fast[i], slow, epsilon = 1e-12);
        }
        let one = BlockApproximation::from_parts(vec![1; 4], 1, vec![0.2]).unwrap();
        assert_eq!(apply_block_matrix(&one, &[1.0; 4]).unwrap(), vec![0.8; 4]);
        let zero = BlockApproximation::from_parts(vec![1; 4], 1, vec![0.0]).unwrap();
        assert_eq!(apply_block_matrix(&zero, &[1.0; 4]).unwrap(), vec![0.0; 4]);
        assert!(apply_block_matrix(&one, &[1.0; 3]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let a = make_interaction(&InteractionKind::BlockModel { alpha: 0.6, beta: 0.2 }, 10, 0).unwrap();
        let b = block_approximation(&a, &BlockOptions::new(1e-6)).unwrap();
        let back = BlockApproximation::from_text(&b.to_text()).unwrap();
        assert_eq!(back.assignment(), b.assignment());
        assert_eq!(back.coefficients(), b.coefficients());
        assert_eq!(back.residual_norm, b.residual_norm);
        assert!(BlockApproximation::from_text("n 2 K 1\n1 1\n").is_err());
    }

    #[test]
    fn remainder_set_from_min_block_size() {
        let n = 20;
        let a = make_interaction(&InteractionKind::Gaussian { beta: 0.5 }, n, 2).unwrap();
        let mut opts = BlockOptions::new(1e-6);
        opts.min_block_size = 6;
        let b = block_approximation(&a, &opts).unwrap();
        let blocks = b.blocks();
        for blk in &blocks[1..] {
            assert!(blk.len() >= 6);
        }
        let total: usize = blocks.iter().map(Vec::len).sum();
        assert_eq!(total, n);
    }
}
