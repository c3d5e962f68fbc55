//! Exact effects under a block-constant coupling, via the collapsed
//! distribution of cell sums.
//!
//! Units are grouped into cells `(covariate level a, block k, treatment s)`.
//! Under `Ã = Σ c_{kl} 1_{U_k}1_{U_l}ᵀ` the Hamiltonian depends on `y` only
//! through the cell sums, and the interaction only through the block sums
//! `s_k`. Evaluation is two-level:
//!
//! - inner: per block, convolve the tilted binomial weights of its cells,
//!   `log w(u) = ln C(c, u) + φ·(2u − c)` over `u` plus spins, into `W_k`;
//!   leave-one-out convolutions give `E[V_cell | s_k]`.
//! - outer: sum over the lattice `(s_1, …, s_K)` with log weight
//!   `½ Σ c_{kl} s_k s_l + Σ log W_k(s_k)`.
//!
//! Cells in the remainder set `U_0` carry no interaction and have mean
//! `|cell|·tanh φ`.

use serde::{Deserialize, Serialize};

use crate::effects::{replicate_effects, EffectEstimate, Estimate, ReplicateSums};
use crate::error::{Error, Result};
use crate::model::{check_len, check_spins, CovariateLaw, CovariateMatrix, InteractionMatrix, OutcomeParams, Spin};
use crate::regularity::{block_approximation, BlockApproximation, BlockOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub level: usize,
    /// `0` is the remainder set.
    pub block: usize,
    pub sign: Spin,
    pub members: Vec<usize>,
}

impl Cell {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Nonempty cells partitioning `0..n`, plus the covariate level values.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    pub n: usize,
    pub cells: Vec<Cell>,
    pub levels: Vec<Vec<f64>>,
}

impl CellPartition {
    pub fn sizes(&self) -> Vec<usize> {
        self.cells.iter().map(Cell::size).collect()
    }

    /// Cell field `φ = s·τ + θᵀh_a + γ`.
    pub fn field(&self, cell: &Cell, p: &OutcomeParams) -> f64 {
        let h: f64 = self.levels[cell.level].iter().zip(&p.theta).map(|(a, b)| a * b).sum();
        f64::from(cell.sign) * p.tau + h + p.gamma
    }

    /// Same cells with every unit's treatment set to `−1`.
    pub fn all_minus(&self) -> CellPartition {
        let mut merged: Vec<Cell> = Vec::new();
        for c in &self.cells {
            match merged.iter_mut().find(|m| m.level == c.level && m.block == c.block) {
                Some(m) => m.members.extend_from_slice(&c.members),
                None => merged.push(Cell { sign: -1, ..c.clone() }),
            }
        }
        for m in &mut merged {
            m.members.sort_unstable();
        }
        CellPartition {
            n: self.n,
            cells: merged,
            levels: self.levels.clone(),
        }
    }
}

pub fn build_cells(b: &BlockApproximation, x: &CovariateMatrix, t_bar: &[Spin]) -> Result<CellPartition> {
    let n = b.n();
    check_len("treatment vector", n, t_bar.len())?;
    check_len("covariate rows", n, x.n())?;
    check_spins(t_bar)?;
    let support = x.support().ok_or(Error::OutsideSupport { row: 0 })?;
    let mut cells: Vec<Cell> = Vec::new();
    let mut slot = std::collections::HashMap::new();
    for i in 0..n {
        let level = support.index[i];
        if level >= support.points.len() {
            return Err(Error::OutsideSupport { row: i });
        }
        let key = (level, b.assignment()[i], t_bar[i]);
        let idx = *slot.entry(key).or_insert_with(|| {
            cells.push(Cell {
                level,
                block: key.1,
                sign: key.2,
                members: Vec::new(),
            });
            cells.len() - 1
        });
        cells[idx].members.push(i);
    }
    Ok(CellPartition {
        n,
        cells,
        levels: support.points.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseOptions {
    pub block_cap: usize,
    /// Maximum number of outer lattice points `Π_k (|U_k| + 1)`.
    pub lattice_budget: u128,
}

impl Default for CollapseOptions {
    fn default() -> Self {
        Self {
            block_cap: 3,
            lattice_budget: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedMeans {
    /// `⟨V_cell⟩`, aligned with `CellPartition::cells`.
    pub cell_means: Vec<f64>,
    /// `log Z` for the zero-diagonal coupling.
    pub log_z: f64,
    pub lattice_points: u128,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == f64::NEG_INFINITY {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = log_add(out[i + j], x + y);
        }
    }
    out
}

struct LogFactorial(Vec<f64>);

impl LogFactorial {
    fn new(n: usize) -> Self {
        let mut t = vec![0.0; n + 1];
        for k in 1..=n {
            t[k] = t[k - 1] + (k as f64).ln();
        }
        Self(t)
    }

    fn choose(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// Inner layer for one block: `log W(S)` over plus counts `S`, and for each
/// cell `E[u_cell | S]`.
struct BlockTable {
    size: usize,
    log_w: Vec<f64>,
    cond_plus: Vec<Vec<f64>>,
}

fn block_table(sizes: &[usize], fields: &[f64], lf: &LogFactorial) -> BlockTable {
    let seqs: Vec<Vec<f64>> = sizes
        .iter()
        .zip(fields)
        .map(|(&c, &phi)| {
            (0..=c)
                .map(|u| lf.choose(c, u) + phi * (2.0 * u as f64 - c as f64))
                .collect()
        })
        .collect();
    let m = seqs.len();
    let mut prefix = vec![vec![0.0]];
    for s in &seqs {
        let next = log_convolve(prefix.last().expect("nonempty"), s);
        prefix.push(next);
    }
    let mut suffix = vec![vec![0.0]; m + 1];
    for j in (0..m).rev() {
        suffix[j] = log_convolve(&seqs[j], &suffix[j + 1]);
    }
    let log_w = prefix[m].clone();
    let size: usize = sizes.iter().sum();
    let cond_plus = (0..m)
        .map(|j| {
            let others = log_convolve(&prefix[j], &suffix[j + 1]);
            (0..=size)
                .map(|s| {
                    if log_w[s] == f64::NEG_INFINITY {
                        return 0.0;
                    }
                    let lo = s.saturating_sub(others.len() - 1);
                    let hi = s.min(sizes[j]);
                    let mut acc = 0.0;
                    for u in lo..=hi {
                        acc += u as f64 * (seqs[j][u] + others[s - u] - log_w[s]).exp();
                    }
                    acc
                })
                .collect()
        })
        .collect();
    BlockTable {
        size,
        log_w,
        cond_plus,
    }
}

pub fn collapsed_expectations(
    cp: &CellPartition,
    b: &BlockApproximation,
    p: &OutcomeParams,
    opts: &CollapseOptions,
) -> Result<CollapsedMeans> {
    let k = b.num_blocks();
    if k > opts.block_cap {
        return Err(Error::BlockBudgetExceeded {
            blocks: k,
            cap: opts.block_cap,
        });
    }
    check_len("cell partition size", b.n(), cp.n)?;
    if let Some(l) = cp.levels.first() {
        check_len("theta", l.len(), p.theta.len())?;
    }
    let lf = LogFactorial::new(cp.n);
    let mut means = vec![0.0; cp.cells.len()];
    let mut log_z = 0.0;
    // Remainder cells.
    for (j, c) in cp.cells.iter().enumerate().filter(|(_, c)| c.block == 0) {
        let phi = cp.field(c, p);
        means[j] = c.size() as f64 * phi.tanh();
        log_z += c.size() as f64 * (phi.abs() + (1.0 + (-2.0 * phi.abs()).exp()).ln());
    }
    // Inner layer.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (j, c) in cp.cells.iter().enumerate() {
        if c.block > 0 {
            members[c.block - 1].push(j);
        }
    }
    let tables: Vec<BlockTable> = members
        .iter()
        .map(|js| {
            let sizes: Vec<usize> = js.iter().map(|&j| cp.cells[j].size()).collect();
            let fields: Vec<f64> = js.iter().map(|&j| cp.field(&cp.cells[j], p)).collect();
            block_table(&sizes, &fields, &lf)
        })
        .collect();
    let points: u128 = tables.iter().map(|t| t.size as u128 + 1).product();
    if points > opts.lattice_budget {
        return Err(Error::LatticeBudgetExceeded {
            points,
            budget: opts.lattice_budget,
        });
    }
    // Outer layer: two streaming passes over the lattice.
    let c = |p: usize, q: usize| b.coefficient(p + 1, q + 1);
    let log_omega = |idx: &[usize]| -> f64 {
        let s: Vec<f64> = idx
            .iter()
            .zip(&tables)
            .map(|(&u, t)| 2.0 * u as f64 - t.size as f64)
            .collect();
        let mut e = 0.0;
        for p in 0..k {
            e += tables[p].log_w[idx[p]];
            for q in 0..k {
                e += 0.5 * c(p, q) * s[p] * s[q];
            }
        }
        e
    };
    let walk = |f: &mut dyn FnMut(&[usize])| {
        let mut idx = vec![0usize; k];
        loop {
            f(&idx);
            let mut d = 0;
            loop {
                if d == k {
                    return;
                }
                idx[d] += 1;
                if idx[d] <= tables[d].size {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    };
    let mut emax = f64::NEG_INFINITY;
    walk(&mut |idx| emax = emax.max(log_omega(idx)));
    let mut total = 0.0;
    let mut marg: Vec<Vec<f64>> = tables.iter().map(|t| vec![0.0; t.size + 1]).collect();
    walk(&mut |idx| {
        let w = (log_omega(idx) - emax).exp();
        total += w;
        for (m, &u) in marg.iter_mut().zip(idx) {
            m[u] += w;
        }
    });
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Numerical("collapsed partition sum degenerate".into()));
    }
    let diag_shift: f64 = (0..k).map(|p| 0.5 * c(p, p) * tables[p].size as f64).sum();
    log_z += emax + total.ln() - diag_shift;
    for (p, js) in members.iter().enumerate() {
        for (slot, &j) in js.iter().enumerate() {
            let size = cp.cells[j].size() as f64;
            let cond = &tables[p].cond_plus[slot];
            means[j] = marg[p]
                .iter()
                .zip(cond)
                .map(|(w, u)| w / total * (2.0 * u - size))
                .sum();
        }
    }
    Ok(CollapsedMeans {
        cell_means: means,
        log_z,
        lattice_points: points,
    })
}

/// Snaps every coordinate to the grid `{−1, −1 + 2^{−m}, …, 1}` and records
/// the distinct snapped rows as the support.
pub fn discretize_covariates(x: &CovariateMatrix, m_levels: u32) -> Result<CovariateMatrix> {
    if m_levels > 30 {
        return Err(Error::InvalidParameter(format!(
            "grid refinement {m_levels} too fine"
        )));
    }
    let step = 0.5f64.powi(m_levels as i32);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut lookup = std::collections::HashMap::new();
    let mut index = Vec::with_capacity(x.n());
    for i in 0..x.n() {
        let row = x.row(i);
        if let Some(v) = row.iter().find(|v| !(v.abs() <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "covariate entry {v} outside [-1, 1]"
            )));
        }
        let key: Vec<i64> = row.iter().map(|v| ((v + 1.0) / step).round() as i64).collect();
        let k = *lookup.entry(key.clone()).or_insert_with(|| {
            points.push(key.iter().map(|&g| -1.0 + g as f64 * step).collect());
            points.len() - 1
        });
        index.push(k);
    }
    if points.is_empty() {
        points.push(vec![0.0; x.d()]);
    }
    CovariateMatrix::from_support(points, index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockEstimatorOptions {
    /// Target effect accuracy; the regularity tolerance is `eps²/32`.
    pub eps: f64,
    pub replicates: usize,
    pub seed: u64,
    pub collapse: CollapseOptions,
    /// Grid refinement for covariates without finite support.
    pub discretize_levels: u32,
}

impl BlockEstimatorOptions {
    pub fn new(eps: f64, replicates: usize, seed: u64) -> Self {
        Self {
            eps,
            replicates,
            seed,
            collapse: CollapseOptions::default(),
            discretize_levels: 3,
        }
    }

    pub fn regularity_tolerance(&self) -> f64 {
        self.eps * self.eps / 32.0
    }
}

/// DE/IE for a fixed block approximation and one covariate draw.
pub fn block_replicate_sums(
    b: &BlockApproximation,
    x: &CovariateMatrix,
    t_bar: &[Spin],
    p: &OutcomeParams,
    opts: &CollapseOptions,
) -> Result<ReplicateSums> {
    let cp = build_cells(b, x, t_bar)?;
    let treated = collapsed_expectations(&cp, b, p, opts)?;
    let minus_cells = cp.all_minus();
    let minus = collapsed_expectations(&minus_cells, b, p, opts)?;
    let alignment = cp
        .cells
        .iter()
        .zip(&treated.cell_means)
        .map(|(c, m)| f64::from(c.sign) * m)
        .sum();
    Ok(ReplicateSums {
        treated_alignment: alignment,
        total: treated.cell_means.iter().sum(),
        total_all_minus: minus.cell_means.iter().sum(),
    })
}

/// Block estimator of DE and IE with a precomputed block approximation.
pub fn estimate_effects_with_blocks(
    b: &BlockApproximation,
    law: &CovariateLaw,
    p: &OutcomeParams,
    opts: &BlockEstimatorOptions,
) -> Result<EffectEstimate> {
    let n = b.n();
    check_len("theta", law.dim(), p.theta.len())?;
    let finite = law.finite_support().is_some();
    let mut est = replicate_effects("block", n, law, opts.replicates, opts.seed, |draw| {
        let x = if finite {
            draw.x_bar.clone()
        } else {
            discretize_covariates(&draw.x_bar, opts.discretize_levels)?
        };
        block_replicate_sums(b, &x, &draw.t_bar, p, &opts.collapse)
    })?;
    est.notes.push(format!("K={}", b.num_blocks()));
    est.notes.push(format!("residual_norm={:e}", b.residual_norm));
    if !b.target_met {
        est.notes.push("regularity target not met".to_string());
    }
    if !finite {
        est.notes
            .push(format!("covariates discretized at 2^-{}", opts.discretize_levels));
    }
    Ok(est)
}

/// Full pipeline: block approximation at tolerance `eps²/32`, then the
/// replicate-averaged collapsed computation.
pub fn estimate_effects(
    a: &InteractionMatrix,
    law: &CovariateLaw,
    p: &OutcomeParams,
    opts: &BlockEstimatorOptions,
) -> Result<(EffectEstimate, BlockApproximation)> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let bopts = BlockOptions::new(opts.regularity_tolerance()).with_max_blocks(opts.collapse.block_cap);
    let b = block_approximation(a, &bopts)?;
    let est = estimate_effects_with_blocks(&b, law, p, opts)?;
    Ok((est, b))
}

pub fn estimate_de(
    a: &InteractionMatrix,
    law: &CovariateLaw,
    p: &OutcomeParams,
    opts: &BlockEstimatorOptions,
) -> Result<Estimate> {
    Ok(estimate_effects(a, law, p, opts)?.0.de)
}

pub fn estimate_ie(
    a: &InteractionMatrix,
    law: &CovariateLaw,
    p: &OutcomeParams,
    opts: &BlockEstimatorOptions,
) -> Result<Estimate> {
    Ok(estimate_effects(a, law, p, opts)?.0.ie)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{exact_effects, exact_log_partition, OracleLimit, OracleMode};
    use crate::model::{make_interaction, InteractionKind};
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;

    fn one_block(n: usize, c: f64) -> BlockApproximation {
        BlockApproximation::from_parts(vec![1; n], 1, vec![c]).unwrap()
    }

    #[test]
    fn cells_partition_units() {
        let b = one_block(6, 0.1);
        let x = CovariateMatrix::empty(6);
        let cp = build_cells(&b, &x, &[1, -1, 1, 1, -1, 1]).unwrap();
        assert_eq!(cp.cells.len(), 2);
        let mut sizes = cp.sizes();
        sizes.sort();
        assert_eq!(sizes, vec![2, 4]);
        let cp = build_cells(&b, &x, &[1; 6]).unwrap();
        assert!(cp.cells.iter().all(|c| c.sign == 1));
        let raw = CovariateMatrix::new(6, 1, vec![0.1; 6]).unwrap();
        assert_eq!(build_cells(&b, &raw, &[1; 6]), Err(Error::OutsideSupport { row: 0 }));
    }

    #[test]
    fn uncoupled_cells_have_tanh_means() {
        let b = BlockApproximation::from_parts(vec![1, 1, 2, 2, 0, 1], 2, vec![0.0; 4]).unwrap();
        let x = CovariateMatrix::from_support(vec![vec![-0.5], vec![1.0]], vec![0, 1, 1, 0, 0, 1]).unwrap();
        let p = OutcomeParams::new(0.3, vec![0.8]).with_gamma(0.1);
        let cp = build_cells(&b, &x, &[1, -1, 1, 1, -1, 1]).unwrap();
        let out = collapsed_expectations(&cp, &b, &p, &CollapseOptions::default()).unwrap();
        for (c, m) in cp.cells.iter().zip(&out.cell_means) {
            assert_abs_diff_eq!(*m, c.size() as f64 * cp.field(c, &p).tanh(), epsilon = 1e-13);
        }
    }

    #[test]
    fn curie_weiss_matches_two_sum_display() {
        let (n, beta, tau) = (11usize, 1.3, 0.35);
        let t: Vec<Spin> = (0..n).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let (np, nm) = (t.iter().filter(|&&s| s == 1).count(), t.iter().filter(|&&s| s == -1).count());
        let b = one_block(n, beta / n as f64);
        let cp = build_cells(&b, &CovariateMatrix::empty(n), &t).unwrap();
        let out = collapsed_expectations(&cp, &b, &OutcomeParams::tau_only(tau), &CollapseOptions::default()).unwrap();
        // Direct sum over (v₊, v₋) of the two-cell display.
        let lf = LogFactorial::new(n);
        let (mut z, mut ep, mut em) = (0.0, 0.0, 0.0);
        for up in 0..=np {
            for um in 0..=nm {
                let vp = 2.0 * up as f64 - np as f64;
                let vm = 2.0 * um as f64 - nm as f64;
                let w = (lf.choose(np, up) + lf.choose(nm, um) + beta / (2.0 * n as f64) * (vp + vm).powi(2) + tau * (vp - vm)).exp();
                z += w;
                ep += w * vp;
                em += w * vm;
            }
        }
        for (c, m) in cp.cells.iter().zip(&out.cell_means) {
            let want = if c.sign == 1 { ep / z } else { em / z };
            assert_abs_diff_eq!(*m, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_partition_matches_oracle() {
        let n = 10;
        let a = make_interaction(&InteractionKind::CurieWeiss { beta: 1.5 }, n, 0).unwrap();
        let p = OutcomeParams::tau_only(0.5);
        let t: Vec<Spin> = (0..n).map(|i| if i < 4 { 1 } else { -1 }).collect();
        let x = CovariateMatrix::empty(n);
        let b = BlockApproximation::fit(&a, vec![1; n]).unwrap();
        let cp = build_cells(&b, &x, &t).unwrap();
        let out = collapsed_expectations(&cp, &b, &p, &CollapseOptions::default()).unwrap();
        let exact = exact_log_partition(&a, &t, &x, &p, &OracleLimit::default()).unwrap();
        assert_abs_diff_eq!(out.log_z, exact, epsilon = 1e-10);
    }

    #[test]
    fn cell_means_match_enumeration_with_covariates() {
        let n = 12;
        let mut g = rng::seeded(77);
        let labels: Vec<usize> = (0..n).map(|_| g.random_range(0..3)).collect();
        let b = BlockApproximation::from_parts(labels, 2, vec![0.09, -0.05, -0.05, 0.12]).unwrap();
        let x = CovariateMatrix::from_support(vec![vec![-1.0], vec![0.5]], (0..n).map(|i| i % 2).collect()).unwrap();
        let t: Vec<Spin> = (0..n).map(|_| if g.random::<bool>() { 1 } else { -1 }).collect();
        let p = OutcomeParams::new(0.4, vec![0.6]).with_gamma(-0.1);
        let cp = build_cells(&b, &x, &t).unwrap();
        let out = collapsed_expectations(&cp, &b, &p, &CollapseOptions::default()).unwrap();
        let marg = crate::exact::exact_marginals(&b.interaction(), &t, &x, &p, &OracleLimit::default()).unwrap();
        for (cell, m) in cp.cells.iter().zip(&out.cell_means) {
            let want: f64 = cell.members.iter().map(|&i| marg[i]).sum();
            assert_abs_diff_eq!(*m, want, epsilon = 1e-9);
        }
    }

    #[test]
    fn budgets_are_enforced() {
        let b = BlockApproximation::from_parts(vec![1, 2, 3, 4], 4, vec![0.0; 16]).unwrap();
        let cp = build_cells(&b, &CovariateMatrix::empty(4), &[1; 4]).unwrap();
        let p = OutcomeParams::tau_only(0.1);
        assert_eq!(
            collapsed_expectations(&cp, &b, &p, &CollapseOptions::default()),
            Err(Error::BlockBudgetExceeded { blocks: 4, cap: 3 })
        );
        let opts = CollapseOptions { block_cap: 4, lattice_budget: 8 };
        assert!(matches!(
            collapsed_expectations(&cp, &b, &p, &opts),
            Err(Error::LatticeBudgetExceeded { points: 16, budget: 8 })
        ));
    }

    #[test]
    fn low_temperature_large_population_is_finite() {
        let n = 400;
        let b = one_block(n, 3.0 / n as f64);
        let t: Vec<Spin> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let cp = build_cells(&b, &CovariateMatrix::empty(n), &t).unwrap();
        let out = collapsed_expectations(&cp, &b, &OutcomeParams::tau_only(0.2), &CollapseOptions::default()).unwrap();
        assert!(out.cell_means.iter().all(|m| m.is_finite()));
        assert!(out.log_z.is_finite());
    }

    #[test]
    fn discretization_snaps_to_grid() {
        let x = CovariateMatrix::new(3, 1, vec![0.3, -1.0, 0.74]).unwrap();
        let d = discretize_covariates(&x, 1).unwrap();
        assert_eq!(d.data(), &[0.5, -1.0, 0.5]);
        assert_eq!(d.support().unwrap().points.len(), 2);
        let on = CovariateMatrix::new(2, 2, vec![0.25, -0.75, 1.0, 0.0]).unwrap();
        assert_eq!(discretize_covariates(&on, 2).unwrap().data(), on.data());
        let mut g = rng::seeded(1);
        let raw = CovariateLaw::Uniform { d: 2 }.sample(200, &mut g).unwrap();
        for m in 0..5 {
            let s = discretize_covariates(&raw, m).unwrap();
            for i in 0..200 {
                let dist: f64 = raw.row(i).iter().zip(s.row(i)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(dist <= 2f64.sqrt() * 0.5f64.powi(m as i32) + 1e-15);
            }
        }
    }

    #[test]
    fn independent_units_give_twice_tanh() {
        let n = 30;
        let a = InteractionMatrix::zeros(n);
        let opts = BlockEstimatorOptions::new(0.1, 50, 3);
        let (e, _) = estimate_effects(&a, &CovariateLaw::None, &OutcomeParams::tau_only(0.7), &opts).unwrap();
        assert_abs_diff_eq!(e.de.value, 2.0 * 0.7f64.tanh(), epsilon = 1e-12);
        // Per-replicate IE is 2·tanh τ·(n₊/n − ½): zero only on average.
        assert!(e.ie.agrees_with(0.0, 3.0, 0.0), "{:?}", e.ie);
        assert!(e.ie.se > 0.0);
    }

    #[test]
    fn curie_weiss_matches_oracle() {
        let n = 12;
        let a = make_interaction(&InteractionKind::CurieWeiss { beta: 1.2 }, n, 0).unwrap();
        let p = OutcomeParams::tau_only(0.4);
        let (est, b) = estimate_effects(&a, &CovariateLaw::None, &p, &BlockEstimatorOptions::new(0.1, 2000, 5)).unwrap();
        assert_eq!(b.num_blocks(), 1);
        let oracle = exact_effects(&a, &CovariateLaw::None, &p, OracleMode::full(), &OracleLimit::default()).unwrap();
        assert!(est.de.agrees_with(oracle.de.value, 3.0, 0.0), "{est:?} vs {oracle:?}");
        assert!(est.ie.agrees_with(oracle.ie.value, 3.0, 0.0), "{est:?} vs {oracle:?}");
        let zero = estimate_effects(&a, &CovariateLaw::None, &OutcomeParams::tau_only(0.0), &BlockEstimatorOptions::new(0.1, 200, 5)).unwrap().0;
        assert!(zero.de.agrees_with(0.0, 3.0, 1e-12));
        assert!(zero.ie.agrees_with(0.0, 3.0, 1e-12));
    }
}
