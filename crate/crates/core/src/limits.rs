//! Free-energy identities and dense-graph limits.
//!
//! - [`phi_tau`] and [`psi_reconstruct`]: the large-field approximation of
//!   the free energy and its reconstruction at zero field by integrating DE
//!   back from `τ_max`.
//! - [`meanfield_value`]: the mean-field variational value for a
//!   block-constant graphon, restricted to functions constant on
//!   (block, covariate level, treatment sign), which is exact for such `W`.
//! - [`limiting_effects_graphon`]: DE and IE as derivatives of that value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_len, check_spins, log2cosh, InteractionMatrix, Spin};
use crate::rng;
use rand::Rng as _;

/// `I(m) = ((1+m)/2)log(1+m) + ((1−m)/2)log(1−m)`, the cost of mean `m`
/// against the uniform law on `±1`. Convex, even, `I(0) = 0`, `I(±1) = log 2`.
pub fn rate_function(m: f64) -> f64 {
    let xlogx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    let m = m.clamp(-1.0, 1.0);
    0.5 * (xlogx(1.0 + m) + xlogx(1.0 - m))
}

/// `(1/2n) tᵀAt + (1/n) Σ log 2cosh(τ t_i)`.
pub fn phi_tau(a: &InteractionMatrix, t: &[Spin], tau: f64) -> Result<f64> {
    check_len("treatments", a.n(), t.len())?;
    check_spins(t)?;
    let nf = t.len() as f64;
    let quad: f64 = a
        .spin_matvec(t)
        .iter()
        .zip(t)
        .map(|(v, &s)| v * f64::from(s))
        .sum();
    Ok(quad / (2.0 * nf) + t.iter().map(|&s| log2cosh(tau * f64::from(s))).sum::<f64>() / nf)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiReconstruction {
    pub value: f64,
    /// `E_T̄ φ(τ_max)`.
    pub phi_max: f64,
    /// `½ ∫₀^{τ_max} DE`.
    pub half_integral: f64,
    /// Some successive DE values differ by more than the step tolerance.
    pub coarse: bool,
}

/// `ψ = E_T̄ φ(τ_max) − ½ ∫ DE` over the grid by the trapezoid rule. With a
/// zero diagonal `E_T̄ T̄ᵀAT̄ = 0`, so `E_T̄ φ(τ_max) = log 2cosh τ_max` exactly.
pub fn psi_reconstruct(
    a: &InteractionMatrix,
    tau_grid: &[f64],
    de: &[f64],
    step_tolerance: f64,
) -> Result<PsiReconstruction> {
    check_len("DE values", tau_grid.len(), de.len())?;
    if tau_grid.len() < 2 || tau_grid[0] != 0.0 || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "tau grid must start at 0 and increase".into(),
        ));
    }
    debug_assert_eq!(a.trace(), 0.0);
    let tau_max = *tau_grid.last().expect("len >= 2");
    let integral: f64 = tau_grid
        .windows(2)
        .zip(de.windows(2))
        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
        .sum();
    let phi_max = log2cosh(tau_max);
    Ok(PsiReconstruction {
        value: phi_max - 0.5 * integral,
        phi_max,
        half_integral: 0.5 * integral,
        coarse: de.windows(2).any(|d| (d[1] - d[0]).abs() > step_tolerance),
    })
}

/// Block-constant graphon: `W` on `B × B` blocks with weights `p_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockGraphon {
    w: Vec<f64>,
    p: Vec<f64>,
}

impl BlockGraphon {
    pub fn new(w: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let b = p.len();
        check_len("graphon entries", b * b, w.len())?;
        if b == 0 || p.iter().any(|&x| !(x > 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(
                "block weights must be positive and sum to 1".into(),
            ));
        }
        for i in 0..b {
            for j in 0..i {
                let (x, y) = (w[i * b + j], w[j * b + i]);
                if x != y {
                    return Err(Error::NotSymmetric { i, j, a: x, b: y });
                }
            }
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("graphon entries must be finite".into()));
        }
        Ok(Self { w, p })
    }

    /// One block with constant value `beta`, the Curie–Weiss limit.
    pub fn constant(beta: f64) -> Self {
        Self {
            w: vec![beta],
            p: vec![1.0],
        }
    }

    pub fn blocks(&self) -> usize {
        self.p.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.p.len() + j]
    }

    /// 64-bit FNV-1a of the entries and weights, for report keys.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.w.iter().chain(&self.p) {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `T` uniform on `±1`.
    Uniform,
    /// `T ≡ −1`.
    AllMinus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanfieldValue {
    pub value: f64,
    /// Maximizing `m_{b,a,s}`, indexed `(b·levels + a)·signs + s`.
    pub m: Vec<f64>,
    /// No start converged; `value` is the best iterate seen.
    pub unconverged: bool,
}

const STARTS_RANDOM: usize = 5;
const MAX_ITERS: usize = 20_000;
const FIXED_POINT_TOL: f64 = 1e-14;

/// `sup_F G`, with `G = log 2 + ½ Σ W_bb' p_b p_b' M_b M_b' + Σ π(m·field − I(m))`
/// over block/level/sign-constant `m`, `M_b` the block mean and
/// `field = τs + h_a + γ`. Stationary points solve
/// `m = tanh(Σ_b' W_bb' p_b' M_b' + field)`, found by damped iteration from
/// several starts.
pub fn meanfield_value(
    w: &BlockGraphon,
    tau: f64,
    levels: &[(f64, f64)],
    gamma: f64,
    branch: Branch,
) -> Result<MeanfieldValue> {
    if levels.is_empty() || (levels.iter().map(|l| l.1).sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(
            "covariate levels need probabilities summing to 1".into(),
        ));
    }
    let signs: &[(f64, f64)] = match branch {
        Branch::Uniform => &[(1.0, 0.5), (-1.0, 0.5)],
        Branch::AllMinus => &[(-1.0, 1.0)],
    };
    let nb = w.blocks();
    let (na, ns) = (levels.len(), signs.len());
    let size = nb * na * ns;
    // Conditional weight of (a, s) inside a block, and the field there.
    let cond: Vec<f64> = (0..na * ns).map(|k| levels[k / ns].1 * signs[k % ns].1).collect();
    let field: Vec<f64> = (0..na * ns)
        .map(|k| tau * signs[k % ns].0 + levels[k / ns].0 + gamma)
        .collect();
    let block_means = |m: &[f64]| -> Vec<f64> {
        (0..nb)
            .map(|b| (0..na * ns).map(|k| cond[k] * m[b * na * ns + k]).sum())
            .collect()
    };
    let value_of = |m: &[f64]| -> f64 {
        let mb = block_means(m);
        let mut quad = 0.0;
        for b in 0..nb {
            for c in 0..nb {
                quad += w.get(b, c) * w.weights()[b] * w.weights()[c] * mb[b] * mb[c];
            }
        }
        let mut lin = 0.0;
        for b in 0..nb {
            for k in 0..na * ns {
                let mi = m[b * na * ns + k];
                lin += w.weights()[b] * cond[k] * (mi * field[k] - rate_function(mi));
            }
        }
        std::f64::consts::LN_2 + 0.5 * quad + lin
    };

    let mut starts: Vec<Vec<f64>> = [-0.9, 0.0, 0.9].iter().map(|&v| vec![v; size]).collect();
    let mut g = rng::seeded(0x6d65_616e);
    for _ in 0..STARTS_RANDOM {
        starts.push((0..size).map(|_| g.random_range(-1.0..1.0)).collect());
    }

    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for mut m in starts {
        let mut converged = false;
        for _ in 0..MAX_ITERS {
            let mb = block_means(&m);
            let mut delta: f64 = 0.0;
            for b in 0..nb {
                let coupling: f64 = (0..nb).map(|c| w.get(b, c) * w.weights()[c] * mb[c]).sum();
                for k in 0..na * ns {
                    let i = b * na * ns + k;
                    let next = 0.5 * m[i] + 0.5 * (coupling + field[k]).tanh();
                    delta = delta.max((next - m[i]).abs());
                    m[i] = next;
                }
            }
            if delta < FIXED_POINT_TOL {
                converged = true;
                break;
            }
        }
        let v = value_of(&m);
        let better = match &best {
            None => true,
            Some((bv, _, bc)) => (converged && !bc) || (converged == *bc && v > *bv),
        };
        if better {
            best = Some((v, m, converged));
        }
    }
    let (value, m, converged) = best.expect("at least one start");
    Ok(MeanfieldValue {
        value,
        m,
        unconverged: !converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphonEffects {
    pub de: f64,
    pub ie: f64,
    /// Largest gap between one-sided difference quotients.
    pub fd_gap: f64,
}

/// Richardson-extrapolated central difference and the one-sided gap.
fn derivative(f: &dyn Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<(f64, f64, f64, f64)> {
    let f0 = f(x)?;
    let (fp, fm) = (f(x + h)?, f(x - h)?);
    let (fp2, fm2) = (f(x + h / 2.0)?, f(x - h / 2.0)?);
    let d1 = (fp - fm) / (2.0 * h);
    let d2 = (fp2 - fm2) / h;
    let right = (fp - f0) / h;
    let left = (f0 - fm) / h;
    Ok(((4.0 * d2 - d1) / 3.0, (right - left).abs(), left, right))
}

/// `DE = 2 ∂_τ V`, `IE = ∂_γ V − ∂_γ Ṽ − DE/2` at `γ = 0`, where `V` is the
/// uniform-treatment value and `Ṽ` the all-minus one.
pub fn limiting_effects_graphon(
    w: &BlockGraphon,
    tau: f64,
    levels: &[(f64, f64)],
    fd_step: f64,
) -> Result<GraphonEffects> {
    if !(fd_step > 0.0) {
        return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
    }
    let v_tau = |t: f64| Ok(meanfield_value(w, t, levels, 0.0, Branch::Uniform)?.value);
    let v_gamma = |g: f64| Ok(meanfield_value(w, tau, levels, g, Branch::Uniform)?.value);
    let vm_gamma = |g: f64| Ok(meanfield_value(w, tau, levels, g, Branch::AllMinus)?.value);
    let mut gap: f64 = 0.0;
    let mut ders = [0.0; 3];
    let fs: [&dyn Fn(f64) -> Result<f64>; 3] = [&v_tau, &v_gamma, &vm_gamma];
    let at = [tau, 0.0, 0.0];
    for k in 0..3 {
        let (d, g, left, right) = derivative(fs[k], at[k], fd_step)?;
        if g > 10.0 * fd_step {
            return Err(Error::NonDifferentiablePoint { left, right });
        }
        gap = gap.max(g);
        ders[k] = d;
    }
    let de = 2.0 * ders[0];
    Ok(GraphonEffects {
        de,
        ie: ders[1] - ders[2] - 0.5 * de,
        fd_gap: gap,
    })
}
