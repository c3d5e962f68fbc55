//! Single-site heat-bath (Glauber) dynamics for Ising-type Gibbs measures.
//!
//! Site `i` is resampled from its exact conditional,
//! `P(y_i = +1 | y_{-i}) = e^{m_i} / (2 cosh m_i)`, with `m_i = (Ay)_i + h_i`.
//! Local fields and the energy are maintained incrementally, so one update
//! costs `O(1)` when the spin stays and `O(n)` when it flips.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::effects::{replicate_effects, EffectEstimate, ReplicateSums};
use crate::error::{Error, Result};
use crate::model::{
    check_len, check_spins, energy_with_field, external_field, uniform_spins, CovariateLaw,
    CovariateMatrix, InteractionMatrix, OutcomeParams, Spin,
};
use crate::rng::{self, Rng};

/// `e^m / (2 cosh m)`, written to stay finite for any `m`.
#[inline]
pub fn prob_plus(m: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * m).exp())
}

/// Chain state with maintained local fields `(Ay)_i` and energy.
#[derive(Debug, Clone)]
pub struct HeatBath<'a> {
    a: &'a InteractionMatrix,
    field: Vec<f64>,
    y: Vec<Spin>,
    local: Vec<f64>,
    energy: f64,
    sum: i64,
}

impl<'a> HeatBath<'a> {
    pub fn new(a: &'a InteractionMatrix, field: Vec<f64>, init: Vec<Spin>) -> Result<Self> {
        check_len("field", a.n(), field.len())?;
        check_len("initial state", a.n(), init.len())?;
        check_spins(&init)?;
        let local = a.spin_matvec(&init);
        let energy = energy_with_field(a, &field, &init);
        let sum = init.iter().map(|&s| i64::from(s)).sum();
        Ok(Self {
            a,
            field,
            y: init,
            local,
            energy,
            sum,
        })
    }

    /// Heat-bath update of site `i`; returns whether the spin flipped.
    pub fn update(&mut self, i: usize, rng: &mut Rng) -> bool {
        let m = self.local[i] + self.field[i];
        let new: Spin = if rng.random::<f64>() < prob_plus(m) { 1 } else { -1 };
        if new == self.y[i] {
            return false;
        }
        self.energy += 2.0 * f64::from(new) * m;
        let delta = 2.0 * f64::from(new);
        for (l, c) in self.local.iter_mut().zip(self.a.row(i)) {
            *l += c * delta;
        }
        self.sum += 2 * i64::from(new);
        self.y[i] = new;
        true
    }

    pub fn sweep(&mut self, scan: Scan, rng: &mut Rng) {
        let n = self.y.len();
        match scan {
            Scan::Random => {
                for _ in 0..n {
                    let i = rng.random_range(0..n);
                    self.update(i, rng);
                }
            }
            Scan::Systematic => {
                for i in 0..n {
                    self.update(i, rng);
                }
            }
        }
    }

    pub fn state(&self) -> &[Spin] {
        &self.y
    }

    pub fn into_state(self) -> Vec<Spin> {
        self.y
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn magnetization(&self) -> f64 {
        self.sum as f64 / self.y.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scan {
    Random,
    Systematic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainInit {
    AllPlus,
    AllMinus,
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub init: ChainInit,
    pub seed: u64,
    pub scan: Scan,
    /// Record `(sweep, magnetization, energy)` at every thinned sweep.
    pub trace: bool,
}

impl ChainConfig {
    pub fn new(sweeps: usize, burn_in: usize, seed: u64) -> Self {
        Self {
            sweeps,
            burn_in,
            thin: 1,
            init: ChainInit::Random(seed),
            seed,
            scan: Scan::Random,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps <= self.burn_in {
            return Err(Error::InvalidParameter(format!(
                "sweeps ({}) must exceed burn-in ({})",
                self.sweeps, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub sweep: usize,
    pub magnetization: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    /// Post-burn-in thinned time averages of each spin.
    pub marginals: Vec<f64>,
    pub mean_magnetization: f64,
    pub samples: usize,
    pub trace: Vec<TracePoint>,
}

fn initial_state(init: ChainInit, n: usize) -> Vec<Spin> {
    match init {
        ChainInit::AllPlus => vec![1; n],
        ChainInit::AllMinus => vec![-1; n],
        ChainInit::Random(s) => uniform_spins(n, &mut rng::stream_rng(s, 1)),
    }
}

/// Runs a chain for the Gibbs measure with coupling `a` and external field `field`.
pub fn run_chain_with_field(
    cfg: &ChainConfig,
    a: &InteractionMatrix,
    field: Vec<f64>,
) -> Result<ChainRun> {
    cfg.validate()?;
    let n = a.n();
    let mut chain = HeatBath::new(a, field, initial_state(cfg.init, n))?;
    let mut rng = rng::seeded(cfg.seed);
    let mut sums = vec![0i64; n];
    let mut samples = 0usize;
    let mut trace = Vec::new();
    for sweep in 1..=cfg.sweeps {
        chain.sweep(cfg.scan, &mut rng);
        if sweep % cfg.thin != 0 {
            continue;
        }
        if cfg.trace {
            trace.push(TracePoint {
                sweep,
                magnetization: chain.magnetization(),
                energy: chain.energy(),
            });
        }
        if sweep > cfg.burn_in {
            for (s, &y) in sums.iter_mut().zip(chain.state()) {
                *s += i64::from(y);
            }
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "no post-burn-in samples survive thinning".into(),
        ));
    }
    let marginals: Vec<f64> = sums.iter().map(|&s| s as f64 / samples as f64).collect();
    let mean_magnetization = marginals.iter().sum::<f64>() / n as f64;
    Ok(ChainRun {
        marginals,
        mean_magnetization,
        samples,
        trace,
    })
}

pub fn run_chain(
    cfg: &ChainConfig,
    t: &[Spin],
    x: &CovariateMatrix,
    a: &InteractionMatrix,
    p: &OutcomeParams,
) -> Result<ChainRun> {
    check_len("treatment vector", a.n(), t.len())?;
    check_spins(t)?;
    run_chain_with_field(cfg, a, external_field(t, x, p)?)
}

/// One random-scan sweep of `n` heat-bath updates starting at `y`.
pub fn glauber_sweep(
    y: &[Spin],
    t: &[Spin],
    x: &CovariateMatrix,
    a: &InteractionMatrix,
    p: &OutcomeParams,
    seed: u64,
) -> Result<Vec<Spin>> {
    check_spins(t)?;
    let mut chain = HeatBath::new(a, external_field(t, x, p)?, y.to_vec())?;
    chain.sweep(Scan::Random, &mut rng::seeded(seed));
    Ok(chain.into_state())
}

/// `|m̄₊ − m̄₋|` between chains started at all-plus and all-minus.
pub fn metastability_gap(
    a: &InteractionMatrix,
    t: &[Spin],
    x: &CovariateMatrix,
    p: &OutcomeParams,
    cfg: &ChainConfig,
) -> Result<f64> {
    let plus = ChainConfig {
        init: ChainInit::AllPlus,
        seed: rng::child_seed(cfg.seed, 0),
        trace: false,
        ..cfg.clone()
    };
    let minus = ChainConfig {
        init: ChainInit::AllMinus,
        seed: rng::child_seed(cfg.seed, 1),
        ..plus.clone()
    };
    let mp = run_chain(&plus, t, x, a, p)?.mean_magnetization;
    let mm = run_chain(&minus, t, x, a, p)?.mean_magnetization;
    Ok((mp - mm).abs())
}

/// Effects with inner marginals replaced by chain time averages.
pub fn glauber_effects(
    a: &InteractionMatrix,
    law: &CovariateLaw,
    p: &OutcomeParams,
    cfg: &ChainConfig,
    k: usize,
    seed: u64,
) -> Result<EffectEstimate> {
    let n = a.n();
    let mut est = replicate_effects("glauber", n, law, k, seed, |draw| {
        let run = |t: &[Spin], stream: u64| {
            let c = ChainConfig {
                seed: rng::child_seed(draw.seed, stream),
                init: ChainInit::Random(rng::child_seed(draw.seed, stream + 2)),
                trace: false,
                ..cfg.clone()
            };
            run_chain(&c, t, &draw.x_bar, a, p).map(|r| r.marginals)
        };
        let m = run(&draw.t_bar, 0)?;
        let m_minus = run(&vec![-1; n], 1)?;
        Ok(ReplicateSums::from_marginals(&draw.t_bar, &m, &m_minus))
    })?;
    est.notes.push(format!(
        "sweeps={} burn_in={} thin={}",
        cfg.sweeps, cfg.burn_in, cfg.thin
    ));
    Ok(est)
}

pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("sweep,magnetization,energy\n");
    for p in trace {
        let _ = writeln!(out, "{},{},{}", p.sweep, p.magnetization, p.energy);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_interaction, InteractionKind};

    fn gibbs_probs(a: &InteractionMatrix, field: &[f64]) -> Vec<f64> {
        let n = a.n();
        let w: Vec<f64> = (0..1usize << n)
            .map(|s| {
                let y: Vec<Spin> = (0..n).map(|i| if s >> i & 1 == 1 { 1 } else { -1 }).collect();
                energy_with_field(a, field, &y).exp()
            })
            .collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|v| v / z).collect()
    }

    #[test]
    fn heat_bath_kernel_is_reversible_for_gibbs() {
        let n = 4;
        let a = make_interaction(&InteractionKind::Gaussian { beta: 1.3 }, n, 2).unwrap();
        let field = vec![0.3, -0.2, 0.1, 0.5];
        let states = 1usize << n;
        let mut kernel = vec![0.0; states * states];
        for s in 0..states {
            let y: Vec<Spin> = (0..n).map(|i| if s >> i & 1 == 1 { 1 } else { -1 }).collect();
            let l = a.spin_matvec(&y);
            for i in 0..n {
                let pp = prob_plus(l[i] + field[i]);
                let up = s | (1 << i);
                let down = s & !(1 << i);
                kernel[s * states + up] += pp / n as f64;
                kernel[s * states + down] += (1.0 - pp) / n as f64;
            }
        }
        let mut v = vec![1.0 / states as f64; states];
        for _ in 0..20_000 {
            let mut next = vec![0.0; states];
            for s in 0..states {
                for u in 0..states {
                    next[u] += v[s] * kernel[s * states + u];
                }
            }
            v = next;
        }
        let target = gibbs_probs(&a, &field);
        for (p, q) in v.iter().zip(&target) {
            assert!((p - q).abs() < 1e-8, "{p} vs {q}");
        }
    }

    #[test]
    fn incremental_energy_matches_direct() {
        let n = 12;
        let a = make_interaction(&InteractionKind::Gaussian { beta: 1.0 }, n, 8).unwrap();
        let field: Vec<f64> = (0..n).map(|i| 0.1 * i as f64 - 0.5).collect();
        let mut chain = HeatBath::new(&a, field.clone(), vec![1; n]).unwrap();
        let mut rng = rng::seeded(1);
        for _ in 0..50 {
            chain.sweep(Scan::Random, &mut rng);
        }
        let direct = energy_with_field(&a, &field, chain.state());
        assert!((chain.energy() - direct).abs() < 1e-10);
        let m = chain.state().iter().map(|&s| f64::from(s)).sum::<f64>() / n as f64;
        assert_eq!(chain.magnetization(), m);
    }

    #[test]
    fn independent_sites_have_tanh_means() {
        let n = 5;
        let a = InteractionMatrix::zeros(n);
        let field = vec![0.4, -0.7, 0.0, 1.2, 0.1];
        let cfg = ChainConfig::new(10_000, 1, 17);
        let run = run_chain_with_field(&cfg, &a, field.clone()).unwrap();
        for (m, h) in run.marginals.iter().zip(&field) {
            let sd = ((1.0 - h.tanh().powi(2)) / run.samples as f64).sqrt();
            assert!((m - h.tanh()).abs() < 3.5 * sd, "{m} vs {}", h.tanh());
        }
    }

    #[test]
    fn chains_are_reproducible_and_validated() {
        let a = make_interaction(&InteractionKind::CurieWeiss { beta: 1.0 }, 20, 0).unwrap();
        let mut cfg = ChainConfig::new(50, 10, 3);
        cfg.trace = true;
        let r1 = run_chain_with_field(&cfg, &a, vec![0.0; 20]).unwrap();
        let r2 = run_chain_with_field(&cfg, &a, vec![0.0; 20]).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.trace.len(), 50);
        assert!(trace_csv(&r1.trace).starts_with("sweep,magnetization,energy\n"));
        cfg.burn_in = 50;
        assert!(run_chain_with_field(&cfg, &a, vec![0.0; 20]).is_err());
    }

    #[test]
    fn systematic_scan_also_targets_gibbs() {
        let a = InteractionMatrix::zeros(3);
        let mut cfg = ChainConfig::new(20_000, 10, 5);
        cfg.scan = Scan::Systematic;
        let run = run_chain_with_field(&cfg, &a, vec![0.5; 3]).unwrap();
        for m in run.marginals {
            assert!((m - 0.5f64.tanh()).abs() < 0.03);
        }
    }

    #[test]
    fn gap_vanishes_without_coupling() {
        let n = 1000;
        let a = InteractionMatrix::zeros(n);
        let x = CovariateMatrix::empty(n);
        let cfg = ChainConfig::new(10, 5, 9);
        let gap = metastability_gap(&a, &vec![1; n], &x, &OutcomeParams::tau_only(0.0), &cfg).unwrap();
        assert!(gap < 0.05, "{gap}");
    }
}
