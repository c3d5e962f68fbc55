use std::path::Path;
use std::time::Instant;

use ising_causal::block::{estimate_effects, BlockEstimatorOptions};
use ising_causal::exact::{exact_effects, OracleLimit, OracleMode};
use ising_causal::glauber::{glauber_effects, run_chain, ChainConfig, ChainInit};
use ising_causal::inference::{fit_mpl, fit_propensity, simulate_data, NewtonOptions, ObservedData};
use ising_causal::limits::{limiting_effects_graphon, BlockGraphon};
use ising_causal::model::{sample_treatments, uniform_spins};
use ising_causal::parisi::{amp_effects, limiting_effects, AmpOptions, MinimizeOptions};
use ising_causal::{
    rng, CovariateMatrix, EffectEstimate, InteractionKind, InteractionMatrix, OutcomeParams, Spin,
};

use crate::fail::Failure;
use crate::output::{self, effects_row, join, Artifacts, RowContext, Table};
use crate::spec::{stream, ExperimentSpec};

pub const METHODS: [&str; 4] = ["oracle", "block", "amp", "glauber"];

/// Runs one estimator on `a` with parameters `p`.
pub fn estimate_with(
    method: &str,
    spec: &ExperimentSpec,
    a: &InteractionMatrix,
    p: &OutcomeParams,
) -> Result<EffectEstimate, Failure> {
    let m = &spec.method;
    let law = &spec.model.covariates;
    let seed = spec.seed_for(stream::ESTIMATOR);
    match method {
        "oracle" => {
            let mode = if m.oracle == "full" {
                OracleMode::Full {
                    covariate_draws: m.replicates,
                    seed,
                }
            } else {
                OracleMode::MonteCarlo { k: m.replicates, seed }
            };
            Ok(exact_effects(a, law, p, mode, &OracleLimit::default())?)
        }
        "block" => {
            let opts = BlockEstimatorOptions::new(m.eps, m.replicates, seed);
            Ok(estimate_effects(a, law, p, &opts)?.0)
        }
        "amp" => {
            let beta = spec.gaussian_beta().ok_or_else(|| {
                Failure::precondition("amp needs a gaussian interaction (A = βG)".into())
            })?;
            let mut opts = AmpOptions::new(m.amp_iterations, m.replicates, seed);
            opts.minimize = MinimizeOptions::new(m.parisi_atoms);
            opts.paper_literal_amp_estimators = m.paper_literal_amp_estimators;
            Ok(amp_effects(a, beta, law, p, &opts)?.0)
        }
        "glauber" => {
            let cfg = ChainConfig::new(m.sweeps, m.burn_in, spec.seed_for(stream::CHAIN));
            Ok(glauber_effects(a, law, p, &cfg, m.replicates, seed)?)
        }
        other => Err(Failure::spec(format!(
            "unknown method \"{other}\"; expected one of {}",
            METHODS.join(", ")
        ))),
    }
}

fn context(spec: &ExperimentSpec, p: &OutcomeParams) -> (u64, f64, Vec<f64>, f64) {
    (spec.seed, p.tau, p.theta.clone(), p.gamma)
}

fn effects_table(rows: &[(EffectEstimate, &OutcomeParams)], spec: &ExperimentSpec) -> Result<Vec<u8>, Failure> {
    let mut t = Table::new(output::EFFECTS_SCHEMA, &output::EFFECTS_HEADER)?;
    for (est, p) in rows {
        let (seed, tau, theta, gamma) = context(spec, p);
        t.row(effects_row(
            est,
            &RowContext {
                seed,
                tau,
                theta: &theta,
                gamma,
            },
        ))?;
    }
    t.into_bytes()
}

pub fn estimate(spec: &ExperimentSpec, method: &str) -> Result<Artifacts, Failure> {
    let a = spec.interaction()?;
    let p = spec.outcome_params();
    let est = estimate_with(method, spec, &a, &p)?;
    let mut out = Artifacts::default();
    out.add(format!("{method}.csv"), effects_table(&[(est, &p)], spec)?);
    Ok(out)
}

fn simulate(spec: &ExperimentSpec, a: &InteractionMatrix) -> Result<ObservedData, Failure> {
    Ok(simulate_data(
        a,
        &spec.model.covariates,
        &spec.outcome_params(),
        &spec.propensity()?,
        spec.method.data_sweeps,
        spec.seed_for(stream::DATA),
    )?)
}

fn data_table(data: &ObservedData) -> Result<Vec<u8>, Failure> {
    let d = data.x.d();
    let mut header = vec!["unit".to_string(), "t".into(), "y".into()];
    header.extend((1..=d).map(|k| format!("x{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(output::DATA_SCHEMA, &header)?;
    for i in 0..data.n() {
        let mut row = vec![i.to_string(), data.t[i].to_string(), data.y[i].to_string()];
        row.extend(data.x.row(i).iter().map(f64::to_string));
        t.row(row)?;
    }
    t.into_bytes()
}

pub fn generate(spec: &ExperimentSpec) -> Result<Artifacts, Failure> {
    let a = spec.interaction()?;
    let data = simulate(spec, &a)?;
    let mut out = Artifacts::default();
    out.add("interaction.txt", a.to_text().into_bytes());
    if let Some(c) = &data.propensity_coupling {
        out.add("propensity.txt", c.to_text().into_bytes());
    }
    out.add("data.csv", data_table(&data)?);
    Ok(out)
}

fn parse_spin(v: &str, line: usize) -> Result<Spin, Failure> {
    match v.trim() {
        "1" | "+1" => Ok(1),
        "-1" => Ok(-1),
        other => Err(Failure::spec(format!("data.csv line {line}: {other} is not ±1"))),
    }
}

/// Reads `interaction.txt`, `data.csv` and, if present, `propensity.txt`
/// written by `generate`.
pub fn load_data(dir: &Path) -> Result<ObservedData, Failure> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).map_err(|e| Failure::io(format!("{}: {e}", dir.join(name).display())))
    };
    let a = InteractionMatrix::from_text(&read("interaction.txt")?)
        .map_err(|e| Failure::from(e).context("interaction.txt"))?;
    let prop = match std::fs::read_to_string(dir.join("propensity.txt")) {
        Ok(text) => Some(InteractionMatrix::from_text(&text).map_err(|e| Failure::from(e).context("propensity.txt"))?),
        Err(_) => None,
    };
    let text = read("data.csv")?;
    let body = text
        .strip_prefix(&format!("# schema={}\n", output::DATA_SCHEMA))
        .ok_or_else(|| Failure::spec(format!("data.csv: expected schema {}", output::DATA_SCHEMA)))?;
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let d = reader.headers()?.len().saturating_sub(3);
    let (mut y, mut t, mut x) = (Vec::new(), Vec::new(), Vec::new());
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 3;
        if rec.len() != d + 3 {
            return Err(Failure::spec(format!("data.csv line {line}: expected {} fields", d + 3)));
        }
        t.push(parse_spin(&rec[1], line)?);
        y.push(parse_spin(&rec[2], line)?);
        for v in rec.iter().skip(3) {
            x.push(
                v.parse::<f64>()
                    .map_err(|e| Failure::spec(format!("data.csv line {line}: {e}")))?,
            );
        }
    }
    let n = y.len();
    let x = CovariateMatrix::new(n, d, x)?;
    Ok(ObservedData::new(y, t, x, a, prop)?)
}

pub fn fit(spec: &ExperimentSpec, data_dir: Option<&Path>, plug_in: Option<&str>) -> Result<Artifacts, Failure> {
    let data = match data_dir {
        Some(dir) => load_data(dir)?,
        None => simulate(spec, &spec.interaction()?)?,
    };
    let d = data.x.d();
    if d != spec.model.covariates.dim() {
        return Err(Failure::spec(format!(
            "data has {d} covariates, spec declares {}",
            spec.model.covariates.dim()
        )));
    }
    let init = OutcomeParams::new(0.0, vec![0.0; d]).with_gamma(spec.params.gamma);
    let newton = NewtonOptions::default();
    let outcome = fit_mpl(&data, &init, &newton)?;
    let propensity = if d > 0 { Some(fit_propensity(&data, &newton)?) } else { None };
    let mut t = Table::new(
        output::FIT_SCHEMA,
        &[
            "n", "seed", "tau_hat", "theta_hat", "gamma_hat", "grad_norm", "iterations", "converged", "iteration_cap",
            "boundary", "degenerate",
        ],
    )?;
    let f = &outcome.fit;
    t.row([
        data.n().to_string(),
        spec.seed.to_string(),
        outcome.params.tau.to_string(),
        join(&outcome.params.theta),
        propensity.as_ref().map(|p| join(&p.gamma)).unwrap_or_default(),
        f.grad_norm.to_string(),
        f.iterations.to_string(),
        f.flags.converged.to_string(),
        f.flags.iteration_cap.to_string(),
        f.flags.boundary.to_string(),
        f.flags.degenerate.to_string(),
    ])?;
    let mut out = Artifacts::default();
    out.add("fit.csv", t.into_bytes()?);
    if let Some(method) = plug_in {
        let truth = spec.outcome_params();
        let mut fitted = estimate_with(method, spec, &data.a, &outcome.params)?;
        fitted.method = format!("plugin_{}", fitted.method);
        let reference = estimate_with(method, spec, &data.a, &truth)?;
        out.add(
            "plugin.csv",
            effects_table(&[(fitted, &outcome.params), (reference, &truth)], spec)?,
        );
    }
    Ok(out)
}

/// Graphon limit of a dense generator family, if it has one.
fn graphon(kind: &InteractionKind) -> Option<BlockGraphon> {
    match *kind {
        InteractionKind::Zero => Some(BlockGraphon::constant(0.0)),
        InteractionKind::CurieWeiss { beta } => Some(BlockGraphon::constant(beta)),
        InteractionKind::ErdosRenyi { beta, p } => Some(BlockGraphon::constant(beta * p)),
        InteractionKind::BlockModel { alpha, beta } => {
            BlockGraphon::new(vec![alpha, beta, beta, alpha], vec![0.5, 0.5]).ok()
        }
        InteractionKind::RegularGraph { .. } | InteractionKind::Gaussian { .. } => None,
    }
}

pub fn limits(spec: &ExperimentSpec) -> Result<Artifacts, Failure> {
    let m = &spec.method;
    let taus = m.taus.clone().unwrap_or_else(|| vec![spec.params.tau]);
    let levels: Vec<(f64, f64)> = spec
        .model
        .covariates
        .projected_law(&spec.params.theta)?
        .into_iter()
        .map(|(h, w)| (h + spec.params.gamma, w))
        .collect();
    let mut t = Table::new(output::LIMITS_SCHEMA, &["model", "key", "tau", "de_inf", "ie_inf", "fd_gap"])?;
    if let Some(beta) = spec.gaussian_beta() {
        let opts = MinimizeOptions::new(m.parisi_atoms);
        for &tau in &taus {
            let lim = limiting_effects(beta, tau, &levels, &opts)?;
            t.row([
                "parisi".to_string(),
                format!("beta={beta}"),
                tau.to_string(),
                lim.de.to_string(),
                lim.ie.to_string(),
                String::new(),
            ])?;
        }
    } else {
        let w = graphon(&spec.model.interaction).ok_or_else(|| {
            Failure::precondition("sparse regular graphs have no dense graphon limit".into())
        })?;
        for &tau in &taus {
            let lim = limiting_effects_graphon(&w, tau, &levels, m.fd_step)?;
            t.row([
                "graphon".to_string(),
                format!("{:016x}", w.fingerprint()),
                tau.to_string(),
                lim.de.to_string(),
                lim.ie.to_string(),
                lim.fd_gap.to_string(),
            ])?;
        }
    }
    let mut out = Artifacts::default();
    out.add("limits.csv", t.into_bytes()?);
    Ok(out)
}

pub fn mixing(spec: &ExperimentSpec) -> Result<Artifacts, Failure> {
    let n = spec.model.n;
    let a = spec.interaction()?;
    let p = spec.outcome_params();
    let seed = spec.seed_for(stream::DATA);
    let x = spec.model.covariates.sample(n, &mut rng::stream_rng(seed, 0))?;
    let prop = spec.propensity()?;
    let t = if prop.coupling.is_zero() && prop.gamma0.iter().all(|&g| g == 0.0) {
        uniform_spins(n, &mut rng::stream_rng(seed, 1))
    } else {
        sample_treatments(&prop, &x, spec.method.sweeps.max(1) * n, rng::child_seed(seed, 1))?
    };
    let chain_seed = spec.seed_for(stream::CHAIN);
    let mut base = ChainConfig::new(spec.method.sweeps, spec.method.burn_in, chain_seed);
    base.trace = true;
    let mut runs = Vec::new();
    for (k, init) in [(0, ChainInit::AllPlus), (1, ChainInit::AllMinus)] {
        let cfg = ChainConfig {
            init,
            seed: rng::child_seed(chain_seed, k),
            ..base.clone()
        };
        runs.push(run_chain(&cfg, &t, &x, &a, &p)?);
    }
    let gap = (runs[0].mean_magnetization - runs[1].mean_magnetization).abs();
    let mut summary = Table::new(
        output::MIXING_SCHEMA,
        &["method", "n", "seed", "sweeps", "burn_in", "tau", "mean_mag_plus", "mean_mag_minus", "gap"],
    )?;
    summary.row([
        "glauber".to_string(),
        n.to_string(),
        spec.seed.to_string(),
        spec.method.sweeps.to_string(),
        spec.method.burn_in.to_string(),
        p.tau.to_string(),
        runs[0].mean_magnetization.to_string(),
        runs[1].mean_magnetization.to_string(),
        gap.to_string(),
    ])?;
    let mut trace = Table::new(output::TRACE_SCHEMA, &["chain", "sweep", "magnetization", "energy"])?;
    for (name, run) in ["plus", "minus"].iter().zip(&runs) {
        for tp in &run.trace {
            trace.row([
                name.to_string(),
                tp.sweep.to_string(),
                tp.magnetization.to_string(),
                tp.energy.to_string(),
            ])?;
        }
    }
    let mut out = Artifacts::default();
    out.add("mixing.csv", summary.into_bytes()?);
    out.add("trace.csv", trace.into_bytes()?);
    Ok(out)
}

/// Runs every method in `method.bench`; a method whose preconditions fail
/// gets a row carrying the error instead of aborting the run.
pub fn bench(spec: &ExperimentSpec) -> Result<Artifacts, Failure> {
    let a = spec.interaction()?;
    let p = spec.outcome_params();
    let mut t = Table::new(
        output::BENCH_SCHEMA,
        &[
            "method", "n", "seed", "replicates", "de", "de_se", "ie", "ie_se", "wall_secs", "status",
        ],
    )?;
    for method in &spec.method.bench {
        let start = Instant::now();
        let result = estimate_with(method, spec, &a, &p);
        let wall = start.elapsed().as_secs_f64().to_string();
        let row = match result {
            Ok(e) => [
                method.clone(),
                e.n.to_string(),
                spec.seed.to_string(),
                e.replicates.to_string(),
                e.de.value.to_string(),
                e.de.se.to_string(),
                e.ie.value.to_string(),
                e.ie.se.to_string(),
                wall,
                "ok".to_string(),
            ],
            Err(f) if f.code == crate::fail::SPEC => return Err(f),
            Err(f) => [
                method.clone(),
                spec.model.n.to_string(),
                spec.seed.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                wall,
                format!("exit {}: {}", f.code, f.message),
            ],
        };
        t.row(row)?;
    }
    let mut out = Artifacts::default();
    out.add("bench.csv", t.into_bytes()?);
    Ok(out)
}
