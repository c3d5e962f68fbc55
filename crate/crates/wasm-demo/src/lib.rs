//! Browser bindings for three views: exact Curie–Weiss effects across `β`,
//! Glauber magnetization traces from opposite starts, and the Parisi limit
//! of the effects across `τ` for Gaussian couplings.
//!
//! Each export returns a flat `Float64Array`; the layout is documented on
//! the function.

use ising_causal::block::{estimate_effects, BlockEstimatorOptions};
use ising_causal::glauber::{run_chain_with_field, ChainConfig, ChainInit};
use ising_causal::model::make_interaction;
use ising_causal::parisi::{limiting_effects, MinimizeOptions};
use ising_causal::{CovariateLaw, InteractionKind, OutcomeParams};
use wasm_bindgen::prelude::*;

const MAX_N: usize = 2000;

fn check_n(n: usize) -> Result<(), String> {
    if n < 2 || n > MAX_N {
        return Err(format!("population size must lie in 2..={MAX_N}"));
    }
    Ok(())
}

/// `[β, DE, DE_se, IE, IE_se]` per `β` in `betas`.
pub fn effects_curve(n: usize, tau: f64, betas: &[f64], replicates: usize, seed: u64) -> Result<Vec<f64>, String> {
    check_n(n)?;
    let p = OutcomeParams::tau_only(tau);
    let opts = BlockEstimatorOptions::new(0.1, replicates.max(2), seed);
    let mut out = Vec::with_capacity(5 * betas.len());
    for &beta in betas {
        let a = make_interaction(&InteractionKind::CurieWeiss { beta }, n, 0).map_err(|e| e.to_string())?;
        let (est, _) = estimate_effects(&a, &CovariateLaw::None, &p, &opts).map_err(|e| e.to_string())?;
        out.extend([beta, est.de.value, est.de.se, est.ie.value, est.ie.se]);
    }
    Ok(out)
}

/// Magnetization after each sweep: the all-plus chain's `sweeps` values,
/// then the all-minus chain's.
pub fn magnetization_traces(n: usize, beta: f64, field: f64, sweeps: usize, seed: u64) -> Result<Vec<f64>, String> {
    check_n(n)?;
    if sweeps == 0 {
        return Err("need at least one sweep".into());
    }
    let a = make_interaction(&InteractionKind::CurieWeiss { beta }, n, 0).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(2 * sweeps);
    for (k, init) in [ChainInit::AllPlus, ChainInit::AllMinus].into_iter().enumerate() {
        let cfg = ChainConfig {
            init,
            trace: true,
            ..ChainConfig::new(sweeps, 0, seed.wrapping_add(k as u64))
        };
        let run = run_chain_with_field(&cfg, &a, vec![field; n]).map_err(|e| e.to_string())?;
        out.extend(run.trace.iter().map(|t| t.magnetization));
    }
    Ok(out)
}

/// `[τ, DE_∞, IE_∞, q]` per `τ` in `taus`, for `A = βG` without covariates.
pub fn parisi_curve(beta: f64, taus: &[f64], atoms: usize) -> Result<Vec<f64>, String> {
    let opts = MinimizeOptions::new(atoms.clamp(1, 3));
    let mut out = Vec::with_capacity(4 * taus.len());
    for &tau in taus {
        let lim = limiting_effects(beta, tau, &[(0.0, 1.0)], &opts).map_err(|e| e.to_string())?;
        out.extend([tau, lim.de, lim.ie, lim.treated.q()]);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = effectsCurve)]
pub fn effects_curve_js(n: usize, tau: f64, betas: &[f64], replicates: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    effects_curve(n, tau, betas, replicates, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = magnetizationTraces)]
pub fn magnetization_traces_js(n: usize, beta: f64, field: f64, sweeps: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    magnetization_traces(n, beta, field, sweeps, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = parisiCurve)]
pub fn parisi_curve_js(beta: f64, taus: &[f64], atoms: usize) -> Result<Vec<f64>, JsError> {
    parisi_curve(beta, taus, atoms).map_err(|e| JsError::new(&e))
}
