//! Experiment specification files.
//!
//! A spec is TOML with `schema = "causal-ising/1"` and a master `seed`.
//! Every stochastic stage draws its seed from the master by
//! `child_seed(seed, stream)` with the fixed streams in [`stream`].

use std::path::{Path, PathBuf};

use ising_causal::model::make_interaction;
use ising_causal::{rng, CovariateLaw, InteractionKind, InteractionMatrix, OutcomeParams, PropensityParams};
use serde::Deserialize;

use crate::fail::Failure;

pub const SCHEMA: &str = "causal-ising/1";

/// Seed streams split from the master seed.
pub mod stream {
    pub const INTERACTION: u64 = 0;
    pub const ESTIMATOR: u64 = 1;
    pub const DATA: u64 = 2;
    pub const CHAIN: u64 = 3;
    pub const PROPENSITY: u64 = 4;
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema: String,
    pub seed: u64,
    pub model: ModelSpec,
    pub params: ParamsSpec,
    #[serde(default)]
    pub method: MethodSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n: usize,
    pub interaction: InteractionKind,
    #[serde(default = "no_covariates")]
    pub covariates: CovariateLaw,
    #[serde(default)]
    pub propensity: Option<PropensitySpec>,
}

fn no_covariates() -> CovariateLaw {
    CovariateLaw::None
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensitySpec {
    #[serde(default = "zero_kind")]
    pub coupling: InteractionKind,
    #[serde(default)]
    pub gamma0: Vec<f64>,
}

fn zero_kind() -> InteractionKind {
    InteractionKind::Zero
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub tau: f64,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSpec {
    /// Default for `estimate` when `--method` is absent.
    pub name: String,
    pub replicates: usize,
    /// Block estimator accuracy; regularity tolerance `eps²/32`.
    pub eps: f64,
    pub amp_iterations: usize,
    pub parisi_atoms: usize,
    pub paper_literal_amp_estimators: bool,
    pub sweeps: usize,
    pub burn_in: usize,
    /// Heat-bath sweeps used to simulate observed outcomes.
    pub data_sweeps: usize,
    pub fd_step: f64,
    /// `τ` values for `limits`; defaults to `params.tau`.
    pub taus: Option<Vec<f64>>,
    /// Oracle outer expectation: `"full"` or `"monte_carlo"`.
    pub oracle: String,
    /// Methods run by `bench`.
    pub bench: Vec<String>,
}

impl Default for MethodSpec {
    fn default() -> Self {
        Self {
            name: "block".into(),
            replicates: 200,
            eps: 0.1,
            amp_iterations: 30,
            parisi_atoms: 2,
            paper_literal_amp_estimators: false,
            sweeps: 1000,
            burn_in: 100,
            data_sweeps: 200,
            fd_step: 1e-3,
            taus: None,
            oracle: "full".into(),
            bench: vec!["oracle".into(), "block".into(), "glauber".into()],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::spec(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|f| f.context(&path.display().to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Failure::spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.schema != SCHEMA {
            return Err(Failure::spec(format!(
                "field `schema`: expected \"{SCHEMA}\", found \"{}\"",
                self.schema
            )));
        }
        if self.model.n == 0 {
            return Err(Failure::spec("field `model.n`: must be positive".into()));
        }
        let d = self.model.covariates.dim();
        if self.params.theta.len() != d {
            return Err(Failure::spec(format!(
                "field `params.theta`: covariate dimension is {d}, found {} entries",
                self.params.theta.len()
            )));
        }
        if let Some(p) = &self.model.propensity {
            if !p.gamma0.is_empty() && p.gamma0.len() != d {
                return Err(Failure::spec(format!(
                    "field `model.propensity.gamma0`: covariate dimension is {d}, found {} entries",
                    p.gamma0.len()
                )));
            }
        }
        self.model.covariates.validate().map_err(|e| Failure::spec(format!("field `model.covariates`: {e}")))?;
        if self.method.replicates == 0 {
            return Err(Failure::spec("field `method.replicates`: must be positive".into()));
        }
        if !matches!(self.method.oracle.as_str(), "full" | "monte_carlo") {
            return Err(Failure::spec(format!(
                "field `method.oracle`: expected \"full\" or \"monte_carlo\", found \"{}\"",
                self.method.oracle
            )));
        }
        Ok(())
    }

    pub fn seed_for(&self, stream: u64) -> u64 {
        rng::child_seed(self.seed, stream)
    }

    pub fn interaction(&self) -> Result<InteractionMatrix, Failure> {
        Ok(make_interaction(&self.model.interaction, self.model.n, self.seed_for(stream::INTERACTION))?)
    }

    pub fn outcome_params(&self) -> OutcomeParams {
        OutcomeParams::new(self.params.tau, self.params.theta.clone()).with_gamma(self.params.gamma)
    }

    pub fn propensity(&self) -> Result<PropensityParams, Failure> {
        let n = self.model.n;
        let d = self.model.covariates.dim();
        let (kind, gamma0) = match &self.model.propensity {
            Some(p) => (
                p.coupling.clone(),
                if p.gamma0.is_empty() { vec![0.0; d] } else { p.gamma0.clone() },
            ),
            None => (InteractionKind::Zero, vec![0.0; d]),
        };
        Ok(PropensityParams {
            coupling: make_interaction(&kind, n, self.seed_for(stream::PROPENSITY))?,
            gamma0,
        })
    }

    /// `β` of a Gaussian coupling, needed by AMP and the Parisi limit.
    pub fn gaussian_beta(&self) -> Option<f64> {
        match self.model.interaction {
            InteractionKind::Gaussian { beta } => Some(beta),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = "causal-ising/1"
seed = 7
[model]
n = 8
interaction = { kind = "curie_weiss", beta = 0.5 }
[params]
tau = 0.3
"#;

    #[test]
    fn minimal_spec_takes_defaults() {
        let s = ExperimentSpec::parse(MINIMAL).unwrap();
        assert_eq!(s.model.covariates, CovariateLaw::None);
        assert_eq!(s.method.name, "block");
        assert_eq!(s.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn missing_seed_is_a_spec_error() {
        let text = MINIMAL.replace("seed = 7\n", "");
        let err = ExperimentSpec::parse(&text).unwrap_err();
        assert_eq!(err.code, crate::fail::SPEC);
        assert!(err.message.contains("seed"), "{}", err.message);
    }

    #[test]
    fn unknown_fields_and_schema_are_rejected() {
        assert!(ExperimentSpec::parse(&MINIMAL.replace("tau = 0.3", "tau = 0.3\ntua = 1")).is_err());
        let err = ExperimentSpec::parse(&MINIMAL.replace("causal-ising/1", "causal-ising/0")).unwrap_err();
        assert!(err.message.contains("schema"));
    }

    #[test]
    fn theta_must_match_covariates() {
        let text = MINIMAL.replace("[params]", "covariates = { kind = \"rademacher\", d = 2 }\n[params]");
        let err = ExperimentSpec::parse(&text).unwrap_err();
        assert!(err.message.contains("params.theta"));
    }

    #[test]
    fn seed_streams_differ() {
        let s = ExperimentSpec::parse(MINIMAL).unwrap();
        let seeds = [stream::INTERACTION, stream::ESTIMATOR, stream::DATA, stream::CHAIN].map(|k| s.seed_for(k));
        for i in 0..seeds.len() {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }
}
