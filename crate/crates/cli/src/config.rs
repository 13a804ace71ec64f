//! Experiment configuration: JSON schema, overrides and validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use symmpca::model::CovarianceOptions;
use symmpca::rules::check_gains;
use symmpca::{build_covariance_with, CovarianceModel, FixedPointCase, FixedPointDescriptor, GainSpec, IntegrationConfig, ProjectionMode, RuleId};

pub const SEED_ENV: &str = "SYMMPCA_SEED";

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Strictly descending (or non-increasing with `allow_ties`) spectrum.
    pub eigenvalues: Option<Vec<f64>>,
    /// Dimension when `eigenvalues` is absent; the spectrum is then n, n−1, …, 1.
    pub n: Option<usize>,
    /// Seed for the random eigenbasis.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_ties: bool,
    #[serde(default)]
    pub identity_basis: bool,
}

impl ModelSpec {
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        match (&self.eigenvalues, self.n) {
            (Some(ev), None) => Ok(ev.clone()),
            (Some(ev), Some(n)) if ev.len() == n => Ok(ev.clone()),
            (Some(ev), Some(n)) => bail!("model.n = {n} but {} eigenvalues were given", ev.len()),
            (None, Some(0)) => bail!("model.n must be at least 1"),
            (None, Some(n)) => Ok((1..=n).rev().map(|x| x as f64).collect()),
            (None, None) => bail!("model needs `eigenvalues` or `n`"),
        }
    }

    pub fn build(&self) -> Result<CovarianceModel> {
        let opts = CovarianceOptions {
            allow_ties: self.allow_ties,
            identity_basis: self.identity_basis,
        };
        Ok(build_covariance_with(&self.spectrum()?, self.seed, opts)?)
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointOptions {
    /// Case names; empty means all seven.
    pub cases: Vec<String>,
    /// Random rotations drawn per selection for the rotated cases.
    pub samples: usize,
    /// Frobenius size of a random offset added to every constructed point.
    pub perturbation: f64,
    /// Residual tolerance; defaults to 1e-10·max(1, ‖C‖_F).
    pub tolerance: Option<f64>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            cases: Vec::new(),
            samples: 3,
            perturbation: 0.0,
            tolerance: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Traditional,
    Novel,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    pub objectives: Vec<Objective>,
    /// Also classify Hadamard-mixed N2 points under the novel objective.
    pub include_hadamard: bool,
    /// Explicit descriptors; when empty every ordered selection is enumerated.
    pub descriptors: Vec<FixedPointDescriptor>,
    pub epsilon: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            objectives: vec![Objective::Traditional, Objective::Novel],
            include_hadamard: true,
            descriptors: Vec::new(),
            epsilon: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub m: usize,
    #[serde(default)]
    pub rules: Vec<String>,
    /// Defaults to Θ = Ω = diag(m, m−1, …, 1)/m.
    #[serde(default)]
    pub gains: Option<GainSpec>,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub fixed_points: FixedPointOptions,
    #[serde(default)]
    pub classify: ClassifyOptions,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// A config after overrides, with the model built and every field checked.
#[derive(Debug)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub model: CovarianceModel,
    pub gains: GainSpec,
    pub rules: Vec<RuleId>,
    pub cases: Vec<FixedPointCase>,
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Precedence for the model seed: `--seed`, then `SYMMPCA_SEED`, then the file.
pub fn apply_seed_override(config: &mut ExperimentConfig, flag: Option<u64>, env: Option<&str>) -> Result<()> {
    if let Some(seed) = flag {
        config.model.seed = seed;
    } else if let Some(raw) = env {
        config.model.seed = raw
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV} must be an unsigned integer, got `{raw}`"))?;
    }
    Ok(())
}

pub fn parse_rules(names: &[String]) -> Result<Vec<RuleId>> {
    names.iter().map(|s| s.parse::<RuleId>().map_err(Into::into)).collect()
}

pub fn validate(config: ExperimentConfig) -> Result<Validated> {
    let model = config.model.build().context("invalid model")?;
    let m = config.m;
    if m == 0 || m > model.n() {
        bail!("m = {m} must satisfy 1 <= m <= n = {}", model.n());
    }
    let gains = config.gains.clone().unwrap_or_else(|| GainSpec::linear(m));
    if gains.m() != m || gains.omega.len() != m {
        bail!(
            "gains need {m} entries each, got |theta| = {}, |omega| = {}",
            gains.theta.len(),
            gains.omega.len()
        );
    }
    gains.validate().context("invalid gains")?;
    let rules = parse_rules(&config.rules)?;
    for &rule in &rules {
        check_gains(rule, &gains, m)?;
    }
    config.integration.validate()?;
    if config.integration.projection != ProjectionMode::None {
        if let Some(r) = rules.iter().find(|r| r.uses_omega()) {
            bail!("rule {r} keeps WᵀW = Ω; it needs integration.projection = \"none\"");
        }
    }
    if config.seeds.is_empty() {
        bail!("seeds must not be empty");
    }
    let cases = if config.fixed_points.cases.is_empty() {
        FixedPointCase::ALL.to_vec()
    } else {
        config
            .fixed_points
            .cases
            .iter()
            .map(|c| c.parse::<FixedPointCase>().map_err(Into::into))
            .collect::<Result<_>>()?
    };
    let fp = &config.fixed_points;
    if !(fp.perturbation >= 0.0 && fp.perturbation.is_finite()) {
        bail!("fixed_points.perturbation must be a non-negative number");
    }
    if fp.tolerance.is_some_and(|t| !(t > 0.0)) {
        bail!("fixed_points.tolerance must be positive");
    }
    if !(config.classify.epsilon > 0.0 && config.classify.epsilon < 1.0) {
        bail!("classify.epsilon must lie in (0, 1)");
    }
    for d in &config.classify.descriptors {
        d.validate(model.n()).context("invalid classify descriptor")?;
    }
    Ok(Validated {
        config,
        model,
        gains,
        rules,
        cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        serde_json::from_str(r#"{"model": {"n": 4}, "m": 2, "rules": ["n2s"], "seeds": [0, 1, 2]}"#).unwrap()
    }

    #[test]
    fn defaults() {
        let v = validate(minimal()).unwrap();
        assert_eq!(v.model.eigenvalues(), &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(v.gains, GainSpec::linear(2));
        assert_eq!(v.rules, vec![RuleId::N2S]);
        assert_eq!(v.cases.len(), 7);
        assert_eq!(v.config.integration, IntegrationConfig::default());
    }

    #[test]
    fn seed_precedence() {
        let mut c = minimal();
        apply_seed_override(&mut c, None, Some("9")).unwrap();
        assert_eq!(c.model.seed, 9);
        apply_seed_override(&mut c, Some(4), Some("9")).unwrap();
        assert_eq!(c.model.seed, 4);
        assert!(apply_seed_override(&mut c, None, Some("x")).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let mut c = minimal();
        c.rules.push("foo".into());
        let msg = format!("{:#}", validate(c).unwrap_err());
        assert!(msg.contains("foo") && msg.contains("twj2s"), "{msg}");

        let mut c = minimal();
        c.m = 5;
        assert!(validate(c).is_err());

        let mut c = minimal();
        c.rules = vec!["twj2s".into()];
        c.gains = Some(GainSpec::identity(2));
        assert!(validate(c).is_err());

        let mut c = minimal();
        c.model.eigenvalues = Some(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(validate(c).is_err());

        let mut c = minimal();
        c.rules = vec!["ojaw".into()];
        c.integration.projection = ProjectionMode::Exact;
        assert!(validate(c).is_err());

        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"model": {"n": 4}, "m": 2, "bogus": 1}"#).is_err());
    }
}
