//! Explicit-Euler integration of the averaged learning ODEs with
//! convergence diagnostics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{orthonormality_defect, CovarianceModel, GainSpec, WeightMatrix};
use crate::objectives::objective;
use crate::random;
use crate::rules::{check_gains, rule_rhs, RuleId};
use crate::stiefel::{retract_approx, retract_exact};

pub const DIVERGENCE_NORM: f64 = 1e6;
pub const PCA_COSINE_THRESHOLD: f64 = 0.999;
const INIT_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    #[default]
    None,
    /// W ← W + Δ − ½WΔᵀΔ with Δ = η·rhs.
    Approx,
    /// W ← polar factor of W + η·rhs.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationConfig {
    pub step: f64,
    pub max_steps: usize,
    pub projection: ProjectionMode,
    /// Stop once ‖rhs‖_F falls below this.
    pub stop_tolerance: f64,
    /// Record a trajectory sample every this many steps.
    pub sample_every: usize,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            step: 0.01,
            max_steps: 200_000,
            projection: ProjectionMode::None,
            stop_tolerance: 1e-9,
            sample_every: 100,
        }
    }
}

impl IntegrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if !(self.stop_tolerance >= 0.0) {
            return Err(Error::Config("stop_tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub step: usize,
    pub objective: f64,
    pub ortho_defect: f64,
    pub subspace_error: f64,
    pub min_cosine: f64,
    pub rhs_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationOutcome {
    pub trajectory: Vec<TrajectorySample>,
    pub final_w: WeightMatrix,
    /// Number of Euler updates applied.
    pub steps: usize,
    pub converged: bool,
    pub final_rhs_norm: f64,
}

/// Seeded Gaussian n×m matrix mapped onto the Stiefel manifold. Drawn from
/// a separate stream so that equal model and trial seeds stay independent.
pub fn initial_weights(n: usize, m: usize, seed: u64) -> Result<WeightMatrix> {
    let g = random::gaussian_matrix(&mut random::rng_stream(seed, INIT_STREAM), n, m);
    WeightMatrix::new(retract_exact(&g)?)
}

pub fn integrate(
    rule: RuleId,
    model: &CovarianceModel,
    w0: &WeightMatrix,
    gains: &GainSpec,
    cfg: &IntegrationConfig,
) -> Result<IntegrationOutcome> {
    cfg.validate()?;
    check_gains(rule, gains, w0.m())?;
    if w0.n() != model.n() {
        return Err(Error::Shape(format!("W0 has {} rows, model has n = {}", w0.n(), model.n())));
    }
    let c = model.covariance();
    let m = w0.m();
    let kind = rule.objective_kind(gains);
    let omega = rule.constraint_omega(gains);
    let sample = |step: usize, w: &DMatrix<f64>, rhs_norm: f64| -> Result<TrajectorySample> {
        Ok(TrajectorySample {
            step,
            objective: objective(&kind, c, w)?,
            ortho_defect: orthonormality_defect(w, omega.as_deref()),
            subspace_error: subspace_error(w, model, m).unwrap_or(f64::NAN),
            min_cosine: eigvec_alignment(w, model, PCA_COSINE_THRESHOLD).min_cosine,
            rhs_norm,
        })
    };

    let mut w = w0.as_matrix().clone();
    let mut trajectory = Vec::new();
    let mut steps = 0;
    let mut converged;
    let mut rhs_norm;
    loop {
        let rhs = rule_rhs(rule, c, &w, gains)?;
        rhs_norm = rhs.norm();
        converged = rhs_norm < cfg.stop_tolerance;
        let last = converged || steps == cfg.max_steps;
        if steps % cfg.sample_every == 0 || last {
            trajectory.push(sample(steps, &w, rhs_norm)?);
        }
        if last {
            break;
        }
        let delta = rhs * cfg.step;
        w = match cfg.projection {
            ProjectionMode::None => w + delta,
            ProjectionMode::Approx => retract_approx(&w, &delta),
            ProjectionMode::Exact => retract_exact(&(w + delta))?,
        };
        steps += 1;
        let norm = w.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Diverged { step: steps, norm });
        }
    }
    Ok(IntegrationOutcome {
        trajectory,
        final_w: WeightMatrix::new(w)?,
        steps,
        converged,
        final_rhs_norm: rhs_norm,
    })
}

/// ‖P_W − V_mV_mᵀ‖_F with P_W the orthogonal projector onto col(W).
pub fn subspace_error(w: &DMatrix<f64>, model: &CovarianceModel, m: usize) -> Result<f64> {
    if m == 0 || m > model.n() || w.nrows() != model.n() {
        return Err(Error::Shape(format!(
            "W is {}×{}, model n = {}, m = {m}",
            w.nrows(),
            w.ncols(),
            model.n()
        )));
    }
    let q = retract_exact(w)?;
    let vm = model.principal_frame(m);
    Ok((&q * q.transpose() - &vm * vm.transpose()).norm())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMatch {
    pub column: usize,
    pub eigen_index: usize,
    pub cosine: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// One entry per column of W, in column order.
    pub matches: Vec<ColumnMatch>,
    pub min_cosine: f64,
    pub pca: bool,
}

impl AlignmentReport {
    /// Matched eigenvector index for each column.
    pub fn assignment(&self) -> Vec<usize> {
        self.matches.iter().map(|m| m.eigen_index).collect()
    }
}

/// Greedy maximum-|cosine| matching of columns to eigenvectors without
/// replacement. Signs and order are free.
pub fn eigvec_alignment(w: &DMatrix<f64>, model: &CovarianceModel, threshold: f64) -> AlignmentReport {
    let m = w.ncols();
    let n = model.n();
    let proj = model.eigenvectors().transpose() * w;
    let norms: Vec<f64> = (0..m).map(|j| w.column(j).norm()).collect();
    let cos = |i: usize, j: usize| {
        if norms[j] == 0.0 {
            0.0
        } else {
            (proj[(i, j)] / norms[j]).abs()
        }
    };
    let mut col_used = vec![false; m];
    let mut eig_used = vec![false; n];
    let mut matches = Vec::with_capacity(m);
    for _ in 0..m.min(n) {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in (0..m).filter(|&j| !col_used[j]) {
            for i in (0..n).filter(|&i| !eig_used[i]) {
                let c = cos(i, j);
                if best.is_none_or(|(_, _, b)| c > b) {
                    best = Some((j, i, c));
                }
            }
        }
        let (j, i, c) = best.expect("unassigned pair exists");
        col_used[j] = true;
        eig_used[i] = true;
        matches.push(ColumnMatch {
            column: j,
            eigen_index: i,
            cosine: c,
        });
    }
    matches.sort_by_key(|mt| mt.column);
    let min_cosine = matches.iter().map(|mt| mt.cosine).fold(f64::INFINITY, f64::min);
    AlignmentReport {
        pca: min_cosine > threshold,
        matches,
        min_cosine,
    }
}

/// One (rule, seed) integration from seeded initial weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub rule: RuleId,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub rule: RuleId,
    pub seed: u64,
    pub result: Result<TrialSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub steps: usize,
    pub converged: bool,
    pub final_objective: f64,
    pub subspace_error: f64,
    pub alignment: AlignmentReport,
    pub final_rhs_norm: f64,
    pub ortho_defect: f64,
    pub trajectory: Vec<TrajectorySample>,
}

pub fn run_trial(
    rule: RuleId,
    seed: u64,
    model: &CovarianceModel,
    m: usize,
    gains: &GainSpec,
    cfg: &IntegrationConfig,
) -> Result<TrialSummary> {
    let w0 = initial_weights(model.n(), m, seed)?;
    let out = integrate(rule, model, &w0, gains, cfg)?;
    let w = &out.final_w;
    let kind = rule.objective_kind(gains);
    Ok(TrialSummary {
        steps: out.steps,
        converged: out.converged,
        final_objective: objective(&kind, model.covariance(), w)?,
        subspace_error: subspace_error(w, model, m)?,
        alignment: eigvec_alignment(w, model, PCA_COSINE_THRESHOLD),
        final_rhs_norm: out.final_rhs_norm,
        ortho_defect: w.orthonormality_defect(rule.constraint_omega(gains).as_deref()),
        trajectory: out.trajectory,
    })
}

/// Runs independent trials in parallel; results keep the input order.
/// `projection` picks the projection mode per rule.
pub fn run_trials(
    trials: &[Trial],
    model: &CovarianceModel,
    m: usize,
    gains: &GainSpec,
    cfg: &IntegrationConfig,
    projection: impl Fn(RuleId) -> ProjectionMode + Sync,
) -> Vec<TrialOutcome> {
    trials
        .par_iter()
        .map(|t| {
            let cfg = IntegrationConfig {
                projection: projection(t.rule),
                ..cfg.clone()
            };
            TrialOutcome {
                rule: t.rule,
                seed: t.seed,
                result: run_trial(t.rule, t.seed, model, m, gains, &cfg),
            }
        })
        .collect()
}
