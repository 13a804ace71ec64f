use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use symmpca::critical::{fixed_point_frame, probe_set, ClassificationReport};
use symmpca::dynamics::{run_trials, Trial, TrajectorySample};
use symmpca::fixed_points::{ordered_selections, power_of_two_blocks, residual_tolerance};
use symmpca::lemmas::{run_lemma_suite, LemmaReport};
use symmpca::random;
use symmpca::{
    classify, construct_fixed_point, delta_j_closed, delta_j_numeric, fp_residual, Error, FixedPointCase,
    FixedPointDescriptor, Mixer, ObjectiveKind, SignedPermutation,
};

use crate::config::{Objective, Validated};

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or invalid configuration (exit 1).
    Config(anyhow::Error),
    /// An integration left the divergence bound (exit 2).
    Diverged(String),
    /// A verification check did not hold (exit 3).
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Diverged(_) => 2,
            Failure::Verification(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Diverged(msg) => write!(f, "divergence: {msg}"),
            Failure::Verification(msg) => write!(f, "verification failed: {msg}"),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

pub const CSV_HEADER: &str = "step,J,ortho_defect,subspace_err,min_cosine,rhs_norm";

fn csv_row(s: &TrajectorySample) -> String {
    format!(
        "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
        s.step, s.objective, s.ortho_defect, s.subspace_error, s.min_cosine, s.rhs_norm
    )
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(contents.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub rule: String,
    pub seed: u64,
    pub pca_verdict: bool,
    pub subspace_err: f64,
    pub steps: usize,
    #[serde(rename = "final_J")]
    pub final_j: f64,
    pub converged: bool,
    pub min_cosine: f64,
}

pub fn run(v: &Validated, out_dir: &Path) -> Result<(), Failure> {
    if v.rules.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!("`rules` must list at least one rule for `run`")));
    }
    let trials: Vec<Trial> = v
        .rules
        .iter()
        .flat_map(|&rule| v.config.seeds.iter().map(move |&seed| Trial { rule, seed }))
        .collect();
    let cfg = &v.config.integration;
    let outcomes = run_trials(&trials, &v.model, v.config.m, &v.gains, cfg, |_| cfg.projection);

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_file(&out_dir.join("model.json"), &to_json(&v.model))?;
    let mut summary = Vec::new();
    let mut diverged = Vec::new();
    for o in &outcomes {
        match &o.result {
            Ok(s) => {
                let mut csv = String::from(CSV_HEADER);
                csv.push('\n');
                for sample in &s.trajectory {
                    csv.push_str(&csv_row(sample));
                    csv.push('\n');
                }
                write_file(&out_dir.join(format!("{}_seed{}.csv", o.rule, o.seed)), &csv)?;
                println!(
                    "{:6} seed {:<4} steps {:>7} converged {:5} pca {:5} min|cos| {:.6} subspace_err {:.3e} J {:.12}",
                    o.rule.as_str(),
                    o.seed,
                    s.steps,
                    s.converged,
                    s.alignment.pca,
                    s.alignment.min_cosine,
                    s.subspace_error,
                    s.final_objective
                );
                summary.push(SummaryRow {
                    rule: o.rule.to_string(),
                    seed: o.seed,
                    pca_verdict: s.alignment.pca,
                    subspace_err: s.subspace_error,
                    steps: s.steps,
                    final_j: s.final_objective,
                    converged: s.converged,
                    min_cosine: s.alignment.min_cosine,
                });
            }
            Err(e @ Error::Diverged { .. }) => diverged.push(format!("{} seed {}: {e}", o.rule, o.seed)),
            Err(e) => return Err(Failure::Config(anyhow::anyhow!("{} seed {}: {e}", o.rule, o.seed))),
        }
    }
    write_file(&out_dir.join("summary.json"), &to_json(&summary))?;
    if diverged.is_empty() {
        Ok(())
    } else {
        Err(Failure::Diverged(diverged.join("; ")))
    }
}

#[derive(Debug, Serialize)]
pub struct CaseResidual {
    pub case: FixedPointCase,
    pub points: usize,
    pub max_residual: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct FixedPointReport {
    pub tolerance: f64,
    pub perturbation: f64,
    pub cases: Vec<CaseResidual>,
    pub passed: bool,
}

fn descriptors_for(case: FixedPointCase, v: &Validated, rng: &mut random::Rng) -> Result<Vec<FixedPointDescriptor>> {
    let n = v.model.n();
    let m = v.config.m;
    let samples = v.config.fixed_points.samples.max(1);
    let mut out = Vec::new();
    for sel in ordered_selections(n, m) {
        let selection = SignedPermutation::selecting(n, &sel)?.with_signs(random::random_signs(rng, n))?;
        let base = FixedPointDescriptor {
            case,
            m,
            selection,
            rotation: None,
            mixer: None,
            omega: None,
        };
        match case {
            FixedPointCase::T | FixedPointCase::TwJ1 | FixedPointCase::TwC1 | FixedPointCase::N1 => {
                for _ in 0..samples {
                    let mut d = base.clone();
                    d.rotation = Some(random::random_orthogonal(rng, m));
                    if case == FixedPointCase::TwC1 {
                        d.omega = Some(v.gains.omega.clone());
                    }
                    out.push(d);
                }
            }
            FixedPointCase::TwJ2 => out.push(base),
            FixedPointCase::TwC2 => out.push(base.with_omega(v.gains.omega.clone())),
            FixedPointCase::N2 => {
                let mut mixer = Mixer::hadamard(&power_of_two_blocks(m))?;
                mixer.inner_perm = random::random_permutation(rng, m);
                out.push(FixedPointDescriptor { mixer: Some(mixer), ..base });
            }
        }
    }
    Ok(out)
}

pub fn verify_fixed_points(v: &Validated, tolerance: Option<f64>, out_dir: Option<&Path>) -> Result<(), Failure> {
    let opts = &v.config.fixed_points;
    let tol = tolerance.or(opts.tolerance).unwrap_or_else(|| residual_tolerance(&v.model));
    let mut rng = random::rng(v.config.model.seed ^ 0xf1_7ed);
    let mut cases = Vec::new();
    for &case in &v.cases {
        let mut worst = 0.0_f64;
        let descs = descriptors_for(case, v, &mut rng)?;
        for d in &descs {
            let mut w = construct_fixed_point(d, &v.model).map_err(anyhow::Error::from)?.into_inner();
            if opts.perturbation > 0.0 {
                let g = random::gaussian_matrix(&mut rng, w.nrows(), w.ncols());
                w += &g * (opts.perturbation / g.norm());
            }
            worst = worst.max(fp_residual(case, &v.model, &w, &v.gains).map_err(anyhow::Error::from)?);
        }
        println!("{:5} points {:>4} max residual {:.3e} {}", case.to_string(), descs.len(), worst, if worst < tol { "ok" } else { "FLAGGED" });
        cases.push(CaseResidual {
            case,
            points: descs.len(),
            max_residual: worst,
            passed: worst < tol,
        });
    }
    let report = FixedPointReport {
        tolerance: tol,
        perturbation: opts.perturbation,
        passed: cases.iter().all(|c| c.passed),
        cases,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("fixed_points.json"), &to_json(&report))?;
    }
    if report.passed {
        Ok(())
    } else {
        let bad: Vec<String> = report
            .cases
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({:.3e})", c.case, c.max_residual))
            .collect();
        Err(Failure::Verification(format!("residual above {tol:e} for {}", bad.join(", "))))
    }
}

#[derive(Debug, Serialize)]
pub struct ClassifyRow {
    pub objective: Objective,
    #[serde(flatten)]
    pub report: ClassificationReport,
    /// max |numeric − ε²·closed| / (10 ε³ ‖C‖_F) over the probe set.
    pub numeric_deviation: f64,
    pub numeric_agrees: bool,
}

fn kind_for(objective: Objective, v: &Validated) -> ObjectiveKind {
    match objective {
        Objective::Traditional => ObjectiveKind::traditional(&v.gains),
        Objective::Novel => ObjectiveKind::Novel,
    }
}

fn classify_jobs(v: &Validated) -> Result<Vec<(Objective, FixedPointDescriptor)>> {
    let opts = &v.config.classify;
    let n = v.model.n();
    let m = v.config.m;
    let mut jobs = Vec::new();
    if !opts.descriptors.is_empty() {
        for &o in &opts.objectives {
            for d in &opts.descriptors {
                if o == Objective::Traditional && d.case == FixedPointCase::N2 {
                    continue;
                }
                jobs.push((o, d.clone()));
            }
        }
        return Ok(jobs);
    }
    for &o in &opts.objectives {
        for sel in ordered_selections(n, m) {
            jobs.push((o, FixedPointDescriptor::eigenbasis(SignedPermutation::selecting(n, &sel)?, m)));
        }
    }
    if opts.include_hadamard && opts.objectives.contains(&Objective::Novel) && m >= 2 {
        for sel in ordered_selections(n, m) {
            let mixer = Mixer::hadamard(&power_of_two_blocks(m))?;
            jobs.push((Objective::Novel, FixedPointDescriptor::mixed(SignedPermutation::selecting(n, &sel)?, mixer)));
        }
    }
    Ok(jobs)
}

pub fn classify_cmd(v: &Validated, out_dir: Option<&Path>) -> Result<(), Failure> {
    let eps = v.config.classify.epsilon;
    let cnorm = v.model.covariance().norm();
    let mut rows = Vec::new();
    let mut problems = Vec::new();
    for (objective, desc) in classify_jobs(v)? {
        let kind = kind_for(objective, v);
        let c = match classify(&kind, &v.model, &desc) {
            Ok(c) => c,
            Err(e @ Error::NotFixedPoint { .. }) => {
                problems.push(format!("{objective:?} {} {:?}: {e}", desc.case, &desc.selection.perm()[..desc.m]));
                continue;
            }
            Err(e) => return Err(Failure::Config(e.into())),
        };
        let frame = fixed_point_frame(&desc, &v.model).map_err(anyhow::Error::from)?;
        let mut deviation = 0.0_f64;
        for probe in probe_set(&kind, &v.model, &desc).map_err(anyhow::Error::from)? {
            let closed = delta_j_closed(&kind, &v.model, &desc, &probe).map_err(anyhow::Error::from)?;
            let numeric = delta_j_numeric(&kind, &v.model, &frame, &probe, eps).map_err(anyhow::Error::from)?;
            deviation = deviation.max((numeric - eps * eps * closed).abs() / (10.0 * eps.powi(3) * cnorm.max(1.0)));
        }
        let agrees = deviation <= 1.0;
        if !agrees {
            problems.push(format!("{objective:?} {}: closed/numeric deviation ratio {deviation:.3}", desc.case));
        }
        rows.push(ClassifyRow {
            objective,
            report: c.report(&desc),
            numeric_deviation: deviation,
            numeric_agrees: agrees,
        });
    }
    let json = to_json(&rows);
    print!("{json}");
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("classify.json"), &json)?;
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(problems.join("; ")))
    }
}

pub fn lemma_check(seed: u64, trials: usize, out_dir: Option<&Path>) -> Result<(), Failure> {
    if trials == 0 {
        return Err(Failure::Config(anyhow::anyhow!("--trials must be at least 1")));
    }
    let reports: Vec<LemmaReport> = run_lemma_suite(seed, trials);
    for r in &reports {
        println!(
            "{:28} {:>6} trials {:>5} failures  worst value/bound {:.3e}{}",
            r.name,
            r.trials,
            r.failures,
            r.worst_ratio,
            r.first_failure_seed.map_or(String::new(), |s| format!("  first failing seed {s}"))
        );
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("lemmas.json"), &to_json(&reports))?;
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} (seed {})", r.name, r.first_failure_seed.unwrap_or(seed)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(format!("lemma failures: {}", failed.join(", "))))
    }
}

/// `--out`, else the config's `output_dir`.
pub fn output_dir(flag: Option<PathBuf>, v: &Validated) -> Option<PathBuf> {
    flag.or_else(|| v.config.output_dir.clone())
}
