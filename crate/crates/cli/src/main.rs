//! Command-line driver.
//!
//! All inputs come from a single JSON configuration document with sections
//! `{problem, algorithm, schedule, certificate, lab, experiment, sweep,
//! demo}`; unknown keys anywhere are rejected so a typo in a parameter name
//! cannot silently fall back to a default. Artifacts are written atomically
//! (temp file then rename) and a JSON manifest carrying the resolved
//! configuration is written last, so any artifact can be regenerated from
//! its manifest alone.
//!
//! Exit codes: 0 success, 1 configuration/validation error, 2 runtime
//! failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sgld_core::certificates::{
    pac_bayes_certificate, per_step_table_csv, stability_certificate, CertificateVariant,
    PacBayesConfig, StepSchedule,
};
use sgld_core::density_lab::{lab_verify, LabCheck, LabSetup};
use sgld_core::experiments::{
    default_probes, estimate_gap, estimate_grad_sq, fence_demo, stability_probe, sweep_csv,
    sweep_report, FenceConfig, SweepPoint,
};
use sgld_core::langevin::{run, GradMode, SgldConfig, Trajectory};
use sgld_core::problems::{
    make_problem, make_problem_with, neighbor_of, FamilyParams, LossFamily, LossKind,
};

#[derive(Parser)]
#[command(
    name = "sgld-lab",
    version,
    about = "SGLD runs, generalization certificates, and density-grid verifications"
)]
struct Cli {
    /// Path to the JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the algorithm seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (defaults to machine parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Preferred table format for artifacts that support both.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run SGLD and store the trajectory.
    Run,
    /// Compute certificates from a stored trajectory or a fresh run.
    Certify {
        /// Trajectory CSV produced by `run`; omitted = fresh replicated runs.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run one density-lab verification.
    Lab {
        /// Which inequality to verify (overrides the config section).
        #[arg(long)]
        check: Option<String>,
    },
    /// Estimate the generalization gap and the stability probe.
    Experiment,
    /// Bound-vs-gap sweep over a parameter grid.
    Sweep,
    /// Fence-sitting demonstration (SGLD vs plain GD).
    Demo,
}

// ---------------------------------------------------------------------------
// configuration document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    kind: LossKind,
    n: usize,
    d: usize,
    seed: u64,
    #[serde(default)]
    clip_level: Option<f64>,
    #[serde(default)]
    params: Option<FamilyParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlgorithmSection {
    beta: f64,
    lambda: f64,
    sigma0: f64,
    grad_mode: GradMode,
    steps: usize,
    seed: u64,
    #[serde(default)]
    snapshot_every: usize,
    #[serde(default)]
    noiseless: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    kind: String,
    #[serde(default)]
    c: Option<f64>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateSection {
    #[serde(default = "default_variants")]
    variants: Vec<String>,
    delta: f64,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default)]
    conservative: bool,
    #[serde(default)]
    kl_radius: Option<f64>,
}

fn default_variants() -> Vec<String> {
    vec![
        "lmc_stability".into(),
        "sgld_succinct".into(),
        "sgld_improved".into(),
        "pac_bayes".into(),
    ]
}

fn default_replicas() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    replicas: usize,
    test_n: usize,
    test_seed: u64,
    #[serde(default = "default_probe_count")]
    probes: usize,
    #[serde(default)]
    neighbor_index: usize,
}

fn default_probe_count() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    steps_grid: Vec<usize>,
    lambda_grid: Vec<f64>,
    beta_grid: Vec<f64>,
    replicas: usize,
    delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabSection {
    check: String,
    #[serde(default)]
    setup: Option<LabSetup>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    problem: Option<ProblemSection>,
    #[serde(default)]
    algorithm: Option<AlgorithmSection>,
    #[serde(default)]
    schedule: Option<ScheduleSection>,
    #[serde(default)]
    certificate: Option<CertificateSection>,
    #[serde(default)]
    lab: Option<LabSection>,
    #[serde(default)]
    experiment: Option<ExperimentSection>,
    #[serde(default)]
    sweep: Option<SweepSection>,
    #[serde(default)]
    demo: Option<FenceConfig>,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    config_hash: String,
    seed: u64,
    artifacts: Vec<String>,
    tool_version: String,
    timestamp_unix: u64,
    config: serde_json::Value,
}

// ---------------------------------------------------------------------------
// error handling: exit 1 for validation, 2 for runtime
// ---------------------------------------------------------------------------

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn runtime(err: sgld_core::Error) -> CliError {
    use sgld_core::Error as E;
    match err {
        E::EtaLambdaTooLarge { .. }
        | E::InvalidArgument(_)
        | E::UnsupportedKind(_)
        | E::BadDimension { .. }
        | E::ScheduleIndexOutOfRange { .. }
        | E::EmptyInput(_) => CliError::Validation(err.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

type CliResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

fn load_config(path: &Option<PathBuf>) -> CliResult<(ConfigDoc, serde_json::Value)> {
    let path = path
        .as_ref()
        .ok_or_else(|| validation("--config PATH is required for this subcommand"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| validation(format!("config is not valid JSON: {e}")))?;
    let doc: ConfigDoc = serde_json::from_value(value.clone())
        .map_err(|e| validation(format!("config schema violation: {e}")))?;
    Ok((doc, value))
}

fn build_problem(section: &ProblemSection) -> CliResult<sgld_core::problems::ProblemInstance> {
    let clip = section.clip_level.unwrap_or(1.0);
    match &section.params {
        Some(params) => {
            let family = LossFamily::new(params.clone(), clip).map_err(runtime)?;
            make_problem_with(family, section.n, section.d, section.seed).map_err(runtime)
        }
        None => {
            if section.clip_level.is_some() {
                let family =
                    LossFamily::new(FamilyParams::defaults(section.kind), clip).map_err(runtime)?;
                make_problem_with(family, section.n, section.d, section.seed).map_err(runtime)
            } else {
                make_problem(section.kind, section.n, section.d, section.seed).map_err(runtime)
            }
        }
    }
}

fn build_schedule(section: &ScheduleSection, steps: usize) -> CliResult<StepSchedule> {
    let horizon = steps.max(1);
    match section.kind.as_str() {
        "constant" => {
            let c = section
                .c
                .ok_or_else(|| validation("schedule.c required for constant"))?;
            StepSchedule::constant(c, horizon).map_err(runtime)
        }
        "polynomial" => {
            let c = section
                .c
                .ok_or_else(|| validation("schedule.c required for polynomial"))?;
            let alpha = section
                .alpha
                .ok_or_else(|| validation("schedule.alpha required for polynomial"))?;
            StepSchedule::polynomial(c, alpha, horizon).map_err(runtime)
        }
        "explicit" => {
            let values = section
                .values
                .clone()
                .ok_or_else(|| validation("schedule.values required for explicit"))?;
            StepSchedule::explicit(values).map_err(runtime)
        }
        other => Err(validation(format!(
            "schedule.kind must be constant|polynomial|explicit, got {other}"
        ))),
    }
}

fn build_sgld_config(doc: &ConfigDoc, seed_override: Option<u64>) -> CliResult<SgldConfig> {
    let alg = doc
        .algorithm
        .as_ref()
        .ok_or_else(|| validation("config section `algorithm` is required"))?;
    let sched = doc
        .schedule
        .as_ref()
        .ok_or_else(|| validation("config section `schedule` is required"))?;
    let schedule = build_schedule(sched, alg.steps)?;
    let config = SgldConfig {
        beta: alg.beta,
        lambda: alg.lambda,
        sigma0: alg.sigma0,
        schedule,
        grad_mode: alg.grad_mode,
        steps: alg.steps,
        seed: seed_override.unwrap_or(alg.seed),
        snapshot_every: alg.snapshot_every,
        noiseless: alg.noiseless,
        init_mean: None,
    };
    config.validate().map_err(runtime)?;
    Ok(config)
}

/// Atomic write: temp file in the target directory, then rename.
fn write_artifact(dir: &Path, name: &str, contents: &str) -> CliResult<String> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create temp file: {e}")))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| CliError::Runtime(format!("cannot write artifact: {e}")))?;
    let path = dir.join(name);
    tmp.persist(&path)
        .map_err(|e| CliError::Runtime(format!("cannot persist {}: {e}", path.display())))?;
    Ok(path.display().to_string())
}

fn write_manifest(
    dir: &Path,
    seed: u64,
    artifacts: Vec<String>,
    config_value: &serde_json::Value,
) -> CliResult<()> {
    let manifest = RunManifest {
        config_hash: hex::encode(Sha256::digest(config_value.to_string().as_bytes())),
        seed,
        artifacts,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: config_value.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(format!("manifest serialization: {e}")))?;
    write_artifact(dir, "manifest.json", &text)?;
    Ok(())
}

fn parse_check(name: &str) -> CliResult<LabCheck> {
    Ok(match name {
        "nonexpansive" => LabCheck::Nonexpansive,
        "hellinger_step_succinct" => LabCheck::HellingerStepSuccinct,
        "hellinger_run_improved" => LabCheck::HellingerRunImproved,
        "l1_steps" => LabCheck::L1Steps,
        "kl_onestep" => LabCheck::KlOnestep,
        "ratio_8lemma" => LabCheck::Ratio8Lemma,
        "continuous_dh" => LabCheck::ContinuousDh,
        "gibbs_stationary" => LabCheck::GibbsStationary,
        other => {
            return Err(validation(format!(
                "unknown lab check `{other}` (expected one of: nonexpansive, \
                 hellinger_step_succinct, hellinger_run_improved, l1_steps, kl_onestep, \
                 ratio_8lemma, continuous_dh, gibbs_stationary)"
            )))
        }
    })
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

fn cmd_run(cli: &Cli) -> CliResult<()> {
    let (doc, value) = load_config(&cli.config)?;
    let problem_section = doc
        .problem
        .as_ref()
        .ok_or_else(|| validation("config section `problem` is required"))?;
    let problem = build_problem(problem_section)?;
    let config = build_sgld_config(&doc, cli.seed)?;
    let trajectory = run(&problem, &config).map_err(runtime)?;

    let mut artifacts = Vec::new();
    artifacts.push(write_artifact(
        &cli.out,
        "trajectory.csv",
        &trajectory.to_csv(),
    )?);
    if config.snapshot_every > 0 {
        artifacts.push(write_artifact(
            &cli.out,
            "snapshots.csv",
            &trajectory.snapshots_csv(),
        )?);
    }
    artifacts.push(write_artifact(
        &cli.out,
        "dataset.csv",
        &problem.dataset.to_csv(),
    )?);
    if trajectory.exited_constant_region {
        eprintln!("note: the iterate left the clamp region on which the gap constant is stated");
    }
    write_manifest(&cli.out, config.seed, artifacts, &value)?;
    println!(
        "run complete: {} steps, final ||g||^2 = {:.6e}",
        config.steps,
        trajectory.steps.last().map_or(0.0, |s| s.grad_sq_norm)
    );
    Ok(())
}

fn cmd_certify(cli: &Cli, trajectory_path: &Option<PathBuf>) -> CliResult<()> {
    let (doc, value) = load_config(&cli.config)?;
    let problem_section = doc
        .problem
        .as_ref()
        .ok_or_else(|| validation("config section `problem` is required"))?;
    let cert_section = doc
        .certificate
        .as_ref()
        .ok_or_else(|| validation("config section `certificate` is required"))?;
    let problem = build_problem(problem_section)?;
    let config = build_sgld_config(&doc, cli.seed)?;
    if config.noiseless {
        return Err(validation(
            "certificates do not cover the noiseless (plain GD) mode".to_string(),
        ));
    }

    let (grad_sq, std_errors) = match trajectory_path {
        Some(path) => {
            if cert_section.conservative {
                return Err(validation(
                    "certificate.conservative needs replicated fresh runs for standard \
                     errors; drop --trajectory or set conservative to false",
                ));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| validation(format!("cannot read trajectory: {e}")))?;
            let t = Trajectory::from_csv(&text).map_err(runtime)?;
            if t.steps.len() < config.steps {
                return Err(validation(format!(
                    "trajectory has {} steps, config expects {}",
                    t.steps.len(),
                    config.steps
                )));
            }
            (t.grad_sq(), None)
        }
        None => {
            let est =
                estimate_grad_sq(&problem, &config, cert_section.replicas).map_err(runtime)?;
            (est.mean, Some(est.std_error))
        }
    };

    let mut artifacts = Vec::new();
    let mut summary = serde_json::Map::new();
    for variant in &cert_section.variants {
        let cert = match variant.as_str() {
            "lmc_stability" | "sgld_succinct" | "sgld_improved" => {
                let v = match variant.as_str() {
                    "lmc_stability" => CertificateVariant::LmcStability,
                    "sgld_succinct" => CertificateVariant::SgldSuccinct,
                    _ => CertificateVariant::SgldImproved,
                };
                let mode = if v == CertificateVariant::SgldImproved {
                    Some(config.grad_mode)
                } else {
                    None
                };
                stability_certificate(
                    problem.l,
                    problem.c,
                    config.beta,
                    &config.schedule,
                    problem.n(),
                    config.steps,
                    v,
                    mode,
                )
                .map_err(runtime)?
            }
            "pac_bayes" => {
                let pb = PacBayesConfig {
                    delta: cert_section.delta,
                    m: cert_section
                        .kl_radius
                        .unwrap_or(config.steps as f64 * problem.l),
                    s: problem.s,
                    l: problem.l,
                    std_errors: std_errors.clone(),
                    conservative: cert_section.conservative,
                };
                pac_bayes_certificate(&grad_sq, &config, &pb, problem.n()).map_err(runtime)?
            }
            other => return Err(validation(format!("unknown certificate variant `{other}`"))),
        };
        summary.insert(variant.clone(), serde_json::json!(cert.bound));
        let name = format!("certificate_{variant}.json");
        artifacts.push(write_artifact(
            &cli.out,
            &name,
            &cert.to_json().map_err(runtime)?,
        )?);
        println!("{variant}: {:.6e}", cert.bound);
    }
    if matches!(cli.format, Format::Csv) {
        let table = per_step_table_csv(&grad_sq, &config).map_err(runtime)?;
        artifacts.push(write_artifact(&cli.out, "per_step_table.csv", &table)?);
    }
    artifacts.push(write_artifact(
        &cli.out,
        "certificates.json",
        &serde_json::to_string_pretty(&summary).unwrap(),
    )?);
    write_manifest(&cli.out, config.seed, artifacts, &value)?;
    Ok(())
}

fn cmd_lab(cli: &Cli, check_flag: &Option<String>) -> CliResult<()> {
    // `lab` can run on defaults without a config file
    let (doc, value) = match &cli.config {
        Some(_) => load_config(&cli.config)?,
        None => (
            ConfigDoc {
                problem: None,
                algorithm: None,
                schedule: None,
                certificate: None,
                lab: None,
                experiment: None,
                sweep: None,
                demo: None,
            },
            serde_json::json!({}),
        ),
    };
    let check_name = check_flag
        .clone()
        .or_else(|| doc.lab.as_ref().map(|l| l.check.clone()))
        .ok_or_else(|| validation("specify --check NAME or a `lab` config section"))?;
    let check = parse_check(&check_name)?;
    let mut setup = doc
        .lab
        .as_ref()
        .and_then(|l| l.setup.clone())
        .unwrap_or_else(|| LabSetup::for_check(check));
    if let Some(seed) = cli.seed {
        setup.seed = seed;
    }
    let report = lab_verify(check, &setup).map_err(runtime)?;
    let mut artifacts = vec![write_artifact(
        &cli.out,
        &format!("lab_{check_name}.csv"),
        &report.to_csv(),
    )?];
    artifacts.push(write_artifact(
        &cli.out,
        &format!("lab_{check_name}.json"),
        &report.to_json().map_err(runtime)?,
    )?);
    write_manifest(&cli.out, setup.seed, artifacts, &value)?;
    println!(
        "{check_name}: {} ({} rows, worst excess {:.3e})",
        if report.pass { "pass" } else { "FAIL" },
        report.rows.len(),
        report.worst_excess()
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("lab check {check_name} failed")))
    }
}

fn cmd_experiment(cli: &Cli) -> CliResult<()> {
    let (doc, value) = load_config(&cli.config)?;
    let problem_section = doc
        .problem
        .as_ref()
        .ok_or_else(|| validation("config section `problem` is required"))?;
    let exp = doc
        .experiment
        .as_ref()
        .ok_or_else(|| validation("config section `experiment` is required"))?;
    let problem = build_problem(problem_section)?;
    let config = build_sgld_config(&doc, cli.seed)?;

    let test = {
        let mut section = problem_section.clone();
        section.n = exp.test_n;
        section.seed = exp.test_seed;
        build_problem(&section)?.dataset
    };
    let gap = estimate_gap(&problem, &config, exp.replicas, &test).map_err(runtime)?;

    // stability probe over a generated neighboring pair
    let idx = exp.neighbor_index.min(problem.n() - 1);
    let z = &problem.dataset.points[idx];
    let flipped =
        sgld_core::problems::DataPoint::new(z.features.iter().map(|x| -x).collect(), -z.label);
    let pair = neighbor_of(&problem, idx, flipped).map_err(runtime)?;
    let probes = default_probes(&problem, &pair, exp.probes, problem_section.seed ^ 0xabcd)
        .map_err(runtime)?;
    let probe =
        stability_probe(&problem, &pair, &config, exp.replicas, &probes).map_err(runtime)?;

    let report = serde_json::json!({
        "gap": gap,
        "stability_probe": probe,
        "probe_count": probes.len(),
        "neighbor_index": idx,
    });
    let artifacts = vec![write_artifact(
        &cli.out,
        "experiment.json",
        &serde_json::to_string_pretty(&report).unwrap(),
    )?];
    write_manifest(&cli.out, config.seed, artifacts, &value)?;
    println!(
        "gap = {:.6e} +- {:.2e} ({} replicas, {} excluded); probe = {:.6e}",
        gap.mean_gap, gap.std_error, gap.replicas, gap.excluded, probe
    );
    Ok(())
}

fn cmd_sweep(cli: &Cli) -> CliResult<()> {
    let (doc, value) = load_config(&cli.config)?;
    let problem_section = doc
        .problem
        .as_ref()
        .ok_or_else(|| validation("config section `problem` is required"))?;
    let sweep = doc
        .sweep
        .as_ref()
        .ok_or_else(|| validation("config section `sweep` is required"))?;
    if sweep.steps_grid.is_empty() || sweep.lambda_grid.is_empty() || sweep.beta_grid.is_empty() {
        return Err(validation("sweep grids must be nonempty"));
    }
    let problem = build_problem(problem_section)?;
    let base = build_sgld_config(&doc, cli.seed)?;
    let exp = doc.experiment.as_ref();
    let test = {
        let mut section = problem_section.clone();
        section.n = exp.map_or(1000, |e| e.test_n);
        section.seed = exp.map_or(problem_section.seed ^ 0x7e57, |e| e.test_seed);
        build_problem(&section)?.dataset
    };

    let mut points = Vec::new();
    for &steps in &sweep.steps_grid {
        for &lambda in &sweep.lambda_grid {
            for &beta in &sweep.beta_grid {
                let mut cfg = base.clone();
                cfg.steps = steps;
                cfg.lambda = lambda;
                cfg.beta = beta;
                if cfg.schedule.n_max() < steps {
                    let section = doc.schedule.as_ref().unwrap();
                    cfg.schedule = build_schedule(section, steps)?;
                }
                cfg.validate().map_err(runtime)?;
                points.push(SweepPoint {
                    config: cfg,
                    delta: sweep.delta,
                    replicas: sweep.replicas,
                });
            }
        }
    }
    let rows = sweep_report(&problem, &test, &points).map_err(runtime)?;
    let mut artifacts = Vec::new();
    artifacts.push(write_artifact(&cli.out, "sweep.csv", &sweep_csv(&rows))?);
    if matches!(cli.format, Format::Json) {
        artifacts.push(write_artifact(
            &cli.out,
            "sweep.json",
            &serde_json::to_string_pretty(&rows).unwrap(),
        )?);
    }
    write_manifest(&cli.out, base.seed, artifacts, &value)?;
    println!("sweep complete: {} rows", rows.len());
    Ok(())
}

fn cmd_demo(cli: &Cli) -> CliResult<()> {
    let (doc, value) = match &cli.config {
        Some(_) => load_config(&cli.config)?,
        None => (
            ConfigDoc {
                problem: None,
                algorithm: None,
                schedule: None,
                certificate: None,
                lab: None,
                experiment: None,
                sweep: None,
                demo: Some(FenceConfig::default()),
            },
            serde_json::json!({}),
        ),
    };
    let mut fence = doc.demo.clone().unwrap_or_default();
    if let Some(seed) = cli.seed {
        fence.seed = seed;
    }
    let report = fence_demo(&fence).map_err(runtime)?;
    let artifacts = vec![write_artifact(
        &cli.out,
        "fence_demo.json",
        &serde_json::to_string_pretty(&report).unwrap(),
    )?];
    write_manifest(&cli.out, fence.seed, artifacts, &value)?;
    println!(
        "SGLD right-well frequency {:.3} +- {:.3}; GD frequency {:.3}; probes: GD {:.4} vs SGLD {:.4}",
        report.sgld_right_frequency,
        report.frequency_se,
        report.gd_right_frequency,
        report.gd_probe,
        report.sgld_probe
    );
    Ok(())
}

fn real_main(cli: &Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| validation(format!("cannot configure {jobs} worker threads: {e}")))?;
    }
    match &cli.command {
        Command::Run => cmd_run(cli),
        Command::Certify { trajectory } => cmd_certify(cli, trajectory),
        Command::Lab { check } => cmd_lab(cli, check),
        Command::Experiment => cmd_experiment(cli),
        Command::Sweep => cmd_sweep(cli),
        Command::Demo => cmd_demo(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
