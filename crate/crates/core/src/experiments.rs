//! Monte Carlo estimation of what the certificates are bounding: actual
//! generalization gaps, uniform-stability probes over neighboring pairs,
//! bound-vs-gap sweeps, and the fence-sitting demonstration.
//!
//! Replicas are embarrassingly parallel; every replica derives its own seed
//! from the base seed and the reduction order is fixed by replica index, so
//! results are identical however many worker threads run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{
    pac_bayes_certificate, stability_certificate, Certificate, CertificateVariant, PacBayesConfig,
};
use crate::error::{Error, Result};
use crate::langevin::{run, SgldConfig, Trajectory};
use crate::numeric::{ksum, mean_se};
use crate::problems::{Dataset, NeighborPair, ProblemInstance};
use crate::rng::replica_seed;

/// Monte Carlo estimate of the expected generalization gap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapEstimate {
    pub mean_gap: f64,
    pub std_error: f64,
    pub replicas: usize,
    pub test_size: usize,
    /// Replicas dropped for non-finite parameters.
    pub excluded: usize,
}

fn run_replicas(
    problem: &ProblemInstance,
    config: &SgldConfig,
    replicas: usize,
) -> Result<Vec<Option<Trajectory>>> {
    let outcomes: Vec<Option<Trajectory>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut cfg = config.clone();
            cfg.seed = replica_seed(config.seed, r as u64);
            match run(problem, &cfg) {
                Ok(t) => Ok(Some(t)),
                // a diverged replica is excluded and counted; anything else
                // is a real error
                Err(Error::DivergedAtStep { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let diverged = outcomes.iter().filter(|o| o.is_none()).count();
    if diverged * 10 > replicas {
        return Err(Error::TooManyDiverged {
            diverged,
            total: replicas,
        });
    }
    Ok(outcomes)
}

/// Mean over replicas of (mean clipped test loss − mean clipped train loss)
/// at the final iterate.
pub fn estimate_gap(
    problem: &ProblemInstance,
    config: &SgldConfig,
    replicas: usize,
    test: &Dataset,
) -> Result<GapEstimate> {
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    config.validate()?;
    let outcomes = run_replicas(problem, config, replicas)?;
    let mut gaps = Vec::with_capacity(replicas);
    let mut excluded = 0;
    for t in outcomes.iter() {
        match t {
            Some(t) => {
                let test_loss = problem.mean_clipped_loss(&t.final_w, test)?;
                let train_loss = problem.mean_clipped_loss(&t.final_w, &problem.dataset)?;
                gaps.push(test_loss - train_loss);
            }
            None => excluded += 1,
        }
    }
    let (mean_gap, std_error) = mean_se(&gaps);
    Ok(GapEstimate {
        mean_gap,
        std_error,
        replicas: gaps.len(),
        test_size: test.n(),
        excluded,
    })
}

/// Estimate of the per-step `E‖g_k‖²` over replicas, with standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradSqEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub replicas: usize,
}

/// Replica-mean of the recorded squared gradient norms at every step.
pub fn estimate_grad_sq(
    problem: &ProblemInstance,
    config: &SgldConfig,
    replicas: usize,
) -> Result<GradSqEstimate> {
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    let outcomes = run_replicas(problem, config, replicas)?;
    let kept: Vec<&Trajectory> = outcomes.iter().flatten().collect();
    let mut mean = Vec::with_capacity(config.steps);
    let mut std_error = Vec::with_capacity(config.steps);
    for k in 0..config.steps {
        let xs: Vec<f64> = kept.iter().map(|t| t.steps[k].grad_sq_norm).collect();
        let (m, se) = mean_se(&xs);
        mean.push(m);
        std_error.push(se);
    }
    Ok(GradSqEstimate {
        mean,
        std_error,
        replicas: kept.len(),
    })
}

/// Sampled uniform-stability probe: max over probe points of the absolute
/// difference in expected loss between paired runs on the two sides of a
/// neighboring pair. Pairing shares noise seeds; only the data differ.
pub fn stability_probe(
    problem: &ProblemInstance,
    pair: &NeighborPair,
    config: &SgldConfig,
    replicas: usize,
    probes: &[crate::problems::DataPoint],
) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::EmptyInput("probe set".into()));
    }
    if replicas < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 replicas, got {replicas}"
        )));
    }
    let base_problem = problem.with_dataset(pair.base.clone())?;
    let variant_problem = problem.with_dataset(pair.variant.clone())?;
    let base_runs = run_replicas(&base_problem, config, replicas)?;
    let variant_runs = run_replicas(&variant_problem, config, replicas)?;

    let mut worst = 0.0_f64;
    for z in probes {
        let mut diffs = Vec::new();
        for (a, b) in base_runs.iter().zip(&variant_runs) {
            if let (Some(a), Some(b)) = (a, b) {
                diffs.push(problem.loss(&a.final_w, z)? - problem.loss(&b.final_w, z)?);
            }
        }
        if diffs.is_empty() {
            return Err(Error::TooManyDiverged {
                diverged: replicas,
                total: replicas,
            });
        }
        let mean = ksum(diffs.iter().copied()) / diffs.len() as f64;
        worst = worst.max(mean.abs());
    }
    Ok(worst)
}

/// The standard probe set: points from the family generator plus the two
/// differing points of the pair.
pub fn default_probes(
    problem: &ProblemInstance,
    pair: &NeighborPair,
    count: usize,
    seed: u64,
) -> Result<Vec<crate::problems::DataPoint>> {
    let fresh =
        crate::problems::make_problem_with(problem.family.clone(), count.max(2), problem.d, seed)?;
    let mut probes = fresh.dataset.points;
    probes.push(pair.base.points[pair.differing_index].clone());
    probes.push(pair.variant.points[pair.differing_index].clone());
    Ok(probes)
}

/// Report of the fence-sitting demonstration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FenceReport {
    pub replicas: usize,
    pub sgld_right_frequency: f64,
    /// Binomial standard error of the SGLD frequency.
    pub frequency_se: f64,
    pub gd_right_frequency: f64,
    pub sgld_probe: f64,
    pub gd_probe: f64,
}

/// Configuration of the fence-sitting demonstration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FenceConfig {
    pub n: usize,
    pub replicas: usize,
    pub steps: usize,
    pub eta: f64,
    pub beta: f64,
    pub seed: u64,
    /// Offset of the (otherwise ridge-exact) initialization used by the
    /// deterministic runs and the probes.
    pub init_offset: f64,
    pub probe_count: usize,
}

impl Default for FenceConfig {
    fn default() -> Self {
        FenceConfig {
            n: 50,
            replicas: 500,
            steps: 250,
            eta: 0.05,
            beta: 10.0,
            seed: 7,
            init_offset: 1e-3,
            probe_count: 64,
        }
    }
}

/// Build the exactly symmetric double-well problem for the demonstration:
/// shift/tilt scalars come in ± pairs so the empirical risk is even and the
/// ridge sits at zero.
pub fn symmetric_double_well(n: usize, seed: u64) -> Result<ProblemInstance> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(
            "need an even n to symmetrize".into(),
        ));
    }
    let raw = crate::problems::make_problem(crate::problems::LossKind::DoubleWell1d, n, 1, seed)?;
    let mut points = Vec::with_capacity(n);
    for z in raw.dataset.points.iter().take(n / 2) {
        points.push(z.clone());
        points.push(crate::problems::DataPoint::new(
            vec![-z.features[0]],
            -z.label,
        ));
    }
    raw.with_dataset(Dataset::new(points)?)
}

/// Landing-side frequencies and stability probes for SGLD vs plain GD on the
/// symmetric double well, starting at the ridge.
pub fn fence_demo(fence: &FenceConfig) -> Result<FenceReport> {
    let problem = symmetric_double_well(fence.n, fence.seed)?;
    let schedule = crate::certificates::StepSchedule::constant(fence.eta, fence.steps)?;
    // SGLD draws one example per round; the deterministic comparison uses the
    // full gradient with the noise suppressed, so its only randomness is the
    // (irrelevant) initialization jitter
    let make_config = |noiseless: bool, offset: f64| SgldConfig {
        beta: fence.beta,
        lambda: 0.0,
        sigma0: 1e-6,
        schedule: schedule.clone(),
        grad_mode: if noiseless {
            crate::langevin::GradMode::Full
        } else {
            crate::langevin::GradMode::Single
        },
        steps: fence.steps,
        seed: fence.seed,
        snapshot_every: 0,
        noiseless,
        init_mean: Some(vec![offset]),
    };

    // landing frequencies from a ridge-exact start
    let sgld_cfg = make_config(false, 0.0);
    let outcomes = run_replicas(&problem, &sgld_cfg, fence.replicas)?;
    let landed: Vec<f64> = outcomes
        .iter()
        .flatten()
        .map(|t| if t.final_w[0] > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let sgld_right = ksum(landed.iter().copied()) / landed.len() as f64;
    let frequency_se = (sgld_right * (1.0 - sgld_right) / landed.len() as f64).sqrt();

    // deterministic runs from an epsilon-offset start all land on one side
    let gd_cfg = make_config(true, fence.init_offset);
    let gd_outcomes = run_replicas(&problem, &gd_cfg, fence.replicas)?;
    let gd_landed: Vec<f64> = gd_outcomes
        .iter()
        .flatten()
        .map(|t| if t.final_w[0] > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let gd_right = ksum(gd_landed.iter().copied()) / gd_landed.len() as f64;

    // ridge-shifting neighbor pair: move one shift scalar to the far end,
    // keeping the tilt, so the variant's ridge moves past the init offset
    let i_star = 0;
    let z = &problem.dataset.points[i_star];
    let replacement =
        crate::problems::DataPoint::new(vec![1.0_f64.min(z.features[0] + 2.0)], z.label);
    let pair = crate::problems::neighbor_of(&problem, i_star, replacement)?;
    let probes = default_probes(&problem, &pair, fence.probe_count, fence.seed ^ 0x5eed)?;

    let sgld_probe = stability_probe(
        &problem,
        &pair,
        &make_config(false, fence.init_offset),
        fence.replicas,
        &probes,
    )?;
    let gd_probe = stability_probe(&problem, &pair, &gd_cfg, fence.replicas, &probes)?;

    Ok(FenceReport {
        replicas: landed.len(),
        sgld_right_frequency: sgld_right,
        frequency_se,
        gd_right_frequency: gd_right,
        sgld_probe,
        gd_probe,
    })
}

/// One row of a bound-vs-gap sweep. A row whose computation failed carries
/// the error text in `status` and NaN metrics instead of aborting the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub schedule: String,
    pub n_steps: usize,
    pub n: usize,
    pub lambda: f64,
    pub beta: f64,
    pub lmc_stability: f64,
    pub sgld_succinct: f64,
    pub sgld_improved: f64,
    pub pac_bayes: f64,
    pub gap_mean: f64,
    pub gap_se: f64,
    pub excluded: usize,
    pub exited_constant_region: bool,
    pub status: String,
}

/// Inputs for one sweep row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub config: SgldConfig,
    pub delta: f64,
    pub replicas: usize,
}

/// Evaluate every certificate and the measured gap on each grid point.
pub fn sweep_report(
    problem: &ProblemInstance,
    test: &Dataset,
    points: &[SweepPoint],
) -> Result<Vec<SweepRow>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("sweep grid".into()));
    }
    Ok(points
        .iter()
        .map(|pt| {
            let cfg = &pt.config;
            let mut row = SweepRow {
                schedule: format!("{:?}", cfg.schedule.kind()),
                n_steps: cfg.steps,
                n: problem.n(),
                lambda: cfg.lambda,
                beta: cfg.beta,
                lmc_stability: f64::NAN,
                sgld_succinct: f64::NAN,
                sgld_improved: f64::NAN,
                pac_bayes: f64::NAN,
                gap_mean: f64::NAN,
                gap_se: f64::NAN,
                excluded: 0,
                exited_constant_region: false,
                status: "ok".into(),
            };
            let filled = (|| -> Result<()> {
                let certs = certify_all(problem, cfg, pt.replicas, pt.delta)?;
                let gap = estimate_gap(problem, cfg, pt.replicas, test)?;
                row.lmc_stability = certs.lmc_stability.bound;
                row.sgld_succinct = certs.sgld_succinct.bound;
                row.sgld_improved = certs.sgld_improved.bound;
                row.pac_bayes = certs.pac_bayes.bound;
                row.gap_mean = gap.mean_gap;
                row.gap_se = gap.std_error;
                row.excluded = gap.excluded;
                row.exited_constant_region = run(problem, cfg)?.exited_constant_region;
                Ok(())
            })();
            if let Err(e) = filled {
                row.status = format!("failed: {e}");
            }
            row
        })
        .collect())
}

/// All four certificates for one configuration (gradient norms estimated
/// over replicas for the PAC-Bayes variant).
pub struct AllCertificates {
    pub lmc_stability: Certificate,
    pub sgld_succinct: Certificate,
    pub sgld_improved: Certificate,
    pub pac_bayes: Certificate,
}

pub fn certify_all(
    problem: &ProblemInstance,
    config: &SgldConfig,
    replicas: usize,
    delta: f64,
) -> Result<AllCertificates> {
    let grads = estimate_grad_sq(problem, config, replicas)?;
    let pb = PacBayesConfig {
        delta,
        m: config.steps as f64 * problem.l,
        s: problem.s,
        l: problem.l,
        std_errors: Some(grads.std_error.clone()),
        conservative: true,
    };
    let pac_bayes = pac_bayes_certificate(&grads.mean, config, &pb, problem.n())?;
    let stab = |variant| {
        stability_certificate(
            problem.l,
            problem.c,
            config.beta,
            &config.schedule,
            problem.n(),
            config.steps,
            variant,
            None,
        )
    };
    Ok(AllCertificates {
        lmc_stability: stab(CertificateVariant::LmcStability)?,
        sgld_succinct: stab(CertificateVariant::SgldSuccinct)?,
        sgld_improved: stability_certificate(
            problem.l,
            problem.c,
            config.beta,
            &config.schedule,
            problem.n(),
            config.steps,
            CertificateVariant::SgldImproved,
            Some(config.grad_mode),
        )?,
        pac_bayes,
    })
}

/// CSV for sweep rows.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "schedule,n_steps,n,lambda,beta,lmc_stability,sgld_succinct,sgld_improved,pac_bayes,gap_mean,gap_se,excluded,exited_constant_region,status\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.schedule.replace(',', ";"),
            r.n_steps,
            r.n,
            r.lambda,
            r.beta,
            r.lmc_stability,
            r.sgld_succinct,
            r.sgld_improved,
            r.pac_bayes,
            r.gap_mean,
            r.gap_se,
            r.excluded,
            r.exited_constant_region,
            r.status.replace(',', ";")
        ));
    }
    out
}
