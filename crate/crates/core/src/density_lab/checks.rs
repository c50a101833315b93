//! Machine-checkable divergence inequalities, run on the grid.
//!
//! Each check produces a [`LabReport`] with one row per probed step: the
//! measured quantity, the theoretical cap, the discretization slack in use,
//! and a pass flag. The grid computation is the measurement; the cap comes
//! from the inequality being verified. Caps are stated with the family's
//! analytic gap constant, so a generic (non-adversarial) neighboring pair
//! usually sits well below them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::evolve::{evolve_fokker_planck, propagate, push_through_kernel, PropagateMode};
use super::grid::{
    divergence, expectation, gaussian_grid, make_grid, DensityGrid, DivergenceKind, GridInit,
};
use super::DriftSpec;
use crate::certificates::{kl_bound_recursive, prior_sequence, StepSchedule};
use crate::error::{Error, Result};
use crate::langevin::{transform_step, GradMode, SgldConfig};
use crate::numeric::normal_pdf;
use crate::problems::{make_problem, neighbor_of, DataPoint, LossKind, ProblemInstance};
use crate::rng::{stream, Domain};

/// The verifiable inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabCheck {
    /// f-divergences cannot grow under a shared map + convolution.
    Nonexpansive,
    /// Differing-example step raises squared Hellinger by at most `βL²η/8`.
    HellingerStepSuccinct,
    /// Mixture run: per-step growth `≤ βL²η/n²` and final
    /// `√D_H ≤ (√βL/2n)·√Ση`.
    HellingerRunImproved,
    /// `∫|p_k − p_k′| ≤ 2k/n`.
    L1Steps,
    /// One-step KL contraction against the Gaussian prior sequence.
    KlOnestep,
    /// `∫u⁴/v³ ≤ 8` for `t ≤ ln2/(βL²)` under a bounded drift difference.
    Ratio8Lemma,
    /// Continuous-time Hellinger growth rate `≤ βL²/(8n²)` for drift gap `L/n`.
    ContinuousDh,
    /// The Gibbs density is a fixed point of the Fokker-Planck evolution.
    GibbsStationary,
}

impl std::fmt::Display for LabCheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LabCheck::Nonexpansive => "nonexpansive",
            LabCheck::HellingerStepSuccinct => "hellinger_step_succinct",
            LabCheck::HellingerRunImproved => "hellinger_run_improved",
            LabCheck::L1Steps => "l1_steps",
            LabCheck::KlOnestep => "kl_onestep",
            LabCheck::Ratio8Lemma => "ratio_8lemma",
            LabCheck::ContinuousDh => "continuous_dh",
            LabCheck::GibbsStationary => "gibbs_stationary",
        };
        f.write_str(s)
    }
}

/// Inputs shared by the checks; [`LabSetup::for_check`] fills the defaults
/// each check was calibrated at.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabSetup {
    pub seed: u64,
    pub grid_points: usize,
    pub steps: usize,
    pub eta: f64,
    pub beta: f64,
    pub lambda: f64,
    pub sigma0: f64,
    /// Dataset size for pair-driven checks.
    pub n: usize,
    /// Absolute slack on the inequality, set by the Gaussian closed-form
    /// calibration of the grid.
    pub slack: f64,
    /// Slack on the final aggregate row where a check has one.
    pub slack_final: f64,
    /// Density pairs for the non-expansiveness sweep.
    pub pairs: usize,
    /// Drift amplitude for the synthetic-drift ratio check.
    pub drift_bound: f64,
    /// Time horizon for continuous-time checks.
    pub total_time: f64,
}

impl Default for LabSetup {
    fn default() -> Self {
        LabSetup {
            seed: 2024,
            grid_points: 2048,
            steps: 50,
            eta: 0.05,
            beta: 2.0,
            lambda: 0.0,
            sigma0: 1.0,
            n: 10,
            slack: 1e-4,
            slack_final: 1e-3,
            pairs: 50,
            drift_bound: 1.0,
            total_time: 0.25,
        }
    }
}

impl LabSetup {
    pub fn for_check(check: LabCheck) -> Self {
        let mut s = LabSetup::default();
        match check {
            LabCheck::Nonexpansive => s.slack = 1e-6,
            LabCheck::HellingerStepSuccinct => {}
            LabCheck::HellingerRunImproved => {}
            LabCheck::L1Steps => s.steps = 20,
            LabCheck::KlOnestep => {
                s.steps = 30;
                s.slack = 1e-3;
            }
            LabCheck::Ratio8Lemma => s.slack = 0.1,
            LabCheck::ContinuousDh => {}
            LabCheck::GibbsStationary => s.steps = 1000,
        }
        s
    }
}

/// One probed step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabRow {
    pub step: usize,
    pub measured: f64,
    pub cap: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Result of one check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabReport {
    pub check: String,
    pub rows: Vec<LabRow>,
    pub pass: bool,
    pub notes: Vec<String>,
}

impl LabReport {
    fn new(check: LabCheck) -> Self {
        LabReport {
            check: check.to_string(),
            rows: Vec::new(),
            pass: true,
            notes: Vec::new(),
        }
    }

    fn push(&mut self, step: usize, measured: f64, cap: f64, slack: f64) {
        let pass = measured <= cap + slack;
        self.pass &= pass;
        self.rows.push(LabRow {
            step,
            measured,
            cap,
            slack,
            pass,
        });
    }

    /// CSV with header `step,measured,cap,slack,pass`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,measured,cap,slack,pass\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.step, r.measured, r.cap, r.slack, r.pass
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Largest measured-minus-cap excess across rows.
    pub fn worst_excess(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.measured - r.cap)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Run one check.
pub fn lab_verify(check: LabCheck, setup: &LabSetup) -> Result<LabReport> {
    match check {
        LabCheck::Nonexpansive => check_nonexpansive(setup),
        LabCheck::HellingerStepSuccinct => check_hellinger_step_succinct(setup),
        LabCheck::HellingerRunImproved => check_hellinger_run_improved(setup),
        LabCheck::L1Steps => check_l1_steps(setup),
        LabCheck::KlOnestep => check_kl_onestep(setup),
        LabCheck::Ratio8Lemma => check_ratio_8lemma(setup),
        LabCheck::ContinuousDh => check_continuous_dh(setup),
        LabCheck::GibbsStationary => check_gibbs_stationary(setup),
    }
}

/// Domain wide enough for the whole run: 12 effective standard deviations
/// plus a drift excursion allowance, centered at zero.
fn lab_domain(sigma0: f64, total_time: f64, beta: f64, excursion: f64) -> (f64, f64) {
    let half = 12.0 * (sigma0 + (2.0 * total_time / beta).sqrt()) + excursion;
    (-half, half)
}

/// The double-well neighboring pair used by the pair-driven checks: the
/// replacement flips the shift/tilt scalars of point 0.
fn double_well_pair(n: usize, seed: u64) -> Result<(ProblemInstance, ProblemInstance)> {
    let problem = make_problem(LossKind::DoubleWell1d, n, 1, seed)?;
    let z0 = &problem.dataset.points[0];
    let replacement = DataPoint::new(vec![-z0.features[0]], -z0.label);
    let pair = neighbor_of(&problem, 0, replacement)?;
    let variant = problem.variant_instance(&pair)?;
    Ok((problem, variant))
}

fn check_nonexpansive(setup: &LabSetup) -> Result<LabReport> {
    let mut report = LabReport::new(LabCheck::Nonexpansive);
    let m = setup.grid_points;
    let (lo, hi) = (-18.0, 18.0);
    let mut rng = stream(setup.seed, Domain::Probe, 0);
    let mut row = 0;
    for _ in 0..setup.pairs {
        // random two-component mixtures keep every density strictly positive
        let mixture = |rng: &mut rand_chacha::ChaCha8Rng| -> Result<DensityGrid> {
            let mu1 = rng.gen_range(-2.0..2.0);
            let mu2 = rng.gen_range(-2.0..2.0);
            let s1 = rng.gen_range(0.5..1.5);
            let s2 = rng.gen_range(0.5..1.5);
            let w = rng.gen_range(0.2..0.8);
            let dx = (hi - lo) / (m - 1) as f64;
            let values: Vec<f64> = (0..m)
                .map(|i| {
                    let x = lo + dx * i as f64;
                    w * normal_pdf(x, mu1, s1) + (1.0 - w) * normal_pdf(x, mu2, s2)
                })
                .collect();
            make_grid(lo, hi, m, GridInit::Custom(values))
        };
        let p = mixture(&mut rng)?;
        let q = mixture(&mut rng)?;

        // bounded deterministic map followed by Gaussian convolution
        let amp = rng.gen_range(0.2..1.5);
        let center = rng.gen_range(-2.0..2.0);
        let width = rng.gen_range(0.5..2.0);
        let sd = rng.gen_range(0.15..0.6);
        let map = |y: f64| y - amp * ((y - center) / width).tanh();
        let p_out = push_through_kernel(&p, map, sd)?;
        let q_out = push_through_kernel(&q, map, sd)?;

        for kind in [
            DivergenceKind::HellingerSq,
            DivergenceKind::Kl,
            DivergenceKind::L1,
        ] {
            let before = divergence(&p, &q, kind)?;
            let after = divergence(&p_out, &q_out, kind)?;
            report.push(row, after - before, 0.0, setup.slack);
            row += 1;
        }
    }
    report.notes.push(format!(
        "{} density pairs, all three divergences; worst increase {:.3e}",
        setup.pairs,
        report.worst_excess()
    ));
    Ok(report)
}

fn check_hellinger_step_succinct(setup: &LabSetup) -> Result<LabReport> {
    let mut report = LabReport::new(LabCheck::HellingerStepSuccinct);
    let (base, variant) = double_well_pair(setup.n, setup.seed)?;
    let l = base.l;
    let i_star = 0;
    let total_time = setup.steps as f64 * setup.eta;
    let (lo, hi) = lab_domain(setup.sigma0, total_time, setup.beta, 3.0);
    let mut p = gaussian_grid(lo, hi, setup.grid_points, 0.0, setup.sigma0)?;
    let mut q = p.clone();
    let cap = setup.beta * l * l * setup.eta / 8.0;
    let drift_p_star = DriftSpec::per_example(&base, i_star, 0.0)?;
    let drift_q_star = DriftSpec::per_example(&variant, i_star, 0.0)?;
    let drift_p = DriftSpec::full(&base, 0.0)?;
    let drift_q = DriftSpec::full(&variant, 0.0)?;
    for k in 1..=setup.steps {
        let before = divergence(&p, &q, DivergenceKind::HellingerSq)?;
        // the i_k = i* branch: each side steps with its own differing example
        let p_star = propagate(
            &p,
            &drift_p_star,
            setup.eta,
            setup.beta,
            PropagateMode::DeterministicMap,
        )?;
        let q_star = propagate(
            &q,
            &drift_q_star,
            setup.eta,
            setup.beta,
            PropagateMode::DeterministicMap,
        )?;
        let after = divergence(&p_star, &q_star, DivergenceKind::HellingerSq)?;
        report.push(k, after - before, cap, setup.slack);
        // advance the pair by the full mixture so later probes see evolved densities
        p = propagate(
            &p,
            &drift_p,
            setup.eta,
            setup.beta,
            PropagateMode::SgldMixture,
        )?;
        q = propagate(
            &q,
            &drift_q,
            setup.eta,
            setup.beta,
            PropagateMode::SgldMixture,
        )?;
    }
    report.notes.push(format!(
        "cap beta*L^2*eta/8 with L = {l}; worst excess {:.3e}",
        report.worst_excess()
    ));
    Ok(report)
}

fn check_hellinger_run_improved(setup: &LabSetup) -> Result<LabReport> {
    let mut report = LabReport::new(LabCheck::HellingerRunImproved);
    let (base, variant) = double_well_pair(setup.n, setup.seed)?;
    let l = base.l;
    let step_limit = std::f64::consts::LN_2 / (setup.beta * l * l);
    if setup.eta > step_limit {
        return Err(Error::InvalidArgument(format!(
            "improved-run check needs eta <= ln2/(beta L^2) = {step_limit}, got {}",
            setup.eta
        )));
    }
    let nf = setup.n as f64;
    let total_time = setup.steps as f64 * setup.eta;
    let (lo, hi) = lab_domain(setup.sigma0, total_time, setup.beta, 3.0);
    let mut p = gaussian_grid(lo, hi, setup.grid_points, 0.0, setup.sigma0)?;
    let mut q = p.clone();
    let drift_p = DriftSpec::full(&base, 0.0)?;
    let drift_q = DriftSpec::full(&variant, 0.0)?;
    let proof_cap = setup.beta * l * l * setup.eta / (nf * nf);
    let statement_cap = proof_cap / 4.0;
    let mut prev = 0.0;
    let mut worst_increment: f64 = f64::NEG_INFINITY;
    for k in 1..=setup.steps {
        p = propagate(
            &p,
            &drift_p,
            setup.eta,
            setup.beta,
            PropagateMode::SgldMixture,
        )?;
        q = propagate(
            &q,
            &drift_q,
            setup.eta,
            setup.beta,
            PropagateMode::SgldMixture,
        )?;
        let d = divergence(&p, &q, DivergenceKind::HellingerSq)?;
        report.push(k, d - prev, proof_cap, setup.slack);
        worst_increment = worst_increment.max(d - prev);
        prev = d;
    }
    // final aggregate: sqrt(D_H) against the run-level cap
    let run_cap = setup.beta.sqrt() * l / (2.0 * nf) * (setup.steps as f64 * setup.eta).sqrt();
    report.push(
        setup.steps + 1,
        prev.max(0.0).sqrt(),
        run_cap,
        setup.slack_final,
    );
    report.notes.push(format!(
        "per-step margins: worst increment {:.3e} vs proof constant {:.3e} and statement constant {:.3e}",
        worst_increment, proof_cap, statement_cap
    ));
    Ok(report)
}

fn check_l1_steps(setup: &LabSetup) -> Result<LabReport> {
    let mut report = LabReport::new(LabCheck::L1Steps);
    let (base, variant) = double_well_pair(setup.n, setup.seed)?;
    let total_time = setup.steps as f64 * setup.eta;
    let (lo, hi) = lab_domain(setup.sigma0, total_time, setup.beta, 3.0);
    let mut p = gaussian_grid(lo, hi, setup.grid_points, 0.0, setup.sigma0)?;
    let mut q = p.clone();
    let drift_p = DriftSpec::full(&base, 0.0)?;
    let drift_q = DriftSpec::full(&variant, 0.0)?;
    for k in 1..=setup.steps {
        p = propagate(
            &p,
            &drift_p,
            setup.eta,
            setup.beta,
            PropagateMode::SgldMixture,
        )?;
        q = propagate(
            &q,
            &drift_q,
            setup.eta,
            setup.beta,
            PropagateMode::SgldMixture,
        )?;
        let l1 = divergence(&p, &q, DivergenceKind::L1)?;
        report.push(k, l1, 2.0 * k as f64 / setup.n as f64, setup.slack);
    }
    Ok(report)
}

fn check_kl_onestep(setup: &LabSetup) -> Result<LabReport> {
    let mut report = LabReport::new(LabCheck::KlOnestep);
    let problem = make_problem(LossKind::DoubleWell1d, setup.n, 1, setup.seed)?;
    let schedule = StepSchedule::constant(setup.eta, setup.steps)?;
    let config = SgldConfig {
        beta: setup.beta,
        lambda: setup.lambda,
        sigma0: setup.sigma0,
        schedule,
        grad_mode: GradMode::Full,
        steps: setup.steps,
        seed: setup.seed,
        snapshot_every: 0,
        noiseless: false,
        init_mean: None,
    };
    config.validate()?;
    let priors = prior_sequence(&config, setup.steps)?;

    let total_time = setup.steps as f64 * setup.eta;
    let sigma_max = priors
        .sigma_sq
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max)
        .sqrt();
    let (lo, hi) = lab_domain(setup.sigma0.max(sigma_max), total_time, setup.beta, 3.0);
    let m = setup.grid_points;
    let mut p = gaussian_grid(lo, hi, m, 0.0, setup.sigma0)?;
    let sd = (2.0 * setup.eta / setup.beta).sqrt();
    let mut grid_e_g2 = Vec::with_capacity(setup.steps);
    let mut grid_kl = Vec::with_capacity(setup.steps);
    for k in 1..=setup.steps {
        let gamma_prev = gaussian_grid(lo, hi, m, 0.0, priors.sigma_sq[k - 1].sqrt())?;
        let gamma_next = gaussian_grid(lo, hi, m, 0.0, priors.sigma_sq[k].sqrt())?;
        let d_before = divergence(&p, &gamma_prev, DivergenceKind::Kl)?;
        // conditioning on the full-gradient choice; regularizer excluded
        let e_g2 = expectation(&p, |y| {
            let g = problem.data_gradient(&[y])[0];
            g * g
        });
        grid_e_g2.push(e_g2);
        p = push_through_kernel(
            &p,
            |y| y - setup.eta * (problem.data_gradient(&[y])[0] + setup.lambda * y),
            sd,
        )?;
        let d_after = divergence(&p, &gamma_next, DivergenceKind::Kl)?;
        grid_kl.push(d_after);
        let t = transform_step(setup.eta, setup.lambda, setup.beta)?;
        let cap =
            (-t.tau / (2.0 * priors.b[k - 1])).exp() * d_before + 0.5 * t.beta_prime * t.tau * e_g2;
        report.push(k, d_after, cap, setup.slack);
    }

    // cross-validation: chaining the recursion with the measured E||g||^2
    // must dominate the grid KL at every step
    let chain = kl_bound_recursive(&grid_e_g2, &config, &priors)?;
    let chained_ok = grid_kl
        .iter()
        .zip(&chain)
        .enumerate()
        .all(|(i, (kl, bound))| *kl <= *bound + (i + 1) as f64 * setup.slack);
    report.pass &= chained_ok;
    report.notes.push(format!(
        "chained recursion dominates grid KL at every step: {chained_ok}"
    ));
    Ok(report)
}

fn check_ratio_8lemma(setup: &LabSetup) -> Result<LabReport> {
    let mut report = LabReport::new(LabCheck::Ratio8Lemma);
    let l = setup.drift_bound;
    let t_max = std::f64::consts::LN_2 / (setup.beta * l * l);
    let (lo, hi) = lab_domain(1.0, t_max, setup.beta, l * t_max + 1.0);
    let m = setup.grid_points;
    let u0 = gaussian_grid(lo, hi, m, 0.0, 1.0)?;
    let dx = u0.dx();
    let dt = 0.4 * dx * dx * setup.beta / 2.0 * 0.99;
    let checkpoints = 20;
    let steps_per = ((t_max / checkpoints as f64) / dt).ceil() as usize;
    let drift = |y: f64| l * y.tanh();

    let ratio_integral = |u: &DensityGrid, v: &DensityGrid| -> f64 {
        let mut acc = 0.0;
        for i in 0..u.m() {
            let ui = u.values()[i];
            if ui <= 1e-100 {
                continue;
            }
            let vi = v.values()[i].max(1e-290);
            let r = ui / vi;
            acc += r * r * r * ui * u.weight(i);
        }
        acc
    };

    let mut u = u0.clone();
    let mut v = u0;
    let mut elapsed = 0.0;
    for cp in 1..=checkpoints {
        u = evolve_fokker_planck(&u, drift, setup.beta, dt, steps_per)?;
        v = evolve_fokker_planck(&v, |_| 0.0, setup.beta, dt, steps_per)?;
        elapsed += dt * steps_per as f64;
        if elapsed > t_max * 1.0001 {
            break;
        }
        report.push(cp, ratio_integral(&u, &v), 8.0, setup.slack);
    }
    report.notes.push(format!(
        "drift amplitude {l}, horizon ln2/(beta L^2) = {t_max:.4}"
    ));
    Ok(report)
}

fn check_continuous_dh(setup: &LabSetup) -> Result<LabReport> {
    let mut report = LabReport::new(LabCheck::ContinuousDh);
    let (base, variant) = double_well_pair(setup.n, setup.seed)?;
    let l = base.l;
    let cap_rate = setup.beta * l * l / (8.0 * (setup.n * setup.n) as f64);
    let (lo, hi) = lab_domain(setup.sigma0, setup.total_time, setup.beta, 3.0);
    let m = setup.grid_points;
    let p0 = gaussian_grid(lo, hi, m, 0.0, setup.sigma0)?;
    let dx = p0.dx();
    let dt = 0.4 * dx * dx * setup.beta / 2.0 * 0.99;
    let windows = 10;
    let steps_per = ((setup.total_time / windows as f64) / dt).ceil() as usize;
    let window_dt = dt * steps_per as f64;

    let mut p = p0.clone();
    let mut q = p0;
    let mut d_prev = 0.0;
    for w in 1..=windows {
        p = evolve_fokker_planck(
            &p,
            |y| base.data_gradient(&[y])[0],
            setup.beta,
            dt,
            steps_per,
        )?;
        q = evolve_fokker_planck(
            &q,
            |y| variant.data_gradient(&[y])[0],
            setup.beta,
            dt,
            steps_per,
        )?;
        let d = divergence(&p, &q, DivergenceKind::HellingerSq)?;
        let rate = (d - d_prev) / window_dt;
        report.push(w, rate, cap_rate, setup.slack);
        d_prev = d;
    }
    report.notes.push(format!(
        "drift gap <= L/n = {:.4}; rate cap beta L^2/(8 n^2) = {cap_rate:.3e}",
        l / setup.n as f64
    ));
    Ok(report)
}

fn check_gibbs_stationary(setup: &LabSetup) -> Result<LabReport> {
    let mut report = LabReport::new(LabCheck::GibbsStationary);
    let problem = make_problem(LossKind::QuadraticRegression, 30, 1, setup.seed)?;
    // quadratic empirical risk: Gibbs density is a Gaussian with known moments
    let (mut a, mut b) = (0.0, 0.0);
    for z in &problem.dataset.points {
        a += z.features[0] * z.features[0] / problem.n() as f64;
        b += z.features[0] * z.label / problem.n() as f64;
    }
    let mean = b / a;
    let sd = (1.0 / (setup.beta * a)).sqrt();
    let m = setup.grid_points;
    let p0 = gaussian_grid(mean - 10.0 * sd, mean + 10.0 * sd, m, mean, sd)?;
    let dx = p0.dx();
    let dt = 0.4 * dx * dx * setup.beta / 2.0 * 0.99;
    let p = evolve_fokker_planck(
        &p0,
        |y| problem.data_gradient(&[y])[0],
        setup.beta,
        dt,
        setup.steps,
    )?;
    let l1 = divergence(&p, &p0, DivergenceKind::L1)?;
    report.push(setup.steps, l1, 0.0, setup.slack);
    report.notes.push(format!(
        "{} explicit steps of size {dt:.2e}; Gibbs L1 drift {l1:.3e}",
        setup.steps
    ));
    Ok(report)
}
