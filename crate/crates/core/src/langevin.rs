//! Discrete-time samplers: SGLD, LMC (full-gradient SGLD), minibatch SGLD,
//! and the exact Ornstein-Uhlenbeck step that reproduces one regularized SGLD
//! update in distribution.
//!
//! Noise is derived from a counter-based scheme keyed by `(seed, step)` with
//! coordinates drawn in order, so a trajectory is reproducible bit-for-bit
//! independent of how replicas are scheduled, and matched-noise comparisons
//! (the OU equivalence test) can replay the exact same Gaussian draws.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::certificates::StepSchedule;
use crate::error::{Error, Result};
use crate::numeric::{all_finite, norm, norm_sq};
use crate::problems::ProblemInstance;
use crate::rng::{stream, Domain};

/// How the data-part gradient `g_k` is formed each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    /// Full empirical gradient (the LMC variant).
    Full,
    /// One uniformly drawn example per round.
    Single,
    /// Mean of `m` uniformly drawn examples per round.
    Minibatch(usize),
}

impl std::fmt::Display for GradMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GradMode::Full => write!(f, "full"),
            GradMode::Single => write!(f, "single"),
            GradMode::Minibatch(m) => write!(f, "minibatch({m})"),
        }
    }
}

/// All algorithmic parameters of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgldConfig {
    /// Inverse temperature `β > 0`; per-step noise variance is `2η_k/β`.
    pub beta: f64,
    /// Ridge coefficient `λ ≥ 0` of the regularizer `λ‖w‖²/2`.
    pub lambda: f64,
    /// Initialization scale: `w₀ ~ N(0, σ₀² I)`, `σ₀ > 0`.
    pub sigma0: f64,
    pub schedule: StepSchedule,
    pub grad_mode: GradMode,
    /// Number of rounds `N`.
    pub steps: usize,
    pub seed: u64,
    /// Store a parameter snapshot every this many steps (0 = never).
    pub snapshot_every: usize,
    /// Suppress the Gaussian noise (plain gradient descent). Exists for the
    /// fence-sitting demonstration only; certificates refuse such runs.
    #[serde(default)]
    pub noiseless: bool,
    /// Optional off-center initialization mean (demonstrations only; the
    /// PAC-Bayes prior sequence assumes a centered start).
    #[serde(default)]
    pub init_mean: Option<Vec<f64>>,
}

impl SgldConfig {
    /// Check every standing assumption: positive `β` and `σ₀`, `λ ≥ 0`,
    /// `N` within the schedule, and `η_k λ < 0.5` for all `k ≤ N`.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sigma0 must be > 0, got {}",
                self.sigma0
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.steps > self.schedule.n_max() {
            return Err(Error::InvalidArgument(format!(
                "steps {} exceed schedule horizon {}",
                self.steps,
                self.schedule.n_max()
            )));
        }
        if let GradMode::Minibatch(m) = self.grad_mode {
            if m == 0 {
                return Err(Error::InvalidArgument("minibatch size must be >= 1".into()));
            }
        }
        for k in 1..=self.steps {
            let eta = self.schedule.eta(k)?;
            let v = eta * self.lambda;
            if v >= 0.5 {
                return Err(Error::EtaLambdaTooLarge { step: k, value: v });
            }
        }
        Ok(())
    }

    /// Stable identifier of this configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// One recorded round. `grad_sq_norm` is `‖g_k(w_k)‖²` at the pre-step
/// iterate, with the regularizer excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub eta: f64,
    pub grad_sq_norm: f64,
    pub sampled_index: Option<usize>,
    pub w_snapshot: Option<Vec<f64>>,
}

/// Everything a certificate needs to be recomputed without re-running.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub final_w: Vec<f64>,
    pub config_hash: String,
    /// True if the iterate ever left the clamp region on which the family's
    /// gap constant is stated (families with a global constant never flag).
    pub exited_constant_region: bool,
}

impl Trajectory {
    pub fn grad_sq(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.grad_sq_norm).collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.eta).collect()
    }

    /// CSV with header `k,eta,grad_sq_norm,sampled_index`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,eta,grad_sq_norm,sampled_index\n");
        for s in &self.steps {
            let idx = s.sampled_index.map(|i| i.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", s.k, s.eta, s.grad_sq_norm, idx));
        }
        out
    }

    /// Parse the CSV produced by [`Trajectory::to_csv`].
    pub fn from_csv(text: &str) -> Result<Trajectory> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::EmptyInput("trajectory csv".into()))?;
        if header.trim() != "k,eta,grad_sq_norm,sampled_index" {
            return Err(Error::InvalidArgument(format!(
                "unexpected trajectory header: {header}"
            )));
        }
        let mut steps = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::InvalidArgument(format!(
                    "trajectory line {} has {} columns",
                    lineno + 2,
                    cols.len()
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad {what}: {s}")))
            };
            steps.push(StepRecord {
                k: cols[0]
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad step index: {}", cols[0])))?,
                eta: parse(cols[1], "eta")?,
                grad_sq_norm: parse(cols[2], "grad_sq_norm")?,
                sampled_index: if cols[3].trim().is_empty() {
                    None
                } else {
                    Some(cols[3].parse().map_err(|_| {
                        Error::InvalidArgument(format!("bad sampled index: {}", cols[3]))
                    })?)
                },
                w_snapshot: None,
            });
        }
        Ok(Trajectory {
            steps,
            final_w: Vec::new(),
            config_hash: String::new(),
            exited_constant_region: false,
        })
    }

    /// Snapshot CSV with header `k,w_0..w_{d-1}` (only steps that stored one).
    pub fn snapshots_csv(&self) -> String {
        let d = self.final_w.len();
        let mut out = String::from("k");
        for j in 0..d {
            out.push_str(&format!(",w_{j}"));
        }
        out.push('\n');
        for s in &self.steps {
            if let Some(w) = &s.w_snapshot {
                out.push_str(&s.k.to_string());
                for x in w {
                    out.push_str(&format!(",{x}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// The reparameterization `(τ_k, β′_k)` under which one regularized SGLD step
/// equals an exact OU step in distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformedStep {
    pub tau: f64,
    pub beta_prime: f64,
}

/// `w₀ ~ N(mean, σ₀² I_d)` with i.i.d. coordinates.
pub fn init_weights<R: Rng>(d: usize, sigma0: f64, rng: &mut R) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    if !(sigma0.is_finite() && sigma0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma0 must be > 0 (a point mass is not a valid start), got {sigma0}"
        )));
    }
    Ok((0..d)
        .map(|_| sigma0 * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// Plain gradient step `w − η·ĝ`.
pub fn gd_step(w: &[f64], eta: f64, g_hat: &[f64]) -> Vec<f64> {
    w.iter().zip(g_hat).map(|(wi, gi)| wi - eta * gi).collect()
}

/// One SGLD update `w − η·ĝ + √(2η/β)·ξ`, `ξ ~ N(0, I)`. The caller supplies
/// the full stochastic gradient `ĝ` (data part plus regularizer).
pub fn sgld_step<R: Rng>(
    w: &[f64],
    eta: f64,
    beta: f64,
    g_hat: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(eta > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eta and beta must be positive (eta={eta}, beta={beta})"
        )));
    }
    if !all_finite(w) || !all_finite(g_hat) {
        return Err(Error::NonFinite("sgld_step input".into()));
    }
    let sd = (2.0 * eta / beta).sqrt();
    Ok(gd_step(w, eta, g_hat)
        .into_iter()
        .map(|x| x + sd * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

/// The `(τ, β′)` transform. For `λ = 0` this is the continuous limit
/// `(η, β)`; the standing assumption `ηλ < ½` is enforced.
pub fn transform_step(eta: f64, lambda: f64, beta: f64) -> Result<TransformedStep> {
    if !(eta > 0.0 && beta > 0.0 && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need eta > 0, beta > 0, lambda >= 0 (eta={eta}, lambda={lambda}, beta={beta})"
        )));
    }
    let v = eta * lambda;
    if v >= 0.5 {
        return Err(Error::EtaLambdaTooLarge { step: 0, value: v });
    }
    if lambda == 0.0 {
        return Ok(TransformedStep {
            tau: eta,
            beta_prime: beta,
        });
    }
    Ok(TransformedStep {
        tau: -(1.0 - v).ln() / lambda,
        beta_prime: (1.0 - 0.5 * v) * beta,
    })
}

/// Exact OU step: `θ_τ = e^{−λτ}·w₀ − ((1−e^{−λτ})/λ)·g(w₀) + N(0, v I)` with
/// `v = (1−e^{−2λτ})/(β′λ)`. Requires `λ > 0`; the `λ = 0` limit is the plain
/// SGLD step.
pub fn ou_exact_step<R: Rng>(
    w0: &[f64],
    tau: f64,
    beta_prime: f64,
    lambda: f64,
    g_value: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    if lambda <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "ou_exact_step needs lambda > 0 (got {lambda}); use sgld_step for lambda = 0"
        )));
    }
    if !(tau > 0.0 && beta_prime > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need tau > 0 and beta_prime > 0 (tau={tau}, beta_prime={beta_prime})"
        )));
    }
    if !all_finite(w0) || !all_finite(g_value) {
        return Err(Error::NonFinite("ou_exact_step input".into()));
    }
    let decay = (-lambda * tau).exp();
    let drift = (1.0 - decay) / lambda;
    let sd = ((1.0 - (-2.0 * lambda * tau).exp()) / (beta_prime * lambda)).sqrt();
    Ok(w0
        .iter()
        .zip(g_value)
        .map(|(wi, gi)| decay * wi - drift * gi + sd * rng.sample::<f64, _>(StandardNormal))
        .collect())
}

fn data_gradient_for_mode(
    problem: &ProblemInstance,
    w: &[f64],
    mode: GradMode,
    seed: u64,
    k: usize,
) -> (Vec<f64>, Option<usize>) {
    match mode {
        GradMode::Full => (problem.data_gradient(w), None),
        GradMode::Single => {
            let mut rng = stream(seed, Domain::Index, k as u64);
            let i = rng.gen_range(0..problem.n());
            (problem.point_gradient(w, i), Some(i))
        }
        GradMode::Minibatch(m) => {
            let mut rng = stream(seed, Domain::Minibatch, k as u64);
            let mut acc = vec![0.0; problem.d];
            for _ in 0..m {
                let i = rng.gen_range(0..problem.n());
                for (a, g) in acc.iter_mut().zip(problem.point_gradient(w, i)) {
                    *a += g;
                }
            }
            for a in &mut acc {
                *a /= m as f64;
            }
            (acc, None)
        }
    }
}

/// Clamp-region radius on which the family's gap constant is stated, if the
/// family needs one.
fn constant_region_radius(problem: &ProblemInstance) -> Option<f64> {
    use crate::problems::FamilyParams;
    match problem.family.params {
        FamilyParams::QuadraticRegression { weight_radius, .. }
        | FamilyParams::GaussianMixtureNll { weight_radius, .. } => Some(weight_radius),
        FamilyParams::DoubleWell1d { .. } => None,
    }
}

/// Run `N` rounds and record the trajectory.
pub fn run(problem: &ProblemInstance, config: &SgldConfig) -> Result<Trajectory> {
    config.validate()?;
    let d = problem.d;
    let mut init_rng = stream(config.seed, Domain::Init, 0);
    let mut w = init_weights(d, config.sigma0, &mut init_rng)?;
    if let Some(mean) = &config.init_mean {
        if mean.len() != d {
            return Err(Error::InvalidArgument(format!(
                "init_mean has {} coordinates, problem has {d}",
                mean.len()
            )));
        }
        for (wi, mi) in w.iter_mut().zip(mean) {
            *wi += mi;
        }
    }

    let region = constant_region_radius(problem);
    let mut exited = region.is_some_and(|r| norm(&w) > r);
    let mut steps = Vec::with_capacity(config.steps);
    for k in 1..=config.steps {
        let eta = config.schedule.eta(k)?;
        let (g_data, sampled_index) =
            data_gradient_for_mode(problem, &w, config.grad_mode, config.seed, k);
        let grad_sq_norm = norm_sq(&g_data);

        let g_hat: Vec<f64> = g_data
            .iter()
            .zip(&w)
            .map(|(g, wi)| g + config.lambda * wi)
            .collect();
        w = if config.noiseless {
            gd_step(&w, eta, &g_hat)
        } else {
            let mut noise_rng = stream(config.seed, Domain::Noise, k as u64);
            sgld_step(&w, eta, config.beta, &g_hat, &mut noise_rng)?
        };
        if !all_finite(&w) {
            return Err(Error::DivergedAtStep { step: k });
        }
        if let Some(r) = region {
            if norm(&w) > r {
                exited = true;
            }
        }
        let w_snapshot = if config.snapshot_every > 0 && k.is_multiple_of(config.snapshot_every) {
            Some(w.clone())
        } else {
            None
        };
        steps.push(StepRecord {
            k,
            eta,
            grad_sq_norm,
            sampled_index,
            w_snapshot,
        });
    }

    Ok(Trajectory {
        steps,
        final_w: w,
        config_hash: config.hash(),
        exited_constant_region: exited,
    })
}
