//! Schedule arithmetic and the four generalization certificates.
//!
//! Notation used throughout: `η_k` is the step size at round `k` (1-based),
//! `T_k = Σ_{j≤k} η_j`, `L` the gradient-gap constant, `C` the uniform loss
//! bound, `β` the inverse temperature, `λ` the ridge coefficient and `n` the
//! dataset size. All partial sums are accumulated with compensated summation
//! so certificates reproduce to 1e-12 across platforms.
//!
//! The four bound variants:
//!
//! - `lmc_stability`: `(LC/n)·√(β·T_N/2)` — full-gradient chains, with the
//!   explicit constant chain (squared Hellinger growth `βL²/8n²` per unit
//!   time, then `ε ≤ 2C·√D_H`) instead of an unspecified big-O.
//! - `sgld_succinct`: `LC·√(β·T_N/(8n))` — single-sample chains, no prefix
//!   split.
//! - `sgld_improved`: `2k₀/n + (√β·LC/n)·√(T_N − T_{k₀})` where `k₀` splits
//!   off the large-step prefix at the threshold `η βL² < ln 2`.
//! - `pac_bayes`: `s·√((β/n)·Σ_k η_k e^{−R_{k,N}}·E‖g_k‖² + (ln(N/δ) +
//!   ln ln(NL))/n)` with the three-case decay factor `R_{k,N}` and the
//!   data-independent Gaussian prior sequence.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::langevin::{transform_step, GradMode, SgldConfig};
use crate::numeric::KahanSum;

/// Step-size schedule shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `η_k = c`.
    Constant { c: f64 },
    /// `η_k = c·k^{−α}` with `α ∈ [0, 1]`.
    Polynomial { c: f64, alpha: f64 },
    /// Explicit per-step values.
    Explicit { values: Vec<f64> },
}

/// A positive step-size schedule on rounds `1..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    kind: ScheduleKind,
    n_max: usize,
}

impl StepSchedule {
    pub fn constant(c: f64, n_max: usize) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "constant step must be > 0, got {c}"
            )));
        }
        if n_max == 0 {
            return Err(Error::InvalidArgument(
                "schedule horizon must be >= 1".into(),
            ));
        }
        Ok(Self {
            kind: ScheduleKind::Constant { c },
            n_max,
        })
    }

    pub fn polynomial(c: f64, alpha: f64, n_max: usize) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "polynomial scale must be > 0, got {c}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!(
                "polynomial exponent must lie in [0, 1], got {alpha}"
            )));
        }
        if n_max == 0 {
            return Err(Error::InvalidArgument(
                "schedule horizon must be >= 1".into(),
            ));
        }
        Ok(Self {
            kind: ScheduleKind::Polynomial { c, alpha },
            n_max,
        })
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("explicit schedule".into()));
        }
        if !values.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidArgument(
                "explicit steps must all be > 0".into(),
            ));
        }
        let n_max = values.len();
        Ok(Self {
            kind: ScheduleKind::Explicit { values },
            n_max,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    /// `η_k`, `k` 1-based.
    pub fn eta(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.n_max {
            return Err(Error::ScheduleIndexOutOfRange {
                k,
                n_max: self.n_max,
            });
        }
        Ok(match &self.kind {
            ScheduleKind::Constant { c } => *c,
            ScheduleKind::Polynomial { c, alpha } => c * (k as f64).powf(-alpha),
            ScheduleKind::Explicit { values } => values[k - 1],
        })
    }

    /// `(η_k, T_k)` with the partial sum compensated.
    pub fn eta_t(&self, k: usize) -> Result<(f64, f64)> {
        if k == 0 || k > self.n_max {
            return Err(Error::ScheduleIndexOutOfRange {
                k,
                n_max: self.n_max,
            });
        }
        let mut acc = KahanSum::new();
        for j in 1..=k {
            acc.add(self.eta(j)?);
        }
        Ok((self.eta(k)?, acc.value()))
    }

    /// `[T_0, T_1, .., T_upto]` (so `T_0 = 0`), compensated.
    pub fn prefix_sums(&self, upto: usize) -> Result<Vec<f64>> {
        if upto > self.n_max {
            return Err(Error::ScheduleIndexOutOfRange {
                k: upto,
                n_max: self.n_max,
            });
        }
        let mut out = Vec::with_capacity(upto + 1);
        let mut acc = KahanSum::new();
        out.push(0.0);
        for k in 1..=upto {
            acc.add(self.eta(k)?);
            out.push(acc.value());
        }
        Ok(out)
    }

    /// True if `η_k` never increases over `1..=n_max`.
    pub fn is_nonincreasing(&self) -> bool {
        match &self.kind {
            ScheduleKind::Constant { .. } | ScheduleKind::Polynomial { .. } => true,
            ScheduleKind::Explicit { values } => values.windows(2).all(|w| w[1] <= w[0]),
        }
    }
}

/// The large-step prefix length for the improved stability bound: the first
/// round where `η_k βL² < ln 2`, with two conventions pinned by contract:
/// 0 when already true at `k = 1`, and the sentinel `n_max + 1` when never
/// true. Non-monotone explicit schedules fall back to the last violating
/// index so the prefix split stays well-defined.
pub fn k0(schedule: &StepSchedule, beta: f64, l: f64) -> Result<usize> {
    if !(beta > 0.0 && l > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "k0 needs beta > 0 and L > 0 (beta={beta}, L={l})"
        )));
    }
    let threshold = std::f64::consts::LN_2;
    if schedule.is_nonincreasing() {
        for k in 1..=schedule.n_max() {
            if schedule.eta(k)? * beta * l * l < threshold {
                return Ok(if k == 1 { 0 } else { k });
            }
        }
        Ok(schedule.n_max() + 1)
    } else {
        let mut last_violation = 0;
        for k in 1..=schedule.n_max() {
            if schedule.eta(k)? * beta * l * l >= threshold {
                last_violation = k;
            }
        }
        Ok(last_violation)
    }
}

/// First round where `T_k` crosses the prior-shrinkage threshold
/// `(1/2λ)·ln(1.5·σ₀²βλ)`; only meaningful when `λ > 1/(βσ₀²)`, where the
/// prior variance contracts. Sentinel `n_max + 1` when never crossed.
pub fn k1(schedule: &StepSchedule, lambda: f64, sigma0: f64, beta: f64) -> Result<usize> {
    let s0sq = sigma0 * sigma0;
    if lambda <= 1.0 / (beta * s0sq) {
        return Err(Error::CaseMismatch {
            expected: format!("lambda > 1/(beta*sigma0^2) = {}", 1.0 / (beta * s0sq)),
            lambda,
        });
    }
    let threshold = (1.5 * s0sq * beta * lambda).ln() / (2.0 * lambda);
    let mut acc = KahanSum::new();
    for k in 1..=schedule.n_max() {
        acc.add(schedule.eta(k)?);
        if acc.value() > threshold {
            return Ok(k);
        }
    }
    Ok(schedule.n_max() + 1)
}

/// The data-independent Gaussian prior sequence `γ_k = N(0, σ_k² I)` and the
/// log-Sobolev scales `b_k` used by the KL recursion.
///
/// `sigma_sq[k]` holds `σ_k²` (index 0 is `σ₀²`); `b[k-1]` holds `b_k`. Each
/// step evolves the prior by the same OU flow as the transformed update:
/// `σ_k² = e^{−2λτ_k}·σ_{k−1}² + (1−e^{−2λτ_k})/(β′_kλ)` for `λ > 0`
/// (equivalently `(1−η_kλ)²σ_{k−1}² + 2η_k/β`), and
/// `σ_k² = σ_{k−1}² + τ_k/β′_k` for `λ = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorState {
    pub sigma_sq: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn prior_sequence(config: &SgldConfig, upto: usize) -> Result<PriorState> {
    config.validate()?;
    if upto > config.schedule.n_max() {
        return Err(Error::ScheduleIndexOutOfRange {
            k: upto,
            n_max: config.schedule.n_max(),
        });
    }
    let lambda = config.lambda;
    let mut sigma_sq = Vec::with_capacity(upto + 1);
    let mut b = Vec::with_capacity(upto);
    sigma_sq.push(config.sigma0 * config.sigma0);
    for k in 1..=upto {
        let eta = config.schedule.eta(k)?;
        let t = transform_step(eta, lambda, config.beta)?;
        let prev = *sigma_sq.last().unwrap();
        if lambda > 0.0 {
            b.push((prev * t.beta_prime).max(1.0 / lambda));
            let decay = (-2.0 * lambda * t.tau).exp();
            sigma_sq.push(decay * prev + (1.0 - decay) / (t.beta_prime * lambda));
        } else {
            b.push(prev * t.beta_prime + t.tau);
            sigma_sq.push(prev + t.tau / t.beta_prime);
        }
    }
    Ok(PriorState { sigma_sq, b })
}

/// One-step KL recursion chained over the run:
/// `D_{k} ≤ e^{−τ_k/(2b_k)}·D_{k−1} + (β′_k τ_k / 2)·E‖g_k‖²`, `D_0 = 0`.
/// Returns `[D_1, .., D_N]`.
pub fn kl_bound_recursive(
    grad_sq: &[f64],
    config: &SgldConfig,
    prior: &PriorState,
) -> Result<Vec<f64>> {
    let n_steps = config.steps;
    if grad_sq.len() < n_steps {
        return Err(Error::InvalidArgument(format!(
            "need {} gradient norms, got {}",
            n_steps,
            grad_sq.len()
        )));
    }
    if prior.b.len() < n_steps {
        return Err(Error::InvalidArgument(format!(
            "prior sequence covers {} steps, need {}",
            prior.b.len(),
            n_steps
        )));
    }
    let mut out = Vec::with_capacity(n_steps);
    let mut d = 0.0;
    for k in 1..=n_steps {
        let g2 = grad_sq[k - 1];
        if !(g2.is_finite() && g2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grad_sq[{}] = {g2} must be finite and >= 0",
                k - 1
            )));
        }
        let t = transform_step(config.schedule.eta(k)?, config.lambda, config.beta)?;
        let b = prior.b[k - 1];
        d = (-t.tau / (2.0 * b)).exp() * d + 0.5 * t.beta_prime * t.tau * g2;
        out.push(d);
    }
    Ok(out)
}

/// Which of the three regularization regimes `λ` falls in relative to
/// `1/(βσ₀²)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaCase {
    I,
    II,
    III,
}

pub fn lambda_case(lambda: f64, beta: f64, sigma0: f64) -> LambdaCase {
    if lambda == 0.0 {
        LambdaCase::I
    } else if lambda <= 1.0 / (beta * sigma0 * sigma0) {
        LambdaCase::II
    } else {
        LambdaCase::III
    }
}

/// All decay factors `R_{k,N}` for `k = 1..=n_steps`:
///
/// - Case I (`λ = 0`): `R = Σ_{j>k} η_j/(2σ₀²β + 4T_j)`
/// - Case II (`0 < λ ≤ 1/(βσ₀²)`): `R = (λ/2)(T_N − T_k)`
/// - Case III (`λ > 1/(βσ₀²)`): slow rate `3/(8βσ₀²)` before the prior has
///   shrunk (rounds below `k₁`), fast rate `λ/4` afterwards.
pub fn decay_factors(
    schedule: &StepSchedule,
    lambda: f64,
    beta: f64,
    sigma0: f64,
    n_steps: usize,
) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Ok(Vec::new());
    }
    let t = schedule.prefix_sums(n_steps)?;
    let s0sq = sigma0 * sigma0;
    let mut out = vec![0.0; n_steps];
    match lambda_case(lambda, beta, sigma0) {
        LambdaCase::I => {
            // suffix-accumulate eta_j / (2 sigma0^2 beta + 4 T_j)
            let mut acc = KahanSum::new();
            for k in (1..=n_steps).rev() {
                out[k - 1] = acc.value();
                acc.add(schedule.eta(k)? / (2.0 * s0sq * beta + 4.0 * t[k]));
            }
        }
        LambdaCase::II => {
            for k in 1..=n_steps {
                out[k - 1] = 0.5 * lambda * (t[n_steps] - t[k]);
            }
        }
        LambdaCase::III => {
            let k1 = k1(schedule, lambda, sigma0, beta)?;
            // if the threshold is never crossed within the run, the fast
            // phase never starts
            let t_k1 = if k1 <= n_steps { t[k1] } else { t[n_steps] };
            for k in 1..=n_steps {
                out[k - 1] = if k < k1 {
                    0.25 * lambda * (t[n_steps] - t_k1) + 3.0 / (8.0 * beta * s0sq) * (t_k1 - t[k])
                } else {
                    0.25 * lambda * (t[n_steps] - t[k])
                };
            }
        }
    }
    Ok(out)
}

/// Single `R_{k,N}`.
pub fn decay_factor(
    schedule: &StepSchedule,
    lambda: f64,
    beta: f64,
    sigma0: f64,
    k: usize,
    n_steps: usize,
) -> Result<f64> {
    if k == 0 || k > n_steps {
        return Err(Error::ScheduleIndexOutOfRange { k, n_max: n_steps });
    }
    Ok(decay_factors(schedule, lambda, beta, sigma0, n_steps)?[k - 1])
}

/// Certificate variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateVariant {
    LmcStability,
    SgldSuccinct,
    SgldImproved,
    PacBayes,
}

impl std::fmt::Display for CertificateVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CertificateVariant::LmcStability => "lmc_stability",
            CertificateVariant::SgldSuccinct => "sgld_succinct",
            CertificateVariant::SgldImproved => "sgld_improved",
            CertificateVariant::PacBayes => "pac_bayes",
        };
        f.write_str(s)
    }
}

/// Everything needed to recompute a bound exactly.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Intermediates {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<usize>,
    /// `T_1..T_N`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_table: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_sq: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_table: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_kl_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// KL-radius cap actually used (`min(M, NL)`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_cap: Option<f64>,
    /// The two additive terms of the PAC-Bayes bound, reported separately.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_term: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence_term: Option<f64>,
    /// Prefix/suffix split of the improved stability bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix_term: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suffix_term: Option<f64>,
    /// Set when a non-monotone explicit schedule forced the fallback `k₀`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub nonmonotone_k0: bool,
}

/// A computed generalization bound with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub variant: CertificateVariant,
    pub bound: f64,
    pub intermediates: Intermediates,
    pub inputs_hash: String,
}

impl Certificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn hash_inputs(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Stability certificates (the three non-PAC-Bayes variants).
///
/// `grad_mode` guards the proof scope of `sgld_improved`, whose argument is
/// single-sample: pass the mode the trajectory actually used.
#[allow(clippy::too_many_arguments)]
pub fn stability_certificate(
    l: f64,
    c: f64,
    beta: f64,
    schedule: &StepSchedule,
    n: usize,
    n_steps: usize,
    variant: CertificateVariant,
    grad_mode: Option<GradMode>,
) -> Result<Certificate> {
    if !(l > 0.0 && c > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "constants must be positive (L={l}, C={c}, beta={beta})"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "dataset size must be >= 2, got {n}"
        )));
    }
    if n_steps > schedule.n_max() {
        return Err(Error::ScheduleIndexOutOfRange {
            k: n_steps,
            n_max: schedule.n_max(),
        });
    }
    let t = schedule.prefix_sums(n_steps)?;
    let t_n = t[n_steps];
    let nf = n as f64;

    let mut inter = Intermediates {
        t_table: Some(t[1..].to_vec()),
        ..Default::default()
    };
    let bound = match variant {
        CertificateVariant::LmcStability => l * c / nf * (beta * t_n / 2.0).sqrt(),
        CertificateVariant::SgldSuccinct => l * c * (beta / (8.0 * nf) * t_n).sqrt(),
        CertificateVariant::SgldImproved => {
            match grad_mode {
                Some(GradMode::Minibatch(_)) | Some(GradMode::Full) => {
                    return Err(Error::UnsupportedGradMode {
                        variant: variant.to_string(),
                        mode: grad_mode.unwrap().to_string(),
                    })
                }
                _ => {}
            }
            let k0_full = k0(schedule, beta, l)?;
            let kk = k0_full.min(n_steps);
            let suffix_sum = t_n - t[kk];
            let prefix_term = 2.0 * kk as f64 / nf;
            let suffix_term = beta.sqrt() * l * c / nf * suffix_sum.max(0.0).sqrt();
            inter.k0 = Some(k0_full);
            inter.prefix_term = Some(prefix_term);
            inter.suffix_term = Some(suffix_term);
            inter.nonmonotone_k0 = !schedule.is_nonincreasing();
            prefix_term + suffix_term
        }
        CertificateVariant::PacBayes => {
            return Err(Error::InvalidArgument(
                "use pac_bayes_certificate for the PAC-Bayes variant".into(),
            ))
        }
    };
    let inputs_hash = hash_inputs(&serde_json::json!({
        "variant": variant,
        "l": l, "c": c, "beta": beta, "n": n, "n_steps": n_steps,
        "schedule": schedule,
        "grad_mode": grad_mode.map(|m| m.to_string()),
    }));
    Ok(Certificate {
        variant,
        bound,
        intermediates: inter,
        inputs_hash,
    })
}

/// Inputs of the PAC-Bayes evaluator beyond the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PacBayesConfig {
    /// Confidence level `δ ∈ (0, 1)`.
    pub delta: f64,
    /// KL-radius cap for the posterior class; recorded, used only through
    /// `ln ln` and capped at `N·L`.
    pub m: f64,
    /// SubGaussian factor of the loss (C/2 for losses in `[0, C]`).
    pub s: f64,
    /// Gradient-gap constant (enters only through `ln ln (NL)`).
    pub l: f64,
    /// Standard errors of the `E‖g_k‖²` estimates, if available.
    #[serde(default)]
    pub std_errors: Option<Vec<f64>>,
    /// Add two standard errors to each estimate.
    #[serde(default)]
    pub conservative: bool,
}

/// The trajectory-dependent certificate: `grad_sq[k-1]` estimates
/// `E‖g_k(w_k)‖²` (expectation over algorithm randomness only).
pub fn pac_bayes_certificate(
    grad_sq: &[f64],
    config: &SgldConfig,
    pb: &PacBayesConfig,
    n: usize,
) -> Result<Certificate> {
    config.validate()?;
    if config.noiseless {
        return Err(Error::InvalidArgument(
            "certificates do not cover the noiseless (plain GD) mode".into(),
        ));
    }
    let n_steps = config.steps;
    if grad_sq.is_empty() || grad_sq.len() < n_steps {
        return Err(Error::EmptyInput(format!(
            "need {} gradient norm estimates, got {}",
            n_steps,
            grad_sq.len()
        )));
    }
    if !(pb.delta > 0.0 && pb.delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0,1), got {}",
            pb.delta
        )));
    }
    let nl = n_steps as f64 * pb.l;
    if nl < 3.0 {
        return Err(Error::InvalidArgument(format!(
            "N*L = {nl} < 3: the iterated logarithm in the confidence term is undefined"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "dataset size must be >= 2, got {n}"
        )));
    }
    if let Some(se) = &pb.std_errors {
        if se.len() < n_steps {
            return Err(Error::InvalidArgument(format!(
                "need {} standard errors, got {}",
                n_steps,
                se.len()
            )));
        }
    } else if pb.conservative {
        return Err(Error::InvalidArgument(
            "the conservative flag needs the standard errors of the gradient-norm estimates".into(),
        ));
    }

    let r = decay_factors(
        &config.schedule,
        config.lambda,
        config.beta,
        config.sigma0,
        n_steps,
    )?;
    let nf = n as f64;
    let mut acc = KahanSum::new();
    for k in 1..=n_steps {
        let mut g2 = grad_sq[k - 1];
        if !(g2.is_finite() && g2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grad_sq[{}] = {g2} must be finite and >= 0",
                k - 1
            )));
        }
        if pb.conservative {
            if let Some(se) = &pb.std_errors {
                g2 += 2.0 * se[k - 1];
            }
        }
        acc.add(config.schedule.eta(k)? * (-r[k - 1]).exp() * g2);
    }
    let trajectory_term = config.beta / nf * acc.value();
    let confidence_term = ((n_steps as f64 / pb.delta).ln() + nl.ln().ln()) / nf;
    let bound = pb.s * (trajectory_term + confidence_term).sqrt();

    let priors = prior_sequence(config, n_steps)?;
    let d_kl = kl_bound_recursive(grad_sq, config, &priors)?;
    let k1_val = match lambda_case(config.lambda, config.beta, config.sigma0) {
        LambdaCase::III => Some(k1(
            &config.schedule,
            config.lambda,
            config.sigma0,
            config.beta,
        )?),
        _ => None,
    };
    let inputs_hash = hash_inputs(&serde_json::json!({
        "variant": CertificateVariant::PacBayes,
        "config": config,
        "pb": pb,
        "n": n,
        "grad_sq": grad_sq,
    }));
    Ok(Certificate {
        variant: CertificateVariant::PacBayes,
        bound,
        intermediates: Intermediates {
            k1: k1_val,
            t_table: Some(config.schedule.prefix_sums(n_steps)?[1..].to_vec()),
            sigma_sq: Some(priors.sigma_sq),
            b: Some(priors.b),
            r_table: Some(r),
            d_kl_bound: d_kl.last().copied(),
            s: Some(pb.s),
            delta: Some(pb.delta),
            m_cap: Some(pb.m.min(nl)),
            trajectory_term: Some(trajectory_term),
            confidence_term: Some(confidence_term),
            ..Default::default()
        },
        inputs_hash,
    })
}

/// Per-step CSV table `k,eta,T,sigma_sq,b,R,d_kl_bound` for a run.
pub fn per_step_table_csv(grad_sq: &[f64], config: &SgldConfig) -> Result<String> {
    let n_steps = config.steps;
    let t = config.schedule.prefix_sums(n_steps)?;
    let priors = prior_sequence(config, n_steps)?;
    let r = decay_factors(
        &config.schedule,
        config.lambda,
        config.beta,
        config.sigma0,
        n_steps,
    )?;
    let d = kl_bound_recursive(grad_sq, config, &priors)?;
    let mut out = String::from("k,eta,T,sigma_sq,b,R,d_kl_bound\n");
    for k in 1..=n_steps {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            k,
            config.schedule.eta(k)?,
            t[k],
            priors.sigma_sq[k],
            priors.b[k - 1],
            r[k - 1],
            d[k - 1]
        ));
    }
    Ok(out)
}

/// Continuous-time reference bounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdealBoundParams {
    pub n: usize,
    pub l: f64,
    pub c: f64,
    pub beta: f64,
    pub lambda: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdealBounds {
    /// Continuous-time stability bound `LC·√(βT)/(√2·n)`.
    pub stability: f64,
    /// Regularized continuous-time PAC-Bayes main term
    /// `sL·√(β(1−e^{−λT/2})/(λn))` (its `λ → 0` limit is `sL·√(βT/(2n))`).
    pub pac_bayes_main: f64,
}

pub fn ideal_bounds(t: f64, params: &IdealBoundParams) -> Result<IdealBounds> {
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "time horizon must be >= 0, got {t}"
        )));
    }
    let nf = params.n as f64;
    let stability =
        params.l * params.c * (params.beta * t).sqrt() / (std::f64::consts::SQRT_2 * nf);
    let lam = params.lambda;
    // (1 - e^{-λT/2})/λ, continuous at λ = 0
    let ramp = if lam == 0.0 {
        t / 2.0
    } else {
        (1.0 - (-lam * t / 2.0).exp()) / lam
    };
    let pac_bayes_main = params.s * params.l * (params.beta * ramp / nf).sqrt();
    Ok(IdealBounds {
        stability,
        pac_bayes_main,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base_config(schedule: StepSchedule, steps: usize, lambda: f64) -> SgldConfig {
        SgldConfig {
            beta: 1.0,
            lambda,
            sigma0: 1.0,
            schedule,
            grad_mode: GradMode::Single,
            steps,
            seed: 0,
            snapshot_every: 0,
            noiseless: false,
            init_mean: None,
        }
    }

    #[test]
    fn eta_t_matches_hand_sums() {
        let s = StepSchedule::constant(0.1, 100).unwrap();
        let (eta, t) = s.eta_t(10).unwrap();
        assert_eq!(eta, 0.1);
        assert!((t - 1.0).abs() < 1e-15);

        let s = StepSchedule::polynomial(1.0, 1.0, 10).unwrap();
        let (eta, t) = s.eta_t(3).unwrap();
        assert!((eta - 1.0 / 3.0).abs() < 1e-15);
        assert!((t - 11.0 / 6.0).abs() < 1e-15, "harmonic partial sum: {t}");

        let s = StepSchedule::explicit(vec![0.5, 0.25]).unwrap();
        let (eta, t) = s.eta_t(2).unwrap();
        assert_eq!(eta, 0.25);
        assert_eq!(t, 0.75);

        assert!(s.eta_t(3).is_err());
        assert!(s.eta_t(0).is_err());
    }

    #[test]
    fn k0_scan_examples() {
        // eta_k * beta * L^2 = 1/k < ln 2 first at k = 2
        let s = StepSchedule::polynomial(0.5, 1.0, 100).unwrap();
        assert_eq!(k0(&s, 2.0, 1.0).unwrap(), 2);

        // immediately small: convention pins 0
        let s = StepSchedule::constant(0.01, 100).unwrap();
        assert_eq!(k0(&s, 1.0, 1.0).unwrap(), 0);

        // never small: sentinel n_max + 1
        let s = StepSchedule::constant(1.0, 10).unwrap();
        assert_eq!(k0(&s, 1.0, 1.0).unwrap(), 11);
    }

    #[test]
    fn k0_independent_scan_oracle_on_random_schedules() {
        let mut seedling = 0u64;
        for _ in 0..50 {
            seedling = seedling.wrapping_mul(6364136223846793005).wrapping_add(1);
            let n_max = 3 + (seedling % 40) as usize;
            let c = 0.2 + (seedling % 17) as f64 / 10.0;
            let alpha = ((seedling >> 8) % 11) as f64 / 10.0;
            let s = StepSchedule::polynomial(c, alpha, n_max).unwrap();
            let (beta, l) = (2.0, 0.9);
            // oracle: direct scan of the definition
            let mut expect = n_max + 1;
            for k in 1..=n_max {
                if s.eta(k).unwrap() * beta * l * l < std::f64::consts::LN_2 {
                    expect = if k == 1 { 0 } else { k };
                    break;
                }
            }
            assert_eq!(k0(&s, beta, l).unwrap(), expect);
        }
    }

    #[test]
    fn k0_non_monotone_uses_last_violation() {
        let s = StepSchedule::explicit(vec![0.1, 2.0, 0.1, 2.0, 0.1]).unwrap();
        assert!(!s.is_nonincreasing());
        // threshold ln2 with beta = L = 1: violations at k = 2 and 4
        assert_eq!(k0(&s, 1.0, 1.0).unwrap(), 4);
    }

    #[test]
    fn k1_scan_example_and_edges() {
        // threshold = (1/4) ln 9 ~ 0.549306; T_5 = 0.5, T_6 = 0.6
        let s = StepSchedule::constant(0.1, 100).unwrap();
        assert_eq!(k1(&s, 2.0, 1.0, 3.0).unwrap(), 6);

        // immediate crossing when the threshold is below the first step
        let s = StepSchedule::constant(1.0, 10).unwrap();
        assert_eq!(k1(&s, 2.0, 1.0, 3.0).unwrap(), 1);

        // never crossed: sentinel
        let s = StepSchedule::constant(1e-6, 5).unwrap();
        assert_eq!(k1(&s, 2.0, 1.0, 3.0).unwrap(), 6);

        // outside Case III: error
        let s = StepSchedule::constant(0.1, 10).unwrap();
        assert!(matches!(
            k1(&s, 0.1, 1.0, 3.0),
            Err(Error::CaseMismatch { .. })
        ));
    }

    #[test]
    fn prior_sequence_lambda_zero_hand_iteration() {
        // lambda = 0, beta = 1, sigma0^2 = 1, ten steps of 0.1:
        // sigma_k^2 = 1 + 0.1k, b_1 = 1*1 + 0.1
        let cfg = base_config(StepSchedule::constant(0.1, 10).unwrap(), 10, 0.0);
        let p = prior_sequence(&cfg, 10).unwrap();
        assert!((p.sigma_sq[10] - 2.0).abs() < 1e-12, "{}", p.sigma_sq[10]);
        assert!((p.b[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn prior_one_step_matches_linear_gaussian_closed_form() {
        // substituting (tau, beta') turns the OU variance flow into the
        // linear-Gaussian step variance: sigma_1^2 = (1-eta*lambda)^2 sigma_0^2 + 2 eta/beta
        for (eta, lambda, beta, s0) in [
            (0.1, 1.0, 1.0, 1.0),
            (0.05, 2.0, 3.0, 0.7),
            (0.2, 0.9, 0.5, 1.3),
        ] {
            let mut cfg = base_config(StepSchedule::constant(eta, 4).unwrap(), 4, lambda);
            cfg.beta = beta;
            cfg.sigma0 = s0;
            let p = prior_sequence(&cfg, 1).unwrap();
            let closed = (1.0 - eta * lambda).powi(2) * s0 * s0 + 2.0 * eta / beta;
            assert!(
                (p.sigma_sq[1] - closed).abs() < 1e-14,
                "recursion {} vs closed form {closed}",
                p.sigma_sq[1]
            );
        }
    }

    #[test]
    fn prior_variance_frozen_in_zero_step_limit() {
        let mut cfg = base_config(StepSchedule::constant(1e-12, 5).unwrap(), 5, 2.0);
        cfg.sigma0 = 0.8;
        let p = prior_sequence(&cfg, 5).unwrap();
        for k in 0..=5 {
            assert!((p.sigma_sq[k] - 0.64).abs() < 1e-9);
        }
    }

    #[test]
    fn prior_variance_honors_discretized_envelopes() {
        // Case II: the recursion's fixed point is 1/(beta' lambda), so the
        // provable cap carries the 1/(1 - eta*lambda/2) discretization factor.
        // Case III: same factor on top of the shrinking envelope.
        let mut state = 99u64;
        for _ in 0..100 {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let r = |s: u64, lo: f64, hi: f64| lo + (s % 1000) as f64 / 999.0 * (hi - lo);
            let beta = r(state, 0.5, 4.0);
            let sigma0 = r(state >> 10, 0.5, 2.0);
            let eta = r(state >> 20, 0.005, 0.2);
            let boundary = 1.0 / (beta * sigma0 * sigma0);
            for lambda in [0.3 * boundary, boundary, 1.7 * boundary] {
                if eta * lambda >= 0.5 {
                    continue;
                }
                let n = 200;
                let mut cfg = base_config(StepSchedule::constant(eta, n).unwrap(), n, lambda);
                cfg.beta = beta;
                cfg.sigma0 = sigma0;
                let p = prior_sequence(&cfg, n).unwrap();
                let slack = 1.0 / (1.0 - 0.5 * eta * lambda);
                let cap = (sigma0 * sigma0).max(slack / (beta * lambda));
                for (k, &s2) in p.sigma_sq.iter().enumerate() {
                    assert!(
                        s2 <= cap * (1.0 + 1e-12),
                        "sigma_{k}^2 = {s2} above discretized cap {cap}"
                    );
                }
            }
        }
    }

    #[test]
    fn kl_recursion_zero_gradients_stay_zero() {
        let cfg = base_config(StepSchedule::constant(0.1, 20).unwrap(), 20, 1.0);
        let p = prior_sequence(&cfg, 20).unwrap();
        let d = kl_bound_recursive(&vec![0.0; 20], &cfg, &p).unwrap();
        assert!(d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kl_recursion_no_decay_limit_is_weighted_sum() {
        // lambda = 0 with a huge prior variance makes the contraction factor
        // indistinguishable from 1
        let mut cfg = base_config(StepSchedule::constant(0.1, 30).unwrap(), 30, 0.0);
        cfg.sigma0 = 1e6;
        let p = prior_sequence(&cfg, 30).unwrap();
        let g2: Vec<f64> = (0..30).map(|k| 0.1 + 0.03 * k as f64).collect();
        let d = kl_bound_recursive(&g2, &cfg, &p).unwrap();
        let mut plain = 0.0;
        for k in 1..=30 {
            let t = transform_step(0.1, 0.0, 1.0).unwrap();
            plain += 0.5 * t.beta_prime * t.tau * g2[k - 1];
        }
        let last = *d.last().unwrap();
        assert!((last - plain).abs() / plain < 1e-9, "{last} vs {plain}");
    }

    #[test]
    fn kl_recursion_below_case2_closed_form() {
        // constant steps in Case II: the closed form relaxes tau <= 2 eta and
        // beta' <= beta, so the recursion must sit below it pointwise
        let (eta, lambda, beta, s0) = (0.05, 0.4, 2.0, 1.0);
        assert!(lambda <= 1.0 / (beta * s0 * s0));
        let n = 50;
        let mut cfg = base_config(StepSchedule::constant(eta, n).unwrap(), n, lambda);
        cfg.beta = beta;
        let p = prior_sequence(&cfg, n).unwrap();
        let g2: Vec<f64> = (0..n).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let d = kl_bound_recursive(&g2, &cfg, &p).unwrap();
        let t = cfg.schedule.prefix_sums(n).unwrap();
        for m in 1..=n {
            let mut closed = KahanSum::new();
            for k in 1..=m {
                closed.add(beta * eta * (-(lambda / 2.0) * (t[m] - t[k])).exp() * g2[k - 1]);
            }
            assert!(
                d[m - 1] <= closed.value() * (1.0 + 1e-12),
                "step {m}: recursion {} above closed form {}",
                d[m - 1],
                closed.value()
            );
        }
    }

    #[test]
    fn decay_case2_example_and_terminal_zero() {
        // lambda = 2 with beta*sigma0^2 = 0.01 sits inside Case II
        let s = StepSchedule::constant(0.01, 100).unwrap();
        let r = decay_factor(&s, 2.0, 1.0, 0.1, 50, 100).unwrap();
        assert!((r - 0.5).abs() < 1e-12, "{r}");
        assert!(((-r).exp() - 0.606_530_659_712_633_4).abs() < 1e-12);
        for (lambda, sigma0) in [(0.0, 1.0), (2.0, 0.1)] {
            let r = decay_factor(&s, lambda, 1.0, sigma0, 100, 100).unwrap();
            assert_eq!(r, 0.0, "R_NN must vanish");
        }
    }

    #[test]
    fn decay_case1_large_prior_approximation() {
        // sigma0^2 beta = 1e3 dominates 4 T_j, so each summand ~ eta/(2 sigma0^2 beta)
        let n = 100;
        let eta = 0.01;
        let s = StepSchedule::constant(eta, n).unwrap();
        let beta = 1.0;
        let sigma0 = (1e3f64).sqrt();
        for k in [1usize, 25, 60, 99] {
            let r = decay_factor(&s, 0.0, beta, sigma0, k, n).unwrap();
            let approx = (n - k) as f64 * eta / (2.0 * sigma0 * sigma0 * beta);
            assert!((r - approx).abs() / approx < 0.01, "k={k}: {r} vs {approx}");
        }
    }

    #[test]
    fn decay_factors_nonincreasing_and_case3_piecewise() {
        for (lambda, sigma0) in [(0.0, 1.0), (0.4, 1.0), (3.0, 1.0)] {
            let s = StepSchedule::polynomial(0.05, 0.5, 80).unwrap();
            let r = decay_factors(&s, lambda, 2.0, sigma0, 80).unwrap();
            for w in r.windows(2) {
                assert!(w[1] <= w[0] + 1e-15, "R must be nonincreasing in k");
            }
            assert!(r.iter().all(|&x| x >= 0.0));
            let weights: Vec<f64> = r.iter().map(|&x| (-x).exp()).collect();
            assert!(weights.iter().all(|&w| w > 0.0 && w <= 1.0));
            if lambda <= 1.0 / (2.0 * sigma0 * sigma0) {
                assert_eq!(r[79], 0.0);
            }
        }
    }

    #[test]
    fn stability_certificate_regression_pins() {
        let s = StepSchedule::constant(0.01, 100).unwrap();
        let improved = stability_certificate(
            1.0,
            1.0,
            2.0,
            &s,
            100,
            100,
            CertificateVariant::SgldImproved,
            Some(GradMode::Single),
        )
        .unwrap();
        assert_eq!(improved.intermediates.k0, Some(0));
        assert!(
            (improved.bound - 0.014_142_135_623_730_950).abs() < 1e-12,
            "{}",
            improved.bound
        );

        let succinct = stability_certificate(
            1.0,
            1.0,
            2.0,
            &s,
            100,
            100,
            CertificateVariant::SgldSuccinct,
            None,
        )
        .unwrap();
        assert!((succinct.bound - 0.05).abs() < 1e-12, "{}", succinct.bound);

        // no steps, no instability
        let lmc = stability_certificate(
            1.0,
            1.0,
            2.0,
            &s,
            100,
            0,
            CertificateVariant::LmcStability,
            None,
        )
        .unwrap();
        assert_eq!(lmc.bound, 0.0);
    }

    #[test]
    fn improved_rejects_unsupported_modes() {
        let s = StepSchedule::constant(0.01, 10).unwrap();
        for mode in [GradMode::Minibatch(8), GradMode::Full] {
            assert!(matches!(
                stability_certificate(
                    1.0,
                    1.0,
                    2.0,
                    &s,
                    100,
                    10,
                    CertificateVariant::SgldImproved,
                    Some(mode),
                ),
                Err(Error::UnsupportedGradMode { .. })
            ));
        }
    }

    #[test]
    fn certificates_are_reproducible() {
        let s = StepSchedule::polynomial(0.1, 0.5, 200).unwrap();
        let a = stability_certificate(
            2.0,
            1.0,
            3.0,
            &s,
            50,
            200,
            CertificateVariant::SgldImproved,
            None,
        )
        .unwrap();
        let b = stability_certificate(
            2.0,
            1.0,
            3.0,
            &s,
            50,
            200,
            CertificateVariant::SgldImproved,
            None,
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.inputs_hash, b.inputs_hash);
    }

    fn pac_inputs(n_steps: usize) -> (SgldConfig, PacBayesConfig) {
        let mut cfg = base_config(StepSchedule::constant(0.01, n_steps).unwrap(), n_steps, 2.0);
        cfg.beta = 2.0;
        cfg.sigma0 = 0.5; // 1/(beta sigma0^2) = 2 -> boundary of Case II
        let pb = PacBayesConfig {
            delta: 0.05,
            m: 1e6,
            s: 0.5,
            l: 1.0,
            std_errors: None,
            conservative: false,
        };
        (cfg, pb)
    }

    #[test]
    fn pac_bayes_case2_regression_pin() {
        // independently recomputed with 50-digit arithmetic before pinning
        let (cfg, pb) = pac_inputs(100);
        let cert = pac_bayes_certificate(&vec![1.0; 100], &cfg, &pb, 200).unwrap();
        assert!(
            (cert.intermediates.trajectory_term.unwrap() - 0.006_352_864_292_852_446).abs() < 1e-15,
            "{}",
            cert.intermediates.trajectory_term.unwrap()
        );
        assert!(
            (cert.intermediates.confidence_term.unwrap() - 0.045_640_410_426_749_917).abs() < 1e-15
        );
        assert!(
            (cert.bound - 0.114_010_169_195_123_08).abs() < 1e-14,
            "{}",
            cert.bound
        );
    }

    #[test]
    fn pac_bayes_zero_gradients_leave_confidence_term() {
        let (cfg, pb) = pac_inputs(100);
        let cert = pac_bayes_certificate(&vec![0.0; 100], &cfg, &pb, 200).unwrap();
        let expect =
            pb.s * (((100.0_f64 / pb.delta).ln() + (100.0_f64 * pb.l).ln().ln()) / 200.0).sqrt();
        assert!((cert.bound - expect).abs() < 1e-15);
    }

    #[test]
    fn pac_bayes_delta_to_one_limit() {
        let (cfg, mut pb) = pac_inputs(100);
        pb.delta = 1.0 - 1e-12;
        let cert = pac_bayes_certificate(&vec![0.0; 100], &cfg, &pb, 200).unwrap();
        let expect = pb.s * ((100.0_f64.ln() + (100.0_f64).ln().ln()) / 200.0).sqrt();
        assert!((cert.bound - expect).abs() < 1e-9);
    }

    #[test]
    fn pac_bayes_rejects_undefined_loglog() {
        let (mut cfg, mut pb) = pac_inputs(100);
        cfg.steps = 2;
        pb.l = 1.0; // N*L = 2 < 3
        assert!(pac_bayes_certificate(&vec![0.0; 2], &cfg, &pb, 200).is_err());
    }

    #[test]
    fn pac_bayes_conservative_adds_two_se() {
        let (cfg, mut pb) = pac_inputs(100);
        let g = vec![1.0; 100];
        let plain = pac_bayes_certificate(&g, &cfg, &pb, 200).unwrap();
        pb.conservative = true;
        pb.std_errors = Some(vec![0.1; 100]);
        let cons = pac_bayes_certificate(&g, &cfg, &pb, 200).unwrap();
        assert!(cons.bound > plain.bound);
        // adding 2*0.1 to every estimate scales the trajectory term by 1.2
        let ratio = cons.intermediates.trajectory_term.unwrap()
            / plain.intermediates.trajectory_term.unwrap();
        assert!((ratio - 1.2).abs() < 1e-12);
    }

    #[test]
    fn ideal_bound_pins_and_limits() {
        let params = IdealBoundParams {
            n: 100,
            l: 1.0,
            c: 1.0,
            beta: 2.0,
            lambda: 0.0,
            s: 0.5,
        };
        assert_eq!(ideal_bounds(0.0, &params).unwrap().stability, 0.0);
        let b = ideal_bounds(1.0, &params).unwrap();
        assert!((b.stability - 0.01).abs() < 1e-15, "{}", b.stability);

        // lambda -> 0 continuity of the ramp factor
        let mut near = params;
        near.lambda = 1e-9;
        let a = ideal_bounds(3.0, &near).unwrap().pac_bayes_main;
        let z = ideal_bounds(3.0, &params).unwrap().pac_bayes_main;
        assert!((a - z).abs() / z < 1e-6, "{a} vs {z}");
    }

    #[test]
    fn succinct_and_lmc_track_the_continuous_bound_as_steps_shrink() {
        // hold T = sum eta fixed at 1 while eta -> 0: ratios to the
        // continuous-time bound must be constant in eta
        let params = IdealBoundParams {
            n: 50,
            l: 1.5,
            c: 0.8,
            beta: 2.0,
            lambda: 0.0,
            s: 0.4,
        };
        let ideal = ideal_bounds(1.0, &params).unwrap().stability;
        let mut ratios_lmc = Vec::new();
        let mut ratios_succ = Vec::new();
        for eta in [1e-2_f64, 1e-3, 1e-4] {
            let n_steps = (1.0 / eta).round() as usize;
            let s = StepSchedule::constant(eta, n_steps).unwrap();
            let lmc = stability_certificate(
                params.l,
                params.c,
                params.beta,
                &s,
                params.n,
                n_steps,
                CertificateVariant::LmcStability,
                None,
            )
            .unwrap();
            let succ = stability_certificate(
                params.l,
                params.c,
                params.beta,
                &s,
                params.n,
                n_steps,
                CertificateVariant::SgldSuccinct,
                None,
            )
            .unwrap();
            ratios_lmc.push(lmc.bound / ideal);
            ratios_succ.push(succ.bound / ideal);
        }
        for r in &ratios_lmc {
            assert!((r - ratios_lmc[0]).abs() < 1e-9);
        }
        for r in &ratios_succ {
            assert!((r - ratios_succ[0]).abs() < 1e-9);
        }
        // the LMC chain IS the continuous form at T = sum eta
        assert!((ratios_lmc[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn per_step_table_has_all_columns() {
        let cfg = base_config(StepSchedule::constant(0.05, 5).unwrap(), 5, 0.5);
        let table = per_step_table_csv(&[0.5, 0.4, 0.3, 0.2, 0.1], &cfg).unwrap();
        assert!(table.starts_with("k,eta,T,sigma_sq,b,R,d_kl_bound\n"));
        assert_eq!(table.lines().count(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Every stability variant is nondecreasing in N and under scaling any
        /// single step up (constants kept in the moderate range where the
        /// prefix-split trade-off of the improved bound stays monotone).
        #[test]
        fn bounds_monotone_in_n_and_eta(
            n_steps in 2usize..40,
            grow in 1.1f64..3.0,
            idx in 0usize..39,
            c in 0.2f64..2.0,
            l in 0.2f64..2.0,
            beta in 0.2f64..3.0,
            base_eta in 1e-4f64..0.5,
        ) {
            let idx = idx % n_steps;
            let values: Vec<f64> = (0..n_steps).map(|k| base_eta / (1.0 + k as f64 * 0.1)).collect();
            let mut grown = values.clone();
            // grow one step while keeping the schedule nonincreasing, so the
            // prefix-split convention stays the same on both schedules
            grown[idx] = if idx == 0 {
                values[idx] * grow
            } else {
                (values[idx] * grow).min(values[idx - 1])
            };
            for k in (idx + 1)..n_steps {
                grown[k] = grown[k].min(grown[k - 1]);
            }
            for variant in [
                CertificateVariant::LmcStability,
                CertificateVariant::SgldSuccinct,
                CertificateVariant::SgldImproved,
            ] {
                let s = StepSchedule::explicit(values.clone()).unwrap();
                let s_grown = StepSchedule::explicit(grown.clone()).unwrap();
                let full = stability_certificate(l, c, beta, &s, 100, n_steps, variant, None).unwrap();
                let shorter =
                    stability_certificate(l, c, beta, &s, 100, n_steps - 1, variant, None).unwrap();
                prop_assert!(full.bound + 1e-12 >= shorter.bound,
                    "{variant}: N-monotonicity failed ({} < {})", full.bound, shorter.bound);
                let bigger =
                    stability_certificate(l, c, beta, &s_grown, 100, n_steps, variant, None).unwrap();
                prop_assert!(bigger.bound + 1e-12 >= full.bound,
                    "{variant}: eta-monotonicity failed ({} < {})", bigger.bound, full.bound);
            }
        }

        /// The improved bound never exceeds the structural combination of the
        /// worst-case prefix and the succinct bound on the suffix (n >= 8 makes
        /// the suffix comparison valid).
        #[test]
        fn improved_bounded_by_prefix_plus_suffix_succinct(
            n_steps in 1usize..60,
            c in 0.1f64..2.0,
            l in 0.1f64..2.5,
            beta in 0.1f64..4.0,
            eta0 in 1e-4f64..1.0,
            alpha in 0.0f64..1.0,
            n in 8usize..1000,
        ) {
            let s = StepSchedule::polynomial(eta0, alpha, n_steps).unwrap();
            let improved =
                stability_certificate(l, c, beta, &s, n, n_steps, CertificateVariant::SgldImproved, None)
                    .unwrap();
            let kk = improved.intermediates.k0.unwrap().min(n_steps);
            let t = s.prefix_sums(n_steps).unwrap();
            let suffix_succinct = l * c * (beta / (8.0 * n as f64) * (t[n_steps] - t[kk])).sqrt();
            let structural = 2.0 * n_steps as f64 / n as f64 * c.max(1.0) + suffix_succinct;
            prop_assert!(improved.bound <= structural + 1e-12,
                "improved {} vs structural {structural}", improved.bound);
        }

        /// R tables: nonincreasing in k, nonnegative, weights in (0,1].
        #[test]
        fn decay_factor_shape(
            lambda in 0.0f64..3.0,
            beta in 0.2f64..4.0,
            sigma0 in 0.3f64..2.0,
            eta in 1e-4f64..0.15,
            n_steps in 1usize..120,
        ) {
            let s = StepSchedule::constant(eta, n_steps).unwrap();
            let r = decay_factors(&s, lambda, beta, sigma0, n_steps).unwrap();
            prop_assert!(r.iter().all(|&x| x.is_finite() && x >= 0.0));
            for w in r.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
            if lambda <= 1.0 / (beta * sigma0 * sigma0) {
                prop_assert!(r[n_steps - 1] == 0.0);
            }
        }
    }
}
