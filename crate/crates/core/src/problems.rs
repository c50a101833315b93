//! Synthetic empirical-risk problems with analytic gradients and exact
//! constants.
//!
//! Every certificate downstream needs three numbers that must be *exact*, not
//! estimated: the gradient-gap constant `L` (the largest possible difference
//! between per-example gradients at a shared parameter), the uniform loss
//! bound `C`, and the subGaussian factor `s = C/2`. The three families here
//! are chosen so those constants come from closed forms:
//!
//! - `quadratic_regression`: `f(w;z) = (⟨x,w⟩ − y)²/2` with features in a ball
//!   of radius `B` and labels in `[−Y, Y]`. Gradient gaps are unbounded over
//!   all of `ℝ^d`, so the constant is stated on the clamp region `‖w‖ ≤ W`:
//!   `L = 2B(BW + Y)`. The sampler itself is unclamped; runs that leave the
//!   region are flagged so reports can surface it.
//! - `double_well_1d`: a smoothed min of two quadratic wells at `±a`, shifted
//!   per example by a bounded scalar (the feature) and tilted per example by a
//!   bounded scalar (the label) through a saturating `tanh` term. The tilt is
//!   what makes the two wells distinguishable through the loss, which the
//!   stability experiments need; both mechanisms keep the gradient gap
//!   globally bounded: `L = 2·shift·max(1, ρa² − 1) + 2·tilt`.
//! - `gaussian_mixture_nll`: negative log-likelihood of a two-component unit
//!   variance mixture over bounded scalar data; responsibilities saturate, and
//!   on the clamp region the conservative envelope is `L = 2(B + W)`.
//!
//! The measured loss `ℓ` is the objective clipped to `[0, C]`; optimization
//! always uses the analytic gradient of the *unclipped* objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{all_finite, dot, ksum, norm};
use crate::rng::{stream, Domain};

/// One observation: a feature vector and a scalar label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: f64,
}

impl DataPoint {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }

    pub fn is_finite(&self) -> bool {
        self.label.is_finite() && all_finite(&self.features)
    }
}

/// An ordered sample of `n >= 2` points; index `i` identifies the point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: Vec<DataPoint>,
}

impl Dataset {
    pub fn new(points: Vec<DataPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "dataset needs at least 2 points, got {}",
                points.len()
            )));
        }
        if !points.iter().all(DataPoint::is_finite) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(Self { points })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    /// CSV with header `index,feature_0..feature_{d-1},label`.
    pub fn to_csv(&self) -> String {
        let fdim = self.points.first().map_or(0, |p| p.features.len());
        let mut out = String::from("index");
        for j in 0..fdim {
            out.push_str(&format!(",feature_{j}"));
        }
        out.push_str(",label\n");
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&i.to_string());
            for x in &p.features {
                out.push_str(&format!(",{x}"));
            }
            out.push_str(&format!(",{}\n", p.label));
        }
        out
    }
}

/// Two datasets of equal size that agree everywhere except `differing_index`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeighborPair {
    pub base: Dataset,
    pub variant: Dataset,
    pub differing_index: usize,
}

/// Loss family identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    QuadraticRegression,
    #[serde(rename = "double_well_1d")]
    DoubleWell1d,
    GaussianMixtureNll,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LossKind::QuadraticRegression => "quadratic_regression",
            LossKind::DoubleWell1d => "double_well_1d",
            LossKind::GaussianMixtureNll => "gaussian_mixture_nll",
        };
        f.write_str(s)
    }
}

/// Kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyParams {
    /// `f(w;z) = (⟨x,w⟩ − y)² / 2`.
    QuadraticRegression {
        /// Feature ball radius `B`.
        feature_radius: f64,
        /// Label range `[−Y, Y]`.
        label_bound: f64,
        /// Clamp region radius `W` on which `L` is valid.
        weight_radius: f64,
    },
    /// `f(w;z) = softmin_ρ(½(u+a)², ½(u−a)²) + ln2/ρ + κ·y·tanh(w)` with
    /// `u = w − δ·x`, features and labels in `[−1, 1]`.
    #[serde(rename = "double_well_1d")]
    DoubleWell1d {
        /// Well locations `±a`.
        well_center: f64,
        /// Softmin sharpness `ρ` (two wells require `ρa² > 1`).
        smoothing: f64,
        /// Location-shift scale `δ`.
        shift_scale: f64,
        /// Tilt scale `κ`.
        tilt_scale: f64,
    },
    /// `f(w;x) = −ln(½e^{−(x−m₁)²/2} + ½e^{−(x−m₂)²/2})`, `w = (m₁, m₂)`.
    GaussianMixtureNll {
        /// Data clamp `[−B, B]`.
        data_bound: f64,
        /// Clamp region radius `W` on which `L` is valid.
        weight_radius: f64,
    },
}

impl FamilyParams {
    pub fn defaults(kind: LossKind) -> Self {
        match kind {
            LossKind::QuadraticRegression => FamilyParams::QuadraticRegression {
                feature_radius: 1.0,
                label_bound: 1.0,
                weight_radius: 2.0,
            },
            LossKind::DoubleWell1d => FamilyParams::DoubleWell1d {
                well_center: 1.0,
                smoothing: 4.0,
                shift_scale: 0.1,
                tilt_scale: 0.25,
            },
            LossKind::GaussianMixtureNll => FamilyParams::GaussianMixtureNll {
                data_bound: 4.0,
                weight_radius: 4.0,
            },
        }
    }

    pub fn kind(&self) -> LossKind {
        match self {
            FamilyParams::QuadraticRegression { .. } => LossKind::QuadraticRegression,
            FamilyParams::DoubleWell1d { .. } => LossKind::DoubleWell1d,
            FamilyParams::GaussianMixtureNll { .. } => LossKind::GaussianMixtureNll,
        }
    }
}

/// A loss family plus the clip level defining the measured loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossFamily {
    pub params: FamilyParams,
    /// Clip level `C`: the measured loss is `clamp(f, 0, C)`.
    pub clip_level: f64,
}

impl LossFamily {
    pub fn new(params: FamilyParams, clip_level: f64) -> Result<Self> {
        if !(clip_level.is_finite() && clip_level > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clip level must be positive, got {clip_level}"
            )));
        }
        Ok(Self { params, clip_level })
    }

    pub fn kind(&self) -> LossKind {
        self.params.kind()
    }
}

/// Which gradient to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradSelector {
    /// `(1/n) Σ_i ∇f(w; z_i) + λw`.
    Full,
    /// `∇f(w; z_i) + λw`.
    Single(usize),
    /// `λw`.
    RegularizerOnly,
}

/// A dataset, its loss family, and the exact constants certificates consume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub dataset: Dataset,
    pub family: LossFamily,
    /// Parameter dimension.
    pub d: usize,
    /// Gradient-gap constant: `sup ‖∇f(w;z) − ∇f(w;z′)‖` over the family
    /// domain (and the clamp region where the family needs one).
    pub l: f64,
    /// Uniform bound on the measured loss.
    pub c: f64,
    /// SubGaussian factor, `C/2` by the bounded-range rule.
    pub s: f64,
}

// softmin of two quadratic wells at ±a with sharpness rho, plus its
// derivative. Stable via log-sum-exp.
fn softmin_wells(u: f64, a: f64, rho: f64) -> f64 {
    let qm = 0.5 * (u + a) * (u + a);
    let qp = 0.5 * (u - a) * (u - a);
    let m = qm.min(qp);
    m - ((-rho * (qm - m)).exp() + (-rho * (qp - m)).exp()).ln() / rho
}

fn softmin_wells_deriv(u: f64, a: f64, rho: f64) -> f64 {
    // weight of the well at -a: logistic(-2*rho*a*u)
    let sigma = 1.0 / (1.0 + (2.0 * rho * a * u).exp());
    u + a * (2.0 * sigma - 1.0)
}

fn mixture_responsibility(x: f64, m1: f64, m2: f64) -> (f64, f64) {
    let h = 0.5 * ((x - m2) * (x - m2) - (x - m1) * (x - m1));
    let r1 = 1.0 / (1.0 + (-h).exp());
    (r1, 1.0 - r1)
}

impl LossFamily {
    /// Unclipped objective `f(w; z)`. This is what the sampler differentiates.
    pub fn raw_loss(&self, w: &[f64], z: &DataPoint) -> f64 {
        match self.params {
            FamilyParams::QuadraticRegression { .. } => {
                let r = dot(&z.features, w) - z.label;
                0.5 * r * r
            }
            FamilyParams::DoubleWell1d {
                well_center: a,
                smoothing: rho,
                shift_scale: delta,
                tilt_scale: kappa,
            } => {
                let u = w[0] - delta * z.features[0];
                softmin_wells(u, a, rho)
                    + std::f64::consts::LN_2 / rho
                    + kappa * z.label * w[0].tanh()
            }
            FamilyParams::GaussianMixtureNll { .. } => {
                let x = z.features[0];
                let (m1, m2) = (w[0], w[1]);
                let e1 = -0.5 * (x - m1) * (x - m1);
                let e2 = -0.5 * (x - m2) * (x - m2);
                let m = e1.max(e2);
                -(m + (0.5 * (e1 - m).exp() + 0.5 * (e2 - m).exp()).ln())
            }
        }
    }

    /// Analytic gradient of the unclipped objective.
    pub fn raw_grad(&self, w: &[f64], z: &DataPoint) -> Vec<f64> {
        match self.params {
            FamilyParams::QuadraticRegression { .. } => {
                let r = dot(&z.features, w) - z.label;
                z.features.iter().map(|x| r * x).collect()
            }
            FamilyParams::DoubleWell1d {
                well_center: a,
                smoothing: rho,
                shift_scale: delta,
                tilt_scale: kappa,
            } => {
                let u = w[0] - delta * z.features[0];
                let t = w[0].tanh();
                vec![softmin_wells_deriv(u, a, rho) + kappa * z.label * (1.0 - t * t)]
            }
            FamilyParams::GaussianMixtureNll { .. } => {
                let x = z.features[0];
                let (r1, r2) = mixture_responsibility(x, w[0], w[1]);
                vec![-r1 * (x - w[0]), -r2 * (x - w[1])]
            }
        }
    }

    /// Number of feature coordinates a data point carries.
    pub fn feature_dim(&self, d: usize) -> usize {
        match self.params {
            FamilyParams::QuadraticRegression { .. } => d,
            FamilyParams::DoubleWell1d { .. } | FamilyParams::GaussianMixtureNll { .. } => 1,
        }
    }

    /// Check a point against the family domain (the range its generator and
    /// constants cover).
    pub fn validate_point(&self, z: &DataPoint, d: usize) -> Result<()> {
        if !z.is_finite() {
            return Err(Error::NonFinite("data point".into()));
        }
        if z.features.len() != self.feature_dim(d) {
            return Err(Error::OutOfDomain(format!(
                "expected {} features, got {}",
                self.feature_dim(d),
                z.features.len()
            )));
        }
        let tol = 1e-12;
        match self.params {
            FamilyParams::QuadraticRegression {
                feature_radius,
                label_bound,
                ..
            } => {
                if norm(&z.features) > feature_radius + tol {
                    return Err(Error::OutOfDomain(format!(
                        "feature norm {} exceeds radius {feature_radius}",
                        norm(&z.features)
                    )));
                }
                if z.label.abs() > label_bound + tol {
                    return Err(Error::OutOfDomain(format!(
                        "label {} outside [-{label_bound}, {label_bound}]",
                        z.label
                    )));
                }
            }
            FamilyParams::DoubleWell1d { .. } => {
                if z.features[0].abs() > 1.0 + tol || z.label.abs() > 1.0 + tol {
                    return Err(Error::OutOfDomain(
                        "double-well shift/tilt scalars must lie in [-1, 1]".into(),
                    ));
                }
            }
            FamilyParams::GaussianMixtureNll { data_bound, .. } => {
                if z.features[0].abs() > data_bound + tol {
                    return Err(Error::OutOfDomain(format!(
                        "observation {} outside [-{data_bound}, {data_bound}]",
                        z.features[0]
                    )));
                }
            }
        }
        Ok(())
    }

    /// The analytic gradient-gap constant.
    pub fn gap_constant(&self) -> f64 {
        match self.params {
            FamilyParams::QuadraticRegression {
                feature_radius: b,
                label_bound: y,
                weight_radius: w,
            } => 2.0 * b * (b * w + y),
            FamilyParams::DoubleWell1d {
                well_center: a,
                smoothing: rho,
                shift_scale: delta,
                tilt_scale: kappa,
            } => {
                // |f0''| <= max(1, rho*a^2 - 1); shifts differ by at most
                // 2*delta, tilts by at most 2*kappa (sup |tanh'| = 1).
                2.0 * delta * (rho * a * a - 1.0).max(1.0) + 2.0 * kappa
            }
            FamilyParams::GaussianMixtureNll {
                data_bound: b,
                weight_radius: w,
            } => 2.0 * (b + w),
        }
    }

    fn sample_point<R: Rng>(&self, d: usize, truth: &[f64], rng: &mut R) -> DataPoint {
        match self.params {
            FamilyParams::QuadraticRegression {
                feature_radius,
                label_bound,
                ..
            } => {
                // uniform in the ball: normalized Gaussian direction, radius B*u^(1/d)
                let mut x: Vec<f64> = (0..d)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                let nrm = norm(&x).max(1e-300);
                let r = feature_radius * rng.gen::<f64>().powf(1.0 / d as f64);
                for xi in &mut x {
                    *xi *= r / nrm;
                }
                let noise = 0.1 * (2.0 * rng.gen::<f64>() - 1.0);
                let y = (dot(&x, truth) + noise).clamp(-label_bound, label_bound);
                DataPoint::new(x, y)
            }
            FamilyParams::DoubleWell1d { .. } => {
                let shift = 2.0 * rng.gen::<f64>() - 1.0;
                let tilt = 2.0 * rng.gen::<f64>() - 1.0;
                DataPoint::new(vec![shift], tilt)
            }
            FamilyParams::GaussianMixtureNll { data_bound, .. } => {
                let center = if rng.gen::<bool>() { 1.5 } else { -1.5 };
                let x: f64 = center + 0.7 * rng.sample::<f64, _>(rand_distr::StandardNormal);
                DataPoint::new(vec![x.clamp(-data_bound, data_bound)], 0.0)
            }
        }
    }
}

/// Build a problem with default family parameters, `C = 1`, and a dataset
/// fully determined by `seed`.
pub fn make_problem(kind: LossKind, n: usize, d: usize, seed: u64) -> Result<ProblemInstance> {
    make_problem_with(
        LossFamily::new(FamilyParams::defaults(kind), 1.0)?,
        n,
        d,
        seed,
    )
}

/// Build a problem from explicit family parameters.
pub fn make_problem_with(
    family: LossFamily,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be >= 2, got {n}")));
    }
    match family.kind() {
        LossKind::DoubleWell1d if d != 1 => {
            return Err(Error::BadDimension {
                kind: family.kind().to_string(),
                d,
                reason: "the double well is one-dimensional".into(),
            })
        }
        LossKind::GaussianMixtureNll if d != 2 => {
            return Err(Error::BadDimension {
                kind: family.kind().to_string(),
                d,
                reason: "the parameter is the pair of component means".into(),
            })
        }
        LossKind::QuadraticRegression if d < 1 => {
            return Err(Error::BadDimension {
                kind: family.kind().to_string(),
                d,
                reason: "need at least one parameter".into(),
            })
        }
        _ => {}
    }

    let mut rng = stream(seed, Domain::Data, 0);
    // ground truth for the regression labels, inside half the clamp region
    let truth: Vec<f64> = match family.params {
        FamilyParams::QuadraticRegression { weight_radius, .. } => {
            let mut v: Vec<f64> = (0..d)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let nrm = norm(&v).max(1e-300);
            let r = 0.5 * weight_radius * rng.gen::<f64>().powf(1.0 / d as f64);
            for vi in &mut v {
                *vi *= r / nrm;
            }
            v
        }
        _ => vec![0.0; d],
    };
    let points: Vec<DataPoint> = (0..n)
        .map(|_| family.sample_point(d, &truth, &mut rng))
        .collect();
    let dataset = Dataset::new(points)?;
    let l = family.gap_constant();
    let c = family.clip_level;
    Ok(ProblemInstance {
        dataset,
        family,
        d,
        l,
        c,
        s: c / 2.0,
    })
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.dataset.n()
    }

    /// Same family and constants over a different dataset (e.g. the variant
    /// side of a neighboring pair). The constants are family-level, so they
    /// remain valid for any in-domain dataset.
    pub fn with_dataset(&self, dataset: Dataset) -> Result<ProblemInstance> {
        for p in &dataset.points {
            self.family.validate_point(p, self.d)?;
        }
        Ok(ProblemInstance {
            dataset,
            family: self.family.clone(),
            d: self.d,
            l: self.l,
            c: self.c,
            s: self.s,
        })
    }

    /// The problem over the variant side of `pair`.
    pub fn variant_instance(&self, pair: &NeighborPair) -> Result<ProblemInstance> {
        self.with_dataset(pair.variant.clone())
    }

    /// Measured per-example loss: the objective clipped to `[0, C]`.
    pub fn loss(&self, w: &[f64], z: &DataPoint) -> Result<f64> {
        if !all_finite(w) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("data point".into()));
        }
        Ok(self.family.raw_loss(w, z).clamp(0.0, self.c))
    }

    /// Gradient of the (regularized) objective under `selector`.
    pub fn gradient(&self, w: &[f64], selector: GradSelector, lambda: f64) -> Result<Vec<f64>> {
        if !all_finite(w) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        if lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        let mut g = match selector {
            GradSelector::Full => self.data_gradient(w),
            GradSelector::Single(i) => {
                if i >= self.n() {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        n: self.n(),
                    });
                }
                self.family.raw_grad(w, &self.dataset.points[i])
            }
            GradSelector::RegularizerOnly => vec![0.0; self.d],
        };
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi += lambda * wi;
        }
        Ok(g)
    }

    /// Mean per-example gradient (regularizer excluded).
    pub fn data_gradient(&self, w: &[f64]) -> Vec<f64> {
        let n = self.n() as f64;
        let mut acc = vec![0.0; self.d];
        for z in &self.dataset.points {
            for (a, gi) in acc.iter_mut().zip(self.family.raw_grad(w, z)) {
                *a += gi;
            }
        }
        for a in &mut acc {
            *a /= n;
        }
        acc
    }

    /// Per-example gradient of example `i` (regularizer excluded).
    pub fn point_gradient(&self, w: &[f64], i: usize) -> Vec<f64> {
        self.family.raw_grad(w, &self.dataset.points[i])
    }

    /// Regularized empirical risk `(1/n) Σ f(w;z_i) + λ‖w‖²/2` (unclipped).
    pub fn empirical_risk(&self, w: &[f64], lambda: f64) -> f64 {
        let data = ksum(
            self.dataset
                .points
                .iter()
                .map(|z| self.family.raw_loss(w, z)),
        ) / self.n() as f64;
        data + 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>()
    }

    /// Mean measured (clipped) loss over an arbitrary dataset.
    pub fn mean_clipped_loss(&self, w: &[f64], data: &Dataset) -> Result<f64> {
        let mut acc = 0.0;
        for z in &data.points {
            acc += self.loss(w, z)?;
        }
        Ok(acc / data.n() as f64)
    }

    /// The stored gradient-gap constant.
    pub fn lipschitz_gap(&self) -> f64 {
        self.l
    }
}

/// Replace the point at `index` with `replacement`, producing a neighboring
/// pair that agrees everywhere else.
pub fn neighbor_of(
    problem: &ProblemInstance,
    index: usize,
    replacement: DataPoint,
) -> Result<NeighborPair> {
    let n = problem.n();
    if index >= n {
        return Err(Error::IndexOutOfRange { index, n });
    }
    problem.family.validate_point(&replacement, problem.d)?;
    let base = problem.dataset.clone();
    let mut variant = base.clone();
    variant.points[index] = replacement;
    Ok(NeighborPair {
        base,
        variant,
        differing_index: index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    fn sample_weight<R: Rng>(radius: f64, d: usize, rng: &mut R) -> Vec<f64> {
        let mut v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let nrm = norm(&v).max(1e-300);
        let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
        for vi in &mut v {
            *vi *= r / nrm;
        }
        v
    }

    /// Brute-force oracle: sampled sup of the gradient gap must stay below the
    /// analytic constant.
    fn assert_gap_dominates(problem: &ProblemInstance, w_radius: f64, trials: usize, seed: u64) {
        let mut rng = stream(seed, Domain::Probe, 99);
        let mut truth = vec![0.0; problem.d];
        if let FamilyParams::QuadraticRegression { .. } = problem.family.params {
            truth = sample_weight(1.0, problem.d, &mut rng);
        }
        let mut max_gap: f64 = 0.0;
        for _ in 0..trials {
            let w = sample_weight(w_radius, problem.d, &mut rng);
            let z1 = problem.family.sample_point(problem.d, &truth, &mut rng);
            let z2 = problem.family.sample_point(problem.d, &truth, &mut rng);
            let g1 = problem.family.raw_grad(&w, &z1);
            let g2 = problem.family.raw_grad(&w, &z2);
            let gap = norm(&g1.iter().zip(&g2).map(|(a, b)| a - b).collect::<Vec<_>>());
            max_gap = max_gap.max(gap);
        }
        assert!(
            max_gap <= problem.l,
            "sampled gap {max_gap} exceeds analytic constant {}",
            problem.l
        );
        // the bound should also be active (not absurdly loose) for the
        // analytic families
        assert!(max_gap > 0.0);
    }

    #[test]
    fn quadratic_gap_constant_dominates_brute_force() {
        let p = make_problem(LossKind::QuadraticRegression, 100, 2, 7).unwrap();
        assert_eq!(p.n(), 100);
        assert_eq!(p.d, 2);
        // B=1, Y=1, W=2 -> L = 2*1*(1*2+1) = 6
        assert_eq!(p.l, 6.0);
        assert_gap_dominates(&p, 2.0, 100_000, 1);
    }

    #[test]
    fn double_well_gap_constant_dominates_brute_force() {
        let p = make_problem(LossKind::DoubleWell1d, 50, 1, 0).unwrap();
        // 2*0.1*max(1, 4-1) + 2*0.25 = 0.6 + 0.5
        assert!((p.l - 1.1).abs() < 1e-15);
        // the double-well constant is global in w; probe well beyond the wells
        assert_gap_dominates(&p, 8.0, 100_000, 2);
    }

    #[test]
    fn mixture_envelope_dominates_brute_force() {
        let p = make_problem(LossKind::GaussianMixtureNll, 60, 2, 3).unwrap();
        assert_eq!(p.l, 16.0);
        assert_gap_dominates(&p, 4.0, 100_000, 3);
    }

    #[test]
    fn repeated_point_has_zero_gap() {
        let p = make_problem(LossKind::QuadraticRegression, 10, 2, 5).unwrap();
        let z = p.dataset.points[0].clone();
        let w = vec![0.3, -0.4];
        let g1 = p.family.raw_grad(&w, &z);
        let g2 = p.family.raw_grad(&w, &z);
        let gap = norm(&g1.iter().zip(&g2).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert_eq!(gap, 0.0);
        assert!(gap <= p.l);
    }

    #[test]
    fn double_well_empirical_risk_has_exactly_three_stationary_points() {
        let p = make_problem(LossKind::DoubleWell1d, 50, 1, 0).unwrap();
        // count sign changes of the empirical-risk derivative on a fine grid
        let mut signs = Vec::new();
        let mut sign_changes = 0;
        let m = 4000;
        for i in 0..m {
            let w = -3.0 + 6.0 * i as f64 / (m - 1) as f64;
            let g = p.gradient(&[w], GradSelector::Full, 0.0).unwrap()[0];
            let s = g > 0.0;
            if let Some(&last) = signs.last() {
                if s != last {
                    sign_changes += 1;
                }
            }
            signs.push(s);
        }
        assert_eq!(sign_changes, 3, "expected two minima and one ridge");
    }

    #[test]
    fn make_problem_is_deterministic_in_seed() {
        let a = make_problem(LossKind::QuadraticRegression, 30, 3, 11).unwrap();
        let b = make_problem(LossKind::QuadraticRegression, 30, 3, 11).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = make_problem(LossKind::QuadraticRegression, 30, 3, 12).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn make_problem_rejects_bad_dimensions() {
        assert!(matches!(
            make_problem(LossKind::DoubleWell1d, 10, 2, 0),
            Err(Error::BadDimension { .. })
        ));
        assert!(matches!(
            make_problem(LossKind::GaussianMixtureNll, 10, 3, 0),
            Err(Error::BadDimension { .. })
        ));
        assert!(make_problem(LossKind::QuadraticRegression, 1, 2, 0).is_err());
    }

    #[test]
    fn neighbor_identity_and_involution() {
        let p = make_problem(LossKind::DoubleWell1d, 12, 1, 4).unwrap();
        // identical replacement: degenerate but legal
        let same = p.dataset.points[3].clone();
        let pair = neighbor_of(&p, 3, same).unwrap();
        assert_eq!(pair.base, pair.variant);

        // fresh point differs only at position 3
        let fresh = DataPoint::new(vec![0.5], -0.5);
        let pair = neighbor_of(&p, 3, fresh.clone()).unwrap();
        for i in 0..p.n() {
            if i == 3 {
                assert_eq!(pair.variant.points[i], fresh);
            } else {
                assert_eq!(pair.variant.points[i], pair.base.points[i]);
            }
        }

        // restoring the original point recovers the base dataset
        let variant_problem = p.variant_instance(&pair).unwrap();
        let back = neighbor_of(&variant_problem, 3, p.dataset.points[3].clone()).unwrap();
        assert_eq!(back.variant, p.dataset);
    }

    #[test]
    fn neighbor_rejects_bad_inputs() {
        let p = make_problem(LossKind::DoubleWell1d, 12, 1, 4).unwrap();
        assert!(matches!(
            neighbor_of(&p, 12, DataPoint::new(vec![0.0], 0.0)),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            neighbor_of(&p, 0, DataPoint::new(vec![3.0], 0.0)),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn full_gradient_vanishes_at_least_squares_solution() {
        let p = make_problem(LossKind::QuadraticRegression, 40, 2, 9).unwrap();
        // solve the 2x2 normal equations by hand
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for z in &p.dataset.points {
            let (x1, x2) = (z.features[0], z.features[1]);
            a11 += x1 * x1;
            a12 += x1 * x2;
            a22 += x2 * x2;
            b1 += z.label * x1;
            b2 += z.label * x2;
        }
        let det = a11 * a22 - a12 * a12;
        let w = vec![(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det];
        let g = p.gradient(&w, GradSelector::Full, 0.0).unwrap();
        assert!(
            norm(&g) < 1e-10,
            "gradient at least-squares solution: {g:?}"
        );
    }

    #[test]
    fn regularizer_only_is_linear_in_w() {
        let p = make_problem(LossKind::QuadraticRegression, 10, 2, 1).unwrap();
        let g = p
            .gradient(&[0.0, 0.0], GradSelector::RegularizerOnly, 3.0)
            .unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = p
            .gradient(&[1.0, -2.0], GradSelector::RegularizerOnly, 0.5)
            .unwrap();
        assert_eq!(g, vec![0.5, -1.0]);
    }

    #[test]
    fn single_gradient_matches_central_difference_between_wells() {
        let p = make_problem(LossKind::DoubleWell1d, 20, 1, 6).unwrap();
        let h = 1e-6;
        for w in [-0.6, -0.2, 0.3, 0.7] {
            for i in [0usize, 7, 19] {
                let z = &p.dataset.points[i];
                let g = p.gradient(&[w], GradSelector::Single(i), 0.0).unwrap()[0];
                let fd =
                    (p.family.raw_loss(&[w + h], z) - p.family.raw_loss(&[w - h], z)) / (2.0 * h);
                let rel = (g - fd).abs() / fd.abs().max(1e-3);
                assert!(rel < 1e-6, "w={w} i={i}: analytic {g} vs fd {fd}");
            }
        }
    }

    #[test]
    fn gradient_rejects_non_finite_w() {
        let p = make_problem(LossKind::QuadraticRegression, 10, 2, 1).unwrap();
        assert!(matches!(
            p.gradient(&[f64::NAN, 0.0], GradSelector::Full, 0.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn loss_is_clipped_and_passes_through_below_c() {
        let family =
            LossFamily::new(FamilyParams::defaults(LossKind::QuadraticRegression), 1.0).unwrap();
        // consistent dataset: y = <x, w0> exactly, so the interpolating w has zero loss
        let w0 = vec![0.5, -0.25];
        let points = vec![
            DataPoint::new(vec![0.6, 0.2], 0.6 * 0.5 - 0.2 * 0.25),
            DataPoint::new(vec![-0.3, 0.4], -0.3 * 0.5 - 0.4 * 0.25),
        ];
        let p = ProblemInstance {
            dataset: Dataset::new(points).unwrap(),
            family,
            d: 2,
            l: 6.0,
            c: 1.0,
            s: 0.5,
        };
        let z0 = p.dataset.points[0].clone();
        assert_eq!(p.loss(&w0, &z0).unwrap(), 0.0);

        // unclipped loss 0.3 passes through; at or above C it pins to C
        let z = DataPoint::new(vec![1.0, 0.0], 0.0);
        let w_mid = vec![(0.6f64).sqrt(), 0.0]; // raw loss = 0.3
        assert!((p.loss(&w_mid, &z).unwrap() - 0.3).abs() < 1e-15);
        let w_big = vec![10.0, 0.0]; // raw loss = 50
        assert_eq!(p.loss(&w_big, &z).unwrap(), 1.0);
    }

    #[test]
    fn losses_stay_in_range_everywhere() {
        for kind in [
            LossKind::QuadraticRegression,
            LossKind::DoubleWell1d,
            LossKind::GaussianMixtureNll,
        ] {
            let d = match kind {
                LossKind::QuadraticRegression => 3,
                LossKind::DoubleWell1d => 1,
                LossKind::GaussianMixtureNll => 2,
            };
            let p = make_problem(kind, 25, d, 13).unwrap();
            let mut rng = stream(13, Domain::Probe, 1);
            let truth = vec![0.0; d];
            for _ in 0..100_000 {
                let w = sample_weight(4.0, d, &mut rng);
                let z = p.family.sample_point(d, &truth, &mut rng);
                let l = p.loss(&w, &z).unwrap();
                assert!((0.0..=p.c).contains(&l), "{kind}: loss {l} out of range");
            }
        }
    }

    #[test]
    fn full_gradient_is_mean_of_singles() {
        let p = make_problem(LossKind::GaussianMixtureNll, 17, 2, 8).unwrap();
        let w = vec![0.7, -1.3];
        let full = p.gradient(&w, GradSelector::Full, 0.25).unwrap();
        let mut acc = vec![0.0; 2];
        for i in 0..p.n() {
            let gi = p.gradient(&w, GradSelector::Single(i), 0.25).unwrap();
            for (a, g) in acc.iter_mut().zip(gi) {
                *a += g;
            }
        }
        for a in &mut acc {
            *a /= p.n() as f64;
        }
        for (f, m) in full.iter().zip(&acc) {
            assert!((f - m).abs() <= 1e-12 * f.abs().max(1.0), "{f} vs {m}");
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let h = 1e-6;
        for kind in [
            LossKind::QuadraticRegression,
            LossKind::DoubleWell1d,
            LossKind::GaussianMixtureNll,
        ] {
            let d = match kind {
                LossKind::QuadraticRegression => 3,
                LossKind::DoubleWell1d => 1,
                LossKind::GaussianMixtureNll => 2,
            };
            let p = make_problem(kind, 10, d, 21).unwrap();
            let mut rng = stream(21, Domain::Probe, 2);
            for t in 0..100 {
                let w = sample_weight(2.0, d, &mut rng);
                let i = t % p.n();
                let z = &p.dataset.points[i];
                let g = p.family.raw_grad(&w, z);
                for j in 0..d {
                    let mut wp = w.clone();
                    let mut wm = w.clone();
                    wp[j] += h;
                    wm[j] -= h;
                    let fd = (p.family.raw_loss(&wp, z) - p.family.raw_loss(&wm, z)) / (2.0 * h);
                    let rel = (g[j] - fd).abs() / g[j].abs().max(1e-2);
                    assert!(rel < 1e-5, "{kind} coord {j}: {g:?} vs fd {fd}");
                }
            }
        }
    }

    #[test]
    fn csv_export_has_expected_header() {
        let p = make_problem(LossKind::QuadraticRegression, 3, 2, 1).unwrap();
        let csv = p.dataset.to_csv();
        assert!(csv.starts_with("index,feature_0,feature_1,label\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
