//! One-step exact propagation and explicit Fokker-Planck evolution.

use super::grid::DensityGrid;
use super::DriftSpec;
use crate::error::{Error, Result};
use crate::numeric::normal_pdf;

/// Kernel support half-width in noise standard deviations. Truncating the
/// Gaussian at 12σ discards ~2e-32 mass, far below the 1e-9 per-step budget.
const KERNEL_SIGMAS: f64 = 12.0;

/// Below this sd/dx ratio the Gaussian cannot be resolved by quadrature; the
/// kernel is deposited as an interpolated point mass instead (exact mass and
/// mean, used only in near-zero-step limits).
const NARROW_KERNEL_RATIO: f64 = 0.75;

/// How a single SGLD round acts on a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagateMode {
    /// One fixed gradient map followed by the Gaussian convolution.
    DeterministicMap,
    /// The uniform mixture over per-example maps (each followed by the same
    /// convolution), i.e. the marginal over the sampled index.
    SgldMixture,
}

/// Accumulate `p` pushed through `y ↦ centers[j]` plus `N(0, sd²)` noise into
/// `out`, weighted by `scale`.
fn deposit(p: &DensityGrid, centers: &[f64], sd: f64, scale: f64, out: &mut [f64]) {
    let m = p.m();
    let dx = p.dx();
    let lo = p.lo();
    if sd < NARROW_KERNEL_RATIO * dx {
        // point-mass deposit with linear interpolation
        for (j, &center) in centers.iter().enumerate().take(m) {
            let mass = p.values()[j] * p.weight(j) * scale;
            if mass == 0.0 {
                continue;
            }
            let pos = (center - lo) / dx;
            if pos <= -1.0 || pos >= m as f64 {
                continue;
            }
            let i0 = pos.floor() as isize;
            let frac = pos - i0 as f64;
            // convert mass to density by dividing by the node weight
            if i0 >= 0 && (i0 as usize) < m {
                let i = i0 as usize;
                out[i] += mass * (1.0 - frac) / p.weight(i);
            }
            let i1 = i0 + 1;
            if i1 >= 0 && (i1 as usize) < m {
                let i = i1 as usize;
                out[i] += mass * frac / p.weight(i);
            }
        }
        return;
    }
    let band = (KERNEL_SIGMAS * sd / dx).ceil() as isize;
    for (j, &c) in centers.iter().enumerate().take(m) {
        let mass = p.values()[j] * p.weight(j) * scale;
        if mass == 0.0 {
            continue;
        }
        let ic = ((c - lo) / dx).round() as isize;
        let start = (ic - band).max(0) as usize;
        let end = ((ic + band) as usize).min(m - 1);
        if start > end {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate().take(end + 1).skip(start) {
            *o += mass * normal_pdf(lo + dx * i as f64, c, sd);
        }
    }
}

/// Push `p` through an arbitrary deterministic map followed by a Gaussian
/// convolution of standard deviation `sd`:
/// `p′(w) = ∫ p(y)·φ(w − map(y); sd²) dy`.
pub fn push_through_kernel(
    p: &DensityGrid,
    map: impl Fn(f64) -> f64,
    sd: f64,
) -> Result<DensityGrid> {
    if !(sd.is_finite() && sd >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise sd must be >= 0, got {sd}"
        )));
    }
    let centers: Vec<f64> = (0..p.m()).map(|i| map(p.node(i))).collect();
    if !centers.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("mapped grid nodes".into()));
    }
    let mut out = vec![0.0; p.m()];
    deposit(p, &centers, sd, 1.0, &mut out);
    DensityGrid::from_raw(p.lo(), p.hi(), out, p.mass_lost, p.negative_clips)
}

/// One exact SGLD round on the density: pushforward through the drift map
/// `y ↦ y − η·g(y)` and convolution with `N(0, 2η/β)`, in a single
/// quadrature. `SgldMixture` averages the `n` per-example propagations and
/// requires a `Full` drift spec (its problem supplies the examples); the
/// spec's `lambda` rides along into each per-example map.
pub fn propagate(
    p: &DensityGrid,
    drift: &DriftSpec,
    eta: f64,
    beta: f64,
    mode: PropagateMode,
) -> Result<DensityGrid> {
    if !(eta > 0.0 && beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "eta and beta must be positive (eta={eta}, beta={beta})"
        )));
    }
    let sd = (2.0 * eta / beta).sqrt();
    match mode {
        PropagateMode::DeterministicMap => push_through_kernel(p, |y| y - eta * drift.eval(y), sd),
        PropagateMode::SgldMixture => {
            let (problem, lambda) = match drift {
                DriftSpec::Full { problem, lambda } => (problem, *lambda),
                _ => {
                    return Err(Error::InvalidArgument(
                        "the mixture propagation needs a full drift spec".into(),
                    ))
                }
            };
            let n = problem.n();
            let m = p.m();
            let mut out = vec![0.0; m];
            let scale = 1.0 / n as f64;
            for i in 0..n {
                let centers: Vec<f64> = (0..m)
                    .map(|j| {
                        let y = p.node(j);
                        y - eta * (problem.point_gradient(&[y], i)[0] + lambda * y)
                    })
                    .collect();
                deposit(p, &centers, sd, scale, &mut out);
            }
            DensityGrid::from_raw(p.lo(), p.hi(), out, p.mass_lost, p.negative_clips)
        }
    }
}

/// Explicit central-difference step of `∂π/∂t = (1/β)π″ + (π·g)′`, iterated
/// `steps` times. `dt` must respect the diffusion stability limit
/// `0.4·(Δx²β/2)`. Negative excursions are clipped (and counted when they
/// exceed −1e-12); the density is renormalized each step with the deficit
/// recorded in `mass_lost`.
pub fn evolve_fokker_planck(
    p: &DensityGrid,
    drift: impl Fn(f64) -> f64,
    beta: f64,
    dt: f64,
    steps: usize,
) -> Result<DensityGrid> {
    if !(beta > 0.0 && dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "beta and dt must be positive (beta={beta}, dt={dt})"
        )));
    }
    let dx = p.dx();
    let limit = 0.4 * dx * dx * beta / 2.0;
    if dt > limit {
        return Err(Error::FokkerPlanckUnstable { dt, limit });
    }
    let m = p.m();
    let g: Vec<f64> = (0..m).map(|i| drift(p.node(i))).collect();
    if !g.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("drift on grid".into()));
    }

    let inv_beta_dx2 = 1.0 / (beta * dx * dx);
    let inv_2dx = 1.0 / (2.0 * dx);
    let mut cur = p.clone();
    let mut values = cur.values().to_vec();
    let mut next = vec![0.0; m];
    for _ in 0..steps {
        for i in 0..m {
            let v = values[i];
            let v_left = if i > 0 { values[i - 1] } else { 0.0 };
            let v_right = if i + 1 < m { values[i + 1] } else { 0.0 };
            let flux_left = if i > 0 { values[i - 1] * g[i - 1] } else { 0.0 };
            let flux_right = if i + 1 < m {
                values[i + 1] * g[i + 1]
            } else {
                0.0
            };
            let diffusion = (v_right - 2.0 * v + v_left) * inv_beta_dx2;
            let advection = (flux_right - flux_left) * inv_2dx;
            next[i] = v + dt * (diffusion + advection);
        }
        std::mem::swap(&mut values, &mut next);
        cur = cur.rebuild(std::mem::take(&mut values))?;
        values = cur.values().to_vec();
        next = vec![0.0; m];
    }
    Ok(cur)
}
