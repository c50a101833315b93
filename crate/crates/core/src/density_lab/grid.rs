//! Truncated densities on a uniform grid, and divergences between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{normal_pdf, normal_tail_mass, KahanSum};

/// Densities below this are treated as numerically absent.
const DENSITY_FLOOR: f64 = 1e-300;

/// A nonnegative density on `m` uniform nodes spanning `[lo, hi]`
/// (endpoints included), renormalized to unit trapezoid integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    lo: f64,
    hi: f64,
    m: usize,
    values: Vec<f64>,
    /// Cumulative probability lost to truncation/clipping and recovered by
    /// renormalization.
    pub mass_lost: f64,
    /// Nodes clipped from below −1e-12 during evolution.
    pub negative_clips: usize,
}

/// Initial condition for [`make_grid`].
#[derive(Debug, Clone)]
pub enum GridInit {
    Gaussian { mean: f64, sd: f64 },
    Custom(Vec<f64>),
}

/// Divergences supported on a shared grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    /// `½∫(√p − √q)²`.
    HellingerSq,
    /// `∫ p ln(p/q)`.
    Kl,
    /// `∫ |p − q|`.
    L1,
}

impl DensityGrid {
    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dx(&self) -> f64 {
        (self.hi - self.lo) / (self.m - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + self.dx() * i as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn same_grid(&self, other: &DensityGrid) -> bool {
        self.m == other.m && self.lo == other.lo && self.hi == other.hi
    }

    /// Trapezoid weight of node `i`.
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.m - 1 {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    /// Trapezoid integral of the stored values.
    pub fn integral(&self) -> f64 {
        let mut acc = KahanSum::new();
        for (i, v) in self.values.iter().enumerate() {
            acc.add(v * self.weight(i));
        }
        acc.value()
    }

    /// Build from raw values: clip negatives, renormalize, account the lost
    /// mass. `raw_mass_reference` is the mass the values should carry (1 for
    /// a full density); the deficit is added to `mass_lost`.
    pub(crate) fn from_raw(
        lo: f64,
        hi: f64,
        values: Vec<f64>,
        carried_mass_lost: f64,
        carried_clips: usize,
    ) -> Result<DensityGrid> {
        let mut g = DensityGrid {
            lo,
            hi,
            m: values.len(),
            values,
            mass_lost: carried_mass_lost,
            negative_clips: carried_clips,
        };
        let mut clipped = 0.0;
        for i in 0..g.m {
            if g.values[i] < 0.0 {
                if g.values[i] < -1e-12 {
                    g.negative_clips += 1;
                }
                clipped += -g.values[i] * g.weight(i);
                g.values[i] = 0.0;
            }
        }
        let total = g.integral();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::NonFinite("density mass".into()));
        }
        let lost = 1.0 - total;
        if lost > 1e-6 {
            return Err(Error::MassLostTooLarge { lost });
        }
        g.mass_lost += lost.max(0.0) + clipped;
        for v in &mut g.values {
            *v /= total;
        }
        Ok(g)
    }

    /// Replace values (same grid), renormalizing.
    pub(crate) fn rebuild(&self, values: Vec<f64>) -> Result<DensityGrid> {
        DensityGrid::from_raw(
            self.lo,
            self.hi,
            values,
            self.mass_lost,
            self.negative_clips,
        )
    }

    /// CSV dump `x,p(x)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,p\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.node(i), v));
        }
        out
    }
}

/// Construct a normalized grid.
pub fn make_grid(lo: f64, hi: f64, m: usize, init: GridInit) -> Result<DensityGrid> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidArgument(format!("bad domain [{lo}, {hi}]")));
    }
    if m < 64 {
        return Err(Error::InvalidArgument(format!(
            "need at least 64 nodes, got {m}"
        )));
    }
    let dx = (hi - lo) / (m - 1) as f64;
    let values = match init {
        GridInit::Gaussian { mean, sd } => {
            if !(sd.is_finite() && sd > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "gaussian sd must be > 0, got {sd}"
                )));
            }
            let tail_mass = normal_tail_mass(mean, sd, lo, hi);
            if tail_mass >= 1e-10 {
                return Err(Error::DomainTooNarrow { lo, hi, tail_mass });
            }
            (0..m)
                .map(|i| normal_pdf(lo + dx * i as f64, mean, sd))
                .collect()
        }
        GridInit::Custom(values) => {
            if values.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "custom init has {} values for {m} nodes",
                    values.len()
                )));
            }
            if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
                return Err(Error::InvalidArgument(
                    "custom init must be nonnegative and finite".into(),
                ));
            }
            values
        }
    };
    let mut g = DensityGrid {
        lo,
        hi,
        m,
        values,
        mass_lost: 0.0,
        negative_clips: 0,
    };
    let total = g.integral();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::NonFinite("initial density mass".into()));
    }
    for v in &mut g.values {
        *v /= total;
    }
    Ok(g)
}

/// Shorthand for a Gaussian initial condition.
pub fn gaussian_grid(lo: f64, hi: f64, m: usize, mean: f64, sd: f64) -> Result<DensityGrid> {
    make_grid(lo, hi, m, GridInit::Gaussian { mean, sd })
}

/// Trapezoid-rule divergence between densities on the same grid.
pub fn divergence(p: &DensityGrid, q: &DensityGrid, kind: DivergenceKind) -> Result<f64> {
    if !p.same_grid(q) {
        return Err(Error::GridMismatch);
    }
    let mut acc = KahanSum::new();
    match kind {
        DivergenceKind::HellingerSq => {
            for i in 0..p.m {
                let d = p.values[i].sqrt() - q.values[i].sqrt();
                acc.add(0.5 * d * d * p.weight(i));
            }
            Ok(acc.value().clamp(0.0, 1.0))
        }
        DivergenceKind::Kl => {
            for i in 0..p.m {
                let pi = p.values[i];
                if pi <= DENSITY_FLOOR {
                    continue;
                }
                let qi = q.values[i];
                if qi <= 0.0 {
                    return Err(Error::KlSupportViolation { node: i });
                }
                acc.add(pi * (pi / qi).ln() * p.weight(i));
            }
            Ok(acc.value().max(0.0))
        }
        DivergenceKind::L1 => {
            for i in 0..p.m {
                acc.add((p.values[i] - q.values[i]).abs() * p.weight(i));
            }
            Ok(acc.value().clamp(0.0, 2.0))
        }
    }
}

/// `∫ p(x)·f(x) dx` by the trapezoid rule.
pub fn expectation(p: &DensityGrid, f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    for i in 0..p.m {
        acc.add(p.values[i] * f(p.node(i)) * p.weight(i));
    }
    acc.value()
}

/// Mean and variance of the density.
pub fn mean_var(p: &DensityGrid) -> (f64, f64) {
    let mean = expectation(p, |x| x);
    let var = expectation(p, |x| (x - mean) * (x - mean));
    (mean, var)
}
