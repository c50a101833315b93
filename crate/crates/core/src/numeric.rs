//! Small numeric helpers shared across modules.

/// Neumaier-compensated summation. Partial sums of step sizes and decay
/// exponents must reproduce to 1e-12 across platforms, which plain
/// left-to-right accumulation does not guarantee for long schedules.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn ksum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Euclidean norm squared.
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

/// Dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// All coordinates finite?
pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Standard normal density.
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Two-sided Gaussian mass outside `[lo, hi]` for N(mean, sd^2).
pub fn normal_tail_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let upper = 0.5 * libm::erfc((hi - mean) / (sd * std::f64::consts::SQRT_2));
    let lower = 0.5 * libm::erfc((mean - lo) / (sd * std::f64::consts::SQRT_2));
    upper + lower
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 1);
    let mean = ksum(xs.iter().copied()) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ksum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Median of a slice (by copy).
pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_beats_naive_on_harmonic_tail() {
        // 1e6 tiny terms after a large head: compensation keeps full precision.
        let mut k = KahanSum::new();
        k.add(1e16);
        for _ in 0..1_000_000 {
            k.add(1.0);
        }
        k.add(-1e16);
        assert_eq!(k.value(), 1_000_000.0);
    }

    #[test]
    fn tail_mass_matches_known_values() {
        // N(0,1) outside [-2, 2]: 2*Phi(-2) ~ 0.0455
        let t = normal_tail_mass(0.0, 1.0, -2.0, 2.0);
        assert!((t - 0.045_500_263_896_358_32).abs() < 1e-12, "{t}");
        // far domain: essentially zero
        assert!(normal_tail_mass(0.0, 1.0, -12.0, 12.0) < 1e-30);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
