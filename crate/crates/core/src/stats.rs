//! Small numerical helpers shared across modules.

/// Compensated (Kahan) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Compensated sum of an iterator of f64.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    kahan_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    kahan_sum(xs.iter().map(|&x| (x - m) * (x - m))) / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn stderr_of_mean(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    (sample_variance(xs) / n as f64).sqrt()
}

/// Standard error of a Bernoulli proportion estimate.
pub fn binomial_stderr(p_hat: f64, reps: u64) -> f64 {
    if reps == 0 {
        return f64::NAN;
    }
    (p_hat * (1.0 - p_hat) / reps as f64).sqrt()
}

/// Least-squares line fit, returning `(slope, intercept)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx = kahan_sum(points.iter().map(|p| p.0));
    let sy = kahan_sum(points.iter().map(|p| p.1));
    let sxx = kahan_sum(points.iter().map(|p| p.0 * p.0));
    let sxy = kahan_sum(points.iter().map(|p| p.0 * p.1));
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = KahanSum::new();
    let mut sxx = KahanSum::new();
    let mut syy = KahanSum::new();
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    let denom = (sxx.value() * syy.value()).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        sxy.value() / denom
    }
}

/// Density of the centred Gaussian with variance `var` at `x`.
pub fn gaussian_pdf(var: f64, x: f64) -> f64 {
    (-(x * x) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Probability that a Brownian bridge value `x + B_t` lands in `[lo, hi]`.
pub fn gaussian_interval_mass(x: f64, var: f64, lo: f64, hi: f64) -> f64 {
    let s = var.sqrt();
    normal_cdf((hi - x) / s) - normal_cdf((lo - x) / s)
}
