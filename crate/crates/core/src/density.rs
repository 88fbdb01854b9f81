//! Approximate density `A(xi)(x) = (1/(2 N^alpha)) sum_{y ~ x} xi(y)`,
//! linear interpolation, weighted sup norms and the amplitude modulus.

use crate::attrition::OccupancyField;
use crate::envelope::ParticleField;
use crate::stats::KahanSum;

/// Anything that exposes sparse nonnegative site counts.
pub trait SiteCounts {
    fn for_each_site(&self, f: &mut dyn FnMut(i64, u64));

    fn support_range(&self) -> Option<(i64, i64)> {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        let mut any = false;
        self.for_each_site(&mut |site, c| {
            if c > 0 {
                any = true;
                lo = lo.min(site);
                hi = hi.max(site);
            }
        });
        if any {
            Some((lo, hi))
        } else {
            None
        }
    }
}

impl SiteCounts for ParticleField {
    fn for_each_site(&self, f: &mut dyn FnMut(i64, u64)) {
        for (&site, &c) in self.counts() {
            f(site, c);
        }
    }
}

impl SiteCounts for OccupancyField {
    fn for_each_site(&self, f: &mut dyn FnMut(i64, u64)) {
        for &site in self.occupied() {
            f(site, 1);
        }
    }
}

impl SiteCounts for Vec<(i64, u64)> {
    fn for_each_site(&self, f: &mut dyn FnMut(i64, u64)) {
        for &(site, c) in self {
            f(site, c);
        }
    }
}

/// Sampled density profile on the unscaled site grid starting at `start`.
/// The scaled coordinate of node `i` is `(start + i) / N^{1+alpha}`; the
/// profile extends to the real line by linear interpolation and vanishes
/// outside the stored window.
#[derive(Debug, Clone)]
pub struct DensityProfile {
    pub start: i64,
    pub values: Vec<f64>,
    pub n: u32,
    pub alpha: f64,
}

impl DensityProfile {
    pub fn scale(&self) -> f64 {
        (self.n as f64).powf(1.0 + self.alpha)
    }

    /// Scaled coordinate of grid node `i`.
    pub fn node_x(&self, i: usize) -> f64 {
        (self.start + i as i64) as f64 / self.scale()
    }

    pub fn value_at_site(&self, site: i64) -> f64 {
        let i = site - self.start;
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }

    /// Linear interpolation at a scaled coordinate.
    pub fn eval(&self, x: f64) -> f64 {
        let pos = x * self.scale() - self.start as f64;
        if pos <= -1.0 || pos >= self.values.len() as f64 {
            return 0.0;
        }
        let i = pos.floor();
        let frac = pos - i;
        let i = i as i64;
        let get = |j: i64| -> f64 {
            if j < 0 || j as usize >= self.values.len() {
                0.0
            } else {
                self.values[j as usize]
            }
        };
        get(i) * (1.0 - frac) + get(i + 1) * frac
    }

    /// Weighted sup norm `sup_x |f(x) e^{lambda |x|}|` of the interpolated
    /// profile: the supremum over grid nodes plus the interior extrema of
    /// each linear segment weighted by the exponential.
    pub fn lambda_norm(&self, lambda: f64) -> f64 {
        let mut sup: f64 = 0.0;
        let m = self.values.len();
        if m == 0 {
            return 0.0;
        }
        for i in 0..m {
            sup = sup.max((self.values[i] * e_lambda(lambda, self.node_x(i))).abs());
        }
        for i in 0..m.saturating_sub(1) {
            let x0 = self.node_x(i);
            let x1 = self.node_x(i + 1);
            let (f0, f1) = (self.values[i], self.values[i + 1]);
            let a = (f1 - f0) / (x1 - x0);
            let c = f0 - a * x0;
            // split at the |x| kink
            let pieces = if x0 < 0.0 && x1 > 0.0 {
                vec![(x0, 0.0), (0.0, x1)]
            } else {
                vec![(x0, x1)]
            };
            for (lo, hi) in pieces {
                let mu = if lo + hi >= 0.0 { lambda } else { -lambda };
                if a != 0.0 && mu != 0.0 {
                    let x_star = -c / a - 1.0 / mu;
                    if x_star > lo && x_star < hi {
                        let v = ((a * x_star + c) * e_lambda(lambda, x_star)).abs();
                        sup = sup.max(v);
                    }
                }
            }
        }
        sup
    }

    /// Amplitude modulus `D(f, delta)(x) = sup { |f(y) - f(x)| : |y - x| <= delta }`
    /// at every grid node; the sup scans grid nodes in the window plus the
    /// interpolated values at the two window endpoints.
    pub fn amplitude(&self, delta: f64) -> DensityProfile {
        assert!(delta > 0.0, "delta must be positive");
        let scale = self.scale();
        let w = (delta * scale).floor() as i64;
        let m = self.values.len() as i64;
        let get = |j: i64| -> f64 {
            if j < 0 || j >= m {
                0.0
            } else {
                self.values[j as usize]
            }
        };
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..m {
            let fx = self.values[i as usize];
            let mut lo = fx;
            let mut hi = fx;
            for j in (i - w)..=(i + w) {
                let v = get(j);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let x = self.node_x(i as usize);
            for endpoint in [x - delta, x + delta] {
                let v = self.eval(endpoint);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            out.push((hi - fx).max(fx - lo));
        }
        DensityProfile {
            start: self.start,
            values: out,
            n: self.n,
            alpha: self.alpha,
        }
    }

    /// Two-column CSV `(scaled x, value)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for i in 0..self.values.len() {
            out.push_str(&format!("{},{}\n", self.node_x(i), self.values[i]));
        }
        out
    }

    /// Sample an arbitrary function on the site grid `[start, start+len)`.
    pub fn from_fn(n: u32, alpha: f64, start: i64, len: usize, f: impl Fn(f64) -> f64) -> Self {
        let scale = (n as f64).powf(1.0 + alpha);
        let values = (0..len)
            .map(|i| f((start + i as i64) as f64 / scale))
            .collect();
        Self {
            start,
            values,
            n,
            alpha,
        }
    }
}

#[inline]
fn e_lambda(lambda: f64, x: f64) -> f64 {
    (lambda * x.abs()).exp()
}

/// Windowed neighbour sum scaled by `1/(2 N^alpha)`, computed with prefix
/// sums over `[window.0 - N, window.1 + N]`. The window `y ~ x` excludes
/// `y = x`.
pub fn approximate_density(
    field: &dyn SiteCounts,
    window: (i64, i64),
    n: u32,
    alpha: f64,
) -> DensityProfile {
    let (lo, hi) = window;
    assert!(lo <= hi, "window must be nonempty");
    let nn = n as i64;
    let ext_lo = lo - nn;
    let ext_hi = hi + nn;
    let len = (ext_hi - ext_lo + 1) as usize;
    let mut counts = vec![0.0f64; len];
    field.for_each_site(&mut |site, c| {
        if site >= ext_lo && site <= ext_hi {
            counts[(site - ext_lo) as usize] += c as f64;
        }
    });
    let mut prefix = vec![0.0f64; len + 1];
    let mut acc = KahanSum::new();
    for i in 0..len {
        acc.add(counts[i]);
        prefix[i + 1] = acc.value();
    }
    let norm = 1.0 / (2.0 * (n as f64).powf(alpha));
    let values = (lo..=hi)
        .map(|x| {
            let i = (x - ext_lo) as usize;
            let left = i.saturating_sub(nn as usize);
            let right = (i + nn as usize + 1).min(len);
            let window_sum = prefix[right] - prefix[left] - counts[i];
            window_sum * norm
        })
        .collect();
    DensityProfile {
        start: lo,
        values,
        n,
        alpha,
    }
}

/// Discrete function pairing `(f, g) = N^{-(1+alpha)} sum_x f(x) g(x)`.
pub fn site_pairing(
    n: u32,
    alpha: f64,
    sites: impl IntoIterator<Item = i64>,
    f: impl Fn(i64) -> f64,
    g: impl Fn(i64) -> f64,
) -> f64 {
    let mut acc = KahanSum::new();
    for x in sites {
        acc.add(f(x) * g(x));
    }
    acc.value() / (n as f64).powf(1.0 + alpha)
}

/// Measure pairing `(f, nu) = N^{-2 alpha} sum_x f(x) xi(x)` against the
/// rescaled empirical measure `nu = N^{-2 alpha} sum xi(x) delta_x`.
pub fn measure_pairing(n: u32, alpha: f64, field: &dyn SiteCounts, f: impl Fn(i64) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    field.for_each_site(&mut |site, c| acc.add(f(site) * c as f64));
    acc.value() / (n as f64).powf(2.0 * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coins;
    use crate::stats;

    const N: u32 = 16;
    const ALPHA: f64 = 0.2;

    #[test]
    fn empty_field_gives_zero_density() {
        let field: Vec<(i64, u64)> = vec![];
        let prof = approximate_density(&field, (-50, 50), N, ALPHA);
        assert!(prof.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_site_density_is_indicator_band() {
        let field = vec![(5i64, 1u64)];
        let prof = approximate_density(&field, (-40, 40), N, ALPHA);
        let expect = 1.0 / (2.0 * (N as f64).powf(ALPHA));
        for x in -40..=40i64 {
            let d = (x - 5).abs();
            let v = prof.value_at_site(x);
            if d >= 1 && d <= N as i64 {
                assert!((v - expect).abs() < 1e-12, "site {x}: {v}");
            } else {
                assert_eq!(v, 0.0, "site {x}");
            }
        }
    }

    #[test]
    fn equally_spaced_occupation_has_near_unit_density() {
        // At N = 1024 the gap floor(N^{1-alpha}) = 256 divides 2N exactly:
        // direct evaluation of the window sum gives counts of 8 (on the
        // lattice of occupied sites, where self-exclusion bites) or 9,
        // i.e. |A - 1| <= 1/(2 N^alpha) = 1/8 exactly on the bulk.
        let n: u32 = 1024;
        let gap = (n as f64).powf(1.0 - ALPHA).floor() as i64;
        assert_eq!(gap, 256);
        let sites: Vec<(i64, u64)> = (-60..=60).map(|k| (k * gap, 1u64)).collect();
        let prof = approximate_density(&sites, (-20 * gap, 20 * gap), n, ALPHA);
        let tol = 1.0 / (2.0 * (n as f64).powf(ALPHA));
        for x in -10 * gap..=10 * gap {
            let v = prof.value_at_site(x);
            assert!((v - 1.0).abs() <= tol + 1e-12, "site {x}: {v}");
        }
    }

    #[test]
    fn density_is_linear_in_the_field() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..40i64 {
            a.push((i * 3 - 50, coins::keyed_u64(1, &[i as u64]) % 4));
            b.push((i * 5 - 70, coins::keyed_u64(2, &[i as u64]) % 3));
        }
        let mut joint = a.clone();
        joint.extend(b.iter().copied());
        let w = (-200, 200);
        let pa = approximate_density(&a, w, N, ALPHA);
        let pb = approximate_density(&b, w, N, ALPHA);
        let pj = approximate_density(&joint, w, N, ALPHA);
        for i in 0..pj.values.len() {
            assert!((pj.values[i] - pa.values[i] - pb.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_identity_exact() {
        // sum_x A(xi)(x) = N^{1-alpha} sum_x xi(x): every particle feeds
        // exactly 2N windows with weight 1/(2 N^alpha).
        let field: Vec<(i64, u64)> = (0..25)
            .map(|i| (i * 7 - 80, 1 + coins::keyed_u64(3, &[i as u64]) % 5))
            .collect();
        let total: u64 = field.iter().map(|e| e.1).sum();
        let (lo, hi) = &field.support_range().unwrap();
        let prof = approximate_density(&field, (lo - N as i64, hi + N as i64), N, ALPHA);
        let sum_a = stats::kahan_sum(prof.values.iter().copied());
        let expect = (N as f64).powf(1.0 - ALPHA) * total as f64;
        assert!(
            (sum_a - expect).abs() < 1e-9 * expect,
            "sum {sum_a} vs {expect}"
        );
    }

    #[test]
    fn window_bound_holds() {
        let field: Vec<(i64, u64)> = (0..10).map(|i| (i, 3u64)).collect();
        let prof = approximate_density(&field, (-30, 30), N, ALPHA);
        let bound = (N as f64).powf(1.0 - ALPHA) * 3.0;
        assert!(prof
            .values
            .iter()
            .all(|&v| (0.0..=bound + 1e-12).contains(&v)));
    }

    #[test]
    fn lambda_norm_closed_forms() {
        let zero = DensityProfile::from_fn(N, ALPHA, -100, 201, |_| 0.0);
        assert_eq!(zero.lambda_norm(-1.0), 0.0);

        // f(x) = e^{-|x|}, lambda = -1: sup e^{-2|x|} = 1 at x = 0.
        let scale = (N as f64).powf(1.0 + ALPHA);
        let half = (3.0 * scale) as i64;
        let f = DensityProfile::from_fn(N, ALPHA, -half, (2 * half + 1) as usize, |x| {
            (-x.abs()).exp()
        });
        let norm = f.lambda_norm(-1.0);
        assert!(norm >= 1.0 - 1e-12 && norm <= 1.0 + 1e-4, "norm {norm}");
    }

    #[test]
    fn lambda_norm_hat_interval_bound() {
        // hat of height h supported near x0, lambda < 0:
        // norm within [h e^{lambda(|x0|+w)}, h e^{lambda(|x0|-w)}]
        let scale = (N as f64).powf(1.0 + ALPHA);
        let x0 = 2.0f64;
        let w = 0.25f64;
        let h = 3.0f64;
        let start = ((x0 - w) * scale) as i64;
        let len = ((2.0 * w) * scale) as usize + 1;
        let hat = DensityProfile::from_fn(N, ALPHA, start, len, |x| {
            let t = 1.0 - ((x - x0) / w).abs();
            h * t.max(0.0)
        });
        let lambda = -1.0f64;
        let norm = hat.lambda_norm(lambda);
        let lo = h * (lambda * (x0.abs() + w)).exp();
        let hi = h * (lambda * (x0.abs() - w)).exp();
        assert!(norm >= lo && norm <= hi, "norm {norm} not in [{lo}, {hi}]");
    }

    #[test]
    fn amplitude_of_constant_vanishes() {
        let c = DensityProfile::from_fn(N, ALPHA, -50, 101, |_| 2.5);
        let amp = c.amplitude(0.1);
        // near the grid edge the implicit zero outside enters the window,
        // so only the bulk is exactly zero
        let margin = (0.1 * c.scale()) as usize + 2;
        for i in margin..amp.values.len() - margin {
            assert_eq!(amp.values[i], 0.0, "node {i}");
        }
    }

    #[test]
    fn amplitude_of_linear_is_delta() {
        let scale = (N as f64).powf(1.0 + ALPHA);
        let half = (2.0 * scale) as i64;
        let lin = DensityProfile::from_fn(N, ALPHA, -half, (2 * half + 1) as usize, |x| x);
        let delta = 0.1;
        let amp = lin.amplitude(delta);
        let margin = (delta * scale) as usize + 2;
        for i in margin..amp.values.len() - margin {
            assert!(
                (amp.values[i] - delta).abs() < 1e-9,
                "node {i}: {}",
                amp.values[i]
            );
        }
    }

    #[test]
    fn measure_density_pairing_inequality() {
        // |(phi, A xi) - (phi, nu)| <= ||D(phi, N^{-alpha})||_lambda (e_{-lambda}, nu)
        // on random {0,1} fields against a smooth bump, lambda = 1.
        let lambda = 1.0f64;
        let scale = (N as f64).powf(1.0 + ALPHA);
        let r = 1.5f64;
        let phi = |x: f64| {
            let t = x / r;
            if t.abs() < 1.0 {
                (1.0 - t * t) * (1.0 - t * t)
            } else {
                0.0
            }
        };
        let half = (2.5 * scale) as i64;
        let phi_prof = DensityProfile::from_fn(N, ALPHA, -half, (2 * half + 1) as usize, phi);
        let d_norm = phi_prof
            .amplitude((N as f64).powf(-ALPHA))
            .lambda_norm(lambda);

        for trial in 0..100u64 {
            let field: Vec<(i64, u64)> = (-half / 2..half / 2)
                .filter(|&s| coins::keyed_unit(trial, &[s as u64]) < 0.08)
                .map(|s| (s, 1u64))
                .collect();
            if field.is_empty() {
                continue;
            }
            let (lo, hi) = &field.support_range().unwrap();
            let prof = approximate_density(&field, (lo - N as i64, hi + N as i64), N, ALPHA);
            let phi_site = |x: i64| phi(x as f64 / scale);
            let lhs_a = site_pairing(
                N,
                ALPHA,
                prof.start..=prof.start + prof.values.len() as i64 - 1,
                |x| prof.value_at_site(x),
                phi_site,
            );
            let lhs_nu = measure_pairing(N, ALPHA, &field, phi_site);
            let rhs = d_norm
                * measure_pairing(N, ALPHA, &field, |x| {
                    (-lambda * (x as f64 / scale).abs()).exp()
                });
            assert!(
                (lhs_a - lhs_nu).abs() <= rhs + 1e-12,
                "trial {trial}: |{lhs_a} - {lhs_nu}| > {rhs}"
            );
        }
    }
}
