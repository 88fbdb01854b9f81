//! Exact law of the uniform-step random walk `S_n`, the discrete heat
//! kernel it generates, and the Gaussian local-limit comparison.
//!
//! Steps are uniform on `{ j / N^{1+alpha} : 1 <= |j| <= N }`. Everything
//! here is deterministic numerics: n-fold convolutions in double precision
//! renormalized to unit mass, with the renormalization drift reported.

use crate::stats::{self, KahanSum};
use crate::{Error, Result};

/// The uniform step law and its exact moment constants.
///
/// `c3 = (N+1)(2N+1)/(2N^2)` and `c4 = (N+1)(2N+1)(3N^2+3N-1)/(6N^4)` give
/// `Var(Y) = c3 / (3 N^{2 alpha})` and `E[Y^4] = c4 / (5 N^{4 alpha})`
/// exactly; both decrease monotonically to 1.
#[derive(Debug, Clone, Copy)]
pub struct StepDistribution {
    pub n: u32,
    pub alpha: f64,
}

impl StepDistribution {
    pub fn new(n: u32, alpha: f64) -> Result<Self> {
        if n == 0 || !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput("need n >= 1 and alpha in (0,1)".into()));
        }
        Ok(Self { n, alpha })
    }

    pub fn c3(&self) -> f64 {
        let n = self.n as f64;
        (n + 1.0) * (2.0 * n + 1.0) / (2.0 * n * n)
    }

    pub fn c4(&self) -> f64 {
        let n = self.n as f64;
        (n + 1.0) * (2.0 * n + 1.0) * (3.0 * n * n + 3.0 * n - 1.0) / (6.0 * n.powi(4))
    }

    /// Exact step variance in scaled units: `c3 / (3 N^{2 alpha})`.
    pub fn step_variance(&self) -> f64 {
        self.c3() / (3.0 * (self.n as f64).powf(2.0 * self.alpha))
    }

    /// Exact fourth moment in scaled units: `c4 / (5 N^{4 alpha})`.
    pub fn step_fourth_moment(&self) -> f64 {
        self.c4() / (5.0 * (self.n as f64).powf(4.0 * self.alpha))
    }

    pub fn space_scale(&self) -> f64 {
        (self.n as f64).powf(1.0 + self.alpha)
    }

    /// Single-step pmf over unscaled offsets.
    pub fn single_step_pmf(&self) -> Pmf {
        let n = self.n as i64;
        let p = 1.0 / (2.0 * self.n as f64);
        let values = (-n..=n).map(|j| if j == 0 { 0.0 } else { p }).collect();
        Pmf {
            half_width: n,
            values,
            drift: 0.0,
        }
    }

    /// Law of `S_t` by t-fold convolution. Rejected when the support
    /// `[-tN, tN]` exceeds `max_half_width`.
    pub fn exact_pmf(&self, t: u64, max_half_width: i64) -> Result<Pmf> {
        if t == 0 {
            return Err(Error::InvalidInput("t must be >= 1".into()));
        }
        let hw = t as i64 * self.n as i64;
        if hw > max_half_width {
            return Err(Error::InvalidInput(format!(
                "support half-width {hw} exceeds cap {max_half_width}"
            )));
        }
        let mut cur = self.single_step_pmf();
        let mut drift: f64 = 0.0;
        for _ in 1..t {
            cur = cur.convolve_step(self.n);
            drift = drift.max(cur.drift);
            cur.renormalize();
        }
        cur.drift = drift.max(cur.drift);
        Ok(cur)
    }
}

/// A centred pmf over unscaled sites `[-half_width, half_width]`.
#[derive(Debug, Clone)]
pub struct Pmf {
    pub half_width: i64,
    pub values: Vec<f64>,
    /// Largest pre-renormalization deviation of the total mass from 1.
    pub drift: f64,
}

impl Pmf {
    pub fn prob(&self, j: i64) -> f64 {
        if j.abs() > self.half_width {
            0.0
        } else {
            self.values[(j + self.half_width) as usize]
        }
    }

    pub fn total(&self) -> f64 {
        stats::kahan_sum(self.values.iter().copied())
    }

    fn renormalize(&mut self) {
        let total = self.total();
        if total > 0.0 {
            for v in &mut self.values {
                *v /= total;
            }
        }
    }

    /// One more uniform step: a sliding neighbour average excluding the
    /// centre, computed term by term so errors stay relative.
    fn convolve_step(&self, n: u32) -> Pmf {
        let nn = n as i64;
        let hw = self.half_width + nn;
        let p = 1.0 / (2.0 * n as f64);
        let mut values = vec![0.0f64; (2 * hw + 1) as usize];
        for (idx, v) in values.iter_mut().enumerate() {
            let j = idx as i64 - hw;
            let mut acc = 0.0f64;
            for d in 1..=nn {
                acc += self.prob(j - d) + self.prob(j + d);
            }
            *v = acc * p;
        }
        let mut out = Pmf {
            half_width: hw,
            values,
            drift: 0.0,
        };
        out.drift = (out.total() - 1.0).abs();
        out
    }

    /// Exact variance of the pmf in unscaled units (Kahan-compensated).
    pub fn variance_unscaled(&self) -> f64 {
        let mut acc = KahanSum::new();
        for (idx, &v) in self.values.iter().enumerate() {
            let j = (idx as i64 - self.half_width) as f64;
            acc.add(v * j * j);
        }
        acc.value()
    }

    /// CSV dump `(site, probability)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("site,prob\n");
        for (idx, &v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", idx as i64 - self.half_width, v));
        }
        out
    }
}

/// Green kernel `psi_n^z(x) = N^{1+alpha} P(S_{n+1} = x - z)` on unscaled
/// sites, satisfying `psi_0^z(x) = (N^alpha / 2) I(x ~ z)` and the discrete
/// heat recursion `psi_i - psi_{i-1} = N^{-2 alpha} Delta_D psi_{i-1}`.
pub fn psi_profile(step: &StepDistribution, n: u64, max_half_width: i64) -> Result<Pmf> {
    let mut pmf = step.exact_pmf(n + 1, max_half_width)?;
    let scale = step.space_scale();
    for v in &mut pmf.values {
        *v *= scale;
    }
    Ok(pmf)
}

/// `psi_n^z(x)` for explicit sites.
pub fn psi(step: &StepDistribution, n: u64, z: i64, x: i64, max_half_width: i64) -> Result<f64> {
    Ok(psi_profile(step, n, max_half_width)?.prob(x - z))
}

/// `(psi_n^z, 1)` under the discrete pairing `N^{-(1+alpha)} sum`.
pub fn psi_mass(step: &StepDistribution, n: u64, max_half_width: i64) -> Result<f64> {
    Ok(psi_profile(step, n, max_half_width)?.total() / step.space_scale())
}

/// `N^{-2 alpha} Delta_D f(x) = (1/2N) sum_{y ~ x} (f(y) - f(x))` applied
/// to a centred profile.
pub fn discrete_laplacian_step(step: &StepDistribution, f: &Pmf) -> Pmf {
    let nn = step.n as i64;
    let hw = f.half_width + nn;
    let p = 1.0 / (2.0 * step.n as f64);
    let mut values = vec![0.0f64; (2 * hw + 1) as usize];
    for (idx, v) in values.iter_mut().enumerate() {
        let j = idx as i64 - hw;
        let mut acc = 0.0f64;
        for d in 1..=nn {
            acc += f.prob(j - d) + f.prob(j + d);
        }
        *v = acc * p - f.prob(j);
    }
    Pmf {
        half_width: hw,
        values,
        drift: 0.0,
    }
}

/// Max residual of the discrete heat recursion between `psi_{i-1}` and
/// `psi_i`.
pub fn heat_recursion_residual(
    step: &StepDistribution,
    i: u64,
    max_half_width: i64,
) -> Result<f64> {
    if i == 0 {
        return Err(Error::InvalidInput("need i >= 1".into()));
    }
    let prev = psi_profile(step, i - 1, max_half_width)?;
    let cur = psi_profile(step, i, max_half_width)?;
    let lap = discrete_laplacian_step(step, &prev);
    let mut worst = 0.0f64;
    for j in -cur.half_width..=cur.half_width {
        let res = (cur.prob(j) - prev.prob(j) - lap.prob(j)).abs();
        worst = worst.max(res);
    }
    Ok(worst)
}

/// Local-CLT comparison of the scaled pmf against the Brownian transition
/// density with matching variance.
#[derive(Debug, Clone, Copy)]
pub struct CltError {
    pub sup_error: f64,
    /// `sup_error / (N^alpha t^{-3/2})`.
    pub bound_ratio: f64,
}

pub fn clt_error(step: &StepDistribution, t: u64, max_half_width: i64) -> Result<CltError> {
    let pmf = step.exact_pmf(t, max_half_width)?;
    let scale = step.space_scale();
    let var = step.step_variance() * t as f64;
    let mut sup = 0.0f64;
    for (idx, &v) in pmf.values.iter().enumerate() {
        let j = idx as i64 - pmf.half_width;
        let y = j as f64 / scale;
        let diff = (scale * v - stats::gaussian_pdf(var, y)).abs();
        sup = sup.max(diff);
    }
    let na = (step.n as f64).powf(step.alpha);
    Ok(CltError {
        sup_error: sup,
        bound_ratio: sup / (na * (t as f64).powf(-1.5)),
    })
}
