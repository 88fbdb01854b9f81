//! The {0,1}-valued horizontal process with attrition: a site, once
//! visited, can never be occupied again. Includes the coupling below the
//! branching envelope, the interval-killed (subordinated) variant and
//! (I, delta, N)-good configuration tooling.

use rustc_hash::{FxHashMap, FxHashSet};

use crate::coins::{self, domain};
use crate::config::LatticeConfig;
use crate::envelope::{KeyedCoins, OffspringSource, ParticleField, StreamCoins};
use crate::stats;
use crate::{Error, Result};

/// Sparse state of the attrition process. `occupied` is the current
/// generation; `visited` is every site that has ever carried mass
/// (including the initial generation) and blocks re-occupation.
#[derive(Debug, Clone, Default)]
pub struct OccupancyField {
    occupied: Vec<i64>,
    visited: FxHashSet<i64>,
    pub n: u64,
    /// Inclusive unscaled window outside which offspring coins are forced
    /// to zero (the killed process used by the renormalization blocks).
    pub kill_window: Option<(i64, i64)>,
}

impl OccupancyField {
    pub fn from_sites(sites: impl IntoIterator<Item = i64>) -> Self {
        let mut occupied: Vec<i64> = sites.into_iter().collect();
        occupied.sort_unstable();
        occupied.dedup();
        let visited = occupied.iter().copied().collect();
        Self {
            occupied,
            visited,
            n: 0,
            kill_window: None,
        }
    }

    pub fn single_at_origin() -> Self {
        Self::from_sites([0])
    }

    pub fn with_kill_window(mut self, lo: i64, hi: i64) -> Self {
        self.kill_window = Some((lo, hi));
        self
    }

    pub fn occupied(&self) -> &[i64] {
        &self.occupied
    }

    pub fn visited(&self) -> &FxHashSet<i64> {
        &self.visited
    }

    pub fn occupied_count(&self) -> u64 {
        self.occupied.len() as u64
    }

    /// Cumulative mass: because generations never overlap, the cumulative
    /// occupation count equals the number of visited sites.
    pub fn visited_count(&self) -> u64 {
        self.visited.len() as u64
    }

    pub fn is_extinct(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn is_occupied(&self, site: i64) -> bool {
        self.occupied.binary_search(&site).is_ok()
    }

    #[inline]
    fn admits(&self, site: i64) -> bool {
        match self.kill_window {
            Some((lo, hi)) => site >= lo && site <= hi,
            None => true,
        }
    }

    /// Advance one generation: a site becomes occupied iff it was never
    /// visited and at least one of the per-(parent, neighbour) coins
    /// succeeds; every current site leaves the occupied set.
    pub fn step(&mut self, src: &mut impl OffspringSource) {
        let step = self.n + 1;
        let mut buf: Vec<i64> = Vec::with_capacity(8);
        let mut fresh: FxHashSet<i64> = FxHashSet::default();
        for &y in &self.occupied {
            src.offspring(step, y, 0, &mut buf);
            for &off in &buf {
                let x = y + off;
                if self.admits(x) && !self.visited.contains(&x) {
                    fresh.insert(x);
                }
            }
        }
        let mut next: Vec<i64> = fresh.into_iter().collect();
        next.sort_unstable();
        self.visited.extend(next.iter().copied());
        self.occupied = next;
        self.n = step;
    }

    /// Run-length-encoded snapshot of the occupied set: rows `start,len`.
    pub fn rle_csv(&self) -> String {
        let mut out = String::from("start,len\n");
        let mut i = 0;
        while i < self.occupied.len() {
            let start = self.occupied[i];
            let mut len = 1i64;
            while i + 1 < self.occupied.len() && self.occupied[i + 1] == self.occupied[i] + 1 {
                i += 1;
                len += 1;
            }
            out.push_str(&format!("{start},{len}\n"));
            i += 1;
        }
        out
    }
}

/// One synchronous step of the coupled pair (attrition process, envelope)
/// driven by the same quenched coins: the coins of the first envelope
/// particle at each occupied site are shared with the attrition process and
/// extra particles draw independent coins, so the envelope dominates the
/// attrition process pointwise along the whole path.
pub fn step_coupled(
    field: &mut OccupancyField,
    env: &mut ParticleField,
    keyed: &KeyedCoins,
    mass_cap: u64,
) -> Result<()> {
    let step = env.n + 1;
    debug_assert_eq!(field.n + 1, step, "coupled pair out of sync");
    debug_assert!(
        field.occupied().iter().all(|&x| env.count(x) >= 1),
        "domination broken before step {step}"
    );
    let mut buf: Vec<i64> = Vec::with_capacity(8);
    let mut next_env: FxHashMap<i64, u64> = FxHashMap::default();
    let mut fresh: FxHashSet<i64> = FxHashSet::default();
    let mut total = 0u64;
    for y in env.sorted_sites() {
        let m = env.count(y);
        let shared = field.is_occupied(y);
        for w in 0..m {
            buf.clear();
            for d in 1..=keyed.n as i64 {
                for off in [d, -d] {
                    if keyed.pair_coin(step, y, w, off) {
                        buf.push(off);
                    }
                }
            }
            for &off in &buf {
                let x = y + off;
                *next_env.entry(x).or_insert(0) += 1;
                total += 1;
                if w == 0 && shared && field.admits(x) && !field.visited.contains(&x) {
                    fresh.insert(x);
                }
            }
        }
    }
    if total > mass_cap {
        return Err(Error::MassCap { cap: mass_cap });
    }
    let mut next_occ: Vec<i64> = fresh.into_iter().collect();
    next_occ.sort_unstable();
    field.visited.extend(next_occ.iter().copied());
    field.occupied = next_occ;
    field.n = step;

    let next_field = ParticleField::from_counts(next_env);
    let max_abs = env.max_abs_site.max(next_field.max_abs_site);
    let cum = env.cum_mass.saturating_add(total);
    *env = next_field;
    env.n = step;
    env.cum_mass = cum;
    env.max_abs_site = max_abs;
    Ok(())
}

/// Per-pair Bernoulli coins keyed by `(site, particle, offset)` only.
///
/// Valid for attrition processes exclusively: a site is occupied at most
/// once per run, so each coin family is consumed at most once and the law
/// is unchanged. With time removed from the key, a killed run and a free
/// run share each site's coins regardless of *when* the site is reached,
/// which makes `visited(killed)` a subset of `visited(free)` pathwise.
pub struct SiteKeyedCoins {
    pub seed: u64,
    pub n: u32,
    pub p: f64,
}

impl SiteKeyedCoins {
    pub fn new(cfg: &LatticeConfig, sub_seed: u64) -> Self {
        Self {
            seed: sub_seed,
            n: cfg.n,
            p: cfg.p_h(),
        }
    }
}

impl OffspringSource for SiteKeyedCoins {
    fn range(&self) -> u32 {
        self.n
    }

    fn offspring(&mut self, _step: u64, site: i64, w: u64, out: &mut Vec<i64>) {
        out.clear();
        for d in 1..=self.n as i64 {
            for off in [d, -d] {
                if coins::keyed_unit(self.seed, &[site as u64, w, off as u64]) < self.p {
                    out.push(off);
                }
            }
        }
    }
}

/// Monte Carlo summary of the cumulated number of occupied sites `|C_0^0|`.
#[derive(Debug, Clone, Copy)]
pub struct ClusterSizeEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// `mean / N^{2/5}`.
    pub normalized: f64,
    pub capped_fraction: f64,
    /// Set when more than 1% of replicas hit the step cap.
    pub unreliable: bool,
    pub reps: u64,
}

/// Mean cluster size of the attrition process started from a single site.
pub fn cumulative_cluster_size(
    cfg: &LatticeConfig,
    step_cap: u64,
    reps: u64,
) -> Result<ClusterSizeEstimate> {
    if reps == 0 || step_cap == 0 {
        return Err(Error::InvalidInput("reps and cap must be >= 1".into()));
    }
    let sizes: Vec<(f64, bool)> = (0..reps)
        .map(|rep| {
            let mut src = StreamCoins::new(cfg, &[domain::REPLICA, rep]);
            let mut field = OccupancyField::single_at_origin();
            while !field.is_extinct() && field.n < step_cap {
                field.step(&mut src);
            }
            (field.visited_count() as f64, !field.is_extinct())
        })
        .collect();
    let values: Vec<f64> = sizes.iter().map(|s| s.0).collect();
    let capped = sizes.iter().filter(|s| s.1).count() as f64 / reps as f64;
    let mean = stats::mean(&values);
    Ok(ClusterSizeEstimate {
        mean,
        stderr: stats::stderr_of_mean(&values),
        normalized: mean / cfg.n_pow(0.4),
        capped_fraction: capped,
        unreliable: capped > 0.01,
        reps,
    })
}

/// Mean occupied count after exactly `step` generations.
pub fn mean_occupied_at_step(cfg: &LatticeConfig, step: u64, reps: u64) -> (f64, f64) {
    let values: Vec<f64> = (0..reps)
        .map(|rep| {
            let mut src = StreamCoins::new(cfg, &[domain::REPLICA, rep, step]);
            let mut field = OccupancyField::single_at_origin();
            while !field.is_extinct() && field.n < step {
                field.step(&mut src);
            }
            field.occupied_count() as f64
        })
        .collect();
    (stats::mean(&values), stats::stderr_of_mean(&values))
}

pub use crate::envelope::{HitOutcome, HittingRecord, Trigger};

/// Hitting time of the attrition process: first `n` with occupied count
/// `>= 2^k` or cumulative count `>= 2^{2k}`.
pub fn run_hitting_time_hat(
    cfg: &LatticeConfig,
    k: u32,
    cap: u64,
    src: &mut impl OffspringSource,
) -> Result<HittingRecord> {
    if k > 31 {
        return Err(Error::InvalidInput("k must be <= 31".into()));
    }
    if cap == 0 {
        return Err(Error::InvalidInput("cap must be >= 1".into()));
    }
    let _ = cfg;
    let mut field = OccupancyField::single_at_origin();
    loop {
        if field.occupied_count() >= 1 << k {
            return Ok(HittingRecord {
                k,
                outcome: HitOutcome::Hit {
                    step: field.n,
                    trigger: Trigger::Mass,
                },
            });
        }
        if field.visited_count() >= 1 << (2 * k) {
            return Ok(HittingRecord {
                k,
                outcome: HitOutcome::Hit {
                    step: field.n,
                    trigger: Trigger::Cumulative,
                },
            });
        }
        if field.is_extinct() {
            return Ok(HittingRecord {
                k,
                outcome: HitOutcome::Extinct { step: field.n },
            });
        }
        if field.n >= cap {
            return Ok(HittingRecord {
                k,
                outcome: HitOutcome::Capped { cap },
            });
        }
        field.step(src);
    }
}

/// One level of the conditional hitting chain.
#[derive(Debug, Clone, Copy)]
pub struct LevelRatio {
    pub k: u32,
    pub attempts: u64,
    pub successes: u64,
    /// Estimate of `P(T_{k+1} < inf | T_k < inf)`.
    pub ratio: f64,
}

/// Estimate the conditional chain `P(T_{k+1} < inf | T_k < inf)` by
/// multilevel splitting: states frozen at the first hit of level `k` are
/// restarted with fresh streams to attempt level `k+1`.
pub fn conditional_hitting_chain(
    cfg: &LatticeConfig,
    k_min: u32,
    k_max: u32,
    seed_reps: u64,
    reps_per_level: u64,
    step_cap: u64,
) -> Result<Vec<LevelRatio>> {
    if k_min >= k_max || k_max > 30 {
        return Err(Error::InvalidInput("need k_min < k_max <= 30".into()));
    }
    // Seed pool: fresh runs conditioned on hitting level k_min.
    let mut pool: Vec<OccupancyField> = Vec::new();
    for rep in 0..seed_reps {
        let mut src = StreamCoins::new(cfg, &[domain::REPLICA, 0xC0, rep]);
        if let Some(state) = run_to_level(
            OccupancyField::single_at_origin(),
            k_min,
            step_cap,
            &mut src,
        ) {
            pool.push(state);
        }
    }
    let mut out = Vec::new();
    for k in k_min..k_max {
        if pool.is_empty() {
            break;
        }
        let mut successes = 0u64;
        let mut next_pool = Vec::new();
        for i in 0..reps_per_level {
            let state = pool[(i as usize) % pool.len()].clone();
            let mut src = StreamCoins::new(cfg, &[domain::REPLICA, 0xC1, k as u64, i]);
            if let Some(hit) = run_to_level(state, k + 1, step_cap, &mut src) {
                successes += 1;
                next_pool.push(hit);
            }
        }
        out.push(LevelRatio {
            k,
            attempts: reps_per_level,
            successes,
            ratio: successes as f64 / reps_per_level as f64,
        });
        pool = next_pool;
    }
    Ok(out)
}

fn run_to_level(
    mut field: OccupancyField,
    k: u32,
    step_cap: u64,
    src: &mut impl OffspringSource,
) -> Option<OccupancyField> {
    let start = field.n;
    loop {
        if field.occupied_count() >= 1 << k || field.visited_count() >= 1 << (2 * k) {
            return Some(field);
        }
        if field.is_extinct() || field.n - start >= step_cap {
            return None;
        }
        field.step(src);
    }
}

const GRID_EPS: f64 = 1e-9;

/// Specification of an (I, delta, N)-good configuration: exactly
/// `floor(f(i N^{-3/10}) N^{1/10})` occupied sites in every bookkeeping
/// sub-interval `[i N^{-3/10}, (i+1) N^{-3/10})` contained in `I = [a, b]`,
/// zero elsewhere, where `f` is the trapezoid profile equal to 1 on `I`
/// and vanishing outside `[a - delta, b + delta]`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodSpec {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub n: u32,
}

impl GoodSpec {
    /// Parse from the shared TOML config format (keys a, b, delta, n).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: GoodSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(raw.a, raw.b, raw.delta, raw.n)
    }

    pub fn new(a: f64, b: f64, delta: f64, n: u32) -> Result<Self> {
        if !(a < b) || !(delta > 0.0) || n == 0 {
            return Err(Error::BadGoodSpec(format!(
                "need a < b, delta > 0, n >= 1 (a={a}, b={b}, delta={delta}, n={n})"
            )));
        }
        let spec = Self { a, b, delta, n };
        if spec.target_inside() == 0 {
            return Err(Error::BadGoodSpec(
                "N too small: floor(N^{1/10}) = 0".into(),
            ));
        }
        let (lo, hi) = spec.inside_subs();
        if lo > hi {
            return Err(Error::BadGoodSpec(
                "interval shorter than one bookkeeping sub-interval".into(),
            ));
        }
        let sites = spec.sub_sites(lo).1 - spec.sub_sites(lo).0 + 1;
        if sites < spec.target_inside() as i64 {
            return Err(Error::BadGoodSpec(
                "sub-interval holds fewer sites than the target count".into(),
            ));
        }
        Ok(spec)
    }

    /// Scaled width `N^{-3/10}` of one bookkeeping sub-interval.
    pub fn sub_width(&self) -> f64 {
        (self.n as f64).powf(-0.3)
    }

    /// Unscaled sites per sub-interval, `N^{9/10}`.
    pub fn sites_per_sub(&self) -> f64 {
        (self.n as f64).powf(0.9)
    }

    /// Count target inside `I`: `floor(N^{1/10})`.
    pub fn target_inside(&self) -> u64 {
        ((self.n as f64).powf(0.1) + GRID_EPS).floor() as u64
    }

    /// Trapezoid profile: 1 on `[a, b]`, 0 outside `[a - delta, b + delta]`.
    pub fn profile(&self, x: f64) -> f64 {
        if x < self.a - self.delta || x > self.b + self.delta {
            0.0
        } else if x < self.a {
            (x - (self.a - self.delta)) / self.delta
        } else if x <= self.b {
            1.0
        } else {
            ((self.b + self.delta) - x) / self.delta
        }
    }

    /// First unscaled site of sub-interval `i` (half-open partition of Z).
    pub fn sub_lo_site(&self, i: i64) -> i64 {
        (i as f64 * self.sites_per_sub() - GRID_EPS).ceil() as i64
    }

    /// Inclusive unscaled site range of sub-interval `i`.
    pub fn sub_sites(&self, i: i64) -> (i64, i64) {
        (self.sub_lo_site(i), self.sub_lo_site(i + 1) - 1)
    }

    /// Sub-interval index of an unscaled site.
    pub fn sub_of_site(&self, site: i64) -> i64 {
        let mut i = (site as f64 / self.sites_per_sub()).floor() as i64;
        while site < self.sub_lo_site(i) {
            i -= 1;
        }
        while site >= self.sub_lo_site(i + 1) {
            i += 1;
        }
        i
    }

    /// Inclusive index range of sub-intervals fully contained in `[a, b]`.
    pub fn inside_subs(&self) -> (i64, i64) {
        let w = self.sub_width();
        let lo = (self.a / w - GRID_EPS).ceil() as i64;
        let hi = (self.b / w + GRID_EPS).floor() as i64 - 1;
        (lo, hi)
    }

    /// Exact target for sub-interval `i`: the floor formula inside `I`,
    /// zero for any sub-interval meeting the complement of `I`.
    pub fn target(&self, i: i64) -> u64 {
        let (lo, hi) = self.inside_subs();
        if i < lo || i > hi {
            return 0;
        }
        let f = self.profile(i as f64 * self.sub_width());
        ((f * (self.n as f64).powf(0.1)) + GRID_EPS).floor() as u64
    }

    /// Total occupied count of the canonical good configuration.
    pub fn total_count(&self) -> u64 {
        let (lo, hi) = self.inside_subs();
        (lo..=hi).map(|i| self.target(i)).sum()
    }
}

/// Deterministic good configuration: per sub-interval, the target count of
/// sites equally spaced, anchored at the left end.
pub fn make_good(spec: &GoodSpec) -> Result<OccupancyField> {
    let (ilo, ihi) = spec.inside_subs();
    let mut sites = Vec::new();
    for i in ilo..=ihi {
        let c = spec.target(i) as i64;
        let (lo, hi) = spec.sub_sites(i);
        let len = hi - lo + 1;
        if c > len {
            return Err(Error::BadGoodSpec(format!(
                "sub-interval {i} holds {len} sites < target {c}"
            )));
        }
        if c == 0 {
            continue;
        }
        let stride = len / c;
        for j in 0..c {
            sites.push(lo + j * stride);
        }
    }
    Ok(OccupancyField::from_sites(sites))
}

/// Exact per-sub-interval count equality.
pub fn is_good(field: &OccupancyField, spec: &GoodSpec) -> bool {
    is_good_with_tolerance(field, spec, 0)
}

/// Relaxed variant: counts may deviate from their targets by up to `tau`
/// per sub-interval. Not part of the exact definition; used because random
/// evolution essentially never reproduces exact floor counts.
pub fn is_good_with_tolerance(field: &OccupancyField, spec: &GoodSpec, tau: u64) -> bool {
    let mut counts: FxHashMap<i64, u64> = FxHashMap::default();
    for &site in field.occupied() {
        *counts.entry(spec.sub_of_site(site)).or_insert(0) += 1;
    }
    let (ilo, ihi) = spec.inside_subs();
    for i in ilo..=ihi {
        let have = counts.remove(&i).unwrap_or(0);
        let want = spec.target(i);
        if have.abs_diff(want) > tau {
            return false;
        }
    }
    // anything left lies in a sub-interval meeting the complement of I
    counts.values().all(|&c| c <= tau)
}
