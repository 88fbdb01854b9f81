//! The critical branching random walk that envelopes the horizontal growth.
//!
//! Each particle at site `y` branches with offspring count
//! `Binomial(2N, 1/(2N))` and places the offspring on a uniform subset of
//! the `2N` neighbours `{y +- 1, ..., y +- N}`; equivalently, one
//! independent `Bernoulli(1/(2N))` coin per (parent, neighbour) pair.

use rand::rngs::SmallRng;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rustc_hash::FxHashMap;

use crate::coins::{self, domain};
use crate::config::LatticeConfig;
use crate::{Error, Result};

/// Supplies offspring offset subsets. The two implementations are equal in
/// law; the keyed one additionally supports pathwise couplings because each
/// (step, parent, particle, neighbour) coin has a fixed identity.
pub trait OffspringSource {
    fn range(&self) -> u32;

    /// Write the offspring offsets (distinct values in `{±1..±N}`) for
    /// particle `w` at `site` contributing to generation `step`.
    fn offspring(&mut self, step: u64, site: i64, w: u64, out: &mut Vec<i64>);
}

/// Sequential sampling from an RNG stream: one binomial draw per particle
/// plus a uniform subset of neighbours. Fast path for independent replicas.
pub struct StreamCoins {
    rng: SmallRng,
    n: u32,
    binom: Binomial,
}

impl StreamCoins {
    pub fn new(cfg: &LatticeConfig, stream_tags: &[u64]) -> Self {
        Self::with_prob(cfg.n, cfg.p_h(), cfg.seed, stream_tags)
    }

    pub fn with_prob(n: u32, p: f64, seed: u64, stream_tags: &[u64]) -> Self {
        let mut tags = vec![domain::STREAM];
        tags.extend_from_slice(stream_tags);
        Self {
            rng: coins::stream(seed, &tags),
            n,
            binom: Binomial::new(2 * n as u64, p).expect("valid binomial"),
        }
    }

    pub fn rng_mut(&mut self) -> &mut SmallRng {
        &mut self.rng
    }
}

impl OffspringSource for StreamCoins {
    fn range(&self) -> u32 {
        self.n
    }

    fn offspring(&mut self, _step: u64, _site: i64, _w: u64, out: &mut Vec<i64>) {
        out.clear();
        let k = self.binom.sample(&mut self.rng) as usize;
        let m = 2 * self.n as usize;
        if k == m {
            for d in 1..=self.n as i64 {
                out.push(d);
                out.push(-d);
            }
            return;
        }
        // k is O(1) in the critical regime; rejection over 2N slots is cheap.
        while out.len() < k {
            let slot = self.rng.random_range(0..m) as i64;
            let off = if slot < self.n as i64 {
                slot + 1
            } else {
                -(slot - self.n as i64 + 1)
            };
            if !out.contains(&off) {
                out.push(off);
            }
        }
    }
}

/// Quenched per-pair Bernoulli coins keyed by
/// `(seed, step, site, particle, offset)`.
pub struct KeyedCoins {
    pub seed: u64,
    pub n: u32,
    pub p: f64,
}

impl KeyedCoins {
    pub fn new(cfg: &LatticeConfig, sub_seed: u64) -> Self {
        Self {
            seed: sub_seed,
            n: cfg.n,
            p: cfg.p_h(),
        }
    }

    #[inline]
    pub fn pair_coin(&self, step: u64, site: i64, w: u64, offset: i64) -> bool {
        coins::keyed_unit(self.seed, &[step, site as u64, w, offset as u64]) < self.p
    }
}

impl OffspringSource for KeyedCoins {
    fn range(&self) -> u32 {
        self.n
    }

    fn offspring(&mut self, step: u64, site: i64, w: u64, out: &mut Vec<i64>) {
        out.clear();
        for d in 1..=self.n as i64 {
            for off in [d, -d] {
                if self.pair_coin(step, site, w, off) {
                    out.push(off);
                }
            }
        }
    }
}

/// Sparse integer-count state of the envelope process.
#[derive(Debug, Clone, Default)]
pub struct ParticleField {
    counts: FxHashMap<i64, u64>,
    /// Time step.
    pub n: u64,
    /// Current total particle count.
    pub total_mass: u64,
    /// Cumulative mass including the initial generation.
    pub cum_mass: u64,
    /// Maximal absolute occupied site over the whole history.
    pub max_abs_site: i64,
}

impl ParticleField {
    /// One particle at the origin.
    pub fn single_at_origin() -> Self {
        Self::from_counts([(0, 1)])
    }

    pub fn from_counts(entries: impl IntoIterator<Item = (i64, u64)>) -> Self {
        let mut counts = FxHashMap::default();
        let mut total = 0u64;
        let mut max_abs = 0i64;
        for (site, c) in entries {
            if c == 0 {
                continue;
            }
            *counts.entry(site).or_insert(0) += c;
            total += c;
            max_abs = max_abs.max(site.abs());
        }
        Self {
            counts,
            n: 0,
            total_mass: total,
            cum_mass: total,
            max_abs_site: max_abs,
        }
    }

    pub fn count(&self, site: i64) -> u64 {
        self.counts.get(&site).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &FxHashMap<i64, u64> {
        &self.counts
    }

    pub fn is_extinct(&self) -> bool {
        self.total_mass == 0
    }

    /// Sites in ascending order (for deterministic iteration).
    pub fn sorted_sites(&self) -> Vec<i64> {
        let mut v: Vec<i64> = self.counts.keys().copied().collect();
        v.sort_unstable();
        v
    }

    /// Advance one generation. On a mass-cap overflow the field is left
    /// unchanged and a truncated-run error is returned.
    pub fn step(&mut self, src: &mut impl OffspringSource, mass_cap: u64) -> Result<()> {
        let mut next: FxHashMap<i64, u64> = FxHashMap::default();
        let mut buf: Vec<i64> = Vec::with_capacity(8);
        let mut total = 0u64;
        let step = self.n + 1;
        for y in self.sorted_sites() {
            let c = self.counts[&y];
            for w in 0..c {
                src.offspring(step, y, w, &mut buf);
                for &off in &buf {
                    *next.entry(y + off).or_insert(0) += 1;
                    total += 1;
                }
            }
        }
        if total > mass_cap {
            return Err(Error::MassCap { cap: mass_cap });
        }
        for &site in next.keys() {
            self.max_abs_site = self.max_abs_site.max(site.abs());
        }
        self.counts = next;
        self.total_mass = total;
        self.cum_mass = self.cum_mass.saturating_add(total);
        self.n = step;
        Ok(())
    }

    /// CSV row for trajectory dumps.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.n, self.total_mass, self.cum_mass, self.max_abs_site
        )
    }
}

/// Which stopping condition fired first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    Mass,
    Cumulative,
}

/// Outcome of a hitting-time run. Extinction and caps report the
/// infinity sentinel explicitly instead of a fake step value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitOutcome {
    Hit { step: u64, trigger: Trigger },
    Extinct { step: u64 },
    Capped { cap: u64 },
}

#[derive(Debug, Clone, Copy)]
pub struct HittingRecord {
    pub k: u32,
    pub outcome: HitOutcome,
}

impl HittingRecord {
    pub fn is_finite(&self) -> bool {
        matches!(self.outcome, HitOutcome::Hit { .. })
    }
}

fn check_triggers(total: u64, cum: u64, step: u64, k: u32) -> Option<HitOutcome> {
    if total >= 1u64 << k {
        Some(HitOutcome::Hit {
            step,
            trigger: Trigger::Mass,
        })
    } else if cum >= 1u64 << (2 * k) {
        Some(HitOutcome::Hit {
            step,
            trigger: Trigger::Cumulative,
        })
    } else {
        None
    }
}

/// First step at which the envelope started from a single particle at the
/// origin reaches total mass `2^k` or cumulative mass `2^{2k}`.
pub fn run_hitting_time(
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
    let mut field = ParticleField::single_at_origin();
    loop {
        if let Some(outcome) = check_triggers(field.total_mass, field.cum_mass, field.n, k) {
            return Ok(HittingRecord { k, outcome });
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
        field.step(src, cfg.caps.max_total_mass)?;
    }
}

/// How a mass excursion ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExcursionEnd {
    MassStop,
    CumulativeStop,
    Extinct,
    Capped,
}

#[derive(Debug, Clone, Copy)]
pub struct Excursion {
    pub max_mass: u64,
    pub cum_mass: u64,
    pub steps: u64,
    pub end: ExcursionEnd,
}

/// Evolve from a single origin particle until the running maximum mass
/// reaches `mass_stop`, the cumulative mass reaches `cum_stop`, extinction,
/// or `step_cap`. One excursion resolves the hitting indicator
/// `{T_k < infinity}` for every `k` with `2^k <= mass_stop`.
pub fn mass_excursion(
    cfg: &LatticeConfig,
    mass_stop: u64,
    cum_stop: u64,
    step_cap: u64,
    src: &mut impl OffspringSource,
) -> Result<Excursion> {
    let mut field = ParticleField::single_at_origin();
    let mut max_mass = field.total_mass;
    loop {
        if max_mass >= mass_stop || field.cum_mass >= cum_stop {
            return Ok(Excursion {
                max_mass,
                cum_mass: field.cum_mass,
                steps: field.n,
                end: if max_mass >= mass_stop {
                    ExcursionEnd::MassStop
                } else {
                    ExcursionEnd::CumulativeStop
                },
            });
        }
        if field.is_extinct() {
            return Ok(Excursion {
                max_mass,
                cum_mass: field.cum_mass,
                steps: field.n,
                end: ExcursionEnd::Extinct,
            });
        }
        if field.n >= step_cap {
            return Ok(Excursion {
                max_mass,
                cum_mass: field.cum_mass,
                steps: field.n,
                end: ExcursionEnd::Capped,
            });
        }
        field.step(src, cfg.caps.max_total_mass)?;
        max_mass = max_mass.max(field.total_mass);
    }
}

/// Conditional tail table of the rescaled maximal displacement.
#[derive(Debug, Clone)]
pub struct DisplacementTail {
    /// Replicas surviving at step `n/2` (the conditioning event).
    pub conditioning_count: u64,
    pub reps: u64,
    /// `(z, estimate, stderr)`; `None` when no replica satisfied the
    /// conditioning event.
    pub rows: Vec<(f64, Option<(f64, f64)>)>,
}

/// Estimate `P(R_n / N^{1+alpha} >= z | survival at n/2)` on a z grid.
pub fn max_displacement_tail(
    cfg: &LatticeConfig,
    n: u64,
    z_grid: &[f64],
    reps: u64,
) -> Result<DisplacementTail> {
    if n < 2 || reps == 0 {
        return Err(Error::InvalidInput("need n >= 2 and reps >= 1".into()));
    }
    let half = n / 2;
    let scale = cfg.space_scale();
    let mut conditioning = 0u64;
    let mut tail_hits = vec![0u64; z_grid.len()];
    for rep in 0..reps {
        let mut src = StreamCoins::new(cfg, &[domain::REPLICA, rep]);
        let mut field = ParticleField::single_at_origin();
        let mut alive_at_half = false;
        while field.n < n {
            if field.n == half {
                alive_at_half = !field.is_extinct();
                if !alive_at_half {
                    break;
                }
            }
            if field.is_extinct() {
                break;
            }
            field.step(&mut src, cfg.caps.max_total_mass)?;
        }
        if field.n >= half && alive_at_half {
            conditioning += 1;
            let r_scaled = field.max_abs_site as f64 / scale;
            for (i, &z) in z_grid.iter().enumerate() {
                if r_scaled >= z {
                    tail_hits[i] += 1;
                }
            }
        }
    }
    let rows = z_grid
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            if conditioning == 0 {
                (z, None)
            } else {
                let p = tail_hits[i] as f64 / conditioning as f64;
                (z, Some((p, crate::stats::binomial_stderr(p, conditioning))))
            }
        })
        .collect();
    Ok(DisplacementTail {
        conditioning_count: conditioning,
        reps,
        rows,
    })
}
