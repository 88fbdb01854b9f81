//! Anisotropic lattice, quenched edge coins and cluster exploration.

use std::collections::VecDeque;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::coins::{self, domain};
use crate::config::{EdgeProbs, LatticeConfig};
use crate::stats;
use crate::{Error, Result};

/// A lattice vertex `(x, layer)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i64,
    pub layer: i64,
}

impl Site {
    pub fn new(x: i64, layer: i64) -> Self {
        Self { x, layer }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Horizontal,
    Vertical,
}

/// Canonical edge identity. Endpoints are ordered lexicographically, so the
/// identity (and therefore the quenched coin) does not depend on the
/// orientation in which the edge was queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeId {
    pub kind: EdgeKind,
    pub a: Site,
    pub b: Site,
}

impl EdgeId {
    /// Build the canonical edge between `u` and `v`, validating its shape
    /// against the horizontal range `n`.
    pub fn new(u: Site, v: Site, n: u32) -> Result<Self> {
        let (a, b) = if (u.x, u.layer) <= (v.x, v.layer) {
            (u, v)
        } else {
            (v, u)
        };
        let dx = (b.x - a.x).abs();
        let dl = (b.layer - a.layer).abs();
        if dl == 0 && dx >= 1 && dx <= n as i64 {
            Ok(Self {
                kind: EdgeKind::Horizontal,
                a,
                b,
            })
        } else if dx == 0 && dl == 1 {
            Ok(Self {
                kind: EdgeKind::Vertical,
                a,
                b,
            })
        } else {
            Err(Error::InvalidEdge(format!(
                "({},{})-({},{}) is neither a range-{n} horizontal edge nor a vertical edge",
                u.x, u.layer, v.x, v.layer
            )))
        }
    }

    fn uniform(&self, seed: u64) -> f64 {
        let tag = match self.kind {
            EdgeKind::Horizontal => domain::HORIZONTAL,
            EdgeKind::Vertical => domain::VERTICAL,
        };
        coins::keyed_unit(
            seed,
            &[
                tag,
                self.a.x as u64,
                self.a.layer as u64,
                self.b.x as u64,
                self.b.layer as u64,
            ],
        )
    }
}

/// Quenched state of one edge: a deterministic function of `(seed, edge)`.
pub fn edge_is_open(cfg: &LatticeConfig, edge: &EdgeId) -> bool {
    edge_is_open_with(cfg.seed, &cfg.probs(), edge)
}

/// Same coin, explicit probabilities (for coupled comparisons).
pub fn edge_is_open_with(seed: u64, probs: &EdgeProbs, edge: &EdgeId) -> bool {
    let p = match edge.kind {
        EdgeKind::Horizontal => probs.p_h,
        EdgeKind::Vertical => probs.p_v,
    };
    edge.uniform(seed) < p
}

#[inline]
fn horizontal_uniform(seed: u64, layer: i64, x1: i64, x2: i64) -> f64 {
    let (a, b) = if x1 <= x2 { (x1, x2) } else { (x2, x1) };
    coins::keyed_unit(
        seed,
        &[
            domain::HORIZONTAL,
            a as u64,
            layer as u64,
            b as u64,
            layer as u64,
        ],
    )
}

#[inline]
fn vertical_uniform(seed: u64, x: i64, lower_layer: i64) -> f64 {
    coins::keyed_unit(
        seed,
        &[
            domain::VERTICAL,
            x as u64,
            lower_layer as u64,
            x as u64,
            (lower_layer + 1) as u64,
        ],
    )
}

/// Exploration caps plus optional inclusive windows of admissible layers
/// and x coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ExploreCaps {
    pub max_sites: u64,
    pub max_generation: u64,
    pub layer_window: Option<(i64, i64)>,
    pub x_window: Option<(i64, i64)>,
}

impl ExploreCaps {
    pub fn from_config(cfg: &LatticeConfig) -> Self {
        Self {
            max_sites: cfg.caps.max_sites,
            max_generation: cfg.caps.max_generation,
            layer_window: None,
            x_window: None,
        }
    }

    pub fn horizontal_only(mut self) -> Self {
        self.layer_window = Some((0, 0));
        self
    }

    fn admits(&self, layer: i64) -> bool {
        match self.layer_window {
            Some((lo, hi)) => layer >= lo && layer <= hi,
            None => true,
        }
    }

    fn admits_x(&self, x: i64) -> bool {
        match self.x_window {
            Some((lo, hi)) => x >= lo && x <= hi,
            None => true,
        }
    }
}

/// Connected cluster with BFS generations (graph distance along open paths).
#[derive(Debug, Clone)]
pub struct Cluster {
    pub generation: FxHashMap<Site, u64>,
    pub truncated: bool,
}

impl Cluster {
    pub fn size(&self) -> u64 {
        self.generation.len() as u64
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.generation.contains_key(s)
    }

    /// CSV rows `(x, layer, generation)`, sorted for stable output.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(Site, u64)> = self.generation.iter().map(|(s, g)| (*s, *g)).collect();
        rows.sort();
        let mut out = String::from("x,layer,generation\n");
        for (s, g) in rows {
            out.push_str(&format!("{},{},{}\n", s.x, s.layer, g));
        }
        out
    }
}

/// Breadth-first exploration over open edges, coins queried lazily.
pub fn explore_cluster(cfg: &LatticeConfig, origin: Site, caps: ExploreCaps) -> Result<Cluster> {
    explore_cluster_with(cfg.seed, &cfg.probs(), cfg.n, origin, caps)
}

pub fn explore_cluster_with(
    seed: u64,
    probs: &EdgeProbs,
    n: u32,
    origin: Site,
    caps: ExploreCaps,
) -> Result<Cluster> {
    if caps.max_sites == 0
        || caps.max_generation == 0
        || !caps.admits(origin.layer)
        || !caps.admits_x(origin.x)
    {
        return Err(Error::InvalidInput(
            "caps must be positive and admit the origin".into(),
        ));
    }
    let mut generation: FxHashMap<Site, u64> = FxHashMap::default();
    let mut queue: VecDeque<(Site, u64)> = VecDeque::new();
    let mut truncated = false;
    generation.insert(origin, 0);
    queue.push_back((origin, 0));

    while let Some((site, gen)) = queue.pop_front() {
        let visit = |cand: Site,
                     open: bool,
                     generation: &mut FxHashMap<Site, u64>,
                     queue: &mut VecDeque<(Site, u64)>,
                     truncated: &mut bool| {
            if !open || generation.contains_key(&cand) {
                return;
            }
            if gen + 1 > caps.max_generation {
                *truncated = true;
                return;
            }
            if generation.len() as u64 >= caps.max_sites {
                *truncated = true;
                return;
            }
            generation.insert(cand, gen + 1);
            queue.push_back((cand, gen + 1));
        };

        for d in 1..=n as i64 {
            for x in [site.x - d, site.x + d] {
                if !caps.admits_x(x) {
                    continue;
                }
                let open = horizontal_uniform(seed, site.layer, site.x, x) < probs.p_h;
                visit(
                    Site::new(x, site.layer),
                    open,
                    &mut generation,
                    &mut queue,
                    &mut truncated,
                );
            }
        }
        for dl in [-1i64, 1] {
            let layer = site.layer + dl;
            if !caps.admits(layer) {
                continue;
            }
            let lower = site.layer.min(layer);
            let open = vertical_uniform(seed, site.x, lower) < probs.p_v;
            visit(
                Site::new(site.x, layer),
                open,
                &mut generation,
                &mut queue,
                &mut truncated,
            );
        }
    }
    Ok(Cluster {
        generation,
        truncated,
    })
}

/// Monte Carlo crossing estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrossingEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub reps: u64,
}

/// The default initial condition: `2 floor(N^{2 alpha})` equally spaced
/// layer-0 sites on `[-floor(N^{1+alpha}), floor(N^{1+alpha})]`.
pub fn default_initial_sites(cfg: &LatticeConfig) -> Vec<i64> {
    let count = 2 * cfg.time_scale().floor() as i64;
    let r = cfg.space_scale().floor() as i64;
    equally_spaced(count.max(2), -r, r)
}

/// `count` equally spaced integers on `[lo, hi]`, endpoints included.
pub fn equally_spaced(count: i64, lo: i64, hi: i64) -> Vec<i64> {
    assert!(count >= 1 && hi >= lo);
    if count == 1 {
        return vec![(lo + hi) / 2];
    }
    (0..count)
        .map(|j| lo + ((hi - lo) * j + (count - 1) / 2) / (count - 1))
        .collect()
}

/// Probability that an open path connects the initial layer-0 sites to layer
/// `m` inside the box `[-w, w] x [0, m]`. A finite-volume proxy chosen by
/// this laboratory; the flag is carried in the CSV emitted by experiment
/// drivers.
pub fn crossing_probability(
    cfg: &LatticeConfig,
    w: i64,
    m: i64,
    reps: u64,
    probs: Option<EdgeProbs>,
) -> Result<CrossingEstimate> {
    let probs = probs.unwrap_or_else(|| cfg.probs());
    let initial = default_initial_sites(cfg);
    validate_box(cfg, w, m, reps, &initial)?;
    let hits: u64 = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = coins::replica_seed(cfg.seed, rep);
            u64::from(box_crossing(seed, &probs, cfg.n, &initial, w, m))
        })
        .sum();
    let estimate = hits as f64 / reps as f64;
    Ok(CrossingEstimate {
        estimate,
        stderr: stats::binomial_stderr(estimate, reps),
        reps,
    })
}

fn validate_box(cfg: &LatticeConfig, w: i64, m: i64, reps: u64, initial: &[i64]) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be >= 1".into()));
    }
    if w < 2 * cfg.n as i64 || m < 1 {
        return Err(Error::InvalidInput(format!(
            "box too small: need w >= 2N = {} and m >= 1, got w = {w}, m = {m}",
            2 * cfg.n
        )));
    }
    if initial.iter().any(|&x| x.abs() > w) {
        return Err(Error::InvalidInput(
            "box width does not contain the initial sites".into(),
        ));
    }
    Ok(())
}

/// Single-replica crossing indicator: multi-source BFS over the box.
fn box_crossing(seed: u64, probs: &EdgeProbs, n: u32, initial: &[i64], w: i64, m: i64) -> bool {
    let width = (2 * w + 1) as usize;
    let idx = |x: i64, layer: i64| -> usize { layer as usize * width + (x + w) as usize };
    let mut seen = vec![false; width * (m as usize + 1)];
    let mut queue: VecDeque<(i64, i64)> = VecDeque::new();
    for &x in initial {
        if !seen[idx(x, 0)] {
            seen[idx(x, 0)] = true;
            queue.push_back((x, 0));
        }
    }
    while let Some((x, layer)) = queue.pop_front() {
        if layer == m {
            return true;
        }
        for d in 1..=n as i64 {
            for nx in [x - d, x + d] {
                if nx.abs() > w || seen[idx(nx, layer)] {
                    continue;
                }
                if horizontal_uniform(seed, layer, x, nx) < probs.p_h {
                    seen[idx(nx, layer)] = true;
                    queue.push_back((nx, layer));
                }
            }
        }
        for dl in [-1i64, 1] {
            let nl = layer + dl;
            if nl < 0 || nl > m || seen[idx(x, nl)] {
                continue;
            }
            if vertical_uniform(seed, x, layer.min(nl)) < probs.p_v {
                seen[idx(x, nl)] = true;
                queue.push_back((x, nl));
            }
        }
    }
    false
}

/// Per-replica critical interaction: the smallest `kappa` at which the box
/// is crossed when every vertical uniform `u` opens iff
/// `u < min(1, kappa N^{-b})`, with horizontal coins fixed.
///
/// Computed as a widest-path (minimax over vertical uniforms) search, so one
/// run yields the whole monotone family of paired-coin crossing indicators:
/// the replica crosses at `kappa` iff `kappa_star <= kappa`. `None` means no
/// crossing below `kappa_max` (censored).
pub fn crossing_kappa_star(
    cfg: &LatticeConfig,
    w: i64,
    m: i64,
    rep: u64,
    kappa_max: f64,
) -> Result<Option<f64>> {
    let initial = default_initial_sites(cfg);
    validate_box(cfg, w, m, 1, &initial)?;
    let seed = coins::replica_seed(cfg.seed, rep);
    let p_h = cfg.p_h();
    let nb = cfg.n_pow(cfg.b);
    let p_cut = (kappa_max / nb).min(1.0);

    let width = (2 * w + 1) as usize;
    let cells = width * (m as usize + 1);
    let idx = |x: i64, layer: i64| -> usize { layer as usize * width + (x + w) as usize };

    // Dijkstra on bottleneck = max vertical uniform along the path.
    let mut best = vec![f64::INFINITY; cells];
    let mut done = vec![false; cells];
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<(u64, i64, i64)>> =
        std::collections::BinaryHeap::new();
    // f64 bottlenecks are nonnegative, so their bit patterns order correctly.
    let enc = |v: f64| -> u64 { v.to_bits() };
    for &x in &initial {
        let i = idx(x, 0);
        if best[i] > 0.0 {
            best[i] = 0.0;
            heap.push(std::cmp::Reverse((enc(0.0), x, 0)));
        }
    }
    while let Some(std::cmp::Reverse((ebot, x, layer))) = heap.pop() {
        let i = idx(x, layer);
        if done[i] {
            continue;
        }
        done[i] = true;
        let bot = f64::from_bits(ebot);
        if layer == m {
            return Ok(Some((bot * nb).max(0.0)));
        }
        for d in 1..=cfg.n as i64 {
            for nx in [x - d, x + d] {
                if nx.abs() > w {
                    continue;
                }
                let j = idx(nx, layer);
                if done[j] || best[j] <= bot {
                    continue;
                }
                if horizontal_uniform(seed, layer, x, nx) < p_h {
                    best[j] = bot;
                    heap.push(std::cmp::Reverse((enc(bot), nx, layer)));
                }
            }
        }
        for dl in [-1i64, 1] {
            let nl = layer + dl;
            if nl < 0 || nl > m {
                continue;
            }
            let j = idx(x, nl);
            if done[j] {
                continue;
            }
            let u = vertical_uniform(seed, x, layer.min(nl));
            if u >= p_cut {
                continue;
            }
            let cand = bot.max(u);
            if cand < best[j] {
                best[j] = cand;
                heap.push(std::cmp::Reverse((enc(cand), x, nl)));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: u32, kappa: f64, seed: u64) -> LatticeConfig {
        LatticeConfig::new(n, kappa, seed).unwrap()
    }

    #[test]
    fn edge_queries_are_deterministic_and_symmetric() {
        let c = cfg(4, 1.0, 42);
        let u = Site::new(3, 2);
        let v = Site::new(1, 2);
        let e1 = EdgeId::new(u, v, c.n).unwrap();
        let e2 = EdgeId::new(v, u, c.n).unwrap();
        assert_eq!(e1, e2);
        assert_eq!(edge_is_open(&c, &e1), edge_is_open(&c, &e2));
        assert_eq!(edge_is_open(&c, &e1), edge_is_open(&c, &e1));
    }

    #[test]
    fn invalid_edges_rejected() {
        assert!(EdgeId::new(Site::new(0, 0), Site::new(5, 0), 4).is_err());
        assert!(EdgeId::new(Site::new(0, 0), Site::new(0, 2), 4).is_err());
        assert!(EdgeId::new(Site::new(0, 0), Site::new(1, 1), 4).is_err());
        assert!(EdgeId::new(Site::new(0, 0), Site::new(0, 0), 4).is_err());
    }

    #[test]
    fn kappa_zero_closes_all_vertical_edges() {
        let c = cfg(3, 0.0, 5);
        for x in -20..20 {
            let e = EdgeId::new(Site::new(x, 0), Site::new(x, 1), c.n).unwrap();
            assert!(!edge_is_open(&c, &e));
        }
    }

    #[test]
    fn horizontal_open_fraction_matches_p_h_at_n1() {
        // N = 1: p_h = 1/2; one million sampled edges across seeds.
        let mut open = 0u64;
        let total = 1_000_000u64;
        for i in 0..total {
            let seed = i / 64;
            let x = (i % 64) as i64 * 2;
            if horizontal_uniform(seed, 0, x, x + 1) < 0.5 {
                open += 1;
            }
        }
        let frac = open as f64 / total as f64;
        assert!((frac - 0.5).abs() < 0.002, "open fraction {frac}");
    }

    #[test]
    fn closed_seed_gives_singleton_cluster() {
        // Find a seed whose six incident coins at the origin are all closed,
        // then exploration must stop immediately.
        let mut c = cfg(2, 0.5, 0);
        let caps = ExploreCaps::from_config(&c);
        let origin = Site::new(0, 0);
        let mut found = false;
        for seed in 0..10_000 {
            c.seed = seed;
            let probs = c.probs();
            let all_closed = (1..=2i64).all(|d| {
                horizontal_uniform(seed, 0, 0, d) >= probs.p_h
                    && horizontal_uniform(seed, 0, 0, -d) >= probs.p_h
            }) && vertical_uniform(seed, 0, 0) >= probs.p_v
                && vertical_uniform(seed, 0, -1) >= probs.p_v;
            if all_closed {
                found = true;
                break;
            }
        }
        assert!(found, "no all-closed seed in range");
        let cl = explore_cluster(&c, origin, caps).unwrap();
        assert_eq!(cl.size(), 1);
        assert!(cl.contains(&origin));
        assert!(!cl.truncated);
    }

    #[test]
    fn kappa_zero_keeps_cluster_on_origin_layer() {
        let c = cfg(2, 0.0, 77);
        let cl = explore_cluster(&c, Site::new(0, 3), ExploreCaps::from_config(&c)).unwrap();
        assert!(cl.generation.keys().all(|s| s.layer == 3));
    }

    /// Brute-force disjoint-set union over a fully enumerated coin table.
    struct Dsu {
        parent: Vec<usize>,
    }

    impl Dsu {
        fn new(n: usize) -> Self {
            Self {
                parent: (0..n).collect(),
            }
        }
        fn find(&mut self, i: usize) -> usize {
            if self.parent[i] != i {
                let r = self.find(self.parent[i]);
                self.parent[i] = r;
            }
            self.parent[i]
        }
        fn union(&mut self, a: usize, b: usize) {
            let (ra, rb) = (self.find(a), self.find(b));
            if ra != rb {
                self.parent[ra] = rb;
            }
        }
    }

    #[test]
    fn exploration_matches_union_find_oracle_on_box() {
        // 9 x 3 box, N = 2: enumerate every edge coin once, union-find the
        // open ones, and compare the origin component with BFS exploration
        // restricted to the same box.
        let c = cfg(2, 2.0, 2024);
        let xs = -4..=4i64;
        let layers = 0..=2i64;
        let width = 9usize;
        let index = |x: i64, l: i64| ((l) * width as i64 + (x + 4)) as usize;
        let mut dsu = Dsu::new(width * 3);
        let probs = c.probs();
        for l in layers.clone() {
            for x in xs.clone() {
                for d in 1..=2i64 {
                    if x + d <= 4 {
                        let e = EdgeId::new(Site::new(x, l), Site::new(x + d, l), c.n).unwrap();
                        if edge_is_open_with(c.seed, &probs, &e) {
                            dsu.union(index(x, l), index(x + d, l));
                        }
                    }
                }
                if l + 1 <= 2 {
                    let e = EdgeId::new(Site::new(x, l), Site::new(x, l + 1), c.n).unwrap();
                    if edge_is_open_with(c.seed, &probs, &e) {
                        dsu.union(index(x, l), index(x, l + 1));
                    }
                }
            }
        }
        let caps = ExploreCaps {
            max_sites: 1_000_000,
            max_generation: 1_000_000,
            layer_window: Some((0, 2)),
            x_window: Some((-4, 4)),
        };
        let cl = explore_cluster(&c, Site::new(0, 0), caps).unwrap();
        let root = dsu.find(index(0, 0));
        for l in 0..=2i64 {
            for x in -4..=4i64 {
                let in_union = dsu.find(index(x, l)) == root;
                let in_bfs = cl.contains(&Site::new(x, l));
                assert_eq!(
                    in_union, in_bfs,
                    "disagreement at ({x},{l}) (union {in_union}, bfs {in_bfs})"
                );
            }
        }
    }

    #[test]
    fn cluster_monotone_in_probabilities() {
        let c = cfg(3, 1.0, 11);
        let caps = ExploreCaps {
            max_sites: 5_000,
            max_generation: 1_000,
            layer_window: Some((-2, 2)),
            x_window: None,
        };
        let lo = EdgeProbs {
            p_h: 0.10,
            p_v: 0.05,
        };
        let hi = EdgeProbs {
            p_h: 0.22,
            p_v: 0.30,
        };
        for seed in 0..25u64 {
            let small = explore_cluster_with(seed, &lo, c.n, Site::new(0, 0), caps).unwrap();
            let large = explore_cluster_with(seed, &hi, c.n, Site::new(0, 0), caps).unwrap();
            if large.truncated {
                continue;
            }
            for s in small.generation.keys() {
                assert!(large.contains(s), "seed {seed}: site {s:?} lost");
            }
        }
    }

    #[test]
    fn exploration_consistent_from_any_cluster_site() {
        let c = cfg(2, 1.0, 31);
        let caps = ExploreCaps {
            max_sites: 100_000,
            max_generation: 100_000,
            layer_window: Some((0, 1)),
            x_window: None,
        };
        let from_origin = explore_cluster(&c, Site::new(0, 0), caps).unwrap();
        assert!(!from_origin.truncated);
        let other = *from_origin
            .generation
            .keys()
            .max_by_key(|s| (s.x, s.layer))
            .unwrap();
        let from_other = explore_cluster(&c, other, caps).unwrap();
        let mut a: Vec<_> = from_origin.generation.keys().copied().collect();
        let mut b: Vec<_> = from_other.generation.keys().copied().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn crossing_trivial_cases() {
        let c = cfg(2, 0.0, 9);
        let all_open = EdgeProbs { p_h: 1.0, p_v: 1.0 };
        let est = crossing_probability(&c, 8, 3, 20, Some(all_open)).unwrap();
        assert_eq!(est.estimate, 1.0);

        let est0 = crossing_probability(&c, 8, 3, 20, None).unwrap();
        assert_eq!(est0.estimate, 0.0);

        assert!(crossing_probability(&c, 8, 3, 0, None).is_err());
        assert!(crossing_probability(&c, 2, 3, 5, None).is_err());
    }

    #[test]
    fn crossing_monotone_in_kappa_via_kappa_star() {
        // Shared-coin coupling: the indicator family 1{kappa_star <= kappa}
        // is nondecreasing in kappa by construction; spot-check agreement
        // with direct BFS crossing at a few kappas.
        let base = cfg(8, 0.0, 321);
        let w = 40;
        let m = 2;
        for rep in 0..12u64 {
            let ks = crossing_kappa_star(&base, w, m, rep, 64.0).unwrap();
            for kappa in [0.05, 0.4, 1.5, 6.0, 24.0] {
                let mut c = base.clone();
                c.kappa = kappa;
                let seed = coins::replica_seed(c.seed, rep);
                let crossed = box_crossing(seed, &c.probs(), c.n, &default_initial_sites(&c), w, m);
                let predicted = ks.map(|k| k <= kappa).unwrap_or(false);
                assert_eq!(crossed, predicted, "rep {rep} kappa {kappa} ks {ks:?}");
            }
        }
        // N = 64: the crossing estimates at kappa in {0.1, 1, 10} under
        // the shared coupling are nondecreasing
        let wide = cfg(64, 0.0, 99);
        let w64 = default_initial_sites(&wide)
            .iter()
            .map(|x| x.abs())
            .max()
            .unwrap()
            + 2 * 64;
        let mut prev = -1.0f64;
        let reps = 40u64;
        let stars: Vec<Option<f64>> = (0..reps)
            .map(|rep| crossing_kappa_star(&wide, w64, 3, rep, 64.0).unwrap())
            .collect();
        for kappa in [0.1, 1.0, 10.0] {
            let est = stars
                .iter()
                .filter(|s| matches!(s, Some(k) if *k <= kappa))
                .count() as f64
                / reps as f64;
            assert!(est >= prev, "kappa {kappa}: {est} < {prev}");
            prev = est;
        }
    }
}
