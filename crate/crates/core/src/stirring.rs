//! Event-driven simulator of the accelerated exclusion process on a finite
//! closed window, via the Harris graphical construction (stirring).
//!
//! Each edge carries a rate-`n^2` Poisson clock whose ring swaps the two
//! endpoint occupancies. Scheduling is aggregated: edges touching an
//! observable ("hot" edges) are resolved event by event with exact times;
//! between two such resolutions the number of remaining ("cold") edge rings
//! is Poisson and the rings are applied in order with uniform edge marks,
//! which reproduces the same law because cold rings neither move an observed
//! occupancy nor cross an observed bond. Observable accumulators (occupation
//! times, currents, block averages) advance exactly over inter-event
//! intervals; there is no time discretisation anywhere.

use crate::error::{Error, Result};
use crate::meanfield::{HeatField, QuadratureSettings, WindowDensity};
use crate::profile::Profile;
use crate::seed::{splitmix64, sub_seed};
use crate::testfn::TestFunction;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

/// Finite lattice window `{x_lo, ..., x_hi}` with closed boundary.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LatticeWindow {
    pub n: u32,
    pub x_lo: i64,
    pub x_hi: i64,
    pub margin_factor: f64,
}

/// Sites the Gaussian-tail margin rule must protect: `margin_factor * 6 * n * sqrt(2T)`.
pub fn required_margin(n: u32, t_max: f64, margin_factor: f64) -> i64 {
    (margin_factor * 6.0 * n as f64 * (2.0 * t_max).sqrt()).ceil() as i64
}

impl LatticeWindow {
    pub fn site_count(&self) -> usize {
        (self.x_hi - self.x_lo + 1) as usize
    }

    pub fn edge_count(&self) -> usize {
        (self.x_hi - self.x_lo) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_lo >= self.x_hi {
            return Err(Error::WindowTooSmall(format!(
                "window [{}, {}] has no edges",
                self.x_lo, self.x_hi
            )));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("scaling parameter n must be >= 1".into()));
        }
        Ok(())
    }

    /// Window just covering `sites` with the margin rule for horizon `t_max`.
    pub fn covering(n: u32, t_max: f64, margin_factor: f64, sites: &[i64]) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidInput("no observed sites".into()));
        }
        let margin = required_margin(n, t_max, margin_factor);
        let lo = sites.iter().min().unwrap() - margin;
        let hi = sites.iter().max().unwrap() + margin;
        Ok(LatticeWindow { n, x_lo: lo, x_hi: hi, margin_factor })
    }

    fn check_margin(&self, site: i64, t_max: f64) -> Result<()> {
        let margin = required_margin(self.n, t_max, self.margin_factor);
        if site - self.x_lo < margin || self.x_hi - site < margin {
            return Err(Error::WindowTooSmall(format!(
                "observed site {site} is within {} of the boundary; margin rule needs {margin}",
                (site - self.x_lo).min(self.x_hi - site)
            )));
        }
        Ok(())
    }
}

/// Occupancies on a window at a given simulation time.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub window: LatticeWindow,
    occ: Vec<u64>,
    pub time: f64,
}

impl Configuration {
    pub fn occupied(&self, site: i64) -> bool {
        let s = (site - self.window.x_lo) as usize;
        (self.occ[s >> 6] >> (s & 63)) & 1 == 1
    }

    pub fn set(&mut self, site: i64, value: bool) {
        let s = (site - self.window.x_lo) as usize;
        let (w, b) = (s >> 6, s & 63);
        if value {
            self.occ[w] |= 1 << b;
        } else {
            self.occ[w] &= !(1 << b);
        }
    }

    pub fn particle_count(&self) -> u64 {
        self.occ.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn empty(window: LatticeWindow) -> Self {
        let words = window.site_count().div_ceil(64);
        Configuration { window, occ: vec![0; words], time: 0.0 }
    }

    pub fn full(window: LatticeWindow) -> Self {
        let mut c = Self::empty(window);
        for x in window.x_lo..=window.x_hi {
            c.set(x, true);
        }
        c
    }
}

/// Slowly varying Bernoulli product measure: site `x` occupied with
/// probability `rho_0(x/n)`.
pub fn sample_initial_configuration(
    profile: &Profile,
    window: &LatticeWindow,
    seed: u64,
) -> Result<Configuration> {
    window.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut c = Configuration::empty(*window);
    let n = window.n as f64;
    for x in window.x_lo..=window.x_hi {
        let p = profile.eval(x as f64 / n);
        if rng.gen::<f64>() < p {
            c.set(x, true);
        }
    }
    Ok(c)
}

/// What to measure along a trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableKind {
    /// Signed particle transfers across the bond `(x, x+1)`; jumps to the
    /// right count +1. Centred subtracts `E[J](t) = n^2 \int (rho_s(x) - rho_s(x+1)) ds`.
    Current { bond: i64, centred: bool },
    /// Occupation time integral `\int_0^t eta_s(x) ds`; centred subtracts
    /// `\int_0^t rho_s(x) ds` (the centred occupation time `Gamma`).
    Occupation { site: i64, centred: bool },
    /// `n^2`-free disagreement time `\int_0^t 1{eta_s(x) != eta_s(x+1)} ds`
    /// across the bond `(x, x+1)` (the quadratic variation of the current
    /// martingale is `n^2` times this).
    Disagreement { bond: i64 },
    /// Density fluctuation field `n^{-1/2} sum_x (eta_t(x) - rho_t(x)) H(x/n)`.
    DensityField { h: crate::testfn::TestFunctionSpec },
    /// Running integral of the Kipnis-Varadhan block functional
    /// `g(s) = eta_s(0) - rho_s(0) - (1/l) sum_{y<l} (eta_s(y) - rho_s(y))`.
    KvBlock { len: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservableSpec {
    #[serde(flatten)]
    pub kind: ObservableKind,
    pub output_times: Vec<f64>,
}

impl ObservableSpec {
    pub fn new(kind: ObservableKind, output_times: Vec<f64>) -> Self {
        ObservableSpec { kind, output_times }
    }

    fn observed_sites(&self) -> Vec<i64> {
        match &self.kind {
            ObservableKind::Current { bond, .. } | ObservableKind::Disagreement { bond } => {
                vec![*bond, *bond + 1]
            }
            ObservableKind::Occupation { site, .. } => vec![*site],
            ObservableKind::DensityField { h } => {
                let f = h.build();
                let (lo, hi) = f.support();
                vec![lo.floor() as i64, hi.ceil() as i64] // scaled by n later
            }
            ObservableKind::KvBlock { len } => vec![0, *len as i64 - 1],
        }
    }

    fn validate(&self, t_max: f64) -> Result<()> {
        if self.output_times.is_empty() {
            return Err(Error::InvalidInput("observable has no output times".into()));
        }
        if self.output_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("output times must be nondecreasing".into()));
        }
        if self.output_times.iter().any(|&t| t < 0.0 || t > t_max) {
            return Err(Error::InvalidInput(format!(
                "output times must lie in [0, {t_max}]"
            )));
        }
        if let ObservableKind::KvBlock { len } = self.kind {
            if len < 1 {
                return Err(Error::InvalidInput("kv block length must be >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Which exact mean-field solution centres the observables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentringMode {
    /// Closed-window single-particle solution: the exact mean of the
    /// simulated process, no truncation bias. Default.
    Window,
    /// Infinite-lattice kernel (modified-Bessel route).
    LatticeZ,
}

struct CurrentObs {
    edge: u32,
    centring: Vec<f64>,
}

struct OccupationObs {
    watch_idx: usize,
    centring: Vec<f64>,
}

struct DisagreementObs {
    edge: u32,
}

struct DensityObs {
    h: TestFunction,
    sites: Vec<(usize, f64)>, // (site offset, H(x/n))
    centring: Vec<f64>,       // sum_x rho_t(x) H(x/n) at output times
}

struct KvObs {
    len: u32,
    centring: Vec<f64>, // int_0^t [rho_s(0) - blockavg rho_s] ds
}

enum Compiled {
    Current(CurrentObs),
    Occupation(OccupationObs),
    Disagreement(DisagreementObs),
    Density(DensityObs),
    Kv(KvObs),
}

/// Observables compiled against a window and profile: hot-edge sets, watched
/// sites, and deterministic centring tables shared across replicas.
pub struct ObservableSet {
    pub window: LatticeWindow,
    pub t_max: f64,
    specs: Vec<ObservableSpec>,
    compiled: Vec<Compiled>,
    /// Sorted union of output times; per-observable indices into it.
    out_times: Vec<f64>,
    out_map: Vec<Vec<usize>>,
    hot_edges: Vec<u32>,
    cold_edges: Vec<u32>,
    watched_sites: Vec<u32>,
    kv_lens: Vec<u32>,
}

impl ObservableSet {
    pub fn build(
        specs: &[ObservableSpec],
        profile: &Profile,
        window: &LatticeWindow,
        mode: CentringMode,
    ) -> Result<Self> {
        window.validate()?;
        let t_max = specs
            .iter()
            .flat_map(|s| s.output_times.iter().cloned())
            .fold(0.0, f64::max);
        let n = window.n;
        let nf = n as f64;

        // Validate specs, collect observed sites, apply the margin rule.
        let mut watched: Vec<i64> = Vec::new();
        let mut hot: Vec<i64> = Vec::new(); // edges as left-site coordinates
        for spec in specs {
            spec.validate(t_max)?;
            match &spec.kind {
                ObservableKind::Current { bond, .. } | ObservableKind::Disagreement { bond } => {
                    window.check_margin(*bond, t_max)?;
                    window.check_margin(*bond + 1, t_max)?;
                    if *bond < window.x_lo || *bond + 1 > window.x_hi {
                        return Err(Error::WindowTooSmall(format!(
                            "bond {bond} outside window"
                        )));
                    }
                    hot.push(*bond);
                }
                ObservableKind::Occupation { site, .. } => {
                    window.check_margin(*site, t_max)?;
                    watched.push(*site);
                    if *site > window.x_lo {
                        hot.push(*site - 1);
                    }
                    if *site < window.x_hi {
                        hot.push(*site);
                    }
                }
                ObservableKind::DensityField { h } => {
                    let f = h.build();
                    let (lo, hi) = f.support();
                    let (slo, shi) = ((lo * nf).floor() as i64, (hi * nf).ceil() as i64);
                    window.check_margin(slo, t_max)?;
                    window.check_margin(shi, t_max)?;
                }
                ObservableKind::KvBlock { len } => {
                    window.check_margin(0, t_max)?;
                    window.check_margin(*len as i64 - 1, t_max)?;
                    for y in 0..*len as i64 {
                        watched.push(y);
                    }
                    for e in -1..*len as i64 {
                        hot.push(e);
                    }
                }
            }
        }
        watched.sort_unstable();
        watched.dedup();
        hot.sort_unstable();
        hot.dedup();
        hot.retain(|e| *e >= window.x_lo && *e < window.x_hi);

        let to_off = |x: i64| (x - window.x_lo) as u32;
        let watched_sites: Vec<u32> = watched.iter().map(|&x| to_off(x)).collect();
        let hot_edges: Vec<u32> = hot.iter().map(|&e| to_off(e)).collect();
        let hot_set: std::collections::HashSet<u32> = hot_edges.iter().cloned().collect();
        let cold_edges: Vec<u32> =
            (0..window.edge_count() as u32).filter(|e| !hot_set.contains(e)).collect();

        // Union of output times.
        let mut out_times: Vec<f64> = specs
            .iter()
            .flat_map(|s| s.output_times.iter().cloned())
            .collect();
        out_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out_times.dedup();
        let out_map: Vec<Vec<usize>> = specs
            .iter()
            .map(|s| {
                s.output_times
                    .iter()
                    .map(|t| out_times.partition_point(|x| x < t))
                    .collect()
            })
            .collect();

        // Deterministic centring tables (shared by every replica).
        let centring_sites: Vec<i64> = {
            let mut v = watched.clone();
            for spec in specs {
                match &spec.kind {
                    ObservableKind::Current { bond, centred: true } => {
                        v.push(*bond);
                        v.push(*bond + 1);
                    }
                    ObservableKind::DensityField { h } => {
                        let f = h.build();
                        let (lo, hi) = f.support();
                        let (slo, shi) = ((lo * nf).floor() as i64, (hi * nf).ceil() as i64);
                        v.extend(slo..=shi);
                    }
                    _ => {}
                }
            }
            v.sort_unstable();
            v.dedup();
            v
        };
        let tables = CentringTables::compute(profile, window, mode, &out_times, &centring_sites)?;

        let mut compiled = Vec::with_capacity(specs.len());
        for spec in specs {
            let c = match &spec.kind {
                ObservableKind::Current { bond, centred } => {
                    let centring = if *centred {
                        spec.output_times
                            .iter()
                            .map(|&t| {
                                nf * nf
                                    * (tables.integral(*bond, t) - tables.integral(*bond + 1, t))
                            })
                            .collect()
                    } else {
                        vec![0.0; spec.output_times.len()]
                    };
                    Compiled::Current(CurrentObs { edge: to_off(*bond), centring })
                }
                ObservableKind::Occupation { site, centred } => {
                    let watch_idx = watched_sites.binary_search(&to_off(*site)).unwrap();
                    let centring = if *centred {
                        spec.output_times.iter().map(|&t| tables.integral(*site, t)).collect()
                    } else {
                        vec![0.0; spec.output_times.len()]
                    };
                    Compiled::Occupation(OccupationObs { watch_idx, centring })
                }
                ObservableKind::Disagreement { bond } => {
                    Compiled::Disagreement(DisagreementObs { edge: to_off(*bond) })
                }
                ObservableKind::DensityField { h } => {
                    let f = h.build();
                    let (lo, hi) = f.support();
                    let (slo, shi) = ((lo * nf).floor() as i64, (hi * nf).ceil() as i64);
                    let sites: Vec<(usize, f64)> = (slo..=shi)
                        .map(|x| ((x - window.x_lo) as usize, f.eval(x as f64 / nf)))
                        .filter(|(_, v)| *v != 0.0)
                        .collect();
                    let centring = spec
                        .output_times
                        .iter()
                        .map(|&t| {
                            (slo..=shi)
                                .map(|x| tables.at_time(x, t) * f.eval(x as f64 / nf))
                                .sum()
                        })
                        .collect();
                    Compiled::Density(DensityObs { h: f, sites, centring })
                }
                ObservableKind::KvBlock { len } => {
                    let centring = spec
                        .output_times
                        .iter()
                        .map(|&t| {
                            let block: f64 =
                                (0..*len as i64).map(|y| tables.integral(y, t)).sum();
                            tables.integral(0, t) - block / *len as f64
                        })
                        .collect();
                    Compiled::Kv(KvObs { len: *len, centring })
                }
            };
            compiled.push(c);
        }
        let kv_lens: Vec<u32> = compiled
            .iter()
            .filter_map(|c| match c {
                Compiled::Kv(k) => Some(k.len),
                _ => None,
            })
            .collect();

        Ok(ObservableSet {
            window: *window,
            t_max,
            specs: specs.to_vec(),
            compiled,
            out_times,
            out_map,
            hot_edges,
            cold_edges,
            watched_sites,
            kv_lens,
        })
    }

    pub fn specs(&self) -> &[ObservableSpec] {
        &self.specs
    }

    pub fn hot_edge_count(&self) -> usize {
        self.hot_edges.len()
    }
}

/// Per-site centring values, from either mean-field backend.
struct CentringTables {
    x_lo: i64,
    times: Vec<f64>,
    site_index: Vec<i64>,
    at: Vec<Vec<f64>>,  // [time][site in site_index order]
    int: Vec<Vec<f64>>, // same layout
}

impl CentringTables {
    fn compute(
        profile: &Profile,
        window: &LatticeWindow,
        mode: CentringMode,
        times: &[f64],
        sites: &[i64],
    ) -> Result<Self> {
        match mode {
            CentringMode::Window => {
                let wd = WindowDensity::solve(profile, window.n, window.x_lo, window.x_hi, times)?;
                let at = times
                    .iter()
                    .enumerate()
                    .map(|(k, _)| {
                        sites.iter().map(|&x| wd.at_times[k][(x - window.x_lo) as usize]).collect()
                    })
                    .collect();
                let int = times
                    .iter()
                    .enumerate()
                    .map(|(k, _)| {
                        sites.iter().map(|&x| wd.integrals[k][(x - window.x_lo) as usize]).collect()
                    })
                    .collect();
                Ok(CentringTables {
                    x_lo: window.x_lo,
                    times: times.to_vec(),
                    site_index: sites.to_vec(),
                    at,
                    int,
                })
            }
            CentringMode::LatticeZ => {
                let hf = HeatField::new(profile.clone(), window.n, QuadratureSettings::default());
                let mut at = Vec::with_capacity(times.len());
                let mut int = Vec::with_capacity(times.len());
                for &t in times {
                    let row_at: Result<Vec<f64>> =
                        sites.iter().map(|&x| Ok(hf.discrete_density(x, t)?.value)).collect();
                    let row_int: Result<Vec<f64>> = sites
                        .iter()
                        .map(|&x| Ok(hf.discrete_density_time_integral(x, t)?.value))
                        .collect();
                    at.push(row_at?);
                    int.push(row_int?);
                }
                Ok(CentringTables {
                    x_lo: window.x_lo,
                    times: times.to_vec(),
                    site_index: sites.to_vec(),
                    at,
                    int,
                })
            }
        }
    }

    fn time_idx(&self, t: f64) -> usize {
        self.times.partition_point(|x| *x < t)
    }

    fn site_idx(&self, x: i64) -> usize {
        let _ = self.x_lo;
        self.site_index.binary_search(&x).expect("centring site missing")
    }

    fn at_time(&self, x: i64, t: f64) -> f64 {
        self.at[self.time_idx(t)][self.site_idx(x)]
    }

    fn integral(&self, x: i64, t: f64) -> f64 {
        self.int[self.time_idx(t)][self.site_idx(x)]
    }
}

/// Per-observable value series at the requested output times.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySample {
    pub values: Vec<Vec<f64>>,
    pub event_count: u64,
    pub boundary_touch: u64,
    pub rng_seed: u64,
}

/// Run one trajectory to the last output time.
pub fn evolve(
    config: &Configuration,
    observables: &ObservableSet,
    seed: u64,
) -> Result<TrajectorySample> {
    let window = &observables.window;
    if config.window.x_lo != window.x_lo
        || config.window.x_hi != window.x_hi
        || config.window.n != window.n
    {
        return Err(Error::InvalidInput("configuration window mismatch".into()));
    }
    let mut occ = config.occ.clone();
    let n2 = (window.n as f64) * (window.n as f64);
    let e_total = window.edge_count();
    let rate_hot = observables.hot_edges.len() as f64 * n2;
    let n_cold = observables.cold_edges.len();
    let rate_cold = n_cold as f64 * n2;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);

    let bit = |occ: &[u64], s: usize| (occ[s >> 6] >> (s & 63)) & 1;
    let last_edge = (e_total - 1) as u32;

    // Watched-site running integrals and kv state.
    let n_watch = observables.watched_sites.len();
    let mut occ_int = vec![0.0f64; n_watch];
    let mut kv_sums: Vec<u32> = observables
        .kv_lens
        .iter()
        .map(|&l| (0..l as usize).map(|s| bit(&occ, s_off(window, s as i64)) as u32).sum())
        .collect();
    let mut kv_int = vec![0.0f64; observables.kv_lens.len()];
    let kv_anchor = if observables.kv_lens.is_empty() {
        0
    } else {
        s_off(window, 0)
    };

    // Raw counters for current / disagreement observables.
    let mut cur_count: Vec<i64> = Vec::new();
    let mut cur_edges: Vec<u32> = Vec::new();
    let mut dis_acc: Vec<f64> = Vec::new();
    let mut dis_edges: Vec<u32> = Vec::new();
    for c in &observables.compiled {
        match c {
            Compiled::Current(cc) => {
                cur_edges.push(cc.edge);
                cur_count.push(0);
            }
            Compiled::Disagreement(d) => {
                dis_edges.push(d.edge);
                dis_acc.push(0.0);
            }
            _ => {}
        }
    }

    // Snapshot ring: values of every observable at each global output time.
    let n_out = observables.out_times.len();
    let mut snapshots: Vec<Vec<f64>> = vec![Vec::new(); observables.compiled.len()];

    let mut t = config.time;
    let t_end = observables.t_max;
    let mut event_count: u64 = 0;
    let mut boundary_touch: u64 = 0;
    let mut out_idx = 0usize;
    // Skip output times before the start time (configuration may carry t>0).
    while out_idx < n_out && observables.out_times[out_idx] < t {
        out_idx += 1;
    }

    let mut next_hot = if rate_hot > 0.0 {
        t + exp_sample(&mut rng, rate_hot)
    } else {
        f64::INFINITY
    };

    loop {
        let next_out = if out_idx < n_out { observables.out_times[out_idx] } else { f64::INFINITY };
        let boundary = next_out.min(next_hot).min(t_end.max(t));
        if boundary.is_infinite() {
            break;
        }
        let dt = boundary - t;
        if dt > 0.0 {
            // Cold rings in (t, boundary): count Poisson, marks uniform.
            if rate_cold > 0.0 {
                let mu = rate_cold * dt;
                let m = if mu > 0.0 {
                    Poisson::new(mu).map(|p| p.sample(&mut rng) as u64).unwrap_or(0)
                } else {
                    0
                };
                event_count += m;
                for _ in 0..m {
                    let idx = mul_shift(rng.gen::<u64>(), n_cold as u64) as usize;
                    let e = observables.cold_edges[idx];
                    let s = e as usize;
                    let v1 = bit(&occ, s);
                    let v2 = bit(&occ, s + 1);
                    let d = v1 ^ v2;
                    occ[s >> 6] ^= d << (s & 63);
                    occ[(s + 1) >> 6] ^= d << ((s + 1) & 63);
                    if d == 1 && (e == 0 || e == last_edge) {
                        boundary_touch += 1;
                    }
                }
            }
            // Advance exact holding-interval accumulators.
            for (i, &s) in observables.watched_sites.iter().enumerate() {
                occ_int[i] += bit(&occ, s as usize) as f64 * dt;
            }
            for (i, &l) in observables.kv_lens.iter().enumerate() {
                kv_int[i] +=
                    (bit(&occ, kv_anchor) as f64 - kv_sums[i] as f64 / l as f64) * dt;
            }
            for (i, &e) in dis_edges.iter().enumerate() {
                let s = e as usize;
                if bit(&occ, s) != bit(&occ, s + 1) {
                    dis_acc[i] += dt;
                }
            }
            t = boundary;
        } else {
            t = boundary;
        }

        if next_out <= next_hot && out_idx < n_out && t == next_out {
            // Snapshot every observable at this output time.
            for (oi, c) in observables.compiled.iter().enumerate() {
                let v = match c {
                    Compiled::Current(cc) => {
                        let k = cur_edges.iter().position(|&e| e == cc.edge).unwrap();
                        cur_count[k] as f64
                    }
                    Compiled::Occupation(oc) => occ_int[oc.watch_idx],
                    Compiled::Disagreement(dd) => {
                        let k = dis_edges.iter().position(|&e| e == dd.edge).unwrap();
                        dis_acc[k]
                    }
                    Compiled::Density(df) => {
                        let raw: f64 = df
                            .sites
                            .iter()
                            .map(|&(s, h)| bit(&occ, s) as f64 * h)
                            .sum();
                        let _ = &df.h;
                        raw
                    }
                    Compiled::Kv(ki) => {
                        let k = observables
                            .kv_lens
                            .iter()
                            .position(|&l| l == ki.len)
                            .unwrap();
                        kv_int[k]
                    }
                };
                snapshots[oi].push(v);
            }
            out_idx += 1;
            continue;
        }

        if t == next_hot {
            event_count += 1;
            let k = mul_shift(rng.gen::<u64>(), observables.hot_edges.len() as u64) as usize;
            let e = observables.hot_edges[k];
            let s = e as usize;
            let v1 = bit(&occ, s);
            let v2 = bit(&occ, s + 1);
            let d = v1 ^ v2;
            if d == 1 {
                occ[s >> 6] ^= 1 << (s & 63);
                occ[(s + 1) >> 6] ^= 1 << ((s + 1) & 63);
                // Current counters: +1 for a right move.
                for (i, &ce) in cur_edges.iter().enumerate() {
                    if ce == e {
                        cur_count[i] += if v1 == 1 { 1 } else { -1 };
                    }
                }
                // Kv block sums.
                for (i, &l) in observables.kv_lens.iter().enumerate() {
                    let in_block = |s: usize| -> bool {
                        s >= kv_anchor && s < kv_anchor + l as usize
                    };
                    let mut delta = 0i32;
                    if in_block(s) {
                        delta += v2 as i32 - v1 as i32;
                    }
                    if in_block(s + 1) {
                        delta += v1 as i32 - v2 as i32;
                    }
                    kv_sums[i] = (kv_sums[i] as i32 + delta) as u32;
                }
                if e == 0 || e == last_edge {
                    boundary_touch += 1;
                }
            }
            next_hot = t + exp_sample(&mut rng, rate_hot);
        }

        if out_idx >= n_out {
            break;
        }
    }

    // Map global snapshots back to each observable's own output times and
    // apply centring.
    let mut values = Vec::with_capacity(observables.compiled.len());
    for (oi, c) in observables.compiled.iter().enumerate() {
        let idxs = &observables.out_map[oi];
        let series: Vec<f64> = match c {
            Compiled::Current(cc) => idxs
                .iter()
                .enumerate()
                .map(|(j, &k)| snapshots[oi][k] - cc.centring[j])
                .collect(),
            Compiled::Occupation(oc) => idxs
                .iter()
                .enumerate()
                .map(|(j, &k)| snapshots[oi][k] - oc.centring[j])
                .collect(),
            Compiled::Disagreement(_) => idxs.iter().map(|&k| snapshots[oi][k]).collect(),
            Compiled::Density(df) => {
                let root_n = (window.n as f64).sqrt();
                idxs.iter()
                    .enumerate()
                    .map(|(j, &k)| (snapshots[oi][k] - df.centring[j]) / root_n)
                    .collect()
            }
            Compiled::Kv(ki) => idxs
                .iter()
                .enumerate()
                .map(|(j, &k)| snapshots[oi][k] - ki.centring[j])
                .collect(),
        };
        values.push(series);
    }

    Ok(TrajectorySample { values, event_count, boundary_touch, rng_seed: seed })
}

fn s_off(window: &LatticeWindow, x: i64) -> usize {
    (x - window.x_lo) as usize
}

fn exp_sample(rng: &mut Xoshiro256PlusPlus, rate: f64) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

/// Uniform index in `[0, m)` by 128-bit multiply-shift.
fn mul_shift(r: u64, m: u64) -> u64 {
    ((r as u128 * m as u128) >> 64) as u64
}

/// Current-martingale decomposition at a bond:
/// `M(t) = Jbar(t) - n^2 \int (etabar(x) - etabar(x+1)) ds`, plus the exact
/// quadratic-variation accumulator `n^2 \int (eta(x) - eta(x+1))^2 ds`.
///
/// Requires the set to contain, with identical output times: the centred
/// current at the bond, centred occupations at both endpoints, and the bond
/// disagreement time.
pub fn martingale_decomposition(
    traj: &TrajectorySample,
    observables: &ObservableSet,
    bond: i64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let specs = observables.specs();
    let find = |pred: &dyn Fn(&ObservableKind) -> bool| -> Option<usize> {
        specs.iter().position(|s| pred(&s.kind))
    };
    let cur = find(&|k| matches!(k, ObservableKind::Current { bond: b, centred: true } if *b == bond))
        .ok_or_else(|| Error::InsufficientObservables(format!("centred current at bond {bond}")))?;
    let occ_l = find(&|k| matches!(k, ObservableKind::Occupation { site, centred: true } if *site == bond))
        .ok_or_else(|| Error::InsufficientObservables(format!("centred occupation at {bond}")))?;
    let occ_r = find(&|k| matches!(k, ObservableKind::Occupation { site, centred: true } if *site == bond + 1))
        .ok_or_else(|| {
            Error::InsufficientObservables(format!("centred occupation at {}", bond + 1))
        })?;
    let dis = find(&|k| matches!(k, ObservableKind::Disagreement { bond: b } if *b == bond))
        .ok_or_else(|| Error::InsufficientObservables(format!("disagreement at bond {bond}")))?;
    let times = &specs[cur].output_times;
    for &i in &[occ_l, occ_r, dis] {
        if specs[i].output_times != *times {
            return Err(Error::InsufficientObservables(
                "martingale decomposition needs identical output times".into(),
            ));
        }
    }
    let n2 = (observables.window.n as f64) * (observables.window.n as f64);
    let m: Vec<f64> = (0..times.len())
        .map(|k| {
            traj.values[cur][k] - n2 * (traj.values[occ_l][k] - traj.values[occ_r][k])
        })
        .collect();
    let qv: Vec<f64> = (0..times.len()).map(|k| n2 * traj.values[dis][k]).collect();
    Ok((m, qv))
}
