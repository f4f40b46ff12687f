//! Continuous-time Monte Carlo (Gillespie direct method) for long lattices.
//!
//! Event rates live in a binary sum tree, so selection and updates are
//! `O(log E)` and the total rate is recomputed exactly from its children after
//! every change. A jump across bond `b` only alters the rates of bonds
//! `b-2..=b+2` and of the reservoir flips touching those sites.

use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GklsError, Result};
use crate::exec::Exec;
use crate::ising::{current_limit, fugacity_for_density, spectrum};
use crate::model::{encode_state, BulkKinetics, Configuration, MeasureParams, Model, Side, Topology};

/// One elementary transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    /// Particle on site `bond` moves to `bond + 1` (1-based, periodic wrap).
    JumpRight {
        bond: usize,
    },
    /// Particle on site `bond + 1` moves to `bond`.
    JumpLeft {
        bond: usize,
    },
    Insert {
        side: Side,
    },
    Remove {
        side: Side,
    },
}

/// All transitions with nonzero rate out of `cfg`.
pub fn enabled_events(model: &Model, cfg: &Configuration) -> Result<Vec<(Event, f64)>> {
    if cfg.len() != model.len() || cfg.topology() != model.topology() {
        return Err(GklsError::InvalidParameter(
            "configuration does not fit the model".into(),
        ));
    }
    let occ = cfg.occupations();
    let mut out = Vec::new();
    for b in 0..model.bond_count() {
        let (r, l) = model.bond_rates(occ, b);
        if r > 0.0 {
            out.push((Event::JumpRight { bond: b + 1 }, r));
        }
        if l > 0.0 {
            out.push((Event::JumpLeft { bond: b + 1 }, l));
        }
    }
    if model.topology() == Topology::Open {
        for (side, site) in [(Side::Left, 0), (Side::Right, model.len() - 1)] {
            let q = model.reservoir_rate(occ, side);
            if q > 0.0 {
                out.push((
                    if occ[site] == 0 {
                        Event::Insert { side }
                    } else {
                        Event::Remove { side }
                    },
                    q,
                ));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct SumTree {
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(leaves: usize) -> Self {
        let size = leaves.next_power_of_two().max(1);
        SumTree {
            size,
            nodes: vec![0.0; 2 * size],
        }
    }

    fn set(&mut self, i: usize, v: f64) {
        let mut p = self.size + i;
        self.nodes[p] = v;
        p /= 2;
        while p >= 1 {
            self.nodes[p] = self.nodes[2 * p] + self.nodes[2 * p + 1];
            p /= 2;
        }
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.size + i]
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf whose cumulative interval contains `u`, `0 <= u < total`.
    fn find(&self, mut u: f64) -> usize {
        let mut p = 1;
        while p < self.size {
            let left = self.nodes[2 * p];
            if u < left {
                p *= 2;
            } else {
                u -= left;
                p = 2 * p + 1;
            }
        }
        p - self.size
    }
}

/// A single trajectory.
#[derive(Debug, Clone)]
pub struct Simulation {
    model: Model,
    occ: Vec<u8>,
    tree: SumTree,
    time: f64,
    events: u64,
    rng: ChaCha8Rng,
}

impl Simulation {
    pub fn new(model: Model, initial: &Configuration, seed: u64) -> Result<Self> {
        Self::with_rng(model, initial, ChaCha8Rng::seed_from_u64(seed))
    }

    fn with_rng(model: Model, initial: &Configuration, rng: ChaCha8Rng) -> Result<Self> {
        if initial.len() != model.len() || initial.topology() != model.topology() {
            return Err(GklsError::InvalidParameter(
                "initial configuration does not fit the model".into(),
            ));
        }
        let slots = model.bond_count() + 2;
        let mut sim = Simulation {
            model,
            occ: initial.occupations().to_vec(),
            tree: SumTree::new(slots),
            time: 0.0,
            events: 0,
            rng,
        };
        for e in 0..slots {
            sim.refresh(e);
        }
        Ok(sim)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn occupations(&self) -> &[u8] {
        &self.occ
    }

    pub fn configuration(&self) -> Configuration {
        Configuration::new(self.occ.clone(), self.model.topology()).expect("valid by construction")
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// Stored rate of every event slot: bonds `0..B`, then left and right reservoir.
    pub fn slot_rates(&self) -> Vec<f64> {
        (0..self.model.bond_count() + 2).map(|e| self.tree.get(e)).collect()
    }

    /// The same slot rates recomputed from scratch.
    pub fn recomputed_rates(&self) -> Vec<f64> {
        (0..self.model.bond_count() + 2).map(|e| self.slot_rate(e)).collect()
    }

    fn slot_rate(&self, e: usize) -> f64 {
        let bonds = self.model.bond_count();
        if e < bonds {
            let (r, l) = self.model.bond_rates(&self.occ, e);
            r + l
        } else if e == bonds {
            self.model.reservoir_rate(&self.occ, Side::Left)
        } else {
            self.model.reservoir_rate(&self.occ, Side::Right)
        }
    }

    fn refresh(&mut self, e: usize) {
        let v = self.slot_rate(e);
        self.tree.set(e, v);
    }

    /// Draw the waiting time and the next event without applying it.
    /// `None` when no event is enabled.
    fn draw(&mut self) -> Option<(usize, f64)> {
        let total = self.tree.total();
        if !(total > 0.0) {
            return None;
        }
        let dt = -(1.0 - self.rng.random::<f64>()).ln() / total;
        loop {
            let e = self.tree.find(self.rng.random::<f64>() * total);
            // rounding can land on an empty leaf at the very end of the range
            if self.tree.get(e) > 0.0 {
                return Some((e, dt));
            }
        }
    }

    /// Apply the event in slot `e`, refresh the affected rates and report
    /// the event with the 0-based sites it changed.
    fn apply(&mut self, e: usize) -> (Event, [usize; 2], usize) {
        let n = self.model.len();
        let bonds = self.model.bond_count();
        let periodic = self.model.topology() == Topology::Periodic;
        let (event, sites, count) = if e < bonds {
            let (a, b) = (e, (e + 1) % n);
            let right = self.occ[a] == 1;
            self.occ.swap(a, b);
            let ev = if right {
                Event::JumpRight { bond: e + 1 }
            } else {
                Event::JumpLeft { bond: e + 1 }
            };
            (ev, [a, b], 2)
        } else {
            let (side, s) = if e == bonds {
                (Side::Left, 0)
            } else {
                (Side::Right, n - 1)
            };
            let ev = if self.occ[s] == 0 {
                Event::Insert { side }
            } else {
                Event::Remove { side }
            };
            self.occ[s] ^= 1;
            (ev, [s, s], 1)
        };
        // bonds whose four-site stencil touches a changed site
        for &s in &sites[..count] {
            for j in s as isize - 2..=s as isize + 1 {
                let b = if periodic {
                    j.rem_euclid(n as isize) as usize
                } else if j >= 0 && (j as usize) < bonds {
                    j as usize
                } else {
                    continue;
                };
                self.refresh(b);
            }
        }
        if !periodic {
            if sites[..count].iter().any(|&s| s <= 1) {
                self.refresh(bonds);
            }
            if sites[..count].iter().any(|&s| s + 2 >= n) {
                self.refresh(bonds + 1);
            }
        }
        self.events += 1;
        (event, sites, count)
    }

    /// Advance by one event. Returns the event and the waiting time, or
    /// `None` in an absorbing state.
    pub fn step(&mut self) -> Option<(Event, f64)> {
        let (e, dt) = self.draw()?;
        self.time += dt;
        let (ev, _, _) = self.apply(e);
        Some((ev, dt))
    }
}

/// Starting configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Empty,
    Full,
    Bernoulli(f64),
    Explicit(Configuration),
    /// `N` particles at uniformly random positions; rings or closed segments only.
    FixedNumber(usize),
}

/// Length of a run phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Span {
    Time(f64),
    Events(u64),
}

impl Span {
    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            Span::Time(t) => t > 0.0 && t.is_finite(),
            Span::Events(n) => n > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(GklsError::InvalidParameter(format!("{what} must be positive")))
        }
    }
}

/// Burn-in used when none is given: `max(10 L^2, 10^6)` events.
pub fn default_burn_in(len: usize) -> Span {
    Span::Events((10 * len * len).max(1_000_000) as u64)
}

pub const MIN_BATCHES: usize = 8;
pub const DEFAULT_BATCHES: usize = 16;
/// Largest lattice for which the per-state occupation histogram is kept.
pub const MAX_HISTOGRAM_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: Model,
    pub initial: Initial,
    /// `None` selects [`default_burn_in`].
    pub burn_in: Option<Span>,
    pub measure: Span,
    pub n_batches: usize,
    pub seed: u64,
    /// Record the fraction of time spent in every state (`L <= 20`).
    pub state_histogram: bool,
}

impl SimConfig {
    pub fn new(model: Model, measure: Span, seed: u64) -> Self {
        SimConfig {
            model,
            initial: Initial::Empty,
            burn_in: None,
            measure,
            n_batches: DEFAULT_BATCHES,
            seed,
            state_histogram: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_batches < MIN_BATCHES {
            return Err(GklsError::InvalidParameter(format!(
                "n_batches = {} is below the minimum {MIN_BATCHES}",
                self.n_batches
            )));
        }
        self.measure.validate("measurement span")?;
        if let Some(b) = &self.burn_in {
            if let Span::Time(t) = *b {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(GklsError::InvalidParameter("burn-in time must be >= 0".into()));
                }
            }
        }
        if self.state_histogram && self.model.len() > MAX_HISTOGRAM_LEN {
            return Err(GklsError::Resource {
                requested: self.model.len(),
                min: 1,
                max: MAX_HISTOGRAM_LEN,
            });
        }
        match &self.initial {
            Initial::Bernoulli(p) if !(0.0..=1.0).contains(p) => Err(GklsError::InvalidParameter(format!(
                "Bernoulli density {p} outside [0, 1]"
            ))),
            Initial::FixedNumber(n) if *n > self.model.len() => Err(GklsError::InvalidParameter(format!(
                "{n} particles do not fit on {} sites",
                self.model.len()
            ))),
            Initial::FixedNumber(_) if self.model.has_reservoirs() => Err(GklsError::InvalidParameter(
                "a fixed particle number needs a ring or closed boundaries".into(),
            )),
            Initial::Explicit(c) if c.len() != self.model.len() || c.topology() != self.model.topology() => Err(
                GklsError::InvalidParameter("explicit configuration does not fit the model".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Mean and batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// `|mean - target|` in units of the standard error (infinite if the
    /// error is zero and the values differ).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.stderr
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    /// `rho_k`, sites `1..=L`.
    pub density_profile: Vec<Estimate>,
    pub mean_density: Estimate,
    /// Net rightward flux per unit time across every bond.
    pub bond_currents: Vec<Estimate>,
    /// Net insertion rate at the left end and net removal rate at the right end.
    pub reservoir_fluxes: [Estimate; 2],
    /// Density averaged over the bulk window.
    pub bulk_density: Estimate,
    /// Bond current averaged over the bulk window.
    pub bulk_current: Estimate,
    /// `<eta (1-eta')>`, `<eta (1-eta') eta''>`, `<eta eta' (1-eta'')>` over the bulk window.
    pub nn_10: Estimate,
    pub nnn_101: Estimate,
    pub nnn_110: Estimate,
    /// 0-based first site and length of the bulk window.
    pub window: (usize, usize),
    pub total_events: u64,
    pub measured_events: u64,
    pub measured_time: f64,
    /// Fraction of measured time in each state, when requested.
    pub state_histogram: Option<Vec<f64>>,
    /// The run reached a state without enabled events.
    pub absorbed: bool,
    pub wall_time_secs: f64,
}

impl Observables {
    /// Everything except the wall-clock time.
    pub fn same_statistics(&self, other: &Observables) -> bool {
        let mut a = self.clone();
        a.wall_time_secs = other.wall_time_secs;
        a == *other
    }
}

#[derive(Debug, Clone)]
struct Batch {
    duration: f64,
    site: Vec<f64>,
    n_int: f64,
    win_n: f64,
    s10: f64,
    s101: f64,
    s110: f64,
    jumps: Vec<i64>,
    left_in: i64,
    right_out: i64,
}

impl Batch {
    fn new(len: usize, bonds: usize) -> Self {
        Batch {
            duration: 0.0,
            site: vec![0.0; len],
            n_int: 0.0,
            win_n: 0.0,
            s10: 0.0,
            s101: 0.0,
            s110: 0.0,
            jumps: vec![0; bonds],
            left_in: 0,
            right_out: 0,
        }
    }
}

/// Bookkeeping for time integrals during measurement.
struct Recorder {
    len: usize,
    periodic: bool,
    window_start: usize,
    window_len: usize,
    in_window: Vec<bool>,
    /// triple start sites whose three sites all lie in the window
    triple_start: Vec<bool>,
    last_change: Vec<f64>,
    particles: i64,
    win_particles: i64,
    s10: i64,
    s101: i64,
    s110: i64,
    batch_start: f64,
    cur: Batch,
    done: Vec<Batch>,
    hist: Option<Vec<f64>>,
    state: usize,
}

impl Recorder {
    fn new(model: &Model, occ: &[u8], t0: f64, histogram: bool) -> Self {
        let n = model.len();
        let periodic = model.topology() == Topology::Periodic;
        let (ws, wl) = if periodic { (0, n) } else { (n / 4, (3 * n / 4) - n / 4) };
        let in_window: Vec<bool> = (0..n).map(|k| k >= ws && k < ws + wl).collect();
        let triple_start: Vec<bool> = (0..n)
            .map(|k| if periodic { true } else { k >= ws && k + 2 < ws + wl })
            .collect();
        let mut r = Recorder {
            len: n,
            periodic,
            window_start: ws,
            window_len: wl,
            in_window,
            triple_start,
            last_change: vec![t0; n],
            particles: occ.iter().map(|&v| v as i64).sum(),
            win_particles: 0,
            s10: 0,
            s101: 0,
            s110: 0,
            batch_start: t0,
            cur: Batch::new(n, model.bond_count()),
            done: Vec::new(),
            hist: histogram.then(|| vec![0.0; 1 << n]),
            state: if histogram { encode_state(occ) } else { 0 },
        };
        r.win_particles = (0..n).filter(|&k| r.in_window[k]).map(|k| occ[k] as i64).sum();
        for k in 0..n {
            if r.triple_start[k] {
                let (a, b, c) = r.triple(occ, k);
                r.s10 += a;
                r.s101 += b;
                r.s110 += c;
            }
        }
        r
    }

    /// Contributions of the triple starting at `k`: `(eta_k vbar_{k+1}, 101, 110)`.
    #[inline]
    fn triple(&self, occ: &[u8], k: usize) -> (i64, i64, i64) {
        let n = self.len;
        let (a, b, c) = (occ[k] as i64, occ[(k + 1) % n] as i64, occ[(k + 2) % n] as i64);
        (a * (1 - b), a * (1 - b) * c, a * b * (1 - c))
    }

    fn affected_starts(&self, site: usize, out: &mut [usize; 6], cnt: &mut usize) {
        let n = self.len as isize;
        for d in 0..3 {
            let k = site as isize - d;
            let k = if self.periodic {
                k.rem_euclid(n) as usize
            } else if k >= 0 {
                k as usize
            } else {
                continue;
            };
            if self.triple_start[k] && !out[..*cnt].contains(&k) {
                out[*cnt] = k;
                *cnt += 1;
            }
        }
    }

    /// Integrate the constant state over `[t_from, t_to)`.
    #[inline]
    fn integrate(&mut self, dt: f64) {
        self.cur.n_int += self.particles as f64 * dt;
        self.cur.win_n += self.win_particles as f64 * dt;
        self.cur.s10 += self.s10 as f64 * dt;
        self.cur.s101 += self.s101 as f64 * dt;
        self.cur.s110 += self.s110 as f64 * dt;
        if let Some(h) = self.hist.as_mut() {
            h[self.state] += dt;
        }
    }

    fn flush_site(&mut self, occ: &[u8], k: usize, t: f64) {
        if occ[k] == 1 {
            self.cur.site[k] += t - self.last_change[k];
        }
        self.last_change[k] = t;
    }

    fn close_batch(&mut self, occ: &[u8], t: f64) {
        for k in 0..self.len {
            self.flush_site(occ, k, t);
        }
        self.cur.duration = t - self.batch_start;
        let fresh = Batch::new(self.len, self.cur.jumps.len());
        self.done.push(std::mem::replace(&mut self.cur, fresh));
        self.batch_start = t;
    }
}

/// Draw the starting configuration.
fn initial_configuration(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Configuration> {
    let n = cfg.model.len();
    let top = cfg.model.topology();
    match &cfg.initial {
        Initial::Empty => Configuration::empty(n, top),
        Initial::Full => Configuration::new(vec![1; n], top),
        Initial::Bernoulli(p) => Configuration::new((0..n).map(|_| (rng.random::<f64>() < *p) as u8).collect(), top),
        Initial::Explicit(c) => Ok(c.clone()),
        Initial::FixedNumber(k) => {
            let mut occ = vec![0u8; n];
            for i in sample(rng, n, *k) {
                occ[i] = 1;
            }
            Configuration::new(occ, top)
        }
    }
}

fn run_phase_events(sim: &mut Simulation, events: u64) -> bool {
    for _ in 0..events {
        if sim.step().is_none() {
            return false;
        }
    }
    true
}

fn run_phase_time(sim: &mut Simulation, duration: f64) -> bool {
    let end = sim.time + duration;
    loop {
        let Some((e, dt)) = sim.draw() else {
            sim.time = end;
            return false;
        };
        if sim.time + dt >= end {
            // memorylessness: the pending event is discarded at the boundary
            sim.time = end;
            return true;
        }
        sim.time += dt;
        sim.apply(e);
    }
}

/// Run burn-in and measurement for one configuration.
pub fn run(config: &SimConfig) -> Result<Observables> {
    config.validate()?;
    let wall = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = initial_configuration(config, &mut rng)?;
    let mut sim = Simulation::with_rng(config.model, &init, rng)?;
    let n = config.model.len();
    let bonds = config.model.bond_count();

    let burn = config.burn_in.unwrap_or_else(|| default_burn_in(n));
    let mut alive = match burn {
        Span::Events(k) => run_phase_events(&mut sim, k),
        Span::Time(t) => t == 0.0 || run_phase_time(&mut sim, t),
    };

    let t0 = sim.time;
    let ev0 = sim.events;
    let mut rec = Recorder::new(&config.model, &sim.occ, t0, config.state_histogram);
    let nb = config.n_batches;
    let mut starts = [0usize; 6];

    match config.measure {
        Span::Time(total) => {
            let width = total / nb as f64;
            let mut batch_end = t0 + width;
            let end = t0 + total;
            loop {
                let next = if alive { sim.draw() } else { None };
                let (e, t_next) = match next {
                    Some((e, dt)) => (Some(e), sim.time + dt),
                    None => {
                        alive = false;
                        (None, f64::INFINITY)
                    }
                };
                // close every batch boundary that falls before the next event
                while t_next >= batch_end && rec.done.len() < nb {
                    rec.integrate(batch_end - sim.time);
                    sim.time = batch_end;
                    rec.close_batch(&sim.occ, batch_end);
                    batch_end = if rec.done.len() + 1 == nb {
                        end
                    } else {
                        t0 + width * (rec.done.len() + 1) as f64
                    };
                }
                if rec.done.len() == nb {
                    break;
                }
                let e = e.expect("finite event time");
                rec.integrate(t_next - sim.time);
                sim.time = t_next;
                record_event(&mut sim, &mut rec, e, &mut starts);
            }
        }
        Span::Events(total) => {
            let per = (total / nb as u64).max(1);
            for b in 0..nb {
                let quota = if b + 1 == nb {
                    total.saturating_sub(per * (nb as u64 - 1)).max(1)
                } else {
                    per
                };
                for _ in 0..quota {
                    let Some((e, dt)) = (if alive { sim.draw() } else { None }) else {
                        alive = false;
                        break;
                    };
                    rec.integrate(dt);
                    sim.time += dt;
                    record_event(&mut sim, &mut rec, e, &mut starts);
                }
                if !alive && sim.time <= rec.batch_start {
                    // frozen: give the batch unit duration of the frozen state
                    rec.integrate(1.0);
                    sim.time = rec.batch_start + 1.0;
                }
                rec.close_batch(&sim.occ, sim.time);
            }
        }
    }

    Ok(summarize(
        rec,
        sim.events,
        sim.events - ev0,
        sim.time - t0,
        !alive,
        bonds,
        wall.elapsed().as_secs_f64(),
    ))
}

fn record_event(sim: &mut Simulation, rec: &mut Recorder, e: usize, starts: &mut [usize; 6]) {
    let t = sim.time;
    let n = rec.len;
    let bonds = sim.model.bond_count();
    let changed: [usize; 2] = if e < bonds {
        [e, (e + 1) % n]
    } else if e == bonds {
        [0, 0]
    } else {
        [n - 1, n - 1]
    };
    let count = if e < bonds { 2 } else { 1 };
    let mut cnt = 0;
    for &s in &changed[..count] {
        rec.affected_starts(s, starts, &mut cnt);
        rec.flush_site(&sim.occ, s, t);
    }
    for &k in &starts[..cnt] {
        let (a, b, c) = rec.triple(&sim.occ, k);
        rec.s10 -= a;
        rec.s101 -= b;
        rec.s110 -= c;
    }
    let (ev, _, _) = sim.apply(e);
    for &k in &starts[..cnt] {
        let (a, b, c) = rec.triple(&sim.occ, k);
        rec.s10 += a;
        rec.s101 += b;
        rec.s110 += c;
    }
    match ev {
        Event::JumpRight { bond } => rec.cur.jumps[bond - 1] += 1,
        Event::JumpLeft { bond } => rec.cur.jumps[bond - 1] -= 1,
        Event::Insert { side } => {
            rec.particles += 1;
            match side {
                Side::Left => rec.cur.left_in += 1,
                Side::Right => rec.cur.right_out -= 1,
            }
        }
        Event::Remove { side } => {
            rec.particles -= 1;
            match side {
                Side::Left => rec.cur.left_in -= 1,
                Side::Right => rec.cur.right_out += 1,
            }
        }
    }
    if !matches!(ev, Event::JumpRight { .. } | Event::JumpLeft { .. })
        || rec.in_window[changed[0]] != rec.in_window[changed[1]]
    {
        rec.win_particles = (rec.window_start..rec.window_start + rec.window_len)
            .map(|k| sim.occ[k] as i64)
            .sum();
    }
    debug_assert_eq!(rec.particles, sim.occ.iter().map(|&v| v as i64).sum::<i64>());
    if rec.hist.is_some() {
        for &s in &changed[..count] {
            rec.state ^= 1 << s;
        }
    }
}

/// Ratio estimator over batches with a batch-means standard error.
fn estimate(values: impl Iterator<Item = (f64, f64)> + Clone) -> Estimate {
    let (num, den): (f64, f64) = values.clone().fold((0.0, 0.0), |acc, (v, d)| (acc.0 + v, acc.1 + d));
    let mean = num / den;
    let means: Vec<f64> = values.map(|(v, d)| v / d).collect();
    let b = means.len() as f64;
    let avg = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (b - 1.0);
    Estimate {
        mean,
        stderr: (var / b).sqrt(),
    }
}

fn summarize(
    rec: Recorder,
    total_events: u64,
    measured_events: u64,
    measured_time: f64,
    absorbed: bool,
    bonds: usize,
    wall: f64,
) -> Observables {
    let n = rec.len;
    let batches = &rec.done;
    let by = |f: &dyn Fn(&Batch) -> f64| estimate(batches.iter().map(move |b| (f(b), b.duration)));
    let density_profile = (0..n).map(|k| by(&|b| b.site[k])).collect();
    let bond_currents = (0..bonds).map(|k| by(&|b| b.jumps[k] as f64)).collect();
    let (ws, wl) = (rec.window_start, rec.window_len);
    let triples = (0..n).filter(|&k| rec.triple_start[k]).count() as f64;
    let win_bonds: Vec<usize> = if rec.periodic {
        (0..bonds).collect()
    } else {
        (ws..ws + wl - 1).collect()
    };
    let wb = win_bonds.len() as f64;
    let hist = rec.hist.as_ref().map(|h| {
        let total: f64 = h.iter().sum();
        h.iter().map(|v| v / total).collect()
    });
    Observables {
        density_profile,
        mean_density: by(&|b| b.n_int / n as f64),
        bond_currents,
        reservoir_fluxes: [by(&|b| b.left_in as f64), by(&|b| b.right_out as f64)],
        bulk_density: by(&|b| b.win_n / wl as f64),
        bulk_current: by(&|b| win_bonds.iter().map(|&k| b.jumps[k] as f64).sum::<f64>() / wb),
        nn_10: by(&|b| b.s10 / triples),
        nnn_101: by(&|b| b.s101 / triples),
        nnn_110: by(&|b| b.s110 / triples),
        window: (ws, wl),
        total_events,
        measured_events,
        measured_time,
        state_histogram: hist,
        absorbed,
        wall_time_secs: wall,
    }
}

/// Seeds for independent replicas derived from one base seed.
pub fn replica_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|i| base.wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
        .collect()
}

/// Run independent configurations; results follow the input order.
pub fn run_many(configs: &[SimConfig], exec: Exec) -> Vec<Result<Observables>> {
    exec.map(configs, run)
}

/// Settings shared by every point of [`current_vs_density_scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub len: usize,
    pub burn_in: Option<Span>,
    pub measure: Span,
    pub n_batches: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub x: f64,
    pub particles: usize,
    /// `particles / len`, exact on the ring.
    pub density: f64,
    pub current: Estimate,
    /// Thermodynamic-limit current at `density`.
    pub exact: f64,
}

/// Simulated current against density along a fugacity grid.
///
/// Each point runs a ring of `settings.len` sites holding `round(rho(x) L)`
/// particles. The stationary law of the ring is the Ising measure restricted to
/// that particle number, so the points sit on the grand-canonical curve up to
/// `O(1/L)` corrections.
pub fn current_vs_density_scan(
    kin: &BulkKinetics,
    x_grid: &[f64],
    settings: &ScanSettings,
    exec: Exec,
) -> Result<Vec<ScanPoint>> {
    kin.validate()?;
    let y = kin.interaction();
    let len = settings.len;
    let mut configs = Vec::with_capacity(x_grid.len());
    let mut meta = Vec::with_capacity(x_grid.len());
    for (&x, seed) in x_grid.iter().zip(replica_seeds(settings.seed, x_grid.len())) {
        let m = MeasureParams::new(x, y)?;
        let rho = spectrum(&m).density_limit();
        let n = ((rho * len as f64).round() as usize).clamp(1, len - 1);
        let density = n as f64 / len as f64;
        let x_star = fugacity_for_density(density, y)?;
        let exact = current_limit(kin, &spectrum(&MeasureParams { x: x_star, y }))?;
        let mut cfg = SimConfig::new(Model::periodic(len, *kin)?, settings.measure, seed);
        cfg.initial = Initial::FixedNumber(n);
        cfg.burn_in = settings.burn_in;
        cfg.n_batches = settings.n_batches;
        cfg.validate()?;
        configs.push(cfg);
        meta.push((x, n, density, exact));
    }
    run_many(&configs, exec)
        .into_iter()
        .zip(meta)
        .map(|(obs, (x, particles, density, exact))| {
            Ok(ScanPoint {
                x,
                particles,
                density,
                current: obs?.bulk_current,
                exact,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundaryRates, BulkKinetics};

    #[test]
    fn sum_tree_selects_by_rate() {
        let mut t = SumTree::new(5);
        for (i, v) in [1.0, 0.0, 2.0, 3.0, 0.5].iter().enumerate() {
            t.set(i, *v);
        }
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.99), 2);
        assert_eq!(t.find(3.0), 3);
        assert_eq!(t.find(6.2), 4);
    }

    #[test]
    fn enabled_event_examples() {
        let b = BoundaryRates {
            alpha1: 0.5,
            delta1: 0.25,
            ..Default::default()
        };
        let model = Model::open(6, BulkKinetics::tasep(), b).unwrap();
        let ev = enabled_events(&model, &Configuration::empty(6, Topology::Open).unwrap()).unwrap();
        assert_eq!(
            ev,
            vec![
                (Event::Insert { side: Side::Left }, 0.5),
                (Event::Insert { side: Side::Right }, 0.25)
            ]
        );
        let ring = Model::periodic(8, BulkKinetics::tasep()).unwrap();
        let cfg = Configuration::parse("10101010", Topology::Periodic).unwrap();
        let ev = enabled_events(&ring, &cfg).unwrap();
        assert_eq!(ev.len(), 4);
        assert!(ev
            .iter()
            .all(|&(e, r)| matches!(e, Event::JumpRight { .. }) && r == 1.0));
    }

    #[test]
    fn local_updates_match_full_recomputation() {
        let kin = BulkKinetics::new(1.3, 0.7, 0.4, -0.5, 0.3).unwrap();
        let b = BoundaryRates::from_array([0.3, 0.9, 0.2, 1.4, 0.7, 0.1, 0.5, 0.8]).unwrap();
        for model in [Model::open(9, kin, b).unwrap(), Model::periodic(7, kin).unwrap()] {
            let init = Configuration::new(
                vec![1, 0, 1, 1, 0, 0, 1, 0, 1][..model.len()].to_vec(),
                model.topology(),
            )
            .unwrap();
            let mut sim = Simulation::new(model, &init, 7).unwrap();
            for _ in 0..1000 {
                sim.step().unwrap();
                assert_eq!(sim.slot_rates(), sim.recomputed_rates());
            }
        }
    }

    #[test]
    fn single_event_fires() {
        let model = Model::periodic(4, BulkKinetics::tasep()).unwrap();
        let init = Configuration::parse("1000", Topology::Periodic).unwrap();
        let mut sim = Simulation::new(model, &init, 1).unwrap();
        assert_eq!(sim.step().unwrap().0, Event::JumpRight { bond: 1 });
        assert_eq!(sim.configuration().to_string(), "0100");
    }

    #[test]
    fn frozen_dynamics_keeps_initial_profile() {
        let kin = BulkKinetics::new(0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let model = Model::open(6, kin, BoundaryRates::closed()).unwrap();
        let init = Configuration::parse("101100", Topology::Open).unwrap();
        for measure in [Span::Time(5.0), Span::Events(100)] {
            let mut cfg = SimConfig::new(model, measure, 3);
            cfg.initial = Initial::Explicit(init.clone());
            let obs = run(&cfg).unwrap();
            assert!(obs.absorbed);
            let prof: Vec<f64> = obs.density_profile.iter().map(|e| e.mean).collect();
            assert_eq!(prof, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn validation() {
        let model = Model::open(
            6,
            BulkKinetics::tasep(),
            BoundaryRates {
                alpha1: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        let mut cfg = SimConfig::new(model, Span::Events(100), 0);
        cfg.n_batches = 4;
        assert!(run(&cfg).is_err());
        cfg.n_batches = 8;
        cfg.initial = Initial::FixedNumber(3);
        assert!(run(&cfg).is_err());
    }

    #[test]
    fn time_batches_cover_measurement() {
        let model = Model::periodic(10, BulkKinetics::tasep()).unwrap();
        let mut cfg = SimConfig::new(model, Span::Time(50.0), 11);
        cfg.initial = Initial::FixedNumber(5);
        cfg.burn_in = Some(Span::Events(1000));
        let obs = run(&cfg).unwrap();
        assert!((obs.measured_time - 50.0).abs() < 1e-9);
        assert!((obs.mean_density.mean - 0.5).abs() < 1e-12);
        assert!(obs.mean_density.stderr < 1e-12);
    }
}
