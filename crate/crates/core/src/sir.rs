//! Event-driven simulation of the quenched SIR chain.
//!
//! Per-vertex spins take values in `{1, 0, -1}` (infected, susceptible,
//! removed). An infected vertex recovers at rate 1; a susceptible vertex `i`
//! is infected at rate `(lambda / n) * sum_j w(i, j) 1{j infected}`. The
//! simulator is an aggregate-rate Gillespie loop: one exponential clock at
//! the total rate, then proportional selection of the transition and vertex.
//! Time-inhomogeneous tilted versions run the same loop under Ogata thinning
//! with global bounds on the tilt factors (see the tilting module).
//!
//! Per-event cost is O(n) in dense environments (infection pressures are
//! maintained incrementally) and O(1) in constant environments, where the
//! pressure of every susceptible vertex collapses to `c * I_t`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::path::{Grid, Path, Path1, Path2};
use crate::rng;

/// Model parameters: infection rate, initial spin law and horizon.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub p0: f64,
    pub p1: f64,
    pub t0: f64,
}

impl ModelParams {
    pub fn new(lambda: f64, p0: f64, p1: f64, t0: f64) -> Result<Self> {
        let p = ModelParams { lambda, p0, p1, t0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.p0 > 0.0 && self.p1 > 0.0 && self.p0 + self.p1 < 1.0) {
            return Err(Error::invalid(format!(
                "initial law needs p0, p1 > 0 and p0 + p1 < 1, got ({}, {})",
                self.p0, self.p1
            )));
        }
        if !(self.t0 > 0.0) || !self.t0.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.t0)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[repr(i8)]
pub enum Spin {
    Susceptible = 0,
    Infected = 1,
    Removed = -1,
}

/// A full spin configuration with cached class counts.
#[derive(Clone, Debug)]
pub struct EpidemicState {
    spins: Vec<Spin>,
    s_count: usize,
    i_count: usize,
}

impl EpidemicState {
    pub fn from_spins(spins: Vec<Spin>) -> Self {
        let s_count = spins.iter().filter(|s| **s == Spin::Susceptible).count();
        let i_count = spins.iter().filter(|s| **s == Spin::Infected).count();
        EpidemicState {
            spins,
            s_count,
            i_count,
        }
    }

    /// Independent spins: susceptible with probability `p0`, infected with
    /// probability `p1`, removed otherwise.
    pub fn sample_iid(n: usize, params: &ModelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if n == 0 {
            return Err(Error::invalid("need at least one vertex"));
        }
        let mut rng = rng::stream(seed, "initial-state", 0);
        let spins = (0..n)
            .map(|_| {
                let u = rng::uniform_pos(&mut rng);
                if u <= params.p0 {
                    Spin::Susceptible
                } else if u <= params.p0 + params.p1 {
                    Spin::Infected
                } else {
                    Spin::Removed
                }
            })
            .collect();
        Ok(Self::from_spins(spins))
    }

    /// Exactly `s0` susceptible and `i0` infected vertices, uniformly placed.
    pub fn sample_conditioned(n: usize, s0: usize, i0: usize, seed: u64) -> Result<Self> {
        if s0 + i0 > n {
            return Err(Error::invalid(format!(
                "conditioned counts s0 + i0 = {} exceed n = {n}",
                s0 + i0
            )));
        }
        let mut rng = rng::stream(seed, "initial-conditioned", 0);
        let mut idx: Vec<usize> = (0..n).collect();
        // Fisher-Yates prefix shuffle: the first s0 + i0 slots are a uniform sample
        for k in 0..(s0 + i0).min(n.saturating_sub(1)) {
            let j = rng.gen_range(k..n);
            idx.swap(k, j);
        }
        let mut spins = vec![Spin::Removed; n];
        for &v in idx.iter().take(s0) {
            spins[v] = Spin::Susceptible;
        }
        for &v in idx.iter().skip(s0).take(i0) {
            spins[v] = Spin::Infected;
        }
        Ok(Self::from_spins(spins))
    }

    pub fn n(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn s_count(&self) -> usize {
        self.s_count
    }

    pub fn i_count(&self) -> usize {
        self.i_count
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Infect,
    Recover,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub vertex: usize,
    pub transition: Transition,
}

/// The realized event history of one run, together with the initial spins
/// needed to replay class sets (and hence bipartite weight sums) exactly.
#[derive(Clone, Debug)]
pub struct Trajectory {
    initial: EpidemicState,
    events: Vec<Event>,
    horizon: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &EpidemicState {
        &self.initial
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.initial.n()
    }

    /// Step-function counts at the end of the horizon.
    pub fn final_counts(&self) -> (usize, usize) {
        let mut s = self.initial.s_count();
        let mut i = self.initial.i_count();
        for e in &self.events {
            match e.transition {
                Transition::Infect => {
                    s -= 1;
                    i += 1;
                }
                Transition::Recover => i -= 1,
            }
        }
        (s, i)
    }

    /// CSV export `time,vertex,transition,S,I` (counts after the event).
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "time,vertex,transition,S,I")?;
        self.write_csv_rows(w, None, &[])?;
        Ok(())
    }

    pub(crate) fn write_csv_rows(
        &self,
        w: &mut impl Write,
        replica: Option<u64>,
        extra: &[f64],
    ) -> Result<()> {
        let mut s = self.initial.s_count();
        let mut i = self.initial.i_count();
        for e in &self.events {
            match e.transition {
                Transition::Infect => {
                    s -= 1;
                    i += 1;
                }
                Transition::Recover => i -= 1,
            }
            if let Some(r) = replica {
                write!(w, "{r},")?;
            }
            let kind = match e.transition {
                Transition::Infect => "infect",
                Transition::Recover => "recover",
            };
            write!(w, "{:.16e},{},{kind},{s},{i}", e.time, e.vertex)?;
            for x in extra {
                write!(w, ",{x:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Time-dependent multiplicative rate factors for tilted simulation:
/// exponent tables on a grid (interpolated linearly, exponentiated on use)
/// plus their exact sup bounds over the horizon.
#[derive(Clone, Debug)]
pub(crate) struct RateFactors {
    /// Exponent of the recovery factor at grid nodes.
    pub exp_rec: Path1,
    /// Exponent of the infection factor at grid nodes.
    pub exp_inf: Path1,
    pub sup_rec: f64,
    pub sup_inf: f64,
}

impl RateFactors {
    pub fn recovery_factor(&self, t: f64) -> f64 {
        self.exp_rec.eval(t)[0].exp()
    }

    pub fn infection_factor(&self, t: f64) -> f64 {
        self.exp_inf.eval(t)[0].exp()
    }
}

struct Engine<'a> {
    env: &'a Environment,
    lam_over_n: f64,
    spins: Vec<Spin>,
    /// members of each class; `pos[v]` is the index of `v` in its list
    sus: Vec<u32>,
    inf: Vec<u32>,
    pos: Vec<u32>,
    /// dense mode: `pressure[v] = sum_{j infected} w(v, j)` for every v
    pressure: Vec<f64>,
    /// `gamma(S_t, I_t)`, the total infection pressure on the susceptible class
    gamma: f64,
    events_done: usize,
}

impl<'a> Engine<'a> {
    fn new(env: &'a Environment, params: &ModelParams, init: &EpidemicState) -> Self {
        let n = env.n();
        let mut sus = Vec::with_capacity(n);
        let mut inf = Vec::with_capacity(n);
        let mut pos = vec![0u32; n];
        for (v, s) in init.spins().iter().enumerate() {
            match s {
                Spin::Susceptible => {
                    pos[v] = sus.len() as u32;
                    sus.push(v as u32);
                }
                Spin::Infected => {
                    pos[v] = inf.len() as u32;
                    inf.push(v as u32);
                }
                Spin::Removed => {}
            }
        }
        let (pressure, gamma) = if let Some(c) = env.constant_value() {
            (Vec::new(), c * sus.len() as f64 * inf.len() as f64)
        } else {
            let mut pressure = vec![0.0f64; n];
            for &j in &inf {
                for (v, p) in pressure.iter_mut().enumerate() {
                    *p += env.weight(v, j as usize);
                }
            }
            let gamma = sus.iter().map(|&v| pressure[v as usize]).sum();
            (pressure, gamma)
        };
        Engine {
            env,
            lam_over_n: params.lambda / n as f64,
            spins: init.spins().to_vec(),
            sus,
            inf,
            pos,
            pressure,
            gamma,
            events_done: 0,
        }
    }

    fn infect(&mut self, v: usize) {
        debug_assert_eq!(self.spins[v], Spin::Susceptible);
        self.remove_from_sus(v);
        self.spins[v] = Spin::Infected;
        self.pos[v] = self.inf.len() as u32;
        self.inf.push(v as u32);
        if let Some(c) = self.env.constant_value() {
            self.gamma = c * self.sus.len() as f64 * self.inf.len() as f64;
        } else {
            // v stopped being susceptible: drop its pressure from gamma
            self.gamma -= self.pressure[v];
            // v became infected: raise everyone's pressure
            for u in 0..self.spins.len() {
                let w = self.env.weight(u, v);
                self.pressure[u] += w;
                if self.spins[u] == Spin::Susceptible {
                    self.gamma += w;
                }
            }
            self.gamma = self.gamma.max(0.0);
        }
        self.after_event();
    }

    fn recover(&mut self, v: usize) {
        debug_assert_eq!(self.spins[v], Spin::Infected);
        let idx = self.pos[v] as usize;
        let last = *self.inf.last().expect("recover from non-empty class");
        self.inf.swap_remove(idx);
        if idx < self.inf.len() {
            self.pos[last as usize] = idx as u32;
        }
        self.spins[v] = Spin::Removed;
        if let Some(c) = self.env.constant_value() {
            self.gamma = c * self.sus.len() as f64 * self.inf.len() as f64;
        } else {
            for u in 0..self.spins.len() {
                let w = self.env.weight(u, v);
                self.pressure[u] -= w;
                if self.spins[u] == Spin::Susceptible {
                    self.gamma -= w;
                }
            }
            self.gamma = self.gamma.max(0.0);
        }
        self.after_event();
    }

    fn remove_from_sus(&mut self, v: usize) {
        let idx = self.pos[v] as usize;
        let last = *self.sus.last().expect("remove from non-empty class");
        self.sus.swap_remove(idx);
        if idx < self.sus.len() {
            self.pos[last as usize] = idx as u32;
        }
    }

    fn after_event(&mut self) {
        self.events_done += 1;
        #[cfg(debug_assertions)]
        {
            if self.events_done % 1024 == 0 {
                let drift = self.pressure_drift();
                debug_assert!(
                    drift < 1e-6 * self.spins.len() as f64,
                    "pressure drift {drift} too large"
                );
            }
        }
    }

    /// Largest deviation between the maintained pressures / gamma and a
    /// from-scratch recomputation.
    fn pressure_drift(&self) -> f64 {
        if self.env.constant_value().is_some() {
            return 0.0;
        }
        let n = self.spins.len();
        let mut worst = 0.0f64;
        let mut gamma = 0.0;
        for v in 0..n {
            let direct: f64 = self
                .inf
                .iter()
                .map(|&j| self.env.weight(v, j as usize))
                .sum();
            worst = worst.max((direct - self.pressure[v]).abs());
            if self.spins[v] == Spin::Susceptible {
                gamma += direct;
            }
        }
        worst.max((gamma - self.gamma).abs())
    }

    /// Pick a susceptible vertex with probability proportional to its
    /// pressure (uniformly, in constant environments).
    fn pick_susceptible(&self, rng: &mut ChaCha8Rng) -> usize {
        if self.env.constant_value().is_some() {
            return self.sus[rng.gen_range(0..self.sus.len())] as usize;
        }
        let target = rng::uniform_pos(rng) * self.gamma;
        let mut acc = 0.0;
        for &v in &self.sus {
            acc += self.pressure[v as usize];
            if acc >= target {
                return v as usize;
            }
        }
        // guard against fp drift in the running sum
        self.sus[self.sus.len() - 1] as usize
    }
}

/// Run the chain to the horizon. With `factors = None` this is the plain
/// chain; otherwise rates are multiplied by the time-dependent factors and
/// events are generated by thinning against their sup bounds.
pub(crate) fn run(
    env: &Environment,
    params: &ModelParams,
    init: &EpidemicState,
    seed: u64,
    factors: Option<&RateFactors>,
) -> Result<Trajectory> {
    params.validate()?;
    if env.n() != init.n() {
        return Err(Error::invalid(format!(
            "environment has n = {} but initial state has n = {}",
            env.n(),
            init.n()
        )));
    }
    if let Some(f) = factors {
        let g = f.exp_rec.grid();
        if g.t_end() < params.t0 - 1e-12 {
            return Err(Error::invalid(format!(
                "tilt grid ends at {} before the horizon {}",
                g.t_end(),
                params.t0
            )));
        }
    }
    let mut rng = rng::stream(seed, "trajectory", 0);
    let mut engine = Engine::new(env, params, init);
    let (sup_rec, sup_inf) = factors.map_or((1.0, 1.0), |f| (f.sup_rec, f.sup_inf));
    let mut events = Vec::new();
    let mut t = 0.0f64;
    loop {
        if engine.inf.is_empty() {
            break; // absorbing: the trajectory extends flat to the horizon
        }
        let rec_bound = sup_rec * engine.inf.len() as f64;
        let inf_bound = sup_inf * engine.lam_over_n * engine.gamma;
        let bound = rec_bound + inf_bound;
        t += rng::exp_sample(&mut rng, bound);
        if t > params.t0 {
            break;
        }
        let u = rng::uniform_pos(&mut rng) * bound;
        if u <= rec_bound {
            if let Some(f) = factors {
                let ratio = f.recovery_factor(t) / sup_rec;
                debug_assert!(ratio > 0.0 && ratio <= 1.0 + 1e-12);
                if rng::uniform_pos(&mut rng) > ratio {
                    continue;
                }
            }
            let v = engine.inf[rng.gen_range(0..engine.inf.len())] as usize;
            engine.recover(v);
            events.push(Event {
                time: t,
                vertex: v,
                transition: Transition::Recover,
            });
        } else {
            if let Some(f) = factors {
                let ratio = f.infection_factor(t) / sup_inf;
                debug_assert!(ratio > 0.0 && ratio <= 1.0 + 1e-12);
                if rng::uniform_pos(&mut rng) > ratio {
                    continue;
                }
            }
            let v = engine.pick_susceptible(&mut rng);
            engine.infect(v);
            events.push(Event {
                time: t,
                vertex: v,
                transition: Transition::Infect,
            });
        }
    }
    Ok(Trajectory {
        initial: init.clone(),
        events,
        horizon: params.t0,
    })
}

/// Statistically exact realization of the quenched chain up to the horizon.
pub fn simulate(
    env: &Environment,
    params: &ModelParams,
    init: &EpidemicState,
    seed: u64,
) -> Result<Trajectory> {
    run(env, params, init, seed, None)
}

/// Normalized counts `(S_t / n, I_t / n)` sampled (right-continuously) on a
/// grid.
pub fn counts_path(traj: &Trajectory, grid: Grid) -> Result<Path2> {
    if grid.t_end() > traj.horizon() + 1e-12 {
        return Err(Error::invalid(format!(
            "grid horizon {} exceeds trajectory horizon {}",
            grid.t_end(),
            traj.horizon()
        )));
    }
    let n = traj.n() as f64;
    let mut s = traj.initial.s_count();
    let mut i = traj.initial.i_count();
    let mut next = 0usize;
    let events = traj.events();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let t = grid.node(k);
        while next < events.len() && events[next].time <= t {
            match events[next].transition {
                Transition::Infect => {
                    s -= 1;
                    i += 1;
                }
                Transition::Recover => i -= 1,
            }
            next += 1;
        }
        values.push([s as f64 / n, i as f64 / n]);
    }
    Path::new(grid, values)
}

/// Centered, `a_n`-scaled fluctuation path `nu_t = (counts_t - n x_hat_t) / a_n`.
pub fn nu_path(traj: &Trajectory, fluid: &Path2, a_n: f64, grid: Grid) -> Result<Path2> {
    let counts = counts_path(traj, grid)?;
    let n = traj.n() as f64;
    let mut values = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let c = counts.values()[k];
        let x = fluid.eval(grid.node(k));
        values.push([
            (n * c[0] - n * x[0]) / a_n,
            (n * c[1] - n * x[1]) / a_n,
        ]);
    }
    Path::new(grid, values)
}

/// Walk the inter-event intervals of a trajectory, reporting the constant
/// state on each: `f(t_lo, t_hi, s_count, i_count, gamma)`. The final
/// interval always extends to the horizon.
pub(crate) fn for_each_interval(
    traj: &Trajectory,
    env: &Environment,
    mut f: impl FnMut(f64, f64, usize, usize, f64),
) {
    let n = traj.n();
    let constant = env.constant_value();
    let mut s = traj.initial.s_count();
    let mut i = traj.initial.i_count();
    // dense-mode cross sums: w_inf[v] = sum over infected, w_sus[v] = sum over susceptible
    let (mut w_inf, mut w_sus, mut in_s, mut in_i) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut gamma = if let Some(c) = constant {
        c * s as f64 * i as f64
    } else {
        in_s = traj
            .initial
            .spins()
            .iter()
            .map(|sp| *sp == Spin::Susceptible)
            .collect();
        in_i = traj
            .initial
            .spins()
            .iter()
            .map(|sp| *sp == Spin::Infected)
            .collect();
        w_inf = vec![0.0f64; n];
        w_sus = vec![0.0f64; n];
        for v in 0..n {
            for u in 0..n {
                let w = env.weight(v, u);
                if in_i[u] {
                    w_inf[v] += w;
                }
                if in_s[u] {
                    w_sus[v] += w;
                }
            }
        }
        (0..n).filter(|&v| in_s[v]).map(|v| w_inf[v]).sum()
    };
    let mut t_lo = 0.0f64;
    for e in traj.events() {
        if e.time > t_lo {
            f(t_lo, e.time, s, i, gamma);
        }
        let v = e.vertex;
        match e.transition {
            Transition::Infect => {
                s -= 1;
                i += 1;
                if let Some(c) = constant {
                    gamma = c * s as f64 * i as f64;
                } else {
                    // v moves S -> I: gamma(S, I) gains w_sus[v] (v joins I
                    // against the remaining S) and loses w_inf[v]
                    gamma += w_sus[v] - w_inf[v];
                    in_s[v] = false;
                    in_i[v] = true;
                    for u in 0..n {
                        let w = env.weight(u, v);
                        w_inf[u] += w;
                        w_sus[u] -= w;
                    }
                }
            }
            Transition::Recover => {
                i -= 1;
                if let Some(c) = constant {
                    gamma = c * s as f64 * i as f64;
                } else {
                    gamma -= w_sus[v];
                    in_i[v] = false;
                    for u in 0..n {
                        w_inf[u] -= env.weight(u, v);
                    }
                }
            }
        }
        gamma = gamma.max(0.0);
        t_lo = e.time;
    }
    if traj.horizon() > t_lo {
        f(t_lo, traj.horizon(), s, i, gamma);
    }
}

/// Mean-field discrepancy along the realized trajectory:
/// `eps_u = (gamma(S_u, I_u) - E(rho) S_u I_u) / n^2`, sampled on a grid.
pub fn epsilon_path(traj: &Trajectory, env: &Environment, grid: Grid) -> Result<Path1> {
    if grid.t_end() > traj.horizon() + 1e-12 {
        return Err(Error::invalid("grid horizon exceeds trajectory horizon"));
    }
    let n2 = (traj.n() * traj.n()) as f64;
    let mean = env.dist().mean();
    let mut values = vec![[0.0f64]; grid.steps() + 1];
    if env.constant_value() == Some(mean) {
        return Path::new(grid, values);
    }
    let mut k = 0usize;
    for_each_interval(traj, env, |t_lo, t_hi, s, i, gamma| {
        let eps = (gamma - mean * (s * i) as f64) / n2;
        while k <= grid.steps() {
            let t = grid.node(k);
            // node belongs to this interval under right-continuity
            if t >= t_lo - 1e-15 && (t < t_hi || (k == grid.steps() && t <= t_hi + 1e-12)) {
                values[k] = [eps];
                k += 1;
            } else {
                break;
            }
        }
    });
    Path::new(grid, values)
}

/// Largest absolute discrepancy over the trajectory's event intervals.
pub fn max_epsilon(traj: &Trajectory, env: &Environment) -> f64 {
    let n2 = (traj.n() * traj.n()) as f64;
    let mean = env.dist().mean();
    if env.constant_value() == Some(mean) {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for_each_interval(traj, env, |_, _, s, i, gamma| {
        worst = worst.max((gamma - mean * (s * i) as f64).abs() / n2);
    });
    worst
}
