//! Rare-event probability estimation on path space.
//!
//! Events are sup-norm balls around a target path, measured with the metric
//! `sup_t (|delta s| + |delta i|)` on the target's grid. The plain estimator
//! counts hits over independent replicas; the importance-sampling estimators
//! simulate the exponentially tilted chain whose typical path IS the target
//! (the tilt comes from the control representation at LDP scale and from the
//! pointwise forcing solve at MDP scale) and average the inverse martingale
//! weights over hits, entirely in log domain.
//!
//! Empirical rates `-(n / a_n^2) log P_hat` (with `a_n = n` at LDP scale) are
//! reported next to the theoretical rate of the target so that slopes over a
//! range of `n` can be compared against the deviation principles.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::environment::{run_replicas, Environment, WeightDistribution};
use crate::error::{Error, Result};
use crate::fluid;
use crate::path::{Grid, Path2};
use crate::rates;
use crate::rng;
use crate::sir::{self, EpidemicState, ModelParams};
use crate::stats;
use crate::tilting::{self, TiltSpec};

/// Annealed runs draw a fresh environment per replica; quenched runs share
/// the single environment generated from the stored seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EnvironmentMode {
    Annealed,
    Quenched { seed: u64 },
}

/// Which scaled path the event constrains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "space", rename_all = "snake_case")]
pub enum PathSpace {
    /// The normalized counts path.
    Ldp,
    /// The centered fluctuation path with speed `a_n = n^a_exponent`.
    Mdp { a_exponent: f64 },
}

/// A sup-norm ball event around a target path.
#[derive(Clone, Debug)]
pub struct EventSpec {
    pub target: Path2,
    pub radius: f64,
    pub space: PathSpace,
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(Error::invalid(format!(
                "event radius must be positive, got {}",
                self.radius
            )));
        }
        if let PathSpace::Mdp { a_exponent } = self.space {
            if !(a_exponent > 0.5 && a_exponent < 1.0) {
                return Err(Error::invalid(format!(
                    "a_n exponent must lie in (0.5, 1), got {a_exponent}"
                )));
            }
        }
        Ok(())
    }

    fn a_n(&self, n: usize) -> f64 {
        match self.space {
            PathSpace::Ldp => n as f64,
            PathSpace::Mdp { a_exponent } => (n as f64).powf(a_exponent),
        }
    }
}

/// How the initial configuration is drawn for the tilted estimators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Conditioning {
    /// Condition exactly when the target starts away from the typical point.
    #[default]
    Auto,
    ForceIid,
    ForceConditioned,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IsOptions {
    pub conditioning: Conditioning,
    /// Normalize by the total weight instead of the replica count
    /// (biased; variance diagnostic only).
    pub self_normalized: bool,
}

/// One estimation result.
#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub estimator: &'static str,
    pub n: usize,
    pub a_n: f64,
    pub replicas: usize,
    pub hit_count: u64,
    pub is_estimate: f64,
    pub log_estimate: f64,
    pub std_error: f64,
    pub ess: f64,
    pub rate_empirical: f64,
    pub rate_theoretical: Option<f64>,
    pub environment_mode: EnvironmentMode,
    pub max_eps: f64,
}

/// Batch CSV in the stable column order.
pub fn write_estimate_csv(reports: &[EstimateReport], w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "n,a_n,replicas,hits,log_estimate,std_error,rate_empirical,rate_theoretical,ess"
    )?;
    for r in reports {
        let theo = r
            .rate_theoretical
            .map_or_else(|| "nan".to_string(), |v| format!("{v}"));
        writeln!(
            w,
            "{},{},{},{},{},{},{},{theo},{}",
            r.n,
            r.a_n,
            r.replicas,
            r.hit_count,
            r.log_estimate,
            r.std_error,
            r.rate_empirical,
            r.ess
        )?;
    }
    Ok(())
}

fn environment_for(
    mode: EnvironmentMode,
    shared: &Option<Arc<Environment>>,
    n: usize,
    dist: WeightDistribution,
    seed: u64,
    replica: u64,
) -> Result<Arc<Environment>> {
    match mode {
        EnvironmentMode::Quenched { .. } => {
            Ok(shared.as_ref().expect("built before the replica loop").clone())
        }
        EnvironmentMode::Annealed => Ok(Arc::new(Environment::sample(
            n,
            dist,
            rng::derive_seed(seed, "env", replica),
        )?)),
    }
}

fn shared_environment(
    mode: EnvironmentMode,
    n: usize,
    dist: WeightDistribution,
) -> Result<Option<Arc<Environment>>> {
    match mode {
        EnvironmentMode::Quenched { seed } => {
            Ok(Some(Arc::new(Environment::sample(n, dist, seed)?)))
        }
        EnvironmentMode::Annealed => Ok(None),
    }
}

/// Direct frequency estimator of `P(path in ball)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_plain(
    mode: EnvironmentMode,
    params: &ModelParams,
    dist: WeightDistribution,
    event: &EventSpec,
    n: usize,
    replicas: usize,
    seed: u64,
    threads: usize,
) -> Result<EstimateReport> {
    params.validate()?;
    event.validate()?;
    if replicas == 0 {
        return Err(Error::invalid("need replicas >= 1"));
    }
    let grid = event.target.grid();
    if grid.t_end() > params.t0 + 1e-12 {
        return Err(Error::invalid("event grid extends beyond the horizon"));
    }
    let a_n = event.a_n(n);
    let fluid = match event.space {
        PathSpace::Ldp => None,
        PathSpace::Mdp { .. } => Some(fluid::fluid_ode(params, dist.mean(), fine_grid(grid))?),
    };
    let shared = shared_environment(mode, n, dist)?;
    let outcomes: Vec<(bool, f64)> = run_replicas(replicas, threads, |rep| {
        let env = environment_for(mode, &shared, n, dist, seed, rep)?;
        let init = EpidemicState::sample_iid(n, params, rng::derive_seed(seed, "init", rep))?;
        let traj = sir::simulate(&env, params, &init, rng::derive_seed(seed, "traj", rep))?;
        let path = match &fluid {
            None => sir::counts_path(&traj, grid)?,
            Some(f) => sir::nu_path(&traj, f, a_n, grid)?,
        };
        let hit = path.sup_sum_dist(&event.target)? <= event.radius;
        Ok((hit, sir::max_epsilon(&traj, &env)))
    })?;
    let hit_count = outcomes.iter().filter(|(h, _)| *h).count() as u64;
    let max_eps = outcomes.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let p_hat = hit_count as f64 / replicas as f64;
    let std_error = (p_hat * (1.0 - p_hat) / replicas as f64).sqrt();
    let log_estimate = p_hat.ln();
    let rate_theoretical = theoretical_rate(params, dist, event);
    Ok(EstimateReport {
        estimator: "plain",
        n,
        a_n,
        replicas,
        hit_count,
        is_estimate: p_hat,
        log_estimate,
        std_error,
        ess: hit_count as f64,
        rate_empirical: -(n as f64) / (a_n * a_n) * log_estimate,
        rate_theoretical,
        environment_mode: mode,
        max_eps,
    })
}

fn fine_grid(grid: Grid) -> Grid {
    let steps = grid.steps().max(2000);
    Grid::new(grid.t_end(), steps).expect("valid by construction")
}

fn theoretical_rate(
    params: &ModelParams,
    dist: WeightDistribution,
    event: &EventSpec,
) -> Option<f64> {
    let mean = dist.mean();
    match event.space {
        PathSpace::Ldp => {
            let dynamic = rates::i_dyn(&event.target, params, mean).ok()?;
            if !dynamic.finite {
                return None;
            }
            let f0 = event.target.first();
            Some(rates::i_ini(f0, params) + dynamic.dynamic_part)
        }
        PathSpace::Mdp { .. } => {
            let linz = fluid::linearize(params, mean, fine_grid(event.target.grid())).ok()?;
            let dynamic = rates::j_dyn(&event.target, &linz).ok()?;
            if !dynamic.finite {
                return None;
            }
            let initial = rates::j_ini(event.target.first(), &linz.m0()).ok()?;
            Some(initial + dynamic.dynamic_part)
        }
    }
}

/// Assemble the report from per-replica `(hit, log_weight)` outcomes plus a
/// constant log-prefactor (the conditioned-initial-state probability).
#[allow(clippy::too_many_arguments)]
fn weighted_report(
    estimator: &'static str,
    outcomes: &[(bool, f64, f64)],
    log_prefactor: f64,
    n: usize,
    a_n: f64,
    replicas: usize,
    self_normalized: bool,
    rate_theoretical: Option<f64>,
    mode: EnvironmentMode,
) -> EstimateReport {
    let hit_lws: Vec<f64> = outcomes
        .iter()
        .filter(|(h, _, _)| *h)
        .map(|(_, lw, _)| *lw)
        .collect();
    let hit_count = hit_lws.len() as u64;
    let max_eps = outcomes.iter().map(|(_, _, e)| *e).fold(0.0, f64::max);
    let ess = stats::effective_sample_size(&hit_lws);
    let (log_estimate, std_error) = if hit_lws.is_empty() {
        (f64::NEG_INFINITY, 0.0)
    } else {
        let shift = hit_lws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // shifted weights over ALL replicas (misses contribute zeros)
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for lw in &hit_lws {
            let w = (lw - shift).exp();
            sum += w;
            sumsq += w * w;
        }
        let r = replicas as f64;
        let mean = sum / r;
        let var = (sumsq / r - mean * mean).max(0.0) * r / (r - 1.0).max(1.0);
        let log_est = if self_normalized {
            // normalize by the total weight over all replicas
            let all: Vec<f64> = outcomes.iter().map(|(_, lw, _)| *lw).collect();
            log_prefactor + stats::log_sum_exp(&hit_lws) - stats::log_sum_exp(&all)
        } else {
            log_prefactor + shift + mean.ln()
        };
        let se = (log_prefactor + shift).exp() * (var / r).sqrt();
        (log_est, se)
    };
    EstimateReport {
        estimator,
        n,
        a_n,
        replicas,
        hit_count,
        is_estimate: log_estimate.exp(),
        log_estimate,
        std_error,
        ess,
        rate_empirical: -(n as f64) / (a_n * a_n) * log_estimate,
        rate_theoretical,
        environment_mode: mode,
        max_eps,
    }
}

/// Importance-sampling estimator at LDP scale. The tilt is derived from the
/// target's control representation (`i_g = -log h1`, `s_g = -log h1 - log h2`).
/// When the target starts away from `(p0, p1)` the initial counts are pinned
/// to `floor(n f_0)` and the estimate carries the exact multinomial
/// log-probability of that configuration.
#[allow(clippy::too_many_arguments)]
pub fn estimate_is_ldp(
    mode: EnvironmentMode,
    params: &ModelParams,
    dist: WeightDistribution,
    event: &EventSpec,
    n: usize,
    replicas: usize,
    seed: u64,
    threads: usize,
    opts: IsOptions,
) -> Result<EstimateReport> {
    params.validate()?;
    event.validate()?;
    if event.space != PathSpace::Ldp {
        return Err(Error::invalid("estimate_is_ldp needs an LDP-space event"));
    }
    if replicas == 0 {
        return Err(Error::invalid("need replicas >= 1"));
    }
    let grid = event.target.grid();
    if grid.t_end() > params.t0 + 1e-12 {
        return Err(Error::invalid("event grid extends beyond the horizon"));
    }
    let mean = dist.mean();
    let controls = fluid::controls_from_path(&event.target, params, mean)?;
    let g = controls.to_tilt()?;
    let tilt = TiltSpec::new_ldp(g);

    let f0 = event.target.first();
    let condition = match opts.conditioning {
        Conditioning::ForceIid => false,
        Conditioning::ForceConditioned => true,
        Conditioning::Auto => {
            (f0[0] - params.p0).abs() + (f0[1] - params.p1).abs() > 1e-9
        }
    };
    let (init_counts, log_prefactor) = if condition {
        let s0 = (n as f64 * f0[0]).floor().max(0.0) as usize;
        let i0 = (n as f64 * f0[1]).floor().max(0.0) as usize;
        if s0 + i0 > n {
            return Err(Error::invalid("target initial point leaves no room in the simplex"));
        }
        let lp = stats::multinomial_log_prob(n as u64, s0 as u64, i0 as u64, params.p0, params.p1);
        (Some((s0, i0)), lp)
    } else {
        (None, 0.0)
    };

    let shared = shared_environment(mode, n, dist)?;
    let outcomes: Vec<(bool, f64, f64)> = run_replicas(replicas, threads, |rep| {
        let env = environment_for(mode, &shared, n, dist, seed, rep)?;
        let init_seed = rng::derive_seed(seed, "init", rep);
        let init = match init_counts {
            Some((s0, i0)) => EpidemicState::sample_conditioned(n, s0, i0, init_seed)?,
            None => EpidemicState::sample_iid(n, params, init_seed)?,
        };
        let wt = tilting::simulate_tilted(
            &env,
            params,
            &init,
            &tilt,
            rng::derive_seed(seed, "traj", rep),
        )?;
        let path = sir::counts_path(&wt.traj, grid)?;
        let hit = path.sup_sum_dist(&event.target)? <= event.radius;
        Ok((hit, wt.log_weight, wt.max_eps))
    })?;
    let rate_theoretical = theoretical_rate(params, dist, event);
    Ok(weighted_report(
        "is_ldp",
        &outcomes,
        log_prefactor,
        n,
        event.a_n(n),
        replicas,
        opts.self_normalized,
        rate_theoretical,
        mode,
    ))
}

/// Importance-sampling estimator at MDP scale. The forcing `g*` solves
/// `sigma_t g*_t = f'_t - b_t f_t` pointwise; the chain is tilted by the
/// jump factors `exp((a_n/n) g* . l)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_is_mdp(
    mode: EnvironmentMode,
    params: &ModelParams,
    dist: WeightDistribution,
    event: &EventSpec,
    n: usize,
    replicas: usize,
    seed: u64,
    threads: usize,
    opts: IsOptions,
) -> Result<EstimateReport> {
    params.validate()?;
    event.validate()?;
    let PathSpace::Mdp { .. } = event.space else {
        return Err(Error::invalid("estimate_is_mdp needs an MDP-space event"));
    };
    if replicas == 0 {
        return Err(Error::invalid("need replicas >= 1"));
    }
    let grid = event.target.grid();
    if grid.t_end() > params.t0 + 1e-12 {
        return Err(Error::invalid("event grid extends beyond the horizon"));
    }
    let mean = dist.mean();
    let a_n = event.a_n(n);
    let linz = fluid::linearize(params, mean, fine_grid(grid))?;
    let g_star = fluid::forcing_from_path(&linz, &event.target)?;
    let tilt = TiltSpec::new_mdp(g_star, a_n, n)?;
    let fluid_path = linz.fluid().clone();

    let f0 = event.target.first();
    let condition = match opts.conditioning {
        Conditioning::ForceIid => false,
        Conditioning::ForceConditioned => true,
        Conditioning::Auto => f0[0].abs() + f0[1].abs() > 1e-9,
    };
    let (init_counts, log_prefactor) = if condition {
        let s0 = (n as f64 * params.p0 + a_n * f0[0]).floor().max(0.0) as usize;
        let i0 = (n as f64 * params.p1 + a_n * f0[1]).floor().max(0.0) as usize;
        if s0 + i0 > n {
            return Err(Error::invalid("target initial fluctuation leaves the simplex"));
        }
        let lp = stats::multinomial_log_prob(n as u64, s0 as u64, i0 as u64, params.p0, params.p1);
        (Some((s0, i0)), lp)
    } else {
        (None, 0.0)
    };

    let shared = shared_environment(mode, n, dist)?;
    let outcomes: Vec<(bool, f64, f64)> = run_replicas(replicas, threads, |rep| {
        let env = environment_for(mode, &shared, n, dist, seed, rep)?;
        let init_seed = rng::derive_seed(seed, "init", rep);
        let init = match init_counts {
            Some((s0, i0)) => EpidemicState::sample_conditioned(n, s0, i0, init_seed)?,
            None => EpidemicState::sample_iid(n, params, init_seed)?,
        };
        let wt = tilting::simulate_tilted_mdp(
            &env,
            params,
            &init,
            &fluid_path,
            &tilt,
            rng::derive_seed(seed, "traj", rep),
        )?;
        let nu = sir::nu_path(&wt.traj, &fluid_path, a_n, grid)?;
        let hit = nu.sup_sum_dist(&event.target)? <= event.radius;
        Ok((hit, wt.log_weight, wt.max_eps))
    })?;
    let rate_theoretical = theoretical_rate(params, dist, event);
    Ok(weighted_report(
        "is_mdp",
        &outcomes,
        log_prefactor,
        n,
        a_n,
        replicas,
        opts.self_normalized,
        rate_theoretical,
        mode,
    ))
}

/// Least-squares slope of `log P_hat` against the speed `a_n^2 / n`
/// (which is `n` itself at LDP scale). The slope estimates the negated
/// rate-function value of the event.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn rate_slope(reports: &[EstimateReport]) -> Result<SlopeFit> {
    if reports.len() < 3 {
        return Err(Error::invalid(format!(
            "rate_slope needs at least 3 points, got {}",
            reports.len()
        )));
    }
    let mut xs = Vec::with_capacity(reports.len());
    let mut ys = Vec::with_capacity(reports.len());
    for r in reports {
        if !r.log_estimate.is_finite() {
            return Err(Error::refused(format!(
                "report at n = {} has no finite log-estimate (zero hits)",
                r.n
            )));
        }
        xs.push(r.a_n * r.a_n / r.n as f64);
        ys.push(r.log_estimate);
    }
    let (slope, intercept, r_squared) = stats::linear_fit(&xs, &ys);
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}
