//! Exponential change of measure along trajectories.
//!
//! For a test path `g`, the chain weighted by the exponential martingale
//! `Lambda_t(g)` behaves like the original chain with the recovery rate
//! multiplied by `exp(g . l1) = exp(-i_g)` and the per-edge infection rate by
//! `exp(g . l2) = exp(i_g - s_g)`. At moderate-deviation scale the analogous
//! martingale `Xi_t(g)` produces jump factors `exp((a_n / n) g . l)`.
//!
//! Both log-weights are evaluated exactly along a realized trajectory: the
//! counts are constant between events, so every term reduces to boundary
//! values plus integrals of `exp(linear)` over grid cells, which have closed
//! forms. `simulate_tilted` draws from the tilted law directly by Ogata
//! thinning against the tabulated sup bounds of the factors, and returns the
//! inverse weight so that reweighted averages recover plain expectations.

use std::io::Write;

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::path::{Path, Path1, Path2};
use crate::sir::{self, EpidemicState, ModelParams, RateFactors, Trajectory};

/// Which deviation scale a tilt lives on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "scale", rename_all = "snake_case")]
pub enum TiltScale {
    Ldp,
    Mdp { a_n: f64, n: usize },
}

/// A tilt path with tabulated jump-factor exponents and their sup bounds.
#[derive(Clone, Debug)]
pub struct TiltSpec {
    g: Path2,
    scale: TiltScale,
    /// exponent of the recovery factor at grid nodes (`g . l1`, scaled)
    exp_rec: Path1,
    /// exponent of the infection factor at grid nodes (`g . l2`, scaled)
    exp_inf: Path1,
    sup_rec: f64,
    sup_inf: f64,
}

impl TiltSpec {
    fn build(g: Path2, scale: TiltScale) -> Self {
        let factor = match scale {
            TiltScale::Ldp => 1.0,
            TiltScale::Mdp { a_n, n } => a_n / n as f64,
        };
        let grid = g.grid();
        let mut rec = Vec::with_capacity(grid.steps() + 1);
        let mut inf = Vec::with_capacity(grid.steps() + 1);
        for v in g.values() {
            rec.push([factor * -v[1]]);
            inf.push([factor * (v[1] - v[0])]);
        }
        // the exponent is piecewise linear, so exp attains its sup at nodes
        let sup_of = |p: &[[f64; 1]]| p.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
        let exp_rec = Path::new(grid, rec).expect("same grid");
        let exp_inf = Path::new(grid, inf).expect("same grid");
        let sup_rec = sup_of(exp_rec.values()).exp();
        let sup_inf = sup_of(exp_inf.values()).exp();
        TiltSpec {
            g,
            scale,
            exp_rec,
            exp_inf,
            sup_rec,
            sup_inf,
        }
    }

    pub fn new_ldp(g: Path2) -> Self {
        Self::build(g, TiltScale::Ldp)
    }

    pub fn new_mdp(g: Path2, a_n: f64, n: usize) -> Result<Self> {
        if !(a_n > 0.0) || n == 0 {
            return Err(Error::invalid(format!("need a_n > 0 and n > 0, got ({a_n}, {n})")));
        }
        Ok(Self::build(g, TiltScale::Mdp { a_n, n }))
    }

    /// The conventional moderate-deviation speed `a_n = n^exponent`.
    pub fn new_mdp_with_exponent(g: Path2, n: usize, a_exponent: f64) -> Result<Self> {
        if !(a_exponent > 0.5 && a_exponent < 1.0) {
            return Err(Error::invalid(format!(
                "a_n exponent must lie in (0.5, 1), got {a_exponent}"
            )));
        }
        Self::new_mdp(g, (n as f64).powf(a_exponent), n)
    }

    pub fn g(&self) -> &Path2 {
        &self.g
    }

    pub fn scale(&self) -> TiltScale {
        self.scale
    }

    pub fn recovery_factor(&self, t: f64) -> f64 {
        self.exp_rec.eval(t)[0].exp()
    }

    pub fn infection_factor(&self, t: f64) -> f64 {
        self.exp_inf.eval(t)[0].exp()
    }

    pub fn sup_recovery_factor(&self) -> f64 {
        self.sup_rec
    }

    pub fn sup_infection_factor(&self) -> f64 {
        self.sup_inf
    }

    pub(crate) fn rate_factors(&self) -> RateFactors {
        RateFactors {
            exp_rec: self.exp_rec.clone(),
            exp_inf: self.exp_inf.clone(),
            sup_rec: self.sup_rec,
            sup_inf: self.sup_inf,
        }
    }
}

/// `int_0^len exp(p(t)) dt` for `p` linear from `pa` to `pb`.
fn integral_exp_linear(pa: f64, pb: f64, len: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    let x = pb - pa;
    if x == 0.0 {
        len * pa.exp()
    } else {
        len * pa.exp() * x.exp_m1() / x
    }
}

/// `int_a^b exp(E(t)) dt` for a piecewise-linear exponent table, split
/// exactly at grid nodes.
fn integral_factor(exponent: &Path1, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let grid = exponent.grid();
    let steps = grid.steps();
    let scale = steps as f64 / grid.t_end();
    let k_lo = ((a * scale).floor() as usize).min(steps - 1);
    let k_hi = ((b * scale).ceil() as usize).clamp(k_lo + 1, steps);
    let mut total = 0.0;
    for k in k_lo..k_hi {
        let lo = grid.node(k).max(a);
        let hi = grid.node(k + 1).min(b);
        if hi > lo {
            total += integral_exp_linear(exponent.eval(lo)[0], exponent.eval(hi)[0], hi - lo);
        }
    }
    total
}

fn check_tilt_covers(tilt: &TiltSpec, t0: f64) -> Result<()> {
    if tilt.g.grid().t_end() < t0 - 1e-12 {
        return Err(Error::invalid(format!(
            "tilt grid ends at {} before the horizon {t0}",
            tilt.g.grid().t_end()
        )));
    }
    Ok(())
}

/// Exact log of the large-deviation martingale `Lambda_{T0}(g)` along a
/// trajectory:
///
/// `log Lambda = (S,I)_{T0} . g_{T0} - (S,I)_0 . g_0 - int (S,I)_t . g'_t dt
///  - int (e^{g.l1} - 1) I_t + (e^{g.l2} - 1) (lambda/n) gamma(S_t, I_t) dt`.
///
/// The counts are constant between events; the remaining time integrals of
/// the smooth factors are evaluated in closed form per grid cell, which meets
/// the 1e-10 per-interval accuracy budget by construction.
pub fn log_lambda(
    traj: &Trajectory,
    env: &Environment,
    params: &ModelParams,
    tilt: &TiltSpec,
) -> Result<f64> {
    if tilt.scale != TiltScale::Ldp {
        return Err(Error::invalid("log_lambda needs an LDP-scale tilt"));
    }
    check_tilt_covers(tilt, params.t0)?;
    if env.n() != traj.n() {
        return Err(Error::invalid("environment and trajectory disagree on n"));
    }
    let lam_over_n = params.lambda / traj.n() as f64;
    let g = &tilt.g;
    let dot = |counts: (usize, usize), v: [f64; 2]| counts.0 as f64 * v[0] + counts.1 as f64 * v[1];

    let mut stieltjes = 0.0;
    let mut compensator = 0.0;
    sir::for_each_interval(traj, env, |t_lo, t_hi, s, i, gamma| {
        stieltjes += dot((s, i), g.eval(t_hi)) - dot((s, i), g.eval(t_lo));
        let rec = integral_factor(&tilt.exp_rec, t_lo, t_hi) - (t_hi - t_lo);
        let inf = integral_factor(&tilt.exp_inf, t_lo, t_hi) - (t_hi - t_lo);
        compensator += i as f64 * rec + lam_over_n * gamma * inf;
    });
    let (s_end, i_end) = traj.final_counts();
    let initial = (traj.initial().s_count(), traj.initial().i_count());
    let boundary = dot((s_end, i_end), g.eval(params.t0)) - dot(initial, g.eval(0.0));
    Ok(boundary - stieltjes - compensator)
}

/// Exact log of the moderate-deviation martingale `Xi_{T0}(g)`:
/// boundary values of `zeta_g(t, eta) = (a_n/n) g_t . ((S,I) - n x_hat_t)`,
/// minus its piecewise-smooth time variation between events, minus the
/// generator compensator with jump exponents `(a_n/n) g . l`.
pub fn log_xi(
    traj: &Trajectory,
    env: &Environment,
    params: &ModelParams,
    fluid: &Path2,
    tilt: &TiltSpec,
) -> Result<f64> {
    let TiltScale::Mdp { a_n, n } = tilt.scale else {
        return Err(Error::invalid("log_xi needs an MDP-scale tilt"));
    };
    if n != traj.n() {
        return Err(Error::invalid(format!(
            "tilt was built for n = {n} but the trajectory has n = {}",
            traj.n()
        )));
    }
    check_tilt_covers(tilt, params.t0)?;
    if fluid.grid().t_end() < params.t0 - 1e-12 {
        return Err(Error::invalid("fluid path does not cover the horizon"));
    }
    if env.n() != traj.n() {
        return Err(Error::invalid("environment and trajectory disagree on n"));
    }
    let nf = traj.n() as f64;
    let scale = a_n / nf;
    let lam_over_n = params.lambda / nf;
    let g = &tilt.g;
    let zeta = |t: f64, s: usize, i: usize| -> f64 {
        let gv = g.eval(t);
        let x = fluid.eval(t);
        scale * (gv[0] * (s as f64 - nf * x[0]) + gv[1] * (i as f64 - nf * x[1]))
    };
    let mut smooth_variation = 0.0;
    let mut compensator = 0.0;
    sir::for_each_interval(traj, env, |t_lo, t_hi, s, i, gamma| {
        smooth_variation += zeta(t_hi, s, i) - zeta(t_lo, s, i);
        let rec = integral_factor(&tilt.exp_rec, t_lo, t_hi) - (t_hi - t_lo);
        let inf = integral_factor(&tilt.exp_inf, t_lo, t_hi) - (t_hi - t_lo);
        compensator += i as f64 * rec + lam_over_n * gamma * inf;
    });
    let (s_end, i_end) = traj.final_counts();
    let boundary = zeta(params.t0, s_end, i_end)
        - zeta(0.0, traj.initial().s_count(), traj.initial().i_count());
    Ok(boundary - smooth_variation - compensator)
}

/// A trajectory drawn from a tilted law together with its log importance
/// weight (`log(dP/dP_tilted)` along the realized path) and the largest
/// mean-field discrepancy encountered.
#[derive(Clone, Debug)]
pub struct WeightedTrajectory {
    pub traj: Trajectory,
    pub log_weight: f64,
    pub max_eps: f64,
}

impl WeightedTrajectory {
    /// Trajectory CSV with the constant `log_weight,max_eps` columns added.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "time,vertex,transition,S,I,log_weight,max_eps")?;
        self.traj
            .write_csv_rows(w, None, &[self.log_weight, self.max_eps])
    }
}

/// Exact draw from the LDP-tilted chain by thinning; the weight is
/// `-log Lambda`, so `exp(log_weight)`-reweighted averages are unbiased for
/// plain expectations.
pub fn simulate_tilted(
    env: &Environment,
    params: &ModelParams,
    init: &EpidemicState,
    tilt: &TiltSpec,
    seed: u64,
) -> Result<WeightedTrajectory> {
    if tilt.scale != TiltScale::Ldp {
        return Err(Error::invalid("simulate_tilted needs an LDP-scale tilt"));
    }
    let traj = sir::run(env, params, init, seed, Some(&tilt.rate_factors()))?;
    let log_weight = -log_lambda(&traj, env, params, tilt)?;
    let max_eps = sir::max_epsilon(&traj, env);
    Ok(WeightedTrajectory {
        traj,
        log_weight,
        max_eps,
    })
}

/// Exact draw from the MDP-tilted chain; the weight is `-log Xi`.
pub fn simulate_tilted_mdp(
    env: &Environment,
    params: &ModelParams,
    init: &EpidemicState,
    fluid: &Path2,
    tilt: &TiltSpec,
    seed: u64,
) -> Result<WeightedTrajectory> {
    if !matches!(tilt.scale, TiltScale::Mdp { .. }) {
        return Err(Error::invalid("simulate_tilted_mdp needs an MDP-scale tilt"));
    }
    let traj = sir::run(env, params, init, seed, Some(&tilt.rate_factors()))?;
    let log_weight = -log_xi(&traj, env, params, fluid, tilt)?;
    let max_eps = sir::max_epsilon(&traj, env);
    Ok(WeightedTrajectory {
        traj,
        log_weight,
        max_eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::WeightDistribution;
    use crate::fluid;
    use crate::path::Grid;
    use crate::stats;

    fn const_env(n: usize) -> Environment {
        Environment::sample(n, WeightDistribution::Constant { value: 1.0 }, 0).unwrap()
    }

    fn smooth_g(grid: Grid) -> Path2 {
        Path::from_fn(grid, |t| {
            [0.2 * (std::f64::consts::PI * t / grid.t_end()).sin(), -0.3]
        })
    }

    #[test]
    fn integral_exp_linear_matches_closed_forms() {
        // constant exponent
        assert!((integral_exp_linear(1.0, 1.0, 2.0) - 2.0 * 1.0f64.exp()).abs() < 1e-12);
        // int_0^1 e^t dt = e - 1
        assert!((integral_exp_linear(0.0, 1.0, 1.0) - 1.0f64.exp_m1()).abs() < 1e-12);
        assert_eq!(integral_exp_linear(0.3, 0.7, 0.0), 0.0);
    }

    #[test]
    fn integral_factor_agrees_with_fine_riemann_sum() {
        let grid = Grid::new(2.0, 40).unwrap();
        let e: Path1 = Path::from_fn(grid, |t| [0.4 * (3.0 * t).sin()]);
        let (a, b) = (0.137, 1.731);
        let exact = integral_factor(&e, a, b);
        let m = 400_000;
        let h = (b - a) / m as f64;
        let riemann: f64 = (0..m)
            .map(|k| (e.eval(a + (k as f64 + 0.5) * h)[0]).exp() * h)
            .sum();
        assert!((exact - riemann).abs() < 1e-9, "{exact} vs {riemann}");
    }

    #[test]
    fn tilt_factors_stay_below_their_sup_bounds() {
        let grid = Grid::new(2.0, 137).unwrap();
        let tilt = TiltSpec::new_ldp(smooth_g(grid));
        for k in 0..=4000 {
            let t = 2.0 * k as f64 / 4000.0;
            let rec = tilt.recovery_factor(t);
            let inf = tilt.infection_factor(t);
            assert!(rec > 0.0 && inf > 0.0);
            assert!(rec <= tilt.sup_recovery_factor() * (1.0 + 1e-12));
            assert!(inf <= tilt.sup_infection_factor() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_tilt_has_exactly_zero_log_weight() {
        let env = const_env(30);
        let params = ModelParams::new(1.5, 0.6, 0.1, 2.0).unwrap();
        let tilt = TiltSpec::new_ldp(Path::zeros(Grid::new(2.0, 100).unwrap()));
        let init = EpidemicState::sample_iid(30, &params, 1).unwrap();
        let traj = sir::simulate(&env, &params, &init, 2).unwrap();
        assert_eq!(log_lambda(&traj, &env, &params, &tilt).unwrap(), 0.0);
    }

    #[test]
    fn empty_event_list_telescopes_to_zero_weight() {
        // I0 = 0: boundary and Stieltjes terms cancel, gamma(S, {}) = 0
        let env = const_env(12);
        let params = ModelParams::new(1.5, 0.6, 0.1, 2.0).unwrap();
        let grid = Grid::new(2.0, 80).unwrap();
        let tilt = TiltSpec::new_ldp(smooth_g(grid));
        let init = EpidemicState::sample_conditioned(12, 12, 0, 4).unwrap();
        let traj = sir::simulate(&env, &params, &init, 5).unwrap();
        assert!(traj.events().is_empty());
        let lw = log_lambda(&traj, &env, &params, &tilt).unwrap();
        assert!(lw.abs() < 1e-12, "log Lambda = {lw}");
    }

    #[test]
    fn lambda_has_unit_mean_at_small_scale() {
        // miniature of the acceptance criterion: n = 20, 20k replicas
        let n = 20;
        let env = const_env(n);
        let params = ModelParams::new(1.5, 0.6, 0.1, 1.0).unwrap();
        let tilt = TiltSpec::new_ldp(smooth_g(Grid::new(1.0, 50).unwrap()));
        let reps = 20_000;
        let lws: Vec<f64> = (0..reps)
            .map(|r| {
                let init = EpidemicState::sample_iid(n, &params, 1000 + r).unwrap();
                let traj = sir::simulate(&env, &params, &init, 2000 + r).unwrap();
                log_lambda(&traj, &env, &params, &tilt).unwrap()
            })
            .collect();
        let ws: Vec<f64> = lws.iter().map(|lw| lw.exp()).collect();
        let (mean, se) = stats::mean_and_se(&ws);
        assert!(
            (mean - 1.0).abs() < 3.0 * se,
            "E[Lambda] = {mean} +- {se}"
        );
    }

    #[test]
    fn lambda_mean_is_one_in_random_environments_too() {
        let n = 25;
        let dist = WeightDistribution::Exponential { mean: 1.0 };
        let params = ModelParams::new(1.5, 0.6, 0.1, 1.0).unwrap();
        let tilt = TiltSpec::new_ldp(smooth_g(Grid::new(1.0, 50).unwrap()));
        let reps = 10_000;
        let ws: Vec<f64> = (0..reps)
            .map(|r| {
                let env = Environment::sample(n, dist, 7000 + r).unwrap();
                let init = EpidemicState::sample_iid(n, &params, 1000 + r).unwrap();
                let traj = sir::simulate(&env, &params, &init, 2000 + r).unwrap();
                log_lambda(&traj, &env, &params, &tilt).unwrap().exp()
            })
            .collect();
        let (mean, se) = stats::mean_and_se(&ws);
        assert!((mean - 1.0).abs() < 3.5 * se, "E[Lambda] = {mean} +- {se}");
    }

    #[test]
    fn xi_has_unit_mean_at_small_scale() {
        let n = 50;
        let env = const_env(n);
        let params = ModelParams::new(1.5, 0.6, 0.1, 1.0).unwrap();
        let grid = Grid::new(1.0, 50).unwrap();
        let fluid = fluid::fluid_ode(&params, 1.0, Grid::new(1.0, 400).unwrap()).unwrap();
        let g = Path::from_fn(grid, |t| [0.4 * (t * 2.0).cos(), 0.5 * t]);
        let tilt = TiltSpec::new_mdp_with_exponent(g, n, 0.75).unwrap();
        let reps = 20_000;
        let ws: Vec<f64> = (0..reps)
            .map(|r| {
                let init = EpidemicState::sample_iid(n, &params, 500 + r).unwrap();
                let traj = sir::simulate(&env, &params, &init, 900 + r).unwrap();
                log_xi(&traj, &env, &params, &fluid, &tilt).unwrap().exp()
            })
            .collect();
        let (mean, se) = stats::mean_and_se(&ws);
        assert!((mean - 1.0).abs() < 3.0 * se, "E[Xi] = {mean} +- {se}");
    }

    #[test]
    fn zero_mdp_tilt_has_zero_log_weight() {
        let n = 40;
        let env = const_env(n);
        let params = ModelParams::new(1.5, 0.6, 0.1, 1.0).unwrap();
        let fluid = fluid::fluid_ode(&params, 1.0, Grid::new(1.0, 200).unwrap()).unwrap();
        let tilt =
            TiltSpec::new_mdp_with_exponent(Path::zeros(Grid::new(1.0, 50).unwrap()), n, 0.75)
                .unwrap();
        let init = EpidemicState::sample_iid(n, &params, 3).unwrap();
        let traj = sir::simulate(&env, &params, &init, 4).unwrap();
        assert_eq!(log_xi(&traj, &env, &params, &fluid, &tilt).unwrap(), 0.0);
    }

    #[test]
    fn mdp_factors_approach_one_as_n_grows() {
        let grid = Grid::new(1.0, 50).unwrap();
        let g: Path2 = Path::constant(grid, [0.8, -0.6]);
        for n in [100usize, 1600] {
            let tilt = TiltSpec::new_mdp_with_exponent(g.clone(), n, 0.75).unwrap();
            let ratio = (n as f64).powf(0.75) / n as f64;
            let bound = (ratio * 1.4f64).exp() * 1.4 * ratio;
            for k in 0..=50 {
                let t = k as f64 / 50.0;
                assert!((tilt.recovery_factor(t) - 1.0).abs() <= bound);
                assert!((tilt.infection_factor(t) - 1.0).abs() <= bound);
            }
        }
    }

    #[test]
    fn tilted_weight_is_exactly_minus_log_lambda() {
        let env = const_env(30);
        let params = ModelParams::new(1.5, 0.6, 0.1, 1.5).unwrap();
        let tilt = TiltSpec::new_ldp(smooth_g(Grid::new(1.5, 60).unwrap()));
        let init = EpidemicState::sample_iid(30, &params, 8).unwrap();
        let wt = simulate_tilted(&env, &params, &init, &tilt, 9).unwrap();
        let direct = log_lambda(&wt.traj, &env, &params, &tilt).unwrap();
        assert_eq!(wt.log_weight, -direct);
        assert_eq!(wt.max_eps, 0.0); // constant environment
    }

    #[test]
    fn reweighted_tilted_mean_is_unbiased() {
        // E_tilted[exp(log_weight)] = E_tilted[1 / Lambda] = 1
        let n = 25;
        let env = const_env(n);
        let params = ModelParams::new(2.0, 0.6, 0.1, 1.0).unwrap();
        let tilt = TiltSpec::new_ldp(smooth_g(Grid::new(1.0, 50).unwrap()));
        let reps = 20_000;
        let ws: Vec<f64> = (0..reps)
            .map(|r| {
                let init = EpidemicState::sample_iid(n, &params, 40 + r).unwrap();
                simulate_tilted(&env, &params, &init, &tilt, 70 + r)
                    .unwrap()
                    .log_weight
                    .exp()
            })
            .collect();
        let (mean, se) = stats::mean_and_se(&ws);
        assert!((mean - 1.0).abs() < 3.0 * se, "mean = {mean} +- {se}");
    }

    #[test]
    fn zero_tilt_simulation_matches_the_plain_chain() {
        let n = 150;
        let env = const_env(n);
        let params = ModelParams::new(2.0, 0.6, 0.1, 2.0).unwrap();
        let tilt = TiltSpec::new_ldp(Path::zeros(Grid::new(2.0, 50).unwrap()));
        let reps = 4000;
        let mut plain: Vec<f64> = Vec::new();
        let mut tilted: Vec<f64> = Vec::new();
        for r in 0..reps {
            let init = EpidemicState::sample_iid(n, &params, 10_000 + r).unwrap();
            let a = sir::simulate(&env, &params, &init, 20_000 + r).unwrap();
            plain.push(a.final_counts().0 as f64 / n as f64);
            let init2 = EpidemicState::sample_iid(n, &params, 30_000 + r).unwrap();
            let b = simulate_tilted(&env, &params, &init2, &tilt, 40_000 + r).unwrap();
            tilted.push(b.traj.final_counts().0 as f64 / n as f64);
        }
        let p = stats::ks_test_two_sample(&mut plain, &mut tilted);
        assert!(p > 0.001, "two-sample KS p = {p}");
    }

    #[test]
    fn constant_tilt_equals_a_time_rescaled_plain_model() {
        // constant g = (gs, gi): recovery factor r = e^{-gi}, infection
        // factor q = e^{gi-gs}. Tilted SIR(1, lambda) == SIR(r, q lambda)
        // == plain SIR(1, q lambda / r) run to horizon r T0.
        let n = 120;
        let env = const_env(n);
        let (gs, gi) = (0.25, -0.2);
        let r = (-gi_f(gi)).exp();
        fn gi_f(x: f64) -> f64 {
            x
        }
        let q = (gi - gs as f64).exp();
        let t0 = 1.5;
        let params = ModelParams::new(2.0, 0.6, 0.1, t0).unwrap();
        let tilt = TiltSpec::new_ldp(Path::constant(Grid::new(t0, 10).unwrap(), [gs, gi]));
        let rescaled = ModelParams::new(2.0 * q / r, 0.6, 0.1, r * t0).unwrap();
        let reps = 4000;
        let mut a_final = Vec::new();
        let mut b_final = Vec::new();
        for rep in 0..reps {
            let init = EpidemicState::sample_iid(n, &params, 1000 + rep).unwrap();
            let a = simulate_tilted(&env, &params, &init, &tilt, 5000 + rep).unwrap();
            a_final.push(a.traj.final_counts().0 as f64);
            let init2 = EpidemicState::sample_iid(n, &params, 8000 + rep).unwrap();
            let b = sir::simulate(&env, &rescaled, &init2, 9000 + rep).unwrap();
            b_final.push(b.final_counts().0 as f64);
        }
        let p = stats::ks_test_two_sample(&mut a_final, &mut b_final);
        assert!(p > 0.001, "KS p = {p}");
    }

    #[test]
    fn weighted_trajectory_csv_has_weight_columns() {
        let env = const_env(20);
        let params = ModelParams::new(2.0, 0.6, 0.1, 1.0).unwrap();
        let tilt = TiltSpec::new_ldp(smooth_g(Grid::new(1.0, 20).unwrap()));
        let init = EpidemicState::sample_iid(20, &params, 1).unwrap();
        let wt = simulate_tilted(&env, &params, &init, &tilt, 2).unwrap();
        let mut buf = Vec::new();
        wt.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,vertex,transition,S,I,log_weight,max_eps"));
    }

    /// Second-order (Taylor) expansion of `log Xi` along a trajectory in a
    /// constant-mean-one environment, where the discrepancy terms vanish:
    ///
    /// `(a_n^2/n) [ g.nu|_0^T - int g'.nu + (b_mid nu).g + 1/2 g^T sigma^n g du ]`
    ///
    /// with `sigma^n` at the empirical counts and `b` at the exact mean-value
    /// point `(theta + x_hat)/2` (exact because the infection intensity is
    /// quadratic). The gap to `log_xi` is the cubic jump-term remainder,
    /// hence scales like `a_n^3 / n^2`.
    fn expanded_log_xi(
        traj: &Trajectory,
        params: &ModelParams,
        fluid: &Path2,
        g: &Path2,
        a_n: f64,
    ) -> f64 {
        let nf = traj.n() as f64;
        let lr = params.lambda; // E rho = 1
        let g_deriv = g.derivative();
        let nu = |t: f64, s: usize, i: usize| -> [f64; 2] {
            let x = fluid.eval(t);
            [
                (s as f64 - nf * x[0]) / a_n,
                (i as f64 - nf * x[1]) / a_n,
            ]
        };
        let mut integral = 0.0;
        let env = const_env(traj.n());
        sir::for_each_interval(traj, &env, |t_lo, t_hi, s, i, _gamma| {
            let integrand = |t: f64| -> f64 {
                let nv = nu(t, s, i);
                let gv = g.eval(t);
                let dgv = g_deriv.eval(t);
                let theta = [s as f64 / nf, i as f64 / nf];
                let xh = fluid.eval(t);
                let mid = [(theta[0] + xh[0]) / 2.0, (theta[1] + xh[1]) / 2.0];
                let b = [
                    [-lr * mid[1], -lr * mid[0]],
                    [lr * mid[1], lr * mid[0] - 1.0],
                ];
                let qp = lr * theta[0] * theta[1];
                let sigma_n = [[qp, -qp], [-qp, qp + theta[1]]];
                let bnu = crate::mat2::matvec(&b, nv);
                dgv[0] * nv[0] + dgv[1] * nv[1]
                    + bnu[0] * gv[0]
                    + bnu[1] * gv[1]
                    + 0.5 * crate::mat2::quad_form(&sigma_n, gv)
            };
            // split at grid nodes: the integrand is polynomial (degree <= 3)
            // per piece, so 3-point Simpson is exact there
            let grid = g.grid();
            let steps = grid.steps();
            let scale = steps as f64 / grid.t_end();
            let k_lo = ((t_lo * scale).floor() as usize).min(steps - 1);
            let k_hi = ((t_hi * scale).ceil() as usize).clamp(k_lo + 1, steps);
            for k in k_lo..k_hi {
                let lo = grid.node(k).max(t_lo);
                let hi = grid.node(k + 1).min(t_hi);
                if hi > lo {
                    let mid = 0.5 * (lo + hi);
                    integral +=
                        (hi - lo) / 6.0 * (integrand(lo) + 4.0 * integrand(mid) + integrand(hi));
                }
            }
        });
        let (s_end, i_end) = traj.final_counts();
        let nv_end = nu(params.t0, s_end, i_end);
        let nv_0 = nu(0.0, traj.initial().s_count(), traj.initial().i_count());
        let g_end = g.eval(params.t0);
        let g_0 = g.eval(0.0);
        let boundary = g_end[0] * nv_end[0] + g_end[1] * nv_end[1]
            - (g_0[0] * nv_0[0] + g_0[1] * nv_0[1]);
        a_n * a_n / nf * (boundary - integral)
    }

    #[test]
    fn log_xi_matches_its_expansion_to_cubic_order() {
        let n = 200;
        let env = const_env(n);
        let params = ModelParams::new(1.5, 0.6, 0.1, 1.0).unwrap();
        let fluid = fluid::fluid_ode(&params, 1.0, Grid::new(1.0, 800).unwrap()).unwrap();
        let grid = Grid::new(1.0, 100).unwrap();
        let g: Path2 = Path::from_fn(grid, |t| [0.3 * (2.0 * t).sin(), -0.25 + 0.2 * t]);
        let a1 = (n as f64).powf(0.75);
        let a2 = a1 / 2.0;
        let (mut gap1, mut gap2) = (0.0, 0.0);
        let reps = 40;
        for r in 0..reps {
            let init = EpidemicState::sample_iid(n, &params, 100 + r).unwrap();
            let traj = sir::simulate(&env, &params, &init, 200 + r).unwrap();
            for (a, gap) in [(a1, &mut gap1), (a2, &mut gap2)] {
                let tilt = TiltSpec::new_mdp(g.clone(), a, n).unwrap();
                let exact = log_xi(&traj, &env, &params, &fluid, &tilt).unwrap();
                let approx = expanded_log_xi(&traj, &params, &fluid, &g, a);
                *gap += (exact - approx).abs() / reps as f64;
            }
        }
        let ratio = gap1 / gap2;
        // halving a_n should shrink the cubic remainder by about 8
        assert!(
            ratio > 5.5 && ratio < 11.0,
            "remainder ratio = {ratio} (gaps {gap1:.3e}, {gap2:.3e})"
        );
    }
}
