//! Deterministic ODE layer.
//!
//! The fluid limit of the normalized counts solves
//!
//! `s' = -lambda E(rho) s i`, `i' = -i + lambda E(rho) s i`
//!
//! from `(p0, p1)`. Exponential tilting by a test path `g` multiplies the
//! recovery rate by `exp(-i_g)` and the infection rate by `exp(i_g - s_g)`;
//! the same dynamics can be written with explicit multiplicative controls
//! `(h1, h2)` on the two reactions. At moderate-deviation scale the relevant
//! object is the linearization `(b_t, sigma_t)` along the fluid path plus the
//! initial covariance `M_0`, and the tilted fluctuation path solves the
//! linear ODE `x' = b_t x + sigma_t g_t`.
//!
//! All solvers are classic fixed-step RK4 on the shared uniform grid, with
//! grid data (tilts, controls) interpolated linearly at half steps.

use crate::error::{Error, Result};
use crate::mat2::{self, Mat2, Vec2};
use crate::path::{Grid, Path, Path1, Path2};
use crate::sir::ModelParams;

/// Jump direction of a recovery.
pub const L1: Vec2 = [0.0, -1.0];
/// Jump direction of an infection.
pub const L2: Vec2 = [-1.0, 1.0];

/// The two reaction intensities as functions of the normalized state.
#[derive(Clone, Copy, Debug)]
pub struct ReactionSystem {
    /// `lambda * E(rho)`, the only model constant the fluid layer needs.
    pub lambda_rho: f64,
}

impl ReactionSystem {
    pub fn new(lambda: f64, mean_rho: f64) -> Result<Self> {
        let lambda_rho = lambda * mean_rho;
        if !(lambda_rho > 0.0) || !lambda_rho.is_finite() {
            return Err(Error::invalid(format!(
                "lambda * E(rho) must be positive, got {lambda_rho}"
            )));
        }
        Ok(ReactionSystem { lambda_rho })
    }

    /// Recovery intensity `H1(x) = i_x`.
    pub fn h1(&self, x: Vec2) -> f64 {
        x[1]
    }

    /// Infection intensity `H2(x) = lambda E(rho) s_x i_x`.
    pub fn h2(&self, x: Vec2) -> f64 {
        self.lambda_rho * x[0] * x[1]
    }

    /// Drift `l1 H1(x) + l2 H2(x)`.
    pub fn drift(&self, x: Vec2) -> Vec2 {
        let (h1, h2) = (self.h1(x), self.h2(x));
        [
            L1[0] * h1 + L2[0] * h2,
            L1[1] * h1 + L2[1] * h2,
        ]
    }
}

/// Classic RK4 with fixed step over the grid.
fn rk4(grid: Grid, x0: Vec2, f: impl Fn(f64, Vec2) -> Vec2) -> Path2 {
    let dt = grid.dt();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    let mut x = x0;
    values.push(x);
    for k in 0..grid.steps() {
        let t = grid.node(k);
        let k1 = f(t, x);
        let k2 = f(t + dt / 2.0, step(x, k1, dt / 2.0));
        let k3 = f(t + dt / 2.0, step(x, k2, dt / 2.0));
        let k4 = f(t + dt, step(x, k3, dt));
        x = [
            x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        values.push(x);
    }
    Path::new(grid, values).expect("lengths match by construction")
}

fn step(x: Vec2, d: Vec2, h: f64) -> Vec2 {
    [x[0] + h * d[0], x[1] + h * d[1]]
}

/// Fluid limit from `(p0, p1)` on the given grid.
pub fn fluid_ode(params: &ModelParams, mean_rho: f64, grid: Grid) -> Result<Path2> {
    params.validate()?;
    let sys = ReactionSystem::new(params.lambda, mean_rho)?;
    Ok(rk4(grid, [params.p0, params.p1], |_, x| sys.drift(x)))
}

/// Fluid dynamics under the exponential tilt `g`: recovery carries the factor
/// `exp(-i_g(t))`, infection the factor `exp(i_g(t) - s_g(t))`.
pub fn tilted_fluid_ode(
    params: &ModelParams,
    mean_rho: f64,
    g: &Path2,
    x0: Vec2,
) -> Result<Path2> {
    params.validate()?;
    let sys = ReactionSystem::new(params.lambda, mean_rho)?;
    Ok(rk4(g.grid(), x0, |t, x| {
        let gt = g.eval(t);
        let rec = (-gt[1]).exp();
        let inf = (gt[1] - gt[0]).exp();
        let (h1, h2) = (rec * sys.h1(x), inf * sys.h2(x));
        [
            L1[0] * h1 + L2[0] * h2,
            L1[1] * h1 + L2[1] * h2,
        ]
    }))
}

/// Nonnegative multiplicative controls on recovery (`h1`) and infection (`h2`).
#[derive(Clone, Debug)]
pub struct ControlPair {
    pub h1: Path1,
    pub h2: Path1,
}

impl ControlPair {
    pub fn new(h1: Path1, h2: Path1) -> Result<Self> {
        if h1.grid() != h2.grid() {
            return Err(Error::invalid("controls must share one grid"));
        }
        for k in 0..=h1.grid().steps() {
            if h1.values()[k][0] < 0.0 || h2.values()[k][0] < 0.0 {
                return Err(Error::invalid(format!(
                    "controls must be nonnegative (node {k})"
                )));
            }
        }
        Ok(ControlPair { h1, h2 })
    }

    pub fn constant(grid: Grid, h1: f64, h2: f64) -> Result<Self> {
        Self::new(Path::constant(grid, [h1]), Path::constant(grid, [h2]))
    }

    pub fn grid(&self) -> Grid {
        self.h1.grid()
    }

    /// The controls realized by the tilt `g`: `h1 = exp(-i_g)`,
    /// `h2 = exp(i_g - s_g)`.
    pub fn from_tilt(g: &Path2) -> Self {
        let h1 = Path::from_fn(g.grid(), |t| [(-g.eval(t)[1]).exp()]);
        let h2 = Path::from_fn(g.grid(), |t| {
            let gt = g.eval(t);
            [(gt[1] - gt[0]).exp()]
        });
        ControlPair { h1, h2 }
    }

    /// Invert [`ControlPair::from_tilt`]: `i_g = -log h1`,
    /// `s_g = -log h1 - log h2`. Fails on vanishing controls.
    pub fn to_tilt(&self) -> Result<Path2> {
        let grid = self.grid();
        let mut values = Vec::with_capacity(grid.steps() + 1);
        for k in 0..=grid.steps() {
            let (h1, h2) = (self.h1.values()[k][0], self.h2.values()[k][0]);
            if h1 <= 0.0 || h2 <= 0.0 {
                return Err(Error::NotAdmissible(format!(
                    "controls vanish at node {k}; no finite tilt represents them"
                )));
            }
            values.push([-h1.ln() - h2.ln(), -h1.ln()]);
        }
        Path::new(grid, values)
    }
}

/// Solve the controlled dynamics
/// `s' = -h2 lambda E(rho) i s`, `i' = -h1 i + h2 lambda E(rho) i s`.
pub fn controlled_path(
    params: &ModelParams,
    mean_rho: f64,
    controls: &ControlPair,
    x0: Vec2,
) -> Result<Path2> {
    params.validate()?;
    let sys = ReactionSystem::new(params.lambda, mean_rho)?;
    Ok(rk4(controls.grid(), x0, |t, x| {
        let r1 = controls.h1.eval(t)[0] * sys.h1(x);
        let r2 = controls.h2.eval(t)[0] * sys.h2(x);
        [
            L1[0] * r1 + L2[0] * r2,
            L1[1] * r1 + L2[1] * r2,
        ]
    }))
}

/// Recover the controls of an admissible path by finite differences:
/// `h2 = -s' / (lambda E(rho) s i)`, `h1 = -(s + i)' / i`, with the
/// convention `(1, 1)` wherever `i` vanishes (any value is cost-neutral
/// there). Rejects paths whose recovered controls are negative beyond
/// tolerance.
pub fn controls_from_path(f: &Path2, params: &ModelParams, mean_rho: f64) -> Result<ControlPair> {
    const I_FLOOR: f64 = 1e-10;
    const NEG_TOL: f64 = -1e-8;
    let sys = ReactionSystem::new(params.lambda, mean_rho)?;
    let deriv = f.derivative();
    let grid = f.grid();
    let mut h1 = Vec::with_capacity(grid.steps() + 1);
    let mut h2 = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let [s, i] = f.values()[k];
        let [ds, di] = deriv.values()[k];
        if i < I_FLOOR {
            h1.push([1.0]);
            h2.push([1.0]);
            continue;
        }
        let c1 = -(ds + di) / i;
        let c2 = -ds / (sys.lambda_rho * s.max(I_FLOOR) * i);
        if c1 < NEG_TOL || c2 < NEG_TOL {
            return Err(Error::NotAdmissible(format!(
                "recovered controls are negative at t = {}: h1 = {c1}, h2 = {c2}",
                grid.node(k)
            )));
        }
        h1.push([c1.max(0.0)]);
        h2.push([c2.max(0.0)]);
    }
    ControlPair::new(Path::new(grid, h1)?, Path::new(grid, h2)?)
}

/// The moderate-deviation linearization along the fluid path.
#[derive(Clone, Debug)]
pub struct Linearization {
    fluid: Path2,
    lambda_rho: f64,
    m0: Mat2,
}

impl Linearization {
    pub fn fluid(&self) -> &Path2 {
        &self.fluid
    }

    pub fn lambda_rho(&self) -> f64 {
        self.lambda_rho
    }

    pub fn grid(&self) -> Grid {
        self.fluid.grid()
    }

    /// Drift Jacobian contracted with the jump directions, evaluated at the
    /// interpolated fluid state.
    pub fn b(&self, t: f64) -> Mat2 {
        let [s, i] = self.fluid.eval(t);
        let lr = self.lambda_rho;
        [
            [-lr * i, -lr * s],
            [lr * i, lr * s - 1.0],
        ]
    }

    /// Jump covariance `sum_k l_k H_k l_k^T` at the interpolated fluid state.
    pub fn sigma(&self, t: f64) -> Mat2 {
        let [s, i] = self.fluid.eval(t);
        let q = self.lambda_rho * i * s;
        [
            [q, -q],
            [-q, q + i],
        ]
    }

    /// Covariance of the initial fluctuations under the i.i.d. spin law.
    pub fn m0(&self) -> Mat2 {
        self.m0
    }
}

/// Compute the fluid path and package `(b, sigma, M0)` along it.
pub fn linearize(params: &ModelParams, mean_rho: f64, grid: Grid) -> Result<Linearization> {
    let fluid = fluid_ode(params, mean_rho, grid)?;
    let (p0, p1) = (params.p0, params.p1);
    Ok(Linearization {
        fluid,
        lambda_rho: params.lambda * mean_rho,
        m0: [
            [p0 * (1.0 - p0), -p0 * p1],
            [-p0 * p1, p1 * (1.0 - p1)],
        ],
    })
}

/// Solve the tilted fluctuation ODE `x' = b_t x + sigma_t g_t` from `x0`.
pub fn mdp_tilted_ode(linz: &Linearization, g: &Path2, x0: Vec2) -> Result<Path2> {
    if g.grid().t_end() > linz.grid().t_end() + 1e-12 {
        return Err(Error::invalid(
            "tilt grid extends beyond the linearization horizon",
        ));
    }
    Ok(rk4(g.grid(), x0, |t, x| {
        let bx = mat2::matvec(&linz.b(t), x);
        let sg = mat2::matvec(&linz.sigma(t), g.eval(t));
        [bx[0] + sg[0], bx[1] + sg[1]]
    }))
}

/// Pointwise solve of `sigma_t g_t = f'_t - b_t f_t` for the forcing that
/// realizes `f` as a tilted fluctuation path. Refuses when `sigma` is
/// ill-conditioned anywhere on the grid.
pub fn forcing_from_path(linz: &Linearization, f: &Path2) -> Result<Path2> {
    const COND_CAP: f64 = 1e12;
    let grid = f.grid();
    let deriv = f.derivative();
    let mut values = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let t = grid.node(k);
        let sigma = linz.sigma(t);
        if mat2::sym_condition(&sigma) > COND_CAP {
            return Err(Error::Singular(format!(
                "sigma is near-singular at t = {t} (condition > {COND_CAP:e})"
            )));
        }
        let bf = mat2::matvec(&linz.b(t), f.values()[k]);
        let rhs = [deriv.values()[k][0] - bf[0], deriv.values()[k][1] - bf[1]];
        values.push(mat2::solve(&sigma, rhs)?);
    }
    Path::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> ModelParams {
        ModelParams::new(2.0, 0.5, 0.3, 2.0).unwrap()
    }

    fn grid(steps: usize) -> Grid {
        Grid::new(2.0, steps).unwrap()
    }

    #[test]
    fn zero_infected_start_is_stationary() {
        let p = ModelParams::new(2.0, 0.5, 1e-300, 2.0).unwrap();
        // p1 ~ 0: the infected coordinate stays at (numerical) zero
        let path = fluid_ode(&p, 1.0, grid(100)).unwrap();
        for v in path.values() {
            assert_abs_diff_eq!(v[0], 0.5, epsilon = 1e-12);
            assert!(v[1].abs() < 1e-200);
        }
    }

    #[test]
    fn initial_derivative_matches_hand_substitution() {
        // p0 = 0.5, p1 = 0.3, lambda E rho = 2: s'(0) = -0.3, i'(0) = 0
        let sys = ReactionSystem::new(2.0, 1.0).unwrap();
        let d = sys.drift([0.5, 0.3]);
        assert_abs_diff_eq!(d[0], -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tiny_infection_rate_decouples_to_exponential_decay() {
        // lambda E rho -> 0: i_t = p1 exp(-t), s_t = p0 (linear closed form)
        let p = ModelParams::new(1e-12, 0.5, 0.3, 2.0).unwrap();
        let path = fluid_ode(&p, 1.0, grid(2000)).unwrap();
        for k in (0..=2000).step_by(200) {
            let t = path.grid().node(k);
            assert_abs_diff_eq!(path.values()[k][1], 0.3 * (-t).exp(), epsilon = 1e-8);
            assert_abs_diff_eq!(path.values()[k][0], 0.5, epsilon = 1e-8);
        }
    }

    #[test]
    fn rk4_halving_gains_one_order_sixteen() {
        // grids coarse enough that truncation dominates roundoff
        let p = params();
        let reference = fluid_ode(&p, 1.0, grid(4800)).unwrap();
        let coarse = fluid_ode(&p, 1.0, grid(150)).unwrap();
        let fine = fluid_ode(&p, 1.0, grid(300)).unwrap();
        let err_c = (coarse.last()[1] - reference.last()[1]).abs();
        let err_f = (fine.last()[1] - reference.last()[1]).abs();
        let ratio = err_c / err_f;
        assert!(ratio > 8.0 && ratio < 32.0, "ratio = {ratio}");
    }

    #[test]
    fn simplex_is_invariant() {
        let p = ModelParams::new(4.0, 0.7, 0.25, 2.0).unwrap();
        let path = fluid_ode(&p, 1.5, grid(2000)).unwrap();
        for v in path.values() {
            assert!(v[0] >= -1e-9 && v[1] >= -1e-9);
            assert!(v[0] + v[1] <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn zero_tilt_recovers_the_fluid_ode() {
        let p = params();
        let g = Path::zeros(grid(500));
        let tilted = tilted_fluid_ode(&p, 1.0, &g, [p.p0, p.p1]).unwrap();
        let fluid = fluid_ode(&p, 1.0, grid(500)).unwrap();
        assert!(tilted.sup_sum_dist(&fluid).unwrap() < 1e-12);
    }

    #[test]
    fn constant_tilt_scales_the_two_rates() {
        let p = params();
        let c: f64 = 0.4;
        let g = Path::constant(grid(800), [0.0, c]);
        let tilted = tilted_fluid_ode(&p, 1.0, &g, [p.p0, p.p1]).unwrap();
        let controls = ControlPair::constant(grid(800), (-c).exp(), c.exp()).unwrap();
        let controlled = controlled_path(&p, 1.0, &controls, [p.p0, p.p1]).unwrap();
        assert!(tilted.sup_sum_dist(&controlled).unwrap() < 1e-12);
    }

    #[test]
    fn tilted_paths_stay_monotone() {
        let p = params();
        let g = Path::from_fn(grid(1000), |t| [0.5 * (1.5 * t).sin(), -0.4 * t.cos()]);
        let tilted = tilted_fluid_ode(&p, 1.0, &g, [p.p0, p.p1]).unwrap();
        let v = tilted.values();
        for k in 1..v.len() {
            assert!(v[k][0] <= v[k - 1][0] + 1e-12, "s must not increase");
            assert!(
                v[k][0] + v[k][1] <= v[k - 1][0] + v[k - 1][1] + 1e-12,
                "s + i must not increase"
            );
        }
    }

    #[test]
    fn unit_controls_recover_the_fluid_ode() {
        let p = params();
        let controls = ControlPair::constant(grid(500), 1.0, 1.0).unwrap();
        let path = controlled_path(&p, 1.0, &controls, [p.p0, p.p1]).unwrap();
        let fluid = fluid_ode(&p, 1.0, grid(500)).unwrap();
        assert!(path.sup_sum_dist(&fluid).unwrap() < 1e-13);
    }

    #[test]
    fn suppressed_infection_leaves_s_constant() {
        let p = params();
        let controls = ControlPair::constant(grid(500), 1.5, 0.0).unwrap();
        let path = controlled_path(&p, 1.0, &controls, [p.p0, p.p1]).unwrap();
        for (k, v) in path.values().iter().enumerate() {
            let t = path.grid().node(k);
            assert_abs_diff_eq!(v[0], p.p0, epsilon = 1e-12);
            assert_abs_diff_eq!(v[1], p.p1 * (-1.5 * t).exp(), epsilon = 1e-9);
        }
    }

    #[test]
    fn tilt_control_round_trip() {
        // the two right-hand sides are algebraically identical; the residual
        // is the factor-vs-exponent interpolation gap at RK4 midpoints,
        // which falls off like (dt)^2 and is below 1e-10 at this resolution
        let p = params();
        let g = Path::from_fn(grid(40_000), |t| [0.3 * (t / 2.0).cos(), 0.2 * t.sin() - 0.1]);
        let tilted = tilted_fluid_ode(&p, 1.0, &g, [p.p0, p.p1]).unwrap();
        let controls = ControlPair::from_tilt(&g);
        let controlled = controlled_path(&p, 1.0, &controls, [p.p0, p.p1]).unwrap();
        assert!(tilted.sup_sum_dist(&controlled).unwrap() < 1e-10);
        // and back: the tilt of those controls is g itself
        let g2 = controls.to_tilt().unwrap();
        assert!(g.sup_sum_dist(&g2).unwrap() < 1e-12);
    }

    #[test]
    fn controls_of_the_fluid_path_are_unit() {
        let p = params();
        let fluid = fluid_ode(&p, 1.0, grid(2000)).unwrap();
        let controls = controls_from_path(&fluid, &p, 1.0).unwrap();
        for k in 0..=2000 {
            assert!((controls.h1.values()[k][0] - 1.0).abs() < 1e-4);
            assert!((controls.h2.values()[k][0] - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn controls_where_infected_vanish_default_to_unit() {
        let g = grid(100);
        let f: Path2 = Path::from_fn(g, |t| [0.5 - 0.01 * t, 0.0]);
        let p = params();
        // i = 0 everywhere: the convention applies on the whole grid
        let c = controls_from_path(&f, &p, 1.0).unwrap();
        assert!(c.h1.values().iter().all(|v| v[0] == 1.0));
        assert!(c.h2.values().iter().all(|v| v[0] == 1.0));
    }

    #[test]
    fn constant_path_with_positive_infected_has_zero_controls() {
        let g = grid(100);
        let f: Path2 = Path::constant(g, [0.4, 0.2]);
        let p = params();
        let c = controls_from_path(&f, &p, 1.0).unwrap();
        for k in 0..=100 {
            assert!(c.h1.values()[k][0].abs() < 1e-9);
            assert!(c.h2.values()[k][0].abs() < 1e-9);
        }
    }

    #[test]
    fn increasing_s_is_rejected() {
        let g = grid(100);
        let f: Path2 = Path::from_fn(g, |t| [0.4 + 0.05 * t, 0.2]);
        let p = params();
        assert!(matches!(
            controls_from_path(&f, &p, 1.0),
            Err(Error::NotAdmissible(_))
        ));
    }

    #[test]
    fn linearization_matrices_match_their_definitions() {
        let p = params();
        let linz = linearize(&p, 1.0, grid(2000)).unwrap();
        let sys = ReactionSystem::new(p.lambda, 1.0).unwrap();
        for k in (0..=2000).step_by(97) {
            let t = linz.grid().node(k);
            let x = linz.fluid().values()[k];
            let sigma = linz.sigma(t);
            // off-diagonal identity and trace of the displayed matrix
            assert_abs_diff_eq!(sigma[0][0], -sigma[0][1], epsilon = 1e-15);
            assert_abs_diff_eq!(
                sigma[0][0] + sigma[1][1],
                2.0 * sys.h2(x) + sys.h1(x),
                epsilon = 1e-13
            );
            // independent assembly from the defining sum over reactions
            let assembled = {
                let mut m = [[0.0; 2]; 2];
                for (l, h) in [(L1, sys.h1(x)), (L2, sys.h2(x))] {
                    for r in 0..2 {
                        for c in 0..2 {
                            m[r][c] += l[r] * h * l[c];
                        }
                    }
                }
                m
            };
            for r in 0..2 {
                for c in 0..2 {
                    assert_abs_diff_eq!(sigma[r][c], assembled[r][c], epsilon = 1e-14);
                }
            }
            // sigma is PSD along the path
            let (lo, _) = mat2::sym_eigenvalues(&sigma);
            assert!(lo >= -1e-12);
        }
        // M0 for (p0, p1) = (0.5, 0.3)
        let m0 = linz.m0();
        assert_abs_diff_eq!(m0[0][0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(m0[0][1], -0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(m0[1][1], 0.21, epsilon = 1e-15);
        let (lo, _) = mat2::sym_eigenvalues(&m0);
        assert!(lo > 0.0);
    }

    #[test]
    fn mdp_ode_is_linear_in_state_and_forcing() {
        let p = params();
        let linz = linearize(&p, 1.0, grid(2000)).unwrap();
        let g0: Path2 = Path::zeros(grid(500));
        let zero = mdp_tilted_ode(&linz, &g0, [0.0, 0.0]).unwrap();
        assert!(zero.sup_sum_norm() < 1e-15);

        // flow-map linearity in the initial condition
        let a = mdp_tilted_ode(&linz, &g0, [1.0, 0.0]).unwrap();
        let b = mdp_tilted_ode(&linz, &g0, [0.0, 1.0]).unwrap();
        let ab = mdp_tilted_ode(&linz, &g0, [2.0, -1.0]).unwrap();
        for k in 0..=500 {
            for d in 0..2 {
                let lin = 2.0 * a.values()[k][d] - b.values()[k][d];
                assert_abs_diff_eq!(ab.values()[k][d], lin, epsilon = 1e-10);
            }
        }

        // superposition in the forcing
        let g1: Path2 = Path::from_fn(grid(500), |t| [0.3 * t.sin(), 0.1]);
        let g2: Path2 = Path::from_fn(grid(500), |t| [-0.2, 0.4 * t.cos()]);
        let g12 = Path::from_fn(grid(500), |t| {
            let (u, v) = (g1.eval(t), g2.eval(t));
            [u[0] + v[0], u[1] + v[1]]
        });
        let s1 = mdp_tilted_ode(&linz, &g1, [0.0, 0.0]).unwrap();
        let s2 = mdp_tilted_ode(&linz, &g2, [0.0, 0.0]).unwrap();
        let s12 = mdp_tilted_ode(&linz, &g12, [0.0, 0.0]).unwrap();
        for k in 0..=500 {
            for d in 0..2 {
                let lin = s1.values()[k][d] + s2.values()[k][d];
                assert_abs_diff_eq!(s12.values()[k][d], lin, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn forcing_recovery_inverts_the_tilted_ode() {
        let p = params();
        let linz = linearize(&p, 1.0, grid(4000)).unwrap();
        let g: Path2 = Path::from_fn(grid(4000), |t| [0.5 * (t / 2.0).sin(), 0.5]);
        let f = mdp_tilted_ode(&linz, &g, [0.0, 0.0]).unwrap();
        let g_back = forcing_from_path(&linz, &f).unwrap();
        // residual of the linear solve is tiny by construction
        let deriv = f.derivative();
        for k in (0..=4000).step_by(131) {
            let t = f.grid().node(k);
            let sg = mat2::matvec(&linz.sigma(t), g_back.values()[k]);
            let bf = mat2::matvec(&linz.b(t), f.values()[k]);
            let r0 = deriv.values()[k][0] - bf[0] - sg[0];
            let r1 = deriv.values()[k][1] - bf[1] - sg[1];
            assert!(r0.abs() < 1e-8 && r1.abs() < 1e-8, "residual ({r0}, {r1})");
        }
        // and matches the true forcing away from the endpoints
        for k in (2..3998).step_by(200) {
            assert!((g_back.values()[k][0] - g.values()[k][0]).abs() < 1e-4);
            assert!((g_back.values()[k][1] - g.values()[k][1]).abs() < 1e-4);
        }
    }
}
