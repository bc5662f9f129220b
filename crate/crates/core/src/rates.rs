//! Rate functionals at large- and moderate-deviation scale.
//!
//! Closed forms:
//!
//! * `I_ini(x)`: relative entropy of `(s, i, 1-s-i)` against `(p0, p1, rest)`;
//! * `I_dyn(f)`: integral of the reaction-flux Lagrangian
//!   `sum_k [ r_k log(r_k / H_k) - r_k + H_k ]` with realized fluxes
//!   `r_1 = -(s+i)'` (recovery) and `r_2 = -s'` (infection);
//! * `J_ini(x) = x^T M0^{-1} x / 2`;
//! * `J_dyn(f)`: quadratic path integral of `f' - b f` against `sigma^{-1}`.
//!
//! Each closed form is paired with its variational definition — a supremum of
//! an explicit functional over smooth test paths `g` — evaluated over a
//! finite polynomial/trigonometric family by coordinate ascent. A finite
//! family can only undershoot the supremum, so the variational routines
//! return certified lower bounds and serve as independent cross-checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluid::{Linearization, ReactionSystem};
use crate::mat2::{self, Vec2};
use crate::path::{Grid, Path, Path1, Path2};
use crate::sir::ModelParams;

/// `x log x` with the `0 log 0 = 0` convention.
fn xlogx(x: f64) -> f64 {
    if x < 1e-300 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `r log(r / h) - r + h`, the per-reaction cost of running a flux `r`
/// against an intensity `h`. Nonnegative; infinite when `r > 0` needs an
/// absent reaction (`h = 0`).
fn flux_cost(r: f64, h: f64) -> f64 {
    if r <= 0.0 {
        return h;
    }
    if h <= 0.0 {
        return f64::INFINITY;
    }
    xlogx(r) - r * h.ln() - r + h
}

/// Evaluated rate functional with its decomposition and per-time density.
#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub total: f64,
    pub initial_part: f64,
    pub dynamic_part: f64,
    pub finite: bool,
    pub rejection_reason: Option<String>,
    #[serde(skip)]
    pub density: Path1,
}

impl RateReport {
    fn infinite(grid: Grid, reason: String) -> Self {
        RateReport {
            total: f64::INFINITY,
            initial_part: 0.0,
            dynamic_part: f64::INFINITY,
            finite: false,
            rejection_reason: Some(reason),
            density: Path::zeros(grid),
        }
    }

    fn finite(initial_part: f64, density: Path1) -> Self {
        let dynamic_part = trapezoid(&density);
        RateReport {
            total: initial_part + dynamic_part,
            initial_part,
            dynamic_part,
            finite: true,
            rejection_reason: None,
            density,
        }
    }

    /// Fold an initial cost into an existing dynamic report.
    pub fn with_initial(mut self, initial: f64) -> Self {
        self.initial_part = initial;
        self.total = if self.finite {
            initial + self.dynamic_part
        } else {
            f64::INFINITY
        };
        self
    }
}

fn trapezoid(density: &Path1) -> f64 {
    let dt = density.grid().dt();
    let v = density.values();
    let mut sum = 0.5 * (v[0][0] + v[v.len() - 1][0]);
    for row in &v[1..v.len() - 1] {
        sum += row[0];
    }
    sum * dt
}

/// Relative entropy of the initial point against `(p0, p1)`; infinite
/// outside the simplex.
pub fn i_ini(x: Vec2, params: &ModelParams) -> f64 {
    let [s, i] = x;
    let r = 1.0 - s - i;
    if s < 0.0 || i < 0.0 || r < 0.0 {
        return f64::INFINITY;
    }
    let q = 1.0 - params.p0 - params.p1;
    (xlogx(s) - s * params.p0.ln()) + (xlogx(i) - i * params.p1.ln()) + (xlogx(r) - r * q.ln())
}

/// Numerical supremum of `y . x - log(1 - p0 - p1 + e^{s_y} p0 + e^{i_y} p1)`
/// over `y`, for strictly interior `x`: the stationarity formulas give the
/// optimizer directly and a safeguarded ascent polishes it.
pub fn i_ini_variational(x: Vec2, params: &ModelParams, ascent_steps: usize) -> Result<f64> {
    let [s, i] = x;
    let r = 1.0 - s - i;
    if !(s > 0.0 && i > 0.0 && r > 0.0) {
        return Err(Error::refused(
            "variational form needs an interior point; use the closed form i_ini".to_string(),
        ));
    }
    let q = 1.0 - params.p0 - params.p1;
    let objective = |y: Vec2| -> f64 {
        let z = q + y[0].exp() * params.p0 + y[1].exp() * params.p1;
        y[0] * s + y[1] * i - z.ln()
    };
    // stationary point of the concave objective
    let mut y = [
        (s * q / (params.p0 * r)).ln(),
        (i * q / (params.p1 * r)).ln(),
    ];
    let mut best = objective(y);
    let mut step = 0.5;
    for _ in 0..ascent_steps {
        let z = q + y[0].exp() * params.p0 + y[1].exp() * params.p1;
        let grad = [
            s - y[0].exp() * params.p0 / z,
            i - y[1].exp() * params.p1 / z,
        ];
        let cand = [y[0] + step * grad[0], y[1] + step * grad[1]];
        let val = objective(cand);
        if val > best {
            best = val;
            y = cand;
        } else {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    Ok(best)
}

const B_TOL: f64 = 1e-9;
const I_FLOOR: f64 = 1e-10;

/// Check membership in the admissible path set: nonnegative coordinates,
/// `s` and `s + i` non-increasing (within tolerance), and absorption once
/// the infected fraction vanishes.
fn check_admissible(f: &Path2) -> std::result::Result<(), String> {
    let v = f.values();
    let mut absorbed_at: Option<usize> = None;
    for (k, val) in v.iter().enumerate() {
        let [s, i] = *val;
        if s < -B_TOL || i < -B_TOL {
            return Err(format!("negative coordinate at node {k}: ({s}, {i})"));
        }
        if k > 0 {
            let [sp, ip] = v[k - 1];
            if s > sp + B_TOL {
                return Err(format!("s increases at node {k}"));
            }
            if s + i > sp + ip + B_TOL {
                return Err(format!("s + i increases at node {k}"));
            }
        }
        if let Some(a) = absorbed_at {
            if i > B_TOL {
                return Err(format!("infected fraction revives at node {k} after dying at node {a}"));
            }
            if (v[a][0] - s).abs() > B_TOL {
                return Err(format!("s moves after absorption (nodes {a} -> {k})"));
            }
        } else if i < I_FLOOR {
            absorbed_at = Some(k);
        }
    }
    Ok(())
}

/// Closed-form dynamic rate of an admissible path, by finite differences and
/// trapezoid quadrature. Returns an infinite report with the reason when the
/// path leaves the admissible set.
pub fn i_dyn(f: &Path2, params: &ModelParams, mean_rho: f64) -> Result<RateReport> {
    params.validate()?;
    let sys = ReactionSystem::new(params.lambda, mean_rho)?;
    if let Err(reason) = check_admissible(f) {
        return Ok(RateReport::infinite(f.grid(), reason));
    }
    let deriv = f.derivative();
    let grid = f.grid();
    let mut density = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let [s, i] = f.values()[k];
        if i < I_FLOOR {
            // absorbed (or never-ignited) region: all fluxes and intensities
            // vanish, zero cost by the 0 log 0 convention
            density.push([0.0]);
            continue;
        }
        let [ds, di] = deriv.values()[k];
        let recovery_flux = (-(ds + di)).max(0.0);
        let infection_flux = (-ds).max(0.0);
        let cost =
            flux_cost(recovery_flux, sys.h1([s, i])) + flux_cost(infection_flux, sys.h2([s, i]));
        if !cost.is_finite() {
            return Ok(RateReport::infinite(
                grid,
                format!("infinite flux cost at t = {}", grid.node(k)),
            ));
        }
        density.push([cost]);
    }
    Ok(RateReport::finite(0.0, Path::new(grid, density)?))
}

/// The variational integrand of the large-deviation supremum:
/// `Phi_f(g) = f_T.g_T - f_0.g_0 - int f.g' - int (e^{g.l1}-1) i_f
///  + lambda E(rho) (e^{g.l2}-1) s_f i_f`.
pub fn phi_functional(f: &Path2, params: &ModelParams, mean_rho: f64, g: &Path2) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::invalid("f and g must share one grid"));
    }
    let sys = ReactionSystem::new(params.lambda, mean_rho)?;
    let grid = f.grid();
    let g_deriv = g.derivative();
    let mut integrand = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let [s, i] = f.values()[k];
        let [gs, gi] = g.values()[k];
        let [dgs, dgi] = g_deriv.values()[k];
        let stieltjes = s * dgs + i * dgi;
        let comp = ((-gi).exp() - 1.0) * sys.h1([s, i]) + ((gi - gs).exp() - 1.0) * sys.h2([s, i]);
        integrand.push([stieltjes + comp]);
    }
    let boundary = mat2::dot(f.last(), g.last()) - mat2::dot(f.first(), g.first());
    Ok(boundary - trapezoid(&Path::new(grid, integrand)?))
}

/// Scalar basis shapes shared by both ascent routines: scaled monomials
/// `(t/T)^k`, k = 0..6, and `sin/cos(pi k t / T)`, k = 1..4.
fn basis_shapes(grid: Grid) -> Vec<Path1> {
    let t_end = grid.t_end();
    let mut shapes: Vec<Path1> = Vec::with_capacity(15);
    for k in 0..=6u32 {
        shapes.push(Path::from_fn(grid, |t| [(t / t_end).powi(k as i32)]));
    }
    for k in 1..=4u32 {
        let w = std::f64::consts::PI * k as f64 / t_end;
        shapes.push(Path::from_fn(grid, |t| [(w * t).sin()]));
        shapes.push(Path::from_fn(grid, |t| [(w * t).cos()]));
    }
    shapes
}

/// One vector basis element: `shape` placed in coordinate `coord`.
struct BasisElement {
    coord: usize,
    shape: Path1,
    /// affine part of the functional along this element
    lin: f64,
}

fn build_basis(f: &Path2) -> Vec<BasisElement> {
    let grid = f.grid();
    let mut out = Vec::new();
    for coord in 0..2 {
        for shape in basis_shapes(grid) {
            let d = shape.derivative();
            let mut integrand = Vec::with_capacity(grid.steps() + 1);
            for k in 0..=grid.steps() {
                integrand.push([f.values()[k][coord] * d.values()[k][0]]);
            }
            let stieltjes = trapezoid(&Path::new(grid, integrand).expect("same grid"));
            let lin = f.last()[coord] * shape.last()[0] - f.first()[coord] * shape.first()[0]
                - stieltjes;
            out.push(BasisElement { coord, shape, lin });
        }
    }
    out
}

const ASCENT_SWEEPS: usize = 200;
const ASCENT_TOL: f64 = 1e-11;
const COEFF_CAP: f64 = 64.0;

/// Certified lower bound on `I_dyn(f)`: the best of `Phi_f` over the supplied
/// seed tilts and a coordinate-ascent pass over the polynomial/trigonometric
/// family started from the best seed. Every returned value is `Phi_f(g)` at
/// an explicit `g`, hence a true lower bound up to quadrature error.
pub fn i_dyn_variational_lower(
    f: &Path2,
    params: &ModelParams,
    mean_rho: f64,
    seeds: &[Path2],
) -> Result<f64> {
    let sys = ReactionSystem::new(params.lambda, mean_rho)?;
    let grid = f.grid();
    let zero = Path::zeros(grid);
    let mut best_seed: &Path2 = &zero;
    let mut best = phi_functional(f, params, mean_rho, best_seed)?;
    for g in seeds {
        let val = phi_functional(f, params, mean_rho, g)?;
        if val > best {
            best = val;
            best_seed = g;
        }
    }

    // Exponent tables of the current g: e1 = g.l1 = -i_g, e2 = g.l2 = i_g - s_g.
    let k_max = grid.steps();
    let mut e1: Vec<f64> = (0..=k_max).map(|k| -best_seed.values()[k][1]).collect();
    let mut e2: Vec<f64> = (0..=k_max)
        .map(|k| best_seed.values()[k][1] - best_seed.values()[k][0])
        .collect();
    let w1: Vec<f64> = (0..=k_max).map(|k| sys.h1(f.values()[k])).collect();
    let w2: Vec<f64> = (0..=k_max).map(|k| sys.h2(f.values()[k])).collect();
    // affine part of Phi at the current g
    let g_affine = {
        let d = best_seed.derivative();
        let mut integrand = Vec::with_capacity(k_max + 1);
        for k in 0..=k_max {
            integrand.push([mat2::dot(f.values()[k], d.values()[k])]);
        }
        mat2::dot(f.last(), best_seed.last()) - mat2::dot(f.first(), best_seed.first())
            - trapezoid(&Path::new(grid, integrand)?)
    };
    let basis = build_basis(f);
    let mut coeffs = vec![0.0f64; basis.len()];
    let dt = grid.dt();
    let quad = |vals: &dyn Fn(usize) -> f64| -> f64 {
        let mut sum = 0.5 * (vals(0) + vals(k_max));
        for k in 1..k_max {
            sum += vals(k);
        }
        sum * dt
    };
    let phi_of = |e1: &[f64], e2: &[f64], affine: f64| -> f64 {
        affine
            - quad(&|k| (e1[k].exp() - 1.0) * w1[k] + (e2[k].exp() - 1.0) * w2[k])
    };
    let mut current = phi_of(&e1, &e2, g_affine);
    let mut affine_coeff_part = 0.0;
    for _ in 0..ASCENT_SWEEPS {
        let start = current;
        for (d, elem) in basis.iter().enumerate() {
            // exponent contribution per unit coefficient
            let (a, b): (Box<dyn Fn(usize) -> f64>, Box<dyn Fn(usize) -> f64>) =
                if elem.coord == 0 {
                    // s-coordinate: e1 unchanged, e2 -= shape
                    (Box::new(|_| 0.0), {
                        let s = &elem.shape;
                        Box::new(move |k| -s.values()[k][0])
                    })
                } else {
                    (
                        {
                            let s = &elem.shape;
                            Box::new(move |k| -s.values()[k][0])
                        },
                        {
                            let s = &elem.shape;
                            Box::new(move |k| s.values()[k][0])
                        },
                    )
                };
            // safeguarded Newton on the concave 1-d section
            let mut c = 0.0f64;
            for _ in 0..40 {
                let d1 = elem.lin
                    - quad(&|k| {
                        a(k) * (e1[k] + c * a(k)).exp() * w1[k]
                            + b(k) * (e2[k] + c * b(k)).exp() * w2[k]
                    });
                let d2 = -quad(&|k| {
                    a(k) * a(k) * (e1[k] + c * a(k)).exp() * w1[k]
                        + b(k) * b(k) * (e2[k] + c * b(k)).exp() * w2[k]
                });
                if d2.abs() < 1e-300 {
                    break;
                }
                let step = (-d1 / d2).clamp(-8.0, 8.0);
                c = (c + step).clamp(
                    -COEFF_CAP - coeffs[d],
                    COEFF_CAP - coeffs[d],
                );
                if step.abs() < 1e-12 {
                    break;
                }
            }
            if c == 0.0 {
                continue;
            }
            // try the move; keep it only if Phi does not decrease
            let new_affine = g_affine + affine_coeff_part + c * elem.lin;
            let mut e1_new = e1.clone();
            let mut e2_new = e2.clone();
            for k in 0..=k_max {
                e1_new[k] += c * a(k);
                e2_new[k] += c * b(k);
            }
            let cand = phi_of(&e1_new, &e2_new, new_affine);
            if cand > current {
                current = cand;
                e1 = e1_new;
                e2 = e2_new;
                affine_coeff_part += c * elem.lin;
                coeffs[d] += c;
            }
        }
        if current - start < ASCENT_TOL {
            break;
        }
    }
    Ok(best.max(current))
}

/// `J_ini(x) = x^T M0^{-1} x / 2`.
pub fn j_ini(x: Vec2, m0: &mat2::Mat2) -> Result<f64> {
    let inv = mat2::inverse(m0)?;
    Ok(0.5 * mat2::quad_form(&inv, x))
}

const SIGMA_COND_CAP: f64 = 1e12;

/// Quadratic dynamic rate `J_dyn(f) = 1/2 int (f' - b f)^T sigma^{-1} (f' - b f)`.
/// Refuses (an infinite report with reason) when `sigma` is near-singular on
/// the grid rather than regularizing it.
pub fn j_dyn(f: &Path2, linz: &Linearization) -> Result<RateReport> {
    let grid = f.grid();
    let deriv = f.derivative();
    let mut density = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let t = grid.node(k);
        let sigma = linz.sigma(t);
        if mat2::sym_condition(&sigma) > SIGMA_COND_CAP {
            return Ok(RateReport::infinite(
                grid,
                format!(
                    "sigma condition number exceeds {SIGMA_COND_CAP:e} at t = {t}; \
                     the quadratic form is not evaluable"
                ),
            ));
        }
        let bf = mat2::matvec(&linz.b(t), f.values()[k]);
        let r = [deriv.values()[k][0] - bf[0], deriv.values()[k][1] - bf[1]];
        let inv = mat2::inverse(&sigma)?;
        density.push([0.5 * mat2::quad_form(&inv, r)]);
    }
    Ok(RateReport::finite(0.0, Path::new(grid, density)?))
}

/// The moderate-deviation variational integrand:
/// `L_f(g) = f_T.g_T - f_0.g_0 - int f.g' - int (b f).g - 1/2 int g^T sigma g`.
pub fn mdp_functional(f: &Path2, linz: &Linearization, g: &Path2) -> Result<f64> {
    if f.grid() != g.grid() {
        return Err(Error::invalid("f and g must share one grid"));
    }
    let grid = f.grid();
    let g_deriv = g.derivative();
    let mut integrand = Vec::with_capacity(grid.steps() + 1);
    for k in 0..=grid.steps() {
        let t = grid.node(k);
        let fv = f.values()[k];
        let gv = g.values()[k];
        let bf = mat2::matvec(&linz.b(t), fv);
        let sg = mat2::quad_form(&linz.sigma(t), gv);
        integrand.push([mat2::dot(fv, g_deriv.values()[k]) + mat2::dot(bf, gv) + 0.5 * sg]);
    }
    let boundary = mat2::dot(f.last(), g.last()) - mat2::dot(f.first(), g.first());
    Ok(boundary - trapezoid(&Path::new(grid, integrand)?))
}

/// Certified lower bound on `J_dyn(f)`: best of the seeds and a coordinate
/// ascent over the basis family. The 1-d sections are exact quadratics, so
/// each coordinate update is closed-form.
pub fn j_dyn_variational_lower(
    f: &Path2,
    linz: &Linearization,
    seeds: &[Path2],
) -> Result<f64> {
    let grid = f.grid();
    let zero = Path::zeros(grid);
    let mut best_seed: &Path2 = &zero;
    let mut best = mdp_functional(f, linz, best_seed)?;
    for g in seeds {
        let val = mdp_functional(f, linz, g)?;
        if val > best {
            best = val;
            best_seed = g;
        }
    }
    let mut g = best_seed.clone();
    let mut current = best;
    let basis = build_basis(f);
    let k_max = grid.steps();
    // precompute sigma and (b f) along the grid
    let sigmas: Vec<mat2::Mat2> = (0..=k_max).map(|k| linz.sigma(grid.node(k))).collect();
    let bfs: Vec<Vec2> = (0..=k_max)
        .map(|k| mat2::matvec(&linz.b(grid.node(k)), f.values()[k]))
        .collect();
    let dt = grid.dt();
    let quad = |vals: &dyn Fn(usize) -> f64| -> f64 {
        let mut sum = 0.5 * (vals(0) + vals(k_max));
        for k in 1..k_max {
            sum += vals(k);
        }
        sum * dt
    };
    for _ in 0..ASCENT_SWEEPS {
        let start = current;
        for elem in &basis {
            let phi = |k: usize| -> Vec2 {
                let mut v = [0.0, 0.0];
                v[elem.coord] = elem.shape.values()[k][0];
                v
            };
            // L(g + c phi) = L(g) + c [lin - int (bf).phi - int g^T sigma phi]
            //              - c^2/2 int phi^T sigma phi
            let slope = elem.lin
                - quad(&|k| mat2::dot(bfs[k], phi(k)))
                - quad(&|k| mat2::dot(g.values()[k], mat2::matvec(&sigmas[k], phi(k))));
            let curve = quad(&|k| mat2::quad_form(&sigmas[k], phi(k)));
            if curve < 1e-300 {
                continue;
            }
            let c = (slope / curve).clamp(-COEFF_CAP, COEFF_CAP);
            if c == 0.0 {
                continue;
            }
            let gain = slope * c - 0.5 * curve * c * c;
            if gain <= 0.0 {
                continue;
            }
            for k in 0..=k_max {
                g.values_mut()[k][elem.coord] += c * elem.shape.values()[k][0];
            }
            current += gain;
        }
        if current - start < ASCENT_TOL {
            break;
        }
    }
    // re-evaluate at the final g to discharge the incremental bookkeeping
    let final_val = mdp_functional(f, linz, &g)?;
    Ok(best.max(final_val))
}
