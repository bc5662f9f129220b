use sirdev::environment::WeightDistribution;
use sirdev::estimators::*;
use sirdev::fluid;
use sirdev::path::{Grid, Path};
use sirdev::rates;
use sirdev::sir::ModelParams;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("ldp");
    let dist = WeightDistribution::Constant { value: 1.0 };
    match which {
        "ldp" => {
            // candidate criterion-6 configuration
            let lam: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1.5);
            let t0: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(2.0);
            let reps: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(20_000);
            let p = ModelParams::new(lam, 0.55, 0.35, t0).unwrap();
            let grid = Grid::new(t0, 500).unwrap();
            let controls = fluid::ControlPair::constant(grid, 2.0, 0.5).unwrap();
            let target = fluid::controlled_path(&p, 1.0, &controls, [p.p0, p.p1]).unwrap();
            let fine = fluid::controlled_path(
                &p,
                1.0,
                &fluid::ControlPair::constant(Grid::new(t0, 2000).unwrap(), 2.0, 0.5).unwrap(),
                [p.p0, p.p1],
            )
            .unwrap();
            let x_hat = fluid::fluid_ode(&p, 1.0, Grid::new(t0, 2000).unwrap()).unwrap();
            println!("dist(f, fluid) = {}", fine.sup_sum_dist(&x_hat).unwrap());
            let idyn = rates::i_dyn(&fine, &p, 1.0).unwrap();
            println!("I_dyn(f) = {}", idyn.total);
            let event = EventSpec {
                target,
                radius: 0.05,
                space: PathSpace::Ldp,
            };
            for n in [100usize, 200, 400] {
                let t = std::time::Instant::now();
                let r = estimate_is_ldp(
                    EnvironmentMode::Annealed,
                    &p,
                    dist,
                    &event,
                    n,
                    reps,
                    1234,
                    0,
                    IsOptions { conditioning: Conditioning::ForceConditioned, ..Default::default() },
                )
                .unwrap();
                println!(
                    "n={n}: hits={} ess={:.0} logP={:.3} rate={:.4} theo={:?} se/est={:.3} [{:?}]",
                    r.hit_count,
                    r.ess,
                    r.log_estimate,
                    r.rate_empirical,
                    r.rate_theoretical,
                    r.std_error / r.is_estimate,
                    t.elapsed()
                );
            }
        }
        "mdp" => {
            let lam: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3.0);
            let p0: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.7);
            let p1: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.05);
            let t0: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(5.0);
            let reps: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(20_000);
            let p = ModelParams::new(lam, p0, p1, t0).unwrap();
            let grid = Grid::new(t0, 500).unwrap();
            let linz = fluid::linearize(&p, 1.0, Grid::new(t0, 2000).unwrap()).unwrap();
            let g: sirdev::Path2 = Path::constant(grid, [0.5, 0.5]);
            let target = fluid::mdp_tilted_ode(&linz, &g, [0.0, 0.0]).unwrap();
            println!("||f|| = {}", target.sup_sum_norm());
            let fine_target = fluid::mdp_tilted_ode(
                &linz,
                &Path::constant(Grid::new(t0, 2000).unwrap(), [0.5, 0.5]),
                [0.0, 0.0],
            )
            .unwrap();
            let jdyn = rates::j_dyn(&fine_target, &linz).unwrap();
            println!("J_dyn(f) = {}", jdyn.total);
            let event = EventSpec {
                target,
                radius: 0.3,
                space: PathSpace::Mdp { a_exponent: 0.75 },
            };
            for n in [1000usize, 4000] {
                let t = std::time::Instant::now();
                let r = estimate_is_mdp(
                    EnvironmentMode::Annealed,
                    &p,
                    dist,
                    &event,
                    n,
                    reps,
                    1234,
                    0,
                    IsOptions::default(),
                )
                .unwrap();
                println!(
                    "n={n}: hits={} ess={:.0} logP={:.3} rate={:.4} theo={:?} se/est={:.3} [{:?}]",
                    r.hit_count,
                    r.ess,
                    r.log_estimate,
                    r.rate_empirical,
                    r.rate_theoretical,
                    r.std_error / r.is_estimate,
                    t.elapsed()
                );
            }
        }
        "mdpdry" => {
            // sweep: report ||f||, J_dyn, and the scalar-shrinkage bound on
            // the in-ball rate gap for candidate parameter sets
            for (lam, p0, p1, t0) in [
                (2.2f64, 0.7, 0.1, 4.0),
                (2.5, 0.7, 0.08, 4.0),
                (2.0, 0.75, 0.1, 5.0),
                (2.5, 0.75, 0.05, 4.0),
                (3.0, 0.7, 0.05, 3.5),
                (2.0, 0.7, 0.15, 4.5),
                (1.8, 0.75, 0.15, 5.0),
                (2.2, 0.75, 0.08, 4.5),
            ] {
                let p = ModelParams::new(lam, p0, p1, t0).unwrap();
                let linz = fluid::linearize(&p, 1.0, Grid::new(t0, 2000).unwrap()).unwrap();
                let g: sirdev::Path2 =
                    Path::constant(Grid::new(t0, 2000).unwrap(), [0.5, 0.5]);
                let f = fluid::mdp_tilted_ode(&linz, &g, [0.0, 0.0]).unwrap();
                let norm = f.sup_sum_norm();
                let j = rates::j_dyn(&f, &linz).unwrap().total;
                let shrink = (1.0 - (0.3 / norm).min(1.0)).powi(2);
                println!(
                    "lam={lam} p0={p0} p1={p1} T0={t0}: ||f||={norm:.3} J={j:.4} \
                     shrunk-gap={:.0}%",
                    (1.0 - shrink) * 100.0
                );
            }
        }
        _ => eprintln!("unknown probe {which}"),
    }
}
