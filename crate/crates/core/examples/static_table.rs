//! Repeated static evaluations of the bundled sports fixture: SRS against
//! TWCS at the cost-optimal second-stage size.
//!
//! ```text
//! cargo run --release -p kgacc --example static_table -- 1000
//! ```

use kgacc::cost::{optimal_m, AccuracyProfile, CostParams, Requirement};
use kgacc::orchestrator::SessionConfig;
use kgacc::sampling::SamplingDesign;
use kgacc::sim::{nell_fixture, static_trials, StaticSummary};
use kgacc::stratify::cum_sqrt_f;

fn main() {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let (g, ls) = nell_fixture();
    let req = Requirement::default();
    let cp = CostParams::default();
    let plan = optimal_m(&AccuracyProfile::of_graph(&g, &ls), req, cp, 1..=20).unwrap();
    let m = plan.best.m;
    println!("m* = {m} (predicted {} units, {:.2} h)", plan.best.n, plan.best.cost / 3600.0);
    let designs = [
        ("SRS", SamplingDesign::Srs),
        ("TWCS", SamplingDesign::Twcs { m }),
        ("TWCS, size strata", SamplingDesign::StratifiedTwcs { m, strata: cum_sqrt_f(&g, 2).unwrap() }),
    ];
    for (name, d) in designs {
        let cfg = SessionConfig::new(d, req, cp, 0);
        let t0 = std::time::Instant::now();
        let s = StaticSummary::of(&static_trials(&g, &ls, &cfg, trials, 7).unwrap());
        println!(
            "{name:<18} hours {:.2} ± {:.2}   estimate {:.1}% ± {:.1}%   units {:.0}   ({:.1?})",
            s.hours.mean,
            s.hours.std,
            100.0 * s.estimate.mean,
            100.0 * s.estimate.std,
            s.units.mean,
            t0.elapsed()
        );
    }
}
