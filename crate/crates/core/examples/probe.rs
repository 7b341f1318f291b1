//! Prints per-plan accuracy and trace statistics for the two-moons shift.
//! Usage: probe [seeds]
use srda::experiment::*;
use srda::metrics::lsd_accuracy_trace;
use srda::{Execution, ModelSpec, PlanKind, TrainConfig};

fn main() {
    let seeds: u64 = std::env::args().nth(1).map_or(5, |s| s.parse().expect("seed count"));
    let base = TrainConfig { epochs: 100, batch_size: 64, ..TrainConfig::with_plan(None) };
    let plans = [None, Some(PlanKind::Isotropic), Some(PlanKind::Fgsm), Some(PlanKind::Vat)];
    let seeds: Vec<u64> = (0..seeds).collect();
    let start = std::time::Instant::now();
    let out = compare_on_moons(&MoonsShift::default(), &ModelSpec::small_mlp(2, 2), &base, &plans, &seeds, Execution::Parallel).expect("runs");
    for p in plans {
        let rhos: Vec<f64> = out.iter().filter(|o| o.plan == p).filter_map(|o| o.trace.map(|t| t.rho)).collect();
        let pooled = lsd_accuracy_trace(&mean_history(&out, p).expect("history")).expect("trace").rho;
        println!(
            "{:9} acc {:.4}  rho(mean trace) {:+.3}  mean rho {:+.3}",
            plan_label(p),
            mean_accuracy(&out, p),
            pooled,
            rhos.iter().sum::<f64>() / rhos.len() as f64
        );
    }
    println!("elapsed {:?}", start.elapsed());
}
