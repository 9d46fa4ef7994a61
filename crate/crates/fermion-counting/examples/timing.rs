//! Wall-clock cost of single trajectories at production sizes.

use std::time::Instant;

use fermion_counting::model::ModelParams;
use fermion_counting::trajectory::{run_trajectory, Model, RunConfig, Stepper};

fn main() {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("number")).collect();
    let (l, gamma, eta, t_measure) = match args.as_slice() {
        [l, g, e, t] => (*l as usize, *g, *e, *t),
        _ => (200, 0.1, 1.0, 0.0),
    };
    let model = Model::local(ModelParams::from_density(l, 1.0, gamma, 0.4, eta).unwrap()).unwrap();
    let cfg = RunConfig { t_measure, ..RunConfig::default() };
    let stepper = Stepper::for_config(model, &cfg).unwrap();
    let start = Instant::now();
    let s = run_trajectory(0, &cfg, &stepper).unwrap();
    println!("L={l} gamma={gamma} eta={eta}: {} snapshots, {} jumps, {:.2?}", s.snapshots, s.jumps, start.elapsed());
}
