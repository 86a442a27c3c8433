//! Trains on the default synthetic benchmark and prints test accuracy per
//! test mode.
//!
//! cargo run --release --example curriculum -- <schedule> <measure> <seeds> [alpha] [beta] [tasks] [lambda]

use std::time::Instant;

use hardmeta::metatrain::{evaluate, train, EvalSettings, Schedule, TestMode, TrainPlan};
use hardmeta::synth::default_benchmark;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let schedule = Schedule::parse(&arg(0, "uniform"), 0.8)?;
    let measure = arg(1, "hsic").parse()?;
    let seeds: u64 = arg(2, "3").parse()?;
    let alpha: f64 = arg(3, "0.1").parse()?;
    let beta: f64 = arg(4, "0.01").parse()?;
    let tasks: usize = arg(5, "2000").parse()?;
    let lambda: f64 = arg(6, "0.3333333333333333").parse()?;

    for seed in 0..seeds {
        let start = Instant::now();
        let (train_split, test_split) = default_benchmark(seed)?;
        let plan = TrainPlan {
            tasks,
            batch: 4,
            lambda,
            ways: 5,
            shots: 5,
            queries: 10,
            alpha,
            beta,
            measure,
            schedule,
            seed,
            ..TrainPlan::default()
        };
        let (state, logs) = train(&plan, &train_split.data, Some(&train_split.taxonomy))?;
        let first = &logs[0];
        let last = logs.last().unwrap();
        let mut line = format!(
            "seed {seed} loss {:.3}->{:.3}",
            first.mean_weighted_loss, last.mean_weighted_loss
        );
        for mode in [TestMode::Random, TestMode::AllEasy, TestMode::AllHard] {
            let r = evaluate(
                &state,
                &test_split.data,
                Some(&test_split.taxonomy),
                &EvalSettings { tasks: 300, ways: 5, shots: 5, queries: 10, mode, seed: 1000 + seed },
            )?;
            line.push_str(&format!(" {}={:.4}", mode, r.mean));
        }
        println!("{line} ({:.1}s)", start.elapsed().as_secs_f64());
    }
    Ok(())
}
