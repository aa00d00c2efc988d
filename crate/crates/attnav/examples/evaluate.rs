//! The evaluation harness and its report format.
//!
//! Scores a policy by greedy rollouts over a split: success rate, SPL
//! (success weighted by optimal/actual path length, computed against the
//! BFS oracle), the hard subset (episodes whose optimal path is ≥ 5
//! moves), per-room breakdowns, per-step β-fusion statistics, and the
//! target-detection rate. Prints the full structured report.
//!
//! With no argument it scores a fresh untrained model — a useful floor.
//! Pass a checkpoint (e.g. from train_smoke or `attnav train`) to see a
//! trained policy's numbers on the held-out validation layouts.
//!
//! Run with: cargo run --release --example evaluate [checkpoint.atnv]

use attnav::evaluator::{evaluate, render_report, EvalOptions};
use attnav::gridworld::{smoke_corpus, Split};
use attnav::policy::ModelParams;
use attnav::trainer::{AdamHyper, Checkpoint, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = smoke_corpus();
    let config = TrainConfig::smoke(0);

    let (params, label) = match std::env::args().nth(1) {
        Some(path) => {
            let ckpt = Checkpoint::load(
                std::path::Path::new(&path),
                config.dims,
                AdamHyper::with_lr(config.learning_rate),
            )?;
            (ckpt.params, format!("checkpoint {path}"))
        }
        None => (
            ModelParams::init(config.dims, 0),
            "fresh untrained model (pass a checkpoint path for a trained one)".into(),
        ),
    };
    println!("scoring {label}");
    println!("split: val (held-out layouts), 100 greedy episodes\n");

    let eval = evaluate(
        &params,
        &corpus,
        &EvalOptions {
            split: Split::Val,
            episodes_per_room: 100,
            seed: 0,
            rollout: config.rollout(),
            ..EvalOptions::default()
        },
    )?;

    // The trailing [[beta_statistics]] rows are the same table that
    // `attnav beta-stats` prints standalone.
    print!("{}", render_report(&eval));
    Ok(())
}
