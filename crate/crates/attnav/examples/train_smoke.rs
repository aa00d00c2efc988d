//! Synchronous advantage actor-critic training, end to end.
//!
//! Trains the full attention policy on the 12-scene smoke corpus (8
//! training layouts, 4 held-out validation layouts) until greedy success
//! on the held-out layouts reaches 85% or the episode budget runs out.
//! Validation lines stream as they happen; the best snapshot is saved as a
//! checkpoint and re-scored with the evaluator. Takes a few minutes of CPU
//! time.
//!
//! Run with: cargo run --release --example train_smoke [seed]

use attnav::evaluator::{evaluate, EvalOptions};
use attnav::gridworld::{smoke_corpus, Split};
use attnav::trainer::{train_observed, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(0);

    let corpus = smoke_corpus();
    let config = TrainConfig::smoke(seed);
    println!(
        "training on {} scenes ({} train / {} val), {} workers, budget {} episodes,",
        corpus.scenes.len(),
        corpus.indices_in_split(Split::Train).len(),
        corpus.indices_in_split(Split::Val).len(),
        config.workers,
        config.total_episodes
    );
    println!(
        "early stop at {:.0}% validation success (seed {seed})\n",
        config.stop_at_val_success.unwrap_or(1.0) * 100.0
    );

    let started = std::time::Instant::now();
    let outcome = train_observed(&config, &corpus, &mut |record| {
        if record.val_success.is_some() || record.skipped {
            println!("{}", record.render_line());
        }
    })?;
    let secs = started.elapsed().as_secs_f64();

    println!(
        "\ntrained {} episodes / {} updates in {:.0}s — best validation success {:.2}",
        outcome.episodes, outcome.updates_applied, secs, outcome.best_val_success
    );

    let ckpt_path = std::env::temp_dir().join(format!("attnav-smoke-seed{seed}.atnv"));
    outcome.best_checkpoint().save(&ckpt_path)?;
    println!("best checkpoint saved to {}", ckpt_path.display());

    // Independent re-score of the saved snapshot on the held-out layouts.
    let eval = evaluate(
        &outcome.best_params,
        &corpus,
        &EvalOptions {
            split: Split::Val,
            episodes_per_room: 100,
            seed,
            rollout: config.rollout(),
            ..EvalOptions::default()
        },
    )?;
    println!(
        "evaluator re-score on val: success {:.2}, SPL {:.3} over {} episodes",
        eval.metrics.overall.success, eval.metrics.overall.spl, eval.results.len()
    );
    println!("\nscore it any time with:");
    println!("  attnav eval --ckpt {} --preset smoke --smoke --split val", ckpt_path.display());
    Ok(())
}
