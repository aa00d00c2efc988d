//! Attention maps as images.
//!
//! Runs one greedy episode and writes every step's four attention
//! distributions (target, action, memory, fused) as 7×7 binary graymaps
//! (PGM — openable in most image viewers), plus an ASCII preview of the
//! first step. With a trained checkpoint the fused map visibly locks onto
//! the target's bin as the agent closes in.
//!
//! Run with: cargo run --release --example export_attention [checkpoint.atnv]

use attnav::gridworld::{sample_task, smoke_corpus, Split};
use attnav::observe::N_V;
use attnav::policy::ModelParams;
use attnav::rollout::{run_episode, ActionMode, RolloutConfig};
use attnav::seeding;
use attnav::tensor::{Graph, Tensor};
use attnav::trainer::{AdamHyper, Checkpoint, TrainConfig};

fn pgm(probs: &[f64]) -> Vec<u8> {
    let max = probs.iter().cloned().fold(0.0_f64, f64::max);
    let mut out = format!("P5\n{N_V} {N_V}\n255\n").into_bytes();
    out.extend(probs.iter().map(|&p| {
        if max > 0.0 {
            (p / max * 255.0).round() as u8
        } else {
            0
        }
    }));
    out
}

fn heat(p: &Tensor) -> String {
    const RAMP: &[u8] = b" .:-=+*#%@";
    let max = p.data().iter().cloned().fold(f64::MIN, f64::max);
    let mut out = String::new();
    for i in 0..N_V {
        out.push_str("    ");
        for j in 0..N_V {
            let v = p.data()[i * N_V + j];
            let idx = if max > 0.0 {
                ((v / max) * (RAMP.len() - 1) as f64).round() as usize
            } else {
                0
            };
            out.push(RAMP[idx.min(RAMP.len() - 1)] as char);
            out.push(' ');
        }
        out.push('\n');
    }
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = smoke_corpus();
    let config = TrainConfig::smoke(0);
    let params = match std::env::args().nth(1) {
        Some(path) => {
            println!("using checkpoint {path}");
            Checkpoint::load(
                std::path::Path::new(&path),
                config.dims,
                AdamHyper::with_lr(config.learning_rate),
            )?
            .params
        }
        None => {
            println!("using fresh parameters (pass a checkpoint path for trained maps)");
            ModelParams::init(config.dims, 0)
        }
    };

    let mut rng = seeding::rng_for(11, "example.attn.task");
    let task = sample_task(&corpus, Split::Train, &mut rng)?;
    let scene = task.scene(&corpus);
    println!(
        "greedy episode in {} hunting '{}'\n",
        scene.id,
        task.target.name()
    );

    let cfg = RolloutConfig {
        max_steps: scene.room_type.eval_step_cap(),
        ..config.rollout()
    };
    let g = Graph::new();
    let vars = params.leaves(&g);
    let outcome = run_episode(
        &g,
        &vars,
        scene,
        task.target,
        &task.start,
        &cfg,
        &mut ActionMode::Greedy,
    )?;

    let dir = std::env::temp_dir().join("attnav-attention-maps");
    std::fs::create_dir_all(&dir)?;
    for (idx, s) in outcome.records.iter().enumerate() {
        let t = idx + 1;
        let b = &s.record.bundle;
        for (tag, grid) in [
            ("p_g", &b.p_g),
            ("p_a", &b.p_a),
            ("p_m", &b.p_m),
            ("p_fused", &b.p_fused),
        ] {
            std::fs::write(
                dir.join(format!("step_{t:03}_{tag}.pgm")),
                pgm(grid.data()),
            )?;
        }
    }

    let first = &outcome.records[0].record.bundle;
    println!("step 1 fused attention (β = {:.2}, {:.2}, {:.2}):", first.beta[0], first.beta[1], first.beta[2]);
    print!("{}", heat(&first.p_fused));

    println!(
        "\nwrote {} steps × 4 maps to {} (success = {})",
        outcome.records.len(),
        dir.display(),
        outcome.success
    );
    println!("the `attnav export-attn` subcommand dumps the same maps plus a full-precision trace");
    Ok(())
}
