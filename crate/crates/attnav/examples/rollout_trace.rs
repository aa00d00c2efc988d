//! One full episode, step by step.
//!
//! Samples a task from the smoke corpus, runs a fresh (untrained) policy
//! with sampled actions, and prints the per-step trace: pose, chosen
//! action, reward, fusion weights, and whether the target is inside the
//! current view. Shows the episode mechanics — step penalties, termination
//! by Done, the success test — before any learning enters the picture.
//!
//! Run with: cargo run --release --example rollout_trace [seed]

use attnav::gridworld::{sample_task, smoke_corpus, Split};
use attnav::policy::ModelParams;
use attnav::rollout::{run_episode, ActionMode, RolloutConfig};
use attnav::seeding;
use attnav::tensor::Graph;
use attnav::trainer::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(7);

    let corpus = smoke_corpus();
    let mut task_rng = seeding::rng_for(seed, "example.task");
    let task = sample_task(&corpus, Split::Train, &mut task_rng)?;
    let scene = task.scene(&corpus);

    let config = TrainConfig::smoke(seed);
    let params = ModelParams::init(config.dims, seed);
    let cfg = RolloutConfig {
        max_steps: scene.room_type.eval_step_cap(),
        ..config.rollout()
    };

    println!(
        "scene {}: find '{}' from ({}, {}) heading {}° (seed {seed})\n",
        scene.id,
        task.target.name(),
        task.start.x,
        task.start.y,
        task.start.heading_deg
    );

    let mut action_rng = seeding::rng_for(seed, "example.actions");
    let g = Graph::new();
    let vars = params.leaves(&g);
    let outcome = run_episode(
        &g,
        &vars,
        scene,
        task.target,
        &task.start,
        &cfg,
        &mut ActionMode::Sample(&mut action_rng),
    )?;

    println!("  t  pose (x,y,hdg,tilt)   action        reward   β(g,a,m)           sees target");
    for (idx, s) in outcome.records.iter().enumerate() {
        println!(
            " {:>2}  ({:>2},{:>2},{:>3}°,{:>3}°)   {:<12} {:>6.2}   ({:.2}, {:.2}, {:.2})   {}",
            idx + 1,
            s.pose.x,
            s.pose.y,
            s.pose.heading_deg,
            s.pose.tilt_deg,
            s.record.action.name(),
            s.record.reward,
            s.record.bundle.beta[0],
            s.record.bundle.beta[1],
            s.record.bundle.beta[2],
            if s.target_visible() { "yes" } else { "no" }
        );
    }

    println!(
        "\noutcome: success = {}, terminated by Done = {}, steps = {}, total reward = {:.2}",
        outcome.success,
        outcome.terminated,
        outcome.records.len(),
        outcome.total_reward()
    );
    println!("final pose ({}, {}) heading {}°", outcome.final_pose.x, outcome.final_pose.y, outcome.final_pose.heading_deg);
    println!("\n(an untrained policy mostly wanders; train_smoke shows the same");
    println!("trace machinery after learning)");
    Ok(())
}
