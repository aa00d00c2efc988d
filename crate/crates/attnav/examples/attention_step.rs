//! One forward step through the full attention policy.
//!
//! Builds a fresh model, renders a real observation, and walks it through
//! the three spatial attention units — target (where do features match the
//! goal class?), action (where was I heading?), memory (what does the
//! recurrent state expect?) — their learned-β log-space fusion, and the
//! LSTM actor-critic head. Prints every distribution as an ASCII heat map
//! plus the resulting action probabilities and value estimate.
//!
//! Run with: cargo run --release --example attention_step

use attnav::attention::FusionConfig;
use attnav::gridworld::{smoke_corpus, AgentPose};
use attnav::observe::{render, target_embedding, N_V};
use attnav::policy::{initial_state, policy_forward, ModelDims, ModelParams};
use attnav::tensor::Tensor;

/// Render a probability grid with density glyphs (row-major n×n).
fn heat(p: &Tensor, n: usize) -> String {
    const RAMP: &[u8] = b" .:-=+*#%@";
    let max = p.data().iter().cloned().fold(f64::MIN, f64::max);
    let mut out = String::new();
    for i in 0..n {
        out.push_str("    ");
        for j in 0..n {
            let v = p.data()[i * n + j];
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
    let scene = &corpus.scenes[0];
    let target = scene.present_classes()[0];
    let pose = AgentPose::new(4, 1, 90, 0);

    let dims = ModelDims::default();
    let params = ModelParams::init(dims, 0);
    let map = render(scene, &pose);
    let embedding = target_embedding(target);
    let state = initial_state(dims.attn.d_m);

    let (pi, value, _next_state, bundle) = policy_forward(
        &params,
        map.values(),
        &embedding.u_g,
        &state,
        FusionConfig::default(),
    )?;

    println!(
        "scene {}, target '{}', pose ({}, {}) heading {}°\n",
        scene.id,
        target.name(),
        pose.x,
        pose.y,
        pose.heading_deg
    );

    for (name, p) in [
        ("target unit p_g (feature ~ goal embedding)", &bundle.p_g),
        ("action unit p_a (feature ~ previous action)", &bundle.p_a),
        ("memory unit p_m (feature ~ recurrent state)", &bundle.p_m),
        ("fused p (β-weighted log-space product)", &bundle.p_fused),
    ] {
        let sum: f64 = p.data().iter().sum();
        println!("{name} — sums to {sum:.12}:");
        print!("{}", heat(p, N_V));
    }

    println!(
        "fusion weights β = ({:.4}, {:.4}, {:.4})  (target, action, memory)",
        bundle.beta[0], bundle.beta[1], bundle.beta[2]
    );
    println!("\naction distribution π:");
    for action in attnav::gridworld::Action::ALL {
        println!(
            "  {:<12} {:.4}",
            action.name(),
            pi.data()[action.ordinal()]
        );
    }
    println!("\ncritic value V = {value:.4}");
    println!("\n(fresh parameters: β starts at 1 each and the maps are near");
    println!("uniform; training sharpens them — see the train_smoke example)");
    Ok(())
}
