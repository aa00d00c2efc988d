//! Finite-difference verification of the hand-rolled autodiff.
//!
//! The workbench computes every gradient by reverse-mode sweeps over a
//! recorded tape — no autodiff framework underneath — so it ships its own
//! oracle: central finite differences of the complete model (all three
//! attention units, β fusion, reduce/input layers, LSTM, actor, critic)
//! through a scripted 3-step episode, perturbing every element of all 17
//! parameter tensors.
//!
//! Run with: cargo run --release --example gradcheck [instances]

use attnav::policy::stack_gradcheck;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let instances: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(3);

    println!("checking d(Σ_t ln π_t(a_t) + V_t)/dθ across {instances} seeded instance(s)…");
    let start = std::time::Instant::now();
    let report = stack_gradcheck(instances, 0)?;
    let secs = start.elapsed().as_secs_f64();

    println!(
        "max relative error: {:.3e}  ({} parameter elements per instance, {:.1}s)",
        report.max_rel_err, report.elements, secs
    );
    println!(
        "tolerance 1e-4: {}",
        if report.max_rel_err <= 1e-4 {
            "PASS"
        } else {
            "FAIL"
        }
    );
    println!("\nthe same sweep runs as `attnav gradcheck` (20 instances by default)");
    Ok(())
}
