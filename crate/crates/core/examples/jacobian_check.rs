//! Analytic marker Jacobian against central finite differences on the
//! full-body fixture and a few random trees.
//!
//! cargo run --example jacobian_check

use skelkin::jacobian::{max_relative_error, DEFAULT_FD_STEP};
use skelkin::synth::{random_model, random_state};
use skelkin::{finite_difference_jacobian, fixtures, marker_jacobian};

fn main() -> skelkin::Result<()> {
    let body = fixtures::fullbody();
    let mut models = vec![("fullbody".to_string(), body)];
    for seed in 0..4 {
        models.push((format!("random tree #{seed}"), random_model(6 + seed as usize, seed)));
    }
    for (seed, (name, model)) in models.iter().enumerate() {
        let state = random_state(model, 100 + seed as u64);
        let analytic = marker_jacobian(model, &state)?;
        let fd = finite_difference_jacobian(model, &state, DEFAULT_FD_STEP)?;
        let structural = (0..analytic.rows())
            .flat_map(|r| (0..analytic.cols()).map(move |c| (r, c)))
            .filter(|&(r, c)| analytic.is_structural(r, c))
            .count();
        println!(
            "{name:>16}: {}x{} Jacobian, {structural} structural entries, max relative error {:.2e}",
            analytic.rows(),
            analytic.cols(),
            max_relative_error(&analytic.matrix, &fd.matrix)
        );
    }
    Ok(())
}
