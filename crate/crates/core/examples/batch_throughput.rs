//! Forward-kinematics throughput for growing batch sizes on the full-body
//! fixture (min/median/max of 5 trials).
//!
//! cargo run --release --example batch_throughput

use skelkin::{bench, fixtures};

fn main() -> skelkin::Result<()> {
    let model = fixtures::fullbody();
    let rows = bench::run(&model, &[1, 4, 16, 64, 256], 8192, 5, 1, 0)?;
    print!("{}", bench::table(&rows));
    Ok(())
}
