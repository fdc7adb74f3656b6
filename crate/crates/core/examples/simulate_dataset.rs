//! Writes a simulated dataset to disk and reads it back.

use loam_kit::eval::{self, simulate_dataset, Dataset};

fn main() -> loam_kit::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example-dataset".into());
    let mut config = eval::preset("figure-eight")?;
    config.sim.frames = 20;
    let dataset = simulate_dataset(&config)?;
    dataset.write(dir.as_ref())?;
    let back = Dataset::open(dir.as_ref())?;
    let first = back.frame(0)?;
    println!(
        "{dir}: {} frames, {} IMU samples, {} gt poses; frame 0 spans [{:.2}, {:.2}] s with {} points",
        back.len(),
        back.imu.len(),
        back.ground_truth.len(),
        first.scan_start,
        first.scan_end,
        first.clouds.iter().map(|c| c.len()).sum::<usize>()
    );
    Ok(())
}
