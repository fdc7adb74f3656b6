//! Full odometry on a simulated corridor drive, frame by frame.

use loam_kit::eval::{self, simulate_dataset, Runner};

fn main() -> loam_kit::Result<()> {
    let mut config = eval::preset("corridor")?;
    config.sim.frames = 60;
    let dataset = simulate_dataset(&config)?;
    let mut runner = Runner::new(config.pipeline(), &dataset)?;
    while let Some(r) = runner.step()? {
        if r.frame % 10 == 0 {
            let t = r.pose.translation();
            println!(
                "frame {:>3}  x {:>6.3}  y {:>6.3}  source {:<13} points {:>5}  leaf {:.3}  map {}",
                r.frame,
                t.x,
                t.y,
                r.source.as_str(),
                r.filtered_points,
                r.voxel_leaf,
                r.map.alive
            );
        }
    }
    let out = runner.finish()?;
    if let Some(ape) = out.ape {
        println!(
            "mean APE {:.4} m, final error {:.3}% of {:.1} m",
            ape.mean_m,
            ape.final_error_pct(),
            ape.distance_m
        );
    }
    Ok(())
}
