//! Project bounding boxes from a robot's camera onto the floor plane.
//!
//! Builds a depth image where two people stand at 1.5 m and a third at 3 m,
//! then maps each detection in both projection modes.

use growl::projection::{
    project_topdown, BoundingBox, DepthImage, EgocentricDetection, ProjectionMode,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (width, height, max_range) = (640u32, 480u32, 8000u16);
    let mut values = vec![0u16; (width * height) as usize];
    let mut paint = |x0: u32, x1: u32, depth: u16| {
        for y in 100..460 {
            for x in x0..x1 {
                values[(y * width + x) as usize] = depth;
            }
        }
    };
    paint(80, 200, 1500);
    paint(240, 360, 1500);
    paint(460, 520, 3000);
    let depth = DepthImage::new(width, height, values, max_range)?;

    let detections = [
        ("left", [80, 100, 200, 460]),
        ("middle", [240, 100, 360, 460]),
        ("far", [460, 100, 520, 460]),
    ];
    let modes = [
        ("normalized", ProjectionMode::Normalized),
        (
            "pinhole 90 deg",
            ProjectionMode::Pinhole {
                hfov_rad: std::f64::consts::FRAC_PI_2,
            },
        ),
    ];
    for (label, mode) in modes {
        println!("{label}:");
        for (id, [x0, y0, x1, y1]) in detections {
            let det = EgocentricDetection {
                id: id.into(),
                bbox: BoundingBox::new(x0, y0, x1, y1)?,
                theta: None,
            };
            let (x, y) = project_topdown(&det, &depth, width, mode, 5)?;
            println!("  {id:>6}: x {x:7.3}  y {y:7.3}");
        }
    }
    Ok(())
}
