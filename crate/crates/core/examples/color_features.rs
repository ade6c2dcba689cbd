//! Computes both color encodings for a few synthetic crops.
//!
//! cargo run --example color_features

use trafficgen::scene::{discretize_color, extract_color_clusters, ColorFeature};

fn crop(parts: &[([u8; 3], usize)]) -> Vec<[u8; 3]> {
    parts.iter().flat_map(|(rgb, n)| std::iter::repeat_n(*rgb, *n)).collect()
}

fn main() -> trafficgen::Result<()> {
    let crops = [
        ("red hatchback", crop(&[([220, 20, 30], 300), ([30, 30, 30], 80), ([200, 200, 210], 40)])),
        ("white van", crop(&[([240, 240, 235], 500), ([60, 60, 70], 120)])),
        ("gray sedan", crop(&[([128, 130, 126], 400), ([100, 100, 100], 50)])),
        ("dark suv", crop(&[([25, 28, 30], 350), ([90, 90, 95], 30)])),
    ];
    for (name, pixels) in crops {
        let clusters = extract_color_clusters(&pixels, 5, 0)?;
        let discrete = discretize_color(&pixels, 0)?;
        println!("{name}:");
        if let ColorFeature::Clusters(c) = &clusters {
            for (center, weight) in c.centers.iter().zip(c.weights) {
                println!(
                    "  center ({:.2}, {:.2}, {:.2}) weight {weight:.3}",
                    center[0], center[1], center[2]
                );
            }
        }
        if let ColorFeature::Discrete(p) = discrete {
            println!("  palette: {}", p.name());
        }
    }
    Ok(())
}
