//! Renders procedural frames, writes them as a dataset and reads them back.
//!
//! cargo run --example dataset_roundtrip -- [out_dir]

use std::path::PathBuf;

use trafficgen::dataset::synthetic::synthetic_dataset;
use trafficgen::dataset::{open_dataset, write_dataset, Split, SplitRatio};
use trafficgen::scene::{GraphVariant, LatticeSpec};

fn main() -> trafficgen::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/example-dataset".into())
        .into();
    let spec = LatticeSpec::new(4, 4, 1)?;
    let points = synthetic_dataset(24, 7, 64, spec, GraphVariant::Cluster)?;
    // A small test share so a 24-frame set still has a test split.
    let ratio = SplitRatio { train: 5, test: 1 };
    let manifest = write_dataset(points.clone(), &out, ratio)?;
    println!(
        "wrote {} points to {} ({} train / {} test)",
        manifest.count,
        out.display(),
        manifest.split_count(Split::Train),
        manifest.split_count(Split::Test)
    );

    let ds = open_dataset(&out)?;
    for (i, p) in ds.iter().enumerate() {
        let p = p?;
        assert_eq!(p, points[i], "point {i} changed on disk");
    }
    let first = ds.load(0)?;
    let fg = first.segmap.labels().iter().filter(|&&l| l > 0).count();
    println!(
        "point 0: {} entities, {fg} foreground pixels, taken at {:.0}s",
        first.graph.entity_count(),
        first.timestamp
    );
    println!("read back {} points bit-exactly", ds.len());
    Ok(())
}
