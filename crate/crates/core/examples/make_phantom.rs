//! Write the synthetic test phantom (CT and reference labels) as SVF files.
//!
//! cargo run --release --example make_phantom -- --out-dir phantom

use std::path::PathBuf;

use clap::Parser;
use effseg::phantom::synthetic_phantom;
use effseg::voxgrid::{write_volume, Orientation};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "phantom")]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 96)]
    side: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Storage orientation of the written volumes.
    #[arg(long, default_value = "RAS")]
    orientation: Orientation,
}

fn main() -> effseg::Result<()> {
    let args = Args::parse();
    std::fs::create_dir_all(&args.out_dir).map_err(|e| effseg::Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let p = synthetic_phantom(args.side, args.seed, args.orientation)?;
    let ct = args.out_dir.join("ct.json");
    let gt = args.out_dir.join("labels.json");
    write_volume(&p.image, &ct)?;
    write_volume(&p.labels, &gt)?;
    println!("wrote {} and {}", ct.display(), gt.display());
    Ok(())
}
