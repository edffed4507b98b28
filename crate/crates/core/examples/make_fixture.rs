//! Regenerates the shipped fixture dataset under `data/fixture`.

use std::path::PathBuf;

use molehill::synth::{synthesize, SynthConfig};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixture");
    let data = synthesize(&SynthConfig::default());
    data.write_dir(&dir)?;
    println!("wrote {} charts and {} annotations to {}", data.charts.len(), data.rows.len(), dir.display());
    Ok(())
}
