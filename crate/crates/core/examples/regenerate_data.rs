//! Rewrites the synthetic datasets under `data/` from their fixed seeds.

use std::path::Path;

use drghmc::model::{synthesize_irt, synthesize_stoch_vol, IRT_SEED, STOCH_VOL_SEED};

fn main() -> drghmc::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let sv = synthesize_stoch_vol(500, STOCH_VOL_SEED).to_json()?;
    std::fs::write(dir.join("stoch_vol.json"), sv + "\n").expect("write stoch_vol.json");
    let irt = synthesize_irt(100, 20, IRT_SEED).to_json()?;
    std::fs::write(dir.join("irt_2pl.json"), irt + "\n").expect("write irt_2pl.json");
    Ok(())
}
