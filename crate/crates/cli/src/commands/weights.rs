//! `medcap weights`: evaluate the rarity-weight formula over a
//! persisted lexicon.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use medcap_core::lexicon::weight_table;

use crate::formats::{load_lexicon, save_weight_table};
use crate::manifest::RunManifest;

#[derive(Args, Debug)]
pub struct WeightsArgs {
    /// Lexicon file produced by `medcap lexicon`.
    #[arg(long = "in")]
    pub input: PathBuf,

    /// Weight table output path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &WeightsArgs) -> Result<()> {
    let lexicon = load_lexicon(&args.input)?;
    let table = weight_table(&lexicon);
    if !table.clamped_terms().is_empty() {
        eprintln!(
            "warning: {} term(s) hit the weight floor {} (frequency too close to the sample count): {}",
            table.clamped_terms().len(),
            table.floor(),
            table.clamped_terms().join(", ")
        );
    }
    save_weight_table(&args.out, &lexicon, &table)?;
    println!("weights: {} terms -> {}", table.len(), args.out.display());

    RunManifest::new("weights")
        .config("out", args.out.display())
        .input(&args.input)?
        .write(&RunManifest::path_for(&args.out))?;
    Ok(())
}
