//! `medcap lexicon`: count medical-term document frequencies over a
//! dataset and persist the filtered lexicon.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use medcap_core::corpus::TokenSequence;
use medcap_core::lexicon::build_lexicon;

use crate::dataset::{load_dataset_with, DatasetFormat, LoadOptions};
use crate::formats::save_lexicon;
use crate::manifest::RunManifest;

#[derive(Args, Debug)]
pub struct LexiconArgs {
    /// Input dataset path (raw or cleaned).
    #[arg(long = "in")]
    pub input: PathBuf,

    /// Lexicon output path.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value = "csv")]
    pub format: DatasetFormat,

    /// Drop terms seen in fewer samples than this.
    #[arg(long, default_value_t = 5)]
    pub min_count: u64,
}

pub fn run(args: &LexiconArgs) -> Result<()> {
    // cleaned datasets may contain captions that emptied out
    let tolerant = LoadOptions {
        allow_empty_captions: true,
    };
    let samples = load_dataset_with(&args.input, args.format, tolerant)?;
    let pairs: Vec<(TokenSequence, Vec<String>)> = samples
        .iter()
        .map(|s| {
            (
                TokenSequence::from_text(&s.caption, s.id.clone()),
                s.concepts.clone(),
            )
        })
        .collect();
    let lexicon = build_lexicon(&pairs, args.min_count)?;
    save_lexicon(&args.out, &lexicon)?;
    println!(
        "lexicon: {} terms over {} samples (min_count {}, f_min {}) -> {}",
        lexicon.len(),
        lexicon.sample_count(),
        lexicon.min_count(),
        lexicon.f_min(),
        args.out.display()
    );

    RunManifest::new("lexicon")
        .config("format", format!("{:?}", args.format).to_lowercase())
        .config("min_count", args.min_count)
        .config("out", args.out.display())
        .input(&args.input)?
        .write(&RunManifest::path_for(&args.out))?;
    Ok(())
}
