//! `medcap score`: n-gram metrics over two caption files aligned by
//! line number.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use medcap_core::corpus::{clean_caption, TokenSequence};
use medcap_core::metrics::{cider_d, score_corpus, MetricReport};

use crate::dataset::load_caption_lines;
use crate::manifest::RunManifest;

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Generated captions, one per line.
    #[arg(long)]
    pub candidates: PathBuf,

    /// Reference captions, one per line, aligned with the candidates.
    #[arg(long)]
    pub references: PathBuf,

    /// Write the report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Apply the default cleaning rules to the references before
    /// scoring (off by default: references are scored as-is).
    #[arg(long)]
    pub clean_refs: bool,

    /// Report the CIDEr-D variant in the CIDEr column.
    #[arg(long)]
    pub cider_d: bool,
}

fn to_sequences(lines: &[String], prefix: &str, clean: bool) -> Vec<TokenSequence> {
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let text = if clean {
                clean_caption(line).cleaned
            } else {
                line.clone()
            };
            TokenSequence::from_text(&text, format!("{prefix}{i}"))
        })
        .collect()
}

pub fn format_report(report: &MetricReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "samples    {}", report.sample_count);
    let _ = writeln!(out, "BLEU-1     {:.6}", report.bleu1);
    let _ = writeln!(out, "ROUGE-1    {:.6}", report.rouge1);
    let _ = writeln!(out, "ROUGE-L    {:.6}", report.rouge_l);
    let _ = writeln!(out, "CIDEr      {:.6}", report.cider);
    let _ = writeln!(out, "BERTScore  n/a");
    let _ = writeln!(out, "METEOR     n/a");
    let _ = writeln!(out, "BLEURT     n/a");
    let _ = writeln!(out, "CLIPScore  n/a");
    let _ = writeln!(out);
    let _ = writeln!(out, "bleu1={:.6}", report.bleu1);
    let _ = writeln!(out, "rouge1={:.6}", report.rouge1);
    let _ = writeln!(out, "rouge_l={:.6}", report.rouge_l);
    let _ = writeln!(out, "cider={:.6}", report.cider);
    out
}

pub fn run(args: &ScoreArgs) -> Result<()> {
    let cand_lines = load_caption_lines(&args.candidates)?;
    let ref_lines = load_caption_lines(&args.references)?;
    if cand_lines.len() != ref_lines.len() {
        bail!(
            "{} has {} lines but {} has {}",
            args.candidates.display(),
            cand_lines.len(),
            args.references.display(),
            ref_lines.len()
        );
    }
    let cands = to_sequences(&cand_lines, "c", false);
    let refs = to_sequences(&ref_lines, "r", args.clean_refs);
    let mut report = score_corpus(&cands, &refs)?;
    if args.cider_d {
        report.cider = cider_d(&cands, &refs)?;
    }

    let text = format_report(&report);
    print!("{text}");

    let mut manifest = RunManifest::new("score")
        .config("clean_refs", args.clean_refs)
        .config("cider_d", args.cider_d)
        .input(&args.candidates)?
        .input(&args.references)?;
    if let Some(out) = &args.out {
        std::fs::write(out, &text)?;
        manifest = manifest.config("out", out.display());
        manifest.write(&RunManifest::path_for(out))?;
    } else {
        // stdout is the primary output; the manifest goes to stderr
        eprintln!("{}", serde_json::to_string(&manifest)?);
    }
    Ok(())
}
