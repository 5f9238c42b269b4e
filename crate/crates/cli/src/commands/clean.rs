//! `medcap clean`: run the caption cleaner over a dataset, writing the
//! cleaned dataset plus a line-delimited audit log of every removal.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use medcap_core::corpus::{clean_caption_with, CleanRules};

use crate::dataset::{load_dataset, save_dataset, DatasetFormat};
use crate::formats::{save_audit_log, AuditRecord};
use crate::manifest::RunManifest;

#[derive(Args, Debug)]
pub struct CleanArgs {
    /// Input dataset path.
    #[arg(long = "in")]
    pub input: PathBuf,

    /// Cleaned dataset path.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value = "csv")]
    pub format: DatasetFormat,

    /// Audit log path; defaults to `<out>.audit.jsonl`.
    #[arg(long)]
    pub audit: Option<PathBuf>,

    /// Comma-separated rule families to apply: `demographic`,
    /// `measurement`, `non-ascii`, or the shorthands `all` / `none`.
    /// With `none` the dataset is copied byte-for-byte.
    #[arg(long, default_value = "all", value_delimiter = ',')]
    pub rules: Vec<String>,
}

fn parse_rules(names: &[String]) -> Result<CleanRules> {
    let mut rules = CleanRules::none();
    for name in names {
        match name.as_str() {
            "demographic" => rules.demographic = true,
            "measurement" => rules.measurement = true,
            "non-ascii" => rules.non_ascii = true,
            "all" => rules = CleanRules::default(),
            "none" => rules = CleanRules::none(),
            other => bail!(
                "unknown cleaning rule {other:?} (expected demographic, measurement, non-ascii, all, none)"
            ),
        }
    }
    Ok(rules)
}

pub fn run(args: &CleanArgs) -> Result<()> {
    let rules = parse_rules(&args.rules)?;
    let samples = load_dataset(&args.input, args.format)?;
    let audit_path = args
        .audit
        .clone()
        .unwrap_or_else(|| args.out.with_file_name(format!(
            "{}.audit.jsonl",
            args.out.file_name().unwrap_or_default().to_string_lossy()
        )));

    let no_rules = !(rules.demographic || rules.measurement || rules.non_ascii);
    let mut audit = Vec::with_capacity(samples.len());
    if no_rules {
        // nothing can change: preserve the input byte-for-byte
        std::fs::copy(&args.input, &args.out)
            .with_context(|| format!("copy {} to {}", args.input.display(), args.out.display()))?;
        for s in &samples {
            audit.push(AuditRecord {
                id: s.id.clone(),
                report: clean_caption_with(&s.caption, &rules),
            });
        }
    } else {
        let mut cleaned = samples.clone();
        for (sample, out) in samples.iter().zip(&mut cleaned) {
            let report = clean_caption_with(&sample.caption, &rules);
            out.caption = report.cleaned.clone();
            audit.push(AuditRecord {
                id: sample.id.clone(),
                report,
            });
        }
        save_dataset(&args.out, args.format, &cleaned)?;
    }
    save_audit_log(&audit_path, &audit)?;

    let removed: usize = audit.iter().map(|a| a.report.removed_spans.len()).sum();
    println!(
        "cleaned {} captions, removed {} spans -> {}",
        audit.len(),
        removed,
        args.out.display()
    );

    RunManifest::new("clean")
        .config("format", format!("{:?}", args.format).to_lowercase())
        .config("rules", args.rules.join(","))
        .config("out", args.out.display())
        .config("audit", audit_path.display())
        .input(&args.input)?
        .write(&RunManifest::path_for(&args.out))?;
    Ok(())
}
