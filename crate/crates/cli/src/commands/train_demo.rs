//! `medcap train-demo`: train the toy conditional caption generator on
//! a synthetic corpus, or run the four-cell ablation, with fully seeded
//! determinism.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use medcap_core::loss::MkeNorm;
use medcap_core::trainer::{
    ablate, make_synthetic_corpus, train, AblationTable, EvalReport, TermProfile, TrainConfig,
};

use crate::formats::{save_metrics_log, save_model};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MkeNormArg {
    /// Normalize the knowledge term by the full sequence length.
    Full,
    /// Normalize by the number of medical positions instead.
    Medical,
}

impl From<MkeNormArg> for MkeNorm {
    fn from(arg: MkeNormArg) -> Self {
        match arg {
            MkeNormArg::Full => MkeNorm::FullLength,
            MkeNormArg::Medical => MkeNorm::MedicalCount,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainDemoArgs {
    /// Synthetic corpus size.
    #[arg(long, default_value_t = 200)]
    pub n_samples: usize,

    /// Weight of the knowledge-enhancement loss term.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,

    /// Adapter residual scale.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,

    /// Adapter bottleneck rank.
    #[arg(long, default_value_t = 8)]
    pub rank: usize,

    /// Hidden width of the toy model.
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,

    #[arg(long, default_value_t = 10)]
    pub epochs: usize,

    #[arg(long, default_value_t = 0.3)]
    pub lr: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Train without the adapter (frozen pathway only).
    #[arg(long)]
    pub no_adapter: bool,

    /// Train with the plain language-model loss only.
    #[arg(long)]
    pub no_mke: bool,

    #[arg(long, value_enum, default_value = "full")]
    pub mke_norm: MkeNormArg,

    /// Run the four-cell ablation instead of a single training run.
    #[arg(long)]
    pub ablate: bool,

    /// Checkpoint path (the full configuration's model when ablating).
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write the human-readable report here as well as to stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Machine-readable report rows (JSON).
    #[arg(long)]
    pub report_json: Option<PathBuf>,

    /// Per-step loss log (CSV: step,lm,mke,total).
    #[arg(long)]
    pub metrics_log: Option<PathBuf>,
}

impl TrainDemoArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            alpha: self.alpha,
            rank: self.rank,
            hidden_dim: self.hidden,
            learning_rate: self.lr,
            epochs: self.epochs,
            seed: self.seed,
            use_adapter: !self.no_adapter,
            use_mke: !self.no_mke,
            mke_norm: self.mke_norm.into(),
            lexicon_min_count: 1,
        }
    }
}

fn format_eval(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "perplexity          {:.6}", report.perplexity);
    let _ = writeln!(out, "term recall         {:.6}", report.term_recall);
    let _ = writeln!(out, "rare term recall    {:.6}", report.rare_term_recall);
    let _ = writeln!(
        out,
        "final epoch loss    {:.6}",
        report.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    match report.epochs_to_half_loss {
        Some(e) => {
            let _ = writeln!(out, "epochs to half-loss {e}");
        }
        None => {
            let _ = writeln!(out, "epochs to half-loss n/a");
        }
    }
    let history: Vec<String> = report
        .loss_history
        .iter()
        .map(|l| format!("{l:.4}"))
        .collect();
    let _ = writeln!(out, "loss history        {}", history.join(" "));
    out
}

fn format_ablation(table: &AblationTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>12} {:>17} {:>14}",
        "cell", "perplexity", "term_recall", "rare_term_recall", "final_loss"
    );
    for (cell, report) in &table.rows {
        let _ = writeln!(
            out,
            "{:<12} {:>10.4} {:>12.4} {:>17.4} {:>14.6}",
            cell.name(),
            report.perplexity,
            report.term_recall,
            report.rare_term_recall,
            report.loss_history.last().copied().unwrap_or(f64::NAN)
        );
    }
    out
}

pub fn run(args: &TrainDemoArgs) -> Result<()> {
    let config = args.config();
    let corpus = make_synthetic_corpus(args.n_samples, &TermProfile::default_profile(), args.seed)?;

    let text;
    let rows_json;
    if args.ablate {
        let table = ablate(&config, &corpus)?;
        text = format_ablation(&table);
        rows_json = serde_json::to_string_pretty(
            &table
                .rows
                .iter()
                .map(|(cell, report)| (cell.name(), report.clone()))
                .collect::<Vec<_>>(),
        )?;
        if args.out.is_some() || args.metrics_log.is_some() {
            // checkpoint and step log come from the full configuration
            let outcome = train(&config, &corpus)?;
            if let Some(out) = &args.out {
                save_model(out, &outcome.model)?;
            }
            if let Some(path) = &args.metrics_log {
                save_metrics_log(path, &outcome.step_log)?;
            }
        }
    } else {
        let outcome = train(&config, &corpus)?;
        text = format_eval(&outcome.report);
        rows_json = serde_json::to_string_pretty(&outcome.report)?;
        if let Some(out) = &args.out {
            save_model(out, &outcome.model)?;
        }
        if let Some(path) = &args.metrics_log {
            save_metrics_log(path, &outcome.step_log)?;
        }
    }

    print!("{text}");
    if let Some(path) = &args.report {
        std::fs::write(path, &text)?;
    }
    if let Some(path) = &args.report_json {
        std::fs::write(path, format!("{rows_json}\n"))?;
    }

    let manifest = RunManifest::new("train-demo")
        .seed(args.seed)
        .config("n_samples", args.n_samples)
        .config("beta", args.beta)
        .config("alpha", args.alpha)
        .config("rank", args.rank)
        .config("hidden", args.hidden)
        .config("epochs", args.epochs)
        .config("lr", args.lr)
        .config("use_adapter", !args.no_adapter)
        .config("use_mke", !args.no_mke)
        .config(
            "mke_norm",
            match args.mke_norm {
                MkeNormArg::Full => "full",
                MkeNormArg::Medical => "medical",
            },
        )
        .config("ablate", args.ablate);
    // next to the primary output when one exists, stderr otherwise
    let manifest_anchor = args
        .out
        .clone()
        .or_else(|| args.report.clone())
        .or_else(|| args.report_json.clone());
    match manifest_anchor {
        Some(anchor) => manifest.write(&RunManifest::path_for(&anchor))?,
        None => eprintln!("{}", serde_json::to_string(&manifest)?),
    }
    Ok(())
}
