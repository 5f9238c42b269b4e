use clap::{Parser, Subcommand};
use medcap::commands::{self, CleanArgs, LexiconArgs, ScoreArgs, TrainDemoArgs, WeightsArgs};

/// Caption-training toolkit: dataset cleaning, medical-term lexicons
/// with rarity weights, n-gram caption metrics, and a deterministic
/// toy training demo. All randomness flows from --seed; runs drop a
/// manifest next to their primary output.
#[derive(Parser)]
#[command(name = "medcap", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean captions (demographic phrases, measurements, non-ASCII).
    Clean(CleanArgs),
    /// Build the medical-term lexicon with document frequencies.
    Lexicon(LexiconArgs),
    /// Compute rarity weights for a persisted lexicon.
    Weights(WeightsArgs),
    /// Score candidate captions against references.
    Score(ScoreArgs),
    /// Train the toy caption generator on a synthetic corpus.
    TrainDemo(TrainDemoArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Clean(args) => commands::clean::run(args),
        Command::Lexicon(args) => commands::lexicon::run(args),
        Command::Weights(args) => commands::weights::run(args),
        Command::Score(args) => commands::score::run(args),
        Command::TrainDemo(args) => commands::train_demo::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
