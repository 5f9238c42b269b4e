//! Subcommand implementations. Each one resolves its configuration,
//! does the work through `medcap-core`, writes its outputs, and drops a
//! run manifest next to the primary output.

pub mod clean;
pub mod lexicon;
pub mod score;
pub mod train_demo;
pub mod weights;

pub use clean::CleanArgs;
pub use lexicon::LexiconArgs;
pub use score::ScoreArgs;
pub use train_demo::TrainDemoArgs;
pub use weights::WeightsArgs;
