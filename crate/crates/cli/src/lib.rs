//! IO companion to `medcap-core`: dataset files, persisted lexicons and
//! weight tables, binary checkpoints, audit logs, run manifests, and
//! the implementations behind the `medcap` command-line tool.

pub mod commands;
pub mod dataset;
pub mod formats;
pub mod manifest;

pub use dataset::{load_dataset, load_dataset_with, save_dataset, DatasetFormat, LoadOptions};
pub use manifest::RunManifest;
