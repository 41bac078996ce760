//! IO surface of the toolkit: strict run configs, embedding files, metric
//! CSV export, SVG plots, run manifests and the `infoplay` subcommands.

pub mod commands;
pub mod config;
pub mod embed;
pub mod error;
pub mod export;
pub mod manifest;
pub mod svg;

pub use commands::run;
pub use config::{parse_config, parse_config_str, RunConfig};
pub use embed::{read_embeddings, write_embeddings, Dtype, Embeddings};
pub use error::{CliError, ConfigError, EmbeddingError, OutputError};
pub use export::write_metrics_csv;
pub use manifest::RunManifest;
pub use svg::{render_svg, Series};
