//! A small neural-network kit (MLP, losses, optimizers, synthetic data) and
//! the training harnesses that log matrix-information metrics over a run.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod record;

pub use checkpoint::Checkpoint;
pub use config::{AuxConfig, AuxMode, DataConfig, GrokConfig, SslConfig, SupervisedConfig};
pub use data::{Dataset, Split};
pub use error::TrainError;
pub use mlp::{ArchDescriptor, Mlp};
pub use record::{MetricRecord, Trajectory};
