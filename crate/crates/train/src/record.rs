use infoplay_core::InfoMetrics;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;

/// One evaluation point. `info` pairs the probe-batch feature gram with the
/// gram of the head rows of each probe sample's class; `None` when the
/// metrics could not be formed (e.g. fewer than two non-zero feature rows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub info: Option<InfoMetrics>,
    /// Same pairing with the probe features centered first.
    pub centered: Option<InfoMetrics>,
    pub mask_fraction: Option<f64>,
    pub aux_loss: Option<f64>,
}

impl MetricRecord {
    pub fn mir(&self) -> Option<f64> {
        self.info.and_then(|i| i.mir)
    }

    pub fn hdr(&self) -> Option<f64> {
        self.info.and_then(|i| i.hdr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub fingerprint: String,
    pub records: Vec<MetricRecord>,
    pub checkpoint: Checkpoint,
}

impl Trajectory {
    pub fn first(&self) -> &MetricRecord {
        &self.records[0]
    }

    pub fn last(&self) -> &MetricRecord {
        self.records.last().expect("trajectories hold at least one record")
    }
}

/// Running mean of an optional per-step quantity between two records.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Accum {
    sum: f64,
    count: usize,
}

impl Accum {
    pub fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    pub fn take(&mut self) -> Option<f64> {
        let out = (self.count > 0).then(|| self.sum / self.count as f64);
        *self = Self::default();
        out
    }
}
