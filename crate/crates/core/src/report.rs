//! Epoch metrics and the LSTM-vs-E-LSTM comparison arithmetic.

use alloc::vec::Vec;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean training cross-entropy in nats.
    pub mean_loss: f64,
    /// Top-1 next-character accuracy in [0, 1].
    pub accuracy: f64,
    /// Wall-clock seconds for the epoch.
    pub seconds: f64,
}

/// First epoch whose mean loss is at or below `target`.
pub fn epochs_to_target(series: &[EpochMetrics], target: f64) -> Option<usize> {
    series
        .iter()
        .find(|m| m.mean_loss <= target)
        .map(|m| m.epoch)
}

pub fn mean_seconds(series: &[EpochMetrics]) -> Option<f64> {
    if series.is_empty() {
        return None;
    }
    Some(series.iter().map(|m| m.seconds).sum::<f64>() / series.len() as f64)
}

/// Extra per-epoch time of the E-LSTM, as a percentage of the LSTM time.
pub fn overhead_pct(lstm_mean: f64, elstm_mean: f64) -> f64 {
    (elstm_mean - lstm_mean) / lstm_mean * 100.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetRow {
    pub target: f64,
    pub lstm: Option<usize>,
    pub elstm: Option<usize>,
    /// `lstm / elstm` epochs, when both reached the target.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub lstm: Vec<EpochMetrics>,
    pub elstm: Vec<EpochMetrics>,
    pub lstm_mean_seconds: Option<f64>,
    pub elstm_mean_seconds: Option<f64>,
    pub overhead_pct: Option<f64>,
    pub epochs_to_target: Vec<TargetRow>,
}

impl ComparisonReport {
    pub fn build(lstm: Vec<EpochMetrics>, elstm: Vec<EpochMetrics>, targets: &[f64]) -> Self {
        let lstm_mean_seconds = mean_seconds(&lstm);
        let elstm_mean_seconds = mean_seconds(&elstm);
        let overhead = match (lstm_mean_seconds, elstm_mean_seconds) {
            (Some(l), Some(e)) if l > 0.0 => Some(overhead_pct(l, e)),
            _ => None,
        };
        let rows = targets
            .iter()
            .map(|&target| {
                let l = epochs_to_target(&lstm, target);
                let e = epochs_to_target(&elstm, target);
                TargetRow {
                    target,
                    lstm: l,
                    elstm: e,
                    ratio: match (l, e) {
                        (Some(l), Some(e)) => Some(l as f64 / e as f64),
                        _ => None,
                    },
                }
            })
            .collect();
        Self {
            lstm,
            elstm,
            lstm_mean_seconds,
            elstm_mean_seconds,
            overhead_pct: overhead,
            epochs_to_target: rows,
        }
    }
}
