//! Metrics CSV and comparison-report JSON.

use std::io::{Read, Write};

use elstm_core::model::ModelKind;
use elstm_core::report::{ComparisonReport, EpochMetrics};
use serde::{Deserialize, Serialize};

use crate::trainer::{DataSpec, TrainConfig};
use crate::{LabError, Result};

pub const CSV_HEADER: [&str; 5] = ["epoch", "model", "loss", "accuracy", "seconds"];

/// Reference per-epoch E-LSTM overheads for the random-letter and
/// Shakespeare corpora, in percent.
pub const REFERENCE_OVERHEAD_RANDOM_LETTERS: f64 = 17.53;
pub const REFERENCE_OVERHEAD_SHAKESPEARE: f64 = 24.26;

/// Write a header and one row per epoch per series, floats to 6 decimals.
pub fn write_metrics_csv<W: Write>(out: W, series: &[(ModelKind, &[EpochMetrics])]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for (kind, rows) in series {
        for m in rows.iter() {
            w.write_record([
                m.epoch.to_string(),
                kind.as_str().to_string(),
                format!("{:.6}", m.mean_loss),
                format!("{:.6}", m.accuracy),
                format!("{:.6}", m.seconds),
            ])?;
        }
    }
    w.flush().map_err(|e| LabError::Csv(e.into()))?;
    Ok(())
}

/// One parsed CSV row.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub model: String,
    pub loss: f64,
    pub accuracy: f64,
    pub seconds: f64,
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(LabError::Config(format!(
            "unexpected metrics header {header:?}"
        )));
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochDoc {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesDoc {
    pub mean_epoch_seconds: Option<f64>,
    pub epochs: Vec<EpochDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelsDoc {
    pub lstm: SeriesDoc,
    pub elstm: SeriesDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetDoc {
    pub target: f64,
    pub lstm: Option<usize>,
    pub elstm: Option<usize>,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub data: String,
    pub hidden: usize,
    pub seg_len: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip: f64,
    pub seed: u64,
    pub egate_window: usize,
    pub egate_lambda: f64,
    pub egate_gain: f64,
    pub egate_encode_scale: f64,
    pub schedule: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDoc {
    pub overhead_pct_random_letters: f64,
    pub overhead_pct_shakespeare: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub models: ModelsDoc,
    pub overhead_pct: Option<f64>,
    pub epochs_to_target: Vec<TargetDoc>,
    pub config: ConfigDoc,
    pub reference: ReferenceDoc,
}

fn series_doc(mean: Option<f64>, rows: &[EpochMetrics]) -> SeriesDoc {
    SeriesDoc {
        mean_epoch_seconds: mean,
        epochs: rows
            .iter()
            .map(|m| EpochDoc {
                epoch: m.epoch,
                loss: m.mean_loss,
                accuracy: m.accuracy,
                seconds: m.seconds,
            })
            .collect(),
    }
}

impl ReportDoc {
    /// `cfg` is the E-LSTM config; shared fields are identical for both runs.
    pub fn new(report: &ComparisonReport, cfg: &TrainConfig, serial: bool) -> Self {
        ReportDoc {
            models: ModelsDoc {
                lstm: series_doc(report.lstm_mean_seconds, &report.lstm),
                elstm: series_doc(report.elstm_mean_seconds, &report.elstm),
            },
            overhead_pct: report.overhead_pct,
            epochs_to_target: report
                .epochs_to_target
                .iter()
                .map(|r| TargetDoc {
                    target: r.target,
                    lstm: r.lstm,
                    elstm: r.elstm,
                    ratio: r.ratio,
                })
                .collect(),
            config: ConfigDoc {
                data: match &cfg.data {
                    DataSpec::File(p) => p.display().to_string(),
                    DataSpec::RandomLetters { n, seed } => {
                        format!("random-letters:n={n},seed={seed}")
                    }
                },
                hidden: cfg.hidden,
                seg_len: cfg.seg_len,
                epochs: cfg.epochs,
                lr: cfg.lr,
                clip: cfg.clip,
                seed: cfg.seed,
                egate_window: cfg.egate.window,
                egate_lambda: cfg.egate.lambda,
                egate_gain: cfg.egate.gain,
                egate_encode_scale: cfg.egate.encode_scale,
                schedule: if serial { "serial" } else { "parallel" }.into(),
            },
            reference: ReferenceDoc {
                overhead_pct_random_letters: REFERENCE_OVERHEAD_RANDOM_LETTERS,
                overhead_pct_shakespeare: REFERENCE_OVERHEAD_SHAKESPEARE,
            },
        }
    }
}
