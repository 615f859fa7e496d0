//! Timed epoch loops and the two-model comparison.

use std::path::PathBuf;
use std::thread;
use std::time::Instant;

use elstm_core::elstm::EGateConfig;
use elstm_core::model::{Model, ModelKind};
use elstm_core::report::{ComparisonReport, EpochMetrics};
use elstm_core::textdata::{gen_random_letters, CharDataset};

use crate::corpus::load_corpus;
use crate::{LabError, Result};

/// Environment variable capping worker threads for `compare`.
pub const THREADS_ENV: &str = "ELSTM_LAB_THREADS";

#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    File(PathBuf),
    RandomLetters { n: usize, seed: u64 },
}

impl DataSpec {
    pub fn load(&self) -> Result<CharDataset> {
        match self {
            DataSpec::File(path) => load_corpus(path),
            DataSpec::RandomLetters { n, seed } => Ok(gen_random_letters(*n, *seed)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub hidden: usize,
    pub seg_len: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip: f64,
    pub seed: u64,
    pub egate: EGateConfig,
    pub data: DataSpec,
}

impl TrainConfig {
    /// Defaults used by the CLI.
    pub fn new(model: ModelKind, data: DataSpec) -> Self {
        Self {
            model,
            hidden: 100,
            seg_len: 25,
            epochs: 80,
            lr: 0.1,
            clip: 5.0,
            seed: 0,
            egate: EGateConfig::default(),
            data,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(LabError::Config(m));
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.hidden == 0 {
            return fail("hidden must be >= 1".into());
        }
        if self.seg_len == 0 {
            return fail("seg-len must be >= 1".into());
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return fail(format!("lr must be >= 0, got {}", self.lr));
        }
        if !(self.clip > 0.0) {
            return fail(format!("clip must be > 0, got {}", self.clip));
        }
        self.egate
            .validate()
            .map_err(|e| LabError::Config(e.to_string()))
    }
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub model: Model,
}

/// Load the configured dataset and train on it.
pub fn train_run(cfg: &TrainConfig) -> Result<(TrainOutcome, CharDataset)> {
    let ds = cfg.data.load()?;
    let out = train_on(cfg, &ds)?;
    Ok((out, ds))
}

/// Steps one model through its epochs on a borrowed dataset.
pub struct Trainer<'a> {
    cfg: &'a TrainConfig,
    ds: &'a CharDataset,
    model: Model,
    metrics: Vec<EpochMetrics>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &'a TrainConfig, ds: &'a CharDataset) -> Result<Self> {
        cfg.validate()?;
        let v = ds.vocab().len();
        let model = Model::new(cfg.model, v, cfg.hidden, v, cfg.seed, cfg.egate)?;
        Ok(Self {
            cfg,
            ds,
            model,
            metrics: Vec::with_capacity(cfg.epochs),
        })
    }

    pub fn finished(&self) -> bool {
        self.metrics.len() >= self.cfg.epochs
    }

    /// Run one epoch. Its seconds cover forward, backward, update and E-gate
    /// work, read from a monotonic clock.
    pub fn epoch(&mut self) -> Result<&EpochMetrics> {
        let epoch = self.metrics.len() + 1;
        let start = Instant::now();
        let stats = self
            .model
            .train_epoch(self.ds, self.cfg.seg_len, self.cfg.lr, self.cfg.clip)
            .map_err(|f| LabError::Training {
                epoch,
                segment: f.segment,
                source: f.error,
            })?;
        let seconds = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
        self.metrics.push(EpochMetrics {
            epoch,
            mean_loss: stats.mean_loss,
            accuracy: stats.accuracy,
            seconds,
        });
        Ok(self.metrics.last().expect("just pushed"))
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            metrics: self.metrics,
            model: self.model,
        }
    }
}

/// Train for `cfg.epochs` epochs.
pub fn train_on(cfg: &TrainConfig, ds: &CharDataset) -> Result<TrainOutcome> {
    let mut t = Trainer::new(cfg, ds)?;
    while !t.finished() {
        t.epoch()?;
    }
    Ok(t.finish())
}

/// Loss and top-1 accuracy without touching the model.
pub fn evaluate(model: &Model, ds: &CharDataset, seg_len: usize) -> Result<(f64, f64)> {
    Ok(model.evaluate(ds, seg_len)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Both runs on their own threads. Co-scheduling can perturb wall-clock
    /// comparisons.
    Parallel,
    /// One thread, alternating epochs between the two models so slow spells
    /// on the host hit both series alike.
    Serial,
}

impl Schedule {
    /// Parallel unless `serial` is set or the thread cap is 1.
    pub fn resolve(serial: bool) -> Self {
        let capped = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .is_some_and(|n| n <= 1);
        if serial || capped {
            Schedule::Serial
        } else {
            Schedule::Parallel
        }
    }
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub lstm: TrainOutcome,
    pub elstm: TrainOutcome,
}

fn check_shared(a: &TrainConfig, b: &TrainConfig) -> Result<()> {
    let mut diffs = vec![];
    if a.data != b.data {
        diffs.push("data");
    }
    if a.hidden != b.hidden {
        diffs.push("hidden");
    }
    if a.seg_len != b.seg_len {
        diffs.push("seg_len");
    }
    if a.lr != b.lr {
        diffs.push("lr");
    }
    if a.clip != b.clip {
        diffs.push("clip");
    }
    if a.epochs != b.epochs {
        diffs.push("epochs");
    }
    if a.seed != b.seed {
        diffs.push("seed");
    }
    if a.model != ModelKind::Lstm || b.model != ModelKind::Elstm {
        diffs.push("model (expected lstm then elstm)");
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(LabError::Config(format!(
            "compared runs differ in {}",
            diffs.join(", ")
        )))
    }
}

/// Train both models on one dataset and build the report.
pub fn compare_on(
    cfg_lstm: &TrainConfig,
    cfg_elstm: &TrainConfig,
    ds: &CharDataset,
    targets: &[f64],
    schedule: Schedule,
) -> Result<Comparison> {
    check_shared(cfg_lstm, cfg_elstm)?;
    let (lstm, elstm) = match schedule {
        Schedule::Serial => {
            let mut a = Trainer::new(cfg_lstm, ds)?;
            let mut b = Trainer::new(cfg_elstm, ds)?;
            while !a.finished() {
                a.epoch()?;
                b.epoch()?;
            }
            (a.finish(), b.finish())
        }
        Schedule::Parallel => thread::scope(|s| {
            let a = s.spawn(|| train_on(cfg_lstm, ds));
            let b = s.spawn(|| train_on(cfg_elstm, ds));
            let a = a.join().expect("lstm worker panicked");
            let b = b.join().expect("elstm worker panicked");
            Ok::<_, LabError>((a?, b?))
        })?,
    };
    let report = ComparisonReport::build(lstm.metrics.clone(), elstm.metrics.clone(), targets);
    Ok(Comparison {
        report,
        lstm,
        elstm,
    })
}

pub fn compare_run(
    cfg_lstm: &TrainConfig,
    cfg_elstm: &TrainConfig,
    targets: &[f64],
    schedule: Schedule,
) -> Result<Comparison> {
    check_shared(cfg_lstm, cfg_elstm)?;
    let ds = cfg_lstm.data.load()?;
    compare_on(cfg_lstm, cfg_elstm, &ds, targets, schedule)
}
