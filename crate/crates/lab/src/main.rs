use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use elstm_core::elstm::EGateConfig;
use elstm_core::gradcheck;
use elstm_core::model::ModelKind;
use elstm_core::textdata::gen_random_letters;
use elstm_lab::checkpoint::Checkpoint;
use elstm_lab::corpus::write_corpus;
use elstm_lab::output::{
    write_metrics_csv, ReportDoc, REFERENCE_OVERHEAD_RANDOM_LETTERS, REFERENCE_OVERHEAD_SHAKESPEARE,
};
use elstm_lab::trainer::{self, DataSpec, Schedule, TrainConfig};
use elstm_lab::{LabError, Result};

#[derive(Parser)]
#[command(
    name = "elstm-lab",
    version,
    about = "LSTM and E-LSTM character language model lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a uniformly random a-z corpus.
    GenData {
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its metrics and checkpoint.
    Train {
        #[arg(long, default_value = "elstm")]
        model: ModelKind,
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        #[arg(long)]
        checkpoint_out: Option<PathBuf>,
    },
    /// Train LSTM and E-LSTM with identical settings and report both.
    Compare {
        #[command(flatten)]
        shared: Shared,
        /// Comma-separated loss targets for the epochs-to-target table.
        #[arg(long, value_delimiter = ',', default_value = "1.5,1.2")]
        targets: Vec<f64>,
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Metrics CSV holding both series.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        /// Run the two models one after the other for clean timing.
        #[arg(long)]
        serial: bool,
    },
    /// Finite-difference gradient check on a tiny random net.
    Gradcheck {
        #[arg(long, default_value = "lstm")]
        model: ModelKind,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=32))]
        hidden: u64,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=64))]
        seg_len: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
        tolerance: f64,
        #[arg(long, default_value_t = gradcheck::DEFAULT_EPS, value_parser = positive_f64)]
        eps: f64,
    },
    /// Sample text from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        length: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0, value_parser = positive_f64)]
        temperature: f64,
    },
}

#[derive(Args)]
struct Shared {
    /// Training corpus (UTF-8 text).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    hidden: u64,
    #[arg(long, default_value_t = 80, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: u64,
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    seg_len: u64,
    #[arg(long, default_value_t = 0.1, value_parser = non_negative_f64)]
    lr: f64,
    #[arg(long, default_value_t = 5.0, value_parser = positive_f64)]
    clip: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 25, value_parser = clap::value_parser!(u64).range(1..))]
    egate_window: u64,
    #[arg(long, default_value_t = 1e-3, value_parser = non_negative_f64)]
    egate_lambda: f64,
    #[arg(long, default_value_t = 1.0, value_parser = finite_f64)]
    egate_gain: f64,
}

impl Shared {
    fn config(&self, model: ModelKind) -> TrainConfig {
        TrainConfig {
            model,
            hidden: self.hidden as usize,
            seg_len: self.seg_len as usize,
            epochs: self.epochs as usize,
            lr: self.lr,
            clip: self.clip,
            seed: self.seed,
            egate: EGateConfig {
                window: self.egate_window as usize,
                lambda: self.egate_lambda,
                gain: self.egate_gain,
                ..EGateConfig::default()
            },
            data: DataSpec::File(self.data.clone()),
        }
    }
}

fn finite_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("must be finite".into())
    }
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v = finite_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be > 0".into())
    }
}

fn non_negative_f64(s: &str) -> std::result::Result<f64, String> {
    let v = finite_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("must be >= 0".into())
    }
}

/// Print to stdout. A reader that hangs up early (`| head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {
        match writeln!(std::io::stdout().lock(), $($arg)*) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                return Err(LabError::io("<stdout>", e));
            }
            _ => {}
        }
    };
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LabError::io(path, e))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData { n, seed, out } => {
            let ds = gen_random_letters(n as usize, seed)?;
            write_corpus(&out, &ds)?;
            say!("wrote {n} characters to {}", out.display());
        }
        Command::Train {
            model,
            shared,
            metrics_out,
            checkpoint_out,
        } => {
            let cfg = shared.config(model);
            let (outcome, ds) = trainer::train_run(&cfg)?;
            if let Some(path) = &metrics_out {
                let mut w = create(path)?;
                write_metrics_csv(&mut w, &[(model, &outcome.metrics)])?;
                w.flush().map_err(|e| LabError::io(path, e))?;
            }
            if let Some(path) = &checkpoint_out {
                Checkpoint::from_model(&outcome.model, ds.vocab(), cfg.seed).save(path)?;
            }
            let last = outcome.metrics.last().expect("epochs >= 1");
            let mean = elstm_core::report::mean_seconds(&outcome.metrics).unwrap_or(0.0);
            say!(
                "model={model} epochs={} loss={:.6} accuracy={:.6} mean_epoch_seconds={:.6}",
                last.epoch,
                last.mean_loss,
                last.accuracy,
                mean
            );
        }
        Command::Compare {
            shared,
            targets,
            report_out,
            metrics_out,
            serial,
        } => {
            if let Some(t) = targets.iter().find(|t| !t.is_finite() || **t < 0.0) {
                return Err(LabError::Config(format!(
                    "target loss must be finite and >= 0, got {t}"
                )));
            }
            let cfg_l = shared.config(ModelKind::Lstm);
            let cfg_e = shared.config(ModelKind::Elstm);
            let schedule = Schedule::resolve(serial);
            let cmp = trainer::compare_run(&cfg_l, &cfg_e, &targets, schedule)?;
            let r = &cmp.report;
            if let Some(path) = &metrics_out {
                let mut w = create(path)?;
                write_metrics_csv(
                    &mut w,
                    &[(ModelKind::Lstm, &r.lstm), (ModelKind::Elstm, &r.elstm)],
                )?;
                w.flush().map_err(|e| LabError::io(path, e))?;
            }
            let doc = ReportDoc::new(r, &cfg_e, schedule == Schedule::Serial);
            let json = serde_json::to_string_pretty(&doc)?;
            match &report_out {
                Some(path) => {
                    std::fs::write(path, json + "\n").map_err(|e| LabError::io(path, e))?
                }
                None => say!("{json}"),
            }
            let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.6}"));
            say!(
                "lstm_mean_epoch_seconds={} elstm_mean_epoch_seconds={} overhead_pct={} (reference {REFERENCE_OVERHEAD_RANDOM_LETTERS} / {REFERENCE_OVERHEAD_SHAKESPEARE})",
                fmt(r.lstm_mean_seconds),
                fmt(r.elstm_mean_seconds),
                fmt(r.overhead_pct)
            );
            for row in &r.epochs_to_target {
                let ep = |e: Option<usize>| e.map_or("none".to_string(), |v| v.to_string());
                say!(
                    "target={} lstm={} elstm={} ratio={}",
                    row.target,
                    ep(row.lstm),
                    ep(row.elstm),
                    fmt(row.ratio)
                );
            }
        }
        Command::Gradcheck {
            model,
            hidden,
            seg_len,
            seed,
            tolerance,
            eps,
        } => {
            let g = gradcheck::run(model, hidden as usize, seg_len as usize, seed, eps)?;
            say!(
                "model={model} params={} max_rel_error={:.3e} worst_block={} worst_index={} analytic={:.6e} numeric={:.6e}",
                g.params, g.max_rel_error, g.worst_block, g.worst_index, g.analytic, g.numeric
            );
            if !(g.max_rel_error <= tolerance) {
                eprintln!(
                    "error: gradient check exceeded tolerance {tolerance:e} in block {}",
                    g.worst_block
                );
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sample {
            checkpoint,
            length,
            seed,
            temperature,
        } => {
            let (model, vocab) = Checkpoint::load(&checkpoint)?.to_model()?;
            let text = model.sample(&vocab, length as usize, temperature, seed)?;
            say!("{text}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
