use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use infoplay_core::matinfo;
use infoplay_core::nctheory;
use infoplay_train::checkpoint::Checkpoint;
use infoplay_train::data::Dataset;
use infoplay_train::dynamics::{self, probe_batch};
use infoplay_train::{MetricRecord, SupervisedConfig, Trajectory};
use serde_json::{json, Value};

use crate::config::{canonical_text, parse_config, NcTheoryArgs, RunConfig, VerifyBoundsArgs};
use crate::embed::read_embeddings;
use crate::error::CliError;
use crate::export::{parse_table, write_file, write_metrics_csv, Table};
use crate::manifest::{manifest_path_for, RunManifest};
use crate::svg::{series_from_table, write_svg};

const DEFAULT_FIELDS: [&str; 4] = ["train_acc", "test_acc", "mir", "hdr"];

#[derive(Debug, Parser)]
#[command(name = "infoplay", version, about = "Matrix-information metrics for representations and classifier heads")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// MIR/HDR between the grams of two embedding files.
    Metrics {
        #[arg(long)]
        features: PathBuf,
        /// Per-sample head rows, or one column per class when the feature
        /// file carries labels.
        #[arg(long)]
        head_features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// MIR and HDR under exact Neural Collapse.
    NcTheory {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded random sweep of the three regression bounds.
    VerifyBounds {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Supervised training run.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Semi-supervised training run.
    TrainSsl {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Linear interpolation between two checkpoints.
    Interpolate {
        #[arg(long)]
        ckpt_a: PathBuf,
        #[arg(long)]
        ckpt_b: PathBuf,
        #[arg(long, default_value_t = 21)]
        steps: usize,
        /// Config of the run that produced the checkpoints (`train` or `grok`).
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Magnitude pruning followed by masked fine-tuning.
    Prune {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        sparsity: f64,
        #[arg(long)]
        finetune_steps: usize,
        /// `train` config supplying data, optimizer and probe settings.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Modular-addition run.
    Grok {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Render columns of a metrics CSV as an SVG.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, value_delimiter = ',')]
        fields: Vec<String>,
        #[arg(long, default_value = "step")]
        x: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Metrics {
            features,
            head_features,
            out,
        } => metrics(&features, &head_features, &out),
        Command::NcTheory { classes, out } => nc_theory(classes, out.as_deref()),
        Command::VerifyBounds { seed, trials, out } => verify_bounds(seed, trials, out.as_deref()),
        Command::Train { config, out } => match load(&config, "train")? {
            RunConfig::Train(c) => {
                let t = dynamics::train_supervised(&c)?;
                write_run(&RunConfig::Train(c), &t, &out)
            }
            _ => unreachable!(),
        },
        Command::TrainSsl { config, out } => match load(&config, "train-ssl")? {
            RunConfig::TrainSsl(c) => {
                let t = dynamics::train_semisupervised(&c)?;
                write_run(&RunConfig::TrainSsl(c), &t, &out)
            }
            _ => unreachable!(),
        },
        Command::Grok { config, out } => match load(&config, "grok")? {
            RunConfig::Grok(c) => {
                let t = dynamics::run_grokking(&c)?;
                write_run(&RunConfig::Grok(c), &t, &out)
            }
            _ => unreachable!(),
        },
        Command::Interpolate {
            ckpt_a,
            ckpt_b,
            steps,
            data,
            out,
        } => interpolate(&ckpt_a, &ckpt_b, steps, &data, &out),
        Command::Prune {
            ckpt,
            sparsity,
            finetune_steps,
            config,
            out,
        } => prune(&ckpt, sparsity, finetune_steps, &config, &out),
        Command::Plot { csv, fields, x, out } => plot(&csv, &fields, &x, &out),
    }
}

fn load(path: &Path, expected: &str) -> Result<RunConfig, CliError> {
    let cfg = parse_config(path)?;
    if cfg.command() != expected {
        return Err(CliError::Usage(format!(
            "{} holds a `{}` config, expected `{expected}`",
            path.display(),
            cfg.command()
        )));
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    write_file(path, format!("{text}\n").as_bytes())?;
    Ok(())
}

fn info_json(m: &matinfo::InfoMetrics) -> Value {
    json!({
        "h_f": m.h1,
        "h_v": m.h2,
        "h_joint": m.h_joint,
        "mi": m.mi,
        "mir": m.mir,
        "hdr": m.hdr,
    })
}

fn plot_records(records: &[MetricRecord], path: &Path) -> Result<(), CliError> {
    let table = Table::from_records(records);
    let series = series_from_table(&table, "step", &DEFAULT_FIELDS)?;
    write_svg(&series, "step", path)?;
    Ok(())
}

fn metrics(features: &Path, head: &Path, out: &Path) -> Result<(), CliError> {
    let mut manifest = RunManifest::start(canonical_text(&json!({
        "cmd": "metrics",
        "features": features,
        "head_features": head,
        "out": out,
    })));
    let f = read_embeddings(features)?;
    let v = read_embeddings(head)?;
    let n = f.features.samples();
    let head_cols = if v.features.samples() == n {
        v.features
    } else if let Some(labels) = &f.labels {
        if v.features.samples() == 0 || labels.iter().any(|&y| y >= v.features.samples()) {
            return Err(CliError::Runtime(format!(
                "labels reach past the {} head columns",
                v.features.samples()
            )));
        }
        nctheory::selected_head_columns(&v.features.as_matrix().transpose(), labels)?
    } else {
        return Err(CliError::Runtime(format!(
            "{} feature samples but {} head columns and no labels to pair them",
            n,
            v.features.samples()
        )));
    };
    let m = matinfo::info_metrics(&matinfo::gram(&f.features)?, &matinfo::gram(&head_cols)?)?;
    let mut report = info_json(&m);
    report["samples"] = json!(n);
    write_json(out, &report)?;
    manifest.add_output(out);
    manifest.finish(&manifest_path_for(out, false))?;
    println!(
        "MIR={} HDR={} (N={n})",
        m.mir.map_or("undefined".into(), |v| format!("{v:.6}")),
        m.hdr.map_or("undefined".into(), |v| format!("{v:.6}"))
    );
    Ok(())
}

fn nc_theory(classes: usize, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::NcTheory(NcTheoryArgs { classes });
    let mut manifest = RunManifest::start(cfg.canonical_text());
    let mir = nctheory::nc_theoretical_mir(classes)?;
    let hdr = nctheory::nc_theoretical_hdr(classes)?;
    println!("MIR*={mir:.6} HDR*={hdr:.6}");
    if let Some(out) = out {
        write_json(out, &json!({ "classes": classes, "mir": mir, "hdr": hdr }))?;
        manifest.add_output(out);
        manifest.finish(&manifest_path_for(out, false))?;
    }
    Ok(())
}

fn verify_bounds(seed: u64, trials: usize, out: Option<&Path>) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be positive".into()));
    }
    let cfg = RunConfig::VerifyBounds(VerifyBoundsArgs { seed, trials });
    let mut manifest = RunManifest::start(cfg.canonical_text());
    let sweep = nctheory::verify_bounds(seed, trials)?;
    println!("{}/{} bounds hold", sweep.held(), sweep.total());
    if let Some(out) = out {
        write_json(out, &serde_json::to_value(&sweep)?)?;
        manifest.add_output(out);
        manifest.finish(&manifest_path_for(out, false))?;
    }
    if let Some(v) = sweep.violations.first() {
        return Err(CliError::Invariant(format!(
            "{} violation(s); first: {} with lhs {} > rhs {}",
            sweep.violations.len(),
            v.kind.name(),
            v.lhs,
            v.rhs
        )));
    }
    Ok(())
}

fn write_run(cfg: &RunConfig, t: &Trajectory, out: &Path) -> Result<(), CliError> {
    ensure_dir(out)?;
    let mut manifest = RunManifest::start(cfg.canonical_text());
    let csv = out.join("metrics.csv");
    write_metrics_csv(&t.records, &csv)?;
    let svg = out.join("metrics.svg");
    plot_records(&t.records, &svg)?;
    let ckpt = out.join("checkpoint.bin");
    t.checkpoint.save(&ckpt, &manifest.fingerprint)?;
    for p in [&csv, &svg, &ckpt, &Checkpoint::sidecar_path(&ckpt)] {
        manifest.add_output(p);
    }
    manifest.finish(&manifest_path_for(out, true))?;
    let last = t.last();
    println!(
        "step {}: train_acc={:.4} test_acc={:.4} mir={} hdr={}",
        last.step,
        last.train_acc,
        last.test_acc,
        last.mir().map_or("-".into(), |v| format!("{v:.4}")),
        last.hdr().map_or("-".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn eval_data(cfg: &RunConfig) -> Result<(Dataset, Vec<usize>), CliError> {
    match cfg {
        RunConfig::Train(c) => {
            let data = c.data.build(c.seed)?;
            let probe = probe_batch(&data, c.seed, c.probe_size);
            Ok((data, probe))
        }
        RunConfig::Grok(c) => {
            let data = infoplay_train::data::make_modular_addition(c.modulus, c.train_frac, c.seed)?;
            let probe = probe_batch(&data, c.seed, c.probe_size);
            Ok((data, probe))
        }
        other => Err(CliError::Usage(format!(
            "interpolation needs a `train` or `grok` config, got `{}`",
            other.command()
        ))),
    }
}

fn interpolate(a: &Path, b: &Path, steps: usize, data: &Path, out: &Path) -> Result<(), CliError> {
    if steps < 2 {
        return Err(CliError::Usage("--steps must be at least 2".into()));
    }
    let cfg = parse_config(data)?;
    let (dataset, probe) = eval_data(&cfg)?;
    let ca = Checkpoint::load(a)?;
    let cb = Checkpoint::load(b)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::start(canonical_text(&json!({
        "cmd": "interpolate",
        "ckpt_a": a,
        "ckpt_b": b,
        "steps": steps,
        "data": serde_json::from_str::<Value>(&cfg.canonical_text())?,
    })));
    let points = dynamics::interpolation_sweep(&ca, &cb, steps, &dataset, &probe)?;
    let barrier = dynamics::accuracy_barrier(&points);
    let records: Vec<MetricRecord> = points.iter().map(|p| p.1.clone()).collect();
    let csv = out.join("interpolation.csv");
    write_metrics_csv(&records, &csv)?;
    let svg = out.join("interpolation.svg");
    plot_records(&records, &svg)?;
    let summary = out.join("summary.json");
    write_json(
        &summary,
        &json!({
            "omega": points.iter().map(|p| p.0).collect::<Vec<_>>(),
            "test_acc": records.iter().map(|r| r.test_acc).collect::<Vec<_>>(),
            "barrier": barrier,
        }),
    )?;
    for p in [&csv, &svg, &summary] {
        manifest.add_output(p);
    }
    manifest.finish(&manifest_path_for(out, true))?;
    println!("accuracy barrier {:.2} points over {steps} points", 100.0 * barrier);
    Ok(())
}

fn prune(ckpt: &Path, sparsity: f64, finetune_steps: usize, config: &Path, out: &Path) -> Result<(), CliError> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(CliError::Usage(format!("--sparsity {sparsity} is outside [0, 1)")));
    }
    if finetune_steps == 0 {
        return Err(CliError::Usage("--finetune-steps must be positive".into()));
    }
    let RunConfig::Train(base) = load(config, "train")? else {
        unreachable!()
    };
    let ft = SupervisedConfig {
        steps: finetune_steps,
        eval_every: base.eval_every.min(finetune_steps),
        ..base
    };
    let dense = Checkpoint::load(ckpt)?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::start(canonical_text(&json!({
        "cmd": "prune",
        "ckpt": ckpt,
        "sparsity": sparsity,
        "finetune": serde_json::from_str::<Value>(&RunConfig::Train(ft.clone()).canonical_text())?,
    })));
    let report = dynamics::prune_and_finetune(&dense, sparsity, &ft)?;
    let leaked = report
        .mask
        .keep
        .iter()
        .zip(&report.finetune.checkpoint.params)
        .filter(|(k, p)| !**k && **p != 0.0)
        .count();
    if leaked > 0 {
        return Err(CliError::Invariant(format!("{leaked} pruned parameters became non-zero")));
    }
    let csv = out.join("finetune.csv");
    write_metrics_csv(&report.finetune.records, &csv)?;
    let pruned = out.join("pruned.bin");
    report.finetune.checkpoint.save(&pruned, &manifest.fingerprint)?;
    let summary = out.join("summary.json");
    write_json(
        &summary,
        &json!({
            "sparsity": report.mask.sparsity,
            "acc_before": report.acc_before,
            "acc_pruned": report.acc_pruned,
            "acc_after": report.acc_after,
            "info_before_vs_after": report.info_before_vs_after.as_ref().map(info_json),
        }),
    )?;
    for p in [&csv, &pruned, &Checkpoint::sidecar_path(&pruned), &summary] {
        manifest.add_output(p);
    }
    manifest.finish(&manifest_path_for(out, true))?;
    println!(
        "sparsity {:.3}: acc {:.4} -> {:.4} (pruned, before fine-tune {:.4}); mir {}",
        report.mask.sparsity,
        report.acc_before,
        report.acc_after,
        report.acc_pruned,
        report
            .info_before_vs_after
            .and_then(|i| i.mir)
            .map_or("-".into(), |v| format!("{v:.4}"))
    );
    Ok(())
}

fn plot(csv: &Path, fields: &[String], x: &str, out: &Path) -> Result<(), CliError> {
    let fields: Vec<&str> = if fields.is_empty() {
        DEFAULT_FIELDS.to_vec()
    } else {
        fields.iter().map(String::as_str).collect()
    };
    let mut manifest = RunManifest::start(canonical_text(&json!({
        "cmd": "plot",
        "csv": csv,
        "fields": fields,
        "x": x,
        "out": out,
    })));
    let text = std::fs::read_to_string(csv).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", csv.display())))?;
    let table = parse_table(&text)?;
    let series = series_from_table(&table, x, &fields)?;
    write_svg(&series, x, out)?;
    manifest.add_output(out);
    manifest.finish(&manifest_path_for(out, false))?;
    Ok(())
}
