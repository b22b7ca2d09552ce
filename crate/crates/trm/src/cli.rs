//! The `trm` command-line tool.
//!
//! Exit status is 0 on success, 2 for invalid input or configuration and 3
//! for numerical failures (non-finite values). Failures print one line on
//! standard error: `error: <kind>: <message>`, with kind `validation`, `io`
//! or `numerical`.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trm_core::data::{baseline_correct, generate_synthetic, EegSegmentSet, SynthSpec};
use trm_core::fit::{evaluate, DataView, TrainConfig};
use trm_core::hostnet::{build_model, HostNetConfig};
use trm_core::metrics::paired_ttest;
use trm_core::montage::map_to_topographic;
use trm_core::trm::{count_parameters, derive_schedule};
use trm_core::{Montage, Precision, Real};

use crate::checkpoint::load_checkpoint;
use crate::manifest::RunManifest;
use crate::montage_file::load_montage;
use crate::report::read_csv_column;
use crate::run::{bind_montage, run_experiment, Experiment, Protocol};
use crate::segments::{load_segments, save_segments};
use crate::topomap::save_topographic;
use crate::{precision_from_env, precision_name, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "trm", version, about = "Topographic representation module for EEG decoding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the kernel schedule for a grid.
    Schedule(ScheduleArgs),
    /// Print the TRM trainable-parameter count for a montage.
    Params(ParamsArgs),
    /// Dump the topographic map of one segment.
    Map(MapArgs),
    /// Generate a synthetic segment set with spatially localised classes.
    Gen(GenArgs),
    /// Train under the cross-validation or split protocol.
    Train(TrainArgs),
    /// Score a checkpoint on a segment set.
    Eval(EvalArgs),
    /// Two-tailed paired t-test between two CSV columns.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    /// Four folds: 50% train, 25% validation, 25% test per rotation.
    Cv4,
    /// 80/20 train/validation; test from --test or a 20% hold-out.
    Split,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Grid size as HEIGHTxWIDTH, e.g. 7x9.
    #[arg(long, value_parser = parse_grid)]
    pub grid: (usize, usize),
    /// Base kernel size.
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub montage: PathBuf,
    /// Base kernel size.
    #[arg(long)]
    pub k: usize,
    /// Print the layer summary of the full TRM + host model instead.
    #[arg(long)]
    pub summary: bool,
    /// Segment length for --summary.
    #[arg(long, default_value_t = 280)]
    pub time_points: usize,
    /// Class count for --summary.
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub montage: PathBuf,
    /// Zero-based segment index.
    #[arg(long)]
    pub segment: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub montage: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Active electrodes per class.
    #[arg(long, default_value_t = 4)]
    pub cells_per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub segments_per_class: usize,
    #[arg(long, default_value_t = 128)]
    pub time_points: usize,
    #[arg(long, default_value_t = 4.0)]
    pub amplitude: f64,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 200.0)]
    pub rate: f32,
    #[arg(long, default_value_t = 8.0)]
    pub band_low: f64,
    #[arg(long, default_value_t = 13.0)]
    pub band_high: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `none` for raw EEG into the host, or the TRM base kernel size.
    #[arg(long, value_parser = parse_trm, default_value = "none")]
    pub trm: TrmChoice,
    /// Montage document; required with a TRM.
    #[arg(long)]
    pub montage: Option<PathBuf>,
    /// Subtract the mean of this many leading milliseconds per channel.
    #[arg(long)]
    pub baseline_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "cv4")]
    pub protocol: ProtocolArg,
    /// Separate test set for the split protocol.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub wd: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Print per-epoch losses on standard error.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Write `index,label,prediction` rows here.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First column as FILE:COLUMN (column defaults to test_accuracy).
    #[arg(long)]
    pub a: String,
    /// Second column as FILE:COLUMN, paired row by row with the first.
    #[arg(long)]
    pub b: String,
}

/// TRM selection on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrmChoice(pub Option<usize>);

fn parse_trm(s: &str) -> std::result::Result<TrmChoice, String> {
    if s == "none" {
        return Ok(TrmChoice(None));
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 2 => Ok(TrmChoice(Some(k))),
        _ => Err(format!("expected `none` or a kernel size of at least 2, got {s:?}")),
    }
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let err = || format!("expected HEIGHTxWIDTH with positive integers, got {s:?}");
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(err)?;
    let h: usize = h.trim().parse().map_err(|_| err())?;
    let w: usize = w.trim().parse().map_err(|_| err())?;
    if h == 0 || w == 0 {
        return Err(err());
    }
    Ok((h, w))
}

/// Parses `std::env::args_os`, runs the command and reports failures.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let args: Vec<String> = std::env::args_os()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let stdout = io::stdout();
    match execute(cli.command, &args, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {message}", e.kind());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Runs a command line (without the program name) and writes its output.
pub fn run_from<I, S>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(std::iter::once(OsString::from("trm")).chain(args.iter().cloned()))
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let text: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    execute(cli.command, &text, out)
}

fn execute(command: Command, args: &[String], out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Schedule(a) => schedule(&a, out),
        Command::Params(a) => params(&a, out),
        Command::Map(a) => map(&a, out),
        Command::Gen(a) => gen(&a, out),
        Command::Train(a) => match precision_from_env()? {
            Precision::Fast => train::<f32>(&a, args, out),
            Precision::Check => train::<f64>(&a, args, out),
        },
        Command::Eval(a) => match precision_from_env()? {
            Precision::Fast => eval::<f32>(&a, out),
            Precision::Check => eval::<f64>(&a, out),
        },
        Command::Compare(a) => compare(&a, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(Error::io(Path::new("<stdout>")))
}

fn schedule(a: &ScheduleArgs, out: &mut dyn Write) -> Result<()> {
    let sched = derive_schedule(a.grid, a.k)?;
    let mut text = String::new();
    match a.format {
        Format::Text => {
            text.push_str(&format!(
                "grid {}x{}, k = {}: {} steps\n",
                a.grid.0,
                a.grid.1,
                a.k,
                sched.steps.len()
            ));
            for (i, s) in sched.steps.iter().enumerate() {
                text.push_str(&format!(
                    "{:>3}  kernel {}x{}  -> {}x{}{}\n",
                    i + 1,
                    s.kernel_h,
                    s.kernel_w,
                    s.out_h,
                    s.out_w,
                    if s.has_bias { "  bias" } else { "" }
                ));
            }
        }
        Format::Csv => {
            text.push_str("step,kernel_h,kernel_w,out_h,out_w,bias\n");
            for (i, s) in sched.steps.iter().enumerate() {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    i + 1,
                    s.kernel_h,
                    s.kernel_w,
                    s.out_h,
                    s.out_w,
                    s.has_bias
                ));
            }
        }
    }
    write_out(out, &text)
}

fn params(a: &ParamsArgs, out: &mut dyn Write) -> Result<()> {
    let montage = load_montage(&a.montage)?;
    let sched = derive_schedule(montage.grid(), a.k)?;
    let trm = count_parameters(montage.channel_count(), &sched);
    if !a.summary {
        return write_out(out, &format!("{trm}\n"));
    }
    let model = build_model::<f32>(
        &HostNetConfig::new(a.classes),
        montage.channel_count(),
        a.time_points,
        Some(&montage),
        Some(a.k),
        0,
    )?;
    let rows = model.summary();
    let total: usize = rows.iter().map(|r| r.params).sum();
    let shape = |s: &[usize]| s.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
    let mut text = String::new();
    match a.format {
        Format::Text => {
            for r in &rows {
                text.push_str(&format!(
                    "{:<16} {:<16} {:>8}\n",
                    r.name,
                    shape(&r.output_shape),
                    r.params
                ));
            }
            text.push_str(&format!("{:<16} {:<16} {:>8}\n", "total", "", total));
        }
        Format::Csv => {
            text.push_str("layer,output_shape,params\n");
            for r in &rows {
                text.push_str(&format!("{},{},{}\n", r.name, shape(&r.output_shape), r.params));
            }
            text.push_str(&format!("total,,{total}\n"));
        }
    }
    write_out(out, &text)
}

fn load_data(path: &Path, baseline_ms: Option<f64>) -> Result<EegSegmentSet> {
    let set = load_segments(path)?;
    Ok(match baseline_ms {
        Some(ms) => baseline_correct(&set, ms)?,
        None => set,
    })
}

fn map(a: &MapArgs, out: &mut dyn Write) -> Result<()> {
    let set = load_segments(&a.data)?;
    let montage = bind_montage(&load_montage(&a.montage)?, &set)?;
    let signal = set.segment_tensor::<f32>(a.segment)?;
    let topo = map_to_topographic(&signal, &montage)?;
    save_topographic(&topo, &a.out)?;
    write_out(
        out,
        &format!(
            "wrote {}x{}x{} map to {}\n",
            topo.height(),
            topo.width(),
            topo.time_points(),
            a.out.display()
        ),
    )
}

fn gen(a: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let montage = load_montage(&a.montage)?;
    let spec = SynthSpec {
        band_hz: (a.band_low, a.band_high),
        amplitude: a.amplitude,
        noise_sigma: a.sigma,
        time_points: a.time_points,
        segments_per_class: a.segments_per_class,
        sample_rate_hz: a.rate,
        seed: a.seed,
        ..SynthSpec::localized(&montage, a.classes, a.cells_per_class)?
    };
    let set = generate_synthetic(&spec)?;
    save_segments(&set, &a.out)?;
    write_out(
        out,
        &format!(
            "wrote {} segments ({} channels x {} samples) to {}\n",
            set.len(),
            set.channels(),
            set.time_points(),
            a.out.display()
        ),
    )
}

fn load_model_montage(m: &ModelArgs) -> Result<Option<Montage>> {
    match (&m.montage, m.trm.0) {
        (None, Some(_)) => Err(Error::Invalid("--montage is required with a TRM".into())),
        (Some(path), _) => Ok(Some(load_montage(path)?)),
        (None, None) => Ok(None),
    }
}

fn train<T: Real>(a: &TrainArgs, args: &[String], out: &mut dyn Write) -> Result<()> {
    let set = load_data(&a.data, a.model.baseline_ms)?;
    let test = a
        .test
        .as_deref()
        .map(|p| load_data(p, a.model.baseline_ms))
        .transpose()?;
    let montage = load_model_montage(&a.model)?;
    let exp = Experiment {
        host: HostNetConfig::new(set.n_classes()),
        trm_k: a.model.trm.0,
        protocol: match a.protocol {
            ProtocolArg::Cv4 => Protocol::FourFold,
            ProtocolArg::Split => Protocol::Split,
        },
        train: TrainConfig {
            epochs: a.epochs,
            batch_size: a.batch,
            weight_decay: a.wd,
            learning_rate: a.lr,
            seed: a.seed,
            ..TrainConfig::default()
        },
    };
    exp.train.validate()?;
    let verbose = a.verbose;
    let outcome = run_experiment::<T>(&exp, &set, montage.as_ref(), test.as_ref(), &a.out, |run, rec| {
        if verbose {
            eprintln!(
                "{run} epoch {} train_loss {:.6} val_loss {:.6}",
                rec.epoch, rec.train_loss, rec.val_loss
            );
        }
    })?;
    let manifest_path = a.out.join("manifest.json");
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        arguments: args.to_vec(),
        precision: precision_name(T::PRECISION).into(),
        data: a.data.clone(),
        test_data: a.test.clone(),
        montage: a.model.montage.clone(),
        baseline_ms: a.model.baseline_ms,
        trm_k: exp.trm_k,
        protocol: match exp.protocol {
            Protocol::FourFold => "cv4",
            Protocol::Split => "split",
        }
        .into(),
        train: (&exp.train).into(),
        host: (&exp.host).into(),
        artifacts: outcome.artifacts.clone(),
    };
    manifest.save(&manifest_path)?;
    let mut text = String::from("run,best_epoch,test_accuracy,wall_time_seconds\n");
    for r in &outcome.summary {
        let acc = r.test_accuracy.map_or(String::new(), |v| format!("{v:.4}"));
        text.push_str(&format!(
            "{},{},{acc},{:.2}\n",
            r.run, r.best_epoch, r.wall_time_seconds
        ));
    }
    text.push_str(&format!("manifest: {}\n", manifest_path.display()));
    write_out(out, &text)
}

fn eval<T: Real>(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let set = load_data(&a.data, a.model.baseline_ms)?;
    let montage = load_model_montage(&a.model)?
        .map(|m| bind_montage(&m, &set))
        .transpose()?;
    let mut model = build_model::<T>(
        &HostNetConfig::new(set.n_classes()),
        set.channels(),
        set.time_points(),
        montage.as_ref(),
        a.model.trm.0,
        0,
    )?;
    load_checkpoint(&mut model, &a.checkpoint)?;
    let indices: Vec<usize> = (0..set.len()).collect();
    let result = evaluate(&mut model, DataView::new(&set, &indices), a.batch)?;
    if let Some(path) = &a.predictions {
        let mut text = String::from("index,label,prediction\n");
        for (i, (seg, p)) in set.segments().iter().zip(&result.predictions).enumerate() {
            text.push_str(&format!("{i},{},{p}\n", seg.label));
        }
        std::fs::write(path, text).map_err(Error::io(path))?;
    }
    write_out(out, &format!("loss,accuracy\n{},{}\n", result.loss, result.accuracy))
}

fn column_spec(spec: &str) -> (PathBuf, String) {
    match spec.rsplit_once(':') {
        Some((path, col)) if !col.is_empty() && !col.contains(['/', '\\']) => (PathBuf::from(path), col.to_string()),
        _ => (PathBuf::from(spec), "test_accuracy".to_string()),
    }
}

fn compare(a: &CompareArgs, out: &mut dyn Write) -> Result<()> {
    let (pa, ca) = column_spec(&a.a);
    let (pb, cb) = column_spec(&a.b);
    let xa = read_csv_column(&pa, &ca)?;
    let xb = read_csv_column(&pb, &cb)?;
    if xa.len() != xb.len() {
        return Err(Error::Invalid(format!(
            "columns differ in length: {} vs {} rows",
            xa.len(),
            xb.len()
        )));
    }
    let r = paired_ttest(&xa, &xb)?;
    write_out(
        out,
        &format!("t,df,p\n{},{},{}\n", r.t_statistic, r.degrees_of_freedom, r.p_value),
    )
}
