//! Command-line front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | usage error |
//! | 2 | data or validation error |
//! | 3 | numerical failure |

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::eval::{
    confidence_select, error_rate, landscape, oracle_select, read_references, selection_error_rate,
    HypothesisSet, Unit, DEFAULT_LANDSCAPE_POINTS,
};
use crate::experiment::{run_experiment, ExperimentConfig};
use crate::fusion::{align, fuse, AlignmentOptions, Scaling};
use crate::model::{
    evaluate, finetune, gen_synthetic, load_checkpoint, mlp_specs, save_checkpoint, train, Activation,
    Dataset, LayerSpec, SyntheticConfig, TrainConfig, DEFAULT_FINETUNE_EPOCHS,
    DEFAULT_TRAIN_EPOCHS,
};
use crate::ot::{OtMethod, SinkhornParams};
use crate::report::{fmt_pct, fmt_sig, render_table, OutputFormat};

#[derive(Debug, Parser)]
#[command(name = "otfuse", version, about = "Optimal-transport alignment and fusion of feed-forward networks")]
struct Cli {
    /// Seed for initialization, shuffling and data generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => OutputFormat::Text,
            Format::Csv => OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the two-domain synthetic task as CSV files into the --out directory.
    GenData {
        #[arg(long, default_value_t = 4.0)]
        shift: f64,
    },
    /// Train a network from scratch; writes a checkpoint to --out.
    Train {
        /// JSON architecture: {"widths": [...], "activation": "relu"} or a list of layer specs.
        #[arg(long)]
        arch: PathBuf,
        /// Training CSV with header f0,...,label.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TRAIN_EPOCHS)]
        epochs: usize,
        #[command(flatten)]
        sgd: SgdArgs,
    },
    /// Align model A onto model B; writes the aligned checkpoint to --out.
    Align {
        model_a: PathBuf,
        model_b: PathBuf,
        /// Transport maps as JSON; defaults to <out>.maps.json.
        #[arg(long)]
        maps: Option<PathBuf>,
        #[command(flatten)]
        align: AlignArgs,
    },
    /// Interpolate an aligned model with B: (1 - lambda) * aligned + lambda * B.
    Fuse {
        aligned: PathBuf,
        model_b: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
    },
    /// Continue training a checkpoint; writes the result to --out.
    Finetune {
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FINETUNE_EPOCHS)]
        epochs: usize,
        #[command(flatten)]
        sgd: SgdArgs,
    },
    /// Mean cross-entropy loss and accuracy of a checkpoint on a dataset.
    Eval {
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Error rates per system, of the oracle selection and of confidence selection.
    Wer {
        #[arg(long)]
        refs: PathBuf,
        /// One file per system; the file stem names the system.
        #[arg(required = true)]
        hyps: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = UnitArg::Word)]
        unit: UnitArg,
    },
    /// Loss along the line from checkpoint 0 to checkpoint 1.
    Landscape {
        checkpoint0: PathBuf,
        checkpoint1: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LANDSCAPE_POINTS)]
        points: usize,
    },
    /// Ablation over seeds on the synthetic task; --out names a report directory.
    Experiment {
        /// Comma-separated seeds; overrides --seed/--num-seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Runs seeds --seed .. --seed + N.
        #[arg(long, default_value_t = 10)]
        num_seeds: u64,
        #[arg(long, default_value_t = 4.0)]
        shift: f64,
        #[arg(long, default_value_t = DEFAULT_TRAIN_EPOCHS)]
        train_epochs: usize,
        #[arg(long, default_value_t = DEFAULT_FINETUNE_EPOCHS)]
        finetune_epochs: usize,
        #[arg(long, default_value_t = DEFAULT_FINETUNE_EPOCHS)]
        broad_adapt_epochs: usize,
        #[arg(long, value_delimiter = ',', default_value = "32,32")]
        hidden: Vec<usize>,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[command(flatten)]
        align: AlignArgs,
    },
}

#[derive(Debug, Args)]
struct SgdArgs {
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

impl SgdArgs {
    fn config(&self, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed,
            shuffle: true,
        }
    }
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[arg(long, value_enum, default_value_t = SolverArg::Exact)]
    solver: SolverArg,
    /// Sinkhorn regularization; default 0.01 * mean(cost).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, value_enum, default_value_t = ScalingArg::Normalized)]
    scaling: ScalingArg,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Compute costs on raw rows of A instead of input-aligned rows.
    #[arg(long)]
    raw_cost: bool,
    /// Append biases to weight rows when computing costs.
    #[arg(long)]
    bias_in_cost: bool,
    /// Also transport the output layer.
    #[arg(long)]
    align_last_layer: bool,
}

impl AlignArgs {
    fn solver(&self) -> OtMethod {
        match self.solver {
            SolverArg::Exact => OtMethod::Exact,
            SolverArg::Sinkhorn => OtMethod::Sinkhorn(SinkhornParams {
                eps: self.eps,
                tol: self.tol,
                max_iter: self.max_iter,
            }),
        }
    }

    fn scaling(&self) -> Scaling {
        match self.scaling {
            ScalingArg::Normalized => Scaling::Normalized,
            ScalingArg::Literal => Scaling::Literal,
        }
    }

    fn options(&self) -> AlignmentOptions {
        AlignmentOptions {
            solver: self.solver(),
            cost_on_aligned_inputs: !self.raw_cost,
            scaling: self.scaling(),
            lambda: self.lambda,
            fix_last_layer: !self.align_last_layer,
            bias_in_cost: self.bias_in_cost,
            ..AlignmentOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Exact,
    Sinkhorn,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScalingArg {
    Normalized,
    Literal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitArg {
    Word,
    Char,
}

/// Architecture file contents.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ArchFile {
    Widths {
        widths: Vec<usize>,
        #[serde(default = "default_activation")]
        activation: Activation,
    },
    Layers(Vec<LayerSpec>),
}

fn default_activation() -> Activation {
    Activation::Relu
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

/// Parses `args` (including the program name), runs the command and writes
/// reports to `stdout`. Diagnostics go to stderr as a single line.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("otfuse: usage error: {msg}");
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("otfuse: error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

fn require_out(out: &Option<PathBuf>, what: &str) -> std::result::Result<PathBuf, Failure> {
    out.clone()
        .ok_or_else(|| Failure::Usage(format!("--out is required to write {what}")))
}

fn read_dataset(path: &Path, num_classes: usize) -> Result<Dataset> {
    Dataset::read_csv(path)?.with_num_classes(num_classes)
}

fn read_arch(path: &Path) -> Result<Vec<LayerSpec>> {
    let text = std::fs::read_to_string(path)?;
    let arch: ArchFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Ok(match arch {
        ArchFile::Widths { widths, activation } => {
            if widths.len() < 2 {
                return Err(Error::InvalidArgument("architecture needs at least two widths".into()));
            }
            mlp_specs(&widths, activation)
        }
        ArchFile::Layers(layers) => layers,
    })
}

/// Writes `text` to `path` if given, and always to `stdout`.
fn emit(text: &str, path: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text)?;
    }
    stdout.write_all(text.as_bytes())?;
    Ok(())
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let format: OutputFormat = cli.format.into();
    match cli.command {
        Command::GenData { shift } => {
            let dir = require_out(&cli.out, "the dataset directory")?;
            std::fs::create_dir_all(&dir)?;
            let data = gen_synthetic(&SyntheticConfig::two_domain(shift), cli.seed)?;
            for (name, set) in [
                ("train_a", &data.train[0]),
                ("train_b", &data.train[1]),
                ("heldout_a", &data.heldout[0]),
                ("heldout_b", &data.heldout[1]),
                ("train_union", &data.train_union()),
                ("heldout_union", &data.heldout_union()),
            ] {
                set.write_csv(dir.join(format!("{name}.csv")))?;
            }
            writeln!(stdout, "wrote 6 datasets to {}", dir.display())?;
        }
        Command::Train { arch, data, epochs, sgd } => {
            let out = require_out(&cli.out, "the checkpoint")?;
            let specs = read_arch(&arch)?;
            let num_classes = specs.last().map_or(0, |s| s.out_dim);
            let data = read_dataset(&data, num_classes)?;
            let ckpt = train(&specs, &data, &sgd.config(epochs, cli.seed))?;
            save_checkpoint(&ckpt, &out)?;
            let e = evaluate(&ckpt, &data)?;
            writeln!(stdout, "train loss {} accuracy {}", fmt_sig(e.loss), fmt_sig(e.accuracy))?;
        }
        Command::Align { model_a, model_b, maps, align: args } => {
            let out = require_out(&cli.out, "the aligned checkpoint")?;
            let a = load_checkpoint(&model_a)?;
            let b = load_checkpoint(&model_b)?;
            let result = align(&a, &b, &args.options())?;
            save_checkpoint(&result.aligned, &out)?;
            let maps_path = maps.unwrap_or_else(|| {
                let mut s = out.clone().into_os_string();
                s.push(".maps.json");
                PathBuf::from(s)
            });
            let layers: Vec<_> = result
                .maps
                .iter()
                .enumerate()
                .map(|(l, map)| {
                    let t = map.matrix();
                    let rows: Vec<&[f64]> = (0..t.rows()).map(|i| t.row(i)).collect();
                    json!({
                        "layer": l,
                        "side": map.side(),
                        "objective": result.objectives[l],
                        "converged": result.converged[l],
                        "permutation": map.as_permutation(),
                        "map": rows,
                    })
                })
                .collect();
            let text = serde_json::to_string_pretty(&json!({ "layers": layers }))
                .map_err(|e| Error::Parse(e.to_string()))?;
            std::fs::write(&maps_path, text + "\n")?;

            let rows: Vec<Vec<String>> = result
                .maps
                .iter()
                .enumerate()
                .map(|(l, map)| {
                    vec![
                        l.to_string(),
                        map.side().to_string(),
                        fmt_sig(result.objectives[l]),
                        if map.as_permutation().is_some() { "hard" } else { "soft" }.to_string(),
                        result.converged[l].to_string(),
                    ]
                })
                .collect();
            let table = render_table(&["layer", "side", "objective", "map", "converged"], &rows, format);
            stdout.write_all(table.as_bytes())?;
        }
        Command::Fuse { aligned, model_b, lambda } => {
            let out = require_out(&cli.out, "the fused checkpoint")?;
            let fused = fuse(&load_checkpoint(&aligned)?, &load_checkpoint(&model_b)?, lambda)?;
            save_checkpoint(&fused, &out)?;
            writeln!(stdout, "fused with lambda {}", fmt_sig(lambda))?;
        }
        Command::Finetune { checkpoint, data, epochs, sgd } => {
            let out = require_out(&cli.out, "the fine-tuned checkpoint")?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let data = read_dataset(&data, ckpt.output_dim())?;
            let tuned = finetune(&ckpt, &data, &sgd.config(epochs, cli.seed))?;
            save_checkpoint(&tuned, &out)?;
            let e = evaluate(&tuned, &data)?;
            writeln!(stdout, "train loss {} accuracy {}", fmt_sig(e.loss), fmt_sig(e.accuracy))?;
        }
        Command::Eval { checkpoint, data } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let data = read_dataset(&data, ckpt.output_dim())?;
            let e = evaluate(&ckpt, &data)?;
            let rows = vec![vec![fmt_sig(e.loss), fmt_sig(e.accuracy), data.len().to_string()]];
            let table = render_table(&["loss", "accuracy", "samples"], &rows, format);
            emit(&table, cli.out.as_deref(), stdout)?;
        }
        Command::Wer { refs, hyps, unit } => {
            let unit = match unit {
                UnitArg::Word => Unit::Word,
                UnitArg::Char => Unit::Char,
            };
            let refs = read_references(&refs, unit)?;
            let sets = hyps
                .iter()
                .map(|p| HypothesisSet::read(p, unit))
                .collect::<Result<Vec<_>>>()?;
            let mut rows = Vec::new();
            for set in &sets {
                rows.push(vec![set.system_name.clone(), fmt_pct(error_rate(&refs, set)?)]);
            }
            rows.push(vec!["oracle".into(), fmt_pct(oracle_select(&sets, &refs)?.wer)]);
            let sbf = match confidence_select(&sets) {
                Ok(sel) => fmt_pct(selection_error_rate(&sets, &sel, &refs)?),
                Err(Error::MissingConfidences { .. }) => "n/a".into(),
                Err(e) => return Err(e.into()),
            };
            rows.push(vec!["sbf".into(), sbf]);
            let header = match unit {
                Unit::Word => "wer_pct",
                Unit::Char => "cer_pct",
            };
            let table = render_table(&["system", header], &rows, format);
            emit(&table, cli.out.as_deref(), stdout)?;
        }
        Command::Landscape { checkpoint0, checkpoint1, data, points } => {
            let c0 = load_checkpoint(&checkpoint0)?;
            let c1 = load_checkpoint(&checkpoint1)?;
            let data = read_dataset(&data, c0.output_dim())?;
            let curve = landscape(&c0, &c1, &data, points)?;
            if let Some(p) = &cli.out {
                curve.write_csv(p)?;
            }
            let text = match format {
                OutputFormat::Csv => curve.to_csv(),
                OutputFormat::Text => {
                    let rows: Vec<Vec<String>> = curve
                        .alphas
                        .iter()
                        .zip(&curve.losses)
                        .map(|(a, l)| vec![fmt_sig(*a), fmt_sig(*l)])
                        .collect();
                    render_table(&["alpha", "loss"], &rows, format)
                }
            };
            stdout.write_all(text.as_bytes())?;
        }
        Command::Experiment {
            seeds,
            num_seeds,
            shift,
            train_epochs,
            finetune_epochs,
            broad_adapt_epochs,
            hidden,
            lr,
            batch_size,
            align: args,
        } => {
            let seeds = seeds.unwrap_or_else(|| (cli.seed..cli.seed + num_seeds).collect());
            let cfg = ExperimentConfig {
                seeds,
                domain_shift: shift,
                train_epochs,
                finetune_epochs,
                broad_adapt_epochs,
                lambda: args.lambda,
                solver: args.solver(),
                scaling: args.scaling(),
                hidden,
                learning_rate: lr,
                batch_size,
                output_dir: cli.out.clone(),
            };
            let report = run_experiment(&cfg)?;
            let text = report.render(format);
            if let Some(dir) = &cfg.output_dir {
                std::fs::create_dir_all(dir)?;
                let name = match format {
                    OutputFormat::Text => "report.txt",
                    OutputFormat::Csv => "report.csv",
                };
                std::fs::write(dir.join(name), &text)?;
                std::fs::write(dir.join("per_seed.csv"), report.per_seed_csv())?;
            }
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}
