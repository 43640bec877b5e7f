use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use spnet_core::metrics::{EVariant, EvalOptions};
use spnet_harness::ablate::{ablate, parse_variants, ALL_VARIANTS};
use spnet_harness::attributes::Sidecar;
use spnet_harness::config::RunConfig;
use spnet_harness::data::{load_dataset, Sample};
use spnet_harness::eval::{attr_eval, evaluate_pairs, load_pairs, write_grouped, write_report, Emit};
use spnet_harness::gradcheck::{gradcheck, DEFAULT_EPS, DEFAULT_SAMPLES};
use spnet_harness::train::train_toy;
use spnet_harness::{forward, io, synth, HarnessError, Result};

/// SPNet RGB-D saliency toolkit: toy training, gradient checks, ablations and
/// evaluation.
#[derive(Parser, Debug)]
#[command(name = "spnet", version, about)]
struct Cli {
    /// Run configuration (JSON); defaults apply to missing fields
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,

    /// Seed for initialization, data generation and augmentation
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for evaluation
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Predict saliency maps for one RGB-D pair
    Forward {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        depth: PathBuf,
    },
    /// Evaluate a directory of predictions against ground-truth masks
    Eval(EvalArgs),
    /// Evaluate per attribute group (object count, scale, or a sidecar column)
    AttrEval {
        #[command(flatten)]
        eval: EvalArgs,
        /// `count`, `scale`, or a sidecar column name
        #[arg(long, default_value = "count")]
        attr: String,
        /// CSV with a stem column followed by label columns
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of the training loss
    Gradcheck {
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
    /// Train on a data directory or on generated triples
    TrainToy(DataArgs),
    /// Train and score ablation variants
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated variants (A1..A4, B1..B3, C1, C2, CIM1, CIM3, full)
        #[arg(long)]
        variants: Option<String>,
    },
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    gt_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Emit::Both)]
    emit: Emit,
    /// Report the maximum or the mean of the E-measure curve
    #[arg(long, value_enum, default_value_t = EVariantArg::Max)]
    e_variant: EVariantArg,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum EVariantArg {
    Max,
    Mean,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Directory with rgb/, depth/ and gt/ PNG subdirectories
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Overrides the configured epoch count
    #[arg(long)]
    epochs: Option<usize>,
}

fn load_run(cli: &Cli) -> Result<RunConfig> {
    let run = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(match cli.seed {
        Some(seed) => run.with_seed(seed),
        None => run,
    })
}

fn training_data(run: &RunConfig, args: &DataArgs) -> Result<Vec<Sample>> {
    match &args.data_dir {
        Some(dir) => load_dataset(dir, run.model.input_size),
        None => Ok(synth::generate(run.synthetic_samples, run.model.input_size, run.seed)),
    }
}

fn eval_options(args: &EvalArgs) -> EvalOptions {
    let e_variant = match args.e_variant {
        EVariantArg::Max => EVariant::Max,
        EVariantArg::Mean => EVariant::Mean,
    };
    EvalOptions { e_variant, ..Default::default() }
}

fn apply_epochs(mut run: RunConfig, args: &DataArgs) -> Result<RunConfig> {
    if let Some(e) = args.epochs {
        run.epochs = e;
    }
    run.validate()?;
    Ok(run)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| HarnessError::validation(e.to_string()))?;
    }
    let out: &Path = &cli.out;
    match &cli.command {
        Command::Forward { weights, rgb, depth } => {
            let run = load_run(&cli)?;
            for path in forward::forward_files(&run, weights, rgb, depth, out)? {
                println!("{}", path.display());
            }
        }
        Command::Eval(args) => {
            let report = evaluate_pairs(&load_pairs(&args.pred_dir, &args.gt_dir)?, &eval_options(args))?;
            write_report(&report, out, args.emit)?;
            let m = &report.mean;
            println!(
                "images {}  skipped {}  S {:.4}  maxF {:.4}  E {:.4}  MAE {:.4}",
                report.images.len(),
                report.skipped,
                m.s_measure,
                m.f_max,
                m.e_measure,
                m.mae
            );
        }
        Command::AttrEval { eval, attr, sidecar } => {
            let sidecar = sidecar.as_deref().map(Sidecar::load).transpose()?;
            let pairs = load_pairs(&eval.pred_dir, &eval.gt_dir)?;
            let report = attr_eval(&pairs, attr, sidecar.as_ref(), &eval_options(eval))?;
            write_grouped(&report, out, eval.emit)?;
            for (label, r) in &report.groups {
                println!("{label:<12} n={:<5} S {:.4}  MAE {:.4}", r.images.len(), r.mean.s_measure, r.mean.mae);
            }
            for note in &report.notes {
                println!("note: {note}");
            }
        }
        Command::Gradcheck { samples, eps } => {
            let run = load_run(&cli)?;
            let report = gradcheck(&run, *samples, *eps)?;
            io::create_dir(out)?;
            io::write_json(out.join("gradcheck.json"), &report)?;
            println!(
                "samples {}  strata {}  max rel err {:.3e}  max abs err (tiny gradients) {:.3e}",
                report.samples.len(),
                report.strata.len(),
                report.max_rel_err,
                report.max_abs_err_small
            );
            if !report.passed {
                let failures = report.samples.iter().filter(|s| !s.pass).count();
                return Err(HarnessError::GradcheckBreach { max_rel_err: report.max_rel_err, failures });
            }
        }
        Command::TrainToy(args) => {
            let run = apply_epochs(load_run(&cli)?, args)?;
            let data = training_data(&run, args)?;
            info!("training on {} samples for {} epochs", data.len(), run.epochs);
            io::create_dir(out)?;
            io::write_json(out.join("run_config.json"), &run)?;
            let trained = train_toy(&run, &data, Some(out))?;
            let r = &trained.report;
            println!(
                "loss {:.6} -> {:.6}  training MAE {:.4}  S {:.4}",
                r.first_loss, r.final_loss, r.training_fit.mae, r.training_fit.s_measure
            );
        }
        Command::Ablate { data, variants } => {
            let run = apply_epochs(load_run(&cli)?, data)?;
            let variants = match variants {
                Some(list) => parse_variants(list)?,
                None => ALL_VARIANTS.to_vec(),
            };
            let samples = training_data(&run, data)?;
            let report = ablate(&run, &variants, &samples)?;
            io::create_dir(out)?;
            io::write_json(out.join("ablation.json"), &report)?;
            io::write_file(out.join("ablation.csv"), report.to_csv()?)?;
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
