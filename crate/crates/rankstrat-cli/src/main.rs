//! `rankstrat` — model ranks, stability certificates, and recovery sweeps
//! from the command line.
//!
//! Exit codes: 0 success, 1 invalid input (bad flags, files, configs),
//! 2 numerical warning — failed self-checks (`verify-lemma`, `gradcheck`)
//! always exit 2; soft warnings (e.g. an unsaturated rank probe) exit 2
//! only under `--strict` and are otherwise printed to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rankstrat::error::Error;
use rankstrat::eval::gradient_check;
use rankstrat::model::{InputPointT, ModelSpec, ParamVectorT};
use rankstrat::rank::{
    self, default_probe_budget, gamma_rank_sweep, is_linearly_stable, probe_inputs,
    tangent_over_inputs, DatasetT, RankReport,
};
use rankstrat::rng::Rng;
use rankstrat::svd::{numerical_rank, singular_values};
use rankstrat::sweep::{
    parse_config, render_config, run_phase_sweep, run_sequence_experiment, run_spectrum_experiment,
    run_variance_sweep, write_file, SweepConfig,
};
use rankstrat::DEFAULT_REL_TOL;

const CONFIG_GRAMMAR: &str = "\
Config file grammar (flat key = value lines, '#' comments, repeated sections):

  model  = matfac:d=4            one model, or `models = spec;spec;...`
  targets = M1,M2,M3             matrix targets M1..M8, toy targets
                                 {1, x1, 1+x1, x2, x1+x2, 1+x2, 1+x1+x2},
                                 or nn-shift3 (networks with d = 5)
  sizes  = 1..16                 training-set sizes; comma lists and a..b ranges
  trials = 50                    independently seeded repetitions per cell
  seed   = 1                     master seed; per-cell seeds are derived as
                                 splitmix(master, fnv1a(row label), n, trial)
  init_std = 1e-4                or `init_stds = list` as the row axis
  lr = 0.05
  train_tol = 1e-9               stop when mean half-squared error drops below
  max_steps = 10000000
  mask = uniform                 uniform | stable-only | fixed-sequence
  test = unobserved              unobserved | all | normal:<count>
  workers = 0                    0 = default thread count
  sequences = builtin            the six built-in sampling orders
  masks = builtin                the built-in n = 7/12/15 spectrum masks

  [sequence]                     custom sampling order, 1-based entries
  name = myorder
  entries = (3,1),(4,3),(2,1),...

  [mask]                         custom spectrum mask
  n = 7
  entries = (1,1),(1,2),...

Exactly one of models/targets/init_stds may list more than one value; it
becomes the row axis of the output grid.";

const SPEC_GRAMMAR: &str = "\
Model spec strings (`family:key=val,key=val`; bare keys are boolean flags):

  toynl                                 t0 + t1*x1 + t2*t3*x2
  toylinear                             t0 + t1*x1 + t2*x2
  matfac:d=4                            (A B)_ij, A and B d x d
  fc2:d=5,m=3[,bias]                    two-layer tanh net, m neurons
  cnn1d:d=5,s=3,m=1[,sharing][,bias]    1-D tanh conv net, stride 1
  cnn2d:d=6,s=3,m=1[,sharing]           2-D tanh conv net on d x d images
  deepfc:widths=5-4-1                   deep tanh stack, last width 1";

const FILE_FORMATS: &str = "\
Parameter files hold whitespace/comma-separated numbers in the canonical
layout of the model ('#' comments allowed). Data files hold one sample per
line: matrix-factorization rows are `i,j,value` with 1-based indices;
vector-input rows are `x1,...,xd,y`.";

#[derive(Parser)]
#[command(
    name = "rankstrat",
    version,
    about = "Model ranks, linear-stability certificates, and recovery experiments",
    after_help = SPEC_GRAMMAR
)]
struct Cli {
    /// Escalate numerical warnings to exit code 2.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/JSON results.
    #[arg(long)]
    out: PathBuf,
    /// Worker thread count (default: RANKSTRAT_WORKERS or all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the rank hierarchy of a model family at its dimensions.
    #[command(after_help = SPEC_GRAMMAR)]
    Stratify {
        /// Model spec string.
        #[arg(long)]
        model: String,
        /// Emit the table as JSON instead of aligned text.
        #[arg(long)]
        json: bool,
    },
    /// Rank report at a parameter point: numerical model rank by probing,
    /// and the empirical rank over a dataset when one is given.
    #[command(after_help = FILE_FORMATS)]
    Rank {
        #[arg(long)]
        model: String,
        /// Parameter file in the canonical layout.
        #[arg(long)]
        params: PathBuf,
        /// Optional dataset; its tangent matrix supplies the empirical rank.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Relative singular-value threshold.
        #[arg(long, default_value_t = DEFAULT_REL_TOL)]
        rel_tol: f64,
        /// Probe budget (default 4x the parameter count).
        #[arg(long)]
        probes: Option<usize>,
        /// Probe sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Linear-stability certificate at an interpolating parameter point:
    /// stable exactly when the empirical rank equals the model rank.
    #[command(after_help = FILE_FORMATS)]
    Stable {
        #[arg(long)]
        model: String,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REL_TOL)]
        rel_tol: f64,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Verify the tangent-space rank law of the matrix-factorization
    /// model: over every (rank A, rank B) cell, the stacked matrix
    /// [I (x) B; A^T (x) I] has rank d^2 - (d - rank A)(d - rank B).
    VerifyLemma {
        /// Side length of the square factors.
        #[arg(long)]
        d: usize,
        /// Random rank-constrained pairs per cell.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_REL_TOL)]
        rel_tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Phase-transition or initialization-scale sweep over a
    /// (row x size x trial) grid; writes cells.csv, aggregate.csv,
    /// sweep.json, and the resolved config.
    #[command(after_help = CONFIG_GRAMMAR)]
    Sweep(ExperimentArgs),
    /// Sampling-order experiment: stability onset n_t per sequence plus
    /// trained test error per prefix length.
    #[command(after_help = CONFIG_GRAMMAR)]
    Sequence(ExperimentArgs),
    /// Spectrum experiment: singular values of learned completions and of
    /// the empirical/full tangent matrices at convergence.
    #[command(after_help = CONFIG_GRAMMAR)]
    Spectrum(ExperimentArgs),
    /// Compare exact gradients against central finite differences on
    /// random parameter/input draws.
    #[command(after_help = SPEC_GRAMMAR)]
    Gradcheck {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Acceptable max scaled discrepancy.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let strict = cli.strict;
    match run(cli) {
        Ok(code) => code,
        Err(Error::NumericalWarning(msg)) => {
            eprintln!("numerical warning: {msg}");
            ExitCode::from(if strict { 2 } else { 0 })
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Stratify { model, json } => {
            let spec = ModelSpec::parse(&model)?;
            let table = rank::stratify(&spec)?;
            if json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&table).expect("serializable")
                );
            } else {
                print!("{}", table.render_text());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Rank {
            model,
            params,
            data,
            rel_tol,
            probes,
            seed,
        } => {
            let spec = ModelSpec::parse(&model)?;
            let theta = read_params(&spec, &params)?;
            let budget = probes.unwrap_or_else(|| default_probe_budget(&spec));
            let (r1, r2) = rank::model_rank_saturation(&spec, &theta, rel_tol, budget, seed)?;
            let saturated = r1 == r2;
            let report = match &data {
                Some(path) => {
                    let dataset = read_data(&spec, path)?;
                    let t = tangent_over_inputs(&spec, &theta, dataset.inputs())?;
                    let sigma = singular_values(&t.matrix)?;
                    RankReport {
                        empirical_rank: numerical_rank(&t.matrix, rel_tol)?,
                        model_rank_numeric: r2,
                        model_rank_closed_form: None,
                        singular_values: sigma,
                        rel_tol,
                        probe_count: probe_count(&spec, budget),
                    }
                }
                None => {
                    let mut rng = Rng::new(seed);
                    let inputs = probe_inputs::<f64>(&spec, probe_count(&spec, budget), &mut rng);
                    let t = tangent_over_inputs(&spec, &theta, &inputs)?;
                    let sigma = singular_values(&t.matrix)?;
                    RankReport {
                        empirical_rank: r2,
                        model_rank_numeric: r2,
                        model_rank_closed_form: None,
                        singular_values: sigma,
                        rel_tol,
                        probe_count: probe_count(&spec, budget),
                    }
                }
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializable")
            );
            if !saturated {
                let warning =
                    format!("model rank did not saturate: {r1} at the probe budget, {r2} doubled");
                eprintln!("numerical warning: {warning}");
                if cli.strict {
                    return Ok(ExitCode::from(2));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stable {
            model,
            params,
            data,
            rel_tol,
            probes,
            seed,
        } => {
            let spec = ModelSpec::parse(&model)?;
            let theta = read_params(&spec, &params)?;
            let dataset = read_data(&spec, &data)?;
            let budget = probes.unwrap_or_else(|| default_probe_budget(&spec));
            let (stable, report) =
                is_linearly_stable(&spec, &theta, &dataset, rel_tol, budget, seed)?;
            let gap = spectral_gap(&report);
            let doc = serde_json::json!({
                "stable": stable,
                "spectral_gap_at_threshold": gap,
                "report": report,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&doc).expect("serializable")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyLemma {
            d,
            trials,
            rel_tol,
            seed,
        } => {
            let cells = gamma_rank_sweep(d, trials, rel_tol, seed)?;
            let mut bad = 0;
            for cell in &cells {
                if cell.mismatches > 0 {
                    bad += 1;
                    println!(
                        "rank A = {}, rank B = {}: expected rank {}, {} of {} pairs disagree",
                        cell.rank_a, cell.rank_b, cell.expected, cell.mismatches, cell.trials
                    );
                }
            }
            if bad == 0 {
                println!("all {} (rank A, rank B) cells pass", cells.len());
                Ok(ExitCode::SUCCESS)
            } else {
                println!("{bad} of {} cells failed", cells.len());
                Ok(ExitCode::from(2))
            }
        }
        Command::Sweep(args) => {
            let cfg = load_config(&args)?;
            let grid = if cfg.init_stds.len() > 1 {
                run_variance_sweep(&cfg)?
            } else {
                run_phase_sweep(&cfg)?
            };
            write_file(&args.out.join("cells.csv"), &grid.cells_csv())?;
            write_file(&args.out.join("aggregate.csv"), &grid.aggregate_csv())?;
            write_file(
                &args.out.join("sweep.json"),
                &serde_json::to_string_pretty(&grid.to_json()).expect("serializable"),
            )?;
            write_file(&args.out.join("config.txt"), &render_config(&cfg))?;
            println!("{} cells -> {}", grid.cells.len(), args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sequence(args) => {
            let cfg = load_config(&args)?;
            let target = single_target(&cfg)?;
            let report = run_sequence_experiment(&target, &cfg)?;
            write_file(&args.out.join("cells.csv"), &report.grid.cells_csv())?;
            write_file(&args.out.join("aggregate.csv"), &report.aggregate_csv())?;
            write_file(
                &args.out.join("sequence.json"),
                &serde_json::to_string_pretty(&report.to_json()).expect("serializable"),
            )?;
            write_file(&args.out.join("config.txt"), &render_config(&cfg))?;
            for onset in &report.onsets {
                println!("{}: n_t = {}", onset.sequence, onset.n_t);
            }
            println!(
                "{} cells -> {}",
                report.grid.cells.len(),
                args.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Spectrum(args) => {
            let cfg = load_config(&args)?;
            let target = single_target(&cfg)?;
            let report = run_spectrum_experiment(&target, &cfg)?;
            write_file(&args.out.join("spectra.csv"), &report.csv())?;
            write_file(
                &args.out.join("spectrum.json"),
                &serde_json::to_string_pretty(&report.to_json()).expect("serializable"),
            )?;
            write_file(&args.out.join("config.txt"), &render_config(&cfg))?;
            for row in &report.rows {
                println!(
                    "n = {}: tangent ranks agree in {:.0}% of {} trials",
                    row.n,
                    100.0 * row.rank_match_fraction,
                    row.trials
                );
            }
            println!("-> {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck {
            model,
            trials,
            step,
            tol,
            seed,
        } => {
            let spec = ModelSpec::parse(&model)?;
            let worst = gradient_check(&spec, trials, step, seed)?;
            println!("max scaled gradient discrepancy over {trials} trials: {worst:e}");
            if worst < tol {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("discrepancy exceeds tolerance {tol:e}");
                Ok(ExitCode::from(2))
            }
        }
    }
}

fn probe_count(spec: &ModelSpec, budget: usize) -> usize {
    match spec {
        ModelSpec::MatFac { d } => d * d,
        _ => 2 * budget,
    }
}

/// Ratio across the counting threshold, for auditing borderline ranks.
fn spectral_gap(report: &RankReport) -> Option<f64> {
    let r = report.empirical_rank;
    if r == 0 || r >= report.singular_values.len() {
        return None;
    }
    Some(report.singular_values[r - 1] / report.singular_values[r])
}

fn load_config(args: &ExperimentArgs) -> Result<SweepConfig, Error> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| Error::Io {
        path: args.config.display().to_string(),
        message: e.to_string(),
    })?;
    let mut cfg = parse_config(&text)?;
    let env_workers = std::env::var("RANKSTRAT_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    if let Some(workers) = args.workers.or(env_workers) {
        cfg.workers = workers;
    }
    Ok(cfg)
}

fn single_target(cfg: &SweepConfig) -> Result<String, Error> {
    match cfg.targets.as_slice() {
        [one] => Ok(one.clone()),
        _ => Err(Error::InvalidInput(
            "this experiment needs exactly one target".into(),
        )),
    }
}

fn read_numbers(path: &Path) -> Result<Vec<f64>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            values.push(tok.parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("{}: bad number {tok:?}", path.display()))
            })?);
        }
    }
    Ok(values)
}

fn read_params(spec: &ModelSpec, path: &Path) -> Result<ParamVectorT<f64>, Error> {
    ParamVectorT::new(spec, read_numbers(path)?)
}

fn read_data(spec: &ModelSpec, path: &Path) -> Result<DatasetT<f64>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!(
                        "{} line {}: bad number {t:?}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        match spec {
            ModelSpec::MatFac { .. } => {
                if fields.len() != 3 {
                    return Err(Error::InvalidInput(format!(
                        "{} line {}: matrix rows are `i,j,value`",
                        path.display(),
                        lineno + 1
                    )));
                }
                let (i, j) = (fields[0] as usize, fields[1] as usize);
                if i == 0 || j == 0 {
                    return Err(Error::InvalidInput("entry indices are 1-based".into()));
                }
                inputs.push(InputPointT::Entry { i: i - 1, j: j - 1 });
                labels.push(fields[2]);
            }
            _ => {
                let d = spec
                    .input_len()
                    .ok_or_else(|| Error::InvalidInput(format!("{spec}: no vector-file format")))?;
                if fields.len() != d + 1 {
                    return Err(Error::InvalidInput(format!(
                        "{} line {}: expected {} inputs plus a label",
                        path.display(),
                        lineno + 1,
                        d
                    )));
                }
                inputs.push(InputPointT::Vector(fields[..d].to_vec()));
                labels.push(fields[d]);
            }
        }
    }
    DatasetT::new(inputs, labels)
}
