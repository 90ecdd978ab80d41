use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shapecov::baselines::{projection_from, sample_covariance, tyler, TylerOptions};
use shapecov::bench::{
    builtin_theta0, emit_results, parse_texture, run_experiment, ExperimentConfig, Scenario, StructureKind,
    StructureSpec, CONFIG_HELP,
};
use shapecov::coca::{coca_solve, CocaOptions, CocaProblem};
use shapecov::crb::{fim, mse_bound};
use shapecov::hermitian::{HermitianMatrix, NormKind};
use shapecov::io::{fmt_f64, read_matrix, read_samples, write_estimate, write_history, write_matrix, write_samples};
use shapecov::sampling::{normalize_to_cae, sample_compound_gaussian};
use shapecov::{Error, Result};

#[derive(Parser)]
#[command(name = "shapecov", version, about = "Structured robust shape-matrix estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write `<out>_mse.csv` and `<out>_plot.gp`.
    #[command(after_help = CONFIG_HELP)]
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output prefix.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Draw CAE samples from a shape matrix and write them as CSV.
    Sample {
        /// Built-in scenario providing Θ₀ (ignored with --theta0).
        #[arg(long, default_value = "toeplitz")]
        scenario: String,
        #[arg(long, default_value_t = 10)]
        p: usize,
        /// Matrix CSV with Θ₀.
        #[arg(long)]
        theta0: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// chi_square(<df>) or constant(<v>).
        #[arg(long, default_value = "chi_square(3)")]
        texture: String,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the shape matrix of a sample CSV.
    Estimate {
        /// sc, tyler, proj or coca.
        #[arg(long)]
        method: String,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        structure: StructureArgs,
        /// frobenius, spectral or trace (coca only).
        #[arg(long, default_value = "frobenius")]
        norm: String,
        /// Relative and absolute duality-gap tolerance (coca only).
        #[arg(long)]
        tol: Option<f64>,
        /// Write the solver trace as CSV (coca only).
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cramér–Rao bound on the MSE for a list of sample counts.
    Crb {
        #[command(flatten)]
        structure: StructureArgs,
        /// Matrix CSV with Θ₀; the built-in matrix of the structure otherwise.
        #[arg(long)]
        theta0: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200,500,1000")]
        n_grid: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the offset and basis of a structure, real-vectorized, one per row.
    GenStructure {
        #[command(flatten)]
        structure: StructureArgs,
        /// Also write the built-in Θ₀ of the structure as a matrix CSV.
        #[arg(long)]
        theta0_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StructureArgs {
    /// toeplitz, banded, doa or full.
    #[arg(long, default_value = "toeplitz")]
    structure: String,
    /// Dimension; taken from the data when it is available.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 2)]
    band: usize,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    theta_low: f64,
    #[arg(long, default_value_t = std::f64::consts::PI)]
    theta_high: f64,
    #[arg(long, default_value_t = 0.01)]
    sigma2: f64,
    /// Trace of the structure; `p` when absent.
    #[arg(long)]
    trace_target: Option<f64>,
}

impl StructureArgs {
    fn spec(&self, data_p: Option<usize>) -> Result<StructureSpec> {
        let kind: StructureKind = self.structure.parse()?;
        let p = match (data_p, self.p) {
            (Some(d), Some(given)) if d != given => {
                return Err(Error::Config(format!("--p {given} disagrees with data dimension {d}")))
            }
            (Some(d), _) => d,
            (None, Some(given)) => given,
            (None, None) => 10,
        };
        Ok(StructureSpec {
            kind,
            p,
            band: self.band,
            grid_n: self.grid_n,
            theta_low: self.theta_low,
            theta_high: self.theta_high,
            sigma2: self.sigma2,
            trace_target: self.trace_target,
        })
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn open(path: &PathBuf) -> Result<File> {
    File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))
}

fn scenario_of(kind: StructureKind) -> Scenario {
    match kind {
        StructureKind::Toeplitz | StructureKind::Full => Scenario::Toeplitz,
        StructureKind::Banded => Scenario::Banded,
        StructureKind::Doa => Scenario::Doa,
    }
}

fn builtin_for(spec: &StructureSpec) -> Result<HermitianMatrix> {
    let mut cfg = ExperimentConfig::new(scenario_of(spec.kind), spec.p);
    cfg.band = spec.band;
    cfg.grid_n = spec.grid_n;
    cfg.theta_low = spec.theta_low;
    cfg.theta_high = spec.theta_high;
    cfg.sigma2 = spec.sigma2;
    cfg.trace_target = spec.trace_target;
    Ok(cfg.resolve()?.0)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let table = run_experiment(&cfg)?;
            let (csv_path, plot) = emit_results(&table, &out)?;
            eprintln!("wrote {} and {}", csv_path.display(), plot.display());
        }
        Command::Sample {
            scenario,
            p,
            theta0,
            n,
            seed,
            trial,
            texture,
            out,
        } => {
            let theta = match theta0 {
                Some(path) => read_matrix(open(&path)?)?,
                None => builtin_theta0(scenario.parse()?, p)?.0,
            };
            let texture = parse_texture(&texture)?;
            let samples = normalize_to_cae(sample_compound_gaussian(&theta, n, texture, seed, trial)?)?;
            write_samples(&samples, output(&out)?)?;
        }
        Command::Estimate {
            method,
            input,
            structure,
            norm,
            tol,
            diagnostics,
            out,
        } => {
            let samples = read_samples(open(&input)?)?;
            let spec = structure.spec(Some(samples.p()))?;
            let target = spec.trace_target.unwrap_or(spec.p as f64);
            let report = match method.as_str() {
                "sc" => sample_covariance(&samples, Some(target))?,
                "tyler" => tyler(
                    &samples,
                    &TylerOptions {
                        trace_target: Some(target),
                        ..TylerOptions::default()
                    },
                )?,
                "proj" => {
                    let s = spec.build()?;
                    let t = tyler(&samples, &TylerOptions::default())?;
                    projection_from(&samples, &s, &t, target)?
                }
                "coca" => {
                    let s = spec.build()?;
                    let norm: NormKind = norm
                        .parse()
                        .map_err(|_| Error::Config(format!("unknown norm {norm:?}")))?;
                    let problem = CocaProblem::new(&samples, &s, norm)?;
                    let mut opts = CocaOptions {
                        record_history: diagnostics.is_some(),
                        ..CocaOptions::default()
                    };
                    if let Some(t) = tol {
                        opts.tol_abs = t;
                        opts.tol_rel = t;
                    }
                    let report = coca_solve(&problem, &opts)?;
                    if let (Some(path), Some(diag)) = (&diagnostics, &report.coca) {
                        write_history(&diag.history, BufWriter::new(File::create(path)?))?;
                    }
                    report
                }
                other => return Err(Error::Config(format!("unknown method {other:?}"))),
            };
            write_estimate(&report, output(&out)?)?;
        }
        Command::Crb {
            structure,
            theta0,
            n_grid,
            out,
        } => {
            let theta = match &theta0 {
                Some(path) => Some(read_matrix(open(path)?)?),
                None => None,
            };
            let spec = structure.spec(theta.as_ref().map(HermitianMatrix::dim))?;
            let theta = match theta {
                Some(t) => t.with_trace(spec.trace_target.unwrap_or(spec.p as f64)),
                None => builtin_for(&spec)?,
            };
            let mut spec = spec;
            spec.trace_target = Some(theta.trace());
            let report = fim(&spec.build()?, &theta)?;
            let mut w = csv::Writer::from_writer(output(&out)?);
            w.write_record(["n", "crb_trace_over_n"])?;
            for n in n_grid {
                w.write_record([n.to_string(), fmt_f64(mse_bound(&report, n))])?;
            }
            w.flush()?;
        }
        Command::GenStructure {
            structure,
            theta0_out,
            out,
        } => {
            let spec = structure.spec(None)?;
            let s = spec.build()?;
            let mut w = csv::WriterBuilder::new().flexible(true).from_writer(output(&out)?);
            let mut row = vec!["offset".to_string()];
            row.extend(s.offset().real_vectorize().into_iter().map(fmt_f64));
            w.write_record(&row)?;
            for (j, b) in s.basis().iter().enumerate() {
                let mut row = vec![format!("basis_{j}")];
                row.extend(b.real_vectorize().into_iter().map(fmt_f64));
                w.write_record(&row)?;
            }
            w.flush()?;
            if let Some(path) = theta0_out {
                write_matrix(&builtin_for(&spec)?, BufWriter::new(File::create(path)?))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Parse(_) => 2,
                Error::FailureBudget { .. } => 3,
                _ => 1,
            })
        }
    }
}
