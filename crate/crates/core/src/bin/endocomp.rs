use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use endocomp::runner::{
    parse_config, run_experiment, to_json_bytes, write_report, OutputFormat, RunnerError, DEFAULT_EXPERIMENT,
};
use endocomp::{comparative_study, ComparativeStudy, Error, SplitSpec, TimeSeriesDataset};

/// Worker-thread count for replication loops. Never affects results.
const WORKERS_ENV: &str = "ENDOCOMP_WORKERS";

const EXIT_STATISTICAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "endocomp",
    version,
    about = "Endogeneity bias in comparative regression studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment (the bundled default when --config is absent).
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides every scenario's replication count.
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall-clock timing in the report (output is then not reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Fit OLS before and after an event in a CSV series and difference the coefficients.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        response: String,
        /// First row (0-based, excluding the header) of the after period.
        #[arg(long)]
        event: usize,
        /// Rows dropped on each side of the event.
        #[arg(long, default_value_t = 0)]
        window: usize,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn runner_exit(e: &RunnerError) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        RunnerError::Io(_) => ExitCode::from(EXIT_IO),
        _ => ExitCode::from(EXIT_CONFIG),
    }
}

fn read_config(path: Option<&PathBuf>) -> Result<String, RunnerError> {
    match path {
        None => Ok(DEFAULT_EXPERIMENT.to_string()),
        Some(p) => std::fs::read_to_string(p).map_err(|e| RunnerError::Io(format!("{}: {e}", p.display()))),
    }
}

fn cmd_run(
    config: Option<PathBuf>,
    seed: Option<u64>,
    reps: Option<usize>,
    format: Option<OutputFormat>,
    out: Option<PathBuf>,
    timings: bool,
) -> ExitCode {
    let mut cfg = match read_config(config.as_ref()).and_then(|t| parse_config(&t)) {
        Ok(c) => c,
        Err(e) => return runner_exit(&e),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(r) = reps {
        cfg.scenarios.iter_mut().for_each(|s| s.reps = r);
    }
    if let Some(f) = format {
        cfg.format = f;
    }
    if let Err(e) = cfg.validate() {
        return runner_exit(&e);
    }

    let mut report = run_experiment(&cfg);
    if !timings {
        report = report.without_timing();
    }
    // --out is where this invocation writes; it is not echoed into the report.
    let out = out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let written = write_report(&report, cfg.format, out.as_deref());
    if let Err(e) = written {
        return runner_exit(&e);
    }
    let failures = report.failures();
    if failures > 0 {
        eprintln!("{failures} scenario(s) failed or breached the identity tolerance");
        return ExitCode::from(EXIT_STATISTICAL);
    }
    ExitCode::SUCCESS
}

#[derive(Serialize)]
struct SegmentFit {
    start: usize,
    end: usize,
    beta_hat: Vec<f64>,
    std_err: Vec<f64>,
    sigma2_hat: f64,
    condition_number: f64,
}

#[derive(Serialize)]
struct FitOutput {
    labels: Vec<String>,
    dropped: usize,
    before: SegmentFit,
    after: SegmentFit,
    diff: Vec<f64>,
    diff_std_err: Vec<f64>,
    z_scores: Vec<f64>,
    gram_discrepancy: f64,
}

fn segment_fit(fit: &endocomp::FitResult, seg: &endocomp::eventsplit::Segment) -> SegmentFit {
    SegmentFit {
        start: seg.start,
        end: seg.end,
        beta_hat: fit.beta_hat.as_slice().to_vec(),
        std_err: fit.cov_hat.diagonal().map(f64::sqrt).as_slice().to_vec(),
        sigma2_hat: fit.sigma2_hat,
        condition_number: fit.condition_number,
    }
}

fn fit_output(study: &ComparativeStudy, labels: Vec<String>) -> FitOutput {
    FitOutput {
        labels,
        dropped: study.split.dropped,
        before: segment_fit(&study.fit_before, &study.split.before),
        after: segment_fit(&study.fit_after, &study.split.after),
        diff: study.diff.diff.as_slice().to_vec(),
        diff_std_err: study.diff.standard_errors().as_slice().to_vec(),
        z_scores: study.diff.z_scores.as_slice().to_vec(),
        gram_discrepancy: study.gram_discrepancy,
    }
}

fn cmd_fit(data: PathBuf, response: String, event: usize, window: usize) -> ExitCode {
    let dataset = match TimeSeriesDataset::from_csv_path(&data, &response) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let spec = SplitSpec {
        event_index: event,
        exclusion_window: window,
    };
    match comparative_study(&dataset, spec) {
        Ok(study) => {
            let labels = dataset.labels.clone().unwrap_or_default();
            let bytes = to_json_bytes(&fit_output(&study, labels));
            print!("{}", String::from_utf8_lossy(&bytes));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::IndexOutOfRange { .. } | Error::WindowTooLarge { .. } => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::from(EXIT_STATISTICAL),
            }
        }
    }
}

fn cmd_validate(config: PathBuf) -> ExitCode {
    match read_config(Some(&config)).and_then(|t| parse_config(&t)) {
        Ok(c) => {
            println!("ok: {} scenario(s)", c.scenarios.len());
            ExitCode::SUCCESS
        }
        Err(e) => runner_exit(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size worker pool: {e}");
        }
    }
    match cli.command {
        Command::Run {
            config,
            seed,
            reps,
            format,
            out,
            timings,
        } => cmd_run(config, seed, reps, format, out, timings),
        Command::Fit {
            data,
            response,
            event,
            window,
        } => cmd_fit(data, response, event, window),
        Command::Validate { config } => cmd_validate(config),
    }
}
