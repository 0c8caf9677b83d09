use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use muonrec::data::{export_csv, five_core_filter, ingest_csv, leave_one_out_split, synth_generate, SynthParams};
use muonrec::harness::{
    compare, lr_sweep, lr_sweep_csv, ns_check, read_summary, render_table, run_experiment, two_stage_sweep, Grid,
    RunConfig, METRICS_FILE, SUMMARY_FILE,
};
use muonrec::Error;

/// Exit status for malformed input: bad arguments, configs or data.
const EXIT_INPUT: u8 = 2;
/// Exit status for failures while running.
const EXIT_RUNTIME: u8 = 1;

#[derive(Parser)]
#[command(name = "muonrec", version, about = "Muon vs Adam experiments on sequential recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and split an interaction CSV into a dataset file.
    Prep {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Skip the iterative 5-core filter.
        #[arg(long)]
        no_five_core: bool,
    },
    /// Generate a synthetic dataset and export it as CSV.
    Synth {
        #[arg(long)]
        output: PathBuf,
        /// JSON file with generator parameters; defaults otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Two-stage learning-rate and weight-decay search.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON file `{"adam": {"lrs": [..], "wds": [..]}, "muon": {..}}`.
        #[arg(long)]
        grids: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// One run per learning rate; writes a CSV table.
    LrSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        lrs: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
    },
    /// Compare run summaries against the first one.
    Compare {
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Check Newton–Schulz against the SVD polar factor.
    NsCheck {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    adam: Grid,
    muon: Grid,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prep {
            input,
            output,
            no_five_core,
        } => {
            let ingested = ingest_csv(&input)?;
            let records = if no_five_core {
                ingested.records
            } else {
                five_core_filter(&ingested.records)
            };
            let ds = leave_one_out_split(&records)?;
            ds.save_json(&output)?;
            println!(
                "users={} items={} interactions={} malformed_lines={} fingerprint={}",
                ds.num_users,
                ds.num_items,
                ds.num_interactions(),
                ingested.malformed,
                ds.fingerprint()
            );
        }
        Command::Synth { output, params, seed } => {
            let mut p: SynthParams = match params {
                Some(path) => read_json(&path)?,
                None => SynthParams::default(),
            };
            if let Some(seed) = seed {
                p.seed = seed;
            }
            let ds = synth_generate(&p)?;
            export_csv(&ds, &output)?;
            println!(
                "users={} items={} interactions={} fingerprint={}",
                ds.num_users,
                ds.num_items,
                ds.num_interactions(),
                ds.fingerprint()
            );
        }
        Command::Train { config, out, seed } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.output_dir = Some(out.clone());
            let rec = run_experiment(&cfg)?;
            let s = &rec.summary;
            println!(
                "optimizer={} converged_step={} best_val_ndcg@10={:.6} test_ndcg@10={:.6} diverged={} wrote {} and {}",
                s.optimizer,
                s.converged_step,
                s.best_val_ndcg10,
                s.test.ndcg_at(10),
                s.diverged,
                out.join(METRICS_FILE).display(),
                out.join(SUMMARY_FILE).display()
            );
        }
        Command::Sweep {
            config,
            out,
            grids,
            parallelism,
        } => {
            let cfg = RunConfig::load(&config)?;
            let (adam, muon) = match grids {
                Some(path) => {
                    let g: GridFile = read_json(&path)?;
                    (g.adam, g.muon)
                }
                None => (Grid::default_adam(), Grid::default_muon()),
            };
            let ds = cfg.dataset.load()?;
            let report = two_stage_sweep(&cfg, &ds, &adam, &muon, parallelism)?;
            let path = out.join("sweep_report.json");
            write(&path, serde_json::to_string_pretty(&report)?)?;
            match (report.selected_adam, report.selected_muon) {
                (Some(a), Some(m)) => println!(
                    "adam lr={} wd={} val_ndcg@10={:.6}; muon lr={} wd={} val_ndcg@10={:.6}; failures={}",
                    a.lr, a.wd, a.best_val_ndcg10, m.lr, m.wd, m.best_val_ndcg10, report.failures
                ),
                _ => println!("no successful cell in at least one stage; failures={}", report.failures),
            }
            println!("wrote {}", path.display());
        }
        Command::LrSweep {
            config,
            lrs,
            out,
            parallelism,
        } => {
            let cfg = RunConfig::load(&config)?;
            let ds = cfg.dataset.load()?;
            let rows = lr_sweep(&cfg, &ds, &lrs, parallelism)?;
            let csv = lr_sweep_csv(&rows);
            write(&out, &csv)?;
            print!("{csv}");
        }
        Command::Compare { summaries, json } => {
            let records = summaries.iter().map(read_summary).collect::<Result<Vec<_>, _>>()?;
            let report = compare(&records)?;
            print!("{}", render_table(&report));
            if let Some(path) = json {
                write(&path, serde_json::to_string_pretty(&report)?)?;
            }
        }
        Command::NsCheck { cases, seed } => {
            let r = ns_check(cases, seed)?;
            println!("cases                {}", r.cases);
            println!("max oracle error     {:.3e}", r.max_oracle_error);
            println!("singular values      [{:.4}, {:.4}]", r.min_singular_value, r.max_singular_value);
            println!("max scale error      {:.3e}", r.max_scale_error);
            println!("max sign error       {:.3e}", r.max_sign_error);
            println!("max transpose error  {:.3e}", r.max_transpose_error);
            let ok = r.max_oracle_error <= 0.35
                && r.min_singular_value >= 0.5
                && r.max_singular_value <= 1.5
                && r.max_scale_error <= 1e-8
                && r.max_sign_error <= 1e-8;
            if !ok {
                bail!("Newton–Schulz check outside tolerance");
            }
        }
    }
    Ok(())
}

fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(
            Error::InvalidConfig(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::MissingHeader { .. }
            | Error::TooManyMalformed { .. }
            | Error::EmptyDataset
            | Error::FingerprintMismatch(..)
            | Error::UnknownRole(_),
        ) => ("invalid_input", EXIT_INPUT),
        Some(Error::Io { .. }) => ("io", EXIT_RUNTIME),
        Some(_) => ("runtime", EXIT_RUNTIME),
        None if err.chain().any(|e| e.is::<serde_json::Error>()) => ("invalid_input", EXIT_INPUT),
        None if err.chain().any(|e| e.is::<std::io::Error>()) => ("io", EXIT_RUNTIME),
        None => ("runtime", EXIT_RUNTIME),
    }
}

/// The error chain joined by `: `, dropping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut message = String::new();
    for cause in err.chain().map(ToString::to_string) {
        if !message.contains(&cause) {
            if !message.is_empty() {
                message.push_str(": ");
            }
            message.push_str(&cause);
        }
    }
    message
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (kind, code) = classify(&err);
            let message = describe(&err);
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            ExitCode::from(code)
        }
    }
}
