use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hev_sic::experiment::{
    dominant_peak, fft_spectrum, read_current_csv, read_summary, run_scenario, verify_run, write_atomic,
    ExperimentConfig, RunSummary, Scenario,
};

#[derive(Parser)]
#[command(name = "hev-sic", version, about = "Series-HEV power split with battery-current injection and battery identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-key override, e.g. `dp.gamma=350`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a DP scenario (baseline, inject_05hz, inject_005hz or full_sequential).
    Simulate(Common),
    /// Run DP+ with both injection windows, then sequential and concurrent estimation.
    Estimate(Common),
    /// Amplitude tradeoff sweep.
    Sweep(Common),
    /// Amplitude spectrum of the battery current in a trajectory CSV.
    Fft {
        input: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        start: f64,
        /// Window length in seconds; the rest of the trace when absent.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a run directory against its manifest and print its summary.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

struct Failure {
    stage: &'static str,
    message: String,
}

fn fail(stage: &'static str) -> impl FnOnce(hev_sic::Error) -> Failure {
    move |e| Failure {
        stage,
        message: e.to_string(),
    }
}

fn load_config(c: &Common, forced: Option<Scenario>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).map_err(fail("config"))?,
        None => ExperimentConfig::default(),
    };
    for kv in &c.set {
        cfg.apply_override(kv).map_err(fail("config"))?;
    }
    if let Some(s) = c.scenario {
        cfg.scenario = s;
    }
    if let Some(s) = forced {
        cfg.scenario = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(seed) = c.seed {
        cfg.noise.seed = seed;
        cfg.seeds = vec![seed];
    }
    cfg.validate().map_err(fail("config"))?;
    Ok(cfg)
}

fn print_summary(s: &RunSummary) {
    println!("scenario {} -> {}", s.scenario.name(), s.out_dir.display());
    for (k, v) in &s.metrics {
        println!("  {k:<32} {v:.6}");
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load_config(&c, None)?;
            if matches!(cfg.scenario, Scenario::Sweep) {
                return Err(Failure {
                    stage: "config",
                    message: "use the `sweep` subcommand for the sweep scenario".into(),
                });
            }
            print_summary(&run_scenario(&cfg).map_err(fail("simulate"))?);
        }
        Command::Estimate(c) => {
            let cfg = load_config(&c, Some(Scenario::FullSequential))?;
            print_summary(&run_scenario(&cfg).map_err(fail("estimate"))?);
        }
        Command::Sweep(c) => {
            let cfg = load_config(&c, Some(Scenario::Sweep))?;
            let s = run_scenario(&cfg).map_err(fail("sweep"))?;
            println!("sweep -> {}", s.out_dir.join("sweep_summary.csv").display());
        }
        Command::Fft {
            input,
            start,
            duration,
            out,
        } => {
            let (dt, current) = read_current_csv(&input).map_err(fail("fft"))?;
            let k0 = ((start / dt).round() as usize).min(current.len());
            let k1 = duration.map_or(current.len(), |d| (((start + d) / dt).round() as usize).min(current.len()));
            let spec = fft_spectrum(&current[k0..k1.max(k0)], dt).map_err(fail("fft"))?;
            if let Some((f, a)) = dominant_peak(&spec) {
                println!("dominant non-DC peak {a:.4} A at {f:.4} Hz");
            }
            if let Some(out) = out {
                write_spectrum(&out, &spec).map_err(fail("fft"))?;
            }
        }
        Command::Report { out } => report(&out)?,
    }
    Ok(())
}

fn write_spectrum(path: &Path, spec: &[(f64, f64)]) -> hev_sic::Result<()> {
    let mut s = String::from("freq_hz,amplitude_a\n");
    for (f, a) in spec {
        s.push_str(&format!("{f},{a}\n"));
    }
    write_atomic(path, s.as_bytes())
}

fn report(dir: &Path) -> Result<(), Failure> {
    let manifest = verify_run(dir).map_err(fail("report"))?;
    let metrics = read_summary(dir).map_err(fail("report"))?;
    println!(
        "scenario {} (crate {}, config sha256 {})",
        manifest.scenario, manifest.crate_version, manifest.config_sha256
    );
    println!("{} files verified", manifest.files.len());
    for (k, v) in &metrics {
        println!("  {k:<32} {v:.6}");
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error in stage `{}`: {}", f.stage, f.message);
            ExitCode::FAILURE
        }
    }
}
