//! `fdcc`: run benchmark suites, compare interface modes, validate suite
//! files and turn traces into plot data.
//!
//! Exit codes: 0 success, 1 a scenario faulted, 2 configuration error.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fdcc_core::bench::TimeSeriesTrace;
use fdcc_core::config::{compare_modes, load_report, load_suite, print_suite, run_suite, ConfigError, MAX_SEED};

#[derive(Parser)]
#[command(name = "fdcc", version, about = "Forward dynamics compliance control benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario of a suite file.
    Run {
        suite: PathBuf,
        /// Override the suite seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the controller rate (Hz).
        #[arg(long)]
        rate: Option<f64>,
        /// Scenarios run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare two scenario reports (velocity against position mode).
    Compare { a: PathBuf, b: PathBuf },
    /// Check a suite file; `--print` writes its fully expanded form.
    Validate {
        suite: PathBuf,
        #[arg(long)]
        print: bool,
    },
    /// Write `<stem>.dat` and a gnuplot script `<stem>.gp` for a trace.
    Plot {
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Fault,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Fault) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            suite,
            seed,
            out,
            rate,
            jobs,
        } => {
            let mut s = load_suite(&suite)?;
            if let Some(seed) = seed {
                if seed > MAX_SEED {
                    return Err(Failure::Config(anyhow::anyhow!("--seed must not exceed {MAX_SEED}")));
                }
                s.seed = seed;
            }
            if let Some(out) = out {
                s.output_dir = out;
            }
            if let Some(rate) = rate {
                if !(rate > 0.0) || !rate.is_finite() {
                    return Err(Failure::Config(anyhow::anyhow!("--rate must be positive")));
                }
                s.controller_rate = rate;
            }
            let outcome = run_suite(&s, jobs)?;
            let summary = fs::read_to_string(outcome.output_dir.join("summary.txt")).unwrap_or_default();
            print!("{summary}");
            if outcome.exit_code() != 0 {
                for (id, msg) in &outcome.faults {
                    eprintln!("scenario {id} faulted: {msg}");
                }
                return Err(Failure::Fault);
            }
            Ok(())
        }
        Command::Compare { a, b } => {
            let ra = load_report(&a)?;
            let rb = load_report(&b)?;
            let cmp = compare_modes(&ra, &rb)?;
            print!("{}", cmp.table());
            let flagged = cmp.flagged();
            if !flagged.is_empty() {
                println!("velocity mode not lower in: {}", flagged.join(", "));
            }
            Ok(())
        }
        Command::Validate { suite, print } => {
            let s = load_suite(&suite)?;
            if print {
                print!("{}", print_suite(&s));
            } else {
                println!("{}: ok, {} scenario(s)", suite.display(), s.scenarios.len());
            }
            Ok(())
        }
        Command::Plot { trace, out } => plot(&trace, out.as_deref()).map_err(Failure::Config),
    }
}

fn plot(path: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let file = fs::File::open(path).with_context(|| format!("{}", path.display()))?;
    let trace = TimeSeriesTrace::read_csv(BufReader::new(file)).with_context(|| format!("{}", path.display()))?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&dir).with_context(|| format!("{}", dir.display()))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let dat = dir.join(format!("{stem}.dat"));
    let gp = dir.join(format!("{stem}.gp"));

    let mut w = std::io::BufWriter::new(fs::File::create(&dat).with_context(|| format!("{}", dat.display()))?);
    writeln!(w, "# time_s |F| |F_true| fx fy fz px py pz")?;
    for r in &trace.rows {
        let f = r.wrench_meas.force;
        let p = r.tip_position;
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {}",
            r.time,
            f.norm(),
            r.wrench_true.force.norm(),
            f.x,
            f.y,
            f.z,
            p.x,
            p.y,
            p.z
        )?;
    }
    w.flush()?;

    let script = format!(
        "# {mode} mode, {n} samples\n\
         set terminal pngcairo size 1000,700\n\
         set output '{stem}.png'\n\
         set multiplot layout 2,1\n\
         set xlabel 'time [s]'\n\
         set ylabel 'force [N]'\n\
         plot '{stem}.dat' using 1:2 with lines title '|F| measured', \\\n     '{stem}.dat' using 1:3 with lines title '|F| true'\n\
         set ylabel 'tip [m]'\n\
         plot '{stem}.dat' using 1:7 with lines title 'x', '' using 1:8 with lines title 'y', '' using 1:9 with lines title 'z'\n\
         unset multiplot\n",
        mode = trace.mode,
        n = trace.len(),
    );
    fs::write(&gp, script).with_context(|| format!("{}", gp.display()))?;
    println!("{}\n{}", dat.display(), gp.display());
    Ok(())
}
