use clap::{Args, Parser, Subcommand, ValueEnum};
use hdcop::association::{all_pairs, Measure};
use hdcop::harness::{run_experiment, summarize_log, ExperimentConfig, ExperimentResult, RunOptions};
use hdcop::maxtest::{max_test_table, Calibration};
use hdcop::moebius::moebius_test;
use hdcop::ranks::{jitter_ties, DataMatrix};
use hdcop::stepdown::{stepdown_test, StepdownConfig};
use hdcop::Error;
use serde_json::{json, Value};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "hdcop", version, about = "Rank-based copula inference in high dimensions")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Tty, global = true)]
    output: Format,
    /// Worker threads (default: all hardware threads).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Tty,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Rho,
    Tau,
    Beta,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Rho => Measure::Rho,
            MeasureArg::Tau => Measure::Tau,
            MeasureArg::Beta => Measure::Beta,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CalibrationArg {
    Gumbel,
    Gaussian,
}

#[derive(Args)]
struct Input {
    /// CSV file, one observation per row.
    file: PathBuf,
    /// First CSV line holds column names.
    #[arg(long)]
    header: bool,
    /// Break ties by seeded jitter instead of failing.
    #[arg(long, value_name = "SEED")]
    jitter: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise Spearman, Kendall and Blomquist coefficients.
    Pairs {
        #[command(flatten)]
        input: Input,
        /// Coefficients to compute (repeatable; default all).
        #[arg(long, value_enum)]
        measure: Vec<MeasureArg>,
    },
    /// Max-type test of pairwise independence.
    Maxtest {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value = "rho")]
        measure: MeasureArg,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "gumbel")]
        calibration: CalibrationArg,
    },
    /// Multiplier-bootstrap stepdown test of positive Spearman dependence.
    Stepdown {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Bootstrap replicates.
        #[arg(long, default_value_t = 1000)]
        boot: usize,
        #[arg(long, env = "HDCOP_SEED", default_value_t = 0)]
        seed: u64,
        /// Test rho = 0 against rho != 0.
        #[arg(long)]
        two_sided: bool,
    },
    /// Moebius-transform test of independence.
    Moebius {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Monte Carlo experiments.
    Harness {
        #[command(subcommand)]
        action: HarnessAction,
    },
}

#[derive(Subcommand)]
enum HarnessAction {
    /// Run or resume the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Replicate log (overrides `output` in the config).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Summarise an existing replicate log.
    Summarize { log: PathBuf },
}

enum Failure {
    Usage(String),
    Data(String),
    Other(String),
}

impl Failure {
    fn from_error(e: Error, names: Option<&[String]>) -> Self {
        let column = |c: usize| {
            names
                .and_then(|n| n.get(c))
                .cloned()
                .unwrap_or_else(|| format!("#{}", c + 1))
        };
        match e {
            Error::TiesDetected { column: c } => Failure::Data(format!(
                "tied values in column `{}`; rerun with --jitter SEED to break ties",
                column(c)
            )),
            Error::DegenerateColumn { column: c } => Failure::Data(format!("column `{}` is constant", column(c))),
            Error::DimensionTooSmall { .. } | Error::DegenerateDimension { .. } => Failure::Data(e.to_string()),
            Error::InvalidParameter(_) | Error::ConfigInvalid { .. } => Failure::Usage(e.to_string()),
            e if e.is_data_error() => Failure::Data(e.to_string()),
            e => Failure::Other(e.to_string()),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Other(m) => m,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load(input: &Input) -> CliResult<DataMatrix> {
    if !input.file.is_file() {
        return Err(Failure::Usage(format!(
            "input file {} does not exist",
            input.file.display()
        )));
    }
    let data = DataMatrix::from_csv_path(&input.file, input.header).map_err(|e| Failure::from_error(e, None))?;
    match input.jitter {
        Some(seed) => jitter_ties(&data, seed).map_err(|e| Failure::from_error(e, Some(data.names()))),
        None => Ok(data),
    }
}

fn check_alpha(alpha: f64) -> CliResult<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn envelope(command: &str, result: Value) -> Value {
    json!({ "schema_version": SCHEMA_VERSION, "command": command, "result": result })
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialise")
}

fn other(e: impl std::fmt::Display) -> Failure {
    Failure::Other(e.to_string())
}

fn write_json(out: &mut impl Write, v: &Value) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, v).map_err(other)?;
    writeln!(out).map_err(other)
}

fn fmt_pair(names: &[String], p: (usize, usize)) -> String {
    format!("{}:{}", names[p.0], names[p.1])
}

fn run(cli: Cli, out: &mut impl Write) -> CliResult<()> {
    let fmt = cli.output;
    match cli.command {
        Command::Pairs { input, measure } => {
            let data = load(&input)?;
            let measures: Vec<Measure> = if measure.is_empty() {
                Measure::ALL.to_vec()
            } else {
                measure.into_iter().map(Measure::from).collect()
            };
            let table = all_pairs(&data, &measures).map_err(|e| Failure::from_error(e, Some(data.names())))?;
            match fmt {
                Format::Json => write_json(out, &envelope("pairs", to_value(&table)))?,
                Format::Csv => table.write_csv(&mut *out).map_err(other)?,
                Format::Tty => {
                    write!(out, "{:<24}", "pair").map_err(other)?;
                    for m in &measures {
                        write!(out, "{:>12}", m.name()).map_err(other)?;
                    }
                    writeln!(out).map_err(other)?;
                    for r in &table.pairs {
                        write!(out, "{:<24}", fmt_pair(&table.names, (r.l, r.m))).map_err(other)?;
                        for &m in &measures {
                            write!(out, "{:>12.6}", r.get(m).unwrap_or(f64::NAN)).map_err(other)?;
                        }
                        writeln!(out).map_err(other)?;
                    }
                }
            }
        }
        Command::Maxtest {
            input,
            measure,
            alpha,
            calibration,
        } => {
            check_alpha(alpha)?;
            let data = load(&input)?;
            let gamma = Measure::from(measure);
            let cal = match calibration {
                CalibrationArg::Gumbel => Calibration::Gumbel,
                CalibrationArg::Gaussian => Calibration::Gaussian,
            };
            let table = all_pairs(&data, &[gamma]).map_err(|e| Failure::from_error(e, Some(data.names())))?;
            let rep = max_test_table(&table, gamma, alpha, cal).map_err(|e| Failure::from_error(e, None))?;
            let names = data.names();
            match fmt {
                Format::Json => {
                    let mut v = to_value(&rep);
                    v["argmax_names"] = json!([names[rep.argmax.0], names[rep.argmax.1]]);
                    write_json(out, &envelope("maxtest", v))?
                }
                Format::Csv => {
                    let mut w = csv_writer(out);
                    w.write_record([
                        "gamma",
                        "n",
                        "d",
                        "T",
                        "c_n",
                        "v_gamma",
                        "standardized",
                        "p_value",
                        "alpha",
                        "reject",
                        "calibration",
                        "argmax",
                    ])
                    .map_err(other)?;
                    w.write_record([
                        gamma.name().to_string(),
                        rep.n.to_string(),
                        rep.d.to_string(),
                        rep.t.to_string(),
                        rep.c_n.to_string(),
                        rep.v_gamma.to_string(),
                        rep.standardized.to_string(),
                        rep.p_value.to_string(),
                        rep.alpha.to_string(),
                        rep.reject.to_string(),
                        calibration_name(rep.calibration).to_string(),
                        fmt_pair(names, rep.argmax),
                    ])
                    .map_err(other)?;
                    w.flush().map_err(other)?;
                }
                Format::Tty => {
                    writeln!(
                        out,
                        "max test ({}, {} calibration)",
                        gamma,
                        calibration_name(rep.calibration)
                    )
                    .map_err(other)?;
                    writeln!(out, "  n = {}, d = {}, pairs = {}", rep.n, rep.d, rep.c_n).map_err(other)?;
                    writeln!(out, "  T = {:.6} at {}", rep.t, fmt_pair(names, rep.argmax)).map_err(other)?;
                    writeln!(out, "  standardized = {:.6}", rep.standardized).map_err(other)?;
                    writeln!(out, "  p-value = {:.6e}", rep.p_value).map_err(other)?;
                    writeln!(
                        out,
                        "  {} at alpha = {}",
                        if rep.reject { "reject" } else { "do not reject" },
                        alpha
                    )
                    .map_err(other)?;
                }
            }
        }
        Command::Stepdown {
            input,
            alpha,
            boot,
            seed,
            two_sided,
        } => {
            check_alpha(alpha)?;
            let data = load(&input)?;
            let cfg = StepdownConfig {
                alpha,
                boot,
                seed,
                two_sided,
            };
            let res = stepdown_test(&data, &cfg).map_err(|e| Failure::from_error(e, Some(data.names())))?;
            for w in &res.warnings {
                eprintln!("warning: {w}");
            }
            let names = data.names();
            match fmt {
                Format::Json => write_json(out, &envelope("stepdown", to_value(&res)))?,
                Format::Csv => {
                    let mut w = csv_writer(out);
                    w.write_record(["pair", "l", "m", "rho", "statistic", "rejected", "step"])
                        .map_err(other)?;
                    for s in &res.statistics {
                        let step = res
                            .steps
                            .iter()
                            .find(|st| st.newly_rejected.contains(&(s.l, s.m)))
                            .map(|st| st.step.to_string())
                            .unwrap_or_default();
                        w.write_record([
                            fmt_pair(names, (s.l, s.m)),
                            (s.l + 1).to_string(),
                            (s.m + 1).to_string(),
                            s.rho.to_string(),
                            s.statistic.to_string(),
                            res.rejected.contains(&(s.l, s.m)).to_string(),
                            step,
                        ])
                        .map_err(other)?;
                    }
                    w.flush().map_err(other)?;
                }
                Format::Tty => {
                    writeln!(
                        out,
                        "stepdown test (alpha = {}, B = {}, seed = {}{})",
                        alpha,
                        boot,
                        seed,
                        if two_sided { ", two-sided" } else { "" }
                    )
                    .map_err(other)?;
                    for st in &res.steps {
                        writeln!(
                            out,
                            "  step {}: {} active, critical value {:.6}, {} rejected",
                            st.step,
                            st.active.len(),
                            st.critical_value,
                            st.newly_rejected.len()
                        )
                        .map_err(other)?;
                    }
                    writeln!(out, "  rejected ({}):", res.rejected.len()).map_err(other)?;
                    for &p in &res.rejected {
                        writeln!(out, "    {}", fmt_pair(names, p)).map_err(other)?;
                    }
                }
            }
        }
        Command::Moebius { input, alpha } => {
            check_alpha(alpha)?;
            let data = load(&input)?;
            let (rep, table) = moebius_test(&data, alpha).map_err(|e| Failure::from_error(e, Some(data.names())))?;
            match fmt {
                Format::Json => write_json(
                    out,
                    &envelope("moebius", json!({ "test": to_value(&rep), "table": to_value(&table) })),
                )?,
                Format::Csv => table.write_csv(&mut *out).map_err(other)?,
                Format::Tty => {
                    writeln!(out, "Moebius test (n = {}, d = {})", rep.n, rep.d).map_err(other)?;
                    writeln!(
                        out,
                        "  max S = {:.6} at {}",
                        rep.max_s,
                        fmt_pair(&table.names, rep.argmax)
                    )
                    .map_err(other)?;
                    writeln!(out, "  y = {:.6} (u_n = {:.6})", rep.y, rep.u_n).map_err(other)?;
                    writeln!(out, "  p-value = {:.6e}", rep.p_value).map_err(other)?;
                    writeln!(
                        out,
                        "  {} at alpha = {}",
                        if rep.reject { "reject" } else { "do not reject" },
                        alpha
                    )
                    .map_err(other)?;
                }
            }
        }
        Command::Harness { action } => {
            let (name, result) = match action {
                HarnessAction::Run { config, log } => {
                    if !config.is_file() {
                        return Err(Failure::Usage(format!(
                            "config file {} does not exist",
                            config.display()
                        )));
                    }
                    let mut cfg = ExperimentConfig::from_path(&config).map_err(|e| Failure::from_error(e, None))?;
                    if log.is_some() {
                        cfg.output = log;
                    }
                    let r = run_experiment(&cfg, &RunOptions::default()).map_err(|e| Failure::from_error(e, None))?;
                    eprintln!("completed in {:.2} s", r.wall_clock_secs);
                    ("harness run", r)
                }
                HarnessAction::Summarize { log } => {
                    if !log.is_file() {
                        return Err(Failure::Usage(format!("log file {} does not exist", log.display())));
                    }
                    (
                        "harness summarize",
                        summarize_log(&log).map_err(|e| Failure::from_error(e, None))?,
                    )
                }
            };
            write_harness(out, fmt, name, &result)?;
        }
    }
    Ok(())
}

fn write_harness(out: &mut impl Write, fmt: Format, name: &str, r: &ExperimentResult) -> CliResult<()> {
    match fmt {
        Format::Json => write_json(out, &envelope(name, to_value(r))),
        Format::Csv => r.write_csv(&mut *out).map_err(other),
        Format::Tty => {
            for c in &r.cells {
                writeln!(out, "cell {} (n = {}, d = {}, reps = {})", c.cell, c.n, c.d, c.reps).map_err(other)?;
                for (k, v) in &c.values {
                    writeln!(
                        out,
                        "  {:<28} mean {:>12.6}  median {:>12.6}  sd {:>12.6}",
                        k, v.mean, v.median, v.sd
                    )
                    .map_err(other)?;
                }
            }
            Ok(())
        }
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::Writer::from_writer(out)
}

fn calibration_name(c: Calibration) -> &'static str {
    match c {
        Calibration::Gumbel => "gumbel",
        Calibration::Gaussian => "gaussian",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let res = run(cli, &mut out);
    let flushed = out.flush();
    match res {
        Ok(()) => match flushed {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
