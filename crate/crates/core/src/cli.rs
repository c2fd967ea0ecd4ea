//! Command-line front end of the `cvtransfer` binary.
//!
//! Exit codes: 0 success, 1 `check` found a violation, 2 invalid flags or
//! configuration, 3 domain error, 4 output file not writable, 5 a Monte-Carlo
//! comparison failed.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::check::{self, Comparison, CHECK_SHOTS_ENV, DEFAULT_CHECK_SHOTS, MC_SIGMAS};
use crate::config::{squeezing_from_db, GainSpec, Grid, ProtocolSection, RunConfig};
use crate::error::Error;
use crate::mc::{estimate_channel_snr, MCConfig, DEFAULT_CHUNK};
use crate::metrics::{clone_fidelities, fidelity_bound_transfer, protocol_channel_snr, FidelityReport};
use crate::protocol::{build_transfer, ProtocolParams};
use crate::report::{fmt_sig, write_csv, write_records, SweepRow, SWEEP_HEADER};

pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_MC_FAILED: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "cvtransfer",
    version,
    about = "Continuous-variable partial state transfer simulator"
)]
pub struct Cli {
    /// TOML run configuration; flags on the command line take precedence
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fidelities and variances of both outputs for one configuration
    Transfer {
        #[command(flatten)]
        protocol: ProtocolFlags,
        #[arg(long, value_name = "PATH")]
        csv: Option<PathBuf>,
    },
    /// Fidelity table over a reflectivity grid and a list of squeezing values
    Sweep(SweepArgs),
    /// 1 -> M cloner fidelities from the circuit and from the closed forms
    Clone(CloneArgs),
    /// Analytic values against the shot-level Monte-Carlo oracle
    Mc(McArgs),
    /// Signal-to-noise ratio of an eavesdropper on the channel
    Snr(SnrArgs),
    /// Run the invariant suite
    Check {
        /// Monte-Carlo shots per case (default from CVTRANSFER_CHECK_SHOTS)
        #[arg(long)]
        shots: Option<u64>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProtocolFlags {
    /// Beamsplitter reflectivity, 0 <= R < 1
    #[arg(long = "R", allow_hyphen_values = true)]
    pub reflectivity: Option<f64>,
    /// EPR squeezing factor (default 0)
    #[arg(long = "r", conflicts_with = "sq_db", allow_hyphen_values = true)]
    pub squeezing: Option<f64>,
    /// EPR squeezing in decibels, 10 log10(e^{2r})
    #[arg(long = "sq-db", allow_hyphen_values = true)]
    pub sq_db: Option<f64>,
    /// Amplitude transmission of the link (default 1)
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
    /// Feedforward gain: auto, loss-comp or a number
    #[arg(long)]
    pub gain: Option<GainSpec>,
    /// Input coherent amplitude as x,y quadrature means
    #[arg(long, allow_hyphen_values = true, value_name = "X,Y")]
    pub mean: Option<Pair>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Reflectivity grid start:stop:points
    #[arg(long = "R-grid", value_name = "START:STOP:POINTS")]
    pub grid: Option<Grid>,
    /// Comma-separated squeezing factors
    #[arg(long = "r-list", value_delimiter = ',', allow_hyphen_values = true)]
    pub r_list: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub gain: Option<GainSpec>,
    /// Output CSV (standard output when absent)
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CloneArgs {
    /// Number of output copies, at least 2
    #[arg(long = "M")]
    pub clones: Option<i64>,
    #[arg(long = "r", conflicts_with = "sq_db", allow_hyphen_values = true)]
    pub squeezing: Option<f64>,
    #[arg(long = "sq-db", allow_hyphen_values = true)]
    pub sq_db: Option<f64>,
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub protocol: ProtocolFlags,
    /// Run the 1 -> M cloner instead of the two-output transfer
    #[arg(long = "M")]
    pub clones: Option<i64>,
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shots per independently seeded chunk
    #[arg(long)]
    pub chunk: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SnrArgs {
    #[command(flatten)]
    pub protocol: ProtocolFlags,
    /// Signal variances of the input X and Y quadratures (default 1,1)
    #[arg(long, value_name = "VX,VY")]
    pub vin: Option<Pair>,
    /// Also estimate the SNR by Monte Carlo with this many shots
    #[arg(long)]
    pub shots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Two comma-separated reals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair(pub f64, pub f64);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected x,y, got `{s}`"))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        Ok(Pair(num(a)?, num(b)?))
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
    Io(String),
    McFailed(usize),
    CheckFailed(usize),
    /// Standard output was closed by the reader.
    Closed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Domain(_) => EXIT_DOMAIN,
            CliError::Io(_) => EXIT_IO,
            CliError::McFailed(_) => EXIT_MC_FAILED,
            CliError::Closed => 0,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "{m}"),
            CliError::McFailed(n) => write!(f, "{n} Monte-Carlo comparison(s) outside {MC_SIGMAS} stderr"),
            CliError::CheckFailed(n) => write!(f, "{n} check(s) failed"),
            CliError::Closed => write!(f, "output closed"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Usage(m),
            other => CliError::Domain(other),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parse `args` (including the program name), run the command and return the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                0
            };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(CliError::Closed) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match &cli.command {
        Command::Transfer { protocol, csv } => cmd_transfer(protocol, csv.as_deref(), &config, out),
        Command::Sweep(args) => cmd_sweep(args, &config, out),
        Command::Clone(args) => cmd_clone(args, &config, out),
        Command::Mc(args) => cmd_mc(args, &config, out),
        Command::Snr(args) => cmd_snr(args, &config, out),
        Command::Check { shots } => cmd_check(*shots, out),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        CliError::Closed
    } else {
        CliError::Io(e.to_string())
    }
}

fn squeezing(r: Option<f64>, db: Option<f64>, section: &ProtocolSection) -> CliResult<f64> {
    match (r, db) {
        (Some(r), _) => Ok(r),
        (None, Some(db)) => Ok(squeezing_from_db(db)),
        (None, None) => match (section.squeezing, section.sq_db) {
            (Some(_), Some(_)) => Err(CliError::Usage("configuration sets both `r` and `sq_db`".into())),
            (Some(r), None) => Ok(r),
            (None, Some(db)) => Ok(squeezing_from_db(db)),
            (None, None) => Ok(0.0),
        },
    }
}

fn clone_count(flag: Option<i64>, section: &ProtocolSection) -> CliResult<Option<u32>> {
    match flag.or(section.clones.map(i64::from)) {
        None => Ok(None),
        Some(m) if m >= 2 && m <= u32::MAX as i64 => Ok(Some(m as u32)),
        Some(m) => Err(CliError::Usage(format!("--M must be an integer >= 2, got {m}"))),
    }
}

fn resolve_protocol(flags: &ProtocolFlags, clones: Option<i64>, config: &RunConfig) -> CliResult<ProtocolParams> {
    let section = config.protocol();
    let r = squeezing(flags.squeezing, flags.sq_db, &section)?;
    let reflectivity = flags.reflectivity.or(section.reflectivity);
    let mut params = match clone_count(clones, &section)? {
        Some(m) => {
            let mut p = ProtocolParams::cloner(m, r);
            if let Some(rf) = reflectivity {
                p.reflectivity = rf;
            }
            p
        }
        None => {
            let rf = reflectivity.ok_or_else(|| CliError::Usage("--R is required".into()))?;
            ProtocolParams::new(rf, r)
        }
    };
    if let Some(eta) = flags.eta.or(section.eta) {
        params.eta = eta;
    }
    if let Some(GainSpec(g)) = flags.gain.or(section.gain) {
        params.gain_policy = g;
    }
    if let Some(Pair(x, y)) = flags.mean.or(section.mean.map(|[x, y]| Pair(x, y))) {
        params.input_mean = (x, y);
    }
    params.validate()?;
    Ok(params)
}

fn csv_target<'a>(flag: Option<&'a Path>, config: &'a RunConfig) -> Option<&'a Path> {
    flag.or(config.output.as_ref().and_then(|o| o.csv.as_deref()))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn print_output(out: &mut dyn Write, name: &str, f: &FidelityReport) -> std::io::Result<()> {
    writeln!(out, "VX_{name} = {:.6}", f.vx)?;
    writeln!(out, "VY_{name} = {:.6}", f.vy)?;
    writeln!(out, "F_{name} = {:.6}", f.fidelity)?;
    writeln!(out, "{name} beats classical limit = {}", yes(f.beats_classical))?;
    writeln!(out, "{name} beats no-cloning limit = {}", yes(f.beats_no_cloning))
}

fn cmd_transfer(flags: &ProtocolFlags, csv: Option<&Path>, config: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let params = resolve_protocol(flags, None, config)?;
    let outputs = build_transfer(&params)?;
    let boundary = fidelity_bound_transfer(params.reflectivity)?;
    let target = csv_target(csv, config);
    let mut file = target.map(create).transpose()?;

    writeln!(out, "R = {:.6}", params.reflectivity).map_err(io_err)?;
    writeln!(out, "r = {:.6}", params.squeezing).map_err(io_err)?;
    writeln!(out, "eta = {:.6}", params.eta).map_err(io_err)?;
    writeln!(out, "g = {:.6}", outputs.g_used).map_err(io_err)?;
    writeln!(out, "unity gain = {}", yes(outputs.unity_gain)).map_err(io_err)?;
    let f1 = outputs.fidelity_out1()?;
    print_output(out, "out1", &f1).map_err(io_err)?;
    match &outputs.clones {
        Some(_) => {
            for (k, f) in outputs.clone_fidelities()?.iter().enumerate() {
                print_output(out, &format!("clone{}", k + 1), f).map_err(io_err)?;
            }
        }
        None => print_output(out, "out2", &outputs.fidelity_out2()?).map_err(io_err)?,
    }
    writeln!(out, "F_boundary = {boundary:.6}").map_err(io_err)?;
    writeln!(out, "out1 beats boundary = {}", yes(f1.fidelity > boundary)).map_err(io_err)?;

    if let (Some(w), Some(path)) = (file.as_mut(), target) {
        let row = SweepRow::compute(&params)?;
        write_csv(w, &SWEEP_HEADER, &[row.fields()])
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs, config: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let section = config.sweep();
    let grid = args
        .grid
        .or(section.reflectivity_grid)
        .ok_or_else(|| CliError::Usage("--R-grid is required".into()))?;
    let r_list = if !args.r_list.is_empty() {
        args.r_list.clone()
    } else {
        section.r_list.unwrap_or_else(|| vec![0.0])
    };
    let protocol = config.protocol();
    let mut base = ProtocolParams::new(0.0, 0.0);
    if let Some(eta) = args.eta.or(protocol.eta) {
        base.eta = eta;
    }
    if let Some(GainSpec(g)) = args.gain.or(protocol.gain) {
        base.gain_policy = g;
    }
    let points: Vec<ProtocolParams> = r_list
        .iter()
        .flat_map(|&r| {
            let base = &base;
            grid.values().into_iter().map(move |rf| ProtocolParams {
                reflectivity: rf,
                squeezing: r,
                ..base.clone()
            })
        })
        .collect();
    let target = csv_target(args.csv.as_deref(), config);
    let file = target.map(create).transpose()?;
    let rows: Vec<[f64; 9]> = points
        .par_iter()
        .map(|p| SweepRow::compute(p).map(|row| row.fields()))
        .collect::<crate::Result<_>>()?;

    match (file, target) {
        (Some(w), Some(path)) => {
            write_csv(w, &SWEEP_HEADER, &rows)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
            writeln!(out, "wrote {} rows to {}", rows.len(), path.display()).map_err(io_err)
        }
        _ => write_csv(out, &SWEEP_HEADER, &rows).map_err(io_err),
    }
}

fn cmd_clone(args: &CloneArgs, config: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let section = config.protocol();
    let m = clone_count(args.clones, &section)?.ok_or_else(|| CliError::Usage("--M is required".into()))?;
    let r = squeezing(args.squeezing, args.sq_db, &section)?;
    let c = clone_fidelities(m, r)?;
    let target = csv_target(args.csv.as_deref(), config);
    let file = target.map(create).transpose()?;

    writeln!(out, "M = {m}").map_err(io_err)?;
    writeln!(out, "r = {r:.6}").map_err(io_err)?;
    writeln!(out, "F_out1 circuit = {:.6}", c.out1_circuit).map_err(io_err)?;
    writeln!(out, "F_out1 closed form = {:.6}", c.out1_closed).map_err(io_err)?;
    for (k, f) in c.clones_circuit.iter().enumerate() {
        writeln!(out, "F_clone{} circuit = {f:.6}", k + 1).map_err(io_err)?;
    }
    writeln!(out, "F_clone closed form = {:.6}", c.clone_closed).map_err(io_err)?;
    writeln!(out, "max |circuit - closed form| = {:.3e}", c.max_deviation()).map_err(io_err)?;

    if let (Some(w), Some(path)) = (file, target) {
        let mut rows = vec![vec!["out1".to_owned(), fmt_sig(c.out1_circuit), fmt_sig(c.out1_closed)]];
        for (k, f) in c.clones_circuit.iter().enumerate() {
            rows.push(vec![format!("clone{}", k + 1), fmt_sig(*f), fmt_sig(c.clone_closed)]);
        }
        write_records(w, &["output", "F_circuit", "F_closed"], &rows)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn mc_config(shots: Option<u64>, seed: Option<u64>, chunk: Option<u64>, config: &RunConfig) -> CliResult<MCConfig> {
    let section = config.mc();
    let shots = shots
        .or(section.shots)
        .ok_or_else(|| CliError::Usage("--shots is required".into()))?;
    let seed = seed
        .or(section.seed)
        .ok_or_else(|| CliError::Usage("--seed is required".into()))?;
    Ok(MCConfig {
        shots,
        seed,
        chunk: chunk.or(section.chunk).unwrap_or(DEFAULT_CHUNK),
    })
}

fn cmd_mc(args: &McArgs, config: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let params = resolve_protocol(&args.protocol, args.clones, config)?;
    let cfg = mc_config(args.shots, args.seed, args.chunk, config)?;
    let target = csv_target(args.csv.as_deref(), config);
    let file = target.map(create).transpose()?;
    let rows = check::compare_protocol(&params, &cfg)?;

    writeln!(
        out,
        "shots = {} seed = {} R = {:.6} r = {:.6} eta = {:.6}",
        cfg.shots, cfg.seed, params.reflectivity, params.squeezing, params.eta
    )
    .map_err(io_err)?;
    writeln!(
        out,
        "{:<8} {:<9} {:>12} {:>12} {:>10} {:>8}  result",
        "output", "quantity", "analytic", "mc", "stderr", "z"
    )
    .map_err(io_err)?;
    for c in &rows {
        writeln!(
            out,
            "{:<8} {:<9} {:>12.6} {:>12.6} {:>10.6} {:>8.3}  {}",
            c.output,
            c.quantity,
            c.analytic,
            c.estimate,
            c.stderr,
            c.z(),
            pass_fail(c)
        )
        .map_err(io_err)?;
    }
    let failed = rows.iter().filter(|c| !c.passes()).count();
    writeln!(out, "{}", if failed == 0 { "PASS" } else { "FAIL" }).map_err(io_err)?;

    if let (Some(w), Some(path)) = (file, target) {
        let records: Vec<Vec<String>> = rows
            .iter()
            .map(|c| {
                vec![
                    c.output.clone(),
                    c.quantity.to_owned(),
                    fmt_sig(c.analytic),
                    fmt_sig(c.estimate),
                    fmt_sig(c.stderr),
                    fmt_sig(c.z()),
                    pass_fail(c).to_owned(),
                ]
            })
            .collect();
        write_records(
            w,
            &["output", "quantity", "analytic", "mc", "stderr", "z", "result"],
            &records,
        )
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    if failed > 0 {
        return Err(CliError::McFailed(failed));
    }
    Ok(())
}

fn pass_fail(c: &Comparison) -> &'static str {
    if c.passes() {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_snr(args: &SnrArgs, config: &RunConfig, out: &mut dyn Write) -> CliResult<()> {
    let params = resolve_protocol(&args.protocol, None, config)?;
    let vin = args
        .vin
        .map(|Pair(x, y)| (x, y))
        .or(config.snr.as_ref().and_then(|s| s.vin).map(|[x, y]| (x, y)))
        .unwrap_or((1.0, 1.0));
    let report = protocol_channel_snr(&params, vin)?;
    let (px, py) = report.printed_formula.unwrap_or((f64::NAN, f64::NAN));

    writeln!(out, "SNR_X = {:.6}", report.snr_x).map_err(io_err)?;
    writeln!(out, "SNR_Y = {:.6}", report.snr_y).map_err(io_err)?;
    writeln!(out, "printed formula SNR_X = {px:.6}").map_err(io_err)?;
    writeln!(out, "printed formula SNR_Y = {py:.6}").map_err(io_err)?;
    match report.printed_divergence() {
        Some(d) if d > 1e-9 || !d.is_finite() => {
            let sign = if px < 0.0 || py < 0.0 {
                ", printed value is negative"
            } else {
                ""
            };
            writeln!(
                out,
                "warning: printed formula differs from the first-principles SNR by {:.3}%{sign}",
                100.0 * d
            )
            .map_err(io_err)?;
        }
        _ => writeln!(out, "printed formula agrees with the first-principles SNR").map_err(io_err)?,
    }

    if let Some(shots) = args.shots {
        let cfg = MCConfig::new(shots, args.seed.or(config.mc().seed).unwrap_or(7));
        let est = estimate_channel_snr(&params, &cfg, vin)?;
        let ok_x = (est.snr_x - report.snr_x).abs() < MC_SIGMAS * est.stderr_x;
        let ok_y = (est.snr_y - report.snr_y).abs() < MC_SIGMAS * est.stderr_y;
        writeln!(
            out,
            "mc SNR_X = {:.6} +/- {:.6}  {}",
            est.snr_x,
            est.stderr_x,
            if ok_x { "PASS" } else { "FAIL" }
        )
        .map_err(io_err)?;
        writeln!(
            out,
            "mc SNR_Y = {:.6} +/- {:.6}  {}",
            est.snr_y,
            est.stderr_y,
            if ok_y { "PASS" } else { "FAIL" }
        )
        .map_err(io_err)?;
        let failed = usize::from(!ok_x) + usize::from(!ok_y);
        if failed > 0 {
            return Err(CliError::McFailed(failed));
        }
    }
    Ok(())
}

/// Shot count for `check`: flag, then environment, then default.
pub fn check_shots(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(CHECK_SHOTS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{CHECK_SHOTS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(DEFAULT_CHECK_SHOTS),
    }
}

fn cmd_check(shots: Option<u64>, out: &mut dyn Write) -> CliResult<()> {
    let shots = check_shots(shots)?;
    let outcomes = check::run_suite(shots);
    for o in &outcomes {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {} ({})", o.name, o.detail).map_err(io_err)?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(CliError::CheckFailed(failed));
    }
    Ok(())
}
