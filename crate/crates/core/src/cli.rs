//! Command-line surface. Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bath::generate_bath;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::exact::{exact_echo_series, fidelity_sweep, uniform_alpha_grid, NuclearState, SpinSystem, SweepBranch};
use crate::fit::fit_stretched_exp;
use crate::hetero::{isotope_report, HeteroCorrelation, HeteroPair, IsotopeReportParams, REPORT_ISOTOPES};
use crate::io;
use crate::spin_model::{build_pairs, heteronuclear_pairs, FieldConfig, NuclearSpin};
use crate::tcl::{DecayExponents, EchoProtocol, EchoSeries, Method, TclOrder};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "spin-echo", version, about = "Hahn-echo decoherence from nuclear spin baths")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Homonuclear pair parameters.
    Pairs(PairsArgs),
    /// TCL2/TCL4 echo envelope.
    Echo(EchoArgs),
    /// Exact echo envelope for a small system.
    Exact(ExactArgs),
    /// Fidelity of TCL2/TCL4 against exact propagation for a single pair.
    FidelitySweep(SweepArgs),
    /// Heteronuclear exponent per isotope paired with a proton.
    Hetero(HeteroArgs),
    /// Random proton bath as a spin CSV.
    Bath(BathArgs),
    /// Stretched-exponential fit of a series CSV.
    Fit(FitArgs),
}

#[derive(Debug, Args, Default)]
pub struct SpinInputs {
    /// XYZ geometry, used with --hyperfine.
    #[arg(long)]
    pub geometry: Option<PathBuf>,
    /// Hyperfine CSV indexed into the geometry.
    #[arg(long)]
    pub hyperfine: Option<PathBuf>,
    /// Spin CSV used instead of geometry + hyperfine.
    #[arg(long)]
    pub spins: Option<PathBuf>,
    /// Extra bath spins in spin CSV form.
    #[arg(long)]
    pub bath: Option<PathBuf>,
    /// Magnetic field, T.
    #[arg(long)]
    pub field: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub horizon_us: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    #[command(flatten)]
    pub inputs: SpinInputs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Tcl2,
    Tcl4,
    Both,
}

#[derive(Debug, Args)]
pub struct EchoArgs {
    #[arg(long, value_enum)]
    pub order: Option<OrderArg>,
    #[command(flatten)]
    pub inputs: SpinInputs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Add heteronuclear pairs through the heteronuclear correlation.
    #[arg(long)]
    pub include_hetero: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub inputs: SpinInputs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Thermal nuclear state at this temperature (K) instead of maximally mixed.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BranchArg {
    Weak,
    Strong,
    Both,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Number of α² points, uniform on (0, 1].
    #[arg(long, default_value_t = 25)]
    pub grid: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub branch: BranchArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HeteroArgs {
    /// Partner isotopes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub isotopes: Option<Vec<String>>,
    /// Internuclear distance, Å.
    #[arg(long)]
    pub distance: Option<f64>,
    /// Proton hyperfine, rad/s.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub horizon_us: Option<f64>,
    #[arg(long)]
    pub field: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BathArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Cube edge, Å.
    #[arg(long)]
    pub edge: Option<f64>,
    #[arg(long)]
    pub fraction: Option<f64>,
    #[arg(long)]
    pub boost: Option<f64>,
    /// Å
    #[arg(long)]
    pub exclusion: Option<f64>,
    /// Electron position x,y,z in Å.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub electron: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Series CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Which method's series to fit when the file holds several.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Pairs(a) => {
            apply_inputs(&mut cfg, &a.inputs);
            cfg.validate()?;
            let spins = load_spins(&cfg, &a.inputs)?;
            let pairs = build_pairs(&spins, &cfg.constants)?;
            emit(a.out.as_deref().or(cfg.output.as_deref()), &io::format_pairs_csv(&pairs))
        }
        Command::Echo(a) => {
            apply_inputs(&mut cfg, &a.inputs);
            apply_grid(&mut cfg, &a.grid);
            cfg.include_hetero |= a.include_hetero;
            cfg.validate()?;
            let order = match a.order {
                Some(o) => o,
                None => parse_order(cfg.method.as_deref())?,
            };
            let spins = load_spins(&cfg, &a.inputs)?;
            let series = echo(&cfg, &spins, order)?;
            let refs: Vec<&EchoSeries> = series.iter().collect();
            emit(a.out.as_deref().or(cfg.output.as_deref()), &io::format_series_csv(&refs))
        }
        Command::Exact(a) => {
            apply_inputs(&mut cfg, &a.inputs);
            apply_grid(&mut cfg, &a.grid);
            cfg.validate()?;
            let spins = load_spins(&cfg, &a.inputs)?;
            let system = SpinSystem::with_dipolar_couplings(cfg.field, spins, &cfg.constants)?;
            let state = match a.temperature {
                Some(temperature) => NuclearState::Thermal { temperature },
                None => NuclearState::MaximallyMixed,
            };
            let series = exact_echo_series(&system, &protocol(&cfg)?, state)?;
            emit(a.out.as_deref().or(cfg.output.as_deref()), &io::format_series_csv(&[&series]))
        }
        Command::FidelitySweep(a) => {
            if a.grid == 0 {
                return Err(Error::Config("sweep grid must have at least one point".into()));
            }
            let grid = uniform_alpha_grid(a.grid);
            let branches: &[SweepBranch] = match a.branch {
                BranchArg::Weak => &[SweepBranch::Weak],
                BranchArg::Strong => &[SweepBranch::Strong],
                BranchArg::Both => &[SweepBranch::Weak, SweepBranch::Strong],
            };
            let mut rows = Vec::new();
            for &b in branches {
                rows.extend(fidelity_sweep(&grid, b)?);
            }
            emit(a.out.as_deref().or(cfg.output.as_deref()), &io::format_sweep_csv(&rows))
        }
        Command::Hetero(a) => {
            if let Some(b0) = a.field {
                cfg.field.b0 = b0;
            }
            cfg.field.validate()?;
            let mut params = IsotopeReportParams {
                field: cfg.field,
                ..IsotopeReportParams::default()
            };
            if let Some(d) = a.distance {
                params.distance = d;
            }
            if let Some(d) = a.delta {
                params.delta = d;
            }
            if let Some(h) = a.horizon_us {
                params.horizon = h * 1e-6;
            }
            let tags: Vec<String> = a
                .isotopes
                .unwrap_or_else(|| REPORT_ISOTOPES.iter().map(|s| s.to_string()).collect());
            let tags: Vec<&str> = tags.iter().map(String::as_str).collect();
            let rows = isotope_report(&tags, &params, &cfg.isotope_table(), &cfg.constants)?;
            emit(a.out.as_deref().or(cfg.output.as_deref()), &io::format_isotope_csv(&rows))
        }
        Command::Bath(a) => {
            if let Some(s) = cfg.resolved_seed()? {
                cfg.bath.seed = s;
            }
            if let Some(s) = a.seed {
                cfg.bath.seed = s;
            }
            if let Some(v) = a.edge {
                cfg.bath.edge = v;
            }
            if let Some(v) = a.fraction {
                cfg.bath.protonation_fraction = v;
            }
            if let Some(v) = a.boost {
                cfg.bath.counter_ion_boost = v;
            }
            if let Some(v) = a.exclusion {
                cfg.bath.exclusion_radius = v;
            }
            if let Some(e) = &a.electron {
                cfg.electron = [e[0], e[1], e[2]];
            }
            cfg.validate()?;
            let spins = generate_bath(&cfg.bath, cfg.electron, &cfg.isotope_table(), &cfg.constants)?;
            log::info!("generated {} bath protons", spins.len());
            emit(a.out.as_deref().or(cfg.output.as_deref()), &io::format_spin_csv(&spins))
        }
        Command::Fit(a) => {
            let all = io::parse_series_csv(&a.input)?;
            let series = match &a.method {
                Some(m) => {
                    let m: Method = m.parse()?;
                    all.into_iter()
                        .find(|s| s.method == m)
                        .ok_or_else(|| Error::Config(format!("no {m} series in {}", a.input.display())))?
                }
                None => all
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::Fit(format!("{} holds no data rows", a.input.display())))?,
            };
            let fit = fit_stretched_exp(&series)?;
            emit(a.out.as_deref(), &io::format_fit(&fit))
        }
    }
}

fn apply_inputs(cfg: &mut RunConfig, inputs: &SpinInputs) {
    if inputs.geometry.is_some() {
        cfg.inputs.geometry = inputs.geometry.clone();
    }
    if inputs.hyperfine.is_some() {
        cfg.inputs.hyperfine = inputs.hyperfine.clone();
    }
    if inputs.bath.is_some() {
        cfg.inputs.bath = inputs.bath.clone();
    }
    if let Some(b0) = inputs.field {
        cfg.field = FieldConfig { b0, ..cfg.field };
    }
}

fn apply_grid(cfg: &mut RunConfig, grid: &GridArgs) {
    if let Some(h) = grid.horizon_us {
        cfg.protocol.horizon_us = h;
    }
    if let Some(p) = grid.points {
        cfg.protocol.points = p;
    }
}

fn parse_order(method: Option<&str>) -> Result<OrderArg> {
    match method.map(str::to_ascii_lowercase).as_deref() {
        None | Some("tcl2") => Ok(OrderArg::Tcl2),
        Some("tcl4") => Ok(OrderArg::Tcl4),
        Some("both") => Ok(OrderArg::Both),
        Some(other) => Err(Error::Config(format!("unknown method `{other}`"))),
    }
}

fn protocol(cfg: &RunConfig) -> Result<EchoProtocol> {
    EchoProtocol::linspace(cfg.protocol.horizon_us * 1e-6, cfg.protocol.points)
}

/// Molecular spins (spin CSV, or geometry + hyperfine) followed by bath spins.
fn load_spins(cfg: &RunConfig, inputs: &SpinInputs) -> Result<Vec<NuclearSpin>> {
    let table = cfg.isotope_table();
    let mut spins = match (&inputs.spins, &cfg.inputs.geometry, &cfg.inputs.hyperfine) {
        (Some(path), _, _) => io::parse_spin_csv(path, &table)?,
        (None, Some(geo), Some(hf)) => {
            let atoms = io::parse_xyz(geo)?;
            io::parse_hyperfine_csv(hf, &atoms, &table)?
        }
        (None, None, None) if cfg.inputs.bath.is_some() => Vec::new(),
        _ => {
            return Err(Error::Config(
                "need --spins, or both --geometry and --hyperfine".into(),
            ))
        }
    };
    if let Some(bath) = &cfg.inputs.bath {
        let extra = io::parse_spin_csv(bath, &table)?;
        for s in &extra {
            if spins.iter().any(|m| m.id == s.id) {
                return Err(Error::Config(format!("spin id {} appears in both molecule and bath", s.id)));
            }
        }
        spins.extend(extra);
    }
    Ok(spins)
}

/// Heteronuclear exponent summed over every pair with a spin-½ member.
fn hetero_exponent(cfg: &RunConfig, spins: &[NuclearSpin], times: &[f64]) -> Result<Vec<f64>> {
    let mut total = vec![0.0; times.len()];
    for (i, j) in heteronuclear_pairs(spins) {
        if !spins[i].spin.is_half() && !spins[j].spin.is_half() {
            log::warn!(
                "skipping pair {}-{}: neither spin is 1/2",
                spins[i].id,
                spins[j].id
            );
            continue;
        }
        let pair = HeteroPair::from_spins(&spins[i], &spins[j], cfg.field, &cfg.constants)?;
        let corr = HeteroCorrelation::new(&pair)?;
        for (w, &t) in total.iter_mut().zip(times) {
            *w += corr.w(t);
        }
    }
    Ok(total)
}

pub fn echo(cfg: &RunConfig, spins: &[NuclearSpin], order: OrderArg) -> Result<Vec<EchoSeries>> {
    let protocol = protocol(cfg)?;
    let pairs = build_pairs(spins, &cfg.constants)?;
    let extra = if cfg.include_hetero {
        Some(hetero_exponent(cfg, spins, protocol.times())?)
    } else {
        None
    };
    let orders: &[TclOrder] = match order {
        OrderArg::Tcl2 => &[TclOrder::Second],
        OrderArg::Tcl4 => &[TclOrder::Fourth],
        OrderArg::Both => &[TclOrder::Second, TclOrder::Fourth],
    };
    orders
        .iter()
        .map(|&o| {
            let mut exps = DecayExponents::from_pairs(&pairs, protocol.times(), o);
            if let Some(w) = &extra {
                exps.add_external_w(w)?;
            }
            Ok(exps.envelope(o.method()))
        })
        .collect()
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => io::write_atomic(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
