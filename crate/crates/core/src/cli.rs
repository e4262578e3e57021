//! Batch front-end behind the `scbicm` binary.
//!
//! Every subcommand accepts `--config FILE` (TOML, keys named like the long
//! flags); flags given on the command line override the file. Results are
//! written as JSON (an envelope with the command, library version, seed and
//! the resolved configuration) and as aligned text.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::channel::{ChannelSpec, Fading};
use crate::constellation::{Constellation, Modulation};
use crate::de_coupled::{sc_bp_threshold, sc_gap, ScEnsemble, DEFAULT_SC_MAX_ITERS};
use crate::de_flat::{bp_threshold, DeSchedule, DemapperConfig};
use crate::demapper::DemapperKind;
use crate::density::{DegreeProfile, Grid};
use crate::gexit::{area_threshold, bp_gexit_curve, CurveEnsemble, CurveOptions, GexitCurve, DEFAULT_KERNEL_SAMPLES};
use crate::gmi::{noise_threshold, RateMode, DEFAULT_GMI_SAMPLES};
use crate::rng::SeedStream;
use crate::{Error, Result, VERSION};

pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_OTHER: i32 = 1;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "scbicm", version, about = "Thresholds and GEXIT curves of (spatially-coupled) LDPC ensembles over BICM channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noise threshold of a BICM scheme from its GMI (or CM capacity).
    Gmi(GmiArgs),
    /// BP threshold of an uncoupled regular ensemble.
    Threshold(ThresholdArgs),
    /// BP threshold of a spatially-coupled ensemble and its gap.
    ScThreshold(ScThresholdArgs),
    /// BP-GEXIT curve and area threshold.
    Gexit(GexitArgs),
    /// Threshold tables for all modulation / channel pairs.
    Table(TableArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct Output {
    /// TOML file supplying any of the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Master seed of every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Format printed on stdout.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Also write the JSON result to this file.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads for Monte-Carlo sampling (default: available cores).
    /// Results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelArgs {
    /// qpsk, 16qam or 64qam.
    #[arg(long = "mod")]
    #[serde(rename = "mod")]
    pub modulation: Option<String>,
    /// awgn or rayleigh (fading).
    #[arg(long)]
    pub channel: Option<String>,
    /// map or mlm.
    #[arg(long)]
    pub demapper: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DeArgs {
    /// Regular degrees "dl,dr".
    #[arg(long)]
    pub ensemble: Option<String>,
    /// Demapper refresh period (iterative detection); omitted means none.
    #[arg(long)]
    pub id_period: Option<usize>,
    /// Monte-Carlo samples per demapper density.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Density-evolution iteration limit
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Half the number of finite grid cells.
    #[arg(long)]
    pub grid_cells: Option<usize>,
    /// Largest finite LLR of the grid.
    #[arg(long)]
    pub llr_max: Option<f64>,
    /// Initial Eb/N0 bracket "lo,hi" in dB.
    #[arg(long)]
    pub bracket: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GmiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub channel: ChannelArgs,
    /// Code rate per channel bit.
    #[arg(long)]
    pub rate: Option<f64>,
    /// gmi or cm.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: Output,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ThresholdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub de: DeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: Output,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ScThresholdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub de: DeArgs,
    /// Chain half-width.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<usize>,
    /// Coupling window.
    #[arg(long)]
    pub w: Option<usize>,
    /// Reference noise threshold (dB) for the gap; computed when omitted.
    #[arg(long)]
    pub noise_threshold: Option<f64>,
    /// Monte-Carlo samples for the reference noise threshold.
    #[arg(long)]
    pub gmi_samples: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: Output,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GexitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub channel: ChannelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub de: DeArgs,
    /// Couple the ensemble: "L,w".
    #[arg(long)]
    pub sc: Option<String>,
    /// Number of equally spaced channel entropies.
    #[arg(long)]
    pub alpha_grid: Option<usize>,
    /// Monte-Carlo samples per GEXIT kernel evaluation
    #[arg(long)]
    pub kernel_samples: Option<usize>,
    /// Write the curve as CSV (alpha,g,stderr) to this file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum TableKind {
    #[value(name = "I")]
    #[serde(rename = "I")]
    Map,
    #[value(name = "II")]
    #[serde(rename = "II")]
    Mlm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fast,
    Paper,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct TableArgs {
    /// I (MAP demapper) or II (max-log-MAP demapper).
    #[arg(long, value_enum)]
    pub which: Option<TableKind>,
    /// fast: L=16, coarse grid, reduced samples; paper: L=64, full budget.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Restrict to rows, e.g. "qpsk/awgn,16qam/rayleigh".
    #[arg(long)]
    pub rows: Option<String>,
    /// Restrict to ensembles, e.g. "3,6;4,8".
    #[arg(long)]
    pub ensembles: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub out: Output,
}

/// Result of one command: the JSON document and its text rendering.
#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub text: String,
}

/// Overlays the flags on the config file. Keys unknown to the command are
/// rejected.
fn merge<T: Serialize + DeserializeOwned + Default>(flags: &T, config: Option<&Path>) -> Result<T> {
    let Some(path) = config else {
        return Ok(flags.clone_via_json()?);
    };
    let text = fs::read_to_string(path)?;
    let file: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut merged = serde_json::to_value(&file)?;
    let known = serde_json::to_value(T::default())?;
    let (Value::Object(obj), Value::Object(known)) = (&mut merged, known) else {
        return Err(Error::Config("config must be a table".into()));
    };
    if let Some(k) = obj.keys().find(|k| !known.contains_key(*k)) {
        return Err(Error::Config(format!("unknown config key '{k}'")));
    }
    if let Value::Object(f) = serde_json::to_value(flags)? {
        for (k, v) in f {
            if !v.is_null() {
                obj.insert(k, v);
            }
        }
    }
    serde_json::from_value(merged).map_err(|e| Error::Config(format!("config: {e}")))
}

trait CloneViaJson: Sized {
    fn clone_via_json(&self) -> Result<Self>;
}

impl<T: Serialize + DeserializeOwned> CloneViaJson for T {
    fn clone_via_json(&self) -> Result<Self> {
        Ok(serde_json::from_value(serde_json::to_value(self)?)?)
    }
}

fn parse_pair<T: std::str::FromStr>(s: &str, what: &str) -> Result<(T, T)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("{what}: expected two comma-separated values, got '{s}'")));
    }
    let p = |x: &str| x.parse::<T>().map_err(|_| Error::Config(format!("{what}: cannot parse '{x}'")));
    Ok((p(parts[0])?, p(parts[1])?))
}

struct Resolved {
    template: ChannelSpec,
    kind: DemapperKind,
}

fn resolve_channel(c: &ChannelArgs) -> Result<Resolved> {
    let m: Modulation = c.modulation.as_deref().unwrap_or("qpsk").parse()?;
    let f: Fading = c.channel.as_deref().unwrap_or("awgn").parse()?;
    let kind: DemapperKind = c.demapper.as_deref().unwrap_or("map").parse()?;
    Ok(Resolved { template: ChannelSpec::new(Constellation::new(m), f, 1.0)?, kind })
}

fn resolve_de(d: &DeArgs, kind: DemapperKind, seed: u64, default_iters: usize) -> Result<(DegreeProfile, DemapperConfig, DeSchedule)> {
    let (dl, dr) = parse_pair::<usize>(d.ensemble.as_deref().unwrap_or("3,6"), "ensemble")?;
    let profile = DegreeProfile::regular(dl, dr)?;
    let mut demapper = DemapperConfig::new(kind, seed);
    if let Some(n) = d.samples {
        demapper.n_samples = n;
    }
    let default_grid = Grid::default();
    demapper.grid = Grid::with_range(d.llr_max.unwrap_or(default_grid.max_llr()), d.grid_cells.unwrap_or(default_grid.half_cells))?;
    let schedule = match d.id_period {
        Some(t) => DeSchedule::iterative(t)?,
        None => DeSchedule::non_iterative(),
    }
    .with_max_iters(d.max_iters.unwrap_or(default_iters));
    schedule.validate()?;
    Ok((profile, demapper, schedule))
}

fn bracket(d: &DeArgs, default: (f64, f64)) -> Result<(f64, f64)> {
    match &d.bracket {
        Some(b) => {
            let (lo, hi) = parse_pair::<f64>(b, "bracket")?;
            if lo >= hi {
                return Err(Error::Config("bracket must satisfy lo < hi".into()));
            }
            Ok((lo, hi))
        }
        None => Ok(default),
    }
}

fn envelope(command: &str, seed: u64, config: Value, result: Value) -> Value {
    json!({
        "command": command,
        "version": VERSION,
        "seed": seed,
        "config": config,
        "result": result,
    })
}

fn run_gmi(args: &GmiArgs) -> Result<Report> {
    let a: GmiArgs = merge(args, args.out.config.as_deref())?;
    let seed = a.out.seed.unwrap_or(DEFAULT_SEED);
    let r = resolve_channel(&a.channel)?;
    let rate = a.rate.unwrap_or(0.5);
    let mode: RateMode = a.mode.as_deref().unwrap_or("gmi").parse()?;
    let n = a.samples.unwrap_or(DEFAULT_GMI_SAMPLES);
    let t = noise_threshold(&r.template, r.kind, rate, mode, n, &SeedStream::new(seed))?;
    let result = json!({
        "sigma_star": t.sigma,
        "ebn0_db": t.ebn0_db,
        "samples": t.samples,
        "stderr": t.stderr_db,
        "rate_stderr": t.rate_stderr,
    });
    let mut text = String::new();
    writeln!(text, "noise threshold  {} / {} / {}  ({mode}, R = {rate})", r.template.constellation.modulation, r.template.fading, r.kind)
        .ok();
    writeln!(text, "  Eb/N0*   {:>9.4} dB  (stderr {:.4})", t.ebn0_db, t.stderr_db).ok();
    writeln!(text, "  sigma*   {:>9.6}", t.sigma).ok();
    writeln!(text, "  samples  {:>9}", t.samples).ok();
    Ok(Report { json: envelope("gmi", seed, serde_json::to_value(&a)?, result), text })
}

fn run_threshold(args: &ThresholdArgs) -> Result<Report> {
    let a: ThresholdArgs = merge(args, args.out.config.as_deref())?;
    let seed = a.out.seed.unwrap_or(DEFAULT_SEED);
    let r = resolve_channel(&a.channel)?;
    let (profile, demapper, schedule) = resolve_de(&a.de, r.kind, seed, crate::de_flat::DEFAULT_MAX_ITERS)?;
    let t = bp_threshold(&profile, &r.template, &demapper, &schedule, bracket(&a.de, (-2.0, 12.0))?)?;
    let result = json!({
        "ebn0_db": t.ebn0_db,
        "sigma": t.sigma,
        "rate": t.rate,
        "iters_at_threshold": t.iters_at_threshold,
        "tolerance_db": t.tolerance_db,
        "demapper_samples": demapper.n_samples,
    });
    let mut text = String::new();
    writeln!(
        text,
        "BP threshold  {}  {} / {} / {}",
        a.de.ensemble.as_deref().unwrap_or("3,6"),
        r.template.constellation.modulation,
        r.template.fading,
        r.kind
    )
    .ok();
    writeln!(text, "  Eb/N0     {:>9.4} dB  (bisection tolerance {} dB)", t.ebn0_db, t.tolerance_db).ok();
    writeln!(text, "  sigma     {:>9.6}", t.sigma).ok();
    writeln!(text, "  iters     {:>9}", t.iters_at_threshold).ok();
    Ok(Report { json: envelope("threshold", seed, serde_json::to_value(&a)?, result), text })
}

fn run_sc_threshold(args: &ScThresholdArgs) -> Result<Report> {
    let a: ScThresholdArgs = merge(args, args.out.config.as_deref())?;
    let seed = a.out.seed.unwrap_or(DEFAULT_SEED);
    let r = resolve_channel(&a.channel)?;
    let (profile, demapper, schedule) = resolve_de(&a.de, r.kind, seed, DEFAULT_SC_MAX_ITERS)?;
    let (dl, dr) = profile.regular_degrees().expect("regular");
    let e = ScEnsemble::new(dl, dr, a.l.unwrap_or(64), a.w.unwrap_or(4))?;
    let t = sc_bp_threshold(&e, &r.template, &demapper, &schedule, bracket(&a.de, (-2.0, 12.0))?)?;
    let (noise, noise_stderr) = match a.noise_threshold {
        Some(v) => (v, 0.0),
        None => {
            let n = a.gmi_samples.unwrap_or(DEFAULT_GMI_SAMPLES);
            let nt = noise_threshold(&r.template, r.kind, 0.5, RateMode::Gmi, n, &SeedStream::new(seed))?;
            (nt.ebn0_db, nt.stderr_db)
        }
    };
    let gap = sc_gap(&e, t.ebn0_db, noise);
    let result = json!({
        "ebn0_db": t.ebn0_db,
        "sigma": t.sigma,
        "design_rate": t.design_rate,
        "gap_db": gap.gap_db,
        "asympt_gap_db": gap.asympt_gap_db,
        "noise_threshold_db": noise,
        "noise_threshold_stderr": noise_stderr,
        "iters_at_threshold": t.iters_at_threshold,
        "tolerance_db": t.tolerance_db,
    });
    let mut text = String::new();
    writeln!(
        text,
        "SC BP threshold  ({},{},{},{})  {} / {} / {}",
        e.dl, e.dr, e.l, e.w, r.template.constellation.modulation, r.template.fading, r.kind
    )
    .ok();
    writeln!(text, "  Eb/N0        {:>9.4} dB", t.ebn0_db).ok();
    writeln!(text, "  design rate  {:>9.6}", t.design_rate).ok();
    writeln!(text, "  gap          {:>9.4} dB  (noise threshold {:.4} dB)", gap.gap_db, noise).ok();
    writeln!(text, "  asympt. gap  {:>9.4} dB", gap.asympt_gap_db).ok();
    Ok(Report { json: envelope("sc-threshold", seed, serde_json::to_value(&a)?, result), text })
}

fn run_gexit(args: &GexitArgs) -> Result<Report> {
    let a: GexitArgs = merge(args, args.out.config.as_deref())?;
    let seed = a.out.seed.unwrap_or(DEFAULT_SEED);
    let r = resolve_channel(&a.channel)?;
    let max_default = if a.sc.is_some() { DEFAULT_SC_MAX_ITERS } else { crate::de_flat::DEFAULT_MAX_ITERS };
    let (profile, demapper, schedule) = resolve_de(&a.de, r.kind, seed, max_default)?;
    let ens = match &a.sc {
        Some(s) => {
            let (l, w) = parse_pair::<usize>(s, "sc")?;
            let (dl, dr) = profile.regular_degrees().expect("regular");
            CurveEnsemble::Coupled(ScEnsemble::new(dl, dr, l, w)?)
        }
        None => CurveEnsemble::Flat(profile),
    };
    let mut opts = CurveOptions::uniform(a.alpha_grid.unwrap_or(100));
    opts.kernel_samples = a.kernel_samples.unwrap_or(DEFAULT_KERNEL_SAMPLES);
    let curve = bp_gexit_curve(&ens, &r.template, &demapper, &schedule, &opts)?;
    let rate = ens.design_rate();
    let area = area_threshold(&curve, rate, r.template.bits_per_symbol());
    if let Some(path) = &a.csv {
        emit_curve(&curve, CurveFormat::Csv, path)?;
    }
    let area_json = match &area {
        Ok(t) => serde_json::to_value(t)?,
        Err(e) => json!({ "error": e.to_string() }),
    };
    let result = json!({
        "curve": curve,
        "total_area": curve.total_area(),
        "design_rate": rate,
        "area_threshold": area_json,
    });
    let mut text = String::new();
    writeln!(text, "BP-GEXIT  {}  {} / {} / {}", ens.label(), r.template.constellation.modulation, r.template.fading, r.kind).ok();
    writeln!(text, "  {:>8}  {:>8}  {:>8}", "alpha", "g", "stderr").ok();
    for p in &curve.points {
        writeln!(text, "  {:>8.4}  {:>8.5}  {:>8.5}{}", p.alpha, p.g, p.stderr, if p.converged { "" } else { "  (iteration cap)" }).ok();
    }
    writeln!(text, "  area     {:>9.5}  (design rate {:.5})", curve.total_area(), rate).ok();
    match &area {
        Ok(t) => writeln!(text, "  area threshold  alpha {:.5}  sigma {:.5}  Eb/N0 {:.4} dB", t.alpha, t.sigma, t.ebn0_db).ok(),
        Err(e) => writeln!(text, "  area threshold  unavailable: {e}").ok(),
    };
    Ok(Report { json: envelope("gexit", seed, serde_json::to_value(&a)?, result), text })
}

/// Rows of the threshold tables.
pub const TABLE_ROWS: [(Modulation, Fading); 6] = [
    (Modulation::Qpsk, Fading::None),
    (Modulation::Qam16, Fading::None),
    (Modulation::Qam64, Fading::None),
    (Modulation::Qpsk, Fading::Rayleigh),
    (Modulation::Qam16, Fading::Rayleigh),
    (Modulation::Qam64, Fading::Rayleigh),
];

pub const TABLE_ENSEMBLES: [(usize, usize); 3] = [(3, 6), (4, 8), (6, 12)];

/// Chain size and numerical budget of a table preset.
#[derive(Debug, Clone, Copy)]
pub struct PresetBudget {
    pub l: usize,
    pub w: usize,
    pub grid: Grid,
    pub demapper_samples: usize,
    pub gmi_samples: usize,
}

pub fn preset_budget(p: Preset) -> PresetBudget {
    match p {
        Preset::Fast => PresetBudget {
            l: 16,
            w: 4,
            grid: Grid::with_range(25.0, 1024).expect("valid grid"),
            demapper_samples: 500_000,
            gmi_samples: 1_000_000,
        },
        Preset::Paper => PresetBudget {
            l: 64,
            w: 4,
            grid: Grid::default(),
            demapper_samples: crate::de_flat::DEFAULT_DEMAPPER_SAMPLES,
            gmi_samples: DEFAULT_GMI_SAMPLES,
        },
    }
}

fn run_table(args: &TableArgs) -> Result<Report> {
    let a: TableArgs = merge(args, args.out.config.as_deref())?;
    let seed = a.out.seed.unwrap_or(DEFAULT_SEED);
    let which = a.which.unwrap_or(TableKind::Map);
    let preset = a.preset.unwrap_or(Preset::Fast);
    let budget = preset_budget(preset);
    let kind = match which {
        TableKind::Map => DemapperKind::MapOptimal,
        TableKind::Mlm => DemapperKind::MaxLogMap,
    };
    let rows: Vec<(Modulation, Fading)> = match &a.rows {
        None => TABLE_ROWS.to_vec(),
        Some(sel) => sel
            .split(',')
            .map(|r| {
                let (m, f) = r.split_once('/').ok_or_else(|| Error::Config(format!("row '{r}' is not mod/channel")))?;
                Ok((m.trim().parse()?, f.trim().parse()?))
            })
            .collect::<Result<_>>()?,
    };
    let ensembles: Vec<(usize, usize)> = match &a.ensembles {
        None => TABLE_ENSEMBLES.to_vec(),
        Some(sel) => sel.split(';').map(|e| parse_pair(e, "ensembles")).collect::<Result<_>>()?,
    };
    let seeds = SeedStream::new(seed);
    let mut demapper = DemapperConfig::new(kind, seed);
    demapper.grid = budget.grid;
    demapper.n_samples = budget.demapper_samples;
    let schedule = DeSchedule::non_iterative().with_max_iters(DEFAULT_SC_MAX_ITERS);
    let mut json_rows = Vec::new();
    let mut text = String::new();
    let title = match which {
        TableKind::Map => "MAP demapper",
        TableKind::Mlm => "max-log-MAP demapper",
    };
    writeln!(text, "SC ensembles over BICM channels, {title} (preset {preset:?}, L = {}, w = {})", budget.l, budget.w).ok();
    write!(text, "{:<16} {:>12}", "mod / chan", "noise thr.").ok();
    for (dl, dr) in &ensembles {
        write!(text, "  {:>24}", format!("({dl},{dr},{},{}) BP/gap/asym", budget.l, budget.w)).ok();
    }
    writeln!(text).ok();
    for (m, f) in rows {
        let template = ChannelSpec::new(Constellation::new(m), f, 1.0)?;
        let nt = noise_threshold(&template, kind, 0.5, RateMode::Gmi, budget.gmi_samples, &seeds)?;
        let mut cells = Vec::new();
        write!(text, "{:<16} {:>12.2}", format!("{} / {}", m, f), nt.ebn0_db).ok();
        for &(dl, dr) in &ensembles {
            let e = ScEnsemble::new(dl, dr, budget.l, budget.w)?;
            let lo = nt.ebn0_db;
            let t = sc_bp_threshold(&e, &template, &demapper, &schedule, (lo, lo + 1.5))?;
            let gap = sc_gap(&e, t.ebn0_db, nt.ebn0_db);
            write!(text, "  {:>24}", format!("{:.2} / {:.2} / {:.2}", t.ebn0_db, gap.gap_db, gap.asympt_gap_db)).ok();
            cells.push(json!({
                "ensemble": [dl, dr, budget.l, budget.w],
                "bp_threshold_db": t.ebn0_db,
                "gap_db": gap.gap_db,
                "asympt_gap_db": gap.asympt_gap_db,
                "design_rate": t.design_rate,
                "tolerance_db": t.tolerance_db,
            }));
        }
        writeln!(text).ok();
        json_rows.push(json!({
            "modulation": m.name(),
            "channel": f.name(),
            "noise_threshold_db": nt.ebn0_db,
            "noise_threshold_stderr": nt.stderr_db,
            "ensembles": cells,
        }));
    }
    let result = json!({ "table": which, "preset": preset, "rows": json_rows });
    Ok(Report { json: envelope("table", seed, serde_json::to_value(&a)?, result), text })
}

fn output_of(c: &Command) -> &Output {
    match c {
        Command::Gmi(a) => &a.out,
        Command::Threshold(a) => &a.out,
        Command::ScThreshold(a) => &a.out,
        Command::Gexit(a) => &a.out,
        Command::Table(a) => &a.out,
    }
}

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Gmi(a) => run_gmi(a),
        Command::Threshold(a) => run_threshold(a),
        Command::ScThreshold(a) => run_sc_threshold(a),
        Command::Gexit(a) => run_gexit(a),
        Command::Table(a) => run_table(a),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::OutOfRange(_) | Error::GridMismatch | Error::InsufficientSamples { .. } => EXIT_INVALID,
        Error::NonConvergence(_) => EXIT_NONCONVERGENCE,
        Error::Io(_) | Error::Json(_) => EXIT_OTHER,
    }
}

/// Entry point of the binary; returns the process exit status.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    crate::parallel::set_workers(output_of(&cli.command).workers.unwrap_or(0));
    match run(&cli).and_then(|r| write_report(&r, output_of(&cli.command), cli_config_format(&cli))) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Format after applying the config file (flags win).
fn cli_config_format(cli: &Cli) -> OutputFormat {
    let out = output_of(&cli.command);
    if let Some(f) = out.format {
        return f;
    }
    out.config
        .as_deref()
        .and_then(|p| fs::read_to_string(p).ok())
        .and_then(|t| toml::from_str::<toml::Table>(&t).ok())
        .and_then(|t| t.get("format").and_then(|v| v.as_str()).map(str::to_owned))
        .and_then(|f| OutputFormat::from_str(&f, true).ok())
        .unwrap_or_default()
}

fn write_report(r: &Report, out: &Output, format: OutputFormat) -> Result<()> {
    let body = serde_json::to_string_pretty(&r.json)?;
    let path =
        out.output.clone().or_else(|| r.json.get("config").and_then(|c| c.get("output")).and_then(|v| v.as_str()).map(PathBuf::from));
    if let Some(p) = &path {
        fs::write(p, format!("{body}\n"))?;
    }
    match format {
        OutputFormat::Json if path.is_none() => println!("{body}"),
        _ => print!("{}", r.text),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFormat {
    Json,
    Csv,
}

/// One row of a curve file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub alpha: f64,
    pub g: f64,
    pub stderr: f64,
}

/// Writes a curve. An empty curve is an error and no file is created.
pub fn emit_curve(curve: &GexitCurve, format: CurveFormat, path: &Path) -> Result<()> {
    curve.validate()?;
    match format {
        CurveFormat::Json => fs::write(path, serde_json::to_string_pretty(curve)?)?,
        CurveFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
            for p in &curve.points {
                w.serialize(CurveRow { alpha: p.alpha, g: p.g, stderr: p.stderr }).map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Reads the `alpha,g,stderr` columns of a curve file in either format.
pub fn load_curve_rows(path: &Path, format: CurveFormat) -> Result<Vec<CurveRow>> {
    match format {
        CurveFormat::Json => {
            let c: GexitCurve = serde_json::from_str(&fs::read_to_string(path)?)?;
            Ok(c.points.iter().map(|p| CurveRow { alpha: p.alpha, g: p.g, stderr: p.stderr }).collect())
        }
        CurveFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
            r.deserialize().map(|row| row.map_err(csv_err)).collect()
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}
