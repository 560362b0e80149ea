//! Run configuration: flat `section.key = value` text with `#` comments.
//!
//! A configuration is assembled in layers. Built-in defaults come first,
//! then an optional preset, then an optional file, then `--set` overrides.
//! Every key is known in advance and unknown keys are rejected. The echo
//! produced by [`RunConfig::to_text`] lists every key and parses back to an
//! equal configuration.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use fgbif::continuation::{BranchSettings, Direction, LocusBounds, StepSettings};
use fgbif::cycles::{CycleBranchSettings, CycleMesh, MAX_HOPF_AMPLITUDE};
use fgbif::model::{BranchFamily, ParamName, ParameterSet, State};
use fgbif::odeint::{Perturbation, Scenario, Tolerances};

use crate::error::{CliError, CliResult};

/// Which files a command writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Both => "both",
        }
    }
}

impl FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "both" => Ok(Format::Both),
            other => Err(CliError::config(format!("unknown format '{other}' (csv, json or both)"))),
        }
    }
}

/// Continuation direction; `auto` picks a per-family or per-seed default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    Auto,
    Increasing,
    Decreasing,
}

impl Heading {
    pub fn resolve(self, auto: Direction) -> Direction {
        match self {
            Heading::Auto => auto,
            Heading::Increasing => Direction::Increasing,
            Heading::Decreasing => Direction::Decreasing,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Heading::Auto => "auto",
            Heading::Increasing => "increasing",
            Heading::Decreasing => "decreasing",
        }
    }
}

impl FromStr for Heading {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "auto" => Ok(Heading::Auto),
            "increasing" | "up" => Ok(Heading::Increasing),
            "decreasing" | "down" => Ok(Heading::Decreasing),
            other => Err(CliError::config(format!("unknown direction '{other}'"))),
        }
    }
}

/// How the cycles command picks its Hopf point on the `f = 1/2` branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopfSeed {
    /// The n-th Hopf point detected by continuation, in parameter order.
    Branch,
    /// The detected Hopf point nearest the n-th closed-form root in `k`.
    Analytic,
}

impl FromStr for HopfSeed {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "branch" => Ok(HopfSeed::Branch),
            "analytic" => Ok(HopfSeed::Analytic),
            other => Err(CliError::config(format!("unknown Hopf seed '{other}' (branch or analytic)"))),
        }
    }
}

impl HopfSeed {
    fn as_str(self) -> &'static str {
        match self {
            HopfSeed::Branch => "branch",
            HopfSeed::Analytic => "analytic",
        }
    }
}

/// Loci computed by the two-parameter command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocusChoice {
    Folds,
    Hopf,
    Lpc,
}

impl LocusChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            LocusChoice::Folds => "folds",
            LocusChoice::Hopf => "hopf",
            LocusChoice::Lpc => "lpc",
        }
    }
}

impl FromStr for LocusChoice {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim() {
            "folds" | "fold" => Ok(LocusChoice::Folds),
            "hopf" => Ok(LocusChoice::Hopf),
            "lpc" => Ok(LocusChoice::Lpc),
            other => Err(CliError::config(format!("unknown locus '{other}' (folds, hopf or lpc)"))),
        }
    }
}

/// Initial state, time span, tolerances and classifier tail for `simulate`
/// and `scenario`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimBlock {
    pub f0: f64,
    pub x0: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
    pub tail: f64,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self { f0: 0.65, x0: 0.2, t_start: 0.0, t_end: 300.0, rtol: 1e-8, atol: 1e-10, max_step: None, tail: 0.2 }
    }
}

impl SimBlock {
    pub fn initial(&self) -> State {
        State::new(self.f0, self.x0)
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances { rtol: self.rtol, atol: self.atol, max_step: self.max_step, ..Tolerances::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioBlock {
    pub events: Vec<Perturbation>,
}

/// One-parameter equilibrium continuation of the selected families.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchBlock {
    pub families: Vec<BranchFamily>,
    pub param: ParamName,
    pub min: f64,
    pub max: f64,
    pub direction: Heading,
    /// `f` at which the `x = 0` and `x = 1` sweeps start.
    pub start_f: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_points: usize,
}

impl Default for BranchBlock {
    fn default() -> Self {
        Self {
            families: vec![BranchFamily::X0, BranchFamily::X1, BranchFamily::FHalf],
            param: ParamName::H,
            min: -1.0,
            max: 1.0,
            direction: Heading::Auto,
            start_f: 0.01,
            initial_step: 1e-3,
            max_step: 0.01,
            max_points: 20_000,
        }
    }
}

impl BranchBlock {
    pub fn settings(&self, direction: Direction) -> BranchSettings {
        let mut s = BranchSettings::new(self.min, self.max, direction);
        s.step.initial_step = self.initial_step;
        s.step.max_step = self.max_step;
        s.step.max_points = self.max_points;
        s
    }
}

/// Cycle continuation from a Hopf point of the `f = 1/2` branch.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleBlock {
    pub seed: HopfSeed,
    /// One-based index of the Hopf point.
    pub hopf: usize,
    pub amplitude: f64,
    pub intervals: usize,
    pub nodes: usize,
    pub param: ParamName,
    pub min: f64,
    pub max: f64,
    pub direction: Heading,
    pub max_step: f64,
    pub max_period: f64,
}

impl Default for CycleBlock {
    fn default() -> Self {
        Self {
            seed: HopfSeed::Branch,
            hopf: 1,
            amplitude: 1e-3,
            intervals: CycleMesh::DEFAULT_INTERVALS,
            nodes: CycleMesh::DEFAULT_NODES,
            param: ParamName::K,
            min: 2.0,
            max: 40.0,
            direction: Heading::Auto,
            max_step: 0.1,
            max_period: 1000.0,
        }
    }
}

impl CycleBlock {
    pub fn mesh(&self) -> CliResult<CycleMesh> {
        CycleMesh::uniform(self.intervals, self.nodes).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn settings(&self, direction: Direction) -> CycleBranchSettings {
        let mut s = CycleBranchSettings::new(self.param, self.min, self.max, direction);
        s.step.max_step = self.max_step;
        s.step.initial_step = s.step.initial_step.min(self.max_step);
        s.max_period = self.max_period;
        s
    }
}

/// Two-parameter loci in the plane `(first, second)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoParamBlock {
    pub loci: Vec<LocusChoice>,
    pub first: ParamName,
    pub second: ParamName,
    pub first_min: f64,
    pub first_max: f64,
    pub second_min: f64,
    pub second_max: f64,
    pub max_step: f64,
    /// Samples per axis for the region labeling; 0 disables it.
    pub region_samples: usize,
    pub region_horizon: f64,
}

impl Default for TwoParamBlock {
    fn default() -> Self {
        Self {
            loci: vec![LocusChoice::Folds, LocusChoice::Hopf],
            first: ParamName::H,
            second: ParamName::K,
            first_min: -1.0,
            first_max: 1.0,
            second_min: 2.0,
            second_max: 40.0,
            max_step: 0.1,
            region_samples: 0,
            region_horizon: 1500.0,
        }
    }
}

impl TwoParamBlock {
    pub fn bounds(&self) -> LocusBounds {
        let mut b = LocusBounds::new((self.first_min, self.first_max), (self.second_min, self.second_max));
        b.step.max_step = self.max_step;
        b.step.initial_step = b.step.initial_step.min(self.max_step);
        b
    }

    /// Bounds for folds of cycles, with the cycle corrector tolerances.
    pub fn lpc_bounds(&self) -> LocusBounds {
        let mut b = self.bounds();
        b.step.residual_tol = 1e-8;
        b.step.step_tol = 1e-8;
        b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), format: Format::Csv }
    }
}

/// Everything a command needs, validated before any computation starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ParameterSet,
    pub sim: SimBlock,
    pub scenario: ScenarioBlock,
    pub branch: BranchBlock,
    pub cycles: CycleBlock,
    pub two_param: TwoParamBlock,
    pub output: OutputBlock,
}

const PRESETS: [(&str, &str); 14] = [
    ("fig5", include_str!("../presets/fig5.cfg")),
    ("fig6", include_str!("../presets/fig6.cfg")),
    ("fig7", include_str!("../presets/fig7.cfg")),
    ("fig8a", include_str!("../presets/fig8a.cfg")),
    ("fig8b", include_str!("../presets/fig8b.cfg")),
    ("fig8c", include_str!("../presets/fig8c.cfg")),
    ("fig9", include_str!("../presets/fig9.cfg")),
    ("fig10a", include_str!("../presets/fig10a.cfg")),
    ("fig10b", include_str!("../presets/fig10b.cfg")),
    ("fig10c", include_str!("../presets/fig10c.cfg")),
    ("fig11", include_str!("../presets/fig11.cfg")),
    ("fig12", include_str!("../presets/fig12.cfg")),
    ("table3", include_str!("../presets/table3.cfg")),
    ("table4", include_str!("../presets/table4.cfg")),
];

/// Names of the bundled presets.
pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

/// Text of a bundled preset.
pub fn preset_text(name: &str) -> CliResult<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| {
            let known: Vec<&str> = preset_names().collect();
            CliError::config(format!("unknown preset '{name}' (known: {})", known.join(", ")))
        })
}

fn number(key: &str, value: &str) -> CliResult<f64> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| CliError::config(format!("{key}: '{value}' is not a number")))
}

fn count(key: &str, value: &str) -> CliResult<usize> {
    value
        .trim()
        .parse::<usize>()
        .map_err(|_| CliError::config(format!("{key}: '{value}' is not a non-negative integer")))
}

fn optional_number(key: &str, value: &str) -> CliResult<Option<f64>> {
    match value.trim() {
        "none" | "" => Ok(None),
        v => number(key, v).map(Some),
    }
}

fn param_name(key: &str, value: &str) -> CliResult<ParamName> {
    value.parse().map_err(|e: fgbif::Error| CliError::config(format!("{key}: {e}")))
}

fn list<T>(key: &str, value: &str, parse: impl Fn(&str) -> CliResult<T>) -> CliResult<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<CliResult<_>>()?;
    if items.is_empty() {
        return Err(CliError::config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn family(value: &str) -> CliResult<BranchFamily> {
    value.parse().map_err(|e: fgbif::Error| CliError::config(e.to_string()))
}

/// Parses `kind@time:name=value,...` items separated by `;`.
///
/// `state` replaces components, `shift` adds to them and `param` changes
/// one parameter, e.g. `state@100:f=0.73; param@200:k=3`.
pub fn parse_events(value: &str) -> CliResult<Vec<Perturbation>> {
    let mut out = Vec::new();
    for item in value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || CliError::config(format!("scenario.events: cannot parse '{item}'"));
        let (kind, rest) = item.split_once('@').ok_or_else(bad)?;
        let (time, assignments) = rest.split_once(':').ok_or_else(bad)?;
        let time = number("scenario.events", time)?;
        let pairs: Vec<(&str, &str)> = assignments
            .split(',')
            .map(|a| a.split_once('=').map(|(k, v)| (k.trim(), v.trim())))
            .collect::<Option<_>>()
            .ok_or_else(bad)?;
        let pert = match kind.trim() {
            "state" | "shift" => {
                let (mut f, mut x) = (None, None);
                for (name, v) in pairs {
                    let slot = match name {
                        "f" => &mut f,
                        "x" => &mut x,
                        _ => return Err(bad()),
                    };
                    if slot.is_some() {
                        return Err(bad());
                    }
                    *slot = Some(number("scenario.events", v)?);
                }
                if f.is_none() && x.is_none() {
                    return Err(bad());
                }
                Perturbation::StateJump { time, f, x, relative: kind.trim() == "shift" }
            }
            "param" => {
                let [(name, v)] = pairs[..] else { return Err(bad()) };
                Perturbation::ParamJump {
                    time,
                    name: param_name("scenario.events", name)?,
                    value: number("scenario.events", v)?,
                }
            }
            _ => return Err(bad()),
        };
        out.push(pert);
    }
    Ok(out)
}

/// Inverse of [`parse_events`].
pub fn format_events(events: &[Perturbation]) -> String {
    events.iter().map(format_event).collect::<Vec<_>>().join("; ")
}

pub fn format_event(event: &Perturbation) -> String {
    match *event {
        Perturbation::StateJump { time, f, x, relative } => {
            let parts: Vec<String> = [("f", f), ("x", x)]
                .iter()
                .filter_map(|(n, v)| v.map(|v| format!("{n}={v}")))
                .collect();
            format!("{}@{time}:{}", if relative { "shift" } else { "state" }, parts.join(","))
        }
        Perturbation::ParamJump { time, name, value } => format!("param@{time}:{name}={value}"),
    }
}

fn join<T>(items: &[T], show: impl Fn(&T) -> &'static str) -> String {
    items.iter().map(show).collect::<Vec<_>>().join(",")
}

fn show_option(v: Option<f64>) -> String {
    v.map_or("none".to_string(), |v| v.to_string())
}

impl RunConfig {
    /// Defaults, then the preset, then the file text, then overrides.
    pub fn assemble(preset: Option<&str>, file: Option<(&str, &str)>, overrides: &[String]) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        if let Some(name) = preset {
            cfg.apply_text(preset_text(name)?, &format!("preset {name}"))?;
        }
        if let Some((origin, text)) = file {
            cfg.apply_text(text, origin)?;
        }
        for pair in overrides {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects key=value, got '{pair}'")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a complete configuration text on top of the defaults.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; a key may appear once per text.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("{origin}:{}: expected 'key = value'", n + 1)))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::config(format!("{origin}:{}: duplicate key '{key}'", n + 1)));
            }
            self.set(key, value.trim())
                .map_err(|e| CliError::config(format!("{origin}:{}: {}", n + 1, strip(&e))))?;
        }
        Ok(())
    }

    /// Sets one key; unknown keys and malformed values are errors.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if let Some(name) = key.strip_prefix("model.") {
            let name: ParamName = name
                .parse()
                .map_err(|_| CliError::config(format!("unknown key '{key}'")))?;
            self.model.set(name, number(key, value)?);
            return Ok(());
        }
        match key {
            "sim.f0" => self.sim.f0 = number(key, value)?,
            "sim.x0" => self.sim.x0 = number(key, value)?,
            "sim.t_start" => self.sim.t_start = number(key, value)?,
            "sim.t_end" => self.sim.t_end = number(key, value)?,
            "sim.rtol" => self.sim.rtol = number(key, value)?,
            "sim.atol" => self.sim.atol = number(key, value)?,
            "sim.max_step" => self.sim.max_step = optional_number(key, value)?,
            "sim.tail" => self.sim.tail = number(key, value)?,
            "scenario.events" => self.scenario.events = parse_events(value)?,
            "branch.families" => self.branch.families = list(key, value, family)?,
            "branch.param" => self.branch.param = param_name(key, value)?,
            "branch.min" => self.branch.min = number(key, value)?,
            "branch.max" => self.branch.max = number(key, value)?,
            "branch.direction" => self.branch.direction = value.parse()?,
            "branch.start_f" => self.branch.start_f = number(key, value)?,
            "branch.initial_step" => self.branch.initial_step = number(key, value)?,
            "branch.max_step" => self.branch.max_step = number(key, value)?,
            "branch.max_points" => self.branch.max_points = count(key, value)?,
            "cycles.seed" => self.cycles.seed = value.parse()?,
            "cycles.hopf" => self.cycles.hopf = count(key, value)?,
            "cycles.amplitude" => self.cycles.amplitude = number(key, value)?,
            "cycles.intervals" => self.cycles.intervals = count(key, value)?,
            "cycles.nodes" => self.cycles.nodes = count(key, value)?,
            "cycles.param" => self.cycles.param = param_name(key, value)?,
            "cycles.min" => self.cycles.min = number(key, value)?,
            "cycles.max" => self.cycles.max = number(key, value)?,
            "cycles.direction" => self.cycles.direction = value.parse()?,
            "cycles.max_step" => self.cycles.max_step = number(key, value)?,
            "cycles.max_period" => self.cycles.max_period = number(key, value)?,
            "two_param.loci" => self.two_param.loci = list(key, value, str::parse)?,
            "two_param.first" => self.two_param.first = param_name(key, value)?,
            "two_param.second" => self.two_param.second = param_name(key, value)?,
            "two_param.first_min" => self.two_param.first_min = number(key, value)?,
            "two_param.first_max" => self.two_param.first_max = number(key, value)?,
            "two_param.second_min" => self.two_param.second_min = number(key, value)?,
            "two_param.second_max" => self.two_param.second_max = number(key, value)?,
            "two_param.max_step" => self.two_param.max_step = number(key, value)?,
            "two_param.region_samples" => self.two_param.region_samples = count(key, value)?,
            "two_param.region_horizon" => self.two_param.region_horizon = number(key, value)?,
            "output.dir" => self.output.dir = PathBuf::from(value),
            "output.format" => self.output.format = value.parse()?,
            _ => return Err(CliError::config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = ParamName::ALL
            .iter()
            .map(|&n| (format!("model.{n}"), self.model.get(n).to_string()))
            .collect();
        let s = &self.sim;
        let b = &self.branch;
        let c = &self.cycles;
        let t = &self.two_param;
        let rest: Vec<(&str, String)> = vec![
            ("sim.f0", s.f0.to_string()),
            ("sim.x0", s.x0.to_string()),
            ("sim.t_start", s.t_start.to_string()),
            ("sim.t_end", s.t_end.to_string()),
            ("sim.rtol", s.rtol.to_string()),
            ("sim.atol", s.atol.to_string()),
            ("sim.max_step", show_option(s.max_step)),
            ("sim.tail", s.tail.to_string()),
            ("scenario.events", format_events(&self.scenario.events)),
            ("branch.families", join(&b.families, |f| f.as_str())),
            ("branch.param", b.param.to_string()),
            ("branch.min", b.min.to_string()),
            ("branch.max", b.max.to_string()),
            ("branch.direction", b.direction.as_str().to_string()),
            ("branch.start_f", b.start_f.to_string()),
            ("branch.initial_step", b.initial_step.to_string()),
            ("branch.max_step", b.max_step.to_string()),
            ("branch.max_points", b.max_points.to_string()),
            ("cycles.seed", c.seed.as_str().to_string()),
            ("cycles.hopf", c.hopf.to_string()),
            ("cycles.amplitude", c.amplitude.to_string()),
            ("cycles.intervals", c.intervals.to_string()),
            ("cycles.nodes", c.nodes.to_string()),
            ("cycles.param", c.param.to_string()),
            ("cycles.min", c.min.to_string()),
            ("cycles.max", c.max.to_string()),
            ("cycles.direction", c.direction.as_str().to_string()),
            ("cycles.max_step", c.max_step.to_string()),
            ("cycles.max_period", c.max_period.to_string()),
            ("two_param.loci", join(&t.loci, |l| l.as_str())),
            ("two_param.first", t.first.to_string()),
            ("two_param.second", t.second.to_string()),
            ("two_param.first_min", t.first_min.to_string()),
            ("two_param.first_max", t.first_max.to_string()),
            ("two_param.second_min", t.second_min.to_string()),
            ("two_param.second_max", t.second_max.to_string()),
            ("two_param.max_step", t.max_step.to_string()),
            ("two_param.region_samples", t.region_samples.to_string()),
            ("two_param.region_horizon", t.region_horizon.to_string()),
            ("output.dir", self.output.dir.display().to_string()),
            ("output.format", self.output.format.as_str().to_string()),
        ];
        out.extend(rest.into_iter().map(|(k, v)| (k.to_string(), v)));
        out
    }

    /// Full configuration text; parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = String::new();
        for (key, value) in self.entries() {
            let head = key.split('.').next().unwrap_or("").to_string();
            if head != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "# {head}");
                section = head;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Checks every field against the preconditions of the routine that
    /// consumes it.
    pub fn validate(&self) -> CliResult<()> {
        let wrap = |what: &str, r: fgbif::Result<()>| r.map_err(|e| CliError::config(format!("{what}: {}", strip_core(&e))));
        wrap("model", self.model.validate())?;

        let s = &self.sim;
        if !s.f0.is_finite() || !s.x0.is_finite() {
            return Err(CliError::config("sim: initial state must be finite"));
        }
        if !(s.tail > 0.0 && s.tail <= 1.0) {
            return Err(CliError::config("sim.tail must lie in (0, 1]"));
        }
        wrap("sim", s.tolerances().validate())?;
        wrap("sim", self.scenario_for(&self.scenario.events).validate())?;
        for event in &self.scenario.events {
            if let Perturbation::ParamJump { name, value, .. } = *event {
                wrap("scenario.events", self.model.with(name, value).validate())?;
            }
        }

        let b = &self.branch;
        if !(b.min < b.max) {
            return Err(CliError::config("branch: min must be below max"));
        }
        if !(b.start_f > 0.0 && b.start_f < 1.0) {
            return Err(CliError::config("branch.start_f must lie in (0, 1)"));
        }
        let needs_h = b.families.iter().any(|f| *f != BranchFamily::FHalf);
        if needs_h && b.param != ParamName::H {
            return Err(CliError::config("branch: the x0 and x1 families are swept in h only"));
        }
        wrap("branch", b.settings(Direction::Increasing).validate())?;

        let c = &self.cycles;
        if c.hopf == 0 {
            return Err(CliError::config("cycles.hopf is one-based"));
        }
        if !(c.amplitude > 0.0 && c.amplitude <= MAX_HOPF_AMPLITUDE) {
            return Err(CliError::config(format!(
                "cycles.amplitude must lie in (0, {MAX_HOPF_AMPLITUDE}], got {}",
                c.amplitude
            )));
        }
        c.mesh()?;
        wrap("cycles", c.settings(Direction::Increasing).validate())?;

        let t = &self.two_param;
        if t.first != ParamName::H {
            return Err(CliError::config("two_param.first must be h: loci are seeded from sweeps in h"));
        }
        if t.second == t.first {
            return Err(CliError::config("two_param: the two parameters must differ"));
        }
        if t.loci.is_empty() {
            return Err(CliError::config("two_param.loci is empty"));
        }
        if t.region_samples == 1 {
            return Err(CliError::config("two_param.region_samples must be 0 or at least 2"));
        }
        if !(t.region_horizon >= 200.0) || !t.region_horizon.is_finite() {
            return Err(CliError::config("two_param.region_horizon must be at least 200"));
        }
        wrap("two_param", t.bounds().validate())?;
        Ok(())
    }

    /// Scenario from the simulation block with the given events.
    pub fn scenario_for(&self, events: &[Perturbation]) -> Scenario {
        Scenario {
            initial: self.sim.initial(),
            params: self.model,
            t_start: self.sim.t_start,
            horizon: self.sim.t_end,
            perturbations: events.to_vec(),
        }
    }

    /// Step settings used for equilibrium branches inside other commands.
    pub fn sweep_step(&self) -> StepSettings {
        self.branch.settings(Direction::Increasing).step
    }
}

fn strip(e: &CliError) -> String {
    match e {
        CliError::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn strip_core(e: &fgbif::Error) -> String {
    match e {
        fgbif::Error::InvalidInput(m) => m.clone(),
        other => other.to_string(),
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_parameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.model, ParameterSet { c: 1.0, b: 11.0, k: 6.5, s: 10.0, nu: 0.2, h: 0.5 });
        cfg.validate().unwrap();
    }

    #[test]
    fn echo_parses_back() {
        let mut cfg = RunConfig::default();
        cfg.set("model.k", "4.57").unwrap();
        cfg.set("scenario.events", "state@100:f=0.73; shift@150:x=-0.05; param@200:k=3").unwrap();
        cfg.set("sim.max_step", "0.5").unwrap();
        cfg.set("two_param.loci", "lpc").unwrap();
        let text = cfg.to_text();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(RunConfig::parse("model.q = 1").is_err());
        assert!(RunConfig::parse("sim.horizon = 1").is_err());
        assert!(RunConfig::parse("model.k = 1\nmodel.k = 2").is_err());
        assert!(RunConfig::parse("model.k 1").is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        for text in [
            "model.c = 0",
            "model.nu = -1",
            "sim.rtol = 1",
            "sim.t_end = -5",
            "cycles.amplitude = 0",
            "cycles.hopf = 0",
            "branch.min = 2",
            "branch.param = k",
            "two_param.first = k",
            "scenario.events = state@400:f=0.5",
            "scenario.events = param@100:k=-1",
        ] {
            let err = RunConfig::parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn events_round_trip() {
        let text = "state@100:f=0.73,x=0.2; shift@120.5:x=-0.01; param@130:nu=0.3";
        let events = parse_events(text).unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(parse_events(&format_events(&events)).unwrap(), events);
        assert!(parse_events("state@1:q=2").is_err());
        assert!(parse_events("param@1:k=2,h=1").is_err());
        assert!(parse_events("jump@1:f=2").is_err());
    }

    #[test]
    fn every_preset_is_valid() {
        for name in preset_names() {
            RunConfig::assemble(Some(name), None, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset_text("fig99").is_err());
    }

    #[test]
    fn overrides_apply_last() {
        let cfg = RunConfig::assemble(Some("fig8a"), Some(("file", "model.k = 5")), &["model.k=4.7".into()]).unwrap();
        assert_eq!(cfg.model.k, 4.7);
    }
}
