//! Subcommand drivers.
//!
//! Each `compute_*` function returns typed results and touches no files;
//! the matching `cmd_*` function writes them to the output directory.
//! Commands that can fail halfway write what they have and then return
//! [`CliError::Partial`].

use std::path::{Path, PathBuf};

use serde::Serialize;

use fgbif::continuation::{
    continue_equilibrium, continue_fold_locus, continue_hopf_locus, BifurcationKind, BifurcationPoint, Branch,
    BranchSettings, Direction, LocusPoint, TwoParamLocus,
};
use fgbif::cycles::{
    collocation_residual, continue_cycles, cycle_from_hopf, lpc_two_param, Cycle, CycleBranch, CycleSettings,
};
use fgbif::model::{
    branch_h_of_f, branch_x_of_h, bt_points, bt_taylor_coeffs, cusp_residual, fold_asymptote_h, h_double_star, h_star,
    hopf_frequency, hopf_k_roots, hopf_residual, j11, j11_peak, BranchFamily, BtTaylor, ForestGrass, ParamName,
    ParameterSet, PlanarSystem, State,
};
use fgbif::odeint::{classify_attractor, run_scenario, AttractorKind, Trajectory};
use fgbif::solver::{analytic_fixed_points, find_equilibria, Equilibrium, SeedGrid};

use crate::config::{format_event, HopfSeed, LocusChoice, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{format_params, num, trajectory_table, write_csv, write_json, write_text, CsvTable};
use crate::regions::{classify_point, RegionSample};

/// Largest equation residual accepted in an equilibrium or branch row.
pub const EQUILIBRIUM_RESIDUAL_MAX: f64 = 1e-8;
/// Largest augmented-system residual accepted in a fold or Hopf locus row.
pub const LOCUS_RESIDUAL_MAX: f64 = 1e-6;
/// Largest collocation residual (max-norm) accepted in a cycle row.
pub const CYCLE_RESIDUAL_MAX: f64 = 1e-4;
/// Distance below which a steady state is attributed to an equilibrium.
pub const ATTRIBUTION_RADIUS: f64 = 1e-3;

/// Files written by a command and any warnings raised on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn finish(self) -> CliResult<Outcome> {
        if self.warnings.is_empty() {
            Ok(self)
        } else {
            Err(CliError::Partial(self.warnings.join("; ")))
        }
    }
}

/// Real and imaginary parts of an eigenvalue pair.
macro_rules! parts {
    ($e:expr) => {
        [$e[0].re, $e[0].im, $e[1].re, $e[1].im]
    };
}

fn cells(values: &[f64]) -> Vec<String> {
    values.iter().map(|&v| num(v)).collect()
}

fn table_meta(table: &mut CsvTable, cfg: &RunConfig) {
    table.meta("model", format_params(&cfg.model));
}

/// Attractor verdict with the equilibrium it settled on, if any.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictReport {
    pub kind: AttractorKind,
    pub mean_f: f64,
    pub mean_x: f64,
    pub amplitude: f64,
    pub period: Option<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub final_f: f64,
    pub final_x: f64,
    /// Family of the stable equilibrium within [`ATTRIBUTION_RADIUS`] of the
    /// mean state of a steady tail.
    pub family: Option<BranchFamily>,
    pub note: Option<String>,
}

fn settled_family(state: State, p: &ParameterSet) -> Option<BranchFamily> {
    find_equilibria(p, &SeedGrid::default())
        .into_iter()
        .filter(|e| e.stability.is_stable() && e.state.distance(&state) < ATTRIBUTION_RADIUS)
        .min_by(|a, b| a.state.distance(&state).total_cmp(&b.state.distance(&state)))
        .and_then(|e| e.family)
}

/// Verdict on the last segment; too short a segment is Undecided.
pub fn verdict(traj: &Trajectory, tail: f64) -> CliResult<VerdictReport> {
    let seg = traj.last_segment();
    let end = seg.final_state();
    let base = VerdictReport {
        kind: AttractorKind::Undecided,
        mean_f: end.f,
        mean_x: end.x,
        amplitude: f64::NAN,
        period: None,
        t_start: seg.t_start(),
        t_end: seg.t_end(),
        final_f: end.f,
        final_x: end.x,
        family: None,
        note: None,
    };
    match classify_attractor(traj, tail) {
        Ok(v) => {
            let family = match v.kind {
                AttractorKind::SteadyState => settled_family(v.mean_state, &seg.params),
                _ => None,
            };
            Ok(VerdictReport {
                kind: v.kind,
                mean_f: v.mean_state.f,
                mean_x: v.mean_state.x,
                amplitude: v.amplitude,
                period: v.period,
                family,
                ..base
            })
        }
        Err(fgbif::Error::TooShort { duration }) => Ok(VerdictReport {
            amplitude: 0.0,
            note: Some(format!("segment of {duration} time units is too short to classify")),
            ..base
        }),
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trajectory: Trajectory,
    pub verdict: VerdictReport,
}

pub fn compute_simulate(cfg: &RunConfig) -> CliResult<Simulation> {
    let trajectory = run_scenario(&ForestGrass, &cfg.scenario_for(&[]), &cfg.sim.tolerances())?;
    let verdict = verdict(&trajectory, cfg.sim.tail)?;
    Ok(Simulation { trajectory, verdict })
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    params: ParameterSet,
    left_valid_box: bool,
    verdict: &'a VerdictReport,
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<Outcome> {
    let sim = compute_simulate(cfg)?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    out.files.push(write_csv(dir, "trajectory.csv", &trajectory_table(&sim.trajectory))?);
    let report = SimulationReport { params: cfg.model, left_valid_box: sim.trajectory.left_valid_box, verdict: &sim.verdict };
    out.files.push(write_json(dir, "verdict.json", &report)?);
    if sim.trajectory.left_valid_box {
        out.warnings.push("trajectory left the validity box [-0.05, 1.05]^2".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub params: ParameterSet,
    pub events: Vec<String>,
    /// Verdict on each segment between perturbations, in time order.
    pub segments: Vec<VerdictReport>,
    /// Verdict on the segment preceding the last perturbation.
    pub before: Option<VerdictReport>,
    pub after: VerdictReport,
    pub left_valid_box: bool,
}

pub fn compute_scenario(cfg: &RunConfig) -> CliResult<(Trajectory, ScenarioReport)> {
    let traj = run_scenario(&ForestGrass, &cfg.scenario_for(&cfg.scenario.events), &cfg.sim.tolerances())?;
    let segments = traj
        .segments
        .iter()
        .map(|seg| {
            let single = Trajectory { segments: vec![seg.clone()], events: vec![], left_valid_box: false };
            verdict(&single, cfg.sim.tail)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let after = segments.last().cloned().expect("at least one segment");
    let before = segments.len().checked_sub(2).map(|i| segments[i].clone());
    let report = ScenarioReport {
        params: cfg.model,
        events: cfg.scenario.events.iter().map(format_event).collect(),
        segments,
        before,
        after,
        left_valid_box: traj.left_valid_box,
    };
    Ok((traj, report))
}

pub fn cmd_scenario(cfg: &RunConfig) -> CliResult<Outcome> {
    let (traj, report) = compute_scenario(cfg)?;
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    out.files.push(write_csv(dir, "trajectory.csv", &trajectory_table(&traj))?);
    out.files.push(write_json(dir, "scenario.json", &report)?);
    if traj.left_valid_box {
        out.warnings.push("trajectory left the validity box [-0.05, 1.05]^2".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumRow {
    pub family: Option<BranchFamily>,
    pub f: f64,
    pub x: f64,
    pub eig1_re: f64,
    pub eig1_im: f64,
    pub eig2_re: f64,
    pub eig2_im: f64,
    pub stability: String,
    pub residual: f64,
    /// Max-norm distance to the nearest closed-form fixed point.
    pub analytic_distance: f64,
}

fn family_name(f: Option<BranchFamily>) -> &'static str {
    f.map_or("other", |f| f.as_str())
}

pub fn compute_equilibria(cfg: &RunConfig) -> CliResult<Vec<EquilibriumRow>> {
    let analytic = analytic_fixed_points(&cfg.model);
    let mut found = find_equilibria(&cfg.model, &SeedGrid::default());
    found.sort_by(|a, b| (a.state.f, a.state.x).partial_cmp(&(b.state.f, b.state.x)).expect("finite states"));
    let rows = found
        .iter()
        .map(|e: &Equilibrium| {
            let [eig1_re, eig1_im, eig2_re, eig2_im] = parts!(e.eigenvalues);
            EquilibriumRow {
                family: e.family,
                f: e.state.f,
                x: e.state.x,
                eig1_re,
                eig1_im,
                eig2_re,
                eig2_im,
                stability: e.stability.as_str().into(),
                residual: e.residual,
                analytic_distance: analytic.iter().map(|a| a.distance(&e.state)).fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    Ok(rows)
}

pub fn cmd_equilibria(cfg: &RunConfig) -> CliResult<Outcome> {
    let rows = compute_equilibria(cfg)?;
    let mut out = Outcome::default();
    for r in &rows {
        if !(r.residual <= EQUILIBRIUM_RESIDUAL_MAX) {
            out.warnings.push(format!("equilibrium ({}, {}) has residual {:e}", r.f, r.x, r.residual));
        }
    }
    let dir = &cfg.output.dir;
    if cfg.output.format.csv() {
        let mut t = CsvTable::new(&[
            "family", "f", "x", "eig1_re", "eig1_im", "eig2_re", "eig2_im", "stability", "residual", "analytic_distance",
        ]);
        table_meta(&mut t, cfg);
        for r in &rows {
            let mut row = vec![family_name(r.family).to_string()];
            row.extend(cells(&[r.f, r.x, r.eig1_re, r.eig1_im, r.eig2_re, r.eig2_im]));
            row.push(r.stability.clone());
            row.extend(cells(&[r.residual, r.analytic_distance]));
            t.push(row);
        }
        out.files.push(write_csv(dir, "equilibria.csv", &t)?);
    }
    if cfg.output.format.json() {
        out.files.push(write_json(dir, "equilibria.json", &rows)?);
    }
    out.finish()
}

/// A refined bifurcation as it appears in the tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BifurcationRow {
    pub source: String,
    pub kind: BifurcationKind,
    pub label: String,
    pub f: f64,
    pub x: f64,
    pub h: f64,
    pub k: f64,
    pub residual: f64,
}

impl BifurcationRow {
    pub fn new(source: &str, b: &BifurcationPoint) -> Self {
        Self {
            source: source.into(),
            kind: b.kind,
            label: b.kind.label().into(),
            f: b.state.f,
            x: b.state.x,
            h: b.params.h,
            k: b.params.k,
            residual: b.residual,
        }
    }

    const HEADER: [&'static str; 8] = ["source", "kind", "label", "f", "x", "h", "k", "residual"];

    fn cells(&self) -> Vec<String> {
        let mut row = vec![self.source.clone(), self.kind.as_str().into(), self.label.clone()];
        row.extend(cells(&[self.f, self.x, self.h, self.k, self.residual]));
        row
    }
}

fn bifurcation_table(rows: &[BifurcationRow], cfg: &RunConfig) -> CsvTable {
    let mut t = CsvTable::new(&BifurcationRow::HEADER);
    table_meta(&mut t, cfg);
    for r in rows {
        t.push(r.cells());
    }
    t
}

/// Equilibrium on `family` where the sweep starts.
pub fn branch_start(cfg: &RunConfig, family: BranchFamily) -> CliResult<Equilibrium> {
    let p = cfg.model;
    match family {
        BranchFamily::FHalf => {
            let x = branch_x_of_h(&p)?;
            Ok(Equilibrium::from_state(&ForestGrass, State::new(0.5, x), p))
        }
        _ => {
            let f = cfg.branch.start_f;
            let h = branch_h_of_f(f, family, &p)?;
            let x = if family == BranchFamily::X0 { 0.0 } else { 1.0 };
            Ok(Equilibrium::from_state(&ForestGrass, State::new(f, x), p.with(ParamName::H, h)))
        }
    }
}

pub fn auto_direction(family: BranchFamily) -> Direction {
    match family {
        BranchFamily::X0 => Direction::Decreasing,
        BranchFamily::X1 | BranchFamily::FHalf => Direction::Increasing,
    }
}

/// Sweeps each configured family; failures are collected per family.
pub fn compute_branches(cfg: &RunConfig) -> Vec<(BranchFamily, CliResult<Branch>)> {
    cfg.branch
        .families
        .iter()
        .map(|&family| {
            let run = || -> CliResult<Branch> {
                let start = branch_start(cfg, family)?;
                let settings = cfg.branch.settings(cfg.branch.direction.resolve(auto_direction(family)));
                Ok(continue_equilibrium(&ForestGrass, &start, cfg.branch.param, &settings)?)
            };
            (family, run())
        })
        .collect()
}

#[derive(Serialize)]
struct BranchPointRow {
    arclength: f64,
    f: f64,
    x: f64,
    param: f64,
    fold_test: f64,
    branch_test: f64,
    hopf_test: f64,
    hopf_valid: bool,
    eigenvalues: [f64; 4],
    stability: String,
    residual: f64,
}

#[derive(Serialize)]
struct BranchReport {
    family: BranchFamily,
    active: ParamName,
    params: ParameterSet,
    termination: String,
    points: Vec<BranchPointRow>,
    bifurcations: Vec<BifurcationRow>,
}

fn branch_report(family: BranchFamily, branch: &Branch, cfg: &RunConfig) -> BranchReport {
    let points = branch
        .points
        .iter()
        .map(|p| BranchPointRow {
            arclength: p.arclength,
            f: p.state.f,
            x: p.state.x,
            param: p.params.get(branch.active),
            fold_test: p.fold,
            branch_test: p.branch,
            hopf_test: p.hopf.value,
            hopf_valid: p.hopf.valid,
            eigenvalues: parts!(p.eigenvalues),
            stability: p.stability.as_str().into(),
            residual: p.residual,
        })
        .collect();
    BranchReport {
        family,
        active: branch.active,
        params: cfg.model,
        termination: branch.termination.as_str().into(),
        points,
        bifurcations: branch.bifurcations.iter().map(|b| BifurcationRow::new(family.as_str(), b)).collect(),
    }
}

fn branch_table(report: &BranchReport, cfg: &RunConfig) -> CsvTable {
    let active = report.active.as_str();
    let mut t = CsvTable::new(&[
        "arclength", "f", "x", active, "fold_test", "branch_test", "hopf_test", "hopf_valid", "eig1_re", "eig1_im",
        "eig2_re", "eig2_im", "stability", "residual",
    ]);
    table_meta(&mut t, cfg);
    t.meta("family", report.family.as_str());
    t.meta("active", active);
    t.meta("termination", &report.termination);
    for p in &report.points {
        let mut row = cells(&[p.arclength, p.f, p.x, p.param, p.fold_test, p.branch_test, p.hopf_test]);
        row.push(p.hopf_valid.to_string());
        row.extend(cells(&p.eigenvalues));
        row.push(p.stability.clone());
        row.push(num(p.residual));
        t.push(row);
    }
    t
}

pub fn cmd_branch(cfg: &RunConfig) -> CliResult<Outcome> {
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let mut all = Vec::new();
    for (family, result) in compute_branches(cfg) {
        let branch = match result {
            Ok(b) => b,
            Err(e) => {
                out.warnings.push(format!("{} branch failed: {e}", family.as_str()));
                continue;
            }
        };
        let report = branch_report(family, &branch, cfg);
        if let Some(bad) = report.points.iter().find(|p| !(p.residual <= EQUILIBRIUM_RESIDUAL_MAX)) {
            out.warnings.push(format!("{} branch point at f = {} has residual {:e}", family.as_str(), bad.f, bad.residual));
        }
        let name = format!("branch_{}", family.as_str());
        if cfg.output.format.csv() {
            out.files.push(write_csv(dir, &format!("{name}.csv"), &branch_table(&report, cfg))?);
        }
        if cfg.output.format.json() {
            out.files.push(write_json(dir, &format!("{name}.json"), &report)?);
        }
        all.extend(report.bifurcations);
    }
    write_bifurcations(dir, "bifurcations", &all, cfg, &mut out)?;
    out.finish()
}

fn write_bifurcations(dir: &Path, name: &str, rows: &[BifurcationRow], cfg: &RunConfig, out: &mut Outcome) -> CliResult<()> {
    if cfg.output.format.csv() {
        out.files.push(write_csv(dir, &format!("{name}.csv"), &bifurcation_table(rows, cfg))?);
    }
    if cfg.output.format.json() {
        out.files.push(write_json(dir, &format!("{name}.json"), &rows)?);
    }
    Ok(())
}

/// Hopf points of the `f = 1/2` branch swept in `param` over `bounds`,
/// ordered by parameter value.
pub fn hopf_points(cfg: &RunConfig, param: ParamName, bounds: (f64, f64)) -> CliResult<Vec<BifurcationPoint>> {
    let value = cfg.model.get(param).clamp(bounds.0, bounds.1);
    let p = cfg.model.with(param, value);
    let x = branch_x_of_h(&p)?;
    let start = Equilibrium::from_state(&ForestGrass, State::new(0.5, x), p);
    let mut found: Vec<BifurcationPoint> = Vec::new();
    for direction in [Direction::Decreasing, Direction::Increasing] {
        let mut settings = BranchSettings::new(bounds.0, bounds.1, direction);
        settings.step = cfg.sweep_step();
        let branch = continue_equilibrium(&ForestGrass, &start, param, &settings)?;
        for hopf in branch.of_kind(BifurcationKind::Hopf) {
            let v = hopf.params.get(param);
            if !found.iter().any(|h| (h.params.get(param) - v).abs() <= 1e-9 * v.abs().max(1.0)) {
                found.push(hopf.clone());
            }
        }
    }
    found.sort_by(|a, b| a.params.get(param).total_cmp(&b.params.get(param)));
    Ok(found)
}

/// The Hopf point selected by the cycles block and its one-based index.
pub fn select_hopf(cfg: &RunConfig, hopfs: &[BifurcationPoint]) -> CliResult<(usize, BifurcationPoint)> {
    let c = &cfg.cycles;
    let index = match c.seed {
        HopfSeed::Branch => c.hopf - 1,
        HopfSeed::Analytic => {
            let roots = hopf_k_roots(&cfg.model);
            let target = *roots.get(c.hopf - 1).ok_or_else(|| {
                CliError::Numerical(fgbif::Error::InvalidInput(format!(
                    "Hopf condition has {} roots in k, index {} requested",
                    roots.len(),
                    c.hopf
                )))
            })?;
            hopfs
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1.params.k - target).abs().total_cmp(&(b.1.params.k - target).abs()))
                .map(|(i, _)| i)
                .unwrap_or(usize::MAX)
        }
    };
    let hopf = hopfs.get(index).cloned().ok_or_else(|| {
        CliError::Numerical(fgbif::Error::InvalidInput(format!(
            "{} Hopf points found on the f = 1/2 branch, index {} requested",
            hopfs.len(),
            c.hopf
        )))
    })?;
    Ok((index + 1, hopf))
}

/// Cycle branch from the configured Hopf point.
pub fn compute_cycles(cfg: &RunConfig) -> CliResult<(BifurcationPoint, CycleBranch)> {
    let c = &cfg.cycles;
    let hopfs = hopf_points(cfg, c.param, (c.min, c.max))?;
    let (index, hopf) = select_hopf(cfg, &hopfs)?;
    let start = cycle_from_hopf(&ForestGrass, &hopf, c.amplitude, &c.mesh()?, &CycleSettings::default())?;
    let auto = if index == 1 { Direction::Decreasing } else { Direction::Increasing };
    let branch = continue_cycles(&ForestGrass, &start, Some(&hopf), &c.settings(c.direction.resolve(auto)))?;
    Ok((hopf, branch))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRow {
    pub param: f64,
    pub period: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub stability: String,
    pub multipliers: [f64; 4],
    /// Max-norm of the collocation residual.
    pub residual: f64,
}

impl CycleRow {
    pub fn new(cycle: &Cycle, param: ParamName) -> CliResult<Self> {
        let samples = 20 * cycle.mesh.intervals();
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for i in 0..=samples {
            let s = cycle.sample(i as f64 / samples as f64);
            for (c, v) in [s.f, s.x].into_iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        let residual = collocation_residual(&ForestGrass, cycle, cycle)?.amax();
        Ok(Self {
            param: cycle.params.get(param),
            period: cycle.period,
            f_min: lo[0],
            f_max: hi[0],
            x_min: lo[1],
            x_max: hi[1],
            stability: cycle.stability.as_str().into(),
            multipliers: parts!(cycle.multipliers),
            residual,
        })
    }

    fn cells(&self) -> Vec<String> {
        let mut row = cells(&[self.param, self.period, self.f_min, self.f_max, self.x_min, self.x_max]);
        row.push(self.stability.clone());
        row.extend(cells(&self.multipliers));
        row.push(num(self.residual));
        row
    }

    fn valid(&self) -> bool {
        self.period > 0.0 && self.residual <= CYCLE_RESIDUAL_MAX
    }
}

fn cycle_header(param: ParamName) -> Vec<&'static str> {
    vec![
        param.as_str(),
        "period",
        "f_min",
        "f_max",
        "x_min",
        "x_max",
        "stability",
        "mult1_re",
        "mult1_im",
        "mult2_re",
        "mult2_im",
        "residual",
    ]
}

#[derive(Serialize)]
struct CycleReport {
    params: ParameterSet,
    active: ParamName,
    hopf: BifurcationRow,
    termination: String,
    cycles: Vec<CycleRow>,
    lpc: Vec<CycleRow>,
}

pub fn cmd_cycles(cfg: &RunConfig) -> CliResult<Outcome> {
    let dir = &cfg.output.dir;
    let mut out = Outcome::default();
    let (hopf, branch) = compute_cycles(cfg)?;
    let param = branch.active;
    let rows = branch.cycles.iter().map(|c| CycleRow::new(c, param)).collect::<CliResult<Vec<_>>>()?;
    let lpc = branch.lpc.iter().map(|l| CycleRow::new(&l.cycle, param)).collect::<CliResult<Vec<_>>>()?;
    let invalid = rows.iter().chain(&lpc).filter(|r| !r.valid()).count();
    if invalid > 0 {
        out.warnings.push(format!("{invalid} cycles exceed the collocation residual bound {CYCLE_RESIDUAL_MAX:e}"));
    }
    let report = CycleReport {
        params: cfg.model,
        active: param,
        hopf: BifurcationRow::new("f_half", &hopf),
        termination: branch.termination.as_str().into(),
        cycles: rows,
        lpc,
    };
    if cfg.output.format.csv() {
        let header = cycle_header(param);
        for (name, rows) in [("cycles.csv", &report.cycles), ("lpc.csv", &report.lpc)] {
            let mut t = CsvTable::new(&header);
            table_meta(&mut t, cfg);
            t.meta("hopf", format!("{}={}", param, hopf.params.get(param)));
            t.meta("termination", &report.termination);
            for r in rows {
                t.push(r.cells());
            }
            out.files.push(write_csv(dir, name, &t)?);
        }
    }
    if cfg.output.format.json() {
        out.files.push(write_json(dir, "cycles.json", &report)?);
    }
    out.finish()
}

/// Loci, codimension-two points and region samples of a two-parameter run,
/// with the failures of loci that could not be computed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TwoParamResult {
    pub loci: Vec<TwoParamLocus>,
    pub regions: Vec<RegionSample>,
    pub failures: Vec<String>,
}

impl TwoParamResult {
    pub fn codim2(&self) -> impl Iterator<Item = (usize, &BifurcationPoint)> {
        self.loci.iter().enumerate().flat_map(|(i, l)| l.codim2.iter().map(move |b| (i, b)))
    }
}

fn coords(state: State, p: &ParameterSet, params: (ParamName, ParamName)) -> [f64; 4] {
    [state.f, state.x, p.get(params.0), p.get(params.1)]
}

/// Max-norm distance from `q` to the polyline through the locus points.
fn distance_to_locus(locus: &TwoParamLocus, q: [f64; 4]) -> f64 {
    let pts: Vec<[f64; 4]> = locus.points.iter().map(|p| coords(p.state, &p.params, locus.params)).collect();
    let point = |a: &[f64; 4]| (0..4).map(|i| (a[i] - q[i]).abs()).fold(0.0, f64::max);
    let mut best = pts.iter().map(point).fold(f64::INFINITY, f64::min);
    for w in pts.windows(2) {
        let d: Vec<f64> = (0..4).map(|i| w[1][i] - w[0][i]).collect();
        let len2: f64 = d.iter().map(|v| v * v).sum();
        if len2 == 0.0 {
            continue;
        }
        let t = ((0..4).map(|i| (q[i] - w[0][i]) * d[i]).sum::<f64>() / len2).clamp(0.0, 1.0);
        let proj: [f64; 4] = std::array::from_fn(|i| w[0][i] + t * d[i]);
        best = best.min(point(&proj));
    }
    best
}

const SEED_ON_LOCUS: f64 = 1e-3;

fn already_traced(loci: &[TwoParamLocus], seed: &BifurcationPoint, params: (ParamName, ParamName)) -> bool {
    let q = coords(seed.state, &seed.params, params);
    loci.iter().any(|l| l.params == params && distance_to_locus(l, q) < SEED_ON_LOCUS)
}

pub fn compute_two_param(cfg: &RunConfig) -> TwoParamResult {
    let t = &cfg.two_param;
    let params = (t.first, t.second);
    let bounds = t.bounds();
    let mut result = TwoParamResult::default();

    if t.loci.contains(&LocusChoice::Folds) {
        for family in [BranchFamily::X0, BranchFamily::X1] {
            let sweep = || -> CliResult<Branch> {
                let start = branch_start(cfg, family)?;
                let mut settings = BranchSettings::new(t.first_min, t.first_max, auto_direction(family));
                settings.step = cfg.sweep_step();
                Ok(continue_equilibrium(&ForestGrass, &start, ParamName::H, &settings)?)
            };
            let branch = match sweep() {
                Ok(b) => b,
                Err(e) => {
                    result.failures.push(format!("{} sweep for fold seeds failed: {e}", family.as_str()));
                    continue;
                }
            };
            for fold in branch.of_kind(BifurcationKind::Fold) {
                if already_traced(&result.loci, fold, params) {
                    continue;
                }
                match continue_fold_locus(&ForestGrass, fold, params, &bounds) {
                    Ok(l) => result.loci.push(l),
                    Err(e) => result.failures.push(format!("fold locus from h = {} failed: {e}", fold.params.h)),
                }
            }
        }
    }

    if t.loci.contains(&LocusChoice::Hopf) {
        match hopf_points(cfg, t.second, (t.second_min, t.second_max)) {
            Ok(hopfs) => {
                for hopf in &hopfs {
                    if already_traced(&result.loci, hopf, params) {
                        continue;
                    }
                    match continue_hopf_locus(&ForestGrass, hopf, params, &bounds) {
                        Ok(l) => result.loci.push(l),
                        Err(e) => result
                            .failures
                            .push(format!("Hopf locus from {} = {} failed: {e}", t.second, hopf.params.get(t.second))),
                    }
                }
            }
            Err(e) => result.failures.push(format!("f_half sweep for Hopf seeds failed: {e}")),
        }
    }

    if t.loci.contains(&LocusChoice::Lpc) {
        match compute_cycles(cfg) {
            Ok((_, branch)) => {
                for lpc in &branch.lpc {
                    match lpc_two_param(&ForestGrass, lpc, params, &t.lpc_bounds()) {
                        Ok(l) => result.loci.push(l),
                        Err(e) => result.failures.push(format!(
                            "LPC locus from {} = {} failed: {e}",
                            branch.active,
                            lpc.point.params.get(branch.active)
                        )),
                    }
                }
            }
            Err(e) => result.failures.push(format!("cycle branch for LPC seeds failed: {e}")),
        }
    }

    if t.region_samples > 0 {
        let n = t.region_samples;
        let at = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (at(t.first_min, t.first_max, i), at(t.second_min, t.second_max, j));
                let p = cfg.model.with(t.first, a).with(t.second, b);
                result.regions.push(classify_point(&p, a, b, t.region_horizon));
            }
        }
    }
    result
}

fn locus_residual_max(locus: &TwoParamLocus) -> f64 {
    match locus.kind {
        fgbif::continuation::LocusKind::Lpc => CYCLE_RESIDUAL_MAX,
        _ => LOCUS_RESIDUAL_MAX,
    }
}

#[derive(Serialize)]
struct LocusRow {
    arclength: f64,
    f: f64,
    x: f64,
    first: f64,
    second: f64,
    det: f64,
    trace: f64,
    eigenvalues: [f64; 4],
    residual: f64,
    period: Option<f64>,
}

#[derive(Serialize)]
struct LocusReport {
    kind: String,
    params: (ParamName, ParamName),
    termination: (String, String),
    points: Vec<LocusRow>,
    codim2: Vec<BifurcationRow>,
}

fn locus_report(i: usize, locus: &TwoParamLocus) -> LocusReport {
    let row = |p: &LocusPoint| LocusRow {
        arclength: p.arclength,
        f: p.state.f,
        x: p.state.x,
        first: p.params.get(locus.params.0),
        second: p.params.get(locus.params.1),
        det: p.det,
        trace: p.trace,
        eigenvalues: parts!(p.eigenvalues),
        residual: p.residual,
        period: p.period,
    };
    let source = format!("locus_{i}");
    LocusReport {
        kind: locus.kind.as_str().into(),
        params: locus.params,
        termination: (locus.termination.0.as_str().into(), locus.termination.1.as_str().into()),
        points: locus.points.iter().map(row).collect(),
        codim2: locus.codim2.iter().map(|b| BifurcationRow::new(&source, b)).collect(),
    }
}

fn locus_table(report: &LocusReport, cfg: &RunConfig) -> CsvTable {
    let (a, b) = (report.params.0.as_str(), report.params.1.as_str());
    let mut t = CsvTable::new(&[
        "arclength", "f", "x", a, b, "det", "trace", "eig1_re", "eig1_im", "eig2_re", "eig2_im", "residual", "period",
    ]);
    table_meta(&mut t, cfg);
    t.meta("kind", &report.kind);
    t.meta("termination", format!("{} {}", report.termination.0, report.termination.1));
    for p in &report.points {
        let mut row = cells(&[p.arclength, p.f, p.x, p.first, p.second, p.det, p.trace]);
        row.extend(cells(&p.eigenvalues));
        row.push(num(p.residual));
        row.push(p.period.map_or(String::new(), num));
        t.push(row);
    }
    t
}

pub fn cmd_two_param(cfg: &RunConfig) -> CliResult<Outcome> {
    let dir = &cfg.output.dir;
    let result = compute_two_param(cfg);
    let mut out = Outcome { files: vec![], warnings: result.failures.clone() };
    let mut codim2 = Vec::new();
    for (i, locus) in result.loci.iter().enumerate() {
        let report = locus_report(i, locus);
        let limit = locus_residual_max(locus);
        let bad = report.points.iter().filter(|p| !(p.residual <= limit)).count();
        if bad > 0 {
            out.warnings.push(format!("locus {i} has {bad} points with residual above {limit:e}"));
        }
        let name = format!("locus_{i}_{}", report.kind);
        if cfg.output.format.csv() {
            out.files.push(write_csv(dir, &format!("{name}.csv"), &locus_table(&report, cfg))?);
        }
        if cfg.output.format.json() {
            out.files.push(write_json(dir, &format!("{name}.json"), &report)?);
        }
        codim2.extend(report.codim2);
    }
    write_bifurcations(dir, "codim2", &codim2, cfg, &mut out)?;
    if !result.regions.is_empty() {
        let t2 = &cfg.two_param;
        if cfg.output.format.csv() {
            let mut t = CsvTable::new(&[t2.first.as_str(), t2.second.as_str(), "label", "equilibria", "stable", "periodic"]);
            table_meta(&mut t, cfg);
            for r in &result.regions {
                let mut row = cells(&[r.first, r.second]);
                row.extend([r.label.clone(), r.equilibria.to_string(), r.stable.to_string(), r.periodic.to_string()]);
                t.push(row);
            }
            out.files.push(write_csv(dir, "regions.csv", &t)?);
        }
        if cfg.output.format.json() {
            out.files.push(write_json(dir, "regions.json", &result.regions)?);
        }
    }
    out.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BtReport {
    pub family: BranchFamily,
    pub f: f64,
    pub x: f64,
    pub h: f64,
    pub k: f64,
}

/// Every closed-form quantity of the model at the configured parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticReport {
    pub params: ParameterSet,
    pub h_star: f64,
    pub h_double_star: f64,
    /// Roots of `j11` in `f` on `(0, 1)`: the fold coordinates.
    pub j11_roots: Vec<f64>,
    /// Location and value of the maximum of `j11`.
    pub j11_peak: Option<(f64, f64)>,
    pub cusp_residual: f64,
    pub hopf_residual: f64,
    pub hopf_k_roots: Vec<f64>,
    /// Linear frequency at the `f = 1/2` equilibrium, when it is a focus
    /// candidate.
    pub hopf_frequency: Option<f64>,
    pub bt_points: Vec<BtReport>,
    pub fold_asymptote_h: f64,
    pub bt_taylor: BtTaylor,
    pub fixed_points: Vec<State>,
}

/// Roots of `j11` by sign changes on a uniform grid and bisection.
pub fn j11_roots(p: &ParameterSet, cells: usize) -> Vec<f64> {
    let g = |f: f64| j11(f, p).unwrap_or(f64::NAN);
    let mut roots = Vec::new();
    for i in 1..cells - 1 {
        let (mut a, mut b) = (i as f64 / cells as f64, (i + 1) as f64 / cells as f64);
        let ga = g(a);
        if ga == 0.0 {
            roots.push(a);
            continue;
        }
        if !(ga * g(b) < 0.0) {
            continue;
        }
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if g(m).signum() == ga.signum() {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

pub fn compute_analytic(cfg: &RunConfig) -> AnalyticReport {
    let p = &cfg.model;
    let hopf_frequency = branch_x_of_h(p).ok().and_then(|x| hopf_frequency(x, p).ok());
    AnalyticReport {
        params: *p,
        h_star: h_star(p),
        h_double_star: h_double_star(p),
        j11_roots: j11_roots(p, 20_000),
        j11_peak: j11_peak(p).ok(),
        cusp_residual: cusp_residual(p),
        hopf_residual: hopf_residual(p),
        hopf_k_roots: hopf_k_roots(p),
        hopf_frequency,
        bt_points: bt_points(p)
            .into_iter()
            .map(|(family, b)| BtReport { family, f: b.f, x: b.x, h: b.h, k: b.k })
            .collect(),
        fold_asymptote_h: fold_asymptote_h(p),
        bt_taylor: bt_taylor_coeffs(p),
        fixed_points: analytic_fixed_points(p),
    }
}

pub fn cmd_analytic(cfg: &RunConfig) -> CliResult<Outcome> {
    let report = compute_analytic(cfg);
    let path = write_json(&cfg.output.dir, "analytic.json", &report)?;
    Ok(Outcome { files: vec![path], warnings: vec![] })
}

/// Writes the effective configuration next to the outputs.
pub fn write_config_echo(cfg: &RunConfig) -> CliResult<PathBuf> {
    write_text(&cfg.output.dir, "config.txt", &cfg.to_text())
}

/// Jacobian trace and determinant at a point, for tables of special points.
pub fn trace_det(state: State, p: &ParameterSet) -> (f64, f64) {
    let j = ForestGrass.jacobian(state, p);
    (j.trace(), j.determinant())
}
