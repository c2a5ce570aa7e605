//! File-driven experiment scenarios with deterministic, schema-versioned reports.
//!
//! A scenario is a flat `key = value` text file that selects one of eight
//! pipeline kinds and fixes every knob the run depends on: the grid preset,
//! the structure group, the bundle charge, the random seed, and optional
//! tolerance overrides.  Running a scenario produces a [`Report`] whose JSON
//! serialization is a pure function of the spec — wall-clock timings travel in
//! a separate sidecar so that identical specs yield byte-identical reports.
//! Every numeric judgement in a report carries the tolerance it was tested
//! against and the direction of the bound, so a report is self-describing.
//!
//! All randomness flows through [`stream_rng`]: one ChaCha8 generator per
//! (seed, stage) pair, so adding a stage never perturbs the draws of another.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{
    charge_sphere_bundle, flux_torus_bundle, global_connection, gluing_residual,
    per_chart_curvature_lp, random_smooth_gauge, Bundle, Cocycle, ConnectionForm,
};
use crate::coulomb::{abelian_coulomb, nonabelian_coulomb};
use crate::elliptic::{
    certify_eps_elliptic, contraction_probe, solve_drift_dirichlet, solve_drift_dirichlet_from,
    DriftProblem, SmallnessProfile,
};
use crate::error::{Error, Result};
use crate::field::{Domain, FormField};
use crate::grid::{BaseGrid, BoxRegion, Cover, GridKind};
use crate::lie::{su2_from_coords, AlgebraElement, GroupElement, GroupId};
use crate::smoothing::{mollify_cocycle, repair_cocycle, DELTA_G};
use crate::snapshot::FieldSnapshot;
use crate::topology::{
    concentrating_family, direct_class, flatness_detect, non_concentrating_family,
    stabilization_experiment, winding_number, ClassKind,
};

/// Version stamp written into every report so downstream readers can detect
/// layout changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

const STREAM_GAUGE: u64 = 1;
const STREAM_PERTURB: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_CERTIFY: u64 = 4;
const STREAM_DRIFT: u64 = 5;
const STREAM_CALIBRATE: u64 = 17;

/// The eight experiment pipelines a scenario file can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    ValidateBundle,
    CoulombFix,
    SmoothCocycle,
    TopologyClass,
    Flatness,
    Stabilization,
    EllipticBench,
    CalibrateConstants,
}

impl ScenarioKind {
    /// The spelling used in scenario files and report headers.
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::ValidateBundle => "VALIDATE_BUNDLE",
            ScenarioKind::CoulombFix => "COULOMB_FIX",
            ScenarioKind::SmoothCocycle => "SMOOTH_COCYCLE",
            ScenarioKind::TopologyClass => "TOPOLOGY_CLASS",
            ScenarioKind::Flatness => "FLATNESS",
            ScenarioKind::Stabilization => "STABILIZATION",
            ScenarioKind::EllipticBench => "ELLIPTIC_BENCH",
            ScenarioKind::CalibrateConstants => "CALIBRATE_CONSTANTS",
        }
    }

    fn parse(s: &str) -> Option<ScenarioKind> {
        match s {
            "VALIDATE_BUNDLE" => Some(ScenarioKind::ValidateBundle),
            "COULOMB_FIX" => Some(ScenarioKind::CoulombFix),
            "SMOOTH_COCYCLE" => Some(ScenarioKind::SmoothCocycle),
            "TOPOLOGY_CLASS" => Some(ScenarioKind::TopologyClass),
            "FLATNESS" => Some(ScenarioKind::Flatness),
            "STABILIZATION" => Some(ScenarioKind::Stabilization),
            "ELLIPTIC_BENCH" => Some(ScenarioKind::EllipticBench),
            "CALIBRATE_CONSTANTS" => Some(ScenarioKind::CalibrateConstants),
            _ => None,
        }
    }
}

/// A fully parsed scenario: the experiment kind plus every knob it reads.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub group: GroupId,
    /// Grid preset string, e.g. `torus2-64`, `sphere-32`, `torus4-8`.
    pub grid: String,
    /// Chart margin override; `None` selects a kind-appropriate default.
    pub margin: Option<usize>,
    pub charge: i64,
    pub seed: u64,
    /// Sup-distance scale of synthetic cocycle perturbations.
    pub perturbation: f64,
    /// Family length for stabilization experiments.
    pub terms: usize,
    /// Stabilization family shape: `spread` or `concentrating`.
    pub family: String,
    /// Optional path to a smallness-profile file.
    pub profile: Option<String>,
    /// Tolerance overrides, keyed by their `tol_*` spec names.
    pub tol: BTreeMap<String, f64>,
    /// Key/value pairs exactly as they appeared in the file, for the report echo.
    pub echo: Vec<(String, String)>,
}

impl ScenarioSpec {
    /// The tolerance registered under `key`, or `default` when the spec did
    /// not override it.
    pub fn tol_or(&self, key: &str, default: f64) -> f64 {
        self.tol.get(key).copied().unwrap_or(default)
    }

    fn resolved_margin(&self, grid: &BaseGrid) -> usize {
        if let Some(m) = self.margin {
            return m;
        }
        let n = grid.dims[0];
        let base = match grid.kind {
            GridKind::Torus4 => (n / 8).max(2),
            _ => (n / 8).max(4),
        };
        if self.kind == ScenarioKind::SmoothCocycle {
            base.max(2 * chart_count(grid.kind))
        } else {
            base
        }
    }
}

fn chart_count(kind: GridKind) -> usize {
    match kind {
        GridKind::Sphere2 => 2,
        GridKind::Torus2 => 4,
        GridKind::Torus4 => 2,
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Builds the grid named by a preset string: `torus2-N`, `sphere-N`
/// (equatorial resolution `N`, so `N × 2N` cells), or `torus4-N`.
pub fn parse_grid_preset(preset: &str) -> Result<Arc<BaseGrid>> {
    let (kind, size) = preset
        .split_once('-')
        .ok_or_else(|| perr(0, format!("grid preset `{preset}` is not of the form kind-N")))?;
    let n: usize = size
        .parse()
        .map_err(|_| perr(0, format!("grid preset `{preset}` has a non-numeric size")))?;
    match kind {
        "torus2" => {
            if !(8..=256).contains(&n) {
                return Err(perr(0, format!("torus2 preset size {n} outside 8..=256")));
            }
            BaseGrid::torus2(n)
        }
        "sphere" => {
            if !(8..=256).contains(&n) {
                return Err(perr(0, format!("sphere preset size {n} outside 8..=256")));
            }
            BaseGrid::sphere(n)
        }
        "torus4" => {
            if !(4..=32).contains(&n) {
                return Err(perr(0, format!("torus4 preset size {n} outside 4..=32")));
            }
            BaseGrid::torus4(n)
        }
        other => Err(perr(0, format!("unknown grid family `{other}` (torus2|sphere|torus4)"))),
    }
}

fn parse_group(s: &str) -> Option<GroupId> {
    match s {
        "u1" => Some(GroupId::U1),
        "su2" => Some(GroupId::Su2),
        _ => None,
    }
}

/// Parses a scenario from flat `key = value` text.
///
/// Blank lines and lines starting with `#` are ignored.  Unknown keys,
/// duplicate keys, malformed values, and semantically impossible requests are
/// all rejected with the offending line number.
pub fn parse_spec(text: &str) -> Result<ScenarioSpec> {
    let mut kind: Option<ScenarioKind> = None;
    let mut spec = ScenarioSpec {
        kind: ScenarioKind::ValidateBundle,
        group: GroupId::U1,
        grid: "torus2-32".to_string(),
        margin: None,
        charge: 0,
        seed: 0,
        perturbation: 1e-3,
        terms: 5,
        family: "spread".to_string(),
        profile: None,
        tol: BTreeMap::new(),
        echo: Vec::new(),
    };
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| perr(line, format!("expected `key = value`, got `{trimmed}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(perr(line, "empty key or value"));
        }
        if let Some(first) = seen.insert(key.to_string(), line) {
            return Err(perr(line, format!("duplicate key `{key}` (first set on line {first})")));
        }
        spec.echo.push((key.to_string(), value.to_string()));
        match key {
            "kind" => {
                kind = Some(ScenarioKind::parse(value).ok_or_else(|| {
                    perr(line, format!("unknown scenario kind `{value}`"))
                })?);
            }
            "group" => {
                spec.group = parse_group(value)
                    .ok_or_else(|| perr(line, format!("unknown group `{value}` (u1|su2)")))?;
            }
            "grid" => {
                parse_grid_preset(value).map_err(|e| perr(line, format!("{e}")))?;
                spec.grid = value.to_string();
            }
            "margin" => {
                let m: usize = value
                    .parse()
                    .map_err(|_| perr(line, format!("margin `{value}` is not an integer")))?;
                if !(2..=64).contains(&m) {
                    return Err(perr(line, format!("margin {m} outside 2..=64")));
                }
                spec.margin = Some(m);
            }
            "charge" => {
                let k: i64 = value
                    .parse()
                    .map_err(|_| perr(line, format!("charge `{value}` is not an integer")))?;
                if k.abs() > 4 {
                    return Err(perr(line, format!("|charge| = {} exceeds 4", k.abs())));
                }
                spec.charge = k;
            }
            "seed" => {
                spec.seed = value
                    .parse()
                    .map_err(|_| perr(line, format!("seed `{value}` is not a u64")))?;
            }
            "perturbation" => {
                let p: f64 = value
                    .parse()
                    .map_err(|_| perr(line, format!("perturbation `{value}` is not a number")))?;
                if !(p > 0.0 && p <= 0.02) {
                    return Err(perr(line, format!("perturbation {p} outside (0, 0.02]")));
                }
                spec.perturbation = p;
            }
            "terms" => {
                let t: usize = value
                    .parse()
                    .map_err(|_| perr(line, format!("terms `{value}` is not an integer")))?;
                if !(2..=10).contains(&t) {
                    return Err(perr(line, format!("terms {t} outside 2..=10")));
                }
                spec.terms = t;
            }
            "family" => {
                if value != "spread" && value != "concentrating" {
                    return Err(perr(
                        line,
                        format!("unknown family `{value}` (spread|concentrating)"),
                    ));
                }
                spec.family = value.to_string();
            }
            "profile" => {
                spec.profile = Some(value.to_string());
            }
            _ if key.starts_with("tol_") => {
                let t: f64 = value
                    .parse()
                    .map_err(|_| perr(line, format!("tolerance `{value}` is not a number")))?;
                if !(t > 0.0 && t.is_finite()) {
                    return Err(perr(line, format!("tolerance {key} = {t} must be positive")));
                }
                spec.tol.insert(key.to_string(), t);
            }
            _ => return Err(perr(line, format!("unknown key `{key}`"))),
        }
    }
    spec.kind = kind.ok_or_else(|| perr(0, "missing required key `kind`"))?;
    check_spec(&spec)?;
    Ok(spec)
}

/// Cross-field consistency rules that make a spec runnable at all.  Violations
/// are reported as parse errors with line 0 (they concern the whole file).
fn check_spec(spec: &ScenarioSpec) -> Result<()> {
    let grid = parse_grid_preset(&spec.grid)?;
    let margin = spec.resolved_margin(&grid);
    let n = grid.dims[0];
    if spec.charge != 0 {
        if spec.group != GroupId::U1 {
            return Err(perr(0, "nonzero charge needs the abelian group u1"));
        }
        if grid.kind == GridKind::Torus4 {
            return Err(perr(0, "charged pairs live on torus2 or sphere, not torus4"));
        }
        if grid.kind == GridKind::Torus2 && 4 * margin >= n {
            return Err(perr(
                0,
                format!("flux pairs need margin < n/4, got margin {margin} on torus2-{n}"),
            ));
        }
    }
    match spec.kind {
        ScenarioKind::SmoothCocycle => {
            let need = 2 * chart_count(grid.kind);
            if margin < need {
                return Err(perr(
                    0,
                    format!(
                        "cocycle repair on this cover needs margin >= {need}, got {margin}; \
                         use a larger margin or a finer grid"
                    ),
                ));
            }
            if grid.kind == GridKind::Sphere2 && spec.charge != 0 {
                let osc = 2.0 * std::f64::consts::TAU * spec.charge.unsigned_abs() as f64
                    / grid.dims[1] as f64
                    + 4.0 * spec.perturbation;
                if osc > 0.39 {
                    return Err(perr(
                        0,
                        format!(
                            "transition oscillation {osc:.3} leaves no mollifier headroom \
                             below {DELTA_G}; use a finer sphere grid or a smaller charge"
                        ),
                    ));
                }
            }
        }
        ScenarioKind::Stabilization => {
            if grid.kind != GridKind::Sphere2 || spec.group != GroupId::U1 {
                return Err(perr(0, "stabilization families are built on the sphere over u1"));
            }
            if spec.charge < 1 || spec.charge > 2 {
                return Err(perr(0, "stabilization needs charge 1 or 2"));
            }
            if spec.family == "concentrating" && spec.charge != 1 {
                return Err(perr(0, "the concentrating family carries charge 1"));
            }
        }
        ScenarioKind::EllipticBench => {
            if grid.kind != GridKind::Torus2 || spec.group != GroupId::U1 {
                return Err(perr(0, "the elliptic bench runs on torus2 over u1"));
            }
            if n < 32 {
                return Err(perr(0, "the elliptic bench needs torus2-32 or finer"));
            }
        }
        ScenarioKind::CalibrateConstants => {
            if grid.kind != GridKind::Torus2 {
                return Err(perr(0, "constant calibration runs on torus2"));
            }
            if n < 16 {
                return Err(perr(0, "constant calibration needs torus2-16 or finer"));
            }
        }
        ScenarioKind::Flatness => {
            if grid.kind == GridKind::Torus4 {
                return Err(perr(0, "flatness thresholds are calibrated on torus2 and sphere"));
            }
            if grid.kind == GridKind::Torus2 && n < 32 {
                return Err(perr(0, "flatness on torus2 needs size 32 or finer"));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Reads and parses a scenario file, resolving any profile path relative to
/// the file's own directory.
pub fn load_spec(path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path)?;
    let mut spec = parse_spec(&text)?;
    if let Some(p) = spec.profile.take() {
        let raw = PathBuf::from(&p);
        let resolved = if raw.is_relative() {
            path.parent().unwrap_or_else(|| Path::new(".")).join(raw)
        } else {
            raw
        };
        spec.profile = Some(resolved.to_string_lossy().into_owned());
    }
    Ok(spec)
}

/// Full schema check of a scenario file: syntax, semantic gates, and the
/// existence of every referenced file.  Does not run the pipeline.
pub fn validate_spec(path: &Path) -> Result<ScenarioSpec> {
    let spec = load_spec(path)?;
    if let Some(p) = &spec.profile {
        if fs::metadata(p).is_err() {
            return Err(perr(0, format!("referenced profile file `{p}` does not exist")));
        }
        SmallnessProfile::from_text(&fs::read_to_string(p)?)?;
    }
    Ok(spec)
}

/// One ChaCha8 generator per (seed, stage) pair.  Distinct stages draw from
/// distinct streams, so the draws of one stage never depend on how many draws
/// another stage made.
pub fn stream_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// One judged quantity: the measured value, the tolerance it was compared to,
/// and the direction of the bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `"max"` when the value must stay at or below the tolerance, `"min"`
    /// when it must stay at or above it.
    pub bound: String,
    pub pass: bool,
}

impl Metric {
    fn le(name: &str, value: f64, tolerance: f64) -> Metric {
        Metric {
            name: name.to_string(),
            value,
            tolerance,
            bound: "max".to_string(),
            pass: value <= tolerance,
        }
    }

    fn ge(name: &str, value: f64, tolerance: f64) -> Metric {
        Metric {
            name: name.to_string(),
            value,
            tolerance,
            bound: "min".to_string(),
            pass: value >= tolerance,
        }
    }

    fn flag(name: &str, ok: bool) -> Metric {
        Metric::ge(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

/// Metrics and free-form notes from one pipeline stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub metrics: Vec<Metric>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// The deterministic outcome of a scenario run.  Serializing a report twice
/// for the same spec yields byte-identical JSON; wall-clock timings are kept
/// out of the serialized form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub kind: ScenarioKind,
    pub spec_echo: Vec<(String, String)>,
    pub stages: Vec<StageReport>,
    pub pass: bool,
    #[serde(skip)]
    pub stage_wall_ms: Vec<(String, u64)>,
}

/// A report together with the named artifact files the run produced.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: Report,
    /// (file name, file contents) pairs written next to the report.
    pub artifacts: Vec<(String, String)>,
}

fn metrics_csv(report: &Report) -> String {
    let mut csv = String::from("stage,metric,value,tolerance,bound,pass\n");
    for stage in &report.stages {
        for m in &stage.metrics {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                stage.stage, m.name, m.value, m.tolerance, m.bound, m.pass
            );
        }
    }
    csv
}

#[derive(Serialize)]
struct TimingRow<'a> {
    stage: &'a str,
    wall_ms: u64,
}

/// Writes `report.json`, a `metrics.csv` sidecar of the headline numbers, a
/// `timings.json` sidecar (deliberately outside the deterministic payload),
/// and every artifact file into `dir`.  Returns the report path.
pub fn write_outcome(outcome: &ScenarioOutcome, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let report_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&outcome.report)?;
    json.push('\n');
    fs::write(&report_path, json)?;
    fs::write(dir.join("metrics.csv"), metrics_csv(&outcome.report))?;
    let rows: Vec<TimingRow> = outcome
        .report
        .stage_wall_ms
        .iter()
        .map(|(stage, wall_ms)| TimingRow { stage, wall_ms: *wall_ms })
        .collect();
    let mut timings = serde_json::to_string_pretty(&serde_json::json!({ "stages": rows }))?;
    timings.push('\n');
    fs::write(dir.join("timings.json"), timings)?;
    for (name, body) in &outcome.artifacts {
        fs::write(dir.join(name), body)?;
    }
    Ok(report_path)
}

fn finish_stage(
    out: &mut ScenarioOutcome,
    name: &str,
    start: Instant,
    metrics: Vec<Metric>,
    notes: Vec<String>,
) {
    out.report.stage_wall_ms.push((name.to_string(), start.elapsed().as_millis() as u64));
    out.report.stages.push(StageReport { stage: name.to_string(), metrics, notes });
}

/// A smooth global test form with per-component, per-axis phase offsets; used
/// wherever a scenario needs a nontrivial connection on a trivial cocycle.
fn analytic_connection(cover: &Arc<Cover>, group: GroupId, amp: f64) -> Result<ConnectionForm> {
    let dims: Vec<f64> = cover.grid.dims.iter().map(|&d| d as f64).collect();
    global_connection(cover.clone(), group, move |gc, comp| {
        let mut s = 0.9 * comp as f64;
        for (a, &g) in gc.iter().enumerate() {
            s += (a + 1) as f64 * std::f64::consts::TAU * (g as f64 + 0.5) / dims[a];
        }
        match group {
            GroupId::U1 => AlgebraElement::U1(Complex64::new(0.0, amp * s.sin())),
            GroupId::Su2 => su2_from_coords(
                amp * s.sin(),
                amp * (0.7 * s).cos(),
                0.5 * amp * (s + 1.0).sin(),
            ),
        }
    })
}

/// The reference pair a scenario works on: a charged model bundle when the
/// charge is nonzero, otherwise the trivial cocycle carrying a small analytic
/// connection.
fn bundle_for(spec: &ScenarioSpec, grid: &Arc<BaseGrid>, amp: f64) -> Result<Bundle> {
    let margin = spec.resolved_margin(grid);
    match grid.kind {
        GridKind::Sphere2 if spec.charge != 0 => {
            charge_sphere_bundle(grid.clone(), margin, spec.charge)
        }
        GridKind::Torus2 if spec.charge != 0 => {
            flux_torus_bundle(grid.clone(), margin, spec.charge)
        }
        _ => {
            let cover = Arc::new(match grid.kind {
                GridKind::Sphere2 => Cover::sphere_caps(grid.clone(), margin)?,
                GridKind::Torus2 => Cover::torus_blocks(grid.clone(), 2, margin)?,
                GridKind::Torus4 => Cover::torus_bands(grid.clone(), 2, margin)?,
            });
            let cocycle = Cocycle::identity(cover.clone(), spec.group)?;
            let connection = analytic_connection(&cover, spec.group, amp)?;
            Ok(Bundle { cocycle, connection })
        }
    }
}

fn load_profile_or(spec: &ScenarioSpec, default: SmallnessProfile) -> Result<SmallnessProfile> {
    match &spec.profile {
        Some(path) => SmallnessProfile::from_text(&fs::read_to_string(path)?),
        None => Ok(default),
    }
}

fn class_note(kind: &ClassKind) -> String {
    format!("class: {kind:?}")
}

/// Runs the pipeline a spec requests and collects the deterministic outcome.
/// The process exit decision belongs to the caller: `report.pass` is true iff
/// every metric of every stage passed.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutcome> {
    check_spec(spec)?;
    let grid = parse_grid_preset(&spec.grid)?;
    let mut out = ScenarioOutcome {
        report: Report {
            schema_version: REPORT_SCHEMA_VERSION,
            kind: spec.kind,
            spec_echo: spec.echo.clone(),
            stages: Vec::new(),
            pass: false,
            stage_wall_ms: Vec::new(),
        },
        artifacts: Vec::new(),
    };
    match spec.kind {
        ScenarioKind::ValidateBundle => run_validate(spec, &grid, &mut out)?,
        ScenarioKind::CoulombFix => run_coulomb(spec, &grid, &mut out)?,
        ScenarioKind::SmoothCocycle => run_smooth(spec, &grid, &mut out)?,
        ScenarioKind::TopologyClass => run_topology(spec, &grid, &mut out)?,
        ScenarioKind::Flatness => run_flatness(spec, &grid, &mut out)?,
        ScenarioKind::Stabilization => run_stabilization(spec, &grid, &mut out)?,
        ScenarioKind::EllipticBench => run_elliptic(spec, &grid, &mut out)?,
        ScenarioKind::CalibrateConstants => run_calibrate(spec, &grid, &mut out)?,
    }
    out.report.pass =
        out.report.stages.iter().all(|s| s.metrics.iter().all(|m| m.pass));
    Ok(out)
}

fn run_validate(spec: &ScenarioSpec, grid: &Arc<BaseGrid>, out: &mut ScenarioOutcome) -> Result<()> {
    let stage = "cocycle";
    let t0 = Instant::now();
    let bundle = bundle_for(spec, grid, 0.05).map_err(|e| e.in_stage(stage))?;
    let residual = bundle.cocycle.residual().map_err(|e| e.in_stage(stage))?;
    let charts = bundle.cocycle.cover.charts.len();
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::le("residual", residual, spec.tol_or("tol_exact", 1e-12))],
        vec![format!("{charts} charts over {}", spec.grid)],
    );

    let stage = "gluing";
    let t0 = Instant::now();
    let defect =
        gluing_residual(&bundle.cocycle, &bundle.connection).map_err(|e| e.in_stage(stage))?;
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::le("gluing_defect", defect, spec.tol_or("tol_gluing", 1e-10))],
        Vec::new(),
    );

    let stage = "gauge-invariance";
    let t0 = Instant::now();
    let mut rng = stream_rng(spec.seed, STREAM_GAUGE);
    let rho = random_smooth_gauge(bundle.cocycle.cover.clone(), spec.group, 0.3, &mut rng)
        .map_err(|e| e.in_stage(stage))?;
    let gauged = bundle.cocycle.apply_gauge(&rho).map_err(|e| e.in_stage(stage))?;
    let gauged_residual = gauged.residual().map_err(|e| e.in_stage(stage))?;
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::le("gauged_residual", gauged_residual, spec.tol_or("tol_gauge", 1e-10))],
        Vec::new(),
    );
    Ok(())
}

fn run_coulomb(spec: &ScenarioSpec, grid: &Arc<BaseGrid>, out: &mut ScenarioOutcome) -> Result<()> {
    let bundle = bundle_for(spec, grid, 0.05).map_err(|e| e.in_stage("coulomb-setup"))?;
    let (interior_default, projection_default) = match spec.group {
        GroupId::U1 => (1e-8, 1e-10),
        GroupId::Su2 => (1e-5, 1e-6),
    };
    let boundary_default = 10.0 * grid.spacing[0];
    for (chart, local) in bundle.connection.locals().iter().enumerate() {
        let stage = format!("coulomb-chart-{chart}");
        let t0 = Instant::now();
        let result = match spec.group {
            GroupId::U1 => abelian_coulomb(local, spec.tol_or("tol_projection", projection_default)),
            GroupId::Su2 => nonabelian_coulomb(
                local,
                1.0,
                spec.tol_or("tol_projection", projection_default),
                200,
            ),
        }
        .map_err(|e| e.in_stage(&stage))?;
        finish_stage(
            out,
            &stage,
            t0,
            vec![
                Metric::le(
                    "residual_interior",
                    result.residual_interior,
                    spec.tol_or("tol_interior", interior_default),
                ),
                Metric::le(
                    "residual_boundary",
                    result.residual_boundary,
                    spec.tol_or("tol_boundary", boundary_default),
                ),
                Metric::le(
                    "estimate_ratio",
                    result.estimate_ratio,
                    spec.tol_or("tol_ratio", 100.0),
                ),
            ],
            Vec::new(),
        );
    }
    Ok(())
}

fn cocycle_snapshots(prefix: &str, cocycle: &Cocycle) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for (i, j) in cocycle.pairs() {
        if let Some(pieces) = cocycle.pair_fields(i, j) {
            for (idx, piece) in pieces.iter().enumerate() {
                let snap = FieldSnapshot::of_group_field(piece);
                files.push((format!("{prefix}_{i}_{j}_{idx}.csv"), snap.to_csv()));
            }
        }
    }
    files
}

fn run_smooth(spec: &ScenarioSpec, grid: &Arc<BaseGrid>, out: &mut ScenarioOutcome) -> Result<()> {
    let stage = "perturb";
    let t0 = Instant::now();
    let bundle = bundle_for(spec, grid, 0.05).map_err(|e| e.in_stage(stage))?;
    let eps = spec.perturbation;
    let mut rng = stream_rng(spec.seed, STREAM_PERTURB);
    let group = spec.group;
    let noisy = Cocycle::from_fn(bundle.cocycle.cover.clone(), group, |i, j, gc| {
        let base = bundle.cocycle.value_at(i, j, gc).expect("overlap point of the same cover");
        let jitter = match group {
            GroupId::U1 => GroupElement::from_components(
                GroupId::U1,
                &[Complex64::from_polar(1.0, rng.random_range(-eps..eps))],
            ),
            GroupId::Su2 => su2_from_coords(
                rng.random_range(-eps..eps),
                rng.random_range(-eps..eps),
                rng.random_range(-eps..eps),
            )
            .exp(),
        };
        base.mul(&jitter).expect("same group")
    })
    .map_err(|e| e.in_stage(stage))?;
    let input_residual = noisy.residual().map_err(|e| e.in_stage(stage))?;
    out.artifacts.extend(cocycle_snapshots("cocycle_before", &noisy));
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::le("input_residual", input_residual, DELTA_G)],
        vec![format!("perturbation scale {eps}")],
    );

    let stage = "mollify";
    let t0 = Instant::now();
    let width = 2.0 * grid.spacing[0];
    let mollified = mollify_cocycle(&noisy, width).map_err(|e| e.in_stage(stage))?;
    let mollified_residual = mollified.residual().map_err(|e| e.in_stage(stage))?;
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::le("mollified_residual", mollified_residual, DELTA_G)],
        vec![format!("kernel width {width}")],
    );

    let stage = "repair";
    let t0 = Instant::now();
    let (repaired, smoothing) = repair_cocycle(&mollified).map_err(|e| e.in_stage(stage))?;
    let moved =
        repaired.distance_sup(&bundle.cocycle).map_err(|e| e.in_stage(stage))?;
    let worst_w1n = smoothing
        .pair_distances
        .iter()
        .map(|p| p.w1n)
        .fold(0.0, f64::max);
    out.artifacts.extend(cocycle_snapshots("cocycle_after", &repaired));
    finish_stage(
        out,
        stage,
        t0,
        vec![
            Metric::le("post_residual", smoothing.post_residual, spec.tol_or("tol_exact", 1e-12)),
            Metric::le("distance_to_reference", moved, spec.tol_or("tol_sup", 1e-2)),
            Metric::le("worst_pair_w1n", worst_w1n, spec.tol_or("tol_w1n", 1.0)),
            Metric::flag("constraints_preserved", smoothing.constraints_preserved),
        ],
        Vec::new(),
    );

    if grid.kind == GridKind::Sphere2 && spec.group == GroupId::U1 && spec.charge != 0 {
        let stage = "winding";
        let t0 = Instant::now();
        let pieces = repaired
            .pair_fields(0, 1)
            .ok_or_else(|| Error::DomainMismatch {
                reason: "sphere cover has no stored (0, 1) overlap".into(),
            })
            .map_err(|e| e.in_stage(stage))?;
        let piece = &pieces[0];
        let row = piece.domain.region.len[0] / 2;
        let cols = piece.domain.region.len[1];
        let mut samples = Vec::with_capacity(cols);
        for c in 0..cols {
            samples.push(piece.value(row * cols + c));
        }
        let w = winding_number(&samples).map_err(|e| e.in_stage(stage))?;
        finish_stage(
            out,
            stage,
            t0,
            vec![Metric::le("winding_error", (w - spec.charge).abs() as f64, 0.0)],
            vec![format!("equatorial winding {w}, expected {}", spec.charge)],
        );
    }
    Ok(())
}

fn run_topology(spec: &ScenarioSpec, grid: &Arc<BaseGrid>, out: &mut ScenarioOutcome) -> Result<()> {
    let stage = "class";
    let t0 = Instant::now();
    let bundle = bundle_for(spec, grid, 0.05).map_err(|e| e.in_stage(stage))?;
    let class =
        direct_class(&bundle.cocycle, &bundle.connection).map_err(|e| e.in_stage(stage))?;
    let mut metrics = Vec::new();
    let mut notes = vec![class_note(&class.kind)];
    match (&class.kind, grid.kind) {
        (ClassKind::ChernU1(k), _) => {
            metrics.push(Metric::le("class_error", (k - spec.charge).abs() as f64, 0.0));
        }
        (ClassKind::TorusFluxes { fluxes, locally_constant }, _) => {
            let worst = fluxes.iter().map(|f| f.abs()).max().unwrap_or(0) as f64;
            metrics.push(Metric::le("worst_flux", worst, spec.charge.abs() as f64));
            metrics.push(Metric::flag("locally_constant", *locally_constant));
            notes.push(format!("fluxes {fluxes:?}"));
        }
        (ClassKind::FlatFlag(flat), _) => {
            metrics.push(Metric::flag("flat_flag_matches", *flat == (spec.charge == 0)));
        }
    }
    finish_stage(out, stage, t0, metrics, notes);

    let stage = "gauge-invariance";
    let t0 = Instant::now();
    let mut rng = stream_rng(spec.seed, STREAM_GAUGE);
    let rho = random_smooth_gauge(bundle.cocycle.cover.clone(), spec.group, 0.3, &mut rng)
        .map_err(|e| e.in_stage(stage))?;
    let gauged_p = bundle.cocycle.apply_gauge(&rho).map_err(|e| e.in_stage(stage))?;
    let gauged_a = bundle.connection.apply_gauge(&rho).map_err(|e| e.in_stage(stage))?;
    let gauged_class = direct_class(&gauged_p, &gauged_a).map_err(|e| e.in_stage(stage))?;
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::flag("class_gauge_invariant", gauged_class == class)],
        vec![class_note(&gauged_class.kind)],
    );

    if spec.group == GroupId::U1 {
        let stage = "connection-independence";
        let t0 = Instant::now();
        let cover = bundle.cocycle.cover.clone();
        let dims: Vec<f64> = grid.dims.iter().map(|&d| d as f64).collect();
        let mut locals = Vec::with_capacity(cover.charts.len());
        for (chart, local) in bundle.connection.locals().iter().enumerate() {
            let start = cover.charts[chart].support.start.clone();
            let dims = dims.clone();
            let extra = FormField::from_fn(local.domain.clone(), GroupId::U1, 1, |gc, comp| {
                let mut s = 0.4 * comp as f64;
                for (a, &g) in gc.iter().enumerate() {
                    let global = (start[a] + g) % (dims[a] as usize);
                    s += (a + 2) as f64 * std::f64::consts::TAU * (global as f64 + 0.5) / dims[a];
                }
                AlgebraElement::U1(Complex64::new(0.0, 0.1 * s.cos()))
            });
            locals.push(local.add(&extra).map_err(|e| e.in_stage(stage))?);
        }
        let alt = ConnectionForm::from_locals(cover, spec.group, locals)
            .map_err(|e| e.in_stage(stage))?;
        let alt_class =
            direct_class(&bundle.cocycle, &alt).map_err(|e| e.in_stage(stage))?;
        finish_stage(
            out,
            stage,
            t0,
            vec![Metric::flag("class_connection_independent", alt_class == class)],
            vec![class_note(&alt_class.kind)],
        );
    }
    Ok(())
}

fn run_flatness(spec: &ScenarioSpec, grid: &Arc<BaseGrid>, out: &mut ScenarioOutcome) -> Result<()> {
    let stage = "flatness";
    let t0 = Instant::now();
    let bundle = bundle_for(spec, grid, 0.005).map_err(|e| e.in_stage(stage))?;
    let profile = load_profile_or(
        spec,
        SmallnessProfile { eps_elliptic: 2.4, eps_coulomb: 0.6, c_coulomb: 1.0 },
    )
    .map_err(|e| e.in_stage(stage))?;
    let verdict = flatness_detect(&bundle.cocycle, &bundle.connection, &profile)
        .map_err(|e| e.in_stage(stage))?;
    let expected_flat = spec.charge == 0;
    let mut metrics = vec![Metric::flag(
        "verdict_matches",
        verdict.is_topologically_flat == expected_flat,
    )];
    if expected_flat {
        metrics.push(Metric::le("ym_value", verdict.ym_value, verdict.delta_used));
    } else {
        metrics.push(Metric::ge(
            "separation_factor",
            verdict.ym_value / verdict.delta_used,
            spec.tol_or("tol_margin", 2.0),
        ));
    }
    finish_stage(
        out,
        stage,
        t0,
        metrics,
        vec![format!(
            "ym {:.6e} against delta {:.6e}",
            verdict.ym_value, verdict.delta_used
        )],
    );
    Ok(())
}

fn run_stabilization(
    spec: &ScenarioSpec,
    grid: &Arc<BaseGrid>,
    out: &mut ScenarioOutcome,
) -> Result<()> {
    let margin = spec.resolved_margin(grid);
    let concentrating = spec.family == "concentrating";

    let stage = "family";
    let t0 = Instant::now();
    let family = if concentrating {
        concentrating_family(grid, margin, spec.terms)
    } else {
        non_concentrating_family(grid, margin, spec.charge, spec.terms)
    }
    .map_err(|e| e.in_stage(stage))?;
    let mut worst_gluing: f64 = 0.0;
    for term in &family {
        worst_gluing = worst_gluing
            .max(gluing_residual(&term.cocycle, &term.connection).map_err(|e| e.in_stage(stage))?);
    }
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::le("worst_gluing", worst_gluing, spec.tol_or("tol_gluing", 1e-10))],
        vec![format!("{} terms, {} family", family.len(), spec.family)],
    );

    let stage = "stabilization";
    let t0 = Instant::now();
    let default_eps = if concentrating { 0.1 } else { 0.6 };
    let profile = load_profile_or(
        spec,
        SmallnessProfile {
            eps_elliptic: 4.0 * default_eps,
            eps_coulomb: default_eps,
            c_coulomb: 1.0,
        },
    )
    .map_err(|e| e.in_stage(stage))?;
    let report = stabilization_experiment(&family, &[0.01, 0.1, 0.5], &profile)
        .map_err(|e| e.in_stage(stage))?;
    let mut notes = Vec::new();
    for (i, step) in report.steps.iter().enumerate() {
        match (&step.class, &step.pipeline_error) {
            (Some(class), _) => notes.push(format!(
                "term {i}: ym {:.6e}, {}",
                step.ym_value,
                class_note(&class.kind)
            )),
            (None, Some(err)) => {
                notes.push(format!("term {i}: ym {:.6e}, pipeline error: {err}", step.ym_value))
            }
            (None, None) => notes.push(format!("term {i}: ym {:.6e}, unclassified", step.ym_value)),
        }
    }
    let mut metrics = Vec::new();
    if concentrating {
        let bubbled = report.steps.iter().any(|step| {
            step.pipeline_error
                .as_deref()
                .map(|m| m.contains("refinement") || m.contains("margin"))
                .unwrap_or(false)
                || matches!(
                    step.class.as_ref().map(|c| &c.kind),
                    Some(ClassKind::ChernU1(0))
                )
        });
        metrics.push(Metric::flag("bubbling_detected", bubbled));
        metrics.push(Metric::flag("not_stabilized", !report.stabilized));
    } else {
        metrics.push(Metric::flag("stabilized", report.stabilized));
        let expected = ClassKind::ChernU1(spec.charge);
        let classes_match = report
            .steps
            .iter()
            .all(|s| s.class.as_ref().map(|c| c.kind == expected).unwrap_or(false));
        metrics.push(Metric::flag("class_constant", classes_match));
        let worst_small_mass = report
            .steps
            .iter()
            .map(|s| {
                let (_, mass) = s.equiintegrability[0];
                mass / s.ym_value.max(1.0)
            })
            .fold(0.0, f64::max);
        metrics.push(Metric::le(
            "smallest_fraction_share",
            worst_small_mass,
            spec.tol_or("tol_equi", 0.35),
        ));
        let worst_shift = report
            .steps
            .iter()
            .filter_map(|s| s.cocycle_shift)
            .fold(0.0, f64::max);
        metrics.push(Metric::le("worst_cocycle_shift", worst_shift, spec.tol_or("tol_shift", 0.75)));
    }
    finish_stage(out, stage, t0, metrics, notes);
    Ok(())
}

fn box_domain(grid: &Arc<BaseGrid>, len: usize) -> Result<Domain> {
    Domain::new(grid.clone(), BoxRegion::new(vec![0, 0], vec![len, len]))
}

/// The manufactured Dirichlet pair adapted to the zero-ghost convention: the
/// product of half-period sines vanishing half a cell outside the region,
/// together with the source that makes it the exact continuum solution.
fn manufactured(dom: &Domain) -> (FormField, FormField) {
    use std::f64::consts::PI;
    let l0 = dom.region.len[0] as f64;
    let l1 = dom.region.len[1] as f64;
    let alpha = FormField::from_fn(dom.clone(), GroupId::U1, 0, |gc, _| {
        let xi = (gc[0] as f64 + 1.0) / (l0 + 1.0);
        let eta = (gc[1] as f64 + 1.0) / (l1 + 1.0);
        AlgebraElement::U1(Complex64::new((PI * xi).sin() * (PI * eta).sin(), 0.0))
    });
    let h0 = dom.grid.spacing[0] * (l0 + 1.0);
    let h1 = dom.grid.spacing[1] * (l1 + 1.0);
    let factor = -(PI / h0).powi(2) - (PI / h1).powi(2);
    let mut source = alpha.clone();
    for v in source.data.iter_mut() {
        *v *= factor;
    }
    (alpha, source)
}

fn random_one_form(dom: &Domain, amplitude: f64, rng: &mut ChaCha8Rng) -> FormField {
    let mut drift = FormField::zeros(dom.clone(), GroupId::U1, 1);
    for v in drift.data.iter_mut() {
        *v = Complex64::new(0.0, amplitude * rng.random_range(-1.0..1.0));
    }
    drift
}

fn run_elliptic(spec: &ScenarioSpec, grid: &Arc<BaseGrid>, out: &mut ScenarioOutcome) -> Result<()> {
    let n = grid.dims[0];
    let solver_tol = spec.tol_or("tol_solve", 1e-11);

    let stage = "convergence";
    let t0 = Instant::now();
    let mut errors = Vec::new();
    for m in [n / 4, n / 2, n] {
        let fine = BaseGrid::torus2(m).map_err(|e| e.in_stage(stage))?;
        let dom = box_domain(&fine, m - 1).map_err(|e| e.in_stage(stage))?;
        let (alpha_star, source) = manufactured(&dom);
        let drift = FormField::zeros(dom.clone(), GroupId::U1, 1);
        let problem = DriftProblem::new(drift, source).map_err(|e| e.in_stage(stage))?;
        let (alpha, _) =
            solve_drift_dirichlet(&problem, solver_tol, 50).map_err(|e| e.in_stage(stage))?;
        let err = alpha
            .sub(&alpha_star)
            .map_err(|e| e.in_stage(stage))?
            .pointwise_norm()
            .into_iter()
            .fold(0.0, f64::max);
        errors.push(err);
    }
    let order = (errors[errors.len() - 2] / errors[errors.len() - 1]).log2();
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::ge("convergence_order", order, spec.tol_or("tol_order", 1.8))],
        vec![format!("sup errors {errors:?}")],
    );

    let stage = "contraction";
    let t0 = Instant::now();
    let dom = box_domain(grid, n - 1).map_err(|e| e.in_stage(stage))?;
    let mut rng = stream_rng(spec.seed, STREAM_DRIFT);
    let drift = random_one_form(&dom, 0.3, &mut rng);
    let factor = contraction_probe(&drift, &mut rng).map_err(|e| e.in_stage(stage))?;
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::le("contraction_factor", factor, spec.tol_or("tol_contraction", 0.9))],
        Vec::new(),
    );

    let stage = "initializations";
    let t0 = Instant::now();
    let (_, source) = manufactured(&dom);
    let problem = DriftProblem::new(drift.clone(), source).map_err(|e| e.in_stage(stage))?;
    let (from_zero, _) =
        solve_drift_dirichlet(&problem, solver_tol, 200).map_err(|e| e.in_stage(stage))?;
    let mut init = FormField::zeros(dom.clone(), GroupId::U1, 0);
    let mut rng = stream_rng(spec.seed, STREAM_INIT);
    for v in init.data.iter_mut() {
        *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let (from_random, _) = solve_drift_dirichlet_from(&problem, &init, solver_tol, 200)
        .map_err(|e| e.in_stage(stage))?;
    let disagreement = from_zero
        .sub(&from_random)
        .map_err(|e| e.in_stage(stage))?
        .pointwise_norm()
        .into_iter()
        .fold(0.0, f64::max);
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::le("init_disagreement", disagreement, 10.0 * solver_tol)],
        Vec::new(),
    );

    let stage = "certify";
    let t0 = Instant::now();
    let mut rng = stream_rng(spec.seed, STREAM_CERTIFY);
    let certified = certify_eps_elliptic(&drift, &mut rng).map_err(|e| e.in_stage(stage))?;
    finish_stage(
        out,
        stage,
        t0,
        vec![Metric::ge("eps_elliptic", certified, spec.tol_or("tol_eps_floor", 1e-6))],
        Vec::new(),
    );
    Ok(())
}

fn run_calibrate(spec: &ScenarioSpec, grid: &Arc<BaseGrid>, out: &mut ScenarioOutcome) -> Result<()> {
    let stage = "calibrate";
    let t0 = Instant::now();
    let profile = calibrate(grid, spec.group, spec.seed).map_err(|e| e.in_stage(stage))?;
    out.artifacts.push(("smallness_profile.txt".to_string(), profile.to_text()));
    finish_stage(
        out,
        stage,
        t0,
        vec![
            Metric::ge("eps_elliptic", profile.eps_elliptic, spec.tol_or("tol_eps_floor", 1e-6)),
            Metric::ge("eps_coulomb", profile.eps_coulomb, spec.tol_or("tol_eps_floor", 1e-6)),
            Metric::le("c_coulomb", profile.c_coulomb, spec.tol_or("tol_ratio", 1e3)),
        ],
        Vec::new(),
    );
    Ok(())
}

/// Calibrates a smallness profile on a torus2 grid by climbing a ladder of
/// analytic connection amplitudes: each rung is Coulomb-projected, its
/// curvature mass and elliptic certification are recorded, and the ladder
/// stops at the first rung the projection rejects.  The profile keeps the
/// largest values that every surviving rung certified.
pub fn calibrate(grid: &Arc<BaseGrid>, group: GroupId, seed: u64) -> Result<SmallnessProfile> {
    if grid.kind != GridKind::Torus2 {
        return Err(Error::InvalidGrid {
            reason: "constant calibration is defined on torus2 grids".into(),
        });
    }
    let n = grid.dims[0];
    let dom = box_domain(grid, 3 * n / 4)?;
    let cover = Arc::new(Cover::single(grid.clone(), (n / 8).max(4))?);
    let interior_cap = match group {
        GroupId::U1 => 1e-8,
        GroupId::Su2 => 1e-5,
    };
    let half_dim = (grid.dims.len() as f64 / 2.0).max(1.0);
    let mut rng = stream_rng(seed, STREAM_CALIBRATE);
    let mut eps_elliptic: f64 = 0.0;
    let mut eps_coulomb: f64 = 0.0;
    let mut c_coulomb: f64 = 1.0;
    for amp in [0.05, 0.1, 0.2, 0.4, 0.8] {
        let global = analytic_connection(&cover, group, amp)?;
        let dims: Vec<f64> = grid.dims.iter().map(|&d| d as f64).collect();
        let local = FormField::from_fn(dom.clone(), group, 1, |gc, comp| {
            let mut s = 0.9 * comp as f64;
            for (a, &g) in gc.iter().enumerate() {
                s += (a + 1) as f64 * std::f64::consts::TAU * (g as f64 + 0.5) / dims[a];
            }
            match group {
                GroupId::U1 => AlgebraElement::U1(Complex64::new(0.0, amp * s.sin())),
                GroupId::Su2 => su2_from_coords(
                    amp * s.sin(),
                    amp * (0.7 * s).cos(),
                    0.5 * amp * (s + 1.0).sin(),
                ),
            }
        });
        let result = match group {
            GroupId::U1 => abelian_coulomb(&local, 1e-10),
            GroupId::Su2 => nonabelian_coulomb(&local, 1.0, 1e-6, 200),
        };
        let projected = match result {
            Ok(r) if r.residual_interior <= interior_cap => r,
            _ => break,
        };
        let curvature = global.curvature()?;
        let mass = per_chart_curvature_lp(&curvature, half_dim)?
            .into_iter()
            .fold(0.0, f64::max);
        eps_coulomb = eps_coulomb.max(mass);
        c_coulomb = c_coulomb.max(projected.estimate_ratio);
        let certified = certify_eps_elliptic(&projected.a_coulomb, &mut rng)?;
        eps_elliptic = eps_elliptic.max(certified);
    }
    if eps_coulomb <= 0.0 || eps_elliptic <= 0.0 {
        return Err(Error::SmallnessViolated {
            what: "calibration ladder".into(),
            value: 0.0,
            threshold: interior_cap,
        });
    }
    Ok(SmallnessProfile { eps_elliptic, eps_coulomb, c_coulomb })
}
