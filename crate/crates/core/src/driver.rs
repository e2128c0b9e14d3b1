//! Job drivers behind the command-line entry points: configuration
//! ingestion with override merging, seeded sampling of check points, the
//! trajectory file formats, and the three run modes (verification sweep,
//! reduced simulation, reduced-versus-full comparison).
//!
//! File-format contract: CSV columns are exactly
//! `t, x1.., f1.., xdot1.., fdot1.., p1.., E`, floats are written in the
//! shortest form that parses back bit-identically, and identical
//! configuration plus seed yields byte-identical output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{killing_consistency, lie_residuals, GroupChart};
use crate::bundle::{projector_checks, GeometryPoint};
use crate::christoffel::identity_suite;
use crate::dynamics::{
    energy, full_energy, full_rhs, initial_lift, project_full_state, reduced_rhs, FullState,
    ReducedState,
};
use crate::error::CoreError;
use crate::gaugefield::field_checks;
use crate::linalg::{sym_eigenvalues, Mat};
use crate::model::{fd_checkable_maps, Dims, KillingPMap, KillingVMap, Model};
use crate::models::{instantiate, BuiltinModel, ModelParams};
use crate::ode::{integrate_adaptive, integrate_fixed, IntegrationOutput};
use crate::report::CheckReport;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegratorKind {
    Rk4,
    Rkf45,
}

impl IntegratorKind {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(IntegratorKind::Rk4),
            "rkf45" => Ok(IntegratorKind::Rkf45),
            other => Err(CoreError::Config(format!(
                "unknown integrator `{other}` (choose rk4 or rkf45)"
            ))),
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            IntegratorKind::Rk4 => "rk4",
            IntegratorKind::Rkf45 => "rkf45",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self, CoreError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(CoreError::Config(format!(
                "unknown format `{other}` (choose csv or json)"
            ))),
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

/// Raw configuration as read from a TOML file or assembled from flags;
/// every field optional so sources can be layered.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub model: Option<String>,
    pub params: Option<BTreeMap<String, f64>>,
    pub initial: Option<ReducedState>,
    pub dt: Option<f64>,
    pub t_final: Option<f64>,
    pub integrator: Option<String>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub output: Option<String>,
    pub format: Option<String>,
    pub compare_tol: Option<f64>,
    pub check_tol: Option<f64>,
}

impl PartialConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CoreError> {
        toml::from_str(text).map_err(|e| CoreError::Config(format!("config parse: {e}")))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CoreError::Config(format!("cannot read config `{}`: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Layers `self` over `fallback`: set fields win, unset fields fall
    /// through.
    pub fn or(self, fallback: PartialConfig) -> PartialConfig {
        PartialConfig {
            model: self.model.or(fallback.model),
            params: self.params.or(fallback.params),
            initial: self.initial.or(fallback.initial),
            dt: self.dt.or(fallback.dt),
            t_final: self.t_final.or(fallback.t_final),
            integrator: self.integrator.or(fallback.integrator),
            tol: self.tol.or(fallback.tol),
            seed: self.seed.or(fallback.seed),
            samples: self.samples.or(fallback.samples),
            output: self.output.or(fallback.output),
            format: self.format.or(fallback.format),
            compare_tol: self.compare_tol.or(fallback.compare_tol),
            check_tol: self.check_tol.or(fallback.check_tol),
        }
    }

    /// Applies defaults and validates ranges.
    pub fn resolve(self) -> Result<SimConfig, CoreError> {
        let model = self
            .model
            .ok_or_else(|| CoreError::Config("missing `model`".into()))?;
        let cfg = SimConfig {
            model,
            params: ModelParams(self.params.unwrap_or_default()),
            initial: self.initial,
            dt: self.dt.unwrap_or(1e-3),
            t_final: self.t_final.unwrap_or(10.0),
            integrator: IntegratorKind::parse(self.integrator.as_deref().unwrap_or("rk4"))?,
            tol: self.tol.unwrap_or(1e-8),
            seed: self.seed.unwrap_or(1),
            samples: self.samples.unwrap_or(100),
            output: self.output.map(PathBuf::from),
            format: OutputFormat::parse(self.format.as_deref().unwrap_or("csv"))?,
            compare_tol: self.compare_tol,
            check_tol: self.check_tol.unwrap_or(1e-8),
        };
        if !(cfg.dt > 0.0) {
            return Err(CoreError::Config(format!("dt must be > 0, got {}", cfg.dt)));
        }
        if !(cfg.t_final > 0.0) {
            return Err(CoreError::Config(format!(
                "t_final must be > 0, got {}",
                cfg.t_final
            )));
        }
        if !(cfg.tol > 0.0) || !(cfg.check_tol > 0.0) {
            return Err(CoreError::Config("tolerances must be > 0".into()));
        }
        if let Some(b) = cfg.compare_tol {
            if !(b > 0.0) {
                return Err(CoreError::Config(format!(
                    "compare_tol must be > 0, got {b}"
                )));
            }
        }
        if cfg.samples == 0 {
            return Err(CoreError::Config("samples must be ≥ 1".into()));
        }
        Ok(cfg)
    }
}

/// Fully resolved job configuration.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub model: String,
    pub params: ModelParams,
    /// Starting reduced state; the model's representative state when absent.
    pub initial: Option<ReducedState>,
    pub dt: f64,
    pub t_final: f64,
    pub integrator: IntegratorKind,
    /// Local-error tolerance for the adaptive integrator.
    pub tol: f64,
    pub seed: u64,
    /// Check-point count for the verification sweep.
    pub samples: usize,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    /// Acceptance bound for the reduced-versus-full comparison; per-model
    /// default when unset.
    pub compare_tol: Option<f64>,
    /// Residual bound for the verification sweep's identity entries.
    pub check_tol: f64,
}

impl SimConfig {
    pub fn initial_state<M: Model>(&self, m: &M) -> Result<ReducedState, CoreError> {
        match &self.initial {
            Some(s) => {
                s.check_dims(m.dims())?;
                if !m.section_domain(&s.x) {
                    return Err(CoreError::domain(format!(
                        "initial base point {:?} outside the section domain",
                        s.x
                    )));
                }
                Ok(s.clone())
            }
            None => {
                let (x, f, xdot, fdot, p) = m.default_initial();
                Ok(ReducedState {
                    x,
                    f,
                    xdot,
                    fdot,
                    p,
                })
            }
        }
    }

    /// Key/value echo embedded in output files so a result names the run
    /// that produced it.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        map.insert("dt".into(), format!("{}", self.dt));
        map.insert("t_final".into(), format!("{}", self.t_final));
        map.insert("integrator".into(), self.integrator.as_str().to_string());
        map.insert("tol".into(), format!("{}", self.tol));
        map.insert("seed".into(), format!("{}", self.seed));
        map.insert("samples".into(), format!("{}", self.samples));
        map.insert("format".into(), self.format.as_str().to_string());
        for (k, v) in &self.params.0 {
            map.insert(format!("params.{k}"), format!("{v}"));
        }
        if let Some(s) = &self.initial {
            let join = |v: &[f64]| {
                v.iter()
                    .map(|x| format!("{x}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            map.insert("initial.x".into(), join(&s.x));
            map.insert("initial.f".into(), join(&s.f));
            map.insert("initial.xdot".into(), join(&s.xdot));
            map.insert("initial.fdot".into(), join(&s.fdot));
            map.insert("initial.p".into(), join(&s.p));
        }
        map
    }
}

// ---------------------------------------------------------------------------
// Seeded sampling
// ---------------------------------------------------------------------------

/// Draws `n` valid reduced configuration points `(x, f̃)` from the model's
/// sampling boxes with a deterministic stream; section-domain rejects are
/// re-drawn.
pub fn sample_points<M: Model>(
    m: &M,
    n: usize,
    seed: u64,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, CoreError> {
    let (x_ranges, f_ranges) = m.sample_ranges();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0usize;
    while out.len() < n {
        tries += 1;
        if tries > 1000 * n.max(1) {
            return Err(CoreError::Config(format!(
                "sampling boxes of `{}` reject too many points",
                m.name()
            )));
        }
        let x: Vec<f64> = x_ranges
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..hi))
            .collect();
        let f: Vec<f64> = f_ranges
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..hi))
            .collect();
        if m.section_domain(&x) {
            out.push((x, f));
        }
    }
    Ok(out)
}

/// Draws group-chart elements inside 90% of the chart radius.
fn sample_chart_elements(chart: &GroupChart, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let dim = chart.dim();
    let r = chart.radius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-r..r)).collect();
        if a.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.9 * r {
            out.push(a);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Trajectory and its file formats
// ---------------------------------------------------------------------------

/// Integrated run on a uniform time grid, with the configuration echo that
/// produced it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub model: String,
    pub dims: Dims,
    pub config: BTreeMap<String, String>,
    pub times: Vec<f64>,
    pub states: Vec<ReducedState>,
    pub energies: Vec<f64>,
    /// Early-stop reason when the run did not reach its final time.
    pub truncated: Option<String>,
}

/// Column names of the CSV contract for the given dimensions.
pub fn trajectory_columns(d: Dims) -> Vec<String> {
    let mut names = vec!["t".to_string()];
    for i in 1..=d.n_x {
        names.push(format!("x{i}"));
    }
    for i in 1..=d.n_v {
        names.push(format!("f{i}"));
    }
    for i in 1..=d.n_x {
        names.push(format!("xdot{i}"));
    }
    for i in 1..=d.n_v {
        names.push(format!("fdot{i}"));
    }
    for i in 1..=d.n_g {
        names.push(format!("p{i}"));
    }
    names.push("E".to_string());
    names
}

impl Trajectory {
    /// Row `k` in column order: `t`, state vector, energy.
    pub fn row(&self, k: usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.dims.n_state() + 2);
        row.push(self.times[k]);
        row.extend(self.states[k].to_vec());
        row.push(self.energies[k]);
        row
    }

    /// Structural invariants: equal column counts, strictly increasing
    /// times, state dimensions matching `dims`.
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.times.len() != self.states.len() || self.times.len() != self.energies.len() {
            return Err(CoreError::shape(format!(
                "ragged trajectory: {} times, {} states, {} energies",
                self.times.len(),
                self.states.len(),
                self.energies.len()
            )));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CoreError::Parse(format!(
                    "times not strictly increasing at t = {}",
                    w[0]
                )));
            }
        }
        for s in &self.states {
            s.check_dims(self.dims)?;
        }
        Ok(())
    }

    pub fn write_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# model = {}", self.model).unwrap();
        for (k, v) in &self.config {
            writeln!(out, "# {k} = {v}").unwrap();
        }
        if let Some(reason) = &self.truncated {
            writeln!(out, "# truncated = {reason}").unwrap();
        }
        writeln!(out, "{}", trajectory_columns(self.dims).join(",")).unwrap();
        for k in 0..self.times.len() {
            let row: Vec<String> = self.row(k).iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, CoreError> {
        let mut model = String::new();
        let mut config = BTreeMap::new();
        let mut truncated = None;
        let mut dims: Option<Dims> = None;
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut energies = Vec::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest
                    .split_once(" = ")
                    .ok_or_else(|| CoreError::Parse(format!("bad comment line `{line}`")))?;
                match k {
                    "model" => model = v.to_string(),
                    "truncated" => truncated = Some(v.to_string()),
                    _ => {
                        config.insert(k.to_string(), v.to_string());
                    }
                }
                continue;
            }
            match dims {
                None => dims = Some(parse_header(line)?),
                Some(d) => {
                    let row: Vec<f64> = line
                        .split(',')
                        .map(|tok| {
                            tok.parse::<f64>()
                                .map_err(|_| CoreError::Parse(format!("bad number `{tok}`")))
                        })
                        .collect::<Result<_, _>>()?;
                    if row.len() != d.n_state() + 2 {
                        return Err(CoreError::Parse(format!(
                            "row has {} fields, expected {}",
                            row.len(),
                            d.n_state() + 2
                        )));
                    }
                    times.push(row[0]);
                    states.push(ReducedState::from_vec(d, &row[1..row.len() - 1])?);
                    energies.push(row[row.len() - 1]);
                }
            }
        }
        let dims = dims.ok_or_else(|| CoreError::Parse("missing header row".into()))?;
        let traj = Trajectory {
            model,
            dims,
            config,
            times,
            states,
            energies,
            truncated,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trajectory serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CoreError> {
        let traj: Trajectory = serde_json::from_str(text)
            .map_err(|e| CoreError::Parse(format!("trajectory json: {e}")))?;
        traj.validate()?;
        Ok(traj)
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.write_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    pub fn save(&self, path: &Path, format: OutputFormat) -> Result<(), CoreError> {
        std::fs::write(path, self.render(format))
            .map_err(|e| CoreError::Config(format!("cannot write `{}`: {e}", path.display())))
    }

    pub fn load(path: &Path, format: OutputFormat) -> Result<Self, CoreError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Config(format!("cannot read `{}`: {e}", path.display())))?;
        match format {
            OutputFormat::Csv => Self::parse_csv(&text),
            OutputFormat::Json => Self::from_json(&text),
        }
    }
}

fn parse_header(line: &str) -> Result<Dims, CoreError> {
    let toks: Vec<&str> = line.split(',').collect();
    if toks.first() != Some(&"t") || toks.last() != Some(&"E") {
        return Err(CoreError::Parse(format!("bad header `{line}`")));
    }
    let mut i = 1usize;
    let mut count = |prefix: &str| {
        let mut n = 0usize;
        while i + 1 < toks.len() && toks[i] == format!("{prefix}{}", n + 1) {
            n += 1;
            i += 1;
        }
        n
    };
    let n_x = count("x");
    let n_v = count("f");
    let n_xd = count("xdot");
    let n_fd = count("fdot");
    let n_g = count("p");
    if i != toks.len() - 1 || n_xd != n_x || n_fd != n_v {
        return Err(CoreError::Parse(format!("inconsistent header `{line}`")));
    }
    Ok(Dims {
        n_p: n_x + n_g,
        n_g,
        n_v,
        n_x,
    })
}

// ---------------------------------------------------------------------------
// Integration drivers
// ---------------------------------------------------------------------------

fn integrate_vector<F>(cfg: &SimConfig, rhs: F, y0: &[f64]) -> Result<IntegrationOutput, CoreError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, CoreError>,
{
    match cfg.integrator {
        IntegratorKind::Rk4 => integrate_fixed(rhs, y0, 0.0, cfg.t_final, cfg.dt),
        IntegratorKind::Rkf45 => integrate_adaptive(rhs, y0, 0.0, cfg.t_final, cfg.dt, cfg.tol),
    }
}

/// Integrates the reduced equations of motion from `initial` on the
/// configured grid and assembles the trajectory with per-row energies.
pub fn integrate_reduced<M: Model>(
    m: &M,
    initial: &ReducedState,
    cfg: &SimConfig,
) -> Result<Trajectory, CoreError> {
    let d = m.dims();
    initial.check_dims(d)?;
    let rhs = |_t: f64, y: &[f64]| {
        let s = ReducedState::from_vec(d, y)?;
        reduced_rhs(m, &s)
    };
    let out = integrate_vector(cfg, rhs, &initial.to_vec())?;
    let mut states = Vec::with_capacity(out.states.len());
    let mut energies = Vec::with_capacity(out.states.len());
    for y in &out.states {
        let s = ReducedState::from_vec(d, y)?;
        energies.push(energy(m, &s)?);
        states.push(s);
    }
    let traj = Trajectory {
        model: m.name().to_string(),
        dims: d,
        config: cfg.echo(),
        times: out.times,
        states,
        energies,
        truncated: out.truncated,
    };
    traj.validate()?;
    Ok(traj)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

/// Verification sweep over seeded random points: algebra residuals,
/// Killing-bracket consistency, chart round trips, projector and field
/// identities, the Christoffel identity suite, derivative cross-checks, and
/// metric positivity. Pass/fail is recorded per entry; the caller decides
/// what a failure means for the process.
pub fn run_check(cfg: &SimConfig) -> Result<CheckReport, CoreError> {
    let model = instantiate(&cfg.model, &cfg.params)?;
    let points = sample_points(&model, cfg.samples, cfg.seed)?;
    let mut report = CheckReport::new(model.name(), cfg.samples, cfg.seed);

    let (anti, jacobi) = lie_residuals(model.lie());
    report.record("lie_antisymmetry", 1e-12, anti, &[]);
    report.record("lie_jacobi", 1e-12, jacobi, &[]);

    let qs: Vec<Vec<f64>> = points
        .iter()
        .map(|(x, _)| model.section::<f64>(x))
        .collect();
    let fs: Vec<Vec<f64>> = points.iter().map(|(_, f)| f.clone()).collect();
    report.record(
        "killing_bracket_p",
        1e-8,
        killing_consistency(model.lie(), &KillingPMap(&model), &qs)?,
        &[],
    );
    report.record(
        "killing_bracket_v",
        1e-8,
        killing_consistency(model.lie(), &KillingVMap(&model), &fs)?,
        &[],
    );

    let elements = sample_chart_elements(model.chart(), cfg.samples.min(50), cfg.seed ^ 0xc2b2);
    let chart = model.chart();
    let mut double_inv = 0.0f64;
    let mut inv_identity = 0.0f64;
    for a in &elements {
        let inv = chart.inverse(a);
        let back = chart.inverse(&inv);
        for i in 0..a.len() {
            double_inv = double_inv.max((back[i] - a[i]).abs());
        }
        let composed = chart.compose(a, &inv);
        let id = chart.identity();
        for i in 0..a.len() {
            inv_identity = inv_identity.max((composed[i] - id[i]).abs());
        }
    }
    report.record("chart_double_inverse", 1e-12, double_inv, &[]);
    report.record("chart_inverse_composition", 1e-12, inv_identity, &[]);

    // Pointwise geometry: split the sample across threads, merge in chunk
    // order so the report is deterministic.
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .clamp(1, points.len().min(8));
    let chunk_size = points.len().div_ceil(threads);
    let chunk_reports: Vec<Result<CheckReport, CoreError>> = std::thread::scope(|scope| {
        let model = &model;
        let handles: Vec<_> = points
            .chunks(chunk_size)
            .map(|chunk| scope.spawn(move || point_checks(model, chunk, cfg.check_tol)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("check worker panicked"))
            .collect()
    });
    for chunk in chunk_reports {
        report.absorb(&chunk?);
    }

    if let Some(path) = &cfg.output {
        std::fs::write(path, report.to_json())
            .map_err(|e| CoreError::Config(format!("cannot write `{}`: {e}", path.display())))?;
    }
    Ok(report)
}

/// Residual of positive definiteness: how far the smallest eigenvalue dips
/// below zero.
fn pd_defect(m: &Mat<f64>) -> f64 {
    sym_eigenvalues(m)
        .into_iter()
        .fold(0.0f64, |worst, ev| worst.max(-ev))
}

fn point_checks(
    model: &BuiltinModel,
    chunk: &[(Vec<f64>, Vec<f64>)],
    tol: f64,
) -> Result<CheckReport, CoreError> {
    let mut report = CheckReport::new(model.name(), chunk.len(), 0);
    for (x, f) in chunk {
        let mut point = x.clone();
        point.extend_from_slice(f);
        let g = GeometryPoint::new(model, x, f)?;

        for (name, resid) in projector_checks(&g) {
            report.record(name, tol, resid, &point);
        }
        for (name, resid) in field_checks(model, x, f)? {
            report.record(name, tol, resid, &point);
        }

        let gauge_on_section = model
            .gauge::<f64>(&g.q)
            .iter()
            .fold(0.0f64, |w, v| w.max(v.abs()));
        report.record("gauge_vanishes_on_section", 1e-12, gauge_on_section, &point);

        let n_g = model.dims().n_g;
        let d_inv = g
            .orbit
            .d_upper
            .matmul(&g.orbit.d_lower)
            .max_abs_diff(&Mat::identity(n_g));
        report.record("orbit_metric_inverse", 1e-12, d_inv, &point);

        report.record("metric_p_positive", 0.0, pd_defect(&g.g_p), &point);
        report.record("metric_v_positive", 0.0, pd_defect(&g.g_v), &point);
        report.record(
            "orbit_metric_positive",
            0.0,
            pd_defect(&g.orbit.d_lower),
            &point,
        );
        report.record("base_metric_positive", 0.0, pd_defect(&g.h), &point);
        report.record(
            "block_metric_positive",
            0.0,
            pd_defect(&g.block.lower),
            &point,
        );

        // Dual-number derivatives against central differences, per map.
        let mut w = g.q.clone();
        w.extend_from_slice(f);
        for (name, map) in fd_checkable_maps(model) {
            let input: &[f64] = match name {
                "metric_p" | "killing_p" | "gauge" => &g.q,
                "metric_v" | "killing_v" => f,
                "section" => x,
                "potential" => &w,
                other => {
                    return Err(CoreError::Config(format!(
                        "no input rule for checkable map `{other}`"
                    )))
                }
            };
            let deviation = map.fd_deviation(input, 1e-5)?;
            report.record(
                match name {
                    "metric_p" => "derivative_metric_p",
                    "metric_v" => "derivative_metric_v",
                    "killing_p" => "derivative_killing_p",
                    "killing_v" => "derivative_killing_v",
                    "gauge" => "derivative_gauge",
                    "section" => "derivative_section",
                    _ => "derivative_potential",
                },
                1e-6,
                deviation,
                &point,
            );
        }
    }
    report.absorb(&identity_suite(model, chunk, tol)?);
    Ok(report)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Integrates the reduced dynamics per the configuration and writes the
/// trajectory when an output path is set.
pub fn run_simulate(cfg: &SimConfig) -> Result<Trajectory, CoreError> {
    let model = instantiate(&cfg.model, &cfg.params)?;
    let initial = cfg.initial_state(&model)?;
    log::info!(
        "simulating `{}` to t = {} with {} at dt = {}",
        cfg.model,
        cfg.t_final,
        cfg.integrator.as_str(),
        cfg.dt
    );
    let traj = integrate_reduced(&model, &initial, cfg)?;
    if let Some(reason) = &traj.truncated {
        log::warn!("run stopped early: {reason}");
    }
    if let Some(path) = &cfg.output {
        traj.save(path, cfg.format)?;
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

/// Outcome of a reduced-versus-full cross-validation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub model: String,
    /// Output rows actually compared (fewer than requested when a run was
    /// truncated).
    pub rows_compared: usize,
    /// Last compared time.
    pub t_compared: f64,
    /// Max over rows of the base-coordinate gap between the reduced run and
    /// the projected full-space run.
    pub max_dx: f64,
    /// Same for the aligned linear coordinates.
    pub max_df: f64,
    /// Max gap between reduced energy and full-space energy.
    pub max_de: f64,
    pub bound: f64,
    pub pass: bool,
    /// Early-stop note (chart exit, projection failure), if any.
    pub advisory: Option<String>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn default_compare_bound(model: &str) -> f64 {
    match model {
        "abelian_disk" => 1e-7,
        "so3_coupled" => 1e-5,
        _ => 1e-6,
    }
}

/// Runs the same initial data through the reduced equations and through the
/// full-space equations (lifted, then projected back row by row). Returns
/// the report plus both series: the reduced trajectory and the projected
/// full-space run on the shared prefix of the grid.
pub fn compare_detail(
    cfg: &SimConfig,
) -> Result<(ComparisonReport, Trajectory, Trajectory), CoreError> {
    let model = instantiate(&cfg.model, &cfg.params)?;
    let d = model.dims();
    let s0 = cfg.initial_state(&model)?;
    let reduced = integrate_reduced(&model, &s0, cfg)?;

    let w0 = initial_lift(&model, &s0)?;
    let rhs = |_t: f64, y: &[f64]| {
        let w = FullState::from_vec(d, y)?;
        full_rhs(&model, &w)
    };
    let full = integrate_vector(cfg, rhs, &w0.to_vec())?;

    let mut advisory = match (&reduced.truncated, &full.truncated) {
        (Some(r), _) => Some(format!("reduced run truncated: {r}")),
        (None, Some(r)) => Some(format!("full-space run truncated: {r}")),
        (None, None) => None,
    };

    let mut max_dx = 0.0f64;
    let mut max_df = 0.0f64;
    let mut max_de = 0.0f64;
    let mut proj_states = Vec::new();
    let mut proj_energies = Vec::new();
    let common = reduced.times.len().min(full.times.len());
    for k in 0..common {
        let w = FullState::from_vec(d, &full.states[k])?;
        let projected = match project_full_state(&model, &w) {
            Ok((s, _)) => s,
            Err(e) => {
                advisory = Some(format!(
                    "projection failed at t = {}: {e}",
                    reduced.times[k]
                ));
                break;
            }
        };
        let s = &reduced.states[k];
        for i in 0..d.n_x {
            max_dx = max_dx.max((s.x[i] - projected.x[i]).abs());
        }
        for i in 0..d.n_v {
            max_df = max_df.max((s.f[i] - projected.f[i]).abs());
        }
        let e_full = full_energy(&model, &w)?;
        max_de = max_de.max((reduced.energies[k] - e_full).abs());
        proj_states.push(projected);
        proj_energies.push(e_full);
    }
    let rows = proj_states.len();
    if rows == 0 {
        return Err(CoreError::domain(
            "comparison produced no rows; initial data not projectable",
        ));
    }

    let bound = cfg
        .compare_tol
        .unwrap_or_else(|| default_compare_bound(&cfg.model));
    let report = ComparisonReport {
        model: cfg.model.clone(),
        rows_compared: rows,
        t_compared: reduced.times[rows - 1],
        max_dx,
        max_df,
        max_de,
        bound,
        pass: max_dx <= bound && max_df <= bound && max_de <= bound,
        advisory,
    };
    let projected = Trajectory {
        model: reduced.model.clone(),
        dims: d,
        config: reduced.config.clone(),
        times: reduced.times[..rows].to_vec(),
        states: proj_states,
        energies: proj_energies,
        truncated: report.advisory.clone(),
    };
    projected.validate()?;
    Ok((report, reduced, projected))
}

/// [`compare_detail`] with only the report kept, written to the output path
/// when one is configured.
pub fn run_compare(cfg: &SimConfig) -> Result<ComparisonReport, CoreError> {
    let (report, _, _) = compare_detail(cfg)?;
    if let Some(reason) = &report.advisory {
        log::warn!("{reason}");
    }
    if let Some(path) = &cfg.output {
        std::fs::write(path, report.to_json())
            .map_err(|e| CoreError::Config(format!("cannot write `{}`: {e}", path.display())))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    fn small_sim(model: &str, t_final: f64, dt: f64) -> SimConfig {
        PartialConfig {
            model: Some(model.into()),
            t_final: Some(t_final),
            dt: Some(dt),
            samples: Some(6),
            ..Default::default()
        }
        .resolve()
        .unwrap()
    }

    #[test]
    fn config_layering_and_defaults() {
        let file = PartialConfig::from_toml_str(
            r#"
            model = "abelian_disk"
            dt = 0.01
            seed = 7

            [params]
            k = 2.5

            [initial]
            x = [1.5]
            f = [0.2, 0.1]
            xdot = [0.0]
            fdot = [0.1, 0.0]
            p = [0.4]
            "#,
        )
        .unwrap();
        let flags = PartialConfig {
            dt: Some(0.002),
            integrator: Some("rkf45".into()),
            ..Default::default()
        };
        let cfg = flags.or(file).resolve().unwrap();
        assert_eq!(cfg.model, "abelian_disk");
        assert_eq!(cfg.dt, 0.002); // flag wins
        assert_eq!(cfg.seed, 7); // file wins over default
        assert_eq!(cfg.t_final, 10.0); // default
        assert_eq!(cfg.integrator, IntegratorKind::Rkf45);
        assert_eq!(cfg.params.0["k"], 2.5);
        assert_eq!(cfg.initial.as_ref().unwrap().x, vec![1.5]);
    }

    #[test]
    fn config_rejects_bad_input() {
        assert!(PartialConfig::from_toml_str("modle = \"x\"").is_err()); // typo
        assert!(PartialConfig::default().resolve().is_err()); // no model
        let bad_dt = PartialConfig {
            model: Some("abelian_disk".into()),
            dt: Some(0.0),
            ..Default::default()
        };
        assert!(bad_dt.resolve().is_err());
        let bad_fmt = PartialConfig {
            model: Some("abelian_disk".into()),
            format: Some("yaml".into()),
            ..Default::default()
        };
        assert!(bad_fmt.resolve().is_err());
    }

    #[test]
    fn sampling_is_seeded_and_valid() {
        let model = instantiate("so3_coupled", &ModelParams::empty()).unwrap();
        let a = sample_points(&model, 20, 9).unwrap();
        let b = sample_points(&model, 20, 9).unwrap();
        let c = sample_points(&model, 20, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (x, _) in &a {
            assert!(model.section_domain(x));
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let cfg = small_sim("abelian_disk", 0.1, 0.02);
        let traj = run_simulate(&cfg).unwrap();
        assert_eq!(
            trajectory_columns(traj.dims).join(","),
            "t,x1,f1,f2,xdot1,fdot1,fdot2,p1,E"
        );
        let text = traj.write_csv();
        let back = Trajectory::parse_csv(&text).unwrap();
        assert_eq!(bits(&traj.times), bits(&back.times));
        assert_eq!(bits(&traj.energies), bits(&back.energies));
        for (a, b) in traj.states.iter().zip(&back.states) {
            assert_eq!(bits(&a.to_vec()), bits(&b.to_vec()));
        }
        assert_eq!(traj.model, back.model);
        assert_eq!(traj.dims, back.dims);
        assert_eq!(traj.config, back.config);
        // Writing the parsed trajectory reproduces the file byte for byte.
        assert_eq!(text, back.write_csv());
    }

    #[test]
    fn json_round_trip_is_bitwise() {
        let cfg = small_sim("so3_coupled", 0.02, 0.01);
        let traj = run_simulate(&cfg).unwrap();
        let text = traj.to_json();
        let back = Trajectory::from_json(&text).unwrap();
        assert_eq!(bits(&traj.times), bits(&back.times));
        for (a, b) in traj.states.iter().zip(&back.states) {
            assert_eq!(bits(&a.to_vec()), bits(&b.to_vec()));
        }
        assert_eq!(text, back.to_json());
    }

    #[test]
    fn identical_config_gives_identical_bytes() {
        let cfg = small_sim("abelian_disk", 0.1, 0.02);
        let a = run_simulate(&cfg).unwrap().write_csv();
        let b = run_simulate(&cfg).unwrap().write_csv();
        assert_eq!(a, b);
        let aj = run_simulate(&cfg).unwrap().to_json();
        let bj = run_simulate(&cfg).unwrap().to_json();
        assert_eq!(aj, bj);
    }

    #[test]
    fn check_sweep_passes_on_builtin_models() {
        for name in ["abelian_disk", "so3_coupled"] {
            let cfg = small_sim(name, 1.0, 0.1);
            let report = run_check(&cfg).unwrap();
            assert!(
                report.pass,
                "{name}: {:?}",
                report
                    .entries
                    .iter()
                    .filter(|e| !e.pass)
                    .map(|e| (&e.name, e.max_residual))
                    .collect::<Vec<_>>()
            );
            // The sweep exercises every layer.
            for expected in [
                "killing_bracket_p",
                "projector_n_idempotent",
                "connection_reproduces_generators",
                "identity_a1",
                "derivative_potential",
                "block_metric_positive",
            ] {
                assert!(
                    report.entries.iter().any(|e| e.name == expected),
                    "missing entry {expected}"
                );
            }
        }
    }

    #[test]
    fn impossible_tolerance_fails_the_sweep() {
        let mut cfg = small_sim("abelian_disk", 1.0, 0.1);
        cfg.check_tol = 1e-18;
        let report = run_check(&cfg).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn compare_validates_reduction_on_abelian_model() {
        let cfg = small_sim("abelian_disk", 0.5, 1e-3);
        let report = run_compare(&cfg).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.advisory.is_none());
        assert_eq!(report.rows_compared, 501);
        assert!(report.max_dx < 1e-7);
        assert!(report.max_df < 1e-7);
        assert!(report.max_de < 1e-7);
    }

    #[test]
    fn mismatched_initial_data_is_detected() {
        // Integrating the reduced equations from a sign-flipped momentum
        // while the full run uses the true lift must blow past the bound:
        // the comparison has teeth.
        let cfg = small_sim("abelian_disk", 0.5, 1e-3);
        let model = instantiate(&cfg.model, &cfg.params).unwrap();
        let mut s0 = cfg.initial_state(&model).unwrap();
        let reduced_true = integrate_reduced(&model, &s0, &cfg).unwrap();
        s0.p[0] = -s0.p[0];
        let reduced_flipped = integrate_reduced(&model, &s0, &cfg).unwrap();
        let gap = reduced_true
            .states
            .iter()
            .zip(&reduced_flipped.states)
            .map(|(a, b)| (a.f[0] - b.f[0]).abs().max((a.f[1] - b.f[1]).abs()))
            .fold(0.0f64, f64::max);
        assert!(gap > 1e-2, "momentum sign flip changed nothing: {gap:.3e}");
    }

    #[test]
    fn equilibrium_stays_fixed() {
        // Zero velocity, zero momentum, at the potential minimum (origin of
        // the reduced coordinates): nothing may move.
        let cfg = PartialConfig::from_toml_str(
            r#"
            model = "so3_coupled"
            t_final = 1.0
            dt = 0.01

            [initial]
            x = [0.0, 0.0]
            f = [0.0, 0.0, 0.0]
            xdot = [0.0, 0.0]
            fdot = [0.0, 0.0, 0.0]
            p = [0.0, 0.0, 0.0]
            "#,
        )
        .unwrap()
        .resolve()
        .unwrap();
        let traj = run_simulate(&cfg).unwrap();
        for s in &traj.states {
            assert!(s.x.iter().all(|v| v.abs() < 1e-10));
            assert!(s.f.iter().all(|v| v.abs() < 1e-10));
            assert!(s.p.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn header_parser_rejects_mangled_columns() {
        assert!(parse_header("t,x1,f1,xdot1,fdot1,p1,E").is_ok());
        assert!(parse_header("t,x1,xdot1,fdot1,p1,E").is_err()); // fdot without f
        assert!(parse_header("x1,f1,xdot1,fdot1,p1,E").is_err()); // no t
        assert!(parse_header("t,x1,f1,xdot1,fdot1,p1").is_err()); // no E
        let bad = Trajectory::parse_csv("t,x1,f1,xdot1,fdot1,p1,E\n0,1,2,3\n");
        assert!(bad.is_err()); // short row
    }
}
