//! Simulation configuration: a TOML file with the sections `[mesh]`,
//! `[scheme]`, `[noise]`, `[initial]`, `[run]` and `[output]`.
//!
//! Every field is optional; omitted fields take documented defaults and are
//! listed in the echo of the resolved configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sllg_core::rotation::NoiseCoefficients;
use sllg_core::{Mesh, SchemeParams, Vec3};

use crate::error::SimError;
use crate::initial::InitialData;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    mesh: RawMesh,
    #[serde(default)]
    scheme: RawScheme,
    #[serde(default)]
    noise: RawNoise,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    dim: Option<usize>,
    divisions: Option<usize>,
    file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    theta: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    steps: Option<usize>,
    solver_tol: Option<f64>,
    solver_max_iter: Option<usize>,
    guard_constant: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    presets: Option<Vec<String>>,
    vectors: Option<Vec<[f64; 3]>>,
    amplitude: Option<f64>,
    q: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    preset: Option<String>,
    direction: Option<[f64; 3]>,
    amplitude: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    mode: Option<String>,
    seed: Option<u64>,
    samples: Option<usize>,
    levels: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    snapshot_stride: Option<usize>,
    diagnostics: Option<bool>,
    path_dump: Option<bool>,
    z_dump: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Structured { dim: usize, divisions: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    Single,
    MonteCarlo,
    Refinement,
}

impl StudyMode {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "single" => Some(StudyMode::Single),
            "monte-carlo" => Some(StudyMode::MonteCarlo),
            "refinement" => Some(StudyMode::Refinement),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StudyMode::Single => "single",
            StudyMode::MonteCarlo => "monte-carlo",
            StudyMode::Refinement => "refinement",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub presets: Vec<String>,
    pub vectors: Vec<Vec3>,
    pub amplitude: f64,
    pub q: usize,
}

pub const NOISE_PRESETS: [&str; 5] = [
    "zero",
    "constant-z",
    "constant-x",
    "pair-noncommuting",
    "linear-gradient",
];

impl NoiseSpec {
    /// Coefficients g_1..g_q; constant vectors are scaled by the amplitude too.
    pub fn coefficients(&self) -> NoiseCoefficients {
        let a = self.amplitude;
        let mut fields = Vec::new();
        for p in &self.presets {
            let c = match p.as_str() {
                "constant-z" => NoiseCoefficients::constant_z(a),
                "constant-x" => NoiseCoefficients::constant_x(a),
                "pair-noncommuting" => NoiseCoefficients::pair_noncommuting(a),
                "linear-gradient" => NoiseCoefficients::linear_gradient(a),
                _ => NoiseCoefficients::zero(1).expect("q = 1"),
            };
            fields.extend(c.fields().iter().cloned());
        }
        if !self.vectors.is_empty() {
            let scaled: Vec<Vec3> = self.vectors.iter().map(|v| v * a).collect();
            fields.extend(
                NoiseCoefficients::constant(&scaled)
                    .expect("nonempty")
                    .fields()
                    .iter()
                    .cloned(),
            );
        }
        if fields.is_empty() {
            return NoiseCoefficients::zero(self.q).expect("q >= 1");
        }
        NoiseCoefficients::new(fields).expect("nonempty")
    }

    /// True when every g_i vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
            || (self.presets.iter().all(|p| p == "zero")
                && self.vectors.iter().all(|v| v.norm() == 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub snapshot_stride: usize,
    pub diagnostics: bool,
    pub path_dump: bool,
    pub z_dump: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub mesh: MeshSource,
    pub lambda1: f64,
    pub lambda2: f64,
    pub theta: f64,
    pub horizon: f64,
    pub steps: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub guard_constant: f64,
    pub noise: NoiseSpec,
    pub initial: InitialData,
    pub mode: StudyMode,
    pub seed: u64,
    pub samples: usize,
    pub levels: usize,
    pub output: OutputSpec,
    /// Dotted names of fields that were not given and took their default.
    pub defaulted: Vec<String>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub theta: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub levels: Option<usize>,
    pub out: Option<PathBuf>,
    pub snapshots: Option<usize>,
}

struct Defaults<'a>(&'a mut Vec<String>);

impl Defaults<'_> {
    fn take<T>(&mut self, v: Option<T>, name: &str, default: T) -> T {
        v.unwrap_or_else(|| {
            self.0.push(name.to_owned());
            default
        })
    }
}

fn range_error(field: &str, msg: impl std::fmt::Display) -> SimError {
    SimError::Config(format!("{field}: {msg}"))
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<SimulationConfig, SimError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")), overrides)
}

/// Parse and validate configuration text; relative mesh files resolve against `base`.
pub fn parse_config(
    text: &str,
    base: &Path,
    overrides: &Overrides,
) -> Result<SimulationConfig, SimError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_owned();
        match e.span() {
            Some(span) => {
                let (line, column) = line_col(text, span.start);
                SimError::Parse { line, column, msg }
            }
            None => SimError::Config(msg),
        }
    })?;
    let mut defaulted = Vec::new();
    let mut d = Defaults(&mut defaulted);

    let mesh = match raw.mesh.file {
        Some(f) => {
            if raw.mesh.dim.is_some() || raw.mesh.divisions.is_some() {
                return Err(range_error(
                    "mesh.file",
                    "cannot be combined with mesh.dim or mesh.divisions",
                ));
            }
            MeshSource::File(if f.is_absolute() { f } else { base.join(f) })
        }
        None => {
            let dim = d.take(raw.mesh.dim, "mesh.dim", 2);
            let divisions = d.take(raw.mesh.divisions, "mesh.divisions", 4);
            if dim != 2 && dim != 3 {
                return Err(range_error(
                    "mesh.dim",
                    format!("must be 2 or 3, got {dim}"),
                ));
            }
            if divisions == 0 {
                return Err(range_error("mesh.divisions", "must be at least 1"));
            }
            MeshSource::Structured { dim, divisions }
        }
    };

    let s = raw.scheme;
    let lambda1 = d.take(s.lambda1, "scheme.lambda1", 1.0);
    let lambda2 = d.take(s.lambda2, "scheme.lambda2", 1.0);
    let theta = match overrides.theta {
        Some(t) => t,
        None => d.take(s.theta, "scheme.theta", 1.0),
    };
    let horizon = d.take(s.horizon, "scheme.T", 1.0);
    let steps = d.take(s.steps, "scheme.steps", 100);
    let solver_tol = d.take(s.solver_tol, "scheme.solver_tol", 1e-12);
    let solver_max_iter = d.take(s.solver_max_iter, "scheme.solver_max_iter", 2000);
    let guard_constant = d.take(s.guard_constant, "scheme.guard_constant", 1.0);
    if !(lambda1.is_finite() && lambda1 != 0.0) {
        return Err(range_error(
            "scheme.lambda1",
            format!("must be finite and nonzero, got {lambda1}"),
        ));
    }
    if !(lambda2.is_finite() && lambda2 > 0.0) {
        return Err(range_error(
            "scheme.lambda2",
            format!("must be positive, got {lambda2}"),
        ));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(range_error(
            "scheme.theta",
            format!("must lie in [0, 1], got {theta}"),
        ));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(range_error(
            "scheme.T",
            format!("must be positive, got {horizon}"),
        ));
    }
    if steps == 0 {
        return Err(range_error("scheme.steps", "must be at least 1"));
    }
    if !(solver_tol > 0.0 && solver_tol < 1.0) {
        return Err(range_error(
            "scheme.solver_tol",
            format!("must lie in (0, 1), got {solver_tol}"),
        ));
    }
    if solver_max_iter == 0 {
        return Err(range_error("scheme.solver_max_iter", "must be at least 1"));
    }
    if !(guard_constant.is_finite() && guard_constant > 0.0) {
        return Err(range_error(
            "scheme.guard_constant",
            format!("must be positive, got {guard_constant}"),
        ));
    }

    let n = raw.noise;
    let presets = d.take(n.presets, "noise.presets", vec!["constant-z".to_owned()]);
    for p in &presets {
        if !NOISE_PRESETS.contains(&p.as_str()) {
            return Err(range_error(
                "noise.presets",
                format!("unknown preset `{p}` (known: {})", NOISE_PRESETS.join(", ")),
            ));
        }
    }
    let vectors: Vec<Vec3> = n
        .vectors
        .unwrap_or_default()
        .into_iter()
        .map(Vec3::from)
        .collect();
    if vectors.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
        return Err(range_error("noise.vectors", "entries must be finite"));
    }
    let amplitude = d.take(n.amplitude, "noise.amplitude", 1.0);
    if !amplitude.is_finite() {
        return Err(range_error("noise.amplitude", "must be finite"));
    }
    let implied_q: usize = presets
        .iter()
        .map(|p| if p == "pair-noncommuting" { 2 } else { 1 })
        .sum::<usize>()
        + vectors.len();
    let q = match n.q {
        Some(0) => return Err(range_error("noise.q", "must be at least 1")),
        Some(q) if implied_q > 0 && q != implied_q => {
            return Err(range_error(
                "noise.q",
                format!("{q} does not match the {implied_q} listed coefficients"),
            ))
        }
        Some(q) => q,
        None => implied_q.max(1),
    };
    let noise = NoiseSpec {
        presets,
        vectors,
        amplitude,
        q,
    };

    let i = raw.initial;
    let preset = d.take(i.preset, "initial.preset", "neumann-wave".to_owned());
    let initial = match preset.as_str() {
        "uniform" => {
            let dir = Vec3::from(d.take(i.direction, "initial.direction", [0.0, 0.0, 1.0]));
            if !(dir.norm() > 0.0 && dir.iter().all(|x| x.is_finite())) {
                return Err(range_error(
                    "initial.direction",
                    "must be a nonzero finite vector",
                ));
            }
            InitialData::Uniform(dir.normalize())
        }
        "neumann-wave" => {
            let a = d.take(i.amplitude, "initial.amplitude", 1.2);
            if !a.is_finite() {
                return Err(range_error("initial.amplitude", "must be finite"));
            }
            InitialData::NeumannWave { amplitude: a }
        }
        "hedgehog-bump" => InitialData::HedgehogBump,
        other => {
            return Err(range_error(
                "initial.preset",
                format!("unknown preset `{other}` (known: uniform, neumann-wave, hedgehog-bump)"),
            ))
        }
    };

    let r = raw.run;
    let mode_name = d.take(r.mode, "run.mode", "single".to_owned());
    let mode = StudyMode::parse(&mode_name).ok_or_else(|| {
        range_error(
            "run.mode",
            format!("unknown mode `{mode_name}` (known: single, monte-carlo, refinement)"),
        )
    })?;
    let seed = match overrides.seed {
        Some(s) => s,
        None => d.take(r.seed, "run.seed", 0),
    };
    let samples = match overrides.samples {
        Some(s) => s,
        None => d.take(
            r.samples,
            "run.samples",
            if mode == StudyMode::MonteCarlo { 2 } else { 1 },
        ),
    };
    let levels = match overrides.levels {
        Some(l) => l,
        None => d.take(r.levels, "run.levels", 3),
    };
    if samples == 0 {
        return Err(range_error("run.samples", "must be at least 1"));
    }
    if mode == StudyMode::MonteCarlo && samples < 2 {
        return Err(range_error(
            "run.samples",
            format!("monte-carlo mode needs at least 2 samples, got {samples}"),
        ));
    }
    if mode == StudyMode::Refinement {
        if levels < 3 {
            return Err(range_error(
                "run.levels",
                format!("refinement needs at least 3 levels, got {levels}"),
            ));
        }
        if levels > 12 {
            return Err(range_error(
                "run.levels",
                format!("at most 12 levels are supported, got {levels}"),
            ));
        }
        if matches!(mesh, MeshSource::File(_)) {
            return Err(range_error(
                "mesh.file",
                "refinement mode needs a structured mesh",
            ));
        }
    }

    let o = raw.output;
    let dir = match &overrides.out {
        Some(p) => p.clone(),
        None => d.take(o.dir, "output.dir", PathBuf::from("out")),
    };
    let snapshot_stride = match overrides.snapshots {
        Some(s) => s,
        None => d.take(o.snapshot_stride, "output.snapshot_stride", 0),
    };
    let output = OutputSpec {
        dir,
        snapshot_stride,
        diagnostics: d.take(o.diagnostics, "output.diagnostics", true),
        path_dump: d.take(o.path_dump, "output.path_dump", false),
        z_dump: d.take(o.z_dump, "output.z_dump", false),
    };

    let cfg = SimulationConfig {
        mesh,
        lambda1,
        lambda2,
        theta,
        horizon,
        steps,
        solver_tol,
        solver_max_iter,
        guard_constant,
        noise,
        initial,
        mode,
        seed,
        samples,
        levels,
        output,
        defaulted,
    };
    cfg.check_regime_all_levels()?;
    Ok(cfg)
}

impl SimulationConfig {
    /// Number of refinement levels actually run (1 outside refinement mode).
    pub fn level_count(&self) -> usize {
        if self.mode == StudyMode::Refinement {
            self.levels
        } else {
            1
        }
    }

    /// Divisions and step count at refinement level `l` (both doubled per level).
    pub fn level_resolution(&self, l: usize) -> (Option<usize>, usize) {
        let div = match self.mesh {
            MeshSource::Structured { divisions, .. } => Some(divisions << l),
            MeshSource::File(_) => None,
        };
        (div, self.steps << l)
    }

    /// Mesh at refinement level `l`.
    pub fn build_mesh(&self, l: usize) -> Result<Mesh, SimError> {
        match &self.mesh {
            MeshSource::Structured { dim, divisions } => {
                Ok(Mesh::structured(*dim, divisions << l)?)
            }
            MeshSource::File(p) => {
                let f = std::fs::File::open(p).map_err(|e| {
                    SimError::Config(format!("mesh.file: cannot open {}: {e}", p.display()))
                })?;
                Mesh::read_text(std::io::BufReader::new(f))
                    .map_err(|e| SimError::Config(format!("mesh.file {}: {e}", p.display())))
            }
        }
    }

    pub fn scheme_params(&self, l: usize) -> Result<SchemeParams, SimError> {
        let (_, steps) = self.level_resolution(l);
        let mut p = SchemeParams::new(self.lambda1, self.lambda2, self.theta, self.horizon, steps)?;
        p.solver.tol = self.solver_tol;
        p.solver.max_iter = self.solver_max_iter;
        p.guard_constant = self.guard_constant;
        Ok(p)
    }

    fn check_regime_all_levels(&self) -> Result<(), SimError> {
        for l in 0..self.level_count() {
            let h = match self.mesh {
                MeshSource::Structured { dim, divisions } => {
                    (dim as f64).sqrt() / (divisions << l) as f64
                }
                // file meshes are checked once loaded
                MeshSource::File(_) => continue,
            };
            self.scheme_params(l)?
                .check_regime(h)
                .map_err(|e| SimError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Resolved configuration as TOML, preceded by a comment block listing defaulted fields.
    pub fn echo(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        if self.defaulted.is_empty() {
            s.push_str("# defaulted fields: none\n");
        } else {
            s.push_str("# defaulted fields:\n");
            for f in &self.defaulted {
                writeln!(s, "#   {f}").unwrap();
            }
        }
        s.push_str("\n[mesh]\n");
        match &self.mesh {
            MeshSource::Structured { dim, divisions } => {
                writeln!(s, "dim = {dim}\ndivisions = {divisions}").unwrap();
            }
            MeshSource::File(p) => {
                writeln!(s, "file = {:?}", p.display().to_string()).unwrap();
            }
        }
        writeln!(
            s,
            "\n[scheme]\nlambda1 = {:?}\nlambda2 = {:?}\ntheta = {:?}\nT = {:?}\nsteps = {}\nsolver_tol = {:?}\nsolver_max_iter = {}\nguard_constant = {:?}",
            self.lambda1,
            self.lambda2,
            self.theta,
            self.horizon,
            self.steps,
            self.solver_tol,
            self.solver_max_iter,
            self.guard_constant
        )
        .unwrap();
        let presets: Vec<String> = self
            .noise
            .presets
            .iter()
            .map(|p| format!("{p:?}"))
            .collect();
        let vectors: Vec<String> = self
            .noise
            .vectors
            .iter()
            .map(|v| format!("[{:?}, {:?}, {:?}]", v[0], v[1], v[2]))
            .collect();
        writeln!(
            s,
            "\n[noise]\npresets = [{}]\nvectors = [{}]\namplitude = {:?}\nq = {}",
            presets.join(", "),
            vectors.join(", "),
            self.noise.amplitude,
            self.noise.q
        )
        .unwrap();
        s.push_str("\n[initial]\n");
        match self.initial {
            InitialData::Uniform(d) => writeln!(
                s,
                "preset = \"uniform\"\ndirection = [{:?}, {:?}, {:?}]",
                d[0], d[1], d[2]
            )
            .unwrap(),
            InitialData::NeumannWave { amplitude } => {
                writeln!(s, "preset = \"neumann-wave\"\namplitude = {amplitude:?}").unwrap()
            }
            InitialData::HedgehogBump => s.push_str("preset = \"hedgehog-bump\"\n"),
        }
        writeln!(
            s,
            "\n[run]\nmode = {:?}\nseed = {}\nsamples = {}\nlevels = {}",
            self.mode.name(),
            self.seed,
            self.samples,
            self.levels
        )
        .unwrap();
        writeln!(
            s,
            "\n[output]\ndir = {:?}\nsnapshot_stride = {}\ndiagnostics = {}\npath_dump = {}\nz_dump = {}",
            self.output.dir.display().to_string(),
            self.output.snapshot_stride,
            self.output.diagnostics,
            self.output.path_dump,
            self.output.z_dump
        )
        .unwrap();
        s
    }
}
