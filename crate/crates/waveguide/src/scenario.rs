//! Experiment descriptions: plain-text config format, bundled presets, run
//! orchestration (forward synthesis -> noise -> localization) and manifests.
//!
//! The config format is a flat list of named sections holding `key = value`
//! lines; every parse error carries a line number. A run manifest is itself
//! a valid config (plus a `run` metadata section), so any run can be
//! reproduced from its manifest alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{BoxRegion, ConfigError, InclusionSpec, WaveguideConfig};
use crate::forward::{
    add_noise, born_iterate, scattered_field, ForwardError, InteractionKernel, ReceiverSet,
    ScatterRecord, VolumeMesh,
};
use crate::locator::{multilevel_locate, LocateResult, LocatorError, SamplingRegion};
use crate::modal::{find_modes, ModalBasis, ModalError};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("missing section [{0}]")]
    MissingSection(String),
    #[error("missing key '{key}' in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("bad value for '{key}' at line {line}: {msg}")]
    BadValue { key: String, line: usize, msg: String },
    #[error("source {0:?} lies inside the inclusion box")]
    SourceInsideInclusion([f64; 3]),
    #[error("sampling region depth range outside the waveguide")]
    RegionOutsideWaveguide,
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Locator(#[from] LocatorError),
    #[error(transparent)]
    Modal(#[from] ModalError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

// ---------------------------------------------------------------------------
// raw document

#[derive(Debug, Clone)]
pub struct RawEntry {
    pub key: String,
    pub values: Vec<String>,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct RawSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<RawEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct RawDoc {
    pub sections: Vec<RawSection>,
}

/// Parse the section/key-value surface syntax.
pub fn parse_doc(text: &str) -> Result<RawDoc, ScenarioError> {
    let mut doc = RawDoc::default();
    let mut open: Option<RawSection> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_suffix('{') {
            if open.is_some() {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    msg: "nested sections are not supported".into(),
                });
            }
            let name = name.trim();
            if name.is_empty() || name.split_whitespace().count() != 1 {
                return Err(ScenarioError::Parse {
                    line: line_no,
                    msg: "section header must be a single name followed by '{'".into(),
                });
            }
            open = Some(RawSection { name: name.to_string(), line: line_no, entries: Vec::new() });
            continue;
        }
        if line == "}" {
            match open.take() {
                Some(sec) => doc.sections.push(sec),
                None => {
                    return Err(ScenarioError::Parse {
                        line: line_no,
                        msg: "'}' without an open section".into(),
                    })
                }
            }
            continue;
        }
        let section = open.as_mut().ok_or_else(|| ScenarioError::Parse {
            line: line_no,
            msg: "key-value line outside any section".into(),
        })?;
        let (key, rest) = line.split_once('=').ok_or_else(|| ScenarioError::Parse {
            line: line_no,
            msg: "expected 'key = value'".into(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ScenarioError::Parse { line: line_no, msg: "empty key".into() });
        }
        let values: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
        if values.is_empty() {
            return Err(ScenarioError::Parse {
                line: line_no,
                msg: format!("key '{key}' has no value"),
            });
        }
        section.entries.push(RawEntry { key: key.to_string(), values, line: line_no });
    }
    if let Some(sec) = open {
        return Err(ScenarioError::Parse {
            line: sec.line,
            msg: format!("section '{}' never closed", sec.name),
        });
    }
    Ok(doc)
}

impl RawDoc {
    fn section(&self, name: &str) -> Result<&RawSection, ScenarioError> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| ScenarioError::MissingSection(name.to_string()))
    }
}

impl RawSection {
    fn entry(&self, key: &str) -> Result<&RawEntry, ScenarioError> {
        self.entries.iter().find(|e| e.key == key).ok_or_else(|| ScenarioError::MissingKey {
            section: self.name.clone(),
            key: key.to_string(),
        })
    }

    fn floats(&self, key: &str, n: usize) -> Result<Vec<f64>, ScenarioError> {
        let e = self.entry(key)?;
        if e.values.len() != n {
            return Err(ScenarioError::BadValue {
                key: key.to_string(),
                line: e.line,
                msg: format!("expected {n} numbers, got {}", e.values.len()),
            });
        }
        e.values
            .iter()
            .map(|v| {
                v.parse::<f64>().map_err(|_| ScenarioError::BadValue {
                    key: key.to_string(),
                    line: e.line,
                    msg: format!("'{v}' is not a number"),
                })
            })
            .collect()
    }

    fn float(&self, key: &str) -> Result<f64, ScenarioError> {
        Ok(self.floats(key, 1)?[0])
    }

    fn integer(&self, key: &str) -> Result<u64, ScenarioError> {
        let e = self.entry(key)?;
        if e.values.len() != 1 {
            return Err(ScenarioError::BadValue {
                key: key.to_string(),
                line: e.line,
                msg: "expected one integer".into(),
            });
        }
        e.values[0].parse::<u64>().map_err(|_| ScenarioError::BadValue {
            key: key.to_string(),
            line: e.line,
            msg: format!("'{}' is not a nonnegative integer", e.values[0]),
        })
    }

    fn triple(&self, key: &str) -> Result<[f64; 3], ScenarioError> {
        let v = self.floats(key, 3)?;
        Ok([v[0], v[1], v[2]])
    }
}

// ---------------------------------------------------------------------------
// scenario

/// A complete, runnable experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub label: String,
    pub waveguide: WaveguideConfig,
    pub inclusion: InclusionSpec,
    pub source: [f64; 3],
    pub receivers: Vec<[f64; 3]>,
    pub noise_delta: f64,
    pub seed: u64,
    pub forward_delta: f64,
    pub forward_eps: f64,
    pub forward_max_iter: usize,
    pub region: SamplingRegion,
    pub modes_tol: f64,
}

impl Scenario {
    pub fn from_text(text: &str) -> Result<Self, ScenarioError> {
        let doc = parse_doc(text)?;

        let wg = doc.section("waveguide")?;
        let c = wg.triple("c")?;
        let n = wg.triple("n")?;
        let rho = wg.triple("rho")?;
        let waveguide = WaveguideConfig::new(
            wg.float("h")?,
            wg.float("d1")?,
            wg.float("d2")?,
            rho,
            wg.float("f")?,
            c,
            n,
        )?;

        let inc = doc.section("inclusion")?;
        let region_box = BoxRegion::new(inc.triple("box_lo")?, inc.triple("box_hi")?)?;
        let inclusion =
            InclusionSpec::new(&waveguide, region_box, inc.float("q4")?, inc.float("rho4")?)?;

        let source = doc.section("source")?.triple("position")?;

        let rsec = doc.section("receivers")?;
        let mut receivers = Vec::new();
        for e in &rsec.entries {
            if e.key != "point" {
                return Err(ScenarioError::BadValue {
                    key: e.key.clone(),
                    line: e.line,
                    msg: "receivers section accepts only 'point = x y z' lines".into(),
                });
            }
            let nums: Result<Vec<f64>, _> = e.values.iter().map(|s| s.parse::<f64>()).collect();
            let nums = nums.map_err(|_| ScenarioError::BadValue {
                key: "point".into(),
                line: e.line,
                msg: "expected three numbers".into(),
            })?;
            if nums.len() != 3 {
                return Err(ScenarioError::BadValue {
                    key: "point".into(),
                    line: e.line,
                    msg: format!("expected 3 numbers, got {}", nums.len()),
                });
            }
            receivers.push([nums[0], nums[1], nums[2]]);
        }

        let noise = doc.section("noise")?;
        let fwd = doc.section("forward")?;
        let loc = doc.section("locator")?;
        let modes = doc.section("modes")?;

        let region = SamplingRegion {
            lo: loc.triple("box_lo")?,
            hi: loc.triple("box_hi")?,
            s0: loc.float("s0")?,
            cutoff: loc.float("cutoff")?,
            levels: loc.integer("levels")? as usize,
            budget: loc.integer("budget")? as usize,
        };

        let label = doc
            .sections
            .iter()
            .find(|s| s.name == "run")
            .and_then(|s| s.entry("label").ok())
            .map(|e| e.values.join("-"))
            .unwrap_or_else(|| "run".to_string());

        let scenario = Scenario {
            label,
            waveguide,
            inclusion,
            source,
            receivers,
            noise_delta: noise.float("delta")?,
            seed: noise.integer("seed")?,
            forward_delta: fwd.float("delta")?,
            forward_eps: fwd.float("eps")?,
            forward_max_iter: fwd.integer("max_iter")? as usize,
            region,
            modes_tol: modes.float("tol")?,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.waveguide.validate()?;
        self.region.validate()?;
        if self.inclusion.region.contains(self.source) {
            return Err(ScenarioError::SourceInsideInclusion(self.source));
        }
        if self.region.lo[2] < 0.0 || self.region.hi[2] > self.waveguide.h {
            return Err(ScenarioError::RegionOutsideWaveguide);
        }
        // receiver constraints checked by ReceiverSet
        ReceiverSet::new(&self.waveguide, &self.inclusion, self.receivers.clone())?;
        Ok(())
    }

    /// Canonical serialization; also the body of the run manifest.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &self.waveguide;
        let _ = writeln!(s, "waveguide {{");
        let _ = writeln!(s, "  h = {}", w.h);
        let _ = writeln!(s, "  d1 = {}", w.d1);
        let _ = writeln!(s, "  d2 = {}", w.d2);
        let _ = writeln!(s, "  f = {}", w.f);
        let _ = writeln!(s, "  c = {} {} {}", w.c[0], w.c[1], w.c[2]);
        let _ = writeln!(s, "  n = {} {} {}", w.n[0], w.n[1], w.n[2]);
        let _ = writeln!(s, "  rho = {} {} {}", w.rho[0], w.rho[1], w.rho[2]);
        let _ = writeln!(s, "}}");
        let b = &self.inclusion.region;
        let _ = writeln!(s, "inclusion {{");
        let _ = writeln!(s, "  box_lo = {} {} {}", b.lo[0], b.lo[1], b.lo[2]);
        let _ = writeln!(s, "  box_hi = {} {} {}", b.hi[0], b.hi[1], b.hi[2]);
        let _ = writeln!(s, "  q4 = {}", self.inclusion.q4);
        let _ = writeln!(s, "  rho4 = {}", self.inclusion.rho4);
        let _ = writeln!(s, "}}");
        let _ = writeln!(s, "source {{");
        let _ = writeln!(s, "  position = {} {} {}", self.source[0], self.source[1], self.source[2]);
        let _ = writeln!(s, "}}");
        let _ = writeln!(s, "receivers {{");
        for r in &self.receivers {
            let _ = writeln!(s, "  point = {} {} {}", r[0], r[1], r[2]);
        }
        let _ = writeln!(s, "}}");
        let _ = writeln!(s, "noise {{");
        let _ = writeln!(s, "  delta = {}", self.noise_delta);
        let _ = writeln!(s, "  seed = {}", self.seed);
        let _ = writeln!(s, "}}");
        let _ = writeln!(s, "forward {{");
        let _ = writeln!(s, "  delta = {}", self.forward_delta);
        let _ = writeln!(s, "  eps = {}", self.forward_eps);
        let _ = writeln!(s, "  max_iter = {}", self.forward_max_iter);
        let _ = writeln!(s, "}}");
        let g = &self.region;
        let _ = writeln!(s, "locator {{");
        let _ = writeln!(s, "  box_lo = {} {} {}", g.lo[0], g.lo[1], g.lo[2]);
        let _ = writeln!(s, "  box_hi = {} {} {}", g.hi[0], g.hi[1], g.hi[2]);
        let _ = writeln!(s, "  s0 = {}", g.s0);
        let _ = writeln!(s, "  cutoff = {}", g.cutoff);
        let _ = writeln!(s, "  levels = {}", g.levels);
        let _ = writeln!(s, "  budget = {}", g.budget);
        let _ = writeln!(s, "}}");
        let _ = writeln!(s, "modes {{");
        let _ = writeln!(s, "  tol = {}", self.modes_tol);
        let _ = writeln!(s, "}}");
        let _ = writeln!(s, "run {{");
        let _ = writeln!(s, "  label = {}", self.label);
        let _ = writeln!(s, "  version = {}", CODE_VERSION);
        let _ = writeln!(s, "}}");
        s
    }

    /// Build the modal basis sized for this scenario's forward mesh.
    pub fn build_basis(&self) -> Result<ModalBasis, ScenarioError> {
        Ok(find_modes(&self.waveguide, self.forward_delta / 2.0, self.modes_tol)?)
    }
}

// ---------------------------------------------------------------------------
// presets

const DESK_DELTA: f64 = 1.0 / 3.0;
const DESK_TOL: f64 = 1e-6;
const PAPER_DELTA: f64 = 1.0 / 15.0;
const PAPER_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 1;

fn reference_waveguide() -> WaveguideConfig {
    WaveguideConfig::new(
        100.0,
        100.0 / 3.0,
        200.0 / 3.0,
        [1000.0, 1500.0, 3000.0],
        75.0,
        [1000.0, 1500.0, 3000.0],
        [1.0, 0.5, 1.0 / 3.0],
    )
    .expect("reference waveguide is valid")
}

fn receiver_line(x: f64, y0: f64, z: f64) -> Vec<[f64; 3]> {
    (0..5).map(|n| [x, y0 + 5.0 * n as f64, z]).collect()
}

fn preset_scenario(
    label: &str,
    source: [f64; 3],
    box_lo: [f64; 3],
    box_hi: [f64; 3],
    receivers: Vec<[f64; 3]>,
    region_lo: [f64; 3],
    region_hi: [f64; 3],
    paper_scale: bool,
    seed: u64,
) -> Scenario {
    let waveguide = reference_waveguide();
    let q2 = waveguide.q(1);
    let inclusion = InclusionSpec::new(
        &waveguide,
        BoxRegion::new(box_lo, box_hi).expect("preset box"),
        1.1 * q2,
        waveguide.rho[1],
    )
    .expect("preset inclusion");
    Scenario {
        label: label.to_string(),
        waveguide,
        inclusion,
        source,
        receivers,
        noise_delta: 0.1,
        seed,
        forward_delta: if paper_scale { PAPER_DELTA } else { DESK_DELTA },
        forward_eps: 1e-3,
        forward_max_iter: 200,
        region: SamplingRegion {
            lo: region_lo,
            hi: region_hi,
            s0: 4.0,
            cutoff: 0.95,
            levels: 3,
            budget: 20_000,
        },
        modes_tol: if paper_scale { PAPER_TOL } else { DESK_TOL },
    }
}

/// Bundled demonstration scenarios. Each preset expands to one scenario per
/// receiver line.
pub fn preset_scenarios(
    name: &str,
    paper_scale: bool,
    seed: u64,
) -> Result<Vec<Scenario>, ScenarioError> {
    let cube = ([32.0, 32.0, 42.0], [34.0, 34.0, 44.0]);
    let cube4 = ([46.0, 32.0, 42.0], [48.0, 34.0, 44.0]);
    let d3 = ([10.0, 10.0, 10.0], [40.0, 40.0, 40.0]);
    let d4 = ([10.0, 10.0, 25.0], [40.0, 40.0, 55.0]);
    let shallow = [18.0, 18.0, 25.0];
    let deep = [18.0, 18.0, 45.0];
    let mk = |label: &str, src, cube: ([f64; 3], [f64; 3]), rcv, d: ([f64; 3], [f64; 3])| {
        preset_scenario(label, src, cube.0, cube.1, rcv, d.0, d.1, paper_scale, seed)
    };
    match name {
        "example1" => Ok(vec![
            mk("example1-r11", shallow, cube, receiver_line(70.0, 10.0, 90.0), d3),
            mk("example1-r12", shallow, cube, receiver_line(10.0, 10.0, 90.0), d3),
        ]),
        "example2" => Ok(vec![
            mk("example2-r21", shallow, cube, receiver_line(60.0, 60.0, 60.0), d3),
            mk("example2-r22", shallow, cube, receiver_line(60.0, 60.0, 40.0), d3),
        ]),
        "example3" => Ok(vec![mk(
            "example3-r3",
            shallow,
            cube,
            receiver_line(60.0, 60.0, 30.0),
            d3,
        )]),
        "example4" => Ok(vec![
            mk("example4-r41", deep, cube4, receiver_line(60.0, 60.0, 90.0), d4),
            mk("example4-r42", deep, cube4, receiver_line(60.0, 60.0, 80.0), d4),
        ]),
        other => Err(ScenarioError::UnknownPreset(other.to_string())),
    }
}

pub const PRESET_NAMES: [&str; 4] = ["example1", "example2", "example3", "example4"];

// ---------------------------------------------------------------------------
// orchestration

/// Everything a run produces, before any file is written.
pub struct RunArtifacts {
    pub scenario: Scenario,
    pub clean: ScatterRecord,
    pub noisy: ScatterRecord,
    pub locate: LocateResult,
}

/// Synthesize receiver data for the scenario's true source, perturb it, and
/// run the localization.
pub fn run_scenario(scenario: &Scenario) -> Result<RunArtifacts, ScenarioError> {
    scenario.validate()?;
    let basis = scenario.build_basis()?;
    run_scenario_with_basis(scenario, &basis)
}

/// Same as [`run_scenario`] but reusing a prebuilt basis (the basis depends
/// only on the waveguide, the mesh size and the mode tolerance).
pub fn run_scenario_with_basis(
    scenario: &Scenario,
    basis: &ModalBasis,
) -> Result<RunArtifacts, ScenarioError> {
    let mesh = VolumeMesh::new(&scenario.waveguide, &scenario.inclusion, scenario.forward_delta)?;
    let kernel = InteractionKernel::assemble(basis, mesh)?;
    let receivers = ReceiverSet::new(
        &scenario.waveguide,
        &scenario.inclusion,
        scenario.receivers.clone(),
    )?;
    let field = born_iterate(
        basis,
        &kernel,
        scenario.source,
        scenario.forward_eps,
        scenario.forward_max_iter,
    )?;
    let clean = scattered_field(basis, &kernel, &field, &receivers)?;
    let noisy = add_noise(&clean, scenario.noise_delta, scenario.seed);
    let locate = multilevel_locate(
        &scenario.region,
        &noisy,
        basis,
        &kernel,
        scenario.forward_eps,
        scenario.forward_max_iter,
    )?;
    Ok(RunArtifacts { scenario: scenario.clone(), clean, noisy, locate })
}

fn write(path: &Path, content: &str) -> Result<(), ScenarioError> {
    fs::write(path, content).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

impl RunArtifacts {
    /// Write the full output set: scatter record (text + CSV), localization
    /// report, per-level CSV, and the reproducing manifest.
    pub fn write_files(&self, out_dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
        fs::create_dir_all(out_dir).map_err(|source| ScenarioError::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
        let mut paths = Vec::new();
        let mut emit = |name: String, content: String| -> Result<(), ScenarioError> {
            let path = out_dir.join(name);
            write(&path, &content)?;
            paths.push(path);
            Ok(())
        };
        let label = &self.scenario.label;
        emit(format!("{label}.manifest.txt"), self.scenario.to_text())?;
        emit(format!("{label}.scatter.txt"), self.noisy.to_text())?;
        emit(format!("{label}.scatter.csv"), self.noisy.to_csv())?;
        emit(
            format!("{label}.locate.txt"),
            self.locate.to_text(&self.scenario.region),
        )?;
        emit(
            format!("{label}.levels.csv"),
            self.locate.levels_csv(&self.scenario.region),
        )?;
        Ok(paths)
    }
}

/// Mode-table export: roots, weights and norms plus sampled normalized
/// profiles for the leading modes (plotting-friendly).
pub fn modes_csv(basis: &ModalBasis) -> (String, String) {
    let mut table = String::from("n,re_xi,im_xi,re_wn,im_wn,norm\n");
    for (i, m) in basis.modes.iter().enumerate() {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{}",
            i + 1,
            m.xi.re,
            m.xi.im,
            m.w_n.re,
            m.w_n.im,
            m.norm.re
        );
    }
    let cfg = &basis.cfg;
    let n_profiles = basis.modes.len().min(20);
    let mut profiles = String::from("depth");
    for i in 0..n_profiles {
        let _ = write!(profiles, ",phi{}", i + 1);
    }
    profiles.push('\n');
    let samples = 201;
    for s in 0..samples {
        let x3 = cfg.h * s as f64 / (samples - 1) as f64;
        let _ = write!(profiles, "{x3}");
        for m in basis.modes.iter().take(n_profiles) {
            let v = m.profile(cfg, x3);
            let _ = write!(profiles, ",{}", v.re);
        }
        profiles.push('\n');
    }
    (table, profiles)
}

/// Vertical field slice through the source column for plotting: the plane
/// is `x = const` or `y = const`; the free horizontal coordinate spans
/// +-50 length units around the source.
pub fn field_slice_csv(
    scenario: &Scenario,
    basis: &ModalBasis,
    axis: usize,
    value: f64,
    nu: usize,
    nz: usize,
) -> String {
    assert!(axis < 2, "plane must fix x (axis 0) or y (axis 1)");
    let mut out = String::from("u,x3,re,im,abs\n");
    let src = scenario.source;
    let other = 1 - axis;
    let u0 = src[other] - 50.0;
    let u1 = src[other] + 50.0;
    for i in 0..nu {
        let u = u0 + (u1 - u0) * i as f64 / (nu - 1) as f64;
        let mut p = [0.0; 3];
        p[axis] = value;
        p[other] = u;
        for j in 0..nz {
            let x3 = scenario.waveguide.h * j as f64 / (nz - 1) as f64;
            let r = ((p[0] - src[0]).powi(2) + (p[1] - src[1]).powi(2)).sqrt();
            let g = basis
                .green_clamped(r, x3, src[2])
                .expect("clamped series evaluation cannot fail on r");
            let _ = writeln!(out, "{u},{x3},{},{},{}", g.re, g.im, g.norm());
        }
    }
    out
}
