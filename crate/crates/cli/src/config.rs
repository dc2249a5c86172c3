//! Run configuration. The JSON schema is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wentzell_core::hybrid::{build_mesh, HybridMesh, MeshFile, MeshSpec};
use wentzell_core::{CoefficientField, ComplexMatrix};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub coefficients: Coefficients,
    pub mesh: MeshSource,
    /// Finite exponents in `(1, inf)`.
    pub p: Vec<f64>,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub samples: Samples,
    #[serde(default)]
    pub suites: Suites,
    #[serde(default)]
    pub geometry: GeometryConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub a: FieldSource,
    /// Second field of the pair; defaults to `a`.
    #[serde(default)]
    pub b: Option<FieldSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSource {
    Constant(ComplexMatrix),
    PerCell(Vec<ComplexMatrix>),
    /// JSON file holding a `{"constant": ...}` or `{"per_cell": ...}` field.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    Generate(MeshSpec),
    /// JSON mesh file.
    File(PathBuf),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Bellman parameter of the flow energy; default is the largest admissible swept value.
    pub delta: Option<f64>,
    /// Contour angle of the functional calculus.
    pub nu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Geometric ratio of the flow grid.
    pub rho: f64,
    /// Flow grid span; default derived from the spectrum.
    pub span: Option<(f64, f64)>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { dt: 1e-3, n_steps: 100, rho: 2f64.powf(0.125), span: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub theta: f64,
    pub contractivity_slack: f64,
    pub theta_margin: f64,
    pub nittka: f64,
    pub transference: f64,
    pub resolvent_gap: f64,
    pub projection: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            theta: 1e-6,
            contractivity_slack: 1e-8,
            theta_margin: 0.05,
            nittka: 1e-10,
            transference: 1e-12,
            resolvent_gap: 1e-3,
            projection: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    /// Random initial data per trajectory family.
    pub data: usize,
    pub convexity: usize,
    pub nittka: usize,
    pub flow_pairs: usize,
    pub projection: usize,
    /// Exponents `s` of the `phi_s` family.
    pub hinfty_family: Vec<f64>,
}

impl Default for Samples {
    fn default() -> Self {
        Self { data: 3, convexity: 20_000, nittka: 20, flow_pairs: 2, projection: 20, hinfty_family: vec![0.5, 1.0, 2.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Suites {
    pub basics: bool,
    pub convexity: bool,
    pub contractivity: bool,
    /// Adds `p = inf` to the contractivity exponents.
    pub contractivity_infinity: bool,
    pub nittka: bool,
    pub transference: bool,
    pub flows: bool,
    pub quadratic: bool,
    pub hinfty: bool,
    pub holder: bool,
    pub projection: bool,
}

impl Default for Suites {
    fn default() -> Self {
        Self {
            basics: true,
            convexity: true,
            contractivity: true,
            contractivity_infinity: true,
            nittka: true,
            transference: true,
            flows: true,
            quadratic: false,
            hinfty: false,
            holder: true,
            projection: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub koch_levels: Vec<usize>,
    pub koch_base_length: f64,
    pub koch_balls: usize,
    /// Random boundary centers of the density check, besides the boundary vertices.
    pub density_samples: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { koch_levels: vec![1, 2, 3, 4], koch_base_length: 1.0, koch_balls: 100, density_samples: 10 }
    }
}

fn invalid(path: &str, msg: impl Into<String>) -> CliError {
    CliError::Config { path: path.into(), message: msg.into() }
}

fn read_json<T: serde::de::DeserializeOwned>(file: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| CliError::Config { path: file.display().to_string(), message: format!("cannot read file: {e}") })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        path: format!("{}:{}", file.display(), e.path()),
        message: e.into_inner().to_string(),
    })
}

/// Paths inside the config resolve against the config file's directory.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads, parses and validates a config; relative paths are resolved against its directory.
    pub fn load(file: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = read_json(file)?;
        let base = file.parent().unwrap_or(Path::new("."));
        for src in std::iter::once(&mut cfg.coefficients.a).chain(cfg.coefficients.b.as_mut()) {
            if let FieldSource::File(p) = src {
                *p = resolve(base, p);
            }
        }
        if let MeshSource::File(p) = &mut cfg.mesh {
            *p = resolve(base, p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let sources = [("coefficients.a", Some(&self.coefficients.a)), ("coefficients.b", self.coefficients.b.as_ref())];
        for (name, src) in sources {
            if let Some(FieldSource::File(p)) = src {
                if !p.is_file() {
                    return Err(invalid(name, format!("file not found: {}", p.display())));
                }
            }
        }
        if let MeshSource::File(p) = &self.mesh {
            if !p.is_file() {
                return Err(invalid("mesh.file", format!("file not found: {}", p.display())));
            }
        }
        if self.p.is_empty() {
            return Err(invalid("p", "at least one exponent is required"));
        }
        for (i, &p) in self.p.iter().enumerate() {
            if !(p > 1.0 && p.is_finite()) {
                return Err(invalid(&format!("p[{i}]"), format!("{p} is outside (1, inf)")));
            }
        }
        let t = &self.tolerances;
        let positive = [
            ("tolerances.theta", t.theta),
            ("tolerances.contractivity_slack", t.contractivity_slack),
            ("tolerances.theta_margin", t.theta_margin),
            ("tolerances.nittka", t.nittka),
            ("tolerances.transference", t.transference),
            ("tolerances.resolvent_gap", t.resolvent_gap),
            ("tolerances.projection", t.projection),
            ("time.dt", self.time.dt),
            ("geometry.koch_base_length", self.geometry.koch_base_length),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be positive")));
            }
        }
        if !(self.time.rho > 1.0 && self.time.rho <= 2.0) {
            return Err(invalid("time.rho", format!("{} is outside (1, 2]", self.time.rho)));
        }
        if let Some((t0, t1)) = self.time.span {
            if !(t0 > 0.0 && t1 > t0) {
                return Err(invalid("time.span", format!("({t0}, {t1}) is not an increasing positive span")));
            }
        }
        if let Some(d) = self.overrides.delta {
            if !(0.0..=1.0).contains(&d) {
                return Err(invalid("overrides.delta", format!("{d} is outside [0, 1]")));
            }
        }
        if let Some(nu) = self.overrides.nu {
            if !(nu > 0.0 && nu < std::f64::consts::PI) {
                return Err(invalid("overrides.nu", format!("{nu} is outside (0, pi)")));
            }
        }
        for (i, &s) in self.samples.hinfty_family.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(&format!("samples.hinfty_family[{i}]"), format!("{s} must be positive")));
            }
        }
        Ok(())
    }

    pub fn field_a(&self) -> Result<CoefficientField, CliError> {
        load_field(&self.coefficients.a)
    }

    pub fn field_b(&self) -> Result<CoefficientField, CliError> {
        self.coefficients.b.as_ref().map(load_field).unwrap_or_else(|| self.field_a())
    }

    pub fn mesh(&self) -> Result<HybridMesh, CliError> {
        match &self.mesh {
            MeshSource::Generate(spec) => build_mesh(spec).map_err(|e| CliError::module("mesh", e)),
            MeshSource::File(p) => {
                let file: MeshFile = read_json(p)?;
                HybridMesh::from_file(file).map_err(|e| CliError::module("mesh", e))
            }
        }
    }
}

fn load_field(src: &FieldSource) -> Result<CoefficientField, CliError> {
    match src {
        FieldSource::Constant(m) => Ok(CoefficientField::constant(m.clone())),
        FieldSource::PerCell(ms) => Ok(CoefficientField::PerCell(ms.clone())),
        FieldSource::File(p) => read_json(p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "coefficients": {"a": {"constant": [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]}},
        "mesh": {"generate": {"domain": {"rectangle": {"origin": [0, 0], "width": 1, "height": 1}},
                 "h": 0.25, "side_labels": ["dirichlet", "neumann", "dynamic", "neumann"]}},
        "p": [2, 4]
    }"#;

    fn parse(text: &str) -> Result<RunConfig, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| e.path().to_string())
    }

    #[test]
    fn minimal_config_has_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.time, TimeConfig::default());
        assert!(cfg.suites.contractivity && !cfg.suites.hinfty);
        assert_eq!(cfg.field_b().unwrap(), cfg.field_a().unwrap());
        assert_eq!(cfg.mesh().unwrap().n_dofs(), 20);
    }

    #[test]
    fn parse_errors_carry_the_path() {
        let bad = MINIMAL.replace("\"h\": 0.25", "\"h\": \"x\"");
        assert_eq!(parse(&bad).unwrap_err(), "mesh.generate.h");
        let unknown = MINIMAL.replace("\"p\": [2, 4]", "\"p\": [2, 4], \"extra\": 1");
        assert!(parse(&unknown).is_err());
    }

    #[test]
    fn validation_names_the_offending_field() {
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.p.push(1.0);
        match cfg.validate() {
            Err(CliError::Config { path, .. }) => assert_eq!(path, "p[2]"),
            other => panic!("{other:?}"),
        }
        cfg.p.pop();
        cfg.tolerances.nittka = 0.0;
        assert!(matches!(cfg.validate(), Err(CliError::Config { path, .. }) if path == "tolerances.nittka"));
        cfg.tolerances.nittka = 1e-10;
        cfg.mesh = MeshSource::File("/nonexistent/mesh.json".into());
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("/nonexistent/mesh.json"), "{err}");
    }
}
