use serde::{Deserialize, Serialize};

use crate::connection::{SeededOptions, SolverOptions, SEEDED_FLOW_TOL};
use crate::error::Error;
use crate::flow::{Zone, FLOW_TOL, FP_TOL};
use crate::io::json::JsonMatrix;
use crate::stokes::{StokesOptions, DAGGER_TOL, ODE_TOL, SERIES_ORDER, TRI_TOL};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Seed,
    Extract,
    Evolve,
    StokesNum,
    StokesClosed,
    ConnectFlow,
    ConnectSolve,
    VerifyConnection,
    PviParams,
    Selftest,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Seed => "seed",
            Command::Extract => "extract",
            Command::Evolve => "evolve",
            Command::StokesNum => "stokes-num",
            Command::StokesClosed => "stokes-closed",
            Command::ConnectFlow => "connect-flow",
            Command::ConnectSolve => "connect-solve",
            Command::VerifyConnection => "verify-connection",
            Command::PviParams => "pvi-params",
            Command::Selftest => "selftest",
        }
    }
}

fn version() -> u32 {
    CONFIG_VERSION
}
fn rho() -> f64 {
    1e3
}
fn flow_tol() -> f64 {
    FLOW_TOL
}
fn fp_tol() -> f64 {
    FP_TOL
}
fn eig_tol() -> f64 {
    1e-10
}
fn path_length() -> f64 {
    1.0
}
fn norm() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StokesConfig {
    #[serde(default = "order")]
    pub order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detour_radius: Option<f64>,
    #[serde(default = "ode_tol")]
    pub ode_tol: f64,
    #[serde(default = "tri_tol")]
    pub tri_tol: f64,
    #[serde(default = "dagger_tol")]
    pub dagger_tol: f64,
    #[serde(default = "yes")]
    pub use_dagger: bool,
    /// Tolerance of the transport used for seeded Stokes data.
    #[serde(default = "seeded_flow_tol")]
    pub flow_tol: f64,
}

fn order() -> usize {
    SERIES_ORDER
}
fn ode_tol() -> f64 {
    ODE_TOL
}
fn tri_tol() -> f64 {
    TRI_TOL
}
fn dagger_tol() -> f64 {
    DAGGER_TOL
}
fn seeded_flow_tol() -> f64 {
    SEEDED_FLOW_TOL
}

impl Default for StokesConfig {
    fn default() -> Self {
        StokesConfig {
            order: order(),
            anchor_radius: None,
            detour_radius: None,
            ode_tol: ode_tol(),
            tri_tol: tri_tol(),
            dagger_tol: dagger_tol(),
            use_dagger: true,
            flow_tol: seeded_flow_tol(),
        }
    }
}

impl StokesConfig {
    pub fn options(&self) -> StokesOptions {
        StokesOptions {
            anchor_radius: self.anchor_radius,
            order: self.order,
            detour_radius: self.detour_radius,
            ode_tol: self.ode_tol,
            tri_tol: self.tri_tol,
            dagger_tol: self.dagger_tol,
            use_dagger: self.use_dagger,
        }
    }

    pub fn seeded(&self) -> SeededOptions {
        SeededOptions {
            flow_tol: self.flow_tol,
            stokes: self.options(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "fd_step")]
    pub fd_step: f64,
    #[serde(default = "target")]
    pub target: f64,
}

fn max_iterations() -> usize {
    100
}
fn fd_step() -> f64 {
    1e-6
}
fn target() -> f64 {
    1e-8
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: max_iterations(),
            fd_step: fd_step(),
            target: target(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    /// Pass threshold on ‖residual‖/‖S_+‖.
    #[serde(default = "verify_tol")]
    pub tol: f64,
    /// ρ used for the Stokes comparison; the connection ρ when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

fn verify_tol() -> f64 {
    1e-2
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            tol: verify_tol(),
            rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default = "version")]
    pub version: u32,
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    /// Dimension of randomly generated inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Norm bound of randomly generated matrices.
    #[serde(default = "norm")]
    pub norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_minus: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    /// Waypoints of the evolve path, the first one being the start point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<Vec<f64>>>,
    #[serde(default = "path_length")]
    pub path_length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<Zone>,
    #[serde(default = "rho")]
    pub rho: f64,
    #[serde(default = "flow_tol")]
    pub tol: f64,
    #[serde(default = "fp_tol")]
    pub fp_tol: f64,
    #[serde(default = "eig_tol")]
    pub eig_tol: f64,
    #[serde(default = "yes")]
    pub record_samples: bool,
    #[serde(default)]
    pub stokes: StokesConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub extended_precision: bool,
}

impl JobConfig {
    pub fn new(command: Command) -> Self {
        serde_json::from_value(serde_json::json!({ "command": command })).expect("defaults deserialize")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_iterations: self.solver.max_iterations,
            fd_step: self.solver.fd_step,
            target: self.solver.target,
            seeded: self.stokes.seeded(),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.version != CONFIG_VERSION {
            return Err(Error::schema("version", format!("unsupported version {}", self.version)));
        }
        let positive = [
            ("norm", self.norm),
            ("path_length", self.path_length),
            ("tol", self.tol),
            ("fp_tol", self.fp_tol),
            ("eig_tol", self.eig_tol),
            ("stokes.ode_tol", self.stokes.ode_tol),
            ("stokes.tri_tol", self.stokes.tri_tol),
            ("stokes.dagger_tol", self.stokes.dagger_tol),
            ("stokes.flow_tol", self.stokes.flow_tol),
            ("solver.fd_step", self.solver.fd_step),
            ("solver.target", self.solver.target),
            ("verify.tol", self.verify.tol),
        ];
        for (path, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::schema(path, format!("must be positive and finite, got {v}")));
            }
        }
        for (path, v) in [
            ("stokes.anchor_radius", self.stokes.anchor_radius),
            ("stokes.detour_radius", self.stokes.detour_radius),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::schema(path, format!("must be positive and finite, got {v}")));
                }
            }
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return Err(Error::schema("rho", format!("must exceed 1, got {}", self.rho)));
        }
        if let Some(r) = self.verify.rho {
            if !(r > 1.0 && r.is_finite()) {
                return Err(Error::schema("verify.rho", format!("must exceed 1, got {r}")));
            }
        }
        if self.n == Some(0) {
            return Err(Error::schema("n", "must be at least 1"));
        }
        if self.stokes.order == 0 {
            return Err(Error::schema("stokes.order", "must be at least 1"));
        }
        if self.solver.max_iterations == 0 {
            return Err(Error::schema("solver.max_iterations", "must be at least 1"));
        }
        if self.extended_precision {
            return Err(Error::schema("extended_precision", "not available in this build"));
        }
        for (name, m) in [("a", &self.a), ("a_minus", &self.a_minus), ("phi", &self.phi)] {
            if let Some(m) = m {
                if m.to_matrix().is_none() {
                    return Err(Error::schema(name, "must be a non-empty square matrix"));
                }
            }
        }
        Ok(())
    }
}

fn deserialize<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, Error> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::schema(path, e.into_inner().to_string())
    })
}

/// Parses and validates a single job.
pub fn parse_config(text: &str) -> Result<JobConfig, Error> {
    let cfg: JobConfig = deserialize(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// A top-level array is a batch; an object is a batch of one.
pub fn parse_batch(text: &str) -> Result<(Vec<JobConfig>, bool), Error> {
    let value: serde_json::Value = deserialize(text)?;
    if value.is_array() {
        let jobs: Vec<JobConfig> = deserialize(text)?;
        if jobs.is_empty() {
            return Err(Error::schema(".", "empty batch"));
        }
        for (i, job) in jobs.iter().enumerate() {
            job.validate().map_err(|e| match e {
                Error::SchemaViolation { path, message } => Error::schema(format!("[{i}].{path}"), message),
                e => e,
            })?;
        }
        Ok((jobs, true))
    } else {
        Ok((vec![parse_config(text)?], false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn violation_path(r: Result<JobConfig, Error>) -> String {
        match r {
            Err(Error::SchemaViolation { path, .. }) => path,
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(r#"{"command": "stokes-num", "n": 2}"#).unwrap();
        assert_eq!(c.command, Command::StokesNum);
        assert_eq!(c.n, Some(2));
        assert_eq!(c.version, 1);
        assert_eq!(c.seed, 0);
        assert_eq!(c.stokes, StokesConfig::default());
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.tol, FLOW_TOL);
        assert_eq!(c, {
            let mut d = JobConfig::new(Command::StokesNum);
            d.n = Some(2);
            d
        });
    }

    #[test]
    fn negative_tolerance_names_the_field() {
        assert_eq!(violation_path(parse_config(r#"{"command": "evolve", "tol": -1e-3}"#)), "tol");
        assert_eq!(
            violation_path(parse_config(r#"{"command": "evolve", "stokes": {"ode_tol": 0}}"#)),
            "stokes.ode_tol"
        );
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        assert_eq!(violation_path(parse_config(r#"{"command": "seed", "bogus": 1}"#)), "bogus");
        let p = violation_path(parse_config(r#"{"command": "seed", "stokes": {"order": "x"}}"#));
        assert_eq!(p, "stokes.order");
        assert!(parse_config(r#"{"command": "frobnicate"}"#).is_err());
        assert_eq!(violation_path(parse_config(r#"{"command": "seed", "rho": 0.5}"#)), "rho");
        assert_eq!(violation_path(parse_config(r#"{"command": "seed", "n": 0}"#)), "n");
        assert_eq!(
            violation_path(parse_config(r#"{"command": "seed", "a": [[[1,0],[0,0]]]}"#)),
            "a"
        );
        assert_eq!(
            violation_path(parse_config(r#"{"command": "seed", "extended_precision": true}"#)),
            "extended_precision"
        );
    }

    #[test]
    fn batch_paths_are_indexed() {
        let (jobs, batch) = parse_batch(r#"[{"command": "selftest"}, {"command": "seed", "n": 2}]"#).unwrap();
        assert!(batch);
        assert_eq!(jobs.len(), 2);
        let e = parse_batch(r#"[{"command": "selftest"}, {"command": "seed", "tol": -1}]"#).unwrap_err();
        assert!(matches!(e, Error::SchemaViolation { ref path, .. } if path == "[1].tol"), "{e:?}");
        let (jobs, batch) = parse_batch(r#"{"command": "selftest"}"#).unwrap();
        assert!(!batch);
        assert_eq!(jobs.len(), 1);
    }

    fn command() -> impl Strategy<Value = Command> {
        prop::sample::select(vec![
            Command::Seed,
            Command::Extract,
            Command::Evolve,
            Command::StokesNum,
            Command::StokesClosed,
            Command::ConnectFlow,
            Command::ConnectSolve,
            Command::VerifyConnection,
            Command::PviParams,
            Command::Selftest,
        ])
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(
            cmd in command(),
            seed in any::<u64>(),
            n in prop::option::of(1usize..7),
            rho in 1.5f64..1e6,
            tol in 1e-14f64..1e-2,
            anchor in prop::option::of(1.0f64..1e3),
            u in prop::option::of(prop::collection::vec(-1e3f64..1e3, 1..5)),
            re in -10.0f64..10.0,
            use_dagger in any::<bool>(),
        ) {
            let mut c = JobConfig::new(cmd);
            c.seed = seed;
            c.n = n;
            c.rho = rho;
            c.tol = tol;
            c.stokes.anchor_radius = anchor;
            c.stokes.use_dagger = use_dagger;
            c.u = u;
            c.a = Some(JsonMatrix(vec![vec![[re, 0.0]]]));
            let text = serde_json::to_string(&c).unwrap();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        }
    }
}
