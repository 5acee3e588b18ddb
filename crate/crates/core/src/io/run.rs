use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::closed::{closed_subdiagonals_with, genericity_check, gt_pattern};
use crate::connection::{connect_via_flow, connect_via_stokes, pvi_parameters, verify_connection};
use crate::error::{Error, EXIT_OK, EXIT_TOLERANCE};
use crate::flow::{
    extract_minus, extract_plus, integrate_path_with, seed_minus, seed_plus, Conservation, FlowDiagnostics,
    FlowOptions, PathInU, RegularPoint, Zone,
};
use crate::io::config::{Command, JobConfig};
use crate::io::json::{complex, herm, matrix, real};
use crate::io::selftest::selftest;
use crate::linalg::{HermitianMatrix, C64};
use crate::sample::{random_hermitian, random_path, random_regular_point};
use crate::stokes::{stokes_numeric, LinearSystem, StokesPair};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// What a command produced. `failure` is set when the computation finished but
/// a configured pass threshold was missed.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub results: Value,
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(results: Value) -> Self {
        Outcome { results, failure: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorObject {
    pub class: &'static str,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub schema_version: u32,
    pub command: &'static str,
    pub status: &'static str,
    pub exit_code: i32,
    pub config: JobConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorObject>,
    pub timings: Timings,
}

impl Report {
    /// The report without its timings, for reproducibility comparisons.
    pub fn payload(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().expect("object").remove("timings");
        v
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs one job and wraps the outcome, including errors, in a report.
pub fn run_job(cfg: &JobConfig) -> Report {
    let start = Instant::now();
    let result = cfg.validate().and_then(|_| run_command(cfg));
    let wall_seconds = start.elapsed().as_secs_f64();
    let (status, exit_code, results, error) = match result {
        Ok(Outcome { results, failure: None }) => ("ok", EXIT_OK, Some(results), None),
        Ok(Outcome {
            results,
            failure: Some(msg),
        }) => (
            "fail",
            EXIT_TOLERANCE,
            Some(results),
            Some(ErrorObject {
                class: "tolerance",
                exit_code: EXIT_TOLERANCE,
                message: msg,
            }),
        ),
        Err(e) => (
            "error",
            e.exit_code(),
            None,
            Some(ErrorObject {
                class: e.class().as_str(),
                exit_code: e.exit_code(),
                message: e.to_string(),
            }),
        ),
    };
    Report {
        version: env!("CARGO_PKG_VERSION"),
        schema_version: REPORT_SCHEMA_VERSION,
        command: cfg.command.as_str(),
        status,
        exit_code,
        config: cfg.clone(),
        results,
        error,
        timings: Timings { wall_seconds },
    }
}

struct Inputs<'a> {
    cfg: &'a JobConfig,
    rng: ChaCha8Rng,
}

impl Inputs<'_> {
    fn dim(&self) -> Result<usize, Error> {
        self.cfg
            .n
            .ok_or_else(|| Error::schema("n", "required when the matrix is not given"))
    }

    fn hermitian(&mut self, name: &str, given: &Option<crate::io::json::JsonMatrix>) -> Result<HermitianMatrix, Error> {
        match given {
            Some(m) => {
                let m = m
                    .to_matrix()
                    .ok_or_else(|| Error::schema(name, "must be a non-empty square matrix"))?;
                Ok(HermitianMatrix::new(m)?)
            }
            None => {
                let n = self.dim()?;
                Ok(random_hermitian(n, self.cfg.norm, &mut self.rng))
            }
        }
    }

    fn a(&mut self) -> Result<HermitianMatrix, Error> {
        let given = self.cfg.a.clone();
        self.hermitian("a", &given)
    }

    fn phi(&mut self) -> Result<HermitianMatrix, Error> {
        let given = self.cfg.phi.clone();
        self.hermitian("phi", &given)
    }

    fn point(&self, n: usize) -> Result<RegularPoint, Error> {
        let u = self.cfg.u.clone().unwrap_or_else(|| (0..n).map(|k| k as f64).collect());
        if u.len() != n {
            return Err(Error::schema("u", format!("expected {n} entries, got {}", u.len())));
        }
        Ok(RegularPoint::new(u)?)
    }
}

/// Dispatches a validated config to the library.
pub fn run_command(cfg: &JobConfig) -> Result<Outcome, Error> {
    let mut inp = Inputs {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let zone = cfg.zone.unwrap_or(Zone::Plus);
    match cfg.command {
        Command::Selftest => Ok(selftest()),
        Command::Seed => {
            let a = inp.a()?;
            let s = match zone {
                Zone::Plus => seed_plus(&a, cfg.rho)?,
                Zone::Minus => seed_minus(&a, cfg.rho)?,
            };
            Ok(Outcome::ok(json!({
                "zone": zone,
                "rho": cfg.rho,
                "a": herm(&a),
                "u": s.point.coords(),
                "phi": herm(&s.phi),
            })))
        }
        Command::Extract => {
            let phi = inp.phi()?;
            let n = phi.dim();
            let (u, a, back) = match zone {
                Zone::Plus => {
                    let u = RegularPoint::plus_family(n, cfg.rho)?;
                    let a = extract_plus(&phi, &u, cfg.fp_tol)?;
                    let back = seed_plus(&a, cfg.rho)?.phi;
                    (u, a, back)
                }
                Zone::Minus => {
                    let u = RegularPoint::minus_family(n, cfg.rho)?;
                    let a = extract_minus(&phi, &u, cfg.fp_tol)?;
                    let back = seed_minus(&a, cfg.rho)?.phi;
                    (u, a, back)
                }
            };
            Ok(Outcome::ok(json!({
                "zone": zone,
                "rho": cfg.rho,
                "u": u.coords(),
                "phi": herm(&phi),
                "a": herm(&a),
                "residual": (back.matrix() - phi.matrix()).norm(),
            })))
        }
        Command::Evolve => {
            let phi = inp.phi()?;
            let n = phi.dim();
            let path = match &cfg.path {
                Some(w) => PathInU::new(w.iter().map(|u| RegularPoint::new(u.clone())).collect::<Result<_, _>>()?)?,
                None => {
                    let start = match &cfg.u {
                        Some(_) => inp.point(n)?,
                        None => random_regular_point(n, 0.5, 3.0, &mut inp.rng),
                    };
                    random_path(&start, cfg.path_length, &mut inp.rng)
                }
            };
            let tr = integrate_path_with(
                &phi,
                &path,
                &FlowOptions {
                    tol: cfg.tol,
                    record_samples: cfg.record_samples,
                },
            )?;
            let cons = tr.conservation()?;
            let mut out = json!({
                "phi0": herm(&phi),
                "path": path.waypoints().iter().map(|p| p.coords().to_vec()).collect::<Vec<_>>(),
                "final_u": tr.final_u(),
                "final_phi": herm(tr.final_phi()),
                "conservation": conservation(&cons),
                "diagnostics": flow_diagnostics(&tr.diagnostics),
            });
            if cfg.record_samples {
                out["samples"] = tr
                    .samples
                    .iter()
                    .map(|s| json!({"t": s.t, "u": s.u, "phi": herm(&s.phi)}))
                    .collect();
            }
            Ok(Outcome::ok(out))
        }
        Command::StokesNum => {
            let a = inp.a()?;
            let u = inp.point(a.dim())?;
            let sys = LinearSystem::at_point(&u, a.clone())?;
            let pair = stokes_numeric(&sys, &cfg.stokes.options())?;
            let mut out = stokes_pair(&pair);
            out["a"] = herm(&a);
            out["u"] = json!(u.coords());
            Ok(Outcome::ok(out))
        }
        Command::StokesClosed => {
            let a = inp.a()?;
            let pat = gt_pattern(&a)?;
            genericity_check(&pat, None)?;
            let sub = closed_subdiagonals_with(&a, &pat)?;
            Ok(Outcome::ok(json!({
                "a": herm(&a),
                "gt_pattern": {"levels": pat.levels, "extensions": pat.extensions},
                "s_plus_superdiagonal": sub.s_plus.iter().map(|z| complex(*z)).collect::<Vec<_>>(),
                "s_minus_subdiagonal": sub.s_minus.iter().map(|z| complex(*z)).collect::<Vec<_>>(),
                "normalization": "unit-diagonal",
            })))
        }
        Command::ConnectFlow => {
            let a = inp.a()?;
            let c = connect_via_flow(&a, cfg.rho, cfg.tol)?;
            Ok(Outcome::ok(json!({
                "rho": cfg.rho,
                "a_inf": herm(&a),
                "a_minus_inf": herm(&c.a_minus),
                "phi_end": herm(&c.phi_end),
                "conservation": conservation(&c.conservation),
                "diagnostics": flow_diagnostics(&c.flow),
            })))
        }
        Command::ConnectSolve => {
            let a = inp.a()?;
            let guess = match &cfg.a_minus {
                Some(_) => {
                    let g = cfg.a_minus.clone();
                    inp.hermitian("a_minus", &g)?
                }
                None => connect_via_flow(&a, cfg.rho, cfg.tol)?.a_minus,
            };
            let s = connect_via_stokes(&a, &guess, cfg.rho, &cfg.solver_options())?;
            Ok(Outcome::ok(json!({
                "rho": cfg.rho,
                "a_inf": herm(&a),
                "initial_guess": herm(&guess),
                "a_minus_inf": herm(&s.a_minus),
                "residual": s.residual,
                "initial_residual": s.initial_residual,
                "iterations": s.iterations,
            })))
        }
        Command::VerifyConnection => {
            let a = inp.a()?;
            let (a_minus, flow_rho) = match &cfg.a_minus {
                Some(_) => {
                    let g = cfg.a_minus.clone();
                    (inp.hermitian("a_minus", &g)?, None)
                }
                None => (connect_via_flow(&a, cfg.rho, cfg.tol)?.a_minus, Some(cfg.rho)),
            };
            let vrho = cfg.verify.rho.unwrap_or(cfg.rho);
            let r = verify_connection(&a, &a_minus, vrho, cfg.verify.tol, &cfg.stokes.seeded())?;
            let out = json!({
                "rho": vrho,
                "flow_rho": flow_rho,
                "a_inf": herm(&a),
                "a_minus_inf": herm(&a_minus),
                "residual": r.residual,
                "relative_residual": r.relative_residual(),
                "s_plus_norm": r.s_plus_norm,
                "tol": r.tol,
                "passed": r.passed,
                "closed_form_error": r.closed_form_error,
                "stokes_from_plus": stokes_pair(&r.stokes_from_plus),
                "stokes_from_minus": stokes_pair(&r.stokes_from_minus),
            });
            let failure = (!r.passed).then(|| {
                format!(
                    "relative residual {:.3e} exceeds {:.1e}",
                    r.relative_residual(),
                    r.tol
                )
            });
            Ok(Outcome { results: out, failure })
        }
        Command::PviParams => {
            let phi = match &cfg.phi {
                Some(_) => inp.phi()?,
                None => return Err(Error::schema("phi", "required for pvi-params")),
            };
            let u = inp.point(phi.dim())?;
            let p = pvi_parameters(&phi, &u, cfg.eig_tol)?;
            Ok(Outcome::ok(json!({
                "x": p.x,
                "theta": p.theta.iter().map(|z| complex(*z)).collect::<Vec<_>>(),
                "theta_inf": complex(p.theta_inf),
                "alpha": complex(p.alpha),
                "beta": complex(p.beta),
                "gamma": complex(p.gamma),
                "delta": complex(p.delta),
            })))
        }
    }
}

fn conservation(c: &Conservation) -> Value {
    json!({
        "hermiticity_defect": c.hermiticity_defect,
        "diagonal_drift": c.diagonal_drift,
        "spectrum_drift": c.spectrum_drift,
    })
}

fn flow_diagnostics(d: &FlowDiagnostics) -> Value {
    json!({
        "accepted_steps": d.stats.accepted,
        "rejected_steps": d.stats.rejected,
        "rhs_evals": d.stats.rhs_evals,
        "max_symmetrization": d.max_symmetrization,
        "path_length": d.path_length,
        "tol": d.tol,
    })
}

pub fn stokes_pair(p: &StokesPair) -> Value {
    let d = &p.diagnostics;
    let mut diag = Map::new();
    diag.insert("triangularity_defect".into(), real(d.triangularity_defect));
    diag.insert("dagger_defect".into(), d.dagger_defect.map(real).unwrap_or(Value::Null));
    diag.insert("anchor_radius".into(), real(d.anchor_radius));
    diag.insert("series_order".into(), json!(d.series_order));
    diag.insert("series_error".into(), real(d.series_error));
    diag.insert("detour_radius".into(), real(d.detour_radius));
    diag.insert("ode_tol".into(), real(d.ode_tol));
    diag.insert("rhs_evals".into(), json!(d.stats.rhs_evals));
    diag.insert("escalated".into(), json!(d.escalated));
    json!({
        "s_plus": matrix(&p.s_plus),
        "s_minus": matrix(&p.s_minus),
        "sigma": p.sigma.images(),
        "diagnostics": Value::Object(diag),
    })
}

/// Reads `results.s_plus`-style fields back as complex numbers.
pub fn complex_from_json(v: &Value) -> Option<C64> {
    let a = v.as_array()?;
    Some(C64::new(a.first()?.as_f64()?, a.get(1)?.as_f64()?))
}
