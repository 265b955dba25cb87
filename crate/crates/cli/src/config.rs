//! JSON configuration: schema, dotted-path overrides, and the pieces each
//! solver needs (coefficient set, mesh, simulation options).

use advsis_core::dynamics::{SimOptions, StateField};
use advsis_core::expr::parse_expr;
use advsis_core::mesh::{Grading, Mesh};
use advsis_core::spectral::BcVariant;
use advsis_core::CoefficientSet;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub domain: DomainCfg,
    pub coefficients: CoeffCfg,
    pub params: ParamsCfg,
    #[serde(default)]
    pub initial: InitialCfg,
    #[serde(default)]
    pub time: TimeCfg,
    #[serde(default)]
    pub solver: SolverCfg,
    #[serde(default)]
    pub experiment: Option<ExperimentCfg>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainCfg {
    #[serde(rename = "L")]
    pub length: f64,
    pub cells: usize,
    #[serde(default)]
    pub grading: GradingCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradingCfg {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default = "one")]
    pub ratio: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for GradingCfg {
    fn default() -> Self {
        GradingCfg { kind: "uniform".into(), ratio: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffCfg {
    #[serde(rename = "Lambda")]
    pub lambda: String,
    pub mu: String,
    pub beta: String,
    pub gamma: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsCfg {
    #[serde(rename = "dS")]
    pub d_s: f64,
    #[serde(rename = "dI")]
    pub d_i: f64,
    pub q: f64,
    pub m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCfg {
    #[serde(rename = "S")]
    pub s: String,
    #[serde(rename = "I")]
    pub i: String,
}

impl Default for InitialCfg {
    fn default() -> Self {
        InitialCfg { s: "1".into(), i: "0.1".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeCfg {
    pub dt: f64,
    pub t_end: f64,
    pub output_every: f64,
}

impl Default for TimeCfg {
    fn default() -> Self {
        TimeCfg { dt: 0.05, t_end: 200.0, output_every: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverCfg {
    pub newton_tol: f64,
    pub eig_tol: f64,
    pub bc_variant: String,
}

impl Default for SolverCfg {
    fn default() -> Self {
        SolverCfg { newton_tol: 1e-10, eig_tol: 1e-12, bc_variant: "derived".into() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentCfg {
    pub kind: String,
    pub ladder: Vec<f64>,
    pub tolerance: f64,
    /// Parameter the ladder sweeps for kinds that admit several
    /// (`r0_limits`: "q", "dI" or "dS").
    #[serde(default)]
    pub param: Option<String>,
}

impl Config {
    pub fn from_path(path: &str) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Config, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    /// Apply `--set key=value` overrides on the JSON tree, then `--cells`.
    pub fn with_overrides(
        mut value: serde_json::Value,
        sets: &[String],
        cells: Option<usize>,
    ) -> Result<Config, CliError> {
        fn set_path(
            node: &mut serde_json::Value,
            full: &str,
            parts: &[&str],
            raw: &str,
        ) -> Result<(), CliError> {
            let map = node.as_object_mut().ok_or_else(|| {
                CliError::Config(format!("`{full}` does not address an object"))
            })?;
            if parts.len() == 1 {
                // keep string-typed fields (the expression slots) strings
                let new = if matches!(map.get(parts[0]), Some(serde_json::Value::String(_))) {
                    serde_json::Value::String(raw.to_string())
                } else {
                    match serde_json::from_str(raw) {
                        Ok(v) => v,
                        Err(_) => serde_json::Value::String(raw.to_string()),
                    }
                };
                map.insert(parts[0].to_string(), new);
                Ok(())
            } else {
                let child = map
                    .entry(parts[0].to_string())
                    .or_insert_with(|| serde_json::Value::Object(Default::default()));
                set_path(child, full, &parts[1..], raw)
            }
        }
        for item in sets {
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set needs key=value, got `{item}`")))?;
            let parts: Vec<&str> = path.split('.').collect();
            set_path(&mut value, path, &parts, raw)?;
        }
        if let Some(n) = cells {
            value["domain"]["cells"] = serde_json::Value::from(n);
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn coefficient_set(&self) -> Result<CoefficientSet, CliError> {
        Ok(CoefficientSet {
            lambda: parse_expr(&self.coefficients.lambda)?,
            mu: parse_expr(&self.coefficients.mu)?,
            beta: parse_expr(&self.coefficients.beta)?,
            gamma: parse_expr(&self.coefficients.gamma)?,
            d_s: self.params.d_s,
            d_i: self.params.d_i,
            q: self.params.q,
            m: self.params.m,
            length: self.domain.length,
        })
    }

    pub fn mesh(&self) -> Result<Mesh, CliError> {
        let grading = match self.domain.grading.kind.as_str() {
            "uniform" => Grading::Uniform,
            "geometric" => Grading::Geometric { ratio: self.domain.grading.ratio },
            other => {
                return Err(CliError::Config(format!(
                    "unknown grading `{other}` (uniform | geometric)"
                )))
            }
        };
        Ok(Mesh::new(self.domain.length, self.domain.cells, grading)?)
    }

    /// Mesh plus validated coefficient set.
    pub fn problem(&self) -> Result<(CoefficientSet, Mesh), CliError> {
        let mesh = self.mesh()?;
        let coeffs = self.coefficient_set()?;
        coeffs.validate(&mesh)?;
        Ok((coeffs, mesh))
    }

    pub fn initial_state(&self, mesh: &Mesh) -> Result<StateField, CliError> {
        let s_expr = parse_expr(&self.initial.s)?;
        let i_expr = parse_expr(&self.initial.i)?;
        let s: Vec<f64> = mesh.centers.iter().map(|x| s_expr.eval(*x)).collect();
        let i: Vec<f64> = mesh.centers.iter().map(|x| i_expr.eval(*x)).collect();
        Ok(StateField::new(s, i, 0.0)?)
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions::new(self.time.dt, self.time.t_end, self.time.output_every)
    }

    pub fn bc_variant(&self) -> Result<BcVariant, CliError> {
        match self.solver.bc_variant.as_str() {
            "paper" => Ok(BcVariant::Paper),
            "derived" => Ok(BcVariant::Derived),
            other => Err(CliError::Config(format!(
                "unknown bc_variant `{other}` (paper | derived)"
            ))),
        }
    }

    /// Canonical serialization used for the provenance hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.canonical_json().as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            domain: DomainCfg { length: 1.0, cells: 400, grading: GradingCfg::default() },
            coefficients: CoeffCfg {
                lambda: "1".into(),
                mu: "1".into(),
                beta: "3".into(),
                gamma: "1".into(),
            },
            params: ParamsCfg { d_s: 1.0, d_i: 1.0, q: 0.0, m: 1.0 },
            initial: InitialCfg::default(),
            time: TimeCfg::default(),
            solver: SolverCfg::default(),
            experiment: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrip() {
        let cfg = Config::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back = Config::from_json(&text).unwrap();
        assert_eq!(back.domain.cells, 400);
        assert_eq!(back.coefficients.beta, "3");
    }

    #[test]
    fn overrides_apply() {
        let value = serde_json::to_value(Config::default()).unwrap();
        let cfg = Config::with_overrides(
            value,
            &["params.q=2.5".to_string(), "coefficients.beta=1 + x".to_string()],
            Some(128),
        )
        .unwrap();
        assert_eq!(cfg.params.q, 2.5);
        assert_eq!(cfg.coefficients.beta, "1 + x");
        assert_eq!(cfg.domain.cells, 128);
    }

    #[test]
    fn bad_override_reports() {
        let value = serde_json::to_value(Config::default()).unwrap();
        assert!(Config::with_overrides(value, &["nonsense".to_string()], None).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(a.hash(), b.hash());
        b.params.q = 1.0;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn problem_validates() {
        let mut cfg = Config::default();
        cfg.coefficients.mu = "x - 2".into();
        assert!(cfg.problem().is_err());
    }
}
