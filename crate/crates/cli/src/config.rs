use std::path::{Path, PathBuf};

use empc_core::control::MpcConfig;
use empc_core::nn::{Architecture, ModelSpec, SplitFractions, TrainConfig};
use empc_core::plant::{CstrPlant, OpenLoopConfig, Plant, ToyPlant};
use empc_core::pwl::ApproxConfig;
use empc_core::{BoxDomain, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Cstr,
    Toy,
}

impl PlantKind {
    pub fn build(self) -> Box<dyn Plant + Send> {
        match self {
            PlantKind::Cstr => Box::new(CstrPlant::default()),
            PlantKind::Toy => Box::new(ToyPlant),
        }
    }
}

/// Everything a subcommand can read. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub plant: PlantKind,
    /// Root of every artifact; relative paths below resolve against it.
    pub out_dir: PathBuf,
    /// Worker threads, 0 for one per core.
    pub threads: usize,
    pub paths: Paths,
    pub data: DataSection,
    pub model: ModelSection,
    pub approx: ApproxConfig,
    pub mpc: MpcConfig,
    pub sim: SimSection,
    pub bridge: BridgeSection,
    pub surface: SurfaceSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: PathBuf,
    pub models: PathBuf,
    pub regions: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Box the initial states are drawn from. Inputs use `mpc.u_lo`/`mpc.u_hi`.
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub n_traj: usize,
    pub steps_per_traj: usize,
    pub truncate_factor: f64,
    /// The state scaler spans the x-box scaled by this factor.
    pub scaler_margin: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub architectures: Vec<Architecture>,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub split: SplitFractions,
    /// Midpoint pairs for the convexity report written after training.
    pub convexity_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub x0: Vec<Vec<f64>>,
    /// Stack for `simulate` and `bridge-run`: icnn, fnn or open-loop.
    pub controller: String,
    /// Stacks for `compare`.
    pub stacks: Vec<String>,
    pub setpoint: Vec<f64>,
    /// Errors are divided by these before IAE and settling; empty means the
    /// x-box half widths.
    pub error_scale: Vec<f64>,
    pub band: f64,
    /// Runs halt once the state leaves the x-box scaled by this; 0 disables.
    pub halt_factor: f64,
    /// Adds the solve-time column to trajectory logs.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeSection {
    /// host:port; the EMPC_ENDPOINT variable and --endpoint take precedence.
    pub endpoint: String,
    pub timeout_secs: f64,
    /// State the server starts every session from.
    pub x0: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceSection {
    pub architecture: Architecture,
    /// Measured state the first-step objective is evaluated at.
    pub x: Vec<f64>,
    pub points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            plant: PlantKind::Cstr,
            out_dir: PathBuf::from("out"),
            threads: 0,
            paths: Paths::default(),
            data: DataSection::default(),
            model: ModelSection::default(),
            approx: ApproxConfig::default(),
            mpc: MpcConfig::default(),
            sim: SimSection::default(),
            bridge: BridgeSection::default(),
            surface: SurfaceSection::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data".into(),
            models: "models".into(),
            regions: "regions".into(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            x_lo: vec![-1.95, -90.0],
            x_hi: vec![1.95, 90.0],
            n_traj: 5000,
            steps_per_traj: 4,
            truncate_factor: 1.2,
            scaler_margin: 1.2,
            seed: 1,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        let spec = ModelSpec::default();
        Self {
            architectures: vec![Architecture::Icnn, Architecture::Fnn],
            hidden: spec.hidden,
            train: spec.train,
            split: spec.split,
            convexity_pairs: 10_000,
        }
    }
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            x0: vec![vec![0.9, 45.0], vec![1.35, -65.0], vec![-1.1, -90.0], vec![-1.4, 80.0]],
            controller: "icnn".into(),
            stacks: vec!["icnn".into(), "open-loop".into()],
            setpoint: vec![0.0, 0.0],
            error_scale: Vec::new(),
            band: 0.1,
            halt_factor: 1.5,
            timing: true,
        }
    }
}

impl Default for BridgeSection {
    fn default() -> Self {
        Self {
            endpoint: "127.0.0.1:7878".into(),
            timeout_secs: 5.0,
            x0: vec![0.0, 0.0],
        }
    }
}

impl Default for SurfaceSection {
    fn default() -> Self {
        Self {
            architecture: Architecture::Icnn,
            x: vec![0.0, 0.0],
            points: 41,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl RunConfig {
    /// Reads `file` (if any), applies `key=value` overrides and validates.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| invalid(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| invalid(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let plant = self.plant.build();
        let (n, m) = (plant.state_dim(), plant.input_dim());
        let x_box = self.x_box()?;
        if x_box.dim() != n {
            return Err(Error::dims("data.x_lo", n, x_box.dim()));
        }
        self.mpc.validate()?;
        if self.mpc.u_lo.len() != m || self.mpc.state_weights.len() != n {
            return Err(Error::dims("mpc weights and bounds", n + m, self.mpc.state_weights.len() + self.mpc.u_lo.len()));
        }
        self.openloop()?.validate(plant.as_ref())?;
        if !(self.data.scaler_margin >= 1.0) {
            return Err(invalid("data.scaler_margin must be at least 1"));
        }
        if self.model.architectures.is_empty() {
            return Err(invalid("model.architectures is empty"));
        }
        for a in &self.model.architectures {
            self.model_spec(*a).validate()?;
        }
        self.approx.validate()?;
        for x0 in &self.sim.x0 {
            if x0.len() != n {
                return Err(Error::dims("sim.x0", n, x0.len()));
            }
        }
        if self.sim.setpoint.len() != n {
            return Err(Error::dims("sim.setpoint", n, self.sim.setpoint.len()));
        }
        if !self.sim.error_scale.is_empty() && self.sim.error_scale.len() != n {
            return Err(Error::dims("sim.error_scale", n, self.sim.error_scale.len()));
        }
        if self.error_scale().iter().any(|s| !(*s > 0.0)) || !(self.sim.band > 0.0) {
            return Err(invalid("sim.error_scale and sim.band must be positive"));
        }
        if !(self.sim.halt_factor == 0.0 || self.sim.halt_factor >= 1.0) {
            return Err(invalid("sim.halt_factor must be 0 or at least 1"));
        }
        for s in std::iter::once(&self.sim.controller).chain(&self.sim.stacks) {
            parse_stack(s)?;
        }
        if self.bridge.x0.len() != n || !(self.bridge.timeout_secs > 0.0) {
            return Err(invalid("bridge.x0 must match the plant and bridge.timeout_secs must be positive"));
        }
        if self.surface.x.len() != n || self.surface.points < 2 {
            return Err(invalid("surface.x must match the plant and surface.points must be at least 2"));
        }
        Ok(())
    }

    pub fn x_box(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.data.x_lo.clone(), self.data.x_hi.clone())
            .map_err(|_| invalid("data.x_lo must lie strictly below data.x_hi"))
    }

    pub fn openloop(&self) -> Result<OpenLoopConfig> {
        Ok(OpenLoopConfig {
            x_box: self.x_box()?,
            u_box: self.mpc.u_box()?,
            n_traj: self.data.n_traj,
            horizon: self.mpc.horizon,
            steps_per_traj: self.data.steps_per_traj,
            truncate_factor: self.data.truncate_factor,
            dt: self.mpc.dt,
            seed: self.data.seed,
        })
    }

    pub fn model_spec(&self, architecture: Architecture) -> ModelSpec {
        ModelSpec {
            architecture,
            hidden: self.model.hidden.clone(),
            predicts_absolute: architecture == Architecture::Icnn,
            train: self.model.train.clone(),
            split: self.model.split,
        }
    }

    pub fn error_scale(&self) -> Vec<f64> {
        if self.sim.error_scale.is_empty() {
            self.data.x_lo.iter().zip(&self.data.x_hi).map(|(l, h)| 0.5 * (h - l)).collect()
        } else {
            self.sim.error_scale.clone()
        }
    }

    /// `path` against `out_dir`, made absolute.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        let p = if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.out_dir.join(path)
        };
        std::path::absolute(&p).unwrap_or(p)
    }

    /// Makes every configured path absolute.
    pub fn resolve_paths(&mut self) {
        self.out_dir = std::path::absolute(&self.out_dir).unwrap_or_else(|_| self.out_dir.clone());
        self.paths = Paths {
            data: self.resolve(&self.paths.data),
            models: self.resolve(&self.paths.models),
            regions: self.resolve(&self.paths.regions),
        };
    }
}

/// A controller stack named in the config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stack {
    Mpc(Architecture),
    OpenLoop,
}

pub fn parse_stack(name: &str) -> Result<Stack> {
    match name {
        "icnn" => Ok(Stack::Mpc(Architecture::Icnn)),
        "fnn" => Ok(Stack::Mpc(Architecture::Fnn)),
        "open-loop" => Ok(Stack::OpenLoop),
        other => Err(invalid(format!("unknown controller stack {other:?} (icnn, fnn, open-loop)"))),
    }
}

pub fn arch_name(a: Architecture) -> &'static str {
    match a {
        Architecture::Icnn => "icnn",
        Architecture::Fnn => "fnn",
    }
}

/// `a.b.c=value`; the value is read as a TOML literal, or as a bare string
/// when it is not one.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_owned()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| invalid(format!("empty key in {spec:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_owned()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| invalid(format!("{p} in {key} is not a section")))?;
    }
    cur.insert(last.to_owned(), value);
    Ok(())
}

/// Every key with its default, one per line, for `--help`.
pub fn key_listing() -> String {
    let value = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
    let mut lines = Vec::new();
    flatten("", &value, &mut lines);
    let width = lines.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (TOML file via --config, or --set key=value):\n");
    for (k, v) in lines {
        out.push_str(&format!("  {k:<width$}  {v}\n"));
    }
    out
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_owned(), other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = RunConfig::load(None, &["mpc.budget_secs=0.5".into(), "approx.error_bound = 0.1".into()]).unwrap();
        assert_eq!(cfg.mpc.budget_secs, 0.5);
        assert_eq!(cfg.approx.error_bound, 0.1);
        let cfg = RunConfig::load(None, &["out_dir=/tmp/x".into(), "plant=toy".into(), "data.x_lo=[-2,-2]".into(), "data.x_hi=[2,2]".into(), "mpc.u_lo=[-1,-1]".into(), "mpc.u_hi=[1,1]".into(), "mpc.state_weights=[1,1]".into(), "mpc.input_weights=[1,1]".into()]).unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.plant, PlantKind::Toy);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunConfig::load(None, &["mpc.budget=1".into()]).is_err());
        assert!(RunConfig::load(None, &["nonsense=1".into()]).is_err());
        assert!(RunConfig::load(None, &["data.x_lo=[2, -90]".into()]).is_err());
        assert!(RunConfig::load(None, &["sim.controller=pid".into()]).is_err());
        assert!(RunConfig::load(None, &["novalue".into()]).is_err());
    }

    #[test]
    fn listing_names_every_section() {
        let text = key_listing();
        for key in ["plant", "out_dir", "threads", "paths.data", "data.n_traj", "model.train.epochs", "model.split.train", "approx.error_bound", "approx.range", "mpc.selection", "sim.x0", "bridge.endpoint", "surface.points"] {
            assert!(text.lines().any(|l| l.trim_start().starts_with(&format!("{key} "))), "{key} missing");
        }
    }
}
