//! Run configuration: canonical JSON, defaults, validation and hashing.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::diameter::DiameterParams;
use crate::experiments::dimension::{FlatteningParams, HighDimensionParams, SmoothedParams};
use crate::experiments::equidist::{EquidistParams, GapParams};
use crate::experiments::hitting::{DensityParams, HittingParams};
use crate::experiments::nondiv::{ContractionParams, NonDivergenceParams};
use crate::group::GroupElement;
use crate::lattice::{HeightParams, SpacePoint};
use crate::measures::presets::PRESET_NAMES;
use crate::measures::{generator_presets, FiniteSupportMeasure, DEFAULT_MERGE_TOL};
use crate::rng::Seed;

pub const EXPERIMENTS: &[&str] = &[
    "walk",
    "diameter",
    "density",
    "hitting",
    "nondiv",
    "contraction",
    "flatten",
    "dimension",
    "smoothed",
    "equidist",
    "gap",
];

pub const DEFAULT_SEED: &str = "5eed";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    /// Row-major `[a, b, c, d]`.
    pub entries: [f64; 4],
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MeasureSpec {
    Preset { preset: String, scale: f64 },
    Atoms { atoms: Vec<Atom>, merge_tol: f64 },
}

impl MeasureSpec {
    pub fn preset(name: &str, scale: f64) -> Self {
        MeasureSpec::Preset {
            preset: name.into(),
            scale,
        }
    }

    pub fn build(&self) -> Result<FiniteSupportMeasure> {
        match self {
            MeasureSpec::Preset { preset, scale } => generator_presets(preset, *scale),
            MeasureSpec::Atoms { atoms, merge_tol } => {
                let atoms = atoms
                    .iter()
                    .map(|a| {
                        let [p, q, r, s] = a.entries;
                        GroupElement::new(p, q, r, s).map(|g| (g, a.weight))
                    })
                    .collect::<Result<Vec<_>>>()?;
                FiniteSupportMeasure::new(atoms, *merge_tol)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointSpec {
    /// `"identity"`.
    Named(String),
    /// Iwasawa triple `[x, y, θ]`.
    Iwasawa([f64; 3]),
}

impl PointSpec {
    pub fn build(&self) -> Result<SpacePoint> {
        match self {
            PointSpec::Named(s) if s == "identity" => Ok(SpacePoint::identity_coset()),
            PointSpec::Named(s) => Err(Error::InvalidArgument(format!("unknown point `{s}`"))),
            PointSpec::Iwasawa([x, y, t]) => Ok(SpacePoint::from_coordinates(*x, *y, *t)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub atoms: Option<usize>,
    pub nodes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpotCheckSpec {
    pub enabled: bool,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub sigmas: f64,
    pub min_pass_fraction: f64,
}

impl Default for SpotCheckSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            n_list: vec![1, 2, 3],
            trials: 20_000,
            sigmas: 3.0,
            min_pass_fraction: 0.95,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkParams {
    pub n_steps: usize,
    pub trajectories: usize,
    pub bumps: usize,
    pub smooth: usize,
    /// Rows of the per-step table are written up to this many steps.
    pub max_rows: usize,
}

impl Default for WalkParams {
    fn default() -> Self {
        Self {
            n_steps: 10_000,
            trajectories: 4,
            bumps: 3,
            smooth: 2,
            max_rows: 10_000,
        }
    }
}

/// Experiment-specific settings: grids, trial counts and verdict thresholds.
#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    Walk(WalkParams),
    Diameter(DiameterParams),
    Density(DensityParams),
    Hitting(HittingParams),
    NonDivergence(NonDivergenceParams),
    Contraction(ContractionParams),
    Flatten(FlatteningParams),
    Dimension(HighDimensionParams),
    Smoothed(SmoothedParams),
    Equidist(EquidistParams),
    Gap(GapParams),
}

fn default_params_value(experiment: &str) -> Option<Value> {
    let v = match experiment {
        "walk" => serde_json::to_value(WalkParams::default()),
        "diameter" => serde_json::to_value(DiameterParams::default()),
        "density" => serde_json::to_value(DensityParams::default()),
        "hitting" => serde_json::to_value(HittingParams::default()),
        "nondiv" => serde_json::to_value(NonDivergenceParams::default()),
        "contraction" => serde_json::to_value(ContractionParams::default()),
        "flatten" => serde_json::to_value(FlatteningParams::default()),
        "dimension" => serde_json::to_value(HighDimensionParams::default()),
        "smoothed" => serde_json::to_value(SmoothedParams::default()),
        "equidist" => serde_json::to_value(EquidistParams::default()),
        "gap" => serde_json::to_value(GapParams::default()),
        _ => return None,
    };
    v.ok()
}

impl Params {
    fn from_value(experiment: &str, v: Value) -> std::result::Result<Self, serde_json::Error> {
        use serde_json::from_value as f;
        Ok(match experiment {
            "walk" => Params::Walk(f(v)?),
            "diameter" => Params::Diameter(f(v)?),
            "density" => Params::Density(f(v)?),
            "hitting" => Params::Hitting(f(v)?),
            "nondiv" => Params::NonDivergence(f(v)?),
            "contraction" => Params::Contraction(f(v)?),
            "flatten" => Params::Flatten(f(v)?),
            "dimension" => Params::Dimension(f(v)?),
            "smoothed" => Params::Smoothed(f(v)?),
            "equidist" => Params::Equidist(f(v)?),
            "gap" => Params::Gap(f(v)?),
            other => unreachable!("experiment {other} validated earlier"),
        })
    }

    fn to_value(&self) -> Value {
        let v = match self {
            Params::Walk(p) => serde_json::to_value(p),
            Params::Diameter(p) => serde_json::to_value(p),
            Params::Density(p) => serde_json::to_value(p),
            Params::Hitting(p) => serde_json::to_value(p),
            Params::NonDivergence(p) => serde_json::to_value(p),
            Params::Contraction(p) => serde_json::to_value(p),
            Params::Flatten(p) => serde_json::to_value(p),
            Params::Dimension(p) => serde_json::to_value(p),
            Params::Smoothed(p) => serde_json::to_value(p),
            Params::Equidist(p) => serde_json::to_value(p),
            Params::Gap(p) => serde_json::to_value(p),
        };
        v.expect("parameter structs serialize")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: Seed,
    pub measure: MeasureSpec,
    /// The small-support measure μ_D; experiments that need one default to
    /// `rot35-unipotent-scaled` at ε = 0.05.
    pub measure_d: Option<MeasureSpec>,
    pub x0: PointSpec,
    pub kappa: f64,
    pub budgets: Budgets,
    pub spot_check: SpotCheckSpec,
    /// Worker threads; not part of the hash since outputs do not depend on it.
    pub threads: Option<usize>,
    pub params: Params,
}

const TOP_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "measure",
    "measure_d",
    "x0",
    "kappa",
    "budgets",
    "spot_check",
    "threads",
    "params",
];

/// Compares `v` against the shape of the default value `d`, recording every
/// mismatch with its path.
fn check_shape(path: &str, v: &Value, d: &Value, errors: &mut Vec<String>) {
    match (d, v) {
        (Value::Object(dm), Value::Object(vm)) => {
            for (k, x) in vm {
                let p = format!("{path}.{k}");
                match dm.get(k) {
                    Some(dx) => check_shape(&p, x, dx, errors),
                    None => errors.push(format!("{p}: unknown field")),
                }
            }
        }
        (Value::Object(_), _) => errors.push(format!("{path}: expected an object")),
        (Value::Array(da), Value::Array(va)) => {
            if let Some(de) = da.first() {
                for (i, x) in va.iter().enumerate() {
                    check_shape(&format!("{path}[{i}]"), x, de, errors);
                }
            }
        }
        (Value::Array(_), _) => errors.push(format!("{path}: expected an array")),
        (Value::Number(n), Value::Number(m)) => {
            if n.is_u64() && !m.is_u64() {
                errors.push(format!("{path}: expected a non-negative integer, got {m}"));
            } else if m.as_f64().is_none_or(|x| !x.is_finite()) {
                errors.push(format!("{path}: expected a finite number"));
            }
        }
        (Value::Number(_), _) => errors.push(format!("{path}: expected a number")),
        (Value::Bool(_), Value::Bool(_)) | (Value::String(_), Value::String(_)) => {}
        (Value::Bool(_), _) => errors.push(format!("{path}: expected a boolean")),
        (Value::String(_), _) => errors.push(format!("{path}: expected a string")),
        // optional fields default to null; accept numbers or null there
        (Value::Null, Value::Null | Value::Number(_)) => {}
        (Value::Null, _) => errors.push(format!("{path}: expected a number or null")),
    }
}

fn positive(path: &str, x: f64, errors: &mut Vec<String>) {
    if !(x > 0.0) {
        errors.push(format!("{path}: must be positive, got {x}"));
    }
}

fn unit_interval(path: &str, x: f64, errors: &mut Vec<String>) {
    if !(x > 0.0 && x < 1.0) {
        errors.push(format!("{path}: must lie in (0, 1), got {x}"));
    }
}

fn nonempty<T>(path: &str, v: &[T], errors: &mut Vec<String>) {
    if v.is_empty() {
        errors.push(format!("{path}: must not be empty"));
    }
}

fn semantic_checks(p: &Params, e: &mut Vec<String>) {
    match p {
        Params::Walk(w) => {
            if w.trajectories == 0 {
                e.push("params.trajectories: must be at least 1".into());
            }
        }
        Params::Diameter(d) => {
            nonempty("params.r_grid", &d.r_grid, e);
            for (i, r) in d.r_grid.iter().enumerate() {
                positive(&format!("params.r_grid[{i}]"), *r, e);
            }
            if d.r_grid.windows(2).any(|w| !(w[0] > w[1])) {
                e.push("params.r_grid: must be strictly descending".into());
            }
            positive("params.dedup_factor", d.dedup_factor, e);
            positive("params.h_cap_factor", d.h_cap_factor, e);
        }
        Params::Density(d) => {
            positive("params.r", d.r, e);
            nonempty("params.a_grid", &d.a_grid, e);
            for (i, a) in d.a_grid.iter().enumerate() {
                positive(&format!("params.a_grid[{i}]"), *a, e);
            }
            if d.trials == 0 {
                e.push("params.trials: must be at least 1".into());
            }
        }
        Params::Hitting(h) => {
            positive("params.r", h.r, e);
            nonempty("params.x_list", &h.x_list, e);
            if h.n_steps.is_none() && h.c_log.is_none() {
                e.push("params.n_steps: required when params.c_log is null".into());
            }
            if h.n_steps == Some(0) {
                e.push("params.n_steps: must be at least 1".into());
            }
            if h.trials == 0 {
                e.push("params.trials: must be at least 1".into());
            }
        }
        Params::NonDivergence(n) => {
            nonempty("params.n_list", &n.n_list, e);
            nonempty("params.h_grid", &n.h_grid, e);
            if n.trials == 0 {
                e.push("params.trials: must be at least 1".into());
            }
        }
        Params::Contraction(c) => {
            nonempty("params.n_list", &c.n_list, e);
            if !(c.height_range[0] >= 1.0 && c.height_range[1] > c.height_range[0]) {
                e.push("params.height_range: need 1 ≤ lo < hi".into());
            }
            if c.points < 3 {
                e.push("params.points: must be at least 3".into());
            }
            if c.trials < 2 {
                e.push("params.trials: must be at least 2".into());
            }
        }
        Params::Flatten(f) => {
            nonempty("params.delta_grid", &f.delta_grid, e);
            for (i, d) in f.delta_grid.iter().enumerate() {
                unit_interval(&format!("params.delta_grid[{i}]"), *d, e);
            }
        }
        Params::Dimension(d) => {
            nonempty("params.delta_grid", &d.delta_grid, e);
            for (i, x) in d.delta_grid.iter().enumerate() {
                unit_interval(&format!("params.delta_grid[{i}]"), *x, e);
            }
            unit_interval("params.mass_quantile", d.mass_quantile, e);
        }
        Params::Smoothed(s) => {
            unit_interval("params.delta", s.delta, e);
            unit_interval("params.eta", s.eta, e);
            if s.eval_points < 2 {
                e.push("params.eval_points: must be at least 2".into());
            }
        }
        Params::Equidist(q) => {
            nonempty("params.n_grid", &q.n_grid, e);
            if q.trials < 2 {
                e.push("params.trials: must be at least 2".into());
            }
            for (i, b) in q.beta_list.iter().enumerate() {
                if !(*b >= 0.0) {
                    e.push(format!("params.beta_list[{i}]: must be non-negative"));
                }
            }
        }
        Params::Gap(g) => {
            if g.haar_count < 2 {
                e.push("params.haar_count: must be at least 2".into());
            }
            if g.walk_trials == 0 {
                e.push("params.walk_trials: must be at least 1".into());
            }
            positive("params.y_max", g.y_max, e);
        }
    }
}

fn check_measure(path: &str, v: &Value, e: &mut Vec<String>) {
    let Some(m) = v.as_object() else {
        e.push(format!("{path}: expected an object"));
        return;
    };
    if m.contains_key("preset") {
        match m.get("preset").and_then(Value::as_str) {
            Some(name) if PRESET_NAMES.contains(&name) => {}
            Some(name) => e.push(format!("{path}.preset: unknown preset `{name}`")),
            None => e.push(format!("{path}.preset: expected a string")),
        }
        match m.get("scale").map(Value::as_f64) {
            None => {}
            Some(Some(s)) if s > 0.0 && s.is_finite() => {}
            Some(_) => e.push(format!("{path}.scale: must be a positive number")),
        }
        for k in m.keys().filter(|k| *k != "preset" && *k != "scale") {
            e.push(format!("{path}.{k}: unknown field"));
        }
    } else if let Some(atoms) = m.get("atoms") {
        let Some(list) = atoms.as_array().filter(|l| !l.is_empty()) else {
            e.push(format!("{path}.atoms: expected a non-empty array"));
            return;
        };
        for (i, a) in list.iter().enumerate() {
            let entries = a.get("entries").and_then(Value::as_array);
            if entries.is_none_or(|x| x.len() != 4 || x.iter().any(|v| v.as_f64().is_none())) {
                e.push(format!("{path}.atoms[{i}].entries: expected four numbers"));
            }
            if a.get("weight").and_then(Value::as_f64).is_none_or(|w| !(w > 0.0)) {
                e.push(format!("{path}.atoms[{i}].weight: must be positive"));
            }
        }
        for k in m.keys().filter(|k| *k != "atoms" && *k != "merge_tol") {
            e.push(format!("{path}.{k}: unknown field"));
        }
    } else {
        e.push(format!("{path}: needs `preset` or `atoms`"));
    }
}

/// Fills omitted measure fields.
fn complete_measure(v: &Value) -> Value {
    let mut m = v.as_object().cloned().unwrap_or_default();
    if m.contains_key("preset") {
        m.entry("scale").or_insert(json!(1.0));
    } else {
        m.entry("merge_tol").or_insert(json!(DEFAULT_MERGE_TOL));
    }
    Value::Object(m)
}

/// Parses and validates a config. `experiment` fills in (or must match) the
/// `experiment` field. All violations are reported together.
pub fn parse_config_for(text: &str, experiment: Option<&str>) -> Result<RunConfig> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let Value::Object(mut top) = v else {
        return Err(Error::Parse("config must be a JSON object".into()));
    };
    let mut e = Vec::new();
    for k in top.keys().filter(|k| !TOP_KEYS.contains(&k.as_str())) {
        e.push(format!("{k}: unknown field"));
    }
    let name = match (top.get("experiment"), experiment) {
        (Some(Value::String(s)), Some(x)) if s != x => {
            e.push(format!("experiment: config names `{s}` but `{x}` was requested"));
            x.to_string()
        }
        (Some(Value::String(s)), _) => s.clone(),
        (Some(_), _) => {
            e.push("experiment: expected a string".into());
            String::new()
        }
        (None, Some(x)) => x.to_string(),
        (None, None) => {
            e.push("experiment: missing".into());
            String::new()
        }
    };
    let defaults = default_params_value(&name);
    if defaults.is_none() && !name.is_empty() {
        e.push(format!("experiment: unknown `{name}` (expected one of {})", EXPERIMENTS.join(", ")));
    }

    let seed = match top.get("seed") {
        None => Seed::from_hex(DEFAULT_SEED),
        Some(Value::String(s)) => {
            let s = Seed::from_hex(s);
            if s.is_none() {
                e.push("seed: expected up to 32 hex digits".into());
            }
            s
        }
        Some(_) => {
            e.push("seed: expected a hex string".into());
            None
        }
    };
    if let Some(m) = top.get("measure") {
        check_measure("measure", m, &mut e);
    }
    match top.get("measure_d") {
        None | Some(Value::Null) => {}
        Some(m) => check_measure("measure_d", m, &mut e),
    }
    match top.get("x0") {
        None | Some(Value::String(_)) => {}
        Some(Value::Array(a)) if a.len() == 3 && a.iter().all(|x| x.as_f64().is_some()) => {
            if a[1].as_f64().is_some_and(|y| !(y > 0.0)) {
                e.push("x0[1]: y must be positive".into());
            }
        }
        Some(_) => e.push("x0: expected \"identity\" or [x, y, theta]".into()),
    }
    if let Some(Value::String(s)) = top.get("x0") {
        if s != "identity" {
            e.push(format!("x0: unknown point `{s}`"));
        }
    }
    match top.get("kappa").map(Value::as_f64) {
        None => {}
        Some(Some(k)) if k > 0.0 => {}
        Some(_) => e.push("kappa: must be a positive number".into()),
    }
    match top.get("threads") {
        None | Some(Value::Null) => {}
        Some(t) if t.as_u64().is_some_and(|t| t > 0) => {}
        Some(_) => e.push("threads: must be a positive integer".into()),
    }
    let budget_defaults = json!({"atoms": 0, "nodes": 0});
    if let Some(b) = top.get("budgets") {
        let mut b = b.clone();
        if let Value::Object(m) = &mut b {
            m.retain(|_, x| !x.is_null());
        }
        check_shape("budgets", &b, &budget_defaults, &mut e);
    }
    let spot_defaults = serde_json::to_value(SpotCheckSpec::default()).unwrap();
    if let Some(s) = top.get("spot_check") {
        check_shape("spot_check", s, &spot_defaults, &mut e);
    }
    let mut params = defaults.clone().unwrap_or(Value::Null);
    if let (Some(d), Some(p)) = (&defaults, top.get("params")) {
        check_shape("params", p, d, &mut e);
        if let (Value::Object(pm), Value::Object(um)) = (&mut params, p) {
            for (k, x) in um {
                pm.insert(k.clone(), x.clone());
            }
        }
    }
    if !e.is_empty() {
        return Err(Error::Validation(e));
    }

    fn typed<T>(e: &mut Vec<String>, what: &str, r: std::result::Result<T, serde_json::Error>) -> Option<T> {
        r.map_err(|err| e.push(format!("{what}: {err}"))).ok()
    }
    let measure = typed(
        &mut e,
        "measure",
        serde_json::from_value(complete_measure(&top.remove("measure").unwrap_or(json!({"preset": "unipotents-rot35"})))),
    );
    let measure_d = match top.remove("measure_d") {
        None | Some(Value::Null) => Some(None),
        Some(m) => typed(&mut e, "measure_d", serde_json::from_value(complete_measure(&m))).map(Some),
    };
    let x0 = typed(&mut e, "x0", serde_json::from_value(top.remove("x0").unwrap_or(json!("identity"))));
    let budgets = typed(&mut e, "budgets", serde_json::from_value(top.remove("budgets").unwrap_or(json!({}))));
    let spot_check = typed(&mut e, "spot_check", serde_json::from_value(top.remove("spot_check").unwrap_or(json!({}))));
    let params = typed(&mut e, "params", Params::from_value(&name, params));
    if let Some(p) = &params {
        semantic_checks(p, &mut e);
    }
    if let Some(MeasureSpec::Atoms { atoms, .. }) = &measure {
        for (i, a) in atoms.iter().enumerate() {
            let [p, q, r, s] = a.entries;
            if GroupElement::new(p, q, r, s).is_err() {
                e.push(format!("measure.atoms[{i}].entries: determinant must be 1"));
            }
        }
    }
    if !e.is_empty() {
        return Err(Error::Validation(e));
    }
    Ok(RunConfig {
        experiment: name,
        seed: seed.expect("checked"),
        measure: measure.expect("checked"),
        measure_d: measure_d.expect("checked"),
        x0: x0.expect("checked"),
        kappa: top.get("kappa").and_then(Value::as_f64).unwrap_or(1.0),
        budgets: budgets.expect("checked"),
        spot_check: spot_check.expect("checked"),
        threads: top.get("threads").and_then(Value::as_u64).map(|t| t as usize),
        params: params.expect("checked"),
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_for(text, None)
}

impl RunConfig {
    pub fn defaults(experiment: &str) -> Result<Self> {
        parse_config_for("{}", Some(experiment))
    }

    /// Fully resolved config as JSON with sorted keys.
    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("experiment".into(), json!(self.experiment));
        m.insert("seed".into(), json!(self.seed.to_hex()));
        m.insert("measure".into(), serde_json::to_value(&self.measure).unwrap());
        m.insert("measure_d".into(), serde_json::to_value(&self.measure_d).unwrap());
        m.insert("x0".into(), serde_json::to_value(&self.x0).unwrap());
        m.insert("kappa".into(), json!(self.kappa));
        m.insert("budgets".into(), serde_json::to_value(&self.budgets).unwrap());
        m.insert("spot_check".into(), serde_json::to_value(&self.spot_check).unwrap());
        m.insert("threads".into(), json!(self.threads));
        m.insert("params".into(), self.params.to_value());
        Value::Object(m)
    }

    pub fn to_canonical_json(&self) -> String {
        self.to_value().to_string()
    }

    /// sha256 of the canonical JSON without the thread count.
    pub fn hash(&self) -> String {
        let mut v = self.to_value();
        v.as_object_mut().unwrap().remove("threads");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    pub fn height(&self) -> HeightParams {
        HeightParams { kappa: self.kappa }
    }

    pub fn measure_d_spec(&self) -> MeasureSpec {
        self.measure_d.clone().unwrap_or_else(|| MeasureSpec::preset("rot35-unipotent-scaled", 0.05))
    }
}
