//! Parameter fitting under microscopic, macroscopic and bi-scale
//! objectives.

mod data;
pub mod de;
mod objective;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use data::{CalibrationData, ObservedPlatoon};
pub use de::{DeConfig, TracePoint};
pub use objective::{objective_bic, objective_mac, objective_mic, Breakdown, Objective, Scales, PENALTY_BASE};

use crate::error::{Error, Result};
use crate::measures::{FuelCoefficients, IntervalSpec};
use crate::models::{reference, GapSemantics, ModelKind, ModelParams, ModelSpec, VehicleClass};

pub const DEFAULT_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Mic,
    Mac,
    Bic,
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectiveKind::Mic => "MiC",
            ObjectiveKind::Mac => "MaC",
            ObjectiveKind::Bic => "BiC",
        })
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mic" => Ok(ObjectiveKind::Mic),
            "mac" => Ok(ObjectiveKind::Mac),
            "bic" => Ok(ObjectiveKind::Bic),
            other => Err(Error::Config(format!("unknown objective `{other}` (mic, mac, bic)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub w0_sys: f64,
    pub w1_mac: f64,
    pub w2_mac: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            w0_sys: 1.0,
            w1_mac: 1.0,
            w2_mac: 1.0,
        }
    }
}

impl Weights {
    pub fn scaled(self, c: f64) -> Self {
        Weights {
            w0_sys: c * self.w0_sys,
            w1_mac: c * self.w1_mac,
            w2_mac: c * self.w2_mac,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Divide each term by the observed variance of its quantity.
    #[default]
    Variance,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    /// Followers read simulated leader states; only the head is replayed.
    #[default]
    Cascade,
    /// Every step starts from observed states.
    TeacherForced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassMode {
    /// One search over the concatenated per-class vectors.
    #[default]
    Joint,
    /// One search per class; vehicles of the other class are replayed.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub weights: Weights,
    pub intervals: Option<IntervalSpec>,
    pub normalization: Normalization,
    pub rollout: RolloutMode,
    pub gap_semantics: GapSemantics,
    pub min_gap_stop: f64,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, intervals: Option<IntervalSpec>) -> Self {
        ObjectiveSpec {
            kind,
            weights: Weights::default(),
            intervals,
            normalization: Normalization::default(),
            rollout: RolloutMode::default(),
            gap_semantics: GapSemantics::default(),
            min_gap_stop: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        for (name, v) in [("w0_sys", w.w0_sys), ("w1_mac", w.w1_mac), ("w2_mac", w.w2_mac)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("weight {name} must be finite and non-negative, got {v}")));
            }
        }
        if self.kind != ObjectiveKind::Mic && self.intervals.is_none() {
            return Err(Error::Config(format!("{} objective needs an interval spec", self.kind)));
        }
        if !(self.min_gap_stop >= 0.0) {
            return Err(Error::Config("min_gap_stop must be non-negative".into()));
        }
        Ok(())
    }
}

/// Search box for one model kind, per class, in `ModelKind::param_names`
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBounds {
    pub kind: ModelKind,
    pub small: Vec<(f64, f64)>,
    pub large: Vec<(f64, f64)>,
}

/// Per-parameter overrides as written in a spec file.
pub type BoundsTable = BTreeMap<String, [f64; 2]>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsOverrides {
    #[serde(default)]
    pub small: BoundsTable,
    #[serde(default)]
    pub large: BoundsTable,
}

impl ParamBounds {
    /// Defaults wide enough for every shipped reference set.
    pub fn default_for(kind: ModelKind) -> Self {
        let b: Vec<(f64, f64)> = match kind {
            ModelKind::Linear => vec![(-1.0, 0.0), (0.0, 3.0), (-2.0, 8.0)],
            ModelKind::Fvd => vec![(0.0, 1.0), (0.0, 1.0), (5.0, 40.0), (1.0, 30.0), (0.0, 15.0)],
            ModelKind::Idm => vec![(5.0, 40.0), (0.1, 4.0), (0.1, 6.0), (0.0, 10.0), (0.0, 4.0)],
        };
        ParamBounds {
            kind,
            small: b.clone(),
            large: b,
        }
    }

    pub fn with_overrides(kind: ModelKind, o: &BoundsOverrides) -> Result<Self> {
        let mut b = Self::default_for(kind);
        for (class, table) in [(VehicleClass::Small, &o.small), (VehicleClass::Large, &o.large)] {
            for (name, &[lo, hi]) in table {
                let i = kind
                    .param_names()
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::Config(format!("unknown {kind} parameter `{name}` in bounds")))?;
                b.get_mut(class)[i] = (lo, hi);
            }
        }
        b.validate()?;
        Ok(b)
    }

    pub fn get(&self, class: VehicleClass) -> &[(f64, f64)] {
        match class {
            VehicleClass::Small => &self.small,
            VehicleClass::Large => &self.large,
        }
    }

    fn get_mut(&mut self, class: VehicleClass) -> &mut Vec<(f64, f64)> {
        match class {
            VehicleClass::Small => &mut self.small,
            VehicleClass::Large => &mut self.large,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let names = self.kind.param_names();
        for class in VehicleClass::ALL {
            let b = self.get(class);
            if b.len() != names.len() {
                return Err(Error::LengthMismatch(b.len(), names.len()));
            }
            for (name, &(lo, hi)) in names.iter().zip(b) {
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(Error::Config(format!("{class} {name}: need lower < upper, got [{lo}, {hi}]")));
                }
            }
        }
        for (method, pf) in reference::all() {
            let Ok(spec) = pf.spec(self.kind) else { continue };
            for class in VehicleClass::ALL {
                let v = spec.for_class(class).to_vec();
                for ((name, &(lo, hi)), x) in names.iter().zip(self.get(class)).zip(v) {
                    if x < lo || x > hi {
                        log::warn!("{class} {name} bounds [{lo}, {hi}] exclude the {method} reference value {x}");
                    }
                }
            }
        }
        Ok(())
    }
}

/// Maps a flat search vector onto per-class parameter sets.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    kind: ModelKind,
    classes: Vec<VehicleClass>,
}

impl Layout {
    fn bounds(&self, b: &ParamBounds) -> Vec<(f64, f64)> {
        self.classes.iter().flat_map(|&c| b.get(c).iter().copied()).collect()
    }

    fn params(&self, x: &[f64]) -> Result<Vec<(VehicleClass, ModelParams)>> {
        let d = self.kind.dim();
        self.classes
            .iter()
            .enumerate()
            .map(|(i, &c)| Ok((c, ModelParams::from_slice(self.kind, &x[i * d..(i + 1) * d])?)))
            .collect()
    }

    /// Classes absent from the layout reuse the first present set; they do
    /// not occur in the data.
    fn spec(&self, x: &[f64]) -> Result<ModelSpec> {
        let ps = self.params(x)?;
        let pick = |c: VehicleClass| ps.iter().find(|(k, _)| *k == c).map_or(ps[0].1, |(_, p)| *p);
        ModelSpec::new(pick(VehicleClass::Small), pick(VehicleClass::Large))
    }
}

/// One optimiser run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub classes: Vec<VehicleClass>,
    pub seed: u64,
    pub evaluations: usize,
    pub value: f64,
    pub terms: Breakdown,
    pub scales: Scales,
    pub trace_evaluations: Vec<usize>,
    pub trace_best: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub large: Option<ModelParams>,
}

impl FittedParams {
    pub fn get(&self, class: VehicleClass) -> Option<&ModelParams> {
        match class {
            VehicleClass::Small => self.small.as_ref(),
            VehicleClass::Large => self.large.as_ref(),
        }
    }

    /// A full spec; a missing class copies the other one.
    pub fn spec(&self) -> Result<ModelSpec> {
        match (self.small, self.large) {
            (Some(s), Some(l)) => ModelSpec::new(s, l),
            (Some(p), None) | (None, Some(p)) => ModelSpec::uniform(p),
            (None, None) => Err(Error::Invalid("no fitted parameters".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub model: ModelKind,
    pub objective: ObjectiveKind,
    pub class_mode: ClassMode,
    pub rollout: RolloutMode,
    pub normalization: Normalization,
    pub seed: u64,
    pub budget: usize,
    pub evaluations: usize,
    pub objective_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fuel_coefficients_sha256: Option<String>,
    pub weights: Weights,
    pub params: FittedParams,
    pub searches: Vec<SearchRecord>,
}

impl CalibrationResult {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise result: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Parameters in the layout of a parameter file.
    pub fn param_file(&self) -> Result<crate::models::ParamFile> {
        let mut pf = crate::models::ParamFile {
            method: Some(self.objective.to_string()),
            ..Default::default()
        };
        pf.insert(&self.params.spec()?);
        Ok(pf)
    }
}

/// Everything `calibrate` needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSetup {
    pub model: ModelKind,
    pub objective: ObjectiveSpec,
    pub class_mode: ClassMode,
    pub bounds: ParamBounds,
    pub budget: usize,
    pub seed: u64,
    pub optimizer: DeConfig,
}

impl CalibrationSetup {
    pub fn new(model: ModelKind, objective: ObjectiveSpec) -> Self {
        CalibrationSetup {
            model,
            objective,
            class_mode: ClassMode::default(),
            bounds: ParamBounds::default_for(model),
            budget: DEFAULT_BUDGET,
            seed: 0,
            optimizer: DeConfig::default(),
        }
    }
}

fn search(
    data: &CalibrationData,
    layout: &Layout,
    setup: &CalibrationSetup,
    fuel: &FuelCoefficients,
    seed: u64,
) -> Result<(Vec<(VehicleClass, ModelParams)>, SearchRecord)> {
    let obj = Objective::new(data, &setup.objective, fuel)?;
    let bounds = layout.bounds(&setup.bounds);
    let f = |x: &[f64]| match layout.spec(x) {
        Ok(spec) => obj.value(&spec),
        Err(_) => 2.0 * PENALTY_BASE,
    };
    let out = de::minimize(f, &bounds, setup.budget, seed, &setup.optimizer)?;
    let spec = layout.spec(&out.x)?;
    let terms = obj.evaluate(&spec);
    if terms.collided {
        return Err(Error::AllInfeasible);
    }
    let record = SearchRecord {
        classes: layout.classes.clone(),
        seed,
        evaluations: out.evaluations,
        value: out.value,
        terms,
        scales: obj.scales(),
        trace_evaluations: out.trace.iter().map(|p| p.evaluations).collect(),
        trace_best: out.trace.iter().map(|p| p.best).collect(),
    };
    Ok((layout.params(&out.x)?, record))
}

/// Fits `setup.model` to `data`. Deterministic for a given seed regardless
/// of the thread count.
pub fn calibrate(data: &CalibrationData, setup: &CalibrationSetup, fuel: &FuelCoefficients) -> Result<CalibrationResult> {
    setup.objective.validate()?;
    setup.bounds.validate()?;
    if setup.bounds.kind != setup.model {
        return Err(Error::Config(format!(
            "bounds are for {} but the model is {}",
            setup.bounds.kind, setup.model
        )));
    }
    let classes = data.classes();
    if classes.is_empty() {
        return Err(Error::Invalid("no followers to calibrate".into()));
    }
    let mut params = FittedParams { small: None, large: None };
    let mut searches = Vec::new();
    let runs: Vec<(CalibrationData, Vec<VehicleClass>)> = match setup.class_mode {
        ClassMode::Joint => vec![(data.clone(), classes)],
        ClassMode::Independent => classes.iter().map(|&c| (data.split_by_class(c), vec![c])).collect(),
    };
    for (i, (sub, cls)) in runs.iter().enumerate() {
        let layout = Layout {
            kind: setup.model,
            classes: cls.clone(),
        };
        let seed = setup.seed.wrapping_add(i as u64);
        let (fitted, record) = search(sub, &layout, setup, fuel, seed)?;
        for (c, p) in fitted {
            match c {
                VehicleClass::Small => params.small = Some(p),
                VehicleClass::Large => params.large = Some(p),
            }
        }
        searches.push(record);
    }
    Ok(CalibrationResult {
        model: setup.model,
        objective: setup.objective.kind,
        class_mode: setup.class_mode,
        rollout: setup.objective.rollout,
        normalization: setup.objective.normalization,
        seed: setup.seed,
        budget: setup.budget,
        evaluations: searches.iter().map(|s| s.evaluations).sum(),
        objective_value: searches.iter().map(|s| s.value).sum(),
        fuel_coefficients_sha256: fuel.source_hash.clone(),
        weights: setup.objective.weights,
        params,
        searches,
    })
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_min_gap_stop() -> f64 {
    0.1
}

fn default_min_platoon_steps() -> usize {
    20
}

/// Calibration spec file.
///
/// ```toml
/// model = "idm"
/// objective = "bic"
/// budget = 20000
/// seed = 7
///
/// [weights]
/// w0_sys = 1.0
/// w1_mac = 1.0
/// w2_mac = 1.0
///
/// [intervals]
/// boundaries = [0.0, 120.0, 240.0]
/// entry_x = 50.0
/// exit_x = 600.0
///
/// [bounds.small]
/// v_f = [10.0, 30.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpecFile {
    pub model: ModelKind,
    pub objective: ObjectiveKind,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub rollout: RolloutMode,
    #[serde(default)]
    pub class_mode: ClassMode,
    #[serde(default)]
    pub gap_semantics: GapSemantics,
    #[serde(default = "default_min_gap_stop")]
    pub min_gap_stop: f64,
    #[serde(default = "default_min_platoon_steps")]
    pub min_platoon_steps: usize,
    #[serde(default)]
    pub intervals: Option<IntervalSpec>,
    #[serde(default)]
    pub bounds: BoundsOverrides,
    #[serde(default)]
    pub optimizer: DeConfig,
    /// Relative paths resolve against the spec file's directory.
    #[serde(default)]
    pub fuel_coefficients: Option<PathBuf>,
}

impl CalibrationSpecFile {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::parse(&text)?;
        if let (Some(f), Some(dir)) = (&spec.fuel_coefficients, path.parent()) {
            if f.is_relative() {
                spec.fuel_coefficients = Some(dir.join(f));
            }
        }
        Ok(spec)
    }

    pub fn setup(&self) -> Result<CalibrationSetup> {
        let objective = ObjectiveSpec {
            kind: self.objective,
            weights: self.weights,
            intervals: self.intervals.clone(),
            normalization: self.normalization,
            rollout: self.rollout,
            gap_semantics: self.gap_semantics,
            min_gap_stop: self.min_gap_stop,
        };
        objective.validate()?;
        Ok(CalibrationSetup {
            model: self.model,
            objective,
            class_mode: self.class_mode,
            bounds: ParamBounds::with_overrides(self.model, &self.bounds)?,
            budget: self.budget,
            seed: self.seed,
            optimizer: self.optimizer,
        })
    }

    pub fn fuel(&self) -> Result<FuelCoefficients> {
        match &self.fuel_coefficients {
            Some(p) => FuelCoefficients::load(p),
            None => Ok(FuelCoefficients::vt_micro()),
        }
    }
}
