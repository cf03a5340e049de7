use std::path::{Path, PathBuf};

use anyhow::Context;
use cfcal::trajectory::{load_trajectories, CleaningConfig, Corridor, Dataset, Schema};
use serde::{Deserialize, Serialize};

/// How trajectory CSVs are read and cleaned.
///
/// ```toml
/// corridor = "corridor.toml"
///
/// [schema]
/// id = "id"
/// t = "t_sec"
/// position = "position"
///
/// [cleaning]
/// angle_threshold = 30.0
/// window = 5
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub schema: Schema,
    pub cleaning: CleaningConfig,
    /// Relative paths resolve against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corridor: Option<PathBuf>,
}

impl DataConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(DataConfig::default());
        };
        let mut cfg: DataConfig = read_toml(path)?;
        if let (Some(c), Some(dir)) = (&cfg.corridor, path.parent()) {
            if c.is_relative() {
                cfg.corridor = Some(dir.join(c));
            }
        }
        cfg.cleaning.validate()?;
        Ok(cfg)
    }

    pub fn corridor(&self) -> anyhow::Result<Option<Corridor>> {
        self.corridor
            .as_deref()
            .map(|p| Corridor::load(p).with_context(|| format!("loading corridor {}", p.display())))
            .transpose()
    }

    pub fn load_dataset(&self, path: &Path) -> anyhow::Result<Dataset> {
        let corridor = self.corridor()?;
        load_trajectories(path, &self.schema, corridor.as_ref())
            .with_context(|| format!("reading trajectories from {}", path.display()))
    }
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value = toml::from_str(&text).map_err(cfcal::Error::from).with_context(|| format!("parsing {}", path.display()))?;
    Ok(value)
}
