use std::path::{Path, PathBuf};

use harforge_core::config::Toggles;
use harforge_core::data::DatasetManifest;
use harforge_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// JSON run description. Relative paths are taken relative to the file
/// that contains them.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = cfg.manifest.map(|p| base.join(p));
        cfg.out = cfg.out.map(|p| base.join(p));
        Ok(cfg)
    }
}

/// Parses `name=on|off`.
pub fn parse_toggle(arg: &str) -> Result<(String, bool), String> {
    let (name, value) = arg
        .split_once('=')
        .ok_or_else(|| format!("toggle `{arg}` is not of the form name=on|off"))?;
    let on = match value {
        "on" | "true" | "1" => true,
        "off" | "false" | "0" => false,
        other => return Err(format!("toggle value `{other}` is not on or off")),
    };
    Toggles::all_on().set(name, on)?;
    Ok((name.to_string(), on))
}

pub fn apply_toggles(toggles: &mut Toggles, specs: &[(String, bool)]) {
    for (name, on) in specs {
        toggles.set(name, *on).expect("toggle names are checked while parsing");
    }
}

/// Loads a manifest and checks that every recording it names exists.
pub fn load_manifest(path: &Path) -> CliResult<DatasetManifest> {
    if !path.is_file() {
        return Err(CliError::input(format!("manifest not found: {}", path.display())));
    }
    let m = DatasetManifest::load(path)?;
    m.check_paths()?;
    Ok(m)
}
