//! Optional `.codetations/config.json`.

use std::fs;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provider::{CompletionProvider, HttpProvider, MockProvider, ENDPOINT_ENV, KEY_ENV};
use crate::reanchor::ReattachConfig;
use crate::store::{StoreRoot, STORE_DIR};

pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ProviderConfig {
    /// `none`, `mock` or `http`.
    pub name: Option<String>,
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Config {
    pub reattach: ReattachConfig,
    pub provider: ProviderConfig,
}

impl Config {
    pub fn load(root: &StoreRoot) -> Result<Self> {
        let path = root.store_dir().join(CONFIG_FILE);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Config::default()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let config: Config = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })?;
        config.reattach.validate()?;
        Ok(config)
    }

    pub fn config_path(root: &StoreRoot) -> std::path::PathBuf {
        root.repo_root().join(STORE_DIR).join(CONFIG_FILE)
    }

    /// Builds the provider named by `name` (or the config file when `None`).
    ///
    /// `http` takes its endpoint from the environment, falling back to the
    /// config file; the key only ever comes from the environment.
    pub fn provider(&self, name: Option<&str>) -> Result<Option<Arc<dyn CompletionProvider>>> {
        let name = name.or(self.provider.name.as_deref()).unwrap_or("none");
        match name {
            "none" => Ok(None),
            "mock" => Ok(Some(Arc::new(MockProvider::echo()))),
            "http" => {
                let endpoint = std::env::var(ENDPOINT_ENV)
                    .ok()
                    .filter(|s| !s.is_empty())
                    .or_else(|| self.provider.endpoint.clone())
                    .ok_or_else(|| {
                        Error::Invalid(format!("http provider needs {ENDPOINT_ENV} or provider.endpoint"))
                    })?;
                Ok(Some(Arc::new(HttpProvider::new(endpoint, std::env::var(KEY_ENV).ok()))))
            }
            other => Err(Error::Invalid(format!("unknown provider {other:?}"))),
        }
    }
}
