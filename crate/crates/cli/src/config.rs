//! Service configuration.
//!
//! The config file is JSON:
//!
//! ```json
//! {"press_path": "press.json", "gamut_cache_path": "gamut.json",
//!  "listen_addr": "127.0.0.1:8080", "session_log_path": "sessions.jsonl"}
//! ```
//!
//! Each field can be overridden by an environment variable named after it
//! with the `NPCOLOR_` prefix, e.g. `NPCOLOR_LISTEN_ADDR`. Without a file,
//! the environment must supply at least `NPCOLOR_PRESS_PATH`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use crate::files::read_json;

pub const ENV_PREFIX: &str = "NPCOLOR_";
pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_SESSION_LOG: &str = "sessions.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub press_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamut_cache_path: Option<PathBuf>,
    #[serde(default = "default_listen_addr")]
    pub listen_addr: String,
    #[serde(default = "default_session_log")]
    pub session_log_path: PathBuf,
    /// Directory of static assets served under `/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_dir: Option<PathBuf>,
}

fn default_listen_addr() -> String {
    DEFAULT_LISTEN_ADDR.to_owned()
}

fn default_session_log() -> PathBuf {
    PathBuf::from(DEFAULT_SESSION_LOG)
}

impl ServiceConfig {
    pub fn new(press_path: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            press_path: press_path.into(),
            gamut_cache_path: None,
            listen_addr: default_listen_addr(),
            session_log_path: default_session_log(),
            static_dir: None,
        }
    }

    /// Reads the file if given, then applies `NPCOLOR_*` overrides from the
    /// process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        Self::load_with(path, |k| std::env::var(k).ok())
    }

    pub fn load_with(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let var = |name: &str| env(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty());
        let mut config = match path {
            Some(p) => read_json(p)?,
            None => match var("PRESS_PATH") {
                Some(press) => ServiceConfig::new(press),
                None => bail!("no config file given and {ENV_PREFIX}PRESS_PATH is not set"),
            },
        };
        if let Some(v) = var("PRESS_PATH") {
            config.press_path = v.into();
        }
        if let Some(v) = var("GAMUT_CACHE_PATH") {
            config.gamut_cache_path = Some(v.into());
        }
        if let Some(v) = var("LISTEN_ADDR") {
            config.listen_addr = v;
        }
        if let Some(v) = var("SESSION_LOG_PATH") {
            config.session_log_path = v.into();
        }
        if let Some(v) = var("STATIC_DIR") {
            config.static_dir = Some(v.into());
        }
        Ok(config)
    }
}
