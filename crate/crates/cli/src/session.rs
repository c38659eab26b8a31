//! Spot-color refinement sessions and their append-only event log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use npcolor::colorimetry::{hex, lab_to_srgb8};
use npcolor::gamut::{alternatives_grid, grid_around, AlternativesGrid, GamutModel, GridParams};
use npcolor::{Lab, Metric, NPac};
use serde::{Deserialize, Serialize};

use crate::service::ApiError;

/// Metric used to pick grid centers and label cells.
pub const SESSION_METRIC: Metric = Metric::De2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    /// Center of the grid the pick was made on.
    pub center: Lab,
    pub hue_offset: f64,
    pub lightness_offset: f64,
    pub at: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalSelection {
    pub lab: Lab,
    pub npac: NPac,
    pub srgb_hex: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotSession {
    pub session_id: String,
    pub target: Lab,
    pub params: GridParams,
    pub created_at: String,
    pub history: Vec<HistoryEntry>,
    #[serde(rename = "final")]
    pub final_selection: Option<FinalSelection>,
    pub confirmed_at: Option<String>,
    pub grid: AlternativesGrid,
}

impl SpotSession {
    pub fn create(gamut: &GamutModel, session_id: String, target: Lab, params: GridParams, at: String) -> Result<Self, ApiError> {
        params.validate().map_err(ApiError::bad_request)?;
        let grid = alternatives_grid(&target, gamut, &params, &SESSION_METRIC).map_err(ApiError::bad_request)?;
        Ok(SpotSession {
            session_id,
            target,
            params,
            created_at: at,
            history: Vec::new(),
            final_selection: None,
            confirmed_at: None,
            grid,
        })
    }

    pub fn is_confirmed(&self) -> bool {
        self.final_selection.is_some()
    }

    /// Re-centers the grid on the cell at the given offsets.
    pub fn select(&mut self, gamut: &GamutModel, hue_offset: f64, lightness_offset: f64, at: String) -> Result<(), ApiError> {
        if self.is_confirmed() {
            return Err(ApiError::conflict("session is already confirmed"));
        }
        let cell = self
            .grid
            .cell_at_offsets(hue_offset, lightness_offset)
            .ok_or_else(|| {
                ApiError::bad_request(format!(
                    "no grid cell at hue_offset {hue_offset}, lightness_offset {lightness_offset}"
                ))
            })?;
        let grid = grid_around(&cell.point(), &self.target, gamut, &self.params, &SESSION_METRIC)
            .map_err(ApiError::bad_request)?;
        self.history.push(HistoryEntry {
            center: self.grid.center.lab,
            hue_offset,
            lightness_offset,
            at,
        });
        self.grid = grid;
        Ok(())
    }

    pub fn confirm(&mut self, gamut: &GamutModel, at: String) -> Result<&FinalSelection, ApiError> {
        if self.is_confirmed() {
            return Err(ApiError::conflict("session is already confirmed"));
        }
        let c = &self.grid.center;
        self.final_selection = Some(FinalSelection {
            lab: c.lab,
            npac: c.npac.clone(),
            srgb_hex: hex(lab_to_srgb8(c.lab, gamut.viewing_condition())),
        });
        self.confirmed_at = Some(at);
        Ok(self.final_selection.as_ref().expect("just set"))
    }
}

/// One line of the session log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    Created {
        session_id: String,
        target: Lab,
        params: GridParams,
        at: String,
    },
    Selected {
        session_id: String,
        hue_offset: f64,
        lightness_offset: f64,
        at: String,
    },
    Confirmed {
        session_id: String,
        at: String,
    },
}

impl SessionEvent {
    pub fn session_id(&self) -> &str {
        match self {
            SessionEvent::Created { session_id, .. }
            | SessionEvent::Selected { session_id, .. }
            | SessionEvent::Confirmed { session_id, .. } => session_id,
        }
    }
}

pub type SharedSession = Arc<tokio::sync::Mutex<SpotSession>>;

/// In-memory sessions backed by an optional JSON-lines event log. Sessions
/// are rebuilt from the log by replaying events, which is deterministic
/// because every step is a pure function of the gamut and the event.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, SharedSession>>,
    log: Option<Mutex<File>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        SessionStore {
            sessions: Mutex::new(HashMap::new()),
            log: None,
        }
    }

    /// Opens (or creates) the log at `path` and replays it.
    pub fn open(path: &Path, gamut: &GamutModel) -> Result<Self> {
        let mut sessions = HashMap::new();
        if path.exists() {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let lines: Vec<String> = BufReader::new(file).lines().collect::<std::io::Result<_>>()?;
            let last = lines.len().saturating_sub(1);
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let event: SessionEvent = match serde_json::from_str(line) {
                    Ok(e) => e,
                    // A torn final line from a crash mid-write is dropped.
                    Err(_) if i == last => break,
                    Err(e) => return Err(e).with_context(|| format!("{}:{}", path.display(), i + 1)),
                };
                replay(&mut sessions, gamut, event).with_context(|| format!("{}:{}", path.display(), i + 1))?;
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok(SessionStore {
            sessions: Mutex::new(sessions.into_iter().map(|(k, v)| (k, Arc::new(tokio::sync::Mutex::new(v)))).collect()),
            log: Some(Mutex::new(log)),
        })
    }

    pub fn get(&self, id: &str) -> Option<SharedSession> {
        self.sessions.lock().expect("session map").get(id).cloned()
    }

    pub fn insert(&self, session: SpotSession) -> SharedSession {
        let id = session.session_id.clone();
        let shared = Arc::new(tokio::sync::Mutex::new(session));
        self.sessions.lock().expect("session map").insert(id, shared.clone());
        shared
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends one event and flushes it before the caller acknowledges the
    /// request.
    pub fn append(&self, event: &SessionEvent) -> Result<()> {
        if let Some(log) = &self.log {
            let mut line = serde_json::to_string(event)?;
            line.push('\n');
            let mut f = log.lock().expect("session log");
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}

fn replay(sessions: &mut HashMap<String, SpotSession>, gamut: &GamutModel, event: SessionEvent) -> Result<()> {
    let missing = || anyhow::anyhow!("event for unknown session {}", event.session_id());
    match event.clone() {
        SessionEvent::Created {
            session_id,
            target,
            params,
            at,
        } => {
            let s = SpotSession::create(gamut, session_id.clone(), target, params, at).map_err(|e| anyhow::anyhow!(e.message))?;
            sessions.insert(session_id, s);
        }
        SessionEvent::Selected {
            session_id,
            hue_offset,
            lightness_offset,
            at,
        } => {
            let s = sessions.get_mut(&session_id).ok_or_else(missing)?;
            s.select(gamut, hue_offset, lightness_offset, at).map_err(|e| anyhow::anyhow!(e.message))?;
        }
        SessionEvent::Confirmed { session_id, at } => {
            let s = sessions.get_mut(&session_id).ok_or_else(missing)?;
            s.confirm(gamut, at).map_err(|e| anyhow::anyhow!(e.message))?;
        }
    }
    Ok(())
}
