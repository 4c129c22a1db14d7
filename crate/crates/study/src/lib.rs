//! Administers a comparative study of explanation variants: counterbalanced
//! sessions, durable response capture and summary statistics, served over
//! HTTP by [`http::router`].
//!
//! Writes go through a single writer lock and are synced to the
//! append-only logs in the data directory before they become visible.
//! Reads work on immutable snapshots and never take the lock.

pub mod assign;
pub mod http;
pub mod model;
pub mod store;
pub mod summary;

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use arc_swap::ArcSwap;
use navex_core::variants::{BatteryManifest, ManifestEntry};
use serde::Serialize;

pub use assign::{AssignmentPlan, Trial, TrialKind};
pub use model::{Questionnaire, SatisfactionResponse, StudyError, StudyRecord};
pub use summary::{summarize, Summary};

use store::Log;

pub const SESSIONS_FILE: &str = "sessions.ndjson";
pub const RESPONSES_FILE: &str = "responses.ndjson";

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub data_dir: PathBuf,
    pub seed: u64,
    /// Visual variants shown side by side per trial.
    pub visual_per_trial: usize,
    pub questionnaire: Questionnaire,
}

impl StudyConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: data_dir.into(), seed: 0, visual_per_trial: 4, questionnaire: Questionnaire::builtin() }
    }
}

/// Where a write can be interrupted, for fault-injection tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    BeforeAppend,
    AfterAppend,
}

pub type FaultHook = Box<dyn Fn(FaultPoint) -> std::io::Result<()> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ack {
    /// The identical record had already been stored.
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantView {
    pub variant_id: String,
    pub style: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialView {
    pub session_id: String,
    pub participant_id: String,
    pub trial_index: usize,
    pub trial_count: usize,
    pub kind: TrialKind,
    pub battery_id: String,
    pub scenario_id: String,
    pub feature: String,
    pub issued_ms: u64,
    pub variants: Vec<VariantView>,
    pub questionnaire: Vec<String>,
}

#[derive(Debug, Default, Clone)]
struct Snapshot {
    sessions: BTreeMap<String, Arc<AssignmentPlan>>,
    records: Vec<StudyRecord>,
    answered: HashMap<(String, usize), usize>,
}

impl Snapshot {
    fn add_record(&mut self, record: StudyRecord) {
        self.answered.insert((record.session_id.clone(), record.trial_index), self.records.len());
        self.records.push(record);
    }
}

struct Writer {
    sessions: Log,
    responses: Log,
}

pub struct Study {
    config: StudyConfig,
    batteries: Vec<BatteryManifest>,
    writer: Mutex<Writer>,
    snapshot: ArcSwap<Snapshot>,
    fault: Option<FaultHook>,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Study {
    /// Opens the data directory, replaying any existing sessions and
    /// responses.
    pub fn open(config: StudyConfig, batteries: Vec<BatteryManifest>) -> Result<Self, StudyError> {
        std::fs::create_dir_all(&config.data_dir)?;
        let (sessions_log, sessions) = Log::open::<AssignmentPlan>(&config.data_dir.join(SESSIONS_FILE))?;
        let (responses_log, records) = Log::open::<StudyRecord>(&config.data_dir.join(RESPONSES_FILE))?;
        let mut snapshot = Snapshot::default();
        for plan in sessions {
            snapshot.sessions.insert(plan.session_id.clone(), Arc::new(plan));
        }
        for record in records {
            snapshot.add_record(record);
        }
        Ok(Self {
            config,
            batteries,
            writer: Mutex::new(Writer { sessions: sessions_log, responses: responses_log }),
            snapshot: ArcSwap::from_pointee(snapshot),
            fault: None,
        })
    }

    /// Installs a hook consulted around every durable append.
    pub fn with_fault_hook(mut self, hook: FaultHook) -> Self {
        self.fault = Some(hook);
        self
    }

    fn fault(&self, point: FaultPoint) -> Result<(), StudyError> {
        match &self.fault {
            Some(hook) => Ok(hook(point)?),
            None => Ok(()),
        }
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn batteries(&self) -> &[BatteryManifest] {
        &self.batteries
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }

    pub fn create_session(&self, participant_id: &str) -> Result<AssignmentPlan, StudyError> {
        if self.batteries.is_empty() {
            return Err(StudyError::NoBatteries);
        }
        if participant_id.trim().is_empty() {
            return Err(StudyError::InvalidRecord("participant_id must not be empty".into()));
        }
        let mut writer = self.writer.lock().expect("writer lock poisoned");
        let current = self.snapshot.load_full();
        let counter = current.sessions.len() as u64;
        let plan = AssignmentPlan {
            session_id: assign::session_id(counter, self.config.seed, participant_id),
            participant_id: participant_id.to_string(),
            counter,
            trials: assign::plan_trials(&self.batteries, counter, self.config.seed, self.config.visual_per_trial),
        };
        self.fault(FaultPoint::BeforeAppend)?;
        writer.sessions.append(&plan)?;
        self.fault(FaultPoint::AfterAppend)?;
        let mut next = (*current).clone();
        next.sessions.insert(plan.session_id.clone(), Arc::new(plan.clone()));
        self.snapshot.store(Arc::new(next));
        Ok(plan)
    }

    pub fn session(&self, session_id: &str) -> Option<Arc<AssignmentPlan>> {
        self.snapshot.load().sessions.get(session_id).cloned()
    }

    /// Sessions in creation order.
    pub fn sessions(&self) -> Vec<Arc<AssignmentPlan>> {
        let mut all: Vec<_> = self.snapshot.load().sessions.values().cloned().collect();
        all.sort_by_key(|p| p.counter);
        all
    }

    fn battery(&self, battery_id: &str) -> Option<&BatteryManifest> {
        self.batteries.iter().find(|b| b.battery_id == battery_id)
    }

    pub fn trial(&self, session_id: &str, index: usize) -> Result<TrialView, StudyError> {
        let plan = self.session(session_id).ok_or_else(|| StudyError::UnknownSession(session_id.to_string()))?;
        let trial = plan
            .trials
            .get(index)
            .ok_or_else(|| StudyError::UnknownTrial { session: session_id.to_string(), index })?;
        let battery = self
            .battery(&trial.battery_id)
            .ok_or_else(|| StudyError::InvalidRecord(format!("battery {} is no longer loaded", trial.battery_id)))?;
        let variants = trial
            .variant_ids
            .iter()
            .filter_map(|id| battery.entry(id))
            .map(|entry| match entry {
                ManifestEntry::Visual { variant_id, style, file } => VariantView {
                    variant_id: variant_id.clone(),
                    style: style.clone(),
                    image_url: Some(format!("/images/{file}")),
                    text: None,
                },
                ManifestEntry::Text { variant_id, style, text } => VariantView {
                    variant_id: variant_id.clone(),
                    style: style.clone(),
                    image_url: None,
                    text: Some(text.clone()),
                },
            })
            .collect();
        Ok(TrialView {
            session_id: plan.session_id.clone(),
            participant_id: plan.participant_id.clone(),
            trial_index: index,
            trial_count: plan.trials.len(),
            kind: trial.kind,
            battery_id: battery.battery_id.clone(),
            scenario_id: battery.scenario_id.clone(),
            feature: battery.feature.clone(),
            issued_ms: now_ms(),
            variants,
            questionnaire: self.config.questionnaire.items.clone(),
        })
    }

    /// Stores the record durably, then acknowledges it. Resubmitting the
    /// identical record is acknowledged again without a second copy.
    pub fn record_response(&self, record: StudyRecord) -> Result<Ack, StudyError> {
        let mut writer = self.writer.lock().expect("writer lock poisoned");
        let current = self.snapshot.load_full();
        let plan = current
            .sessions
            .get(&record.session_id)
            .ok_or_else(|| StudyError::UnknownSession(record.session_id.clone()))?;
        let trial = plan.trials.get(record.trial_index).ok_or_else(|| StudyError::UnknownTrial {
            session: record.session_id.clone(),
            index: record.trial_index,
        })?;
        if record.participant_id != plan.participant_id {
            return Err(StudyError::InvalidRecord("participant does not own this session".into()));
        }
        if record.battery_id != trial.battery_id || record.shown_variant_ids != trial.variant_ids {
            return Err(StudyError::InvalidRecord("battery or shown variants differ from the assigned trial".into()));
        }
        record.validate()?;
        if let Some(&i) = current.answered.get(&(record.session_id.clone(), record.trial_index)) {
            return if current.records[i] == record {
                Ok(Ack { duplicate: true })
            } else {
                Err(StudyError::DuplicateTrial { session: record.session_id.clone(), index: record.trial_index })
            };
        }
        self.fault(FaultPoint::BeforeAppend)?;
        writer.responses.append(&record)?;
        self.fault(FaultPoint::AfterAppend)?;
        let mut next = (*current).clone();
        next.add_record(record);
        self.snapshot.store(Arc::new(next));
        Ok(Ack { duplicate: false })
    }

    pub fn records(&self) -> Vec<StudyRecord> {
        self.snapshot.load().records.clone()
    }

    pub fn summarize(&self) -> Summary {
        summarize(&self.batteries, &self.snapshot.load().records)
    }
}

/// Loads every `*.battery` manifest in `dir`, sorted by file name.
pub fn load_batteries(dir: &Path) -> Result<Vec<BatteryManifest>, StudyError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "battery"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            BatteryManifest::load(p).map_err(|e| StudyError::Corrupt {
                file: p.display().to_string(),
                line: 0,
                message: e.to_string(),
            })
        })
        .collect()
}
