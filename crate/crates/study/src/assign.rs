//! Counterbalanced trial plans.
//!
//! Session number `c` (0-based, offset by the seed) puts visual variant
//! `c mod n` of every battery first, so any `n` consecutive sessions show
//! each variant first exactly once. Each visual trial then adds the variants
//! one and two color-scheme blocks further on, then the canonical variant,
//! then the following variants until the trial is full. Text variants are
//! rotated the same way.

use navex_core::variants::BatteryManifest;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialKind {
    Visual,
    Textual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub kind: TrialKind,
    pub battery_id: String,
    /// Variants in display order.
    pub variant_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub session_id: String,
    pub participant_id: String,
    /// How many sessions were created before this one.
    pub counter: u64,
    pub trials: Vec<Trial>,
}

/// Color schemes per visual battery; variants come in one block per scheme.
const SCHEME_BLOCKS: usize = 3;

fn rotate<T: Clone>(items: &[T], start: usize) -> Vec<T> {
    let n = items.len();
    (0..n).map(|i| items[(start + i) % n].clone()).collect()
}

/// Indices of the visual variants shown when variant `first` leads.
pub fn visual_subset(n: usize, first: usize, size: usize) -> Vec<usize> {
    let stride = (n / SCHEME_BLOCKS).max(1);
    let mut order = vec![first];
    for block in 1..SCHEME_BLOCKS {
        order.push((first + block * stride) % n);
    }
    order.push(0);
    order.extend((1..n).map(|i| (first + i) % n));
    let mut seen = Vec::with_capacity(size);
    for i in order {
        if seen.len() == size.min(n) {
            break;
        }
        if !seen.contains(&i) {
            seen.push(i);
        }
    }
    seen
}

/// Trials for the session with the given counter: for each battery, one
/// visual choice followed by one textual choice.
pub fn plan_trials(batteries: &[BatteryManifest], counter: u64, seed: u64, visual_per_trial: usize) -> Vec<Trial> {
    let mut sorted: Vec<&BatteryManifest> = batteries.iter().collect();
    sorted.sort_by(|a, b| a.battery_id.cmp(&b.battery_id));
    let r = counter.wrapping_add(seed) as usize;
    let order = if sorted.is_empty() { Vec::new() } else { rotate(&sorted, r % sorted.len()) };
    let mut trials = Vec::new();
    for battery in order {
        let visual: Vec<&str> = battery.visual().map(|e| e.variant_id()).collect();
        if !visual.is_empty() {
            let ids = visual_subset(visual.len(), r % visual.len(), visual_per_trial)
                .into_iter()
                .map(|i| visual[i].to_string())
                .collect();
            trials.push(Trial { index: trials.len(), kind: TrialKind::Visual, battery_id: battery.battery_id.clone(), variant_ids: ids });
        }
        let textual: Vec<String> = battery.textual().map(|e| e.variant_id().to_string()).collect();
        if !textual.is_empty() {
            let ids = rotate(&textual, r % textual.len());
            trials.push(Trial { index: trials.len(), kind: TrialKind::Textual, battery_id: battery.battery_id.clone(), variant_ids: ids });
        }
    }
    trials
}

/// Opaque id, unique per counter.
pub fn session_id(counter: u64, seed: u64, participant_id: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(counter.to_le_bytes());
    hasher.update(participant_id.as_bytes());
    format!("s{counter:05}-{}", hex::encode(&hasher.finalize()[..4]))
}
