//! Per-variant choice counts and satisfaction statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use navex_core::variants::BatteryManifest;
use serde::Serialize;

use crate::model::{StudyRecord, ITEM_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemStats {
    pub item: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    /// Sample standard deviation; absent below two ratings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub battery_id: String,
    pub variant_id: String,
    pub shown: usize,
    pub chosen: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub choice_rate: Option<f64>,
    pub items: Vec<ItemStats>,
    /// Over every item score of every rating of this variant.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub records: usize,
    pub rows: Vec<VariantSummary>,
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// One row per known variant, ordered by battery then variant id. Variants
/// seen only in records are included too.
pub fn summarize(batteries: &[BatteryManifest], records: &[StudyRecord]) -> Summary {
    #[derive(Default)]
    struct Acc {
        shown: usize,
        chosen: usize,
        ratings: Vec<Vec<i64>>,
    }
    let mut acc: BTreeMap<(String, String), Acc> = BTreeMap::new();
    for b in batteries {
        for e in &b.entries {
            acc.entry((b.battery_id.clone(), e.variant_id().to_string())).or_default();
        }
    }
    for r in records {
        for v in &r.shown_variant_ids {
            acc.entry((r.battery_id.clone(), v.clone())).or_default().shown += 1;
        }
        let a = acc.entry((r.battery_id.clone(), r.chosen_variant_id.clone())).or_default();
        a.chosen += 1;
        a.ratings.push(r.satisfaction.item_scores.clone());
    }
    let rows = acc
        .into_iter()
        .map(|((battery_id, variant_id), a)| {
            let items = (0..ITEM_COUNT)
                .map(|i| {
                    let values: Vec<f64> = a.ratings.iter().filter_map(|s| s.get(i)).map(|&s| s as f64).collect();
                    let (mean, sd) = mean_sd(&values);
                    ItemStats { item: i + 1, mean, sd }
                })
                .collect();
            let all: Vec<f64> = a.ratings.iter().flatten().map(|&s| s as f64).collect();
            let (overall_mean, overall_sd) = mean_sd(&all);
            VariantSummary {
                battery_id,
                variant_id,
                shown: a.shown,
                chosen: a.chosen,
                choice_rate: (a.shown > 0).then(|| a.chosen as f64 / a.shown as f64),
                items,
                overall_mean,
                overall_sd,
            }
        })
        .collect();
    Summary { records: records.len(), rows }
}

impl Summary {
    /// Tab-separated table; absent values are written as `-`.
    pub fn to_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = String::from("battery_id\tvariant_id\tshown\tchosen\tchoice_rate\toverall_mean\toverall_sd");
        for i in 1..=ITEM_COUNT {
            let _ = write!(out, "\titem{i}_mean\titem{i}_sd");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.battery_id,
                r.variant_id,
                r.shown,
                r.chosen,
                opt(r.choice_rate),
                opt(r.overall_mean),
                opt(r.overall_sd)
            );
            for item in &r.items {
                let _ = write!(out, "\t{}\t{}", opt(item.mean), opt(item.sd));
            }
            out.push('\n');
        }
        out
    }
}
