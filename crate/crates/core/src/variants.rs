//! Stimulus batteries: every visual style and every text style of one
//! feature's explanation, plus the manifest file the study service loads.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::attribution::Attribution;
use crate::planning::PathPlan;
use crate::text::{generate, ExplanationKind, TextError, TextStyle};
use crate::visual::{render, ExplanationMap, Style, VisualError};
use crate::world::{Feature, Scenario};

const MANIFEST_HEADER: &str = "# navex battery v1";

#[derive(Debug, Error)]
pub enum VariantError {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed battery manifest, line {line}: {message}")]
    Manifest { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisualVariant {
    pub variant_id: String,
    pub style: Style,
    pub map: ExplanationMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextVariant {
    pub variant_id: String,
    pub style: TextStyle,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StimulusSet {
    pub scenario_id: String,
    pub feature: Feature,
    pub visual: Vec<VisualVariant>,
    pub textual: Vec<TextVariant>,
    pub battery_id: String,
}

pub fn visual_variant_id(style: Style) -> String {
    format!("v-{}", style.id())
}

pub fn text_variant_id(style: TextStyle) -> String {
    format!("t-{}", style.id())
}

/// Renders all 12 visual styles and phrases the counterfactual in all 4
/// text styles.
pub fn build_battery(
    scenario: &Scenario,
    attr: &Attribution,
    feature: &Feature,
    initial: &PathPlan,
    local: Option<&PathPlan>,
    scale: usize,
) -> Result<StimulusSet, VariantError> {
    let textual = TextStyle::ALL
        .into_iter()
        .map(|style| {
            let text = generate(attr, feature, ExplanationKind::Counterfactual, style, scenario)?;
            Ok(TextVariant { variant_id: text_variant_id(style), style, text: text.text })
        })
        .collect::<Result<Vec<_>, TextError>>()?;
    let visual = Style::all()
        .into_par_iter()
        .map(|style| {
            let map = render(scenario, attr, feature, initial, local, style, scale)?;
            Ok(VisualVariant { variant_id: visual_variant_id(style), style, map })
        })
        .collect::<Result<Vec<_>, VisualError>>()?;
    let battery_id = battery_hash(&scenario.name, feature, &visual, &textual);
    Ok(StimulusSet { scenario_id: scenario.name.clone(), feature: feature.clone(), visual, textual, battery_id })
}

fn battery_hash(scenario_id: &str, feature: &Feature, visual: &[VisualVariant], textual: &[TextVariant]) -> String {
    let mut hasher = Sha256::new();
    let mut field = |bytes: &[u8]| {
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    };
    field(scenario_id.as_bytes());
    field(feature.to_string().as_bytes());
    for v in visual {
        field(v.variant_id.as_bytes());
        field(&(v.map.image.width() as u64).to_le_bytes());
        field(v.map.image.data());
    }
    for t in textual {
        field(t.variant_id.as_bytes());
        field(t.text.as_bytes());
    }
    let digest = hasher.finalize();
    format!("b-{}", hex::encode(&digest[..8]))
}

/// One manifest row per variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestEntry {
    Visual { variant_id: String, style: String, file: String },
    Text { variant_id: String, style: String, text: String },
}

impl ManifestEntry {
    pub fn variant_id(&self) -> &str {
        match self {
            ManifestEntry::Visual { variant_id, .. } | ManifestEntry::Text { variant_id, .. } => variant_id,
        }
    }
}

/// The on-disk description of a battery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatteryManifest {
    pub battery_id: String,
    pub scenario_id: String,
    pub feature: String,
    pub seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl BatteryManifest {
    pub fn visual(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| matches!(e, ManifestEntry::Visual { .. }))
    }

    pub fn textual(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| matches!(e, ManifestEntry::Text { .. }))
    }

    pub fn entry(&self, variant_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.variant_id() == variant_id)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{MANIFEST_HEADER}\nbattery_id = {}\nscenario_id = {}\nfeature = {}\nseed = {}\n",
            self.battery_id, self.scenario_id, self.feature, self.seed
        );
        for entry in &self.entries {
            match entry {
                ManifestEntry::Visual { variant_id, style, file } => {
                    out.push_str(&format!("visual\t{variant_id}\t{style}\t{file}\n"))
                }
                ManifestEntry::Text { variant_id, style, text } => {
                    out.push_str(&format!("text\t{variant_id}\t{style}\t{text}\n"))
                }
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, VariantError> {
        let err = |line: usize, message: String| VariantError::Manifest { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h == MANIFEST_HEADER => {}
            _ => return Err(err(1, format!("expected header {MANIFEST_HEADER:?}"))),
        }
        let (mut battery_id, mut scenario_id, mut feature, mut seed) = (None, None, None, None);
        let mut entries = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some((key, value)) = line.split_once(" = ") {
                let value = value.to_string();
                match key {
                    "battery_id" => battery_id = Some(value),
                    "scenario_id" => scenario_id = Some(value),
                    "feature" => feature = Some(value),
                    "seed" => seed = Some(value.parse().map_err(|_| err(n, format!("bad seed {value:?}")))?),
                    _ => return Err(err(n, format!("unknown key {key:?}"))),
                }
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            let [kind, id, style, rest] = fields[..] else {
                return Err(err(n, "expected four tab-separated fields".into()));
            };
            let (variant_id, style) = (id.to_string(), style.to_string());
            entries.push(match kind {
                "visual" => ManifestEntry::Visual { variant_id, style, file: rest.to_string() },
                "text" => ManifestEntry::Text { variant_id, style, text: rest.to_string() },
                _ => return Err(err(n, format!("unknown entry kind {kind:?}"))),
            });
        }
        let missing = |what: &str| err(0, format!("missing {what}"));
        Ok(Self {
            battery_id: battery_id.ok_or_else(|| missing("battery_id"))?,
            scenario_id: scenario_id.ok_or_else(|| missing("scenario_id"))?,
            feature: feature.ok_or_else(|| missing("feature"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self, VariantError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

impl StimulusSet {
    /// Manifest naming each image by the file name `write` gives it.
    pub fn manifest(&self, seed: u64) -> BatteryManifest {
        let mut entries: Vec<ManifestEntry> = self
            .visual
            .iter()
            .map(|v| ManifestEntry::Visual {
                variant_id: v.variant_id.clone(),
                style: v.style.id(),
                file: v.map.file_name(&self.scenario_id),
            })
            .collect();
        entries.extend(self.textual.iter().map(|t| ManifestEntry::Text {
            variant_id: t.variant_id.clone(),
            style: t.style.id(),
            text: t.text.clone(),
        }));
        BatteryManifest {
            battery_id: self.battery_id.clone(),
            scenario_id: self.scenario_id.clone(),
            feature: self.feature.to_string(),
            seed,
            entries,
        }
    }

    /// Writes every image, its legend and `<battery_id>.battery` into `dir`.
    pub fn write(&self, dir: &Path, seed: u64) -> Result<PathBuf, VariantError> {
        for v in &self.visual {
            v.map.write(dir, &self.scenario_id, seed)?;
        }
        let path = dir.join(format!("{}.battery", self.battery_id));
        fs::write(&path, self.manifest(seed).to_text())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> BatteryManifest {
        BatteryManifest {
            battery_id: "b-00".into(),
            scenario_id: "s".into(),
            feature: "chair:movability".into(),
            seed: 3,
            entries: vec![
                ManifestEntry::Visual { variant_id: "v-a".into(), style: "a".into(), file: "s_a.png".into() },
                ManifestEntry::Text { variant_id: "t-b".into(), style: "b".into(), text: "Hello, there.".into() },
            ],
        }
    }

    #[test]
    fn manifest_round_trip() {
        let m = manifest();
        assert_eq!(BatteryManifest::parse(&m.to_text()).unwrap(), m);
        assert_eq!(m.visual().count(), 1);
        assert_eq!(m.entry("t-b").unwrap().variant_id(), "t-b");
    }

    #[test]
    fn manifest_errors_carry_lines() {
        let text = manifest().to_text().replace("visual\tv-a", "picture\tv-a");
        match BatteryManifest::parse(&text) {
            Err(VariantError::Manifest { line, .. }) => assert_eq!(line, 6),
            other => panic!("{other:?}"),
        }
        assert!(BatteryManifest::parse("nope").is_err());
    }
}
