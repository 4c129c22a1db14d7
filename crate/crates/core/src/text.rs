//! Textual explanations: descriptions, counterfactuals and suggestions
//! built from an [`Attribution`], phrased egocentrically from the robot's
//! pose.
//!
//! All wording lives in a versioned template table (`data/templates.txt`),
//! including the mapping from weight sign to "less"/"more".

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::attribution::{active_by_default, Attribution, FailureExplanation};
use crate::world::{Affordance, Feature, RobotPose, Scenario, SemanticObject, WorldError};

/// Share of the largest absolute weight below which a feature counts as
/// having no effect.
pub const NULL_THRESHOLD: f64 = 0.05;

const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.txt");
const TEMPLATE_HEADER: &str = "# navex templates v1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TextError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("feature {0} has no weight in this attribution")]
    UnknownFeature(Feature),
    #[error("feature {0} has no notable effect on the deviation")]
    NullEffect(Feature),
    #[error("{kind} is not available for feature {feature}")]
    UnsupportedKind { kind: ExplanationKind, feature: Feature },
    #[error("failure explanation lists no remedy")]
    EmptyRemedy,
    #[error("template table, line {line}: {message}")]
    Template { line: usize, message: String },
}

/// Egocentric direction of an object, counterclockwise from the heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Front,
    LeftFront,
    Left,
    LeftBack,
    Back,
    RightBack,
    Right,
    RightFront,
}

impl Relation {
    /// Sectors in counterclockwise order starting at the heading.
    pub const SECTORS: [Relation; 8] = [
        Relation::Front,
        Relation::LeftFront,
        Relation::Left,
        Relation::LeftBack,
        Relation::Back,
        Relation::RightBack,
        Relation::Right,
        Relation::RightFront,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Front => "front",
            Relation::LeftFront => "left-front",
            Relation::Left => "left",
            Relation::LeftBack => "left-back",
            Relation::Back => "back",
            Relation::RightBack => "right-back",
            Relation::Right => "right",
            Relation::RightFront => "right-front",
        }
    }

    /// Sector of a bearing in radians, counterclockwise from the heading.
    /// A bearing on a sector boundary belongs to the counterclockwise side.
    pub fn from_bearing(bearing: f64) -> Relation {
        let mut degrees = bearing.to_degrees().rem_euclid(360.0);
        // Snap away float noise so exact boundaries stay exact.
        degrees = (degrees * 1e9).round() / 1e9;
        let sector = ((degrees + 22.5) / 45.0).floor() as usize % 8;
        Self::SECTORS[sector]
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Direction of the object's footprint centroid as seen from the robot.
pub fn spatial_relation(robot: &RobotPose, object: &SemanticObject, resolution: f64) -> Relation {
    let (cx, cy) = object.centroid(resolution);
    relation_to_point(robot, cx, cy)
}

/// Direction of the world point `(x, y)` as seen from the robot.
pub fn relation_to_point(robot: &RobotPose, x: f64, y: f64) -> Relation {
    let bearing = (y - robot.y).atan2(x - robot.x) - robot.heading;
    Relation::from_bearing(bearing.rem_euclid(2.0 * PI))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TextLength {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verbalization {
    Plain,
    Polite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TextStyle {
    pub length: TextLength,
    pub verbalization: Verbalization,
}

impl TextStyle {
    pub const CANONICAL: TextStyle = TextStyle {
        length: TextLength::Short,
        verbalization: Verbalization::Plain,
    };

    pub const ALL: [TextStyle; 4] = [
        TextStyle { length: TextLength::Short, verbalization: Verbalization::Plain },
        TextStyle { length: TextLength::Short, verbalization: Verbalization::Polite },
        TextStyle { length: TextLength::Long, verbalization: Verbalization::Plain },
        TextStyle { length: TextLength::Long, verbalization: Verbalization::Polite },
    ];

    /// Stable token such as `short-plain`.
    pub fn id(&self) -> String {
        let length = match self.length {
            TextLength::Short => "short",
            TextLength::Long => "long",
        };
        let verbalization = match self.verbalization {
            Verbalization::Plain => "plain",
            Verbalization::Polite => "polite",
        };
        format!("{length}-{verbalization}")
    }
}

impl Default for TextStyle {
    fn default() -> Self {
        Self::CANONICAL
    }
}

impl fmt::Display for TextStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for TextStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|style| style.id() == s)
            .ok_or_else(|| format!("unknown text style {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExplanationKind {
    Description,
    Counterfactual,
    Suggestion,
}

impl ExplanationKind {
    pub const ALL: [ExplanationKind; 3] = [
        ExplanationKind::Description,
        ExplanationKind::Counterfactual,
        ExplanationKind::Suggestion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExplanationKind::Description => "description",
            ExplanationKind::Counterfactual => "counterfactual",
            ExplanationKind::Suggestion => "suggestion",
        }
    }
}

impl fmt::Display for ExplanationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextualExplanation {
    pub kind: ExplanationKind,
    /// For failure texts, the first feature of the remedy.
    pub feature: Feature,
    pub text: String,
    pub style: TextStyle,
}

/// Parsed template table: `key = template` lines under a version header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateTable {
    entries: BTreeMap<String, String>,
}

impl TemplateTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TEMPLATES).expect("built-in template table is valid")
    }

    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == TEMPLATE_HEADER => {}
            _ => {
                return Err(TextError::Template {
                    line: 1,
                    message: format!("expected header {TEMPLATE_HEADER:?}"),
                })
            }
        }
        let mut entries = BTreeMap::new();
        for (i, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once(" = ") else {
                return Err(TextError::Template { line: i + 1, message: "expected `key = template`".into() });
            };
            if entries.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(TextError::Template { line: i + 1, message: format!("duplicate key {key:?}") });
            }
        }
        let table = Self { entries };
        table.check_complete()?;
        Ok(table)
    }

    fn check_complete(&self) -> Result<(), TextError> {
        let mut required: Vec<String> = Vec::new();
        for kind in ["description", "counterfactual", "suggestion", "failure"] {
            for style in TextStyle::ALL {
                required.push(template_key(kind, style));
            }
        }
        for key in [
            "direction.less",
            "direction.more",
            "toggle.movability.active",
            "toggle.movability.inactive",
            "toggle.openability.active",
            "toggle.openability.inactive",
            "be.one",
            "be.many",
            "pronoun.one",
            "pronoun.many",
        ] {
            required.push(key.to_string());
        }
        for key in required {
            if !self.entries.contains_key(&key) {
                return Err(TextError::Template { line: 0, message: format!("missing key {key:?}") });
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.entries.get(key).map(String::as_str).unwrap_or_default()
    }

    fn fill(&self, key: &str, slots: &[(&str, &str)]) -> String {
        let mut text = self.get(key).to_string();
        for (name, value) in slots {
            text = text.replace(&format!("{{{name}}}"), value);
        }
        text
    }
}

impl Default for TemplateTable {
    fn default() -> Self {
        Self::builtin()
    }
}

fn template_key(kind: &str, style: TextStyle) -> String {
    let length = match style.length {
        TextLength::Short => "short",
        TextLength::Long => "long",
    };
    let verbalization = match style.verbalization {
        Verbalization::Plain => "plain",
        Verbalization::Polite => "polite",
    };
    format!("{kind}.{length}.{verbalization}")
}

fn centimeters(meters: f64) -> String {
    format!("{:.0}", (meters * 100.0).abs())
}

/// True when `weight` is too small, relative to the strongest feature, to
/// be worth explaining.
pub fn is_null_effect(attr: &Attribution, weight: f64) -> bool {
    let max = attr.max_abs_weight();
    max == 0.0 || weight.abs() < NULL_THRESHOLD * max
}

/// Whether toggling the feature away from the recorded world lowers the
/// deviation, given its active-state weight.
pub fn toggling_reduces(weight: f64, active_default: bool) -> bool {
    if active_default {
        weight > 0.0
    } else {
        weight < 0.0
    }
}

/// Explanation with the built-in template table.
pub fn generate(
    attr: &Attribution,
    feature: &Feature,
    kind: ExplanationKind,
    style: TextStyle,
    scenario: &Scenario,
) -> Result<TextualExplanation, TextError> {
    generate_with(&TemplateTable::builtin(), attr, feature, kind, style, scenario)
}

pub fn generate_with(
    table: &TemplateTable,
    attr: &Attribution,
    feature: &Feature,
    kind: ExplanationKind,
    style: TextStyle,
    scenario: &Scenario,
) -> Result<TextualExplanation, TextError> {
    let weight = attr.weight(feature).ok_or_else(|| TextError::UnknownFeature(feature.clone()))?;
    let object = scenario.resolve(feature)?;
    if is_null_effect(attr, weight) {
        return Err(TextError::NullEffect(feature.clone()));
    }
    let active = active_by_default(scenario, feature)?;
    let unsupported = || TextError::UnsupportedKind { kind, feature: feature.clone() };
    let relation = spatial_relation(&scenario.robot, object, scenario.map.resolution());
    let relation = relation.as_str();
    let object_name = object.class_name.as_str();

    let text = match kind {
        ExplanationKind::Description => {
            // Only an object in the way can be the reason for the detour.
            if feature.affordance != Affordance::Movability || !active || weight <= 0.0 {
                return Err(unsupported());
            }
            let d = centimeters(attr.base_deviation);
            table.fill(
                &template_key("description", style),
                &[("object", object_name), ("relation", relation), ("d", &d)],
            )
        }
        ExplanationKind::Counterfactual => {
            let direction = if toggling_reduces(weight, active) {
                table.get("direction.less")
            } else {
                table.get("direction.more")
            };
            let toggle = table.get(&format!(
                "toggle.{}.{}",
                feature.affordance.as_str(),
                if active { "active" } else { "inactive" }
            ));
            let d = centimeters(weight);
            table.fill(
                &template_key("counterfactual", style),
                &[
                    ("object", object_name),
                    ("relation", relation),
                    ("toggle", toggle),
                    ("direction", direction),
                    ("d", &d),
                ],
            )
        }
        ExplanationKind::Suggestion => {
            if feature.affordance != Affordance::Movability || !active || weight <= 0.0 {
                return Err(unsupported());
            }
            let d = centimeters(weight);
            table.fill(&template_key("suggestion", style), &[("object", object_name), ("d", &d)])
        }
    };
    Ok(TextualExplanation { kind, feature: feature.clone(), text, style })
}

/// Every kind the attribution supports for `feature`, canonical order.
pub fn generate_all(
    attr: &Attribution,
    feature: &Feature,
    style: TextStyle,
    scenario: &Scenario,
) -> Result<Vec<TextualExplanation>, TextError> {
    let mut out = Vec::new();
    for kind in ExplanationKind::ALL {
        match generate(attr, feature, kind, style, scenario) {
            Ok(text) => out.push(text),
            Err(TextError::UnsupportedKind { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn with_article(noun: &str) -> String {
    let vowel = noun.chars().next().is_some_and(|c| "aeiouAEIOU".contains(c));
    format!("{} {noun}", if vowel { "an" } else { "a" })
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Request to clear the first minimal remedy; names every object in it.
pub fn generate_failure_text(
    fe: &FailureExplanation,
    scenario: &Scenario,
    style: TextStyle,
    window: f64,
) -> Result<TextualExplanation, TextError> {
    generate_failure_text_with(&TemplateTable::builtin(), fe, scenario, style, window)
}

pub fn generate_failure_text_with(
    table: &TemplateTable,
    fe: &FailureExplanation,
    scenario: &Scenario,
    style: TextStyle,
    window: f64,
) -> Result<TextualExplanation, TextError> {
    let set = fe.minimal_sets.first().filter(|s| !s.is_empty()).ok_or(TextError::EmptyRemedy)?;
    let mut names: Vec<String> = Vec::new();
    for feature in set {
        let object = scenario.resolve(feature)?;
        let name = with_article(&object.class_name);
        if !names.contains(&name) {
            names.push(name);
        }
    }
    let one = names.len() == 1;
    let objects = join_and(&names);
    let d = centimeters(window);
    let text = table.fill(
        &template_key("failure", style),
        &[
            ("objects", &objects),
            ("be", table.get(if one { "be.one" } else { "be.many" })),
            ("pronoun", table.get(if one { "pronoun.one" } else { "pronoun.many" })),
            ("d", &d),
        ],
    );
    Ok(TextualExplanation { kind: ExplanationKind::Suggestion, feature: set[0].clone(), text, style })
}
