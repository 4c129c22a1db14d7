//! Environment model: occupancy grid, semantic objects with affordances, and
//! the robot pose, plus the feature toggles that produce perturbed worlds.
//!
//! A [`Scenario`] keeps the static background map separate from its
//! [`SemanticObject`]s. Objects are stamped onto the background by
//! [`rasterize`] according to a [`FeatureVector`], one bit per
//! object-affordance pair. Bit `1` keeps an affordance in the state recorded
//! by the scenario, bit `0` flips it (a present object is removed, a closed
//! object is opened).

mod format;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use format::{load_scenario, parse_scenario, ScenarioFileError};

/// Default grid resolution in meters per cell.
pub const DEFAULT_RESOLUTION: f64 = 0.1;
/// Default robot disc radius in meters.
pub const DEFAULT_ROBOT_RADIUS: f64 = 0.25;

const DISTANCE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("object `{id}`: {reason}")]
    InvalidObject { id: String, reason: String },
    #[error("duplicate object id `{0}`")]
    DuplicateObject(String),
    #[error("robot pose ({x:.3}, {y:.3}) lies outside the grid")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("{which} cell ({}, {}) is not free after inflation", cell.x, cell.y)]
    BlockedEndpoint { which: &'static str, cell: Cell },
    #[error("unknown feature `{0}`")]
    UnknownFeature(Feature),
    #[error("feature vector does not cover `{0}`")]
    MissingFeature(Feature),
    #[error("feature `{0}` appears twice in the vector")]
    DuplicateFeature(Feature),
}

/// Grid cell coordinate. `x` is the column, `y` the row; world `y` grows
/// with the row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Occupancy {
    Free,
    Occupied,
}

/// Row-major occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    resolution: f64,
    cells: Vec<Occupancy>,
}

impl GridMap {
    /// An all-free map.
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self, WorldError> {
        Self::from_cells(width, height, resolution, vec![Occupancy::Free; width * height])
    }

    pub fn from_cells(
        width: usize,
        height: usize,
        resolution: f64,
        cells: Vec<Occupancy>,
    ) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::InvalidGrid(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(WorldError::InvalidGrid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if cells.len() != width * height {
            return Err(WorldError::InvalidGrid(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Self { width, height, resolution, cells })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn cells(&self) -> &[Occupancy] {
        &self.cells
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    /// Row-major index of `cell`. Panics if the cell is out of bounds.
    pub fn index(&self, cell: Cell) -> usize {
        assert!(self.contains(cell), "cell {cell:?} out of bounds");
        cell.y * self.width + cell.x
    }

    pub fn cell_at_index(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn get(&self, cell: Cell) -> Occupancy {
        self.cells[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.contains(cell) && self.get(cell) == Occupancy::Free
    }

    pub fn set(&mut self, cell: Cell, value: Occupancy) {
        let i = self.index(cell);
        self.cells[i] = value;
    }

    /// Center of `cell` in meters.
    pub fn center(&self, cell: Cell) -> (f64, f64) {
        (
            (cell.x as f64 + 0.5) * self.resolution,
            (cell.y as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing the metric point, if inside the grid.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let cell = Cell::new(
            (x / self.resolution).floor() as usize,
            (y / self.resolution).floor() as usize,
        );
        self.contains(cell).then_some(cell)
    }

    pub fn occupied(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Occupancy::Occupied)
            .map(|(i, _)| self.cell_at_index(i))
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| **c == Occupancy::Occupied).count()
    }

    /// 8-connected neighbors inside the grid, in a fixed order.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = (Cell, bool)> + '_ {
        const OFFSETS: [(isize, isize); 8] =
            [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        OFFSETS.iter().filter_map(move |&(dx, dy)| {
            let x = cell.x as isize + dx;
            let y = cell.y as isize + dy;
            if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
                return None;
            }
            Some((Cell::new(x as usize, y as usize), dx != 0 && dy != 0))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Affordance {
    Movability,
    Openability,
}

impl Affordance {
    pub const ALL: [Affordance; 2] = [Affordance::Movability, Affordance::Openability];

    pub fn as_str(self) -> &'static str {
        match self {
            Affordance::Movability => "movability",
            Affordance::Openability => "openability",
        }
    }
}

impl fmt::Display for Affordance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Affordance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "movability" | "mov" => Ok(Affordance::Movability),
            "openability" | "open" => Ok(Affordance::Openability),
            other => Err(format!("unknown affordance `{other}`")),
        }
    }
}

/// An object with actionable properties.
///
/// `state[Movability]` is `true` when the object stands at its footprint,
/// `state[Openability]` is `true` when it is closed.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticObject {
    pub id: String,
    pub class_name: String,
    pub footprint: BTreeSet<Cell>,
    pub open_footprint: Option<BTreeSet<Cell>>,
    pub affordances: BTreeSet<Affordance>,
    pub state: BTreeMap<Affordance, bool>,
}

impl SemanticObject {
    /// A movable object standing at `footprint`.
    pub fn movable(
        id: impl Into<String>,
        class_name: impl Into<String>,
        footprint: impl IntoIterator<Item = Cell>,
    ) -> Self {
        Self {
            id: id.into(),
            class_name: class_name.into(),
            footprint: footprint.into_iter().collect(),
            open_footprint: None,
            affordances: BTreeSet::from([Affordance::Movability]),
            state: BTreeMap::from([(Affordance::Movability, true)]),
        }
    }

    /// Adds openability; the object starts closed. `open_footprint` must
    /// contain the closed footprint.
    pub fn with_openable(mut self, open_footprint: impl IntoIterator<Item = Cell>) -> Self {
        self.open_footprint = Some(open_footprint.into_iter().collect());
        self.affordances.insert(Affordance::Openability);
        self.state.insert(Affordance::Openability, true);
        self
    }

    pub fn with_state(mut self, affordance: Affordance, value: bool) -> Self {
        self.state.insert(affordance, value);
        self
    }

    pub fn has(&self, affordance: Affordance) -> bool {
        self.affordances.contains(&affordance)
    }

    /// Recorded (default) presence.
    pub fn present_by_default(&self) -> bool {
        self.state.get(&Affordance::Movability).copied().unwrap_or(true)
    }

    /// Recorded (default) closed state; objects without openability are closed.
    pub fn closed_by_default(&self) -> bool {
        self.state.get(&Affordance::Openability).copied().unwrap_or(true)
    }

    /// Cells covered when the object is in the given state.
    pub fn cells_for(&self, present: bool, closed: bool) -> Option<&BTreeSet<Cell>> {
        if !present {
            return None;
        }
        match (&self.open_footprint, closed) {
            (Some(open), false) => Some(open),
            _ => Some(&self.footprint),
        }
    }

    /// Centroid of the closed footprint in meters.
    pub fn centroid(&self, resolution: f64) -> (f64, f64) {
        let n = self.footprint.len().max(1) as f64;
        let (sx, sy) = self.footprint.iter().fold((0.0, 0.0), |(sx, sy), c| {
            (sx + c.x as f64 + 0.5, sy + c.y as f64 + 0.5)
        });
        (sx / n * resolution, sy / n * resolution)
    }

    fn validate(&self, map: &GridMap) -> Result<(), WorldError> {
        let invalid = |reason: String| WorldError::InvalidObject { id: self.id.clone(), reason };
        if self.id.is_empty() || self.id.contains(char::is_whitespace) || self.id.contains(':') {
            return Err(invalid("id must be a non-empty token without spaces or `:`".into()));
        }
        if self.footprint.is_empty() {
            return Err(invalid("footprint is empty".into()));
        }
        if let Some(c) = self.footprint.iter().find(|c| !map.contains(**c)) {
            return Err(invalid(format!("footprint cell ({}, {}) is outside the grid", c.x, c.y)));
        }
        match (&self.open_footprint, self.has(Affordance::Openability)) {
            (Some(open), true) => {
                if !open.is_superset(&self.footprint) {
                    return Err(invalid("open footprint must contain the closed footprint".into()));
                }
                if let Some(c) = open.iter().find(|c| !map.contains(**c)) {
                    return Err(invalid(format!(
                        "open footprint cell ({}, {}) is outside the grid",
                        c.x, c.y
                    )));
                }
            }
            (None, false) => {}
            (None, true) => return Err(invalid("openable object needs an open footprint".into())),
            (Some(_), false) => {
                return Err(invalid("open footprint given but object is not openable".into()))
            }
        }
        let state_keys: BTreeSet<_> = self.state.keys().copied().collect();
        if state_keys != self.affordances {
            return Err(invalid("state must have exactly one entry per affordance".into()));
        }
        Ok(())
    }
}

/// Robot position in meters and heading in radians, normalized to `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl RobotPose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// One object-affordance pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Feature {
    pub object_id: String,
    pub affordance: Affordance,
}

impl Feature {
    pub fn new(object_id: impl Into<String>, affordance: Affordance) -> Self {
        Self { object_id: object_id.into(), affordance }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.object_id, self.affordance)
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (object, affordance) =
            s.split_once(':').ok_or_else(|| format!("feature `{s}` must be `object:affordance`"))?;
        if object.is_empty() {
            return Err(format!("feature `{s}` has an empty object id"));
        }
        Ok(Feature::new(object, affordance.parse()?))
    }
}

/// Binary interpretable representation of a perturbed world.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    entries: Vec<(Feature, bool)>,
}

impl FeatureVector {
    /// Builds a vector in canonical order. Fails on repeated features.
    pub fn new(mut entries: Vec<(Feature, bool)>) -> Result<Self, WorldError> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(WorldError::DuplicateFeature(w[0].0.clone()));
        }
        Ok(Self { entries })
    }

    /// Zips canonical `features` with `bits`.
    pub fn from_bits(features: &[Feature], bits: &[bool]) -> Self {
        assert_eq!(features.len(), bits.len());
        let entries = features.iter().cloned().zip(bits.iter().copied()).collect();
        Self::new(entries).expect("features must be unique")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Feature, bool)> {
        self.entries.iter().map(|(f, b)| (f, *b))
    }

    pub fn features(&self) -> impl Iterator<Item = &Feature> {
        self.entries.iter().map(|(f, _)| f)
    }

    pub fn bits(&self) -> Vec<bool> {
        self.entries.iter().map(|(_, b)| *b).collect()
    }

    pub fn bit(&self, feature: &Feature) -> Option<bool> {
        self.entries
            .binary_search_by(|(f, _)| f.cmp(feature))
            .ok()
            .map(|i| self.entries[i].1)
    }

    /// Copy with the listed features set to `0`.
    pub fn toggled<'a>(&self, features: impl IntoIterator<Item = &'a Feature>) -> Self {
        let mut out = self.clone();
        for feature in features {
            if let Ok(i) = out.entries.binary_search_by(|(f, _)| f.cmp(feature)) {
                out.entries[i].1 = false;
            }
        }
        out
    }

    /// Number of zero bits.
    pub fn toggled_count(&self) -> usize {
        self.entries.iter().filter(|(_, b)| !b).count()
    }
}

/// The world a plan is computed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub map: GridMap,
    pub objects: Vec<SemanticObject>,
    pub robot: RobotPose,
    pub start: Cell,
    pub goal: Cell,
    pub robot_radius: f64,
}

impl Scenario {
    /// Validates all scenario invariants.
    pub fn new(
        name: impl Into<String>,
        map: GridMap,
        objects: Vec<SemanticObject>,
        robot: RobotPose,
        start: Cell,
        goal: Cell,
        robot_radius: f64,
    ) -> Result<Self, WorldError> {
        let scenario = Self { name: name.into(), map, objects, robot, start, goal, robot_radius };
        scenario.validate()?;
        Ok(scenario)
    }

    fn validate(&self) -> Result<(), WorldError> {
        if !(self.robot_radius >= 0.0 && self.robot_radius.is_finite()) {
            return Err(WorldError::InvalidGrid(format!(
                "robot radius must be non-negative, got {}",
                self.robot_radius
            )));
        }
        let mut ids = BTreeSet::new();
        for object in &self.objects {
            object.validate(&self.map)?;
            if !ids.insert(object.id.as_str()) {
                return Err(WorldError::DuplicateObject(object.id.clone()));
            }
        }
        if self.map.cell_at(self.robot.x, self.robot.y).is_none() {
            return Err(WorldError::PoseOutOfBounds { x: self.robot.x, y: self.robot.y });
        }
        let inflated = inflate(&rasterize(self, &default_vector(self))?, self.robot_radius);
        for (which, cell) in [("start", self.start), ("goal", self.goal)] {
            if !inflated.is_free(cell) {
                return Err(WorldError::BlockedEndpoint { which, cell });
            }
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&SemanticObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// All declared features in canonical order.
    pub fn features(&self) -> Vec<Feature> {
        let mut features: Vec<Feature> = self
            .objects
            .iter()
            .flat_map(|o| o.affordances.iter().map(|a| Feature::new(o.id.clone(), *a)))
            .collect();
        features.sort();
        features
    }

    /// Resolves a feature to its object, checking the affordance is declared.
    pub fn resolve(&self, feature: &Feature) -> Result<&SemanticObject, WorldError> {
        self.object(&feature.object_id)
            .filter(|o| o.has(feature.affordance))
            .ok_or_else(|| WorldError::UnknownFeature(feature.clone()))
    }
}

/// All bits `1`, canonical order.
pub fn default_vector(scenario: &Scenario) -> FeatureVector {
    FeatureVector::from_bits(&scenario.features(), &vec![true; scenario.features().len()])
}

/// Stamps every object onto the static map in the state selected by `fv`.
pub fn rasterize(scenario: &Scenario, fv: &FeatureVector) -> Result<GridMap, WorldError> {
    for feature in fv.features() {
        scenario.resolve(feature)?;
    }
    let mut map = scenario.map.clone();
    for object in &scenario.objects {
        let bit = |affordance: Affordance| -> Result<bool, WorldError> {
            if !object.has(affordance) {
                return Ok(true);
            }
            let feature = Feature::new(object.id.clone(), affordance);
            fv.bit(&feature).ok_or(WorldError::MissingFeature(feature))
        };
        // bit 0 flips the recorded state
        let present = object.present_by_default() == bit(Affordance::Movability)?;
        let closed = object.closed_by_default() == bit(Affordance::Openability)?;
        if let Some(cells) = object.cells_for(present, closed) {
            for &cell in cells {
                map.set(cell, Occupancy::Occupied);
            }
        }
    }
    Ok(map)
}

/// Marks every cell whose center lies within `radius` meters of an occupied
/// cell center.
pub fn inflate(map: &GridMap, radius: f64) -> GridMap {
    let reach = radius / map.resolution;
    if reach <= 0.0 {
        return map.clone();
    }
    let span = reach.floor() as isize;
    let limit = reach * reach + DISTANCE_EPS;
    let offsets: Vec<(isize, isize)> = (-span..=span)
        .flat_map(|dy| (-span..=span).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= limit)
        .collect();

    let mut out = map.clone();
    let (w, h) = (map.width as isize, map.height as isize);
    for cell in map.occupied() {
        for &(dx, dy) in &offsets {
            let (x, y) = (cell.x as isize + dx, cell.y as isize + dy);
            if (0..w).contains(&x) && (0..h).contains(&y) {
                out.cells[(y * w + x) as usize] = Occupancy::Occupied;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> Vec<Cell> {
        (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| Cell::new(x, y))).collect()
    }

    fn toy() -> Scenario {
        let map = GridMap::new(20, 10, 0.1).unwrap();
        let chair = SemanticObject::movable("chair", "chair", rect(8, 1, 9, 2));
        let cabinet = SemanticObject::movable("cabinet", "cabinet", rect(12, 7, 14, 8))
            .with_openable(rect(12, 5, 14, 8));
        Scenario::new(
            "toy",
            map,
            vec![chair, cabinet],
            RobotPose::new(0.15, 0.45, 0.0),
            Cell::new(1, 4),
            Cell::new(18, 4),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn grid_invariants_are_checked() {
        assert!(GridMap::new(0, 3, 0.1).is_err());
        assert!(GridMap::new(3, 3, 0.0).is_err());
        assert!(GridMap::from_cells(2, 2, 0.1, vec![Occupancy::Free; 3]).is_err());
    }

    #[test]
    fn zero_objects_rasterize_to_the_static_map() {
        let mut map = GridMap::new(5, 4, 0.1).unwrap();
        map.set(Cell::new(2, 2), Occupancy::Occupied);
        let s = Scenario::new(
            "empty",
            map.clone(),
            vec![],
            RobotPose::new(0.05, 0.05, 0.0),
            Cell::new(0, 0),
            Cell::new(4, 3),
            0.0,
        )
        .unwrap();
        let fv = default_vector(&s);
        assert!(fv.is_empty());
        assert_eq!(rasterize(&s, &fv).unwrap(), map);
    }

    #[test]
    fn removing_a_movable_object_clears_its_cells() {
        let s = toy();
        let chair = Feature::new("chair", Affordance::Movability);
        let map = rasterize(&s, &default_vector(&s).toggled([&chair])).unwrap();
        assert!(rect(8, 1, 9, 2).iter().all(|c| map.is_free(*c)));
        assert_eq!(map.occupied_count(), 6);
    }

    #[test]
    fn opening_uses_the_open_footprint() {
        let s = toy();
        let open = Feature::new("cabinet", Affordance::Openability);
        let map = rasterize(&s, &default_vector(&s).toggled([&open])).unwrap();
        let occupied: BTreeSet<Cell> = map.occupied().collect();
        let expected: BTreeSet<Cell> = rect(8, 1, 9, 2).into_iter().chain(rect(12, 5, 14, 8)).collect();
        assert_eq!(occupied, expected);
    }

    #[test]
    fn unknown_and_missing_features_are_rejected() {
        let s = toy();
        let bogus = FeatureVector::new(vec![
            (Feature::new("chair", Affordance::Openability), true),
            (Feature::new("chair", Affordance::Movability), true),
            (Feature::new("cabinet", Affordance::Movability), true),
            (Feature::new("cabinet", Affordance::Openability), true),
        ])
        .unwrap();
        assert_eq!(
            rasterize(&s, &bogus),
            Err(WorldError::UnknownFeature(Feature::new("chair", Affordance::Openability)))
        );
        let short = FeatureVector::new(vec![(Feature::new("chair", Affordance::Movability), true)]).unwrap();
        assert!(matches!(rasterize(&s, &short), Err(WorldError::MissingFeature(_))));
    }

    #[test]
    fn object_states_flip_relative_to_the_recorded_state() {
        let map = GridMap::new(10, 10, 0.1).unwrap();
        let stored = SemanticObject::movable("box", "box", rect(4, 4, 5, 5))
            .with_state(Affordance::Movability, false);
        let s = Scenario::new(
            "stored",
            map,
            vec![stored],
            RobotPose::new(0.05, 0.05, 0.0),
            Cell::new(0, 0),
            Cell::new(9, 9),
            0.0,
        )
        .unwrap();
        let fv = default_vector(&s);
        assert_eq!(rasterize(&s, &fv).unwrap().occupied_count(), 0);
        let placed = rasterize(&s, &fv.toggled(s.features().iter())).unwrap();
        assert_eq!(placed.occupied_count(), 4);
    }

    #[test]
    fn default_vector_is_canonical() {
        let s = toy();
        let fv = default_vector(&s);
        let names: Vec<String> = fv.features().map(ToString::to_string).collect();
        assert_eq!(names, ["cabinet:movability", "cabinet:openability", "chair:movability"]);
        assert!(fv.bits().iter().all(|b| *b));
        let mut shuffled: Vec<(Feature, bool)> = fv.iter().map(|(f, b)| (f.clone(), b)).collect();
        shuffled.reverse();
        assert_eq!(FeatureVector::new(shuffled).unwrap(), fv);
    }

    #[test]
    fn inflate_radius_zero_is_identity() {
        let s = toy();
        let map = rasterize(&s, &default_vector(&s)).unwrap();
        assert_eq!(inflate(&map, 0.0), map);
    }

    #[test]
    fn inflate_one_cell_gives_the_four_neighborhood() {
        let mut map = GridMap::new(5, 5, 0.1).unwrap();
        map.set(Cell::new(2, 2), Occupancy::Occupied);
        let out = inflate(&map, 0.1);
        let occupied: BTreeSet<Cell> = out.occupied().collect();
        let expected = BTreeSet::from([
            Cell::new(2, 2),
            Cell::new(1, 2),
            Cell::new(3, 2),
            Cell::new(2, 1),
            Cell::new(2, 3),
        ]);
        assert_eq!(occupied, expected);
    }

    #[test]
    fn object_validation() {
        let map = GridMap::new(5, 5, 0.1).unwrap();
        let outside = SemanticObject::movable("a", "a", [Cell::new(7, 1)]);
        assert!(matches!(outside.validate(&map), Err(WorldError::InvalidObject { .. })));
        let shrinking = SemanticObject::movable("b", "b", rect(1, 1, 2, 2)).with_openable([Cell::new(1, 1)]);
        assert!(shrinking.validate(&map).is_err());
        let dup = |id: &str| SemanticObject::movable(id, "x", [Cell::new(1, 1)]);
        let err = Scenario::new(
            "dup",
            map.clone(),
            vec![dup("a"), dup("a")],
            RobotPose::new(0.45, 0.45, 0.0),
            Cell::new(0, 0),
            Cell::new(4, 4),
            0.0,
        );
        assert_eq!(err, Err(WorldError::DuplicateObject("a".into())));
        let blocked = Scenario::new(
            "blocked",
            map,
            vec![dup("a")],
            RobotPose::new(0.45, 0.45, 0.0),
            Cell::new(0, 1),
            Cell::new(4, 4),
            0.1,
        );
        assert!(matches!(blocked, Err(WorldError::BlockedEndpoint { which: "start", .. })));
    }

    #[test]
    fn heading_is_normalized() {
        let pose = RobotPose::new(0.0, 0.0, -std::f64::consts::FRAC_PI_2);
        assert!((pose.heading - 1.5 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(normalize_angle(TAU), 0.0);
    }

    #[test]
    fn feature_round_trips_through_text() {
        let f: Feature = "cabinet:openability".parse().unwrap();
        assert_eq!(f, Feature::new("cabinet", Affordance::Openability));
        assert!("cabinet".parse::<Feature>().is_err());
        assert!("cabinet:flying".parse::<Feature>().is_err());
    }
}
