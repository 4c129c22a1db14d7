//! Global A* planning, local replanning around newly relevant obstacles,
//! and the deviation measure between a local and an initial path.
//!
//! The global planner minimizes path length on an 8-connected grid. The
//! local planner searches a square window around the robot and adds a
//! clearance penalty near obstacles, so a detour spreads into whatever free
//! space is available. That is what makes nearby objects shape *how far* the
//! robot deviates and not only *whether* it deviates.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use thiserror::Error;

use crate::world::{inflate, rasterize, Cell, FeatureVector, GridMap, Occupancy, Scenario, WorldError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no path from ({}, {}) to ({}, {})", from.x, from.y, to.x, to.y)]
    NoPath { from: Cell, to: Cell },
    #[error("{which} cell ({}, {}) is blocked", cell.x, cell.y)]
    BlockedEndpoint { which: &'static str, cell: Cell },
}

/// An 8-connected cell path and its length in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub cells: Vec<Cell>,
    pub cost: f64,
}

impl PathPlan {
    /// Builds a plan from consecutive 8-adjacent cells; the cost is the sum
    /// of unit and diagonal steps scaled by `resolution`.
    pub fn from_cells(cells: Vec<Cell>, resolution: f64) -> Self {
        let (mut straight, mut diagonal) = (0u64, 0u64);
        for w in cells.windows(2) {
            let dx = w[0].x.abs_diff(w[1].x);
            let dy = w[0].y.abs_diff(w[1].y);
            debug_assert!(dx <= 1 && dy <= 1 && dx + dy > 0, "cells {:?} not adjacent", w);
            if dx + dy == 2 {
                diagonal += 1;
            } else {
                straight += 1;
            }
        }
        let cost = resolution * (straight as f64 + diagonal as f64 * SQRT_2);
        Self { cells, cost }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell centers in meters.
    pub fn points(&self, resolution: f64) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .map(|c| ((c.x as f64 + 0.5) * resolution, (c.y as f64 + 0.5) * resolution))
            .collect()
    }

    pub fn reversed(&self) -> Self {
        let mut cells = self.cells.clone();
        cells.reverse();
        Self { cells, cost: self.cost }
    }
}

/// Octile distance in cells.
pub fn octile(a: Cell, b: Cell) -> f64 {
    let dx = a.x.abs_diff(b.x) as f64;
    let dy = a.y.abs_diff(b.y) as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    (hi - lo) + lo * SQRT_2
}

/// Inclusive cell rectangle a search is confined to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Region {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Region {
    fn whole(map: &GridMap) -> Self {
        Self { x0: 0, y0: 0, x1: map.width() - 1, y1: map.height() - 1 }
    }

    fn around(map: &GridMap, center: Cell, half: usize) -> Self {
        Self {
            x0: center.x.saturating_sub(half),
            y0: center.y.saturating_sub(half),
            x1: (center.x + half).min(map.width() - 1),
            y1: (center.y + half).min(map.height() - 1),
        }
    }

    fn contains(&self, c: Cell) -> bool {
        (self.x0..=self.x1).contains(&c.x) && (self.y0..=self.y1).contains(&c.y)
    }

    fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    fn local_index(&self, c: Cell) -> usize {
        (c.y - self.y0) * self.width() + (c.x - self.x0)
    }

    fn len(&self) -> usize {
        self.width() * (self.y1 - self.y0 + 1)
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    h: f64,
    index: usize,
    g: f64,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    // BinaryHeap is a max-heap: reverse so the smallest (f, h, index) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// A* over free cells of `region`. `step` returns the cost of moving into
/// `to`; it must be at least the step length in cells for the octile
/// heuristic to stay admissible. Returns the cell path and its objective.
fn astar(
    map: &GridMap,
    region: Region,
    start: Cell,
    goal: Cell,
    step: impl Fn(Cell, bool) -> f64,
) -> Option<(Vec<Cell>, f64)> {
    let n = region.len();
    let mut g_best = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<Cell>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();

    let cell_of = |row_major: usize| map.cell_at_index(row_major);
    let s = region.local_index(start);
    g_best[s] = 0.0;
    let h0 = octile(start, goal);
    open.push(OpenEntry { f: h0, h: h0, index: map.index(start), g: 0.0 });

    while let Some(entry) = open.pop() {
        let cell = cell_of(entry.index);
        let li = region.local_index(cell);
        if closed[li] {
            continue;
        }
        closed[li] = true;
        if cell == goal {
            let mut cells = vec![cell];
            let mut cur = cell;
            while let Some(p) = parent[region.local_index(cur)] {
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            return Some((cells, entry.g));
        }
        for (next, diagonal) in map.neighbors(cell) {
            if !region.contains(next) || map.get(next) == Occupancy::Occupied {
                continue;
            }
            let ni = region.local_index(next);
            if closed[ni] {
                continue;
            }
            let g = entry.g + step(next, diagonal);
            if g < g_best[ni] {
                g_best[ni] = g;
                parent[ni] = Some(cell);
                let h = octile(next, goal);
                open.push(OpenEntry { f: g + h, h, index: map.index(next), g });
            }
        }
    }
    None
}

/// Shortest 8-connected path on `map` (already inflated by the caller).
pub fn plan_global(map: &GridMap, start: Cell, goal: Cell) -> Result<PathPlan, PlanError> {
    for (which, cell) in [("start", start), ("goal", goal)] {
        if !map.is_free(cell) {
            return Err(PlanError::BlockedEndpoint { which, cell });
        }
    }
    let step = |_: Cell, diagonal: bool| if diagonal { SQRT_2 } else { 1.0 };
    astar(map, Region::whole(map), start, goal, step)
        .map(|(cells, _)| PathPlan::from_cells(cells, map.resolution()))
        .ok_or(PlanError::NoPath { from: start, to: goal })
}

/// Initial plan for a scenario: the static background only, inflated by the
/// robot radius. Semantic objects are what the robot encounters afterwards.
pub fn plan_initial(scenario: &Scenario) -> Result<PathPlan, PlanError> {
    let map = inflate(&scenario.map, scenario.robot_radius);
    plan_global(&map, scenario.start, scenario.goal)
}

/// Local replanning parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPlannerConfig {
    /// Look-ahead along the initial path, meters. The re-join target is the
    /// first free initial-path cell at least this far ahead.
    pub window: f64,
    /// Width of the clearance band beyond the robot radius, meters.
    pub clearance_band: f64,
    /// Penalty multiplier at the edge of the lethal zone.
    pub clearance_weight: f64,
}

impl Default for LocalPlannerConfig {
    fn default() -> Self {
        Self { window: 3.0, clearance_band: 0.5, clearance_weight: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalOutcome {
    /// The local plan leaves the initial path; `deviation` in meters.
    Deviated { path: PathPlan, deviation: f64 },
    /// The initial path is collision-free over the window.
    OnPlan { path: PathPlan },
    /// No path re-joins the initial plan inside the local window.
    Stuck,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPlanResult {
    pub outcome: LocalOutcome,
    /// Index of the initial-path cell nearest to the robot.
    pub robot_index: usize,
    /// Index of the re-join target on the initial path, if one exists.
    pub rejoin_index: Option<usize>,
    /// Value of the search objective (length plus clearance penalty, meters)
    /// for `Deviated` results.
    pub objective: Option<f64>,
}

impl LocalPlanResult {
    pub fn deviation(&self) -> Option<f64> {
        match &self.outcome {
            LocalOutcome::Deviated { deviation, .. } => Some(*deviation),
            LocalOutcome::OnPlan { .. } => Some(0.0),
            LocalOutcome::Stuck => None,
        }
    }

    pub fn is_stuck(&self) -> bool {
        matches!(self.outcome, LocalOutcome::Stuck)
    }

    pub fn path(&self) -> Option<&PathPlan> {
        match &self.outcome {
            LocalOutcome::Deviated { path, .. } | LocalOutcome::OnPlan { path } => Some(path),
            LocalOutcome::Stuck => None,
        }
    }
}

/// Index of the initial-path cell whose center is nearest to the robot;
/// ties go to the earlier cell.
pub fn robot_path_index(scenario: &Scenario, initial: &PathPlan) -> usize {
    let res = scenario.map.resolution();
    initial
        .points(res)
        .iter()
        .enumerate()
        .map(|(i, (x, y))| (i, (x - scenario.robot.x).hypot(y - scenario.robot.y)))
        .fold((0, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best })
        .0
}

/// Replans from the robot's point on `initial` to the first free initial-path
/// cell at arc length ≥ `window` ahead, in the world selected by `fv`.
pub fn plan_local(
    scenario: &Scenario,
    fv: &FeatureVector,
    initial: &PathPlan,
    config: &LocalPlannerConfig,
) -> Result<LocalPlanResult, WorldError> {
    let raw = rasterize(scenario, fv)?;
    Ok(plan_local_on(scenario, &raw, initial, config))
}

fn plan_local_on(scenario: &Scenario, raw: &GridMap, initial: &PathPlan, config: &LocalPlannerConfig) -> LocalPlanResult {
    let res = raw.resolution();
    let inflated = inflate(raw, scenario.robot_radius);
    let robot_index = robot_path_index(scenario, initial);
    let stuck = |rejoin_index| LocalPlanResult {
        outcome: LocalOutcome::Stuck,
        robot_index,
        rejoin_index,
        objective: None,
    };
    if initial.is_empty() {
        return stuck(None);
    }
    let origin = initial.cells[robot_index];
    let half = (2.0 * config.window / res).ceil() as usize;
    let region = Region::around(raw, origin, half);

    let Some(target) = rejoin_target(initial, robot_index, config.window, res, &inflated, region) else {
        return stuck(None);
    };
    if !inflated.is_free(origin) {
        return stuck(Some(target));
    }

    let segment = &initial.cells[robot_index..=target];
    if segment.iter().all(|c| inflated.is_free(*c)) {
        return LocalPlanResult {
            outcome: LocalOutcome::OnPlan { path: PathPlan::from_cells(segment.to_vec(), res) },
            robot_index,
            rejoin_index: Some(target),
            objective: None,
        };
    }

    let cap = scenario.robot_radius + config.clearance_band;
    let clearance = clearance_field(raw, region, cap);
    let band = config.clearance_band.max(f64::MIN_POSITIVE);
    let step = |to: Cell, diagonal: bool| {
        let d = clearance[region.local_index(to)];
        let p = ((cap - d) / band).clamp(0.0, 1.0);
        let len = if diagonal { SQRT_2 } else { 1.0 };
        len * (1.0 + config.clearance_weight * p * p)
    };
    match astar(&inflated, region, origin, initial.cells[target], step) {
        None => stuck(Some(target)),
        Some((cells, objective)) => {
            let path = PathPlan::from_cells(cells, res);
            let deviation = deviation(initial, &path, res);
            let outcome = if deviation > 0.0 {
                LocalOutcome::Deviated { path, deviation }
            } else {
                LocalOutcome::OnPlan { path }
            };
            LocalPlanResult { outcome, robot_index, rejoin_index: Some(target), objective: Some(objective * res) }
        }
    }
}

fn rejoin_target(
    initial: &PathPlan,
    from: usize,
    window: f64,
    res: f64,
    inflated: &GridMap,
    region: Region,
) -> Option<usize> {
    let last = initial.len() - 1;
    let mut arc = 0.0;
    let mut first_far = last;
    for i in from..last {
        arc += step_length(initial.cells[i], initial.cells[i + 1]) * res;
        if arc >= window - 1e-12 {
            first_far = i + 1;
            break;
        }
    }
    (first_far..=last)
        .take_while(|&i| region.contains(initial.cells[i]))
        .find(|&i| inflated.is_free(initial.cells[i]))
}

fn step_length(a: Cell, b: Cell) -> f64 {
    if a.x != b.x && a.y != b.y {
        SQRT_2
    } else {
        1.0
    }
}

/// Distance (meters) from every region cell center to the nearest occupied
/// cell center of `raw`, capped at `cap`.
fn clearance_field(raw: &GridMap, region: Region, cap: f64) -> Vec<f64> {
    let res = raw.resolution();
    let mut field = vec![cap; region.len()];
    let span = (cap / res).ceil() as isize;
    let x_lo = region.x0 as isize - span;
    let x_hi = region.x1 as isize + span;
    let y_lo = region.y0 as isize - span;
    let y_hi = region.y1 as isize + span;
    for occupied in raw.occupied() {
        let (ox, oy) = (occupied.x as isize, occupied.y as isize);
        if ox < x_lo || ox > x_hi || oy < y_lo || oy > y_hi {
            continue;
        }
        for dy in -span..=span {
            for dx in -span..=span {
                let (x, y) = (ox + dx, oy + dy);
                if x < region.x0 as isize || y < region.y0 as isize || x > region.x1 as isize || y > region.y1 as isize {
                    continue;
                }
                let d = ((dx * dx + dy * dy) as f64).sqrt() * res;
                let li = region.local_index(Cell::new(x as usize, y as usize));
                if d < field[li] {
                    field[li] = d;
                }
            }
        }
    }
    field
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * abx, a.1 + t * aby);
    (p.0 - cx).hypot(p.1 - cy)
}

fn point_polyline_distance(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    match line {
        [] => f64::INFINITY,
        [only] => (p.0 - only.0).hypot(p.1 - only.1),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Deviation summary between a local and an initial path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationReport {
    /// Mean distance of local-path points to the initial polyline, meters.
    pub mean: f64,
    /// Largest such distance.
    pub max: f64,
    /// Symmetric (Hausdorff) distance between the local path and the stretch
    /// of the initial path it replaces.
    pub symmetric_max: f64,
}

/// Mean distance from local-path cell centers to the initial polyline.
pub fn deviation(initial: &PathPlan, local: &PathPlan, resolution: f64) -> f64 {
    deviation_report(initial, local, resolution).mean
}

pub fn deviation_report(initial: &PathPlan, local: &PathPlan, resolution: f64) -> DeviationReport {
    assert!(!initial.is_empty() && !local.is_empty(), "deviation of an empty path");
    let init = initial.points(resolution);
    let loc = local.points(resolution);
    let distances: Vec<f64> = loc.iter().map(|p| point_polyline_distance(*p, &init)).collect();
    let mean = distances.iter().sum::<f64>() / distances.len() as f64;
    let max = distances.iter().copied().fold(0.0, f64::max);

    let nearest = |p: (f64, f64)| {
        init.iter()
            .enumerate()
            .map(|(i, q)| (i, (p.0 - q.0).hypot(p.1 - q.1)))
            .fold((0, f64::INFINITY), |b, (i, d)| if d < b.1 { (i, d) } else { b })
            .0
    };
    let (a, b) = (nearest(loc[0]), nearest(loc[loc.len() - 1]));
    let stretch = &init[a.min(b)..=a.max(b)];
    let back = stretch.iter().map(|p| point_polyline_distance(*p, &loc)).fold(0.0, f64::max);
    DeviationReport { mean, max, symmetric_max: max.max(back) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{default_vector, RobotPose, SemanticObject};

    fn line(x0: usize, x1: usize, y: usize) -> PathPlan {
        PathPlan::from_cells((x0..=x1).map(|x| Cell::new(x, y)).collect(), 0.1)
    }

    #[test]
    fn start_equals_goal() {
        let map = GridMap::new(3, 3, 0.1).unwrap();
        let plan = plan_global(&map, Cell::new(1, 1), Cell::new(1, 1)).unwrap();
        assert_eq!(plan.cells, vec![Cell::new(1, 1)]);
        assert_eq!(plan.cost, 0.0);
    }

    #[test]
    fn empty_map_diagonal() {
        let map = GridMap::new(5, 5, 0.1).unwrap();
        let plan = plan_global(&map, Cell::new(0, 0), Cell::new(4, 4)).unwrap();
        assert!((plan.cost - 4.0 * SQRT_2 * 0.1).abs() < 1e-12);
        assert_eq!(plan.len(), 5);
    }

    #[test]
    fn blocked_and_unreachable() {
        let mut map = GridMap::new(5, 5, 0.1).unwrap();
        for y in 0..5 {
            map.set(Cell::new(2, y), Occupancy::Occupied);
        }
        assert_eq!(
            plan_global(&map, Cell::new(0, 0), Cell::new(4, 4)),
            Err(PlanError::NoPath { from: Cell::new(0, 0), to: Cell::new(4, 4) })
        );
        assert!(matches!(
            plan_global(&map, Cell::new(2, 0), Cell::new(4, 4)),
            Err(PlanError::BlockedEndpoint { which: "start", .. })
        ));
    }

    #[test]
    fn deviation_of_identical_paths_is_zero() {
        let p = line(0, 20, 5);
        let r = deviation_report(&p, &p, 0.1);
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.symmetric_max, 0.0);
    }

    #[test]
    fn parallel_offset_is_one_cell() {
        let initial = line(0, 60, 5);
        let local = line(10, 50, 6);
        assert!((deviation(&initial, &local, 0.1) - 0.1).abs() < 1e-9);
        assert!((deviation(&initial.reversed(), &local, 0.1) - 0.1).abs() < 1e-9);
    }

    fn corridor(blocker: Option<Vec<Cell>>) -> Scenario {
        let mut map = GridMap::new(60, 12, 0.1).unwrap();
        for x in 0..60 {
            map.set(Cell::new(x, 0), Occupancy::Occupied);
            map.set(Cell::new(x, 11), Occupancy::Occupied);
        }
        let objects = blocker
            .map(|cells| vec![SemanticObject::movable("wall", "wall", cells)])
            .unwrap_or_default();
        Scenario::new(
            "corridor",
            map,
            objects,
            RobotPose::new(0.55, 0.55, 0.0),
            Cell::new(5, 5),
            Cell::new(55, 5),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn free_world_is_on_plan() {
        let s = corridor(None);
        let initial = plan_initial(&s).unwrap();
        let r = plan_local(&s, &default_vector(&s), &initial, &LocalPlannerConfig::default()).unwrap();
        assert!(matches!(r.outcome, LocalOutcome::OnPlan { .. }));
        assert_eq!(r.deviation(), Some(0.0));
        let path = r.path().unwrap();
        assert!(path.cells.iter().all(|c| initial.cells.contains(c)));
    }

    #[test]
    fn walled_corridor_is_stuck() {
        let wall: Vec<Cell> = (1..11).map(|y| Cell::new(20, y)).collect();
        let s = corridor(Some(wall));
        let initial = plan_initial(&s).unwrap();
        let r = plan_local(&s, &default_vector(&s), &initial, &LocalPlannerConfig::default()).unwrap();
        assert!(r.is_stuck());
        // removing it frees the way again
        let fv = default_vector(&s).toggled(s.features().iter());
        let r = plan_local(&s, &fv, &initial, &LocalPlannerConfig::default()).unwrap();
        assert!(!r.is_stuck());
    }

    #[test]
    fn partial_blocker_forces_a_detour() {
        let block: Vec<Cell> = (3..=6).flat_map(|y| (14..=16).map(move |x| Cell::new(x, y))).collect();
        let s = corridor(Some(block));
        let initial = plan_initial(&s).unwrap();
        let r = plan_local(&s, &default_vector(&s), &initial, &LocalPlannerConfig::default()).unwrap();
        match r.outcome {
            LocalOutcome::Deviated { path, deviation } => {
                assert!(deviation > 0.0);
                assert_eq!(path.cells[0], initial.cells[r.robot_index]);
                assert_eq!(*path.cells.last().unwrap(), initial.cells[r.rejoin_index.unwrap()]);
            }
            other => panic!("expected a detour, got {other:?}"),
        }
    }
}
