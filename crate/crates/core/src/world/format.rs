//! Plain-text scenario files.
//!
//! ```text
//! # comments start with '#'
//! name = fig1
//! resolution_m = 0.1            # meters per cell
//! size_cells = 70 40            # width height
//! robot_radius_m = 0.25
//! start_cell = 3 15             # x y
//! goal_cell = 64 15
//! robot_pose = 0.85 1.55 0.0    # x_m y_m heading_rad
//! wall = 0 0 69 0               # inclusive cell rectangle x0 y0 x1 y1, repeatable
//!
//! object cabinet
//!   class = cabinet
//!   affordances = movability openability
//!   footprint = 16 28 23 33     # repeatable, cells are unioned
//!   open_footprint = 16 28 23 33
//!   open_footprint = 16 22 17 27
//!   state.movability = present  # present | absent, default present
//!   state.openability = closed  # closed | open, default closed
//! end
//! ```
//!
//! `size_cells` and `resolution_m` must precede any rectangle so bounds can
//! be checked on the line that declares them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use super::{Affordance, Cell, GridMap, Occupancy, RobotPose, Scenario, SemanticObject, WorldError};

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: WorldError,
    },
}

impl ScenarioFileError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ScenarioFileError::Io { .. } => None,
            ScenarioFileError::Syntax { line, .. } | ScenarioFileError::Invalid { line, .. } => {
                Some(*line)
            }
        }
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioFileError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioFileError::Io { path: path.display().to_string(), source })?;
    parse_scenario(&text)
}

struct ObjectDraft {
    line: usize,
    id: String,
    class_name: Option<String>,
    affordances: BTreeSet<Affordance>,
    footprint: BTreeSet<Cell>,
    open_footprint: BTreeSet<Cell>,
    state: BTreeMap<Affordance, bool>,
}

#[derive(Default)]
struct Draft {
    name: Option<String>,
    resolution: Option<f64>,
    size: Option<(usize, usize)>,
    robot_radius: Option<f64>,
    start: Option<Cell>,
    goal: Option<Cell>,
    robot: Option<RobotPose>,
    walls: Vec<Cell>,
    objects: Vec<ObjectDraft>,
    lines: BTreeMap<&'static str, usize>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioFileError> {
    let mut draft = Draft::default();
    let mut current: Option<ObjectDraft> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: String| ScenarioFileError::Syntax { line, message };

        if let Some(rest) = content.strip_prefix("object ") {
            if current.is_some() {
                return Err(syntax("nested `object` block; missing `end`".into()));
            }
            let id = rest.trim();
            if id.is_empty() || id.contains(char::is_whitespace) {
                return Err(syntax(format!("invalid object id `{id}`")));
            }
            current = Some(ObjectDraft {
                line,
                id: id.to_string(),
                class_name: None,
                affordances: BTreeSet::new(),
                footprint: BTreeSet::new(),
                open_footprint: BTreeSet::new(),
                state: BTreeMap::new(),
            });
            continue;
        }
        if content == "end" {
            let object = current.take().ok_or_else(|| syntax("`end` without `object`".into()))?;
            draft.objects.push(object);
            continue;
        }

        let (key, value) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| syntax(format!("expected `key = value`, got `{content}`")))?;

        if let Some(object) = current.as_mut() {
            match key {
                "class" => object.class_name = Some(value.to_string()),
                "affordances" => {
                    for token in value.split_whitespace() {
                        object.affordances.insert(token.parse().map_err(syntax)?);
                    }
                }
                "footprint" => object.footprint.extend(rect(value, &draft, line)?),
                "open_footprint" => object.open_footprint.extend(rect(value, &draft, line)?),
                "state.movability" => {
                    let present = match value {
                        "present" => true,
                        "absent" => false,
                        other => return Err(syntax(format!("expected present|absent, got `{other}`"))),
                    };
                    object.state.insert(Affordance::Movability, present);
                }
                "state.openability" => {
                    let closed = match value {
                        "closed" => true,
                        "open" => false,
                        other => return Err(syntax(format!("expected closed|open, got `{other}`"))),
                    };
                    object.state.insert(Affordance::Openability, closed);
                }
                other => return Err(syntax(format!("unknown object key `{other}`"))),
            }
            continue;
        }

        match key {
            "name" => {
                if value.is_empty() || value.contains(char::is_whitespace) {
                    return Err(syntax(format!("scenario name must be a single token, got `{value}`")));
                }
                draft.name = Some(value.to_string());
            }
            "resolution_m" => draft.resolution = Some(number(value, line)?),
            "robot_radius_m" => draft.robot_radius = Some(number(value, line)?),
            "size_cells" => {
                let [w, h] = integers::<2>(value, line)?;
                draft.size = Some((w, h));
            }
            "start_cell" => {
                let [x, y] = integers::<2>(value, line)?;
                draft.start = Some(Cell::new(x, y));
                draft.lines.insert("start", line);
            }
            "goal_cell" => {
                let [x, y] = integers::<2>(value, line)?;
                draft.goal = Some(Cell::new(x, y));
                draft.lines.insert("goal", line);
            }
            "robot_pose" => {
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(syntax("robot_pose needs `x_m y_m heading_rad`".into()));
                }
                let x = number(parts[0], line)?;
                let y = number(parts[1], line)?;
                let heading = number(parts[2], line)?;
                draft.robot = Some(RobotPose::new(x, y, heading));
                draft.lines.insert("robot", line);
            }
            "wall" => {
                let cells = rect(value, &draft, line)?;
                draft.walls.extend(cells);
            }
            other => return Err(syntax(format!("unknown key `{other}`"))),
        }
    }

    let eof = text.lines().count().max(1);
    if let Some(object) = current {
        return Err(ScenarioFileError::Syntax {
            line: object.line,
            message: format!("object `{}` is missing `end`", object.id),
        });
    }
    let missing = |what: &str| ScenarioFileError::Syntax { line: eof, message: format!("missing `{what}`") };
    let (width, height) = draft.size.ok_or_else(|| missing("size_cells"))?;
    let resolution = draft.resolution.ok_or_else(|| missing("resolution_m"))?;
    let start = draft.start.ok_or_else(|| missing("start_cell"))?;
    let goal = draft.goal.ok_or_else(|| missing("goal_cell"))?;
    let robot = draft.robot.ok_or_else(|| missing("robot_pose"))?;
    let name = draft.name.clone().unwrap_or_else(|| "scenario".to_string());
    let robot_radius = draft.robot_radius.unwrap_or(super::DEFAULT_ROBOT_RADIUS);

    let mut map = GridMap::new(width, height, resolution)
        .map_err(|source| ScenarioFileError::Invalid { line: eof, source })?;
    for cell in &draft.walls {
        map.set(*cell, Occupancy::Occupied);
    }

    let mut object_lines = BTreeMap::new();
    let mut objects = Vec::with_capacity(draft.objects.len());
    for d in draft.objects {
        object_lines.insert(d.id.clone(), d.line);
        let mut state = d.state;
        for a in &d.affordances {
            state.entry(*a).or_insert(true);
        }
        if let Some(extra) = state.keys().find(|a| !d.affordances.contains(a)) {
            return Err(ScenarioFileError::Syntax {
                line: d.line,
                message: format!("object `{}` sets state for undeclared affordance {extra}", d.id),
            });
        }
        objects.push(SemanticObject {
            class_name: d.class_name.unwrap_or_else(|| d.id.clone()),
            id: d.id,
            footprint: d.footprint,
            open_footprint: (!d.open_footprint.is_empty()).then_some(d.open_footprint),
            affordances: d.affordances,
            state,
        });
    }

    Scenario::new(name, map, objects, robot, start, goal, robot_radius).map_err(|source| {
        let line = match &source {
            WorldError::InvalidObject { id, .. } | WorldError::DuplicateObject(id) => {
                object_lines.get(id).copied().unwrap_or(eof)
            }
            WorldError::BlockedEndpoint { which, .. } => draft.lines.get(which).copied().unwrap_or(eof),
            WorldError::PoseOutOfBounds { .. } => draft.lines.get("robot").copied().unwrap_or(eof),
            _ => eof,
        };
        ScenarioFileError::Invalid { line, source }
    })
}

fn number(token: &str, line: usize) -> Result<f64, ScenarioFileError> {
    token
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ScenarioFileError::Syntax { line, message: format!("expected a number, got `{token}`") })
}

fn integers<const N: usize>(value: &str, line: usize) -> Result<[usize; N], ScenarioFileError> {
    let parsed: Vec<usize> = value
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| ScenarioFileError::Syntax {
            line,
            message: format!("expected {N} non-negative integers, got `{value}`"),
        })?;
    parsed.try_into().map_err(|_| ScenarioFileError::Syntax {
        line,
        message: format!("expected {N} non-negative integers, got `{value}`"),
    })
}

fn rect(value: &str, draft: &Draft, line: usize) -> Result<Vec<Cell>, ScenarioFileError> {
    let (width, height) = draft.size.ok_or_else(|| ScenarioFileError::Syntax {
        line,
        message: "`size_cells` must be declared before rectangles".into(),
    })?;
    let [x0, y0, x1, y1] = integers::<4>(value, line)?;
    if x0 > x1 || y0 > y1 {
        return Err(ScenarioFileError::Syntax {
            line,
            message: format!("rectangle corners out of order: `{value}`"),
        });
    }
    if x1 >= width || y1 >= height {
        return Err(ScenarioFileError::Syntax {
            line,
            message: format!("rectangle `{value}` exceeds the {width}x{height} grid"),
        });
    }
    Ok((y0..=y1).flat_map(|y| (x0..=x1).map(move |x| Cell::new(x, y))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
name = small
resolution_m = 0.1
size_cells = 10 6
robot_radius_m = 0.0
start_cell = 0 0
goal_cell = 9 5
robot_pose = 0.05 0.05 0.0
wall = 0 3 3 3

object door
  class = door
  affordances = movability openability
  footprint = 6 1 6 2
  open_footprint = 6 1 6 2
  open_footprint = 7 2 8 2
  state.openability = closed
end
";

    #[test]
    fn parses_a_small_file() {
        let s = parse_scenario(SMALL).unwrap();
        assert_eq!(s.name, "small");
        assert_eq!(s.map.occupied_count(), 4);
        let door = s.object("door").unwrap();
        assert_eq!(door.footprint.len(), 2);
        assert_eq!(door.open_footprint.as_ref().unwrap().len(), 4);
        assert!(door.closed_by_default());
    }

    #[test]
    fn out_of_bounds_footprint_reports_its_line() {
        let text = SMALL.replace("footprint = 6 1 6 2\n  open", "footprint = 6 1 12 2\n  open");
        let err = parse_scenario(&text).unwrap_err();
        assert_eq!(err.line(), Some(13));
        assert!(err.to_string().contains("exceeds"), "{err}");
    }

    #[test]
    fn invalid_objects_point_at_the_object_line() {
        let text = SMALL.replace("  open_footprint = 6 1 6 2\n", "");
        let err = parse_scenario(&text).unwrap_err();
        assert!(matches!(err, ScenarioFileError::Invalid { line: 10, .. }), "{err}");
    }

    #[test]
    fn blocked_start_points_at_start_line() {
        let text = SMALL.replace("start_cell = 0 0", "start_cell = 1 3");
        let err = parse_scenario(&text).unwrap_err();
        assert_eq!(err.line(), Some(5));
    }

    #[test]
    fn syntax_errors() {
        for (bad, line) in [
            ("resolution_m = fast\n", 1),
            ("size_cells = 3\n", 1),
            ("bogus = 1\n", 1),
            ("size_cells = 4 4\nobject a\nclass = a\n", 2),
            ("end\n", 1),
        ] {
            let err = parse_scenario(bad).unwrap_err();
            assert_eq!(err.line(), Some(line), "{bad:?} -> {err}");
        }
        let err = parse_scenario("wall = 0 0 1 1\n").unwrap_err();
        assert!(err.to_string().contains("size_cells"));
    }
}
