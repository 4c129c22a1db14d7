//! Explanation maps: one raster per object-affordance pair, with the
//! selected object colored by the sign and strength of its weight.
//!
//! The raster has one block of `scale × scale` pixels per grid cell and is
//! flipped vertically so world "up" is image "up".

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::attribution::{rank_features, Attribution};
use crate::planning::PathPlan;
use crate::text::{spatial_relation, Relation};
use crate::world::{Cell, Feature, Scenario, WorldError};

pub type Rgb = [u8; 3];

pub const FREE: Rgb = [220, 220, 220];
pub const OCCUPIED: Rgb = [64, 64, 64];
pub const NEUTRAL_OBJECT: Rgb = [128, 128, 128];
pub const INITIAL_PATH: Rgb = [0, 0, 255];
pub const LOCAL_PATH: Rgb = [255, 215, 0];
pub const ROBOT: Rgb = [255, 255, 255];
pub const HATCH_INK: Rgb = [0, 0, 0];

/// Fill brightness for a zero weight; the strongest weight gets 1.0.
pub const BRIGHTNESS_FLOOR: f64 = 0.3;
/// Heading tick length in cells, drawn from the robot cell.
pub const HEADING_TICK: usize = 3;
/// Pitch of the hatch lattice in pixels.
const HATCH_PITCH: usize = 4;

#[derive(Debug, Error)]
pub enum VisualError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("feature {0} has no weight in this attribution")]
    UnknownFeature(Feature),
    #[error("scale must be at least 1")]
    InvalidScale,
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ColorScheme {
    RedGreen,
    BlueOrange,
    Grayscale,
}

impl ColorScheme {
    pub const ALL: [ColorScheme; 3] = [ColorScheme::RedGreen, ColorScheme::BlueOrange, ColorScheme::Grayscale];

    /// Full-brightness colors for (increase, decrease).
    pub fn colors(self) -> (Rgb, Rgb) {
        match self {
            ColorScheme::RedGreen => ([0, 168, 0], [200, 0, 0]),
            ColorScheme::BlueOrange => ([230, 110, 0], [0, 90, 180]),
            ColorScheme::Grayscale => ([255, 255, 255], [255, 255, 255]),
        }
    }

    fn token(self) -> &'static str {
        match self {
            ColorScheme::RedGreen => "redgreen",
            ColorScheme::BlueOrange => "blueorange",
            ColorScheme::Grayscale => "grayscale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Shape {
    FilledFootprint,
    Outline,
}

impl Shape {
    fn token(self) -> &'static str {
        match self {
            Shape::FilledFootprint => "filled",
            Shape::Outline => "outline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Texture {
    Solid,
    Hatched,
}

impl Texture {
    fn token(self) -> &'static str {
        match self {
            Texture::Solid => "solid",
            Texture::Hatched => "hatched",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Style {
    pub scheme: ColorScheme,
    pub shape: Shape,
    pub texture: Texture,
}

impl Style {
    pub const CANONICAL: Style = Style {
        scheme: ColorScheme::RedGreen,
        shape: Shape::FilledFootprint,
        texture: Texture::Solid,
    };

    /// The full cross-product, canonical style first.
    pub fn all() -> Vec<Style> {
        let mut out = Vec::with_capacity(12);
        for scheme in ColorScheme::ALL {
            for shape in [Shape::FilledFootprint, Shape::Outline] {
                for texture in [Texture::Solid, Texture::Hatched] {
                    out.push(Style { scheme, shape, texture });
                }
            }
        }
        out
    }

    /// Stable token such as `redgreen-filled-solid`.
    pub fn id(&self) -> String {
        format!("{}-{}-{}", self.scheme.token(), self.shape.token(), self.texture.token())
    }
}

impl Default for Style {
    fn default() -> Self {
        Self::CANONICAL
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for Style {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::all()
            .into_iter()
            .find(|style| style.id() == s)
            .ok_or_else(|| format!("unknown style {s:?}"))
    }
}

/// Row-major RGB pixels, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self { width, height, pixels: fill.repeat(width * height) }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, color: Rgb) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    /// PNG bytes with each `(keyword, text)` pair stored as a tEXt chunk.
    pub fn encode_png(&self, text: &[(&str, String)]) -> Result<Vec<u8>, VisualError> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            for (keyword, value) in text {
                encoder.add_text_chunk(keyword.to_string(), value.clone())?;
            }
            let mut writer = encoder.write_header()?;
            writer.write_image_data(&self.pixels)?;
            writer.finish()?;
        }
        Ok(out)
    }

    /// Binary PPM (P6) bytes.
    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// What the text generator needs to caption a map.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionSeed {
    pub feature: Feature,
    pub class_name: String,
    pub relation: Relation,
    pub weight: f64,
    /// 1-based position in the feature ranking.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationMap {
    pub image: Raster,
    pub feature: Feature,
    pub style: Style,
    pub scale: usize,
    /// Role name to the color drawn for it.
    pub legend: BTreeMap<String, Rgb>,
    /// Fill brightness of the selected object in `[BRIGHTNESS_FLOOR, 1]`.
    pub brightness: f64,
    pub caption_seed: CaptionSeed,
}

impl ExplanationMap {
    pub fn file_name(&self, scenario: &str) -> String {
        format!("{}_{}_{}_{}.png", scenario, self.feature.object_id, self.feature.affordance, self.style.id())
    }

    /// Plain-text `key = value` sidecar describing the map.
    pub fn legend_text(&self, seed: u64) -> String {
        let mut out = String::from("# navex legend v1\n");
        out.push_str(&format!("feature = {}\n", self.feature));
        out.push_str(&format!("style = {}\n", self.style.id()));
        out.push_str(&format!("scale = {}\n", self.scale));
        out.push_str(&format!("seed = {seed}\n"));
        out.push_str(&format!("weight_m = {:.9}\n", self.caption_seed.weight));
        out.push_str(&format!("brightness = {:.6}\n", self.brightness));
        out.push_str(&format!("rank = {}\n", self.caption_seed.rank));
        out.push_str(&format!("relation = {}\n", self.caption_seed.relation));
        for (role, [r, g, b]) in &self.legend {
            out.push_str(&format!("color.{role} = {r},{g},{b}\n"));
        }
        out
    }

    /// Writes the PNG (with the seed in a tEXt chunk) and its legend sidecar
    /// into `dir`; returns the image path.
    pub fn write(&self, dir: &Path, scenario: &str, seed: u64) -> Result<std::path::PathBuf, VisualError> {
        let path = dir.join(self.file_name(scenario));
        let png = self.image.encode_png(&[
            ("navex-seed", seed.to_string()),
            ("navex-feature", self.feature.to_string()),
            ("navex-style", self.style.id()),
        ])?;
        fs::File::create(&path)?.write_all(&png)?;
        fs::write(path.with_extension("legend.txt"), self.legend_text(seed))?;
        Ok(path)
    }
}

/// Fill brightness for `weight` relative to the attribution's strongest one.
pub fn brightness(weight: f64, max_abs: f64) -> f64 {
    if max_abs == 0.0 {
        return BRIGHTNESS_FLOOR;
    }
    BRIGHTNESS_FLOOR + (1.0 - BRIGHTNESS_FLOOR) * (weight.abs() / max_abs).min(1.0)
}

fn scaled(color: Rgb, factor: f64) -> Rgb {
    color.map(|c| (c as f64 * factor).round() as u8)
}

/// Pixel lies on the sign hatch: `/` lines for an increase, `\` for a
/// decrease, in image orientation. Grayscale solid maps draw it in black so
/// the sign survives without hue.
pub fn on_hatch(px: usize, py: usize, increase: bool) -> bool {
    if increase {
        (px + py) % HATCH_PITCH == 0
    } else {
        (px + HATCH_PITCH - py % HATCH_PITCH) % HATCH_PITCH == 0
    }
}

struct Canvas {
    raster: Raster,
    scale: usize,
    grid_height: usize,
}

impl Canvas {
    fn pixels(&self, cell: Cell) -> impl Iterator<Item = (usize, usize)> {
        let s = self.scale;
        let x0 = cell.x * s;
        let y0 = (self.grid_height - 1 - cell.y) * s;
        (y0..y0 + s).flat_map(move |py| (x0..x0 + s).map(move |px| (px, py)))
    }

    fn fill(&mut self, cell: Cell, color: Rgb) {
        let pixels: Vec<_> = self.pixels(cell).collect();
        for (px, py) in pixels {
            self.raster.set(px, py, color);
        }
    }
}

fn outline(cells: &BTreeSet<Cell>) -> BTreeSet<Cell> {
    cells
        .iter()
        .copied()
        .filter(|c| {
            let neighbors = [
                c.x.checked_sub(1).map(|x| Cell::new(x, c.y)),
                Some(Cell::new(c.x + 1, c.y)),
                c.y.checked_sub(1).map(|y| Cell::new(c.x, y)),
                Some(Cell::new(c.x, c.y + 1)),
            ];
            neighbors.iter().any(|n| n.is_none_or(|n| !cells.contains(&n)))
        })
        .collect()
}

/// Renders the map for `feature`. `local` is the replanned path, if any.
pub fn render(
    scenario: &Scenario,
    attr: &Attribution,
    feature: &Feature,
    initial: &PathPlan,
    local: Option<&PathPlan>,
    style: Style,
    scale: usize,
) -> Result<ExplanationMap, VisualError> {
    if scale == 0 {
        return Err(VisualError::InvalidScale);
    }
    let weight = attr.weight(feature).ok_or_else(|| VisualError::UnknownFeature(feature.clone()))?;
    let selected = scenario.resolve(feature)?;
    let ranked = rank_features(attr);
    let rank = ranked.iter().position(|(f, _)| f == feature).map_or(0, |i| i + 1);

    let map = &scenario.map;
    let (w, h) = (map.width(), map.height());
    let mut canvas = Canvas {
        raster: Raster::new(w * scale, h * scale, FREE),
        scale,
        grid_height: h,
    };
    let mut legend: BTreeMap<String, Rgb> = BTreeMap::new();
    legend.insert("free".into(), FREE);
    legend.insert("occupied".into(), OCCUPIED);
    for cell in map.occupied() {
        canvas.fill(cell, OCCUPIED);
    }

    for object in &scenario.objects {
        if object.id == selected.id {
            continue;
        }
        let Some(cells) = object.cells_for(object.present_by_default(), object.closed_by_default()) else {
            continue;
        };
        for &cell in cells {
            canvas.fill(cell, NEUTRAL_OBJECT);
        }
        legend.insert("neutral_object".into(), NEUTRAL_OBJECT);
    }

    // An object absent by default is drawn where it would stand.
    let cells = selected
        .cells_for(true, selected.closed_by_default())
        .expect("present object has cells")
        .clone();
    let increase = weight >= 0.0;
    let (inc, dec) = style.scheme.colors();
    let b = brightness(weight, attr.max_abs_weight());
    let fill = scaled(if increase { inc } else { dec }, b);
    legend.insert("increase".into(), inc);
    legend.insert("decrease".into(), dec);
    legend.insert("feature_fill".into(), fill);
    let painted = match style.shape {
        Shape::FilledFootprint => cells.clone(),
        Shape::Outline => outline(&cells),
    };
    match (style.scheme, style.texture) {
        (ColorScheme::Grayscale, Texture::Solid) => legend.insert("hatch".into(), HATCH_INK),
        (_, Texture::Hatched) => legend.insert("hatch".into(), fill),
        _ => None,
    };
    for &cell in &painted {
        let pixels: Vec<_> = canvas.pixels(cell).collect();
        for (px, py) in pixels {
            let on = on_hatch(px, py, increase);
            let color = match (style.scheme, style.texture) {
                (ColorScheme::Grayscale, Texture::Solid) if on => HATCH_INK,
                (_, Texture::Solid) => fill,
                (_, Texture::Hatched) if on => fill,
                (_, Texture::Hatched) => FREE,
            };
            canvas.raster.set(px, py, color);
        }
    }

    for &cell in &initial.cells {
        canvas.fill(cell, INITIAL_PATH);
    }
    legend.insert("initial_path".into(), INITIAL_PATH);
    if let Some(local) = local {
        for &cell in &local.cells {
            canvas.fill(cell, LOCAL_PATH);
        }
        legend.insert("local_path".into(), LOCAL_PATH);
    }
    for cell in robot_cells(scenario) {
        canvas.fill(cell, ROBOT);
    }
    legend.insert("robot".into(), ROBOT);

    let caption_seed = CaptionSeed {
        feature: feature.clone(),
        class_name: selected.class_name.clone(),
        relation: spatial_relation(&scenario.robot, selected, map.resolution()),
        weight,
        rank,
    };
    Ok(ExplanationMap {
        image: canvas.raster,
        feature: feature.clone(),
        style,
        scale,
        legend,
        brightness: b,
        caption_seed,
    })
}

/// The robot's cell followed by its heading tick, clipped to the grid.
pub fn robot_cells(scenario: &Scenario) -> Vec<Cell> {
    let map = &scenario.map;
    let robot = &scenario.robot;
    let Some(origin) = map.cell_at(robot.x, robot.y) else {
        return Vec::new();
    };
    let mut cells = vec![origin];
    let (cx, cy) = map.center(origin);
    let res = map.resolution();
    for step in 1..=HEADING_TICK {
        let d = step as f64 * res;
        if let Some(cell) = map.cell_at(cx + d * robot.heading.cos(), cy + d * robot.heading.sin()) {
            if !cells.contains(&cell) {
                cells.push(cell);
            }
        }
    }
    cells
}

/// One map per feature, strongest first.
pub fn render_all(
    scenario: &Scenario,
    attr: &Attribution,
    initial: &PathPlan,
    local: Option<&PathPlan>,
    style: Style,
    scale: usize,
) -> Result<Vec<ExplanationMap>, VisualError> {
    rank_features(attr)
        .into_par_iter()
        .map(|(feature, _)| render(scenario, attr, &feature, initial, local, style, scale))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::AttributionMode;
    use crate::world::{Affordance, GridMap, RobotPose, SemanticObject};

    fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> Vec<Cell> {
        (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| Cell::new(x, y))).collect()
    }

    fn scene() -> Scenario {
        let map = GridMap::new(30, 20, 0.1).unwrap();
        let objects = vec![
            SemanticObject::movable("box", "box", rect(10, 3, 14, 6)),
            SemanticObject::movable("crate", "crate", rect(20, 12, 23, 15)),
        ];
        Scenario::new("t", map, objects, RobotPose::new(0.35, 1.05, 0.0), Cell::new(3, 10), Cell::new(26, 10), 0.25)
            .unwrap()
    }

    fn attr(wbox: f64, wcrate: f64) -> Attribution {
        Attribution {
            base_deviation: 0.1,
            intercept: 0.0,
            weights: vec![
                (Feature::new("box", Affordance::Movability), wbox),
                (Feature::new("crate", Affordance::Movability), wcrate),
            ],
            r_squared: 1.0,
            mode: AttributionMode::Exhaustive,
            samples: 4,
        }
    }

    fn path() -> PathPlan {
        PathPlan::from_cells((3..=26).map(|x| Cell::new(x, 10)).collect(), 0.1)
    }

    #[test]
    fn zero_weight_sits_on_the_floor() {
        let s = scene();
        let a = attr(0.0, 0.0);
        let m = render(&s, &a, &Feature::new("box", Affordance::Movability), &path(), None, Style::CANONICAL, 1)
            .unwrap();
        // y = 3 is image row 16.
        assert_eq!(m.image.get(10, 16), scaled([0, 168, 0], 0.3));
        assert_eq!(m.brightness, BRIGHTNESS_FLOOR);
    }

    #[test]
    fn dimensions_follow_scale() {
        let s = scene();
        let m = render(&s, &attr(0.2, -0.1), &Feature::new("crate", Affordance::Movability), &path(), None, Style::CANONICAL, 3)
            .unwrap();
        assert_eq!((m.image.width(), m.image.height()), (90, 60));
        assert_eq!(m.image.get(3 * 20, 3 * (19 - 12)), scaled([200, 0, 0], 0.3 + 0.7 * 0.5));
    }

    #[test]
    fn outline_leaves_interior_background() {
        let s = scene();
        let style = Style { shape: Shape::Outline, ..Style::CANONICAL };
        let m = render(&s, &attr(0.2, 0.1), &Feature::new("box", Affordance::Movability), &path(), None, style, 1)
            .unwrap();
        assert_eq!(m.image.get(10, 19 - 3), [0, 168, 0]);
        assert_eq!(m.image.get(12, 19 - 4), FREE);
    }

    #[test]
    fn grayscale_hatch_follows_sign() {
        let s = scene();
        let style = Style { scheme: ColorScheme::Grayscale, ..Style::CANONICAL };
        let feature = Feature::new("box", Affordance::Movability);
        for (w, increase) in [(0.2, true), (-0.2, false)] {
            let m = render(&s, &attr(w, 0.1), &feature, &path(), None, style, 1).unwrap();
            for cell in rect(10, 3, 14, 6) {
                let (px, py) = (cell.x, 19 - cell.y);
                let ink = m.image.get(px, py) == HATCH_INK;
                assert_eq!(ink, on_hatch(px, py, increase), "{cell}");
            }
        }
    }

    #[test]
    fn png_carries_seed_and_is_deterministic() {
        let s = scene();
        let m = render(&s, &attr(0.2, 0.1), &Feature::new("box", Affordance::Movability), &path(), None, Style::CANONICAL, 2)
            .unwrap();
        let a = m.image.encode_png(&[("navex-seed", "7".into())]).unwrap();
        let b = m.image.encode_png(&[("navex-seed", "7".into())]).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[1..4], b"PNG");
        assert!(a.windows(12).any(|w| w == b"navex-seed\x007"));
        let ppm = m.image.encode_ppm();
        assert!(ppm.starts_with(b"P6\n60 40\n255\n"));
        assert_eq!(ppm.len(), 13 + 60 * 40 * 3);
    }

    #[test]
    fn robot_tick_points_along_heading() {
        let s = scene();
        assert_eq!(robot_cells(&s), vec![Cell::new(3, 10), Cell::new(4, 10), Cell::new(5, 10), Cell::new(6, 10)]);
    }

    #[test]
    fn style_ids_are_unique_and_parse() {
        let all = Style::all();
        assert_eq!(all.len(), 12);
        assert_eq!(all[0], Style::CANONICAL);
        let ids: BTreeSet<String> = all.iter().map(Style::id).collect();
        assert_eq!(ids.len(), 12);
        for style in all {
            assert_eq!(style.id().parse::<Style>().unwrap(), style);
        }
    }
}
