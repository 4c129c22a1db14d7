use std::collections::BTreeSet;
use std::path::PathBuf;

use navex_core::attribution::{attribute, AttributionConfig};
use navex_core::planning::{plan_initial, plan_local, LocalPlannerConfig};
use navex_core::text::TextError;
use navex_core::variants::{build_battery, BatteryManifest, VariantError};
use navex_core::visual::{ColorScheme, Shape, Texture, HATCH_INK};
use navex_core::world::{default_vector, load_scenario, Affordance, Feature, Scenario};

fn fig1() -> Scenario {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", "fig1.scn"].iter().collect();
    load_scenario(&path).unwrap()
}

#[test]
fn chair_battery_covers_every_style() {
    let s = fig1();
    let initial = plan_initial(&s).unwrap();
    let planner = LocalPlannerConfig::default();
    let attr = attribute(&s, &initial, &planner, &AttributionConfig::default()).unwrap();
    let local = plan_local(&s, &default_vector(&s), &initial, &planner).unwrap();
    let chair = Feature::new("chair", Affordance::Movability);
    let scale = 2;
    let a = build_battery(&s, &attr, &chair, &initial, local.path(), scale).unwrap();
    let b = build_battery(&s, &attr, &chair, &initial, local.path(), scale).unwrap();
    assert_eq!(a.visual.len(), 12);
    assert_eq!(a.textual.len(), 4);
    assert_eq!(a.battery_id, b.battery_id);
    let ids: BTreeSet<&str> = a.visual.iter().map(|v| v.variant_id.as_str()).chain(a.textual.iter().map(|t| t.variant_id.as_str())).collect();
    assert_eq!(ids.len(), 16);
    assert_eq!(a.textual[0].text, "If the chair right-front of me was not there, I would deviate less from the initial plan.");

    let chair_cells = s.object("chair").unwrap().cells_for(true, true).unwrap();
    let h = s.map.height();
    let in_chair = |px: usize, py: usize| chair_cells.iter().any(|c| c.x == px / scale && h - 1 - c.y == py / scale);

    // Outside the selected object, variants of one shape are identical.
    for shape in [Shape::FilledFootprint, Shape::Outline] {
        let of_shape: Vec<_> = a.visual.iter().filter(|v| v.style.shape == shape).collect();
        let first = &of_shape[0].map.image;
        for v in &of_shape[1..] {
            let img = &v.map.image;
            for py in 0..img.height() {
                for px in 0..img.width() {
                    if !in_chair(px, py) {
                        assert_eq!(img.get(px, py), first.get(px, py), "{} at {px},{py}", v.variant_id);
                    }
                }
            }
        }
    }

    // Grayscale solid carries the up-hatch of an increase in black ink.
    let gray = a
        .visual
        .iter()
        .find(|v| v.style.scheme == ColorScheme::Grayscale && v.style.shape == Shape::FilledFootprint && v.style.texture == Texture::Solid)
        .unwrap();
    let img = &gray.map.image;
    let robot_or_path: BTreeSet<_> = initial.cells.iter().chain(local.path().unwrap().cells.iter()).copied().collect();
    for c in chair_cells.iter().filter(|c| !robot_or_path.contains(c)) {
        for py in (h - 1 - c.y) * scale..(h - c.y) * scale {
            for px in c.x * scale..(c.x + 1) * scale {
                let expected_ink = (px + py) % 4 == 0;
                assert_eq!(img.get(px, py) == HATCH_INK, expected_ink, "{px},{py}");
            }
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let manifest_path = a.write(dir.path(), 0).unwrap();
    let manifest = BatteryManifest::load(&manifest_path).unwrap();
    assert_eq!(manifest, a.manifest(0));
    for entry in manifest.visual() {
        let navex_core::variants::ManifestEntry::Visual { file, .. } = entry else { unreachable!() };
        let bytes = std::fs::read(dir.path().join(file)).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}

#[test]
fn null_feature_has_no_battery() {
    let s = fig1();
    let initial = plan_initial(&s).unwrap();
    let attr = attribute(&s, &initial, &LocalPlannerConfig::default(), &AttributionConfig::default()).unwrap();
    let table = Feature::new("table", Affordance::Movability);
    match build_battery(&s, &attr, &table, &initial, None, 1) {
        Err(VariantError::Text(TextError::NullEffect(f))) => assert_eq!(f, table),
        other => panic!("{other:?}"),
    }
}
