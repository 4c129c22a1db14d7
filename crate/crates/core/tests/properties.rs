use std::f64::consts::PI;

use navex_core::attribution::{attribute_with, Attribution, AttributionConfig, AttributionMode};
use navex_core::text::{generate, relation_to_point, toggling_reduces, ExplanationKind, TextError, TextStyle};
use navex_core::world::{Affordance, Cell, Feature, GridMap, RobotPose, Scenario, SemanticObject};
use proptest::prelude::*;

fn rect(x0: usize, y0: usize, x1: usize, y1: usize) -> Vec<Cell> {
    (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| Cell::new(x, y))).collect()
}

fn scene(door_open: bool, crate_absent: bool) -> Scenario {
    let map = GridMap::new(40, 30, 0.1).unwrap();
    let objects = vec![
        SemanticObject::movable("door", "door", rect(20, 20, 22, 22))
            .with_openable(rect(20, 17, 22, 22))
            .with_state(Affordance::Openability, !door_open),
        SemanticObject::movable("crate", "crate", rect(20, 4, 23, 7)).with_state(Affordance::Movability, !crate_absent),
    ];
    Scenario::new("p", map, objects, RobotPose::new(0.35, 1.25, 0.0), Cell::new(3, 12), Cell::new(36, 12), 0.25)
        .unwrap()
}

fn features() -> Vec<Feature> {
    vec![
        Feature::new("crate", Affordance::Movability),
        Feature::new("door", Affordance::Movability),
        Feature::new("door", Affordance::Openability),
    ]
}

proptest! {
    #[test]
    fn counterfactual_direction_follows_sign(
        weights in prop::collection::vec(-1.0f64..1.0, 3),
        door_open in any::<bool>(),
        crate_absent in any::<bool>(),
        style_index in 0usize..4,
    ) {
        let s = scene(door_open, crate_absent);
        let attr = Attribution {
            base_deviation: 0.3,
            intercept: 0.0,
            weights: features().into_iter().zip(weights.iter().copied()).collect(),
            r_squared: 1.0,
            mode: AttributionMode::Exhaustive,
            samples: 8,
        };
        let style = TextStyle::ALL[style_index];
        let max = attr.max_abs_weight();
        for (feature, w) in &attr.weights {
            let result = generate(&attr, feature, ExplanationKind::Counterfactual, style, &s);
            if w.abs() < 0.05 * max {
                prop_assert_eq!(result, Err(TextError::NullEffect(feature.clone())));
                continue;
            }
            let text = result.unwrap().text;
            let active = match feature.affordance {
                Affordance::Movability => s.object(&feature.object_id).unwrap().present_by_default(),
                Affordance::Openability => !s.object(&feature.object_id).unwrap().closed_by_default(),
            };
            let word = if toggling_reduces(*w, active) { "deviate less" } else { "deviate more" };
            prop_assert!(text.contains(word), "{}", text);
            let toggle = match (feature.affordance, active) {
                (Affordance::Movability, true) => "was not there",
                (Affordance::Movability, false) => "was there",
                (Affordance::Openability, true) => "was closed",
                (Affordance::Openability, false) => "was open",
            };
            prop_assert!(text.contains(toggle), "{}", text);
        }
    }

    #[test]
    fn every_kind_and_style_is_total(weights in prop::collection::vec(-1.0f64..1.0, 3)) {
        let s = scene(false, false);
        let attr = Attribution {
            base_deviation: 0.3,
            intercept: 0.0,
            weights: features().into_iter().zip(weights).collect(),
            r_squared: 1.0,
            mode: AttributionMode::Exhaustive,
            samples: 8,
        };
        for feature in features() {
            for kind in ExplanationKind::ALL {
                for style in TextStyle::ALL {
                    match generate(&attr, &feature, kind, style, &s) {
                        Ok(t) => {
                            prop_assert!(t.text.ends_with('.') || t.text.ends_with('?'));
                            prop_assert!(!t.text.contains('{'), "{}", t.text);
                        }
                        Err(TextError::NullEffect(_) | TextError::UnsupportedKind { .. }) => {}
                        Err(e) => prop_assert!(false, "{}", e),
                    }
                }
            }
        }
    }

    #[test]
    fn relation_survives_rigid_rotation(
        x in -5.0f64..5.0, y in -5.0f64..5.0, heading in -PI..PI,
        px in -5.0f64..5.0, py in -5.0f64..5.0, turn in -PI..PI,
    ) {
        let bearing = ((py - y).atan2(px - x) - heading).to_degrees().rem_euclid(360.0);
        let to_boundary = ((bearing - 22.5).rem_euclid(45.0)).min(45.0 - (bearing - 22.5).rem_euclid(45.0));
        prop_assume!(to_boundary > 1e-6 && (px - x).hypot(py - y) > 1e-3);
        let rot = |a: f64, b: f64| (a * turn.cos() - b * turn.sin(), a * turn.sin() + b * turn.cos());
        let (rx, ry) = rot(x, y);
        let (rpx, rpy) = rot(px, py);
        prop_assert_eq!(
            relation_to_point(&RobotPose::new(x, y, heading), px, py),
            relation_to_point(&RobotPose::new(rx, ry, heading + turn), rpx, rpy)
        );
    }

    #[test]
    fn weights_scale_with_the_deviation(
        effects in prop::collection::vec(-0.5f64..0.5, 4),
        scale in 0.1f64..10.0,
        sigma in prop_oneof![Just(f64::INFINITY), 0.3f64..2.0],
    ) {
        let features: Vec<Feature> = (0..4).map(|i| Feature::new(format!("o{i}"), Affordance::Movability)).collect();
        let active = vec![true; 4];
        let config = AttributionConfig { kernel_width: sigma, ridge_lambda: 0.0, ..AttributionConfig::default() };
        let run = |c: f64| {
            attribute_with(&features, &active, &config, |fv| {
                let y: f64 = fv.bits().iter().zip(&effects).map(|(b, e)| if *b { *e } else { 0.0 }).sum();
                Ok(Some(c * (1.0 + y)))
            }, 3.0).unwrap()
        };
        let (a, b) = (run(1.0), run(scale));
        for ((_, wa), (_, wb)) in a.weights.iter().zip(&b.weights) {
            prop_assert!((wa * scale - wb).abs() < 1e-9);
        }
        // An additive response is recovered exactly under any kernel.
        for ((_, w), e) in a.weights.iter().zip(&effects) {
            prop_assert!((w - e).abs() < 1e-9);
        }
        prop_assert!(b.r_squared > 1.0 - 1e-9 || effects.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn sampled_mode_is_reproducible(seed in any::<u64>()) {
        let features: Vec<Feature> = (0..12).map(|i| Feature::new(format!("o{i:02}"), Affordance::Movability)).collect();
        let active = vec![true; 12];
        let config = AttributionConfig { rng_seed: seed, sample_count: 200, ..AttributionConfig::default() };
        let eval = |fv: &navex_core::world::FeatureVector| {
            Ok(Some(fv.bits().iter().enumerate().map(|(i, b)| if *b { i as f64 * 0.01 } else { 0.0 }).sum()))
        };
        let a = attribute_with(&features, &active, &config, eval, 3.0).unwrap();
        let b = attribute_with(&features, &active, &config, eval, 3.0).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.mode, AttributionMode::Sampled { seed });
        prop_assert_eq!(a.samples, 200);
    }
}
