//! Perturbation-based attribution of the local deviation to
//! object-affordance pairs, and minimal remedies for planning failures.
//!
//! Every feature vector selects one perturbed world. The deviation of the
//! local plan in each world is regressed on the feature bits with a
//! kernel-weighted ridge regression; the kernel favours worlds close to the
//! default one. A weight is reported as the effect of the affordance's
//! *active* state: an object being present (movability) or being open
//! (openability). A positive weight means that state increases the deviation.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::planning::{plan_local, LocalPlannerConfig, PathPlan};
use crate::world::{default_vector, Affordance, Feature, FeatureVector, Scenario, WorldError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttributionError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("the robot is stuck in the default world; explain the failure instead")]
    StuckOnDefault,
    #[error("design matrix has rank {rank}, needs {needed}; raise sample_count")]
    DegenerateDesign { rank: usize, needed: usize },
    #[error("invalid attribution config: {0}")]
    InvalidConfig(String),
    #[error("the robot is not stuck in the default world")]
    NotStuck,
    #[error("no set of at most {max_cardinality} feature toggles restores a path")]
    NoRemedy { max_cardinality: usize },
    #[error("malformed attribution record, line {line}: {message}")]
    Record { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttributionConfig {
    /// Perturbed worlds evaluated in sampled mode; capped at `2^k`.
    pub sample_count: usize,
    /// Kernel width over the normalized Hamming distance to the default
    /// vector. `f64::INFINITY` gives a uniform kernel.
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub rng_seed: u64,
    /// Up to this many features every vector is enumerated.
    pub exhaustive_threshold: usize,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            sample_count: 512,
            kernel_width: 0.75,
            ridge_lambda: 1e-3,
            rng_seed: 0,
            exhaustive_threshold: 10,
        }
    }
}

impl AttributionConfig {
    pub fn validate(&self) -> Result<(), AttributionError> {
        if !(self.kernel_width > 0.0) {
            return Err(AttributionError::InvalidConfig(format!(
                "kernel_width must be positive, got {}",
                self.kernel_width
            )));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return Err(AttributionError::InvalidConfig(format!(
                "ridge_lambda must be non-negative, got {}",
                self.ridge_lambda
            )));
        }
        if self.sample_count == 0 {
            return Err(AttributionError::InvalidConfig("sample_count must be positive".into()));
        }
        Ok(())
    }

    pub fn kernel(&self, toggled: usize, k: usize) -> f64 {
        if k == 0 || self.kernel_width.is_infinite() {
            return 1.0;
        }
        let d = toggled as f64 / k as f64;
        (-(d * d) / (self.kernel_width * self.kernel_width)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributionMode {
    Exhaustive,
    Sampled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// Deviation of the default world, meters.
    pub base_deviation: f64,
    /// Surrogate prediction with every bit at zero, meters.
    pub intercept: f64,
    /// One signed weight (meters) per feature, canonical order.
    pub weights: Vec<(Feature, f64)>,
    /// Kernel-weighted coefficient of determination.
    pub r_squared: f64,
    pub mode: AttributionMode,
    /// Number of perturbed worlds the fit used.
    pub samples: usize,
}

impl Attribution {
    pub fn weight(&self, feature: &Feature) -> Option<f64> {
        self.weights.iter().find(|(f, _)| f == feature).map(|(_, w)| *w)
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w.abs()).fold(0.0, f64::max)
    }

    /// Plain-text record: header `key = value` lines, then one
    /// `rank<TAB>feature<TAB>weight_m<TAB>sign` row per feature in rank order.
    pub fn to_record(&self, header: &[(&str, String)]) -> String {
        let mut out = String::from("# navex attribution v1\n");
        for (key, value) in header {
            let _ = writeln!(out, "{key} = {value}");
        }
        let mode = match self.mode {
            AttributionMode::Exhaustive => "exhaustive".to_string(),
            AttributionMode::Sampled { seed } => format!("sampled {seed}"),
        };
        let _ = writeln!(out, "mode = {mode}");
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "base_deviation_m = {}", self.base_deviation);
        let _ = writeln!(out, "intercept_m = {}", self.intercept);
        let _ = writeln!(out, "r_squared = {}", self.r_squared);
        out.push_str("# rank\tfeature\tweight_m\tsign\n");
        for (rank, (feature, weight)) in rank_features(self).iter().enumerate() {
            let sign = if *weight > 0.0 {
                '+'
            } else if *weight < 0.0 {
                '-'
            } else {
                '0'
            };
            let _ = writeln!(out, "{}\t{feature}\t{weight}\t{sign}", rank + 1);
        }
        out
    }

    /// Parses a record written by [`Attribution::to_record`]; unknown header
    /// keys are ignored.
    pub fn from_record(text: &str) -> Result<Self, AttributionError> {
        let bad = |line: usize, message: String| AttributionError::Record { line, message };
        let mut base = None;
        let mut intercept = None;
        let mut r2 = None;
        let mut mode = None;
        let mut samples = None;
        let mut weights = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once(" = ") {
                let num = |v: &str| v.parse::<f64>().map_err(|e| bad(n, format!("{key}: {e}")));
                match key {
                    "base_deviation_m" => base = Some(num(value)?),
                    "intercept_m" => intercept = Some(num(value)?),
                    "r_squared" => r2 = Some(num(value)?),
                    "samples" => samples = Some(value.parse().map_err(|e| bad(n, format!("samples: {e}")))?),
                    "mode" => {
                        mode = Some(match value.split_once(' ') {
                            None if value == "exhaustive" => AttributionMode::Exhaustive,
                            Some(("sampled", seed)) => AttributionMode::Sampled {
                                seed: seed.parse().map_err(|e| bad(n, format!("seed: {e}")))?,
                            },
                            _ => return Err(bad(n, format!("unknown mode `{value}`"))),
                        })
                    }
                    _ => {}
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(bad(n, "expected rank, feature, weight, sign".into()));
            }
            let feature: Feature = cols[1].parse().map_err(|e| bad(n, e))?;
            let weight: f64 = cols[2].parse().map_err(|e| bad(n, format!("weight: {e}")))?;
            weights.push((feature, weight));
        }
        weights.sort_by(|a, b| a.0.cmp(&b.0));
        let missing = |what: &str| bad(text.lines().count(), format!("missing `{what}`"));
        Ok(Self {
            base_deviation: base.ok_or_else(|| missing("base_deviation_m"))?,
            intercept: intercept.ok_or_else(|| missing("intercept_m"))?,
            weights,
            r_squared: r2.ok_or_else(|| missing("r_squared"))?,
            mode: mode.ok_or_else(|| missing("mode"))?,
            samples: samples.ok_or_else(|| missing("samples"))?,
        })
    }
}

/// Whether the recorded state of `feature`'s object is its active state
/// (present for movability, open for openability).
pub fn active_by_default(scenario: &Scenario, feature: &Feature) -> Result<bool, WorldError> {
    let object = scenario.resolve(feature)?;
    Ok(match feature.affordance {
        Affordance::Movability => object.present_by_default(),
        Affordance::Openability => !object.closed_by_default(),
    })
}

/// Attributes the local deviation of `scenario` to its features. Worlds in
/// which the robot gets stuck count as a deviation of one window length.
pub fn attribute(
    scenario: &Scenario,
    initial: &PathPlan,
    planner: &LocalPlannerConfig,
    config: &AttributionConfig,
) -> Result<Attribution, AttributionError> {
    let features = scenario.features();
    let active = features
        .iter()
        .map(|f| active_by_default(scenario, f))
        .collect::<Result<Vec<_>, _>>()?;
    attribute_with(&features, &active, config, |fv| {
        let result = plan_local(scenario, fv, initial, planner)?;
        Ok(result.deviation())
    }, planner.window)
}

/// Attribution over an arbitrary deviation oracle. `evaluate` returns `None`
/// for a stuck world, which is scored as `stuck_deviation`.
pub fn attribute_with<F>(
    features: &[Feature],
    active_by_default: &[bool],
    config: &AttributionConfig,
    evaluate: F,
    stuck_deviation: f64,
) -> Result<Attribution, AttributionError>
where
    F: Fn(&FeatureVector) -> Result<Option<f64>, WorldError> + Sync,
{
    config.validate()?;
    assert_eq!(features.len(), active_by_default.len());
    let k = features.len();
    let default = FeatureVector::from_bits(features, &vec![true; k]);
    let base_deviation = evaluate(&default)?.ok_or(AttributionError::StuckOnDefault)?;

    let (mode, vectors) = if k <= config.exhaustive_threshold {
        (AttributionMode::Exhaustive, enumerate_all(k))
    } else {
        let count = if k >= usize::BITS as usize - 1 {
            config.sample_count
        } else {
            config.sample_count.min(1usize << k)
        };
        if count < k + 2 {
            return Err(AttributionError::InvalidConfig(format!(
                "sampling {k} features needs at least {} samples, got {count}",
                k + 2
            )));
        }
        (AttributionMode::Sampled { seed: config.rng_seed }, sample_vectors(k, count, config.rng_seed))
    };

    let deviations = vectors
        .par_iter()
        .map(|bits| {
            let fv = FeatureVector::from_bits(features, bits);
            Ok(evaluate(&fv)?.unwrap_or(stuck_deviation))
        })
        .collect::<Result<Vec<f64>, WorldError>>()?;
    let kernel: Vec<f64> = vectors
        .iter()
        .map(|bits| config.kernel(bits.iter().filter(|b| !**b).count(), k))
        .collect();

    let check_rank = matches!(mode, AttributionMode::Sampled { .. }) || config.ridge_lambda == 0.0;
    let fit = fit_weighted_ridge(&vectors, &deviations, &kernel, config.ridge_lambda, check_rank)?;
    let weights = features
        .iter()
        .zip(active_by_default)
        .zip(&fit.coefficients)
        .map(|((f, active), coef)| {
            let w = if *active { *coef } else { -coef };
            // normalize -0.0 so records stay sign-stable
            (f.clone(), if w == 0.0 { 0.0 } else { w })
        })
        .collect();
    Ok(Attribution {
        base_deviation,
        intercept: fit.intercept,
        weights,
        r_squared: fit.r_squared,
        mode,
        samples: vectors.len(),
    })
}

fn enumerate_all(k: usize) -> Vec<Vec<bool>> {
    // mask 0 is all-default; bit i set means feature i toggled
    (0..1usize << k)
        .map(|mask| (0..k).map(|i| mask & (1 << i) == 0).collect())
        .collect()
}

fn sample_vectors(k: usize, count: usize, seed: u64) -> Vec<Vec<bool>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    for fixed in [vec![true; k], vec![false; k]] {
        if seen.insert(fixed.clone()) {
            out.push(fixed);
        }
    }
    while out.len() < count {
        let v: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
        if seen.insert(v.clone()) {
            out.push(v);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

/// Weighted ridge regression of `y` on binary `design` rows with an
/// unpenalized intercept, solved through the normal equations.
pub fn fit_weighted_ridge(
    design: &[Vec<bool>],
    y: &[f64],
    weights: &[f64],
    lambda: f64,
    check_rank: bool,
) -> Result<RidgeFit, AttributionError> {
    let n = design.len();
    assert!(n > 0 && y.len() == n && weights.len() == n);
    let k = design[0].len();
    let p = k + 1;
    let x = DMatrix::from_fn(n, p, |r, c| {
        if c == 0 || design[r][c - 1] {
            1.0
        } else {
            0.0
        }
    });
    let w = DVector::from_column_slice(weights);
    let yv = DVector::from_column_slice(y);

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for r in 0..n {
        for a in 0..p {
            let xa = x[(r, a)] * w[r];
            if xa == 0.0 {
                continue;
            }
            rhs[a] += xa * yv[r];
            for b in 0..p {
                gram[(a, b)] += xa * x[(r, b)];
            }
        }
    }
    if check_rank {
        let rank = gram.clone().svd(false, false).rank(1e-10 * gram.amax().max(f64::MIN_POSITIVE));
        if rank < p {
            return Err(AttributionError::DegenerateDesign { rank, needed: p });
        }
    }
    for j in 1..p {
        gram[(j, j)] += lambda;
    }
    let beta = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram
            .lu()
            .solve(&rhs)
            .ok_or(AttributionError::DegenerateDesign { rank: 0, needed: p })?,
    };

    let fitted = &x * &beta;
    let wsum = w.sum();
    let mean = w.dot(&yv) / wsum;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for r in 0..n {
        ss_res += w[r] * (yv[r] - fitted[r]).powi(2);
        ss_tot += w[r] * (yv[r] - mean).powi(2);
    }
    let scale = yv.amax().max(1.0);
    let r_squared = if ss_tot <= 1e-24 * scale * scale {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RidgeFit { intercept: beta[0], coefficients: beta.iter().skip(1).copied().collect(), r_squared })
}

/// Features sorted by |weight| descending; ties keep canonical order.
pub fn rank_features(attr: &Attribution) -> Vec<(Feature, f64)> {
    let mut ranked = attr.weights.clone();
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    ranked
}

/// Smallest sets of feature toggles that let the robot re-join its plan.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureExplanation {
    pub minimal_sets: Vec<Vec<Feature>>,
    pub cardinality: usize,
}

/// Searches toggle sets in increasing size and returns all feasible sets of
/// the first size that has any.
pub fn explain_failure(
    scenario: &Scenario,
    initial: &PathPlan,
    planner: &LocalPlannerConfig,
    max_cardinality: usize,
) -> Result<FailureExplanation, AttributionError> {
    let default = default_vector(scenario);
    let feasible = |toggles: &[Feature]| -> Result<bool, WorldError> {
        Ok(!plan_local(scenario, &default.toggled(toggles), initial, planner)?.is_stuck())
    };
    if feasible(&[])? {
        return Err(AttributionError::NotStuck);
    }
    let features = scenario.features();
    for size in 1..=max_cardinality.min(features.len()) {
        let candidates: Vec<Vec<Feature>> = combinations(features.len(), size)
            .into_iter()
            .map(|idx| idx.into_iter().map(|i| features[i].clone()).collect())
            .collect();
        let hits = candidates
            .into_par_iter()
            .map(|set| Ok(feasible(&set)?.then_some(set)))
            .collect::<Result<Vec<_>, WorldError>>()?;
        let minimal_sets: Vec<Vec<Feature>> = hits.into_iter().flatten().collect();
        if !minimal_sets.is_empty() {
            return Ok(FailureExplanation { minimal_sets, cardinality: size });
        }
    }
    Err(AttributionError::NoRemedy { max_cardinality })
}

/// All `size`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..size).collect();
    if size > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..size).rev().find(|&i| idx[i] != i + n - size) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
