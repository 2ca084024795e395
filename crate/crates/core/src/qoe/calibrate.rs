//! Fitting model parameters to (record, MOS) pairs.
//!
//! The fit maximizes the linear correlation between model scores and MOS on
//! a training split, which is the same as least squares after the best
//! affine map. Parameters move one at a time by multiplicative steps that
//! shrink when no coordinate improves.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, ModelId, QoeError, QoeParams};
use crate::simulator::SessionRecord;
use crate::stats::plcc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Parameter names to tune; all scalar parameters when empty.
    pub fields: Vec<String>,
    pub train_fraction: f64,
    pub seed: u64,
    pub max_rounds: usize,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            fields: Vec::new(),
            train_fraction: 0.8,
            seed: 0,
            max_rounds: 200,
            initial_step: 0.5,
            min_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub params: QoeParams,
    pub train_plcc: f64,
    pub validation_plcc: Option<f64>,
    pub rounds: usize,
}

/// Shuffles `0..n` with `seed` and splits it into training and validation
/// indices. The training part always keeps at least three items.
pub fn split_train_validation(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((n as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
    let cut = cut.max(3.min(n)).min(n);
    let valid = idx.split_off(cut);
    (idx, valid)
}

fn correlation(model: ModelId, params: &QoeParams, pairs: &[(SessionRecord, f64)], subset: &[usize]) -> Option<f64> {
    let mut scores = Vec::with_capacity(subset.len());
    let mut mos = Vec::with_capacity(subset.len());
    for &i in subset {
        scores.push(evaluate(model, &pairs[i].0, params).ok()?.value);
        mos.push(pairs[i].1);
    }
    plcc(&scores, &mos).ok().filter(|r| r.is_finite())
}

fn tunable_fields(value: &serde_json::Value) -> Vec<String> {
    value
        .as_object()
        .map(|o| {
            o.iter()
                .filter(|(_, v)| v.as_f64().is_some_and(f64::is_finite))
                .map(|(k, _)| k.clone())
                .collect()
        })
        .unwrap_or_default()
}

/// Coordinate-descent fit of one built-in model.
pub fn calibrate(
    model: ModelId,
    pairs: &[(SessionRecord, f64)],
    start: &QoeParams,
    config: &CalibrationConfig,
) -> Result<CalibrationResult, QoeError> {
    if model.is_external() {
        return Err(QoeError::Params(format!(
            "{model} is external and cannot be calibrated"
        )));
    }
    if pairs.len() < 3 {
        return Err(QoeError::TooFewPairs {
            needed: 3,
            got: pairs.len(),
        });
    }
    start.validate_model(model)?;
    let (train, valid) = split_train_validation(pairs.len(), config.train_fraction, config.seed);

    let base = start.model_json(model);
    let fields = if config.fields.is_empty() {
        tunable_fields(&base)
    } else {
        let known = tunable_fields(&base);
        if let Some(bad) = config.fields.iter().find(|f| !known.contains(f)) {
            return Err(QoeError::Params(format!("{model} has no scalar parameter {bad:?}")));
        }
        config.fields.clone()
    };

    let mut best = start.clone();
    let mut best_r = correlation(model, &best, pairs, &train).unwrap_or(f64::NEG_INFINITY);
    let mut step = config.initial_step;
    let mut rounds = 0;
    while rounds < config.max_rounds && step >= config.min_step {
        rounds += 1;
        let mut improved = false;
        for field in &fields {
            let current = best.model_json(model)[field.as_str()].as_f64().unwrap_or(0.0);
            let candidates = if current == 0.0 {
                [step, -step]
            } else {
                [current * (1.0 + step), current * (1.0 - step)]
            };
            for cand in candidates {
                let mut value = best.model_json(model);
                value[field.as_str()] = serde_json::json!(cand);
                let mut trial = best.clone();
                if trial.set_model_json(model, value).is_err() {
                    continue;
                }
                if let Some(r) = correlation(model, &trial, pairs, &train) {
                    if r > best_r + 1e-12 {
                        best = trial;
                        best_r = r;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    let validation_plcc = if valid.len() >= 3 {
        correlation(model, &best, pairs, &valid)
    } else {
        None
    };
    Ok(CalibrationResult {
        params: best,
        train_plcc: best_r,
        validation_plcc,
        rounds,
    })
}
