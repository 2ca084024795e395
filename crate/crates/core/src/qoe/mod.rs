//! Objective QoE models: a [`SessionRecord`] in, a scalar score out.
//!
//! Nine closed-form models are built in; learned models such as VideoATLAS
//! or P.1203 plug in as external commands that print one number per record.

mod calibrate;
mod models;
mod surface;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::SessionRecord;

pub use calibrate::{calibrate, split_train_validation, CalibrationConfig, CalibrationResult};
pub use models::{
    BentalebParams, FtwParams, KsqiParams, LiuParams, MokParams, SpiteriParams, SqiParams, XueParams, YinParams,
};
pub use surface::PenaltySurface;

#[derive(Debug, Error)]
pub enum QoeError {
    #[error("record has no segments")]
    EmptyRecord,
    #[error("invalid record: {0}")]
    Record(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("model {model} produced a non-finite score")]
    NonFinite { model: ModelId },
    #[error("external model {model} failed: {message}")]
    External { model: ModelId, message: String },
    #[error("calibration needs at least {needed} pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    Yin2015,
    Bentaleb2016,
    Ftw,
    Mok2011,
    Liu2012,
    Xue2014,
    Spiteri2016,
    Sqi,
    Ksqi,
    VideoAtlas,
    P1203,
}

impl ModelId {
    /// The closed-form models.
    pub const BUILTIN: [ModelId; 9] = [
        ModelId::Yin2015,
        ModelId::Bentaleb2016,
        ModelId::Ftw,
        ModelId::Mok2011,
        ModelId::Liu2012,
        ModelId::Xue2014,
        ModelId::Spiteri2016,
        ModelId::Sqi,
        ModelId::Ksqi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Yin2015 => "yin2015",
            ModelId::Bentaleb2016 => "bentaleb2016",
            ModelId::Ftw => "ftw",
            ModelId::Mok2011 => "mok2011",
            ModelId::Liu2012 => "liu2012",
            ModelId::Xue2014 => "xue2014",
            ModelId::Spiteri2016 => "spiteri2016",
            ModelId::Sqi => "sqi",
            ModelId::Ksqi => "ksqi",
            ModelId::VideoAtlas => "videoatlas",
            ModelId::P1203 => "p1203",
        }
    }

    pub fn is_external(self) -> bool {
        matches!(self, ModelId::VideoAtlas | ModelId::P1203)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = QoeError;

    fn from_str(s: &str) -> Result<Self, QoeError> {
        let lower = s.to_ascii_lowercase();
        ModelId::BUILTIN
            .iter()
            .chain(&[ModelId::VideoAtlas, ModelId::P1203])
            .copied()
            .find(|m| m.as_str() == lower)
            .or(match lower.as_str() {
                "video_atlas" => Some(ModelId::VideoAtlas),
                "p.1203" => Some(ModelId::P1203),
                _ => None,
            })
            .ok_or_else(|| QoeError::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeScore {
    pub model_id: ModelId,
    pub value: f64,
}

/// A model scored by another program: the record is written to its stdin
/// as JSON and it prints one number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalModel {
    pub command: Vec<String>,
}

/// Parameters for every model, keyed by model id in config documents.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct QoeParams {
    pub yin2015: YinParams,
    pub bentaleb2016: BentalebParams,
    pub ftw: FtwParams,
    pub mok2011: MokParams,
    pub liu2012: LiuParams,
    pub xue2014: XueParams,
    pub spiteri2016: SpiteriParams,
    pub sqi: SqiParams,
    pub ksqi: KsqiParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub videoatlas: Option<ExternalModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1203: Option<ExternalModel>,
}

impl QoeParams {
    pub fn from_toml(text: &str) -> Result<Self, QoeError> {
        let p: Self = toml::from_str(text).map_err(|e| QoeError::Params(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self, QoeError> {
        let p: Self = serde_json::from_str(text).map_err(|e| QoeError::Params(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), QoeError> {
        for m in ModelId::BUILTIN {
            self.validate_model(m)?;
        }
        Ok(())
    }

    pub fn validate_model(&self, model: ModelId) -> Result<(), QoeError> {
        match model {
            ModelId::Yin2015 => self.yin2015.validate(),
            ModelId::Bentaleb2016 => self.bentaleb2016.validate(),
            ModelId::Ftw => self.ftw.validate(),
            ModelId::Mok2011 => self.mok2011.validate(),
            ModelId::Liu2012 => self.liu2012.validate(),
            ModelId::Xue2014 => self.xue2014.validate(),
            ModelId::Spiteri2016 => self.spiteri2016.validate(),
            ModelId::Sqi => self.sqi.validate(),
            ModelId::Ksqi => self.ksqi.validate(),
            ModelId::VideoAtlas | ModelId::P1203 => match self.external(model) {
                Some(e) if !e.command.is_empty() => Ok(()),
                _ => Err(QoeError::Params(format!("{model} needs a command"))),
            },
        }
    }

    pub fn external(&self, model: ModelId) -> Option<&ExternalModel> {
        match model {
            ModelId::VideoAtlas => self.videoatlas.as_ref(),
            ModelId::P1203 => self.p1203.as_ref(),
            _ => None,
        }
    }

    /// One model's parameters as a JSON object.
    pub fn model_json(&self, model: ModelId) -> serde_json::Value {
        let all = serde_json::to_value(self).expect("params serialize");
        all.get(model.as_str()).cloned().unwrap_or(serde_json::Value::Null)
    }

    /// Replaces one model's parameters from a JSON object.
    pub fn set_model_json(&mut self, model: ModelId, value: serde_json::Value) -> Result<(), QoeError> {
        let mut all = serde_json::to_value(&*self).expect("params serialize");
        all[model.as_str()] = value;
        let next: QoeParams = serde_json::from_value(all).map_err(|e| QoeError::Params(e.to_string()))?;
        next.validate_model(model)?;
        *self = next;
        Ok(())
    }
}

fn check_record(record: &SessionRecord) -> Result<(), QoeError> {
    if record.qualities.is_empty() {
        return Err(QoeError::EmptyRecord);
    }
    record.validate().map_err(|e| QoeError::Record(e.to_string()))
}

/// Scores one record with one model.
pub fn evaluate(model: ModelId, record: &SessionRecord, params: &QoeParams) -> Result<QoeScore, QoeError> {
    check_record(record)?;
    params.validate_model(model)?;
    let value = match model {
        ModelId::Yin2015 => params.yin2015.score(record),
        ModelId::Bentaleb2016 => params.bentaleb2016.score(record),
        ModelId::Ftw => params.ftw.score(record),
        ModelId::Mok2011 => params.mok2011.score(record),
        ModelId::Liu2012 => params.liu2012.score(record),
        ModelId::Xue2014 => params.xue2014.score(record),
        ModelId::Spiteri2016 => params.spiteri2016.score(record),
        ModelId::Sqi => params.sqi.score(record),
        ModelId::Ksqi => params.ksqi.score(record),
        ModelId::VideoAtlas | ModelId::P1203 => {
            let ext = params.external(model).expect("validated above");
            score_external(model, ext, record)?
        }
    };
    if !value.is_finite() {
        return Err(QoeError::NonFinite { model });
    }
    Ok(QoeScore { model_id: model, value })
}

fn score_external(model: ModelId, ext: &ExternalModel, record: &SessionRecord) -> Result<f64, QoeError> {
    let input = serde_json::to_string(record).expect("record serializes");
    let out =
        crate::process::run_once(&ext.command, &input).map_err(|message| QoeError::External { model, message })?;
    out.parse::<f64>().map_err(|_| QoeError::External {
        model,
        message: format!("expected one number, got {out:?}"),
    })
}

/// One row of a batch run.
#[derive(Debug)]
pub struct BatchScore {
    pub video_id: String,
    pub model_id: ModelId,
    pub score: Result<f64, QoeError>,
}

/// Scores every record with every model in parallel. Failures stay local to
/// their cell.
pub fn score_batch(records: &[(String, SessionRecord)], models: &[ModelId], params: &QoeParams) -> Vec<BatchScore> {
    let cells: Vec<(usize, ModelId)> = (0..records.len())
        .flat_map(|i| models.iter().map(move |&m| (i, m)))
        .collect();
    cells
        .into_par_iter()
        .map(|(i, m)| BatchScore {
            video_id: records[i].0.clone(),
            model_id: m,
            score: evaluate(m, &records[i].1, params).map(|s| s.value),
        })
        .collect()
}

/// All built-in scores for one record, keyed by model.
pub fn evaluate_all(record: &SessionRecord, params: &QoeParams) -> Result<BTreeMap<ModelId, f64>, QoeError> {
    ModelId::BUILTIN
        .iter()
        .map(|&m| evaluate(m, record, params).map(|s| (m, s.value)))
        .collect()
}
