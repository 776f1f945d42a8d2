//! The seven reference models and the named extra preset.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{validate_config, SelectionMode, SimConfig, TypeParams};

/// Movers evaluating an existing city, as a probability (19 %).
pub const PRESET_LAMBDA2: f64 = 0.19;
/// Movers evaluating a vacant cell, as a probability (0.3 %).
pub const PRESET_LAMBDA3: f64 = 0.003;
/// Spin-off type-switch probability used by every preset.
pub const PRESET_PHI: f64 = 0.1;

pub const TEXT_LAMBDA_NAME: &str = "text-lambda";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPreset {
    pub model_id: u32,
    pub name: String,
    pub config: SimConfig,
}

fn label(model_id: u32) -> &'static str {
    match model_id {
        1 => "no spatial preference",
        2 => "only MP",
        3 => "MP + AP",
        4 => "MP + AP + CP",
        5 => "larger MP",
        6 => "larger AP",
        _ => "larger MP + AP",
    }
}

pub fn preset(model_id: u32) -> Result<ModelPreset, HarnessError> {
    if !(1..=7).contains(&model_id) {
        return Err(HarnessError::UnknownModelId(model_id.to_string()));
    }
    let (beta_mp, beta_ap, beta_cp) = match model_id {
        1 => (0.0, 0.0, 0.0),
        2 => (1.0, 0.0, 0.0),
        3 => (1.0, 0.5, 0.0),
        _ => (1.0, 0.5, -1.0),
    };
    let (new_mp, new_ap) = match model_id {
        5 => (0.2, 0.4),
        6 => (0.4, 0.2),
        7 => (0.2, 0.2),
        _ => (0.4, 0.4),
    };
    let params_old =
        TypeParams { alpha_mp: 0.5, alpha_ap: 0.5, alpha_cp: 0.5, beta_mp, beta_ap, beta_cp, delta_max: 50 };
    let params_new = TypeParams { alpha_mp: new_mp, alpha_ap: new_ap, alpha_cp: 0.4, delta_max: 10, ..params_old };
    let selection_mode = if model_id == 1 { SelectionMode::LogitSample } else { SelectionMode::ArgmaxImprove };

    let config = SimConfig { params_old, params_new, phi: PRESET_PHI, selection_mode, ..SimConfig::default() }
        .with_relocation(PRESET_LAMBDA2, PRESET_LAMBDA3);
    Ok(ModelPreset { model_id, name: format!("model-{model_id}: {}", label(model_id)), config })
}

/// Model 4 with the relocation probabilities (0.9, 0.09, 0.01).
pub fn text_lambda_preset() -> ModelPreset {
    let base = preset(4).expect("model 4 exists");
    ModelPreset {
        model_id: 4,
        name: TEXT_LAMBDA_NAME.to_string(),
        config: SimConfig { lambda1: 0.9, lambda2: 0.09, lambda3: 0.01, ..base.config },
    }
}

pub fn all_presets() -> Vec<ModelPreset> {
    (1..=7).map(|k| preset(k).expect("ids 1..=7 exist")).collect()
}

/// Resolves a model argument: a number 1-7 or `text-lambda`.
pub fn preset_by_name(name: &str) -> Result<ModelPreset, HarnessError> {
    let name = name.trim();
    if name == TEXT_LAMBDA_NAME {
        return Ok(text_lambda_preset());
    }
    name.parse::<u32>().map_err(|_| HarnessError::UnknownModelId(name.to_string())).and_then(preset)
}

/// Every preset passes config validation.
pub fn validate_presets() -> Result<(), HarnessError> {
    for p in all_presets().into_iter().chain([text_lambda_preset()]) {
        validate_config(p.config)?;
    }
    Ok(())
}
