//! The learned components of the tuner: the spurious-index filter, the
//! per-template cost models, and the query-performance-regression predictor,
//! all built on the shared regression learner.

pub mod cost_model;
pub mod filter;
pub mod learner;
pub mod qpr;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::fnv64_str;

pub use cost_model::{cost_or_predict, train_template_cost_model, CostModelSet, TemplateCostModel};
pub use filter::{featurize_filter_pair, filter_candidates, train_filter, FilterModel};
pub use learner::{fit, FittedModel, LearnerKind, LearnerParams};
pub use qpr::{qpr_predict, train_qpr, QprModel, QprPrediction};

/// Q-error of a prediction: max(pred/actual, actual/pred), >= 1 by definition.
/// Both sides are floored at a tiny positive cost to stay defined.
pub fn q_error(predicted: f64, actual: f64) -> f64 {
    let p = predicted.max(1e-9);
    let a = actual.max(1e-9);
    (p / a).max(a / p)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Version tag of persisted model documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned JSON envelope for persisted models. The feature-schema hash is
/// a fingerprint of the ordered feature names the model was trained on;
/// loading rejects a mismatch.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelEnvelope<T> {
    pub version: u32,
    pub feature_schema_hash: String,
    pub payload: T,
}

pub fn feature_schema_hash(feature_names: &[String]) -> String {
    let joined = feature_names.join("\u{1f}");
    format!("{:016x}", fnv64_str(&joined))
}

pub fn save_model<T: Serialize>(payload: &T, feature_names: &[String]) -> Result<String> {
    let env = ModelEnvelope {
        version: MODEL_FORMAT_VERSION,
        feature_schema_hash: feature_schema_hash(feature_names),
        payload,
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn load_model<T: DeserializeOwned>(json: &str, feature_names: &[String]) -> Result<T> {
    let env: ModelEnvelope<T> = serde_json::from_str(json)?;
    if env.version != MODEL_FORMAT_VERSION {
        return Err(Error::InvalidRequest(format!(
            "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
            env.version
        )));
    }
    let expected = feature_schema_hash(feature_names);
    if env.feature_schema_hash != expected {
        return Err(Error::InvalidRequest(format!(
            "model feature schema hash {} does not match expected {expected}",
            env.feature_schema_hash
        )));
    }
    Ok(env.payload)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_error_is_symmetric_and_at_least_one() {
        assert_eq!(q_error(10.0, 10.0), 1.0);
        assert_eq!(q_error(20.0, 10.0), 2.0);
        assert_eq!(q_error(10.0, 20.0), 2.0);
        assert!(q_error(0.0, 5.0) >= 1.0);
    }

    #[test]
    fn envelope_rejects_schema_mismatch() {
        let names = vec!["a".to_string(), "b".to_string()];
        let json = save_model(&vec![1.0, 2.0], &names).unwrap();
        let loaded: Vec<f64> = load_model(&json, &names).unwrap();
        assert_eq!(loaded, vec![1.0, 2.0]);
        let other = vec!["a".to_string(), "c".to_string()];
        assert!(load_model::<Vec<f64>>(&json, &other).is_err());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
