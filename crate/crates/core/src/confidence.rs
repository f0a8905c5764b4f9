//! Dual-confidence vector and post-offload decontamination.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Reserved source id for the built-in tool channel.
pub const TOOL_CHANNEL: &str = "__tool__";
/// Reserved source id for the verifier channel.
pub const VERIFY_CHANNEL: &str = "__verify__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceVector {
    /// Certainty that parametric knowledge suffices.
    pub p_self: f64,
    /// Per-source certainty that the external channel would get it right.
    pub source_confidences: BTreeMap<String, f64>,
    /// A verification succeeded in this trajectory.
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{name} = {value} is outside [0, 1]")]
pub struct ProbabilityError {
    pub name: String,
    pub value: f64,
}

fn check_unit(name: &str, value: f64) -> Result<f64, ProbabilityError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ProbabilityError {
            name: name.to_string(),
            value,
        })
    }
}

impl ConfidenceVector {
    pub fn new(p_self: f64) -> Result<Self, ProbabilityError> {
        Ok(Self {
            p_self: check_unit("p_self", p_self)?,
            source_confidences: BTreeMap::new(),
            verified: false,
        })
    }

    pub fn set_source(&mut self, id: impl Into<String>, p: f64) -> Result<(), ProbabilityError> {
        let id = id.into();
        check_unit(&id, p)?;
        self.source_confidences.insert(id, p);
        Ok(())
    }

    pub fn with_source(mut self, id: impl Into<String>, p: f64) -> Result<Self, ProbabilityError> {
        self.set_source(id, p)?;
        Ok(self)
    }

    pub fn source(&self, id: &str) -> Option<f64> {
        self.source_confidences.get(id).copied()
    }

    /// Largest source confidence, 0 when there are none.
    pub fn max_source(&self) -> f64 {
        self.source_confidences.values().copied().fold(0.0, f64::max)
    }
}

/// Δ = p_self − max source confidence.
pub fn conflict_differential(cv: &ConfidenceVector) -> f64 {
    cv.p_self - cv.max_source()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecontaminationConfig {
    pub trust_override_threshold: f64,
}

impl Default for DecontaminationConfig {
    fn default() -> Self {
        Self {
            trust_override_threshold: 0.9,
        }
    }
}

/// Post-offload self-confidence after discounting fluency gains.
///
/// Increases survive only when verification happened or the source is
/// trusted at or above the override threshold. Decreases always survive.
pub fn decontaminate(
    pre_offload_p_self: f64,
    post_offload_p_self: f64,
    source_trust: f64,
    verified: bool,
    cfg: &DecontaminationConfig,
) -> f64 {
    if verified || source_trust >= cfg.trust_override_threshold {
        post_offload_p_self
    } else {
        pre_offload_p_self.min(post_offload_p_self)
    }
}
