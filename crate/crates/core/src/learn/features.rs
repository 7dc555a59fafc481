use serde::{Deserialize, Serialize};

use crate::env::StepView;
use crate::error::{Result, SteerError};
use crate::game::PolicyShape;

/// Input representation of the current policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Per-block `log pi - mean(log pi)`, clipped and scaled.
    #[default]
    DualLogit,
    /// Dual logits followed by the flattened belief.
    BeliefAugmented,
    RawPolicy,
}

const LOGIT_CLIP: f64 = 15.0;
const LOGIT_SCALE: f64 = 1.0;

/// Maps a step view to a flat feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub kind: FeatureKind,
    /// Append `(T - t) / 100`.
    pub time: bool,
    /// Length of the flattened belief, zero unless `BeliefAugmented`.
    #[serde(default)]
    pub belief_dim: usize,
}

impl FeatureEncoder {
    pub fn new(kind: FeatureKind, time: bool, belief_dim: usize) -> Self {
        let belief_dim = if kind == FeatureKind::BeliefAugmented { belief_dim } else { 0 };
        Self { kind, time, belief_dim }
    }

    pub fn dim(&self, shape: &PolicyShape) -> usize {
        shape.total_len() + self.belief_dim + usize::from(self.time)
    }

    pub fn encode(&self, view: &StepView<'_, f64>, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let pi = view.policy;
        let shape = pi.shape();
        match self.kind {
            FeatureKind::RawPolicy => out.extend(pi.iter()),
            FeatureKind::DualLogit | FeatureKind::BeliefAugmented => {
                for (n, h, s) in shape.blocks() {
                    let block = pi.block(n, h, s);
                    let start = out.len();
                    out.extend(block.iter().map(|&p| p.max(crate::dynamics::MIN_PROB).ln()));
                    let mean = out[start..].iter().sum::<f64>() / block.len() as f64;
                    for x in &mut out[start..] {
                        *x = (*x - mean).clamp(-LOGIT_CLIP, LOGIT_CLIP) / LOGIT_SCALE;
                    }
                }
            }
        }
        if self.belief_dim > 0 {
            let belief = view.belief.ok_or_else(|| {
                SteerError::UnsupportedObservation("strategy needs a belief but none is tracked".into())
            })?;
            let before = out.len();
            for comp in belief.components() {
                out.extend_from_slice(comp);
            }
            if out.len() - before != self.belief_dim {
                return Err(SteerError::Shape(format!(
                    "belief has {} entries, encoder expects {}",
                    out.len() - before,
                    self.belief_dim
                )));
            }
        }
        if self.time {
            out.push((view.horizon as f64 - view.t as f64) / 100.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{BeliefState, ModelClass};
    use crate::dynamics::DynamicsModel;
    use crate::game::JointPolicy;

    fn shape() -> PolicyShape {
        PolicyShape::new(1, 1, vec![2, 2])
    }

    #[test]
    fn dual_logits_are_centered() {
        let sh = shape();
        let pi = JointPolicy::<f64>::from_first_action_probs(&sh, &[0.9, 0.5]).unwrap();
        let view = StepView { t: 3, horizon: 10, policy: &pi, history: &[], belief: None };
        let mut out = Vec::new();
        FeatureEncoder::new(FeatureKind::DualLogit, true, 0).encode(&view, &mut out).unwrap();
        assert_eq!(out.len(), 5);
        let half = 9f64.ln() / 2.0 / LOGIT_SCALE;
        assert!((out[0] - half).abs() < 1e-12 && (out[1] + half).abs() < 1e-12);
        assert!(out[2].abs() < 1e-12 && out[3].abs() < 1e-12);
        assert!((out[4] - 0.07).abs() < 1e-12);
    }

    #[test]
    fn belief_features_need_a_belief() {
        let sh = shape();
        let pi = JointPolicy::<f64>::uniform(&sh);
        let class = ModelClass::explicit(vec![DynamicsModel::exact_npg(0.1), DynamicsModel::exact_npg(0.2)]);
        let b = BeliefState::uniform(&class);
        let enc = FeatureEncoder::new(FeatureKind::BeliefAugmented, false, 2);
        let mut out = Vec::new();
        let view = StepView { t: 0, horizon: 1, policy: &pi, history: &[], belief: None };
        assert!(enc.encode(&view, &mut out).is_err());
        let view = StepView { belief: Some(&b), ..view };
        enc.encode(&view, &mut out).unwrap();
        assert_eq!(out.len(), enc.dim(&sh));
        assert_eq!(&out[4..], &[0.5, 0.5]);
    }
}
