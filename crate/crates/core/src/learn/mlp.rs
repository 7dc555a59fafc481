use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::FeatureEncoder;
use crate::env::{ObservationKind, SteeringReward, SteeringStrategy, StepView};
use crate::error::{Result, SteerError};
use crate::game::{AgentTable, PolicyShape};
use crate::rng::StreamRng;

/// Squashing of the last layer into `[0, U_max]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    /// `U_max * sigmoid(z)`.
    #[default]
    Sigmoid,
    /// `U_max * clamp(z, 0, 1)`; reaches zero exactly.
    Clip,
}

impl OutputHead {
    fn apply(self, z: f64, u_max: f64) -> f64 {
        match self {
            Self::Sigmoid => u_max / (1.0 + (-z).exp()),
            Self::Clip => u_max * z.clamp(0.0, 1.0),
        }
    }
}

/// One hidden `tanh` layer followed by an [`OutputHead`].
///
/// Parameters are stored flat as `[W1, b1, W2, b2, c]` with row-major weights. `c`
/// holds biases shared between outputs: output `k` also adds `c[shared[k]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub u_max: f64,
    #[serde(default)]
    pub head: OutputHead,
    /// Empty, or one shared-bias index per output.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shared: Vec<usize>,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + output * hidden + output
    }

    /// All weights zero, output bias `bias`.
    pub fn with_output_bias(input: usize, hidden: usize, output: usize, u_max: f64, bias: f64) -> Self {
        let mut params = vec![0.0; Self::param_count(input, hidden, output)];
        let k = params.len() - output;
        params[k..].fill(bias);
        Self { input, hidden, output, u_max, head: OutputHead::Sigmoid, shared: Vec::new(), params }
    }

    /// Number of shared biases.
    pub fn shared_count(&self) -> usize {
        self.shared.iter().max().map_or(0, |m| m + 1)
    }

    /// Ties output `k` to shared bias `shared[k]`, initialized to zero.
    pub fn with_shared_bias(mut self, shared: Vec<usize>) -> Result<Self> {
        if shared.len() != self.output {
            return Err(SteerError::Shape(format!("{} shared indices for {} outputs", shared.len(), self.output)));
        }
        self.params.truncate(Self::param_count(self.input, self.hidden, self.output));
        self.shared = shared;
        self.params.resize(self.params.len() + self.shared_count(), 0.0);
        Ok(self)
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(SteerError::Shape(format!("expected {} parameters, got {}", self.params.len(), params.len())));
        }
        Ok(Self { params: params.to_vec(), ..self.clone() })
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input || out.len() != self.output {
            return Err(SteerError::Shape(format!(
                "mlp {}->{} called with {} inputs and {} outputs",
                self.input,
                self.output,
                x.len(),
                out.len()
            )));
        }
        let (w1, rest) = self.params.split_at(self.hidden * self.input);
        let (b1, rest) = rest.split_at(self.hidden);
        let (w2, rest) = rest.split_at(self.output * self.hidden);
        let (b2, c) = rest.split_at(self.output);
        let mut h = vec![0.0; self.hidden];
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &w1[j * self.input..(j + 1) * self.input];
            *hj = (b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh();
        }
        for (k, o) in out.iter_mut().enumerate() {
            let row = &w2[k * self.hidden..(k + 1) * self.hidden];
            let tied = self.shared.get(k).map_or(0.0, |&i| c[i]);
            let z = b2[k] + tied + row.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
            *o = self.head.apply(z, self.u_max);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(SteerError::Numeric("non-finite network output".into()));
        }
        Ok(())
    }
}

/// Feedback strategy `u_t = net(features(pi_t, ...))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpStrategy {
    pub encoder: FeatureEncoder,
    pub shape: PolicyShape,
    pub net: Mlp,
    /// Subtract each agent's smallest entry. A constant added to every entry of one
    /// agent leaves its advantages unchanged, so this only removes cost.
    #[serde(default)]
    pub subtract_min: bool,
}

impl MlpStrategy {
    pub fn new(encoder: FeatureEncoder, shape: PolicyShape, hidden: usize, u_max: f64, output_bias: f64) -> Self {
        let net = Mlp::with_output_bias(encoder.dim(&shape), hidden, shape.total_len(), u_max, output_bias);
        Self { encoder, shape, net, subtract_min: false }
    }

    /// Shares one bias per action index across all agents and states, so a single
    /// parameter moves every agent's reward for that action.
    pub fn with_shared_action_bias(mut self) -> Result<Self> {
        let mut shared = Vec::with_capacity(self.shape.total_len());
        for (n, _, _) in self.shape.blocks() {
            shared.extend(0..self.shape.actions[n]);
        }
        self.net = self.net.with_shared_bias(shared)?;
        Ok(self)
    }

    pub fn with_subtract_min(mut self, on: bool) -> Self {
        self.subtract_min = on;
        self
    }

    pub fn with_head(mut self, head: OutputHead) -> Self {
        self.net.head = head;
        self
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        Ok(Self { net: self.net.with_params(params)?, ..self.clone() })
    }

    pub fn params(&self) -> &[f64] {
        &self.net.params
    }
}

impl SteeringStrategy<f64> for MlpStrategy {
    fn observation(&self) -> ObservationKind {
        match (self.encoder.belief_dim > 0, self.encoder.time) {
            (true, _) => ObservationKind::PolicyBelief,
            (false, true) => ObservationKind::PolicyTime,
            (false, false) => ObservationKind::Policy,
        }
    }

    fn reward(&self, view: &StepView<'_, f64>, _rng: &mut StreamRng) -> Result<SteeringReward<f64>> {
        if view.policy.shape() != &self.shape {
            return Err(SteerError::Shape("policy shape differs from the trained shape".into()));
        }
        let mut x = Vec::with_capacity(self.net.input);
        self.encoder.encode(view, &mut x)?;
        let mut out = vec![0.0; self.net.output];
        self.net.forward(&x, &mut out)?;
        let mut table = AgentTable::from_flat(&self.shape, &out)?;
        if self.subtract_min {
            for n in 0..self.shape.num_agents() {
                let row = table.agent_mut(n);
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                row.iter_mut().for_each(|x| *x -= lo);
            }
        }
        Ok(SteeringReward::from_table(table))
    }
}

/// Saved strategy with enough metadata to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    /// Hash of the scenario the strategy was trained on.
    pub scenario_hash: String,
    pub strategy: MlpStrategy,
}

impl Checkpoint {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn new(strategy: MlpStrategy, scenario_hash: impl Into<String>) -> Self {
        Self { schema_version: Self::SCHEMA_VERSION, scenario_hash: scenario_hash.into(), strategy }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SteerError::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let ck: Self = serde_json::from_str(&text)
            .map_err(|e| SteerError::Config(format!("malformed checkpoint {}: {e}", path.display())))?;
        if ck.schema_version != Self::SCHEMA_VERSION {
            return Err(SteerError::Config(format!("unsupported checkpoint schema {}", ck.schema_version)));
        }
        let net = &ck.strategy.net;
        if net.params.len() != Mlp::param_count(net.input, net.hidden, net.output) + net.shared_count()
            || !(net.shared.is_empty() || net.shared.len() == net.output)
            || net.input != ck.strategy.encoder.dim(&ck.strategy.shape)
            || net.output != ck.strategy.shape.total_len()
        {
            return Err(SteerError::Config("checkpoint dimensions are inconsistent".into()));
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::FeatureKind;

    #[test]
    fn forward_matches_hand_computation() {
        // 2 inputs, 1 hidden, 1 output.
        let mut net = Mlp {
            input: 2,
            hidden: 1,
            output: 1,
            u_max: 4.0,
            head: OutputHead::Sigmoid,
            params: vec![1.0, -2.0, 0.5, 3.0, -1.0],
            shared: Vec::new(),
        };
        let mut out = [0.0];
        net.forward(&[0.3, 0.1], &mut out).unwrap();
        let h = (0.3f64 - 0.2 + 0.5).tanh();
        let want = 4.0 / (1.0 + (-(3.0 * h - 1.0)).exp());
        assert!((out[0] - want).abs() < 1e-14);
        assert!(net.forward(&[0.3], &mut out).is_err());
        net.head = OutputHead::Clip;
        net.forward(&[0.3, 0.1], &mut out).unwrap();
        assert!((out[0] - 4.0 * (3.0 * h - 1.0).clamp(0.0, 1.0)).abs() < 1e-14);
        net.params[4] = -5.0;
        net.forward(&[0.3, 0.1], &mut out).unwrap();
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn output_bias_sets_constant_reward() {
        let shape = PolicyShape::new(1, 1, vec![2, 2]);
        let st = MlpStrategy::new(FeatureEncoder::new(FeatureKind::DualLogit, true, 0), shape.clone(), 4, 10.0, 0.0);
        let pi = crate::game::JointPolicy::uniform(&shape);
        let view = StepView { t: 0, horizon: 5, policy: &pi, history: &[], belief: None };
        let mut rng = crate::rng::stream(0, &[]);
        let u = st.reward(&view, &mut rng).unwrap();
        assert!(u.iter().all(|x| (x - 5.0).abs() < 1e-12));
        let u = st.with_subtract_min(true).reward(&view, &mut rng).unwrap();
        assert!(u.iter().all(|x| x == 0.0));
    }

    #[test]
    fn shared_bias_moves_every_agent() {
        let shape = PolicyShape::new(1, 1, vec![2, 2, 2]);
        let st = MlpStrategy::new(FeatureEncoder::new(FeatureKind::DualLogit, false, 0), shape.clone(), 2, 2.0, 0.0)
            .with_shared_action_bias()
            .unwrap();
        assert_eq!(st.net.shared, vec![0, 1, 0, 1, 0, 1]);
        let mut params = st.params().to_vec();
        let n = params.len();
        params[n - 2] = 50.0;
        params[n - 1] = -50.0;
        let st = st.with_params(&params).unwrap();
        let pi = crate::game::JointPolicy::uniform(&shape);
        let view = StepView { t: 0, horizon: 5, policy: &pi, history: &[], belief: None };
        let u = st.reward(&view, &mut crate::rng::stream(0, &[])).unwrap();
        for a in 0..3 {
            assert!((u.block(a, 0, 0)[0] - 2.0).abs() < 1e-12 && u.block(a, 0, 0)[1] < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let shape = PolicyShape::new(1, 1, vec![2, 2]);
        let st = MlpStrategy::new(FeatureEncoder::new(FeatureKind::RawPolicy, false, 0), shape, 3, 10.0, -2.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ck.json");
        Checkpoint::new(st.clone(), "abc").save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back.strategy, st);
        assert_eq!(back.scenario_hash, "abc");
    }
}
