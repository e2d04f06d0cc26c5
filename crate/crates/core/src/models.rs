//! Q-functions backed by a pure QVC, a hybrid QVC with a dense head, or a
//! classical MLP, behind one interface.
//!
//! Models consume *features*: the encoder angles for circuit models, or the
//! binary / min-max normalized observation for MLPs. [`QPolicyModel::features`]
//! turns a raw observation into them.
//!
//! Trainable parameters flatten as: circuit angles first, then dense weights
//! and biases (layer by layer, weights row-major before biases).

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::circuit::{assemble_hybrid_qvc, assemble_pure_qvc, CircuitDef};
use crate::diffgrad::shift_gradient;
use crate::encoding::{Encoder, RangeSpec};
use crate::error::{config, Error, Result};
use crate::nn::{Activation, DenseLayer, Mlp, MlpDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    PureQvc,
    HybridQvc,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::PureQvc => "pure",
            ModelKind::HybridQvc => "hybrid",
            ModelKind::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Body {
    Pure { circuit: Arc<CircuitDef>, params: Vec<f64>, layers: usize, output_scale: f64 },
    Hybrid { circuit: Arc<CircuitDef>, params: Vec<f64>, layers: usize, head: DenseLayer },
    Mlp(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QPolicyModel {
    body: Body,
    encoder: Encoder,
    n_inputs: usize,
    n_actions: usize,
}

fn random_angles(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect()
}

impl QPolicyModel {
    /// Pure QVC: Q values are `output_scale ×` the pooled readouts.
    /// Circuit angles start uniform in `[0, 2π)`.
    pub fn pure(
        n_inputs: usize,
        n_actions: usize,
        layers: usize,
        encoder: Encoder,
        output_scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(output_scale.is_finite() && output_scale > 0.0) {
            return config(format!("output scale must be positive, got {output_scale}"));
        }
        let circuit = Arc::new(assemble_pure_qvc(n_inputs, n_actions, layers)?);
        let params = random_angles(circuit.param_count(), rng);
        let model = Self { body: Body::Pure { circuit, params, layers, output_scale }, encoder, n_inputs, n_actions };
        model.check_encoder()?;
        Ok(model)
    }

    /// Hybrid QVC: every qubit is read out and fed through one linear layer.
    pub fn hybrid(n_inputs: usize, n_actions: usize, layers: usize, encoder: Encoder, rng: &mut impl Rng) -> Result<Self> {
        let circuit = Arc::new(assemble_hybrid_qvc(n_inputs, layers)?);
        let params = random_angles(circuit.param_count(), rng);
        let head = DenseLayer::random(n_inputs, n_actions, Activation::Identity, rng);
        let model = Self { body: Body::Hybrid { circuit, params, layers, head }, encoder, n_inputs, n_actions };
        model.check_encoder()?;
        Ok(model)
    }

    pub fn mlp(def: &MlpDef, encoder: Encoder, rng: &mut impl Rng) -> Result<Self> {
        let n_inputs = def.sizes[0];
        let n_actions = *def.sizes.last().expect("validated sizes");
        let model = Self { body: Body::Mlp(Mlp::random(def, rng)), encoder, n_inputs, n_actions };
        model.check_encoder()?;
        Ok(model)
    }

    fn check_encoder(&self) -> Result<()> {
        match &self.encoder {
            Encoder::Scaled(r) if r.len() != self.n_inputs => {
                config(format!("range spec covers {} inputs but the model has {}", r.len(), self.n_inputs))
            }
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.body {
            Body::Pure { .. } => ModelKind::PureQvc,
            Body::Hybrid { .. } => ModelKind::HybridQvc,
            Body::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn circuit(&self) -> Option<&CircuitDef> {
        match &self.body {
            Body::Pure { circuit, .. } | Body::Hybrid { circuit, .. } => Some(circuit),
            Body::Mlp(_) => None,
        }
    }

    /// Leading slice of [`Self::params`] that belongs to the circuit.
    pub fn circuit_param_count(&self) -> usize {
        self.circuit().map_or(0, CircuitDef::param_count)
    }

    pub fn total_trainable_count(&self) -> usize {
        match &self.body {
            Body::Pure { params, .. } => params.len(),
            Body::Hybrid { params, head, .. } => params.len() + head.trainable_count(),
            Body::Mlp(mlp) => mlp.trainable_count(),
        }
    }

    /// Observation → model input.
    pub fn features(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.n_inputs {
            return config(format!("model expects {} observation values, got {}", self.n_inputs, obs.len()));
        }
        match self.body {
            Body::Mlp(_) => self.encoder.classical_input(obs),
            _ => Ok(self.encoder.encode(obs)?.angles),
        }
    }

    pub fn q_values(&self, features: &[f64]) -> Result<Vec<f64>> {
        match &self.body {
            Body::Pure { circuit, params, output_scale, .. } => {
                Ok(circuit.evaluate(params, features)?.into_iter().map(|r| r * output_scale).collect())
            }
            Body::Hybrid { circuit, params, head, .. } => head.forward(&circuit.evaluate(params, features)?),
            Body::Mlp(mlp) => mlp.forward(features),
        }
    }

    pub fn q_values_for_obs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.q_values(&self.features(obs)?)
    }

    /// Squared TD error `(td_target − Q(features, action))²` and its gradient
    /// with respect to [`Self::params`].
    pub fn model_gradients(&self, features: &[f64], action: usize, td_target: f64) -> Result<(f64, Vec<f64>)> {
        if action >= self.n_actions {
            return config(format!("action {action} out of range for {} actions", self.n_actions));
        }
        let one_hot = |g: f64| -> Vec<f64> {
            let mut v = vec![0.0; self.n_actions];
            v[action] = g;
            v
        };
        match &self.body {
            Body::Pure { circuit, params, output_scale, .. } => {
                let q = circuit.evaluate(params, features)?[action] * output_scale;
                let dq = 2.0 * (q - td_target);
                let grads = shift_gradient(circuit, params, features, &one_hot(dq * output_scale))?;
                Ok(((q - td_target).powi(2), grads))
            }
            Body::Hybrid { circuit, params, head, .. } => {
                let readouts = circuit.evaluate(params, features)?;
                let q = head.forward(&readouts)?[action];
                let (head_grads, readout_weights) = head.backward(&readouts, &one_hot(2.0 * (q - td_target)))?;
                let mut grads = shift_gradient(circuit, params, features, &readout_weights)?;
                grads.extend(head_grads);
                Ok(((q - td_target).powi(2), grads))
            }
            Body::Mlp(mlp) => {
                let q = mlp.forward(features)?[action];
                let (grads, _) = mlp.backward(features, &one_hot(2.0 * (q - td_target)))?;
                Ok(((q - td_target).powi(2), grads))
            }
        }
    }

    /// Central differences of the squared TD error over every trainable
    /// parameter, perturbing the flat parameter vector directly.
    pub fn finite_diff_gradients(&self, features: &[f64], action: usize, td_target: f64, h: f64) -> Result<Vec<f64>> {
        if !(h > 0.0) {
            return config(format!("finite-difference step must be positive, got {h}"));
        }
        let base = self.params();
        let mut probe = self.clone();
        let mut loss_at = |values: &[f64]| -> Result<f64> {
            probe.set_params(values)?;
            Ok((probe.q_values(features)?[action] - td_target).powi(2))
        };
        let mut shifted = base.clone();
        (0..base.len())
            .map(|i| {
                shifted[i] = base[i] + h;
                let plus = loss_at(&shifted)?;
                shifted[i] = base[i] - h;
                let minus = loss_at(&shifted)?;
                shifted[i] = base[i];
                Ok((plus - minus) / (2.0 * h))
            })
            .collect()
    }

    /// Mean loss and mean gradient over a batch of `(features, action, target)`.
    ///
    /// Samples are evaluated in parallel and reduced in batch order, so the
    /// result is independent of thread count.
    pub fn batch_gradients(&self, batch: &[(&[f64], usize, f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return config("empty gradient batch");
        }
        let per_sample: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map(|&(features, action, target)| self.model_gradients(features, action, target))
            .collect::<Result<_>>()?;
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut grads = vec![0.0; self.total_trainable_count()];
        for (l, g) in per_sample {
            loss += l;
            for (acc, v) in grads.iter_mut().zip(g) {
                *acc += v;
            }
        }
        grads.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grads))
    }

    pub fn params(&self) -> Vec<f64> {
        match &self.body {
            Body::Pure { params, .. } => params.clone(),
            Body::Hybrid { params, head, .. } => params.iter().copied().chain(head.params()).collect(),
            Body::Mlp(mlp) => mlp.params(),
        }
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.total_trainable_count() {
            return config(format!("expected {} parameters, got {}", self.total_trainable_count(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite model parameter".into()));
        }
        match &mut self.body {
            Body::Pure { params, .. } => params.copy_from_slice(values),
            Body::Hybrid { params, head, .. } => {
                let (c, h) = values.split_at(params.len());
                params.copy_from_slice(c);
                head.set_params(h)?;
            }
            Body::Mlp(mlp) => mlp.set_params(values)?,
        }
        Ok(())
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.kind() == other.kind()
            && self.n_inputs == other.n_inputs
            && self.n_actions == other.n_actions
            && self.total_trainable_count() == other.total_trainable_count()
    }

    /// Plain-text checkpoint: a header of `key value` lines, `params N`, then
    /// one parameter per line in shortest round-trip decimal form.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("qrl-model 1\n");
        let _ = writeln!(out, "kind {}", self.kind().name());
        match &self.encoder {
            Encoder::Directional => out.push_str("encoder directional\n"),
            Encoder::Scaled(r) => {
                let ranges: Vec<String> = r.bounds().iter().map(|(lo, hi)| format!("{lo}:{hi}")).collect();
                let _ = writeln!(out, "encoder scaled {}", ranges.join(","));
            }
        }
        let _ = writeln!(out, "inputs {}", self.n_inputs);
        let _ = writeln!(out, "actions {}", self.n_actions);
        match &self.body {
            Body::Pure { layers, output_scale, .. } => {
                let _ = writeln!(out, "layers {layers}");
                let _ = writeln!(out, "output_scale {output_scale}");
            }
            Body::Hybrid { layers, .. } => {
                let _ = writeln!(out, "layers {layers}");
            }
            Body::Mlp(mlp) => {
                let sizes: Vec<String> = mlp.def().sizes.iter().map(usize::to_string).collect();
                let _ = writeln!(out, "sizes {}", sizes.join(","));
            }
        }
        let params = self.params();
        let _ = writeln!(out, "params {}", params.len());
        for p in params {
            let _ = writeln!(out, "{p}");
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Parse(format!("checkpoint: {msg}"));
        let mut lines = text.lines();
        if lines.next() != Some("qrl-model 1") {
            return Err(bad("missing 'qrl-model 1' header".into()));
        }
        let mut header = std::collections::BTreeMap::new();
        for line in lines.by_ref() {
            let (key, value) = line.split_once(' ').ok_or_else(|| bad(format!("malformed line '{line}'")))?;
            header.insert(key.to_string(), value.to_string());
            if key == "params" {
                break;
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| bad(format!("missing '{k}'")));
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad '{k}'"))) };
        let encoder = match get("encoder")?.split_once(' ') {
            None if get("encoder")? == "directional" => Encoder::Directional,
            Some(("scaled", ranges)) => {
                let bounds = ranges
                    .split(',')
                    .map(|r| {
                        let (lo, hi) = r.split_once(':').ok_or_else(|| bad(format!("bad range '{r}'")))?;
                        Ok((
                            lo.parse().map_err(|_| bad(format!("bad range '{r}'")))?,
                            hi.parse().map_err(|_| bad(format!("bad range '{r}'")))?,
                        ))
                    })
                    .collect::<Result<Vec<(f64, f64)>>>()?;
                Encoder::Scaled(RangeSpec::new(bounds)?)
            }
            _ => return Err(bad(format!("unknown encoder '{}'", get("encoder")?))),
        };
        let (inputs, actions) = (num("inputs")?, num("actions")?);
        // parameters are overwritten below, the init rng only shapes the model
        let mut rng = crate::envs::seeded_rng(0);
        let mut model = match get("kind")?.as_str() {
            "pure" => {
                let scale = get("output_scale")?.parse().map_err(|_| bad("bad 'output_scale'".into()))?;
                Self::pure(inputs, actions, num("layers")?, encoder, scale, &mut rng)?
            }
            "hybrid" => Self::hybrid(inputs, actions, num("layers")?, encoder, &mut rng)?,
            "mlp" => {
                let sizes = get("sizes")?
                    .split(',')
                    .map(|s| s.parse().map_err(|_| bad(format!("bad size '{s}'"))))
                    .collect::<Result<Vec<usize>>>()?;
                Self::mlp(&MlpDef::new(sizes)?, encoder, &mut rng)?
            }
            other => return Err(bad(format!("unknown kind '{other}'"))),
        };
        let count = num("params")?;
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad(format!("bad parameter '{l}'"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != count {
            return Err(bad(format!("expected {count} parameters, found {}", values.len())));
        }
        model.set_params(&values)?;
        Ok(model)
    }
}

/// Online network and its slowly tracking target copy.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPair {
    pub online: QPolicyModel,
    pub target: QPolicyModel,
}

impl TargetPair {
    /// Target starts as an exact copy of `online`.
    pub fn new(online: QPolicyModel) -> Self {
        Self { target: online.clone(), online }
    }

    pub fn from_parts(online: QPolicyModel, target: QPolicyModel) -> Result<Self> {
        if !online.same_shape(&target) {
            return config("online and target models differ in shape");
        }
        Ok(Self { online, target })
    }

    /// `θ^t ← θ`
    pub fn hard_copy(&mut self) {
        let params = self.online.params();
        self.target.set_params(&params).expect("shapes checked at construction");
    }

    /// `θ^t ← τ θ^t + (1 − τ) θ`; `tau` weights the old target.
    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return config(format!("soft update factor must lie in [0, 1], got {tau}"));
        }
        let online = self.online.params();
        let blended: Vec<f64> =
            self.target.params().iter().zip(&online).map(|(t, o)| tau * t + (1.0 - tau) * o).collect();
        self.target.set_params(&blended)
    }
}
