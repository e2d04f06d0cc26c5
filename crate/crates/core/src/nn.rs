//! Small dense networks with hand-written backprop, MSE loss and Adam.

use rand::Rng;

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu if pre > 0.0 => 1.0,
            Activation::Relu => 0.0,
        }
    }
}

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs], activation }
    }

    /// Uniform init with limit `sqrt(6 / fan_in)` for relu layers and
    /// `sqrt(6 / (fan_in + fan_out))` otherwise. Biases start at zero.
    pub fn random(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let limit = match activation {
            Activation::Relu => (6.0 / inputs as f64).sqrt(),
            Activation::Identity => (6.0 / (inputs + outputs) as f64).sqrt(),
        };
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..limit)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs], activation }
    }

    pub fn trainable_count(&self) -> usize {
        (self.inputs + 1) * self.outputs
    }

    fn preactivation(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.inputs {
            return config(format!("dense layer expects {} inputs, got {}", self.inputs, input.len()));
        }
        Ok(self
            .weights
            .chunks_exact(self.inputs.max(1))
            .take(self.outputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.preactivation(input)?.into_iter().map(|z| self.activation.apply(z)).collect())
    }

    /// Returns `(∂L/∂params, ∂L/∂input)`; params are ordered weights then bias.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if upstream.len() != self.outputs {
            return config(format!("dense layer expects {} upstream grads, got {}", self.outputs, upstream.len()));
        }
        let pre = self.preactivation(input)?;
        let delta: Vec<f64> = pre.iter().zip(upstream).map(|(z, g)| g * self.activation.derivative(*z)).collect();
        let mut grads = Vec::with_capacity(self.trainable_count());
        for d in &delta {
            grads.extend(input.iter().map(|x| d * x));
        }
        grads.extend_from_slice(&delta);
        let mut input_grad = vec![0.0; self.inputs];
        for (o, d) in delta.iter().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (ig, w) in input_grad.iter_mut().zip(row) {
                *ig += d * w;
            }
        }
        Ok((grads, input_grad))
    }

    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.trainable_count() {
            return config(format!("expected {} layer params, got {}", self.trainable_count(), values.len()));
        }
        let (w, b) = values.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }
}

/// Layer sizes `[in, h₁, …, out]`; hidden layers use relu, the output identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpDef {
    pub sizes: Vec<usize>,
}

impl MlpDef {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return config(format!("invalid layer sizes {sizes:?}"));
        }
        Ok(Self { sizes })
    }

    pub fn trainable_count(&self) -> usize {
        self.sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn random(def: &MlpDef, rng: &mut impl Rng) -> Self {
        let last = def.sizes.len() - 2;
        let layers = def
            .sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { Activation::Identity } else { Activation::Relu };
                DenseLayer::random(w[0], w[1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn def(&self) -> MlpDef {
        let mut sizes = vec![self.layers[0].inputs];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        MlpDef { sizes }
    }

    pub fn trainable_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::trainable_count).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.layers.iter().try_fold(input.to_vec(), |x, layer| layer.forward(&x))
    }

    /// Returns `(∂L/∂params, ∂L/∂input)` with params flattened layer by layer.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut activations = vec![input.to_vec()];
        for layer in &self.layers[..self.layers.len() - 1] {
            let next = layer.forward(activations.last().expect("nonempty"))?;
            activations.push(next);
        }
        let mut grad = upstream.to_vec();
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for (layer, x) in self.layers.iter().zip(&activations).rev() {
            let (g, ig) = layer.backward(x, &grad)?;
            per_layer.push(g);
            grad = ig;
        }
        Ok((per_layer.into_iter().rev().flatten().collect(), grad))
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(DenseLayer::params).collect()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.trainable_count() {
            return config(format!("expected {} network params, got {}", self.trainable_count(), values.len()));
        }
        let mut rest = values;
        for layer in &mut self.layers {
            let (head, tail) = rest.split_at(layer.trainable_count());
            layer.set_params(head)?;
            rest = tail;
        }
        Ok(())
    }
}

/// Mean squared error and its gradient `2 (pred − target) / N`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return config(format!("mse needs equal nonempty lengths, got {} and {}", pred.len(), target.len()));
    }
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.into_iter().map(|d| 2.0 * d / n).collect()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self { config, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return config(format!(
                "adam state has {} slots, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            ));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

/// Hidden widths in `1..=max_width` whose parameter count is closest to
/// `target`; ties go to the smallest spread between widths, then to the
/// lexicographically smallest width list.
pub fn closest_widths(n_in: usize, n_out: usize, depth: usize, target: usize, max_width: usize) -> Vec<usize> {
    fn count(n_in: usize, widths: &[usize], n_out: usize) -> usize {
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(widths);
        sizes.push(n_out);
        sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }
    let mut best: Option<((usize, usize), Vec<usize>)> = None;
    let mut widths = vec![1; depth];
    loop {
        let diff = count(n_in, &widths, n_out).abs_diff(target);
        let spread = widths.iter().max().unwrap_or(&0) - widths.iter().min().unwrap_or(&0);
        let key = (diff, spread);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, widths.clone()));
        }
        // odometer increment, last digit fastest
        let mut i = depth;
        loop {
            if i == 0 {
                return best.map(|(_, w)| w).unwrap_or_default();
            }
            i -= 1;
            if widths[i] < max_width {
                widths[i] += 1;
                break;
            }
            widths[i] = 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineEnv {
    CartPole,
    Blackjack,
}

/// Baseline network with 1–3 hidden layers sized to the reference parameter
/// counts: CartPole 58 / 226 / 1282 and Blackjack 38 / 194 / 1250.
///
/// 226 has no exact fully-connected solution with 4 inputs and 2 outputs;
/// the closest count is used there.
pub fn baseline_mlp_for(env: BaselineEnv, depth: usize) -> Result<MlpDef> {
    let (n_in, targets) = match env {
        BaselineEnv::CartPole => (4, [58, 226, 1282]),
        BaselineEnv::Blackjack => (3, [38, 194, 1250]),
    };
    if !(1..=3).contains(&depth) {
        return config(format!("baseline depth must be 1, 2 or 3, got {depth}"));
    }
    let widths = closest_widths(n_in, 2, depth, targets[depth - 1], 64);
    let mut sizes = vec![n_in];
    sizes.extend(widths);
    sizes.push(2);
    MlpDef::new(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_examples() {
        let mut id = DenseLayer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            id.weights[i * 3 + i] = 1.0;
        }
        assert_eq!(id.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);

        let mut biased = DenseLayer::zeros(2, 2, Activation::Identity);
        biased.bias = vec![0.5, -0.5];
        assert_eq!(biased.forward(&[7.0, 9.0]).unwrap(), vec![0.5, -0.5]);

        let mut one = DenseLayer::zeros(1, 1, Activation::Identity);
        one.weights = vec![2.0];
        one.bias = vec![1.0];
        assert_eq!(one.forward(&[3.0]).unwrap(), vec![7.0]);
        assert!(one.forward(&[3.0, 1.0]).is_err());
    }

    #[test]
    fn backward_linear_and_relu() {
        let mut layer = DenseLayer::zeros(2, 2, Activation::Identity);
        layer.weights = vec![1.0, 2.0, 3.0, 4.0];
        let (g, ig) = layer.backward(&[5.0, 7.0], &[1.0, -1.0]).unwrap();
        assert_eq!(g, vec![5.0, 7.0, -5.0, -7.0, 1.0, -1.0]);
        assert_eq!(ig, vec![1.0 - 3.0, 2.0 - 4.0]);

        layer.activation = Activation::Relu;
        layer.bias = vec![-100.0, 0.0];
        let (g, _) = layer.backward(&[5.0, 7.0], &[1.0, 1.0]).unwrap();
        assert_eq!(&g[..2], &[0.0, 0.0]);
        assert_eq!(g[4], 0.0);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        assert_eq!(mse_loss(&[1.0], &[0.0]).unwrap(), (1.0, vec![2.0]));
        let a = [0.3, -1.0, 2.5];
        let b = [1.0, 0.5, -0.5];
        assert_eq!(mse_loss(&a, &b).unwrap().0, mse_loss(&b, &a).unwrap().0);
        assert!(mse_loss(&[], &[]).is_err());
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-3), 1);
        let mut p = [0.0];
        adam.step(&mut p, &[0.5]).unwrap();
        // m̂ = 0.5, v̂ = 0.25 → Δ = −lr · 0.5 / (0.5 + 1e-8)
        assert!((p[0] + 1e-3 * 0.5 / (0.5 + 1e-8)).abs() < 1e-18);
        assert!((p[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn adam_zero_grad_and_zero_lr() {
        let mut adam = AdamState::new(AdamConfig::default(), 3);
        let mut p = [1.0, -2.0, 3.0];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);

        let mut adam = AdamState::new(AdamConfig::with_lr(0.0), 3);
        adam.step(&mut p, &[0.3, -9.0, 1e6]).unwrap();
        assert_eq!(p, [1.0, -2.0, 3.0]);
        assert!(adam.step(&mut p, &[0.0]).is_err());
    }

    #[test]
    fn adam_is_deterministic() {
        let a = AdamState::new(AdamConfig::default(), 2);
        let (mut a1, mut a2) = (a.clone(), a);
        let (mut p1, mut p2) = ([0.1, 0.2], [0.1, 0.2]);
        a1.step(&mut p1, &[0.3, -0.7]).unwrap();
        a2.step(&mut p2, &[0.3, -0.7]).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(a1, a2);
    }

    #[test]
    fn baseline_counts() {
        let bj1 = baseline_mlp_for(BaselineEnv::Blackjack, 1).unwrap();
        assert_eq!(bj1.sizes, vec![3, 6, 2]);
        assert_eq!(bj1.trainable_count(), 38);
        let cp1 = baseline_mlp_for(BaselineEnv::CartPole, 1).unwrap();
        assert_eq!(cp1.sizes, vec![4, 8, 2]);
        assert_eq!(cp1.trainable_count(), 58);
        assert!(baseline_mlp_for(BaselineEnv::CartPole, 4).is_err());
    }

    #[test]
    fn trainable_count_matches_layers() {
        let def = MlpDef::new(vec![4, 8, 3, 2]).unwrap();
        let net = Mlp::random(&def, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(net.trainable_count(), def.trainable_count());
        assert_eq!(net.params().len(), def.trainable_count());
        assert_eq!(net.def(), def);
    }

    #[test]
    fn mlp_params_roundtrip() {
        let def = MlpDef::new(vec![3, 4, 2]).unwrap();
        let mut net = Mlp::random(&def, &mut ChaCha8Rng::seed_from_u64(2));
        let values: Vec<f64> = (0..def.trainable_count()).map(|i| i as f64 * 0.01).collect();
        net.set_params(&values).unwrap();
        assert_eq!(net.params(), values);
        assert!(net.set_params(&values[1..]).is_err());
    }
}
