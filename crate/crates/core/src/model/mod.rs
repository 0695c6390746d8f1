//! Small deterministic feed-forward classifiers: architecture, checkpoints,
//! forward/backward passes and minibatch SGD.

mod data;
mod io;

pub use data::{Dataset, DomainConfig, SyntheticConfig, SyntheticData, gen_synthetic};
pub use io::{
    CHECKPOINT_FORMAT_VERSION, checkpoint_from_str, checkpoint_to_string, load_checkpoint,
    save_checkpoint,
};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{mat_t_vec, mat_vec, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }
}

/// `[d0, d1, ..., dL]` with `hidden` activation on every layer but the last.
pub fn mlp_specs(widths: &[usize], hidden: Activation) -> Vec<LayerSpec> {
    let n = widths.len().saturating_sub(1);
    widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let act = if l + 1 == n { Activation::Identity } else { hidden };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

/// Checks that dimensions are positive, consecutive layers chain and the
/// final layer emits raw logits.
pub fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    let Some(last) = specs.last() else {
        return Err(Error::SpecMismatch("no layers".into()));
    };
    for (l, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(Error::SpecMismatch(format!("layer {l} has a zero dimension")));
        }
        if l > 0 && s.in_dim != specs[l - 1].out_dim {
            return Err(Error::SpecMismatch(format!(
                "layer {l} in_dim {} != layer {} out_dim {}",
                s.in_dim,
                l - 1,
                specs[l - 1].out_dim
            )));
        }
    }
    if last.activation != Activation::Identity {
        return Err(Error::SpecMismatch("final layer activation must be identity".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    /// `out_dim × in_dim`.
    pub w: Matrix,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Meta {
    pub format_version: u64,
    pub seed: u64,
    pub training_epochs: u64,
    pub tag: String,
}

impl Default for Meta {
    fn default() -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed: 0,
            training_epochs: 0,
            tag: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    specs: Vec<LayerSpec>,
    layers: Vec<LayerWeights>,
    pub meta: Meta,
}

impl Checkpoint {
    pub fn new(specs: Vec<LayerSpec>, layers: Vec<LayerWeights>, meta: Meta) -> Result<Self> {
        validate_specs(&specs)?;
        if specs.len() != layers.len() {
            return Err(Error::SpecMismatch(format!(
                "{} specs but {} layers",
                specs.len(),
                layers.len()
            )));
        }
        for (l, (s, w)) in specs.iter().zip(&layers).enumerate() {
            if w.w.shape() != (s.out_dim, s.in_dim) || w.b.len() != s.out_dim {
                return Err(Error::SpecMismatch(format!(
                    "layer {l}: weights {:?} / bias {} do not match spec {}x{}",
                    w.w.shape(),
                    w.b.len(),
                    s.out_dim,
                    s.in_dim
                )));
            }
            if !w.w.is_finite() || w.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Checkpoint::new"));
            }
        }
        Ok(Self {
            specs,
            layers,
            meta,
        })
    }

    /// Seeded initialization: weights uniform in `±1/√in_dim`, zero biases.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(specs, seed, &mut rng)
    }

    fn init_with(specs: &[LayerSpec], seed: u64, rng: &mut impl Rng) -> Result<Self> {
        validate_specs(specs)?;
        let layers = specs
            .iter()
            .map(|s| {
                let bound = 1.0 / (s.in_dim as f64).sqrt();
                LayerWeights {
                    w: Matrix::from_fn(s.out_dim, s.in_dim, |_, _| rng.random_range(-bound..bound)),
                    b: vec![0.0; s.out_dim],
                }
            })
            .collect();
        Self::new(
            specs.to_vec(),
            layers,
            Meta {
                seed,
                ..Meta::default()
            },
        )
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.specs.iter().map(|s| s.out_dim * (s.in_dim + 1)).sum()
    }

    /// Fails unless both checkpoints share an identical architecture.
    pub fn ensure_same_specs(&self, other: &Checkpoint) -> Result<()> {
        if self.specs != other.specs {
            return Err(Error::SpecMismatch(format!(
                "architectures differ: {:?} vs {:?}",
                dims(&self.specs),
                dims(&other.specs)
            )));
        }
        Ok(())
    }

    /// Largest absolute difference over all weights and biases.
    pub fn max_abs_diff(&self, other: &Checkpoint) -> f64 {
        assert_eq!(self.specs, other.specs);
        self.layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                let db = a
                    .b
                    .iter()
                    .zip(&b.b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                a.w.max_abs_diff(&b.w).max(db)
            })
            .fold(0.0, f64::max)
    }
}

fn dims(specs: &[LayerSpec]) -> Vec<usize> {
    let mut d = vec![specs.first().map_or(0, |s| s.in_dim)];
    d.extend(specs.iter().map(|s| s.out_dim));
    d
}

/// `(1 − lambda)·a + lambda·b` for every weight and bias; meta is taken
/// from `b`.
pub fn interpolate(a: &Checkpoint, b: &Checkpoint, lambda: f64) -> Result<Checkpoint> {
    a.ensure_same_specs(b)?;
    let layers = a
        .layers
        .iter()
        .zip(&b.layers)
        .map(|(la, lb)| {
            Ok(LayerWeights {
                w: Matrix::lin_comb(&la.w, 1.0 - lambda, &lb.w, lambda)?,
                b: la
                    .b
                    .iter()
                    .zip(&lb.b)
                    .map(|(x, y)| (1.0 - lambda) * x + lambda * y)
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Checkpoint::new(a.specs.clone(), layers, b.meta.clone())
}

/// Reorders the hidden units of every non-final layer: unit `i` of layer `l`
/// moves to slot `perms[l][i]`. Outgoing rows and the next layer's incoming
/// columns move together, so the network computes the same function.
pub fn permute_hidden(ckpt: &Checkpoint, perms: &[Vec<usize>]) -> Result<Checkpoint> {
    let hidden = ckpt.num_layers() - 1;
    if perms.len() != hidden {
        return Err(Error::InvalidArgument(format!(
            "expected {hidden} permutations, got {}",
            perms.len()
        )));
    }
    for (l, p) in perms.iter().enumerate() {
        let m = ckpt.specs[l].out_dim;
        let mut seen = vec![false; m];
        if p.len() != m || !p.iter().all(|&j| j < m && !std::mem::replace(&mut seen[j], true)) {
            return Err(Error::InvalidArgument(format!("layer {l}: not a permutation of 0..{m}")));
        }
    }
    let mut layers = ckpt.layers.clone();
    for (l, p) in perms.iter().enumerate() {
        let src = layers[l].clone();
        let out = &mut layers[l];
        for (i, &j) in p.iter().enumerate() {
            out.w.row_mut(j).copy_from_slice(src.w.row(i));
            out.b[j] = src.b[i];
        }
        let next_src = layers[l + 1].w.clone();
        let next = &mut layers[l + 1].w;
        for r in 0..next.rows() {
            for (i, &j) in p.iter().enumerate() {
                next.row_mut(r)[j] = next_src.row(r)[i];
            }
        }
    }
    Checkpoint::new(ckpt.specs.clone(), layers, ckpt.meta.clone())
}

/// Pre-activations and activations of every layer for one input.
struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

fn trace(ckpt: &Checkpoint, x: &[f64]) -> Trace {
    let mut acts = Vec::with_capacity(ckpt.num_layers() + 1);
    let mut pre = Vec::with_capacity(ckpt.num_layers());
    acts.push(x.to_vec());
    for (spec, layer) in ckpt.specs.iter().zip(&ckpt.layers) {
        let mut z = mat_vec(&layer.w, acts.last().unwrap()).expect("checked dims");
        for (zi, bi) in z.iter_mut().zip(&layer.b) {
            *zi += bi;
        }
        acts.push(z.iter().map(|&v| spec.activation.apply(v)).collect());
        pre.push(z);
    }
    Trace { acts, pre }
}

fn check_input(ckpt: &Checkpoint, x: &[f64]) -> Result<()> {
    if x.len() != ckpt.input_dim() {
        return Err(Error::Shape {
            op: "forward",
            left: (ckpt.specs[0].out_dim, ckpt.input_dim()),
            right: (x.len(), 1),
        });
    }
    Ok(())
}

/// Output logits for one feature vector.
pub fn forward(ckpt: &Checkpoint, x: &[f64]) -> Result<Vec<f64>> {
    check_input(ckpt, x)?;
    Ok(trace(ckpt, x).acts.pop().unwrap())
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy of a logit vector against a class id.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

fn check_dataset(ckpt: &Checkpoint, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.feature_dim() != ckpt.input_dim() {
        return Err(Error::SpecMismatch(format!(
            "dataset has {} features, model expects {}",
            data.feature_dim(),
            ckpt.input_dim()
        )));
    }
    if data.num_classes() != ckpt.output_dim() {
        return Err(Error::SpecMismatch(format!(
            "dataset has {} classes, model emits {} logits",
            data.num_classes(),
            ckpt.output_dim()
        )));
    }
    Ok(())
}

/// Mean softmax cross-entropy over the dataset.
pub fn loss(ckpt: &Checkpoint, data: &Dataset) -> Result<f64> {
    Ok(evaluate(ckpt, data)?.loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean cross-entropy and argmax accuracy in one pass.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset) -> Result<Evaluation> {
    check_dataset(ckpt, data)?;
    let mut total = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let logits = trace(ckpt, data.sample(i)).acts.pop().unwrap();
        let y = data.labels()[i];
        total += cross_entropy(&logits, y);
        if argmax(&logits) == y {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: total / n,
        accuracy: correct as f64 / n,
    })
}

pub fn accuracy(ckpt: &Checkpoint, data: &Dataset) -> Result<f64> {
    Ok(evaluate(ckpt, data)?.accuracy)
}

/// Gradient of the mean cross-entropy over `indices` with respect to every
/// weight and bias, plus the loss itself.
pub fn gradients(
    ckpt: &Checkpoint,
    data: &Dataset,
    indices: &[usize],
) -> Result<(f64, Vec<LayerWeights>)> {
    check_dataset(ckpt, data)?;
    if indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grads: Vec<LayerWeights> = ckpt
        .specs
        .iter()
        .map(|s| LayerWeights {
            w: Matrix::zeros(s.out_dim, s.in_dim),
            b: vec![0.0; s.out_dim],
        })
        .collect();
    let mut total = 0.0;

    for &idx in indices {
        let t = trace(ckpt, data.sample(idx));
        let logits = t.acts.last().unwrap();
        let y = data.labels()[idx];
        let lse = log_sum_exp(logits);
        total += lse - logits[y];

        let mut delta: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
        delta[y] -= 1.0;

        for l in (0..ckpt.num_layers()).rev() {
            let g = &mut grads[l];
            let input = &t.acts[l];
            for (o, &d) in delta.iter().enumerate() {
                g.b[o] += d;
                for (gw, &a) in g.w.row_mut(o).iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if l > 0 {
                let act = ckpt.specs[l - 1].activation;
                let back = mat_t_vec(&ckpt.layers[l].w, &delta)?;
                delta = back
                    .iter()
                    .zip(&t.pre[l - 1])
                    .map(|(g, &z)| g * act.derivative(z))
                    .collect();
            }
        }
    }

    let scale = 1.0 / indices.len() as f64;
    for g in &mut grads {
        g.w = g.w.scale(scale);
        g.b.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((total * scale, grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

/// Full training length for the synthetic task.
pub const DEFAULT_TRAIN_EPOCHS: usize = 200;
/// Moderate fine-tuning length.
pub const DEFAULT_FINETUNE_EPOCHS: usize = 10;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_TRAIN_EPOCHS,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// Defaults for moderate fine-tuning: same rate, 10 epochs.
    pub fn finetune() -> Self {
        Self {
            epochs: DEFAULT_FINETUNE_EPOCHS,
            ..Self::default()
        }
    }

    pub fn with_epochs(self, epochs: usize) -> Self {
        Self { epochs, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Seeded initialization followed by `cfg.epochs` of minibatch SGD. The
/// same generator drives initialization and shuffling.
pub fn train(specs: &[LayerSpec], data: &Dataset, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    validate_specs(specs)?;
    if data.num_classes() == 0 {
        return Err(Error::InvalidArgument("dataset has zero classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ckpt = Checkpoint::init_with(specs, cfg.seed, &mut rng)?;
    check_dataset(&ckpt, data)?;
    sgd(&mut ckpt, data, cfg, &mut rng)?;
    ckpt.meta.training_epochs = cfg.epochs as u64;
    Ok(ckpt)
}

/// Continues SGD from `ckpt`. Shuffling is seeded from `cfg.seed`.
pub fn finetune(ckpt: &Checkpoint, data: &Dataset, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    check_dataset(ckpt, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = ckpt.clone();
    sgd(&mut out, data, cfg, &mut rng)?;
    out.meta.training_epochs += cfg.epochs as u64;
    out.meta.seed = cfg.seed;
    Ok(out)
}

fn sgd(ckpt: &mut Checkpoint, data: &Dataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(rng);
        }
        for batch in order.chunks(cfg.batch_size) {
            let (_, grads) = gradients(ckpt, data, batch)?;
            for (layer, g) in ckpt.layers.iter_mut().zip(&grads) {
                for (w, gw) in layer.w.data_mut().iter_mut().zip(g.w.data()) {
                    *w -= cfg.learning_rate * gw;
                }
                for (b, gb) in layer.b.iter_mut().zip(&g.b) {
                    *b -= cfg.learning_rate * gb;
                }
            }
        }
        if ckpt.layers.iter().any(|l| !l.w.is_finite()) {
            return Err(Error::Numerical("training diverged".into()));
        }
    }
    Ok(())
}

/// Reshapes a `[out_ch, in_ch, k_h, k_w]` kernel into an
/// `out_ch × (in_ch·k_h·k_w)` matrix; columns keep the flat row-major order.
pub fn conv_reshape(shape: [usize; 4], data: &[f64]) -> Result<Matrix> {
    let [out_ch, in_ch, kh, kw] = shape;
    let expected = out_ch * in_ch * kh * kw;
    if data.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "kernel shape {shape:?} needs {expected} values, got {}",
            data.len()
        )));
    }
    Matrix::new(out_ch, in_ch * kh * kw, data.to_vec())
}

/// Inverse of [`conv_reshape`].
pub fn conv_flatten(m: &Matrix) -> Vec<f64> {
    m.data().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_layer(w: Matrix, b: Vec<f64>, act: Activation) -> Checkpoint {
        let spec = LayerSpec::new(w.cols(), w.rows(), act);
        Checkpoint {
            specs: vec![spec],
            layers: vec![LayerWeights { w, b }],
            meta: Meta::default(),
        }
    }

    fn two_class_blobs(n: usize, seed: u64) -> Dataset {
        let cfg = SyntheticConfig {
            feature_dim: 2,
            num_classes: 2,
            modes_per_class: 1,
            class_spread: 4.0,
            noise_std: 0.3,
            domains: vec![DomainConfig {
                shift: 0.0,
                train_samples: n,
                heldout_samples: 2,
            }],
        };
        gen_synthetic(&cfg, seed).unwrap().train_union()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let c = single_layer(Matrix::identity(3), vec![0.0; 3], Activation::Identity);
        assert_eq!(forward(&c, &[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn relu_kills_negated_positive_input() {
        let c = Checkpoint {
            specs: vec![
                LayerSpec::new(2, 2, Activation::Relu),
                LayerSpec::new(2, 2, Activation::Identity),
            ],
            layers: vec![
                LayerWeights {
                    w: Matrix::identity(2).scale(-1.0),
                    b: vec![0.0; 2],
                },
                LayerWeights {
                    w: Matrix::identity(2),
                    b: vec![0.0; 2],
                },
            ],
            meta: Meta::default(),
        };
        assert_eq!(forward(&c, &[0.5, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_rejects_wrong_input() {
        let c = Checkpoint::init(&mlp_specs(&[3, 2], Activation::Relu), 0).unwrap();
        assert!(forward(&c, &[1.0]).is_err());
    }

    #[test]
    fn spec_chain_is_enforced() {
        let bad = vec![
            LayerSpec::new(2, 3, Activation::Relu),
            LayerSpec::new(4, 2, Activation::Identity),
        ];
        assert!(matches!(validate_specs(&bad), Err(Error::SpecMismatch(_))));
        let bad_last = vec![LayerSpec::new(2, 3, Activation::Relu)];
        assert!(validate_specs(&bad_last).is_err());
        assert!(validate_specs(&[]).is_err());
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let c = single_layer(Matrix::zeros(4, 2), vec![0.0; 4], Activation::Identity);
        let data = Dataset::new(Matrix::from_rows(&[[1.0, 2.0]]).unwrap(), vec![3], 4).unwrap();
        assert_eq!(loss(&c, &data).unwrap(), 4f64.ln());

        let data = Dataset::new(
            Matrix::from_fn(7, 2, |i, j| (i * j) as f64),
            vec![0, 1, 2, 3, 0, 1, 2],
            4,
        )
        .unwrap();
        assert!((loss(&c, &data).unwrap() - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logits_give_zero_loss() {
        let c = single_layer(Matrix::zeros(3, 1), vec![0.0, 100.0, 0.0], Activation::Identity);
        let data = Dataset::new(Matrix::from_rows(&[[1.0], [2.0]]).unwrap(), vec![1, 1], 3).unwrap();
        assert!(loss(&c, &data).unwrap() < 1e-6);
    }

    #[test]
    fn loss_rejects_empty_and_mismatched() {
        let c = Checkpoint::init(&mlp_specs(&[2, 3], Activation::Relu), 0).unwrap();
        let wrong_classes =
            Dataset::new(Matrix::from_rows(&[[1.0, 2.0]]).unwrap(), vec![0], 2).unwrap();
        assert!(loss(&c, &wrong_classes).is_err());
        let empty = Dataset::empty(2, 3);
        assert!(matches!(loss(&c, &empty), Err(Error::EmptyDataset)));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let specs = mlp_specs(&[2, 5, 2], Activation::Relu);
        let data = two_class_blobs(40, 1);
        let cfg = TrainConfig::default().with_epochs(0).with_seed(9);
        let trained = train(&specs, &data, &cfg).unwrap();
        let init = Checkpoint::init(&specs, 9).unwrap();
        assert_eq!(trained.layers(), init.layers());
        assert_eq!(trained.meta.seed, 9);

        let same = finetune(&trained, &data, &TrainConfig::finetune().with_epochs(0)).unwrap();
        assert_eq!(same.layers(), trained.layers());
    }

    #[test]
    fn training_is_deterministic() {
        let specs = mlp_specs(&[2, 6, 2], Activation::Tanh);
        let data = two_class_blobs(60, 2);
        let cfg = TrainConfig::default().with_epochs(5).with_seed(3);
        let a = train(&specs, &data, &cfg).unwrap();
        let b = train(&specs, &data, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train(&specs, &data, &cfg.with_seed(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn train_rejects_empty_dataset() {
        let specs = mlp_specs(&[2, 2], Activation::Relu);
        let err = train(&specs, &Dataset::empty(2, 2), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
        let zero = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&specs, &two_class_blobs(4, 0), &zero).is_err());
    }

    #[test]
    fn finetune_defaults_to_ten_epochs() {
        assert_eq!(TrainConfig::finetune().epochs, 10);
        assert_eq!(TrainConfig::default().epochs, 200);
    }

    #[test]
    fn interpolate_endpoints_are_exact() {
        let specs = mlp_specs(&[3, 4, 2], Activation::Relu);
        let a = Checkpoint::init(&specs, 1).unwrap();
        let b = Checkpoint::init(&specs, 2).unwrap();
        assert_eq!(interpolate(&a, &b, 0.0).unwrap().layers(), a.layers());
        assert_eq!(interpolate(&a, &b, 1.0).unwrap().layers(), b.layers());
    }

    #[test]
    fn permuting_hidden_units_preserves_the_function() {
        let specs = mlp_specs(&[3, 4, 5, 2], Activation::Tanh);
        let a = Checkpoint::init(&specs, 8).unwrap();
        let p = permute_hidden(&a, &[vec![2, 0, 3, 1], vec![4, 3, 2, 1, 0]]).unwrap();
        assert_eq!(p.layers()[0].w.row(2), a.layers()[0].w.row(0));
        assert_eq!(p.layers()[1].w[(0, 2)], a.layers()[1].w[(4, 0)]);
        for x in [[0.3, -1.0, 2.0], [1.0, 1.0, -0.5]] {
            let (ya, yp) = (forward(&a, &x).unwrap(), forward(&p, &x).unwrap());
            assert!(ya.iter().zip(&yp).all(|(u, v)| (u - v).abs() < 1e-12));
        }
        let id = permute_hidden(&a, &[vec![0, 1, 2, 3], vec![0, 1, 2, 3, 4]]).unwrap();
        assert_eq!(id, a);
        assert!(permute_hidden(&a, &[vec![0, 0, 1, 2], vec![0, 1, 2, 3, 4]]).is_err());
        assert!(permute_hidden(&a, &[vec![0, 1, 2, 3]]).is_err());
    }

    #[test]
    fn conv_reshape_shapes() {
        let m = conv_reshape([4, 3, 2, 1], &[0.5; 24]).unwrap();
        assert_eq!(m.shape(), (4, 6));

        let m = conv_reshape([2, 1, 1, 1], &[7.0, -3.0]).unwrap();
        assert_eq!(m, Matrix::from_rows(&[[7.0], [-3.0]]).unwrap());

        let flat: Vec<f64> = (0..24).map(f64::from).collect();
        let m = conv_reshape([2, 3, 2, 2], &flat).unwrap();
        // out 1, in 2, kh 0, kw 1 -> column 2*4 + 0*2 + 1
        assert_eq!(m[(1, 9)], flat[12 + 9]);
        assert_eq!(conv_flatten(&m), flat);

        assert!(conv_reshape([2, 2, 2, 2], &[0.0; 15]).is_err());
    }
}
