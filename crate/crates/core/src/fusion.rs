//! Layer-wise weight alignment by optimal transport, followed by weight
//! averaging.
//!
//! [`align`] moves `model_a` into the unit ordering of `model_b`, which stays
//! fixed. For each layer `l` in order:
//!
//! 1. the incoming side is realigned with the previous layer's map,
//!    `Ŵ = W_a · N^{l−1}` (`N⁰ = I`, input features are shared);
//! 2. the cost is the Euclidean distance between rows of `Ŵ` and rows of
//!    `W_b`;
//! 3. a transport map `T^l` with uniform marginals minimizes `⟨T, D⟩_F`;
//! 4. the outgoing side is realigned, `W̃ = (N^l)ᵀ · Ŵ` and `b̃ = (N^l)ᵀ · b`.
//!
//! In [`Scaling::Normalized`] mode `N = m·T`, a permutation matrix for hard
//! maps, so aligning a model with itself is the identity. [`Scaling::Literal`]
//! uses `N = T/m`, which shrinks every layer by roughly `1/m²` and exists
//! only for comparison.

use crate::error::{Error, Result};
use crate::model::{finetune, interpolate, Checkpoint, Dataset, LayerWeights, TrainConfig};
use crate::ot::{ot_objective, OtMethod, TransportMap};
use crate::tensor::{matmul, row_distance_matrix_with, transpose, Distance, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    #[default]
    Normalized,
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentOptions {
    pub solver: OtMethod,
    /// Compute layer costs on input-aligned rows `Ŵ` instead of raw `W_a`.
    pub cost_on_aligned_inputs: bool,
    pub scaling: Scaling,
    /// Weight of `model_b` when averaging.
    pub lambda: f64,
    /// Keep the output layer's map at `I/m` so logits keep their labels.
    pub fix_last_layer: bool,
    /// Append each unit's bias to its weight row before computing costs.
    pub bias_in_cost: bool,
    pub distance: Distance,
}

impl Default for AlignmentOptions {
    fn default() -> Self {
        Self {
            solver: OtMethod::Exact,
            cost_on_aligned_inputs: true,
            scaling: Scaling::Normalized,
            lambda: 0.5,
            fix_last_layer: true,
            bias_in_cost: false,
            distance: Distance::Euclidean,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub aligned: Checkpoint,
    /// One map per layer, side length equal to the layer's `out_dim`.
    pub maps: Vec<TransportMap>,
    /// Per-layer transport cost `⟨T^l, D^l⟩_F`.
    pub objectives: Vec<f64>,
    /// False for a layer whose Sinkhorn run hit `max_iter`.
    pub converged: Vec<bool>,
}

/// How a layer's map acts on weights.
enum UnitMap {
    Identity,
    /// Unit `i` of A moves to slot `perm[i]`.
    Permutation(Vec<usize>),
    Dense(Matrix),
}

impl UnitMap {
    fn from_map(map: &TransportMap, scaling: Scaling) -> Self {
        let m = map.side() as f64;
        match scaling {
            Scaling::Normalized => match map.as_permutation() {
                Some(p) if p.iter().enumerate().all(|(i, &j)| i == j) => UnitMap::Identity,
                Some(p) => UnitMap::Permutation(p),
                None => UnitMap::Dense(map.normalized()),
            },
            Scaling::Literal => UnitMap::Dense(map.matrix().scale(1.0 / m)),
        }
    }

    /// `W · N`: realigns the columns (incoming side).
    fn apply_input(&self, w: &Matrix) -> Result<Matrix> {
        match self {
            UnitMap::Identity => Ok(w.clone()),
            UnitMap::Permutation(p) => {
                let mut out = Matrix::zeros(w.rows(), w.cols());
                for r in 0..w.rows() {
                    let src = w.row(r);
                    let dst = out.row_mut(r);
                    for (i, &j) in p.iter().enumerate() {
                        dst[j] = src[i];
                    }
                }
                Ok(out)
            }
            UnitMap::Dense(n) => matmul(w, n),
        }
    }

    /// `Nᵀ · W` and `Nᵀ · b`: realigns the rows (outgoing side).
    fn apply_output(&self, w: &Matrix, b: &[f64]) -> Result<(Matrix, Vec<f64>)> {
        match self {
            UnitMap::Identity => Ok((w.clone(), b.to_vec())),
            UnitMap::Permutation(p) => {
                let mut out = Matrix::zeros(w.rows(), w.cols());
                let mut bias = vec![0.0; b.len()];
                for (i, &j) in p.iter().enumerate() {
                    out.row_mut(j).copy_from_slice(w.row(i));
                    bias[j] = b[i];
                }
                Ok((out, bias))
            }
            UnitMap::Dense(n) => {
                let nt = transpose(n);
                let bias = crate::tensor::mat_vec(&nt, b)?;
                Ok((matmul(&nt, w)?, bias))
            }
        }
    }
}

/// Aligns `model_a` onto `model_b` layer by layer. The layers are processed
/// strictly in order since each map feeds the next layer's input side.
pub fn align(
    model_a: &Checkpoint,
    model_b: &Checkpoint,
    opts: &AlignmentOptions,
) -> Result<AlignmentResult> {
    model_a.ensure_same_specs(model_b)?;
    let n_layers = model_a.num_layers();
    let mut carry = UnitMap::Identity;
    let mut layers = Vec::with_capacity(n_layers);
    let mut maps = Vec::with_capacity(n_layers);
    let mut objectives = Vec::with_capacity(n_layers);
    let mut converged = Vec::with_capacity(n_layers);

    for (l, (la, lb)) in model_a.layers().iter().zip(model_b.layers()).enumerate() {
        let w_hat = carry.apply_input(&la.w)?;
        let cost_rows_a = if opts.cost_on_aligned_inputs { &w_hat } else { &la.w };
        let cost = if opts.bias_in_cost {
            row_distance_matrix_with(
                &cost_rows_a.with_column(&la.b)?,
                &lb.w.with_column(&lb.b)?,
                opts.distance,
            )?
        } else {
            row_distance_matrix_with(cost_rows_a, &lb.w, opts.distance)?
        };

        let m = cost.rows();
        let (map, objective, ok) = if opts.fix_last_layer && l + 1 == n_layers {
            let map = TransportMap::identity(m);
            let obj = ot_objective(&map, &cost)?;
            (map, obj, true)
        } else {
            let sol = opts.solver.solve(&cost)?;
            (sol.map, sol.objective, sol.converged)
        };

        let unit_map = UnitMap::from_map(&map, opts.scaling);
        let (w, b) = unit_map.apply_output(&w_hat, &la.b)?;
        layers.push(LayerWeights { w, b });
        maps.push(map);
        objectives.push(objective);
        converged.push(ok);
        carry = unit_map;
    }

    let mut meta = model_a.meta.clone();
    meta.tag = format!("{} aligned", model_a.meta.tag).trim().to_string();
    let aligned = Checkpoint::new(model_a.specs().to_vec(), layers, meta)?;
    Ok(AlignmentResult {
        aligned,
        maps,
        objectives,
        converged,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// `(1 − lambda)·W̃_a + lambda·W_b` for every weight and bias.
pub fn fuse(aligned_a: &Checkpoint, model_b: &Checkpoint, lambda: f64) -> Result<Checkpoint> {
    check_lambda(lambda)?;
    let mut out = interpolate(aligned_a, model_b, lambda)?;
    out.meta.tag = "fused".into();
    out.meta.training_epochs = 0;
    Ok(out)
}

/// Elementwise average with no alignment.
pub fn direct_average(model_a: &Checkpoint, model_b: &Checkpoint, lambda: f64) -> Result<Checkpoint> {
    check_lambda(lambda)?;
    let mut out = interpolate(model_a, model_b, lambda)?;
    out.meta.tag = "direct-average".into();
    out.meta.training_epochs = 0;
    Ok(out)
}

/// Align, average with `opts.lambda`, then fine-tune on `data`.
pub fn otf_pipeline(
    model_a: &Checkpoint,
    model_b: &Checkpoint,
    opts: &AlignmentOptions,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    let aligned = align(model_a, model_b, opts)?;
    let fused = fuse(&aligned.aligned, model_b, opts.lambda)?;
    finetune(&fused, data, cfg)
}
