//! Fully connected ranking network with a hand-written backward pass and SGD
//! with momentum.
//!
//! Hidden layers apply a rectifier followed by inverted dropout (train mode
//! only). The output layer is a plain affine map to one unbounded score.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::StreamId;

pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    widths: Vec<usize>,
    dropout: f64,
}

impl LayerSpec {
    /// `widths` runs from the input dimension to the final width of 1.
    pub fn new(widths: Vec<usize>, dropout: f64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidLayerSpec("need at least input and output widths".into()));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidLayerSpec("widths must be positive".into()));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::InvalidLayerSpec("last width must be 1".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidLayerSpec(format!("dropout {dropout} outside [0, 1)")));
        }
        Ok(LayerSpec { widths, dropout })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn with_dropout(mut self, dropout: f64) -> Result<Self> {
        self.dropout = dropout;
        LayerSpec::new(self.widths, self.dropout)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// The fixed head for each stream, on top of its precomputed feature.
pub fn stock_head(stream: StreamId) -> LayerSpec {
    let widths = match stream {
        StreamId::Temporal => vec![512, 512, 128, 1],
        StreamId::Spatial => vec![9216, 4096, 1024, 512, 256, 128, 64, 1],
        StreamId::Audio => vec![256, 64, 1],
    };
    LayerSpec::new(widths, DEFAULT_DROPOUT).expect("stock heads are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingNet {
    spec: LayerSpec,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    seed: u64,
    version: u64,
}

/// Activations recorded by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    train: bool,
    /// Input to each layer (post-dropout for hidden layers).
    inputs: Vec<Array2<f64>>,
    /// Inverted-dropout scale per hidden layer, if dropout was active.
    masks: Vec<Option<Array2<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &RankingNet) -> Self {
        Gradients {
            weights: net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }
}

impl RankingNet {
    /// Fan-in scaled uniform weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn init(spec: LayerSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(spec.n_layers());
        let mut biases = Vec::with_capacity(spec.n_layers());
        for pair in spec.widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..bound));
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        RankingNet {
            spec,
            weights,
            biases,
            seed,
            version: 0,
        }
    }

    /// Builds a net from explicit parameters.
    pub fn from_parts(spec: LayerSpec, weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>, seed: u64) -> Result<Self> {
        if weights.len() != spec.n_layers() || biases.len() != spec.n_layers() {
            return Err(Error::InvalidLayerSpec("parameter count does not match spec".into()));
        }
        for (k, pair) in spec.widths.windows(2).enumerate() {
            if weights[k].dim() != (pair[1], pair[0]) || biases[k].len() != pair[1] {
                return Err(Error::InvalidLayerSpec(format!("layer {k} has the wrong shape")));
            }
        }
        let net = RankingNet {
            spec,
            weights,
            biases,
            seed,
            version: 0,
        };
        if !net.is_finite() {
            return Err(Error::InvalidLayerSpec("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Mutable access to parameters. Invalidates outstanding caches.
    pub fn params_mut(&mut self) -> (&mut [Array2<f64>], &mut [Array1<f64>]) {
        self.version += 1;
        (&mut self.weights, &mut self.biases)
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Forward pass over a batch of row vectors.
    pub fn forward_batch(
        &self,
        x: ArrayView2<'_, f64>,
        mode: Mode,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<(Array1<f64>, ForwardCache)> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                actual: x.ncols(),
            });
        }
        let dropout = match mode {
            Mode::Train if self.spec.dropout > 0.0 => Some(self.spec.dropout),
            _ => None,
        };
        if dropout.is_some() && rng.is_none() {
            return Err(Error::MissingRng);
        }
        let train = mode == Mode::Train;
        let last = self.spec.n_layers() - 1;
        let mut inputs = Vec::with_capacity(self.spec.n_layers());
        let mut masks = Vec::with_capacity(last);
        let mut a = x.to_owned();
        for k in 0..=last {
            let mut z = a.dot(&self.weights[k].t());
            z += &self.biases[k];
            if train {
                inputs.push(a);
            }
            if k == last {
                a = z;
                break;
            }
            z.mapv_inplace(|v| v.max(0.0));
            if let (Some(rate), Some(rng)) = (dropout, rng.as_deref_mut()) {
                let keep = 1.0 - rate;
                let scale = 1.0 / keep;
                let mask = Array2::from_shape_simple_fn(z.raw_dim(), || {
                    if rng.random::<f64>() < keep {
                        scale
                    } else {
                        0.0
                    }
                });
                z *= &mask;
                masks.push(Some(mask));
            } else if train {
                masks.push(None);
            }
            a = z;
        }
        let scores = a.index_axis_move(Axis(1), 0);
        Ok((
            scores,
            ForwardCache {
                version: self.version,
                train,
                inputs,
                masks,
            },
        ))
    }

    /// Forward pass for a single feature vector.
    pub fn forward(&self, x: &[f64], mode: Mode, rng: Option<&mut dyn RngCore>) -> Result<(f64, ForwardCache)> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        let (scores, cache) = self.forward_batch(view, mode, rng)?;
        Ok((scores[0], cache))
    }

    /// Eval-mode scores for a batch of rows.
    pub fn score_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.forward_batch(x, Mode::Eval, None).map(|(s, _)| s)
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.forward(x, Mode::Eval, None).map(|(s, _)| s)
    }

    /// Gradients of a loss with respect to every parameter, given the loss
    /// derivative for each score of the cached batch.
    pub fn backward_batch(&self, cache: &ForwardCache, d_scores: ArrayView1<'_, f64>) -> Result<Gradients> {
        if !cache.train || cache.version != self.version || cache.inputs.len() != self.spec.n_layers() {
            return Err(Error::StaleCache);
        }
        let n = cache.inputs[0].nrows();
        if d_scores.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: d_scores.len(),
            });
        }
        let layers = self.spec.n_layers();
        let mut grad_w = vec![Array2::zeros((0, 0)); layers];
        let mut grad_b = vec![Array1::zeros(0); layers];
        let mut dz = d_scores.to_owned().insert_axis(Axis(1));
        for k in (0..layers).rev() {
            let a = &cache.inputs[k];
            grad_w[k] = dz.t().dot(a);
            grad_b[k] = dz.sum_axis(Axis(0));
            if k == 0 {
                break;
            }
            let mut da = dz.dot(&self.weights[k]);
            match &cache.masks[k - 1] {
                Some(mask) => Zip::from(&mut da).and(mask).and(a).for_each(|d, &m, &act| {
                    *d = if act > 0.0 { *d * m } else { 0.0 };
                }),
                None => Zip::from(&mut da).and(a).for_each(|d, &act| {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                }),
            }
            dz = da;
        }
        Ok(Gradients {
            weights: grad_w,
            biases: grad_b,
        })
    }

    pub fn backward(&self, cache: &ForwardCache, d_score: f64) -> Result<Gradients> {
        self.backward_batch(cache, ArrayView1::from(&[d_score]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity_w: Vec<Array2<f64>>,
    velocity_b: Vec<Array1<f64>>,
}

impl OptimizerState {
    pub fn new(net: &RankingNet, lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        let zeros = Gradients::zeros_like(net);
        Self::from_parts(lr, momentum, weight_decay, zeros.weights, zeros.biases)
    }

    pub fn from_parts(
        lr: f64,
        momentum: f64,
        weight_decay: f64,
        velocity_w: Vec<Array2<f64>>,
        velocity_b: Vec<Array1<f64>>,
    ) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {lr} must be >= 0")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidConfig(format!("momentum {momentum} outside [0, 1)")));
        }
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!("weight decay {weight_decay} must be >= 0")));
        }
        Ok(OptimizerState {
            lr,
            momentum,
            weight_decay,
            velocity_w,
            velocity_b,
        })
    }

    pub fn velocity_w(&self) -> &[Array2<f64>] {
        &self.velocity_w
    }

    pub fn velocity_b(&self) -> &[Array1<f64>] {
        &self.velocity_b
    }

    fn check_shapes(&self, net: &RankingNet, grads: &Gradients) -> Result<()> {
        let ok = grads.weights.len() == net.weights.len()
            && grads.biases.len() == net.biases.len()
            && self.velocity_w.len() == net.weights.len()
            && self.velocity_b.len() == net.biases.len()
            && net
                .weights
                .iter()
                .zip(&grads.weights)
                .zip(&self.velocity_w)
                .all(|((w, g), v)| w.dim() == g.dim() && w.dim() == v.dim())
            && net
                .biases
                .iter()
                .zip(&grads.biases)
                .zip(&self.velocity_b)
                .all(|((b, g), v)| b.len() == g.len() && b.len() == v.len());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("gradient/velocity shapes do not match the net".into()))
        }
    }
}

/// `v <- momentum * v + g + weight_decay * w; w <- w - lr * v`
pub fn sgd_step(net: &mut RankingNet, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    state.check_shapes(net, grads)?;
    let (lr, mu, wd) = (state.lr, state.momentum, state.weight_decay);
    let (weights, biases) = net.params_mut();
    for ((w, g), v) in weights.iter_mut().zip(&grads.weights).zip(&mut state.velocity_w) {
        Zip::from(w).and(g).and(v).for_each(|w, &g, v| {
            *v = mu * *v + g + wd * *w;
            *w -= lr * *v;
        });
    }
    for ((b, g), v) in biases.iter_mut().zip(&grads.biases).zip(&mut state.velocity_b) {
        Zip::from(b).and(g).and(v).for_each(|b, &g, v| {
            *v = mu * *v + g + wd * *b;
            *b -= lr * *v;
        });
    }
    Ok(())
}
