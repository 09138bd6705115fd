//! Minimal feed-forward network stack: forward pass, exact reverse-mode
//! gradients, Adam, and target-network soft updates. No external ML
//! dependency.
//!
//! Training storage is 32-bit; the same code instantiated at `f64` is the
//! verification mode used by the finite-difference gradient checks.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Read;
use std::path::Path;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}
impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

/// Convert an f64 constant into the working scalar type.
fn cast<T: Scalar>(v: f64) -> T {
    <T as num_traits::FromPrimitive>::from_f64(v).unwrap()
}

/// Head activation; hidden layers are always ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    /// Actor head: components bounded to [-1, 1].
    Tanh,
    /// Critic head: raw value estimate.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    /// Row-major `[out_dim x in_dim]`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct AdamBuf<T> {
    m_w: Vec<T>,
    v_w: Vec<T>,
    m_b: Vec<T>,
    v_b: Vec<T>,
}

/// Feed-forward network plus its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    output_activation: OutputActivation,
    adam: Vec<AdamBuf<T>>,
    adam_step_count: u64,
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub d_weights: Vec<Vec<T>>,
    pub d_bias: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Self {
            d_weights: net
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.weights.len()])
                .collect(),
            d_bias: net.layers.iter().map(|l| vec![T::zero(); l.bias.len()]).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.d_weights
            .iter()
            .chain(self.d_bias.iter())
            .all(|v| v.iter().all(|g| g.is_finite()))
    }

    /// In-place scale, used to turn batch sums into means.
    pub fn scale(&mut self, factor: T) {
        for v in self.d_weights.iter_mut().chain(self.d_bias.iter_mut()) {
            for g in v.iter_mut() {
                *g = *g * factor;
            }
        }
    }
}

impl<T: Scalar> Mlp<T> {
    /// Seeded init: weights uniform in +/- 1/sqrt(fan_in), biases zero.
    pub fn new(topology: &[usize], output_activation: OutputActivation, seed: u64) -> Result<Self> {
        if topology.len() < 2 {
            return Err(Error::Config(format!(
                "topology needs at least input and output widths, got {topology:?}"
            )));
        }
        if topology.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("zero-width layer in {topology:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for w in topology.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            let bound = 1.0 / (in_dim as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| cast::<T>(rng.gen_range(-bound..bound)))
                .collect();
            layers.push(Layer {
                weights,
                bias: vec![T::zero(); out_dim],
                in_dim,
                out_dim,
            });
        }
        let adam = layers
            .iter()
            .map(|l| AdamBuf {
                m_w: vec![T::zero(); l.weights.len()],
                v_w: vec![T::zero(); l.weights.len()],
                m_b: vec![T::zero(); l.bias.len()],
                v_b: vec![T::zero(); l.bias.len()],
            })
            .collect();
        Ok(Self {
            layers,
            output_activation,
            adam,
            adam_step_count: 0,
        })
    }

    pub fn topology(&self) -> Vec<usize> {
        let mut t = vec![self.layers[0].in_dim];
        t.extend(self.layers.iter().map(|l| l.out_dim));
        t
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn adam_step_count(&self) -> u64 {
        self.adam_step_count
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat view of all parameters in layer order, weights then bias.
    pub fn param(&self, mut idx: usize) -> T {
        for l in &self.layers {
            if idx < l.weights.len() {
                return l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param_mut(&mut self, mut idx: usize) -> &mut T {
        for l in self.layers.iter_mut() {
            if idx < l.weights.len() {
                return &mut l.weights[idx];
            }
            idx -= l.weights.len();
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn grad_at(grads: &Gradients<T>, mut idx: usize) -> T {
        for (dw, db) in grads.d_weights.iter().zip(grads.d_bias.iter()) {
            if idx < dw.len() {
                return dw[idx];
            }
            idx -= dw.len();
            if idx < db.len() {
                return db[idx];
            }
            idx -= db.len();
        }
        panic!("gradient index out of range");
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let out = self.forward_batch(input, 1)?;
        Ok(out)
    }

    /// Batched forward: `x` is `batch` rows of `input_dim` laid out
    /// contiguously; returns `batch * output_dim` values.
    pub fn forward_batch(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.check_input(x, batch)?;
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            a = linear_forward(layer, &a, batch);
            if li < last {
                for v in a.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            } else if self.output_activation == OutputActivation::Tanh {
                for v in a.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
        Ok(a)
    }

    /// Exact reverse-mode gradients for one input. `upstream` is
    /// dLoss/d(output). Returns parameter gradients and the input gradient.
    pub fn backward(&self, input: &[T], upstream: &[T]) -> Result<(Gradients<T>, Vec<T>)> {
        self.backward_batch(input, upstream, 1)
    }

    /// Batched backward; gradients are summed over the batch rows.
    /// The returned input gradient has `batch * input_dim` entries.
    pub fn backward_batch(
        &self,
        x: &[T],
        upstream: &[T],
        batch: usize,
    ) -> Result<(Gradients<T>, Vec<T>)> {
        self.check_input(x, batch)?;
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient: expected {} values, got {}",
                batch * self.output_dim(),
                upstream.len()
            )));
        }

        // forward, keeping each layer's input and preactivation
        let last = self.layers.len() - 1;
        let mut inputs: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut preacts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            inputs.push(a.clone());
            let z = linear_forward(layer, &a, batch);
            preacts.push(z.clone());
            a = z;
            if li < last {
                for v in a.iter_mut() {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            } else if self.output_activation == OutputActivation::Tanh {
                for v in a.iter_mut() {
                    *v = v.tanh();
                }
            }
        }

        let mut grads = Gradients::zeros_like(self);
        // head delta
        let mut delta: Vec<T> = match self.output_activation {
            OutputActivation::Identity => upstream.to_vec(),
            OutputActivation::Tanh => upstream
                .iter()
                .zip(preacts[last].iter())
                .map(|(g, z)| {
                    let t = z.tanh();
                    *g * (T::one() - t * t)
                })
                .collect(),
        };

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let a_in = &inputs[li];
            let dw = &mut grads.d_weights[li];
            let db = &mut grads.d_bias[li];
            for b in 0..batch {
                let drow = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
                let arow = &a_in[b * layer.in_dim..(b + 1) * layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = drow[o];
                    db[o] = db[o] + d;
                    let wrow = &mut dw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (w, ai) in wrow.iter_mut().zip(arow.iter()) {
                        *w = *w + d * *ai;
                    }
                }
            }
            // propagate: d_in = W^T delta, gated by this layer's input relu
            let mut d_in = vec![T::zero(); batch * layer.in_dim];
            for b in 0..batch {
                let drow = &delta[b * layer.out_dim..(b + 1) * layer.out_dim];
                let din_row = &mut d_in[b * layer.in_dim..(b + 1) * layer.in_dim];
                for o in 0..layer.out_dim {
                    let d = drow[o];
                    let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (di, w) in din_row.iter_mut().zip(wrow.iter()) {
                        *di = *di + d * *w;
                    }
                }
            }
            if li > 0 {
                // relu gate uses the previous layer's preactivation
                let z_prev = &preacts[li - 1];
                for (di, z) in d_in.iter_mut().zip(z_prev.iter()) {
                    if *z <= T::zero() {
                        *di = T::zero();
                    }
                }
            }
            delta = d_in;
        }
        Ok((grads, delta))
    }

    /// Standard Adam update. Rejects non-finite gradients without touching
    /// any parameter.
    pub fn adam_step(&mut self, grads: &Gradients<T>, lr: T) -> Result<()> {
        if grads.d_weights.len() != self.layers.len() {
            return Err(Error::Shape("gradient/layer count mismatch".into()));
        }
        for (li, layer) in self.layers.iter().enumerate() {
            if grads.d_weights[li].len() != layer.weights.len()
                || grads.d_bias[li].len() != layer.bias.len()
            {
                return Err(Error::Shape(format!("gradient shape mismatch at layer {li}")));
            }
        }
        if !grads.all_finite() {
            return Err(Error::UpdateRejected("non-finite gradient".into()));
        }

        self.adam_step_count += 1;
        let t = self.adam_step_count as i32;
        let b1 = cast::<T>(ADAM_BETA1);
        let b2 = cast::<T>(ADAM_BETA2);
        let eps = cast::<T>(ADAM_EPS);
        let corr1 = T::one() - b1.powi(t);
        let corr2 = T::one() - b2.powi(t);

        for (li, layer) in self.layers.iter_mut().enumerate() {
            let buf = &mut self.adam[li];
            adam_apply(
                &mut layer.weights,
                &grads.d_weights[li],
                &mut buf.m_w,
                &mut buf.v_w,
                lr,
                b1,
                b2,
                eps,
                corr1,
                corr2,
            );
            adam_apply(
                &mut layer.bias,
                &grads.d_bias[li],
                &mut buf.m_b,
                &mut buf.v_b,
                lr,
                b1,
                b2,
                eps,
                corr1,
                corr2,
            );
        }
        Ok(())
    }

    /// target' = (1 - tau) * target + tau * online, elementwise.
    pub fn soft_update_from(&mut self, online: &Mlp<T>, tau: T) -> Result<()> {
        if self.topology() != online.topology() {
            return Err(Error::Shape(format!(
                "soft update topology mismatch: {:?} vs {:?}",
                self.topology(),
                online.topology()
            )));
        }
        let keep = T::one() - tau;
        for (tl, ol) in self.layers.iter_mut().zip(online.layers.iter()) {
            for (tw, ow) in tl.weights.iter_mut().zip(ol.weights.iter()) {
                *tw = keep * *tw + tau * *ow;
            }
            for (tb, ob) in tl.bias.iter_mut().zip(ol.bias.iter()) {
                *tb = keep * *tb + tau * *ob;
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[T], batch: usize) -> Result<()> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(Error::Shape(format!(
                "input: expected {} x {} values, got {}",
                batch,
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }
}

fn linear_forward<T: Scalar>(layer: &Layer<T>, x: &[T], batch: usize) -> Vec<T> {
    let mut y = vec![T::zero(); batch * layer.out_dim];
    for b in 0..batch {
        let xrow = &x[b * layer.in_dim..(b + 1) * layer.in_dim];
        let yrow = &mut y[b * layer.out_dim..(b + 1) * layer.out_dim];
        for o in 0..layer.out_dim {
            let wrow = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            let mut acc = layer.bias[o];
            for (w, xi) in wrow.iter().zip(xrow.iter()) {
                acc = acc + *w * *xi;
            }
            yrow[o] = acc;
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn adam_apply<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: T,
    b1: T,
    b2: T,
    eps: T,
    corr1: T,
    corr2: T,
) {
    let one = T::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

impl Mlp<f32> {
    /// 64-bit copy for the verification mode (same weights, widened).
    pub fn widen(&self) -> Mlp<f64> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: l.weights.iter().map(|w| *w as f64).collect(),
                    bias: l.bias.iter().map(|b| *b as f64).collect(),
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                })
                .collect(),
            output_activation: self.output_activation,
            adam: self
                .adam
                .iter()
                .map(|a| AdamBuf {
                    m_w: a.m_w.iter().map(|v| *v as f64).collect(),
                    v_w: a.v_w.iter().map(|v| *v as f64).collect(),
                    m_b: a.m_b.iter().map(|v| *v as f64).collect(),
                    v_b: a.v_b.iter().map(|v| *v as f64).collect(),
                })
                .collect(),
            adam_step_count: self.adam_step_count,
        }
    }

    /// Versioned binary checkpoint: magic `MLP1`, length-prefixed topology
    /// (u32 little-endian), then parameters in layer order (weights
    /// row-major, then bias), little-endian f32. Optimizer state is not
    /// persisted.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(b"MLP1");
        let topo = self.topology();
        buf.extend_from_slice(&(topo.len() as u32).to_le_bytes());
        for w in &topo {
            buf.extend_from_slice(&(*w as u32).to_le_bytes());
        }
        for layer in &self.layers {
            for w in &layer.weights {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            for b in &layer.bias {
                buf.extend_from_slice(&b.to_le_bytes());
            }
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Load a checkpoint. The head activation is not part of the format
    /// and must be supplied by the caller.
    pub fn load<P: AsRef<Path>>(path: P, output_activation: OutputActivation) -> Result<Mlp<f32>> {
        let mut file = std::fs::File::open(path.as_ref())?;
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short for magic".into()))?;
        if &magic != b"MLP1" {
            return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
        }
        let mut u32buf = [0u8; 4];
        file.read_exact(&mut u32buf)
            .map_err(|_| Error::Checkpoint("missing topology length".into()))?;
        let n = u32::from_le_bytes(u32buf) as usize;
        if n < 2 || n > 64 {
            return Err(Error::Checkpoint(format!("implausible topology length {n}")));
        }
        let mut topo = Vec::with_capacity(n);
        for _ in 0..n {
            file.read_exact(&mut u32buf)
                .map_err(|_| Error::Checkpoint("truncated topology".into()))?;
            topo.push(u32::from_le_bytes(u32buf) as usize);
        }
        let mut net = Mlp::<f32>::new(&topo, output_activation, 0)?;
        for layer in net.layers.iter_mut() {
            for w in layer.weights.iter_mut() {
                file.read_exact(&mut u32buf)
                    .map_err(|_| Error::Checkpoint("truncated weights".into()))?;
                *w = f32::from_le_bytes(u32buf);
            }
            for b in layer.bias.iter_mut() {
                file.read_exact(&mut u32buf)
                    .map_err(|_| Error::Checkpoint("truncated bias".into()))?;
                *b = f32::from_le_bytes(u32buf);
            }
        }
        let mut rest = Vec::new();
        file.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        // fresh optimizer state
        net.adam_step_count = 0;
        Ok(net)
    }
}

/// Result of one finite-difference gradient check run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub topology: Vec<usize>,
    pub cases: usize,
    pub coords_checked: usize,
    pub coords_skipped_kink: usize,
    pub max_rel_err: f64,
}

/// Central finite-difference check of `backward` in 64-bit mode.
///
/// Central differences are only a derivative oracle when the function is
/// smooth on the +/-h interval; coordinates where the perturbation flips
/// the sign of any hidden preactivation (a ReLU kink inside the interval)
/// are skipped and counted.
pub fn gradient_check(
    topology: &[usize],
    cases: usize,
    max_coords_per_case: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let h = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_err = 0.0f64;
    let mut checked = 0usize;
    let mut skipped = 0usize;

    for case in 0..cases {
        let net = Mlp::<f64>::new(topology, OutputActivation::Identity, seed ^ (case as u64 + 1))?;
        let input: Vec<f64> = (0..topology[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // fixed random linear loss so the upstream gradient is constant
        let loss_w: Vec<f64> = (0..*topology.last().unwrap())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let (grads, _) = net.backward(&input, &loss_w)?;

        let n = net.num_params();
        let coords: Vec<usize> = if n <= max_coords_per_case {
            (0..n).collect()
        } else {
            (0..max_coords_per_case).map(|_| rng.gen_range(0..n)).collect()
        };

        for idx in coords {
            let mut plus = net.clone();
            let p = plus.param_mut(idx);
            *p = *p + h;
            let mut minus = net.clone();
            let p = minus.param_mut(idx);
            *p = *p - h;

            let (y_plus, signs_plus) = forward_with_signs(&plus, &input)?;
            let (y_minus, signs_minus) = forward_with_signs(&minus, &input)?;
            if signs_plus != signs_minus {
                skipped += 1;
                continue;
            }
            let f_plus: f64 = y_plus.iter().zip(&loss_w).map(|(y, w)| y * w).sum();
            let f_minus: f64 = y_minus.iter().zip(&loss_w).map(|(y, w)| y * w).sum();
            let numeric = (f_plus - f_minus) / (2.0 * h);
            let analytic = Mlp::grad_at(&grads, idx);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            if rel > max_rel_err {
                max_rel_err = rel;
            }
            checked += 1;
        }
    }

    Ok(GradCheckReport {
        topology: topology.to_vec(),
        cases,
        coords_checked: checked,
        coords_skipped_kink: skipped,
        max_rel_err,
    })
}

fn forward_with_signs(net: &Mlp<f64>, input: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut signs = Vec::new();
    let mut a = input.to_vec();
    let last = net.layers.len() - 1;
    for (li, layer) in net.layers.iter().enumerate() {
        let z = linear_forward(layer, &a, 1);
        if li < last {
            signs.extend(z.iter().map(|v| *v > 0.0));
            a = z.into_iter().map(|v| v.max(0.0)).collect();
        } else {
            a = match net.output_activation {
                OutputActivation::Identity => z,
                OutputActivation::Tanh => z.into_iter().map(|v| v.tanh()).collect(),
            };
        }
    }
    Ok((a, signs))
}
