//! Dense feed-forward networks with reverse-mode gradients, and Adam.
//!
//! Parameters live in one flat vector (per layer: the `out x in` row-major
//! weight matrix followed by the bias), so optimizers, target smoothing and
//! gradient checks all work on plain slices.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{gemm, Matrix};
use crate::{Error, Result};

/// Format tag written into every serialized network.
pub const NETWORK_FORMAT: &str = "sili-dense-v1";

/// Serialized with the [`NetworkFile`] layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetworkFile", try_from = "NetworkFile")]
pub struct DenseNet {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// On-disk network layout: a format tag and one tensor per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub format: String,
    pub layers: Vec<LayerTensor>,
}

/// Weights are row-major with `shape = [out, in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerTensor {
    pub shape: [usize; 2],
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<DenseNet> for NetworkFile {
    fn from(net: DenseNet) -> Self {
        let layers = (0..net.num_layers())
            .map(|l| LayerTensor {
                shape: [net.sizes[l + 1], net.sizes[l]],
                weights: net.weights(l).to_vec(),
                bias: net.bias(l).to_vec(),
            })
            .collect();
        NetworkFile { format: String::from(NETWORK_FORMAT), layers }
    }
}

impl TryFrom<NetworkFile> for DenseNet {
    type Error = Error;

    fn try_from(file: NetworkFile) -> Result<Self> {
        if file.format != NETWORK_FORMAT {
            return Err(Error::invalid(format!("unsupported network format {:?}", file.format)));
        }
        let mut layers = Vec::with_capacity(file.layers.len());
        for t in file.layers {
            let [out, inp] = t.shape;
            if out == 0 || inp == 0 || t.weights.len() != out * inp {
                return Err(Error::invalid(format!("layer shape {:?} does not match {} weights", t.shape, t.weights.len())));
            }
            layers.push((Matrix::from_vec(out, inp, t.weights), t.bias));
        }
        DenseNet::from_layers(&layers)
    }
}

/// Activations recorded by [`DenseNet::forward_tape`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<Matrix>,
}

impl Tape {
    pub fn input(&self) -> &Matrix {
        &self.acts[0]
    }

    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("tape has at least the input")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl DenseNet {
    /// ReLU hidden layers, identity output. Weights and biases are drawn
    /// uniformly from `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / libm::sqrt(w[0] as f64);
            let n = w[0] * w[1] + w[1];
            for p in &mut net.params[off..off + n] {
                *p = rng.gen_range(-bound..bound);
            }
            off += n;
        }
        Ok(net)
    }

    /// `input -> hidden... -> output`.
    pub fn mlp<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::new(&sizes, rng)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        Ok(DenseNet { sizes: sizes.to_vec(), params: vec![0.0; param_count(sizes)] })
    }

    /// Builds a network from explicit `(weights [out x in], bias)` layers.
    pub fn from_layers(layers: &[(Matrix, Vec<f64>)]) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::invalid("no layers"))?;
        let mut sizes = vec![first.0.cols()];
        let mut params = Vec::new();
        for (w, b) in layers {
            if w.cols() != *sizes.last().unwrap() || b.len() != w.rows() {
                return Err(Error::invalid("inconsistent layer shapes"));
            }
            sizes.push(w.rows());
            params.extend_from_slice(w.as_slice());
            params.extend_from_slice(b);
        }
        let net = DenseNet { sizes, params };
        if !net.all_finite() {
            return Err(Error::invalid("non-finite parameters"));
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    /// Row-major `out x in` weights of `layer`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let off = self.offset(layer);
        &self.params[off..off + self.sizes[layer] * self.sizes[layer + 1]]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let off = self.offset(layer) + self.sizes[layer] * self.sizes[layer + 1];
        &self.params[off..off + self.sizes[layer + 1]]
    }

    pub fn layer(&self, layer: usize) -> (Matrix, Vec<f64>) {
        (
            Matrix::from_vec(self.sizes[layer + 1], self.sizes[layer], self.weights(layer).to_vec()),
            self.bias(layer).to_vec(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&Matrix::row_vector(input))?.into_vec())
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<Matrix> {
        self.check_input(input)?;
        let mut x = input.clone();
        for l in 0..self.num_layers() {
            x = self.layer_forward(l, &x);
        }
        Ok(x)
    }

    pub fn forward_tape(&self, input: Matrix) -> Result<Tape> {
        self.check_input(&input)?;
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input);
        for l in 0..self.num_layers() {
            let y = self.layer_forward(l, acts.last().unwrap());
            acts.push(y);
        }
        Ok(Tape { acts })
    }

    fn check_input(&self, input: &Matrix) -> Result<()> {
        if input.cols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects input dim {}, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, x: &Matrix) -> Matrix {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let rows = x.rows();
        let mut y = Matrix::zeros(rows, n_out);
        let bias = self.bias(l);
        for r in 0..rows {
            y.row_mut(r).copy_from_slice(bias);
        }
        // y = x * W^T, W is out x in row-major so W^T has strides (1, in).
        gemm(
            rows,
            n_in,
            n_out,
            1.0,
            x.as_slice(),
            (n_in as isize, 1),
            self.weights(l),
            (1, n_in as isize),
            1.0,
            y.as_mut_slice(),
            (n_out as isize, 1),
        );
        if l + 1 < self.num_layers() {
            for v in y.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        y
    }

    /// Reverse-mode pass for the scalar `<output, output_grad>` summed over
    /// the batch. Parameter gradients are *added* into `grads`; the input
    /// gradient is returned.
    pub fn backward(&self, tape: &Tape, output_grad: &Matrix, grads: &mut [f64]) -> Result<Matrix> {
        let out = tape.output();
        if output_grad.rows() != out.rows() || output_grad.cols() != out.cols() {
            return Err(Error::invalid(format!(
                "output gradient shape {}x{} does not match output {}x{}",
                output_grad.rows(),
                output_grad.cols(),
                out.rows(),
                out.cols()
            )));
        }
        if grads.len() != self.params.len() {
            return Err(Error::invalid("gradient buffer length"));
        }
        let rows = out.rows();
        let mut delta = output_grad.clone();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < self.num_layers() {
                // ReLU: post-activation zero means the unit was inactive.
                for (d, a) in delta.as_mut_slice().iter_mut().zip(tape.acts[l + 1].as_slice()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let off = self.offset(l);
            let (gw, rest) = grads[off..].split_at_mut(n_in * n_out);
            // dW += delta^T * x
            gemm(
                n_out,
                rows,
                n_in,
                1.0,
                delta.as_slice(),
                (1, n_out as isize),
                tape.acts[l].as_slice(),
                (n_in as isize, 1),
                1.0,
                gw,
                (n_in as isize, 1),
            );
            let gb = &mut rest[..n_out];
            for r in 0..rows {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            // dx = delta * W
            let mut dx = Matrix::zeros(rows, n_in);
            gemm(
                rows,
                n_out,
                n_in,
                1.0,
                delta.as_slice(),
                (n_out as isize, 1),
                self.weights(l),
                (n_in as isize, 1),
                0.0,
                dx.as_mut_slice(),
                (n_in as isize, 1),
            );
            delta = dx;
        }
        Ok(delta)
    }

    /// Single-vector convenience: returns `(parameter gradients, input gradient)`.
    pub fn backward_vec(&self, input: &[f64], output_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let tape = self.forward_tape(Matrix::row_vector(input))?;
        let mut grads = vec![0.0; self.params.len()];
        let dx = self.backward(&tape, &Matrix::row_vector(output_grad), &mut grads)?;
        Ok((grads, dx.into_vec()))
    }

    /// Polyak averaging: `self <- (1 - tau) * self + tau * source`.
    pub fn soft_update_from(&mut self, source: &DenseNet, tau: f64) {
        assert_eq!(self.sizes, source.sizes, "soft update between different topologies");
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t += tau * (s - *t);
        }
    }
}

/// Adam moment estimates for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::PoisonedUpdate(format!("gradient {i} is {}", grads[i])));
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let step = self.lr / bc1;
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= step * *m / (libm::sqrt(*v / bc2) + self.eps);
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::PoisonedUpdate(format!("parameter {i} became {}", params[i])));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn fd_check(net: &DenseNet, input: &[f64], out_grad: &[f64]) -> f64 {
        let (grads, dx) = net.backward_vec(input, out_grad).unwrap();
        let h = 1e-5;
        let objective = |n: &DenseNet, x: &[f64]| -> f64 {
            n.forward(x).unwrap().iter().zip(out_grad).map(|(y, g)| y * g).sum()
        };
        let rel = |a: f64, b: f64| {
            let scale = a.abs().max(b.abs());
            if scale < 1e-8 { 0.0 } else { (a - b).abs() / scale }
        };
        let mut worst: f64 = 0.0;
        let mut probe = net.clone();
        for i in 0..net.num_params() {
            let p0 = probe.params()[i];
            probe.params_mut()[i] = p0 + h;
            let fp = objective(&probe, input);
            probe.params_mut()[i] = p0 - h;
            let fm = objective(&probe, input);
            probe.params_mut()[i] = p0;
            worst = worst.max(rel(grads[i], (fp - fm) / (2.0 * h)));
        }
        let mut x = input.to_vec();
        for i in 0..x.len() {
            let x0 = x[i];
            x[i] = x0 + h;
            let fp = objective(net, &x);
            x[i] = x0 - h;
            let fm = objective(net, &x);
            x[i] = x0;
            worst = worst.max(rel(dx[i], (fp - fm) / (2.0 * h)));
        }
        worst
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_and_gradient() {
        let id = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let net = DenseNet::from_layers(&[(id, vec![0.0; 3])]).unwrap();
        let x = [0.3, -1.2, 4.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
        let g = [0.5, 2.0, -1.0];
        let (_, dx) = net.backward_vec(&x, &g).unwrap();
        assert_eq!(dx, g.to_vec());
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let net = DenseNet::new(&[4, 8, 2], &mut seeded(0)).unwrap();
        assert!(matches!(net.forward(&[1.0; 3]), Err(Error::InvalidArgument(_))));
        let tape = net.forward_tape(Matrix::row_vector(&[0.0; 4])).unwrap();
        let mut g = vec![0.0; net.num_params()];
        assert!(net.backward(&tape, &Matrix::row_vector(&[1.0; 3]), &mut g).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded(11);
        let net = DenseNet::new(&[4, 8, 8, 2], &mut rng).unwrap();
        for _ in 0..5 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let g: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let worst = fd_check(&net, &x, &g);
            assert!(worst < 1e-4, "relative error {worst}");
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = DenseNet::new(&[4, 8, 8, 2], &mut seeded(2)).unwrap();
        let (g, dx) = net.backward_vec(&[1.0, 2.0, 3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!(g.iter().chain(&dx).all(|&v| v == 0.0));
    }

    #[test]
    fn batch_forward_matches_rows() {
        let mut rng = seeded(5);
        let net = DenseNet::new(&[3, 16, 4], &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let batch = net.forward_batch(&Matrix::from_rows(&rows)).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let single = net.forward(r).unwrap();
            for (a, b) in single.iter().zip(batch.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn seeded_forward_is_reproducible() {
        let a = DenseNet::new(&[6, 32, 32, 3], &mut seeded(9)).unwrap();
        let b = DenseNet::new(&[6, 32, 32, 3], &mut seeded(9)).unwrap();
        let x = [0.1, -0.2, 0.3, -0.4, 0.5, -0.6];
        let (ya, yb) = (a.forward(&x).unwrap(), b.forward(&x).unwrap());
        for (p, q) in ya.iter().zip(&yb) {
            assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_parameters() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut opt = Adam::new(3, 1e-2);
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(opt.steps(), 10);
    }

    #[test]
    fn adam_moves_against_constant_gradient() {
        let mut p = vec![0.0, 0.0];
        let mut opt = Adam::new(2, 1e-3);
        for _ in 0..100 {
            opt.step(&mut p, &[2.5, -0.1]).unwrap();
        }
        assert!(p[0] < 0.0 && p[1] > 0.0);
    }

    #[test]
    fn adam_minimizes_square() {
        let mut w = vec![1.0];
        let mut opt = Adam::new(1, 1e-2);
        for _ in 0..500 {
            let g = [2.0 * w[0]];
            opt.step(&mut w, &g).unwrap();
        }
        assert!(w[0].abs() < 0.1, "{}", w[0]);
    }

    #[test]
    fn adam_rejects_nan() {
        let mut p = vec![0.0];
        let mut opt = Adam::new(1, 1e-3);
        assert!(matches!(opt.step(&mut p, &[f64::NAN]), Err(Error::PoisonedUpdate(_))));
        assert!(opt.step(&mut p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn soft_update_interpolates() {
        let mut rng = seeded(1);
        let src = DenseNet::new(&[2, 3, 1], &mut rng).unwrap();
        let mut dst = DenseNet::zeros(&[2, 3, 1]).unwrap();
        dst.soft_update_from(&src, 0.25);
        for (d, s) in dst.params().iter().zip(src.params()) {
            assert!((d - 0.25 * s).abs() < 1e-15);
        }
    }

    #[test]
    fn serialized_network_round_trips_with_layer_shapes() {
        let net = DenseNet::new(&[3, 4, 2], &mut seeded(8)).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        let file: NetworkFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file.format, NETWORK_FORMAT);
        assert_eq!(file.layers.iter().map(|l| l.shape).collect::<Vec<_>>(), vec![[4, 3], [2, 4]]);
        let back: DenseNet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn bad_network_files_are_rejected() {
        let net = DenseNet::new(&[2, 2], &mut seeded(9)).unwrap();
        let text = serde_json::to_string(&net).unwrap();
        let wrong_tag = text.replace(NETWORK_FORMAT, "other-v0");
        assert!(serde_json::from_str::<DenseNet>(&wrong_tag).is_err());
        let wrong_shape = text.replace("[2,2]", "[2,3]");
        assert!(serde_json::from_str::<DenseNet>(&wrong_shape).is_err());
    }
}
