use super::{axpy, dot, AdamState};
use crate::error::ensure;
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fully connected network: ReLU on hidden layers, identity on the output.
///
/// Parameters live in one flat vector, layer by layer, each layer storing its
/// row-major `out × in` weight matrix followed by its bias. Gradients use the
/// same layout so optimizers can work on plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations recorded by a forward pass: `activations[0]` is the input and
/// `activations[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Trace {
    pub activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an input")
    }
}

/// Activations of a batched forward pass, each a row-major `batch × width`
/// matrix.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    batch: usize,
    activations: Vec<Vec<f64>>,
}

impl BatchTrace {
    pub fn batch(&self) -> usize {
        self.batch
    }
    /// Row-major `batch × output_dim` outputs.
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an input")
    }
    pub fn output_row(&self, b: usize) -> &[f64] {
        let out = self.output();
        let w = out.len() / self.batch;
        &out[b * w..(b + 1) * w]
    }
}

/// `c = a·b + beta·c` on strided row-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    debug_assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    debug_assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserted extents keep every strided access inside the
    // slices, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl DenseNet {
    /// Seeded uniform `±1/√fan_in` initialization of weights and biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.n_layers() {
            let bound = 1.0 / (layer_sizes[l] as f64).sqrt();
            let (start, end) = (net.offsets[l], net.offsets[l + 1]);
            for p in &mut net.params[start..end] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        ensure!(layer_sizes.len() >= 2, "a network needs at least an input and an output size");
        ensure!(layer_sizes.iter().all(|&s| s > 0), "layer widths must be positive");
        let mut offsets = vec![0];
        for w in layer_sizes.windows(2) {
            offsets.push(offsets.last().unwrap() + (w[0] + 1) * w[1]);
        }
        let n = *offsets.last().unwrap();
        Ok(Self { layer_sizes: layer_sizes.to_vec(), params: vec![0.0; n], offsets })
    }

    /// Builds a network from per-layer row-major weights and biases.
    pub fn from_parts(layer_sizes: &[usize], weights: &[Vec<f64>], biases: &[Vec<f64>]) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        ensure!(
            weights.len() == net.n_layers() && biases.len() == net.n_layers(),
            "expected {} weight and bias blocks",
            net.n_layers()
        );
        for l in 0..net.n_layers() {
            let (i, o) = (layer_sizes[l], layer_sizes[l + 1]);
            ensure!(weights[l].len() == i * o, "layer {l} weights have {} entries, expected {}", weights[l].len(), i * o);
            ensure!(biases[l].len() == o, "layer {l} biases have {} entries, expected {o}", biases[l].len());
            ensure!(
                weights[l].iter().chain(&biases[l]).all(|v| v.is_finite()),
                "layer {l} has non-finite parameters"
            );
            let s = net.offsets[l];
            net.params[s..s + i * o].copy_from_slice(&weights[l]);
            net.params[s + i * o..s + i * o + o].copy_from_slice(&biases[l]);
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }
    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }
    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }
    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
    /// `Σ (in_l + 1)·out_l`
    pub fn param_count(&self) -> usize {
        self.params.len()
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let s = self.offsets[l];
        (&self.params[s..s + i * o], &self.params[s + i * o..s + i * o + o])
    }

    /// Multiplies the last layer's weights and biases by `factor`; a small
    /// factor makes a fresh policy head start close to uniform.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let l = self.n_layers() - 1;
        let s = self.offsets[l];
        let n = self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1];
        for p in &mut self.params[s..s + n] {
            *p *= factor;
        }
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        self.layer(l).0
    }
    pub fn biases(&self, l: usize) -> &[f64] {
        self.layer(l).1
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        ensure!(input.len() == self.input_dim(), "input has {} features, network expects {}", input.len(), self.input_dim());
        let mut x = input.to_vec();
        for l in 0..self.n_layers() {
            x = self.apply_layer(l, &x);
        }
        Ok(x)
    }

    /// Forward pass that keeps every activation for [`DenseNet::backprop_into`].
    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        ensure!(input.len() == self.input_dim(), "input has {} features, network expects {}", input.len(), self.input_dim());
        let mut activations = Vec::with_capacity(self.layer_sizes.len());
        activations.push(input.to_vec());
        for l in 0..self.n_layers() {
            let next = self.apply_layer(l, activations.last().unwrap());
            activations.push(next);
        }
        Ok(Trace { activations })
    }

    fn apply_layer(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.layer(l);
        let i = x.len();
        let hidden = l + 1 < self.n_layers();
        b.iter()
            .enumerate()
            .map(|(o, &bo)| {
                let z = bo + dot(&w[o * i..(o + 1) * i], x);
                if hidden {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }

    /// Forward pass over many inputs at once, keeping activations for
    /// [`DenseNet::backprop_batch_into`].
    pub fn forward_batch<R: AsRef<[f64]>>(&self, inputs: &[R]) -> Result<BatchTrace> {
        let batch = inputs.len();
        let n_in = self.input_dim();
        let mut x = Vec::with_capacity(batch * n_in);
        for r in inputs {
            let r = r.as_ref();
            ensure!(r.len() == n_in, "input has {} features, network expects {n_in}", r.len());
            x.extend_from_slice(r);
        }
        let mut activations = Vec::with_capacity(self.layer_sizes.len());
        activations.push(x);
        for l in 0..self.n_layers() {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w, bias) = self.layer(l);
            let mut z: Vec<f64> = Vec::with_capacity(batch * o);
            for _ in 0..batch {
                z.extend_from_slice(bias);
            }
            gemm(batch, i, o, activations.last().unwrap(), i, 1, w, 1, i, 1.0, &mut z);
            if l + 1 < self.n_layers() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            activations.push(z);
        }
        Ok(BatchTrace { batch, activations })
    }

    /// Adds `Σ_b ∂(output_gradients[b] · output[b])/∂params` into `grad`;
    /// `output_gradients` is row-major `batch × output_dim`.
    pub fn backprop_batch_into(&self, trace: &BatchTrace, output_gradients: &[f64], grad: &mut [f64]) -> Result<()> {
        let batch = trace.batch;
        ensure!(
            output_gradients.len() == batch * self.output_dim(),
            "output gradients have {} entries, expected {}",
            output_gradients.len(),
            batch * self.output_dim()
        );
        ensure!(grad.len() == self.param_count(), "gradient buffer has {} entries, expected {}", grad.len(), self.param_count());
        ensure!(trace.activations.len() == self.layer_sizes.len(), "trace does not belong to this network");
        let mut delta = output_gradients.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let a = &trace.activations[l];
            let s = self.offsets[l];
            {
                let (gw, gb) = grad[s..s + i * o + o].split_at_mut(i * o);
                gemm(o, batch, i, &delta, 1, o, a, i, 1, 1.0, gw);
                for row in delta.chunks_exact(o) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            if l > 0 {
                let w = self.layer(l).0;
                let mut prev = vec![0.0; batch * i];
                gemm(batch, o, i, &delta, o, 1, w, i, 1, 0.0, &mut prev);
                for (p, &av) in prev.iter_mut().zip(a) {
                    if av <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Adds `∂(output_gradient · output)/∂params` into `grad`.
    pub fn backprop_into(&self, trace: &Trace, output_gradient: &[f64], grad: &mut [f64]) -> Result<()> {
        ensure!(output_gradient.len() == self.output_dim(), "output gradient has {} entries, expected {}", output_gradient.len(), self.output_dim());
        ensure!(grad.len() == self.param_count(), "gradient buffer has {} entries, expected {}", grad.len(), self.param_count());
        ensure!(trace.activations.len() == self.layer_sizes.len(), "trace does not belong to this network");
        let mut delta = output_gradient.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let a = &trace.activations[l];
            let s = self.offsets[l];
            {
                let (gw, gb) = grad[s..s + i * o + o].split_at_mut(i * o);
                for (r, &dr) in delta.iter().enumerate() {
                    if dr != 0.0 {
                        axpy(dr, a, &mut gw[r * i..(r + 1) * i]);
                        gb[r] += dr;
                    }
                }
            }
            if l > 0 {
                let w = self.layer(l).0;
                let mut prev = vec![0.0; i];
                for (r, &dr) in delta.iter().enumerate() {
                    if dr != 0.0 {
                        axpy(dr, &w[r * i..(r + 1) * i], &mut prev);
                    }
                }
                for (p, &av) in prev.iter_mut().zip(a) {
                    if av <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, optimizer_state: Option<AdamState>) -> NetCheckpoint {
        let n = self.n_layers();
        NetCheckpoint {
            layer_sizes: self.layer_sizes.clone(),
            weights: (0..n).map(|l| self.weights(l).to_vec()).collect(),
            biases: (0..n).map(|l| self.biases(l).to_vec()).collect(),
            optimizer_state,
        }
    }

    pub fn from_checkpoint(ck: &NetCheckpoint) -> Result<Self> {
        let net = Self::from_parts(&ck.layer_sizes, &ck.weights, &ck.biases)?;
        if let Some(st) = &ck.optimizer_state {
            ensure!(
                st.m.len() == net.param_count() && st.v.len() == net.param_count(),
                "optimizer state does not match the network's {} parameters",
                net.param_count()
            );
        }
        Ok(net)
    }
}

/// Parameter gradient of `output_gradient · net(input)`.
pub fn backprop(net: &DenseNet, input: &[f64], output_gradient: &[f64]) -> Result<Vec<f64>> {
    let trace = net.forward_trace(input)?;
    let mut grad = vec![0.0; net.param_count()];
    net.backprop_into(&trace, output_gradient, &mut grad)?;
    Ok(grad)
}

/// Serialized network: `{layer_sizes, weights, biases, optimizer_state}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub optimizer_state: Option<AdamState>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batched_passes_match_per_sample_passes() {
        let net = DenseNet::new(&[7, 16, 9, 3], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inputs: Vec<Vec<f64>> = (0..11).map(|_| (0..7).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let dout: Vec<f64> = (0..11 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let bt = net.forward_batch(&inputs).unwrap();
        let mut gb = vec![0.0; net.param_count()];
        net.backprop_batch_into(&bt, &dout, &mut gb).unwrap();
        let mut gs = vec![0.0; net.param_count()];
        for (b, x) in inputs.iter().enumerate() {
            let t = net.forward_trace(x).unwrap();
            for (u, v) in t.output().iter().zip(bt.output_row(b)) {
                assert!((u - v).abs() < 1e-12);
            }
            net.backprop_into(&t, &dout[b * 3..(b + 1) * 3], &mut gs).unwrap();
        }
        for (u, v) in gs.iter().zip(&gb) {
            assert!((u - v).abs() < 1e-12 * (1.0 + u.abs()));
        }
        assert!(net.forward_batch(&[vec![0.0; 6]]).is_err());
        assert!(net.backprop_batch_into(&bt, &dout[1..], &mut gb).is_err());
    }

    fn matvec_oracle(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = b.to_vec();
        for (r, o) in out.iter_mut().enumerate() {
            for (c, xv) in x.iter().enumerate() {
                *o += w[r * x.len() + c] * xv;
            }
        }
        out
    }

    #[test]
    fn param_count_formula() {
        let net = DenseNet::new(&[81, 256, 64, 16, 5], 0).unwrap();
        assert_eq!(net.param_count(), 82 * 256 + 257 * 64 + 65 * 16 + 17 * 5);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = DenseNet::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 5.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let w = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let net = DenseNet::from_parts(&[3, 3], &[w], &[vec![0.0; 3]]).unwrap();
        assert_eq!(net.forward(&[0.5, -1.5, 2.0]).unwrap(), vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn two_layer_matches_matrix_oracle() {
        let net = DenseNet::new(&[3, 5, 2], 42).unwrap();
        let x = [0.3, -0.7, 1.1];
        let h: Vec<f64> = matvec_oracle(net.weights(0), net.biases(0), &x).into_iter().map(|v| v.max(0.0)).collect();
        let y = matvec_oracle(net.weights(1), net.biases(1), &h);
        let got = net.forward(&x).unwrap();
        for (a, b) in got.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let net = DenseNet::new(&[3, 2], 0).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(backprop(&net, &[1.0, 2.0, 3.0], &[1.0]).is_err());
        assert!(DenseNet::from_parts(&[2, 2], &[vec![0.0; 3]], &[vec![0.0; 2]]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_grad() {
        let net = DenseNet::new(&[4, 8, 3], 1).unwrap();
        let g = backprop(&net, &[1.0, 2.0, 3.0, 4.0], &[0.0; 3]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_scalar_weight_gradient_is_input() {
        let net = DenseNet::from_parts(&[1, 1], &[vec![0.7]], &[vec![0.1]]).unwrap();
        let g = backprop(&net, &[2.5], &[1.0]).unwrap();
        assert_eq!(g, vec![2.5, 1.0]);
    }

    #[test]
    fn checkpoint_roundtrip_validates_shapes() {
        let net = DenseNet::new(&[3, 4, 2], 9).unwrap();
        let ck = net.to_checkpoint(Some(AdamState::new(net.param_count())));
        let json = serde_json::to_string(&ck).unwrap();
        let back: NetCheckpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(DenseNet::from_checkpoint(&back).unwrap(), net);
        let mut broken = back.clone();
        broken.optimizer_state = Some(AdamState::new(3));
        assert!(DenseNet::from_checkpoint(&broken).is_err());
        broken.optimizer_state = None;
        broken.weights[0].pop();
        assert!(DenseNet::from_checkpoint(&broken).is_err());
    }
}
