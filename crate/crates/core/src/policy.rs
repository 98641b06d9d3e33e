//! Deterministic MLP policies over a flat parameter vector.
//!
//! # Parameter layout
//!
//! Layers are stored in order from input to output. For each layer with
//! `fan_in` inputs and `fan_out` outputs the weight matrix comes first,
//! row-major with one row per output unit (`W[o][i]` at offset
//! `o * fan_in + i`), followed by the `fan_out` biases. A layer therefore
//! occupies `(fan_in + 1) * fan_out` consecutive entries.
//!
//! Hidden layers use the configured [`Activation`]; the output layer is
//! linear unless `output_squash` is set, in which case `tanh` is applied.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy spec: {0}")]
    InvalidSpec(String),
    #[error("{what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("genotype blob: {0}")]
    Blob(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default = "default_squash")]
    pub output_squash: bool,
}

fn default_squash() -> bool {
    true
}

impl PolicySpec {
    /// Tanh hidden layers and a tanh-squashed output.
    pub fn new(state_dim: usize, action_dim: usize, hidden_layers: Vec<usize>) -> Self {
        Self {
            state_dim,
            action_dim,
            hidden_layers,
            activation: Activation::Tanh,
            output_squash: true,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_output_squash(mut self, squash: bool) -> Self {
        self.output_squash = squash;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(PolicyError::InvalidSpec(
                "state_dim and action_dim must be at least 1".into(),
            ));
        }
        if self.hidden_layers.contains(&0) {
            return Err(PolicyError::InvalidSpec(
                "hidden layer widths must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `[state_dim, hidden..., action_dim]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(self.state_dim);
        sizes.extend_from_slice(&self.hidden_layers);
        sizes.push(self.action_dim);
        sizes
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Stable 64-bit fingerprint used to tag serialized genotypes.
    pub fn hash(&self) -> u64 {
        let canonical = format!(
            "mlp;s={};a={};h={:?};act={:?};squash={}",
            self.state_dim,
            self.action_dim,
            self.hidden_layers,
            self.activation,
            self.output_squash
        );
        let digest = Sha256::digest(canonical.as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    /// Per-layer uniform initialization in `±1/sqrt(fan_in)`, weights and
    /// biases alike.
    pub fn init_genotype(&self, seed: u64) -> Genotype {
        let mut rng = rng::seeded(seed);
        self.init_genotype_with(&mut rng)
    }

    pub fn init_genotype_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Genotype {
        let mut params = Vec::with_capacity(self.parameter_count());
        for w in self.layer_sizes().windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(rng.random_range(-bound..=bound));
            }
        }
        Genotype(params)
    }

    fn check_genotype(&self, g: &Genotype) -> Result<(), PolicyError> {
        let expected = self.parameter_count();
        if g.len() != expected {
            return Err(PolicyError::DimensionMismatch {
                what: "genotype",
                expected,
                got: g.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, s: &[f64]) -> Result<(), PolicyError> {
        if s.len() != self.state_dim {
            return Err(PolicyError::DimensionMismatch {
                what: "state",
                expected: self.state_dim,
                got: s.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, g: &Genotype, s: &[f64]) -> Result<Vec<f64>, PolicyError> {
        self.check_genotype(g)?;
        self.check_state(s)?;
        let mut tape = Tape::new(self);
        Ok(self.forward_into(g.as_slice(), s, &mut tape).to_vec())
    }

    /// `B(x)^T c` where `B(x) = d mu_x(s) / dx`, via one reverse pass.
    pub fn vjp(&self, g: &Genotype, s: &[f64], c: &[f64]) -> Result<Vec<f64>, PolicyError> {
        self.check_genotype(g)?;
        self.check_state(s)?;
        if c.len() != self.action_dim {
            return Err(PolicyError::DimensionMismatch {
                what: "cotangent",
                expected: self.action_dim,
                got: c.len(),
            });
        }
        if s.iter().chain(c).any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite("vjp input"));
        }
        let mut tape = Tape::new(self);
        let mut grad = vec![0.0; g.len()];
        self.forward_into(g.as_slice(), s, &mut tape);
        self.backward_accumulate(g.as_slice(), &mut tape, c, &mut grad);
        Ok(grad)
    }

    /// Unchecked forward pass recording activations on `tape`.
    ///
    /// Callers must pass a parameter slice of length `parameter_count()` and
    /// a state of length `state_dim`.
    pub fn forward_into<'t>(&self, params: &[f64], s: &[f64], tape: &'t mut Tape) -> &'t [f64] {
        debug_assert_eq!(params.len(), self.parameter_count());
        tape.acts[0].copy_from_slice(s);
        let n_layers = tape.acts.len() - 1;
        let mut offset = 0;
        for l in 0..n_layers {
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let input = &head[l];
            let output = &mut tail[0];
            let fan_in = input.len();
            let fan_out = output.len();
            let weights = &params[offset..offset + fan_in * fan_out];
            let biases = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            let last = l + 1 == n_layers;
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut acc = biases[o];
                for (w, x) in row.iter().zip(input) {
                    acc += w * x;
                }
                output[o] = if !last {
                    self.activation.apply(acc)
                } else if self.output_squash {
                    acc.tanh()
                } else {
                    acc
                };
            }
            offset += (fan_in + 1) * fan_out;
        }
        &tape.acts[n_layers]
    }

    /// Adds `B(x)^T cot` to `grad`, using the activations recorded by the
    /// most recent [`forward_into`](Self::forward_into) on `tape`.
    pub fn backward_accumulate(
        &self,
        params: &[f64],
        tape: &mut Tape,
        cot: &[f64],
        grad: &mut [f64],
    ) {
        let n_layers = tape.acts.len() - 1;
        let Tape {
            acts,
            delta,
            delta_prev,
            offsets,
        } = tape;

        delta.clear();
        let out = &acts[n_layers];
        for (o, &c) in cot.iter().enumerate() {
            let d = if self.output_squash {
                1.0 - out[o] * out[o]
            } else {
                1.0
            };
            delta.push(c * d);
        }

        for l in (0..n_layers).rev() {
            let input = &acts[l];
            let fan_in = input.len();
            let fan_out = delta.len();
            let offset = offsets[l];
            let gw = offset;
            let gb = offset + fan_in * fan_out;
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[gw + o * fan_in..gw + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[gb + o] += d;
            }
            if l == 0 {
                break;
            }
            delta_prev.clear();
            delta_prev.resize(fan_in, 0.0);
            let weights = &params[gw..gb];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                for (p, w) in delta_prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, &y) in delta_prev.iter_mut().zip(input.iter()) {
                *p *= self.activation.derivative_from_output(y);
            }
            std::mem::swap(delta, delta_prev);
        }
    }
}

/// `C (m x n) = alpha A B + beta C` on strided row/column views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above keep every strided access inside its slice.
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
            rsc as isize,
            csc as isize,
        );
    }
}

impl PolicySpec {
    /// Forward pass over `n` states at once (`states` is row-major
    /// `n x state_dim`). Returns the `n x action_dim` outputs.
    pub fn forward_batch<'t>(
        &self,
        params: &[f64],
        states: &[f64],
        tape: &'t mut BatchTape,
    ) -> &'t [f64] {
        let n = states.len() / self.state_dim;
        tape.rows = n;
        let n_layers = tape.sizes.len() - 1;
        for (acts, &w) in tape.acts.iter_mut().zip(&tape.sizes) {
            acts.resize(n * w, 0.0);
        }
        tape.acts[0].copy_from_slice(&states[..n * self.state_dim]);
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (tape.sizes[l], tape.sizes[l + 1]);
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let (input, output) = (&head[l], &mut tail[0]);
            let weights = &params[offset..offset + fan_in * fan_out];
            let biases = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            for row in output.chunks_exact_mut(fan_out) {
                row.copy_from_slice(biases);
            }
            // out (n x fan_out) += in (n x fan_in) * W^T
            gemm(n, fan_in, fan_out, input, (fan_in, 1), weights, (1, fan_in), 1.0, output, (fan_out, 1));
            let last = l + 1 == n_layers;
            for v in output.iter_mut() {
                *v = if !last {
                    self.activation.apply(*v)
                } else if self.output_squash {
                    v.tanh()
                } else {
                    *v
                };
            }
            offset += (fan_in + 1) * fan_out;
        }
        &tape.acts[n_layers]
    }

    /// Adds `sum_r B_r(x)^T cot_r` to `grad` for the rows of the most recent
    /// [`forward_batch`](Self::forward_batch). `cot` is `n x action_dim`.
    pub fn backward_batch(&self, params: &[f64], tape: &mut BatchTape, cot: &[f64], grad: &mut [f64]) {
        let n = tape.rows;
        let n_layers = tape.sizes.len() - 1;
        let BatchTape {
            sizes,
            acts,
            delta,
            delta_prev,
            offsets,
            ..
        } = tape;
        delta.clear();
        delta.extend_from_slice(&cot[..n * self.action_dim]);
        if self.output_squash {
            for (d, y) in delta.iter_mut().zip(&acts[n_layers]) {
                *d *= 1.0 - y * y;
            }
        }
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let input = &acts[l];
            let gw = offsets[l];
            let gb = gw + fan_in * fan_out;
            // dW (fan_out x fan_in) += delta^T (fan_out x n) * in (n x fan_in)
            gemm(fan_out, n, fan_in, delta, (1, fan_out), input, (fan_in, 1), 1.0, &mut grad[gw..gb], (fan_in, 1));
            for row in delta.chunks_exact(fan_out) {
                for (g, d) in grad[gb..gb + fan_out].iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            delta_prev.resize(n * fan_in, 0.0);
            // delta_prev (n x fan_in) = delta (n x fan_out) * W (fan_out x fan_in)
            gemm(n, fan_out, fan_in, delta, (fan_out, 1), &params[gw..gb], (fan_in, 1), 0.0, delta_prev, (fan_in, 1));
            for (p, &y) in delta_prev.iter_mut().zip(input) {
                *p *= self.activation.derivative_from_output(y);
            }
            std::mem::swap(delta, delta_prev);
        }
    }
}

/// Scratch space for [`PolicySpec::forward_batch`] and
/// [`PolicySpec::backward_batch`]; grows to the largest batch seen.
#[derive(Debug, Clone)]
pub struct BatchTape {
    sizes: Vec<usize>,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    offsets: Vec<usize>,
    rows: usize,
}

impl BatchTape {
    pub fn new(spec: &PolicySpec) -> Self {
        let sizes = spec.layer_sizes();
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }
        BatchTape {
            acts: vec![Vec::new(); sizes.len()],
            sizes,
            delta: Vec::new(),
            delta_prev: Vec::new(),
            offsets,
            rows: 0,
        }
    }
}

/// Reusable scratch space for forward and reverse passes of one spec.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    offsets: Vec<usize>,
}

impl Tape {
    pub fn new(spec: &PolicySpec) -> Self {
        let sizes = spec.layer_sizes();
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }
        let widest = sizes.iter().copied().max().unwrap_or(0);
        Tape {
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: Vec::with_capacity(widest),
            delta_prev: Vec::with_capacity(widest),
            offsets,
        }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Flat parameter vector of a policy. Its length never changes after
/// construction and every entry is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Genotype(Vec<f64>);

impl TryFrom<Vec<f64>> for Genotype {
    type Error = PolicyError;

    fn try_from(params: Vec<f64>) -> Result<Self, Self::Error> {
        Genotype::new(params)
    }
}

impl From<Genotype> for Vec<f64> {
    fn from(g: Genotype) -> Self {
        g.0
    }
}

const BLOB_HEADER: usize = 16;

impl Genotype {
    pub fn new(params: Vec<f64>) -> Result<Self, PolicyError> {
        if params.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite("genotype"));
        }
        Ok(Genotype(params))
    }

    pub fn zeros(len: usize) -> Self {
        Genotype(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Little-endian blob: spec hash (u64), parameter count (u64), then the
    /// parameters as f64.
    pub fn to_bytes(&self, spec: &PolicySpec) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOB_HEADER + 8 * self.len());
        out.extend_from_slice(&spec.hash().to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in &self.0 {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(spec: &PolicySpec, bytes: &[u8]) -> Result<Self, PolicyError> {
        if bytes.len() < BLOB_HEADER {
            return Err(PolicyError::Blob("truncated header".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        if word(0) != spec.hash() {
            return Err(PolicyError::Blob("spec hash mismatch".into()));
        }
        let count = word(8) as usize;
        if count != spec.parameter_count() || bytes.len() != BLOB_HEADER + 8 * count {
            return Err(PolicyError::Blob(format!(
                "expected {} parameters",
                spec.parameter_count()
            )));
        }
        let params = bytes[BLOB_HEADER..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Genotype::new(params)
    }

    pub fn to_json(&self, spec: &PolicySpec) -> serde_json::Value {
        serde_json::json!({
            "spec": spec,
            "spec_hash": format!("{:016x}", spec.hash()),
            "params": self.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn linear() -> PolicySpec {
        PolicySpec::new(1, 1, vec![]).with_output_squash(false)
    }

    /// Straightforward second implementation: explicit layer loop over
    /// nested weight matrices.
    fn oracle_forward(spec: &PolicySpec, params: &[f64], s: &[f64]) -> Vec<f64> {
        let sizes = spec.layer_sizes();
        let mut x = s.to_vec();
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let mut y = vec![0.0; n_out];
            for o in 0..n_out {
                let mut acc = 0.0;
                for i in 0..n_in {
                    acc += params[off + o * n_in + i] * x[i];
                }
                acc += params[off + n_in * n_out + o];
                let last = l == sizes.len() - 2;
                y[o] = if last {
                    if spec.output_squash {
                        acc.tanh()
                    } else {
                        acc
                    }
                } else {
                    match spec.activation {
                        Activation::Tanh => acc.tanh(),
                        Activation::Relu => acc.max(0.0),
                    }
                };
            }
            off += (n_in + 1) * n_out;
            x = y;
        }
        x
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(PolicySpec::new(1, 1, vec![]).parameter_count(), 2);
        let table = [(30, 8, 6664), (18, 6, 5766), (12, 3, 5187), (28, 8, 6536)];
        for (s, a, n) in table {
            assert_eq!(PolicySpec::new(s, a, vec![64, 64]).parameter_count(), n);
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = PolicySpec::new(30, 8, vec![64, 64]);
        let a = spec.init_genotype(7);
        let b = spec.init_genotype(7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6664);
        assert_ne!(a, spec.init_genotype(8));
        // first layer bound 1/sqrt(30)
        let bound = 1.0 / 30f64.sqrt();
        assert!(a.as_slice()[..31 * 64].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn linear_forward_and_vjp() {
        let spec = linear();
        let g = Genotype::new(vec![2.0, 0.0]).unwrap();
        assert_eq!(spec.forward(&g, &[3.0]).unwrap(), vec![6.0]);
        assert_eq!(spec.vjp(&g, &[3.0], &[1.0]).unwrap(), vec![3.0, 1.0]);
    }

    #[test]
    fn zero_genotype_gives_zero_action() {
        let spec = PolicySpec::new(5, 3, vec![8, 8]);
        let g = Genotype::zeros(spec.parameter_count());
        let a = spec.forward(&g, &[0.3, -1.0, 2.0, 4.0, 0.1]).unwrap();
        assert_eq!(a, vec![0.0; 3]);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let spec = PolicySpec::new(3, 2, vec![4]);
        let g = spec.init_genotype(1);
        let v = spec.vjp(&g, &[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dimension_errors() {
        let spec = PolicySpec::new(3, 2, vec![4]);
        let g = spec.init_genotype(1);
        assert!(matches!(
            spec.forward(&g, &[1.0]),
            Err(PolicyError::DimensionMismatch { what: "state", .. })
        ));
        assert!(matches!(
            spec.vjp(&g, &[1.0, 2.0, 3.0], &[1.0]),
            Err(PolicyError::DimensionMismatch { what: "cotangent", .. })
        ));
        assert!(matches!(
            spec.forward(&Genotype::zeros(3), &[1.0, 2.0, 3.0]),
            Err(PolicyError::DimensionMismatch { what: "genotype", .. })
        ));
        assert_eq!(
            spec.vjp(&g, &[1.0, f64::NAN, 3.0], &[1.0, 0.0]),
            Err(PolicyError::NonFinite("vjp input"))
        );
    }

    #[test]
    fn genotype_rejects_non_finite() {
        assert!(Genotype::new(vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn blob_roundtrip_and_hash_check() {
        let spec = PolicySpec::new(3, 2, vec![4]);
        let g = spec.init_genotype(3);
        let bytes = g.to_bytes(&spec);
        assert_eq!(bytes.len(), 16 + 8 * g.len());
        assert_eq!(&bytes[0..8], &spec.hash().to_le_bytes());
        assert_eq!(Genotype::from_bytes(&spec, &bytes).unwrap(), g);
        let other = PolicySpec::new(3, 2, vec![4]).with_activation(Activation::Relu);
        assert!(Genotype::from_bytes(&other, &bytes).is_err());
        assert!(Genotype::from_bytes(&spec, &bytes[..20]).is_err());
        let json = g.to_json(&spec);
        assert_eq!(json["params"].as_array().unwrap().len(), g.len());
    }

    #[test]
    fn relu_vjp_matches_finite_differences() {
        let spec = PolicySpec::new(3, 2, vec![5, 4]).with_activation(Activation::Relu);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let g = spec.init_genotype_with(&mut rng);
        let s = [0.7, -0.4, 1.1];
        let c = [0.5, -1.5];
        let grad = spec.vjp(&g, &s, &c).unwrap();
        let h = 1e-6;
        for k in 0..g.len() {
            let mut p = g.as_slice().to_vec();
            p[k] += h;
            let up = oracle_forward(&spec, &p, &s);
            p[k] -= 2.0 * h;
            let down = oracle_forward(&spec, &p, &s);
            let fd: f64 = (0..2).map(|i| (up[i] - down[i]) * c[i]).sum::<f64>() / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6, "param {k}: {fd} vs {}", grad[k]);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn forward_matches_oracle(
            seed in any::<u64>(),
            sd in 1usize..6, ad in 1usize..4,
            hidden in proptest::collection::vec(1usize..8, 0..3),
            squash in any::<bool>(),
            relu in any::<bool>(),
            s in proptest::collection::vec(-3.0f64..3.0, 6),
        ) {
            let mut spec = PolicySpec::new(sd, ad, hidden).with_output_squash(squash);
            if relu { spec = spec.with_activation(Activation::Relu); }
            let g = spec.init_genotype(seed);
            let s = &s[..sd];
            let got = spec.forward(&g, s).unwrap();
            let want = oracle_forward(&spec, g.as_slice(), s);
            prop_assert_eq!(got.len(), ad);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() < 1e-12);
                if squash { prop_assert!(a.abs() < 1.0); }
            }
        }

        #[test]
        fn vjp_is_linear_in_cotangent(
            seed in any::<u64>(),
            c1 in proptest::collection::vec(-2.0f64..2.0, 3),
            c2 in proptest::collection::vec(-2.0f64..2.0, 3),
            alpha in -3.0f64..3.0, beta in -3.0f64..3.0,
        ) {
            let spec = PolicySpec::new(4, 3, vec![6, 5]);
            let g = spec.init_genotype(seed);
            let s = [0.2, -0.5, 0.9, 1.3];
            let mix: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = spec.vjp(&g, &s, &mix).unwrap();
            let v1 = spec.vjp(&g, &s, &c1).unwrap();
            let v2 = spec.vjp(&g, &s, &c2).unwrap();
            for k in 0..lhs.len() {
                prop_assert!((lhs[k] - (alpha * v1[k] + beta * v2[k])).abs() < 1e-10);
            }
        }

        #[test]
        fn directional_derivative_agrees_with_vjp(seed in any::<u64>(), dir_seed in any::<u64>()) {
            let spec = PolicySpec::new(3, 2, vec![5]);
            let g = spec.init_genotype(seed);
            let v = spec.init_genotype(dir_seed);
            let s = [0.4, -0.8, 0.3];
            let c = [1.0, -0.5];
            let h = 1e-6;
            let shifted: Vec<f64> = g.as_slice().iter().zip(v.as_slice()).map(|(x, d)| x + h * d).collect();
            let a0 = spec.forward(&g, &s).unwrap();
            let a1 = spec.forward(&Genotype::new(shifted).unwrap(), &s).unwrap();
            let fd: f64 = (0..2).map(|i| (a1[i] - a0[i]) * c[i]).sum::<f64>() / h;
            let grad = spec.vjp(&g, &s, &c).unwrap();
            let dot: f64 = grad.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
            prop_assert!((fd - dot).abs() < 1e-4 * (1.0 + dot.abs()));
        }
    }

    #[test]
    fn batch_passes_match_row_passes() {
        for act in [Activation::Tanh, Activation::Relu] {
            let spec = PolicySpec::new(5, 3, vec![7, 6]).with_activation(act);
            let g = spec.init_genotype(4);
            let mut r = rng::seeded(8);
            let n = 13;
            let states: Vec<f64> = (0..n * 5).map(|_| r.random_range(-2.0..2.0)).collect();
            let cot: Vec<f64> = (0..n * 3).map(|_| r.random_range(-1.0..1.0)).collect();

            let mut bt = BatchTape::new(&spec);
            let out = spec.forward_batch(g.as_slice(), &states, &mut bt).to_vec();
            let mut grad_batch = vec![0.0; g.len()];
            spec.backward_batch(g.as_slice(), &mut bt, &cot, &mut grad_batch);

            let mut tape = Tape::new(&spec);
            let mut grad_rows = vec![0.0; g.len()];
            for i in 0..n {
                let a = spec.forward_into(g.as_slice(), &states[i * 5..(i + 1) * 5], &mut tape);
                for (x, y) in a.iter().zip(&out[i * 3..(i + 1) * 3]) {
                    assert!((x - y).abs() < 1e-14);
                }
                spec.backward_accumulate(g.as_slice(), &mut tape, &cot[i * 3..(i + 1) * 3], &mut grad_rows);
            }
            for (x, y) in grad_batch.iter().zip(&grad_rows) {
                assert!((x - y).abs() < 1e-12, "{x} vs {y}");
            }
        }
    }

}
