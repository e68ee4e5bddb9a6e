//! A single-layer LSTM over embedded tokens with a one-neuron sigmoid head on
//! the last hidden state.
//!
//! All weights live in one flat vector so the optimizer can treat them
//! uniformly. Gate blocks are stacked in the order input, forget, cell,
//! output: `W` is `4n × d`, `U` is `4n × n`, `b` is `4n`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ClassifierError, Sample};

pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParameters {
    pub dim: usize,
    pub neurons: usize,
    pub values: Vec<f64>,
}

impl LstmParameters {
    pub fn parameter_count(dim: usize, neurons: usize) -> usize {
        4 * neurons * dim + 4 * neurons * neurons + 4 * neurons + neurons + 1
    }

    pub fn zeros(dim: usize, neurons: usize) -> Self {
        LstmParameters {
            dim,
            neurons,
            values: vec![0.0; Self::parameter_count(dim, neurons)],
        }
    }

    /// Every weight uniform in (−0.05, 0.05).
    pub fn init_uniform(dim: usize, neurons: usize, rng: &mut ChaCha8Rng) -> Self {
        let values = (0..Self::parameter_count(dim, neurons))
            .map(|_| rng.gen_range(-0.05..0.05))
            .collect();
        LstmParameters { dim, neurons, values }
    }

    fn offsets(&self) -> [usize; 5] {
        let (n, d) = (self.neurons, self.dim);
        let w = 0;
        let u = w + 4 * n * d;
        let b = u + 4 * n * n;
        let dw = b + 4 * n;
        let db = dw + n;
        [w, u, b, dw, db]
    }

    pub fn w(&self) -> &[f64] {
        let [w, u, ..] = self.offsets();
        &self.values[w..u]
    }

    pub fn u(&self) -> &[f64] {
        let [_, u, b, ..] = self.offsets();
        &self.values[u..b]
    }

    pub fn b(&self) -> &[f64] {
        let [_, _, b, dw, _] = self.offsets();
        &self.values[b..dw]
    }

    pub fn dense_w(&self) -> &[f64] {
        let [.., dw, db] = self.offsets();
        &self.values[dw..db]
    }

    pub fn dense_b(&self) -> f64 {
        let [.., db] = self.offsets();
        self.values[db]
    }

    /// Mutable views of `(W, U, b, dense_w, dense_b)`.
    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64], &mut [f64], &mut f64) {
        let [_, u, b, dw, db] = self.offsets();
        let (w_part, rest) = self.values.split_at_mut(u);
        let (u_part, rest) = rest.split_at_mut(b - u);
        let (b_part, rest) = rest.split_at_mut(dw - b);
        let (dw_part, rest) = rest.split_at_mut(db - dw);
        (w_part, u_part, b_part, dw_part, &mut rest[0])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4 * 4;
    for (x, y) in a[..chunks].chunks_exact(4).zip(b[..chunks].chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in a[chunks..].iter().zip(&b[chunks..]) {
        sum += x * y;
    }
    sum
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with `p` clamped to `[ε, 1−ε]`.
pub fn bce_loss(probability: f64, label: f64) -> f64 {
    let p = probability.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    /// Per step: `[i, f, g, o]` activations, `4n` values.
    gates: Vec<f64>,
    /// Cell states `c_1..c_T`, `n` values each.
    cells: Vec<f64>,
    /// Hidden states `h_1..h_T`.
    hidden: Vec<f64>,
    /// Masked input rows actually fed (empty for zero rows).
    inputs: Vec<Option<Vec<f64>>>,
    pub probability: f64,
    pub logit: f64,
}

impl ForwardCache {
    pub fn hidden_states(&self, neurons: usize) -> Vec<Vec<f64>> {
        self.hidden.chunks(neurons).map(<[f64]>::to_vec).collect()
    }

    pub fn steps(&self) -> usize {
        self.inputs.len()
    }
}

fn check_shape(params: &LstmParameters, sample: &Sample) -> Result<(), ClassifierError> {
    if sample.dim != params.dim {
        return Err(ClassifierError::ShapeMismatch {
            expected: params.dim,
            found: sample.dim,
        });
    }
    Ok(())
}

/// Runs the recurrence over all `seq_len` steps of the sample. `dropout_mask`
/// (length `dim`) multiplies every input row when given.
pub fn lstm_forward(
    params: &LstmParameters,
    sample: &Sample,
    dropout_mask: Option<&[f64]>,
) -> Result<ForwardCache, ClassifierError> {
    check_shape(params, sample)?;
    if let Some(mask) = dropout_mask {
        if mask.len() != params.dim {
            return Err(ClassifierError::ShapeMismatch {
                expected: params.dim,
                found: mask.len(),
            });
        }
    }
    let (n, d) = (params.neurons, params.dim);
    let steps = sample.seq_len;
    let (w, u, b) = (params.w(), params.u(), params.b());
    let mut cache = ForwardCache {
        gates: Vec::with_capacity(steps * 4 * n),
        cells: Vec::with_capacity(steps * n),
        hidden: Vec::with_capacity(steps * n),
        inputs: Vec::with_capacity(steps),
        probability: 0.0,
        logit: 0.0,
    };
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut z = vec![0.0; 4 * n];
    for t in 0..steps {
        let x: Option<Vec<f64>> = sample.row(t).filter(|r| r.iter().any(|&v| v != 0.0)).map(|r| match dropout_mask {
            Some(mask) => r.iter().zip(mask).map(|(a, m)| a * m).collect(),
            None => r.to_vec(),
        });
        z.copy_from_slice(b);
        for (r, zr) in z.iter_mut().enumerate() {
            let mut acc = dot(&u[r * n..(r + 1) * n], &h);
            if let Some(x) = &x {
                acc += dot(&w[r * d..(r + 1) * d], x);
            }
            *zr += acc;
        }
        for k in 0..n {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[n + k]);
            let g = z[2 * n + k].tanh();
            let o = sigmoid(z[3 * n + k]);
            c[k] = f * c[k] + i * g;
            h[k] = o * c[k].tanh();
            z[k] = i;
            z[n + k] = f;
            z[2 * n + k] = g;
            z[3 * n + k] = o;
        }
        cache.gates.extend_from_slice(&z);
        cache.cells.extend_from_slice(&c);
        cache.hidden.extend_from_slice(&h);
        cache.inputs.push(x);
    }
    cache.logit = dot(params.dense_w(), &h) + params.dense_b();
    cache.probability = sigmoid(cache.logit);
    Ok(cache)
}

/// Probability without keeping activations.
pub fn lstm_probability(params: &LstmParameters, sample: &Sample) -> Result<f64, ClassifierError> {
    Ok(lstm_forward(params, sample, None)?.probability)
}

/// Adds `scale · ∂L/∂θ` for one sample to `grad`, given its forward cache.
/// `L` is the BCE of the sample; its derivative with respect to the logit is
/// `p − y`.
pub fn backward_sample(params: &LstmParameters, cache: &ForwardCache, label: f64, scale: f64, grad: &mut LstmParameters) {
    let (n, d) = (params.neurons, params.dim);
    let steps = cache.steps();
    let u = params.u();
    let dlogit = (cache.probability - label) * scale;
    let h_last = if steps > 0 { &cache.hidden[(steps - 1) * n..steps * n] } else { &[][..] };
    let (gw, gu, gb, gdw, gdb) = grad.parts_mut();
    *gdb += dlogit;
    let mut dh = vec![0.0; n];
    if steps > 0 {
        axpy(dlogit, h_last, gdw);
        for (dhk, wk) in dh.iter_mut().zip(params.dense_w()) {
            *dhk = dlogit * wk;
        }
    }
    let mut dc = vec![0.0; n];
    let mut dz = vec![0.0; 4 * n];
    let zeros = vec![0.0; n];
    for t in (0..steps).rev() {
        let gates = &cache.gates[t * 4 * n..(t + 1) * 4 * n];
        let c_t = &cache.cells[t * n..(t + 1) * n];
        let c_prev = if t > 0 { &cache.cells[(t - 1) * n..t * n] } else { &zeros[..] };
        let h_prev = if t > 0 { &cache.hidden[(t - 1) * n..t * n] } else { &zeros[..] };
        for k in 0..n {
            let (i, f, g, o) = (gates[k], gates[n + k], gates[2 * n + k], gates[3 * n + k]);
            let tc = c_t[k].tanh();
            let d_o = dh[k] * tc;
            let dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
            dz[k] = dck * g * i * (1.0 - i);
            dz[n + k] = dck * c_prev[k] * f * (1.0 - f);
            dz[2 * n + k] = dck * i * (1.0 - g * g);
            dz[3 * n + k] = d_o * o * (1.0 - o);
            dc[k] = dck * f;
        }
        for (gbr, dzr) in gb.iter_mut().zip(&dz) {
            *gbr += dzr;
        }
        if let Some(x) = &cache.inputs[t] {
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(dzr, x, &mut gw[r * d..(r + 1) * d]);
            }
        }
        if t > 0 {
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(dzr, h_prev, &mut gu[r * n..(r + 1) * n]);
            }
        }
        dh.fill(0.0);
        for (r, &dzr) in dz.iter().enumerate() {
            axpy(dzr, &u[r * n..(r + 1) * n], &mut dh);
        }
    }
}

/// Mean batch BCE and its exact gradient.
pub fn backward(params: &LstmParameters, batch: &[&Sample]) -> Result<(f64, LstmParameters), ClassifierError> {
    let mut grad = LstmParameters::zeros(params.dim, params.neurons);
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for sample in batch {
        let cache = lstm_forward(params, sample, None)?;
        let y = sample.label.as_u8() as f64;
        loss += bce_loss(cache.probability, y) * scale;
        backward_sample(params, &cache, y, scale, &mut grad);
    }
    Ok((loss, grad))
}
