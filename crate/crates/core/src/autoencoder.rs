//! Sequence-to-sequence LSTM autoencoder and its compact latent (AECS).
//!
//! Encoder: two stacked LSTMs (`d → h1 → h2`) run over the observed
//! timesteps of a series; the last hidden state of the second layer is the
//! latent. Decoder: a learned affine map turns the latent into the initial
//! hidden state of decoder layer 1, the latent is also that layer's input at
//! every step, decoder layer 2 (`h1 → h2`) follows and an affine projection
//! maps each step back to `d` values. Reconstruction runs in forward time.
//!
//! LSTM weights are stored row-major as `4h × (in + h)` with gate blocks in
//! the order input, forget, candidate, output; columns `0..in` multiply the
//! input and `in..in+h` the previous hidden state.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::exec::Execution;

pub const CHECKPOINT_FORMAT: &str = "hc-aecs-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    input: usize,
    hidden: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Activations of one LSTM over a sequence, kept for backpropagation.
struct LstmTape {
    steps: usize,
    /// `(steps + 1) × h`; row 0 is the initial state.
    h: Vec<f64>,
    c: Vec<f64>,
    /// `steps × 4h`, post-activation.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmTape {
    fn last_h(&self, hidden: usize) -> &[f64] {
        &self.h[self.steps * hidden..(self.steps + 1) * hidden]
    }

    /// Hidden states for steps `1..=steps`, flattened.
    fn outputs(&self, hidden: usize) -> &[f64] {
        &self.h[hidden..]
    }
}

impl LstmLayer {
    fn new(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let cols = input + hidden;
        let scale = (6.0 / (cols + 4 * hidden) as f64).sqrt();
        let w = (0..4 * hidden * cols)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        Self { input, hidden, w, b }
    }

    fn zeros_like(&self) -> Self {
        Self {
            input: self.input,
            hidden: self.hidden,
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        }
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// `4h × (in + h)` row-major weights.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    /// Runs the layer over `inputs` (`steps × in`), where `step_input(t)`
    /// yields the input of step `t`.
    fn forward<'a>(
        &self,
        steps: usize,
        step_input: impl Fn(usize) -> &'a [f64],
        h0: Option<&[f64]>,
    ) -> LstmTape {
        let (n_in, h) = (self.input, self.hidden);
        let cols = n_in + h;
        let mut tape = LstmTape {
            steps,
            h: vec![0.0; (steps + 1) * h],
            c: vec![0.0; (steps + 1) * h],
            gates: vec![0.0; steps * 4 * h],
            tanh_c: vec![0.0; steps * h],
        };
        if let Some(h0) = h0 {
            tape.h[..h].copy_from_slice(h0);
        }
        for t in 0..steps {
            let x = step_input(t);
            let (h_hist, h_next) = tape.h.split_at_mut((t + 1) * h);
            let h_prev = &h_hist[t * h..];
            let gates = &mut tape.gates[t * 4 * h..(t + 1) * 4 * h];
            for (r, g) in gates.iter_mut().enumerate() {
                let row = &self.w[r * cols..(r + 1) * cols];
                let mut acc = self.b[r];
                for (wv, xv) in row[..n_in].iter().zip(x) {
                    acc += wv * xv;
                }
                for (wv, hv) in row[n_in..].iter().zip(h_prev) {
                    acc += wv * hv;
                }
                *g = acc;
            }
            for j in 0..h {
                gates[j] = sigmoid(gates[j]);
                gates[h + j] = sigmoid(gates[h + j]);
                gates[2 * h + j] = gates[2 * h + j].tanh();
                gates[3 * h + j] = sigmoid(gates[3 * h + j]);
            }
            let (c_hist, c_next) = tape.c.split_at_mut((t + 1) * h);
            let c_prev = &c_hist[t * h..];
            for j in 0..h {
                let c = gates[h + j] * c_prev[j] + gates[j] * gates[2 * h + j];
                c_next[j] = c;
                let tc = c.tanh();
                tape.tanh_c[t * h + j] = tc;
                h_next[j] = gates[3 * h + j] * tc;
            }
        }
        tape
    }

    /// Backpropagates through the tape.
    ///
    /// `dh_out` is `steps × h`, the loss gradient arriving at each output.
    /// Returns the gradient w.r.t. each step's input (`steps × in`) and the
    /// initial hidden state.
    fn backward<'a>(
        &self,
        tape: &LstmTape,
        step_input: impl Fn(usize) -> &'a [f64],
        dh_out: &[f64],
        grad: &mut LstmLayer,
    ) -> (Vec<f64>, Vec<f64>) {
        let (n_in, h) = (self.input, self.hidden);
        let cols = n_in + h;
        let mut dx = vec![0.0; tape.steps * n_in];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        for t in (0..tape.steps).rev() {
            let g = &tape.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &tape.c[t * h..(t + 1) * h];
            let tc = &tape.tanh_c[t * h..(t + 1) * h];
            for j in 0..h {
                let dh = dh_out[t * h + j] + dh_next[j];
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let d_o = dh * tc[j];
                let dc = dc_next[j] + dh * o * (1.0 - tc[j] * tc[j]);
                da[j] = dc * gg * i * (1.0 - i);
                da[h + j] = dc * c_prev[j] * f * (1.0 - f);
                da[2 * h + j] = dc * i * (1.0 - gg * gg);
                da[3 * h + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let x = step_input(t);
            let h_prev = &tape.h[t * h..(t + 1) * h];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            let dxt = &mut dx[t * n_in..(t + 1) * n_in];
            for (r, &dar) in da.iter().enumerate() {
                if dar == 0.0 {
                    continue;
                }
                grad.b[r] += dar;
                let row = &self.w[r * cols..(r + 1) * cols];
                let grow = &mut grad.w[r * cols..(r + 1) * cols];
                for k in 0..n_in {
                    grow[k] += dar * x[k];
                    dxt[k] += dar * row[k];
                }
                for k in 0..h {
                    grow[n_in + k] += dar * h_prev[k];
                    dh_next[k] += dar * row[n_in + k];
                }
            }
        }
        (dx, dh_next)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    input: usize,
    output: usize,
    /// `output × input` row-major.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn new(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = (6.0 / (input + output) as f64).sqrt();
        let w = (0..input * output)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        Self {
            input,
            output,
            w,
            b: vec![0.0; output],
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            input: self.input,
            output: self.output,
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.b[r]
                + self.w[r * self.input..(r + 1) * self.input]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
    }

    /// Accumulates parameter gradients and returns `Wᵀ dy`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        for (r, &g) in dy.iter().enumerate() {
            grad.b[r] += g;
            let row = &self.w[r * self.input..(r + 1) * self.input];
            let grow = &mut grad.w[r * self.input..(r + 1) * self.input];
            for k in 0..self.input {
                grow[k] += g * x[k];
                dx[k] += g * row[k];
            }
        }
        dx
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub n_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    dims: ModelDims,
    seed: u64,
    pub encoder1: LstmLayer,
    pub encoder2: LstmLayer,
    pub decoder_init: Dense,
    pub decoder1: LstmLayer,
    pub decoder2: LstmLayer,
    pub output: Dense,
}

/// Result of running one series through the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// `n_max × d`; positions past the series length are decoder
    /// continuations and carry no loss.
    pub reconstruction: Vec<f64>,
    pub latent: Vec<f64>,
}

struct SeriesTape {
    enc1: LstmTape,
    enc2: LstmTape,
    h_init: Vec<f64>,
    dec1: LstmTape,
    dec2: LstmTape,
    y: Vec<f64>,
}

impl AutoencoderModel {
    /// Seeded initialisation: uniform weights in `±sqrt(6 / (fan_in + fan_out))`
    /// per block, zero biases except LSTM forget gates at 1.
    pub fn new(input_dim: usize, hidden1: usize, hidden2: usize, n_max: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden2 == 0 {
            return Err(Error::Config("all model dimensions must be ≥ 1".into()));
        }
        if !(hidden2 < hidden1 && hidden1 < n_max) {
            return Err(Error::Config(format!(
                "need h2 < h1 < n, got h2={hidden2}, h1={hidden1}, n={n_max}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            dims: ModelDims {
                input_dim,
                hidden1,
                hidden2,
                n_max,
            },
            seed,
            encoder1: LstmLayer::new(input_dim, hidden1, &mut rng),
            encoder2: LstmLayer::new(hidden1, hidden2, &mut rng),
            decoder_init: Dense::new(hidden2, hidden1, &mut rng),
            decoder1: LstmLayer::new(hidden2, hidden1, &mut rng),
            decoder2: LstmLayer::new(hidden1, hidden2, &mut rng),
            output: Dense::new(hidden2, input_dim, &mut rng),
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn latent_dim(&self) -> usize {
        self.dims.hidden2
    }

    fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims,
            seed: self.seed,
            encoder1: self.encoder1.zeros_like(),
            encoder2: self.encoder2.zeros_like(),
            decoder_init: self.decoder_init.zeros_like(),
            decoder1: self.decoder1.zeros_like(),
            decoder2: self.decoder2.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    /// All parameter tensors in a fixed order.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            &self.encoder1.w,
            &self.encoder1.b,
            &self.encoder2.w,
            &self.encoder2.b,
            &self.decoder_init.w,
            &self.decoder_init.b,
            &self.decoder1.w,
            &self.decoder1.b,
            &self.decoder2.w,
            &self.decoder2.b,
            &self.output.w,
            &self.output.b,
        ]
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.encoder1.w,
            &mut self.encoder1.b,
            &mut self.encoder2.w,
            &mut self.encoder2.b,
            &mut self.decoder_init.w,
            &mut self.decoder_init.b,
            &mut self.decoder1.w,
            &mut self.decoder1.b,
            &mut self.decoder2.w,
            &mut self.decoder2.b,
            &mut self.output.w,
            &mut self.output.b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters given, model has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for s in self.param_slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// SHA-256 of the complete model state.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in [
            self.dims.input_dim,
            self.dims.hidden1,
            self.dims.hidden2,
            self.dims.n_max,
        ] {
            h.update((v as u64).to_le_bytes());
        }
        h.update(self.seed.to_le_bytes());
        for s in self.param_slices() {
            for v in s {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(&h.finalize()[..])
    }

    fn encode_tapes(&self, series: &[f64], len: usize) -> (LstmTape, LstmTape) {
        let (d, h1) = (self.dims.input_dim, self.dims.hidden1);
        let enc1 = self.encoder1.forward(len, |t| &series[t * d..(t + 1) * d], None);
        let hs1 = enc1.outputs(h1);
        let enc2 = self.encoder2.forward(len, |t| &hs1[t * h1..(t + 1) * h1], None);
        (enc1, enc2)
    }

    /// Latent of one observed series (`len × d` values).
    pub fn encode(&self, series: &[f64], len: usize) -> Vec<f64> {
        let (_, enc2) = self.encode_tapes(series, len);
        enc2.last_h(self.dims.hidden2).to_vec()
    }

    fn run(&self, series: &[f64], len: usize, decode_steps: usize) -> SeriesTape {
        let ModelDims {
            input_dim: d,
            hidden1: h1,
            hidden2: h2,
            ..
        } = self.dims;
        let (enc1, enc2) = self.encode_tapes(series, len);
        let z = enc2.last_h(h2).to_vec();
        let mut h_init = vec![0.0; h1];
        self.decoder_init.apply(&z, &mut h_init);
        let dec1 = self.decoder1.forward(decode_steps, |_| &z, Some(&h_init));
        let hd1 = dec1.outputs(h1);
        let dec2 = self
            .decoder2
            .forward(decode_steps, |t| &hd1[t * h1..(t + 1) * h1], None);
        let hd2 = dec2.outputs(h2);
        let mut y = vec![0.0; decode_steps * d];
        for t in 0..decode_steps {
            self.output
                .apply(&hd2[t * h2..(t + 1) * h2], &mut y[t * d..(t + 1) * d]);
        }
        SeriesTape {
            enc1,
            enc2,
            h_init,
            dec1,
            dec2,
            y,
        }
    }

    /// Encodes the observed prefix and decodes `n_max` steps.
    pub fn forward(&self, series: &[f64], len: usize) -> Result<Forward> {
        let d = self.dims.input_dim;
        if len < 1 || series.len() < len * d {
            return Err(Error::Shape(format!(
                "series has {} values, need {len}×{d}",
                series.len()
            )));
        }
        let steps = self.dims.n_max.max(len);
        let tape = self.run(series, len, steps);
        let latent = tape.enc2.last_h(self.dims.hidden2).to_vec();
        if tape.y.iter().chain(&latent).any(|v| !v.is_finite()) {
            return Err(Error::NumericInstability {
                epoch: 0,
                batch: 0,
                message: "forward pass produced a non-finite value".into(),
            });
        }
        Ok(Forward {
            reconstruction: tape.y,
            latent,
        })
    }

    /// Forward pass for several dataset rows.
    pub fn forward_batch(&self, ds: &TimeSeriesDataset, indices: &[usize]) -> Result<Vec<Forward>> {
        self.check_dataset(ds)?;
        indices
            .iter()
            .map(|&i| self.forward(ds.observed(i), ds.lengths()[i]))
            .collect()
    }

    fn check_dataset(&self, ds: &TimeSeriesDataset) -> Result<()> {
        if ds.dim() != self.dims.input_dim {
            return Err(Error::Shape(format!(
                "dataset dimension {} does not match model input {}",
                ds.dim(),
                self.dims.input_dim
            )));
        }
        Ok(())
    }

    /// Sum of squared reconstruction errors of one series, with gradients
    /// accumulated into `grad` for loss `scale · Σ (y − x)²`.
    fn series_gradient(&self, series: &[f64], len: usize, scale: f64, grad: &mut Self) -> f64 {
        let ModelDims {
            input_dim: d,
            hidden1: h1,
            hidden2: h2,
            ..
        } = self.dims;
        let tape = self.run(series, len, len);
        let z = tape.enc2.last_h(h2);
        let hd1 = tape.dec1.outputs(h1);
        let hd2 = tape.dec2.outputs(h2);

        let mut sse = 0.0;
        let mut dhd2 = vec![0.0; len * h2];
        let mut dy = vec![0.0; d];
        for t in 0..len {
            for k in 0..d {
                let e = tape.y[t * d + k] - series[t * d + k];
                sse += e * e;
                dy[k] = 2.0 * scale * e;
            }
            let dh = self
                .output
                .backward(&hd2[t * h2..(t + 1) * h2], &dy, &mut grad.output);
            dhd2[t * h2..(t + 1) * h2].copy_from_slice(&dh);
        }

        let (dhd1, _) = self.decoder2.backward(
            &tape.dec2,
            |t| &hd1[t * h1..(t + 1) * h1],
            &dhd2,
            &mut grad.decoder2,
        );
        let (dz_steps, dh_init) =
            self.decoder1
                .backward(&tape.dec1, |_| z, &dhd1, &mut grad.decoder1);
        let mut dz = self.decoder_init.backward(z, &dh_init, &mut grad.decoder_init);
        debug_assert_eq!(tape.h_init.len(), h1);
        for t in 0..len {
            for k in 0..h2 {
                dz[k] += dz_steps[t * h2 + k];
            }
        }

        let mut dh_enc2 = vec![0.0; len * h2];
        dh_enc2[(len - 1) * h2..].copy_from_slice(&dz);
        let hs1 = tape.enc1.outputs(h1);
        let (dhs1, _) = self.encoder2.backward(
            &tape.enc2,
            |t| &hs1[t * h1..(t + 1) * h1],
            &dh_enc2,
            &mut grad.encoder2,
        );
        self.encoder1.backward(
            &tape.enc1,
            |t| &series[t * d..(t + 1) * d],
            &dhs1,
            &mut grad.encoder1,
        );
        sse
    }

    /// Masked mean squared reconstruction error over `indices`.
    pub fn batch_loss(&self, ds: &TimeSeriesDataset, indices: &[usize]) -> Result<f64> {
        self.check_dataset(ds)?;
        let entries = observed_entries(ds, indices);
        let mut sse = 0.0;
        for &i in indices {
            let len = ds.lengths()[i];
            let tape = self.run(ds.observed(i), len, len);
            sse += tape
                .y
                .iter()
                .zip(ds.observed(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok(sse / entries as f64)
    }

    /// Masked MSE over `indices` and its gradient (a model-shaped tensor set).
    ///
    /// Per-series gradients are computed independently and summed in index
    /// order, so the result does not depend on `exec`.
    pub fn batch_gradient(
        &self,
        ds: &TimeSeriesDataset,
        indices: &[usize],
        exec: Execution,
    ) -> Result<(f64, AutoencoderModel)> {
        self.check_dataset(ds)?;
        let entries = observed_entries(ds, indices);
        if entries == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let scale = 1.0 / entries as f64;
        let parts = exec.map_range(indices.len(), |n| {
            let i = indices[n];
            let mut g = self.zeros_like();
            let sse = self.series_gradient(ds.observed(i), ds.lengths()[i], scale, &mut g);
            (sse, g)
        });
        let mut total = self.zeros_like();
        let mut sse = 0.0;
        for (s, g) in parts {
            sse += s;
            for (acc, part) in total.param_slices_mut().into_iter().zip(g.param_slices()) {
                for (a, b) in acc.iter_mut().zip(part) {
                    *a += b;
                }
            }
        }
        Ok((sse * scale, total))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string(&ckpt)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let m = ckpt.model;
        let d = m.dims;
        let shapes_ok = m.encoder1.w.len() == 4 * d.hidden1 * (d.input_dim + d.hidden1)
            && m.encoder2.w.len() == 4 * d.hidden2 * (d.hidden1 + d.hidden2)
            && m.decoder_init.w.len() == d.hidden1 * d.hidden2
            && m.decoder1.w.len() == 4 * d.hidden1 * (d.hidden2 + d.hidden1)
            && m.decoder2.w.len() == 4 * d.hidden2 * (d.hidden1 + d.hidden2)
            && m.output.w.len() == d.input_dim * d.hidden2;
        if !shapes_ok || !m.is_finite() {
            return Err(Error::Validation("checkpoint tensors are inconsistent".into()));
        }
        Ok(m)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: AutoencoderModel,
}

fn observed_entries(ds: &TimeSeriesDataset, indices: &[usize]) -> usize {
    indices.iter().map(|&i| ds.lengths()[i]).sum::<usize>() * ds.dim()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.004,
            momentum: 0.0,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be ≥ 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be ≥ 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("clip norm must be > 0, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Masked MSE accumulated over each epoch's batches.
    pub losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

/// Minibatch SGD with momentum over the masked reconstruction loss.
///
/// Batches are consecutive chunks of a seeded shuffle, redrawn every epoch.
pub fn train(
    model: &AutoencoderModel,
    ds: &TimeSeriesDataset,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<(AutoencoderModel, TrainTrace)> {
    cfg.validate()?;
    model.check_dataset(ds)?;
    if ds.is_empty() {
        return Err(Error::Shape("cannot train on an empty dataset".into()));
    }
    let mut model = model.clone();
    let mut velocity = model.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut trace = TrainTrace {
        losses: Vec::with_capacity(cfg.epochs),
        epoch_seconds: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        let mut entries = 0usize;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, mut grad) = model.batch_gradient(ds, chunk, exec)?;
            let n = observed_entries(ds, chunk);
            if !loss.is_finite() {
                return Err(Error::NumericInstability {
                    epoch,
                    batch,
                    message: format!("loss is {loss}"),
                });
            }
            sse += loss * n as f64;
            entries += n;

            if let Some(max_norm) = cfg.clip_norm {
                let norm = grad
                    .param_slices()
                    .iter()
                    .flat_map(|s| s.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > max_norm {
                    let f = max_norm / norm;
                    for s in grad.param_slices_mut() {
                        s.iter_mut().for_each(|g| *g *= f);
                    }
                }
            }

            for ((p, v), g) in model
                .param_slices_mut()
                .into_iter()
                .zip(velocity.param_slices_mut())
                .zip(grad.param_slices())
            {
                for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = cfg.momentum * *v - cfg.learning_rate * g;
                    *p += *v;
                }
            }
            if !model.is_finite() {
                return Err(Error::NumericInstability {
                    epoch,
                    batch,
                    message: "parameters became non-finite".into(),
                });
            }
        }
        trace.losses.push(sse / entries as f64);
        trace.epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok((model, trace))
}

/// `M × h2` latent matrix, one row per series in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub source_model_fingerprint: String,
}

impl LatentMatrix {
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// CSV with header `series_id,z0,…`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let header: Vec<String> = (0..self.width()).map(|k| format!("z{k}")).collect();
        writeln!(out, "series_id,{}", header.join(",")).ok();
        for (id, row) in self.ids.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{id},{}", cells.join(",")).ok();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads a latent (or any feature) CSV; the fingerprint is left empty.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let width = reader.headers()?.len().saturating_sub(1);
        if width == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "expected series_id and at least one value column".into(),
            });
        }
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let line = row + 2;
            if record.len() != width + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} columns, got {}", width + 1, record.len()),
                });
            }
            ids.push(record[0].to_string());
            let r = record
                .iter()
                .skip(1)
                .map(|f| {
                    f.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("non-numeric value {f:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            values.push(r);
        }
        Ok(Self {
            ids,
            values,
            source_model_fingerprint: String::new(),
        })
    }
}

/// Runs the encoder over every series; row `i` is series `i`'s latent.
pub fn extract_aecs(
    model: &AutoencoderModel,
    ds: &TimeSeriesDataset,
    exec: Execution,
) -> Result<LatentMatrix> {
    model.check_dataset(ds)?;
    let values = exec.map_range(ds.len(), |i| model.encode(ds.observed(i), ds.lengths()[i]));
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NumericInstability {
            epoch: 0,
            batch: 0,
            message: "latent contains non-finite values".into(),
        });
    }
    Ok(LatentMatrix {
        ids: ds.ids().to_vec(),
        values,
        source_model_fingerprint: model.fingerprint(),
    })
}
