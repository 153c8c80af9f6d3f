use std::cmp::Ordering;

use super::VampireConfig;
use crate::corpus::{to_sparse_rows, CountVector, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::dropout::{dropout_backward, dropout_mask};
use crate::numerics::ops::{activate, activate_backward, log_softmax_in_place, softmax, softmax_backward};
use crate::numerics::{
    Adam, BatchNorm, BatchNormCache, HasParameters, Linear, Mode, Parameter, Rng, SparseRows, Tensor,
};

/// Floor added to relative frequencies before taking the log background.
const BACKGROUND_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct VampireModel {
    pub config: VampireConfig,
    pub vocab_hash: String,
    pub encoder: Vec<Linear>,
    pub mu: Linear,
    pub log_sigma: Linear,
    /// Topic matrix B, `[K × V]`.
    pub topics: Parameter,
    /// Background log-frequency b, `[1 × V]`.
    pub background: Parameter,
    pub bn: BatchNorm,
    /// Stopping-criterion value and epoch of the checkpoint, once trained.
    pub criterion_value: Option<f64>,
    pub epoch: usize,
}

/// Per-document internal states, one row per document.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderStates {
    /// `h⁽¹⁾ … h⁽ⁿ⁾`, each `[batch × K]`.
    pub hidden: Vec<Tensor>,
    pub mu: Tensor,
    pub sigma: Tensor,
    pub theta: Tensor,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.theta.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.rows() == 0
    }

    /// Mixable sources for one document: θ first, then each hidden layer.
    pub fn sources(&self, row: usize) -> Vec<&[f64]> {
        let mut out = vec![self.theta.row(row)];
        out.extend(self.hidden.iter().map(|h| h.row(row)));
        out
    }
}

/// Frozen-model features; degenerate documents get zero hidden states and a
/// uniform θ and are flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub states: EncoderStates,
    pub degenerate: Vec<bool>,
}

/// Batch means of the bound's terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub reconstruction: f64,
    pub kl: f64,
    pub kl_weight: f64,
    pub objective: f64,
}

/// The random inputs of one stochastic forward pass, drawn up front so a pass
/// can be replayed exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub eps: Tensor,
    /// Inverted-dropout multipliers on z.
    pub mask: Option<Tensor>,
}

impl Noise {
    pub fn sample(rows: usize, k: usize, z_dropout: f64, mode: Mode, rng: &mut Rng) -> Result<Self> {
        let mut eps = Tensor::zeros(rows, k);
        for e in eps.data_mut() {
            *e = rng.normal();
        }
        let mask = if mode == Mode::Train && z_dropout > 0.0 {
            Some(dropout_mask(rows, k, z_dropout, rng)?)
        } else {
            None
        };
        Ok(Noise { eps, mask })
    }

    /// ε = 0 and no dropout: z = μ.
    pub fn zero(rows: usize, k: usize) -> Self {
        Noise {
            eps: Tensor::zeros(rows, k),
            mask: None,
        }
    }
}

/// Everything backward needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    x: SparseRows,
    totals: Vec<f64>,
    pre: Vec<Tensor>,
    hidden: Vec<Tensor>,
    mu: Tensor,
    sigma: Tensor,
    noise: Noise,
    theta: Tensor,
    bn: Option<BatchNormCache>,
    log_eta: Tensor,
    kl_weight: f64,
}

impl ForwardCache {
    pub fn theta(&self) -> &Tensor {
        &self.theta
    }

    pub fn log_eta(&self) -> &Tensor {
        &self.log_eta
    }
}

/// `z = μ + σ ⊙ ε`.
pub fn reparameterize(mu: &Tensor, sigma: &Tensor, eps: &Tensor) -> Result<Tensor> {
    let mut z = sigma.hadamard(eps)?;
    z.add_assign(mu)?;
    Ok(z)
}

/// One reparameterized draw with ε ~ N(0, I).
pub fn sample_latent(mu: &Tensor, sigma: &Tensor, rng: &mut Rng) -> Result<Tensor> {
    let noise = Noise::sample(mu.rows(), mu.cols(), 0.0, Mode::Eval, rng)?;
    reparameterize(mu, sigma, &noise.eps)
}

/// `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − 2 ln σ)`.
pub fn kl_divergence(mu: &[f64], sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(sigma)
        .map(|(m, s)| m * m + s * s - 1.0 - 2.0 * s.ln())
        .sum::<f64>()
}

/// `Σ_j c_j ln η_j` over the nonzero counts.
pub fn reconstruction_log_prob(counts: &[(u32, f64)], log_eta: &[f64]) -> f64 {
    counts.iter().map(|&(j, c)| c * log_eta[j as usize]).sum()
}

fn kl_from_log_sigma(mu: &[f64], log_sigma: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(log_sigma)
        .map(|(m, ls)| m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls)
        .sum::<f64>()
}

impl VampireModel {
    /// Fresh model. `background` is the log background distribution (see
    /// [`VampireModel::background_from_counts`]); the batchnorm shift starts
    /// at the same values so the background survives normalization.
    pub fn new(config: VampireConfig, background: &[f64], vocab_hash: impl Into<String>) -> Result<Self> {
        config.validate()?;
        let v = background.len();
        if v == 0 {
            return Err(Error::InvalidInput("empty vocabulary".into()));
        }
        let k = config.hidden_dim;
        let mut rng = Rng::new(config.seed).derive(0x1417);
        let mut encoder = Vec::with_capacity(config.encoder_layers);
        for l in 0..config.encoder_layers {
            let in_dim = if l == 0 { v } else { k };
            encoder.push(Linear::glorot(&format!("encoder.{l}"), in_dim, k, &mut rng));
        }
        let mu = Linear::glorot("mu", k, k, &mut rng);
        let log_sigma = Linear::glorot("log_sigma", k, k, &mut rng);
        let limit = (6.0 / (k + v) as f64).sqrt();
        let mut b = Tensor::zeros(k, v);
        for w in b.data_mut() {
            *w = rng.uniform_range(-limit, limit);
        }
        let topics = Parameter::new("topics", b);
        let bg = Tensor::row_vector(background);
        let background = if config.update_background {
            Parameter::new("background", bg.clone())
        } else {
            Parameter::frozen("background", bg.clone())
        };
        let mut bn = BatchNorm::new("bn", v);
        if config.batchnorm {
            bn.beta.value = bg;
        } else {
            bn.gamma.trainable = false;
            bn.beta.trainable = false;
        }
        Ok(VampireModel {
            config,
            vocab_hash: vocab_hash.into(),
            encoder,
            mu,
            log_sigma,
            topics,
            background,
            bn,
            criterion_value: None,
            epoch: 0,
        })
    }

    /// `ln(relative frequency + 1e−10)` over a corpus of count vectors.
    pub fn background_from_counts(docs: &[CountVector], vocab_size: usize) -> Vec<f64> {
        let mut freq = vec![0.0; vocab_size];
        let mut total = 0.0;
        for d in docs {
            for &(j, c) in d.entries() {
                freq[j as usize] += c as f64;
                total += c as f64;
            }
        }
        freq.iter()
            .map(|&f| (if total > 0.0 { f / total } else { 0.0 } + BACKGROUND_FLOOR).ln())
            .collect()
    }

    pub fn vocab_size(&self) -> usize {
        self.topics.value.cols()
    }

    /// K: latent dimension, topic count and hidden width.
    pub fn num_topics(&self) -> usize {
        self.topics.value.rows()
    }

    /// Number of trainable scalars (frozen background excluded).
    pub fn count_parameters(&self) -> usize {
        self.trainable_size()
    }

    pub fn batch(&self, docs: &[&CountVector]) -> Result<SparseRows> {
        let v = self.vocab_size();
        if let Some(bad) = docs.iter().position(|d| d.max_id().is_some_and(|m| m as usize >= v)) {
            return Err(Error::InvalidInput(format!(
                "document {bad} has word ids beyond the model vocabulary of {v}"
            )));
        }
        Ok(to_sparse_rows(docs, v))
    }

    fn check_nondegenerate(x: &SparseRows) -> Result<()> {
        match x.rows.iter().position(|r| r.iter().all(|&(_, c)| c == 0.0)) {
            Some(i) => Err(Error::InvalidInput(format!("document {i} in batch has no counts"))),
            None => Ok(()),
        }
    }

    /// Encoder pre-activations, hidden states, μ and ln σ.
    fn run_encoder(&self, x: &SparseRows) -> Result<(Vec<Tensor>, Vec<Tensor>, Tensor, Tensor)> {
        let act = self.config.encoder_activation;
        let mut pre = Vec::with_capacity(self.encoder.len());
        let mut hidden: Vec<Tensor> = Vec::with_capacity(self.encoder.len());
        for (l, layer) in self.encoder.iter().enumerate() {
            let a = match hidden.last() {
                None if l == 0 => layer.forward_sparse(x)?,
                Some(h) => layer.forward(h)?,
                None => unreachable!(),
            };
            hidden.push(activate(&a, act));
            pre.push(a);
        }
        let h = hidden.last().expect("at least one encoder layer");
        let mu = self.mu.forward(h)?;
        let log_sigma = self.log_sigma.forward(h)?;
        Ok((pre, hidden, mu, log_sigma))
    }

    /// Hidden states, μ, σ and θ = softmax(μ) for non-degenerate documents.
    pub fn encode(&self, x: &SparseRows) -> Result<EncoderStates> {
        Self::check_nondegenerate(x)?;
        let (_, hidden, mu, log_sigma) = self.run_encoder(x)?;
        Ok(EncoderStates {
            theta: softmax(&mu),
            sigma: log_sigma.map(f64::exp),
            hidden,
            mu,
        })
    }

    /// Eval-mode states with z = μ. Pure in `(docs, self)`.
    pub fn extract_features(&self, docs: &[&CountVector]) -> Result<Features> {
        let k = self.num_topics();
        let degenerate: Vec<bool> = docs.iter().map(|d| d.is_degenerate()).collect();
        let live: Vec<&CountVector> = docs.iter().copied().filter(|d| !d.is_degenerate()).collect();
        let n = docs.len();
        let mut states = EncoderStates {
            hidden: vec![Tensor::zeros(n, k); self.encoder.len()],
            mu: Tensor::zeros(n, k),
            sigma: Tensor::filled(n, k, 1.0),
            theta: Tensor::filled(n, k, 1.0 / k as f64),
        };
        if live.is_empty() {
            return Ok(Features { states, degenerate });
        }
        let enc = self.encode(&self.batch(&live)?)?;
        let mut src = 0;
        for (row, &skip) in degenerate.iter().enumerate() {
            if skip {
                continue;
            }
            for (dst, from) in states.hidden.iter_mut().zip(&enc.hidden) {
                dst.row_mut(row).copy_from_slice(from.row(src));
            }
            states.mu.row_mut(row).copy_from_slice(enc.mu.row(src));
            states.sigma.row_mut(row).copy_from_slice(enc.sigma.row(src));
            states.theta.row_mut(row).copy_from_slice(enc.theta.row(src));
            src += 1;
        }
        Ok(Features { states, degenerate })
    }

    /// θ from z (after the dropout mask, if any), then the decoder's log word
    /// distribution. Returns θ, ln η and the batchnorm cache.
    pub fn decode(
        &self,
        z: &Tensor,
        mask: Option<&Tensor>,
        mode: Mode,
    ) -> Result<(Tensor, Tensor, Option<BatchNormCache>)> {
        let dropped = match mask {
            Some(m) => z.hadamard(m)?,
            None => z.clone(),
        };
        let theta = softmax(&dropped);
        let mut logits = theta.matmul(&self.topics.value)?;
        crate::numerics::ops::add_row_bias(&mut logits, self.background.value.data());
        let (mut out, cache) = if self.config.batchnorm {
            let (y, c) = self.bn.forward(&logits, mode)?;
            (y, Some(c))
        } else {
            (logits, None)
        };
        for r in 0..out.rows() {
            log_softmax_in_place(out.row_mut(r));
        }
        Ok((theta, out, cache))
    }

    /// Full stochastic pass with the given noise. Batch-mean terms.
    pub fn forward(&self, x: &SparseRows, noise: &Noise, mode: Mode, kl_weight: f64) -> Result<(ElboTerms, ForwardCache)> {
        Self::check_nondegenerate(x)?;
        let (pre, hidden, mu, log_sigma) = self.run_encoder(x)?;
        let sigma = log_sigma.map(f64::exp);
        let z = reparameterize(&mu, &sigma, &noise.eps)?;
        let (theta, log_eta, bn) = self.decode(&z, noise.mask.as_ref(), mode)?;

        let n = x.rows.len() as f64;
        let mut recon = 0.0;
        let mut kl = 0.0;
        let mut totals = Vec::with_capacity(x.rows.len());
        for (i, row) in x.rows.iter().enumerate() {
            recon += reconstruction_log_prob(row, log_eta.row(i));
            kl += kl_from_log_sigma(mu.row(i), log_sigma.row(i));
            totals.push(row.iter().map(|&(_, c)| c).sum());
        }
        let (recon, kl) = (recon / n, kl / n);
        let terms = ElboTerms {
            reconstruction: recon,
            kl,
            kl_weight,
            objective: recon - kl_weight * kl,
        };
        if !terms.objective.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite bound over {} documents (reconstruction {recon}, kl {kl})",
                x.rows.len()
            )));
        }
        let cache = ForwardCache {
            x: x.clone(),
            totals,
            pre,
            hidden,
            mu,
            sigma,
            noise: noise.clone(),
            theta,
            bn,
            log_eta,
            kl_weight,
        };
        Ok((terms, cache))
    }

    /// Accumulates gradients of the loss `−objective` into every parameter.
    pub fn backward(&mut self, cache: &ForwardCache) -> Result<()> {
        let n = cache.x.rows.len() as f64;
        let w = cache.kl_weight;

        // ∂loss/∂(normalized logits) = (N_i η − c_i) / n
        let mut d = cache.log_eta.clone();
        for (i, row) in cache.x.rows.iter().enumerate() {
            let scale = cache.totals[i] / n;
            let dr = d.row_mut(i);
            for v in dr.iter_mut() {
                *v = v.exp() * scale;
            }
            for &(j, c) in row {
                dr[j as usize] -= c / n;
            }
        }
        let d_logits = match &cache.bn {
            Some(bn_cache) => self.bn.backward(bn_cache, &d)?,
            None => d,
        };
        if self.background.trainable {
            self.background.grad.add_assign(&d_logits.column_sums())?;
        }
        cache
            .theta
            .accumulate_transposed_product(&d_logits, &mut self.topics.grad)?;
        let d_theta = d_logits.matmul_transposed(&self.topics.value)?;
        let d_z = dropout_backward(cache.noise.mask.as_ref(), &softmax_backward(&cache.theta, &d_theta)?)?;

        let mut d_mu = d_z.clone();
        let mut d_ls = d_z;
        for (((dm, dl), (&m, &s)), &e) in d_mu
            .data_mut()
            .iter_mut()
            .zip(d_ls.data_mut())
            .zip(cache.mu.data().iter().zip(cache.sigma.data()))
            .zip(cache.noise.eps.data())
        {
            let dz = *dm;
            *dm = dz + w * m / n;
            *dl = dz * e * s + w * (s * s - 1.0) / n;
        }
        let h_last = cache.hidden.last().expect("at least one encoder layer");
        let mut dh = self.mu.backward(h_last, &d_mu)?;
        dh.add_assign(&self.log_sigma.backward(h_last, &d_ls)?)?;

        let act = self.config.encoder_activation;
        for l in (0..self.encoder.len()).rev() {
            let da = activate_backward(&cache.pre[l], &cache.hidden[l], act, &dh)?;
            if l == 0 {
                self.encoder[0].backward_sparse(&cache.x, &da)?;
            } else {
                dh = self.encoder[l].backward(&cache.hidden[l - 1], &da)?;
            }
        }
        Ok(())
    }

    /// ELBO terms for a batch with freshly drawn noise.
    pub fn elbo(&self, docs: &[&CountVector], kl_weight: f64, rng: &mut Rng, mode: Mode) -> Result<ElboTerms> {
        let x = self.batch(docs)?;
        let noise = Noise::sample(x.rows.len(), self.num_topics(), self.config.z_dropout, mode, rng)?;
        Ok(self.forward(&x, &noise, mode, kl_weight)?.0)
    }

    /// Deterministic per-document negative bound (full KL weight, z = μ,
    /// eval-mode batchnorm), averaged over the non-degenerate documents.
    pub fn negative_log_likelihood(&self, docs: &[CountVector]) -> Result<f64> {
        let live: Vec<&CountVector> = docs.iter().filter(|d| !d.is_degenerate()).collect();
        if live.is_empty() {
            return Err(Error::InvalidInput("no documents to score".into()));
        }
        let mut total = 0.0;
        for chunk in live.chunks(256) {
            let x = self.batch(chunk)?;
            let noise = Noise::zero(chunk.len(), self.num_topics());
            let (terms, _) = self.forward(&x, &noise, Mode::Eval, 1.0)?;
            total -= terms.objective * chunk.len() as f64;
        }
        Ok(total / live.len() as f64)
    }

    /// One Adam ascent step on the bound; updates batchnorm running
    /// statistics.
    pub fn train_step(&mut self, x: &SparseRows, kl_weight: f64, adam: &Adam, rng: &mut Rng) -> Result<ElboTerms> {
        let noise = Noise::sample(x.rows.len(), self.num_topics(), self.config.z_dropout, Mode::Train, rng)?;
        let (terms, cache) = self.forward(x, &noise, Mode::Train, kl_weight)?;
        self.zero_grads();
        self.backward(&cache)?;
        if let Some(bn_cache) = &cache.bn {
            self.bn.update_running(bn_cache);
        }
        adam.step(self.parameters_mut())?;
        Ok(terms)
    }

    /// The `n` highest-weight word ids of each row of B, descending, ties
    /// broken by lower id.
    pub fn topic_ids(&self, n: usize) -> Vec<Vec<u32>> {
        let v = self.vocab_size();
        self.topics
            .value
            .rows_iter()
            .map(|row| {
                let mut ids: Vec<u32> = (0..v as u32).collect();
                let by_weight = |a: &u32, b: &u32| {
                    row[*b as usize]
                        .partial_cmp(&row[*a as usize])
                        .unwrap_or(Ordering::Equal)
                        .then(a.cmp(b))
                };
                let n = n.min(v);
                if n < v {
                    ids.select_nth_unstable_by(n, by_weight);
                    ids.truncate(n);
                }
                ids.sort_by(by_weight);
                ids
            })
            .collect()
    }

    /// Ranked words per topic.
    pub fn topics(&self, vocab: &Vocabulary, n: usize) -> Result<Vec<Vec<String>>> {
        if n > self.vocab_size() {
            return Err(Error::InvalidInput(format!(
                "asked for {n} words per topic from a vocabulary of {}",
                self.vocab_size()
            )));
        }
        if vocab.len() != self.vocab_size() {
            return Err(Error::InvalidInput(format!(
                "vocabulary has {} words, model expects {}",
                vocab.len(),
                self.vocab_size()
            )));
        }
        Ok(self
            .topic_ids(n)
            .into_iter()
            .map(|ids| ids.iter().map(|&i| vocab.token(i).unwrap_or("").to_string()).collect())
            .collect())
    }
}

impl HasParameters for VampireModel {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for l in &self.encoder {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.extend([
            &self.mu.weight,
            &self.mu.bias,
            &self.log_sigma.weight,
            &self.log_sigma.bias,
            &self.topics,
            &self.background,
            &self.bn.gamma,
            &self.bn.beta,
        ]);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for l in &mut self.encoder {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.extend([
            &mut self.mu.weight,
            &mut self.mu.bias,
            &mut self.log_sigma.weight,
            &mut self.log_sigma.bias,
            &mut self.topics,
            &mut self.background,
            &mut self.bn.gamma,
            &mut self.bn.beta,
        ]);
        out
    }
}
