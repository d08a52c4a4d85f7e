use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::dtm::Dtm;
use crate::lexicon::{FeatureKind, FeatureMatrix};
use crate::textnorm::NormalizedDoc;
use crate::util;
use crate::{Error, Result};

const PHI_MAGIC: &[u8; 5] = b"SSPHI";
const PHI_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub k: usize,
    /// Symmetric document-topic prior; `None` means 50/K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl LdaParams {
    pub fn new(k: usize, seed: u64) -> Self {
        LdaParams { k, alpha: None, beta: 0.01, iterations: 1000, burn_in: 500, thin: 50, seed }
    }

    /// Shorter schedule used while scanning topic counts.
    pub fn for_selection(k: usize, seed: u64) -> Self {
        LdaParams { iterations: 300, burn_in: 150, thin: 25, ..Self::new(k, seed) }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.k == 0 || self.k > u16::MAX as usize {
            return bad(format!("topic count must be in 1..=65535, got {}", self.k));
        }
        if self.iterations <= self.burn_in {
            return bad(format!("iterations ({}) must exceed burn_in ({})", self.iterations, self.burn_in));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if !(self.alpha() > 0.0 && self.alpha().is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("priors must be positive, got alpha {} beta {}", self.alpha(), self.beta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab: Vec<String>,
    pub ad_ids: Vec<String>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Number of post-burn-in states averaged into phi and theta.
    pub samples: usize,
    /// Joint log-likelihood log p(w, z) after every sweep.
    pub log_likelihood: Vec<f64>,
    /// K × |V|, row-major.
    #[serde(skip)]
    pub phi: Vec<f64>,
    /// n_docs × K, row-major. Not restored by [`LdaModel::load`].
    #[serde(skip)]
    pub theta: Vec<f64>,
}

struct Counts {
    k: usize,
    v: usize,
    ndk: Vec<u32>,
    nwk: Vec<u32>,
    nk: Vec<u32>,
    nd: Vec<u32>,
}

impl Counts {
    fn log_likelihood(&self, alpha: f64, beta: f64) -> f64 {
        let (k, v) = (self.k as f64, self.v as f64);
        let mut ll = k * (ln_gamma(v * beta) - v * ln_gamma(beta));
        ll += self.nwk.iter().map(|&c| ln_gamma(c as f64 + beta)).sum::<f64>();
        ll -= self.nk.iter().map(|&c| ln_gamma(c as f64 + v * beta)).sum::<f64>();
        let docs = self.nd.len() as f64;
        ll += docs * (ln_gamma(k * alpha) - k * ln_gamma(alpha));
        ll += self.ndk.iter().map(|&c| ln_gamma(c as f64 + alpha)).sum::<f64>();
        ll -= self.nd.iter().map(|&c| ln_gamma(c as f64 + k * alpha)).sum::<f64>();
        ll
    }

    fn check(&self, z: &[Vec<u16>]) {
        for (d, zs) in z.iter().enumerate() {
            let row = &self.ndk[d * self.k..(d + 1) * self.k];
            debug_assert_eq!(row.iter().sum::<u32>() as usize, zs.len());
        }
        for t in 0..self.k {
            let by_word: u32 = (0..self.v).map(|w| self.nwk[w * self.k + t]).sum();
            let by_doc: u32 = (0..self.nd.len()).map(|d| self.ndk[d * self.k + t]).sum();
            debug_assert_eq!(by_word, self.nk[t]);
            debug_assert_eq!(by_doc, self.nk[t]);
        }
    }
}

/// Collapsed Gibbs sampling; phi and theta are averaged over states taken
/// every `thin` sweeps after burn-in, plus the final state.
pub fn fit_lda(dtm: &Dtm, params: &LdaParams) -> Result<LdaModel> {
    params.validate()?;
    let (k, v) = (params.k, dtm.vocab.len());
    if v == 0 {
        return Err(Error::EmptyVocabulary);
    }
    let (alpha, beta) = (params.alpha(), params.beta);
    let n_tokens = dtm.n_tokens();
    if k > n_tokens {
        warn!("{k} topics for only {n_tokens} tokens");
    }
    let n_docs = dtm.n_docs();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut c = Counts { k, v, ndk: vec![0; n_docs * k], nwk: vec![0; v * k], nk: vec![0; k], nd: vec![0; n_docs] };
    let mut z: Vec<Vec<u16>> = Vec::with_capacity(n_docs);
    for (d, doc) in dtm.doc_tokens.iter().enumerate() {
        let zs: Vec<u16> = doc.iter().map(|_| rng.random_range(0..k) as u16).collect();
        for (&w, &t) in doc.iter().zip(&zs) {
            c.ndk[d * k + t as usize] += 1;
            c.nwk[w as usize * k + t as usize] += 1;
            c.nk[t as usize] += 1;
        }
        c.nd[d] = doc.len() as u32;
        z.push(zs);
    }

    let vbeta = v as f64 * beta;
    let mut cum = vec![0.0; k];
    let mut phi_sum = vec![0.0; k * v];
    let mut theta_sum = vec![0.0; n_docs * k];
    let mut samples = 0;
    let mut trace = Vec::with_capacity(params.iterations);
    for it in 1..=params.iterations {
        for (d, doc) in dtm.doc_tokens.iter().enumerate() {
            let ndk = &mut c.ndk[d * k..(d + 1) * k];
            for (i, &w) in doc.iter().enumerate() {
                let w = w as usize;
                let old = z[d][i] as usize;
                let nwk = &mut c.nwk[w * k..(w + 1) * k];
                ndk[old] -= 1;
                nwk[old] -= 1;
                c.nk[old] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (ndk[t] as f64 + alpha) * (nwk[t] as f64 + beta) / (c.nk[t] as f64 + vbeta);
                    cum[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = cum.iter().position(|&x| x > u).unwrap_or(k - 1);
                ndk[new] += 1;
                nwk[new] += 1;
                c.nk[new] += 1;
                z[d][i] = new as u16;
            }
        }
        if cfg!(debug_assertions) {
            c.check(&z);
        }
        trace.push(c.log_likelihood(alpha, beta));
        if it > params.burn_in && ((it - params.burn_in) % params.thin == 0 || it == params.iterations) {
            samples += 1;
            for t in 0..k {
                let denom = c.nk[t] as f64 + vbeta;
                for w in 0..v {
                    phi_sum[t * v + w] += (c.nwk[w * k + t] as f64 + beta) / denom;
                }
            }
            for d in 0..n_docs {
                let denom = c.nd[d] as f64 + k as f64 * alpha;
                for t in 0..k {
                    theta_sum[d * k + t] += (c.ndk[d * k + t] as f64 + alpha) / denom;
                }
            }
        }
    }
    let s = samples as f64;
    Ok(LdaModel {
        k,
        alpha,
        beta,
        vocab: dtm.vocab.clone(),
        ad_ids: dtm.ad_ids.clone(),
        iterations: params.iterations,
        burn_in: params.burn_in,
        thin: params.thin,
        seed: params.seed,
        samples,
        log_likelihood: trace,
        phi: phi_sum.into_iter().map(|x| x / s).collect(),
        theta: theta_sum.into_iter().map(|x| x / s).collect(),
    })
}

/// Topic proportions of a new document with phi held fixed. The first half
/// of the sweeps is discarded; the rest are averaged.
pub fn infer_theta(doc: &NormalizedDoc, m: &LdaModel, iterations: usize, seed: u64) -> Vec<f64> {
    let index: HashMap<&str, usize> = m.vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let ids: Vec<usize> = doc.tokens.iter().filter_map(|t| index.get(t.as_str()).copied()).collect();
    let k = m.k;
    if ids.is_empty() || iterations == 0 {
        return vec![1.0 / k as f64; k];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<usize> = ids.iter().map(|_| rng.random_range(0..k)).collect();
    let mut ndk = vec![0u32; k];
    for &t in &z {
        ndk[t] += 1;
    }
    let denom = ids.len() as f64 + k as f64 * m.alpha;
    let burn = iterations / 2;
    let mut sum = vec![0.0; k];
    let mut cum = vec![0.0; k];
    for it in 0..iterations {
        for (i, &w) in ids.iter().enumerate() {
            ndk[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += (ndk[t] as f64 + m.alpha) * m.phi[t * m.vocab.len() + w];
                cum[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = cum.iter().position(|&x| x > u).unwrap_or(k - 1);
            ndk[new] += 1;
            z[i] = new;
        }
        if it >= burn {
            for t in 0..k {
                sum[t] += (ndk[t] as f64 + m.alpha) / denom;
            }
        }
    }
    let s = (iterations - burn) as f64;
    sum.into_iter().map(|x| x / s).collect()
}

/// Index of the largest probability; ties go to the lowest index.
pub fn dominant_topic(theta_row: &[f64]) -> usize {
    util::argmax(theta_row)
}

impl LdaModel {
    pub fn n_docs(&self) -> usize {
        self.theta.len() / self.k
    }

    pub fn phi_row(&self, t: usize) -> &[f64] {
        let v = self.vocab.len();
        &self.phi[t * v..(t + 1) * v]
    }

    pub fn theta_row(&self, d: usize) -> &[f64] {
        &self.theta[d * self.k..(d + 1) * self.k]
    }

    pub fn topic_names(k: usize) -> Vec<String> {
        (1..=k).map(|t| format!("topic{t}prob")).collect()
    }

    /// Per-ad topic probabilities as a feature matrix.
    pub fn theta_features(&self) -> Result<FeatureMatrix> {
        FeatureMatrix::new("lda", self.ad_ids.clone(), Self::topic_names(self.k), FeatureKind::Probability, self.theta.clone())
    }

    pub fn write_theta(&self, path: &Path) -> Result<()> {
        self.theta_features()?.write_csv(path)
    }

    fn phi_path(stem: &Path) -> PathBuf {
        stem.with_extension("phi.bin")
    }

    fn header_path(stem: &Path) -> PathBuf {
        stem.with_extension("json")
    }

    /// Writes `<stem>.json` and `<stem>.phi.bin`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let header = Self::header_path(stem);
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json("LDA header", e))?;
        util::write_string(&header, &json)?;
        let path = Self::phi_path(stem);
        let mut w = util::create(&path)?;
        let mut buf = Vec::with_capacity(14 + self.phi.len() * 8);
        buf.extend_from_slice(PHI_MAGIC);
        buf.push(PHI_VERSION);
        buf.extend_from_slice(&(self.k as u32).to_le_bytes());
        buf.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        for x in &self.phi {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    }

    /// Restores a saved model; `theta` is left empty.
    pub fn load(stem: &Path) -> Result<Self> {
        let header = Self::header_path(stem);
        let mut m: LdaModel =
            serde_json::from_str(&util::read_to_string(&header)?).map_err(|e| Error::json(header.display().to_string(), e))?;
        let path = Self::phi_path(stem);
        let mut bytes = Vec::new();
        util::open(&path)?.read_to_end(&mut bytes).map_err(|e| Error::io(&path, e))?;
        if bytes.len() < 14 || &bytes[..5] != PHI_MAGIC || bytes[5] != PHI_VERSION {
            return Err(Error::Model(format!("{} is not a phi matrix file", path.display())));
        }
        let k = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let v = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
        if k != m.k || v != m.vocab.len() || bytes.len() != 14 + k * v * 8 {
            return Err(Error::Model(format!("{} does not match its header", path.display())));
        }
        m.phi = bytes[14..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(m)
    }
}
