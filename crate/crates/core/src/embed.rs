//! Skip-gram word embeddings with negative sampling, and assignment of ads
//! to domain-specific skill categories by averaged-vector cosine.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lexicon::{intensity, FeatureKind, FeatureMatrix, SkillCategory, SkillScheme};
use crate::textnorm::NormalizedDoc;
use crate::util;
use crate::{Error, Result};

const MAGIC: &[u8; 5] = b"SSEMB";
const VERSION: u8 = 1;
pub const UNASSIGNED: &str = "unassigned";
pub const DOMAIN_COLUMN: &str = "domain_intensity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub window: usize,
    pub negative: usize,
    pub min_count: u64,
    pub epochs: usize,
    /// Initial rate, decayed linearly towards zero over all epochs.
    pub learning_rate: f64,
    /// Frequent-word subsampling threshold; off when `None`.
    pub subsample: Option<f64>,
    pub seed: u64,
}

impl EmbeddingParams {
    pub fn new(seed: u64) -> Self {
        EmbeddingParams { dim: 100, window: 5, negative: 5, min_count: 5, epochs: 5, learning_rate: 0.025, subsample: None, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 2 || self.window < 1 || self.min_count < 1 {
            return Err(Error::InvalidParameter(format!(
                "embedding needs dim >= 2, window >= 1, min_count >= 1 (got {}, {}, {})",
                self.dim, self.window, self.min_count
            )));
        }
        if !(self.learning_rate > 0.0) || self.subsample.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::InvalidParameter("learning rate and subsampling threshold must be positive".into()));
        }
        Ok(())
    }
}

/// Domain-specific skill categories, in assignment priority order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScheme {
    pub domains: Vec<SkillCategory>,
}

impl From<SkillScheme> for DomainScheme {
    fn from(s: SkillScheme) -> Self {
        DomainScheme { domains: s.categories }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub dim: usize,
    pub vocab: Vec<String>,
    pub counts: Vec<u64>,
    pub meta: EmbeddingParams,
    vectors: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingModel {
    fn new(vocab: Vec<String>, counts: Vec<u64>, vectors: Vec<f64>, meta: EmbeddingParams) -> Self {
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        EmbeddingModel { dim: meta.dim, vocab, counts, meta, vectors, index }
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// Binary model at `path` plus a JSON sidecar of the training settings.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.push(VERSION);
        for v in [self.dim, self.vocab.len(), self.meta.window, self.meta.negative, self.meta.epochs] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&self.meta.min_count.to_le_bytes());
        buf.extend_from_slice(&self.meta.learning_rate.to_le_bytes());
        buf.extend_from_slice(&self.meta.subsample.unwrap_or(0.0).to_le_bytes());
        buf.extend_from_slice(&self.meta.seed.to_le_bytes());
        for (w, c) in self.vocab.iter().zip(&self.counts) {
            buf.extend_from_slice(&(w.len() as u32).to_le_bytes());
            buf.extend_from_slice(w.as_bytes());
            buf.extend_from_slice(&c.to_le_bytes());
        }
        for x in &self.vectors {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let mut f = util::create(path)?;
        f.write_all(&buf).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))?;
        let meta = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::json("embedding meta", e))?;
        util::write_string(&Self::sidecar(path), &meta)
    }

    pub fn sidecar(path: &Path) -> PathBuf {
        path.with_extension("meta.json")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        util::open(path)?.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let bad = || Error::Model(format!("{} is not a valid embedding file", path.display()));
        let mut r = ByteReader { bytes: &bytes, pos: 0 };
        if r.take(5).ok_or_else(bad)? != MAGIC || r.take(1).ok_or_else(bad)?[0] != VERSION {
            return Err(bad());
        }
        let mut u32s = [0usize; 5];
        for v in &mut u32s {
            *v = r.u32().ok_or_else(bad)? as usize;
        }
        let [dim, n, window, negative, epochs] = u32s;
        let min_count = r.u64().ok_or_else(bad)?;
        let learning_rate = r.f64().ok_or_else(bad)?;
        let subsample = r.f64().ok_or_else(bad)?;
        let seed = r.u64().ok_or_else(bad)?;
        let mut vocab = Vec::with_capacity(n);
        let mut counts = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32().ok_or_else(bad)? as usize;
            let w = String::from_utf8(r.take(len).ok_or_else(bad)?.to_vec()).map_err(|_| bad())?;
            vocab.push(w);
            counts.push(r.u64().ok_or_else(bad)?);
        }
        let vectors: Vec<f64> = (0..n * dim).map(|_| r.f64()).collect::<Option<_>>().ok_or_else(bad)?;
        if r.pos != bytes.len() {
            return Err(bad());
        }
        let meta = EmbeddingParams {
            dim,
            window,
            negative,
            min_count,
            epochs,
            learning_rate,
            subsample: (subsample > 0.0).then_some(subsample),
            seed,
        };
        Ok(EmbeddingModel::new(vocab, counts, vectors, meta))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }
    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }
    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

/// Trains on the corpus documents followed by one pseudo-document per
/// domain made of its keywords.
pub fn train_embeddings(docs: &[NormalizedDoc], scheme: &DomainScheme, params: &EmbeddingParams) -> Result<EmbeddingModel> {
    let mut sentences: Vec<&[String]> = docs.iter().map(|d| d.tokens.as_slice()).collect();
    let keyword_docs: Vec<Vec<String>> =
        scheme.domains.iter().map(|d| d.keywords().iter().flatten().cloned().collect()).collect();
    sentences.extend(keyword_docs.iter().map(Vec::as_slice));
    train_sentences(&sentences, params)
}

fn initial_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
    let half = 0.5 / dim as f64;
    (0..n * dim).map(|_| rng.random_range(-half..half)).collect()
}

/// Skip-gram training on arbitrary token sentences.
pub fn train_sentences(sentences: &[&[String]], params: &EmbeddingParams) -> Result<EmbeddingModel> {
    params.validate()?;
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for t in s.iter() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, c)| c >= params.min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let vocab: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
    let counts: Vec<u64> = kept.iter().map(|&(_, c)| c).collect();
    let index: HashMap<&str, u32> = kept.iter().enumerate().map(|(i, (w, _))| (*w, i as u32)).collect();
    let corpus: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();

    let dim = params.dim;
    let n = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut input = initial_vectors(&mut rng, n, dim);
    let mut output = vec![0.0; n * dim];

    let mut noise = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        noise.push(acc);
    }
    let total_tokens: u64 = counts.iter().sum();
    let keep_prob: Vec<f64> = match params.subsample {
        Some(t) => counts
            .iter()
            .map(|&c| {
                let f = c as f64 / (t * total_tokens as f64);
                ((f.sqrt() + 1.0) / f).min(1.0)
            })
            .collect(),
        None => vec![1.0; n],
    };

    let planned = (params.epochs as f64) * corpus.iter().map(Vec::len).sum::<usize>() as f64;
    let mut processed = 0.0;
    let mut grad = vec![0.0; dim];
    let mut sentence = Vec::new();
    for _ in 0..params.epochs {
        for s in &corpus {
            sentence.clear();
            for &w in s {
                if keep_prob[w as usize] >= 1.0 || rng.random::<f64>() < keep_prob[w as usize] {
                    sentence.push(w as usize);
                }
            }
            for pos in 0..sentence.len() {
                let lr = params.learning_rate * (1.0 - processed / (planned + 1.0)).max(1e-4);
                processed += 1.0;
                let b = rng.random_range(1..=params.window);
                let lo = pos.saturating_sub(b);
                let hi = (pos + b).min(sentence.len() - 1);
                let center = sentence[pos];
                for ctx in lo..=hi {
                    if ctx == pos {
                        continue;
                    }
                    let target = sentence[ctx];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let vin = &mut input[center * dim..(center + 1) * dim];
                    for d in 0..=params.negative {
                        let (t, label) = if d == 0 {
                            (target, 1.0)
                        } else {
                            let u = rng.random::<f64>() * acc;
                            let t = noise.partition_point(|&x| x <= u).min(n - 1);
                            if t == target {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let vout = &mut output[t * dim..(t + 1) * dim];
                        let f = util::dot(vin, vout);
                        let g = (label - 1.0 / (1.0 + (-f).exp())) * lr;
                        for i in 0..dim {
                            grad[i] += g * vout[i];
                            vout[i] += g * vin[i];
                        }
                    }
                    for (v, g) in vin.iter_mut().zip(&grad) {
                        *v += g;
                    }
                }
            }
        }
    }
    Ok(EmbeddingModel::new(vocab, counts, input, params.clone()))
}

/// Mean vector of the in-vocabulary tokens and whether there were none.
pub fn doc_vector(tokens: &[String], m: &EmbeddingModel) -> (Vec<f64>, bool) {
    let mut sum = vec![0.0; m.dim];
    let mut hits = 0usize;
    for v in tokens.iter().filter_map(|t| m.vector(t)) {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        hits += 1;
    }
    if hits == 0 {
        return (sum, true);
    }
    sum.iter_mut().for_each(|s| *s /= hits as f64);
    (sum, false)
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let d = util::norm(u) * util::norm(v);
    if d == 0.0 {
        0.0
    } else {
        util::dot(u, v) / d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainAssignment {
    pub ad_id: String,
    pub domain: String,
    /// Index into the scheme; `None` when unassigned.
    pub domain_index: Option<usize>,
    pub similarity: f64,
    pub domain_intensity: f64,
}

/// Averaged keyword vectors of each domain; domains with no keyword in
/// the vocabulary cannot be chosen.
pub struct DomainCentroids<'a> {
    scheme: &'a DomainScheme,
    model: &'a EmbeddingModel,
    centroids: Vec<Option<Vec<f64>>>,
}

impl<'a> DomainCentroids<'a> {
    pub fn new(scheme: &'a DomainScheme, model: &'a EmbeddingModel) -> Self {
        let centroids = scheme
            .domains
            .iter()
            .map(|d| {
                let tokens: Vec<String> = d.keywords().iter().flatten().cloned().collect();
                let (v, oov) = doc_vector(&tokens, model);
                (!oov).then_some(v)
            })
            .collect();
        DomainCentroids { scheme, model, centroids }
    }

    pub fn similarities(&self, doc: &NormalizedDoc) -> Option<Vec<Option<f64>>> {
        let (v, oov) = doc_vector(&doc.tokens, self.model);
        if oov {
            return None;
        }
        Some(self.centroids.iter().map(|c| c.as_ref().map(|c| cosine(&v, c))).collect())
    }

    pub fn assign(&self, doc: &NormalizedDoc) -> DomainAssignment {
        let unassigned = || DomainAssignment {
            ad_id: doc.ad_id.clone(),
            domain: UNASSIGNED.to_string(),
            domain_index: None,
            similarity: 0.0,
            domain_intensity: 0.0,
        };
        let Some(sims) = self.similarities(doc) else { return unassigned() };
        let mut best: Option<(usize, f64)> = None;
        for (i, s) in sims.iter().enumerate() {
            if let Some(s) = *s {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
        }
        let Some((i, similarity)) = best else { return unassigned() };
        let cat = &self.scheme.domains[i];
        DomainAssignment {
            ad_id: doc.ad_id.clone(),
            domain: cat.name.clone(),
            domain_index: Some(i),
            similarity,
            domain_intensity: intensity(doc, cat),
        }
    }
}

pub fn assign_domain(doc: &NormalizedDoc, scheme: &DomainScheme, m: &EmbeddingModel) -> DomainAssignment {
    DomainCentroids::new(scheme, m).assign(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub domain: String,
    pub n_ads: usize,
    pub mean_intensity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainFeatures {
    pub features: FeatureMatrix,
    pub assignments: Vec<DomainAssignment>,
    /// Scheme order, then "unassigned" if any ad was left out.
    pub summary: Vec<DomainSummary>,
}

/// One `domain_intensity` column plus the assignment table and per-domain
/// mean intensities.
pub fn domain_features(docs: &[NormalizedDoc], scheme: &DomainScheme, m: &EmbeddingModel) -> Result<DomainFeatures> {
    let centroids = DomainCentroids::new(scheme, m);
    let assignments: Vec<DomainAssignment> = docs.par_iter().map(|d| centroids.assign(d)).collect();
    let features = FeatureMatrix::new(
        "disco_domain",
        docs.iter().map(|d| d.ad_id.clone()).collect(),
        vec![DOMAIN_COLUMN.to_string()],
        FeatureKind::Intensity,
        assignments.iter().map(|a| a.domain_intensity).collect(),
    )?;
    let mut groups: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for a in &assignments {
        let e = groups.entry(a.domain_index.unwrap_or(usize::MAX)).or_default();
        e.0 += 1;
        e.1 += a.domain_intensity;
    }
    let summary = groups
        .into_iter()
        .map(|(i, (n, s))| DomainSummary {
            domain: scheme.domains.get(i).map_or(UNASSIGNED.to_string(), |d| d.name.clone()),
            n_ads: n,
            mean_intensity: s / n as f64,
        })
        .collect();
    Ok(DomainFeatures { features, assignments, summary })
}

pub fn write_assignments(assignments: &[DomainAssignment], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(util::create(path)?);
    for a in assignments {
        w.serialize(a)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
