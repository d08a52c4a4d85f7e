use std::collections::HashMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dtm::Dtm;
use super::lda::LdaModel;
use crate::textnorm::NormalizedDoc;
use crate::util;
use crate::{Error, Result};

pub const DEFAULT_TOP_N: usize = 30;
pub const DEFAULT_WINDOW: usize = 110;
pub const EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub per_topic: Vec<f64>,
    pub mean: f64,
    pub top_words: Vec<Vec<String>>,
    /// Top words never seen in any reference window.
    pub absent_words: Vec<String>,
    pub n_windows: u64,
}

/// Indices of the `top_n` most probable words per topic, ties by index.
pub fn top_words(m: &LdaModel, top_n: usize) -> Vec<Vec<u32>> {
    (0..m.k)
        .map(|t| {
            let row = m.phi_row(t);
            let mut idx: Vec<u32> = (0..row.len() as u32).collect();
            idx.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
            idx.truncate(top_n);
            idx
        })
        .collect()
}

/// C_V coherence of the model's topics against the pruned reference
/// documents. Documents emptied by pruning do not contribute windows.
pub fn coherence_cv(m: &LdaModel, dtm: &Dtm, top_n: usize, window: usize) -> Result<Coherence> {
    if m.vocab != dtm.vocab {
        return Err(Error::Alignment("model and reference documents use different vocabularies".into()));
    }
    let topics = top_words(m, top_n);
    let docs: Vec<&[u32]> = dtm.doc_tokens.iter().filter(|d| !d.is_empty()).map(Vec::as_slice).collect();
    let words = |ids: &[u32]| ids.iter().map(|&i| m.vocab[i as usize].clone()).collect::<Vec<_>>();
    score(&topics, &docs, window, &|i| m.vocab[i as usize].clone(), topics.iter().map(|t| words(t)).collect())
}

/// C_V coherence of explicit word lists against token documents.
pub fn coherence_of_word_lists(topics: &[Vec<String>], docs: &[NormalizedDoc], window: usize) -> Result<Coherence> {
    let mut vocab: Vec<String> = Vec::new();
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut id = |w: &str, vocab: &mut Vec<String>| {
        *index.entry(w.to_string()).or_insert_with(|| {
            vocab.push(w.to_string());
            vocab.len() as u32 - 1
        })
    };
    let ids: Vec<Vec<u32>> = docs.iter().map(|d| d.tokens.iter().map(|t| id(t, &mut vocab)).collect()).collect();
    let topic_ids: Vec<Vec<u32>> = topics.iter().map(|t| t.iter().map(|w| id(w, &mut vocab)).collect()).collect();
    let refs: Vec<&[u32]> = ids.iter().filter(|d| !d.is_empty()).map(Vec::as_slice).collect();
    score(&topic_ids, &refs, window, &|i| vocab[i as usize].clone(), topics.to_vec())
}

#[derive(Clone)]
struct WindowCounts {
    windows: u64,
    /// Per topic: single-word window counts by rank.
    single: Vec<Vec<u64>>,
    /// Per topic: n × n pair counts, upper triangle.
    pair: Vec<Vec<u64>>,
}

impl WindowCounts {
    fn zero(sizes: &[usize]) -> Self {
        WindowCounts {
            windows: 0,
            single: sizes.iter().map(|&n| vec![0; n]).collect(),
            pair: sizes.iter().map(|&n| vec![0; n * n]).collect(),
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.windows += other.windows;
        for (a, b) in self.single.iter_mut().zip(other.single) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.pair.iter_mut().zip(other.pair) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }
}

fn count_doc(
    mut acc: WindowCounts,
    doc: &[u32],
    window: usize,
    lookup: &HashMap<u32, Vec<(usize, usize)>>,
    sizes: &[usize],
) -> WindowCounts {
    let w = window.min(doc.len());
    let mut in_window: HashMap<u32, u32> = HashMap::new();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for &t in &doc[..w] {
        if lookup.contains_key(&t) {
            *in_window.entry(t).or_default() += 1;
        }
    }
    let n_windows = doc.len() - w + 1;
    for start in 0..n_windows {
        if start > 0 {
            let out = doc[start - 1];
            if let Some(c) = in_window.get_mut(&out) {
                *c -= 1;
                if *c == 0 {
                    in_window.remove(&out);
                }
            }
            let incoming = doc[start + w - 1];
            if lookup.contains_key(&incoming) {
                *in_window.entry(incoming).or_default() += 1;
            }
        }
        acc.windows += 1;
        for b in buckets.iter_mut() {
            b.clear();
        }
        for word in in_window.keys() {
            for &(t, r) in &lookup[word] {
                buckets[t].push(r);
            }
        }
        for (t, ranks) in buckets.iter().enumerate() {
            let n = sizes[t];
            for (a, &ra) in ranks.iter().enumerate() {
                acc.single[t][ra] += 1;
                for &rb in &ranks[a + 1..] {
                    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                    acc.pair[t][lo * n + hi] += 1;
                }
            }
        }
    }
    acc
}

fn score(
    topics: &[Vec<u32>],
    docs: &[&[u32]],
    window: usize,
    name: &dyn Fn(u32) -> String,
    top_words: Vec<Vec<String>>,
) -> Result<Coherence> {
    if window == 0 {
        return Err(Error::InvalidParameter("coherence window must be positive".into()));
    }
    if docs.is_empty() {
        return Err(Error::InvalidParameter("no non-empty reference documents for coherence".into()));
    }
    let sizes: Vec<usize> = topics.iter().map(Vec::len).collect();
    let mut lookup: HashMap<u32, Vec<(usize, usize)>> = HashMap::new();
    for (t, words) in topics.iter().enumerate() {
        for (r, &w) in words.iter().enumerate() {
            lookup.entry(w).or_default().push((t, r));
        }
    }
    let counts = docs
        .par_iter()
        .fold(|| WindowCounts::zero(&sizes), |acc, doc| count_doc(acc, doc, window, &lookup, &sizes))
        .reduce(|| WindowCounts::zero(&sizes), WindowCounts::merge);

    let total = counts.windows as f64;
    let mut absent = Vec::new();
    let mut per_topic = Vec::with_capacity(topics.len());
    for (t, words) in topics.iter().enumerate() {
        let n = words.len();
        let p: Vec<f64> = (0..n)
            .map(|r| {
                let c = counts.single[t][r];
                if c == 0 {
                    let w = name(words[r]);
                    if !absent.contains(&w) {
                        absent.push(w);
                    }
                    EPSILON
                } else {
                    c as f64 / total
                }
            })
            .collect();
        let npmi = |i: usize, j: usize| {
            let pij = if i == j {
                p[i]
            } else {
                let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                counts.pair[t][lo * n + hi] as f64 / total
            };
            ((pij + EPSILON) / (p[i] * p[j])).ln() / -(pij + EPSILON).ln()
        };
        let vectors: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| npmi(i, j)).collect()).collect();
        let sum: Vec<f64> = (0..n).map(|j| vectors.iter().map(|v| v[j]).sum()).collect();
        let cos = |v: &[f64]| {
            let d = util::norm(v) * util::norm(&sum);
            if d == 0.0 {
                0.0
            } else {
                util::dot(v, &sum) / d
            }
        };
        per_topic.push(if n == 0 { 0.0 } else { vectors.iter().map(|v| cos(v)).sum::<f64>() / n as f64 });
    }
    if !absent.is_empty() {
        warn!("{} top words never occur in the reference documents", absent.len());
    }
    let mean = per_topic.iter().sum::<f64>() / per_topic.len().max(1) as f64;
    Ok(Coherence { per_topic, mean, top_words, absent_words: absent, n_windows: counts.windows })
}
