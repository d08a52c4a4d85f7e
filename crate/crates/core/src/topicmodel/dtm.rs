use std::collections::{BTreeMap, HashMap, HashSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::textnorm::NormalizedDoc;
use crate::{Error, Result};

pub const DEFAULT_MIN_DF: usize = 20;
pub const DEFAULT_MAX_DF_FRACTION: f64 = 0.60;

/// Pruned corpus as vocabulary indices, token order preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dtm {
    /// Sorted surviving tokens.
    pub vocab: Vec<String>,
    pub ad_ids: Vec<String>,
    pub doc_tokens: Vec<Vec<u32>>,
    pub doc_freq: Vec<usize>,
    pub min_df: usize,
    pub max_df_fraction: f64,
}

impl Dtm {
    pub fn n_docs(&self) -> usize {
        self.doc_tokens.len()
    }

    pub fn n_tokens(&self) -> usize {
        self.doc_tokens.iter().map(Vec::len).sum()
    }

    /// Documents left with no tokens after pruning.
    pub fn empty_docs(&self) -> Vec<usize> {
        self.doc_tokens.iter().enumerate().filter(|(_, d)| d.is_empty()).map(|(i, _)| i).collect()
    }

    pub fn vocab_index(&self) -> HashMap<&str, u32> {
        self.vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i as u32)).collect()
    }

    /// Maps `docs` onto this vocabulary, dropping unknown tokens.
    pub fn project(&self, docs: &[NormalizedDoc]) -> Dtm {
        let index = self.vocab_index();
        let doc_tokens: Vec<Vec<u32>> = docs
            .iter()
            .map(|d| d.tokens.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
            .collect();
        let mut doc_freq = vec![0; self.vocab.len()];
        for d in &doc_tokens {
            for w in d.iter().collect::<HashSet<_>>() {
                doc_freq[*w as usize] += 1;
            }
        }
        Dtm {
            vocab: self.vocab.clone(),
            ad_ids: docs.iter().map(|d| d.ad_id.clone()).collect(),
            doc_tokens,
            doc_freq,
            min_df: self.min_df,
            max_df_fraction: self.max_df_fraction,
        }
    }
}

/// Keeps tokens found in at least `min_df` documents and in at most
/// `max_df_fraction` of all documents.
pub fn build_dtm(docs: &[NormalizedDoc], min_df: usize, max_df_fraction: f64) -> Result<Dtm> {
    if docs.is_empty() {
        return Err(Error::InvalidParameter("no documents for the document-term matrix".into()));
    }
    if !(max_df_fraction > 0.0 && max_df_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("max_df_fraction must be in (0, 1], got {max_df_fraction}")));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        for t in d.tokens.iter().map(String::as_str).collect::<HashSet<_>>() {
            *df.entry(t).or_default() += 1;
        }
    }
    let max_df = max_df_fraction * docs.len() as f64 + 1e-9;
    let kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, n)| n >= min_df && n as f64 <= max_df).collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let vocab: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
    let doc_freq = kept.iter().map(|&(_, n)| n).collect();
    let index: HashMap<&str, u32> = kept.iter().enumerate().map(|(i, (w, _))| (*w, i as u32)).collect();
    let doc_tokens: Vec<Vec<u32>> = docs
        .iter()
        .map(|d| d.tokens.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();
    let dtm = Dtm {
        vocab,
        ad_ids: docs.iter().map(|d| d.ad_id.clone()).collect(),
        doc_tokens,
        doc_freq,
        min_df,
        max_df_fraction,
    };
    let empty = dtm.empty_docs().len();
    if empty > 0 {
        warn!("{empty} documents have no tokens left after vocabulary pruning");
    }
    Ok(dtm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs_with(counts: &[(&str, usize)], n: usize) -> Vec<NormalizedDoc> {
        (0..n)
            .map(|i| NormalizedDoc {
                ad_id: i.to_string(),
                tokens: counts
                    .iter()
                    .filter(|(_, c)| i < *c)
                    .map(|(w, _)| w.to_string())
                    .chain(std::iter::once("filler".to_string()))
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn min_df_boundary() {
        let docs = docs_with(&[("rare", 19), ("ok", 20)], 1000);
        let dtm = build_dtm(&docs, 20, 1.0).unwrap();
        assert_eq!(dtm.vocab, ["filler", "ok"]);
    }

    #[test]
    fn max_df_boundary() {
        let docs = docs_with(&[("common", 610), ("fine", 600)], 1000);
        let dtm = build_dtm(&docs, 1, 0.60).unwrap();
        assert_eq!(dtm.vocab, ["fine"]);
        assert!(dtm.doc_freq.iter().all(|&d| d >= 1 && d <= 600));
        assert_eq!(dtm.empty_docs().len(), 400);
    }

    #[test]
    fn no_pruning_keeps_everything() {
        let docs = vec![
            NormalizedDoc { ad_id: "a".into(), tokens: vec!["x".into(), "y".into(), "x".into()] },
            NormalizedDoc { ad_id: "b".into(), tokens: vec!["z".into()] },
        ];
        let dtm = build_dtm(&docs, 1, 1.0).unwrap();
        assert_eq!(dtm.vocab, ["x", "y", "z"]);
        assert_eq!(dtm.doc_tokens[0], [0, 1, 0]);
        assert_eq!(dtm.doc_freq, [1, 1, 1]);
        assert_eq!(dtm.project(&docs), dtm);
    }

    #[test]
    fn empty_vocabulary_and_bad_fraction() {
        let docs = docs_with(&[], 3);
        assert!(matches!(build_dtm(&docs, 5, 1.0), Err(Error::EmptyVocabulary)));
        assert!(build_dtm(&docs, 1, 0.0).is_err());
        assert!(build_dtm(&[], 1, 0.5).is_err());
    }
}
