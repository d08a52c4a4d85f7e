use serde::{Deserialize, Serialize};

use super::coherence::top_words;
use super::lda::{dominant_topic, LdaModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRow {
    /// 1-based topic number.
    pub topic: usize,
    pub dominant_count: usize,
    pub share: f64,
    pub coherence: Option<f64>,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub n_docs: usize,
    pub topics: Vec<TopicRow>,
}

/// Dominant-topic counts and shares from `theta` (n_docs × K, row-major)
/// with the `top_n` keywords of each topic.
pub fn topic_report(m: &LdaModel, theta: &[f64], coherence: Option<&[f64]>, top_n: usize) -> TopicReport {
    let k = m.k;
    let n_docs = theta.len() / k;
    let mut counts = vec![0usize; k];
    for row in theta.chunks(k) {
        counts[dominant_topic(row)] += 1;
    }
    let words = top_words(m, top_n);
    let topics = (0..k)
        .map(|t| TopicRow {
            topic: t + 1,
            dominant_count: counts[t],
            share: if n_docs == 0 { 0.0 } else { counts[t] as f64 / n_docs as f64 },
            coherence: coherence.map(|c| c[t]),
            keywords: words[t].iter().map(|&w| m.vocab[w as usize].clone()).collect(),
        })
        .collect();
    TopicReport { n_docs, topics }
}

impl TopicReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Dominant Topic | Job Ad Count | % Job Ads | Coherence | Keywords per Topic |\n|---|---|---|---|---|\n");
        for r in &self.topics {
            let coh = r.coherence.map_or_else(|| ".".to_string(), |c| format!("{c:.3}"));
            out.push_str(&format!(
                "| {} | {} | {:.2}% | {} | {} |\n",
                r.topic,
                r.dominant_count,
                100.0 * r.share,
                coh,
                r.keywords.join(", ")
            ));
        }
        out
    }
}
