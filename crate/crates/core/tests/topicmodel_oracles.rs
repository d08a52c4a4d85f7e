use std::collections::HashSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use skillscope::synth::{generate, SynthConfig, SynthTruth};
use skillscope::textnorm::{normalize_corpus, NormConfig, NormalizedDoc};
use skillscope::topicmodel::{
    build_dtm, coherence_cv, coherence_of_word_lists, dominant_topic, fit_lda, infer_theta, top_words, topic_report, Dtm,
    LdaModel, LdaParams, EPSILON,
};

fn docs(texts: &[&str]) -> Vec<NormalizedDoc> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| NormalizedDoc { ad_id: format!("d{i}"), tokens: t.split_whitespace().map(String::from).collect() })
        .collect()
}

/// C_V by explicit enumeration: list every window as a set, count
/// occurrences, build the full NPMI matrix and average the cosines of each
/// row with the row sum.
fn brute_cv(top: &[&str], docs: &[Vec<String>], window: usize) -> f64 {
    let mut windows: Vec<HashSet<&str>> = Vec::new();
    for d in docs.iter().filter(|d| !d.is_empty()) {
        let w = window.min(d.len());
        let mut start = 0;
        loop {
            windows.push(d[start..start + w].iter().map(String::as_str).collect());
            if start + w == d.len() {
                break;
            }
            start += 1;
        }
    }
    let total = windows.len() as f64;
    let n = top.len();
    let p = |a: &str| {
        let c = windows.iter().filter(|s| s.contains(a)).count() as f64;
        if c == 0.0 {
            EPSILON
        } else {
            c / total
        }
    };
    let joint = |a: &str, b: &str| windows.iter().filter(|s| s.contains(a) && s.contains(b)).count() as f64 / total;
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let pij = if i == j { p(top[i]) } else { joint(top[i], top[j]) };
            m[i][j] = ((pij + EPSILON) / (p(top[i]) * p(top[j]))).ln() / -(pij + EPSILON).ln();
        }
    }
    let sum: Vec<f64> = (0..n).map(|j| (0..n).map(|i| m[i][j]).sum()).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut score = 0.0;
    for row in &m {
        let dot: f64 = row.iter().zip(&sum).map(|(a, b)| a * b).sum();
        let d = norm(row) * norm(&sum);
        score += if d == 0.0 { 0.0 } else { dot / d };
    }
    score / n as f64
}

#[test]
fn toy_corpus_matches_brute_force() {
    let texts = ["java sql cloud team", "java python sql", "care patient nurse team shift", "python cloud java data data"];
    let d = docs(&texts);
    let tokens: Vec<Vec<String>> = d.iter().map(|x| x.tokens.clone()).collect();
    let topics = [vec!["java", "sql", "cloud"], vec!["care", "team", "python"], vec!["data", "nurse", "absentword"]];
    for window in [2, 3, 110] {
        let lists: Vec<Vec<String>> = topics.iter().map(|t| t.iter().map(|s| s.to_string()).collect()).collect();
        let c = coherence_of_word_lists(&lists, &d, window).unwrap();
        for (t, words) in topics.iter().enumerate() {
            let want = brute_cv(words, &tokens, window);
            assert!((c.per_topic[t] - want).abs() < 1e-9, "window {window} topic {t}: {} vs {want}", c.per_topic[t]);
        }
        assert_eq!(c.absent_words, ["absentword"]);
    }
}

#[test]
fn perfect_co_occurrence_scores_one() {
    let d = docs(&["aa bb cc", "cc bb aa", "xx yy", "yy zz xx"]);
    let c = coherence_of_word_lists(&[vec!["aa".into(), "bb".into(), "cc".into()]], &d, 110).unwrap();
    assert!((c.per_topic[0] - 1.0).abs() < 1e-9);
}

#[test]
fn model_coherence_matches_brute_force_on_pruned_reference() {
    let texts = ["aa bb cc aa", "bb cc dd", "dd ee ff", "ee ff aa", ""];
    let d = docs(&texts);
    let dtm = build_dtm(&d, 1, 1.0).unwrap();
    let m = fit_lda(&dtm, &LdaParams { alpha: Some(0.5), iterations: 40, burn_in: 20, thin: 5, ..LdaParams::new(2, 3) }).unwrap();
    let c = coherence_cv(&m, &dtm, 3, 2).unwrap();
    let tokens: Vec<Vec<String>> = d.iter().map(|x| x.tokens.clone()).collect();
    for (t, ids) in top_words(&m, 3).iter().enumerate() {
        let words: Vec<&str> = ids.iter().map(|&i| m.vocab[i as usize].as_str()).collect();
        assert!((c.per_topic[t] - brute_cv(&words, &tokens, 2)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_small_corpora_match_brute_force(
        raw in prop::collection::vec(prop::collection::vec(0usize..6, 0..12), 1..=5),
        top in prop::collection::hash_set(0usize..7, 1..=4),
        window in 1usize..8,
    ) {
        let names = ["aa", "bb", "cc", "dd", "ee", "ff", "gg"];
        let tokens: Vec<Vec<String>> = raw.iter().map(|d| d.iter().map(|&i| names[i].to_string()).collect()).collect();
        prop_assume!(tokens.iter().any(|d| !d.is_empty()));
        let nd: Vec<NormalizedDoc> = tokens.iter().map(|t| NormalizedDoc { ad_id: String::new(), tokens: t.clone() }).collect();
        let mut top: Vec<usize> = top.into_iter().collect();
        top.sort_unstable();
        let words: Vec<&str> = top.iter().map(|&i| names[i]).collect();
        let list: Vec<String> = words.iter().map(|s| s.to_string()).collect();
        let c = coherence_of_word_lists(&[list], &nd, window).unwrap();
        let want = brute_cv(&words, &tokens, window);
        prop_assert!((c.per_topic[0] - want).abs() < 1e-9, "{} vs {}", c.per_topic[0], want);
    }
}

#[test]
fn dtm_thresholds() {
    let mut texts: Vec<String> = (0..1000).map(|i| format!("common{} filler", i % 3)).collect();
    for (i, t) in texts.iter_mut().enumerate() {
        if i < 19 {
            t.push_str(" rare");
        }
        if i < 20 {
            t.push_str(" edge");
        }
        if i < 610 {
            t.push_str(" frequent");
        }
        if i < 600 {
            t.push_str(" ceiling");
        }
    }
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let dtm = build_dtm(&docs(&refs), 20, 0.60).unwrap();
    assert!(!dtm.vocab.contains(&"rare".to_string()));
    assert!(dtm.vocab.contains(&"edge".to_string()));
    assert!(!dtm.vocab.contains(&"frequent".to_string()));
    assert!(dtm.vocab.contains(&"ceiling".to_string()));
    assert!(!dtm.vocab.contains(&"filler".to_string()));
    for (w, &df) in dtm.vocab.iter().zip(&dtm.doc_freq) {
        assert!(df >= 20 && df as f64 <= 0.6 * 1000.0, "{w} {df}");
    }
    let all = build_dtm(&docs(&["bb aa", "cc", "aa"]), 1, 1.0).unwrap();
    assert_eq!(all.vocab, ["aa", "bb", "cc"]);
}

fn assert_stochastic(m: &LdaModel) {
    let v = m.vocab.len();
    for row in m.phi.chunks(v) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&p| p > 0.0));
    }
    for row in m.theta.chunks(m.k) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn single_topic_is_forced() {
    let d = docs(&["aa bb bb", "cc aa", ""]);
    let dtm = build_dtm(&d, 1, 1.0).unwrap();
    let m = fit_lda(&dtm, &LdaParams { iterations: 10, burn_in: 5, thin: 1, ..LdaParams::new(1, 9) }).unwrap();
    assert!(m.theta.iter().all(|&t| t == 1.0));
    let (n, v, b) = (5.0, 3.0, m.beta);
    for (w, count) in [("aa", 2.0), ("bb", 2.0), ("cc", 1.0)] {
        let i = dtm.vocab.iter().position(|x| x == w).unwrap();
        assert!((m.phi[i] - (count + b) / (n + v * b)).abs() < 1e-12);
    }
}

#[test]
fn empty_document_gets_uniform_theta() {
    let mut texts = vec!["aa bb cc"; 5];
    texts.push("");
    let dtm = build_dtm(&docs(&texts), 1, 1.0).unwrap();
    let m = fit_lda(&dtm, &LdaParams { iterations: 20, burn_in: 10, thin: 5, ..LdaParams::new(3, 1) }).unwrap();
    for &t in m.theta_row(5) {
        assert!((t - 1.0 / 3.0).abs() < 1e-12);
    }
    assert_stochastic(&m);
    let none = NormalizedDoc { ad_id: "x".into(), tokens: vec![] };
    assert_eq!(infer_theta(&none, &m, 50, 1), vec![1.0 / 3.0; 3]);
}

#[test]
fn two_disjoint_vocabularies_separate() {
    let left = ["alpha", "bravo", "charlie", "delta", "echo"];
    let right = ["xray", "yankee", "zulu", "whiskey", "victor"];
    let d: Vec<NormalizedDoc> = (0..200)
        .map(|i| {
            let words = if i % 2 == 0 { &left } else { &right };
            NormalizedDoc { ad_id: i.to_string(), tokens: (0..20).map(|j| words[(i * 7 + j * 3) % 5].to_string()).collect() }
        })
        .collect();
    let dtm = build_dtm(&d, 1, 1.0).unwrap();
    let m = fit_lda(&dtm, &LdaParams { iterations: 200, burn_in: 100, thin: 20, ..LdaParams::new(2, 17) }).unwrap();
    assert_stochastic(&m);
    let labels: Vec<usize> = (0..200).map(|i| dominant_topic(m.theta_row(i))).collect();
    let agree = (0..200).filter(|&i| labels[i] == labels[0] && i % 2 == 0 || labels[i] != labels[0] && i % 2 == 1).count();
    assert!(agree as f64 / 200.0 >= 0.95, "purity {agree}/200");

    let again = fit_lda(&dtm, &LdaParams { iterations: 200, burn_in: 100, thin: 20, ..LdaParams::new(2, 17) }).unwrap();
    assert_eq!(m.phi, again.phi);
    assert_eq!(m.theta, again.theta);
}

#[test]
fn dominant_topic_rules() {
    assert_eq!(dominant_topic(&[0.1, 0.7, 0.2]), 1);
    assert_eq!(dominant_topic(&[0.25; 4]), 0);
    assert_eq!(dominant_topic(&[0.0, 0.0, 1.0]), 2);
}

struct Planted {
    truth: SynthTruth,
    docs: Vec<NormalizedDoc>,
    dtm: Dtm,
    model: LdaModel,
    /// Recovered topic for each planted topic.
    matching: Vec<usize>,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

/// Planted topic rows re-indexed onto the model vocabulary.
fn planted_rows(truth: &SynthTruth, vocab: &[String]) -> Vec<Vec<f64>> {
    truth
        .phi
        .iter()
        .map(|row| vocab.iter().map(|w| row[truth.vocab.iter().position(|x| x == w).unwrap()]).collect())
        .collect()
}

fn greedy_match(planted: &[Vec<f64>], m: &LdaModel) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (k, row) in planted.iter().enumerate() {
        for t in 0..m.k {
            pairs.push((cosine(row, m.phi_row(t)), k, t));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut matching = vec![usize::MAX; planted.len()];
    let mut used = vec![false; m.k];
    for (_, k, t) in pairs {
        if matching[k] == usize::MAX && !used[t] {
            matching[k] = t;
            used[t] = true;
        }
    }
    matching
}

fn planted() -> &'static Planted {
    static CELL: OnceLock<Planted> = OnceLock::new();
    CELL.get_or_init(|| {
        let (corpus, truth) = generate(&SynthConfig::new(2024)).unwrap();
        let docs = normalize_corpus(&corpus, &NormConfig::bundled());
        let dtm = build_dtm(&docs, 20, 0.6).unwrap();
        let params = LdaParams { iterations: 400, burn_in: 200, thin: 50, ..LdaParams::new(4, 99) };
        let model = fit_lda(&dtm, &params).unwrap();
        let matching = greedy_match(&planted_rows(&truth, &model.vocab), &model);
        Planted { truth, docs, dtm, model, matching }
    })
}

#[test]
fn planted_topics_are_recovered() {
    let p = planted();
    assert_stochastic(&p.model);
    let rows = planted_rows(&p.truth, &p.model.vocab);
    let tv: f64 = rows
        .iter()
        .zip(&p.matching)
        .map(|(row, &t)| 0.5 * row.iter().zip(p.model.phi_row(t)).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .sum::<f64>()
        / rows.len() as f64;
    assert!(tv < 0.15, "mean TV {tv}");
    let pure = (0..p.docs.len())
        .filter(|&d| p.matching[p.truth.dominant[d]] == dominant_topic(p.model.theta_row(d)))
        .count();
    assert!(pure as f64 / p.docs.len() as f64 >= 0.90, "purity {pure}");
}

#[test]
fn planted_top_words_overlap() {
    let p = planted();
    let rows = planted_rows(&p.truth, &p.model.vocab);
    let report = topic_report(&p.model, &p.model.theta, None, 10);
    for (k, row) in rows.iter().enumerate() {
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let planted: HashSet<&str> = idx[..10].iter().map(|&i| p.model.vocab[i].as_str()).collect();
        let found: HashSet<&str> = report.topics[p.matching[k]].keywords.iter().map(String::as_str).collect();
        let jaccard = planted.intersection(&found).count() as f64 / planted.union(&found).count() as f64;
        assert!(jaccard >= 0.6, "topic {k}: jaccard {jaccard}");
    }
    assert_eq!(report.topics.iter().map(|t| t.dominant_count).sum::<usize>(), p.docs.len());
    assert!((report.topics.iter().map(|t| t.share).sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn inference_on_planted_model() {
    let p = planted();
    let m = &p.model;
    let v = m.vocab.len();
    for (k, &t) in p.matching.iter().enumerate() {
        let block: Vec<String> = (0..v)
            .filter(|&w| p.truth.config.block_of(p.truth.vocab.iter().position(|x| *x == m.vocab[w]).unwrap()) == k)
            .map(|w| m.vocab[w].clone())
            .collect();
        // Under the default prior α = 50/K a pure document needs more than
        // 137 tokens before the posterior mean can exceed 0.8.
        let doc = NormalizedDoc { ad_id: "pure".into(), tokens: (0..200).map(|i| block[i % block.len()].clone()).collect() };
        let theta = infer_theta(&doc, m, 200, 5);
        assert!((theta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(theta[t] > 0.8, "planted topic {k}: {theta:?}");
    }
    let mut l1 = 0.0;
    for d in 0..50 {
        let theta = infer_theta(&p.docs[d], m, 200, d as u64);
        l1 += theta.iter().zip(m.theta_row(d)).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    assert!(l1 / 50.0 < 0.15, "mean L1 {}", l1 / 50.0);
    assert_eq!(infer_theta(&p.docs[0], m, 200, 1), infer_theta(&p.docs[0], m, 200, 1));
}

#[test]
fn log_likelihood_trends_upward() {
    let ll = &planted().model.log_likelihood;
    let first = ll[..10].iter().sum::<f64>() / 10.0;
    let last = ll[ll.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(last >= first);
}

#[test]
fn save_load_roundtrip() {
    let p = planted();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("lda");
    p.model.save(&stem).unwrap();
    let back = LdaModel::load(&stem).unwrap();
    assert_eq!(back.phi, p.model.phi);
    assert_eq!(back.vocab, p.model.vocab);
    assert!(back.theta.is_empty());
    let c1 = coherence_cv(&p.model, &p.dtm, 30, 110).unwrap();
    let c2 = coherence_cv(&back, &p.dtm, 30, 110).unwrap();
    assert_eq!(c1, c2);
}
