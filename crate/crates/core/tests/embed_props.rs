use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skillscope::embed::{
    assign_domain, cosine, doc_vector, domain_features, train_embeddings, DomainScheme, EmbeddingModel, EmbeddingParams,
    UNASSIGNED,
};
use skillscope::lexicon::{intensity, SkillCategory};
use skillscope::textnorm::NormalizedDoc;

const DOMAINS: [[&str; 4]; 3] = [
    ["architecture", "urban", "traffic", "planning"],
    ["nursing", "patient", "ward", "clinical"],
    ["software", "database", "cloud", "deployment"],
];
const SHARED: [&str; 4] = ["team", "work", "role", "office"];

fn scheme() -> DomainScheme {
    DomainScheme {
        domains: DOMAINS
            .iter()
            .enumerate()
            .map(|(i, words)| SkillCategory::new(format!("Domain {}", i + 1), words.iter().map(|w| vec![w.to_string()])).unwrap())
            .collect(),
    }
}

/// Each document draws mostly from one planted domain plus shared filler.
fn planted_docs(n: usize, seed: u64) -> (Vec<NormalizedDoc>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = Vec::with_capacity(n);
    let docs = (0..n)
        .map(|i| {
            let d = rng.random_range(0..3);
            labels.push(d);
            let tokens = (0..rng.random_range(8..20))
                .map(|_| {
                    if rng.random_bool(0.7) {
                        DOMAINS[d][rng.random_range(0..4)].to_string()
                    } else {
                        SHARED[rng.random_range(0..4)].to_string()
                    }
                })
                .collect();
            NormalizedDoc { ad_id: format!("ad{i}"), tokens }
        })
        .collect();
    (docs, labels)
}

fn params(seed: u64) -> EmbeddingParams {
    EmbeddingParams { dim: 20, min_count: 2, epochs: 5, ..EmbeddingParams::new(seed) }
}

fn mean_vector(tokens: &[&str], m: &EmbeddingModel) -> Option<Vec<f64>> {
    let vs: Vec<&[f64]> = tokens.iter().filter_map(|t| m.vector(t)).collect();
    if vs.is_empty() {
        return None;
    }
    Some((0..m.dim).map(|j| vs.iter().map(|v| v[j]).sum::<f64>() / vs.len() as f64).collect())
}

fn oracle_cos(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    dot / (u.iter().map(|a| a * a).sum::<f64>().sqrt() * v.iter().map(|a| a * a).sum::<f64>().sqrt())
}

#[test]
fn assignments_match_nearest_centroid_oracle() {
    let (docs, labels) = planted_docs(400, 1);
    let s = scheme();
    let m = train_embeddings(&docs, &s, &params(3)).unwrap();
    let centroids: Vec<Vec<f64>> = DOMAINS.iter().map(|d| mean_vector(d, &m).unwrap()).collect();
    let mut correct = 0;
    for (doc, &label) in docs.iter().zip(&labels) {
        let a = assign_domain(doc, &s, &m);
        let dv = mean_vector(&doc.tokens.iter().map(String::as_str).collect::<Vec<_>>(), &m).unwrap();
        let sims: Vec<f64> = centroids.iter().map(|c| oracle_cos(&dv, c)).collect();
        let mut best = 0;
        for i in 1..sims.len() {
            if sims[i] > sims[best] {
                best = i;
            }
        }
        assert_eq!(a.domain_index, Some(best));
        assert!((a.similarity - sims[best]).abs() < 1e-12);
        assert_eq!(a.domain_intensity, intensity(doc, &s.domains[best]));
        correct += usize::from(best == label);
    }
    assert!(correct as f64 / docs.len() as f64 > 0.9, "{correct} of {}", docs.len());
}

#[test]
fn keyword_document_maps_to_its_domain() {
    let (docs, _) = planted_docs(300, 2);
    let s = scheme();
    let m = train_embeddings(&docs, &s, &params(4)).unwrap();
    for (i, words) in DOMAINS.iter().enumerate() {
        let doc = NormalizedDoc { ad_id: "k".into(), tokens: words.iter().map(|w| w.to_string()).collect() };
        let a = assign_domain(&doc, &s, &m);
        assert_eq!(a.domain_index, Some(i));
        assert!((a.similarity - 1.0).abs() < 1e-12);
        assert_eq!(a.domain_intensity, 1.0);
    }
    let oov = NormalizedDoc { ad_id: "o".into(), tokens: vec!["unseenword".into()] };
    let a = assign_domain(&oov, &s, &m);
    assert_eq!((a.domain.as_str(), a.domain_intensity), (UNASSIGNED, 0.0));
}

#[test]
fn summary_matches_recomputation_and_runs_are_identical() {
    let (docs, _) = planted_docs(300, 5);
    let s = scheme();
    let m = train_embeddings(&docs, &s, &params(6)).unwrap();
    let f = domain_features(&docs, &s, &m).unwrap();
    assert_eq!((f.features.n_rows(), f.features.n_cols()), (300, 1));
    for summary in &f.summary {
        let members: Vec<&NormalizedDoc> =
            docs.iter().zip(&f.assignments).filter(|(_, a)| a.domain == summary.domain).map(|(d, _)| d).collect();
        assert_eq!(members.len(), summary.n_ads);
        let cat = s.domains.iter().find(|c| c.name == summary.domain).unwrap();
        let mean = members.iter().map(|d| intensity(d, cat)).sum::<f64>() / members.len() as f64;
        assert!((mean - summary.mean_intensity).abs() < 1e-12);
    }
    assert!(f.features.values().iter().all(|v| (0.0..=1.0).contains(v)));

    let m2 = train_embeddings(&docs, &s, &params(6)).unwrap();
    assert_eq!(m.vectors(), m2.vectors());
    assert_eq!(domain_features(&docs, &s, &m2).unwrap().assignments, f.assignments);
}

#[test]
fn save_load_roundtrip() {
    let (docs, _) = planted_docs(100, 7);
    let m = train_embeddings(&docs, &scheme(), &params(8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.bin");
    m.save(&path).unwrap();
    assert!(EmbeddingModel::sidecar(&path).exists());
    assert_eq!(EmbeddingModel::load(&path).unwrap(), m);
}

#[test]
fn duplicate_keywords_are_removed() {
    let cat = SkillCategory::new("d", [vec!["ward".to_string()], vec!["ward".to_string()], vec!["patient".to_string()]]).unwrap();
    assert_eq!(cat.len(), 2);
}

#[test]
fn doc_vector_examples() {
    let (docs, _) = planted_docs(100, 9);
    let m = train_embeddings(&docs, &scheme(), &params(10)).unwrap();
    let (v, oov) = doc_vector(&["ward".into()], &m);
    assert!(!oov);
    assert_eq!(v, m.vector("ward").unwrap());
    let (v, _) = doc_vector(&["ward".into(), "cloud".into()], &m);
    for (j, x) in v.iter().enumerate() {
        assert!((x - (m.vector("ward").unwrap()[j] + m.vector("cloud").unwrap()[j]) / 2.0).abs() < 1e-15);
    }
    let (v, oov) = doc_vector(&["nothing".into()], &m);
    assert!(oov && v.iter().all(|&x| x == 0.0));
}

proptest! {
    #[test]
    fn cosine_symmetric_and_scale_invariant(
        u in prop::collection::vec(-10.0f64..10.0, 5),
        v in prop::collection::vec(-10.0f64..10.0, 5),
        a in 0.01f64..100.0,
        b in 0.01f64..100.0,
    ) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        prop_assert!((cosine(&u, &v) - cosine(&v, &u)).abs() < 1e-12);
        let au: Vec<f64> = u.iter().map(|x| a * x).collect();
        let bv: Vec<f64> = v.iter().map(|x| b * x).collect();
        prop_assert!((cosine(&au, &bv) - cosine(&u, &v)).abs() < 1e-12);
        prop_assert!(cosine(&u, &v).abs() <= 1.0 + 1e-12);
    }
}

#[test]
fn cosine_examples() {
    assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 2.0]), 0.0);
    assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
}
