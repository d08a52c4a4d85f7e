use skillscope::econo::{fit_ols, model_fe, RegressionSpec, SeType};
use skillscope::lexicon::{score_corpus, FeatureKind, FeatureMatrix, SkillCategory, SkillScheme};
use skillscope::synth::{aligned_dictionary, generate, mismatched_dictionary, regenerate_tokens, SynthConfig};
use skillscope::textnorm::{normalize_corpus, NormConfig};
use skillscope::econo::standardize;
use skillscope::Error;

#[test]
fn same_seed_same_corpus_and_simplex_rows() {
    let cfg = SynthConfig { n_docs: 300, ..SynthConfig::new(3) };
    let (a, ta) = generate(&cfg).unwrap();
    let (b, tb) = generate(&cfg).unwrap();
    assert_eq!(a.ads, b.ads);
    assert_eq!(ta, tb);
    for row in &ta.theta {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let (c, _) = generate(&SynthConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a.ads, c.ads);
}

#[test]
fn truth_reproduces_corpus() {
    let cfg = SynthConfig { n_docs: 200, ..SynthConfig::new(8) };
    let (corpus, truth) = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("truth.json");
    truth.write_json(&path).unwrap();
    let back = skillscope::synth::SynthTruth::read_json(&path).unwrap();
    let (tokens, assignments) = regenerate_tokens(&back.config, &back.theta);
    assert_eq!(assignments, truth.assignments);
    for (ad, toks) in corpus.ads.iter().zip(&tokens) {
        assert_eq!(ad.description_raw, toks.join(" "));
    }
    for (ad, lw) in corpus.ads.iter().zip(&truth.log_wage) {
        assert!((ad.wage.ln() - lw).abs() < 1e-12);
    }
}

#[test]
fn word_marginals_match_mixture() {
    let cfg = SynthConfig::new(11);
    let (corpus, truth) = generate(&cfg).unwrap();
    let v = truth.vocab.len();
    let mut counts = vec![0.0; v];
    let mut expected = vec![0.0; v];
    let mut total = 0.0;
    for (ad, theta) in corpus.ads.iter().zip(&truth.theta) {
        let tokens: Vec<&str> = ad.description_raw.split(' ').collect();
        let len = tokens.len() as f64;
        total += len;
        for t in tokens {
            counts[truth.vocab.iter().position(|w| w == t).unwrap()] += 1.0;
        }
        for (k, th) in theta.iter().enumerate() {
            for w in 0..v {
                expected[w] += len * th * truth.phi[k][w];
            }
        }
    }
    let l1: f64 = counts.iter().zip(&expected).map(|(c, e)| (c - e).abs() / total).sum();
    assert!(l1 < 0.05, "L1 {l1}");
}

#[test]
fn true_theta_regression_recovers_design() {
    let cfg = SynthConfig::new(21);
    let (corpus, truth) = generate(&cfg).unwrap();
    let k = cfg.k_true;
    let values: Vec<f64> = truth.theta.iter().flat_map(|row| row[..k - 1].to_vec()).collect();
    let names: Vec<String> = (1..k).map(|t| format!("theta{t}")).collect();
    let f = FeatureMatrix::new("truth", corpus.ads.iter().map(|a| a.id.clone()).collect(), names, FeatureKind::Probability, values)
        .unwrap();
    let spec = RegressionSpec { features: f, fe_sets: model_fe(3).unwrap(), se_type: SeType::Classical };
    let r = fit_ols(&spec, &corpus).unwrap();
    for t in 0..k - 1 {
        let contrast = cfg.beta_topics[t] - cfg.beta_topics[k - 1];
        let c = &r.coefficients[t];
        assert!((c.estimate - contrast).abs() < 3.0 * c.std_error, "{}: {} vs {contrast} (se {})", c.name, c.estimate, c.std_error);
    }
    assert!((r.r2 - truth.design_r2).abs() < 0.05, "r2 {} vs design {}", r.r2, truth.design_r2);
    assert!((truth.design_r2 - 0.5).abs() < 1e-9);
}

#[test]
fn dictionaries_have_requested_shape() {
    let cfg = SynthConfig::new(1);
    let norm = NormConfig::bundled();
    let m = mismatched_dictionary(&cfg, 5, 10, 3).unwrap();
    assert_eq!(m.categories.len(), 5);
    assert!(m.categories.iter().all(|c| c.len() == 10));
    let a = aligned_dictionary(&cfg, 10).unwrap();
    assert_eq!(a.categories.len(), cfg.k_true);
    // Both round-trip through the JSON loader unchanged.
    assert_eq!(SkillScheme::from_json(&m.to_json(), &norm).unwrap().categories, m.categories);
    assert_eq!(SkillScheme::from_json(&a.to_json(), &norm).unwrap().categories, a.categories);
}

#[test]
fn rare_keyword_dictionary_fails_standardization() {
    let cfg = SynthConfig { n_docs: 300, ..SynthConfig::new(5) };
    let (corpus, _) = generate(&cfg).unwrap();
    let docs = normalize_corpus(&corpus, &NormConfig::bundled());
    let rare = SkillScheme::new(
        "rare",
        vec![SkillCategory::new("Unseen skill", ["zzzzq", "zzzzr"].map(|w| vec![w.to_string()])).unwrap()],
    )
    .unwrap();
    let f = score_corpus(&docs, &rare, FeatureKind::Intensity).unwrap();
    assert!(f.values().iter().all(|&v| v == 0.0));
    assert!(matches!(standardize(&f), Err(Error::ZeroVariance(ref c)) if c == "Unseen skill"));
}
