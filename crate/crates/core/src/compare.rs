//! Runs every skill measure through the same three wage regressions and
//! ranks the measures by explained wage variation.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::econo::{coefficient_interpretation, fit_ols, model_fe, render_table, standardize, FeGroup, RegressionResult, RegressionSpec, SeType, StandardizationMeta};
use crate::embed::{domain_features, train_embeddings, DomainScheme, EmbeddingParams};
use crate::lexicon::{score_corpus, FeatureKind, FeatureMatrix, SkillScheme};
use crate::textnorm::NormalizedDoc;
use crate::topicmodel::{
    build_dtm, coherence_cv, fit_lda, select_k, topic_report, KSelection, LdaParams, SelectParams, TopicReport, DEFAULT_MAX_DF_FRACTION,
    DEFAULT_MIN_DF, DEFAULT_TOP_N, DEFAULT_WINDOW,
};
use crate::util;
use crate::{Error, Result};

pub const DOMAIN_FEATURE: &str = "Domain specific skill intensity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaMethodConfig {
    /// Fixed topic count; when absent the count is chosen from `k_grid`.
    pub k: Option<usize>,
    pub k_grid: Vec<usize>,
    pub sample_size: usize,
    pub replicates: usize,
    pub min_df: usize,
    pub max_df_fraction: f64,
    pub top_n: usize,
    pub window: usize,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub select_iterations: usize,
    pub select_burn_in: usize,
    pub select_thin: usize,
    pub seed: u64,
}

impl Default for LdaMethodConfig {
    fn default() -> Self {
        let fit = LdaParams::new(1, 0);
        let sel = LdaParams::for_selection(1, 0);
        LdaMethodConfig {
            k: None,
            k_grid: vec![10, 15, 20, 24, 30],
            sample_size: 100_000,
            replicates: 2,
            min_df: DEFAULT_MIN_DF,
            max_df_fraction: DEFAULT_MAX_DF_FRACTION,
            top_n: DEFAULT_TOP_N,
            window: DEFAULT_WINDOW,
            alpha: None,
            beta: fit.beta,
            iterations: fit.iterations,
            burn_in: fit.burn_in,
            thin: fit.thin,
            select_iterations: sel.iterations,
            select_burn_in: sel.burn_in,
            select_thin: sel.thin,
            seed: 0,
        }
    }
}

impl LdaMethodConfig {
    pub fn fit_params(&self, k: usize) -> LdaParams {
        LdaParams { k, alpha: self.alpha, beta: self.beta, iterations: self.iterations, burn_in: self.burn_in, thin: self.thin, seed: self.seed }
    }

    pub fn select_params(&self) -> SelectParams {
        SelectParams {
            k_grid: self.k_grid.clone(),
            sample_size: self.sample_size,
            replicates: self.replicates,
            seed: self.seed,
            min_df: self.min_df,
            max_df_fraction: self.max_df_fraction,
            top_n: self.top_n,
            window: self.window,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.select_iterations,
            burn_in: self.select_burn_in,
            thin: self.select_thin,
        }
    }
}

#[derive(Debug, Clone)]
pub enum MethodSpec {
    /// Keyword intensities, one column per category.
    Lexicon { name: String, scheme: SkillScheme },
    /// Non-domain intensities plus the intensity of each ad's assigned domain.
    Disco { name: String, nondomain: SkillScheme, domains: DomainScheme, embedding: EmbeddingParams },
    /// Topic probabilities of an LDA fit on the whole corpus.
    Lda { name: String, config: LdaMethodConfig },
    /// Features computed elsewhere, used as given.
    Precomputed { name: String, features: FeatureMatrix },
}

impl MethodSpec {
    pub fn name(&self) -> &str {
        match self {
            MethodSpec::Lexicon { name, .. }
            | MethodSpec::Disco { name, .. }
            | MethodSpec::Lda { name, .. }
            | MethodSpec::Precomputed { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub models: Vec<u8>,
    pub se_type: SeType,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig { models: vec![1, 2, 3], se_type: SeType::Classical }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: u8,
    pub fe_sets: Vec<FeGroup>,
    pub result: RegressionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaSummary {
    pub k: usize,
    pub selection: Option<KSelection>,
    pub coherence: f64,
    pub topics: TopicReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub feature_names: Vec<String>,
    /// Mean of each raw feature before standardization.
    pub feature_means: Vec<f64>,
    /// Reference topic left out of the regression.
    pub dropped_feature: Option<String>,
    pub standardization: StandardizationMeta,
    pub models: Vec<ModelFit>,
    pub lda: Option<LdaSummary>,
}

impl MethodRun {
    pub fn model(&self, m: u8) -> Option<&RegressionResult> {
        self.models.iter().find(|f| f.model == m).map(|f| &f.result)
    }

    /// The richest model fitted, Model 3 by default.
    pub fn headline(&self) -> Option<&ModelFit> {
        self.models.iter().max_by_key(|f| f.model)
    }
}

/// Raw features of one method and, for LDA, the topic summary.
pub fn method_features(spec: &MethodSpec, docs: &[NormalizedDoc]) -> Result<(FeatureMatrix, Option<LdaSummary>)> {
    match spec {
        MethodSpec::Lexicon { name, scheme } => {
            let mut f = score_corpus(docs, scheme, FeatureKind::Intensity)?;
            f.method = name.clone();
            Ok((f, None))
        }
        MethodSpec::Disco { name, nondomain, domains, embedding } => {
            let general = score_corpus(docs, nondomain, FeatureKind::Intensity)?;
            let model = train_embeddings(docs, domains, embedding)?;
            let mut dom = domain_features(docs, domains, &model)?.features;
            dom.feature_names = vec![DOMAIN_FEATURE.to_string()];
            Ok((FeatureMatrix::hstack(name.clone(), &[&dom, &general])?, None))
        }
        MethodSpec::Lda { name, config } => {
            let selection = match config.k {
                Some(_) => None,
                None => Some(select_k(docs, &config.select_params())?),
            };
            let k = config.k.or(selection.as_ref().map(|s| s.chosen_k)).expect("k or selection");
            let dtm = build_dtm(docs, config.min_df, config.max_df_fraction)?;
            let m = fit_lda(&dtm, &config.fit_params(k))?;
            let coherence = coherence_cv(&m, &dtm, config.top_n, config.window)?;
            let topics = topic_report(&m, &m.theta, Some(&coherence.per_topic), config.top_n);
            let mut f = m.theta_features()?;
            f.method = name.clone();
            Ok((f, Some(LdaSummary { k, selection, coherence: coherence.mean, topics })))
        }
        MethodSpec::Precomputed { name, features } => {
            let mut f = features.clone();
            f.method = name.clone();
            Ok((f, None))
        }
    }
}

/// Standardizes `features` and fits each requested model on `corpus`.
pub fn regress_features(features: &FeatureMatrix, corpus: &Corpus, cfg: &CompareConfig) -> Result<(StandardizationMeta, Vec<ModelFit>)> {
    let (z, meta) = standardize(features)?;
    let mut models = Vec::with_capacity(cfg.models.len());
    for &m in &cfg.models {
        let fe_sets = model_fe(m)?;
        let spec = RegressionSpec { features: z.clone(), fe_sets: fe_sets.clone(), se_type: cfg.se_type };
        models.push(ModelFit { model: m, fe_sets, result: fit_ols(&spec, corpus)? });
    }
    Ok((meta, models))
}

pub fn run_method(spec: &MethodSpec, corpus: &Corpus, docs: &[NormalizedDoc], cfg: &CompareConfig) -> Result<MethodRun> {
    let (raw, lda) = method_features(spec, docs)?;
    let feature_means = raw.column_means();
    let (used, dropped) = if lda.is_some() && raw.n_cols() >= 2 {
        let last = raw.n_cols() - 1;
        (raw.without_column(last), Some(raw.feature_names[last].clone()))
    } else {
        (raw.clone(), None)
    };
    let (standardization, models) = regress_features(&used, corpus, cfg)?;
    Ok(MethodRun {
        method: spec.name().to_string(),
        feature_names: raw.feature_names,
        feature_means,
        dropped_feature: dropped,
        standardization,
        models,
        lda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: String,
    pub run: Option<MethodRun>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub rank: usize,
    pub method: String,
    pub model: u8,
    pub n_features: usize,
    pub r2_adj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub corpus_hash: String,
    pub n_ads: usize,
    pub config: CompareConfig,
    /// Caller-supplied run settings (seeds, parameters), echoed verbatim.
    pub metadata: serde_json::Value,
    pub outcomes: Vec<MethodOutcome>,
    pub ranking: Vec<RankRow>,
}

fn check_alignment(corpus: &Corpus, docs: &[NormalizedDoc]) -> Result<()> {
    if docs.len() != corpus.len() || docs.iter().zip(&corpus.ads).any(|(d, a)| d.ad_id != a.id) {
        return Err(Error::Alignment("normalized documents are not in corpus order".into()));
    }
    Ok(())
}

/// Ranking by adjusted R² of each method's richest model, descending;
/// ties by method name.
pub fn rank(outcomes: &[MethodOutcome]) -> Vec<RankRow> {
    let mut rows: Vec<RankRow> = outcomes
        .iter()
        .filter_map(|o| {
            let run = o.run.as_ref()?;
            let h = run.headline()?;
            Some(RankRow { rank: 0, method: o.method.clone(), model: h.model, n_features: h.result.coefficients.len(), r2_adj: h.result.r2_adj })
        })
        .collect();
    rows.sort_by(|a, b| b.r2_adj.total_cmp(&a.r2_adj).then_with(|| a.method.cmp(&b.method)));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    rows
}

/// Runs every method independently; a failing method is recorded and the
/// others still run.
pub fn compare_all(
    corpus: &Corpus,
    docs: &[NormalizedDoc],
    methods: &[MethodSpec],
    cfg: &CompareConfig,
    metadata: serde_json::Value,
) -> Result<ComparisonReport> {
    check_alignment(corpus, docs)?;
    let outcomes: Vec<MethodOutcome> = methods
        .par_iter()
        .map(|spec| {
            info!("running method {}", spec.name());
            match run_method(spec, corpus, docs, cfg) {
                Ok(run) => MethodOutcome { method: spec.name().to_string(), run: Some(run), error: None },
                Err(e) => {
                    warn!("method {} failed: {e}", spec.name());
                    MethodOutcome { method: spec.name().to_string(), run: None, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    let ranking = rank(&outcomes);
    Ok(ComparisonReport { corpus_hash: corpus.content_hash(), n_ads: corpus.len(), config: cfg.clone(), metadata, outcomes, ranking })
}

/// Refits the LDA method at each requested topic count.
pub fn lda_k_variants(
    corpus: &Corpus,
    docs: &[NormalizedDoc],
    k_list: &[usize],
    base: &LdaMethodConfig,
    cfg: &CompareConfig,
) -> Result<Vec<(usize, Result<MethodRun>)>> {
    check_alignment(corpus, docs)?;
    Ok(k_list
        .par_iter()
        .map(|&k| {
            let spec = MethodSpec::Lda { name: format!("lda{k}"), config: LdaMethodConfig { k: Some(k), ..base.clone() } };
            (k, run_method(&spec, corpus, docs, cfg))
        })
        .collect())
}

impl ComparisonReport {
    pub fn run(&self, method: &str) -> Option<&MethodRun> {
        self.outcomes.iter().find(|o| o.method == method).and_then(|o| o.run.as_ref())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn ranking_csv(&self) -> String {
        let mut out = String::from("rank,method,model,n_features,r2_adj\n");
        for r in &self.ranking {
            out.push_str(&format!("{},{},{},{},{}\n", r.rank, r.method, r.model, r.n_features, r.r2_adj));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("# Skill measure comparison\n\n{} advertisements, corpus sha256 `{}`.\n\n", self.n_ads, self.corpus_hash);
        out.push_str("## Ranking\n\n| Rank | Method | Model | Features | R2adj |\n|---|---|---|---|---|\n");
        for r in &self.ranking {
            out.push_str(&format!("| {} | {} | {} | {} | {:.4} |\n", r.rank, r.method, r.model, r.n_features, r.r2_adj));
        }
        let failed: Vec<&MethodOutcome> = self.outcomes.iter().filter(|o| o.run.is_none()).collect();
        if !failed.is_empty() {
            out.push_str("\n## Failed methods\n\n");
            for o in failed {
                out.push_str(&format!("- {}: {}\n", o.method, o.error.as_deref().unwrap_or("unknown error")));
            }
        }
        for o in &self.outcomes {
            let Some(run) = &o.run else { continue };
            out.push('\n');
            let models: Vec<(String, &RegressionResult)> = run.models.iter().map(|m| (format!("Model {}", m.model), &m.result)).collect();
            out.push_str(&render_table(&run.method, &models));
            if let Some(d) = &run.dropped_feature {
                out.push_str(&format!("\nReference topic (omitted): {d}\n"));
            }
            if let Some(h) = run.headline() {
                out.push_str(&format!("\nModel {}, one-SD effects:\n\n", h.model));
                for line in coefficient_interpretation(&h.result).lines() {
                    out.push_str(&format!("- {line}\n"));
                }
            }
            if let Some(lda) = &run.lda {
                out.push_str(&format!("\nTopics: K = {}, mean C_V coherence {:.4}\n\n", lda.k, lda.coherence));
                if let Some(sel) = &lda.selection {
                    out.push_str("| K | C_V |\n|---|---|\n");
                    for row in &sel.table {
                        out.push_str(&format!("| {} | {:.4} |\n", row.k, row.mean));
                    }
                    out.push('\n');
                }
                out.push_str(&lda.topics.to_markdown());
            }
        }
        out
    }

    /// Writes `comparison.json`, `comparison.md` and `ranking.csv`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        util::write_string(&dir.join("comparison.json"), &self.to_json())?;
        util::write_string(&dir.join("comparison.md"), &self.to_markdown())?;
        util::write_string(&dir.join("ranking.csv"), &self.ranking_csv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, mismatched_dictionary, SynthConfig};
    use crate::textnorm::{normalize_corpus, NormConfig};

    fn setup(n: usize) -> (Corpus, Vec<NormalizedDoc>, SynthConfig) {
        let cfg = SynthConfig { n_docs: n, ..SynthConfig::new(17) };
        let (corpus, _) = generate(&cfg).unwrap();
        let docs = normalize_corpus(&corpus, &NormConfig::bundled());
        (corpus, docs, cfg)
    }

    #[test]
    fn identical_features_tie_and_sort_by_name() {
        let (corpus, docs, cfg) = setup(300);
        let scheme = mismatched_dictionary(&cfg, 3, 8, 2).unwrap();
        let f = score_corpus(&docs, &scheme, FeatureKind::Intensity).unwrap();
        let methods = vec![
            MethodSpec::Precomputed { name: "zeta".into(), features: f.clone() },
            MethodSpec::Precomputed { name: "alpha".into(), features: f },
        ];
        let r = compare_all(&corpus, &docs, &methods, &CompareConfig::default(), serde_json::Value::Null).unwrap();
        assert_eq!(r.ranking[0].r2_adj, r.ranking[1].r2_adj);
        assert_eq!(r.ranking[0].method, "alpha");
        let run = r.run("zeta").unwrap();
        let ns: Vec<usize> = run.models.iter().map(|m| m.result.n).collect();
        assert_eq!(ns, [300, 300, 300]);
    }

    #[test]
    fn failures_are_recorded() {
        let (corpus, docs, _) = setup(100);
        let zero = FeatureMatrix::new("z", docs.iter().map(|d| d.ad_id.clone()).collect(), vec!["flat".into()], FeatureKind::Intensity, vec![0.0; 100])
            .unwrap();
        let ok = FeatureMatrix::new(
            "o",
            docs.iter().map(|d| d.ad_id.clone()).collect(),
            vec!["len".into()],
            FeatureKind::Standardized,
            docs.iter().map(|d| d.tokens.len() as f64).collect(),
        )
        .unwrap();
        let methods = vec![
            MethodSpec::Precomputed { name: "broken".into(), features: zero },
            MethodSpec::Precomputed { name: "length".into(), features: ok },
        ];
        let r = compare_all(&corpus, &docs, &methods, &CompareConfig::default(), serde_json::Value::Null).unwrap();
        assert_eq!(r.ranking.len(), 1);
        assert_eq!(r.outcomes[0].error.as_deref(), Some("zero_variance:flat"));
        assert!(r.to_markdown().contains("- broken: zero_variance:flat"));
    }

    #[test]
    fn lda_with_one_topic_is_rejected() {
        let (corpus, docs, _) = setup(120);
        let base = LdaMethodConfig { min_df: 2, iterations: 10, burn_in: 5, thin: 5, ..Default::default() };
        let out = lda_k_variants(&corpus, &docs, &[1, 2], &base, &CompareConfig::default()).unwrap();
        assert!(matches!(out[0].1, Err(Error::ZeroVariance(_))));
        let two = out[1].1.as_ref().unwrap();
        assert_eq!(two.dropped_feature.as_deref(), Some("topic2prob"));
        assert_eq!(two.model(3).unwrap().coefficients.len(), 1);
    }

    #[test]
    fn misaligned_docs_are_fatal() {
        let (corpus, mut docs, _) = setup(20);
        docs.swap(0, 1);
        assert!(matches!(compare_all(&corpus, &docs, &[], &CompareConfig::default(), serde_json::Value::Null), Err(Error::Alignment(_))));
    }
}
