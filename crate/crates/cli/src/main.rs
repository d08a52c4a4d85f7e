//! `skillscope` command-line driver. Every stage reads and writes files
//! under `--workdir` and leaves a `manifest_<subcommand>.json` behind.

mod config;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use skillscope::compare::{compare_all, CompareConfig, LdaMethodConfig, MethodSpec, DOMAIN_FEATURE};
use skillscope::corpus::{self, Corpus, Format};
use skillscope::econo::{coefficient_interpretation, fit_ols, model_fe, render_table, standardize, RegressionSpec, SeType};
use skillscope::embed::{domain_features, train_embeddings, write_assignments, DomainScheme, EmbeddingModel};
use skillscope::lexicon::{score_corpus, write_with_prevalence, BundledScheme, FeatureKind, FeatureMatrix, SkillScheme};
use skillscope::synth::{self, SynthConfig};
use skillscope::textnorm::{normalize_corpus, read_docs, write_docs, NormConfig, NormalizedDoc};
use skillscope::topicmodel::{build_dtm, coherence_cv, fit_lda, select_k, topic_report, KSelection};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "skillscope", version, about = "Skill extraction from job ads and wage-regression comparison of skill measures")]
struct Cli {
    /// Directory that every relative path is resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed, mandatory for stochastic subcommands.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw CSV/JSONL file into a corpus, logging rejected rows.
    Ingest(IngestArgs),
    /// Drop incomplete, duplicate, non-UK and wage-outlier ads; summarize wages.
    Clean(CleanArgs),
    /// Normalize every description into tokens.
    Normalize(NormalizeArgs),
    /// Score dictionary skill intensities.
    Skills(SkillsArgs),
    /// Train skip-gram embeddings on the documents and domain keywords.
    EmbedTrain(EmbedTrainArgs),
    /// Choose the topic count by mean C_V coherence.
    LdaSelectK(SelectKArgs),
    /// Fit LDA on all documents and write phi, theta and a topic report.
    LdaFit(LdaFitArgs),
    /// Regress log wage on one method's standardized features.
    Regress(RegressArgs),
    /// Run every configured method end to end and rank them.
    Compare(CompareArgs),
    /// Generate a synthetic corpus with planted topics and wage equation.
    Synth(SynthArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Clean(_) => "clean",
            Command::Normalize(_) => "normalize",
            Command::Skills(_) => "skills",
            Command::EmbedTrain(_) => "embed-train",
            Command::LdaSelectK(_) => "lda-select-k",
            Command::LdaFit(_) => "lda-fit",
            Command::Regress(_) => "regress",
            Command::Compare(_) => "compare",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// csv or jsonl; guessed from the extension when absent.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "corpus.jsonl")]
    output: PathBuf,
    #[arg(long, default_value = "ingest_log.json")]
    log: PathBuf,
}

#[derive(Args)]
struct CleanArgs {
    #[arg(long, default_value = "corpus.jsonl")]
    input: PathBuf,
    #[arg(long, default_value = "clean.jsonl")]
    output: PathBuf,
    /// Two-sided wage trim quantile; overrides the config.
    #[arg(long)]
    trim: Option<f64>,
    #[arg(long, default_value = "cleaning_log.json")]
    log: PathBuf,
    #[arg(long, default_value = "wage_summary.json")]
    summary: PathBuf,
    #[arg(long, default_value = "category_wages.csv")]
    categories: PathBuf,
}

#[derive(Args)]
struct NormalizeArgs {
    #[arg(long, default_value = "clean.jsonl")]
    input: PathBuf,
    #[arg(long, default_value = "docs.jsonl")]
    output: PathBuf,
    /// Stopword list, one word per line.
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Lemma table, `surface<TAB>lemma` per line.
    #[arg(long)]
    lemmas: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SkillMethod {
    Spitz5,
    Deming10,
    Disco,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegressMethod {
    Spitz5,
    Deming10,
    Disco,
    Lda,
}

impl RegressMethod {
    fn as_str(self) -> &'static str {
        match self {
            RegressMethod::Spitz5 => "spitz5",
            RegressMethod::Deming10 => "deming10",
            RegressMethod::Disco => "disco",
            RegressMethod::Lda => "lda",
        }
    }
}

#[derive(Args)]
struct SkillsArgs {
    #[arg(long, value_enum)]
    method: SkillMethod,
    #[arg(long, default_value = "docs.jsonl")]
    docs: PathBuf,
    /// Defaults to `skills_<method>.csv`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Scheme JSON replacing the bundled (non-domain) scheme.
    #[arg(long)]
    scheme: Option<PathBuf>,
    /// Trained embeddings, required for disco.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Domain scheme JSON replacing the bundled one.
    #[arg(long)]
    domains: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedTrainArgs {
    #[arg(long, default_value = "docs.jsonl")]
    docs: PathBuf,
    #[arg(long, default_value = "embeddings.bin")]
    output: PathBuf,
    #[arg(long)]
    domains: Option<PathBuf>,
}

#[derive(Args)]
struct SelectKArgs {
    #[arg(long, default_value = "docs.jsonl")]
    docs: PathBuf,
    #[arg(long, default_value = "k_selection.json")]
    output: PathBuf,
    /// Comma-separated candidate topic counts.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long)]
    sample_size: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Args)]
struct LdaFitArgs {
    #[arg(long, default_value = "docs.jsonl")]
    docs: PathBuf,
    /// Topic count; read from the selection file when absent.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "k_selection.json")]
    selection: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long, value_enum)]
    method: RegressMethod,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    model: u8,
    #[arg(long, default_value = "clean.jsonl")]
    corpus: PathBuf,
    /// Defaults to `theta.csv` for lda and `skills_<method>.csv` otherwise.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Overrides the config's standard-error type.
    #[arg(long, value_enum)]
    se: Option<SeArg>,
    /// Defaults to `regress_<method>_model<model>.json`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeArg {
    Classical,
    Hc1,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "synth_corpus.csv")]
    output: PathBuf,
    #[arg(long, default_value = "synth_truth.json")]
    truth: PathBuf,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    topics: Option<usize>,
    /// Skill keywords appended to every description.
    #[arg(long)]
    plant_keywords: Option<usize>,
}

/// Resolved paths, configuration and the file hashes recorded in the manifest.
struct Ctx {
    workdir: PathBuf,
    config: RunConfig,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<PathBuf>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.workdir.join(p)
    }

    /// Resolves an input file, failing with `what` when it is missing.
    fn input_as(&mut self, p: &Path, what: &str) -> Result<PathBuf> {
        let path = self.path(p);
        if !path.is_file() {
            let (what, hint) = what.split_once(" (").map_or((what, String::new()), |(w, h)| (w, format!(" ({h}")));
            bail!("missing {what} {}{hint}", path.display());
        }
        self.inputs.insert(path.display().to_string(), sha256_file(&path)?);
        Ok(path)
    }

    fn output(&mut self, p: &Path) -> PathBuf {
        let path = self.path(p);
        self.outputs.push(path.clone());
        path
    }

    fn seed(&self) -> Result<u64> {
        self.seed.context("seed required: pass --seed for this subcommand")
    }

    fn norm_config(&mut self, stopwords: Option<&Path>, lemmas: Option<&Path>) -> Result<NormConfig> {
        let stop = stopwords.or(self.config.stopwords.as_deref()).map(Path::to_path_buf);
        let lem = lemmas.or(self.config.lemmas.as_deref()).map(Path::to_path_buf);
        let stop = stop.map(|p| self.input_as(&p, "stopword file")).transpose()?;
        let lem = lem.map(|p| self.input_as(&p, "lemma table")).transpose()?;
        Ok(NormConfig::from_files(stop.as_deref(), lem.as_deref())?)
    }

    fn scheme(&mut self, which: BundledScheme, flag: Option<&Path>, norm: &NormConfig) -> Result<SkillScheme> {
        let configured = match which {
            BundledScheme::Spitz5 => &self.config.schemes.spitz5,
            BundledScheme::Deming10 => &self.config.schemes.deming10,
            BundledScheme::DiscoNonDomain => &self.config.schemes.disco_nondomain,
            BundledScheme::DiscoDomains => &self.config.schemes.disco_domains,
        };
        match flag.map(Path::to_path_buf).or_else(|| configured.clone()) {
            Some(p) => {
                let path = self.input_as(&p, "scheme file")?;
                Ok(SkillScheme::load(&path, &norm.for_keywords())?)
            }
            None => Ok(SkillScheme::bundled(which, norm)),
        }
    }

    fn load_corpus(&mut self, p: &Path, format: Option<&str>) -> Result<Corpus> {
        let path = self.input_as(p, "corpus file")?;
        let format = match format {
            Some(f) => f.parse()?,
            None => Format::from_path(&path)?,
        };
        Ok(corpus::load(&path, format)?)
    }

    fn load_docs(&mut self, p: &Path) -> Result<Vec<NormalizedDoc>> {
        let path = self.input_as(p, "documents file")?;
        Ok(read_docs(&path)?)
    }

    fn write_json<T: Serialize>(&mut self, p: &Path, value: &T) -> Result<()> {
        let path = self.output(p);
        write_text(&path, &serde_json::to_string_pretty(value)?)
    }

    fn write_text(&mut self, p: &Path, text: &str) -> Result<()> {
        let path = self.output(p);
        write_text(&path, text)
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn write_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    match Format::from_path(path)? {
        Format::Csv => corpus.write_csv(path)?,
        Format::Jsonl => corpus.write_jsonl(path)?,
    }
    Ok(())
}

fn ingest(ctx: &mut Ctx, a: &IngestArgs) -> Result<()> {
    let corpus = ctx.load_corpus(&a.input, a.format.as_deref())?;
    let out = ctx.output(&a.output);
    write_corpus(&corpus, &out)?;
    let p = &corpus.provenance;
    let log = json!({
        "input_rows": p.input_rows,
        "accepted": corpus.len(),
        "rejection_counts": p.rejection_counts(),
        "rejected": p.rejected,
    });
    ctx.write_json(&a.log, &log)?;
    println!("ingested {} of {} rows ({} rejected)", corpus.len(), p.input_rows, p.rejected.len());
    Ok(())
}

fn clean(ctx: &mut Ctx, a: &CleanArgs) -> Result<()> {
    let raw = ctx.load_corpus(&a.input, None)?;
    let trim = a.trim.unwrap_or(ctx.config.trim_quantile);
    let cleaned = corpus::clean(&raw, trim)?;
    let out = ctx.output(&a.output);
    write_corpus(&cleaned, &out)?;
    let log = cleaned.provenance.cleaning.as_ref().expect("clean records its log");
    ctx.write_json(&a.log, &log.counts)?;
    let summary = corpus::summarize(&cleaned)?;
    ctx.write_json(&a.summary, &summary)?;
    ctx.write_text(&a.categories, &summary.category_table_csv())?;
    println!("kept {} of {} ads; wage gini {:.4}", cleaned.len(), raw.len(), summary.gini);
    Ok(())
}

fn normalize(ctx: &mut Ctx, a: &NormalizeArgs) -> Result<()> {
    let corpus = ctx.load_corpus(&a.input, None)?;
    let norm = ctx.norm_config(a.stopwords.as_deref(), a.lemmas.as_deref())?;
    let docs = normalize_corpus(&corpus, &norm);
    let out = ctx.output(&a.output);
    write_docs(&docs, &out)?;
    let empty = docs.iter().filter(|d| d.tokens.is_empty()).count();
    println!("normalized {} documents ({empty} empty)", docs.len());
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn skills(ctx: &mut Ctx, a: &SkillsArgs) -> Result<()> {
    let docs = ctx.load_docs(&a.docs)?;
    let norm = ctx.norm_config(None, None)?;
    let name = match a.method {
        SkillMethod::Spitz5 => "spitz5",
        SkillMethod::Deming10 => "deming10",
        SkillMethod::Disco => "disco",
    };
    let output = a.output.clone().unwrap_or_else(|| PathBuf::from(format!("skills_{name}.csv")));
    let features = match a.method {
        SkillMethod::Spitz5 | SkillMethod::Deming10 => {
            let which = if a.method == SkillMethod::Spitz5 { BundledScheme::Spitz5 } else { BundledScheme::Deming10 };
            let scheme = ctx.scheme(which, a.scheme.as_deref(), &norm)?;
            let mut f = score_corpus(&docs, &scheme, FeatureKind::Intensity)?;
            f.method = name.to_string();
            f
        }
        SkillMethod::Disco => {
            let Some(emb) = &a.embeddings else {
                bail!("skills --method disco requires --embeddings (run embed-train first)");
            };
            let emb = ctx.input_as(emb, "embeddings file")?;
            let model = EmbeddingModel::load(&emb)?;
            let nondomain = ctx.scheme(BundledScheme::DiscoNonDomain, a.scheme.as_deref(), &norm)?;
            let domains: DomainScheme = ctx.scheme(BundledScheme::DiscoDomains, a.domains.as_deref(), &norm)?.into();
            let general = score_corpus(&docs, &nondomain, FeatureKind::Intensity)?;
            let df = domain_features(&docs, &domains, &model)?;
            let assignments = ctx.output(&with_suffix(&output, "_domains.csv"));
            write_assignments(&df.assignments, &assignments)?;
            ctx.write_json(&with_suffix(&output, "_domain_summary.json"), &df.summary)?;
            let mut dom = df.features;
            dom.feature_names = vec![DOMAIN_FEATURE.to_string()];
            FeatureMatrix::hstack(name, &[&dom, &general])?
        }
    };
    let out = ctx.output(&output);
    let prevalence = ctx.output(&with_suffix(&output, "_prevalence.csv"));
    write_with_prevalence(&features, &out, &prevalence)?;
    println!("scored {} ads on {} {name} features", features.n_rows(), features.n_cols());
    Ok(())
}

fn embed_train(ctx: &mut Ctx, a: &EmbedTrainArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let docs = ctx.load_docs(&a.docs)?;
    let norm = ctx.norm_config(None, None)?;
    let domains: DomainScheme = ctx.scheme(BundledScheme::DiscoDomains, a.domains.as_deref(), &norm)?.into();
    let params = ctx.config.embedding.params(seed);
    let model = train_embeddings(&docs, &domains, &params)?;
    let out = ctx.output(&a.output);
    model.save(&out)?;
    ctx.outputs.push(EmbeddingModel::sidecar(&out));
    println!("trained {}-dimensional vectors for {} words", model.dim, model.vocab.len());
    Ok(())
}

fn lda_config(ctx: &Ctx, seed: u64) -> LdaMethodConfig {
    LdaMethodConfig { seed, ..ctx.config.lda.clone() }
}

/// Shrinks the selection samples to fit a small corpus.
fn fit_samples(cfg: &mut LdaMethodConfig, n_docs: usize) {
    let replicates = cfg.replicates.max(1);
    if cfg.sample_size * replicates > n_docs {
        let shrunk = n_docs / replicates;
        warn!("{replicates} samples of {} do not fit in {n_docs} documents; using {shrunk}", cfg.sample_size);
        cfg.sample_size = shrunk;
    }
}

fn lda_select_k(ctx: &mut Ctx, a: &SelectKArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let docs = ctx.load_docs(&a.docs)?;
    let mut cfg = lda_config(ctx, seed);
    if let Some(g) = &a.grid {
        cfg.k_grid = g.clone();
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    match a.sample_size {
        Some(s) => cfg.sample_size = s,
        None => fit_samples(&mut cfg, docs.len()),
    }
    let selection = select_k(&docs, &cfg.select_params())?;
    ctx.write_json(&a.output, &selection)?;
    for row in &selection.table {
        println!("K = {:>3}: mean C_V {:.4}", row.k, row.mean);
    }
    println!("chosen K = {}", selection.chosen_k);
    Ok(())
}

fn lda_fit(ctx: &mut Ctx, a: &LdaFitArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let docs = ctx.load_docs(&a.docs)?;
    let cfg = lda_config(ctx, seed);
    let k = match a.k.or(cfg.k) {
        Some(k) => k,
        None => {
            let path = ctx.input_as(&a.selection, "topic-count selection file (pass --k or run lda-select-k)")?;
            let sel: KSelection = serde_json::from_str(&std::fs::read_to_string(&path)?)
                .with_context(|| format!("invalid selection file {}", path.display()))?;
            sel.chosen_k
        }
    };
    let dtm = build_dtm(&docs, cfg.min_df, cfg.max_df_fraction)?;
    let model = fit_lda(&dtm, &cfg.fit_params(k))?;
    let coherence = coherence_cv(&model, &dtm, cfg.top_n, cfg.window)?;
    let report = topic_report(&model, &model.theta, Some(&coherence.per_topic), cfg.top_n);

    let stem = ctx.path(&a.out_dir.join("lda"));
    model.save(&stem)?;
    ctx.outputs.push(stem.with_extension("json"));
    ctx.outputs.push(stem.with_extension("phi.bin"));
    let theta = ctx.output(&a.out_dir.join("theta.csv"));
    model.write_theta(&theta)?;
    ctx.write_json(&a.out_dir.join("topics.json"), &json!({ "coherence": coherence, "report": report }))?;
    let md = format!(
        "K = {k}, {} documents ({} empty after pruning), vocabulary {}, mean C_V {:.4}\n\n{}",
        dtm.n_docs(),
        dtm.empty_docs().len(),
        dtm.vocab.len(),
        coherence.mean,
        report.to_markdown()
    );
    ctx.write_text(&a.out_dir.join("topics.md"), &md)?;
    println!("fitted K = {k} on {} documents; mean C_V {:.4}", dtm.n_docs(), coherence.mean);
    Ok(())
}

fn regress(ctx: &mut Ctx, a: &RegressArgs) -> Result<()> {
    let name = a.method.as_str();
    let is_lda = a.method == RegressMethod::Lda;
    let default = if is_lda { PathBuf::from("theta.csv") } else { PathBuf::from(format!("skills_{name}.csv")) };
    let features_path = a.features.clone().unwrap_or(default);
    let what = if is_lda { "theta file (run lda-fit first)" } else { "features file (run skills first)" };
    let features_path = ctx.input_as(&features_path, what)?;
    let corpus = ctx.load_corpus(&a.corpus, None)?;
    let kind = if is_lda { FeatureKind::Probability } else { FeatureKind::Intensity };
    let mut features = FeatureMatrix::read_csv(&features_path, name, kind)?;
    let mut dropped = None;
    if is_lda && features.n_cols() >= 2 {
        let last = features.n_cols() - 1;
        dropped = Some(features.feature_names[last].clone());
        features = features.without_column(last);
    }
    let (z, meta) = standardize(&features)?;
    let se_type = match a.se {
        Some(SeArg::Classical) => SeType::Classical,
        Some(SeArg::Hc1) => SeType::Hc1,
        None => ctx.config.se_type,
    };
    let spec = RegressionSpec { features: z, fe_sets: model_fe(a.model)?, se_type };
    let result = fit_ols(&spec, &corpus)?;
    let output = a.output.clone().unwrap_or_else(|| PathBuf::from(format!("regress_{name}_model{}.json", a.model)));
    ctx.write_json(
        &output,
        &json!({
            "method": name,
            "model": a.model,
            "dropped_feature": dropped,
            "standardization": meta,
            "result": result,
        }),
    )?;
    let mut md = render_table(name, &[(format!("Model {}", a.model), &result)]);
    md.push('\n');
    md.push_str(&coefficient_interpretation(&result));
    ctx.write_text(&output.with_extension("md"), &md)?;
    println!("{name} model {}: n = {}, R2adj = {:.4}", a.model, result.n, result.r2_adj);
    Ok(())
}

fn method_specs(ctx: &mut Ctx, seed: u64, norm: &NormConfig, n_docs: usize) -> Result<Vec<MethodSpec>> {
    let mut specs = Vec::new();
    for m in ctx.config.methods.clone() {
        specs.push(match m.as_str() {
            "spitz5" => MethodSpec::Lexicon { name: m, scheme: ctx.scheme(BundledScheme::Spitz5, None, norm)? },
            "deming10" => MethodSpec::Lexicon { name: m, scheme: ctx.scheme(BundledScheme::Deming10, None, norm)? },
            "disco" => MethodSpec::Disco {
                name: m,
                nondomain: ctx.scheme(BundledScheme::DiscoNonDomain, None, norm)?,
                domains: ctx.scheme(BundledScheme::DiscoDomains, None, norm)?.into(),
                embedding: ctx.config.embedding.params(seed),
            },
            "lda" => {
                let mut cfg = lda_config(ctx, seed);
                if cfg.k.is_none() {
                    fit_samples(&mut cfg, n_docs);
                }
                MethodSpec::Lda { name: m, config: cfg }
            }
            other => bail!("unknown method `{other}`"),
        });
    }
    for &k in &ctx.config.lda_k_variants {
        specs.push(MethodSpec::Lda { name: format!("lda{k}"), config: LdaMethodConfig { k: Some(k), ..lda_config(ctx, seed) } });
    }
    Ok(specs)
}

fn compare(ctx: &mut Ctx, a: &CompareArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let raw = ctx.load_corpus(&a.input, a.format.as_deref())?;
    let input_hash = ctx.inputs.values().next_back().cloned().unwrap_or_default();
    let corpus = if ctx.config.clean { corpus::clean(&raw, ctx.config.trim_quantile)? } else { raw };
    let norm = ctx.norm_config(None, None)?;
    let docs = normalize_corpus(&corpus, &norm);
    let specs = method_specs(ctx, seed, &norm, docs.len())?;
    let cfg = CompareConfig { models: ctx.config.models.clone(), se_type: ctx.config.se_type };
    let metadata = json!({ "seed": seed, "input_sha256": input_hash, "run_config": ctx.config });
    let report = compare_all(&corpus, &docs, &specs, &cfg, metadata)?;
    let dir = ctx.path(&a.out_dir);
    report.write_all(&dir)?;
    for f in ["comparison.json", "comparison.md", "ranking.csv"] {
        ctx.outputs.push(dir.join(f));
    }
    for r in &report.ranking {
        println!("{}. {} (Model {}): R2adj {:.4}", r.rank, r.method, r.model, r.r2_adj);
    }
    for o in report.outcomes.iter().filter(|o| o.run.is_none()) {
        println!("failed: {}: {}", o.method, o.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn synth_cmd(ctx: &mut Ctx, a: &SynthArgs) -> Result<()> {
    let seed = ctx.seed()?;
    let s = ctx.config.synth.clone();
    let topics = a.topics.unwrap_or(s.topics);
    let mut cfg = SynthConfig { n_docs: a.n_docs.unwrap_or(s.n_docs), vocab_size: s.vocab_size, ..SynthConfig::new(seed).with_topics(topics) };
    if !(s.target_r2 > 0.0 && s.target_r2 <= 1.0) {
        bail!("synth.target_r2 must lie in (0, 1], got {}", s.target_r2);
    }
    cfg.noise_sd = cfg.noise_sd_for_target_r2(s.target_r2);
    let (mut corpus, truth) = synth::generate(&cfg)?;
    let plant = a.plant_keywords.unwrap_or(s.plant_keywords);
    if plant > 0 {
        let norm = ctx.norm_config(None, None)?;
        let schemes = [BundledScheme::Spitz5, BundledScheme::Deming10, BundledScheme::DiscoNonDomain, BundledScheme::DiscoDomains]
            .into_iter()
            .map(|b| ctx.scheme(b, None, &norm))
            .collect::<Result<Vec<_>>>()?;
        synth::plant_keywords(&mut corpus, &schemes.iter().collect::<Vec<_>>(), plant, seed);
    }
    let out = ctx.output(&a.output);
    write_corpus(&corpus, &out)?;
    let truth_path = ctx.output(&a.truth);
    truth.write_json(&truth_path)?;
    println!("generated {} ads over {} planted topics (design R2 {:.3})", corpus.len(), cfg.k_true, truth.design_r2);
    Ok(())
}

fn dispatch(ctx: &mut Ctx, command: &Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(ctx, a),
        Command::Clean(a) => clean(ctx, a),
        Command::Normalize(a) => normalize(ctx, a),
        Command::Skills(a) => skills(ctx, a),
        Command::EmbedTrain(a) => embed_train(ctx, a),
        Command::LdaSelectK(a) => lda_select_k(ctx, a),
        Command::LdaFit(a) => lda_fit(ctx, a),
        Command::Regress(a) => regress(ctx, a),
        Command::Compare(a) => compare(ctx, a),
        Command::Synth(a) => synth_cmd(ctx, a),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("SKILLSCOPE_THREADS") else { return Ok(()) };
    let n: usize = value.trim().parse().ok().filter(|&n| n > 0).with_context(|| format!("SKILLSCOPE_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot configure the worker pool")
}

fn write_manifest(ctx: &Ctx, command: &str, outcome: &Result<()>) -> Result<()> {
    let outputs: BTreeMap<String, Option<String>> = ctx
        .outputs
        .iter()
        .map(|p| (p.display().to_string(), p.is_file().then(|| sha256_file(p).ok()).flatten()))
        .collect();
    let manifest = json!({
        "subcommand": command,
        "argv": std::env::args().collect::<Vec<_>>(),
        "workdir": ctx.workdir,
        "seed": ctx.seed,
        "config": ctx.config,
        "inputs": ctx.inputs,
        "outputs": outputs,
        "status": if outcome.is_ok() { "ok".to_string() } else { "failed".to_string() },
        "error": outcome.as_ref().err().map(|e| format!("{e:#}")),
        "versions": {
            "skillscope": env!("CARGO_PKG_VERSION"),
            "manifest_format": 1,
        },
    });
    write_text(&ctx.path(Path::new(&format!("manifest_{command}.json"))), &serde_json::to_string_pretty(&manifest)?)
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    if !cli.workdir.is_dir() {
        bail!("workdir {} is not a directory", cli.workdir.display());
    }
    let config = match &cli.config {
        Some(p) => RunConfig::load(&cli.workdir.join(p))?,
        None => RunConfig::default(),
    };
    let mut ctx = Ctx { workdir: cli.workdir.clone(), config, seed: cli.seed, inputs: BTreeMap::new(), outputs: Vec::new() };
    if let Some(p) = &cli.config {
        ctx.input_as(p, "config file")?;
    }
    let name = cli.command.name();
    let outcome = dispatch(&mut ctx, &cli.command);
    if let Err(e) = write_manifest(&ctx, name, &outcome) {
        warn!("could not write manifest: {e:#}");
    }
    outcome
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => {
            eprintln!("internal error: the run aborted unexpectedly");
            ExitCode::from(2)
        }
    }
}
