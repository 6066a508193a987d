//! Stage-by-stage experiment runner. Every stage writes its artifacts under
//! the output directory; a manifest with file digests closes the run.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use kgprompt_core::backend::{predict_batch, Backend, InferenceRequest, MockBackend, PredictionRecord};
use kgprompt_core::data::{kfold_split, load_dataset_jsonl, plan_folds, sample_few_shot, FewShotConfig, Instance};
use kgprompt_core::eval::{
    aggregate_folds, compute_metrics, pooled_metrics, read_predictions_jsonl, FoldReport, Metrics,
};
use kgprompt_core::ingest::{export_edge_list_jsonl, load_edge_list_jsonl, load_hetionet_json, IngestReport};
use kgprompt_core::prompts::{build_prompt, read_prompts_jsonl, truncate_prompt, PromptInput, PromptRecord};
use kgprompt_core::seeding::derive_seed;
use kgprompt_core::structure::{
    enumerate_metapaths, extract_common_neighbors, extract_neighbors, StructureBundle, StructureError,
};
use kgprompt_core::verbalize::{
    verbalize_common_neighbors, verbalize_metapath, verbalize_neighbors, verbalize_neighbors_labeled, GraphContext,
};
use kgprompt_core::{ClassLabel, KnowledgeGraph, NodeId, StructureKind};
use kgprompt_remote::{remote_subgraph, HttpBackend, QueryCache, RemoteClient};
use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{BackendConfig, ConfigError, ExperimentConfig, KgFormat, KgSource};
use crate::link::{link_pairs, LinkReport, LocalResolver, Overrides, PairLinkage, RemoteResolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Link,
    Extract,
    Verbalize,
    BuildPrompts,
    Split,
    Predict,
    Eval,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Link => "link",
            Stage::Extract => "extract",
            Stage::Verbalize => "verbalize",
            Stage::BuildPrompts => "build-prompts",
            Stage::Split => "split",
            Stage::Predict => "predict",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage} failed{}: {message}", .instance.as_ref().map(|i| format!(" on instance `{i}`")).unwrap_or_default())]
    Stage { stage: Stage, instance: Option<String>, message: String },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Stage { .. } => 3,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            RunError::Stage { stage, .. } => Some(*stage),
            RunError::Config(_) => None,
        }
    }
}

fn fail(stage: Stage, instance: Option<&str>, err: impl fmt::Display) -> RunError {
    RunError::Stage { stage, instance: instance.map(str::to_string), message: err.to_string() }
}

/// Collects written files so the manifest can list them with digests.
struct ArtifactWriter {
    root: PathBuf,
    written: BTreeMap<String, (String, u64)>,
}

impl ArtifactWriter {
    fn new(root: PathBuf) -> io::Result<Self> {
        fs::create_dir_all(&root)?;
        Ok(ArtifactWriter { root, written: BTreeMap::new() })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.written.insert(rel.to_string(), (format!("{:x}", Sha256::digest(bytes)), bytes.len() as u64));
        Ok(())
    }

    fn json(&mut self, rel: &str, value: &impl Serialize) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    fn jsonl<T: Serialize>(&mut self, rel: &str, rows: impl IntoIterator<Item = T>) -> io::Result<()> {
        let mut bytes = Vec::new();
        for r in rows {
            serde_json::to_writer(&mut bytes, &r)?;
            bytes.push(b'\n');
        }
        self.write(rel, &bytes)
    }

    fn record_existing(&mut self, rel: &str) -> io::Result<()> {
        let bytes = fs::read(self.root.join(rel))?;
        self.written.insert(rel.to_string(), (format!("{:x}", Sha256::digest(&bytes)), bytes.len() as u64));
        Ok(())
    }
}

/// Structures extracted for one instance. `note` says why a context is empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceStructure {
    pub instance_id: String,
    pub bundles: Vec<StructureBundle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct ContextRow<'a> {
    instance_id: &'a str,
    #[serde(flatten)]
    context: &'a GraphContext,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub fold_plan: u64,
    pub extraction: u64,
    pub few_shot: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mock_backend: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub last_stage: String,
    pub seeds: Seeds,
    pub instances: usize,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub folds: FoldReport,
    pub pooled: Metrics,
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub report: Option<EvalReport>,
}

/// Relative path of fold `i`'s artifact `name`.
pub fn fold_file(i: usize, name: &str) -> String {
    format!("fold_{i}/{name}")
}

pub struct GraphStage {
    pub kg: KnowledgeGraph,
    pub ingest: IngestReport,
    pub linkages: Vec<PairLinkage>,
    pub link_report: LinkReport,
}

fn load_overrides(cfg: &ExperimentConfig) -> Result<Overrides, RunError> {
    match &cfg.overrides {
        Some(p) => Overrides::load(&cfg.resolve(p)).map_err(|e| fail(Stage::Link, None, e)),
        None => Ok(Overrides::default()),
    }
}

/// Loads (or, for a remote source, fetches) the graph and links every pair.
/// Remote graphs are fetched after linking, since the linked ids decide what to fetch.
pub fn graph_stage(cfg: &ExperimentConfig, instances: &[Instance]) -> Result<GraphStage, RunError> {
    let overrides = load_overrides(cfg)?;
    match &cfg.kg {
        KgSource::Local { path, format } => {
            let path = cfg.resolve(path);
            let format = format.unwrap_or_else(|| KgFormat::infer(&path));
            let (kg, ingest) = match format {
                KgFormat::HetionetJson => load_hetionet_json(&path),
                KgFormat::EdgeListJsonl => load_edge_list_jsonl(&path),
            }
            .map_err(|e| fail(Stage::Ingest, None, e))?;
            info!("loaded {} nodes, {} edges", kg.node_count(), kg.edge_count());
            let (linkages, link_report) = link_pairs(instances, &mut LocalResolver::new(&kg), &overrides)
                .map_err(|e| fail(Stage::Link, None, e))?;
            Ok(GraphStage { kg, ingest, linkages, link_report })
        }
        KgSource::Remote { endpoint, cache, cache_policy } => {
            let client = RemoteClient::new(
                endpoint.clone().with_env_overrides(),
                QueryCache::new(cfg.resolve(cache), *cache_policy),
            )
            .map_err(|e| fail(Stage::Ingest, None, e))?;
            let (linkages, link_report) = link_pairs(instances, &mut RemoteResolver::new(&client), &overrides)
                .map_err(|e| fail(Stage::Link, None, e))?;
            let mut ids: Vec<&str> = Vec::new();
            for l in &linkages {
                for id in [&l.e1.node, &l.e2.node].into_iter().flatten() {
                    if !ids.contains(&id.as_str()) {
                        ids.push(id.as_str());
                    }
                }
            }
            let kg = remote_subgraph(&client, &ids).map_err(|e| fail(Stage::Ingest, None, e))?;
            let ingest = IngestReport {
                nodes_loaded: kg.node_count(),
                edges_loaded: kg.edge_count(),
                directed_edges: kg.edge_count(),
                ..IngestReport::default()
            };
            Ok(GraphStage { kg, ingest, linkages, link_report })
        }
    }
}

/// Extracts the configured structure for one linked pair.
pub fn extract_pair(
    cfg: &ExperimentConfig,
    kg: &KnowledgeGraph,
    link: &PairLinkage,
) -> Result<InstanceStructure, RunError> {
    let limits = cfg.limits();
    let id = link.instance_id.as_str();
    let e1 = link.e1.node.as_ref().map(NodeId::as_str);
    let e2 = link.e2.node.as_ref().map(NodeId::as_str);
    let mut note = None;
    let mut bundles = Vec::new();
    let stage_err = |e: StructureError| fail(Stage::Extract, Some(id), e);
    match cfg.structure {
        StructureKind::NN => {
            let mut anchors: Vec<&str> = [e1, e2].into_iter().flatten().collect();
            anchors.dedup();
            if anchors.is_empty() {
                note = Some("no mention linked".to_string());
            }
            for a in anchors {
                bundles.push(extract_neighbors(kg, a, &limits, cfg.seed).map_err(stage_err)?);
            }
        }
        kind => match (e1, e2) {
            (Some(x), Some(y)) if x == y => note = Some(format!("both mentions link to `{x}`")),
            (Some(x), Some(y)) => {
                let b = if kind == StructureKind::CNN {
                    extract_common_neighbors(kg, x, y, &limits, cfg.seed)
                } else {
                    enumerate_metapaths(kg, x, y, &limits, cfg.seed)
                };
                bundles.push(b.map_err(stage_err)?);
            }
            _ => note = Some("pair not fully linked".to_string()),
        },
    }
    Ok(InstanceStructure { instance_id: link.instance_id.clone(), bundles, note })
}

/// Renders the bundles of one instance; no bundles means an empty context.
pub fn verbalize_instance(
    cfg: &ExperimentConfig,
    kg: &KnowledgeGraph,
    s: &InstanceStructure,
) -> Result<GraphContext, RunError> {
    let t = &cfg.templates;
    let err = |e: &dyn fmt::Display| fail(Stage::Verbalize, Some(&s.instance_id), e);
    let node = |id: &NodeId| kg.node(id.as_str()).map_err(|e| err(&e));
    let mut parts = Vec::with_capacity(s.bundles.len());
    for b in &s.bundles {
        let x = node(&b.anchor)?;
        let ctx = match (cfg.structure, &b.partner) {
            (StructureKind::NN, _) if cfg.labeled_neighbors => verbalize_neighbors_labeled(x, b, t),
            (StructureKind::NN, _) => verbalize_neighbors(x, b, t),
            (StructureKind::CNN, Some(p)) => verbalize_common_neighbors(x, node(p)?, b, t),
            (StructureKind::MP, Some(p)) => verbalize_metapath(x, node(p)?, b, t),
            (_, None) => return Err(err(&"pair bundle without a partner node")),
        }
        .map_err(|e| err(&e))?;
        parts.push(ctx);
    }
    Ok(match parts.len() {
        0 => GraphContext::empty(cfg.structure),
        1 => parts.pop().expect("one part"),
        _ => GraphContext::combine(cfg.structure, parts, t),
    })
}

/// Builds and truncates the prompt for every instance, in dataset order.
pub fn build_prompts(
    cfg: &ExperimentConfig,
    instances: &[Instance],
    contexts: Vec<GraphContext>,
) -> Result<Vec<PromptRecord>, RunError> {
    let mut out = Vec::with_capacity(instances.len());
    for (inst, ctx) in instances.iter().zip(contexts) {
        let id = inst.instance_id.as_str();
        let (e1, e2) = (inst.e1(), inst.e2());
        let p = build_prompt(
            PromptInput { instance_id: id, text: &inst.text, gold_label: Some(inst.label) },
            ctx,
            (&e1, &e2),
            cfg.architecture,
            &cfg.label_mapping,
            cfg.mask_token(),
            cfg.prompt_template.as_ref(),
        )
        .and_then(|p| truncate_prompt(&p, &cfg.truncation))
        .map_err(|e| fail(Stage::BuildPrompts, Some(id), e))?;
        out.push(PromptRecord::from(&p));
    }
    Ok(out)
}

fn make_backend(cfg: &BackendConfig) -> Result<(Box<dyn Backend>, usize), RunError> {
    Ok(match cfg {
        BackendConfig::Mock(m) => (Box::new(MockBackend { seed: m.seed }), 4),
        BackendConfig::Http(h) => {
            (Box::new(HttpBackend::new(h.clone()).map_err(|e| fail(Stage::Predict, None, e))?), h.in_flight)
        }
    })
}

/// Fold directories present under `out`, in index order.
fn fold_count(out: &Path) -> usize {
    (0..).take_while(|i| out.join(fold_file(*i, "test.jsonl")).is_file()).count()
}

/// Predicts every fold's test prompts, reading them from `out`.
pub fn predict_folds(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Vec<PredictionRecord>>, RunError> {
    let backend_cfg =
        cfg.backend.as_ref().ok_or_else(|| ConfigError::Invalid("prediction needs a `backend`".into()))?;
    let (backend, in_flight) = make_backend(backend_cfg)?;
    let n = fold_count(out);
    if n == 0 {
        return Err(fail(Stage::Predict, None, format!("no fold prompts under {}", out.display())));
    }
    let mut all = Vec::with_capacity(n);
    for i in 0..n {
        let records =
            read_prompts_jsonl(out.join(fold_file(i, "test.jsonl"))).map_err(|e| fail(Stage::Predict, None, e))?;
        let requests: Vec<InferenceRequest> =
            records.iter().map(|r| InferenceRequest::from_record(r, &cfg.label_mapping)).collect();
        let mut preds = Vec::with_capacity(requests.len());
        for (req, r) in requests.iter().zip(predict_batch(backend.as_ref(), &requests, &cfg.label_mapping, in_flight)) {
            preds.push(r.map_err(|e| fail(Stage::Predict, Some(&req.request_id), e))?);
        }
        info!("fold {i}: {} predictions from {}", preds.len(), backend.name());
        all.push(preds);
    }
    Ok(all)
}

/// Scores the predictions found under `out` against the gold labels stored
/// in each fold's test prompts.
pub fn evaluate_dir(cfg: &ExperimentConfig, out: &Path) -> Result<EvalReport, RunError> {
    let n = fold_count(out);
    if n == 0 {
        return Err(fail(Stage::Eval, None, format!("no folds under {}", out.display())));
    }
    let mut per_fold = Vec::with_capacity(n);
    for i in 0..n {
        let records =
            read_prompts_jsonl(out.join(fold_file(i, "test.jsonl"))).map_err(|e| fail(Stage::Eval, None, e))?;
        let mut golds: HashMap<String, ClassLabel> = HashMap::new();
        for r in &records {
            let g =
                r.gold_label.ok_or_else(|| fail(Stage::Eval, Some(&r.instance_id), "test prompt has no gold label"))?;
            golds.insert(r.instance_id.clone(), g);
        }
        let preds = read_predictions_jsonl(out.join(fold_file(i, "predictions.jsonl")))
            .map_err(|e| fail(Stage::Eval, None, format!("fold {i}: {e}")))?;
        if let Some(missing) = records.iter().find(|r| !preds.iter().any(|p| p.instance_id == r.instance_id)) {
            return Err(fail(Stage::Eval, Some(&missing.instance_id), "no prediction"));
        }
        per_fold.push(compute_metrics(&preds, &golds).map_err(|e| fail(Stage::Eval, None, e))?);
    }
    let folds = aggregate_folds(&per_fold, cfg.std_mode).map_err(|e| fail(Stage::Eval, None, e))?;
    let pooled = pooled_metrics(&per_fold).map_err(|e| fail(Stage::Eval, None, e))?;
    Ok(EvalReport { folds, pooled })
}

/// Text form of an evaluation report.
pub fn report_text(r: &EvalReport) -> String {
    format!(
        "{}pooled {:>6.1} {:>6.1} {:>6.1}\n",
        r.folds.to_table(),
        r.pooled.precision * 100.0,
        r.pooled.recall * 100.0,
        r.pooled.f1 * 100.0
    )
}

fn io_fail(stage: Stage) -> impl Fn(io::Error) -> RunError {
    move |e| fail(stage, None, e)
}

/// Runs every stage up to and including `last`. Without a backend the run
/// stops after the split.
pub fn run_until(cfg: &ExperimentConfig, last: Stage) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let out =
        cfg.out_dir().ok_or_else(|| ConfigError::Invalid("no output directory; set `out` or pass --out".into()))?;
    let mut w = ArtifactWriter::new(out.clone()).map_err(io_fail(Stage::Ingest))?;
    let mut seeds = Seeds {
        master: cfg.seed,
        fold_plan: cfg.seed,
        extraction: cfg.seed,
        few_shot: Vec::new(),
        mock_backend: match &cfg.backend {
            Some(BackendConfig::Mock(m)) => Some(m.seed),
            _ => None,
        },
    };
    let finish = |w: ArtifactWriter, seeds: Seeds, instances: usize, report: Option<EvalReport>| {
        finish_run(cfg, w, seeds, instances, last, report)
    };

    let instances = load_dataset_jsonl(cfg.resolve(&cfg.dataset)).map_err(|e| fail(Stage::Ingest, None, e))?;
    let g = graph_stage(cfg, &instances)?;
    w.json("ingest_report.json", &g.ingest).map_err(io_fail(Stage::Ingest))?;
    if last == Stage::Ingest {
        export_edge_list_jsonl(&g.kg, out.join("graph.jsonl")).map_err(|e| fail(Stage::Ingest, None, e))?;
        w.record_existing("graph.jsonl").map_err(io_fail(Stage::Ingest))?;
        return finish(w, seeds, instances.len(), None);
    }

    w.jsonl("links.jsonl", &g.linkages).map_err(io_fail(Stage::Link))?;
    w.json("link_report.json", &g.link_report).map_err(io_fail(Stage::Link))?;
    if g.link_report.unresolved > 0 {
        warn!(
            "{} of {} mentions unresolved: {:?}",
            g.link_report.unresolved, g.link_report.mentions, g.link_report.unresolved_mentions
        );
    }
    if last == Stage::Link {
        return finish(w, seeds, instances.len(), None);
    }

    let structures = g.linkages.iter().map(|l| extract_pair(cfg, &g.kg, l)).collect::<Result<Vec<_>, _>>()?;
    w.jsonl("bundles.jsonl", &structures).map_err(io_fail(Stage::Extract))?;
    if last == Stage::Extract {
        return finish(w, seeds, instances.len(), None);
    }

    let contexts = structures.iter().map(|s| verbalize_instance(cfg, &g.kg, s)).collect::<Result<Vec<_>, _>>()?;
    w.jsonl(
        "contexts.jsonl",
        instances.iter().zip(&contexts).map(|(i, c)| ContextRow { instance_id: &i.instance_id, context: c }),
    )
    .map_err(io_fail(Stage::Verbalize))?;
    if last == Stage::Verbalize {
        return finish(w, seeds, instances.len(), None);
    }

    let prompts = build_prompts(cfg, &instances, contexts)?;
    w.jsonl("prompts.jsonl", &prompts).map_err(io_fail(Stage::BuildPrompts))?;
    if last == Stage::BuildPrompts {
        return finish(w, seeds, instances.len(), None);
    }

    let plan = plan_folds(&instances, cfg.folds.n_folds, cfg.seed, cfg.folds.stratified)
        .map_err(|e| fail(Stage::Split, None, e))?;
    w.json("folds.json", &plan).map_err(io_fail(Stage::Split))?;
    let by_id: HashMap<&str, &PromptRecord> = prompts.iter().map(|p| (p.instance_id.as_str(), p)).collect();
    for fold in kfold_split(&instances, &plan).map_err(|e| fail(Stage::Split, None, e))? {
        let fs_cfg = FewShotConfig {
            k: cfg.few_shot.k,
            seed: derive_seed(cfg.seed, &["few-shot", &fold.index.to_string()]),
            stratified: cfg.few_shot.stratified,
        };
        let sample = sample_few_shot(&fold.train, &instances, &fs_cfg)
            .map_err(|e| fail(Stage::Split, None, format!("fold {}: {e}", fold.index)))?;
        debug_assert!(sample.iter().all(|id| !fold.test.contains(id)));
        seeds.few_shot.push(fs_cfg.seed);
        w.jsonl(&fold_file(fold.index, "few_shot.jsonl"), sample.iter().map(|id| by_id[id.as_str()]))
            .map_err(io_fail(Stage::Split))?;
        w.jsonl(&fold_file(fold.index, "test.jsonl"), fold.test.iter().map(|id| by_id[id.as_str()]))
            .map_err(io_fail(Stage::Split))?;
    }
    if last == Stage::Split {
        return finish(w, seeds, instances.len(), None);
    }
    if cfg.backend.is_none() {
        if last == Stage::Predict {
            return Err(ConfigError::Invalid("prediction needs a `backend`".into()).into());
        }
        info!("no backend configured; stopping after split");
        return finish(w, seeds, instances.len(), None);
    }

    for (i, preds) in predict_folds(cfg, &out)?.into_iter().enumerate() {
        w.jsonl(&fold_file(i, "predictions.jsonl"), &preds).map_err(io_fail(Stage::Predict))?;
    }
    if last == Stage::Predict {
        return finish(w, seeds, instances.len(), None);
    }

    let report = evaluate_dir(cfg, &out)?;
    w.json("report.json", &report).map_err(io_fail(Stage::Eval))?;
    w.write("report.txt", report_text(&report).as_bytes()).map_err(io_fail(Stage::Eval))?;
    finish(w, seeds, instances.len(), Some(report))
}

/// The full pipeline.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    run_until(cfg, Stage::Eval)
}

/// Scores predictions already present in the output directory, e.g. ones
/// written by an external model, and writes the report files.
pub fn evaluate_existing(cfg: &ExperimentConfig) -> Result<EvalReport, RunError> {
    let out =
        cfg.out_dir().ok_or_else(|| ConfigError::Invalid("no output directory; set `out` or pass --out".into()))?;
    let report = evaluate_dir(cfg, &out)?;
    let mut w = ArtifactWriter::new(out).map_err(io_fail(Stage::Eval))?;
    w.json("report.json", &report).map_err(io_fail(Stage::Eval))?;
    w.write("report.txt", report_text(&report).as_bytes()).map_err(io_fail(Stage::Eval))?;
    Ok(report)
}

fn manifest(cfg: &ExperimentConfig, w: &ArtifactWriter, seeds: Seeds, instances: usize, last: Stage) -> Manifest {
    Manifest {
        tool: concat!("kgprompt ", env!("CARGO_PKG_VERSION")).to_string(),
        config_hash: cfg.hash(),
        config: {
            let mut c = cfg.clone();
            c.out = None;
            c
        },
        last_stage: last.name().to_string(),
        seeds,
        instances,
        artifacts: w
            .written
            .iter()
            .map(|(path, (sha256, bytes))| ArtifactEntry { path: path.clone(), sha256: sha256.clone(), bytes: *bytes })
            .collect(),
    }
}

fn finish_run(
    cfg: &ExperimentConfig,
    mut w: ArtifactWriter,
    seeds: Seeds,
    instances: usize,
    last: Stage,
    report: Option<EvalReport>,
) -> Result<RunSummary, RunError> {
    let m = manifest(cfg, &w, seeds, instances, last);
    w.json("manifest.json", &m).map_err(io_fail(last))?;
    Ok(RunSummary { out_dir: w.root, manifest: m, report })
}
