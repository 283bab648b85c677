//! End-to-end orchestration behind the CLI subcommands: dataset IO, the
//! train / detect pipelines, attack application, the robustness grid, and
//! embedding export.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::adversary::{apply_attack, AttackKind, AttackPhase, AttackSpec};
use crate::artifact::ModelArtifact;
use crate::augment::AugmentationPlan;
use crate::config::RunConfig;
use crate::detector::{self, ScoreSummary, ScoredEntity};
use crate::encoder::train::{train, TrainConfig};
use crate::encoder::{EmbedLevel, Embedding, EncoderModel, FeatureVocab};
use crate::error::{Error, Result};
use crate::graph::{batch_split, build_graph, cleanup, reduce_cpr, Label, ProvenanceGraph};
use crate::linalg::Matrix;
use crate::metrics::{acr, compute_metrics, EvalReport};
use crate::parse::{self, load_labels, ParseReport, ParserConfig};
use crate::seed::{self, stream};

/// One dataset split plus its ground-truth sidecar (graph indices or entity
/// ids, depending on the detection level).
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub graphs: Vec<ProvenanceGraph>,
    pub labels: BTreeMap<String, Label>,
    pub parse_report: ParseReport,
}

fn parser_config(cfg: &RunConfig) -> ParserConfig {
    ParserConfig {
        format: cfg.parsed_format(),
        extra_edge_labels: cfg.extra_edge_labels.clone(),
    }
}

fn vocab_for(cfg: &RunConfig) -> FeatureVocab {
    if cfg.extra_edge_labels.is_empty() {
        FeatureVocab::standard()
    } else {
        FeatureVocab::with_extra_edge_labels(&cfg.extra_edge_labels)
    }
}

/// Load `<data_dir>/<split>`: either a single `stream.jsonl` (node-level,
/// split into batch windows) or one `g*.jsonl` file per graph. Labels come
/// from `<data_dir>/<split>_labels.tsv` when present and are applied at the
/// configured level.
pub fn load_split(cfg: &RunConfig, split: &str) -> Result<LoadedSplit> {
    let dir = cfg.data_dir.join(split);
    if !dir.is_dir() {
        return Err(Error::Data(format!("dataset split {} not found", dir.display())));
    }
    let pcfg = parser_config(cfg);
    let mut report = ParseReport::default();
    let mut graphs = Vec::new();

    let stream_path = dir.join("stream.jsonl");
    if stream_path.is_file() {
        let file = std::fs::File::open(&stream_path)?;
        let (events, r) = parse::parse_events(BufReader::new(file), &pcfg)?;
        report = r;
        graphs = batch_split(&events, cfg.batch_events, cfg.window_ns)?;
    } else {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|x| x == "jsonl" || x == "csv")
            })
            .collect();
        files.sort();
        for path in files {
            let file = std::fs::File::open(&path)?;
            let (events, r) = parse::parse_events(BufReader::new(file), &pcfg)?;
            report.accepted += r.accepted;
            report.rejected += r.rejected;
            report.skipped += r.skipped;
            report.rejections.extend(r.rejections);
            if events.is_empty() {
                continue;
            }
            let g = cleanup(&reduce_cpr(&build_graph(&events)?, cfg.window_ns));
            graphs.push(g);
        }
    }

    let labels_path = cfg.data_dir.join(format!("{split}_labels.tsv"));
    let labels = if labels_path.is_file() {
        load_labels(&labels_path)?
    } else {
        BTreeMap::new()
    };
    if !labels.is_empty() {
        match cfg.parsed_level() {
            EmbedLevel::Graph => {
                for (i, g) in graphs.iter_mut().enumerate() {
                    if let Some(l) = labels.get(&i.to_string()) {
                        g.label = Some(*l);
                    }
                }
            }
            EmbedLevel::Node => {
                for g in &mut graphs {
                    g.apply_node_labels(&labels);
                }
            }
        }
    }
    Ok(LoadedSplit {
        graphs,
        labels,
        parse_report: report,
    })
}

/// Embed a set of graphs at the given level. Graph level keys rows by the
/// graph index; node level keys by entity id, averaging the embeddings of
/// entities that appear in several batch windows.
pub fn embed_many(
    model: &EncoderModel,
    graphs: &[ProvenanceGraph],
    level: EmbedLevel,
) -> Result<(Vec<String>, Matrix)> {
    let d = model.out_dim;
    match level {
        EmbedLevel::Graph => {
            let mut rows = Vec::with_capacity(graphs.len());
            let mut ids = Vec::with_capacity(graphs.len());
            for (i, g) in graphs.iter().enumerate() {
                let Embedding::Graph(z) = model.embed(g, EmbedLevel::Graph)? else {
                    unreachable!()
                };
                rows.push(z);
                ids.push(i.to_string());
            }
            Ok((ids, if rows.is_empty() { Matrix::zeros(0, d) } else { Matrix::from_rows(rows) }))
        }
        EmbedLevel::Node => {
            let mut acc: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
            for g in graphs {
                let Embedding::Node(rows) = model.embed(g, EmbedLevel::Node)? else {
                    unreachable!()
                };
                for (id, vec) in rows {
                    let entry = acc.entry(id).or_insert_with(|| (vec![0.0; d], 0));
                    for (a, v) in entry.0.iter_mut().zip(&vec) {
                        *a += v;
                    }
                    entry.1 += 1;
                }
            }
            let mut ids = Vec::with_capacity(acc.len());
            let mut rows = Vec::with_capacity(acc.len());
            for (id, (sum, count)) in acc {
                ids.push(id);
                rows.push(sum.into_iter().map(|v| v / count as f64).collect());
            }
            Ok((ids, if rows.is_empty() { Matrix::zeros(0, d) } else { Matrix::from_rows(rows) }))
        }
    }
}

#[derive(Debug)]
pub struct TrainSummary {
    pub graphs: usize,
    pub loss_history: Vec<f64>,
    pub d_mean: f64,
    pub theta: f64,
    pub artifact_path: PathBuf,
}

/// Train the encoder on the train split, fit the centroid model on its
/// embeddings, calibrate the threshold, and persist one artifact.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let split = load_split(cfg, "train")?;
    if split.graphs.is_empty() {
        return Err(Error::Data("train split has no graphs".into()));
    }
    let plan = AugmentationPlan {
        kinds: cfg.parsed_aug_kinds()?,
        gamma: cfg.gamma,
        seed: cfg.seed,
        rules: Default::default(),
    };
    let tcfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        tau: cfg.tau,
        epochs: cfg.epochs,
        batch_size: cfg.train_batch,
        seed: cfg.seed,
    };
    let init = EncoderModel::new(
        vocab_for(cfg),
        cfg.hidden_dim,
        cfg.embed_dim,
        cfg.edge_features,
        seed::derive(cfg.seed, stream::WEIGHT_INIT),
    );
    let outcome = train(&split.graphs, &plan, &tcfg, init)?;

    let level = cfg.parsed_level();
    let (_, embeddings) = embed_many(&outcome.model, &split.graphs, level)?;
    let mut centroid_model = detector::fit(&embeddings, cfg.k, cfg.seed)?;
    centroid_model.theta =
        detector::calibrate_theta(&centroid_model, &embeddings, cfg.theta_quantile)?;

    let artifact = ModelArtifact::new(
        outcome.model,
        centroid_model,
        cfg.clone(),
        outcome.loss_history.clone(),
    );
    artifact.save(&cfg.model_path)?;
    Ok(TrainSummary {
        graphs: split.graphs.len(),
        loss_history: outcome.loss_history,
        d_mean: artifact.detector.d_mean,
        theta: artifact.detector.theta,
        artifact_path: cfg.model_path.clone(),
    })
}

#[derive(Debug)]
pub struct DetectOutput {
    pub scored: Vec<ScoredEntity>,
    pub summary: Option<ScoreSummary>,
    pub report: Option<EvalReport>,
    pub scores_path: Option<PathBuf>,
}

/// Score the test split against a persisted artifact, write per-entity
/// verdicts, and compute metrics when ground truth is present.
pub fn cmd_detect(cfg: &RunConfig) -> Result<DetectOutput> {
    cfg.validate()?;
    let artifact = ModelArtifact::load(&cfg.model_path)?;
    let split = load_split(cfg, "test")?;
    let output = detect_in_memory(&artifact, &split)?;
    let scores_path = if split.graphs.is_empty() && split.labels.is_empty() {
        None
    } else {
        std::fs::create_dir_all(&cfg.report_dir)?;
        let path = cfg.report_dir.join("scores.jsonl");
        write_scores(&path, &output.0)?;
        if let Some(report) = &output.2 {
            let mut bytes = serde_json::to_vec_pretty(report)?;
            bytes.push(b'\n');
            std::fs::write(cfg.report_dir.join("eval.json"), bytes)?;
        }
        Some(path)
    };
    Ok(DetectOutput {
        scored: output.0,
        summary: output.1,
        report: output.2,
        scores_path,
    })
}

type DetectTriple = (Vec<ScoredEntity>, Option<ScoreSummary>, Option<EvalReport>);

/// Detection against in-memory graphs; shared by `cmd_detect` and the
/// robustness grid. The artifact's own config determines the level (that is
/// what the centroids were fitted on).
pub fn detect_in_memory(artifact: &ModelArtifact, split: &LoadedSplit) -> Result<DetectTriple> {
    let level = artifact.config.parsed_level();
    let (ids, embeddings) = embed_many(&artifact.encoder, &split.graphs, level)?;
    let (scored, summary) = detector::score_batch(&artifact.detector, &embeddings, &ids);
    let report = if split.labels.is_empty() || scored.is_empty() {
        None
    } else {
        let labeled: Vec<ScoredEntity> = scored
            .iter()
            .filter(|s| split.labels.contains_key(&s.id))
            .cloned()
            .collect();
        Some(compute_metrics(&labeled, &split.labels)?)
    };
    Ok((scored, summary, report))
}

fn write_scores(path: &Path, scored: &[ScoredEntity]) -> Result<()> {
    let mut out = String::new();
    for s in scored {
        out.push_str(
            &json!({
                "id": s.id,
                "raw": s.raw,
                "normalized": s.normalized,
                "verdict": s.verdict.as_str(),
            })
            .to_string(),
        );
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug)]
pub struct AttackOutput {
    pub spec: AttackSpec,
    pub split: &'static str,
    pub graphs: usize,
    pub out_dir: PathBuf,
}

/// Apply an attack descriptor to the matching split and write the attacked
/// dataset (per-graph files with a provenance header) plus the copied
/// ground truth.
pub fn cmd_attack(cfg: &RunConfig, descriptor: &str, out_dir: &Path) -> Result<AttackOutput> {
    cfg.validate()?;
    let spec = AttackSpec::parse_descriptor(descriptor)?;
    let split_name = match spec.phase {
        AttackPhase::Detection => "test",
        AttackPhase::Training => "train",
    };
    let split = load_split(cfg, split_name)?;
    let attacked = apply_attack(&split.graphs, &spec)?;
    write_attacked_dataset(&attacked, &split.labels, &spec, out_dir, split_name)?;
    Ok(AttackOutput {
        spec,
        split: split_name,
        graphs: attacked.len(),
        out_dir: out_dir.to_path_buf(),
    })
}

fn write_attacked_dataset(
    graphs: &[ProvenanceGraph],
    labels: &BTreeMap<String, Label>,
    spec: &AttackSpec,
    out_dir: &Path,
    split_name: &str,
) -> Result<()> {
    let split_dir = out_dir.join(split_name);
    std::fs::create_dir_all(&split_dir)?;
    let header = format!("# provguard-attack: {}\n", serde_json::to_string(spec)?);
    for (i, g) in graphs.iter().enumerate() {
        let mut out = header.clone();
        for ev in g.to_events() {
            out.push_str(&parse::event_to_json_line(&ev));
            out.push('\n');
        }
        std::fs::write(split_dir.join(format!("g{i:05}.jsonl")), out)?;
    }
    if !labels.is_empty() {
        parse::save_labels(&out_dir.join(format!("{split_name}_labels.tsv")), labels)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RobustnessCell {
    pub attack: AttackKind,
    pub rate: f64,
    pub report: EvalReport,
    /// Absolute change rate vs the clean row, on AUC and F1.
    pub acr_auc: Option<f64>,
    pub acr_f1: Option<f64>,
}

#[derive(Debug)]
pub struct RobustnessReport {
    pub clean: EvalReport,
    pub cells: Vec<RobustnessCell>,
    pub table_path: Option<PathBuf>,
}

/// Evaluate a grid of (attack, rate) cells against one model and test set,
/// mirroring a clean baseline row.
pub fn cmd_eval_robustness(
    cfg: &RunConfig,
    attacks: &[AttackKind],
    rates: &[f64],
    write_table: bool,
) -> Result<RobustnessReport> {
    cfg.validate()?;
    let artifact = ModelArtifact::load(&cfg.model_path)?;
    let split = load_split(cfg, "test")?;
    if split.labels.is_empty() {
        return Err(Error::Data("robustness evaluation needs ground truth labels".into()));
    }
    let (_, _, clean_report) = detect_in_memory(&artifact, &split)?;
    let clean = clean_report
        .ok_or_else(|| Error::Data("clean run produced no metrics".into()))?;

    let mut cells = Vec::new();
    for (ai, &attack) in attacks.iter().enumerate() {
        for (ri, &rate) in rates.iter().enumerate() {
            let spec = AttackSpec::new(
                attack,
                rate,
                seed::derive2(cfg.seed, 0xA77AC4, (ai * rates.len() + ri) as u64),
                crate::adversary::TargetPolicy::Random,
            )?;
            if spec.phase != AttackPhase::Detection {
                return Err(Error::Usage(format!(
                    "robustness grid is detection-phase only, got {}",
                    attack.as_str()
                )));
            }
            let attacked = LoadedSplit {
                graphs: apply_attack(&split.graphs, &spec)?,
                labels: split.labels.clone(),
                parse_report: ParseReport::default(),
            };
            let (_, _, report) = detect_in_memory(&artifact, &attacked)?;
            let report = report.ok_or_else(|| Error::Data("attacked run produced no metrics".into()))?;
            let acr_auc = match (clean.auc, report.auc) {
                (Some(c), Some(a)) => acr(c, a),
                _ => None,
            };
            let acr_f1 = acr(clean.f1, report.f1);
            cells.push(RobustnessCell {
                attack,
                rate,
                report,
                acr_auc,
                acr_f1,
            });
        }
    }

    let table_path = if write_table {
        std::fs::create_dir_all(&cfg.report_dir)?;
        let path = cfg.report_dir.join("robustness.tsv");
        std::fs::write(&path, render_robustness_table(&clean, &cells))?;
        Some(path)
    } else {
        None
    };
    Ok(RobustnessReport {
        clean,
        cells,
        table_path,
    })
}

pub fn render_robustness_table(clean: &EvalReport, cells: &[RobustnessCell]) -> String {
    let fmt_auc = |a: Option<f64>| a.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"));
    let mut out = String::from("attack\trate\tprecision\tf1\tauc\tacr_auc\n");
    out.push_str(&format!(
        "none\t0\t{:.4}\t{:.4}\t{}\t0.0000\n",
        clean.precision,
        clean.f1,
        fmt_auc(clean.auc)
    ));
    for c in cells {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{}\t{}\n",
            c.attack.as_str(),
            c.rate,
            c.report.precision,
            c.report.f1,
            fmt_auc(c.report.auc),
            fmt_auc(c.acr_auc),
        ));
    }
    out
}

/// Export embeddings of a split as `id<TAB>v1 v2 … vd` lines.
pub fn cmd_export_embeddings(cfg: &RunConfig, split: &str, out: &Path) -> Result<usize> {
    cfg.validate()?;
    let artifact = ModelArtifact::load(&cfg.model_path)?;
    let loaded = load_split(cfg, split)?;
    let level = artifact.config.parsed_level();
    let (ids, embeddings) = embed_many(&artifact.encoder, &loaded.graphs, level)?;
    let mut text = String::new();
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<String> = embeddings.row(i).iter().map(|v| format!("{v}")).collect();
        text.push_str(&format!("{id}\t{}\n", row.join(" ")));
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out, text)?;
    Ok(ids.len())
}

/// Parse one event file, build the graph, reduce, clean, and return the
/// deterministic dump (golden-file utility).
pub fn cmd_build_graph(cfg: &RunConfig, input: &Path) -> Result<(String, ParseReport)> {
    cfg.validate()?;
    let file = std::fs::File::open(input)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", input.display())))?;
    let (events, report) = parse::parse_events(BufReader::new(file), &parser_config(cfg))?;
    if events.is_empty() {
        return Ok((String::new(), report));
    }
    let g = cleanup(&reduce_cpr(&build_graph(&events)?, cfg.window_ns));
    Ok((g.dump(), report))
}
