use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use corefsum::coref::{postprocess as run_postprocess, CorefAnnotation, EnsembleInput};
use corefsum::corpus::{Sample, SyntheticCorpus};
use corefsum::dialogue::{flatten_dialogue, Dialogue};
use corefsum::eval::{corpus_scores, length_stats, words, CorpusScores};
use corefsum::fusion::probe::ProbeEntry;
use corefsum::fusion::{probe_heads, HeadSelection, ProbeReport};
use corefsum::model::{
    apply_config_text, load_checkpoint, save_checkpoint, train::train_with_progress, ModelConfig,
    TrainingConfig, Variant,
};
use corefsum::structures::{build_coref_attention, build_coref_graph};

use crate::io::{
    pool, read_json, read_jsonl, read_text, write_atomic, write_json, write_jsonl, write_lines,
    CliError, CliResult,
};
use crate::{
    CommandResult, EvaluateArgs, GenDataArgs, GraphArgs, PostprocessArgs, ProbeArgs, SummarizeArgs,
    TrainArgs,
};

/// Annotations keyed by dialogue id; duplicates within one file are errors.
fn index_annotations(path: &Path) -> CliResult<HashMap<String, CorefAnnotation>> {
    let mut map = HashMap::new();
    for a in read_jsonl::<CorefAnnotation>(path)? {
        let id = a.dialogue_id.clone();
        if map.insert(id.clone(), a).is_some() {
            return Err(corefsum::Error::InvalidArgument(format!(
                "{}: duplicate annotation for dialogue {id:?}",
                path.display()
            ))
            .into());
        }
    }
    Ok(map)
}

fn check_known(
    map: &HashMap<String, CorefAnnotation>,
    dialogues: &[Dialogue],
    path: &Path,
) -> CliResult<()> {
    let mut unknown: Vec<&String> = map
        .keys()
        .filter(|k| !dialogues.iter().any(|d| &d.id == *k))
        .collect();
    unknown.sort();
    match unknown.first() {
        Some(id) => Err(corefsum::Error::InvalidArgument(format!(
            "{}: annotation for unknown dialogue {id:?}",
            path.display()
        ))
        .into()),
        None => Ok(()),
    }
}

pub fn postprocess(args: &PostprocessArgs) -> CliResult<CommandResult> {
    let dialogues: Vec<Dialogue> = read_jsonl(&args.dialogues)?;
    let systems = args
        .inputs
        .iter()
        .map(|p| {
            let m = index_annotations(p)?;
            check_known(&m, &dialogues, p)?;
            Ok(m)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let min_votes = args.min_votes.unwrap_or(systems.len() / 2 + 1);
    let merged = pool()?.install(|| {
        dialogues
            .par_iter()
            .map(|d| {
                let annotations = systems
                    .iter()
                    .map(|m| {
                        m.get(&d.id)
                            .cloned()
                            .unwrap_or_else(|| CorefAnnotation::empty(d.id.clone()))
                    })
                    .collect();
                run_postprocess(&EnsembleInput::new(annotations, min_votes), d)
            })
            .collect::<corefsum::Result<Vec<_>>>()
    })?;
    write_jsonl(&args.out, &merged)?;
    let clusters: usize = merged.iter().map(|a| a.clusters.len()).sum();
    Ok(CommandResult::new(
        vec![args.out.clone()],
        format!(
            "postprocess: {} dialogues, {clusters} clusters from {} systems (min votes {min_votes}) -> {}",
            merged.len(),
            systems.len(),
            args.out.display()
        ),
    ))
}

#[derive(Serialize)]
struct StructureRecord {
    dialogue_id: String,
    n: usize,
    edges: Vec<(usize, usize)>,
    attention: Vec<Vec<f64>>,
    covered: Vec<bool>,
}

pub fn graph(args: &GraphArgs) -> CliResult<CommandResult> {
    let dialogues: Vec<Dialogue> = read_jsonl(&args.dialogues)?;
    let annotations = index_annotations(&args.coref)?;
    check_known(&annotations, &dialogues, &args.coref)?;
    let records = pool()?.install(|| {
        dialogues
            .par_iter()
            .map(|d| {
                let n = flatten_dialogue(d)?.len();
                let a = annotations
                    .get(&d.id)
                    .cloned()
                    .unwrap_or_else(|| CorefAnnotation::empty(d.id.clone()));
                let g = build_coref_graph(&a, n)?;
                let ac = build_coref_attention(&a, n)?;
                Ok(StructureRecord {
                    dialogue_id: d.id.clone(),
                    n,
                    edges: g.edges(),
                    attention: ac.weights().to_rows(),
                    covered: ac.covered().to_vec(),
                })
            })
            .collect::<corefsum::Result<Vec<_>>>()
    })?;
    write_jsonl(&args.out, &records)?;
    Ok(CommandResult::new(
        vec![args.out.clone()],
        format!(
            "graph: {} dialogues -> {}",
            records.len(),
            args.out.display()
        ),
    ))
}

/// Samples from a corpus directory split, or from a JSONL file.
fn load_split(path: &Path, split: &str) -> CliResult<Vec<Sample>> {
    if path.is_dir() {
        read_jsonl(&path.join(format!("{split}.jsonl")))
    } else {
        read_jsonl(path)
    }
}

#[derive(Serialize, Deserialize)]
pub struct ProbeFile {
    pub samples: usize,
    pub layers: Vec<ProbeEntry>,
}

pub fn probe(args: &ProbeArgs) -> CliResult<CommandResult> {
    let model = load_checkpoint(&read_text(&args.checkpoint)?)?;
    let samples = load_split(&args.data, "validation")?;
    if samples.is_empty() {
        return Err(corefsum::Error::InvalidArgument("no samples to probe".into()).into());
    }
    let probes = pool()?.install(|| {
        samples
            .par_iter()
            .map(|s| {
                let (ids, coref) = model.prepare_source(&s.dialogue, Some(&s.coref))?;
                let (_, maps) = model.encode_tensor(&ids, coref.as_ref())?;
                let ac = build_coref_attention(&s.coref, ids.len())?;
                probe_heads(&maps, &ac)
            })
            .collect::<corefsum::Result<Vec<_>>>()
    })?;
    let mut report = ProbeReport::new(model.config.encoder_layers, model.config.heads);
    for p in &probes {
        report.record(p)?;
    }
    let file = ProbeFile {
        samples: report.samples(),
        layers: report.entries(),
    };
    write_json(&args.out, &file)?;
    let picks: Vec<String> = file
        .layers
        .iter()
        .map(|e| format!("{}:{}", e.layer, e.selected))
        .collect();
    Ok(CommandResult::new(
        vec![args.out.clone()],
        format!(
            "probe: {} samples, selected heads {} -> {}",
            file.samples,
            picks.join(","),
            args.out.display()
        ),
    ))
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn train(args: &TrainArgs) -> CliResult<CommandResult> {
    let mut mc = ModelConfig::default();
    let mut tc = TrainingConfig::default();
    if let Some(path) = &args.config {
        apply_config_text(&read_text(path)?, &mut mc, &mut tc).map_err(|e| match e {
            corefsum::Error::Parse { line, msg } => corefsum::Error::Parse {
                line,
                msg: format!("{}: {msg}", path.display()),
            },
            other => other,
        })?;
    }
    mc.variant = args
        .variant
        .parse::<Variant>()
        .map_err(|e| usage(e.to_string()))?;
    if let Some(seed) = args.seed {
        mc.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        tc.epochs = epochs;
    }
    if let Some(spec) = &args.heads {
        mc.head_selection = spec.parse()?;
    }
    if let Some(path) = &args.probe_report {
        let file: ProbeFile = read_json(path)?;
        let layers = match &args.probe_layers {
            Some(l) => l.clone(),
            None => file.layers.iter().map(|e| e.layer).collect(),
        };
        mc.head_selection = HeadSelection::from_entries(&file.layers, &layers)?;
    }
    if (args.heads.is_some() || args.probe_report.is_some()) && mc.variant != Variant::Headrep {
        return Err(usage(
            "--heads and --probe-report only apply to --variant headrep",
        ));
    }
    let corpus = if args.data.is_dir() {
        let validation_path = args.data.join("validation.jsonl");
        SyntheticCorpus {
            train: read_jsonl(&args.data.join("train.jsonl"))?,
            validation: if validation_path.exists() {
                read_jsonl(&validation_path)?
            } else {
                Vec::new()
            },
            test: Vec::new(),
        }
    } else {
        SyntheticCorpus {
            train: read_jsonl(&args.data)?,
            ..SyntheticCorpus::default()
        }
    };
    let outcome = train_with_progress(&corpus, &mc, &tc, |r| match r.val_rouge2 {
        Some(v) => eprintln!(
            "epoch {:>3}  loss {:.4}  val rouge2 {:.4}",
            r.epoch, r.train_loss, v
        ),
        None => eprintln!("epoch {:>3}  loss {:.4}", r.epoch, r.train_loss),
    })?;
    write_atomic(&args.out, save_checkpoint(&outcome.model)?.as_bytes())?;
    let mut artifacts = vec![args.out.clone()];
    if let Some(path) = &args.history {
        let rows: Vec<BTreeMap<&str, serde_json::Value>> = outcome
            .history
            .iter()
            .map(|r| {
                BTreeMap::from([
                    ("epoch", r.epoch.into()),
                    ("train_loss", r.train_loss.into()),
                    ("val_rouge2", r.val_rouge2.into()),
                ])
            })
            .collect();
        write_json(path, &rows)?;
        artifacts.push(path.clone());
    }
    Ok(CommandResult::new(
        artifacts,
        format!(
            "train: {} on {} samples, best epoch {} of {} -> {}",
            mc.variant,
            corpus.train.len(),
            outcome.best_epoch,
            tc.epochs,
            args.out.display()
        ),
    ))
}

/// A JSONL line holding either a bare dialogue or a full sample.
#[derive(Deserialize)]
#[serde(untagged)]
enum DialogueLine {
    Sample(Box<Sample>),
    Dialogue(Dialogue),
}

pub fn summarize(args: &SummarizeArgs) -> CliResult<CommandResult> {
    let model = load_checkpoint(&read_text(&args.checkpoint)?)?;
    let lines: Vec<DialogueLine> = read_jsonl(&args.dialogues)?;
    let items: Vec<(Dialogue, Option<CorefAnnotation>)> = lines
        .into_iter()
        .map(|l| match l {
            DialogueLine::Sample(s) => (s.dialogue, Some(s.coref)),
            DialogueLine::Dialogue(d) => (d, None),
        })
        .collect();
    let overrides = match &args.coref {
        Some(path) => {
            let m = index_annotations(path)?;
            let dialogues: Vec<Dialogue> = items.iter().map(|(d, _)| d.clone()).collect();
            check_known(&m, &dialogues, path)?;
            Some(m)
        }
        None => None,
    };
    let summaries = pool()?.install(|| {
        items
            .par_iter()
            .map(|(d, carried)| {
                let a = match &overrides {
                    Some(m) => m.get(&d.id),
                    None => carried.as_ref(),
                };
                model.summarize(d, a, args.max_len)
            })
            .collect::<corefsum::Result<Vec<_>>>()
    })?;
    write_lines(&args.out, &summaries)?;
    Ok(CommandResult::new(
        vec![args.out.clone()],
        format!(
            "summarize: {} dialogues with {} -> {}",
            summaries.len(),
            model.variant(),
            args.out.display()
        ),
    ))
}

#[derive(Serialize)]
struct EvaluationReport {
    count: usize,
    #[serde(flatten)]
    scores: CorpusScores,
    hyp_length: String,
    ref_length: String,
}

fn summary_lines(path: &Path) -> CliResult<Vec<String>> {
    Ok(read_text(path)?.lines().map(str::to_string).collect())
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult<CommandResult> {
    let hyps = summary_lines(&args.hyp)?;
    let refs = summary_lines(&args.reference)?;
    if hyps.len() != refs.len() {
        return Err(corefsum::Error::InvalidArgument(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        ))
        .into());
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> = pool()?.install(|| {
        hyps.par_iter()
            .zip(refs.par_iter())
            .map(|(h, r)| (words(h), words(r)))
            .collect()
    });
    let report = EvaluationReport {
        count: pairs.len(),
        scores: corpus_scores(&pairs)?,
        hyp_length: length_stats(&hyps)?.to_string(),
        ref_length: length_stats(&refs)?.to_string(),
    };
    let line = format!(
        "evaluate: {} pairs, rouge1 f {:.4}, rouge2 f {:.4}, rougeL f {:.4}",
        report.count, report.scores.rouge1.f, report.scores.rouge2.f, report.scores.rouge_l.f
    );
    match &args.out {
        Some(path) => {
            write_json(path, &report)?;
            Ok(CommandResult::new(
                vec![path.clone()],
                format!("{line} -> {}", path.display()),
            ))
        }
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(corefsum::Error::from)?
            );
            Ok(CommandResult::new(Vec::new(), line))
        }
    }
}

pub fn gen_data(args: &GenDataArgs) -> CliResult<CommandResult> {
    let corpus = SyntheticCorpus::generate(args.train, args.validation, args.test, args.seed)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut artifacts: Vec<PathBuf> = Vec::new();
    for (name, split) in [
        ("train", &corpus.train),
        ("validation", &corpus.validation),
        ("test", &corpus.test),
    ] {
        let path = args.out.join(format!("{name}.jsonl"));
        write_jsonl(&path, split)?;
        artifacts.push(path);
    }
    Ok(CommandResult::new(
        artifacts,
        format!(
            "gen-data: {}/{}/{} samples (seed {}) -> {}",
            corpus.train.len(),
            corpus.validation.len(),
            corpus.test.len(),
            args.seed,
            args.out.display()
        ),
    ))
}
