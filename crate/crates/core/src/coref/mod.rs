//! Cleanup of automatic coreference output for dialogues.
//!
//! Three passes run in order: mention-pair ensemble voting, speaker
//! reassignment, and same-chain cluster merging. Singleton clusters survive
//! the intermediate passes (they may still grow) and are only dropped by
//! [`postprocess`].

mod union_find;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::dialogue::{flatten_dialogue, Dialogue, Span, TokenSequence};
use crate::error::{Error, Result};

pub use union_find::UnionFind;

pub type Cluster = Vec<Span>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefAnnotation {
    pub dialogue_id: String,
    pub clusters: Vec<Cluster>,
}

impl CorefAnnotation {
    pub fn new(dialogue_id: impl Into<String>, clusters: Vec<Cluster>) -> Self {
        Self {
            dialogue_id: dialogue_id.into(),
            clusters,
        }
    }

    pub fn empty(dialogue_id: impl Into<String>) -> Self {
        Self::new(dialogue_id, Vec::new())
    }

    /// Convenience constructor from `(start, end)` pairs.
    pub fn from_pairs(dialogue_id: impl Into<String>, clusters: &[&[(usize, usize)]]) -> Self {
        Self::new(
            dialogue_id,
            clusters
                .iter()
                .map(|c| c.iter().map(|&(s, e)| Span::new(s, e)).collect())
                .collect(),
        )
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        self.clusters
            .iter()
            .flatten()
            .try_for_each(|span| span.validate(len))
    }

    pub fn span_count(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    /// Sorts and dedups spans inside clusters, drops empty clusters and
    /// orders clusters by their earliest span.
    pub fn normalized(mut self) -> Self {
        for c in &mut self.clusters {
            c.sort();
            c.dedup();
        }
        self.clusters.retain(|c| !c.is_empty());
        self.clusters.sort();
        self
    }

    pub fn without_singletons(mut self) -> Self {
        self.clusters.retain(|c| c.len() >= 2);
        self
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleInput {
    pub annotations: Vec<CorefAnnotation>,
    pub min_votes: usize,
}

impl EnsembleInput {
    pub fn new(annotations: Vec<CorefAnnotation>, min_votes: usize) -> Self {
        Self {
            annotations,
            min_votes,
        }
    }

    pub fn single(annotation: CorefAnnotation) -> Self {
        Self::new(vec![annotation], 1)
    }

    fn validate(&self) -> Result<&str> {
        let first = self
            .annotations
            .first()
            .ok_or_else(|| Error::Ensemble("no annotations".into()))?;
        if let Some(bad) = self
            .annotations
            .iter()
            .find(|a| a.dialogue_id != first.dialogue_id)
        {
            return Err(Error::Ensemble(format!(
                "mismatched dialogue ids {:?} and {:?}",
                first.dialogue_id, bad.dialogue_id
            )));
        }
        if self.min_votes == 0 || self.min_votes > self.annotations.len() {
            return Err(Error::Ensemble(format!(
                "min_votes {} outside 1..={}",
                self.min_votes,
                self.annotations.len()
            )));
        }
        Ok(&first.dialogue_id)
    }
}

/// Mention-pair voting. A pair of spans is kept when at least `min_votes`
/// annotations put both in one cluster; output clusters are the connected
/// components of kept pairs. Spans proposed by enough annotations but with no
/// kept partner survive as singletons.
pub fn ensemble_merge(input: &EnsembleInput) -> Result<CorefAnnotation> {
    let dialogue_id = input.validate()?.to_string();

    let mut pair_votes: BTreeMap<(Span, Span), usize> = BTreeMap::new();
    let mut mention_votes: BTreeMap<Span, usize> = BTreeMap::new();
    for ann in &input.annotations {
        let mut pairs = BTreeSet::new();
        let mut mentions = BTreeSet::new();
        for cluster in &ann.clusters {
            for (i, &a) in cluster.iter().enumerate() {
                mentions.insert(a);
                for &b in &cluster[i + 1..] {
                    if a != b {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
        for p in pairs {
            *pair_votes.entry(p).or_default() += 1;
        }
        for m in mentions {
            *mention_votes.entry(m).or_default() += 1;
        }
    }

    let kept: Vec<(Span, Span)> = pair_votes
        .into_iter()
        .filter(|&(_, v)| v >= input.min_votes)
        .map(|(p, _)| p)
        .collect();
    let mut universe: BTreeSet<Span> = kept.iter().flat_map(|&(a, b)| [a, b]).collect();
    universe.extend(
        mention_votes
            .into_iter()
            .filter(|&(_, v)| v >= input.min_votes)
            .map(|(m, _)| m),
    );
    let spans: Vec<Span> = universe.into_iter().collect();
    let index: HashMap<Span, usize> = spans.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    let mut uf = UnionFind::new(spans.len());
    for (a, b) in kept {
        uf.union(index[&a], index[&b]);
    }
    let clusters = uf
        .groups()
        .into_iter()
        .map(|g| g.into_iter().map(|i| spans[i]).collect())
        .collect();
    Ok(CorefAnnotation::new(dialogue_id, clusters).normalized())
}

fn mention_text(tokens: &TokenSequence, span: Span) -> String {
    tokens.tokens[span.start..=span.end]
        .join("_")
        .to_lowercase()
}

/// Adds uncovered speaker tokens to the cluster that mentions the speaker by
/// name. A speaker token counts as covered when it lies inside a span of some
/// chain (a cluster with at least two mentions).
pub fn assign_speakers(a: &CorefAnnotation, d: &Dialogue) -> Result<CorefAnnotation> {
    let tokens = flatten_dialogue(d)?;
    a.validate(tokens.len())?;
    let mut out = a.clone();

    for &p in &tokens.speaker_positions {
        let covered = out
            .clusters
            .iter()
            .filter(|c| c.len() >= 2)
            .flatten()
            .any(|s| s.start <= p && p <= s.end);
        if covered {
            continue;
        }
        let name = tokens.tokens[p].to_lowercase();
        // (distance, cluster index); first minimum wins so equal distances
        // resolve to the earlier cluster
        let mut best: Option<(usize, usize)> = None;
        for (ci, cluster) in out.clusters.iter().enumerate() {
            let nearest = cluster
                .iter()
                .filter(|s| mention_text(&tokens, **s) == name)
                .map(|s| s.start.abs_diff(p))
                .min();
            if let Some(dist) = nearest {
                if best.is_none_or(|(bd, _)| dist < bd) {
                    best = Some((dist, ci));
                }
            }
        }
        if let Some((_, ci)) = best {
            let cluster = &mut out.clusters[ci];
            let pos = cluster.partition_point(|s| *s < Span::single(p));
            if cluster.get(pos) != Some(&Span::single(p)) {
                cluster.insert(pos, Span::single(p));
            }
        }
    }
    Ok(out)
}

/// Merges clusters that share an identical span, or that each contain a
/// single-token mention naming the same speaker.
pub fn merge_clusters(a: &CorefAnnotation, d: &Dialogue) -> Result<CorefAnnotation> {
    let tokens = flatten_dialogue(d)?;
    a.validate(tokens.len())?;
    let speakers: BTreeSet<String> = tokens
        .speaker_positions
        .iter()
        .map(|&p| tokens.tokens[p].to_lowercase())
        .collect();

    let mut uf = UnionFind::new(a.clusters.len());
    let mut owner_of_span: HashMap<Span, usize> = HashMap::new();
    let mut owner_of_name: HashMap<String, usize> = HashMap::new();
    for (ci, cluster) in a.clusters.iter().enumerate() {
        for &span in cluster {
            if let Some(&other) = owner_of_span.get(&span) {
                uf.union(ci, other);
            } else {
                owner_of_span.insert(span, ci);
            }
            if span.start == span.end {
                let text = tokens.tokens[span.start].to_lowercase();
                if speakers.contains(&text) {
                    if let Some(&other) = owner_of_name.get(&text) {
                        uf.union(ci, other);
                    } else {
                        owner_of_name.insert(text, ci);
                    }
                }
            }
        }
    }

    let clusters = uf
        .groups()
        .into_iter()
        .map(|g| {
            g.into_iter()
                .flat_map(|ci| a.clusters[ci].iter().copied())
                .collect()
        })
        .collect();
    Ok(CorefAnnotation::new(a.dialogue_id.clone(), clusters).normalized())
}

pub fn postprocess(inputs: &EnsembleInput, d: &Dialogue) -> Result<CorefAnnotation> {
    let voted = ensemble_merge(inputs)?;
    let assigned = assign_speakers(&voted, d)?;
    Ok(merge_clusters(&assigned, d)?.without_singletons())
}
