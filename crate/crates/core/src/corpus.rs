//! Seeded synthetic dialogues whose summaries hinge on resolving a pronoun.
//!
//! Each dialogue introduces two third parties of the same gender, then a
//! later turn reports what "he"/"she" did. The summary names the actor, and
//! the actor is picked at random from the pair, so only the gold
//! coreference chain tells which name belongs in the summary.

use serde::{Deserialize, Serialize};

use crate::coref::{Cluster, CorefAnnotation};
use crate::dialogue::{flatten_dialogue, Dialogue, Span, Turn};
use crate::error::{Error, Result};
use crate::eval::{corpus_scores, words, CorpusScores};
use crate::model::Summarizer;
use crate::numerics::RngState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub dialogue: Dialogue,
    pub coref: CorefAnnotation,
    pub summary: String,
    /// The name the summary must start with.
    pub actor: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SyntheticCorpus {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl SyntheticCorpus {
    /// `train + validation + test` samples from one seeded stream, split in
    /// generation order.
    pub fn generate(train: usize, validation: usize, test: usize, seed: u64) -> Result<Self> {
        let mut all = generate_synthetic(train + validation + test, seed)?;
        let test_set = all.split_off(train + validation);
        let val_set = all.split_off(train);
        Ok(Self {
            train: all,
            validation: val_set,
            test: test_set,
        })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const MALE: [&str; 5] = ["Tom", "Jack", "Paul", "Mike", "Dan"];
const FEMALE: [&str; 5] = ["Amanda", "Kate", "Lucy", "Emma", "Anna"];

const ACTIONS: [&str; 12] = [
    "lost the keys",
    "missed the bus",
    "broke the printer",
    "won the lottery",
    "bought a new car",
    "failed the exam",
    "forgot the meeting",
    "cooked dinner",
    "painted the fence",
    "adopted a puppy",
    "quit the job",
    "booked the tickets",
];

const INTROS: [&str; 4] = [
    "did you see {a} and {b} today ?",
    "{a} and {b} came over last night",
    "i met {a} and {b} at the office",
    "{a} and {b} called me earlier",
];
const ASKS: [&str; 4] = [
    "what happened ?",
    "oh , how are they ?",
    "really ? tell me",
    "and ?",
];
const REVEALS: [&str; 4] = [
    "{p} {act}",
    "apparently {p} {act}",
    "i heard {p} {act}",
    "{p} {act} yesterday",
];
const REACTIONS: [&str; 6] = ["oh no", "no way", "really ?", "wow", "haha", "typical"];
const FILLERS: [&str; 14] = [
    "ok",
    "lol",
    "i see",
    "sure",
    "hmm",
    "i know",
    "right",
    "yes",
    "ok cool",
    "that is funny",
    "good to know",
    "makes sense",
    "i guess so",
    "fair enough",
];
const CLOSINGS: [&str; 4] = ["see you later", "bye", "talk later", "ok bye"];

fn pick<'a>(rng: &mut RngState, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len())]
}

/// A turn under construction: words plus the word indices of tracked
/// mentions.
struct Draft {
    speaker: usize,
    words: Vec<String>,
    a: Option<usize>,
    b: Option<usize>,
    pronoun: Option<usize>,
}

fn expand(template: &str, speaker: usize, fill: &[(&str, &str)]) -> Draft {
    let mut d = Draft {
        speaker,
        words: Vec::new(),
        a: None,
        b: None,
        pronoun: None,
    };
    for tok in template.split_whitespace() {
        let at = d.words.len();
        match tok {
            "{a}" => d.a = Some(at),
            "{b}" => d.b = Some(at),
            "{p}" => d.pronoun = Some(at),
            _ => {}
        }
        match fill.iter().find(|(k, _)| *k == tok) {
            Some((_, v)) => d.words.extend(v.split_whitespace().map(str::to_string)),
            None => d.words.push(tok.to_string()),
        }
    }
    d
}

fn next_speaker(rng: &mut RngState, count: usize, prev: usize) -> usize {
    (prev + 1 + rng.below(count - 1)) % count
}

fn generate_one(rng: &mut RngState, id: String) -> Result<Sample> {
    let n_speakers = if rng.next_f64() < 0.6 { 2 } else { 3 };
    let (pair_pool, pronoun) = if rng.below(2) == 0 {
        (&MALE, "he")
    } else {
        (&FEMALE, "she")
    };
    let i = rng.below(pair_pool.len());
    let j = (i + 1 + rng.below(pair_pool.len() - 1)) % pair_pool.len();
    let (a, b) = (pair_pool[i], pair_pool[j]);
    let mut speakers: Vec<&str> = Vec::new();
    while speakers.len() < n_speakers {
        let pool = if rng.below(2) == 0 { &MALE } else { &FEMALE };
        let s = pick(rng, pool);
        if s != a && s != b && !speakers.contains(&s) {
            speakers.push(s);
        }
    }
    // which of the two introduced names the pronoun refers to
    let actor_is_a = rng.below(2) == 0;
    let action = pick(rng, &ACTIONS);

    let mut drafts = Vec::new();
    let mut cur = 0;
    drafts.push(expand(pick(rng, &INTROS), cur, &[("{a}", a), ("{b}", b)]));
    cur = next_speaker(rng, n_speakers, cur);
    drafts.push(expand(pick(rng, &ASKS), cur, &[]));
    for _ in 0..1 + rng.below(3) {
        cur = next_speaker(rng, n_speakers, cur);
        drafts.push(expand(pick(rng, &FILLERS), cur, &[]));
    }
    cur = next_speaker(rng, n_speakers, cur);
    drafts.push(expand(
        pick(rng, &REVEALS),
        cur,
        &[("{p}", pronoun), ("{act}", action)],
    ));
    cur = next_speaker(rng, n_speakers, cur);
    drafts.push(expand(pick(rng, &REACTIONS), cur, &[]));
    for _ in 0..2 + rng.below(4) {
        cur = next_speaker(rng, n_speakers, cur);
        drafts.push(expand(pick(rng, &FILLERS), cur, &[]));
    }
    cur = next_speaker(rng, n_speakers, cur);
    drafts.push(expand(pick(rng, &CLOSINGS), cur, &[]));

    // global positions: each turn contributes `speaker_token : words...`
    let mut speaker_mentions: Vec<Cluster> = vec![Vec::new(); n_speakers];
    let (mut a_pos, mut b_pos, mut p_pos) = (None, None, None);
    let mut offset = 0;
    for d in &drafts {
        speaker_mentions[d.speaker].push(Span::single(offset));
        for (k, w) in d.words.iter().enumerate() {
            if w == "i" {
                speaker_mentions[d.speaker].push(Span::single(offset + 2 + k));
            }
        }
        a_pos = a_pos.or(d.a.map(|k| offset + 2 + k));
        b_pos = b_pos.or(d.b.map(|k| offset + 2 + k));
        p_pos = p_pos.or(d.pronoun.map(|k| offset + 2 + k));
        offset += 2 + d.words.len();
    }
    let (actor_pos, actor) = if actor_is_a { (a_pos, a) } else { (b_pos, b) };
    let (actor_pos, p_pos) = actor_pos.zip(p_pos).expect("templates place both mentions");
    let mut clusters = vec![vec![Span::single(actor_pos), Span::single(p_pos)]];
    clusters.extend(speaker_mentions.into_iter().filter(|c| c.len() >= 2));

    let dialogue = Dialogue::new(
        id.clone(),
        drafts
            .iter()
            .map(|d| Turn::new(speakers[d.speaker], d.words.join(" ")))
            .collect(),
    );
    let coref = CorefAnnotation::new(id, clusters).normalized();
    coref.validate(flatten_dialogue(&dialogue)?.len())?;
    Ok(Sample {
        dialogue,
        coref,
        summary: format!("{actor} {action} ."),
        actor: actor.to_string(),
    })
}

/// `n` samples from a seeded stream; a prefix of a longer run with the same
/// seed.
pub fn generate_synthetic(n: usize, seed: u64) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    let mut rng = RngState::new(seed);
    (0..n)
        .map(|i| generate_one(&mut rng, format!("syn-{seed}-{i:05}")))
        .collect()
}

/// Whether a generated summary opens with the gold actor.
pub fn names_actor(hypothesis: &str, actor: &str) -> bool {
    hypothesis
        .split_whitespace()
        .next()
        .is_some_and(|w| w.eq_ignore_ascii_case(actor))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelEvaluation {
    pub hypotheses: Vec<String>,
    pub scores: CorpusScores,
    pub actor_accuracy: f64,
}

/// Greedy summaries for `samples` (using their gold coreference) with
/// ROUGE and actor accuracy.
pub fn evaluate_model(
    model: &Summarizer,
    samples: &[Sample],
    max_len: usize,
) -> Result<ModelEvaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let mut hypotheses = Vec::with_capacity(samples.len());
    let mut pairs = Vec::with_capacity(samples.len());
    let mut named = 0;
    for s in samples {
        let hyp = model.summarize(&s.dialogue, Some(&s.coref), max_len)?;
        named += usize::from(names_actor(&hyp, &s.actor));
        pairs.push((words(&hyp), words(&s.summary)));
        hypotheses.push(hyp);
    }
    Ok(ModelEvaluation {
        hypotheses,
        scores: corpus_scores(&pairs)?,
        actor_accuracy: named as f64 / samples.len() as f64,
    })
}
