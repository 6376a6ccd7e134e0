//! ROUGE-1/2/L with F/P/R and summary length statistics.
//!
//! Tokens are lowercased before matching; no stemming or stopword removal.
//! ROUGE-n uses clipped n-gram counts, ROUGE-L the sentence-level longest
//! common subsequence.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub f: f64,
    pub p: f64,
    pub r: f64,
}

impl RougeScore {
    pub fn from_pr(p: f64, r: f64) -> Self {
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        Self { f, p, r }
    }
}

fn lower<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens.iter().map(|t| t.as_ref().to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn rouge_n<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let (h, r) = (lower(hyp), lower(reference));
    let (hc, rc) = (ngram_counts(&h, n), ngram_counts(&r, n));
    let overlap: usize = hc
        .iter()
        .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
        .sum();
    let h_total = h.len().saturating_sub(n - 1);
    let r_total = r.len().saturating_sub(n - 1);
    RougeScore::from_pr(ratio(overlap, h_total), ratio(overlap, r_total))
}

pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<S: AsRef<str>, T: AsRef<str>>(hyp: &[S], reference: &[T]) -> RougeScore {
    let (h, r) = (lower(hyp), lower(reference));
    let l = lcs_len(&h, &r);
    RougeScore::from_pr(ratio(l, h.len()), ratio(l, r.len()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
}

fn mean_score(scores: &[RougeScore]) -> RougeScore {
    let n = scores.len() as f64;
    RougeScore {
        f: scores.iter().map(|s| s.f).sum::<f64>() / n,
        p: scores.iter().map(|s| s.p).sum::<f64>() / n,
        r: scores.iter().map(|s| s.r).sum::<f64>() / n,
    }
}

/// Arithmetic mean of per-pair F/P/R for each metric. Pairs are
/// `(hypothesis tokens, reference tokens)`.
pub fn corpus_scores<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<CorpusScores> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no summary pairs to score".into()));
    }
    let r1: Vec<_> = pairs.iter().map(|(h, r)| rouge_n(h, r, 1)).collect();
    let r2: Vec<_> = pairs.iter().map(|(h, r)| rouge_n(h, r, 2)).collect();
    let rl: Vec<_> = pairs.iter().map(|(h, r)| rouge_l(h, r)).collect();
    Ok(CorpusScores {
        rouge1: mean_score(&r1),
        rouge2: mean_score(&r2),
        rouge_l: mean_score(&rl),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl fmt::Display for LengthStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

pub fn length_stats<S: AsRef<str>>(summaries: &[S]) -> Result<LengthStats> {
    if summaries.is_empty() {
        return Err(Error::InvalidArgument("no summaries".into()));
    }
    let lens: Vec<f64> = summaries
        .iter()
        .map(|s| s.as_ref().split_whitespace().count() as f64)
        .collect();
    let n = lens.len() as f64;
    let mean = lens.iter().sum::<f64>() / n;
    let var = lens.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    Ok(LengthStats {
        mean,
        std: var.sqrt(),
    })
}

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}
