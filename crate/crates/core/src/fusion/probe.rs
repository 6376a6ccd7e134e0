//! Head probing: which attention head already looks most like the
//! coreference attention matrix.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::structures::CorefAttentionMatrix;

/// Cosine similarity of two matrices viewed as flat vectors.
pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "cosine_similarity",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerProbe {
    pub layer: usize,
    pub cosines: Vec<f64>,
    /// Highest-cosine head; ties go to the lowest index.
    pub selected: usize,
}

/// Probes every head of every layer for one sample. `maps[l][h]` is the
/// attention matrix of head `h` in layer `l`.
pub fn probe_heads(maps: &[Vec<Tensor>], ac: &CorefAttentionMatrix) -> Result<Vec<LayerProbe>> {
    maps.iter()
        .enumerate()
        .map(|(layer, heads)| {
            let cosines = heads
                .iter()
                .map(|m| cosine_similarity(m, ac.weights()))
                .collect::<Result<Vec<_>>>()?;
            let mut selected = 0;
            for (h, &c) in cosines.iter().enumerate() {
                if c > cosines[selected] {
                    selected = h;
                }
            }
            if cosines.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "layer {layer} has no heads"
                )));
            }
            Ok(LayerProbe {
                layer,
                cosines,
                selected,
            })
        })
        .collect()
}

/// Win counts per head aggregated over a sample set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProbeReport {
    wins: Vec<Vec<usize>>,
    samples: usize,
}

/// Serialized form of one layer of a [`ProbeReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub layer: usize,
    pub ratios: Vec<f64>,
    pub selected: usize,
}

impl ProbeReport {
    pub fn new(layers: usize, heads: usize) -> Self {
        Self {
            wins: vec![vec![0; heads]; layers],
            samples: 0,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Records one sample: exactly one win per layer.
    pub fn record(&mut self, probes: &[LayerProbe]) -> Result<()> {
        if probes.len() != self.wins.len() {
            return Err(Error::shape(
                "probe report",
                format!("{} layers, expected {}", probes.len(), self.wins.len()),
            ));
        }
        for p in probes {
            let row = &mut self.wins[p.layer];
            if p.selected >= row.len() {
                return Err(Error::shape("probe report", "head out of range"));
            }
            row[p.selected] += 1;
        }
        self.samples += 1;
        Ok(())
    }

    /// Builds a report directly from win counts.
    pub fn from_wins(wins: Vec<Vec<usize>>, samples: usize) -> Result<Self> {
        if wins.iter().any(|w| w.iter().sum::<usize>() != samples) {
            return Err(Error::InvalidArgument(
                "each layer must award exactly one win per sample".into(),
            ));
        }
        Ok(Self { wins, samples })
    }

    pub fn ratios(&self, layer: usize) -> Vec<f64> {
        let total = self.samples.max(1) as f64;
        self.wins[layer].iter().map(|&w| w as f64 / total).collect()
    }

    pub fn selected(&self, layer: usize) -> usize {
        let wins = &self.wins[layer];
        let mut best = 0;
        for (h, &w) in wins.iter().enumerate() {
            if w > wins[best] {
                best = h;
            }
        }
        best
    }

    pub fn entries(&self) -> Vec<ProbeEntry> {
        (0..self.wins.len())
            .map(|layer| ProbeEntry {
                layer,
                ratios: self.ratios(layer),
                selected: self.selected(layer),
            })
            .collect()
    }
}

/// `(layer, head)` pairs whose attention weights are replaced.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSelection(pub Vec<(usize, usize)>);

impl HeadSelection {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, layers: usize, heads: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &(l, h) in &self.0 {
            if l >= layers || h >= heads {
                return Err(Error::Config(format!(
                    "head {l}:{h} outside {layers} layers x {heads} heads"
                )));
            }
            if !seen.insert((l, h)) {
                return Err(Error::Config(format!("duplicate head {l}:{h}")));
            }
        }
        Ok(())
    }

    pub fn heads_in_layer(&self, layer: usize) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .filter(move |(l, _)| *l == layer)
            .map(|&(_, h)| h)
    }

    /// The winning head of each listed layer.
    pub fn from_entries(entries: &[ProbeEntry], layers: &[usize]) -> Result<Self> {
        layers
            .iter()
            .map(|&l| {
                entries
                    .iter()
                    .find(|e| e.layer == l)
                    .map(|e| (l, e.selected))
                    .ok_or_else(|| Error::Config(format!("probe report has no layer {l}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(HeadSelection)
    }
}

impl FromStr for HeadSelection {
    type Err = Error;

    /// Parses `layer:head,layer:head,...`.
    fn from_str(s: &str) -> Result<Self> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|pair| {
                let (l, h) = pair
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("bad head spec {pair:?}")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad head spec {pair:?}")))
                };
                Ok((parse(l)?, parse(h)?))
            })
            .collect::<Result<Vec<_>>>()
            .map(HeadSelection)
    }
}

impl fmt::Display for HeadSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(l, h)| format!("{l}:{h}")).collect();
        f.write_str(&parts.join(","))
    }
}
