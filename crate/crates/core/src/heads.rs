//! Task heads: three-way entailment classification over sentence pairs, and
//! the reverse-dictionary projection with rank-based evaluation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{dot, NodeId, ParamId, ParameterStore, Shape, Tape, COSINE_EPS};
use crate::embeddings::EmbeddingTable;
use crate::encoders::INIT_SCALE;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Entailment = 0,
    Neutral = 1,
    Contradiction = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Neutral, Label::Contradiction];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Neutral => "neutral",
            Label::Contradiction => "contradiction",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

/// `q = ReLU(A [u; v; s1; s2] + a)` with `u = (s1 - s2)^2`, `v = s1 ⊙ s2`,
/// followed by logits `B q + b`. For sentence dimension `D`, `A` is
/// `2D x 4D` and `B` is `3 x 2D`.
#[derive(Clone, Debug)]
pub struct EntailmentHead {
    pub hidden_w: ParamId,
    pub hidden_b: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub dim: usize,
}

pub struct PairFeatures {
    pub diff_sq: NodeId,
    pub product: NodeId,
    pub hidden: NodeId,
}

impl EntailmentHead {
    pub fn register<R: Rng>(store: &mut ParameterStore, dim: usize, rng: &mut R) -> Result<Self> {
        Ok(EntailmentHead {
            hidden_w: store.insert_uniform("nli.A", Shape::matrix(2 * dim, 4 * dim), INIT_SCALE, rng)?,
            hidden_b: store.insert_uniform("nli.a", Shape::vector(2 * dim), INIT_SCALE, rng)?,
            out_w: store.insert_uniform("nli.B", Shape::matrix(3, 2 * dim), INIT_SCALE, rng)?,
            out_b: store.insert_uniform("nli.b", Shape::vector(3), INIT_SCALE, rng)?,
            dim,
        })
    }

    pub fn from_store(store: &ParameterStore, dim: usize) -> Result<Self> {
        let head = EntailmentHead {
            hidden_w: store.id("nli.A")?,
            hidden_b: store.id("nli.a")?,
            out_w: store.id("nli.B")?,
            out_b: store.id("nli.b")?,
            dim,
        };
        let expected = [
            (head.hidden_w, Shape::matrix(2 * dim, 4 * dim)),
            (head.hidden_b, Shape::vector(2 * dim)),
            (head.out_w, Shape::matrix(3, 2 * dim)),
            (head.out_b, Shape::vector(3)),
        ];
        for (id, shape) in expected {
            if store.tensor(id).shape != shape {
                return Err(Error::Shape {
                    op: "parameter lookup",
                    left: shape,
                    right: store.tensor(id).shape.clone(),
                });
            }
        }
        Ok(head)
    }

    pub fn features(&self, tape: &mut Tape, store: &ParameterStore, s1: NodeId, s2: NodeId) -> Result<PairFeatures> {
        for s in [s1, s2] {
            if *tape.shape(s) != Shape::vector(self.dim) {
                return Err(Error::Shape {
                    op: "entailment-head",
                    left: Shape::vector(self.dim),
                    right: tape.shape(s).clone(),
                });
            }
        }
        let diff_sq = tape.squared_diff(s1, s2)?;
        let product = tape.mul(s1, s2)?;
        let feat = tape.concat(&[diff_sq, product, s1, s2])?;
        let a = tape.param(store, self.hidden_w);
        let ab = tape.param(store, self.hidden_b);
        let pre = tape.affine(a, feat, ab)?;
        let hidden = tape.relu(pre)?;
        Ok(PairFeatures {
            diff_sq,
            product,
            hidden,
        })
    }

    /// Unnormalized class scores, indexed by [`Label::index`].
    pub fn logits(&self, tape: &mut Tape, store: &ParameterStore, s1: NodeId, s2: NodeId) -> Result<NodeId> {
        let f = self.features(tape, store, s1, s2)?;
        let b = tape.param(store, self.out_w);
        let bb = tape.param(store, self.out_b);
        tape.affine(b, f.hidden, bb)
    }

    /// Cross-entropy of the gold label under the softmax of the logits.
    pub fn loss(&self, tape: &mut Tape, logits: NodeId, gold: Label) -> Result<NodeId> {
        tape.log_loss_pick(logits, gold.index())
    }
}

/// Index of the largest logit; ties go to the smaller index.
pub fn predict(logits: &[f64]) -> Label {
    let best = logits
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > logits[best] { i } else { best });
    Label::from_index(best).expect("three logits")
}

/// Projects a sentence vector into a frozen output embedding space, scored by
/// cosine similarity.
#[derive(Clone, Debug)]
pub struct RevDictHead {
    pub proj: ParamId,
    /// Never updated by training.
    pub output: Arc<EmbeddingTable>,
    pub dim: usize,
}

impl RevDictHead {
    pub fn register<R: Rng>(
        store: &mut ParameterStore,
        dim: usize,
        output: Arc<EmbeddingTable>,
        rng: &mut R,
    ) -> Result<Self> {
        let proj = store.insert_uniform("revdict.W", Shape::matrix(output.dim, dim), INIT_SCALE, rng)?;
        Ok(RevDictHead { proj, output, dim })
    }

    pub fn from_store(store: &ParameterStore, dim: usize, output: Arc<EmbeddingTable>) -> Result<Self> {
        let proj = store.id("revdict.W")?;
        let expected = Shape::matrix(output.dim, dim);
        if store.tensor(proj).shape != expected {
            return Err(Error::Shape {
                op: "parameter lookup",
                left: expected,
                right: store.tensor(proj).shape.clone(),
            });
        }
        Ok(RevDictHead { proj, output, dim })
    }

    /// `-cos(W s, d)` for an explicit target vector `d`.
    pub fn loss_against(&self, tape: &mut Tape, store: &ParameterStore, s: NodeId, d: &[f64]) -> Result<NodeId> {
        let w = tape.param(store, self.proj);
        let projected = tape.matvec(w, s)?;
        let target = tape.constant_vector(d.to_vec());
        let cos = tape.cosine(projected, target)?;
        tape.scale(cos, -1.0)
    }

    /// `-cos(W s, d)` where `d` is row `target` of the output table.
    pub fn loss(&self, tape: &mut Tape, store: &ParameterStore, s: NodeId, target: usize) -> Result<NodeId> {
        let d = self.output.row(target).to_vec();
        self.loss_against(tape, store, s, &d)
    }

    /// `W s` evaluated directly, for ranking.
    pub fn project(&self, store: &ParameterStore, s: &[f64]) -> Vec<f64> {
        let w = &store.tensor(self.proj).value;
        w.chunks_exact(self.dim).map(|row| dot(row, s)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub median_rank: f64,
    pub top10: f64,
    pub top100: f64,
    pub count: usize,
}

impl RankingResult {
    /// Aggregates 1-based ranks; the median of an even count is the midpoint
    /// of the two central ranks.
    pub fn from_ranks(ranks: &[usize]) -> RankingResult {
        let mut sorted = ranks.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median_rank = match n {
            0 => f64::NAN,
            _ if n % 2 == 1 => sorted[n / 2] as f64,
            _ => (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0,
        };
        let frac = |k: usize| sorted.iter().filter(|r| **r <= k).count() as f64 / n.max(1) as f64;
        RankingResult {
            median_rank,
            top10: frac(10),
            top100: frac(100),
            count: n,
        }
    }

    pub fn to_records(&self) -> String {
        format!(
            "median_rank={}\ntop10={:.4}\ntop100={:.4}\ncount={}",
            self.median_rank, self.top10, self.top100, self.count
        )
    }
}

impl fmt::Display for RankingResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "median rank {} | top-10 {:.1}% | top-100 {:.1}% | n={}",
            self.median_rank,
            100.0 * self.top10,
            100.0 * self.top100,
            self.count
        )
    }
}

fn cosine(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    dot(a, b) / (na * nb)
}

/// Ranks every candidate by `cos(W s, d_w)` for each definition vector `s`
/// and returns the 1-based position of the target. `candidates` and
/// `targets` are rows of the head's output table; candidates with the same
/// score as the target count ahead of it only if they come earlier in
/// `candidates`.
pub fn rank_targets(
    definitions: &[Vec<f64>],
    targets: &[usize],
    head: &RevDictHead,
    store: &ParameterStore,
    candidates: &[usize],
) -> Result<Vec<usize>> {
    if definitions.len() != targets.len() {
        return Err(Error::Ranking {
            index: definitions.len().min(targets.len()),
            msg: format!("{} definitions but {} targets", definitions.len(), targets.len()),
        });
    }
    let position: HashMap<usize, usize> = candidates.iter().enumerate().map(|(p, &r)| (r, p)).collect();
    let positions = targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            position.get(t).copied().ok_or_else(|| Error::Ranking {
                index: i,
                msg: format!("target row {t} is not among the candidates"),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let norm = |v: &[f64]| (dot(v, v) + COSINE_EPS).sqrt();
    let cand_norms: Vec<f64> = candidates.iter().map(|&r| norm(head.output.row(r))).collect();

    Ok(definitions
        .par_iter()
        .zip(positions.par_iter())
        .map(|(s, &target_pos)| {
            let q = head.project(store, s);
            let nq = norm(&q);
            let score = |p: usize| cosine(&q, nq, head.output.row(candidates[p]), cand_norms[p]);
            let target_score = score(target_pos);
            1 + (0..candidates.len())
                .filter(|&p| {
                    let sc = score(p);
                    sc > target_score || (sc == target_score && p < target_pos)
                })
                .count()
        })
        .collect())
}

pub fn rank_evaluate(
    definitions: &[Vec<f64>],
    targets: &[usize],
    head: &RevDictHead,
    store: &ParameterStore,
    candidates: &[usize],
) -> Result<RankingResult> {
    let ranks = rank_targets(definitions, targets, head, store, candidates)?;
    Ok(RankingResult::from_ranks(&ranks))
}
