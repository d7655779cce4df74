//! A complete model: vocabulary, embedding table, encoder and task head
//! sharing one [`ParameterStore`].

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, ParamId, ParameterStore, Shape, Tape, Tensor};
use crate::data::{DefinitionExample, EntailmentExample};
use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::encoders::{BinaryTree, Encoded, Encoder, EncoderKind, INIT_SCALE};
use crate::error::{Error, Result};
use crate::heads::{predict, rank_evaluate, EntailmentHead, Label, RankingResult, RevDictHead};

pub const EMBEDDINGS: &str = "embeddings";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Entailment,
    Revdict,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Entailment => "entailment",
            Task::Revdict => "revdict",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entailment" => Ok(Task::Entailment),
            "revdict" => Ok(Task::Revdict),
            _ => Err(Error::Config(format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Head {
    Entailment(EntailmentHead),
    RevDict(RevDictHead),
}

/// Target vectors and their words for the reverse-dictionary task.
#[derive(Clone, Debug)]
pub struct OutputSpace {
    pub vocab: Vocabulary,
    pub table: Arc<EmbeddingTable>,
}

/// A sentence pair with word indices into the model vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct PairItem {
    pub premise: Vec<usize>,
    pub hypothesis: Vec<usize>,
    pub label: Label,
    pub premise_tree: Option<BinaryTree>,
    pub hypothesis_tree: Option<BinaryTree>,
}

/// A definition with word indices and the output-table row of its target.
#[derive(Clone, Debug, PartialEq)]
pub struct DefinitionItem {
    pub tokens: Vec<usize>,
    pub target: usize,
    pub tree: Option<BinaryTree>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Entailment(Vec<PairItem>),
    RevDict(Vec<DefinitionItem>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Entailment(v) => v.len(),
            Dataset::RevDict(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Dataset::Entailment(_) => Task::Entailment,
            Dataset::RevDict(_) => Task::Revdict,
        }
    }

    pub fn has_trees(&self) -> bool {
        match self {
            Dataset::Entailment(v) => v.iter().all(|p| p.premise_tree.is_some() && p.hypothesis_tree.is_some()),
            Dataset::RevDict(v) => v.iter().all(|d| d.tree.is_some()),
        }
    }
}

fn index_tokens(vocab: &Vocabulary, tokens: &[String]) -> Result<Vec<usize>> {
    tokens
        .iter()
        .map(|t| {
            vocab
                .lookup(t)
                .ok_or_else(|| Error::Config(format!("word `{t}` not in vocabulary and no unknown entry")))
        })
        .collect()
}

/// Maps entailment examples onto `vocab`, sending unseen words to the
/// unknown entry.
pub fn index_pairs(vocab: &Vocabulary, examples: &[EntailmentExample]) -> Result<Dataset> {
    Ok(Dataset::Entailment(
        examples
            .iter()
            .map(|e| {
                Ok(PairItem {
                    premise: index_tokens(vocab, &e.premise)?,
                    hypothesis: index_tokens(vocab, &e.hypothesis)?,
                    label: e.label,
                    premise_tree: e.premise_tree.clone(),
                    hypothesis_tree: e.hypothesis_tree.clone(),
                })
            })
            .collect::<Result<_>>()?,
    ))
}

/// Maps definitions onto `vocab`; targets must exist in the output space
/// with a nonzero vector.
pub fn index_definitions(vocab: &Vocabulary, output: &OutputSpace, examples: &[DefinitionExample]) -> Result<Dataset> {
    Ok(Dataset::RevDict(
        examples
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let target = output.vocab.get(&e.word).ok_or_else(|| {
                    Error::Config(format!("definition {}: target `{}` has no output embedding", i + 1, e.word))
                })?;
                let row = output.table.row(target);
                if row.iter().all(|x| *x == 0.0) {
                    return Err(Error::Config(format!(
                        "definition {}: target `{}` has a zero output embedding",
                        i + 1,
                        e.word
                    )));
                }
                Ok(DefinitionItem {
                    tokens: index_tokens(vocab, &e.definition)?,
                    target,
                    tree: e.tree.clone(),
                })
            })
            .collect::<Result<_>>()?,
    ))
}

/// Vocabulary over every token in the given sentences, with an unknown entry
/// at index 0.
pub fn build_vocabulary<'a>(sentences: impl IntoIterator<Item = &'a [String]>) -> Vocabulary {
    let mut v = Vocabulary::with_unknown();
    for s in sentences {
        for w in s {
            v.insert(w);
        }
    }
    v
}

#[derive(Clone, Debug)]
pub struct Model {
    pub task: Task,
    pub din: usize,
    pub dout: usize,
    pub vocab: Vocabulary,
    pub store: ParameterStore,
    pub embeddings: ParamId,
    pub encoder: Encoder,
    pub head: Head,
    pub output: Option<OutputSpace>,
}

impl Model {
    /// Fresh model. When `embeddings` is `None` the table is drawn uniformly
    /// at random and trained; otherwise its `trainable` flag decides.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        task: Task,
        kind: EncoderKind,
        vocab: Vocabulary,
        embeddings: Option<EmbeddingTable>,
        din: usize,
        dout: usize,
        output: Option<OutputSpace>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut store = ParameterStore::new();
        let shape = Shape::matrix(vocab.len(), din);
        let embeddings = match embeddings {
            Some(table) => {
                if table.dim != din || table.rows() != vocab.len() {
                    return Err(Error::Config(format!(
                        "embedding table is {}x{} but vocabulary has {} words of dimension {din}",
                        table.rows(),
                        table.dim,
                        vocab.len()
                    )));
                }
                store.insert(EMBEDDINGS, Tensor::new(shape, table.data), table.trainable)?
            }
            None => store.insert_uniform(EMBEDDINGS, shape, INIT_SCALE, rng)?,
        };
        let encoder = Encoder::register(kind, &mut store, din, dout, rng)?;
        let head = match task {
            Task::Entailment => Head::Entailment(EntailmentHead::register(&mut store, dout, rng)?),
            Task::Revdict => {
                let out = output
                    .as_ref()
                    .ok_or_else(|| Error::Config("reverse dictionary needs output embeddings".into()))?;
                Head::RevDict(RevDictHead::register(&mut store, dout, out.table.clone(), rng)?)
            }
        };
        Ok(Model {
            task,
            din,
            dout,
            vocab,
            store,
            embeddings,
            encoder,
            head,
            output,
        })
    }

    /// Rebinds a model around an existing store.
    pub fn from_store(
        task: Task,
        kind: EncoderKind,
        vocab: Vocabulary,
        store: ParameterStore,
        din: usize,
        dout: usize,
        output: Option<OutputSpace>,
    ) -> Result<Self> {
        let embeddings = store.id(EMBEDDINGS)?;
        if store.tensor(embeddings).shape != Shape::matrix(vocab.len(), din) {
            return Err(Error::Shape {
                op: "parameter lookup",
                left: Shape::matrix(vocab.len(), din),
                right: store.tensor(embeddings).shape.clone(),
            });
        }
        let encoder = Encoder::from_store(kind, &store, din, dout)?;
        let head = match task {
            Task::Entailment => Head::Entailment(EntailmentHead::from_store(&store, dout)?),
            Task::Revdict => {
                let out = output
                    .as_ref()
                    .ok_or_else(|| Error::Config("reverse dictionary needs output embeddings".into()))?;
                Head::RevDict(RevDictHead::from_store(&store, dout, out.table.clone())?)
            }
        };
        Ok(Model {
            task,
            din,
            dout,
            vocab,
            store,
            embeddings,
            encoder,
            head,
            output,
        })
    }

    /// Parameters excluding the word embedding table.
    pub fn intrinsic_parameter_count(&self) -> usize {
        self.store.count_where(|e| e.name != EMBEDDINGS)
    }

    pub fn word_nodes(&self, tape: &mut Tape, ids: &[usize]) -> Result<Vec<NodeId>> {
        let trainable = self.store.entry(self.embeddings).trainable;
        ids.iter()
            .map(|&i| {
                if trainable {
                    tape.param_row(&self.store, self.embeddings, i)
                } else {
                    let t = self.store.tensor(self.embeddings);
                    if i >= self.vocab.len() {
                        return Err(Error::InvalidOp {
                            op: "row-lookup",
                            msg: format!("row {i} out of range for shape {}", t.shape),
                        });
                    }
                    Ok(tape.constant_vector(t.value[i * self.din..(i + 1) * self.din].to_vec()))
                }
            })
            .collect()
    }

    pub fn encode(&self, tape: &mut Tape, ids: &[usize], tree: Option<&BinaryTree>, t: f64) -> Result<Encoded> {
        let words = self.word_nodes(tape, ids)?;
        self.encoder.encode(tape, &self.store, &words, tree, t)
    }

    /// Sentence vector without keeping the tape.
    pub fn sentence_vector(&self, ids: &[usize], tree: Option<&BinaryTree>, t: f64) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let enc = self.encode(&mut tape, ids, tree, t)?;
        Ok(tape.value(enc.h).to_vec())
    }

    pub fn pair_logits(&self, tape: &mut Tape, item: &PairItem, t: f64) -> Result<NodeId> {
        let Head::Entailment(head) = &self.head else {
            return Err(Error::Config("model has no entailment head".into()));
        };
        let s1 = self.encode(tape, &item.premise, item.premise_tree.as_ref(), t)?.h;
        let s2 = self.encode(tape, &item.hypothesis, item.hypothesis_tree.as_ref(), t)?.h;
        head.logits(tape, &self.store, s1, s2)
    }

    pub fn predict_pair(&self, item: &PairItem, t: f64) -> Result<Label> {
        let mut tape = Tape::new();
        let z = self.pair_logits(&mut tape, item, t)?;
        Ok(predict(tape.value(z)))
    }

    /// Scalar training loss for example `index` of `data`.
    pub fn example_loss(&self, tape: &mut Tape, data: &Dataset, index: usize, t: f64) -> Result<NodeId> {
        match (data, &self.head) {
            (Dataset::Entailment(items), Head::Entailment(head)) => {
                let item = &items[index];
                let z = self.pair_logits(tape, item, t)?;
                head.loss(tape, z, item.label)
            }
            (Dataset::RevDict(items), Head::RevDict(head)) => {
                let item = &items[index];
                let s = self.encode(tape, &item.tokens, item.tree.as_ref(), t)?.h;
                head.loss(tape, &self.store, s, item.target)
            }
            _ => Err(Error::Config(format!("{} dataset does not match {} model", data.task(), self.task))),
        }
    }

    pub fn accuracy(&self, items: &[PairItem], t: f64) -> Result<f64> {
        let correct = items
            .par_iter()
            .map(|item| Ok(usize::from(self.predict_pair(item, t)? == item.label)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        Ok(correct as f64 / items.len().max(1) as f64)
    }

    /// Ranks each definition's target among `candidates` (output-table rows;
    /// every row when `None`).
    pub fn rank(&self, items: &[DefinitionItem], candidates: Option<&[usize]>, t: f64) -> Result<RankingResult> {
        let Head::RevDict(head) = &self.head else {
            return Err(Error::Config("model has no reverse-dictionary head".into()));
        };
        let vectors = items
            .par_iter()
            .map(|d| self.sentence_vector(&d.tokens, d.tree.as_ref(), t))
            .collect::<Result<Vec<_>>>()?;
        let targets: Vec<usize> = items.iter().map(|d| d.target).collect();
        let all: Vec<usize>;
        let candidates = match candidates {
            Some(c) => c,
            None => {
                all = (0..head.output.rows()).collect();
                &all
            }
        };
        rank_evaluate(&vectors, &targets, head, &self.store, candidates)
    }
}
