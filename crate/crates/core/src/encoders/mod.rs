//! Sentence encoders: bag-of-words, LSTM, Tree-LSTM over fixed or supplied
//! trees, and the latent-tree chart encoder.

mod cells;
mod chart;
mod schedule;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use cells::{Bow, Lstm, State, TreeLstm, FORGET_BIAS, INIT_SCALE};
pub use chart::{extract_tree, Candidate, Chart, ChartCell, ChartEncoder};
pub use schedule::{temperature_schedule, TemperatureSchedule};
pub use tree::BinaryTree;

use crate::autodiff::{NodeId, ParameterStore, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    Bow,
    Lstm,
    TreeLeft,
    TreeRight,
    TreeSupervised,
    TreeUnsupervised,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 6] = [
        EncoderKind::Bow,
        EncoderKind::Lstm,
        EncoderKind::TreeLeft,
        EncoderKind::TreeRight,
        EncoderKind::TreeSupervised,
        EncoderKind::TreeUnsupervised,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Bow => "bow",
            EncoderKind::Lstm => "lstm",
            EncoderKind::TreeLeft => "tree-left",
            EncoderKind::TreeRight => "tree-right",
            EncoderKind::TreeSupervised => "tree-supervised",
            EncoderKind::TreeUnsupervised => "tree-unsupervised",
        }
    }

    pub fn needs_tree(self) -> bool {
        self == EncoderKind::TreeSupervised
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EncoderKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown encoder `{s}`")))
    }
}

#[derive(Clone, Debug)]
pub enum Encoder {
    Bow(Bow),
    Lstm(Lstm),
    Left(TreeLstm),
    Right(TreeLstm),
    Supervised(TreeLstm),
    Chart(ChartEncoder),
}

/// Result of encoding one sentence.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub h: NodeId,
    /// Populated only by the chart encoder.
    pub chart: Option<Chart>,
}

impl Encoder {
    /// Creates freshly initialized parameters for `kind` in `store`.
    pub fn register<R: Rng>(
        kind: EncoderKind,
        store: &mut ParameterStore,
        din: usize,
        dout: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(match kind {
            EncoderKind::Bow => Encoder::Bow(Bow::register(store, din, dout, rng)?),
            EncoderKind::Lstm => Encoder::Lstm(Lstm::register(store, din, dout, rng)?),
            EncoderKind::TreeLeft => Encoder::Left(TreeLstm::register(store, din, dout, rng)?),
            EncoderKind::TreeRight => Encoder::Right(TreeLstm::register(store, din, dout, rng)?),
            EncoderKind::TreeSupervised => Encoder::Supervised(TreeLstm::register(store, din, dout, rng)?),
            EncoderKind::TreeUnsupervised => Encoder::Chart(ChartEncoder::register(store, din, dout, rng)?),
        })
    }

    /// Binds to parameters already present in `store`.
    pub fn from_store(kind: EncoderKind, store: &ParameterStore, din: usize, dout: usize) -> Result<Self> {
        Ok(match kind {
            EncoderKind::Bow => Encoder::Bow(Bow::from_store(store, din, dout)?),
            EncoderKind::Lstm => Encoder::Lstm(Lstm::from_store(store, din, dout)?),
            EncoderKind::TreeLeft => Encoder::Left(TreeLstm::from_store(store, din, dout)?),
            EncoderKind::TreeRight => Encoder::Right(TreeLstm::from_store(store, din, dout)?),
            EncoderKind::TreeSupervised => Encoder::Supervised(TreeLstm::from_store(store, din, dout)?),
            EncoderKind::TreeUnsupervised => Encoder::Chart(ChartEncoder::from_store(store, din, dout)?),
        })
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Bow(_) => EncoderKind::Bow,
            Encoder::Lstm(_) => EncoderKind::Lstm,
            Encoder::Left(_) => EncoderKind::TreeLeft,
            Encoder::Right(_) => EncoderKind::TreeRight,
            Encoder::Supervised(_) => EncoderKind::TreeSupervised,
            Encoder::Chart(_) => EncoderKind::TreeUnsupervised,
        }
    }

    /// Encodes a sentence given its word nodes. `tree` is required by the
    /// supervised encoder and ignored otherwise; `t` is used only by the
    /// chart encoder.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        words: &[NodeId],
        tree: Option<&BinaryTree>,
        t: f64,
    ) -> Result<Encoded> {
        if words.is_empty() {
            return Err(Error::EmptySentence);
        }
        let plain = |h| Encoded { h, chart: None };
        match self {
            Encoder::Bow(e) => e.encode(tape, store, words).map(plain),
            Encoder::Lstm(e) => e.encode(tape, store, words).map(plain),
            Encoder::Left(cell) => {
                let tree = BinaryTree::left_branching(words.len())?;
                Ok(plain(cell.encode_tree(tape, store, words, &tree)?.h))
            }
            Encoder::Right(cell) => {
                let tree = BinaryTree::right_branching(words.len())?;
                Ok(plain(cell.encode_tree(tape, store, words, &tree)?.h))
            }
            Encoder::Supervised(cell) => {
                let tree = tree.ok_or_else(|| Error::Config("supervised encoder needs a parse tree".into()))?;
                Ok(plain(cell.encode_tree(tape, store, words, tree)?.h))
            }
            Encoder::Chart(e) => {
                let (h, chart) = e.encode(tape, store, words, t)?;
                Ok(Encoded { h, chart: Some(chart) })
            }
        }
    }

    /// The tree this encoder composes along, where it has one.
    pub fn tree_for(&self, n: usize, chart: Option<&Chart>) -> Option<BinaryTree> {
        match self {
            Encoder::Left(_) => BinaryTree::left_branching(n).ok(),
            Encoder::Right(_) => BinaryTree::right_branching(n).ok(),
            Encoder::Chart(_) => chart.map(extract_tree),
            _ => None,
        }
    }
}
