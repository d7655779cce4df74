//! Soft CYK chart over Tree-LSTM states.
//!
//! Row `k` of the chart holds one cell per span of `k` words. A cell of
//! length `k >= 2` builds one candidate per split point by running the
//! Tree-LSTM branch over its two sub-span cells, scores each candidate by the
//! cosine between a learned energy vector and the candidate `h`, and mixes the
//! candidates with a temperature softmax over those energies. Everything stays
//! on the tape, so gradients reach the energy vector as well as the cell
//! weights. The sentence vector is the `h` of the single top cell.

use rand::Rng;

use super::cells::{State, TreeLstm, INIT_SCALE};
use super::BinaryTree;
use crate::autodiff::{NodeId, ParamId, ParameterStore, Shape, Tape};
use crate::error::{Error, Result};

/// One way of building a span: `split` words go to the left child.
/// Candidates of a cell are listed from the longest left child down, so the
/// first candidate of a three-word span is `( ( a b ) c )`.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub split: usize,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub energy: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartCell {
    pub start: usize,
    pub len: usize,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    /// Empty for single-word cells.
    pub candidates: Vec<Candidate>,
    /// Tape nodes for this cell's state; only meaningful on the tape that
    /// produced the chart.
    pub state: State,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    /// `rows[k - 1][start]` is the cell for the span of length `k`.
    rows: Vec<Vec<ChartCell>>,
    branch_evaluations: usize,
}

impl Chart {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn cell(&self, start: usize, len: usize) -> &ChartCell {
        &self.rows[len - 1][start]
    }

    pub fn rows(&self) -> &[Vec<ChartCell>] {
        &self.rows
    }

    pub fn cells(&self) -> impl Iterator<Item = &ChartCell> {
        self.rows.iter().flatten()
    }

    pub fn num_cells(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// How many Tree-LSTM branch evaluations filled this chart.
    pub fn branch_evaluations(&self) -> usize {
        self.branch_evaluations
    }

    pub fn top(&self) -> &ChartCell {
        self.cell(0, self.n())
    }
}

/// Tree-LSTM cell plus the shared energy vector used to score candidates.
#[derive(Clone, Debug)]
pub struct ChartEncoder {
    pub cell: TreeLstm,
    pub energy: ParamId,
}

impl ChartEncoder {
    pub fn register<R: Rng>(store: &mut ParameterStore, din: usize, dout: usize, rng: &mut R) -> Result<Self> {
        let cell = TreeLstm::register(store, din, dout, rng)?;
        let energy = store.insert_uniform("tree.energy", Shape::vector(dout), INIT_SCALE, rng)?;
        Ok(ChartEncoder { cell, energy })
    }

    pub fn from_store(store: &ParameterStore, din: usize, dout: usize) -> Result<Self> {
        let cell = TreeLstm::from_store(store, din, dout)?;
        let energy = store.id("tree.energy")?;
        if store.tensor(energy).shape != Shape::vector(dout) {
            return Err(Error::Shape {
                op: "parameter lookup",
                left: Shape::vector(dout),
                right: store.tensor(energy).shape.clone(),
            });
        }
        Ok(ChartEncoder { cell, energy })
    }

    /// Fills the chart bottom-up at temperature `t` and returns the top
    /// cell's `h` node together with the populated chart.
    pub fn encode(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        words: &[NodeId],
        t: f64,
    ) -> Result<(NodeId, Chart)> {
        let n = words.len();
        if n == 0 {
            return Err(Error::EmptySentence);
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Temperature(t));
        }
        let energy_vec = tape.param(store, self.energy);
        let mut rows: Vec<Vec<ChartCell>> = Vec::with_capacity(n);
        let mut branch_evaluations = 0;

        let leaves = words
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let state = self.cell.leaf(tape, store, *w)?;
                Ok(ChartCell {
                    start: i,
                    len: 1,
                    h: tape.value(state.h).to_vec(),
                    c: tape.value(state.c).to_vec(),
                    candidates: Vec::new(),
                    state,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(leaves);

        for len in 2..=n {
            let mut row = Vec::with_capacity(n - len + 1);
            for start in 0..=n - len {
                let mut states = Vec::with_capacity(len - 1);
                let mut energies = Vec::with_capacity(len - 1);
                let splits: Vec<usize> = (1..len).rev().collect();
                for &split in &splits {
                    let left = rows[split - 1][start].state;
                    let right = rows[len - split - 1][start + split].state;
                    let s = self.cell.branch(tape, store, left, right)?;
                    branch_evaluations += 1;
                    energies.push(tape.cosine(energy_vec, s.h)?);
                    states.push(s);
                }
                let e = tape.concat(&energies)?;
                let scaled = tape.scale(e, 1.0 / t)?;
                let weights = tape.softmax(scaled)?;
                let hs: Vec<NodeId> = states.iter().map(|s| s.h).collect();
                let cs: Vec<NodeId> = states.iter().map(|s| s.c).collect();
                let h = tape.weighted_sum(weights, &hs)?;
                let c = tape.weighted_sum(weights, &cs)?;

                let candidates = states
                    .iter()
                    .enumerate()
                    .map(|(j, s)| Candidate {
                        split: splits[j],
                        h: tape.value(s.h).to_vec(),
                        c: tape.value(s.c).to_vec(),
                        energy: tape.scalar(energies[j]),
                        weight: tape.value(weights)[j],
                    })
                    .collect();
                row.push(ChartCell {
                    start,
                    len,
                    h: tape.value(h).to_vec(),
                    c: tape.value(c).to_vec(),
                    candidates,
                    state: State { h, c },
                });
            }
            rows.push(row);
        }

        let chart = Chart {
            rows,
            branch_evaluations,
        };
        Ok((chart.top().state.h, chart))
    }
}

/// Greedy top-down argmax over candidate weights. Ties go to the candidate
/// listed first.
pub fn extract_tree(chart: &Chart) -> BinaryTree {
    fn descend(chart: &Chart, start: usize, len: usize) -> BinaryTree {
        if len == 1 {
            return BinaryTree::Leaf(start);
        }
        let cell = chart.cell(start, len);
        let best = cell
            .candidates
            .iter()
            .fold(None::<&Candidate>, |best, c| match best {
                Some(b) if b.weight >= c.weight => Some(b),
                _ => Some(c),
            })
            .expect("multi-word cell has candidates");
        BinaryTree::branch(
            descend(chart, start, best.split),
            descend(chart, start + best.split, len - best.split),
        )
    }
    descend(chart, 0, chart.n())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64, d: usize, n: usize) -> (ParameterStore, ChartEncoder, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let enc = ChartEncoder::register(&mut store, d, d, &mut rng).unwrap();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.tensor_mut(id).value.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        let words = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        (store, enc, words)
    }

    fn run(store: &ParameterStore, enc: &ChartEncoder, words: &[Vec<f64>], t: f64) -> (Tape, NodeId, Chart) {
        let mut tape = Tape::new();
        let ws: Vec<_> = words.iter().map(|w| tape.constant_vector(w.clone())).collect();
        let (h, chart) = enc.encode(&mut tape, store, &ws, t).unwrap();
        (tape, h, chart)
    }

    #[test]
    fn single_word_is_the_leaf() {
        let (store, enc, words) = setup(1, 3, 1);
        let (mut tape, h, chart) = run(&store, &enc, &words, 1.0);
        let w = tape.constant_vector(words[0].clone());
        let leaf = enc.cell.leaf(&mut tape, &store, w).unwrap();
        assert_eq!(tape.value(h), tape.value(leaf.h));
        assert_eq!(chart.num_cells(), 1);
        assert_eq!(chart.branch_evaluations(), 0);
    }

    #[test]
    fn two_words_single_candidate_has_unit_weight() {
        let (store, enc, words) = setup(2, 3, 2);
        for t in [1.0, 0.3, 1e-4] {
            let (_, _, chart) = run(&store, &enc, &words, t);
            assert_eq!(chart.top().candidates.len(), 1);
            assert_eq!(chart.top().candidates[0].weight, 1.0);
            assert_eq!(chart.top().h, chart.top().candidates[0].h);
        }
    }

    #[test]
    fn four_words_ten_branches() {
        let (store, enc, words) = setup(3, 2, 4);
        let (_, _, chart) = run(&store, &enc, &words, 1.0);
        assert_eq!(chart.branch_evaluations(), 10);
        assert_eq!(chart.num_cells(), 10);
        for (k, row) in chart.rows().iter().enumerate() {
            assert_eq!(row.len(), 4 - k);
            for cell in row {
                assert_eq!(cell.candidates.len(), k);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (store, enc, words) = setup(4, 2, 3);
        let mut tape = Tape::new();
        assert!(matches!(enc.encode(&mut tape, &store, &[], 1.0), Err(Error::EmptySentence)));
        let ws: Vec<_> = words.iter().map(|w| tape.constant_vector(w.clone())).collect();
        for t in [0.0, -1.0, f64::NAN] {
            assert!(matches!(enc.encode(&mut tape, &store, &ws, t), Err(Error::Temperature(_))));
        }
    }

    #[test]
    fn extract_two_words() {
        let (store, enc, words) = setup(5, 2, 2);
        let (_, _, chart) = run(&store, &enc, &words, 1.0);
        assert_eq!(extract_tree(&chart), BinaryTree::left_branching(2).unwrap());
    }

    #[test]
    fn extract_follows_top_weights() {
        let (store, enc, words) = setup(6, 2, 3);
        let (_, _, mut chart) = run(&store, &enc, &words, 1.0);
        let top = chart.rows.last_mut().unwrap().first_mut().unwrap();
        top.candidates[0].weight = 0.9;
        top.candidates[1].weight = 0.1;
        assert_eq!(extract_tree(&chart), BinaryTree::left_branching(3).unwrap());
        let top = chart.rows.last_mut().unwrap().first_mut().unwrap();
        top.candidates[0].weight = 0.1;
        top.candidates[1].weight = 0.9;
        assert_eq!(extract_tree(&chart), BinaryTree::right_branching(3).unwrap());
        let top = chart.rows.last_mut().unwrap().first_mut().unwrap();
        top.candidates[0].weight = 0.5;
        top.candidates[1].weight = 0.5;
        assert_eq!(extract_tree(&chart), BinaryTree::left_branching(3).unwrap());
    }

    #[test]
    fn lower_temperature_sharpens_toward_argmax() {
        let (store, enc, words) = setup(7, 4, 3);
        let mut prev = None;
        for t in [1.0, 0.1, 0.01, 0.001] {
            let (_, _, chart) = run(&store, &enc, &words, t);
            let top = chart.top();
            let (e1, e2) = (top.candidates[0].energy, top.candidates[1].energy);
            assert_ne!(e1, e2);
            let winner = if e1 > e2 { 0 } else { 1 };
            let w = top.candidates[winner].weight;
            if let Some(p) = prev {
                assert!(w > p || w == 1.0, "{w} <= {p}");
            }
            prev = Some(w);
        }
        assert!(prev.unwrap() > 1.0 - 1e-6);
    }
}
