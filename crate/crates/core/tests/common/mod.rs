#![allow(dead_code)]

pub mod chart;
pub mod ranking;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chartlstm::data::EntailmentExample;
use chartlstm::heads::Label;
use chartlstm::model::{build_vocabulary, index_pairs, Dataset, Model, Task};
use chartlstm::encoders::EncoderKind;
use chartlstm::embeddings::{EmbeddingTable, Vocabulary};

pub fn uniform(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Sentence pairs whose label is fixed by how many hypothesis words occur in
/// the premise: all three (entailment), one (neutral) or none (contradiction).
pub fn overlap_pairs(count: usize, seed: u64) -> Vec<EntailmentExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<String> = (0..24).map(|i| format!("w{i}")).collect();
    (0..count)
        .map(|i| {
            let mut pool = words.clone();
            pool.shuffle(&mut rng);
            let premise: Vec<String> = pool[..5].to_vec();
            let outside = &pool[5..];
            let label = Label::from_index(i % 3).unwrap();
            let mut hypothesis: Vec<String> = match label {
                Label::Entailment => premise.choose_multiple(&mut rng, 3).cloned().collect(),
                Label::Neutral => {
                    let mut h: Vec<String> = premise.choose_multiple(&mut rng, 1).cloned().collect();
                    h.extend(outside.choose_multiple(&mut rng, 2).cloned());
                    h
                }
                Label::Contradiction => outside.choose_multiple(&mut rng, 3).cloned().collect(),
            };
            hypothesis.shuffle(&mut rng);
            EntailmentExample {
                premise,
                hypothesis,
                label,
                premise_tree: None,
                hypothesis_tree: None,
            }
        })
        .collect()
}

pub fn overlap_dataset(count: usize, seed: u64) -> (Vocabulary, Dataset) {
    let pairs = overlap_pairs(count, seed);
    let vocab = build_vocabulary(pairs.iter().flat_map(|p| [p.premise.as_slice(), p.hypothesis.as_slice()]));
    let data = index_pairs(&vocab, &pairs).unwrap();
    (vocab, data)
}

pub fn fresh_model(kind: EncoderKind, vocab: &Vocabulary, din: usize, dout: usize, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Model::new(Task::Entailment, kind, vocab.clone(), None, din, dout, None, &mut rng).unwrap()
}

/// Stand-in for pretrained vectors: trainable rows drawn from U(-scale, scale).
pub fn pretrained_model(kind: EncoderKind, vocab: &Vocabulary, din: usize, dout: usize, scale: f64, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let table = EmbeddingTable::new(din, uniform(&mut rng, vocab.len() * din, scale), true);
    Model::new(Task::Entailment, kind, vocab.clone(), Some(table), din, dout, None, &mut rng).unwrap()
}
