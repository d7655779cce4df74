//! Reverse-dictionary ranking fixtures and a sort-based reference.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chartlstm::autodiff::ParameterStore;
use chartlstm::embeddings::EmbeddingTable;
use chartlstm::heads::RevDictHead;

use super::uniform;

pub struct Fixture {
    pub store: ParameterStore,
    pub head: RevDictHead,
    pub defs: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
    pub candidates: Vec<usize>,
}

pub fn fixture(n_defs: usize, n_words: usize, n_cands: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dim, out) = (6, 8);
    let table = Arc::new(EmbeddingTable::new(out, uniform(&mut rng, n_words * out, 1.0), false));
    let mut store = ParameterStore::new();
    let head = RevDictHead::register(&mut store, dim, table, &mut rng).unwrap();
    let w = store.tensor(head.proj).len();
    store.tensor_mut(head.proj).value = uniform(&mut rng, w, 1.0);
    let mut all: Vec<usize> = (0..n_words).collect();
    all.shuffle(&mut rng);
    let mut candidates = all[..n_cands].to_vec();
    candidates.sort_unstable();
    let defs = (0..n_defs).map(|_| uniform(&mut rng, dim, 1.0)).collect();
    let targets = (0..n_defs).map(|_| candidates[rng.gen_range(0..n_cands)]).collect();
    Fixture { store, head, defs, targets, candidates }
}

/// Scores every candidate, sorts by descending score with earlier candidates
/// first among equals, and reads off the target's position.
pub fn oracle_ranks(f: &Fixture) -> Vec<usize> {
    let w = &f.store.tensor(f.head.proj).value;
    let dim = f.head.dim;
    let table = &f.head.output;
    f.defs
        .iter()
        .zip(&f.targets)
        .map(|(s, &target)| {
            let q: Vec<f64> = w.chunks(dim).map(|r| r.iter().zip(s).map(|(a, b)| a * b).sum()).collect();
            let cos = |d: &[f64]| {
                let dot: f64 = q.iter().zip(d).map(|(a, b)| a * b).sum();
                let nq = (q.iter().map(|x| x * x).sum::<f64>() + 1e-12).sqrt();
                let nd = (d.iter().map(|x| x * x).sum::<f64>() + 1e-12).sqrt();
                dot / (nq * nd)
            };
            let mut scored: Vec<(usize, f64)> =
                f.candidates.iter().enumerate().map(|(p, &r)| (p, cos(table.row(r)))).collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            1 + scored.iter().position(|&(p, _)| f.candidates[p] == target).unwrap()
        })
        .collect()
}

pub fn oracle_summary(ranks: &[usize]) -> (f64, f64, f64) {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    let n = r.len();
    let median = if n % 2 == 1 { r[n / 2] as f64 } else { (r[n / 2 - 1] + r[n / 2]) as f64 / 2.0 };
    let top = |k| r.iter().filter(|&&x| x <= k).count() as f64 / n as f64;
    (median, top(10), top(100))
}
