use rand::Rng;

use super::BinaryTree;
use crate::autodiff::{NodeId, ParamId, ParameterStore, Shape, Tape};
use crate::error::{Error, Result};

/// Uniform initialization range for every freshly created weight.
pub const INIT_SCALE: f64 = 0.1;

/// Constant added to forget-gate pre-activations before the sigmoid.
pub const FORGET_BIAS: f64 = 1.0;

/// Hidden and memory state of one (Tree-)LSTM node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct State {
    pub h: NodeId,
    pub c: NodeId,
}

fn lookup(store: &ParameterStore, name: &str, shape: Shape) -> Result<ParamId> {
    let id = store.id(name)?;
    let actual = &store.tensor(id).shape;
    if *actual != shape {
        return Err(Error::Shape {
            op: "parameter lookup",
            left: shape,
            right: actual.clone(),
        });
    }
    Ok(id)
}

/// `h = Σ tanh(W w_i + b)`.
#[derive(Clone, Debug)]
pub struct Bow {
    pub w: ParamId,
    pub b: ParamId,
    pub dim: usize,
}

impl Bow {
    pub fn register<R: Rng>(store: &mut ParameterStore, din: usize, dout: usize, rng: &mut R) -> Result<Self> {
        Ok(Bow {
            w: store.insert_uniform("bow.W", Shape::matrix(dout, din), INIT_SCALE, rng)?,
            b: store.insert_uniform("bow.b", Shape::vector(dout), INIT_SCALE, rng)?,
            dim: dout,
        })
    }

    pub fn from_store(store: &ParameterStore, din: usize, dout: usize) -> Result<Self> {
        Ok(Bow {
            w: lookup(store, "bow.W", Shape::matrix(dout, din))?,
            b: lookup(store, "bow.b", Shape::vector(dout))?,
            dim: dout,
        })
    }

    pub fn encode(&self, tape: &mut Tape, store: &ParameterStore, words: &[NodeId]) -> Result<NodeId> {
        if words.is_empty() {
            return Err(Error::EmptySentence);
        }
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let terms = words
            .iter()
            .map(|x| {
                let a = tape.affine(w, *x, b)?;
                tape.tanh(a)
            })
            .collect::<Result<Vec<_>>>()?;
        tape.sum_vectors(&terms)
    }
}

/// Sequential LSTM with gate blocks ordered `i, f, u, o`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub dim: usize,
}

impl Lstm {
    pub fn register<R: Rng>(store: &mut ParameterStore, din: usize, dout: usize, rng: &mut R) -> Result<Self> {
        Ok(Lstm {
            w: store.insert_uniform("lstm.W", Shape::matrix(4 * dout, din), INIT_SCALE, rng)?,
            u: store.insert_uniform("lstm.U", Shape::matrix(4 * dout, dout), INIT_SCALE, rng)?,
            b: store.insert_uniform("lstm.b", Shape::vector(4 * dout), INIT_SCALE, rng)?,
            dim: dout,
        })
    }

    pub fn from_store(store: &ParameterStore, din: usize, dout: usize) -> Result<Self> {
        Ok(Lstm {
            w: lookup(store, "lstm.W", Shape::matrix(4 * dout, din))?,
            u: lookup(store, "lstm.U", Shape::matrix(4 * dout, dout))?,
            b: lookup(store, "lstm.b", Shape::vector(4 * dout))?,
            dim: dout,
        })
    }

    pub fn step(&self, tape: &mut Tape, store: &ParameterStore, x: NodeId, prev: State) -> Result<State> {
        let d = self.dim;
        let w = tape.param(store, self.w);
        let u = tape.param(store, self.u);
        let b = tape.param(store, self.b);
        let input = tape.affine(w, x, b)?;
        let recurrent = tape.matvec(u, prev.h)?;
        let pre = tape.add(input, recurrent)?;

        let i = tape.slice(pre, 0, d)?;
        let f = tape.slice(pre, d, d)?;
        let cand = tape.slice(pre, 2 * d, d)?;
        let o = tape.slice(pre, 3 * d, d)?;

        let f = tape.shift(f, FORGET_BIAS)?;
        let f = tape.sigmoid(f)?;
        let i = tape.sigmoid(i)?;
        let cand = tape.tanh(cand)?;
        let o = tape.sigmoid(o)?;

        let keep = tape.mul(prev.c, f)?;
        let write = tape.mul(cand, i)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok(State { h, c })
    }

    /// Final hidden state after reading `words` from a zero state.
    pub fn encode(&self, tape: &mut Tape, store: &ParameterStore, words: &[NodeId]) -> Result<NodeId> {
        if words.is_empty() {
            return Err(Error::EmptySentence);
        }
        let zero = tape.constant_vector(vec![0.0; self.dim]);
        let mut state = State { h: zero, c: zero };
        for x in words {
            state = self.step(tape, store, *x, state)?;
        }
        Ok(state.h)
    }
}

/// Binary Tree-LSTM cell. The five row blocks of every weight are the gates
/// `i, f_L, f_R, u, o` in that order.
#[derive(Clone, Debug)]
pub struct TreeLstm {
    pub w: ParamId,
    pub u: ParamId,
    pub v: ParamId,
    pub b: ParamId,
    pub dim: usize,
}

struct Gates {
    i: NodeId,
    f_left: NodeId,
    f_right: NodeId,
    cand: NodeId,
    o: NodeId,
}

impl TreeLstm {
    pub fn register<R: Rng>(store: &mut ParameterStore, din: usize, dout: usize, rng: &mut R) -> Result<Self> {
        Ok(TreeLstm {
            w: store.insert_uniform("tree.W", Shape::matrix(5 * dout, din), INIT_SCALE, rng)?,
            u: store.insert_uniform("tree.U", Shape::matrix(5 * dout, dout), INIT_SCALE, rng)?,
            v: store.insert_uniform("tree.V", Shape::matrix(5 * dout, dout), INIT_SCALE, rng)?,
            b: store.insert_uniform("tree.b", Shape::vector(5 * dout), INIT_SCALE, rng)?,
            dim: dout,
        })
    }

    pub fn from_store(store: &ParameterStore, din: usize, dout: usize) -> Result<Self> {
        Ok(TreeLstm {
            w: lookup(store, "tree.W", Shape::matrix(5 * dout, din))?,
            u: lookup(store, "tree.U", Shape::matrix(5 * dout, dout))?,
            v: lookup(store, "tree.V", Shape::matrix(5 * dout, dout))?,
            b: lookup(store, "tree.b", Shape::vector(5 * dout))?,
            dim: dout,
        })
    }

    fn gates(&self, tape: &mut Tape, pre: NodeId) -> Result<Gates> {
        let d = self.dim;
        let i = tape.slice(pre, 0, d)?;
        let f_left = tape.slice(pre, d, d)?;
        let f_right = tape.slice(pre, 2 * d, d)?;
        let cand = tape.slice(pre, 3 * d, d)?;
        let o = tape.slice(pre, 4 * d, d)?;

        let f_left = tape.shift(f_left, FORGET_BIAS)?;
        let f_right = tape.shift(f_right, FORGET_BIAS)?;
        Ok(Gates {
            i: tape.sigmoid(i)?,
            f_left: tape.sigmoid(f_left)?,
            f_right: tape.sigmoid(f_right)?,
            cand: tape.tanh(cand)?,
            o: tape.sigmoid(o)?,
        })
    }

    fn output(tape: &mut Tape, o: NodeId, c: NodeId) -> Result<State> {
        let tc = tape.tanh(c)?;
        let h = tape.mul(o, tc)?;
        Ok(State { h, c })
    }

    /// Node state for a word with no children. The child terms vanish, so only
    /// `W w + b` feeds the gates and `c = tanh(u) ⊙ σ(i)`.
    pub fn leaf(&self, tape: &mut Tape, store: &ParameterStore, word: NodeId) -> Result<State> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let pre = tape.affine(w, word, b)?;
        let g = self.gates(tape, pre)?;
        let c = tape.mul(g.cand, g.i)?;
        Self::output(tape, g.o, c)
    }

    /// Node state combining two children, with no word input.
    pub fn branch(&self, tape: &mut Tape, store: &ParameterStore, left: State, right: State) -> Result<State> {
        let u = tape.param(store, self.u);
        let v = tape.param(store, self.v);
        let b = tape.param(store, self.b);
        let from_left = tape.affine(u, left.h, b)?;
        let from_right = tape.matvec(v, right.h)?;
        let pre = tape.add(from_left, from_right)?;
        let g = self.gates(tape, pre)?;
        let keep_left = tape.mul(left.c, g.f_left)?;
        let keep_right = tape.mul(right.c, g.f_right)?;
        let write = tape.mul(g.cand, g.i)?;
        let c = tape.sum_vectors(&[keep_left, keep_right, write])?;
        Self::output(tape, g.o, c)
    }

    /// Composes `words` bottom-up along `tree`; returns the root state.
    pub fn encode_tree(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        words: &[NodeId],
        tree: &BinaryTree,
    ) -> Result<State> {
        if words.is_empty() {
            return Err(Error::EmptySentence);
        }
        tree.validate(words.len())?;
        self.compose(tape, store, words, tree)
    }

    fn compose(&self, tape: &mut Tape, store: &ParameterStore, words: &[NodeId], tree: &BinaryTree) -> Result<State> {
        match tree {
            BinaryTree::Leaf(i) => self.leaf(tape, store, words[*i]),
            BinaryTree::Branch(l, r) => {
                let left = self.compose(tape, store, words, l)?;
                let right = self.compose(tape, store, words, r)?;
                self.branch(tape, store, left, right)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{sigmoid, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn words(tape: &mut Tape, rows: &[Vec<f64>]) -> Vec<NodeId> {
        rows.iter().map(|r| tape.constant_vector(r.clone())).collect()
    }

    fn zero_store(store: &mut ParameterStore) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.tensor_mut(id).value.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn bow_single_word_and_zero_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParameterStore::new();
        let bow = Bow::register(&mut store, 2, 3, &mut rng).unwrap();
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[vec![0.4, -0.2]]);
        let h = bow.encode(&mut tape, &store, &ws).unwrap();
        let wm = &store.tensor(bow.w).value;
        let bv = &store.tensor(bow.b).value;
        for r in 0..3 {
            let expect = (wm[2 * r] * 0.4 + wm[2 * r + 1] * -0.2 + bv[r]).tanh();
            assert!((tape.value(h)[r] - expect).abs() < 1e-15);
        }

        zero_store(&mut store);
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[vec![1.0, 2.0], vec![3.0, -1.0]]);
        let h = bow.encode(&mut tape, &store, &ws).unwrap();
        assert_eq!(tape.value(h), &[0.0; 3]);
    }

    #[test]
    fn bow_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::new();
        let bow = Bow::register(&mut store, 3, 4, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 * 0.3, -0.1, 0.7 - i as f64]).collect();
        let mut tape = Tape::new();
        let ws = words(&mut tape, &rows);
        let h1 = bow.encode(&mut tape, &store, &ws).unwrap();
        let rev: Vec<NodeId> = ws.iter().rev().copied().collect();
        let h2 = bow.encode(&mut tape, &store, &rev).unwrap();
        for (a, b) in tape.value(h1).iter().zip(tape.value(h2)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_sentences_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParameterStore::new();
        let bow = Bow::register(&mut store, 2, 2, &mut rng).unwrap();
        let lstm = Lstm::register(&mut store, 2, 2, &mut rng).unwrap();
        let tree = TreeLstm::register(&mut store, 2, 2, &mut rng).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(bow.encode(&mut tape, &store, &[]), Err(Error::EmptySentence)));
        assert!(matches!(lstm.encode(&mut tape, &store, &[]), Err(Error::EmptySentence)));
        let t = BinaryTree::Leaf(0);
        assert!(matches!(tree.encode_tree(&mut tape, &store, &[], &t), Err(Error::EmptySentence)));
    }

    #[test]
    fn lstm_zero_parameters_give_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParameterStore::new();
        let lstm = Lstm::register(&mut store, 3, 3, &mut rng).unwrap();
        zero_store(&mut store);
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 2.0]]);
        let h = lstm.encode(&mut tape, &store, &ws).unwrap();
        assert_eq!(tape.value(h), &[0.0; 3]);
    }

    #[test]
    fn lstm_single_token_matches_hand_unrolled_cell() {
        let mut store = ParameterStore::new();
        // d = D = 2; gate blocks i, f, u, o of two rows each.
        let w = vec![0.1, -0.2, 0.3, 0.05, -0.4, 0.2, 0.15, 0.1, 0.25, -0.3, 0.05, 0.2, -0.1, 0.4, 0.3, -0.05];
        let b = vec![0.01, -0.02, 0.03, 0.0, -0.05, 0.04, 0.02, -0.01];
        store.insert("lstm.W", Tensor::new(Shape::matrix(8, 2), w.clone()), true).unwrap();
        store.insert("lstm.U", Tensor::zeros(Shape::matrix(8, 2)), true).unwrap();
        store.insert("lstm.b", Tensor::vector(b.clone()), true).unwrap();
        let lstm = Lstm::from_store(&store, 2, 2).unwrap();
        let x = [0.7, -1.1];
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[x.to_vec()]);
        let h = lstm.encode(&mut tape, &store, &ws).unwrap();

        let pre: Vec<f64> = (0..8).map(|r| w[2 * r] * x[0] + w[2 * r + 1] * x[1] + b[r]).collect();
        for k in 0..2 {
            let i = sigmoid(pre[k]);
            let _f = sigmoid(pre[2 + k] + 1.0);
            let u = pre[4 + k].tanh();
            let o = sigmoid(pre[6 + k]);
            let c = 0.0 * _f + u * i;
            let expect = o * c.tanh();
            assert!((tape.value(h)[k] - expect).abs() < 1e-15);
        }
    }

    fn hand_tree_node(w: &[f64], u: &[f64], v: &[f64], b: &[f64], x: [f64; 2], hl: [f64; 2], cl: [f64; 2], hr: [f64; 2], cr: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let pre: Vec<f64> = (0..10)
            .map(|r| {
                w[2 * r] * x[0] + w[2 * r + 1] * x[1] + u[2 * r] * hl[0] + u[2 * r + 1] * hl[1] + v[2 * r] * hr[0] + v[2 * r + 1] * hr[1] + b[r]
            })
            .collect();
        let mut h = [0.0; 2];
        let mut c = [0.0; 2];
        for k in 0..2 {
            c[k] = cl[k] * sigmoid(pre[2 + k] + 1.0) + cr[k] * sigmoid(pre[4 + k] + 1.0) + pre[6 + k].tanh() * sigmoid(pre[k]);
            h[k] = sigmoid(pre[8 + k]) * c[k].tanh();
        }
        (h, c)
    }

    fn random_tree_store(seed: u64) -> (ParameterStore, TreeLstm) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let cell = TreeLstm::register(&mut store, 2, 2, &mut rng).unwrap();
        for id in [cell.w, cell.u, cell.v, cell.b] {
            store.tensor_mut(id).value.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        (store, cell)
    }

    #[test]
    fn tree_leaf_and_branch_match_hand_evaluation() {
        let (store, cell) = random_tree_store(5);
        let (w, u, v, b) = (
            store.tensor(cell.w).value.clone(),
            store.tensor(cell.u).value.clone(),
            store.tensor(cell.v).value.clone(),
            store.tensor(cell.b).value.clone(),
        );
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[vec![0.3, -0.8], vec![1.2, 0.4]]);
        let a = cell.leaf(&mut tape, &store, ws[0]).unwrap();
        let z = [0.0; 2];
        let (ha, ca) = hand_tree_node(&w, &u, &v, &b, [0.3, -0.8], z, z, z, z);
        let bl = cell.leaf(&mut tape, &store, ws[1]).unwrap();
        let (hb, cb) = hand_tree_node(&w, &u, &v, &b, [1.2, 0.4], z, z, z, z);
        let top = cell.branch(&mut tape, &store, a, bl).unwrap();
        let (ht, ct) = hand_tree_node(&w, &u, &v, &b, z, ha, ca, hb, cb);
        for k in 0..2 {
            assert!((tape.value(a.h)[k] - ha[k]).abs() < 1e-14);
            assert!((tape.value(a.c)[k] - ca[k]).abs() < 1e-14);
            assert!((tape.value(top.h)[k] - ht[k]).abs() < 1e-14);
            assert!((tape.value(top.c)[k] - ct[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn tree_zero_parameters() {
        let (mut store, cell) = random_tree_store(6);
        zero_store(&mut store);
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[vec![0.3, -0.8]]);
        let s = cell.leaf(&mut tape, &store, ws[0]).unwrap();
        assert_eq!(tape.value(s.h), &[0.0, 0.0]);
        assert_eq!(tape.value(s.c), &[0.0, 0.0]);
        let z = tape.constant_vector(vec![0.0; 2]);
        let zs = State { h: z, c: z };
        let t = cell.branch(&mut tape, &store, zs, zs).unwrap();
        assert_eq!(tape.value(t.h), &[0.0, 0.0]);
        assert_eq!(tape.value(t.c), &[0.0, 0.0]);
    }

    #[test]
    fn leaf_depends_only_on_word() {
        let (store, cell) = random_tree_store(7);
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[vec![0.5, 0.5], vec![-1.0, 2.0], vec![0.5, 0.5]]);
        let a = cell.leaf(&mut tape, &store, ws[0]).unwrap();
        let b = cell.leaf(&mut tape, &store, ws[2]).unwrap();
        assert_eq!(tape.value(a.h), tape.value(b.h));
        assert_eq!(tape.value(a.c), tape.value(b.c));
    }

    #[test]
    fn branch_is_asymmetric_when_u_differs_from_v() {
        let (store, cell) = random_tree_store(8);
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[vec![0.9, -0.3], vec![-0.6, 0.7]]);
        let a = cell.leaf(&mut tape, &store, ws[0]).unwrap();
        let b = cell.leaf(&mut tape, &store, ws[1]).unwrap();
        let ab = cell.branch(&mut tape, &store, a, b).unwrap();
        let ba = cell.branch(&mut tape, &store, b, a).unwrap();
        let diff: f64 = tape.value(ab.h).iter().zip(tape.value(ba.h)).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-6, "diff {diff}");
    }

    #[test]
    fn child_memory_enters_linearly() {
        // Hold the gate inputs (h-states) fixed and double the c-states: the
        // retained part of c doubles while the written part is unchanged.
        let (store, cell) = random_tree_store(9);
        let mut tape = Tape::new();
        let hl = tape.constant_vector(vec![0.2, -0.4]);
        let hr = tape.constant_vector(vec![0.5, 0.1]);
        let c1 = tape.constant_vector(vec![0.3, 0.6]);
        let c2 = tape.constant_vector(vec![-0.2, 0.9]);
        let c1x2 = tape.constant_vector(vec![0.6, 1.2]);
        let c2x2 = tape.constant_vector(vec![-0.4, 1.8]);
        let zero = tape.constant_vector(vec![0.0; 2]);

        let base = cell.branch(&mut tape, &store, State { h: hl, c: c1 }, State { h: hr, c: c2 }).unwrap();
        let doubled = cell.branch(&mut tape, &store, State { h: hl, c: c1x2 }, State { h: hr, c: c2x2 }).unwrap();
        let write_only = cell.branch(&mut tape, &store, State { h: hl, c: zero }, State { h: hr, c: zero }).unwrap();
        for k in 0..2 {
            let w = tape.value(write_only.c)[k];
            let kept = tape.value(base.c)[k] - w;
            let kept2 = tape.value(doubled.c)[k] - w;
            assert!((kept2 - 2.0 * kept).abs() < 1e-14);
        }
    }

    #[test]
    fn fixed_trees_for_small_n() {
        let (store, cell) = random_tree_store(10);
        let mut tape = Tape::new();
        let one = words(&mut tape, &[vec![0.1, 0.2]]);
        let leaf = cell.leaf(&mut tape, &store, one[0]).unwrap();
        let root = cell.encode_tree(&mut tape, &store, &one, &BinaryTree::Leaf(0)).unwrap();
        assert_eq!(tape.value(leaf.h), tape.value(root.h));

        let two = words(&mut tape, &[vec![0.1, 0.2], vec![-0.3, 0.8]]);
        let l = cell.encode_tree(&mut tape, &store, &two, &BinaryTree::left_branching(2).unwrap()).unwrap();
        let r = cell.encode_tree(&mut tape, &store, &two, &BinaryTree::right_branching(2).unwrap()).unwrap();
        assert_eq!(tape.value(l.h), tape.value(r.h));

        let four = words(&mut tape, &[vec![0.1, 0.2], vec![-0.3, 0.8], vec![0.9, -0.5], vec![0.4, 0.4]]);
        let l = cell.encode_tree(&mut tape, &store, &four, &BinaryTree::left_branching(4).unwrap()).unwrap();
        let r = cell.encode_tree(&mut tape, &store, &four, &BinaryTree::right_branching(4).unwrap()).unwrap();
        let diff: f64 = tape.value(l.h).iter().zip(tape.value(r.h)).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff > 1e-6);
    }

    #[test]
    fn tree_token_mismatch_rejected() {
        let (store, cell) = random_tree_store(11);
        let mut tape = Tape::new();
        let ws = words(&mut tape, &[vec![0.1, 0.2], vec![0.3, 0.4]]);
        let t = BinaryTree::left_branching(3).unwrap();
        assert!(matches!(
            cell.encode_tree(&mut tape, &store, &ws, &t),
            Err(Error::TreeMismatch { leaves: 3, tokens: 2 })
        ));
    }
}
