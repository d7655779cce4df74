//! Finite-difference checks over every op kind, every encoder and both heads.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{directional_check, grad_check, NodeId, OpKind, ParamId, ParameterStore, Shape, Tape, Tensor, DEFAULT_EPS};
use crate::embeddings::{EmbeddingTable, Vocabulary};
use crate::encoders::{BinaryTree, Encoder, EncoderKind};
use crate::error::Result;
use crate::heads::{EntailmentHead, Label, RevDictHead};
use crate::model::{DefinitionItem, Dataset, Model, OutputSpace, PairItem, Task};

/// Acceptance threshold on the maximum relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub worst: Option<(String, usize)>,
    pub worst_values: (f64, f64),
    pub entries: usize,
    pub trials: usize,
}

impl ComponentCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }

    fn merge(&mut self, report: crate::autodiff::GradCheckReport) {
        if report.max_rel_err >= self.max_rel_err {
            self.max_rel_err = report.max_rel_err;
            self.worst = report.worst;
            self.worst_values = report.worst_values;
        }
        self.entries += report.entries_checked;
        self.trials += 1;
    }

    fn new(name: impl Into<String>) -> Self {
        ComponentCheck {
            name: name.into(),
            max_rel_err: 0.0,
            worst: None,
            worst_values: (0.0, 0.0),
            entries: 0,
            trials: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    /// Sentence length for encoder checks.
    pub n: usize,
    /// Used for both word and hidden dimensions.
    pub dim: usize,
    /// Random trials per op kind.
    pub op_trials: usize,
    pub seed: u64,
    pub encoders: Vec<EncoderKind>,
    pub ops: bool,
    pub heads: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            n: 4,
            dim: 6,
            op_trials: 20,
            seed: 0,
            encoders: EncoderKind::ALL.to_vec(),
            ops: true,
            heads: true,
        }
    }
}

fn uniform(rng: &mut impl Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Values bounded away from zero, for inputs to kinked ops.
fn away_from_zero(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// Uniformly random split points, giving an arbitrary binary tree over `n`
/// leaves.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> BinaryTree {
    fn build(rng: &mut impl Rng, start: usize, len: usize) -> BinaryTree {
        if len == 1 {
            return BinaryTree::Leaf(start);
        }
        let k = rng.gen_range(1..len);
        BinaryTree::branch(build(rng, start, k), build(rng, start + k, len - k))
    }
    build(rng, 0, n.max(1))
}

pub const OP_KINDS: [&str; 20] = [
    "affine",
    "matvec",
    "add",
    "sub",
    "elementwise-multiply",
    "sigmoid",
    "tanh",
    "relu",
    "concat",
    "sum-of-vectors",
    "sum-elements",
    "scalar-scale",
    "shift",
    "slice",
    "softmax",
    "cosine-similarity",
    "squared-difference",
    "weighted-sum",
    "log-loss-pick",
    "dot",
];

/// One random instance of op `name`: the store of inputs and a loss that
/// contracts the op output with a fixed random vector.
fn op_instance(name: &str, rng: &mut ChaCha8Rng) -> Result<(ParameterStore, OpKind, Vec<ParamId>)> {
    let mut store = ParameterStore::new();
    // Cosine of 1-vectors is the constant sign(ab), whose true gradient is
    // of order 1e-12 and below finite-difference resolution.
    let min_len = if name == "cosine-similarity" { 2 } else { 1 };
    let len = rng.gen_range(min_len..=5);
    let vector = |store: &mut ParameterStore, tag: &str, v: Vec<f64>| {
        let n = v.len();
        store.insert(tag, Tensor::new(Shape::vector(n), v), true)
    };
    let (kind, ids) = match name {
        "affine" | "matvec" => {
            let (r, c) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
            let w = store.insert("W", Tensor::new(Shape::matrix(r, c), uniform(rng, r * c, 1.0)), true)?;
            let x = vector(&mut store, "x", uniform(rng, c, 1.0))?;
            if name == "affine" {
                let b = vector(&mut store, "b", uniform(rng, r, 1.0))?;
                (OpKind::Affine, vec![w, x, b])
            } else {
                (OpKind::Affine, vec![w, x])
            }
        }
        "add" | "sub" | "elementwise-multiply" | "squared-difference" | "cosine-similarity" | "dot" => {
            let a = vector(&mut store, "a", uniform(rng, len, 1.0))?;
            let b = vector(&mut store, "b", uniform(rng, len, 1.0))?;
            let kind = match name {
                "add" => OpKind::Add,
                "sub" => OpKind::Sub,
                "elementwise-multiply" => OpKind::Mul,
                "squared-difference" => OpKind::SquaredDiff,
                "cosine-similarity" => OpKind::Cosine,
                _ => OpKind::Dot,
            };
            (kind, vec![a, b])
        }
        "sigmoid" | "tanh" | "softmax" | "sum-elements" => {
            let x = vector(&mut store, "x", uniform(rng, len, 2.0))?;
            let kind = match name {
                "sigmoid" => OpKind::Sigmoid,
                "tanh" => OpKind::Tanh,
                "softmax" => OpKind::Softmax,
                _ => OpKind::SumElements,
            };
            (kind, vec![x])
        }
        "relu" => (OpKind::Relu, vec![vector(&mut store, "x", away_from_zero(rng, len))?]),
        "scalar-scale" => (OpKind::Scale(rng.gen_range(-3.0..3.0)), vec![vector(&mut store, "x", uniform(rng, len, 1.0))?]),
        "shift" => (OpKind::Shift(rng.gen_range(-3.0..3.0)), vec![vector(&mut store, "x", uniform(rng, len, 1.0))?]),
        "slice" => {
            let start = rng.gen_range(0..len);
            let take = rng.gen_range(1..=len - start);
            (
                OpKind::Slice { start, len: take },
                vec![vector(&mut store, "x", uniform(rng, len, 1.0))?],
            )
        }
        "log-loss-pick" => {
            let target = rng.gen_range(0..len);
            (OpKind::LogLossPick(target), vec![vector(&mut store, "x", uniform(rng, len, 2.0))?])
        }
        "concat" | "sum-of-vectors" | "weighted-sum" => {
            let k = rng.gen_range(1..=4);
            let mut ids = Vec::new();
            if name == "weighted-sum" {
                ids.push(vector(&mut store, "s", uniform(rng, k, 1.0))?);
            }
            for i in 0..k {
                let l = if name == "concat" { rng.gen_range(1..=3) } else { len };
                ids.push(vector(&mut store, &format!("x{i}"), uniform(rng, l, 1.0))?);
            }
            let kind = match name {
                "concat" => OpKind::Concat,
                "sum-of-vectors" => OpKind::SumVectors,
                _ => OpKind::WeightedSum,
            };
            (kind, ids)
        }
        other => {
            return Err(crate::Error::Config(format!("no gradient check for op `{other}`")));
        }
    };
    Ok((store, kind, ids))
}

/// `trials` random instances of one op kind.
pub fn check_op(name: &str, trials: usize, seed: u64) -> Result<ComponentCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = ComponentCheck::new(format!("op:{name}"));
    for _ in 0..trials {
        let (store, kind, ids) = op_instance(name, &mut rng)?;
        // Size the contraction vector from one forward pass.
        let mut probe = Tape::new();
        let inputs: Vec<NodeId> = ids.iter().map(|&id| probe.param(&store, id)).collect();
        let out = probe.apply(kind.clone(), &inputs)?;
        let shape = probe.shape(out).clone();
        let r = uniform(&mut rng, shape.numel(), 1.0);
        let report = grad_check(
            |tape, s| {
                let inputs: Vec<NodeId> = ids.iter().map(|&id| tape.param(s, id)).collect();
                let out = tape.apply(kind.clone(), &inputs)?;
                if shape.is_scalar() {
                    return tape.scale(out, r[0]);
                }
                let r = tape.constant(Tensor::new(shape.clone(), r.clone()));
                tape.dot(out, r)
            },
            &store,
            DEFAULT_EPS,
        )?;
        check.merge(report);
    }
    Ok(check)
}

/// Embedding-row lookup, the only leaf kind with its own backward path.
pub fn check_row_lookup(trials: usize, seed: u64) -> Result<ComponentCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = ComponentCheck::new("op:row-lookup");
    for _ in 0..trials {
        let (rows, cols) = (rng.gen_range(1..=5), rng.gen_range(1..=4));
        let mut store = ParameterStore::new();
        let e = store.insert("E", Tensor::new(Shape::matrix(rows, cols), uniform(&mut rng, rows * cols, 1.0)), true)?;
        let picks: Vec<usize> = (0..3).map(|_| rng.gen_range(0..rows)).collect();
        let r = uniform(&mut rng, cols, 1.0);
        let report = grad_check(
            |tape, s| {
                let xs = picks.iter().map(|&i| tape.param_row(s, e, i)).collect::<Result<Vec<_>>>()?;
                let h = tape.sum_vectors(&xs)?;
                let h = tape.tanh(h)?;
                let r = tape.constant_vector(r.clone());
                tape.dot(h, r)
            },
            &store,
            DEFAULT_EPS,
        )?;
        check.merge(report);
    }
    Ok(check)
}

/// Encoder output contracted with a random vector; word vectors are
/// trainable rows so their gradients are checked too.
pub fn check_encoder(kind: EncoderKind, n: usize, dim: usize, t: f64, seed: u64) -> Result<ComponentCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let emb = store.insert("embeddings", Tensor::new(Shape::matrix(n, dim), uniform(&mut rng, n * dim, 1.0)), true)?;
    let encoder = Encoder::register(kind, &mut store, dim, dim, &mut rng)?;
    // Larger than the training init so every gate is exercised.
    for id in store.ids().collect::<Vec<_>>() {
        let len = store.tensor(id).len();
        store.tensor_mut(id).value = uniform(&mut rng, len, 0.5);
    }
    let tree = random_tree(&mut rng, n);
    let r = uniform(&mut rng, dim, 1.0);
    let report = grad_check(
        |tape, s| {
            let words = (0..n).map(|i| tape.param_row(s, emb, i)).collect::<Result<Vec<_>>>()?;
            let h = encoder.encode(tape, s, &words, Some(&tree), t)?.h;
            let r = tape.constant_vector(r.clone());
            tape.dot(h, r)
        },
        &store,
        DEFAULT_EPS,
    )?;
    let mut check = ComponentCheck::new(format!("encoder:{kind}"));
    check.merge(report);
    Ok(check)
}

pub fn check_entailment_head(dim: usize, seed: u64) -> Result<ComponentCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let s1 = store.insert("s1", Tensor::vector(uniform(&mut rng, dim, 1.0)), true)?;
    let s2 = store.insert("s2", Tensor::vector(uniform(&mut rng, dim, 1.0)), true)?;
    let head = EntailmentHead::register(&mut store, dim, &mut rng)?;
    for id in store.ids().collect::<Vec<_>>() {
        let len = store.tensor(id).len();
        store.tensor_mut(id).value = uniform(&mut rng, len, 0.5);
    }
    let gold = Label::from_index(rng.gen_range(0..3)).expect("three labels");
    let report = grad_check(
        |tape, s| {
            let (a, b) = (tape.param(s, s1), tape.param(s, s2));
            let z = head.logits(tape, s, a, b)?;
            head.loss(tape, z, gold)
        },
        &store,
        DEFAULT_EPS,
    )?;
    let mut check = ComponentCheck::new("head:entailment");
    check.merge(report);
    Ok(check)
}

pub fn check_revdict_head(dim: usize, seed: u64) -> Result<ComponentCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_dim = dim + 2;
    let table = Arc::new(EmbeddingTable::new(out_dim, uniform(&mut rng, 3 * out_dim, 1.0), false));
    let mut store = ParameterStore::new();
    let s = store.insert("s", Tensor::vector(uniform(&mut rng, dim, 1.0)), true)?;
    let head = RevDictHead::register(&mut store, dim, table, &mut rng)?;
    let report = grad_check(
        |tape, st| {
            let x = tape.param(st, s);
            head.loss(tape, st, x, 1)
        },
        &store,
        DEFAULT_EPS,
    )?;
    let mut check = ComponentCheck::new("head:revdict");
    check.merge(report);
    Ok(check)
}

/// A full model loss, embeddings through head, on one random example, probed
/// along `directions` random directions in parameter space.
pub fn check_model(
    task: Task,
    kind: EncoderKind,
    n: usize,
    dim: usize,
    t: f64,
    directions: usize,
    seed: u64,
) -> Result<ComponentCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vocabulary = (0..n + 1).map(|i| format!("w{i}")).collect::<Vec<_>>().into();
    let output = match task {
        Task::Revdict => Some(OutputSpace {
            vocab: vocab.clone(),
            table: Arc::new(EmbeddingTable::new(dim + 1, uniform(&mut rng, (n + 1) * (dim + 1), 1.0), false)),
        }),
        Task::Entailment => None,
    };
    let mut model = Model::new(task, kind, vocab, None, dim, dim, output, &mut rng)?;
    for id in model.store.ids().collect::<Vec<_>>() {
        let len = model.store.tensor(id).len();
        model.store.tensor_mut(id).value = uniform(&mut rng, len, 0.5);
    }
    let sentence = |rng: &mut ChaCha8Rng| (0..n).map(|_| rng.gen_range(0..=n)).collect::<Vec<_>>();
    let data = match task {
        Task::Entailment => Dataset::Entailment(vec![PairItem {
            premise: sentence(&mut rng),
            hypothesis: sentence(&mut rng),
            label: Label::from_index(rng.gen_range(0..3)).expect("three labels"),
            premise_tree: Some(random_tree(&mut rng, n)),
            hypothesis_tree: Some(random_tree(&mut rng, n)),
        }]),
        Task::Revdict => Dataset::RevDict(vec![DefinitionItem {
            tokens: sentence(&mut rng),
            target: rng.gen_range(0..=n),
            tree: Some(random_tree(&mut rng, n)),
        }]),
    };
    let total: usize = model.store.iter().map(|(_, e)| e.tensor.len()).sum();
    let dirs: Vec<Vec<f64>> = (0..directions).map(|_| uniform(&mut rng, total, 1.0)).collect();
    let report = directional_check(
        |tape, s| {
            // Rebind so the perturbed store is the one read.
            let m = Model { store: s.clone(), ..model.clone() };
            m.example_loss(tape, &data, 0, t)
        },
        &model.store,
        &dirs,
        DEFAULT_EPS,
    )?;
    let mut check = ComponentCheck::new(format!("model:{task}:{kind}"));
    check.merge(report);
    Ok(check)
}

pub fn gradient_suite(opts: &SuiteOptions) -> Result<Vec<ComponentCheck>> {
    let mut out = Vec::new();
    let seed = opts.seed;
    if opts.ops {
        for (i, name) in OP_KINDS.iter().enumerate() {
            out.push(check_op(name, opts.op_trials, seed.wrapping_add(i as u64))?);
        }
        out.push(check_row_lookup(opts.op_trials, seed.wrapping_add(100))?);
    }
    for (i, &kind) in opts.encoders.iter().enumerate() {
        let s = seed.wrapping_add(200 + i as u64);
        out.push(check_encoder(kind, opts.n, opts.dim, 1.0, s)?);
        if kind == EncoderKind::TreeUnsupervised {
            // Sharper weights stress the softmax path.
            let mut c = check_encoder(kind, opts.n, opts.dim, 0.25, s + 1000)?;
            c.name.push_str("@t=0.25");
            out.push(c);
        }
    }
    if opts.heads {
        out.push(check_entailment_head(opts.dim, seed.wrapping_add(300))?);
        out.push(check_revdict_head(opts.dim, seed.wrapping_add(301))?);
        for (i, &kind) in opts.encoders.iter().enumerate() {
            let (n, dim) = (opts.n, opts.dim);
            out.push(check_model(Task::Entailment, kind, n, dim, 0.8, 5, seed.wrapping_add(400 + i as u64))?);
            out.push(check_model(Task::Revdict, kind, n, dim, 0.8, 5, seed.wrapping_add(500 + i as u64))?);
        }
    }
    Ok(out)
}
