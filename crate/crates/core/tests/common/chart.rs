//! Chart fixtures and a plain-arithmetic reference for the chart encoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chartlstm::autodiff::{ParamId, ParameterStore, Shape, Tape, Tensor};
use chartlstm::encoders::{BinaryTree, Chart, ChartEncoder};

use super::uniform;

pub struct Setup {
    pub store: ParameterStore,
    pub enc: ChartEncoder,
    pub words: ParamId,
    pub n: usize,
}

pub fn setup(n: usize, din: usize, dout: usize, scale: f64, seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParameterStore::new();
    let enc = ChartEncoder::register(&mut store, din, dout, &mut rng).unwrap();
    for id in store.ids().collect::<Vec<_>>() {
        let len = store.tensor(id).len();
        store.tensor_mut(id).value = uniform(&mut rng, len, scale);
    }
    let words = store
        .insert("words", Tensor::new(Shape::matrix(n, din), uniform(&mut rng, n * din, 1.0)), false)
        .unwrap();
    Setup { store, enc, words, n }
}

pub fn run(s: &Setup, t: f64) -> (Vec<f64>, Chart) {
    let mut tape = Tape::new();
    let words: Vec<_> = (0..s.n).map(|i| tape.param_row(&s.store, s.words, i).unwrap()).collect();
    let (h, chart) = s.enc.encode(&mut tape, &s.store, &words, t).unwrap();
    (tape.value(h).to_vec(), chart)
}

pub fn fixed(s: &Setup, tree: &BinaryTree) -> Vec<f64> {
    let mut tape = Tape::new();
    let words: Vec<_> = (0..s.n).map(|i| tape.param_row(&s.store, s.words, i).unwrap()).collect();
    let st = s.enc.cell.encode_tree(&mut tape, &s.store, &words, tree).unwrap();
    tape.value(st.h).to_vec()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Plain-arithmetic reference: every span is recomputed from scratch by
/// recursion, with no chart and no tape.
pub mod naive {
    use super::*;

    pub struct Params {
        w: Vec<Vec<f64>>,
        u: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        b: Vec<f64>,
        energy: Vec<f64>,
        words: Vec<Vec<f64>>,
        d: usize,
    }

    fn rows(store: &ParameterStore, name: &str, cols: usize) -> Vec<Vec<f64>> {
        store.get(name).unwrap().value.chunks(cols).map(<[f64]>::to_vec).collect()
    }

    impl Params {
        pub fn read(s: &Setup) -> Params {
            let d = s.enc.cell.dim;
            let din = s.store.get("words").unwrap().len() / s.n;
            Params {
                w: rows(&s.store, "tree.W", din),
                u: rows(&s.store, "tree.U", d),
                v: rows(&s.store, "tree.V", d),
                b: s.store.get("tree.b").unwrap().value.clone(),
                energy: s.store.get("tree.energy").unwrap().value.clone(),
                words: rows(&s.store, "words", din),
                d,
            }
        }
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn mat(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        m.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    /// Gates from the stacked pre-activation in the order i, f_L, f_R, u, o.
    fn cell(p: &Params, pre: &[f64], cl: &[f64], cr: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = p.d;
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        for k in 0..d {
            let i = sig(pre[k]);
            let fl = sig(pre[d + k] + 1.0);
            let fr = sig(pre[2 * d + k] + 1.0);
            let u = pre[3 * d + k].tanh();
            let o = sig(pre[4 * d + k]);
            c[k] = cl[k] * fl + cr[k] * fr + u * i;
            h[k] = o * c[k].tanh();
        }
        (h, c)
    }

    fn leaf(p: &Params, i: usize) -> (Vec<f64>, Vec<f64>) {
        let pre: Vec<f64> = mat(&p.w, &p.words[i]).iter().zip(&p.b).map(|(a, b)| a + b).collect();
        let zero = vec![0.0; p.d];
        cell(p, &pre, &zero, &zero)
    }

    fn branch(p: &Params, l: &(Vec<f64>, Vec<f64>), r: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
        let ul = mat(&p.u, &l.0);
        let vr = mat(&p.v, &r.0);
        let pre: Vec<f64> = (0..5 * p.d).map(|k| ul[k] + vr[k] + p.b[k]).collect();
        cell(p, &pre, &l.1, &r.1)
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>() + 1e-12;
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>() + 1e-12;
        dot / (na.sqrt() * nb.sqrt())
    }

    /// State of the span `[i, j)`.
    pub fn span(p: &Params, i: usize, j: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        if j - i == 1 {
            return leaf(p, i);
        }
        let cands: Vec<_> = (i + 1..j).map(|k| branch(p, &span(p, i, k, t), &span(p, k, j, t))).collect();
        let e: Vec<f64> = cands.iter().map(|(h, _)| cosine(&p.energy, h) / t).collect();
        let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = e.iter().map(|x| (x - m).exp()).sum();
        let mut h = vec![0.0; p.d];
        let mut c = vec![0.0; p.d];
        for (ek, (hk, ck)) in e.iter().zip(&cands) {
            let s = (ek - m).exp() / z;
            for q in 0..p.d {
                h[q] += s * hk[q];
                c[q] += s * ck[q];
            }
        }
        (h, c)
    }
}

/// Smallest gap between the best and second best energy over all cells.
pub fn min_energy_gap(chart: &Chart) -> f64 {
    chart
        .cells()
        .filter(|c| c.candidates.len() > 1)
        .map(|c| {
            let mut e: Vec<f64> = c.candidates.iter().map(|k| k.energy).collect();
            e.sort_by(|a, b| b.total_cmp(a));
            e[0] - e[1]
        })
        .fold(f64::INFINITY, f64::min)
}
