//! Vocabularies, pretrained vector files and PCA reduction.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved entry that every unseen word maps to.
pub const UNK: &str = "<unk>";

/// Bijection between words and `0..len`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(words: Vec<String>) -> Self {
        let mut v = Vocabulary::new();
        for w in words {
            v.insert(&w);
        }
        v
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vocabulary whose index 0 is [`UNK`].
    pub fn with_unknown() -> Self {
        let mut v = Self::new();
        v.insert(UNK);
        v
    }

    /// Returns the index of `word`, adding it if absent.
    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&i) = self.index.get(word) {
            return i;
        }
        let i = self.words.len();
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), i);
        i
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index of `word`, falling back to [`UNK`] when present.
    pub fn lookup(&self, word: &str) -> Option<usize> {
        self.get(word).or_else(|| self.get(UNK))
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Dense `rows x dim` matrix of word vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub data: Vec<f64>,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn new(dim: usize, data: Vec<f64>, trainable: bool) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "ragged embedding table");
        EmbeddingTable { dim, data, trainable }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column_mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        for r in self.data.chunks_exact(self.dim) {
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        let n = self.rows().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Rows of `source` reindexed to `vocab`. Words missing from
    /// `source_vocab` get the mean of all source rows.
    pub fn remap(&self, source_vocab: &Vocabulary, vocab: &Vocabulary) -> EmbeddingTable {
        let mean = self.column_mean();
        let mut data = Vec::with_capacity(vocab.len() * self.dim);
        for w in vocab.words() {
            match source_vocab.get(w) {
                Some(i) => data.extend_from_slice(self.row(i)),
                None => data.extend_from_slice(&mean),
            }
        }
        EmbeddingTable::new(self.dim, data, self.trainable)
    }
}

/// Reads a whitespace-separated vector file. When `dim` is `None` it is taken
/// from the first line. Repeated words keep their first vector.
pub fn read_vectors(path: impl AsRef<Path>, dim: Option<usize>) -> Result<(Vocabulary, EmbeddingTable)> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vocab = Vocabulary::new();
    let mut data = Vec::new();
    let mut dim = dim;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_ascii_whitespace();
        let word = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::data(&shown, lineno, format!("bad number `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(Error::data(
                &shown,
                lineno,
                format!("expected {d} values, found {}", values.len()),
            ));
        }
        if vocab.get(word).is_none() {
            vocab.insert(word);
            data.extend(values);
        }
    }
    match dim {
        Some(d) if !vocab.is_empty() => Ok((vocab, EmbeddingTable::new(d, data, false))),
        _ => Err(Error::EmptyVectorFile(shown)),
    }
}

/// Table over `vocab` initialized from a pretrained vector file of
/// dimension `dim`. Words absent from the file get the mean file vector.
pub fn load_pretrained(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize) -> Result<EmbeddingTable> {
    let (file_vocab, table) = read_vectors(path, Some(dim))?;
    let mut out = table.remap(&file_vocab, vocab);
    out.trainable = true;
    Ok(out)
}

/// Principal axes of a row set, sorted by descending variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Population variance along each axis, descending.
    pub eigenvalues: Vec<f64>,
    /// Row `i` is the unit eigenvector for `eigenvalues[i]`, with its first
    /// nonzero entry positive.
    pub components: Vec<Vec<f64>>,
}

impl Pca {
    pub fn fit(table: &EmbeddingTable) -> Pca {
        let d = table.dim;
        let n = table.rows() as f64;
        let mean = table.column_mean();
        let mut cov = vec![0.0; d * d];
        let mut centered = vec![0.0; d];
        for r in table.data.chunks_exact(d) {
            centered.iter_mut().zip(r.iter().zip(&mean)).for_each(|(c, (x, m))| *c = x - m);
            for i in 0..d {
                let ci = centered[i];
                for j in i..d {
                    cov[i * d + j] += ci * centered[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] /= n;
                cov[j * d + i] = cov[i * d + j];
            }
        }
        let (values, vectors) = symmetric_eigen(cov, d);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let components = order
            .iter()
            .map(|&k| {
                let mut v: Vec<f64> = (0..d).map(|i| vectors[i * d + k]).collect();
                let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if let Some(first) = v.iter().find(|x| x.abs() > 1e-10 * scale) {
                    if *first < 0.0 {
                        v.iter_mut().for_each(|x| *x = -*x);
                    }
                }
                v
            })
            .collect();
        Pca {
            mean,
            eigenvalues: order.iter().map(|&k| values[k]).collect(),
            components,
        }
    }

    /// Coordinates of each mean-centered row on the first `k` axes.
    pub fn transform(&self, table: &EmbeddingTable, k: usize) -> Result<EmbeddingTable> {
        let d = table.dim;
        if k > d || k == 0 {
            return Err(Error::PcaDimension { k, d });
        }
        let mut data = Vec::with_capacity(table.rows() * k);
        let mut centered = vec![0.0; d];
        for r in table.data.chunks_exact(d) {
            centered.iter_mut().zip(r.iter().zip(&self.mean)).for_each(|(c, (x, m))| *c = x - m);
            for comp in &self.components[..k] {
                data.push(crate::autodiff::dot(&centered, comp));
            }
        }
        Ok(EmbeddingTable::new(k, data, table.trainable))
    }
}

/// Projects rows onto the top `k` principal components of the centered rows.
pub fn pca_reduce(table: &EmbeddingTable, k: usize) -> Result<EmbeddingTable> {
    if k > table.dim || k == 0 {
        return Err(Error::PcaDimension { k, d: table.dim });
    }
    Pca::fit(table).transform(table, k)
}

/// Cyclic Jacobi eigendecomposition of a symmetric row-major `n x n` matrix.
/// Returns eigenvalues and a row-major matrix whose columns are eigenvectors.
fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn vector_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn oov_rows_get_the_mean() {
        let f = vector_file("a 1 0\nb 0 1\n");
        let mut vocab = Vocabulary::new();
        for w in ["a", "b", "c"] {
            vocab.insert(w);
        }
        let t = load_pretrained(f.path(), &vocab, 2).unwrap();
        assert_eq!(t.row(0), &[1.0, 0.0]);
        assert_eq!(t.row(1), &[0.0, 1.0]);
        assert_eq!(t.row(2), &[0.5, 0.5]);
        assert!(t.trainable);
    }

    #[test]
    fn all_present_is_identity_and_loading_is_idempotent() {
        let f = vector_file("x 0.25 -1.5 3\ny 1e-3 2 -0.125\n");
        let vocab: Vocabulary = vec!["x".to_string(), "y".to_string()].into();
        let t1 = load_pretrained(f.path(), &vocab, 3).unwrap();
        let t2 = load_pretrained(f.path(), &vocab, 3).unwrap();
        assert_eq!(t1.data, vec![0.25, -1.5, 3.0, 1e-3, 2.0, -0.125]);
        assert_eq!(t1, t2);
    }

    #[test]
    fn dimension_mismatch_reports_line() {
        let f = vector_file("a 1 0\nb 0 1 2\n");
        let err = load_pretrained(f.path(), &Vocabulary::new(), 2).unwrap_err();
        match err {
            Error::Data { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
        let f = vector_file("a 1 0 0\n");
        assert!(matches!(
            load_pretrained(f.path(), &Vocabulary::new(), 2),
            Err(Error::Data { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_rejected() {
        let f = vector_file("");
        assert!(matches!(read_vectors(f.path(), Some(2)), Err(Error::EmptyVectorFile(_))));
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_vectors("/nonexistent/vectors.txt", None).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/vectors.txt"));
    }

    #[test]
    fn embedding_parameter_count_for_snli_setup() {
        // One 100-d row per vocabulary word.
        let t = EmbeddingTable::new(100, vec![0.0; 37_369 * 100], true);
        assert_eq!(t.rows() * t.dim, 3_736_900);
    }

    #[test]
    fn vocabulary_unknown_fallback() {
        let mut v = Vocabulary::with_unknown();
        let a = v.insert("a");
        assert_eq!(v.insert("a"), a);
        assert_eq!(v.lookup("a"), Some(a));
        assert_eq!(v.lookup("zzz"), Some(0));
        assert_eq!(Vocabulary::new().lookup("zzz"), None);
        assert_eq!(v.get("A"), None);
    }

    #[test]
    fn pca_full_rank_preserves_distances() {
        let data: Vec<f64> = (0..30).map(|i| ((i * 7919) % 31) as f64 / 7.0 - 2.0).collect();
        let t = EmbeddingTable::new(3, data, false);
        let r = pca_reduce(&t, 3).unwrap();
        for i in 0..t.rows() {
            for j in 0..t.rows() {
                let d0: f64 = t.row(i).iter().zip(t.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                let d1: f64 = r.row(i).iter().zip(r.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                assert!((d0.sqrt() - d1.sqrt()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pca_on_a_line_preserves_order() {
        let data: Vec<f64> = [3.0, -1.0, 0.5, 7.0, -4.0].iter().flat_map(|s| [1.0 + 2.0 * s, -0.5 + s]).collect();
        let t = EmbeddingTable::new(2, data, false);
        let r = pca_reduce(&t, 1).unwrap();
        let coords: Vec<f64> = (0..5).map(|i| r.row(i)[0]).collect();
        let params = [3.0, -1.0, 0.5, 7.0, -4.0];
        let sign = (coords[0] - coords[1]).signum();
        for i in 0..5 {
            for j in 0..5 {
                if params[i] > params[j] {
                    assert!(sign * (coords[i] - coords[j]) > 0.0);
                }
            }
        }
    }

    #[test]
    fn pca_rejects_oversized_target() {
        let t = EmbeddingTable::new(2, vec![1.0, 2.0, 3.0, 4.0], false);
        assert!(matches!(pca_reduce(&t, 3), Err(Error::PcaDimension { k: 3, d: 2 })));
    }

    #[test]
    fn jacobi_diagonalizes_small_matrix() {
        let a = vec![4.0, 1.0, 2.0, 1.0, 3.0, 0.5, 2.0, 0.5, 5.0];
        let (vals, vecs) = symmetric_eigen(a.clone(), 3);
        for k in 0..3 {
            let v: Vec<f64> = (0..3).map(|i| vecs[i * 3 + k]).collect();
            for i in 0..3 {
                let av: f64 = (0..3).map(|j| a[i * 3 + j] * v[j]).sum();
                assert!((av - vals[k] * v[i]).abs() < 1e-12);
            }
        }
    }
}
