//! Pre-trained word vectors in the `<count> <dim>` text format and the two
//! sentence encodings built on them: a mean vector for the MLP and
//! autoencoder inputs, and a zero-padded token matrix for the CNN.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::nn::Tensor;

/// Dimensionality of the vectors the reference configuration uses.
pub const REFERENCE_DIM: usize = 300;

/// Default sequence length for CNN inputs.
pub const DEFAULT_MAX_LEN: usize = 100;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("line 1: bad header: {0}")]
    BadHeader(String),
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: value {value:?} is not a finite number")]
    NonFiniteValue { line: usize, value: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    declared_count: usize,
    index: HashMap<String, usize>,
    /// Row-major `(entries, dim)` vector storage.
    vectors: Vec<f64>,
    duplicates: usize,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn declared_count(&self) -> usize {
        self.declared_count
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Rows that repeated an earlier token (the later row was kept).
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn has_reference_dim(&self) -> bool {
        self.dim == REFERENCE_DIM
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&row| &self.vectors[row * self.dim..(row + 1) * self.dim])
    }

    pub fn from_entries<I, S>(dim: usize, entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = Self {
            dim,
            declared_count: 0,
            index: HashMap::new(),
            vectors: Vec::new(),
            duplicates: 0,
        };
        for (token, vector) in entries {
            assert_eq!(vector.len(), dim, "vector length must equal dim");
            table.insert(token.into(), &vector);
            table.declared_count += 1;
        }
        table
    }

    fn insert(&mut self, token: String, vector: &[f64]) {
        match self.index.get(&token) {
            Some(&row) => {
                self.vectors[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector);
                self.duplicates += 1;
            }
            None => {
                self.index.insert(token, self.vectors.len() / self.dim);
                self.vectors.extend_from_slice(vector);
            }
        }
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbedError> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(&content)
}

pub fn parse_embeddings(content: &str) -> Result<EmbeddingTable, EmbedError> {
    let mut lines = content.lines();
    let header = lines.next().ok_or_else(|| EmbedError::BadHeader("empty file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (declared_count, dim) = match fields.as_slice() {
        [count, dim] => (
            count
                .parse::<usize>()
                .map_err(|_| EmbedError::BadHeader(format!("count {count:?}")))?,
            dim.parse::<usize>()
                .map_err(|_| EmbedError::BadHeader(format!("dim {dim:?}")))?,
        ),
        _ => return Err(EmbedError::BadHeader(format!("expected `<count> <dim>`, got {header:?}"))),
    };
    if dim == 0 {
        return Err(EmbedError::BadHeader("dim must be positive".into()));
    }

    let mut table = EmbeddingTable {
        dim,
        declared_count,
        index: HashMap::with_capacity(declared_count),
        vectors: Vec::with_capacity(declared_count.saturating_mul(dim)),
        duplicates: 0,
    };
    let mut row = Vec::with_capacity(dim);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ').filter(|p| !p.is_empty());
        let Some(token) = parts.next() else { continue };
        row.clear();
        for part in parts {
            let value: f64 = part.parse().map_err(|_| EmbedError::NonFiniteValue {
                line: line_no,
                value: part.to_string(),
            })?;
            if !value.is_finite() {
                return Err(EmbedError::NonFiniteValue {
                    line: line_no,
                    value: part.to_string(),
                });
            }
            row.push(value);
        }
        if row.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: row.len(),
            });
        }
        table.insert(token.to_string(), &row);
    }

    if table.duplicates > 0 {
        log::warn!("{} duplicate embedding rows; later rows kept", table.duplicates);
    }
    if !table.has_reference_dim() {
        log::info!("embedding dim is {dim}, not the reference {REFERENCE_DIM}");
    }
    Ok(table)
}

/// Mean of in-vocabulary token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector {
    pub values: Vec<f64>,
    /// Fraction of tokens found in the table; 0 for an empty token list.
    pub coverage: f64,
}

/// Token matrix of shape `(max_len, dim)`; rows past `true_len` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMatrix {
    pub data: Tensor,
    pub true_len: usize,
}

impl SentenceMatrix {
    pub fn rows(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.data.shape()[1]
    }
}

/// Out-of-vocabulary tokens are left out of both the sum and the count; with
/// nothing in vocabulary the result is the zero vector.
pub fn encode_mean<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> SentenceVector {
    let mut values = vec![0.0; table.dim()];
    let mut found = 0usize;
    for vector in tokens.iter().filter_map(|t| table.get(t.as_ref())) {
        for (acc, v) in values.iter_mut().zip(vector) {
            *acc += v;
        }
        found += 1;
    }
    if found > 0 {
        let n = found as f64;
        values.iter_mut().for_each(|v| *v /= n);
    }
    let coverage = if tokens.is_empty() {
        0.0
    } else {
        found as f64 / tokens.len() as f64
    };
    SentenceVector { values, coverage }
}

/// Row `i` holds the vector of token `i`; OOV tokens give zero rows, long
/// sequences are cut at the end and short ones zero-padded.
pub fn encode_sequence<S: AsRef<str>>(
    tokens: &[S],
    table: &EmbeddingTable,
    max_len: usize,
) -> SentenceMatrix {
    assert!(max_len >= 1, "max_len must be at least 1");
    let dim = table.dim();
    let mut data = Tensor::zeros(&[max_len, dim]);
    let true_len = tokens.len().min(max_len);
    for (row, token) in tokens.iter().take(max_len).enumerate() {
        if let Some(vector) = table.get(token.as_ref()) {
            data.data_mut()[row * dim..(row + 1) * dim].copy_from_slice(vector);
        }
    }
    SentenceMatrix { data, true_len }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            3,
            [
                ("a", vec![1.0, 1.0, 1.0]),
                ("b", vec![3.0, 3.0, 3.0]),
                ("c", vec![2.0, 0.0, 0.0]),
                ("d", vec![1.0, 2.0, 3.0]),
            ],
        )
    }

    #[test]
    fn parses_text_format() {
        let t = parse_embeddings("2 3\nسلام 0.1 0.2 0.3\nفیلم -1 0 2\n").unwrap();
        assert_eq!((t.dim(), t.len(), t.declared_count()), (3, 2, 2));
        assert_eq!(t.get("فیلم").unwrap(), &[-1.0, 0.0, 2.0]);
        assert!(!t.has_reference_dim());
    }

    #[test]
    fn trailing_space_rows_are_accepted() {
        let t = parse_embeddings("1 2\nx 1 2 \n").unwrap();
        assert_eq!(t.get("x").unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn wrong_arity_reports_line() {
        let err = parse_embeddings("1 3\nفیلم 0.1 0.2\n").unwrap_err();
        assert!(matches!(err, EmbedError::DimensionMismatch { line: 2, expected: 3, found: 2 }));
    }

    #[test]
    fn reference_dimension_header() {
        let row = |t: &str| format!("{t} {}\n", vec!["0.5"; 300].join(" "));
        let t = parse_embeddings(&format!("2 300\n{}{}", row("x"), row("y"))).unwrap();
        assert_eq!(t.dim(), 300);
        assert!(t.has_reference_dim());
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(parse_embeddings(""), Err(EmbedError::BadHeader(_))));
        assert!(matches!(parse_embeddings("3\n"), Err(EmbedError::BadHeader(_))));
        assert!(matches!(parse_embeddings("1 0\n"), Err(EmbedError::BadHeader(_))));
        assert!(matches!(
            parse_embeddings("1 2\nx 1 inf\n"),
            Err(EmbedError::NonFiniteValue { line: 2, .. })
        ));
        assert!(matches!(
            parse_embeddings("1 2\nx 1 NaN\n"),
            Err(EmbedError::NonFiniteValue { line: 2, .. })
        ));
        assert!(matches!(
            parse_embeddings("1 2\nx 1 abc\n"),
            Err(EmbedError::NonFiniteValue { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_rows_last_wins() {
        let t = parse_embeddings("2 1\nx 1\nx 2\n").unwrap();
        assert_eq!(t.get("x").unwrap(), &[2.0]);
        assert_eq!((t.len(), t.duplicates()), (1, 1));
    }

    #[test]
    fn mean_examples() {
        let t = table();
        let v = encode_mean(&["a", "b"], &t);
        assert_eq!((v.values, v.coverage), (vec![2.0, 2.0, 2.0], 1.0));
        let v = encode_mean(&["c", "oov"], &t);
        assert_eq!((v.values, v.coverage), (vec![2.0, 0.0, 0.0], 0.5));
        let v = encode_mean(&["oov1", "oov2"], &t);
        assert_eq!((v.values, v.coverage), (vec![0.0, 0.0, 0.0], 0.0));
        let empty: [&str; 0] = [];
        assert_eq!(encode_mean(&empty, &t).coverage, 0.0);
    }

    #[test]
    fn sequence_examples() {
        let t = table();
        let m = encode_sequence(&["a", "b"], &t, 4);
        assert_eq!((m.rows(), m.cols(), m.true_len), (4, 3, 2));
        assert!(m.data.data()[6..].iter().all(|&v| v == 0.0));

        let m = encode_sequence(&["a", "b", "c", "d", "a"], &t, 4);
        assert_eq!(m.true_len, 4);
        assert_eq!(&m.data.data()[9..12], &[1.0, 2.0, 3.0]);

        let m = encode_sequence(&["d"], &t, 1);
        assert_eq!(m.data.shape(), &[1, 3]);
        assert_eq!(m.data.data(), &[1.0, 2.0, 3.0]);

        let m = encode_sequence(&["oov", "a"], &t, 2);
        assert_eq!(m.data.data(), &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    fn token_list() -> impl Strategy<Value = Vec<&'static str>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "oov"]), 0..12)
    }

    proptest! {
        #[test]
        fn mean_is_permutation_invariant(tokens in token_list(), seed: u64) {
            let t = table();
            let mut shuffled = tokens.clone();
            crate::rng::SeededRng::new(seed).shuffle(&mut shuffled);
            let a = encode_mean(&tokens, &t);
            let b = encode_mean(&shuffled, &t);
            prop_assert_eq!(a.coverage, b.coverage);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-12);
                prop_assert!(x.is_finite());
            }
        }

        #[test]
        fn sequence_rows_are_exact_lookups(tokens in token_list(), max_len in 1usize..8) {
            let t = table();
            let m = encode_sequence(&tokens, &t, max_len);
            prop_assert_eq!(m.true_len, tokens.len().min(max_len));
            for row in 0..max_len {
                let got = &m.data.data()[row * 3..row * 3 + 3];
                let want = if row < m.true_len { t.get(tokens[row]).unwrap_or(&[0.0; 3]) } else { &[0.0; 3] };
                prop_assert_eq!(got, want);
            }
        }

        #[test]
        fn sequence_keeps_order(tokens in token_list()) {
            let t = table();
            let mut reversed = tokens.clone();
            reversed.reverse();
            let fwd = encode_sequence(&tokens, &t, 12);
            let rev = encode_sequence(&reversed, &t, 12);
            let n = tokens.len();
            for row in 0..n {
                prop_assert_eq!(
                    &fwd.data.data()[row * 3..row * 3 + 3],
                    &rev.data.data()[(n - 1 - row) * 3..(n - row) * 3]
                );
            }
        }
    }
}
