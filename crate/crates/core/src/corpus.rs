//! Labeled review datasets: TSV ingestion, annotator aggregation and
//! seeded train/test/validation splits.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

const LABEL_HEADER: [&str; 3] = ["id", "text", "label"];
const ANNOTATOR_HEADER: [&str; 5] = ["id", "text", "a1", "a2", "a3"];

/// Smallest dataset [`split`] accepts.
pub const MIN_SPLIT_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("dataset has no data rows")]
    EmptyDataset,
    #[error("review {id}: expected exactly 3 annotator labels, found {found}")]
    MissingAnnotations { id: String, found: usize },
    #[error("review {id} has no label")]
    UnlabeledReview { id: String },
    #[error("dataset has {size} reviews, at least {MIN_SPLIT_SIZE} are required")]
    DatasetTooSmall { size: usize },
    #[error("invalid split fractions: {0}")]
    InvalidSplitSpec(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Binary sentiment polarity. Class index 0 is negative, 1 is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub const ALL: [Polarity; 2] = [Polarity::Negative, Polarity::Positive];

    pub fn index(self) -> usize {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    /// File token: `pos` or `neg`.
    pub fn token(self) -> &'static str {
        match self {
            Polarity::Negative => "neg",
            Polarity::Positive => "pos",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Polarity::Negative => Polarity::Positive,
            Polarity::Positive => Polarity::Negative,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" => Ok(Polarity::Positive),
            "neg" => Ok(Polarity::Negative),
            other => Err(format!("label token {other:?} is not `pos` or `neg`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Review {
    pub id: String,
    pub text: String,
    /// Per-annotator votes; empty when the file carries a single label.
    pub annotator_labels: Vec<Polarity>,
    pub label: Option<Polarity>,
}

impl Review {
    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: Polarity) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            annotator_labels: Vec::new(),
            label: Some(label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub reviews: Vec<Review>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, reviews: Vec<Review>) -> Self {
        Self {
            name: name.into(),
            reviews,
        }
    }

    pub fn len(&self) -> usize {
        self.reviews.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviews.is_empty()
    }

    /// Labels of every review, failing on the first unlabeled one.
    pub fn labels(&self) -> Result<Vec<Polarity>, CorpusError> {
        self.reviews
            .iter()
            .map(|r| {
                r.label.ok_or_else(|| CorpusError::UnlabeledReview { id: r.id.clone() })
            })
            .collect()
    }

    /// Fills `label` by majority vote on every review that has annotator
    /// votes and no label yet.
    pub fn aggregate_all(mut self) -> Result<Self, CorpusError> {
        for review in &mut self.reviews {
            if review.label.is_none() {
                *review = aggregate_labels(review.clone())?;
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.60,
            test_fraction: 0.30,
            valid_fraction: 0.10,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fractions = [
            ("train", self.train_fraction),
            ("test", self.test_fraction),
            ("valid", self.valid_fraction),
        ];
        for (name, f) in fractions {
            if !(f > 0.0 && f < 1.0) {
                return Err(CorpusError::InvalidSplitSpec(format!(
                    "{name} fraction {f} is outside (0, 1)"
                )));
            }
        }
        let sum = self.train_fraction + self.test_fraction + self.valid_fraction;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplitSpec(format!(
                "fractions sum to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// `(train, test, valid)` part sizes for a dataset of `n` reviews.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon absorbs representation error in products like 0.3 * 1000.
        let cut = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = cut(self.train_fraction).min(n);
        let test = cut(self.test_fraction).min(n - train);
        (train, test, n - train - test)
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_dataset(&name, &content)
}

/// Parses dataset TSV text. See [`load_dataset`].
pub fn parse_dataset(name: &str, content: &str) -> Result<Dataset, CorpusError> {
    let mut lines = content.split('\n').enumerate();
    let malformed = |line: usize, reason: String| CorpusError::MalformedRow { line, reason };

    let header: Vec<&str> = match lines.next() {
        Some((_, h)) if !h.is_empty() => h.split('\t').collect(),
        _ => return Err(malformed(1, "missing header line".into())),
    };
    let annotated = if header == LABEL_HEADER {
        false
    } else if header == ANNOTATOR_HEADER {
        true
    } else {
        return Err(malformed(
            1,
            "header must be `id\\ttext\\tlabel` or `id\\ttext\\ta1\\ta2\\ta3`".into(),
        ));
    };
    let columns = header.len();

    let mut seen = HashSet::new();
    let mut reviews = Vec::new();
    let mut pending_blank: Option<usize> = None;
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.is_empty() {
            // Only a trailing newline may leave an empty final line.
            pending_blank.get_or_insert(line);
            continue;
        }
        if let Some(blank) = pending_blank {
            return Err(malformed(blank, "empty line".into()));
        }
        if raw.contains('\r') {
            return Err(malformed(line, "carriage return in row".into()));
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != columns {
            return Err(malformed(
                line,
                format!("expected {columns} columns, found {}", fields.len()),
            ));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(malformed(line, "empty id".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(malformed(line, format!("duplicate id {id:?}")));
        }
        let text = fields[1];
        if text.trim().is_empty() {
            return Err(malformed(line, "empty text".into()));
        }
        let parse = |tok: &str| tok.parse::<Polarity>().map_err(|e| malformed(line, e));
        let review = if annotated {
            Review {
                id: id.to_string(),
                text: text.to_string(),
                annotator_labels: fields[2..]
                    .iter()
                    .map(|t| parse(t))
                    .collect::<Result<_, _>>()?,
                label: None,
            }
        } else {
            Review::labeled(id, text, parse(fields[2])?)
        };
        reviews.push(review);
    }

    if reviews.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    Ok(Dataset::new(name, reviews))
}

/// Serializes a dataset in the single-label TSV layout.
pub fn write_dataset_tsv(dataset: &Dataset) -> Result<String, CorpusError> {
    let mut out = LABEL_HEADER.join("\t");
    out.push('\n');
    for (review, label) in dataset.reviews.iter().zip(dataset.labels()?) {
        out.push_str(&format!("{}\t{}\t{}\n", review.id, review.text, label));
    }
    Ok(out)
}

/// Majority vote over exactly three annotator labels.
pub fn aggregate_labels(mut review: Review) -> Result<Review, CorpusError> {
    if review.annotator_labels.len() != 3 {
        return Err(CorpusError::MissingAnnotations {
            id: review.id.clone(),
            found: review.annotator_labels.len(),
        });
    }
    let positives = review
        .annotator_labels
        .iter()
        .filter(|&&l| l == Polarity::Positive)
        .count();
    review.label = Some(if positives >= 2 {
        Polarity::Positive
    } else {
        Polarity::Negative
    });
    Ok(review)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub valid: Dataset,
}

/// Seeded Fisher–Yates shuffle followed by a contiguous
/// train / test / validation cut.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split, CorpusError> {
    spec.validate()?;
    dataset.labels()?;
    let n = dataset.len();
    if n < MIN_SPLIT_SIZE {
        return Err(CorpusError::DatasetTooSmall { size: n });
    }

    let order = SeededRng::new(spec.seed).permutation(n);
    let (n_train, n_test, _) = spec.sizes(n);
    let part = |range: std::ops::Range<usize>, suffix: &str| {
        Dataset::new(
            format!("{}/{suffix}", dataset.name),
            order[range].iter().map(|&i| dataset.reviews[i].clone()).collect(),
        )
    };
    Ok(Split {
        train: part(0..n_train, "train"),
        test: part(n_train..n_train + n_test, "test"),
        valid: part(n_train + n_test..n, "valid"),
    })
}
