//! Text → model input tensors.

use psa_core::corpus::Dataset;
use psa_core::embed::{encode_mean, encode_sequence, EmbeddingTable};
use psa_core::models::{InputDescriptor, ModelError, Samples};
use psa_core::nn::Tensor;
use psa_core::preprocess::preprocess_pipeline;

use crate::error::CliError;

/// Stemmed tokens of one text.
pub fn tokens(text: &str) -> Vec<String> {
    preprocess_pipeline(text).tokens
}

/// Stacks the encodings of `texts` as `(n, sample...)`. Returns `None` for
/// an empty list.
pub fn encode_texts<S: AsRef<str>>(
    texts: &[S],
    table: &EmbeddingTable,
    input: &InputDescriptor,
) -> Result<Option<Tensor>, CliError> {
    if table.dim() != input.dim() {
        return Err(CliError::data(format!(
            "embeddings have dimension {}, the model expects {}",
            table.dim(),
            input.dim()
        )));
    }
    if texts.is_empty() {
        return Ok(None);
    }
    let mut shape = vec![texts.len()];
    shape.extend(input.sample_shape());
    let mut data = Vec::with_capacity(shape.iter().product());
    for text in texts {
        let toks = tokens(text.as_ref());
        match *input {
            InputDescriptor::MeanVector { .. } => data.extend(encode_mean(&toks, table).values),
            InputDescriptor::Sequence { max_len, .. } => {
                data.extend(encode_sequence(&toks, table, max_len).data.into_data())
            }
        }
    }
    Ok(Some(Tensor::new(&shape, data).map_err(ModelError::from)?))
}

/// Encoded reviews with polarity class indices as labels.
pub fn encode_dataset(dataset: &Dataset, table: &EmbeddingTable, input: &InputDescriptor) -> Result<Samples, CliError> {
    let labels = dataset
        .labels()?
        .into_iter()
        .map(|p| p.index())
        .collect::<Vec<_>>();
    let texts: Vec<&str> = dataset.reviews.iter().map(|r| r.text.as_str()).collect();
    Ok(match encode_texts(&texts, table, input)? {
        Some(x) => Samples::new(x, labels)?,
        None => Samples::empty(&input.sample_shape()),
    })
}
