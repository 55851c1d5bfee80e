use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::vocab::Vocab;
use crate::error::DataError;
use crate::tensor::Tensor;

/// Half-width of the uniform initializer for rows missing from the file.
pub const INIT_BOUND: f64 = 0.1;

/// Reads a whitespace-separated `token v1 .. ve` file into a `|V| × e`
/// matrix. Rows for tokens absent from the file, and the unknown row, are
/// drawn from `U[-0.1, 0.1]`. Tokens in the file but not in `vocab` are
/// ignored; the first occurrence of a duplicated token wins.
pub fn load_embeddings<R: Rng + ?Sized>(
    path: &Path,
    vocab: &Vocab,
    e: usize,
    rng: &mut R,
) -> Result<Tensor, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_embeddings(BufReader::new(file), vocab, e, rng).map_err(|err| match err {
        DataError::Io { source, .. } => DataError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_embeddings<B: BufRead, R: Rng + ?Sized>(
    reader: B,
    vocab: &Vocab,
    e: usize,
    rng: &mut R,
) -> Result<Tensor, DataError> {
    let mut matrix = Tensor::uniform(vocab.len(), e, INIT_BOUND, rng);
    let mut seen = vec![false; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| DataError::Io {
            path: Default::default(),
            source,
        })?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| DataError::Malformed {
                    line: line_no,
                    message: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != e {
            return Err(DataError::Width {
                line: line_no,
                expected: e,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Malformed {
                line: line_no,
                message: "non-finite value".into(),
            });
        }
        let idx = vocab.lookup(token);
        if idx == 0 || !vocab.contains(token) || seen[idx] {
            continue;
        }
        seen[idx] = true;
        matrix.row_mut(idx).copy_from_slice(&values);
    }
    Ok(matrix)
}
