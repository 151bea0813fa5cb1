use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::Param;
use crate::transformer::TokenSequence;

/// A `K^3 x C` feature grid, continuous (`Z`) or quantized (`Ẑ`).
/// Cells are stored x-major: cell `(i, j, k)` is row `(i * K + j) * K + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    pub resolution: usize,
    pub channels: usize,
    pub values: Vec<f64>,
    pub quantized: bool,
}

impl LatentGrid {
    pub fn continuous(resolution: usize, channels: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), resolution.pow(3) * channels);
        Self {
            resolution,
            channels,
            values,
            quantized: false,
        }
    }

    pub fn cells(&self) -> usize {
        self.resolution.pow(3)
    }

    pub fn slice(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.channels..(cell + 1) * self.channels]
    }
}

/// `V` code vectors of dimension `C`, stored as one `[V, C]` parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub entries: Param,
}

impl Codebook {
    /// Uniform init in `[-1/V, 1/V]`.
    pub fn new<R: Rng>(size: usize, dim: usize, rng: &mut R) -> Self {
        Self {
            entries: Param::uniform("codebook", &[size, dim], 1.0 / size as f64, rng),
        }
    }

    pub fn from_entries(entries: Vec<Vec<f64>>) -> Result<Self> {
        let size = entries.len();
        let dim = entries.first().map_or(0, Vec::len);
        if size < 2 || dim == 0 || entries.iter().any(|e| e.len() != dim) {
            return Err(Error::invalid("codebook needs at least 2 entries of equal positive dimension"));
        }
        let mut p = Param::zeros("codebook", &[size, dim]);
        p.value = entries.concat();
        Ok(Self { entries: p })
    }

    pub fn size(&self) -> usize {
        self.entries.shape[0]
    }

    pub fn dim(&self) -> usize {
        self.entries.shape[1]
    }

    pub fn entry(&self, j: usize) -> &[f64] {
        &self.entries.value[j * self.dim()..(j + 1) * self.dim()]
    }

    /// Index of the nearest entry by Euclidean distance; ties go to the lowest index.
    pub fn nearest(&self, v: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for j in 0..self.size() {
            let d: f64 = self.entry(j).iter().zip(v).map(|(b, z)| (z - b) * (z - b)).sum();
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    }
}

/// Replaces every slice of `z` with its nearest code and returns the tokens
/// in row-major cell order.
pub fn quantize(z: &LatentGrid, book: &Codebook) -> Result<(LatentGrid, TokenSequence)> {
    if z.channels != book.dim() {
        return Err(Error::ShapeMismatch {
            what: "codebook dimension".into(),
            expected: vec![z.channels],
            actual: vec![book.dim()],
        });
    }
    if let Some(index) = z.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: index / z.channels });
    }
    let tokens: Vec<u32> = (0..z.cells()).map(|c| book.nearest(z.slice(c)) as u32).collect();
    let seq = TokenSequence(tokens);
    let grid = dequantize(&seq, book, z.resolution)?;
    Ok((grid, seq))
}

/// Looks every token up in the codebook.
pub fn dequantize(tokens: &TokenSequence, book: &Codebook, resolution: usize) -> Result<LatentGrid> {
    let cells = resolution.pow(3);
    if tokens.len() != cells {
        return Err(Error::LengthMismatch {
            expected: cells,
            actual: tokens.len(),
        });
    }
    tokens.check_vocab(book.size())?;
    let mut values = Vec::with_capacity(cells * book.dim());
    for &t in tokens.tokens() {
        values.extend_from_slice(book.entry(t as usize));
    }
    Ok(LatentGrid {
        resolution,
        channels: book.dim(),
        values,
        quantized: true,
    })
}
