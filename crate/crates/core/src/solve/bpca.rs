//! Block PCA: rotates every penalty-coefficient block onto the eigenvectors
//! of its Gram matrix so that its columns become mutually orthogonal, then
//! scales each rotated column to unit norm.

use rayon::prelude::*;

use super::eigen::{compensated_dot, eigen_sym};
use crate::error::{Error, Result};
use crate::lsm::{dot, VfaWeights};
use crate::pathlp::{GBlock, PathLpModel};

/// Per-block rotations `W[i][x]`, the eigenvalues of `G^T G` and the
/// numerical ranks. Transformed weights relate to the original ones by
/// `beta = W diag(1 / sqrt(lambda)) beta'` on the leading `rank` directions.
#[derive(Debug, Clone, PartialEq)]
pub struct BpcaTransform {
    /// Row-major square matrices, indexed like [`VfaWeights`] blocks.
    pub rotations: Vec<Vec<f64>>,
    /// Descending.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Leading directions whose singular value exceeds the rank tolerance.
    /// Trailing transformed columns are zero.
    pub ranks: Vec<usize>,
}

impl BpcaTransform {
    pub fn width(&self, block: usize) -> usize {
        self.eigenvalues[block].len()
    }

    fn scale(&self, block: usize, c: usize) -> f64 {
        self.eigenvalues[block][c].sqrt()
    }

    /// `beta = W diag(1 / sigma) beta'`; components beyond the rank are ignored.
    pub fn to_original(&self, transformed: &VfaWeights) -> VfaWeights {
        let mut out = transformed.clone();
        for (k, w) in self.rotations.iter().enumerate() {
            let n = self.width(k);
            let rank = self.ranks[k];
            let src: Vec<f64> = (0..n)
                .map(|c| if c < rank { transformed.block(k)[c] / self.scale(k, c) } else { 0.0 })
                .collect();
            let dst = out.block_mut(k);
            for (r, d) in dst.iter_mut().enumerate() {
                *d = dot(&w[r * n..(r + 1) * n], &src);
            }
        }
        out
    }

    /// `beta' = diag(sigma) W^T beta`, with the components along numerically
    /// null directions set to zero.
    pub fn to_transformed(&self, original: &VfaWeights) -> VfaWeights {
        let mut out = original.clone();
        for (k, w) in self.rotations.iter().enumerate() {
            let n = self.width(k);
            let rank = self.ranks[k];
            let src = original.block(k);
            let dst = out.block_mut(k);
            for (c, d) in dst.iter_mut().enumerate() {
                *d = if c < rank {
                    self.scale(k, c) * (0..n).map(|r| w[r * n + c] * src[r]).sum::<f64>()
                } else {
                    0.0
                };
            }
        }
        out
    }
}

/// Off-diagonal mass of `G^T G` relative to its diagonal:
/// `||offdiag||_F / max(||diag||_2, tiny)`.
pub fn gram_offdiagonal_ratio(block: &GBlock) -> f64 {
    let n = block.width;
    let g = block.gram();
    let mut off = 0.0;
    let mut diag = 0.0;
    for r in 0..n {
        for c in 0..n {
            let v = g[r * n + c] * g[r * n + c];
            if r == c {
                diag += v;
            } else {
                off += v;
            }
        }
    }
    if diag == 0.0 {
        return if off == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (off / diag).sqrt()
}

/// Rank tolerance on singular values: `max(rows, width) * eps * sigma_max`,
/// applied to the eigenvalues `sigma^2` of `G^T G` sorted descending.
pub fn numerical_rank(eigenvalues: &[f64], rows: usize) -> usize {
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return 0;
    }
    let tol = rows.max(eigenvalues.len()) as f64 * f64::EPSILON;
    eigenvalues.iter().take_while(|&&v| v > tol * tol * top).count()
}

/// Largest `|g_km| / sqrt(g_kk g_mm)` over pairs of non-zero columns.
fn relative_coupling(gram: &[f64], n: usize) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..n {
        for m in k + 1..n {
            let scale = (gram[k * n + k] * gram[m * n + m]).sqrt();
            if scale > 0.0 {
                worst = worst.max(gram[k * n + m].abs() / scale);
            }
        }
    }
    worst
}

fn rotate_block(block: &GBlock, w: &[f64], rank: usize) -> GBlock {
    let n = block.width;
    let mut values = vec![0.0; block.values.len()];
    let mut col = vec![0.0; n];
    for k in 0..block.rows.len() {
        let row = block.row(k);
        for c in 0..rank {
            for (r, slot) in col.iter_mut().enumerate() {
                *slot = w[r * n + c];
            }
            values[k * n + c] = compensated_dot(row, &col);
        }
    }
    GBlock {
        values,
        ..block.clone()
    }
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for k in 0..n {
            let v = a[r * n + k];
            for c in 0..n {
                out[r * n + c] += v * b[k * n + c];
            }
        }
    }
    out
}

const MAX_PASSES: usize = 8;
/// Target for [`relative_coupling`] of the rotated block.
const COUPLING_TOL: f64 = 1e-12;

struct BlockRotation {
    rotated: GBlock,
    w: Vec<f64>,
    eigenvalues: Vec<f64>,
    rank: usize,
}

/// Gram, Jacobi and rotation, repeated on the rotated block until its columns
/// are orthogonal relative to their own norms. The first pass separates the
/// large directions; later passes resolve the small ones, whose Gram entries
/// are then formed from columns of their own magnitude.
fn rotate_until_orthogonal(block: &GBlock) -> Result<BlockRotation> {
    let n = block.width;
    let mut w: Vec<f64> = (0..n * n).map(|k| if k / n == k % n { 1.0 } else { 0.0 }).collect();
    let mut cur = block.clone();
    let mut gram = cur.gram();
    for _ in 0..MAX_PASSES {
        if relative_coupling(&gram, n) <= COUPLING_TOL {
            break;
        }
        let e = eigen_sym(&gram, n)?;
        cur = rotate_block(&cur, &e.vectors, n);
        w = matmul(&w, &e.vectors, n);
        gram = cur.gram();
    }
    let coupling = relative_coupling(&gram, n);
    if coupling > COUPLING_TOL {
        return Err(Error::numeric(format!(
            "rotated columns still coupled at {coupling:e} after {MAX_PASSES} passes"
        )));
    }
    // Order columns by decreasing norm.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gram[b * n + b].total_cmp(&gram[a * n + a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| gram[k * n + k]).collect();
    let rank = numerical_rank(&eigenvalues, block.rows.len());
    let mut sorted_w = vec![0.0; n * n];
    let mut values = vec![0.0; cur.values.len()];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            sorted_w[r * n + new] = w[r * n + old];
        }
        if new < rank {
            let sigma = eigenvalues[new].sqrt();
            for k in 0..cur.rows.len() {
                values[k * n + new] = cur.values[k * n + old] / sigma;
            }
        }
    }
    Ok(BlockRotation {
        rotated: GBlock { values, ..cur },
        w: sorted_w,
        eigenvalues,
        rank,
    })
}

/// Replaces every `G` block by `G W diag(1 / sigma)`, leaving `Q` and `r`
/// unchanged. Columns beyond the numerical rank of the block are set to zero.
pub fn bpca(model: &PathLpModel) -> Result<(PathLpModel, BpcaTransform)> {
    let parts: Vec<BlockRotation> = model
        .g_blocks
        .par_iter()
        .map(|block| {
            rotate_until_orthogonal(block).map_err(|err| {
                Error::numeric(format!(
                    "rotation of block (stage {}, {:?}) failed: {err}",
                    block.stage, block.mode
                ))
            })
        })
        .collect::<Result<_>>()?;
    let mut out = model.clone();
    let mut rotations = Vec::with_capacity(parts.len());
    let mut eigenvalues = Vec::with_capacity(parts.len());
    let mut ranks = Vec::with_capacity(parts.len());
    for (k, part) in parts.into_iter().enumerate() {
        out.g_blocks[k] = part.rotated;
        rotations.push(part.w);
        eigenvalues.push(part.eigenvalues);
        ranks.push(part.rank);
    }
    Ok((
        out,
        BpcaTransform {
            rotations,
            eigenvalues,
            ranks,
        },
    ))
}
