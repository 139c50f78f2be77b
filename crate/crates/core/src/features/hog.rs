//! Histogram of oriented gradients over a patch: unsigned orientations,
//! hard orientation voting by gradient magnitude, overlapping square blocks
//! with L2-Hys normalization.

use std::f64::consts::PI;

use crate::error::{Error, Result};

use super::{FeatureConfig, Patch};

/// Block energies at or below this are treated as zero gradient.
const BLOCK_NORM_FLOOR: f64 = 1e-8;

/// Magnitudes below this are interpolation round-off, not edges.
const GRADIENT_FLOOR: f64 = 1e-12;

pub fn hog_dim(cfg: &FeatureConfig) -> usize {
    let cells_r = cfg.patch_rows / cfg.hog_cell;
    let cells_c = cfg.patch_cols / cfg.hog_cell;
    let blocks = (cells_r + 1).saturating_sub(cfg.hog_block) * (cells_c + 1).saturating_sub(cfg.hog_block);
    blocks * cfg.hog_block * cfg.hog_block * cfg.hog_bins
}

/// Per-cell orientation histograms, row-major over cells.
pub fn cell_histograms(patch: &Patch, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    let (rows, cols) = (patch.rows(), patch.cols());
    if rows % cfg.hog_cell != 0 || cols % cfg.hog_cell != 0 {
        return Err(Error::config(format!(
            "patch {rows}x{cols} is not divisible into {}px cells",
            cfg.hog_cell
        )));
    }
    let gray = patch.gray();
    let at = |r: usize, c: usize| gray[r * cols + c];
    let cells_c = cols / cfg.hog_cell;
    let mut cells = vec![vec![0.0; cfg.hog_bins]; (rows / cfg.hog_cell) * cells_c];
    let bin_width = PI / cfg.hog_bins as f64;
    for r in 0..rows {
        for c in 0..cols {
            let gx = at(r, (c + 1).min(cols - 1)) - at(r, c.saturating_sub(1));
            let gy = at((r + 1).min(rows - 1), c) - at(r.saturating_sub(1), c);
            let mag = gx.hypot(gy);
            if mag <= GRADIENT_FLOOR {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(PI);
            let bin = ((angle / bin_width) as usize).min(cfg.hog_bins - 1);
            cells[(r / cfg.hog_cell) * cells_c + c / cfg.hog_cell][bin] += mag;
        }
    }
    Ok(cells)
}

/// L2 normalize, clip, renormalize. Near-zero blocks become zero.
fn l2_hys(block: &mut [f64], clip: f64) {
    let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= BLOCK_NORM_FLOOR {
        block.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    for v in block.iter_mut() {
        *v = (*v / norm).min(clip);
    }
    let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
    block.iter_mut().for_each(|v| *v /= norm);
}

pub fn hog_descriptor(patch: &Patch, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let cells = cell_histograms(patch, cfg)?;
    let cells_r = patch.rows() / cfg.hog_cell;
    let cells_c = patch.cols() / cfg.hog_cell;
    if cells_r < cfg.hog_block || cells_c < cfg.hog_block {
        return Err(Error::config("patch has fewer cells than one HOG block"));
    }
    let block_len = cfg.hog_block * cfg.hog_block * cfg.hog_bins;
    let mut out = Vec::with_capacity(hog_dim(cfg));
    for br in 0..=cells_r - cfg.hog_block {
        for bc in 0..=cells_c - cfg.hog_block {
            let start = out.len();
            for dr in 0..cfg.hog_block {
                for dc in 0..cfg.hog_block {
                    out.extend_from_slice(&cells[(br + dr) * cells_c + bc + dc]);
                }
            }
            l2_hys(&mut out[start..start + block_len], cfg.hog_clip);
        }
    }
    Ok(out)
}
