//! Uniform local binary patterns, 8 neighbours at radius 1.

use std::sync::OnceLock;

use crate::error::{Error, Result};

use super::Patch;

pub const LBP_BINS: usize = 59;

/// Neighbour offsets (row, col) in circular order.
const RING: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

/// Neighbours brighter than the center by less than this count as equal.
const TIE: f64 = 1e-9;

/// Number of 0/1 transitions around the circular 8-bit code.
pub fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

/// Code to histogram bin. The 58 uniform codes (at most two transitions)
/// take bins 0..58 in increasing code order; every other code maps to the
/// catch-all bin 58.
pub fn uniform_bin_table() -> &'static [u8; 256] {
    static TABLE: OnceLock<[u8; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [(LBP_BINS - 1) as u8; 256];
        let mut next = 0u8;
        for code in 0..=255u8 {
            if transitions(code) <= 2 {
                table[code as usize] = next;
                next += 1;
            }
        }
        debug_assert_eq!(next as usize, LBP_BINS - 1);
        table
    })
}

/// Bit k is set when neighbour k is strictly brighter than the center.
pub fn lbp_codes(patch: &Patch) -> Result<Vec<u8>> {
    let (rows, cols) = (patch.rows(), patch.cols());
    if rows < 3 || cols < 3 {
        return Err(Error::data(format!("LBP needs a 3x3 patch, got {rows}x{cols}")));
    }
    let gray = patch.gray();
    let mut codes = Vec::with_capacity((rows - 2) * (cols - 2));
    for r in 1..rows - 1 {
        for c in 1..cols - 1 {
            let center = gray[r * cols + c];
            let mut code = 0u8;
            for (k, (dr, dc)) in RING.iter().enumerate() {
                let v = gray[(r as isize + dr) as usize * cols + (c as isize + dc) as usize];
                if v > center + TIE {
                    code |= 1 << k;
                }
            }
            codes.push(code);
        }
    }
    Ok(codes)
}

/// L1-normalized 59-bin histogram of uniform LBP codes over the patch interior.
pub fn lbp_descriptor(patch: &Patch) -> Result<Vec<f64>> {
    let codes = lbp_codes(patch)?;
    let table = uniform_bin_table();
    let mut hist = vec![0.0; LBP_BINS];
    for &code in &codes {
        hist[table[code as usize] as usize] += 1.0;
    }
    let n = codes.len() as f64;
    hist.iter_mut().for_each(|v| *v /= n);
    Ok(hist)
}
