//! Overlay of predicted part boxes on an image.

use crate::eval::part_correct;
use crate::model::{ImageRaster, PartCandidate};

pub const BOX_COLOR: [u8; 3] = [0, 255, 0];
pub const ERROR_COLOR: [u8; 3] = [255, 0, 0];

/// Corners of the oriented box: length `s` along `theta`, width
/// `s * aspect` across it, in drawing order.
pub fn box_corners(c: &PartCandidate, aspect: f64) -> [[f64; 2]; 4] {
    let (sin, cos) = c.theta.sin_cos();
    let (h, w) = (c.s / 2.0, c.s * aspect / 2.0);
    let (ax, ay) = (h * cos, h * sin);
    let (bx, by) = (-w * sin, w * cos);
    [
        [c.x - ax - bx, c.y - ay - by],
        [c.x + ax - bx, c.y + ay - by],
        [c.x + ax + bx, c.y + ay + by],
        [c.x - ax + bx, c.y - ay + by],
    ]
}

/// Integer Bresenham segment, clipped to the raster.
pub fn draw_line(img: &mut ImageRaster, a: [f64; 2], b: [f64; 2], rgb: [u8; 3]) {
    let (mut x0, mut y0) = (a[0].round() as i64, a[1].round() as i64);
    let (x1, y1) = (b[0].round() as i64, b[1].round() as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    let (w, h) = (img.width() as i64, img.height() as i64);
    loop {
        if (0..w).contains(&x0) && (0..h).contains(&y0) {
            img.put_pixel(x0 as usize, y0 as usize, rgb);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

pub fn draw_box(img: &mut ImageRaster, c: &PartCandidate, aspect: f64, rgb: [u8; 3]) {
    let k = box_corners(c, aspect);
    for i in 0..4 {
        draw_line(img, k[i], k[(i + 1) % 4], rgb);
    }
}

/// Per-part colors: [`ERROR_COLOR`] where a truth box is given and the
/// prediction fails PCP, [`BOX_COLOR`] otherwise.
pub fn part_colors(pred: &[PartCandidate], truth: Option<&[PartCandidate]>, threshold: f64) -> Vec<[u8; 3]> {
    pred.iter()
        .enumerate()
        .map(|(i, p)| match truth.and_then(|t| part_correct(p, &t[i], threshold)) {
            Some(false) => ERROR_COLOR,
            _ => BOX_COLOR,
        })
        .collect()
}

/// Draws every predicted box onto a copy of `image`. Correct parts are
/// drawn first so error boxes stay visible where they overlap.
pub fn overlay(
    image: &ImageRaster,
    pred: &[PartCandidate],
    truth: Option<&[PartCandidate]>,
    aspect: f64,
    threshold: f64,
) -> ImageRaster {
    let mut out = image.clone();
    let colors = part_colors(pred, truth, threshold);
    for pass in [BOX_COLOR, ERROR_COLOR] {
        for (c, &rgb) in pred.iter().zip(&colors) {
            if rgb == pass {
                draw_box(&mut out, c, aspect, rgb);
            }
        }
    }
    out
}
