use crate::error::{Error, Result};
use crate::model::{ImageRaster, PartCandidate};

use super::FeatureConfig;

/// Fixed-size RGB window resampled from an oriented box. Rows run along the
/// box's long axis (direction `theta`), columns across it. Values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    rows: usize,
    cols: usize,
    rgb: Vec<[f64; 3]>,
}

impl Patch {
    pub fn new(rows: usize, cols: usize, rgb: Vec<[f64; 3]>) -> Result<Self> {
        if rows == 0 || cols == 0 || rgb.len() != rows * cols {
            return Err(Error::data(format!(
                "patch {rows}x{cols} with {} pixels",
                rgb.len()
            )));
        }
        if rgb.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::data("patch values must lie in [0, 1]"));
        }
        Ok(Self { rows, cols, rgb })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Result<Self> {
        let rgb = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(rows, cols, rgb)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn rgb(&self, row: usize, col: usize) -> [f64; 3] {
        self.rgb[row * self.cols + col]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.rgb
    }

    /// Rec. 601 luma.
    pub fn gray(&self) -> Vec<f64> {
        self.rgb
            .iter()
            .map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b)
            .collect()
    }
}

/// Image-space position of patch pixel `(row, col)` for candidate `c`.
#[inline]
pub fn sample_point(c: &PartCandidate, row: usize, col: usize, cfg: &FeatureConfig) -> (f64, f64) {
    let along = ((row as f64 + 0.5) / cfg.patch_rows as f64 - 0.5) * c.s;
    let across = ((col as f64 + 0.5) / cfg.patch_cols as f64 - 0.5) * c.s * cfg.box_aspect;
    let (sin, cos) = c.theta.sin_cos();
    (
        c.x + along * cos - across * sin,
        c.y + along * sin + across * cos,
    )
}

/// Bilinear sample with edge clamping. Pixel centers sit at integer coordinates.
pub fn bilinear(image: &ImageRaster, x: f64, y: f64) -> [f64; 3] {
    let xmax = (image.width() - 1) as f64;
    let ymax = (image.height() - 1) as f64;
    let x = x.clamp(0.0, xmax);
    let y = y.clamp(0.0, ymax);
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = (x0 + 1).min(image.width() - 1);
    let y1 = (y0 + 1).min(image.height() - 1);
    let p00 = image.pixel(x0, y0);
    let p10 = image.pixel(x1, y0);
    let p01 = image.pixel(x0, y1);
    let p11 = image.pixel(x1, y1);
    let mut out = [0.0; 3];
    for ch in 0..3 {
        let top = p00[ch] as f64 * (1.0 - fx) + p10[ch] as f64 * fx;
        let bottom = p01[ch] as f64 * (1.0 - fx) + p11[ch] as f64 * fx;
        out[ch] = ((top * (1.0 - fy) + bottom * fy) / 255.0).clamp(0.0, 1.0);
    }
    out
}

/// Resamples the oriented `s x s*aspect` box under `c` to the configured
/// patch size.
pub fn extract_patch(image: &ImageRaster, c: &PartCandidate, cfg: &FeatureConfig) -> Result<Patch> {
    let inside = (0.0..=(image.width() - 1) as f64).contains(&c.x)
        && (0.0..=(image.height() - 1) as f64).contains(&c.y);
    if !inside {
        return Err(Error::data(format!(
            "candidate center ({}, {}) lies outside the {}x{} image",
            c.x,
            c.y,
            image.width(),
            image.height()
        )));
    }
    let mut rgb = Vec::with_capacity(cfg.patch_rows * cfg.patch_cols);
    for row in 0..cfg.patch_rows {
        for col in 0..cfg.patch_cols {
            let (x, y) = sample_point(c, row, col, cfg);
            rgb.push(bilinear(image, x, y));
        }
    }
    Ok(Patch {
        rows: cfg.patch_rows,
        cols: cfg.patch_cols,
        rgb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gradient_image(w: usize, h: usize) -> ImageRaster {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(&[(x * 7 % 256) as u8, (y * 5 % 256) as u8, ((x + y) * 3 % 256) as u8]);
            }
        }
        ImageRaster::new(w, h, data).unwrap()
    }

    #[test]
    fn constant_image_gives_constant_patch() {
        let img = ImageRaster::filled(80, 60, [128, 128, 128]).unwrap();
        let c = PartCandidate::new(40.0, 30.0, 40.0, 0.3).unwrap();
        let p = extract_patch(&img, &c, &FeatureConfig::default()).unwrap();
        let v = 128.0 / 255.0;
        assert!(p.pixels().iter().all(|px| px.iter().all(|&x| (x - v).abs() < 1e-12)));
        assert_eq!((p.rows(), p.cols()), (64, 32));
    }

    #[test]
    fn half_turn_rotates_patch_by_180_degrees() {
        let img = gradient_image(120, 100);
        let cfg = FeatureConfig::default();
        let a = PartCandidate::new(60.0, 50.0, 40.0, 0.0).unwrap();
        let b = PartCandidate::new(60.0, 50.0, 40.0, -PI).unwrap();
        let pa = extract_patch(&img, &a, &cfg).unwrap();
        let pb = extract_patch(&img, &b, &cfg).unwrap();
        for r in 0..cfg.patch_rows {
            for c in 0..cfg.patch_cols {
                let x = pa.rgb(r, c);
                let y = pb.rgb(cfg.patch_rows - 1 - r, cfg.patch_cols - 1 - c);
                for ch in 0..3 {
                    assert!((x[ch] - y[ch]).abs() < 1e-9);
                }
            }
        }
    }

    /// Independent resampler: explicit corner weights, no shared helpers.
    fn oracle_sample(img: &ImageRaster, x: f64, y: f64) -> [f64; 3] {
        let w = img.width() as i64;
        let h = img.height() as i64;
        let xi = x.floor() as i64;
        let yi = y.floor() as i64;
        let mut acc = [0.0; 3];
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let wx = if dx == 0 { 1.0 - (x - xi as f64) } else { x - xi as f64 };
            let wy = if dy == 0 { 1.0 - (y - yi as f64) } else { y - yi as f64 };
            let px = (xi + dx).clamp(0, w - 1) as usize;
            let py = (yi + dy).clamp(0, h - 1) as usize;
            let v = img.pixel(px, py);
            for ch in 0..3 {
                acc[ch] += wx * wy * v[ch] as f64 / 255.0;
            }
        }
        acc
    }

    #[test]
    fn corner_candidate_reads_clamped_edges() {
        let img = gradient_image(50, 40);
        let cfg = FeatureConfig::default();
        let c = PartCandidate::new(0.0, 0.0, 30.0, 0.7).unwrap();
        let p = extract_patch(&img, &c, &cfg).unwrap();
        for r in 0..cfg.patch_rows {
            for col in 0..cfg.patch_cols {
                let along = ((r as f64 + 0.5) / 64.0 - 0.5) * 30.0;
                let across = ((col as f64 + 0.5) / 32.0 - 0.5) * 15.0;
                let x = (along * 0.7f64.cos() - across * 0.7f64.sin()).clamp(0.0, 49.0);
                let y = (along * 0.7f64.sin() + across * 0.7f64.cos()).clamp(0.0, 39.0);
                let want = oracle_sample(&img, x, y);
                let got = p.rgb(r, col);
                for ch in 0..3 {
                    assert!((want[ch] - got[ch]).abs() < 1e-12, "({r},{col})");
                }
            }
        }
    }

    #[test]
    fn center_outside_image_is_rejected() {
        let img = ImageRaster::filled(10, 10, [0, 0, 0]).unwrap();
        let c = PartCandidate::new(10.5, 2.0, 4.0, 0.0).unwrap();
        assert!(matches!(
            extract_patch(&img, &c, &FeatureConfig::default()),
            Err(Error::Data(_))
        ));
    }
}
