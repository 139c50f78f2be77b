use super::{FeatureConfig, Patch};

pub fn color_dim(cfg: &FeatureConfig) -> usize {
    cfg.color_bins.pow(3)
}

#[inline]
fn channel_bin(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Joint RGB histogram, `bins^3` cells indexed `(r * bins + g) * bins + b`,
/// L1-normalized.
pub fn color_histogram(patch: &Patch, cfg: &FeatureConfig) -> Vec<f64> {
    let bins = cfg.color_bins;
    let mut hist = vec![0.0; color_dim(cfg)];
    for [r, g, b] in patch.pixels() {
        let idx = (channel_bin(*r, bins) * bins + channel_bin(*g, bins)) * bins + channel_bin(*b, bins);
        hist[idx] += 1.0;
    }
    let n = patch.pixels().len() as f64;
    hist.iter_mut().for_each(|v| *v /= n);
    hist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_red_lands_in_one_bin() {
        let cfg = FeatureConfig::default();
        let p = Patch::from_fn(64, 32, |_, _| [1.0, 0.0, 0.0]).unwrap();
        let h = color_histogram(&p, &cfg);
        assert_eq!(h.len(), 512);
        assert_eq!(h[7 * 64], 1.0);
        assert_eq!(h.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn half_red_half_green() {
        let cfg = FeatureConfig::default();
        let p = Patch::from_fn(64, 32, |r, _| if r < 32 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] }).unwrap();
        let h = color_histogram(&p, &cfg);
        assert_eq!(h[7 * 64], 0.5);
        assert_eq!(h[7 * 8], 0.5);
    }
}
