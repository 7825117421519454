use crate::error::{Error, Result};
use crate::tensor_store::ScoreMap;

/// Source sample positions for one axis under half-pixel-center alignment:
/// `(x + 0.5) * src / dst - 0.5`, clamped to the valid range.
fn axis_weights(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|x| {
            let pos = ((x as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear upsampling with half-pixel-center alignment. Never extrapolates
/// beyond the input range.
pub fn upsample_bilinear(scores: &ScoreMap, target_h: usize, target_w: usize) -> Result<ScoreMap> {
    if target_h == 0 || target_w == 0 {
        return Err(Error::Shape("target dimensions must be positive".into()));
    }
    if target_h < scores.height() || target_w < scores.width() {
        return Err(Error::Shape(format!(
            "upsampling target {target_h}x{target_w} is smaller than {}x{}",
            scores.height(),
            scores.width()
        )));
    }
    if (target_h, target_w) == (scores.height(), scores.width()) {
        return Ok(scores.clone());
    }
    let rows = axis_weights(scores.height(), target_h);
    let cols = axis_weights(scores.width(), target_w);
    let src = scores.as_slice();
    let w = scores.width();
    let mut out = Vec::with_capacity(target_h * target_w);
    for &(r0, r1, wy) in &rows {
        for &(c0, c1, wx) in &cols {
            let at = |r: usize, c: usize| src[r * w + c] as f64;
            let top = at(r0, c0) * (1.0 - wx) + at(r0, c1) * wx;
            let bottom = at(r1, c0) * (1.0 - wx) + at(r1, c1) * wx;
            out.push((top * (1.0 - wy) + bottom * wy) as f32);
        }
    }
    ScoreMap::new(target_h, target_w, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stays_constant() {
        let s = ScoreMap::filled(3, 5, 0.7).unwrap();
        let up = upsample_bilinear(&s, 12, 20).unwrap();
        assert!(up.as_slice().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn same_size_is_identity() {
        let s = ScoreMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(upsample_bilinear(&s, 2, 2).unwrap(), s);
    }

    #[test]
    fn half_pixel_rule_on_a_step() {
        let s = ScoreMap::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = upsample_bilinear(&s, 2, 4).unwrap();
        assert_eq!(up.as_slice(), &[0.0, 0.25, 0.75, 1.0, 0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn shrinking_or_zero_is_rejected() {
        let s = ScoreMap::filled(4, 4, 0.0).unwrap();
        assert!(upsample_bilinear(&s, 2, 4).is_err());
        assert!(upsample_bilinear(&s, 0, 4).is_err());
    }
}
