use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor_store::ScoreMap;

// Viridis, sampled at nine evenly spaced stops.
const STOPS: [[f32; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

fn colormap(t: f32) -> [u8; 3] {
    let x = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f32;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f32;
    let mut rgb = [0u8; 3];
    for (ch, out) in rgb.iter_mut().enumerate() {
        let v = STOPS[i][ch] * (1.0 - f) + STOPS[i + 1][ch] * f;
        *out = v.round() as u8;
    }
    rgb
}

/// Writes a false-color 8-bit RGB PNG of a score map, stretched to the
/// map's own min/max. For inspection only; the colors carry no calibration.
pub fn render_scoremap_png(scores: &ScoreMap, path: &Path) -> Result<()> {
    let (lo, hi) = (scores.min(), scores.max());
    let span = hi - lo;
    let mut pixels = Vec::with_capacity(scores.as_slice().len() * 3);
    for &v in scores.as_slice() {
        let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
        pixels.extend_from_slice(&colormap(t));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        scores.width() as u32,
        scores.height() as u32,
    );
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&pixels)?;
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(path: &Path) -> (u32, u32, Vec<u8>) {
        let decoder = png::Decoder::new(File::open(path).unwrap());
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).unwrap();
        buf.truncate(info.buffer_size());
        (info.width, info.height, buf)
    }

    #[test]
    fn constant_map_is_one_color() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        render_scoremap_png(&ScoreMap::filled(3, 4, 1.5).unwrap(), &path).unwrap();
        let (w, h, px) = decode(&path);
        assert_eq!((w, h), (4, 3));
        assert!(px.chunks(3).all(|c| c == &px[..3]));
    }

    #[test]
    fn two_values_two_colors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.png");
        let map = ScoreMap::new(1, 2, vec![0.0, 1.0]).unwrap();
        render_scoremap_png(&map, &path).unwrap();
        let (w, h, px) = decode(&path);
        assert_eq!((w, h), (2, 1));
        assert_ne!(&px[..3], &px[3..6]);
        assert_eq!(&px[..3], &[68, 1, 84]);
        assert_eq!(&px[3..6], &[253, 231, 37]);
    }
}
