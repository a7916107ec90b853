/// Two-channel rendering of per-pixel attributions, `[frames, 2, h, w]`:
/// channel 0 holds positive values over the frame's largest positive value,
/// channel 1 negative magnitudes over the largest negative magnitude. A
/// channel with nothing in it stays zero.
pub fn shap_image(values: &[f64], frames: usize, height: usize, width: usize) -> Vec<f32> {
    let n = height * width;
    assert_eq!(values.len(), frames * n, "attribution length does not match the stack");
    let mut out = vec![0.0f32; frames * 2 * n];
    for (f, chunk) in values.chunks(n).enumerate() {
        let pos = chunk.iter().cloned().fold(0.0, f64::max);
        let neg = chunk.iter().cloned().fold(0.0, f64::min).abs();
        let base = f * 2 * n;
        for (i, &v) in chunk.iter().enumerate() {
            if v > 0.0 {
                out[base + i] = (v / pos) as f32;
            } else if v < 0.0 {
                out[base + n + i] = (-v / neg) as f32;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frame_renders_black() {
        assert!(shap_image(&[0.0; 8], 2, 2, 2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channels_peak_at_one() {
        let img = shap_image(&[0.5, -2.0, 0.25, -1.0], 1, 2, 2);
        assert_eq!(img, vec![1.0, 0.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.5]);
    }
}
