use alloc::vec::Vec;

use super::Spectrogram;
use crate::{Error, Result, Tensor};

/// Lower bound on the variance used by [`standardize`].
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Bilinear resampling of a row-major `rows x cols` image with half-pixel
/// centres and edge clamping.
pub fn bilinear_resize(src: &[f32], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f32> {
    assert_eq!(src.len(), rows * cols);
    let axis = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = s as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, (s - i0 as f64) as f32)
            })
            .collect()
    };
    let ry = axis(rows, out_rows);
    let rx = axis(cols, out_cols);
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for &(y0, y1, fy) in &ry {
        for &(x0, x1, fx) in &rx {
            let top = src[y0 * cols + x0] * (1.0 - fx) + src[y0 * cols + x1] * fx;
            let bot = src[y1 * cols + x0] * (1.0 - fx) + src[y1 * cols + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Zero mean, unit variance (variance floored at [`VARIANCE_FLOOR`]).
pub fn standardize(values: &mut [f32]) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| {
            let d = f64::from(v) - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = libm::sqrt(var.max(VARIANCE_FLOOR));
    for v in values.iter_mut() {
        *v = ((f64::from(*v) - mean) / std) as f32;
    }
}

/// Resizes a spectrogram to `size x size` (rows stay frequency, columns stay
/// time) and standardizes it. Returns a `1 x size x size` tensor.
pub fn to_model_input(spec: &Spectrogram, size: usize) -> Result<Tensor<f32>> {
    image_input(&spec.values, size)
}

/// [`to_model_input`] on a bare `bins x frames` tensor.
pub fn image_input(values: &Tensor<f32>, size: usize) -> Result<Tensor<f32>> {
    let (rows, cols) = match values.shape() {
        &[r, c] => (r, c),
        _ => (0, 0),
    };
    if cols < 2 || rows < 2 || size == 0 {
        return Err(Error::InvalidShape {
            shape: values.shape().to_vec(),
            reason: "spectrogram needs at least two bins and two frames".into(),
        });
    }
    let mut img = bilinear_resize(values.data(), rows, cols, size, size);
    standardize(&mut img);
    Tensor::new(&[1, size, size], img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{ClassLabel, ClipMeta, CqtParams};

    fn spec_of(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> Spectrogram {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Spectrogram {
            values: Tensor::new(&[rows, cols], data).unwrap(),
            params: CqtParams::default(),
            meta: ClipMeta {
                recording_id: "x".into(),
                class_label: ClassLabel::Tanker,
                start_offset: 0.0,
                vessel_id: None,
            },
        }
    }

    #[test]
    fn checkerboard_upsample_matches_formula() {
        // Independent evaluation of the half-pixel bilinear formula.
        let src = [0.0f64, 1.0, 1.0, 0.0];
        let coord = |d: usize| ((d as f64 + 0.5) * 0.5 - 0.5).clamp(0.0, 1.0);
        let got = bilinear_resize(&[0.0, 1.0, 1.0, 0.0], 2, 2, 4, 4);
        for y in 0..4 {
            for x in 0..4 {
                let (sy, sx) = (coord(y), coord(x));
                let expect = src[0] * (1.0 - sy) * (1.0 - sx) + src[1] * (1.0 - sy) * sx + src[2] * sy * (1.0 - sx) + src[3] * sy * sx;
                assert!((f64::from(got[y * 4 + x]) - expect).abs() < 1e-6);
            }
        }
        assert_eq!(got[0], 0.0);
        assert_eq!(got[1], 0.25);
        assert_eq!(got[5], 0.375);
    }

    #[test]
    fn constant_spectrogram_standardizes_to_zero() {
        let t = to_model_input(&spec_of(255, 1064, |_, _| -37.5), 256).unwrap();
        assert_eq!(t.shape(), &[1, 256, 256]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_is_standardized() {
        let t = to_model_input(&spec_of(255, 1064, |r, c| (r * 3 + c % 17) as f32), 256).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = t
            .data()
            .iter()
            .map(|&v| {
                let d = f64::from(v) - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn single_frame_is_degenerate() {
        assert!(to_model_input(&spec_of(255, 1, |_, _| 1.0), 256).is_err());
    }
}
