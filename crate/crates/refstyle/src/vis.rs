//! PNG input/output and image-grid assembly. Tensors are `[C, H, W]` in
//! `[-1, 1]`; files are 8-bit RGB.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Tensor;
use image::{ImageBuffer, Rgb, RgbImage};
use ndarray::IxDyn;
use std::path::Path;

/// Map a `[-1,1]` tensor to an 8-bit RGB image.
pub fn tensor_to_rgb8<S: Scalar>(img: &Tensor<S>) -> RgbImage {
    let sh = img.shape();
    assert_eq!(sh.len(), 3, "expected [C, H, W], got {sh:?}");
    assert_eq!(sh[0], 3, "expected 3 channels, got {}", sh[0]);
    let (h, w) = (sh[1], sh[2]);
    ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| {
            let v = img[[c, y as usize, x as usize]].to_f64_();
            ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
        };
        Rgb([px(0), px(1), px(2)])
    })
}

/// Decode an 8-bit RGB image into a `[-1,1]` tensor.
pub fn rgb8_to_tensor<S: Scalar>(img: &RgbImage) -> Tensor<S> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Tensor::zeros(IxDyn(&[3, h, w]));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[c, y as usize, x as usize]] = S::from_f64(px.0[c] as f64 / 127.5 - 1.0);
        }
    }
    out
}

pub fn save_png<S: Scalar>(path: &Path, img: &Tensor<S>) -> Result<()> {
    tensor_to_rgb8(img)
        .save(path)
        .map_err(|e| Error::Image { path: path.to_path_buf(), reason: e.to_string() })
}

/// Decode any supported image file into RGB, `[-1,1]`, `[3, H, W]`.
pub fn load_image<S: Scalar>(path: &Path) -> Result<Tensor<S>> {
    let img = image::open(path)
        .map_err(|e| Error::Image { path: path.to_path_buf(), reason: e.to_string() })?;
    Ok(rgb8_to_tensor(&img.to_rgb8()))
}

/// Tile equally sized images row-major into a grid with `cols` columns.
pub fn grid<S: Scalar>(images: &[Tensor<S>], cols: usize) -> Tensor<S> {
    assert!(!images.is_empty() && cols > 0, "grid needs images and a positive column count");
    let sh = images[0].shape().to_vec();
    assert!(
        images.iter().all(|im| im.shape() == sh.as_slice()),
        "all grid cells must share one shape"
    );
    let (c, h, w) = (sh[0], sh[1], sh[2]);
    let rows = images.len().div_ceil(cols);
    let mut out = Tensor::from_elem(IxDyn(&[c, rows * h, cols * w]), S::from_f64(-1.0));
    for (i, im) in images.iter().enumerate() {
        let (r, col) = (i / cols, i % cols);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[[ch, r * h + y, col * w + x]] = im[[ch, y, x]];
                }
            }
        }
    }
    out
}

/// Translation grid: top row holds the references, left column the
/// inputs, the top-left cell is blank, and cell (i, j) holds
/// `outputs[i][j]` = input i translated under reference j.
pub fn translation_grid<S: Scalar>(
    inputs: &[Tensor<S>],
    references: &[Tensor<S>],
    outputs: &[Vec<Tensor<S>>],
) -> Tensor<S> {
    assert_eq!(outputs.len(), inputs.len(), "one output row per input");
    assert!(
        outputs.iter().all(|row| row.len() == references.len()),
        "one output column per reference"
    );
    let sh = inputs[0].shape().to_vec();
    let blank = Tensor::from_elem(IxDyn(&sh), S::from_f64(-1.0));
    let mut cells = Vec::with_capacity((inputs.len() + 1) * (references.len() + 1));
    cells.push(blank);
    cells.extend(references.iter().cloned());
    for (inp, row) in inputs.iter().zip(outputs) {
        cells.push(inp.clone());
        cells.extend(row.iter().cloned());
    }
    grid(&cells, references.len() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn ramp(side: usize) -> Tensor<f32> {
        Tensor::from_shape_fn(IxDyn(&[3, side, side]), |ix| {
            (ix[0] as f32 + ix[1] as f32 + ix[2] as f32) / (2.0 + 2.0 * side as f32) * 2.0 - 1.0
        })
    }

    #[test]
    fn png_roundtrip_preserves_pixels_to_quantization() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = ramp(16);
        save_png(&path, &img).unwrap();
        let back: Tensor<f32> = load_image(&path).unwrap();
        assert_eq!(back.shape(), img.shape());
        let max_err = img
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err <= 1.0 / 127.5 + 1e-6, "8-bit roundtrip error {max_err} too large");
    }

    #[test]
    fn grid_places_cells_row_major() {
        let a = Tensor::from_elem(IxDyn(&[3, 2, 2]), 0.5f32);
        let b = Tensor::from_elem(IxDyn(&[3, 2, 2]), -0.5f32);
        let g = grid(&[a, b], 2);
        assert_eq!(g.shape(), &[3, 2, 4]);
        assert_eq!(g[[0, 0, 0]], 0.5);
        assert_eq!(g[[0, 0, 2]], -0.5);
    }

    #[test]
    fn translation_grid_shape_contract() {
        let cell = || ramp(4);
        let inputs = vec![cell(), cell()];
        let refs = vec![cell(), cell(), cell()];
        let outputs = vec![vec![cell(), cell(), cell()], vec![cell(), cell(), cell()]];
        let g = translation_grid(&inputs, &refs, &outputs);
        assert_eq!(g.shape(), &[3, 3 * 4, 4 * 4], "(n+1) rows x (m+1) cols of cells");
    }

    #[test]
    fn missing_file_is_an_image_error() {
        let err = load_image::<f32>(Path::new("/nonexistent/zz.png")).unwrap_err();
        assert!(matches!(err, Error::Image { .. }));
    }
}
