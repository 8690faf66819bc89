//! Synthetic "color-is-style, shape-is-structure" dataset: geometric
//! figures whose identity/position/orientation is the structure and whose
//! fill hue class is the style. Ships with the masks and the mean-color
//! oracle used for desk-scale verification.

use crate::augmentation::{hsv_to_rgb, rgb_to_hsv};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream, StreamTag};
use crate::scalar::Scalar;
use crate::vis;
use crate::Tensor;
use ndarray::IxDyn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Background luminance in `[-1,1]`; everything brighter is foreground.
pub const BACKGROUND: f64 = -0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticStyleSpec {
    pub num_images: usize,
    pub resolution: usize,
    pub num_styles: usize,
    pub structure_generator: String,
    pub style_generator: String,
    pub seed: u64,
}

impl Default for SyntheticStyleSpec {
    fn default() -> Self {
        SyntheticStyleSpec {
            num_images: 400,
            resolution: 64,
            num_styles: 2,
            structure_generator: "shapes".into(),
            style_generator: "hue".into(),
            seed: 0,
        }
    }
}

impl SyntheticStyleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_styles < 2 {
            return Err(Error::Config(format!(
                "num_styles {} must be at least 2",
                self.num_styles
            )));
        }
        if self.num_images == 0 {
            return Err(Error::Config("num_images must be positive".into()));
        }
        if self.resolution < 16 {
            return Err(Error::Config(format!(
                "synthetic resolution {} is too small",
                self.resolution
            )));
        }
        if self.structure_generator != "shapes" {
            return Err(Error::Config(format!(
                "unknown structure_generator {:?} (available: \"shapes\")",
                self.structure_generator
            )));
        }
        if self.style_generator != "hue" {
            return Err(Error::Config(format!(
                "unknown style_generator {:?} (available: \"hue\")",
                self.style_generator
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Shape {
    Ellipse,
    Box,
    Triangle,
}

struct Figure {
    shape: Shape,
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl Figure {
    /// Coverage of the figure at (x, y), supersampled 2×2.
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let mut hits = 0;
        for dy in [-0.25, 0.25] {
            for dx in [-0.25, 0.25] {
                if self.contains(x + dx, y + dy) {
                    hits += 1;
                }
            }
        }
        hits as f64 / 4.0
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.theta.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = cos * dx + sin * dy;
        let v = -sin * dx + cos * dy;
        match self.shape {
            Shape::Ellipse => (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0,
            Shape::Box => u.abs() <= self.a && v.abs() <= self.b,
            Shape::Triangle => {
                // Isoceles triangle: apex up, base down, in local coords.
                let (ax, ay) = (0.0, -self.b);
                let (bx, by) = (-self.a, self.b);
                let (cx2, cy2) = (self.a, self.b);
                let sign =
                    |x1: f64, y1: f64, x2: f64, y2: f64| (u - x2) * (y1 - y2) - (x1 - x2) * (v - y2);
                let d1 = sign(ax, ay, bx, by);
                let d2 = sign(bx, by, cx2, cy2);
                let d3 = sign(cx2, cy2, ax, ay);
                let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                !(neg && pos)
            }
        }
    }
}

fn style_hue(class: usize, num_styles: usize) -> f64 {
    class as f64 / num_styles as f64
}

/// Render one image: shape parameters (structure) and fill color (style)
/// are drawn from the per-image stream; the style class is fixed by the
/// caller so labels are exactly balanced.
fn render<S: Scalar>(spec: &SyntheticStyleSpec, index: usize, class: usize) -> Tensor<S> {
    let mut rng = stream(spec.seed, StreamTag::Synthetic, index as u64);
    let r = spec.resolution as f64;
    let figure = Figure {
        shape: match rng.gen_range(0..3) {
            0 => Shape::Ellipse,
            1 => Shape::Box,
            _ => Shape::Triangle,
        },
        cx: r * (0.5 + rng.gen_range(-0.15..=0.15)),
        cy: r * (0.5 + rng.gen_range(-0.15..=0.15)),
        a: r * rng.gen_range(0.22..=0.38),
        b: r * rng.gen_range(0.22..=0.38),
        theta: rng.gen_range(0.0..std::f64::consts::TAU),
    };
    let hue = style_hue(class, spec.num_styles) + rng.gen_range(-10.0..=10.0) / 360.0;
    let sat = rng.gen_range(0.75..=0.95);
    let val = rng.gen_range(0.8..=1.0);
    let (fr, fg, fb) = hsv_to_rgb(hue, sat, val);
    let fg_rgb = [fr * 2.0 - 1.0, fg * 2.0 - 1.0, fb * 2.0 - 1.0];

    let res = spec.resolution;
    let mut img = Tensor::from_elem(IxDyn(&[3, res, res]), S::from_f64(BACKGROUND));
    for y in 0..res {
        for x in 0..res {
            let c = figure.coverage(x as f64 + 0.5, y as f64 + 0.5);
            if c > 0.0 {
                for ch in 0..3 {
                    let v = BACKGROUND * (1.0 - c) + fg_rgb[ch] * c;
                    img[[ch, y, x]] = S::from_f64(v);
                }
            }
        }
    }
    img
}

/// Generate the dataset in memory with exactly balanced style labels
/// (class = index mod num_styles).
pub fn make_synthetic<S: Scalar>(spec: &SyntheticStyleSpec) -> Result<Dataset<S>> {
    spec.validate()?;
    let mut images = Vec::with_capacity(spec.num_images);
    let mut labels = Vec::with_capacity(spec.num_images);
    let mut paths = Vec::with_capacity(spec.num_images);
    for i in 0..spec.num_images {
        let class = i % spec.num_styles;
        images.push(render::<S>(spec, i, class));
        labels.push(class);
        paths.push(PathBuf::from(format!("synthetic_{i:05}.png")));
    }
    Ok(Dataset { images, paths, labels: Some(labels), resolution: spec.resolution })
}

/// Write the dataset as PNGs plus a `labels.csv`, loadable by the regular
/// dataset pipeline.
pub fn write_synthetic_dataset<S: Scalar>(spec: &SyntheticStyleSpec, dir: &Path) -> Result<PathBuf> {
    let ds = make_synthetic::<S>(spec)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::new();
    for (i, img) in ds.images.iter().enumerate() {
        let name = format!("synthetic_{i:05}.png");
        vis::save_png(&dir.join(&name), img)?;
        csv.push_str(&format!("{name},style{}\n", ds.labels.as_ref().unwrap()[i]));
    }
    let label_path = dir.join("labels.csv");
    std::fs::write(&label_path, csv).map_err(|e| Error::io(&label_path, e))?;
    Ok(label_path)
}

/// Foreground mask: 1 where any channel rises above the background, as a
/// `[H, W]` tensor of 0/1.
pub fn foreground_mask<S: Scalar>(img: &Tensor<S>) -> Tensor<f64> {
    let sh = img.shape();
    assert_eq!(sh.len(), 3, "mask expects [C, H, W]");
    let (h, w) = (sh[1], sh[2]);
    Tensor::from_shape_fn(IxDyn(&[h, w]), |ix| {
        let m = (0..sh[0])
            .map(|c| img[[c, ix[0], ix[1]]].to_f64_())
            .fold(f64::NEG_INFINITY, f64::max);
        if m > 0.0 {
            1.0
        } else {
            0.0
        }
    })
}

/// Intersection-over-union of two 0/1 masks; two empty masks count as a
/// perfect match.
pub fn mask_iou(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape(), "IoU masks must share a shape");
    let mut inter = 0usize;
    let mut union = 0usize;
    for (x, y) in a.iter().zip(b.iter()) {
        let (x, y) = (*x > 0.5, *y > 0.5);
        if x && y {
            inter += 1;
        }
        if x || y {
            union += 1;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Classifies an image by the hue of its mean foreground color, nearest
/// (circularly) to one of the K style hues. Achieves 100% on clean
/// synthetic data, making it the desk-scale translation-accuracy oracle.
#[derive(Debug, Clone)]
pub struct MeanColorOracle {
    hues: Vec<f64>,
}

impl MeanColorOracle {
    pub fn new(num_styles: usize) -> Self {
        assert!(num_styles >= 2, "oracle needs at least two classes");
        MeanColorOracle { hues: (0..num_styles).map(|c| style_hue(c, num_styles)).collect() }
    }

    pub fn num_classes(&self) -> usize {
        self.hues.len()
    }

    pub fn classify<S: Scalar>(&self, img: &Tensor<S>) -> usize {
        let mask = foreground_mask(img);
        let sh = img.shape();
        let mut sums = [0.0f64; 3];
        let mut count = 0usize;
        for y in 0..sh[1] {
            for x in 0..sh[2] {
                if mask[[y, x]] > 0.5 {
                    for (c, sum) in sums.iter_mut().enumerate() {
                        *sum += (img[[c, y, x]].to_f64_() + 1.0) / 2.0;
                    }
                    count += 1;
                }
            }
        }
        if count == 0 {
            // No foreground: fall back to the whole image.
            for y in 0..sh[1] {
                for x in 0..sh[2] {
                    for (c, sum) in sums.iter_mut().enumerate() {
                        *sum += (img[[c, y, x]].to_f64_() + 1.0) / 2.0;
                    }
                    count += 1;
                }
            }
        }
        let n = count as f64;
        let (h, _, _) = rgb_to_hsv(sums[0] / n, sums[1] / n, sums[2] / n);
        let dist = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(1.0);
            d.min(1.0 - d)
        };
        (0..self.hues.len())
            .min_by(|&i, &j| {
                dist(h, self.hues[i])
                    .partial_cmp(&dist(h, self.hues[j]))
                    .unwrap()
                    .then(i.cmp(&j))
            })
            .unwrap()
    }
}
