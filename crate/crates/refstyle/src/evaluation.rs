//! Metrics and latent analyses: Fréchet distance over frozen features,
//! class-wise mFID, oracle translation accuracy, style similarity search
//! and style-code interpolation.

use crate::autograd::Var;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::networks::{Generator, StyleEncoder};
use crate::nn::Conv2d;
use crate::rng::{stream, StreamTag};
use crate::scalar::Scalar;
use crate::synthetic::MeanColorOracle;
use crate::Tensor;
use nalgebra::DMatrix;
use ndarray::{Axis, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A fixed, deterministic map from images to feature vectors. Full-scale
/// FID plugs in a pretrained extractor; desk-scale runs use
/// [`RandomConvFeatures`]. Only the Fréchet arithmetic is ours to verify.
pub trait FeatureExtractor<S: Scalar> {
    fn name(&self) -> &str;
    /// Side length the extractor expects its (square) inputs to have.
    fn resolution(&self) -> usize;
    /// Feature dimension d.
    fn dim(&self) -> usize;
    /// Map a `[B, 3, r, r]` batch to `[B, d]` features.
    fn features(&self, batch: &Tensor<S>) -> Tensor<S>;
}

/// Three frozen random convolutions with leaky-ReLU and 2x average
/// pooling; features are per-channel spatial mean and standard deviation
/// of the last map. Random filters are a serviceable stand-in for a
/// pretrained backbone at desk scale: they mix color and local structure,
/// and the weights never move.
pub struct RandomConvFeatures<S: Scalar> {
    convs: Vec<Conv2d<S>>,
    resolution: usize,
    dim: usize,
    name: String,
}

impl<S: Scalar> RandomConvFeatures<S> {
    pub fn new(resolution: usize, seed: u64) -> Result<Self> {
        if resolution % 8 != 0 || resolution < 16 {
            return Err(Error::Config(format!(
                "feature extractor resolution {resolution} must be a multiple of 8 and at least 16"
            )));
        }
        let mut rng = stream(seed, StreamTag::Eval, u64::MAX);
        let widths = [3usize, 8, 16, 32];
        let convs: Vec<Conv2d<S>> = widths
            .windows(2)
            .map(|w| Conv2d::new(w[0], w[1], 3, 1, true, &mut rng).frozen())
            .collect();
        let dim = 2 * widths[widths.len() - 1];
        Ok(RandomConvFeatures { convs, resolution, dim, name: format!("random-conv[{seed}]") })
    }
}

impl<S: Scalar> FeatureExtractor<S> for RandomConvFeatures<S> {
    fn name(&self) -> &str {
        &self.name
    }

    fn resolution(&self) -> usize {
        self.resolution
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, batch: &Tensor<S>) -> Tensor<S> {
        let sh = batch.shape();
        assert_eq!(sh.len(), 4, "features expect [B, 3, r, r]");
        assert_eq!(
            (sh[2], sh[3]),
            (self.resolution, self.resolution),
            "input resolution does not match the extractor's {}",
            self.resolution
        );
        let mut x = Var::constant(batch.clone());
        for conv in &self.convs {
            x = conv.forward(&x).lrelu(S::from_f64(0.2)).avg_pool2();
        }
        let map = x.value();
        let (b, c) = (map.shape()[0], map.shape()[1]);
        let hw = (map.shape()[2] * map.shape()[3]) as f64;
        let mut out = Tensor::zeros(IxDyn(&[b, 2 * c]));
        for bi in 0..b {
            for ci in 0..c {
                let cell = map.index_axis(Axis(0), bi);
                let cell = cell.index_axis(Axis(0), ci);
                let mean = cell.iter().map(|v| v.to_f64_()).sum::<f64>() / hw;
                let var = cell.iter().map(|v| (v.to_f64_() - mean).powi(2)).sum::<f64>() / hw;
                out[[bi, ci]] = S::from_f64(mean);
                out[[bi, c + ci]] = S::from_f64(var.max(0.0).sqrt());
            }
        }
        out
    }
}

/// A fixed map from images to a class prediction, used to score whether a
/// translation actually adopted the reference's style.
pub trait OracleClassifier<S: Scalar> {
    fn num_classes(&self) -> usize;
    fn classify(&self, image: &Tensor<S>) -> usize;
}

impl<S: Scalar> OracleClassifier<S> for MeanColorOracle {
    fn num_classes(&self) -> usize {
        MeanColorOracle::num_classes(self)
    }

    fn classify(&self, image: &Tensor<S>) -> usize {
        MeanColorOracle::classify(self, image)
    }
}

/// Unbiased mean and covariance of a `[N, d]` feature matrix, in f64.
pub fn feature_moments<S: Scalar>(features: &Tensor<S>) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let sh = features.shape();
    if sh.len() != 2 {
        return Err(Error::Shape {
            op: "feature_moments",
            details: format!("expected [N, d], got {sh:?}"),
        });
    }
    let (n, d) = (sh[0], sh[1]);
    if n < 2 {
        return Err(Error::Data(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let x: Vec<f64> = features.iter().map(|v| v.to_f64_()).collect();
    let mut mu = Tensor::<f64>::zeros(IxDyn(&[d]));
    for row in 0..n {
        for col in 0..d {
            mu[[col]] += x[row * d + col];
        }
    }
    mu.mapv_inplace(|v| v / n as f64);
    let mut sigma = Tensor::<f64>::zeros(IxDyn(&[d, d]));
    for row in 0..n {
        for i in 0..d {
            let di = x[row * d + i] - mu[[i]];
            for j in i..d {
                sigma[[i, j]] += di * (x[row * d + j] - mu[[j]]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = sigma[[i, j]] / denom;
            sigma[[i, j]] = v;
            sigma[[j, i]] = v;
        }
    }
    Ok((mu, sigma))
}

/// Symmetric PSD square root via eigendecomposition, clamping small
/// negative eigenvalues produced by round-off.
fn sqrtm_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

fn to_dmatrix(t: &Tensor<f64>) -> DMatrix<f64> {
    let sh = t.shape();
    DMatrix::from_fn(sh[0], sh[1], |i, j| t[[i, j]])
}

/// Fréchet distance between two Gaussians:
/// ‖μ1−μ2‖² + tr(Σ1 + Σ2 − 2(Σ1Σ2)^{1/2}).
///
/// The cross term uses the similarity-invariant form
/// tr((Σ2^{1/2} Σ1 Σ2^{1/2})^{1/2}) so every square root is of a symmetric
/// PSD matrix; tiny negative eigenvalues are clamped and the final value
/// floored at zero, since the exact distance is non-negative.
pub fn frechet_distance(
    mu1: &Tensor<f64>,
    sigma1: &Tensor<f64>,
    mu2: &Tensor<f64>,
    sigma2: &Tensor<f64>,
) -> Result<f64> {
    let d = mu1.shape().to_vec();
    if d.len() != 1
        || mu2.shape() != d.as_slice()
        || sigma1.shape() != [d[0], d[0]]
        || sigma2.shape() != [d[0], d[0]]
    {
        return Err(Error::Shape {
            op: "frechet_distance",
            details: format!(
                "μ/Σ dimensions disagree: {:?}, {:?}, {:?}, {:?}",
                mu1.shape(),
                sigma1.shape(),
                mu2.shape(),
                sigma2.shape()
            ),
        });
    }
    let mean_sq: f64 = mu1.iter().zip(mu2.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let s1 = to_dmatrix(sigma1);
    let s2 = to_dmatrix(sigma2);
    let root2 = sqrtm_psd(&s2);
    let inner = &root2 * &s1 * &root2;
    let cross = {
        let sym = (&inner + inner.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum::<f64>()
    };
    let trace = s1.trace() + s2.trace() - 2.0 * cross;
    Ok((mean_sq + trace).max(0.0))
}

/// Knobs for [`evaluate_translation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// References drawn (with replacement) per test input.
    pub references_per_input: usize,
    /// Seed for the reference draw; fix it to compare models on the same
    /// reference set.
    pub seed: u64,
    /// Generation/extraction batch size.
    pub batch: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { references_per_input: 10, seed: 0, batch: 16 }
    }
}

/// Per-reference-class FID entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFid {
    pub class: usize,
    pub fid: f64,
}

/// Everything `evaluate` reports. Serializes to the machine-readable
/// metrics file; `Display` renders the human-readable version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    pub extractor: String,
    pub num_inputs: usize,
    pub references_per_input: usize,
    pub seed: u64,
    pub fid: f64,
    pub mfid: Option<f64>,
    pub per_class_fid: Option<Vec<ClassFid>>,
    pub accuracy: Option<f64>,
}

impl std::fmt::Display for TranslationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "inputs:                {}", self.num_inputs)?;
        writeln!(f, "references per input:  {}", self.references_per_input)?;
        writeln!(f, "feature extractor:     {}", self.extractor)?;
        writeln!(f, "seed:                  {}", self.seed)?;
        writeln!(f, "FID:                   {:.6}", self.fid)?;
        if let Some(m) = self.mfid {
            writeln!(f, "mFID:                  {m:.6}")?;
        }
        if let Some(rows) = &self.per_class_fid {
            for row in rows {
                writeln!(f, "  FID[class {}]:        {:.6}", row.class, row.fid)?;
            }
        }
        if let Some(a) = self.accuracy {
            writeln!(f, "translation accuracy:  {:.4}", a)?;
        }
        Ok(())
    }
}

/// Translate every test input with `references_per_input` randomly drawn
/// references and score the outputs: FID against the real test images,
/// and — when the dataset carries labels — per-reference-class FID (mFID)
/// plus oracle accuracy (fraction of outputs classified as the
/// reference's class). The model is called as `(inputs, references) ->
/// outputs` on `[B, 3, r, r]` batches; pass EMA weights for reportable
/// numbers.
pub fn evaluate_translation<S: Scalar, M>(
    model: M,
    test: &Dataset<S>,
    oracle: Option<&dyn OracleClassifier<S>>,
    extractor: &dyn FeatureExtractor<S>,
    opts: &EvalOptions,
) -> Result<TranslationReport>
where
    M: Fn(&Tensor<S>, &Tensor<S>) -> Tensor<S>,
{
    let n = test.len();
    if n < 2 {
        return Err(Error::Data(format!(
            "evaluation needs at least 2 test images, got {n}"
        )));
    }
    if opts.references_per_input == 0 || opts.batch == 0 {
        return Err(Error::Config(
            "references_per_input and batch must be positive".into(),
        ));
    }
    if test.labels.is_some() && oracle.is_none() {
        return Err(Error::Config(
            "test set has class labels but no oracle classifier was provided; \
             accuracy and mFID need one"
        .into(),
        ));
    }

    // One fixed stream decides every reference pairing, so two models
    // evaluated with the same seed see the same reference images.
    let mut rng = stream(opts.seed, StreamTag::Eval, 0);
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| {
            (0..opts.references_per_input)
                .map(|_| (i, rng.gen_range(0..n)))
                .collect::<Vec<_>>()
        })
        .collect();

    let d = extractor.dim();
    let real_feats = features_of(test, &(0..n).collect::<Vec<_>>(), extractor, opts.batch);

    let mut out_feats = Tensor::<S>::zeros(IxDyn(&[pairs.len(), d]));
    let mut predictions: Vec<usize> = Vec::with_capacity(pairs.len());
    for (chunk_start, chunk) in pairs.chunks(opts.batch).enumerate().map(|(ci, c)| (ci * opts.batch, c)) {
        let inputs: Vec<usize> = chunk.iter().map(|p| p.0).collect();
        let refs: Vec<usize> = chunk.iter().map(|p| p.1).collect();
        let out = model(&test.batch(&inputs), &test.batch(&refs));
        assert_eq!(
            out.shape(),
            [chunk.len(), 3, test.resolution, test.resolution],
            "model returned a batch of the wrong shape"
        );
        let feats = extractor.features(&out);
        for (row, feat_row) in feats.axis_iter(Axis(0)).enumerate() {
            for col in 0..d {
                out_feats[[chunk_start + row, col]] = feat_row[[col]];
            }
        }
        if let Some(oracle) = oracle {
            for b in 0..chunk.len() {
                predictions.push(oracle.classify(&out.index_axis(Axis(0), b).to_owned()));
            }
        }
    }

    let (mu_r, sig_r) = feature_moments(&real_feats)?;
    let (mu_o, sig_o) = feature_moments(&out_feats)?;
    let fid = frechet_distance(&mu_o, &sig_o, &mu_r, &sig_r)?;

    let mut report = TranslationReport {
        extractor: extractor.name().to_string(),
        num_inputs: n,
        references_per_input: opts.references_per_input,
        seed: opts.seed,
        fid,
        mfid: None,
        per_class_fid: None,
        accuracy: None,
    };

    if let Some(labels) = &test.labels {
        let num_classes = test.num_classes().unwrap();
        let mut per_class = Vec::with_capacity(num_classes);
        for class in 0..num_classes {
            let real_rows: Vec<usize> =
                (0..n).filter(|&i| labels[i] == class).collect();
            let out_rows: Vec<usize> = pairs
                .iter()
                .enumerate()
                .filter(|(_, (_, r))| labels[*r] == class)
                .map(|(row, _)| row)
                .collect();
            let (mu_rc, sig_rc) = feature_moments(&select_rows(&real_feats, &real_rows))?;
            let (mu_oc, sig_oc) = feature_moments(&select_rows(&out_feats, &out_rows))?;
            per_class.push(ClassFid {
                class,
                fid: frechet_distance(&mu_oc, &sig_oc, &mu_rc, &sig_rc)?,
            });
        }
        report.mfid =
            Some(per_class.iter().map(|c| c.fid).sum::<f64>() / per_class.len() as f64);
        report.per_class_fid = Some(per_class);
        let hits = predictions
            .iter()
            .zip(&pairs)
            .filter(|(&pred, (_, r))| pred == labels[*r])
            .count();
        report.accuracy = Some(hits as f64 / pairs.len() as f64);
    }

    Ok(report)
}

fn features_of<S: Scalar>(
    ds: &Dataset<S>,
    indices: &[usize],
    extractor: &dyn FeatureExtractor<S>,
    batch: usize,
) -> Tensor<S> {
    let d = extractor.dim();
    let mut out = Tensor::<S>::zeros(IxDyn(&[indices.len(), d]));
    for (ci, chunk) in indices.chunks(batch).enumerate() {
        let feats = extractor.features(&ds.batch(chunk));
        for (row, feat_row) in feats.axis_iter(Axis(0)).enumerate() {
            for col in 0..d {
                out[[ci * batch + row, col]] = feat_row[[col]];
            }
        }
    }
    out
}

fn select_rows<S: Scalar>(feats: &Tensor<S>, rows: &[usize]) -> Tensor<S> {
    let d = feats.shape()[1];
    let mut out = Tensor::<S>::zeros(IxDyn(&[rows.len(), d]));
    for (i, &r) in rows.iter().enumerate() {
        for c in 0..d {
            out[[i, c]] = feats[[r, c]];
        }
    }
    out
}

/// One similarity-search result.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub index: usize,
    pub similarity: f64,
}

fn normalized_code_rows<S: Scalar>(codes: &Tensor<S>) -> Vec<Vec<f64>> {
    codes
        .axis_iter(Axis(0))
        .map(|row| {
            let v: Vec<f64> = row.iter().map(|x| x.to_f64_()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.into_iter().map(|x| x / norm).collect()
            } else {
                v
            }
        })
        .collect()
}

/// Rank `corpus` by cosine similarity of L2-normalized style codes to the
/// query, descending, ties broken by corpus index; returns at most `k`
/// hits (silently truncated to the corpus size).
pub fn similarity_search<S: Scalar>(
    query: &Tensor<S>,
    corpus: &[Tensor<S>],
    encoder: &StyleEncoder<S>,
    k: usize,
) -> Vec<SearchHit> {
    if corpus.is_empty() || k == 0 {
        return Vec::new();
    }
    let encode = |imgs: &[Tensor<S>]| -> Tensor<S> {
        let views: Vec<_> = imgs.iter().map(|t| t.view()).collect();
        let mut stacked = ndarray::stack(Axis(0), &views).expect("images must share a shape");
        if !stacked.is_standard_layout() {
            stacked = stacked.as_standard_layout().to_owned();
        }
        encoder.forward(&Var::constant(stacked.into_dyn())).value_clone()
    };
    let q = &normalized_code_rows(&encode(std::slice::from_ref(query)))[0];
    let mut hits: Vec<SearchHit> = Vec::with_capacity(corpus.len());
    for (ci, chunk) in corpus.chunks(16).enumerate() {
        for (j, code) in normalized_code_rows(&encode(chunk)).iter().enumerate() {
            let sim = code.iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
            hits.push(SearchHit { index: ci * 16 + j, similarity: sim });
        }
    }
    hits.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    hits.truncate(k);
    hits
}

/// `G(x_o, (1−α)·E(x_o) + α·E(x_r))` for `steps` evenly spaced α in
/// [0, 1]. The endpoint styles are the encoder outputs themselves (no
/// arithmetic), so frames 0 and steps−1 are bit-identical to direct
/// translation.
pub fn interpolate_styles<S: Scalar>(
    x_o: &Tensor<S>,
    x_r: &Tensor<S>,
    steps: usize,
    g: &Generator<S>,
    e: &StyleEncoder<S>,
) -> Result<Vec<Tensor<S>>> {
    if steps < 2 {
        return Err(Error::Config(format!(
            "interpolation needs at least 2 steps, got {steps}"
        )));
    }
    let batch_of = |img: &Tensor<S>| -> Var<S> {
        let mut sh = vec![1usize];
        sh.extend_from_slice(img.shape());
        Var::constant(crate::autograd::kernels::reshape(img, &sh))
    };
    let xo = batch_of(x_o);
    let s_o = e.forward(&xo).value_clone();
    let s_r = e.forward(&batch_of(x_r)).value_clone();
    let mut frames = Vec::with_capacity(steps);
    for i in 0..steps {
        let style = if i == 0 {
            s_o.clone()
        } else if i == steps - 1 {
            s_r.clone()
        } else {
            let alpha = i as f64 / (steps - 1) as f64;
            let mut mixed = s_o.clone();
            ndarray::Zip::from(&mut mixed).and(&s_r).for_each(|m, &r| {
                *m = S::from_f64((1.0 - alpha) * m.to_f64_() + alpha * r.to_f64_());
            });
            mixed
        };
        let out = g.forward(&xo, &Var::constant(style)).value_clone();
        frames.push(out.index_axis(Axis(0), 0).to_owned());
    }
    Ok(frames)
}

/// Translate one `[3, r, r]` input with one `[3, r, r]` reference.
pub fn translate_single<S: Scalar>(
    g: &Generator<S>,
    e: &StyleEncoder<S>,
    x_o: &Tensor<S>,
    x_r: &Tensor<S>,
) -> Tensor<S> {
    let xb = Var::constant(x_o.clone().insert_axis(Axis(0)));
    let rb = Var::constant(x_r.clone().insert_axis(Axis(0)));
    let style = e.forward(&rb);
    g.forward(&xb, &style).value_clone().index_axis(Axis(0), 0).to_owned()
}
