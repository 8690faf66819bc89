//! Loss terms and their weighted assembly: non-saturating adversarial
//! losses for both players, the lazy R1 gradient penalty (exact double
//! backward, no finite-difference approximation), and the cycle
//! consistency term.

use crate::autograd::{backward, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Scalar weights of the full objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_ct_d: f64,
    pub lambda_ct_g: f64,
    pub r1_gamma: f64,
    pub r1_interval: u64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cyc: 1.0,
            lambda_ct_d: 0.1,
            lambda_ct_g: 0.1,
            r1_gamma: 1.0,
            r1_interval: 16,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_ct_d", self.lambda_ct_d),
            ("lambda_ct_g", self.lambda_ct_g),
            ("r1_gamma", self.r1_gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} {v} must be finite and >= 0")));
            }
        }
        if self.r1_interval == 0 {
            return Err(Error::Config("r1_interval must be at least 1".into()));
        }
        Ok(())
    }
}

/// Discriminator adversarial loss, non-saturating form:
/// mean softplus(−real) + mean softplus(fake).
pub fn adv_loss_d<S: Scalar>(real_logits: &Var<S>, fake_logits: &Var<S>) -> Var<S> {
    real_logits.neg().softplus().mean_all().add(&fake_logits.softplus().mean_all())
}

/// Generator adversarial loss, non-saturating form: mean softplus(−fake).
pub fn adv_loss_g<S: Scalar>(fake_logits: &Var<S>) -> Var<S> {
    fake_logits.neg().softplus().mean_all()
}

/// R1 gradient penalty: (γ/2)·E_x[ ‖∇_x D_adv(x)‖² ] with the squared
/// norm summed per image. `x_real` must be a tracked leaf so the input
/// gradient exists in the graph; the result stays differentiable w.r.t.
/// the discriminator parameters (double backward).
///
/// Lazy scheduling (every `r1_interval` steps, scaled by the interval) is
/// the caller's responsibility.
pub fn r1_penalty<S: Scalar, F>(d_adv: F, x_real: &Var<S>, gamma: f64) -> Var<S>
where
    F: Fn(&Var<S>) -> Var<S>,
{
    assert!(x_real.tracked(), "R1 needs a tracked input leaf to differentiate against");
    let logits = d_adv(x_real);
    let grads = backward(&logits.sum_all());
    let gx = grads
        .get(x_real)
        .expect("adversarial head must depend on its input")
        .clone();
    let ndim = gx.shape().len();
    let per_image_axes: Vec<usize> = (1..ndim).collect();
    gx.sqr()
        .sum_axes(&per_image_axes, false)
        .mean_all()
        .scale(S::from_f64(gamma / 2.0))
}

/// Mean absolute difference over all elements.
pub fn cycle_loss<S: Scalar>(x_o: &Var<S>, x_cyc: &Var<S>) -> Result<Var<S>> {
    if x_o.shape() != x_cyc.shape() {
        return Err(Error::Shape {
            op: "cycle_loss",
            details: format!("{:?} vs {:?}", x_o.shape(), x_cyc.shape()),
        });
    }
    Ok(x_o.sub(x_cyc).abs().mean_all())
}

/// L_D = adv + λ_ct^D·ct (+ an already-scheduled R1 term).
pub fn total_d_loss<S: Scalar>(
    adv: &Var<S>,
    ct_d: &Var<S>,
    r1_term: Option<&Var<S>>,
    w: &LossWeights,
) -> Var<S> {
    let mut total = adv.add(&ct_d.scale(S::from_f64(w.lambda_ct_d)));
    if let Some(r1) = r1_term {
        total = total.add(r1);
    }
    total
}

/// L_{G,E} = adv + λ_cyc·cyc + λ_ct^G·ct.
pub fn total_ge_loss<S: Scalar>(
    adv: &Var<S>,
    cyc: &Var<S>,
    ct_g: &Var<S>,
    w: &LossWeights,
) -> Var<S> {
    adv.add(&cyc.scale(S::from_f64(w.lambda_cyc)))
        .add(&ct_g.scale(S::from_f64(w.lambda_ct_g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Var;
    use crate::rng::{stream, StreamTag};
    use crate::Tensor;
    use ndarray::IxDyn;
    use rand::Rng;

    fn logits(vals: &[f64]) -> Var<f64> {
        Var::leaf(Tensor::from_shape_vec(IxDyn(&[vals.len(), 1]), vals.to_vec()).unwrap())
    }

    #[test]
    fn balanced_logits_give_two_ln_two() {
        let l = adv_loss_d(&logits(&[0.0, 0.0]), &logits(&[0.0, 0.0]));
        assert!((l.scalar_value() - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_drives_loss_to_zero() {
        let l = adv_loss_d(&logits(&[40.0]), &logits(&[-40.0]));
        assert!(l.scalar_value() < 1e-12, "got {}", l.scalar_value());
        let g = adv_loss_g(&logits(&[40.0]));
        assert!(g.scalar_value() < 1e-12, "fooled-discriminator limit violated");
    }

    #[test]
    fn generator_loss_equals_negative_log_sigmoid() {
        let mut rng = stream(1, StreamTag::Init, 0);
        let f: Var<f64> = Var::leaf(Tensor::from_shape_simple_fn(IxDyn(&[6, 1]), || {
            rng.gen_range(-3.0..=3.0)
        }));
        let a = adv_loss_g(&f).scalar_value();
        let b = f.sigmoid().ln().neg().mean_all().scalar_value();
        assert!((a - b).abs() < 1e-7, "softplus(-x) must equal -log sigmoid(x): {a} vs {b}");
        assert!((adv_loss_g(&logits(&[0.0])).scalar_value() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn adversarial_gradients_match_finite_differences() {
        let mut rng = stream(2, StreamTag::Init, 0);
        let base: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let fake_base: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let real = logits(&base);
        let fake = logits(&fake_base);
        let grads = backward(&adv_loss_d(&real, &fake));
        let gr = grads.value_of(&real).unwrap();
        let gf = grads.value_of(&fake).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let eval = |dr: f64, df: f64| {
                let mut r2 = base.clone();
                let mut f2 = fake_base.clone();
                r2[i] += dr;
                f2[i] += df;
                adv_loss_d(&logits(&r2), &logits(&f2)).scalar_value()
            };
            let fd_r = (eval(h, 0.0) - eval(-h, 0.0)) / (2.0 * h);
            let fd_f = (eval(0.0, h) - eval(0.0, -h)) / (2.0 * h);
            assert!(
                (gr[[i, 0]] - fd_r).abs() / fd_r.abs().max(1e-8) < 1e-6,
                "real-logit gradient {} vs fd {fd_r}",
                gr[[i, 0]]
            );
            assert!(
                (gf[[i, 0]] - fd_f).abs() / fd_f.abs().max(1e-8) < 1e-6,
                "fake-logit gradient {} vs fd {fd_f}",
                gf[[i, 0]]
            );
        }
    }

    fn random_image(b: usize, side: usize, seed: u64) -> Var<f64> {
        let mut rng = stream(seed, StreamTag::Batch, 0);
        Var::leaf(Tensor::from_shape_simple_fn(IxDyn(&[b, 3, side, side]), || {
            rng.gen_range(-1.0..=1.0)
        }))
    }

    #[test]
    fn linear_discriminator_gives_half_gamma_weight_norm() {
        let mut rng = stream(3, StreamTag::Init, 0);
        let w = Var::constant(Tensor::from_shape_simple_fn(IxDyn(&[1, 3, 4, 4]), || {
            rng.gen_range(-1.0..=1.0)
        }));
        let x = random_image(5, 4, 4);
        let lin = |x: &Var<f64>| x.mul(&w).sum_axes(&[1, 2, 3], true);
        let p = r1_penalty(lin, &x, 2.0).scalar_value();
        let w_norm_sq: f64 = w.value().iter().map(|v| v * v).sum();
        assert!(
            (p - w_norm_sq).abs() < 1e-10,
            "linear D penalty must be (γ/2)·‖w‖²: {p} vs {w_norm_sq}"
        );
    }

    #[test]
    fn constant_discriminator_has_zero_penalty() {
        let x = random_image(3, 4, 5);
        let zero_w = Var::constant(Tensor::zeros(IxDyn(&[1, 3, 4, 4])));
        let flat = |x: &Var<f64>| x.mul(&zero_w).sum_axes(&[1, 2, 3], true);
        let p = r1_penalty(flat, &x, 10.0).scalar_value();
        assert_eq!(p, 0.0, "zero gradient field must give exactly zero penalty");
    }

    #[test]
    fn penalty_is_linear_in_gamma_and_quadratic_in_scale() {
        let mut rng = stream(6, StreamTag::Init, 0);
        let w = Var::constant(Tensor::from_shape_simple_fn(IxDyn(&[1, 3, 4, 4]), || {
            rng.gen_range(-1.0..=1.0)
        }));
        let x = random_image(2, 4, 7);
        let lin = |x: &Var<f64>| x.mul(&w).sum_axes(&[1, 2, 3], true).tanh();
        let p1 = r1_penalty(&lin, &x, 1.0).scalar_value();
        let p10 = r1_penalty(&lin, &x, 10.0).scalar_value();
        assert_eq!(p10, 10.0 * p1, "γ scaling must be exact");
        let scaled = |x: &Var<f64>| lin(x).scale(3.0);
        let p_scaled = r1_penalty(scaled, &x, 1.0).scalar_value();
        assert!(
            (p_scaled / p1 - 9.0).abs() < 1e-9,
            "scaling D by 3 must scale the penalty by 9, ratio {}",
            p_scaled / p1
        );
    }

    #[test]
    fn r1_parameter_gradient_matches_finite_differences_on_miniature_net() {
        use crate::networks::{miniature_plan, Discriminator};
        let plan = miniature_plan(8, 2, 4, 4, 4);
        let d = Discriminator::<f64>::new(&plan, &mut stream(8, StreamTag::Init, 0)).unwrap();
        let x = random_image(2, 8, 9);
        let penalty = r1_penalty(|x| d.logit(x), &x, 1.0);
        let grads = backward(&penalty);
        let param = &d.blocks[0].conv1.w;
        let g = grads.value_of(param).expect("penalty must differentiate into D params");
        let h = 1e-5;
        for &idx in &[0usize, 7, 23] {
            let flat = param.value().as_slice().unwrap().to_vec();
            let shape = param.shape();
            let eval = |delta: f64| {
                let mut v = flat.clone();
                v[idx] += delta;
                param.set_value(Tensor::from_shape_vec(IxDyn(&shape), v).unwrap());
                let out = r1_penalty(|x| d.logit(x), &x, 1.0).scalar_value();
                param.set_value(Tensor::from_shape_vec(IxDyn(&shape), flat.clone()).unwrap());
                out
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let got = g.as_slice().unwrap()[idx];
            assert!(
                (got - fd).abs() / fd.abs().max(1e-8) < 1e-4,
                "second-order R1 gradient at {idx}: {got} vs fd {fd}"
            );
        }
    }

    #[test]
    fn cycle_loss_examples() {
        let a = random_image(1, 4, 10);
        assert_eq!(cycle_loss(&a, &a).unwrap().scalar_value(), 0.0);

        let zero: Var<f64> = Var::constant(Tensor::zeros(IxDyn(&[1, 3, 128, 128])));
        let mut one_off = Tensor::<f64>::zeros(IxDyn(&[1, 3, 128, 128]));
        one_off[[0, 1, 64, 64]] = 0.6;
        let l = cycle_loss(&zero, &Var::constant(one_off)).unwrap().scalar_value();
        assert!((l - 0.6 / 49152.0).abs() < 1e-15, "got {l}");

        let b = random_image(1, 4, 11);
        let ab = cycle_loss(&a, &b).unwrap().scalar_value();
        let ba = cycle_loss(&b, &a).unwrap().scalar_value();
        assert_eq!(ab, ba, "L1 must be symmetric");

        let mismatched = random_image(2, 4, 12);
        assert!(cycle_loss(&a, &mismatched).is_err(), "shape mismatch must error");
    }

    #[test]
    fn cycle_loss_scales_linearly_in_the_difference() {
        let a = random_image(2, 4, 13);
        let d = random_image(2, 4, 14);
        let b1 = a.add(&d);
        let b2 = a.add(&d.scale(2.0));
        let l1 = cycle_loss(&a, &b1).unwrap().scalar_value();
        let l2 = cycle_loss(&a, &b2).unwrap().scalar_value();
        assert!((l2 / l1 - 2.0).abs() < 1e-12, "doubling the gap must double the loss");
    }

    #[test]
    fn totals_follow_the_weighted_sums() {
        let w = LossWeights::default();
        let adv = Var::scalar(1.0f64);
        let ct = Var::scalar(2.0f64);
        let d_total = total_d_loss(&adv, &ct, None, &w).scalar_value();
        assert!((d_total - 1.2).abs() < 1e-12, "1.0 + 0.1·2.0 = 1.2, got {d_total}");

        let parts = total_ge_loss(&Var::scalar(0.5f64), &Var::scalar(0.2f64), &Var::scalar(3.0f64), &w);
        assert!((parts.scalar_value() - 1.0).abs() < 1e-12, "0.5 + 0.2 + 0.3 = 1.0");

        let zeroed = LossWeights { lambda_cyc: 0.0, lambda_ct_d: 0.0, lambda_ct_g: 0.0, ..w };
        let pure = total_ge_loss(&Var::scalar(0.7f64), &Var::scalar(9.0f64), &Var::scalar(9.0f64), &zeroed);
        assert_eq!(pure.scalar_value(), 0.7, "zero weights reduce to the adversarial term");

        let with_r1 = total_d_loss(&adv, &ct, Some(&Var::scalar(0.25f64)), &w).scalar_value();
        assert!((with_r1 - 1.45).abs() < 1e-12, "R1 term must add linearly");
    }

    #[test]
    fn weights_validation_rejects_negatives_and_zero_interval() {
        LossWeights::default().validate().unwrap();
        let bad = LossWeights { lambda_cyc: -0.1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = LossWeights { r1_interval: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = LossWeights { r1_gamma: f64::NAN, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
