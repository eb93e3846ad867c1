use super::*;
use crate::networks::{build_discriminator, default_feature_extractor, Network};
use crate::tensor::gradcheck::grad_check;
use crate::tensor::{Shape, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn random(shape: Shape, seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn scalar(g: &Graph<f64>, v: Var) -> f64 {
    g.value(v).item()
}

#[test]
fn mse_values() {
    let g = Graph::new();
    let s = Shape::new(2, 1, 3, 3);
    let a = g.constant(Tensor::full(s, 1.0));
    let b = g.constant(Tensor::full(s, 3.0));
    assert_eq!(scalar(&g, mse_loss(&g, a, a).unwrap()), 0.0);
    assert_eq!(scalar(&g, mse_loss(&g, a, b).unwrap()), 4.0);
    let c = g.constant(Tensor::full(Shape::new(1, 1, 3, 3), 1.0));
    assert!(mse_loss(&g, a, c).is_err());
}

#[test]
fn mse_gradient_is_analytic() {
    let g = Graph::new();
    let hq = random(Shape::new(1, 1, 4, 4), 1, -1.0, 1.0);
    let rq = random(Shape::new(1, 1, 4, 4), 2, -1.0, 1.0);
    let h = g.constant(hq.clone());
    let r = g.leaf(rq.clone(), true);
    let l = mse_loss(&g, h, r).unwrap();
    let grads = g.backward(l).unwrap();
    for (i, gv) in grads.get(r).unwrap().data().iter().enumerate() {
        let want = 2.0 * (rq.data()[i] - hq.data()[i]) / 16.0;
        assert!((gv - want).abs() < 1e-15);
    }
}

#[test]
fn l1_values_and_zero_subgradient() {
    let g = Graph::new();
    let s = Shape::new(1, 1, 2, 2);
    let a = g.leaf(Tensor::full(s, 1.0), true);
    let b = g.constant(Tensor::full(s, 4.0));
    assert_eq!(scalar(&g, pixel_l1_loss(&g, b, a).unwrap()), 3.0);
    let same = pixel_l1_loss(&g, b, b).unwrap();
    assert_eq!(scalar(&g, same), 0.0);
    let c = g.leaf(Tensor::full(s, 4.0), true);
    let l = pixel_l1_loss(&g, b, c).unwrap();
    let grads = g.backward(l).unwrap();
    assert!(grads.get(c).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn ssim_identical_is_one() {
    let g = Graph::new();
    let x = g.constant(random(Shape::new(1, 1, 24, 24), 3, 0.0, 255.0));
    let map = ssim_map(&g, x, x, &SsimParams::evaluation()).unwrap();
    assert_eq!(g.shape(map), Shape::new(1, 1, 14, 14));
    assert!(g.value(map).data().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    let l = ssim_loss(&g, x, x, &SsimParams::evaluation()).unwrap();
    assert!((scalar(&g, l) + 1.0).abs() < 1e-12);
}

#[test]
fn ssim_constant_images_closed_form() {
    let p = SsimParams::evaluation();
    let g = Graph::new();
    let s = Shape::new(1, 1, 16, 16);
    let zero = g.constant(Tensor::zeros(s));
    let full = g.constant(Tensor::full(s, 255.0));
    let map = ssim_map(&g, zero, full, &p).unwrap();
    let want = (p.c1() * p.c2()) / ((255.0f64.powi(2) + p.c1()) * p.c2());
    assert!((want - 1.0e-4).abs() < 1e-6);
    for &v in g.value(map).data() {
        assert!((v - want).abs() < 1e-9 * want.max(1.0), "{v} vs {want}");
    }
}

#[test]
fn ssim_matches_direct_windows() {
    for seed in 0..5 {
        let p = SsimParams::evaluation();
        let a = random(Shape::new(1, 1, 32, 32), seed, 0.0, 255.0);
        let b = random(Shape::new(1, 1, 32, 32), seed + 100, 0.0, 255.0);
        let g = Graph::new();
        let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
        let map = ssim_map(&g, va, vb, &p).unwrap();
        let direct = ssim_map_direct(a.data(), b.data(), 32, 32, &p).unwrap();
        for (x, y) in g.value(map).data().iter().zip(&direct) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn ssim_rejects_oversized_window() {
    let g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(Shape::new(1, 1, 8, 8)));
    assert!(ssim_map(&g, x, x, &SsimParams::evaluation()).is_err());
    let p = SsimParams {
        window: Window::Uniform { size: 8 },
        ..SsimParams::loss()
    };
    assert!(ssim_map(&g, x, x, &p).is_ok());
}

#[test]
fn ssim_loss_rises_as_images_decorrelate() {
    let base = random(Shape::new(1, 1, 32, 32), 5, -1.0, 1.0);
    let mut last = -1.0 - 1e-12;
    for amp in [0.05, 0.2, 0.6, 1.5] {
        let noise = random(Shape::new(1, 1, 32, 32), 6, -amp, amp);
        let noisy = Tensor::from_vec(base.shape(), base.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect()).unwrap();
        let g = Graph::new();
        let (h, r) = (g.constant(base.clone()), g.constant(noisy));
        let l = scalar(&g, ssim_loss_normalized(&g, h, r).unwrap());
        assert!(l > last, "amp {amp}: {l} <= {last}");
        last = l;
    }
}

#[test]
fn gan_probability_losses() {
    let g = Graph::new();
    let s = Shape::new(4, 1, 1, 1);
    let p = |v: f64| g.constant(Tensor::full(s, v));
    let d = |r, f, sm| scalar(&g, discriminator_loss(&g, p(r), p(f), sm).unwrap());
    assert!((d(0.9, 0.1, 1.0) - 2.0 * -(0.9f64.ln())).abs() < 1e-12);
    assert!((d(0.9, 0.1, 1.0) - 0.2107).abs() < 1e-4);
    assert!((d(0.5, 0.5, 1.0) - 2.0 * 2f64.ln()).abs() < 1e-12);
    assert!(d(1.0, 0.0, 1.0) < 1e-6);
    let a = |f| scalar(&g, adversarial_loss(&g, p(f)).unwrap());
    assert!(a(1.0) < 1e-6);
    assert!((a(0.5) - 2f64.ln()).abs() < 1e-12);
    assert!((a((-1.0f64).exp()) - 1.0).abs() < 1e-12);
    assert!(a(0.0).is_finite());
}

#[test]
fn perceptual_with_identity_is_mse() {
    let g = Graph::new();
    let a = g.constant(random(Shape::new(1, 1, 8, 8), 1, -1.0, 1.0));
    let b = g.constant(random(Shape::new(1, 1, 8, 8), 2, -1.0, 1.0));
    let p = perceptual_loss(&g, a, b, &IdentityFeatures).unwrap();
    let m = mse_loss(&g, a, b).unwrap();
    assert_eq!(scalar(&g, p), scalar(&g, m));
    let phi = default_feature_extractor::<f64>(1).unwrap();
    let z = perceptual_loss(&g, a, a, &phi).unwrap();
    assert_eq!(scalar(&g, z), 0.0);
}

fn gan_fixture() -> (Network<f64>, Tensor<f64>, Tensor<f64>, Tensor<f64>) {
    let d = Network::<f64>::init(build_discriminator(1).unwrap(), 3);
    let s = Shape::new(1, 1, 16, 32);
    (d, random(s, 1, -1.0, 1.0), random(s, 2, -1.0, 1.0), random(s, 3, -1.0, 1.0))
}

#[test]
fn gan_loss_degenerate_weights() {
    let (d, hq, rq, lq) = gan_fixture();
    let phi = default_feature_extractor::<f64>(1).unwrap();
    let g = Graph::new();
    let b = d.bind(&g, false);
    let (h, r, l) = (g.constant(hq.clone()), g.constant(rq), g.constant(lq));
    let zero = generator_gan_loss(&g, h, r, l, &phi, &d, &b, 0.0).unwrap();
    assert_eq!(scalar(&g, zero.total), scalar(&g, zero.perceptual));

    let h2 = g.constant(hq);
    let one = generator_gan_loss(&g, h2, h2, l, &IdentityFeatures, &d, &b, 1.0).unwrap();
    assert_eq!(scalar(&g, one.total), scalar(&g, one.adversarial));
    assert_eq!(g.shape(one.d_fake), Shape::new(2, 1, 1, 1));
}

#[test]
fn gan_loss_linear_in_lambda() {
    let (d, hq, rq, lq) = gan_fixture();
    let g = Graph::new();
    let b = d.bind(&g, false);
    let (h, r, l) = (g.constant(hq), g.constant(rq), g.constant(lq));
    let at = |lambda| scalar(&g, generator_gan_loss(&g, h, r, l, &IdentityFeatures, &d, &b, lambda).unwrap().total);
    let (l0, l1, l3) = (at(0.0), at(1.0), at(3.0));
    assert!(((l3 - l0) - 3.0 * (l1 - l0)).abs() < 1e-12);
}

#[test]
fn ssim_loss_gradient_check() {
    let hq = random(Shape::new(1, 1, 16, 16), 8, -1.0, 1.0);
    let rq = random(Shape::new(1, 1, 16, 16), 9, -1.0, 1.0);
    let report = grad_check(
        |g, x| {
            let h = g.constant(hq.clone());
            ssim_loss_normalized(g, h, x)
        },
        &rq,
        1e-5,
    )
    .unwrap();
    assert!(report.passes(1e-5), "{report:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ssim_symmetric_and_bounded(seed in 0u64..1000) {
        let a = random(Shape::new(1, 1, 16, 16), seed, 0.0, 255.0);
        let b = random(Shape::new(1, 1, 16, 16), seed + 7, 0.0, 255.0);
        let g = Graph::new();
        let (va, vb) = (g.constant(a), g.constant(b));
        let p = SsimParams::evaluation();
        let ab = ssim_map(&g, va, vb, &p).unwrap();
        let ba = ssim_map(&g, vb, va, &p).unwrap();
        prop_assert_eq!(&*g.value(ab), &*g.value(ba));
        prop_assert!(g.value(ab).data().iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn mse_nonnegative_zero_iff_equal(seed in 0u64..1000, bump in 0usize..16) {
        let a = random(Shape::new(1, 1, 4, 4), seed, -1.0, 1.0);
        let mut b = a.clone();
        let g = Graph::new();
        let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
        prop_assert_eq!(scalar(&g, mse_loss(&g, va, vb).unwrap()), 0.0);
        b.data_mut()[bump] += 0.25;
        let vc = g.constant(b);
        prop_assert!(scalar(&g, mse_loss(&g, va, vc).unwrap()) > 0.0);
    }

    #[test]
    fn probability_losses_ignore_subpatch_order(seed in 0u64..1000) {
        let r = random(Shape::new(6, 1, 1, 1), seed, 0.01, 0.99);
        let f = random(Shape::new(6, 1, 1, 1), seed + 1, 0.01, 0.99);
        let rev = |t: &Tensor<f64>| Tensor::from_vec(t.shape(), t.data().iter().rev().copied().collect()).unwrap();
        let g = Graph::new();
        let a = discriminator_loss(&g, g.constant(r.clone()), g.constant(f.clone()), 0.9).unwrap();
        let b = discriminator_loss(&g, g.constant(rev(&r)), g.constant(rev(&f)), 0.9).unwrap();
        prop_assert!((scalar(&g, a) - scalar(&g, b)).abs() < 1e-14);
        let c = adversarial_loss(&g, g.constant(f.clone())).unwrap();
        let d = adversarial_loss(&g, g.constant(rev(&f))).unwrap();
        prop_assert!((scalar(&g, c) - scalar(&g, d)).abs() < 1e-14);
    }
}
