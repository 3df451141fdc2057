//! Randomized invariants across the public API. Each property draws a seed
//! and builds its inputs from an `RngStream`, so failures shrink to a seed.

use proptest::prelude::*;

use swd_core::dual_swd::{dual_block_forward, swgan_disc_loss, DualBlockParams, Discriminator, SwganLossConfig};
use swd_core::evaldata::{frechet_gaussian, gaussian_fit, hungarian_w1};
use swd_core::gradtape::Tape;
use swd_core::models::{Activation, MlpParams};
use swd_core::numerics::{qr_decompose, sqrtm_psd};
use swd_core::sliced_ot::{
    mc_swd_with, soft_histogram, wasserstein_1d_exact, ProjectionSet, TransportMap1D,
};
use swd_core::stiefel::{orth_init, stiefel_adam_step, tangent_project, AdamConfig, AdamState, TangentRule};
use swd_core::{DenseMatrix, RngStream};

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

fn project(x: &DenseMatrix, theta: &[f64]) -> Vec<f64> {
    (0..x.cols()).map(|j| (0..x.rows()).map(|i| theta[i] * x[(i, j)]).sum()).collect()
}

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn qr_reconstructs_and_is_orthogonal(seed: u64, n in 2usize..=16) {
        let m = RngStream::new(seed).gaussian_matrix(n, n);
        let (q, r) = qr_decompose(&m).unwrap();
        let rel = q.matmul(&r).unwrap().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        prop_assert!(rel <= 1e-10);
        prop_assert!(q.orthogonality_defect() <= 1e-10);
        for i in 0..n {
            prop_assert!(r[(i, i)] > 0.0);
            for j in 0..i {
                prop_assert_eq!(r[(i, j)], 0.0);
            }
        }
        // An orthogonal matrix with positive-diagonal R factor is its own Q.
        let (q2, _) = qr_decompose(&q).unwrap();
        prop_assert!(q2.sub(&q).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn sqrtm_squares_back(seed: u64, n in 1usize..=8) {
        let a = RngStream::new(seed).gaussian_matrix(n, n);
        let m = a.matmul_t(&a).unwrap();
        let s = sqrtm_psd(&m).unwrap();
        let err = s.matmul(&s).unwrap().sub(&m).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-8 * (1.0 + m.frobenius_norm()));
    }

    #[test]
    fn rng_replays_and_streams_differ(seed: u64, stream in 0u64..64) {
        let mut a = RngStream::with_stream(seed, stream);
        let mut b = RngStream::with_stream(seed, stream);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        prop_assert_eq!(&xs, &ys);
        let mut c = RngStream::with_stream(seed, stream + 1);
        let zs: Vec<u64> = (0..16).map(|_| c.next_u64()).collect();
        prop_assert_ne!(&xs, &zs);
        let mut restored = RngStream::from_state_bytes(&a.state_bytes()).unwrap();
        prop_assert_eq!(restored.next_u64(), a.next_u64());
    }

    #[test]
    fn soft_histogram_is_a_distribution(seed: u64, b in 1usize..64, l in 2usize..40, alpha in 0.01f64..100.0) {
        let v = RngStream::new(seed).uniform(b);
        let h = soft_histogram(&v, l, alpha).unwrap();
        prop_assert!(h.weights.iter().all(|w| *w >= 0.0));
        prop_assert!((h.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(h.centers.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn transport_maps_are_monotone(seed: u64, l in 2usize..64) {
        let mut rng = RngStream::new(seed);
        let source = rng.gaussian(64);
        let target: Vec<f64> = rng.uniform(64).iter().map(|u| 3.0 * u * u).collect();
        let map = TransportMap1D::fit(&source, &target, l, 1.0).unwrap();
        let grid: Vec<f64> = (0..1024).map(|k| -4.0 + 8.0 * k as f64 / 1023.0).collect();
        let out = map.apply(&grid);
        prop_assert!(out.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn sliced_distance_is_a_metric(seed: u64, n in 1usize..5, b in 2usize..40) {
        let mut rng = RngStream::new(seed);
        let dirs = ProjectionSet::sample(n, 32, &mut rng).unwrap();
        let x = rng.gaussian_matrix(n, b);
        let y = rng.gaussian_matrix(n, b).map(|v| 2.0 * v + 1.0);
        let z = rng.uniform_matrix(n, b);
        let d = |p: &DenseMatrix, q: &DenseMatrix| mc_swd_with(p, q, &dirs, 1.0).unwrap();
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert!((d(&x, &y) - d(&y, &x)).abs() <= 1e-12);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-9);
    }

    #[test]
    fn projections_contract_transport_cost(seed: u64, n in 1usize..5, b in 1usize..=32) {
        let mut rng = RngStream::new(seed);
        let x = rng.gaussian_matrix(n, b);
        let y = rng.gaussian_matrix(n, b).map(|v| v - 0.5);
        let w1 = hungarian_w1(&x, &y).unwrap();
        for _ in 0..8 {
            let raw = rng.gaussian(n);
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            let theta: Vec<f64> = raw.iter().map(|v| v / norm).collect();
            let w = wasserstein_1d_exact(&project(&x, &theta), &project(&y, &theta), 1.0).unwrap();
            prop_assert!(w <= w1 + 1e-9);
        }
    }

    #[test]
    fn hungarian_is_a_metric(seed: u64, n in 1usize..4, b in 1usize..12) {
        let mut rng = RngStream::new(seed);
        let x = rng.gaussian_matrix(n, b);
        let y = rng.gaussian_matrix(n, b);
        let z = rng.uniform_matrix(n, b);
        let w = |p: &DenseMatrix, q: &DenseMatrix| hungarian_w1(p, q).unwrap();
        prop_assert_eq!(w(&x, &x), 0.0);
        prop_assert!((w(&x, &y) - w(&y, &x)).abs() <= 1e-12);
        prop_assert!(w(&x, &z) <= w(&x, &y) + w(&y, &z) + 1e-9);
    }

    #[test]
    fn frechet_score_behaves_like_a_squared_metric(seed: u64, n in 1usize..5) {
        let mut rng = RngStream::new(seed);
        let mut fit = |shift: f64| {
            let a = rng.gaussian_matrix(n, n);
            let x = a.matmul(&rng.gaussian_matrix(n, 4 * n + 4)).unwrap().map(|v| v + shift);
            gaussian_fit(&x).unwrap()
        };
        let (a, b, c) = (fit(0.0), fit(1.0), fit(-0.5));
        let d = |p, q| frechet_gaussian(p, q).unwrap();
        prop_assert!(d(&a, &a).abs() <= 1e-9);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-12 * (1.0 + d(&a, &b)));
        let root = |v: f64| v.max(0.0).sqrt();
        prop_assert!(root(d(&a, &c)) <= root(d(&a, &b)) + root(d(&b, &c)) + 1e-6);
    }

    #[test]
    fn tangent_directions_are_skew(seed: u64, r in 1usize..12) {
        let mut rng = RngStream::new(seed);
        let o = orth_init(r, &mut rng).unwrap();
        let g = rng.gaussian_matrix(r, r);
        for rule in [TangentRule::Reflected, TangentRule::Symmetric] {
            let t = tangent_project(&o, &g, rule).unwrap();
            // OᵀT is skew-symmetric.
            let s = o.as_matrix().t_matmul(&t).unwrap();
            prop_assert!(s.add(&s.transpose()).unwrap().max_abs() <= 1e-10);
        }
    }

    #[test]
    fn dual_block_is_homogeneous_in_u(seed: u64, r in 1usize..8, c in -4.0f64..4.0) {
        let mut rng = RngStream::new(seed);
        let p = DualBlockParams::init(r, &mut rng).unwrap();
        let my = rng.gaussian_matrix(r, 10);
        let mut scaled = p.clone();
        scaled.u = p.u.scale(c);
        let a = dual_block_forward(&p, &my).unwrap().scale(c);
        let b = dual_block_forward(&scaled, &my).unwrap();
        prop_assert!(a.sub(&b).unwrap().max_abs() <= 1e-12 * (1.0 + a.max_abs()));
    }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn stiefel_adam_stays_orthogonal(seed: u64, r in 1usize..16, lr in 1e-4f64..1e-1) {
        let mut rng = RngStream::new(seed);
        let mut o = orth_init(r, &mut rng).unwrap();
        let config = AdamConfig { lr, ..AdamConfig::default() };
        let mut state = AdamState::new(r, r, config);
        for step in 0..500 {
            let g = rng.gaussian_matrix(r, r).scale(1.0 + step as f64);
            let rule = if step % 2 == 0 { TangentRule::Reflected } else { TangentRule::Symmetric };
            stiefel_adam_step(&mut state, &mut o, &g, rule).unwrap();
        }
        prop_assert!(o.defect() <= 1e-6);
    }

    #[test]
    fn critic_swap_negates_and_penalties_stay_nonnegative(seed: u64, b in 2usize..16) {
        let mut rng = RngStream::new(seed);
        let encoder = MlpParams::init(&[2, 6, 4], Activation::LeakyRelu(0.2), Activation::Linear, &mut rng).unwrap();
        let blocks = (0..2).map(|_| DualBlockParams::init(4, &mut rng).unwrap()).collect();
        let disc = Discriminator::new(encoder, blocks).unwrap();
        let x = rng.gaussian_matrix(2, b);
        let gz = rng.gaussian_matrix(2, b).map(|v| v + 1.0);
        let cfg = SwganLossConfig::default();
        let a = swgan_disc_loss(&disc, &x, &gz, &cfg, &mut rng.derive(1)).unwrap();
        let s = swgan_disc_loss(&disc, &gz, &x, &cfg, &mut rng.derive(1)).unwrap();
        prop_assert_eq!(a.critic_real - a.critic_fake, -(s.critic_real - s.critic_fake));
        prop_assert!(a.penalty1 >= 0.0 && a.penalty2 >= 0.0);
        prop_assert!(s.penalty1 >= 0.0 && s.penalty2 >= 0.0);
    }

    #[test]
    fn tape_gradients_are_bit_reproducible(seed: u64) {
        let build = || {
            let mut rng = RngStream::new(seed);
            let mut t = Tape::new();
            let w = t.leaf("w", rng.gaussian_matrix(3, 2));
            let x = t.constant(rng.gaussian_matrix(2, 5));
            let h = t.matmul(w, x).unwrap();
            let a = t.tanh(h).unwrap();
            let s = t.square(a).unwrap();
            let y = t.mean(s).unwrap();
            let g = t.backward(y, &[w]).unwrap();
            (t.scalar(y), g)
        };
        let (y1, g1) = build();
        let (y2, g2) = build();
        prop_assert_eq!(y1.to_bits(), y2.to_bits());
        prop_assert_eq!(g1, g2);
    }
}
