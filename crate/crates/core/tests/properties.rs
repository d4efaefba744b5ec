use hankel_sysid::eval::{hankel_losses, realization_loss};
use hankel_sysid::linalg;
use hankel_sysid::lti::{
    controllability, hankel_adjoint_pinv, hankel_map, hinf_norm, markov_params, mcmillan_degree, observability,
    random_stable_system, MarkovSeq,
};
use hankel_sysid::pipeline::lambda_rule;
use hankel_sysid::realize::{balanced_realization, ho_kalman, Realization};
use hankel_sysid::simulate::rng_for;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(seed: u64, rows: usize, cols: usize) -> DMatrix<f64> {
    let mut rng = rng_for(seed, 99);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_seq(seed: u64, len: usize, p: usize, r: usize) -> MarkovSeq {
    let mut rng = rng_for(seed, 7);
    MarkovSeq::new((0..len).map(|_| DMatrix::from_fn(p, r, |_, _| rng.sample::<f64, _>(StandardNormal))).collect())
        .unwrap()
}

fn orthogonal(seed: u64, d: usize) -> DMatrix<f64> {
    let dec = linalg::svd(&gaussian(seed, d, d));
    dec.u * dec.v_t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_pairs_with_hankel_map(seed in any::<u64>(), t in 1usize..=8, p in 1usize..=4, r in 1usize..=4) {
        let g = random_seq(seed, 2 * t - 1, p, r).to_stacked();
        let h = gaussian(seed ^ 1, (2 * t - 1) * r, p);
        let lhs = linalg::inner(&h, &g);
        let hg = hankel_map(&MarkovSeq::from_stacked(&g, r).unwrap(), t).unwrap().into_matrix();
        let rhs = linalg::inner(&hankel_adjoint_pinv(&h, t).unwrap(), &hg);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn hankel_of_system_factors(seed in any::<u64>(), d in 1usize..=4, p in 1usize..=2, r in 1usize..=2) {
        let mut rng = rng_for(seed, 0);
        let sys = random_stable_system(&mut rng, d, r, p, 0.8);
        let t = d + 1;
        let h = hankel_map(&markov_params(&sys, 2 * t - 1).unwrap(), t).unwrap().into_matrix();
        let fac = observability(&sys, t).unwrap() * controllability(&sys, t).unwrap();
        prop_assert!((h - fac).amax() <= 1e-9);
    }

    #[test]
    fn ho_kalman_round_trip(seed in any::<u64>(), d in 1usize..=3, p in 1usize..=2, r in 1usize..=2) {
        let mut rng = rng_for(seed, 1);
        let sys = random_stable_system(&mut rng, d, r, p, 0.7);
        let t = d + 2;
        let g = markov_params(&sys, 2 * t - 1).unwrap();
        let real = ho_kalman(hankel_map(&g, t).unwrap().matrix(), d, t).unwrap();
        let back = real.markov(2 * t - 1).unwrap();
        let scale = g.to_stacked().amax().max(1.0);
        prop_assert!((back.to_stacked() - g.to_stacked()).amax() <= 1e-8 * scale);
    }

    #[test]
    fn schatten_losses_are_ordered(seed in any::<u64>(), t in 2usize..=5, p in 1usize..=3, r in 1usize..=3) {
        let a = random_seq(seed, 2 * t - 1, p, r);
        let b = random_seq(seed.wrapping_add(1), 2 * t - 1, p, r);
        let l = hankel_losses(&a, &b, t).unwrap();
        prop_assert!(l.l1 >= l.l2 * (1.0 - 1e-12) && l.l2 >= l.linf * (1.0 - 1e-12));
    }

    #[test]
    fn realization_loss_is_rotation_invariant(seed in any::<u64>(), d in 1usize..=3) {
        let mut rng = rng_for(seed, 2);
        let sys = random_stable_system(&mut rng, d, 2, 2, 0.8);
        let reference = balanced_realization(&sys, d + 2).unwrap();
        let noisy_sys = random_stable_system(&mut rng, d, 2, 2, 0.8);
        let est = balanced_realization(&noisy_sys, d + 2).unwrap();
        let q = orthogonal(seed, d);
        let rotated = Realization {
            a: &q * &est.a * q.transpose(),
            b: &q * &est.b,
            c: &est.c * q.transpose(),
            obs: &est.obs * q.transpose(),
            ctrb: &q * &est.ctrb,
            ..est.clone()
        };
        let l0 = realization_loss(&est, &reference).unwrap().total;
        let l1 = realization_loss(&rotated, &reference).unwrap().total;
        prop_assert!((l0 - l1).abs() <= 1e-8 * (1.0 + l0));
    }

    #[test]
    fn penalty_decreases_with_samples(n in 1usize..100_000, t in 2usize..=10, phi in 1.0f64..10.0) {
        let a = lambda_rule(phi, 1.0, n, t, 0.05, 1, 1, 1.0).unwrap();
        let b = lambda_rule(phi, 1.0, n + 1, t, 0.05, 1, 1, 1.0).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn hinf_grows_with_more_blocks(seed in any::<u64>(), len in 1usize..=6) {
        // the grid contains x = 0, where the sum of |h| entries of a nonnegative sequence peaks
        let g = random_seq(seed, len + 1, 1, 1);
        let pos = MarkovSeq::new(g.blocks().iter().map(|b| b.abs()).collect()).unwrap();
        let short = MarkovSeq::new(pos.blocks()[..len].to_vec()).unwrap();
        prop_assert!(hinf_norm(&pos, 128).unwrap() >= hinf_norm(&short, 128).unwrap() - 1e-12);
    }

    #[test]
    fn mcmillan_degree_is_stable_in_order(seed in any::<u64>(), d in 1usize..=3) {
        let mut rng = rng_for(seed, 3);
        let sys = random_stable_system(&mut rng, d, 1, 1, 0.6);
        for t in d + 1..=d + 3 {
            let g = markov_params(&sys, 2 * t - 1).unwrap();
            prop_assert_eq!(mcmillan_degree(&g, t, 1e-9).unwrap(), d);
        }
    }
}
