mod common;

use forward_reins::claims::ClaimModel;
use forward_reins::premium::{PremiumModel, PremiumSpec, Principle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRINCIPLES: [Principle; 3] = [Principle::ExpectedValue, Principle::Variance, Principle::IntensityAdjustedVariance];

fn claims() -> ClaimModel {
    ClaimModel::new(1.0, 0.5, 1.0, 10.0, 1.0).unwrap()
}

#[test]
fn gross_premium_at_origin_uses_quadrature_second_moment() {
    let c = claims();
    let m2 = common::tilted_moment(&c, 2, 0.0);
    let e = std::f64::consts::E;
    let a = PremiumSpec::default().gross_premium(&c, 0.0, 0);
    assert!((a - (e + 0.1 * e * m2 * (1.0 + e))).abs() < 1e-10);
}

#[test]
fn full_cover_premium_at_origin() {
    let c = claims();
    let m2 = common::tilted_moment(&c, 2, 0.0);
    let e = std::f64::consts::E;
    let b = PremiumSpec::default().reins_premium(&c, 0.0, 0, 1.0);
    assert!((b - (e + 2.0 * 0.1 * e * m2 * (1.0 + e))).abs() < 1e-10);
}

#[test]
fn expected_value_rule() {
    let c = claims();
    let spec = PremiumSpec { principle: Principle::ExpectedValue, delta_i: 0.3, delta_r: 0.4, contract_horizon: 1.0 };
    let lambda = c.intensity(0.2, 1);
    assert!((spec.gross_premium(&c, 0.2, 1) - 1.3 * lambda).abs() < 1e-12);
    assert!((spec.reins_premium(&c, 0.2, 1, 0.5) - 0.5 * 1.4 * lambda).abs() < 1e-12);
}

#[test]
fn analytic_derivatives_match_central_differences() {
    let c = claims();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for principle in PRINCIPLES {
        let spec = PremiumSpec { principle, delta_i: 0.05, delta_r: 0.1, contract_horizon: 1.0 };
        for _ in 0..20 {
            let t = rng.random_range(0.0..1.0);
            let state = rng.random_range(0..2);
            let theta = rng.random_range(0.01..0.99);
            let h = 1e-6;
            let (db, d2b) = spec.reins_premium_db(&c, t, state, theta);
            let fd1 = (spec.reins_premium(&c, t, state, theta + h) - spec.reins_premium(&c, t, state, theta - h)) / (2.0 * h);
            assert!((db - fd1).abs() < 1e-6 * db.abs(), "{principle}: {db} vs {fd1}");
            let fd2 = (spec.reins_premium_db(&c, t, state, theta + h).0 - spec.reins_premium_db(&c, t, state, theta - h).0) / (2.0 * h);
            assert!((d2b - fd2).abs() < 1e-6 * d2b.abs().max(1.0), "{principle}: {d2b} vs {fd2}");
            let ht = 1e-6;
            let fdt = (spec.reins_premium_db(&c, t + ht, state, theta).0 - spec.reins_premium_db(&c, t - ht, state, theta).0) / (2.0 * ht);
            let dt = spec.reins_marginal_time_derivative(&c, t, state, theta);
            assert!((dt - fdt).abs() < 1e-6 * dt.abs().max(1.0), "{principle}: {dt} vs {fdt}");
        }
    }
}

#[test]
fn zero_cover_is_free_and_slopes_are_nonnegative() {
    let c = claims();
    for principle in PRINCIPLES {
        let spec = PremiumSpec { principle, delta_i: 0.05, delta_r: 0.1, contract_horizon: 1.0 };
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            for state in 0..2 {
                assert_eq!(spec.reins_premium(&c, t, state, 0.0), 0.0);
                for j in 0..=20 {
                    assert!(spec.reins_premium_db(&c, t, state, j as f64 / 20.0).0 >= 0.0);
                }
            }
        }
    }
}

#[test]
fn marginal_full_cover_exceeds_pure_premium() {
    let c = claims();
    let spec = PremiumSpec::default();
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        for state in 0..2 {
            let lambda = c.intensity(t, state);
            assert!(spec.reins_premium_db(&c, t, state, 1.0).0 > lambda * c.mean());
            assert!((spec.reins_premium_db(&c, t, state, 0.0).0 - lambda * c.mean()).abs() < 1e-12 * lambda);
        }
    }
}

#[test]
fn zero_reinsurance_loading_has_no_curvature() {
    let c = claims();
    for principle in PRINCIPLES {
        let spec = PremiumSpec { principle, delta_i: 0.05, delta_r: 0.0, contract_horizon: 1.0 };
        assert_eq!(spec.reins_premium_db(&c, 0.4, 1, 0.3).1, 0.0);
    }
}

#[test]
fn convex_in_retention() {
    let c = claims();
    let spec = PremiumSpec::default();
    let (b0, b1, bh) = (
        spec.reins_premium(&c, 0.0, 0, 0.0),
        spec.reins_premium(&c, 0.0, 0, 1.0),
        spec.reins_premium(&c, 0.0, 0, 0.5),
    );
    assert!(bh <= 0.5 * (b0 + b1));
}
