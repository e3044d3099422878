//! The same pipeline across f32, f64 and exact rationals.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use safety_areas::evolution::{radii_from_diameters, step, Execution};
use safety_areas::kernel::Profile;
use safety_areas::safety::{order_statistic_delta, CnMethod};
use safety_areas::{breach, diameter, dilate, exact, Exact, Level, Particles32, RealizedKernel, SafetyArea, Scalar, Site, SupportSet};

fn chain<T: Scalar>(radii: &[T]) -> Vec<T> {
    let mut s = SupportSet::ball(Site::origin(2), T::zero()).unwrap();
    let mut ds = vec![diameter(&s)];
    for r in radii {
        s = dilate(&s, r.clone()).unwrap();
        ds.push(diameter(&s));
    }
    ds
}

#[test]
fn radius_recovery_per_scalar() {
    let r64 = [0.25, 0.5, 0.125, 1.0];
    let r32: Vec<f32> = r64.iter().map(|&r| r as f32).collect();
    let rq: Vec<Exact> = r64.iter().map(|&r| exact(r)).collect();
    assert_eq!(radii_from_diameters(&chain(&r64)).unwrap(), r64.to_vec());
    assert_eq!(radii_from_diameters(&chain(&r32)).unwrap(), r32);
    assert_eq!(radii_from_diameters(&chain(&rq)).unwrap(), rq);
}

#[test]
fn exact_recovery_of_awkward_decimals() {
    let radii: Vec<Exact> = [0.1, 0.2, 0.3, 0.7, 1e-9].iter().map(|&r| exact(r)).collect();
    assert_eq!(radii_from_diameters(&chain(&radii)).unwrap(), radii);
}

#[test]
fn f32_particles_step() {
    let mu = Particles32::dirac(Site::new(vec![0.0f32, 0.0, 0.0]).unwrap());
    let k = RealizedKernel { radius: 0.5, profile: Profile::UniformBall };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let next = step(&mu, &k, 2000, &mut rng, Execution::Serial).unwrap();
    assert_eq!(next.len(), 2000);
    assert!(next.sites.iter().all(|s| s.distance(&Site::origin(3)) < 0.5));
}

#[test]
fn min_n_matches_closed_forms() {
    assert_eq!(CnMethod::Asymptotic.min_n(0.1), 76);
    assert_eq!(CnMethod::DkwBound { beta: 0.05 }.min_n(0.1), 185);
}

proptest! {
    #[test]
    fn delta_agrees_across_scalars(raw in prop::collection::vec(1u32..1000, 1..60), theta in 0.01f64..0.9) {
        let r64: Vec<f64> = raw.iter().map(|&x| x as f64 / 64.0).collect();
        let r32: Vec<f32> = r64.iter().map(|&x| x as f32).collect();
        let rq: Vec<Exact> = r64.iter().map(|&x| exact(x)).collect();
        let (d64, c64) = order_statistic_delta(&r64, theta).unwrap();
        let (d32, c32) = order_statistic_delta(&r32, theta).unwrap();
        let (dq, cq) = order_statistic_delta(&rq, theta).unwrap();
        prop_assert_eq!(c64, c32);
        prop_assert_eq!(c64, cq);
        prop_assert_eq!(d64 as f32, d32);
        prop_assert_eq!(exact(d64), dq);
    }

    #[test]
    fn breach_is_radius_comparison_on_exact_balls(c in -100i32..100, r0 in 0u32..50, delta in 0u32..50, r in 0u32..50) {
        let q = |v: i64| Exact::new(v.into(), 8.into());
        let s = SupportSet::ball(Site::new(vec![q(c as i64), q(-(c as i64))]).unwrap(), q(r0 as i64)).unwrap();
        let area = SafetyArea::new(s.clone(), q(delta as i64), Level::new(0.1, None).unwrap()).unwrap();
        let next = dilate(&s, q(r as i64)).unwrap();
        prop_assert_eq!(breach(&area, &next), r > delta);
    }
}
