use ddcc_core::SupportSet;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `max over the ellipsoid boundary of zᵀ(a − c)` by gradient ascent on
/// `f(u) = zᵀu / √(uᵀVu)`, which is scale invariant in `u`.
fn boundary_max(v: &DMatrix<f64>, z: &DVector<f64>, start: DVector<f64>) -> f64 {
    let f = |u: &DVector<f64>| z.dot(u) / u.dot(&(v * u)).sqrt();
    let mut u = start.normalize();
    let mut step: f64 = 1.0;
    for _ in 0..20_000 {
        let vu = v * &u;
        let q = u.dot(&vu);
        let grad = z / q.sqrt() - vu * (z.dot(&u) / q.powf(1.5));
        if grad.norm() < 1e-14 {
            break;
        }
        let base = f(&u);
        step = (step * 2.0).min(1e3);
        let mut improved = false;
        while step > 1e-20 {
            let cand = (&u + &grad * step).normalize();
            if f(&cand) > base {
                u = cand;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    f(&u)
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * 0.1
}

#[test]
fn ellipsoid_radius_matches_boundary_maximisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for _ in 0..100 {
        let n = rng.gen_range(1..=6);
        let v = random_spd(&mut rng, n);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let z = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let set = SupportSet::ellipsoid(&c, v.clone()).unwrap();
        let closed = set.radius(z.as_slice()).unwrap();
        // start from z itself, perturbed, so the ascent begins on the rising side
        let start = &z + DVector::from_fn(n, |_, _| rng.gen_range(-0.1..0.1)) * (z.norm() / (n as f64).sqrt());
        let hi = boundary_max(&v, &z, start.clone());
        let lo = -boundary_max(&v, &(-&z), -start);
        let oracle = 0.5 * (hi - lo);
        assert!((closed - oracle).abs() <= 1e-6 * oracle.max(1e-12), "{closed} vs {oracle}");
    }
}

#[test]
fn polytope_membership_of_convex_combinations() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..40 {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=7);
        let verts: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let set = SupportSet::polytope(verts.clone()).unwrap();
        let mut w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let inside: Vec<f64> = (0..n).map(|i| verts.iter().zip(&w).map(|(v, wk)| v[i] * wk).sum()).collect();
        assert!(set.contains(&inside).unwrap());
        // beyond the vertex with the largest first coordinate
        let far = verts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max) + 0.01;
        let mut outside = inside.clone();
        outside[0] = far;
        assert!(!set.contains(&outside).unwrap());
    }
}

fn variants() -> impl Strategy<Value = (SupportSet, Vec<f64>, Vec<f64>)> {
    (1usize..5, any::<u64>()).prop_map(|(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = match seed % 3 {
            0 => {
                let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..0.0)).collect();
                let hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(0.0..3.0)).collect();
                SupportSet::boxed(&lo, &hi).unwrap()
            }
            1 => SupportSet::polytope(
                (0..rng.gen_range(1..6)).map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect(),
            )
            .unwrap(),
            _ => SupportSet::ellipsoid(&vec![0.3; n], random_spd(&mut rng, n)).unwrap(),
        };
        let z1 = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let z2 = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        (set, z1, z2)
    })
}

proptest! {
    #[test]
    fn radius_is_a_seminorm((set, z1, z2) in variants(), t in -5.0..5.0f64, lam in 0.0..1.0f64) {
        let r1 = set.radius(&z1).unwrap();
        let r2 = set.radius(&z2).unwrap();
        let scaled: Vec<f64> = z1.iter().map(|v| v * t).collect();
        prop_assert!((set.radius(&scaled).unwrap() - t.abs() * r1).abs() <= 1e-12 * (1.0 + t.abs() * r1));
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
        prop_assert!(set.radius(&mix).unwrap() <= lam * r1 + (1.0 - lam) * r2 + 1e-12);
        prop_assert_eq!(set.radius(&vec![0.0; z1.len()]).unwrap(), 0.0);
    }
}
