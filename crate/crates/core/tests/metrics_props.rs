use phasegen::metrics::*;
use phasegen::{wrap_phase, Grid, Rng};
use proptest::prelude::*;

fn grid(h: usize, w: usize, seed: u64) -> Grid<f64> {
    let mut rng = Rng::new(seed);
    Grid::from_fn(h, w, |_, _| rng.uniform())
}

fn mask(h: usize, w: usize, p: f64, seed: u64) -> BinaryMask {
    let mut rng = Rng::new(seed);
    BinaryMask::new(Grid::from_fn(h, w, |_, _| rng.bernoulli(p)))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a == b) || (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quality_metrics_are_rotation_invariant(h in 7usize..20, w in 7usize..20, seed in any::<u64>()) {
        let a = grid(h, w, seed);
        let b = grid(h, w, seed ^ 0x5555);
        let (ra, rb) = (a.rot90(), b.rot90());
        prop_assert!(close(mse(&a, &b).unwrap(), mse(&ra, &rb).unwrap(), 1e-6));
        prop_assert!(close(nrmse(&a, &b).unwrap(), nrmse(&ra, &rb).unwrap(), 1e-6));
        prop_assert!(close(psnr(&a, &b).unwrap(), psnr(&ra, &rb).unwrap(), 1e-6));
        prop_assert!(close(ssim(&a, &b).unwrap(), ssim(&ra, &rb).unwrap(), 1e-6));
    }

    #[test]
    fn segmentation_and_phase_metrics_are_rotation_invariant(h in 2usize..16, w in 2usize..16, seed in any::<u64>()) {
        let a = mask(h, w, 0.3, seed);
        let b = mask(h, w, 0.3, seed.wrapping_add(1));
        let rot = |m: &BinaryMask| BinaryMask::new(m.grid().rot90());
        prop_assert_eq!(dice(&a, &b).unwrap(), dice(&rot(&a), &rot(&b)).unwrap());
        if !a.is_empty() && !b.is_empty() {
            prop_assert!(close(hausdorff(&a, &b).unwrap(), hausdorff(&rot(&a), &rot(&b)).unwrap(), 1e-12));
        }
        let pa = grid(h, w, seed).map(|v| wrap_phase(6.0 * v));
        let pb = grid(h, w, !seed).map(|v| wrap_phase(6.0 * v));
        if !a.is_empty() {
            prop_assert!(close(circular_rmse(&pa, &pb, &a).unwrap(), circular_rmse(&pa.rot90(), &pb.rot90(), &rot(&a)).unwrap(), 1e-6));
        }
    }

    #[test]
    fn algebraic_relations(h in 1usize..16, w in 1usize..16, seed in any::<u64>()) {
        let a = grid(h, w, seed);
        let b = grid(h, w, seed.wrapping_mul(3).wrapping_add(7));
        let e = mse(&a, &b).unwrap();
        let peak = a.data().iter().cloned().fold(f64::MIN, f64::max);
        let energy: f64 = a.data().iter().map(|v| v * v).sum();
        prop_assert!(close(psnr(&a, &b).unwrap(), 20.0 * peak.log10() - 10.0 * e.log10(), 1e-9));
        prop_assert!(close(nrmse(&a, &b).unwrap().powi(2), e * (h * w) as f64 / energy, 1e-9));
    }

    #[test]
    fn segmentation_ranges(h in 1usize..14, w in 1usize..14, p in 0.05f64..0.9, seed in any::<u64>()) {
        let a = mask(h, w, p, seed);
        let b = mask(h, w, p, seed ^ 1);
        let d = dice(&a, &b).unwrap();
        prop_assert!((0.0..=100.0).contains(&d));
        prop_assert_eq!(dice(&a, &a).unwrap(), 100.0);
        if !a.is_empty() {
            prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
            if !b.is_empty() {
                let hd = hausdorff(&a, &b).unwrap();
                prop_assert!(hd >= 0.0);
                prop_assert_eq!(hd, hausdorff(&b, &a).unwrap());
            }
        }
    }

    #[test]
    fn ssim_symmetric_with_shared_range(h in 7usize..14, w in 7usize..14, seed in any::<u64>()) {
        let a = grid(h, w, seed);
        let b = grid(h, w, seed ^ 9);
        prop_assert_eq!(ssim_with_range(&a, &b, 1.0).unwrap(), ssim_with_range(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn unwrap_is_wrap_invariant(
        gy in -0.25f64..0.25, gx in -0.25f64..0.25, curv in -0.004f64..0.004, c0 in -3.0f64..3.0,
    ) {
        let (h, w) = (32, 32);
        let truth = Grid::from_fn(h, w, |r, c| {
            let (y, x) = (r as f64 - 16.0, c as f64 - 16.0);
            c0 + gy * y + gx * x + curv * (x * x - y * y)
        });
        let out = laplacian_unwrap(&truth.map(|v| wrap_phase(*v))).unwrap();
        let diff: Vec<f64> = out.data().iter().zip(truth.data()).map(|(a, b)| a - b).collect();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                prop_assert!((diff[r * w + c] - mean).abs() < 1e-2);
            }
        }
    }
}
