mod common;

use common::check_toy_unet;

#[test]
fn toy_unet_matches_finite_differences() {
    for seed in [1, 2] {
        let r = check_toy_unet(2, 2, seed);
        eprintln!("seed {seed}: {r:?}");
        assert!(r.checked > 1000);
        assert_eq!(r.failures, 0, "{r:?}");
    }
}
