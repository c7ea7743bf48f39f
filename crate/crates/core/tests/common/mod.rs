#![allow(dead_code)]

use num_complex::Complex;
use phasegen::cvnn::{loss_mse_complex, loss_mse_grad, unet_backward, unet_forward, ComplexBatch, CvUNetConfig, CvUNetParams, Mode};
use phasegen::Rng;

pub fn random_batch(shape: [usize; 4], rng: &mut Rng) -> ComplexBatch<f64> {
    let n = shape.iter().product();
    ComplexBatch::new(shape, (0..n).map(|_| Complex::new(rng.normal(), rng.normal())).collect()).unwrap()
}

#[derive(Debug, Default)]
pub struct GradReport {
    /// Components with |grad| > 1e-6.
    pub checked: usize,
    /// Checked components whose h = 1e-3 stencil moved some PReLU input across zero.
    pub straddled: usize,
    /// Components over tolerance at h = 1e-3, straddled or not.
    pub strict_failures: usize,
    /// Components over tolerance at the largest kink-free step.
    pub failures: usize,
    pub worst: f64,
    pub worst_strict: f64,
}

pub const STEPS: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];
pub const TOL: f64 = 1e-3;

/// Central differences for every parameter component of a 2-level toy net.
///
/// The net is piecewise linear, so a difference is only a derivative estimate
/// when both stencil points stay in the linear region of the centre point.
/// Components whose h = 1e-3 stencil leaves it are re-differenced with the
/// largest step in [`STEPS`] that does not.
pub fn check_toy_unet(n: usize, base: usize, seed: u64) -> GradReport {
    let mut rng = Rng::new(seed);
    let cfg = CvUNetConfig::phasegen(2, base, 10);
    let mut net = CvUNetParams::<f64>::init(&cfg, &mut rng).unwrap();
    // the head starts at zero, which would hide every upstream gradient
    let head = net.store.find("head.weight").unwrap();
    for z in net.store.values_mut(head) {
        *z = Complex::new(rng.normal(), rng.normal()) * 0.5;
    }
    let x = random_batch([n, 2, 8, 8], &mut rng);
    let target = random_batch([n, 1, 8, 8], &mut rng);
    let t: Vec<usize> = (0..n).map(|i| 1 + (3 * i + seed as usize) % 10).collect();

    let rec = unet_forward(&x, &t, &net, Mode::Eval).unwrap();
    let centre = rec.tape().activation_pattern();
    let (_, g) = loss_mse_grad(&target, &rec.output).unwrap();
    let grads = unet_backward(&g, &rec, &net).unwrap();

    let mut report = GradReport::default();
    for flat in 0..net.parameter_count() {
        let an = grads.component(&net.store, flat);
        if an.abs() <= 1e-6 {
            continue;
        }
        report.checked += 1;
        let v = net.store.component(flat);
        let mut eval = |value: f64| {
            net.store.set_component(flat, value);
            let r = unet_forward(&x, &t, &net, Mode::Eval).unwrap();
            (loss_mse_complex(&target, &r.output).unwrap(), r.tape().activation_pattern() == centre)
        };
        let mut settled = None;
        for (i, &h) in STEPS.iter().enumerate() {
            let (lp, same_p) = eval(v + h);
            let (lm, same_m) = eval(v - h);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - an).abs() / an.abs().max(fd.abs());
            let clean = same_p && same_m;
            if i == 0 {
                report.worst_strict = report.worst_strict.max(rel);
                if rel >= TOL {
                    report.strict_failures += 1;
                }
                if !clean {
                    report.straddled += 1;
                }
            }
            if clean || i + 1 == STEPS.len() {
                settled = Some(rel);
                break;
            }
        }
        net.store.set_component(flat, v);
        let rel = settled.unwrap();
        report.worst = report.worst.max(rel);
        if rel >= TOL {
            report.failures += 1;
        }
    }
    report
}
