//! 8-bit renderings: grayscale for magnitudes, a cyclic hue wheel for phases.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{Context, Result};
use image::{GrayImage, Luma, Rgb, RgbImage};
use phasegen::{wrap_phase, Grid};

/// Min-max scaled grayscale; a constant image renders as mid gray.
pub fn grayscale(values: &Grid<f64>) -> GrayImage {
    let (h, w) = values.shape();
    let (lo, hi) = values
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = *values.get(y as usize, x as usize);
        let level = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() } else { 128.0 };
        Luma([level as u8])
    })
}

/// Hue proportional to the phase over one full turn, so `-pi` and `pi`
/// share a color.
pub fn phase_color(phi: f64) -> [u8; 3] {
    let turn = (wrap_phase(phi) + PI) / (2.0 * PI);
    let h = (turn * 6.0).rem_euclid(6.0);
    let x = 1.0 - ((h % 2.0) - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [r, g, b].map(|c: f64| (c * 255.0).round() as u8)
}

pub fn phase_map(phase: &Grid<f64>) -> RgbImage {
    let (h, w) = phase.shape();
    RgbImage::from_fn(w as u32, h as u32, |x, y| Rgb(phase_color(*phase.get(y as usize, x as usize))))
}

pub fn save_gray(img: &GrayImage, path: &Path) -> Result<()> {
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_and_constant() {
        assert_eq!(phase_color(PI), phase_color(-PI));
        assert_eq!(phase_color(PI), phase_color(-PI + 1e-12));
        assert_ne!(phase_color(0.0), phase_color(PI));
        let g = grayscale(&Grid::from_fn(4, 5, |_, _| 0.3));
        assert_eq!(g.dimensions(), (5, 4));
        assert!(g.pixels().all(|p| p.0[0] == 128));
    }
}
