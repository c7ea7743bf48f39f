//! Image-quality and segmentation metrics plus Laplacian phase unwrapping.
//!
//! Quality metrics take real grids (usually magnitudes) and accumulate in f64.

mod quality;
mod segmentation;
mod unwrap;

use std::fmt::Write as _;

pub use quality::{mse, nrmse, psnr, ssim, ssim_with_range, SSIM_WINDOW};
pub use segmentation::{dice, hausdorff, BinaryMask};
pub use unwrap::{circular_rmse, laplacian_unwrap};

use crate::complex::{Grid, Real};
use crate::error::Result;

/// Magnitude threshold separating signal from background.
pub const FOREGROUND_THRESHOLD: f64 = 0.05;

pub const REPORT_HEADER: &str = "ssim,psnr,mse,nrmse,dsc,hd,circ_rmse";

/// One row of metrics; `None` fields serialize as empty cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub ssim: Option<f64>,
    pub psnr: Option<f64>,
    pub mse: Option<f64>,
    pub nrmse: Option<f64>,
    pub dsc: Option<f64>,
    pub hd: Option<f64>,
    pub circ_rmse: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => format!("{x}"),
    }
}

impl MetricReport {
    /// SSIM, PSNR, MSE and NRMSE of `pred` against `reference`.
    pub fn image_quality<T: Real>(reference: &Grid<T>, pred: &Grid<T>) -> Result<Self> {
        Ok(Self {
            ssim: Some(ssim(reference, pred)?),
            psnr: Some(psnr(reference, pred)?),
            mse: Some(mse(reference, pred)?),
            nrmse: Some(nrmse(reference, pred)?),
            ..Self::default()
        })
    }

    /// Fills `dsc` and `hd`. HD stays empty when either mask is empty.
    pub fn with_segmentation(mut self, reference: &BinaryMask, pred: &BinaryMask) -> Result<Self> {
        self.dsc = Some(dice(reference, pred)?);
        self.hd = if reference.is_empty() || pred.is_empty() {
            None
        } else {
            Some(hausdorff(reference, pred)?)
        };
        Ok(self)
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        for (i, v) in [self.ssim, self.psnr, self.mse, self.nrmse, self.dsc, self.hd, self.circ_rmse]
            .into_iter()
            .enumerate()
        {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{}", cell(v));
        }
        s
    }

    pub fn parse_row(row: &str) -> Option<Self> {
        let cells: Vec<&str> = row.trim_end().split(',').collect();
        if cells.len() != 7 {
            return None;
        }
        let mut vals = Vec::with_capacity(7);
        for c in cells {
            vals.push(match c {
                "" => None,
                other => Some(other.parse::<f64>().ok()?),
            });
        }
        Some(Self {
            ssim: vals[0],
            psnr: vals[1],
            mse: vals[2],
            nrmse: vals[3],
            dsc: vals[4],
            hd: vals[5],
            circ_rmse: vals[6],
        })
    }
}
