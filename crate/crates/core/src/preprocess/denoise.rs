use crate::error::{Error, Result};
use crate::frame::{EventFrame, TARGET};

pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_SIGMA: f64 = 1.0;

/// Unnormalized Gaussian weights for offsets `-w/2 ..= w/2`.
pub fn gaussian_kernel(window: usize, sigma: f64) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "denoise window must be odd and positive, got {window}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("kernel sigma must be > 0, got {sigma}")));
    }
    let half = (window / 2) as i64;
    Ok((-half..=half)
        .map(|o| (-(o * o) as f64 / (2.0 * sigma * sigma)).exp())
        .collect())
}

/// Gaussian smoothing of one series; edge windows renormalize the truncated kernel.
pub fn smooth_series(values: &[f64], window: usize, sigma: f64) -> Result<Vec<f64>> {
    let kernel = gaussian_kernel(window, sigma)?;
    let half = (window / 2) as isize;
    let n = values.len() as isize;
    Ok((0..n)
        .map(|t| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, w) in kernel.iter().enumerate() {
                let s = t + k as isize - half;
                if (0..n).contains(&s) {
                    acc += w * values[s as usize];
                    norm += w;
                }
            }
            acc / norm
        })
        .collect())
}

/// Smooths each listed feature column along time within every region.
/// The target column is refused.
pub fn denoise(frame: &EventFrame, columns: &[&str], window: usize, sigma: f64) -> Result<EventFrame> {
    gaussian_kernel(window, sigma)?;
    if columns.contains(&TARGET) {
        return Err(Error::Parameter("the target column is never denoised".into()));
    }
    let mut out = frame.clone();
    let regions = frame.region_rows();
    for name in columns {
        let src = frame.column(name)?;
        let mut smoothed = src.to_vec();
        for rows in regions.values() {
            let series: Vec<f64> = rows.iter().map(|&i| src[i]).collect();
            for (&i, v) in rows.iter().zip(smooth_series(&series, window, sigma)?) {
                smoothed[i] = v;
            }
        }
        out.set_column(*name, smoothed)?;
    }
    Ok(out)
}
