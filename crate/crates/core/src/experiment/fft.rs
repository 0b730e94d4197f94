use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use std::path::Path;

use crate::error::{Error, Result};

pub const MIN_FFT_LEN: usize = 16;

/// Single-sided amplitude spectrum: a sinusoid of amplitude `A` whose period
/// divides the record shows `A` at its bin; the DC bin shows the mean.
pub fn fft_spectrum(signal: &[f64], dt: f64) -> Result<Vec<(f64, f64)>> {
    let n = signal.len();
    if n < MIN_FFT_LEN {
        return Err(Error::Argument(format!("need at least {MIN_FFT_LEN} samples, got {n}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    Ok((0..=n / 2)
        .map(|k| {
            let scale = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            (k as f64 * df, scale * buf[k].norm() / n as f64)
        })
        .collect())
}

/// Largest non-DC bin.
pub fn dominant_peak(spectrum: &[(f64, f64)]) -> Option<(f64, f64)> {
    spectrum.iter().skip(1).copied().max_by(|a, b| a.1.total_cmp(&b.1))
}

/// Reads `t_s` and `i_b_a` from a trajectory CSV; returns the step and the current.
pub fn read_current_csv(path: impl AsRef<Path>) -> Result<(f64, Vec<f64>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: missing column `{name}`", path.display())))
    };
    let (ct, ci) = (col("t_s")?, col("i_b_a")?);
    let mut t = Vec::new();
    let mut i = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |c: usize| {
            rec[c]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("{}: `{}`: {e}", path.display(), &rec[c])))
        };
        t.push(parse(ct)?);
        i.push(parse(ci)?);
    }
    if t.len() < 2 {
        return Err(Error::Data(format!("{}: fewer than two rows", path.display())));
    }
    Ok((t[1] - t[0], i))
}
