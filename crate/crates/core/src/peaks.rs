//! Peak detection on sampled curves.

/// A local maximum with its topographic prominence and width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Grid index of the sampled maximum.
    pub index: usize,
    /// Parabolic-vertex position through the three samples around the maximum.
    pub center: f64,
    pub height: f64,
    /// Height above the higher of the lowest points reached on either side
    /// before the curve rises above the peak (or the data ends).
    pub prominence: f64,
    /// Full width at half prominence, linearly interpolated.
    pub fwhm: f64,
}

fn vertex(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    let (d1, d2) = (x[1] - x[0], x[2] - x[1]);
    let s1 = (y[1] - y[0]) / d1;
    let s2 = (y[2] - y[1]) / d2;
    let a = (s2 - s1) / (x[2] - x[0]);
    if a >= 0.0 || !a.is_finite() {
        return (x[1], y[1]);
    }
    let b = s1 - a * (x[0] + x[1]);
    let xv = (-b / (2.0 * a)).clamp(x[0], x[2]);
    let yv = y[1] + (xv - x[1]) * (s1 + a * (xv - x[0]));
    (xv, yv.max(y[1]))
}

fn crossing(x: &[f64], y: &[f64], i: usize, level: f64, step: isize) -> f64 {
    let mut j = i as isize;
    loop {
        let k = j + step;
        if k < 0 || k as usize >= y.len() {
            return x[j as usize];
        }
        let (ju, ku) = (j as usize, k as usize);
        if y[ku] <= level {
            let t = (y[ju] - level) / (y[ju] - y[ku]);
            return x[ju] + t * (x[ku] - x[ju]);
        }
        j = k;
    }
}

/// Local maxima of `y(x)` whose prominence is at least `min_prominence`,
/// in order of increasing `x`.
pub fn find_peaks(x: &[f64], y: &[f64], min_prominence: f64) -> Vec<Peak> {
    assert_eq!(x.len(), y.len());
    let n = y.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if !(y[i] > y[i - 1]) {
            i += 1;
            continue;
        }
        // plateau: take its middle
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j + 1 >= n || y[j + 1] > y[i] {
            i = j + 1;
            continue;
        }
        let m = (i + j) / 2;
        let h = y[m];
        let left_base = y[..i].iter().rev().take_while(|&&v| v <= h).fold(h, |a, &v| a.min(v));
        let right_base = y[j + 1..].iter().take_while(|&&v| v <= h).fold(h, |a, &v| a.min(v));
        let prominence = h - left_base.max(right_base);
        if prominence >= min_prominence && prominence > 0.0 {
            let level = h - 0.5 * prominence;
            let fwhm = crossing(x, y, j, level, 1) - crossing(x, y, i, level, -1);
            let (center, height) = if i == j {
                vertex([x[m - 1], x[m], x[m + 1]], [y[m - 1], y[m], y[m + 1]])
            } else {
                (0.5 * (x[i] + x[j]), h)
            };
            peaks.push(Peak {
                index: m,
                center,
                height,
                prominence: prominence + (height - h),
                fwhm,
            });
        }
        i = j + 1;
    }
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(x: f64, c: f64, fwhm: f64) -> f64 {
        let s = fwhm / 2.354_820_045_030_949;
        (-0.5 * ((x - c) / s).powi(2)).exp()
    }

    #[test]
    fn two_gaussians_on_background() {
        let x: Vec<f64> = (0..=1000).map(|i| i as f64 * 1e-3).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&t| 0.1 + 2.0 * gauss(t, 0.3004, 0.05) + 0.5 * gauss(t, 0.7, 0.02))
            .collect();
        let p = find_peaks(&x, &y, 0.01);
        assert_eq!(p.len(), 2);
        assert!((p[0].center - 0.3004).abs() < 2e-5);
        assert!((p[0].fwhm - 0.05).abs() < 1e-3);
        assert!((p[0].prominence - 2.0).abs() < 1e-3);
        assert!((p[1].prominence - 0.5).abs() < 1e-3);
        assert!((p[1].fwhm - 0.02).abs() < 1e-3);
    }

    #[test]
    fn shoulder_on_a_slope_has_small_prominence() {
        let x: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|&t| 5.0 - t + 0.2 * gauss(t, 2.0, 0.1)).collect();
        let p = find_peaks(&x, &y, 0.0);
        assert_eq!(p.len(), 1);
        assert!(p[0].prominence < 0.2);
        assert!(find_peaks(&x, &y, 0.2).is_empty());
    }

    #[test]
    fn monotone_and_flat_have_no_peaks() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        assert!(find_peaks(&x, &x, 0.0).is_empty());
        assert!(find_peaks(&x, &vec![1.0; 50], 0.0).is_empty());
    }
}
