//! Small numerical helpers shared by the modules.

use crate::error::{Error, Result};

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ exp(x_i)`; `-inf` for an empty slice or all `-inf` entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + compensated_sum(xs.iter().map(|&x| (x - m).exp())).ln()
}

/// Neumaier-compensated sum: error independent of the number of terms.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to absolute width `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoRoot(format!(
            "no sign change on [{lo}, {hi}] (f = {flo}, {fhi})"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Least squares `y ≈ Σ c_j cols[j]` by modified Gram-Schmidt QR.
pub fn lstsq(cols: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let p = cols.len();
    let n = y.len();
    if p == 0 || n < p {
        return Err(Error::InvalidArgument(format!(
            "least squares needs at least as many rows ({n}) as columns ({p})"
        )));
    }
    let mut q: Vec<Vec<f64>> = cols.to_vec();
    let mut r = vec![vec![0.0; p]; p];
    for j in 0..p {
        for i in 0..j {
            let d: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = d;
            let qi = q[i].clone();
            for (x, qi) in q[j].iter_mut().zip(&qi) {
                *x -= d * qi;
            }
        }
        let norm = q[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidArgument("rank-deficient design".into()));
        }
        r[j][j] = norm;
        for x in q[j].iter_mut() {
            *x /= norm;
        }
    }
    let qty: Vec<f64> = (0..p)
        .map(|j| q[j].iter().zip(y).map(|(a, b)| a * b).sum())
        .collect();
    let mut c = vec![0.0; p];
    for j in (0..p).rev() {
        let mut s = qty[j];
        for k in j + 1..p {
            s -= r[j][k] * c[k];
        }
        c[j] = s / r[j][j];
    }
    Ok(c)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let err = left + right - whole;
        if !err.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err.abs() <= 15.0 * tol {
            return Ok(left + right + err / 15.0);
        }
        if depth == 0 {
            return Err(Error::Quadrature(format!(
                "tolerance {tol:e} not reached on [{a}, {b}]"
            )));
        }
        Ok(step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    // Split into panels first so narrow features are not missed by the initial sample.
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + h * i as f64;
        let hi = if i + 1 == panels { b } else { lo + h };
        let fa = f(lo);
        let fb = f(hi);
        let fm = f(0.5 * (lo + hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += step(&f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 48)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn compensated_sum_recovers_lost_terms() {
        let xs = [1.0, 1e-16, 1e-16, 1e-16, 1e-16, -1.0];
        assert_eq!(xs.iter().sum::<f64>(), 0.0);
        assert_relative_eq!(compensated_sum(xs), 4e-16, max_relative = 1e-12);
    }

    #[test]
    fn log_sum_exp_matches_naive() {
        let xs = [0.1f64, -2.0, 3.5];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&xs), naive, epsilon = 1e-14);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_relative_eq!(log_add_exp(-1000.0, -1000.0), -1000.0 + 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert_relative_eq!(r, 2f64.sqrt(), epsilon = 1e-13);
        assert!(bisect(|x| x * x + 1.0, 0.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn lstsq_recovers_polynomial() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.5 - 2.0 * x + 0.25 * x * x).collect();
        let cols = vec![vec![1.0; 50], x.clone(), x.iter().map(|x| x * x).collect()];
        let c = lstsq(&cols, &y).unwrap();
        assert_relative_eq!(c[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(c[1], -2.0, epsilon = 1e-12);
        assert_relative_eq!(c[2], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn simpson_integrates_gaussian() {
        let v = integrate(|x| (-x * x / 2.0).exp(), -10.0, 10.0, 1e-12).unwrap();
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-10);
    }
}
