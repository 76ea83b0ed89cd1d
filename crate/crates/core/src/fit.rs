//! Least-squares power-law fits.

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

/// Fits log y = slope·log x + intercept.
pub fn fit_loglog<T: Scalar>(xs: &[T], ys: &[T]) -> Result<LogLogFit<T>> {
    if xs.len() != ys.len() {
        return Err(invalid("x and y lengths differ"));
    }
    if xs.len() < 3 {
        return Err(invalid("log-log fit needs at least 3 points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > T::zero() && v.is_finite())) {
        return Err(invalid("log-log fit needs positive finite data"));
    }
    let lx: Vec<T> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|y| y.ln()).collect();
    let n = T::from_count(xs.len());
    let mx = lx.iter().fold(T::zero(), |a, v| a + *v) / n;
    let my = ly.iter().fold(T::zero(), |a, v| a + *v) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (*x - mx) * (*x - mx);
        sxy += (*x - mx) * (*y - my);
        syy += (*y - my) * (*y - my);
    }
    if sxx == T::zero() {
        return Err(invalid("log-log fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == T::zero() { T::one() } else { sxy * sxy / (sxx * syy) };
    Ok(LogLogFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_laws() {
        let xs = [1.0f64, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| x.powi(-2)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert_relative_eq!(f.slope, -2.0, epsilon = 1e-14);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.sqrt()).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert_relative_eq!(f.slope, 0.5, epsilon = 1e-14);
        assert_relative_eq!(f.intercept, 3f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]).is_err());
        assert!(fit_loglog(&[0.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
