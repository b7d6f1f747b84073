//! Golden-section search for the maximum of a unimodal function.

use thiserror::Error;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GoldenError {
    #[error("maximiser {argmax} sits on the bracket edge [{lo}, {hi}]")]
    BoundaryMaximum { argmax: f64, lo: f64, hi: f64 },
    #[error("objective returned a non-finite value at {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub argmax: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximise `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// A maximiser that ends within `2 * tol` of either end is reported as
/// [`GoldenError::BoundaryMaximum`] instead of being clamped.
pub fn maximize(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Maximum, GoldenError> {
    assert!(hi > lo && tol > 0.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = checked(&mut f, c)?;
    let mut fd = checked(&mut f, d)?;
    let mut evaluations = 2;
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = checked(&mut f, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = checked(&mut f, d)?;
        }
        evaluations += 1;
    }
    let (argmax, value) = if fc >= fd { (c, fc) } else { (d, fd) };
    let edge = 2.0 * tol.max(f64::EPSILON * (hi - lo));
    if argmax - lo <= edge || hi - argmax <= edge {
        return Err(GoldenError::BoundaryMaximum { argmax, lo, hi });
    }
    Ok(Maximum {
        argmax,
        value,
        evaluations,
    })
}

fn checked(f: &mut impl FnMut(f64) -> f64, x: f64) -> Result<f64, GoldenError> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GoldenError::NonFinite(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_peak() {
        let m = maximize(|x| -(x - 0.3).powi(2), -2.0, 5.0, 1e-10).unwrap();
        assert!((m.argmax - 0.3).abs() < 1e-9);
    }

    #[test]
    fn monotone_objective_hits_the_edge() {
        let err = maximize(|x| x, 0.0, 1.0, 1e-10).unwrap_err();
        assert!(matches!(err, GoldenError::BoundaryMaximum { .. }));
    }

    #[test]
    fn nan_is_reported() {
        let err = maximize(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, 1e-8).unwrap_err();
        assert!(matches!(err, GoldenError::NonFinite(_)));
    }
}
