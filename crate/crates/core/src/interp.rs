//! Monotone piecewise-cubic Hermite interpolation.

/// Piecewise-cubic Hermite interpolant whose node slopes are limited so the
/// curve is monotone wherever the data are.
///
/// Outside the node range the interpolant continues linearly with the end
/// slope.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl MonotoneCubic {
    /// Slopes from the weighted harmonic mean of neighbouring secants
    /// (Fritsch-Butland), the usual PCHIP choice.
    pub fn pchip(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_nodes(&x, &y);
        let n = x.len();
        let mut d = vec![0.0; n];
        if n == 2 {
            let s = (y[1] - y[0]) / (x[1] - x[0]);
            d[0] = s;
            d[1] = s;
            return Self { x, y, d };
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        for i in 1..n - 1 {
            if s[i - 1] * s[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
            }
        }
        d[0] = end_slope(h[0], h[1], s[0], s[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
        Self { x, y, d }
    }

    /// Use the supplied node slopes, clipped by the Fritsch-Carlson
    /// conditions where they would break monotonicity.
    pub fn with_slopes(x: Vec<f64>, y: Vec<f64>, mut d: Vec<f64>) -> Self {
        assert_nodes(&x, &y);
        assert_eq!(d.len(), x.len());
        for i in 0..x.len() - 1 {
            let s = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
            if s == 0.0 {
                d[i] = 0.0;
                d[i + 1] = 0.0;
                continue;
            }
            if d[i] * s < 0.0 {
                d[i] = 0.0;
            }
            if d[i + 1] * s < 0.0 {
                d[i + 1] = 0.0;
            }
            let a = d[i] / s;
            let b = d[i + 1] / s;
            let r2 = a * a + b * b;
            if r2 > 9.0 {
                let tau = 3.0 / r2.sqrt();
                d[i] = tau * a * s;
                d[i + 1] = tau * b * s;
            }
        }
        Self { x, y, d }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0] + self.d[0] * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1] + self.d[n - 1] * (t - self.x[n - 1]);
        }
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.d[0];
        }
        if t >= self.x[n - 1] {
            return self.d[n - 1];
        }
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let dh00 = (6.0 * s2 - 6.0 * s) / h;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = (-6.0 * s2 + 6.0 * s) / h;
        let dh11 = 3.0 * s2 - 2.0 * s;
        dh00 * self.y[i] + dh10 * self.d[i] + dh01 * self.y[i + 1] + dh11 * self.d[i + 1]
    }

    fn interval(&self, t: f64) -> usize {
        // partition_point gives the first node strictly greater than t
        let j = self.x.partition_point(|&xi| xi <= t);
        j.clamp(1, self.x.len() - 1) - 1
    }
}

fn assert_nodes(x: &[f64], y: &[f64]) {
    assert!(x.len() >= 2, "need at least two nodes");
    assert_eq!(x.len(), y.len());
    debug_assert!(x.windows(2).all(|w| w[1] > w[0]), "nodes must increase");
}

fn end_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 <= 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_cubics_with_exact_slopes() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|t| t * t * t + t).collect();
        let d: Vec<f64> = x.iter().map(|t| 3.0 * t * t + 1.0).collect();
        let c = MonotoneCubic::with_slopes(x.clone(), y.clone(), d);
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(c.eval(*xi), *yi);
        }
        for t in [0.05, 0.77, 1.5, 2.99] {
            assert!((c.eval(t) - (t * t * t + t)).abs() < 1e-12);
            assert!((c.derivative(t) - (3.0 * t * t + 1.0)).abs() < 1e-11);
        }
    }

    #[test]
    fn pchip_is_accurate_on_smooth_data() {
        let x: Vec<f64> = (0..201).map(|i| i as f64 * 0.05).collect();
        let y: Vec<f64> = x.iter().map(|t| (0.3 * t).exp()).collect();
        let c = MonotoneCubic::pchip(x, y);
        for t in [0.013, 3.333, 9.97] {
            assert!((c.eval(t) / (0.3 * t).exp() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn extrapolates_linearly() {
        let c = MonotoneCubic::pchip(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]);
        assert!((c.eval(3.5) - 3.5).abs() < 1e-14);
        assert!((c.eval(-1.0) + 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn monotone_data_give_monotone_curve(steps in proptest::collection::vec(0.0f64..5.0, 3..30)) {
            let x: Vec<f64> = (0..=steps.len()).map(|i| i as f64).collect();
            let mut y = vec![0.0];
            for s in &steps {
                y.push(y.last().unwrap() + s);
            }
            let c = MonotoneCubic::pchip(x.clone(), y);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=(steps.len() * 17) {
                let v = c.eval(i as f64 / 17.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
