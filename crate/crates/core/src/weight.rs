//! Family weights and their Fourier transforms.
//!
//! The default weight is the separable bump `w(x, y) = eta(x) eta(y)` with
//! `eta(x) = exp(1/((2x-3)^2 - 1) + 1)` on `(1, 2)`, peak value 1 at `x = 3/2`.

use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    #[default]
    Bump,
    /// Indicator of `[1, 2]`; diagnostics only, not smooth.
    Sharp,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// One-dimensional profile with a composite Gauss-Legendre rule on its support.
#[derive(Debug, Clone)]
pub struct Weight {
    pub kind: WeightKind,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    integral: f64,
}

/// Nodes per panel.
pub const GL_DEGREE: usize = 64;
/// Panels on `[1, 2]`.
pub const GL_PANELS: usize = 8;

impl Weight {
    pub fn new(kind: WeightKind) -> Self {
        let (gx, gw) = gauss_legendre(GL_DEGREE);
        let h = 1.0 / GL_PANELS as f64;
        let mut nodes = Vec::with_capacity(GL_DEGREE * GL_PANELS);
        let mut weights = Vec::with_capacity(GL_DEGREE * GL_PANELS);
        for k in 0..GL_PANELS {
            let lo = 1.0 + k as f64 * h;
            for (xi, wi) in gx.iter().zip(&gw) {
                nodes.push(lo + 0.5 * h * (xi + 1.0));
                weights.push(0.5 * h * wi);
            }
        }
        let mut w = Self {
            kind,
            nodes,
            weights,
            integral: 0.0,
        };
        w.integral = match kind {
            WeightKind::Bump => w.fourier(0.0).re,
            WeightKind::Sharp => 1.0,
        };
        w
    }

    /// `eta(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        if !(x > 1.0 && x < 2.0) {
            return match self.kind {
                WeightKind::Sharp if x == 1.0 || x == 2.0 => 1.0,
                _ => 0.0,
            };
        }
        match self.kind {
            WeightKind::Bump => {
                let t = 2.0 * x - 3.0;
                (1.0 / (t * t - 1.0) + 1.0).exp()
            }
            WeightKind::Sharp => 1.0,
        }
    }

    /// `int eta`.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// `eta^(xi) = int eta(x) e(-xi x) dx`.
    pub fn fourier(&self, xi: f64) -> Complex64 {
        match self.kind {
            WeightKind::Bump => {
                let mut re = 0.0;
                let mut im = 0.0;
                for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                    let v = w * self.eval(x);
                    let (s, c) = (-std::f64::consts::TAU * xi * x).sin_cos();
                    re += v * c;
                    im += v * s;
                }
                Complex64::new(re, im)
            }
            WeightKind::Sharp => {
                if xi == 0.0 {
                    return Complex64::new(1.0, 0.0);
                }
                let e = |t: f64| Complex64::from_polar(1.0, -std::f64::consts::TAU * xi * t);
                (e(1.0) - e(2.0)) / Complex64::new(0.0, std::f64::consts::TAU * xi)
            }
        }
    }

    /// `w^(0,0) = (int eta)^2` for the separable two-dimensional weight.
    pub fn hat00(&self) -> f64 {
        self.integral * self.integral
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(64);
        for k in 0..=127u32 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-13, "k={k}: {q} vs {exact}");
        }
    }

    #[test]
    fn bump_shape() {
        let w = Weight::new(WeightKind::Bump);
        assert!((w.eval(1.5) - 1.0).abs() < 1e-15);
        assert_eq!(w.eval(1.0), 0.0);
        assert_eq!(w.eval(2.5), 0.0);
        assert!(w.eval(1.01) > 0.0);
    }

    #[test]
    fn bump_integral_matches_fine_midpoint_rule() {
        let w = Weight::new(WeightKind::Bump);
        let n = 2_000_000;
        let h = 1.0 / n as f64;
        let mid: f64 = (0..n).map(|i| w.eval(1.0 + (i as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((w.integral() - mid).abs() < 1e-10, "{} vs {mid}", w.integral());
        assert!((w.hat00() - mid * mid).abs() < 1e-8);
    }

    #[test]
    fn bump_fourier_decays_and_is_symmetric() {
        let w = Weight::new(WeightKind::Bump);
        let f = |xi: f64| w.fourier(xi);
        assert!((f(3.0) - f(-3.0).conj()).norm() < 1e-14);
        // eta is symmetric about 3/2, so e(3 xi/2) eta^(xi) is real
        for xi in [0.7, 2.0, 5.5] {
            let z = f(xi) * Complex64::from_polar(1.0, std::f64::consts::TAU * 1.5 * xi);
            assert!(z.im.abs() < 1e-13);
        }
        assert!(f(20.0).norm() < 1e-4 * f(0.0).norm());
    }

    #[test]
    fn sharp_fourier_closed_form() {
        let s = Weight::new(WeightKind::Sharp);
        assert_eq!(s.fourier(0.0), Complex64::new(1.0, 0.0));
        assert!((s.fourier(1.0)).norm() < 1e-15);
    }
}
