//! Cubic splines (natural or clamped) on real knots, evaluable at complex arguments.

use num_complex::Complex64;

#[derive(Clone, Debug)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Knots must be strictly increasing, at least three of them.
    pub fn natural(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 3 && y.len() == n);
        assert!(x.windows(2).all(|w| w[1] > w[0]));
        // tridiagonal system for the interior second derivatives
        let mut m = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0 / 6.0;
            let b = (h0 + h1) / 3.0;
            let rhs = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
            let denom = b - a * c[i - 1];
            c[i] = (h1 / 6.0) / denom;
            d[i] = (rhs - a * d[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        CubicSpline { x, y, m }
    }

    /// Spline with prescribed end slopes `d0`, `dn`.
    pub fn clamped(x: Vec<f64>, y: Vec<f64>, d0: f64, dn: f64) -> Self {
        let n = x.len();
        assert!(n >= 3 && y.len() == n);
        assert!(x.windows(2).all(|w| w[1] > w[0]));
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        // row 0: h0/3 M0 + h0/6 M1 = (y1-y0)/h0 - d0
        let h0 = x[1] - x[0];
        c[0] = 0.5;
        d[0] = ((y[1] - y[0]) / h0 - d0) / (h0 / 3.0);
        for i in 1..n {
            let hl = x[i] - x[i - 1];
            let (a, b, cc, rhs) = if i < n - 1 {
                let hr = x[i + 1] - x[i];
                (hl / 6.0, (hl + hr) / 3.0, hr / 6.0, (y[i + 1] - y[i]) / hr - (y[i] - y[i - 1]) / hl)
            } else {
                (hl / 6.0, hl / 3.0, 0.0, dn - (y[i] - y[i - 1]) / hl)
            };
            let denom = b - a * c[i - 1];
            c[i] = cc / denom;
            d[i] = (rhs - a * d[i - 1]) / denom;
        }
        let mut m = vec![0.0; n];
        m[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        CubicSpline { x, y, m }
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, re: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|k| k.total_cmp(&re)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_complex(Complex64::new(x, 0.0)).re
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.derivative_complex(Complex64::new(x, 0.0)).re
    }

    /// Polynomial of the segment containing `Re z`, continued to complex `z`.
    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let i = self.segment(z.re);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - z) / h;
        let b = (z - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * (h * h / 6.0)
    }

    pub fn derivative_complex(&self, z: Complex64) -> Complex64 {
        let i = self.segment(z.re);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - z) / h;
        let b = (z - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h - (a * a * 3.0 - 1.0) * (h * self.m[i] / 6.0)
            + (b * b * 3.0 - 1.0) * (h * self.m[i + 1] / 6.0)
    }
}
