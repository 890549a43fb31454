//! Metastable potential: harmonic well, linear barrier ramp, free region and
//! a quadratic complex absorbing tail.
//!
//! ```text
//! V(x) = ½ m ω² x²                 x ≤ L - δ
//!        cubic Hermite blend       L - δ < x < L + δ
//!        V_b (1 - (x - L)/w)       L + δ ≤ x ≤ L + w
//!        0                         L + w < x ≤ x_cap
//!        -i η (x - x_cap)²         x > x_cap
//! ```
//!
//! The blend matches value and slope of both neighbours at `L ± δ`, so the
//! real part is C¹ across the well/ramp junction. The ramp/free junction at
//! `L + w` is left as a kink.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the potential family, in units where ħ is carried explicitly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default = "unit")]
    pub hbar: f64,
    pub m: f64,
    pub omega: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "V_b")]
    pub v_b: f64,
    pub w: f64,
    pub x_cap: f64,
    pub eta: f64,
    pub delta: f64,
    /// Skip the `½ m ω² L² = V_b` continuity check.
    #[serde(default)]
    pub allow_discontinuous: bool,
}

fn unit() -> f64 {
    1.0
}

impl Default for PotentialSpec {
    /// m = ħ = ω = 1, L = 6, w = 0.9, V_b = 18, x_cap = L + w + 50,
    /// η = 3·10⁻⁴, δ = 0.3.
    fn default() -> Self {
        PotentialSpec {
            hbar: 1.0,
            m: 1.0,
            omega: 1.0,
            l: 6.0,
            v_b: 18.0,
            w: 0.9,
            x_cap: 6.0 + 0.9 + 50.0,
            eta: 3e-4,
            delta: 0.3,
            allow_discontinuous: false,
        }
    }
}

impl PotentialSpec {
    /// Same spec with the kink smoothing switched off.
    pub fn unsmoothed(mut self) -> Self {
        self.delta = 0.0;
        self
    }

    /// Oscillator length `d = √(ħ/mω)`.
    pub fn oscillator_length(&self) -> f64 {
        (self.hbar / (self.m * self.omega)).sqrt()
    }

    /// Harmonic level energy `ħω(n + ½)` for real `n`.
    pub fn harmonic_energy(&self, n: f64) -> f64 {
        self.hbar * self.omega * (n + 0.5)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPotential(msg));
        let finite = [
            self.hbar, self.m, self.omega, self.l, self.v_b, self.w, self.x_cap, self.eta, self.delta,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter".into());
        }
        if self.hbar <= 0.0 {
            return bad(format!("hbar must be positive, got {}", self.hbar));
        }
        if self.m <= 0.0 {
            return bad(format!("m must be positive, got {}", self.m));
        }
        if self.omega <= 0.0 {
            return bad(format!("omega must be positive, got {}", self.omega));
        }
        if self.w <= 0.0 {
            return bad(format!("w must be positive, got {}", self.w));
        }
        if self.v_b <= 0.0 {
            return bad(format!("V_b must be positive, got {}", self.v_b));
        }
        if self.eta < 0.0 {
            return bad(format!("eta must be non-negative, got {}", self.eta));
        }
        if self.delta < 0.0 {
            return bad(format!("delta must be non-negative, got {}", self.delta));
        }
        if self.l <= self.delta {
            return bad(format!("L = {} must exceed delta = {}", self.l, self.delta));
        }
        if self.delta >= self.w {
            return bad(format!("delta = {} must be smaller than w = {}", self.delta, self.w));
        }
        if self.x_cap < self.l + self.w {
            return bad(format!("x_cap = {} lies before the end of the ramp", self.x_cap));
        }
        if !self.allow_discontinuous {
            let well_edge = 0.5 * self.m * self.omega * self.omega * self.l * self.l;
            if ((well_edge - self.v_b) / self.v_b).abs() > 1e-9 {
                return bad(format!(
                    "well value ½mω²L² = {well_edge} does not meet V_b = {} at the junction",
                    self.v_b
                ));
            }
        }
        Ok(())
    }
}

/// Classical turning points at energy `energy`: `c < a` in the well, `b` at the barrier exit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TurningPoints {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub energy: f64,
}

/// Validated potential with precomputed smoothing polynomial.
#[derive(Clone, Debug)]
pub struct Potential {
    spec: PotentialSpec,
    /// Cubic in `t = (x - (L-δ)) / 2δ`, ascending powers.
    blend: [f64; 4],
    top: (f64, f64),
}

impl Potential {
    pub fn new(spec: PotentialSpec) -> Result<Self> {
        spec.validate()?;
        let mut pot = Potential { blend: [0.0; 4], top: (spec.l, spec.v_b), spec };
        if pot.spec.delta > 0.0 {
            pot.blend = pot.hermite_coefficients();
        }
        pot.top = pot.locate_top();
        Ok(pot)
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    fn harmonic(&self, x: f64) -> f64 {
        0.5 * self.spec.m * self.spec.omega * self.spec.omega * x * x
    }

    fn ramp(&self, x: f64) -> f64 {
        self.spec.v_b * (1.0 - (x - self.spec.l) / self.spec.w)
    }

    fn hermite_coefficients(&self) -> [f64; 4] {
        let s = &self.spec;
        let x0 = s.l - s.delta;
        let x1 = s.l + s.delta;
        let h = x1 - x0;
        let y0 = self.harmonic(x0);
        let m0 = s.m * s.omega * s.omega * x0;
        let y1 = self.ramp(x1);
        let m1 = -s.v_b / s.w;
        [
            y0,
            h * m0,
            -3.0 * y0 - 2.0 * h * m0 + 3.0 * y1 - h * m1,
            2.0 * y0 + h * m0 - 2.0 * y1 + h * m1,
        ]
    }

    fn in_blend(&self, x: f64) -> bool {
        let s = &self.spec;
        s.delta > 0.0 && x > s.l - s.delta && x < s.l + s.delta
    }

    fn blend_t(&self, x: f64) -> f64 {
        (x - (self.spec.l - self.spec.delta)) / (2.0 * self.spec.delta)
    }

    /// Real part of the potential (the CAP only contributes an imaginary part).
    pub fn real(&self, x: f64) -> f64 {
        let s = &self.spec;
        if self.in_blend(x) {
            let t = self.blend_t(x);
            let c = &self.blend;
            c[0] + t * (c[1] + t * (c[2] + t * c[3]))
        } else if x <= s.l {
            self.harmonic(x)
        } else if x <= s.l + s.w {
            self.ramp(x)
        } else {
            0.0
        }
    }

    /// Imaginary part: `-η (x - x_cap)²` beyond `x_cap`, zero elsewhere.
    pub fn imag(&self, x: f64) -> f64 {
        if x > self.spec.x_cap {
            let d = x - self.spec.x_cap;
            -self.spec.eta * d * d
        } else {
            0.0
        }
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        Complex64::new(self.real(x), self.imag(x))
    }

    /// dV/dx of the real part (one-sided from the right at the `L + w` kink).
    pub fn derivative(&self, x: f64) -> f64 {
        let s = &self.spec;
        if self.in_blend(x) {
            let t = self.blend_t(x);
            let c = &self.blend;
            (c[1] + t * (2.0 * c[2] + 3.0 * t * c[3])) / (2.0 * s.delta)
        } else if x <= s.l {
            s.m * s.omega * s.omega * x
        } else if x < s.l + s.w {
            -s.v_b / s.w
        } else {
            0.0
        }
    }

    /// d²V/dx² of the real part.
    pub fn second_derivative(&self, x: f64) -> f64 {
        let s = &self.spec;
        if self.in_blend(x) {
            let t = self.blend_t(x);
            let c = &self.blend;
            (2.0 * c[2] + 6.0 * t * c[3]) / (4.0 * s.delta * s.delta)
        } else if x <= s.l {
            s.m * s.omega * s.omega
        } else {
            0.0
        }
    }

    /// Points where the real part is not C^∞, in ascending order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let s = &self.spec;
        if s.delta > 0.0 {
            vec![s.l - s.delta, s.l + s.delta, s.l + s.w]
        } else {
            vec![s.l, s.l + s.w]
        }
    }

    /// Location and value of the barrier maximum.
    pub fn barrier_top(&self) -> (f64, f64) {
        self.top
    }

    fn locate_top(&self) -> (f64, f64) {
        let s = &self.spec;
        if s.delta == 0.0 {
            return (s.l, self.real(s.l).max(self.harmonic(s.l)));
        }
        let x0 = s.l - s.delta;
        let x1 = s.l + s.delta;
        let mut best = (x0, self.real(x0));
        if self.real(x1) > best.1 {
            best = (x1, self.real(x1));
        }
        // p'(t) = c1 + 2 c2 t + 3 c3 t²
        let c = &self.blend;
        let (qa, qb, qc) = (3.0 * c[3], 2.0 * c[2], c[1]);
        let mut roots = Vec::new();
        if qa.abs() < 1e-300 {
            if qb != 0.0 {
                roots.push(-qc / qb);
            }
        } else {
            let disc = qb * qb - 4.0 * qa * qc;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                roots.push((-qb + sq) / (2.0 * qa));
                roots.push((-qb - sq) / (2.0 * qa));
            }
        }
        for t in roots.into_iter().filter(|t| (0.0..=1.0).contains(t)) {
            let x = x0 + t * (x1 - x0);
            let v = self.real(x);
            if v > best.1 {
                best = (x, v);
            }
        }
        best
    }

    /// Step of the bracketing scan used by the turning-point search.
    fn scan_step(&self) -> f64 {
        let s = &self.spec;
        if s.delta > 0.0 {
            s.delta.min(s.w) / 8.0
        } else {
            s.w / 8.0
        }
    }

    /// Bisection of `Re V(x) = energy` on a bracket to 10⁻¹² absolute in x, then Newton-polished.
    fn bisect(&self, mut lo: f64, mut hi: f64, energy: f64, which: &'static str) -> Result<f64> {
        let f = |x: f64| self.real(x) - energy;
        let mut flo = f(lo);
        if flo == 0.0 {
            return Ok(lo);
        }
        if flo * f(hi) > 0.0 {
            return Err(Error::RootNotBracketed { which, energy });
        }
        while (hi - lo).abs() > 1e-12 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm == 0.0 {
                return Ok(mid);
            }
            if fm * flo < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fm;
            }
        }
        let mut root = 0.5 * (lo + hi);
        // Newton polish; quadratures with u² endpoint maps are sensitive to the root position.
        for _ in 0..3 {
            let d = self.derivative(root);
            if d == 0.0 {
                break;
            }
            let next = root - f(root) / d;
            if !(next >= lo.min(hi) - 1e-12 && next <= lo.max(hi) + 1e-12) || f(next).abs() >= f(root).abs() {
                break;
            }
            root = next;
        }
        if f(root).abs() > 1e-10 * self.spec.v_b {
            return Err(Error::RootNotBracketed { which, energy });
        }
        Ok(root)
    }

    /// Classical turning points `c < a < b` of `Re V(x) = energy`.
    pub fn turning_points(&self, energy: f64) -> Result<TurningPoints> {
        let s = &self.spec;
        if !(energy > 0.0 && energy < s.v_b) {
            return Err(Error::EnergyOutOfRange { energy, lo: 0.0, hi: s.v_b });
        }
        let step = self.scan_step();
        let (x_top, v_top) = self.top;
        if energy >= v_top {
            return Err(Error::RootNotBracketed { which: "a", energy });
        }

        // c: leftward from the well minimum.
        let mut prev = 0.0;
        let mut x = -step;
        let mut guard = 0usize;
        while self.real(x) < energy {
            prev = x;
            x -= step;
            guard += 1;
            if guard > 100_000_000 {
                return Err(Error::RootNotBracketed { which: "c", energy });
            }
        }
        let c = self.bisect(x, prev, energy, "c")?;

        // a: rightward from the minimum up to the barrier top.
        let mut prev = 0.0;
        let mut x = step.min(x_top);
        loop {
            if self.real(x) >= energy {
                break;
            }
            if x >= x_top {
                return Err(Error::RootNotBracketed { which: "a", energy });
            }
            prev = x;
            x = (x + step).min(x_top);
        }
        let a = self.bisect(prev, x, energy, "a")?;

        // b: rightward from the top to the end of the ramp.
        let end = s.l + s.w;
        let mut prev = x_top;
        let mut x = (x_top + step).min(end);
        loop {
            if self.real(x) <= energy {
                break;
            }
            if x >= end {
                return Err(Error::RootNotBracketed { which: "b", energy });
            }
            prev = x;
            x = (x + step).min(end);
        }
        let b = self.bisect(prev, x, energy, "b")?;

        if !(c < a && a < b) {
            return Err(Error::RootNotBracketed { which: "ordering", energy });
        }
        Ok(TurningPoints { c, a, b, energy })
    }
}
