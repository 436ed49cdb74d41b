//! The Burkholder functions and the matrix form `L₁ = L ∘ α`.
//!
//! Every quantity here depends on the Wirtinger pair `(z, w) = (∂f, ∂̄f)`
//! only through the moduli `|z|` and `|w|`, except the gradient of `L`,
//! which is taken with respect to `(Re z, Im z, Re w, Im w)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pair of complex numbers standing for `(∂f, ∂̄f)` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WirtingerPair {
    z: Complex64,
    w: Complex64,
}

impl WirtingerPair {
    pub fn new(z: Complex64, w: Complex64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("z"));
        }
        if !(w.re.is_finite() && w.im.is_finite()) {
            return Err(Error::NonFinite("w"));
        }
        Ok(Self { z, w })
    }

    /// Pair with real components, mostly useful in tests and examples.
    pub fn real(z: f64, w: f64) -> Result<Self> {
        Self::new(Complex64::new(z, 0.0), Complex64::new(w, 0.0))
    }

    /// Caller guarantees finiteness.
    pub(crate) fn from_finite(z: Complex64, w: Complex64) -> Self {
        debug_assert!(z.re.is_finite() && z.im.is_finite() && w.re.is_finite() && w.im.is_finite());
        Self { z, w }
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn w(&self) -> Complex64 {
        self.w
    }

    /// `(|z|, |w|)`.
    pub fn moduli(&self) -> (f64, f64) {
        (self.z.norm(), self.w.norm())
    }

    /// The pair `(w, z)`; `(∂f̄, ∂̄f̄)` up to conjugation of both entries.
    pub fn swapped(&self) -> Self {
        Self {
            z: self.w,
            w: self.z,
        }
    }
}

/// An exponent `p > 1` with its derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponent {
    p: f64,
    pstar: f64,
    alpha: f64,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::invalid("p", format!("exponent must lie in (1, ∞), got {p}")));
        }
        let conjugate = p / (p - 1.0);
        let pstar = p.max(conjugate);
        let alpha = p * (1.0 - 1.0 / pstar).powf(p - 1.0);
        Ok(Self { p, pstar, alpha })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `p / (p - 1)`.
    pub fn conjugate(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    /// `max(p, p')`.
    pub fn pstar(&self) -> f64 {
        self.pstar
    }

    /// `p (1 - 1/p*)^(p-1)`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Real 2×2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if [a, b, c, d].iter().all(|v| v.is_finite()) {
            Ok(Self { a, b, c, d })
        } else {
            Err(Error::NonFinite("matrix entry"))
        }
    }

    pub const fn identity() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            d: 1.0,
        }
    }

    /// Rank-one matrix `u vᵀ`.
    pub fn outer(u: [f64; 2], v: [f64; 2]) -> Self {
        Self {
            a: u[0] * v[0],
            b: u[0] * v[1],
            c: u[1] * v[0],
            d: u[1] * v[1],
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    pub fn scale(&self, t: f64) -> Self {
        Self {
            a: t * self.a,
            b: t * self.b,
            c: t * self.c,
            d: t * self.d,
        }
    }

    pub fn add(&self, other: &Mat2) -> Self {
        Self {
            a: self.a + other.a,
            b: self.b + other.b,
            c: self.c + other.c,
            d: self.d + other.d,
        }
    }

    /// Membership in `E = {(|A|²+2det A)^½ + (|A|²−2det A)^½ ≤ 2}`.
    pub fn in_e_set(&self) -> bool {
        let (plus, minus) = self.det_roots();
        plus + minus <= 2.0
    }

    fn det_roots(&self) -> (f64, f64) {
        let n2 = self.norm_sq();
        let det = self.det();
        // both radicands are sums of squares; clamp rounding below zero
        ((n2 + 2.0 * det).max(0.0).sqrt(), (n2 - 2.0 * det).max(0.0).sqrt())
    }
}

/// `L` from the moduli `a = |z|`, `b = |w|`.
#[inline]
pub fn l_moduli(a: f64, b: f64) -> f64 {
    if a + b <= 1.0 {
        a * a - b * b
    } else {
        2.0 * a - 1.0
    }
}

/// `M = L − (|z|² − |w|²)` from the moduli.
#[inline]
pub fn m_moduli(a: f64, b: f64) -> f64 {
    if a + b <= 1.0 {
        0.0
    } else {
        b * b - (a - 1.0) * (a - 1.0)
    }
}

/// `Φ_p` from the moduli.
#[inline]
pub fn phi_moduli(a: f64, b: f64, p: &Exponent) -> f64 {
    let s = a + b;
    if s == 0.0 {
        return 0.0;
    }
    p.alpha * ((p.pstar - 1.0) * a - b) * s.powf(p.p - 1.0)
}

pub fn eval_l(pair: &WirtingerPair) -> f64 {
    let (a, b) = pair.moduli();
    l_moduli(a, b)
}

pub fn eval_m(pair: &WirtingerPair) -> f64 {
    let (a, b) = pair.moduli();
    m_moduli(a, b)
}

pub fn eval_phi(pair: &WirtingerPair, p: &Exponent) -> f64 {
    let (a, b) = pair.moduli();
    phi_moduli(a, b, p)
}

/// Gradient of `L` in `(Re z, Im z, Re w, Im w)`.
///
/// `L` is Lipschitz but kinked on `|z| + |w| = 1`; the inner branch is
/// used on the closed set `|z| + |w| ≤ 1`, and the `z` part is zero at
/// `z = 0` in the outer region.
#[inline]
pub fn grad_l_parts(z: Complex64, w: Complex64) -> [f64; 4] {
    let a = z.norm();
    let b = w.norm();
    if a + b <= 1.0 {
        [2.0 * z.re, 2.0 * z.im, -2.0 * w.re, -2.0 * w.im]
    } else if a == 0.0 {
        [0.0; 4]
    } else {
        [2.0 * z.re / a, 2.0 * z.im / a, 0.0, 0.0]
    }
}

pub fn grad_l(pair: &WirtingerPair) -> [f64; 4] {
    grad_l_parts(pair.z, pair.w)
}

/// The map `α: R^{2×2} → C²`; for `A = ∇f` this returns `(∂f, ∂̄f)`.
pub fn matrix_to_wirtinger(m: &Mat2) -> WirtingerPair {
    let z1 = Complex64::new(0.5 * (m.a + m.d), 0.5 * (m.c - m.b));
    let z2 = Complex64::new(0.5 * (m.a - m.d), 0.5 * (m.c + m.b));
    WirtingerPair::from_finite(z1, z2)
}

/// `L₁ = L ∘ α`.
pub fn eval_l1(m: &Mat2) -> f64 {
    eval_l(&matrix_to_wirtinger(m))
}

/// `L₁` through `det A` and `|A|`: `det A` on `E`, `(|A|²+2det A)^½ − 1` off it.
pub fn eval_l1_det_form(m: &Mat2) -> f64 {
    let (plus, minus) = m.det_roots();
    if plus + minus <= 2.0 {
        m.det()
    } else {
        plus - 1.0
    }
}
