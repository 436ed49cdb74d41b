//! Integral identities for `L` and `M`, the upper bound for `Φ_p`,
//! rank-one convexity probes of `L₁`, and three families of maps glued
//! across the unit circle whose energies are known to be nonnegative.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{eval_l1, l_moduli, m_moduli, matrix_to_wirtinger, phi_moduli, Exponent, Mat2, WirtingerPair};
use crate::quadrature::{integrate, integrate_log_scale, periodic_mean, QuadOptions};
use crate::radial::{integrate_radial, power_moment, StretchProfile};
use crate::rng::item_stream;

/// Angles used for circle means.
pub const CIRCLE_POINTS: usize = 512;

/// Both sides of a moment identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs|` over `max(|rhs|, |c|·α_p·(|z|+|w|)^p)`, where `c` is the
    /// identity's constant; the second term keeps zeros of `Φ_p` meaningful.
    pub relative_error: f64,
}

fn moment_check(lhs: f64, rhs: f64, constant: f64, p: &Exponent, s: f64) -> IdentityCheck {
    let scale = (constant.abs() * p.alpha() * s.powf(p.p())).max(rhs.abs());
    IdentityCheck {
        lhs,
        rhs,
        relative_error: (lhs - rhs).abs() / scale,
    }
}

fn nonzero_sum(pair: &WirtingerPair) -> Result<(f64, f64, f64)> {
    let (a, b) = pair.moduli();
    let s = a + b;
    if s == 0.0 {
        return Err(Error::invalid("pair", "(z, w) must not vanish"));
    }
    Ok((a, b, s))
}

fn moment_options() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-13,
        ..QuadOptions::default()
    }
}

/// `∫₀^∞ t^{p−1} L(z/t, w/t) dt` against `β_p Φ_p(z, w)` for `1 < p < 2`,
/// with `β_p = (½p(2−p)α_p)^{−1}`.
pub fn check_l_moment_identity(pair: &WirtingerPair, p: &Exponent) -> Result<IdentityCheck> {
    let q = p.p();
    if !(q < 2.0) {
        return Err(Error::invalid("p", format!("the L moment identity needs 1 < p < 2, got {q}")));
    }
    let (a, b, s) = nonzero_sum(pair)?;
    let f = |t: f64| t.powf(q - 1.0) * l_moduli(a / t, b / t);
    let opts = moment_options();
    let head = integrate_log_scale(f, s, &[], false, &opts)?;
    let tail = integrate_log_scale(f, s, &[], true, &opts)?;
    let beta = 1.0 / (0.5 * q * (2.0 - q) * p.alpha());
    let rhs = beta * phi_moduli(a, b, p);
    Ok(moment_check(head.value + tail.value, rhs, beta, p, s))
}

/// `∫₀^∞ t^{p−1} M(w/t, z/t) dt` against `γ_p Φ_p(z, w)` for `p > 2`,
/// with `γ_p = (½p(p−1)(p−2)α_p)^{−1}`. The integrand vanishes for
/// `t ≥ |z| + |w|`.
pub fn check_m_moment_identity(pair: &WirtingerPair, p: &Exponent) -> Result<IdentityCheck> {
    let q = p.p();
    if !(q > 2.0) {
        return Err(Error::invalid("p", format!("the M moment identity needs p > 2, got {q}")));
    }
    let (a, b, s) = nonzero_sum(pair)?;
    let f = |t: f64| t.powf(q - 1.0) * m_moduli(b / t, a / t);
    let lhs = integrate_log_scale(f, s, &[], false, &moment_options())?.value;
    let gamma = 1.0 / (0.5 * q * (q - 1.0) * (q - 2.0) * p.alpha());
    let rhs = gamma * phi_moduli(a, b, p);
    Ok(moment_check(lhs, rhs, gamma, p, s))
}

/// `(p*−1)^p |z|^p − |w|^p − Φ_p(z, w)`, which is never negative.
pub fn phi_upper_bound_gap(pair: &WirtingerPair, p: &Exponent) -> f64 {
    let (a, b) = pair.moduli();
    let q = p.p();
    ((p.pstar() - 1.0) * a).powf(q) - b.powf(q) - phi_moduli(a, b, p)
}

/// Moduli and exponents for a grid of identity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityGrid {
    pub moduli: Vec<f64>,
    /// Exponents in `(1, 2)`, checked against the `L` identity.
    pub lower_exponents: Vec<f64>,
    /// Exponents above 2, checked against the `M` identity.
    pub upper_exponents: Vec<f64>,
}

impl Default for IdentityGrid {
    fn default() -> Self {
        Self {
            moduli: vec![0.1, 0.5, 1.0, 2.0, 4.0],
            lower_exponents: vec![1.2, 1.5, 1.8],
            upper_exponents: vec![2.5, 3.0, 5.0],
        }
    }
}

/// One grid point of [`identity_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityPoint {
    pub z: f64,
    pub w: f64,
    pub p: f64,
    pub check: IdentityCheck,
}

/// Runs both identities over every `(|z|, |w|, p)` of the grid. Phases are
/// fixed and distinct so that the complex arguments are exercised.
pub fn identity_grid(grid: &IdentityGrid) -> Result<Vec<IdentityPoint>> {
    let mut out = Vec::new();
    let exps = grid.lower_exponents.iter().chain(&grid.upper_exponents);
    for (k, &q) in exps.enumerate() {
        let p = Exponent::new(q)?;
        for (i, &zm) in grid.moduli.iter().enumerate() {
            for (j, &wm) in grid.moduli.iter().enumerate() {
                let z = Complex64::from_polar(zm, 0.7 * i as f64 + 0.1 * k as f64);
                let w = Complex64::from_polar(wm, -1.3 * j as f64);
                let pair = WirtingerPair::new(z, w)?;
                let check = if q < 2.0 {
                    check_l_moment_identity(&pair, &p)?
                } else {
                    check_m_moment_identity(&pair, &p)?
                };
                out.push(IdentityPoint { z: zm, w: wm, p: q, check });
            }
        }
    }
    Ok(out)
}

/// A base matrix and a rank-one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOneProbe {
    pub base: Mat2,
    pub direction: Mat2,
}

/// A midpoint triple where `L₁` along the line fails convexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexityViolation {
    pub probe: RankOneProbe,
    pub t1: f64,
    pub t2: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    /// Largest `g(mid) − ½(g(t₁) + g(t₂))` over grid pairs.
    pub max_midpoint_excess: f64,
    /// Largest gap between `L₁(A + tB)` and the piecewise closed form.
    pub max_closed_form_error: f64,
    pub violation: Option<ConvexityViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneReport {
    pub trials: usize,
    pub max_midpoint_excess: f64,
    pub max_closed_form_error: f64,
    pub violations: Vec<ConvexityViolation>,
}

impl RankOneReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.violations.is_empty() && self.max_closed_form_error <= tolerance
    }
}

/// Midpoint slack allowed before a triple counts as a violation.
pub const MIDPOINT_TOLERANCE: f64 = 1e-12;
pub const PROBE_POINTS: usize = 101;
pub const PROBE_HALF_WIDTH: f64 = 5.0;

impl RankOneProbe {
    /// `A` with entries uniform in `[−1, 1]` and `B = s·u vᵀ` with unit `u, v`
    /// and `s` log-uniform in `[10⁻², 10²]`.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut e = || rng.gen_range(-1.0..=1.0);
        let base = Mat2 {
            a: e(),
            b: e(),
            c: e(),
            d: e(),
        };
        let (tu, tv): (f64, f64) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
        let s = 10f64.powf(rng.gen_range(-2.0..=2.0));
        let direction = Mat2::outer([tu.cos(), tu.sin()], [tv.cos(), tv.sin()]).scale(s);
        Self { base, direction }
    }

    /// The piecewise formula for `t ↦ L₁(A + tB)`: affine where the line is in
    /// `E`, `2|z₁ + t w₁| − 1` elsewhere.
    pub fn closed_form(&self, t: f64) -> f64 {
        let a = matrix_to_wirtinger(&self.base);
        let b = matrix_to_wirtinger(&self.direction);
        let (z1, z2, w1, w2) = (a.z(), a.w(), b.z(), b.w());
        if (z1 + w1 * t).norm() + (z2 + w2 * t).norm() <= 1.0 {
            let c0 = z1.norm_sqr() - z2.norm_sqr();
            let c1 = 2.0 * (z1 * w1.conj() - z2 * w2.conj()).re;
            c0 + c1 * t
        } else {
            2.0 * (z1 + w1 * t).norm() - 1.0
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_l1(&self.base.add(&self.direction.scale(t)))
    }

    /// Midpoint convexity over all grid pairs of equal parity, together with
    /// the closed-form cross-check.
    pub fn run(&self, grid: &[f64]) -> ProbeOutcome {
        let values: Vec<f64> = grid.iter().map(|&t| self.eval(t)).collect();
        let max_closed_form_error = grid
            .iter()
            .zip(&values)
            .map(|(&t, &v)| (v - self.closed_form(t)).abs())
            .fold(0.0, f64::max);
        let mut worst = f64::NEG_INFINITY;
        let mut violation = None;
        for i in 0..grid.len() {
            for j in (i + 2..grid.len()).step_by(2) {
                let excess = values[(i + j) / 2] - 0.5 * (values[i] + values[j]);
                if excess > worst {
                    worst = excess;
                }
                if excess > MIDPOINT_TOLERANCE && violation.is_none() {
                    violation = Some(ConvexityViolation {
                        probe: *self,
                        t1: grid[i],
                        t2: grid[j],
                        excess,
                    });
                }
            }
        }
        ProbeOutcome {
            max_midpoint_excess: worst,
            max_closed_form_error,
            violation,
        }
    }
}

/// Draws `trials` probes from per-trial streams of `seed` and runs each on an
/// equispaced grid over `[−5, 5]`.
pub fn rank_one_convexity_test(trials: usize, seed: u64) -> Result<RankOneReport> {
    if trials == 0 {
        return Err(Error::invalid("trials", "at least one trial is required"));
    }
    let grid = crate::optimizer::linspace(-PROBE_HALF_WIDTH, PROBE_HALF_WIDTH, PROBE_POINTS);
    let outcomes: Vec<ProbeOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|k| RankOneProbe::random(&mut item_stream(seed, k)).run(&grid))
        .collect();
    Ok(RankOneReport {
        trials,
        max_midpoint_excess: outcomes.iter().map(|o| o.max_midpoint_excess).fold(f64::NEG_INFINITY, f64::max),
        max_closed_form_error: outcomes.iter().map(|o| o.max_closed_form_error).fold(0.0, f64::max),
        violations: outcomes.into_iter().filter_map(|o| o.violation).collect(),
    })
}

/// `∫_ℂ L(∂f, ∂̄f)` for `f = a z^k + b z̄^k` in the closed disk, glued to
/// `a z̄^{−k} + b z^{−k}` outside. Both pieces are radial, so the integral is
/// a sum of power moments split where `|∂f| + |∂̄f|` crosses 1.
pub fn monomial_pair_integral(a: Complex64, b: Complex64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k", "degree must be positive"));
    }
    if !(a.re.is_finite() && a.im.is_finite() && b.re.is_finite() && b.im.is_finite()) {
        return Err(Error::NonFinite("coefficient"));
    }
    let (ma, mb) = (a.norm(), b.norm());
    if ma == 0.0 && mb == 0.0 {
        return Err(Error::invalid("coefficients", "a and b must not both vanish"));
    }
    let kf = k as f64;
    let s = (ma + mb) * kf;
    let diff = (ma * ma - mb * mb) * kf * kf;

    // disk: moduli (|a|, |b|)·k r^{k−1}; the E-set is (ρ, 1] with ρ = s^{−1/(k−1)}
    let rho = if k == 1 {
        if s > 1.0 {
            0.0
        } else {
            1.0
        }
    } else {
        s.powf(-1.0 / (kf - 1.0)).min(1.0)
    };
    let inner = diff * power_moment(2.0 * kf - 1.0, 0.0, rho)?
        + 2.0 * ma * kf * power_moment(kf, rho, 1.0)?
        - 0.5 * (1.0 - rho * rho);

    // exterior: moduli (|b|, |a|)·k r^{−k−1}; the E-set is [1, ρ′) with ρ′ = s^{1/(k+1)}
    let rho_out = s.powf(1.0 / (kf + 1.0)).max(1.0);
    let outer = 2.0 * mb * kf * power_moment(-kf, 1.0, rho_out)? - 0.5 * (rho_out * rho_out - 1.0)
        - diff * power_moment(-2.0 * kf - 1.0, rho_out, f64::INFINITY)?;

    Ok(TAU * (inner + outer))
}

fn poly_eval(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

fn poly_derivative(coeffs: &[Complex64]) -> Vec<Complex64> {
    coeffs.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect()
}

fn check_coeffs(name: &'static str, coeffs: &[Complex64]) -> Result<()> {
    if coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(name))
    }
}

/// Circle means over `|z| = r` of `|g′|(|g′|+|h′|)^{p−1}` and `|h′|(|g′|+|h′|)^{p−1}`,
/// taking the coefficient lists of `g′` and `h′`.
pub fn circle_means(dg: &[Complex64], dh: &[Complex64], p: f64, r: f64) -> (f64, f64) {
    let mut second = 0.0;
    let first = periodic_mean(
        |t| {
            let z = Complex64::from_polar(r, t);
            let (u, v) = (poly_eval(dg, z).norm(), poly_eval(dh, z).norm());
            let w = (u + v).powf(p - 1.0);
            second += v * w;
            u * w
        },
        CIRCLE_POINTS,
    );
    (first, second / CIRCLE_POINTS as f64)
}

/// `∫_ℂ Φ_p(∂f, ∂̄f)` for `f = g + h̄` in the disk, extended by `f(1/z̄)`,
/// with `g`, `h` polynomials given by ascending coefficients and `p > 2`.
///
/// The exterior is folded onto the disk by inversion, which leaves
/// `2πα_p ∫₀¹ [((p−1) − r^{2p−4}) I₁ + ((p−1) r^{2p−4} − 1) I₂] r dr`
/// with `I₁`, `I₂` from [`circle_means`].
pub fn harmonic_family_integral(g: &[Complex64], h: &[Complex64], p: &Exponent) -> Result<f64> {
    let q = p.p();
    if !(q > 2.0) {
        return Err(Error::invalid("p", format!("the harmonic family needs p > 2, got {q}")));
    }
    check_coeffs("g coefficient", g)?;
    check_coeffs("h coefficient", h)?;
    let (dg, dh) = (poly_derivative(g), poly_derivative(h));
    let est = integrate(
        |r| {
            let (i1, i2) = circle_means(&dg, &dh, q, r);
            let w = r.powf(2.0 * q - 4.0);
            r * (((q - 1.0) - w) * i1 + ((q - 1.0) * w - 1.0) * i2)
        },
        0.0,
        1.0,
        &[],
        &QuadOptions::default(),
    )?;
    Ok(TAU * p.alpha() * est.value)
}

/// Largest decrease of `I₁` or `I₂` between consecutive radii of `radii`.
pub fn circle_mean_decrease(g: &[Complex64], h: &[Complex64], p: f64, radii: &[f64]) -> f64 {
    let (dg, dh) = (poly_derivative(g), poly_derivative(h));
    let means: Vec<(f64, f64)> = radii.iter().map(|&r| circle_means(&dg, &dh, p, r)).collect();
    means
        .windows(2)
        .map(|w| (w[0].0 - w[1].0).max(w[0].1 - w[1].1))
        .fold(0.0, f64::max)
}

/// `∫_ℂ Φ_p` for `F ∘ f₁` (or its conjugate) where `f₁` is the stretch map of
/// `profile` and `F` a polynomial. By the chain rule and homogeneity the
/// integrand is `|F′(f₁)|^p Φ_p(∂f₁, ∂̄f₁)`, with the `Φ_p` arguments swapped
/// for the conjugate; angles are averaged by the trapezoid rule.
pub fn composite_family_integral(
    outer: &[Complex64],
    profile: &StretchProfile,
    p: &Exponent,
    conjugate: bool,
) -> Result<f64> {
    check_coeffs("outer coefficient", outer)?;
    let df = poly_derivative(outer);
    if df.iter().all(|c| *c == Complex64::new(0.0, 0.0)) {
        return Ok(0.0);
    }
    let q = p.p();
    let est = integrate_radial(
        profile,
        |r, a, b| {
            let phi = if conjugate { phi_moduli(b, a, p) } else { phi_moduli(a, b, p) };
            if phi == 0.0 {
                return 0.0;
            }
            let rho = profile.value(r);
            phi * periodic_mean(|t| poly_eval(&df, Complex64::from_polar(rho, t)).norm().powf(q), CIRCLE_POINTS)
        },
        &QuadOptions::default(),
    )
    .map_err(|e| match e {
        // only an unbounded integrand overflows here
        Error::NonFinite(_) => Error::Divergent("composite integrand overflows".into()),
        e => e,
    })?;
    if !est.value.is_finite() {
        return Err(Error::Divergent("composite energy is not finite".into()));
    }
    Ok(est.value)
}

/// A map of the plane given separately on the closed unit disk and outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum AnnulusFunction {
    /// `a z^k + b z̄^k` inside, `a z̄^{−k} + b z^{−k}` outside.
    Monomial { a: Complex64, b: Complex64, k: u32 },
    /// `g + h̄` inside, reflected by `z ↦ 1/z̄` outside.
    Harmonic { g: Vec<Complex64>, h: Vec<Complex64> },
    /// `F ∘ f₁` or its conjugate for a stretch `f₁`.
    Composite {
        outer: Vec<Complex64>,
        profile: StretchProfile,
        conjugate: bool,
    },
}

/// Largest mismatch allowed between the two pieces on the unit circle.
pub const GLUE_TOLERANCE: f64 = 1e-10;

impl AnnulusFunction {
    pub fn eval_inner(&self, z: Complex64) -> Complex64 {
        match self {
            Self::Monomial { a, b, k } => a * z.powu(*k) + b * z.conj().powu(*k),
            Self::Harmonic { g, h } => poly_eval(g, z) + poly_eval(h, z).conj(),
            Self::Composite { .. } => self.eval_outer(z),
        }
    }

    pub fn eval_outer(&self, z: Complex64) -> Complex64 {
        match self {
            Self::Monomial { a, b, k } => {
                let k = -(*k as i32);
                a * z.conj().powi(k) + b * z.powi(k)
            }
            Self::Harmonic { .. } => self.eval_inner(z.conj().inv()),
            Self::Composite {
                outer,
                profile,
                conjugate,
            } => {
                let r = z.norm();
                let inner = if r == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    z * (profile.value(r) / r)
                };
                let v = poly_eval(outer, inner);
                if *conjugate {
                    v.conj()
                } else {
                    v
                }
            }
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        if z.norm() <= 1.0 {
            self.eval_inner(z)
        } else {
            self.eval_outer(z)
        }
    }

    /// Largest `|inner − outer|` over `samples` points of the unit circle.
    pub fn glue_defect(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|k| {
                let z = Complex64::from_polar(1.0, TAU * k as f64 / samples as f64);
                (self.eval_inner(z) - self.eval_outer(z)).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn check_continuity(&self) -> Result<f64> {
        let defect = self.glue_defect(CIRCLE_POINTS);
        if defect <= GLUE_TOLERANCE {
            Ok(defect)
        } else {
            Err(Error::invalid(
                "function",
                format!("pieces disagree by {defect:e} on the unit circle"),
            ))
        }
    }
}

/// Complex number with both parts uniform in `[−1, 1]`.
pub fn random_coefficient(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
}

/// Polynomial of random degree at most `max_degree`.
pub fn random_polynomial(rng: &mut impl Rng, max_degree: usize) -> Vec<Complex64> {
    let degree = rng.gen_range(0..=max_degree);
    (0..=degree).map(|_| random_coefficient(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::eval_phi;
    use crate::radial::{integral_phi_stretch, stretch_derivatives};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn ex(p: f64) -> Exponent {
        Exponent::new(p).unwrap()
    }

    /// `(∂f, ∂̄f)` of `f` at `z` by central differences.
    fn wirtinger_fd(f: &dyn Fn(Complex64) -> Complex64, z: Complex64, h: f64) -> (Complex64, Complex64) {
        let fx = (f(z + h) - f(z - h)) / (2.0 * h);
        let fy = (f(z + c(0.0, h)) - f(z - c(0.0, h))) / (2.0 * h);
        let i = c(0.0, 1.0);
        (0.5 * (fx - i * fy), 0.5 * (fx + i * fy))
    }

    #[test]
    fn l_moment_examples() {
        let p = ex(1.5);
        let chk = check_l_moment_identity(&WirtingerPair::real(1.0, 0.0).unwrap(), &p).unwrap();
        assert!(chk.relative_error < 1e-6, "{chk:?}");
        assert!(chk.rhs > 0.0);
        // |z| = |w|: Φ_p ∝ (p* − 2) > 0
        let chk = check_l_moment_identity(&WirtingerPair::new(c(0.6, 0.8), c(0.0, -1.0)).unwrap(), &p).unwrap();
        assert!(chk.relative_error < 1e-6);
        assert_eq!(chk.lhs.signum(), chk.rhs.signum());
        let chk = check_l_moment_identity(&WirtingerPair::real(0.0, 2.0).unwrap(), &p).unwrap();
        assert!(chk.relative_error < 1e-6 && chk.rhs < 0.0);
    }

    #[test]
    fn l_moment_scales_homogeneously() {
        let p = ex(1.3);
        let pair = WirtingerPair::new(c(0.3, -0.2), c(0.5, 0.1)).unwrap();
        let base = check_l_moment_identity(&pair, &p).unwrap();
        let lam = c(-1.7, 0.9);
        let scaled = WirtingerPair::new(pair.z() * lam, pair.w() * lam).unwrap();
        let big = check_l_moment_identity(&scaled, &p).unwrap();
        let factor = lam.norm().powf(1.3);
        assert!((big.lhs - factor * base.lhs).abs() < 1e-8 * big.lhs.abs());
        assert!((big.rhs - factor * base.rhs).abs() < 1e-12 * big.rhs.abs());
    }

    #[test]
    fn m_moment_examples() {
        let chk = check_m_moment_identity(&WirtingerPair::real(1.0, 0.0).unwrap(), &ex(3.0)).unwrap();
        assert!(chk.relative_error < 1e-6, "{chk:?}");
        let chk = check_m_moment_identity(&WirtingerPair::real(0.0, 1.0).unwrap(), &ex(4.0)).unwrap();
        assert!(chk.lhs < 0.0 && chk.rhs < 0.0 && chk.relative_error < 1e-6, "{chk:?}");
        // compact support
        let (a, b) = (0.4, 0.9);
        for t in [1.3, 2.0, 50.0] {
            assert_eq!(m_moduli(b / t, a / t), 0.0);
        }
    }

    #[test]
    fn moment_identities_reject_wrong_range() {
        let pair = WirtingerPair::real(1.0, 0.5).unwrap();
        assert!(check_l_moment_identity(&pair, &ex(2.0)).is_err());
        assert!(check_l_moment_identity(&pair, &ex(3.0)).is_err());
        assert!(check_m_moment_identity(&pair, &ex(2.0)).is_err());
        assert!(check_m_moment_identity(&pair, &ex(1.5)).is_err());
        let zero = WirtingerPair::real(0.0, 0.0).unwrap();
        assert!(check_l_moment_identity(&zero, &ex(1.5)).is_err());
    }

    #[test]
    fn identity_grid_passes() {
        let points = identity_grid(&IdentityGrid::default()).unwrap();
        assert_eq!(points.len(), 150);
        for pt in &points {
            assert!(pt.check.relative_error < 1e-6, "{pt:?}");
        }
    }

    #[test]
    fn bound_gap_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let pair = WirtingerPair::new(random_coefficient(&mut rng), random_coefficient(&mut rng)).unwrap();
            let (a, b) = pair.moduli();
            assert!(phi_upper_bound_gap(&pair, &ex(2.0)).abs() < 1e-14 * (1.0 + a * a + b * b));
        }
        for q in [1.2, 1.5, 3.0, 5.0] {
            let p = ex(q);
            let at = WirtingerPair::real(1.0, p.pstar() - 1.0).unwrap();
            assert!(phi_upper_bound_gap(&at, &p) >= -1e-10);
            let unit = WirtingerPair::real(0.0, 1.0).unwrap();
            assert!((phi_upper_bound_gap(&unit, &p) - (p.alpha() - 1.0)).abs() < 1e-14);
        }
        for k in 1..200 {
            assert!(ex(1.0 + 0.05 * k as f64).alpha() >= 1.0);
        }
    }

    #[test]
    fn rank_one_kernel_line() {
        // through the origin g is 0 on I since |w₁| = |w₂| for rank one
        let probe = RankOneProbe {
            base: Mat2::default(),
            direction: Mat2::outer([0.6, 0.8], [1.0, 0.0]).scale(0.3),
        };
        let grid = crate::optimizer::linspace(-5.0, 5.0, PROBE_POINTS);
        let out = probe.run(&grid);
        assert!(out.violation.is_none());
        assert!(probe.eval(1.0).abs() < 1e-15);
        assert!(out.max_closed_form_error < 1e-14);
    }

    #[test]
    fn rank_one_batch_is_convex() {
        let report = rank_one_convexity_test(500, 11).unwrap();
        assert!(report.violations.is_empty(), "{:?}", report.violations.first());
        assert!(report.max_closed_form_error <= 1e-12, "{}", report.max_closed_form_error);
        assert_eq!(report, rank_one_convexity_test(500, 11).unwrap());
        assert!(rank_one_convexity_test(0, 1).is_err());
    }

    #[test]
    fn full_rank_line_detects_concavity() {
        // along diag(1, −1) the determinant is −t², so midpoint convexity fails inside E
        let probe = RankOneProbe {
            base: Mat2::default(),
            direction: Mat2 {
                a: 0.1,
                b: 0.0,
                c: 0.0,
                d: -0.1,
            },
        };
        let grid = crate::optimizer::linspace(-5.0, 5.0, PROBE_POINTS);
        assert!(probe.run(&grid).violation.is_some());
    }

    #[test]
    fn monomial_extremal_is_zero() {
        let v = monomial_pair_integral(c(1.0, 0.0), c(0.0, 0.0), 1).unwrap();
        assert!(v.abs() < 1e-14, "{v}");
        assert!(monomial_pair_integral(c(0.0, 0.0), c(0.0, 0.0), 2).is_err());
        assert!(monomial_pair_integral(c(1.0, 0.0), c(0.0, 0.0), 0).is_err());
    }

    #[test]
    fn monomial_phase_invariance() {
        let (a, b) = (c(0.3, -0.8), c(0.2, 0.4));
        let phase = Complex64::from_polar(1.0, 2.1);
        for k in 1..=5 {
            let v = monomial_pair_integral(a, b, k).unwrap();
            let w = monomial_pair_integral(a * phase, b * phase, k).unwrap();
            assert!((v - w).abs() < 1e-13 * (1.0 + v.abs()));
        }
    }

    /// Polar quadrature of `L` with derivatives taken numerically from the
    /// glued map itself.
    fn monomial_oracle(a: Complex64, b: Complex64, k: u32) -> f64 {
        let func = AnnulusFunction::Monomial { a, b, k };
        let lval = |r: f64| {
            let z = Complex64::from_polar(r, 0.37);
            let (dz, dzb) = wirtinger_fd(&|u| func.eval(u), z, 1e-6 * r.min(1.0));
            l_moduli(dz.norm(), dzb.norm())
        };
        let kf = k as f64;
        let s = (a.norm() + b.norm()) * kf;
        let mut cuts = vec![];
        if k > 1 && s > 1.0 {
            cuts.push(s.powf(-1.0 / (kf - 1.0)));
        }
        let opts = QuadOptions::with_abs_tol(1e-9);
        let inner = integrate(|r| r * lval(r), 0.0, 1.0, &cuts, &opts).unwrap().value;
        let mut cuts = vec![];
        if s > 1.0 {
            cuts.push(1.0 / s.powf(1.0 / (kf + 1.0)));
        }
        // r = 1/u on the exterior
        let outer = integrate(|u| if u == 0.0 { 0.0 } else { lval(1.0 / u) / (u * u * u) }, 0.0, 1.0, &cuts, &opts)
            .unwrap()
            .value;
        TAU * (inner + outer)
    }

    #[test]
    fn monomial_matches_numerical_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let (a, b) = (random_coefficient(&mut rng), random_coefficient(&mut rng));
            let k = rng.gen_range(1..=5);
            let closed = monomial_pair_integral(a, b, k).unwrap();
            let oracle = monomial_oracle(a, b, k);
            assert!((closed - oracle).abs() < 1e-6 * (1.0 + closed.abs()), "k={k}: {closed} vs {oracle}");
            assert!(closed >= -1e-8);
        }
    }

    #[test]
    fn harmonic_holomorphic_example() {
        let p = ex(3.0);
        let g = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let v = harmonic_family_integral(&g, &[], &p).unwrap();
        // I₁ = 1, I₂ = 0: 2πα ∫ (2 − r²) r dr = 2πα·3/4
        assert!((v - TAU * p.alpha() * 0.75).abs() < 1e-12, "{v}");
        assert!(harmonic_family_integral(&g, &[], &ex(2.0)).is_err());
    }

    /// Two-dimensional polar quadrature of `Φ_p` from numerical derivatives.
    fn harmonic_oracle(func: &AnnulusFunction, p: &Exponent) -> f64 {
        let ring = |r: f64| {
            periodic_mean(
                |t| {
                    let z = Complex64::from_polar(r, t);
                    let (dz, dzb) = wirtinger_fd(&|u| func.eval(u), z, 1e-6 * r.min(1.0));
                    eval_phi(&WirtingerPair::new(dz, dzb).unwrap(), p)
                },
                256,
            )
        };
        let opts = QuadOptions::with_abs_tol(1e-9);
        let inner = integrate(|r| r * ring(r), 0.0, 1.0, &[], &opts).unwrap().value;
        let outer = integrate(|u| if u == 0.0 { 0.0 } else { ring(1.0 / u) / (u * u * u) }, 0.0, 1.0, &[], &opts)
            .unwrap()
            .value;
        TAU * (inner + outer)
    }

    #[test]
    fn harmonic_matches_direct_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = ex(3.0);
        for _ in 0..4 {
            let g = random_polynomial(&mut rng, 3);
            let h = random_polynomial(&mut rng, 3);
            let v = harmonic_family_integral(&g, &h, &p).unwrap();
            let func = AnnulusFunction::Harmonic { g, h };
            assert!(func.check_continuity().is_ok());
            let oracle = harmonic_oracle(&func, &p);
            assert!((v - oracle).abs() < 1e-5 * (1.0 + v.abs()), "{v} vs {oracle}");
        }
    }

    #[test]
    fn harmonic_random_nonnegative_and_monotone() {
        let p = ex(3.0);
        let radii = crate::optimizer::linspace(0.0, 1.0, 41);
        for k in 0..20 {
            let mut rng = item_stream(5, k);
            let g = random_polynomial(&mut rng, 4);
            let h = random_polynomial(&mut rng, 4);
            assert!(harmonic_family_integral(&g, &h, &p).unwrap() >= -1e-6);
            assert!(circle_mean_decrease(&g, &h, 3.0, &radii) <= 1e-12);
        }
    }

    #[test]
    fn composite_identity_reduces_to_stretch() {
        let id = vec![c(0.0, 0.0), c(1.0, 0.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let g = crate::radial::random_power_profile(&mut rng);
            for (q, conj) in [(1.5, false), (3.0, true), (3.0, false)] {
                let p = ex(q);
                let direct = match integral_phi_stretch(&g, &p, conj) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                let v = composite_family_integral(&id, &g, &p, conj).unwrap();
                assert!((v - direct).abs() < 1e-7 * (1.0 + direct.abs()), "{v} vs {direct}");
            }
        }
    }

    #[test]
    fn composite_square_on_s1_profile() {
        let g = StretchProfile::power(1.0, 0.5, 0.5).unwrap();
        let sq = vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let v = composite_family_integral(&sq, &g, &ex(1.5), false).unwrap();
        assert!(v >= -1e-6, "{v}");
    }

    #[test]
    fn composite_integrand_follows_chain_rule() {
        let g = StretchProfile::sampled(vec![0.0, 0.7, 1.6], vec![0.0, 1.1, 0.4], 0.6).unwrap();
        let outer = vec![c(0.2, 0.1), c(1.0, -0.3), c(0.0, 0.5), c(0.3, 0.0)];
        let p = ex(3.0);
        for conjugate in [false, true] {
            let func = AnnulusFunction::Composite {
                outer: outer.clone(),
                profile: g.clone(),
                conjugate,
            };
            for (r, t) in [(0.3, 0.4), (1.1, 2.0), (2.5, -1.0)] {
                let z = Complex64::from_polar(r, t);
                let (dz, dzb) = wirtinger_fd(&|u| func.eval(u), z, 1e-7);
                let numeric = eval_phi(&WirtingerPair::new(dz, dzb).unwrap(), &p);
                let (a, b) = stretch_derivatives(&g, r).unwrap();
                let fp = poly_eval(&poly_derivative(&outer), z * (g.value(r) / r)).norm();
                let (a, b) = if conjugate { (b, a) } else { (a, b) };
                let formula = fp.powf(3.0) * phi_moduli(a, b, &p);
                assert!((numeric - formula).abs() < 1e-6 * (1.0 + formula.abs()), "{numeric} vs {formula}");
            }
        }
    }

    #[test]
    fn composite_rejects_divergent_energy() {
        let g = StretchProfile::sampled(vec![0.0, 1.0], vec![0.0, 1.0], 0.05).unwrap();
        let id = vec![c(0.0, 0.0), c(1.0, 0.0)];
        assert!(matches!(composite_family_integral(&id, &g, &ex(1.2), false), Err(Error::Divergent(_))));
    }

    #[test]
    fn glued_pieces_are_continuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for k in 1..=5 {
            let f = AnnulusFunction::Monomial {
                a: random_coefficient(&mut rng),
                b: random_coefficient(&mut rng),
                k,
            };
            assert!(f.check_continuity().is_ok());
        }
        let reflected = AnnulusFunction::Harmonic {
            g: vec![c(0.0, 0.0), c(1.0, 0.0)],
            h: vec![],
        };
        assert!(reflected.check_continuity().is_ok());
        let json = serde_json::to_string(&reflected).unwrap();
        let back: AnnulusFunction = serde_json::from_str(&json).unwrap();
        assert_eq!(back, reflected);
    }
}
