//! Radial stretch maps `f(z) = g(r)·e^{iθ}` and their energy integrals.
//!
//! A profile is either the two-piece power family (`c·r^α` inside the unit
//! circle, `c·r^{−β}` outside) or a piecewise-linear sampled profile with a
//! power-law tail. Every piece is either linear or a pure power `C·r^γ`, and
//! on both kinds the branch switch of `L` (where `max(g/r, |g′|)` crosses 1)
//! and the sign changes of `g′ ± g/r` have explicit roots. That makes `∫L`
//! exact piece by piece; `∫Φ_p` is exact on power pieces and uses
//! breakpoint-aligned quadrature on linear ones.

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{l_moduli, phi_moduli, Exponent};
use crate::quadrature::{integrate, integrate_log_scale, Estimate, QuadOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StretchProfile {
    /// `c·r^alpha` on `(0, 1]`, `c·r^{−beta}` on `[1, ∞)`.
    Power { c: f64, alpha: f64, beta: f64 },
    /// Linear interpolation of `(radii[k], values[k])` with `radii[0] = 0` and
    /// `values[0] = 0`, continued by `g_K·(r_K/r)^tail_exponent`.
    Sampled {
        radii: Vec<f64>,
        values: Vec<f64>,
        tail_exponent: f64,
    },
}

/// One piece of a profile on `[a, b]`; `b` may be infinite for power pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Piece {
    Power { a: f64, b: f64, c: f64, gamma: f64 },
    Linear { a: f64, b: f64, ga: f64, gb: f64 },
}

impl Piece {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Piece::Power { a, b, .. } | Piece::Linear { a, b, .. } => (a, b),
        }
    }

    fn value(&self, r: f64) -> f64 {
        match *self {
            Piece::Power { c, gamma, .. } => {
                if r == f64::INFINITY {
                    if gamma < 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else if r == 0.0 && gamma > 0.0 {
                    0.0
                } else {
                    c * r.powf(gamma)
                }
            }
            Piece::Linear { a, b, ga, gb } => ga + (gb - ga) * (r - a) / (b - a),
        }
    }

    fn slope(&self, r: f64) -> f64 {
        match *self {
            Piece::Power { c, gamma, .. } => c * gamma * r.powf(gamma - 1.0),
            Piece::Linear { a, b, ga, gb } => (gb - ga) / (b - a),
        }
    }

    /// `|∂f| + |∂̄f| = max(g/r, |g′|)` at an interior point.
    fn pair_sum(&self, r: f64) -> f64 {
        (self.value(r) / r).max(self.slope(r).abs())
    }

    /// Interior radii where the integrands change formula: the `E`-set
    /// boundary and the zero of `g′ + g/r`.
    fn cuts(&self) -> Vec<f64> {
        let (a, b) = self.bounds();
        let mut out = Vec::new();
        match *self {
            Piece::Power { c, gamma, .. } => {
                if gamma != 1.0 {
                    out.push((c * gamma.abs().max(1.0)).powf(1.0 / (1.0 - gamma)));
                }
            }
            Piece::Linear { .. } => {
                let s = self.slope(a);
                let intercept = self.value(a) - s * a;
                if s != 1.0 {
                    out.push(intercept / (1.0 - s));
                }
                if s != 0.0 {
                    out.push(-intercept / (2.0 * s));
                }
            }
        }
        out.retain(|r| r.is_finite() && *r > a && *r < b);
        out.sort_by(f64::total_cmp);
        out
    }

    /// Subintervals of the piece with no formula change inside.
    fn segments(&self) -> Vec<(f64, f64)> {
        let (a, b) = self.bounds();
        let mut edges = vec![a];
        edges.extend(self.cuts());
        edges.push(b);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

fn representative(u: f64, v: f64) -> f64 {
    if v.is_finite() {
        0.5 * (u + v)
    } else {
        u + 1.0
    }
}

/// Worst-case report of the class condition `|g′| ≤ g/r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S1Report {
    pub member: bool,
    /// Largest `r·|g′|/g − 1` found; positive means the condition fails.
    pub margin: f64,
    /// Radius at which the margin is attained.
    pub radius: f64,
}

/// Values of the radial integrand at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialIntegrand {
    pub r: f64,
    /// `g(r)/r`
    pub h: f64,
    /// Right derivative of `g`.
    pub gprime: f64,
    /// `L(∂f, ∂̄f)` at radius `r`.
    pub value: f64,
}

/// A maximal run beyond `R` on which `|g′| > 1` with a fixed sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteepRun {
    pub start: f64,
    pub end: f64,
    /// Sign of `g′` on the run.
    pub sign: i8,
    /// `½[(r₁ ∓ g(r₁))² − (r₂ ∓ g(r₂))²]`, which the argument requires to be ≥ 0.
    pub telescoped: f64,
    /// `∫ (rG − g·g′) dr` over the run from the piecewise formulas.
    pub direct: f64,
}

const S1_TOLERANCE: f64 = 1e-12;

impl StretchProfile {
    pub fn power(c: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = StretchProfile::Power { c, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn sampled(radii: Vec<f64>, values: Vec<f64>, tail_exponent: f64) -> Result<Self> {
        let p = StretchProfile::Sampled {
            radii,
            values,
            tail_exponent,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StretchProfile::Power { c, alpha, beta } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid("c", format!("must be positive, got {c}")));
                }
                for (name, v) in [("alpha", alpha), ("beta", beta)] {
                    if !(*v > 0.0 && *v <= 1.0) {
                        return Err(Error::invalid(name, format!("must lie in (0, 1], got {v}")));
                    }
                }
            }
            StretchProfile::Sampled {
                radii,
                values,
                tail_exponent,
            } => {
                if radii.len() < 2 || radii.len() != values.len() {
                    return Err(Error::invalid("radii", "need at least two knots and one value per knot"));
                }
                if radii[0] != 0.0 || values[0] != 0.0 {
                    return Err(Error::invalid("radii", "the profile must start at g(0) = 0"));
                }
                if radii.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("sampled profile"));
                }
                if radii.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid("radii", "knots must be strictly increasing"));
                }
                if values.iter().any(|v| *v < 0.0) {
                    return Err(Error::invalid("values", "profile values must be nonnegative"));
                }
                if !(*tail_exponent > 0.0 && *tail_exponent <= 1.0) {
                    return Err(Error::invalid(
                        "tail_exponent",
                        format!("must lie in (0, 1], got {tail_exponent}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: StretchProfile = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub(crate) fn pieces(&self) -> Vec<Piece> {
        match self {
            StretchProfile::Power { c, alpha, beta } => vec![
                Piece::Power {
                    a: 0.0,
                    b: 1.0,
                    c: *c,
                    gamma: *alpha,
                },
                Piece::Power {
                    a: 1.0,
                    b: f64::INFINITY,
                    c: *c,
                    gamma: -beta,
                },
            ],
            StretchProfile::Sampled {
                radii,
                values,
                tail_exponent,
            } => {
                let mut out: Vec<Piece> = radii
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(r, g)| Piece::Linear {
                        a: r[0],
                        b: r[1],
                        ga: g[0],
                        gb: g[1],
                    })
                    .collect();
                let rk = *radii.last().unwrap();
                let gk = *values.last().unwrap();
                out.push(Piece::Power {
                    a: rk,
                    b: f64::INFINITY,
                    c: gk * rk.powf(*tail_exponent),
                    gamma: -tail_exponent,
                });
                out
            }
        }
    }

    /// Radius beyond which the profile is a single power piece.
    pub fn last_knot(&self) -> f64 {
        match self {
            StretchProfile::Power { .. } => 1.0,
            StretchProfile::Sampled { radii, .. } => *radii.last().unwrap(),
        }
    }

    fn piece_at(&self, r: f64) -> Piece {
        let pieces = self.pieces();
        let k = pieces.partition_point(|p| p.bounds().1 <= r);
        pieces[k.min(pieces.len() - 1)]
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        self.piece_at(r).value(r)
    }

    /// Right derivative `g′(r+)`.
    pub fn slope(&self, r: f64) -> f64 {
        self.piece_at(r).slope(r)
    }

    /// Knots and every interior radius where an integrand changes formula.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for piece in self.pieces() {
            let (a, b) = piece.bounds();
            out.push(a);
            out.extend(piece.cuts());
            if b.is_finite() {
                out.push(b);
            }
        }
        out.retain(|r| *r > 0.0);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// `(|∂f|, |∂̄f|) = (½|g′ + g/r|, ½|g′ − g/r|)` using the right derivative at knots.
pub fn stretch_derivatives(g: &StretchProfile, r: f64) -> Result<(f64, f64)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("r", format!("must be positive and finite, got {r}")));
    }
    let piece = g.piece_at(r);
    Ok(piece_moduli(&piece, r))
}

fn piece_moduli(piece: &Piece, r: f64) -> (f64, f64) {
    let h = piece.value(r) / r;
    let d = piece.slope(r);
    (0.5 * (d + h).abs(), 0.5 * (d - h).abs())
}

pub fn radial_integrand(g: &StretchProfile, r: f64) -> Result<RadialIntegrand> {
    let (a, b) = stretch_derivatives(g, r)?;
    Ok(RadialIntegrand {
        r,
        h: g.value(r) / r,
        gprime: g.slope(r),
        value: l_moduli(a, b),
    })
}

/// Checks `|g′| ≤ g/r` exactly on power pieces and at both one-sided limits
/// plus a dense interior grid on linear pieces.
pub fn is_s1(g: &StretchProfile) -> S1Report {
    let mut worst = (f64::NEG_INFINITY, 0.0);
    let mut record = |margin: f64, r: f64| {
        if margin > worst.0 || margin.is_nan() {
            worst = (if margin.is_nan() { f64::INFINITY } else { margin }, r);
        }
    };
    for piece in g.pieces() {
        match piece {
            Piece::Power { a, b, gamma, .. } => {
                let r = if b.is_finite() { b } else { a };
                record(gamma.abs() - 1.0, r);
            }
            Piece::Linear { a, b, ga, gb } => {
                let s = (gb - ga) / (b - a);
                let ratio = |r: f64, gr: f64| {
                    if s == 0.0 {
                        -1.0
                    } else if gr <= 0.0 {
                        f64::INFINITY
                    } else {
                        s.abs() * r / gr - 1.0
                    }
                };
                // one-sided limits at the knots; at the origin g/r → s
                if a == 0.0 {
                    record(if s == 0.0 { -1.0 } else { 0.0 }, a);
                } else {
                    record(ratio(a, ga), a);
                }
                record(ratio(b, gb), b);
                for k in 1..64 {
                    let r = a + (b - a) * k as f64 / 64.0;
                    record(ratio(r, piece.value(r)), r);
                }
            }
        }
    }
    S1Report {
        member: worst.0 <= S1_TOLERANCE,
        margin: worst.0,
        radius: worst.1,
    }
}

/// `∫_u^v r^γ dr`, with `v` possibly infinite.
pub(crate) fn power_moment(gamma: f64, u: f64, v: f64) -> Result<f64> {
    let e = gamma + 1.0;
    if e == 0.0 {
        if u == 0.0 || !v.is_finite() {
            return Err(Error::Divergent("logarithmic radial moment".into()));
        }
        return Ok((v / u).ln());
    }
    let end = |r: f64| -> Result<f64> {
        if r == 0.0 {
            if e > 0.0 {
                Ok(0.0)
            } else {
                Err(Error::Divergent(format!("r^{gamma} is not integrable at 0")))
            }
        } else if r == f64::INFINITY {
            if e < 0.0 {
                Ok(0.0)
            } else {
                Err(Error::Divergent(format!("r^{gamma} is not integrable at infinity")))
            }
        } else {
            Ok(r.powf(e))
        }
    };
    Ok((end(v)? - end(u)?) / e)
}

/// `∫ r·L(∂f, ∂̄f) dr` over one segment with no formula change inside.
fn segment_l(piece: &Piece, u: f64, v: f64) -> Result<f64> {
    let m = representative(u, v);
    if piece.pair_sum(m) > 1.0 {
        // r·L = |g + r·g′| − r
        if !v.is_finite() {
            return Err(Error::Divergent("the E-set of the profile is unbounded".into()));
        }
        let ramp = match *piece {
            Piece::Power { c, gamma, .. } => {
                if gamma == -1.0 {
                    0.0
                } else {
                    c * (gamma + 1.0).abs() * power_moment(gamma, u, v)?
                }
            }
            Piece::Linear { .. } => (piece.value(m) + m * piece.slope(m)).abs() * (v - u),
        };
        Ok(ramp - 0.5 * (v * v - u * u))
    } else {
        // r·L = g·g′
        let (gu, gv) = (piece.value(u), piece.value(v));
        if !gv.is_finite() {
            return Err(Error::Divergent("profile does not decay at infinity".into()));
        }
        Ok(0.5 * (gv * gv - gu * gu))
    }
}

/// `∫_ℂ L(∂f, ∂̄f)` for the stretch map of `g`, exact piece by piece.
pub fn integral_l_stretch(g: &StretchProfile) -> Result<f64> {
    g.validate()?;
    let mut total = 0.0;
    for piece in g.pieces() {
        for (u, v) in piece.segments() {
            total += segment_l(&piece, u, v)?;
        }
    }
    Ok(TAU * total)
}

/// `2π ∫₀^∞ r·F(r, |∂f|, |∂̄f|) dr` by adaptive quadrature in `ln r`, aligned
/// to every knot and branch switch of the profile.
pub fn integrate_radial(
    g: &StretchProfile,
    mut f: impl FnMut(f64, f64, f64) -> f64,
    opts: &QuadOptions,
) -> Result<Estimate> {
    g.validate()?;
    let split = g.last_knot();
    let cuts = g.breakpoints();
    let pieces = g.pieces();
    let mut integrand = |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        let k = pieces.partition_point(|p| p.bounds().1 <= r).min(pieces.len() - 1);
        let (a, b) = piece_moduli(&pieces[k], r);
        r * f(r, a, b)
    };
    let head = integrate_log_scale(&mut integrand, split, &cuts, false, opts)?;
    let tail = integrate_log_scale(&mut integrand, split, &cuts, true, opts)?;
    Ok(Estimate {
        value: TAU * (head.value + tail.value),
        error: TAU * (head.error + tail.error),
        evaluations: head.evaluations + tail.evaluations,
    })
}

/// `∫_ℂ L(∂f, ∂̄f)` by quadrature, independent of the piecewise closed form.
pub fn integral_l_stretch_quadrature(g: &StretchProfile) -> Result<Estimate> {
    integrate_radial(g, |_, a, b| l_moduli(a, b), &QuadOptions::default())
}

/// `∫_ℂ Φ_p(∂f, ∂̄f)`, or `∫_ℂ Φ_p(∂̄f, ∂f)` when `conjugate` is set.
///
/// Power pieces are integrated in closed form through the `p`-homogeneity
/// of `Φ_p`; linear pieces by quadrature split at the zero of `g′ + g/r`.
pub fn integral_phi_stretch(g: &StretchProfile, p: &Exponent, conjugate: bool) -> Result<f64> {
    g.validate()?;
    let phi = |a: f64, b: f64| {
        if conjugate {
            phi_moduli(b, a, p)
        } else {
            phi_moduli(a, b, p)
        }
    };
    let opts = QuadOptions::default();
    let mut total = 0.0;
    for piece in g.pieces() {
        match piece {
            Piece::Power { a, b, c, gamma } => {
                // r·Φ_p = (c/2)^p Φ_p(|γ+1|, |γ−1|) r^{p(γ−1)+1}
                let coeff = (0.5 * c).powf(p.p()) * phi((gamma + 1.0).abs(), (gamma - 1.0).abs());
                if coeff != 0.0 {
                    total += coeff * power_moment(p.p() * (gamma - 1.0) + 1.0, a, b)?;
                }
            }
            Piece::Linear { a, b, .. } => {
                let est = integrate(
                    |r| {
                        let (m1, m2) = piece_moduli(&piece, r);
                        r * phi(m1, m2)
                    },
                    a,
                    b,
                    &piece.cuts(),
                    &opts,
                )?;
                total += est.value;
            }
        }
    }
    Ok(TAU * total)
}

/// `sup{r : g(r) ≥ r}`, or 0 when only `r = 0` qualifies.
pub fn find_r(g: &StretchProfile) -> f64 {
    match *g {
        StretchProfile::Power { c, alpha, beta } => {
            if c >= 1.0 {
                c.powf(1.0 / (1.0 + beta))
            } else if alpha < 1.0 {
                c.powf(1.0 / (1.0 - alpha))
            } else {
                0.0
            }
        }
        StretchProfile::Sampled {
            ref radii,
            ref values,
            tail_exponent,
        } => {
            let rk = *radii.last().unwrap();
            let gk = *values.last().unwrap();
            let tail_root = (gk * rk.powf(tail_exponent)).powf(1.0 / (1.0 + tail_exponent));
            if tail_root >= rk {
                return tail_root;
            }
            for k in (0..radii.len() - 1).rev() {
                let (r0, r1) = (radii[k], radii[k + 1]);
                let (d0, d1) = (values[k] - r0, values[k + 1] - r1);
                if d1 >= 0.0 {
                    return r1;
                }
                if d0 >= 0.0 && r0 > 0.0 {
                    return r0 + d0 / (d0 - d1) * (r1 - r0);
                }
            }
            0.0
        }
    }
}

/// Maximal intervals of `{r > R : |g′| > 1}` with their telescoped quantities.
pub fn steep_runs(g: &StretchProfile) -> Result<Vec<SteepRun>> {
    g.validate()?;
    let big_r = find_r(g);
    let mut raw: Vec<(f64, f64, i8, Piece)> = Vec::new();
    for piece in g.pieces() {
        let (a, b) = piece.bounds();
        let (lo, hi) = match piece {
            Piece::Linear { .. } => {
                if piece.slope(a).abs() > 1.0 {
                    (a, b)
                } else {
                    continue;
                }
            }
            Piece::Power { c, gamma, .. } => {
                if gamma == 0.0 {
                    continue;
                }
                if gamma == 1.0 {
                    if c > 1.0 {
                        (a, b)
                    } else {
                        continue;
                    }
                } else {
                    // |g′| = c|γ| r^{γ−1} crosses 1 at one radius
                    let rho = (c * gamma.abs()).powf(1.0 / (1.0 - gamma));
                    if gamma < 1.0 {
                        (a, b.min(rho))
                    } else {
                        (a.max(rho), b)
                    }
                }
            }
        };
        let lo = lo.max(big_r);
        if hi > lo {
            let sign = if piece.slope(representative(lo, hi)) > 0.0 { 1 } else { -1 };
            raw.push((lo, hi, sign, piece));
        }
    }

    let mut runs: Vec<SteepRun> = Vec::new();
    let mut direct_parts = 0.0;
    let mut current: Option<(f64, f64, i8)> = None;
    let flush = |cur: (f64, f64, i8), direct: f64, runs: &mut Vec<SteepRun>| {
        let (start, end, sign) = cur;
        let shift = |r: f64| {
            let gr = g.value(r);
            if sign > 0 {
                r - gr
            } else {
                r + gr
            }
        };
        runs.push(SteepRun {
            start,
            end,
            sign,
            telescoped: 0.5 * (shift(start).powi(2) - shift(end).powi(2)),
            direct,
        });
    };
    for (lo, hi, sign, piece) in raw {
        // rG − g·g′ on this part, from the segment formulas
        let mut part = 0.0;
        for (u, v) in piece.segments() {
            let (u, v) = (u.max(lo), v.min(hi));
            if v > u {
                let gg = 0.5 * (piece.value(v).powi(2) - piece.value(u).powi(2));
                part += segment_l(&piece, u, v)? - gg;
            }
        }
        current = match current {
            Some((s, e, sg)) if e == lo && sg == sign => {
                direct_parts += part;
                Some((s, hi, sign))
            }
            Some(prev) => {
                flush(prev, direct_parts, &mut runs);
                direct_parts = part;
                Some((lo, hi, sign))
            }
            None => {
                direct_parts = part;
                Some((lo, hi, sign))
            }
        };
    }
    if let Some(cur) = current {
        flush(cur, direct_parts, &mut runs);
    }
    Ok(runs)
}

/// `∫|∂f_α|^p / ∫|∂̄f_α|^p` for `f_α = z|z|^{−2α}` inside the disk and `1/z̄` outside.
pub fn falpha_ratio(p: &Exponent, alpha: f64) -> Result<f64> {
    let pp = p.p();
    if !(alpha > 0.0 && alpha < 1.0 / pp) {
        return Err(Error::invalid("alpha", format!("must lie in (0, 1/p) = (0, {}), got {alpha}", 1.0 / pp)));
    }
    let inner = 2.0 - 2.0 * alpha * pp;
    let numerator = TAU * (1.0 - alpha).powf(pp) / inner;
    let denominator = TAU * (alpha.powf(pp) / inner + 1.0 / (2.0 * pp - 2.0));
    Ok(numerator / denominator)
}

/// The profile of `f_α`: `r^{1−2α}` inside the disk, `1/r` outside.
pub fn falpha_profile(alpha: f64) -> Result<StretchProfile> {
    StretchProfile::power(1.0, 1.0 - 2.0 * alpha, 1.0)
}

/// Power-family profile with `c ∈ (0, 2]` and `α, β ∈ (0, 1]`.
pub fn random_power_profile(rng: &mut impl Rng) -> StretchProfile {
    StretchProfile::Power {
        c: 2.0 * (1.0 - rng.gen::<f64>()),
        alpha: 1.0 - rng.gen::<f64>(),
        beta: 1.0 - rng.gen::<f64>(),
    }
}

/// Piecewise-linear profile with 2–12 interior knots, values up to 3 and a
/// tail exponent in `[0.05, 1]`.
pub fn random_sampled_profile(rng: &mut impl Rng) -> StretchProfile {
    let knots = rng.gen_range(2..=12);
    let mut radii = vec![0.0];
    let mut values = vec![0.0];
    let mut r = 0.0;
    for _ in 0..knots {
        r += rng.gen_range(0.05..1.0);
        radii.push(r);
        values.push(rng.gen_range(0.0..3.0));
    }
    StretchProfile::Sampled {
        radii,
        values,
        tail_exponent: rng.gen_range(0.05..=1.0),
    }
}
