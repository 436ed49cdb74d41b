//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature.
//!
//! Panels are bisected in order of decreasing error estimate until the
//! summed estimate meets `max(abs_tol, rel_tol·|I|)`. Breakpoints given by
//! the caller become panel boundaries, which is how kinks and branch
//! switches of the integrands in this crate are kept off the nodes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_931_950_183,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for XGK[1], XGK[3], ..., XGK[9]
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_subdivisions: 20_000,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod evaluation on `[a, b]`, returning `(value, |K21 − G10|)`.
pub fn gauss_kronrod_21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for j in 0..10 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    (value, ((kronrod - gauss) * half).abs())
}

/// Integrate `f` over `[a, b]`, splitting first at the interior `breakpoints`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid("bounds", "finite interval required"));
    }
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lo);
    edges.extend(cuts);
    edges.push(hi);

    let mut heap = BinaryHeap::new();
    let mut finished = Vec::new();
    let mut evaluations = 0;
    for w in edges.windows(2) {
        let (value, error) = gauss_kronrod_21(&mut f, w[0], w[1]);
        evaluations += 21;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value,
            error,
        });
    }

    let mut total: f64 = heap.iter().map(|p| p.value).sum();
    let mut err: f64 = heap.iter().map(|p| p.error).sum();
    let mut subdivisions = 0;
    loop {
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::NonFinite("quadrature integrand"));
        }
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if err <= target {
            // re-sum to shed drift from the running totals
            let (value, error) = heap
                .iter()
                .chain(finished.iter())
                .fold((0.0, 0.0), |(v, e), p: &Panel| (v + p.value, e + p.error));
            return Ok(Estimate {
                value: sign * value,
                error,
                evaluations,
            });
        }
        let worst = match heap.pop() {
            Some(p) if subdivisions < opts.max_subdivisions => p,
            _ => {
                return Err(Error::Quadrature {
                    estimate: err,
                    tolerance: target,
                })
            }
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // panel at floating-point resolution
            finished.push(worst);
            continue;
        }
        subdivisions += 1;
        total -= worst.value;
        err -= worst.error;
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gauss_kronrod_21(&mut f, a, b);
            evaluations += 21;
            total += value;
            err += error;
            heap.push(Panel { a, b, value, error });
        }
        err = err.max(0.0);
    }
}

/// Integrate `f` over `[a, ∞)` for `a > 0` through `r = a / u`.
///
/// `breakpoints` are given in `r` and mapped to `u`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<Estimate> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid("a", "tail integration needs a positive finite start"));
    }
    let mapped: Vec<f64> = breakpoints.iter().filter(|r| **r > a).map(|r| a / r).collect();
    integrate(
        |u| {
            if u <= 0.0 {
                0.0
            } else {
                f(a / u) * a / (u * u)
            }
        },
        0.0,
        1.0,
        &mapped,
        opts,
    )
}

/// Largest `|ln(r/a)|` covered by [`integrate_log_scale`] before the
/// remainder estimate takes over.
pub const LOG_SPAN: f64 = 300.0;

/// Integrate `f` over `[a, ∞)` (`outward`) or `(0, a]` in the variable
/// `s = |ln(r/a)|`, which turns power-law ends into exponentials.
///
/// The integral is carried to `s = LOG_SPAN`; past that point the integrand
/// is extrapolated from its decay rate over the last unit of `s`, and a
/// rate too slow to bound the remainder is reported as divergence.
pub fn integrate_log_scale<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    breakpoints: &[f64],
    outward: bool,
    opts: &QuadOptions,
) -> Result<Estimate> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::invalid("a", "log-scale integration needs a positive finite anchor"));
    }
    let dir = if outward { 1.0 } else { -1.0 };
    let mut q = |s: f64| {
        let r = a * (dir * s).exp();
        f(r) * r
    };
    let mapped: Vec<f64> = breakpoints
        .iter()
        .filter(|r| **r > 0.0)
        .map(|r| dir * (r / a).ln())
        .filter(|s| *s > 0.0 && *s < LOG_SPAN)
        .collect();
    let body = integrate(&mut q, 0.0, LOG_SPAN, &mapped, opts)?;
    let (q0, q1) = (q(LOG_SPAN - 1.0), q(LOG_SPAN));
    let remainder = if q1 == 0.0 {
        0.0
    } else {
        let rate = (q1 / q0).ln();
        if !(q1 / q0 > 0.0) || !(rate < -1e-4) {
            return Err(Error::Divergent(format!(
                "integrand decays too slowly at the {} end to bound the remainder",
                if outward { "outer" } else { "inner" }
            )));
        }
        -q1 / rate
    };
    Ok(Estimate {
        value: body.value + remainder,
        error: body.error + 1e-3 * remainder.abs(),
        evaluations: body.evaluations + 2,
    })
}

/// Trapezoid rule for the mean of a `2π`-periodic function over `n` equispaced angles.
pub fn periodic_mean<F: FnMut(f64) -> f64>(mut f: F, n: usize) -> f64 {
    let step = std::f64::consts::TAU / n as f64;
    (0..n).map(|k| f(k as f64 * step)).sum::<f64>() / n as f64
}
