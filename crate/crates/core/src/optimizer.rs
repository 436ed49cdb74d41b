//! Nonlinear conjugate gradient, multistart search over `F_N`, and ray profiles.
//!
//! The minimizer is Polak–Ribière with the momentum coefficient clamped at
//! zero and a hard restart every `restart_interval` iterations. Each line
//! minimization first brackets a minimum by golden-ratio expansion with
//! parabolic extrapolation and then refines it with Brent's method, which
//! needs no derivatives and so tolerates the kinks of `L`.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::torus::{GridFunction, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgOptions {
    /// `None` means `20 × dimension`.
    pub max_iterations: Option<usize>,
    /// Stop when the gradient ∞-norm falls below this.
    pub gradient_tolerance: f64,
    /// Relative decrease below which an iteration counts as stalled.
    pub function_tolerance: f64,
    /// Relative bracket width at which a line minimization stops.
    pub line_search_tolerance: f64,
    /// `None` means the problem dimension.
    pub restart_interval: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            max_iterations: None,
            gradient_tolerance: 1e-10,
            function_tolerance: 1e-12,
            line_search_tolerance: 1e-8,
            restart_interval: None,
        }
    }
}

impl CgOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gradient_tolerance", self.gradient_tolerance),
            ("function_tolerance", self.function_tolerance),
            ("line_search_tolerance", self.line_search_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.max_iterations == Some(0) {
            return Err(Error::invalid("max_iterations", "must be at least 1"));
        }
        if self.restart_interval == Some(0) {
            return Err(Error::invalid("restart_interval", "must be at least 1"));
        }
        Ok(())
    }

    pub fn max_iterations_for(&self, dim: usize) -> usize {
        self.max_iterations.unwrap_or(20 * dim.max(1))
    }

    pub fn restart_interval_for(&self, dim: usize) -> usize {
        self.restart_interval.unwrap_or(dim.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientSmall,
    FunctionStalled,
    IterationCap,
}

/// Outcome of one [`minimize_cg`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub initial_value: f64,
    pub final_value: f64,
    pub final_gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizationResult {
    pub start_seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub final_gradient_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Seconds; not persisted so that records replay bit for bit.
    #[serde(skip)]
    pub wall_time: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Counts evaluations and turns the first non-finite value into an error.
struct Tracked<'a, F> {
    f: &'a mut F,
    evaluations: usize,
    iteration: usize,
    bad: Option<usize>,
}

impl<F: FnMut(&[f64]) -> f64> Tracked<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if !v.is_finite() {
            self.bad.get_or_insert(self.iteration);
            return f64::INFINITY;
        }
        v
    }
}

const GOLD: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;
const GROW_LIMIT: f64 = 100.0;
const TINY: f64 = 1e-20;
/// Relative value increase tolerated when sharpening a line minimum.
pub const POLISH_SLACK: f64 = 1e-12;

/// Bracket a minimum of `phi` starting from `(a, b)`; returns `((a, fa), (b, fb), (c, fc))`
/// with `fb ≤ min(fa, fc)` and `b` between `a` and `c`.
fn bracket(phi: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, mut fa: f64) -> [(f64, f64); 3] {
    let mut fb = phi(b);
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + GOLD * (b - a);
    let mut fc = phi(c);
    let mut guard = 0;
    while fb > fc && guard < 200 {
        guard += 1;
        let r = (b - a) * (fb - fc);
        let q = (b - c) * (fb - fa);
        let denom = 2.0 * (q - r).abs().max(TINY).copysign(q - r);
        let mut u = b - ((b - c) * q - (b - a) * r) / denom;
        let ulim = b + GROW_LIMIT * (c - b);
        let mut fu;
        if (b - u) * (u - c) > 0.0 {
            fu = phi(u);
            if fu < fc {
                return [(b, fb), (u, fu), (c, fc)];
            } else if fu > fb {
                return [(a, fa), (b, fb), (u, fu)];
            }
            u = c + GOLD * (c - b);
            fu = phi(u);
        } else if (c - u) * (u - ulim) > 0.0 {
            fu = phi(u);
            if fu < fc {
                b = c;
                c = u;
                u = c + GOLD * (c - b);
                fb = fc;
                fc = fu;
                fu = phi(u);
            }
        } else if (u - ulim) * (ulim - c) >= 0.0 {
            u = ulim;
            fu = phi(u);
        } else {
            u = c + GOLD * (c - b);
            fu = phi(u);
        }
        a = b;
        b = c;
        c = u;
        fa = fb;
        fb = fc;
        fc = fu;
    }
    [(a, fa), (b, fb), (c, fc)]
}

/// Brent's parabolic/golden-section minimization inside a bracket.
fn brent(phi: &mut impl FnMut(f64) -> f64, bracket: [(f64, f64); 3], tol: f64) -> (f64, f64) {
    let zeps = f64::EPSILON * 1e-3;
    let [(ax, _), (bx, fbx), (cx, _)] = bracket;
    let (mut a, mut b) = if ax < cx { (ax, cx) } else { (cx, ax) };
    let (mut x, mut w, mut v) = (bx, bx, bx);
    let (mut fx, mut fw, mut fv) = (fbx, fbx, fbx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..200 {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + zeps;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() >= (0.5 * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x) {
                e = if x >= xm { a - x } else { b - x };
                d = CGOLD * e;
            } else {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
            }
        } else {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = phi(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Polak–Ribière conjugate gradient from `x0`.
///
/// Values never increase across iterations. A non-finite objective or
/// gradient aborts with the iteration at which it was met.
pub fn minimize_cg<F, G>(mut objective: F, mut gradient: G, x0: &[f64], opts: &CgOptions) -> Result<CgSolution>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64], &mut [f64]),
{
    opts.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("starting point"));
    }
    let dim = x0.len();
    let max_iter = opts.max_iterations_for(dim);
    let restart = opts.restart_interval_for(dim);
    let mut f = Tracked {
        f: &mut objective,
        evaluations: 0,
        iteration: 0,
        bad: None,
    };

    let mut x = x0.to_vec();
    let mut fx = f.eval(&x);
    if let Some(iteration) = f.bad {
        return Err(Error::NumericalAbort { what: "objective", iteration });
    }
    let initial_value = fx;
    let mut g = vec![0.0; dim];
    gradient(&x, &mut g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalAbort { what: "gradient", iteration: 0 });
    }
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut steepest = true;
    let mut since_restart = 0;
    let mut g_new = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut g_trial = vec![0.0; dim];
    let mut iterations = 0;

    let termination = loop {
        if inf_norm(&g) < opts.gradient_tolerance {
            break Termination::GradientSmall;
        }
        if iterations >= max_iter {
            break Termination::IterationCap;
        }
        iterations += 1;
        f.iteration = iterations;

        let (alpha, f_line) = {
            let mut phi = |t: f64| {
                for ((tr, xi), di) in trial.iter_mut().zip(&x).zip(&d) {
                    *tr = xi + t * di;
                }
                f.eval(&trial)
            };
            let br = bracket(&mut phi, 0.0, 1.0, fx);
            brent(&mut phi, br, opts.line_search_tolerance)
        };
        if let Some(iteration) = f.bad {
            return Err(Error::NumericalAbort { what: "objective", iteration });
        }

        let stalled = 2.0 * (fx - f_line).abs() <= opts.function_tolerance * (fx.abs() + f_line.abs() + 1e-18);
        let improved = f_line < fx;
        if improved {
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += alpha * di;
            }
            fx = f_line;
        }
        if stalled || !improved {
            if steepest {
                break Termination::FunctionStalled;
            }
            // retry once along the steepest descent direction
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            steepest = true;
            since_restart = 0;
            continue;
        }

        gradient(&x, &mut g_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalAbort { what: "gradient", iteration: iterations });
        }
        // Value-only line minima are accurate to about √ε relative, which is
        // enough to spoil conjugacy. A secant step on the directional slopes
        // at both ends sharpens them; it is kept when it at least halves the
        // slope and raises the value by no more than `POLISH_SLACK`.
        let (s0, s1) = (dot(&g, &d), dot(&g_new, &d));
        if s0 < 0.0 && s1 != 0.0 && s1 > s0 {
            let step = -s1 * alpha / (s1 - s0);
            if step != 0.0 && step.abs() <= 1e-3 * alpha.abs() {
                for ((tr, xi), di) in trial.iter_mut().zip(&x).zip(&d) {
                    *tr = xi + step * di;
                }
                let ft = f.eval(&trial);
                if f.bad.is_none() && ft <= fx + POLISH_SLACK * (1.0 + fx.abs()) {
                    gradient(&trial, &mut g_trial);
                    if g_trial.iter().all(|v| v.is_finite()) && dot(&g_trial, &d).abs() <= 0.5 * s1.abs() {
                        std::mem::swap(&mut x, &mut trial);
                        std::mem::swap(&mut g_new, &mut g_trial);
                        fx = ft;
                    }
                }
                f.bad = None;
            }
        }
        since_restart += 1;
        let gg = dot(&g, &g);
        let beta = if gg == 0.0 || since_restart >= restart {
            since_restart = 0;
            0.0
        } else {
            let num: f64 = g_new.iter().zip(&g).map(|(gn, go)| (gn - go) * gn).sum();
            (num / gg).max(0.0)
        };
        for (di, gi) in d.iter_mut().zip(&g_new) {
            *di = -gi + beta * *di;
        }
        if dot(&d, &g_new) >= 0.0 {
            d.iter_mut().zip(&g_new).for_each(|(di, gi)| *di = -gi);
            since_restart = 0;
            steepest = true;
        } else {
            steepest = beta == 0.0;
        }
        std::mem::swap(&mut g, &mut g_new);
    };

    Ok(CgSolution {
        final_gradient_norm: inf_norm(&g),
        x,
        initial_value,
        final_value: fx,
        iterations,
        evaluations: f.evaluations,
        termination,
    })
}

/// Largest coordinate deviation between `gradient` and central differences
/// of `objective` at `x`, relative to the larger ∞-norm of the two vectors.
pub fn gradient_check<F, G>(mut objective: F, mut gradient: G, x: &[f64], step: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64], &mut [f64]),
{
    if !(step > 0.0) {
        return Err(Error::invalid("step", "must be positive"));
    }
    let mut analytic = vec![0.0; x.len()];
    gradient(x, &mut analytic);
    let mut probe = x.to_vec();
    let fd: Vec<f64> = (0..x.len())
        .map(|k| {
            probe[k] = x[k] + step;
            let fp = objective(&probe);
            probe[k] = x[k] - step;
            let fm = objective(&probe);
            probe[k] = x[k];
            (fp - fm) / (2.0 * step)
        })
        .collect();
    let scale = inf_norm(&analytic).max(inf_norm(&fd));
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(analytic
        .iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max))
}

/// Random starting vector with coordinates uniform on `[−amplitude, amplitude]`.
pub fn random_start(grid: TorusGrid, seed: u64, amplitude: f64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    (0..grid.dimension()).map(|_| r.gen_range(-amplitude..=amplitude)).collect()
}

/// Minimize `F_N` from the start drawn with `seed`.
pub fn minimize_from_seed(grid: TorusGrid, seed: u64, amplitude: f64, opts: &CgOptions) -> Result<(MinimizationResult, Vec<f64>)> {
    let started = Instant::now();
    let x0 = random_start(grid, seed, amplitude);
    let sol = minimize_cg(|x| grid.energy(x), |x, g| grid.gradient(x, g), &x0, opts)?;
    let result = MinimizationResult {
        start_seed: seed,
        n: grid.n(),
        initial_value: sol.initial_value,
        final_value: sol.final_value,
        final_gradient_norm: sol.final_gradient_norm,
        iterations: sol.iterations,
        termination: sol.termination,
        wall_time: started.elapsed().as_secs_f64(),
    };
    Ok((result, sol.x))
}

/// Independent CG runs of `F_N` from `starts` random points.
///
/// Start `k` draws from its own stream seeded by `derive_seed(master_seed, k)`;
/// results come back in start order whatever the thread count.
pub fn multistart(n: usize, starts: usize, master_seed: u64, amplitude: f64, opts: &CgOptions) -> Result<Vec<MinimizationResult>> {
    let grid = TorusGrid::new(n)?;
    if starts == 0 {
        return Err(Error::invalid("starts", "need at least one start"));
    }
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::invalid("amplitude", format!("must be positive, got {amplitude}")));
    }
    opts.validate()?;
    (0..starts)
        .into_par_iter()
        .map(|k| {
            let seed = rng::derive_seed(master_seed, k as u64);
            minimize_from_seed(grid, seed, amplitude, opts)
                .map(|(r, _)| r)
                .map_err(|e| Error::Start {
                    start: k,
                    seed,
                    source: Box::new(e),
                })
        })
        .collect()
}

/// `h(t) = F_N(t·x)` on a grid of `t` with monotonicity and convexity diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayProfile {
    pub t: Vec<f64>,
    pub h: Vec<f64>,
    /// Largest decrease of `h` between neighbours on `t ≥ 0`.
    pub increasing_violation: f64,
    /// Largest increase of `h` between neighbours on `t ≤ 0`.
    pub decreasing_violation: f64,
    /// Interior indices where the divided second difference changes sign.
    pub second_difference_sign_changes: Vec<usize>,
    /// Interior indices with a clearly negative second difference.
    pub concavity_witnesses: Vec<usize>,
}

impl RayProfile {
    pub fn is_convex(&self) -> bool {
        self.concavity_witnesses.is_empty()
    }
}

pub fn ray_profile(direction: &GridFunction, t_values: &[f64]) -> Result<RayProfile> {
    if t_values.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("t"));
    }
    if t_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("t_values", "must be sorted"));
    }
    let grid = direction.grid();
    let base = direction.coefficients();
    let mut buf = vec![0.0; base.len()];
    let h: Vec<f64> = t_values
        .iter()
        .map(|&t| {
            buf.iter_mut().zip(base).for_each(|(b, x)| *b = t * x);
            grid.energy(&buf)
        })
        .collect();

    let mut increasing_violation: f64 = 0.0;
    let mut decreasing_violation: f64 = 0.0;
    for i in 1..h.len() {
        let (t0, t1) = (t_values[i - 1], t_values[i]);
        if t0 >= 0.0 {
            increasing_violation = increasing_violation.max(h[i - 1] - h[i]);
        }
        if t1 <= 0.0 {
            decreasing_violation = decreasing_violation.max(h[i] - h[i - 1]);
        }
    }

    let scale = 1.0 + h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_gap = t_values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 0.0)
        .fold(f64::INFINITY, f64::min);
    let threshold = 1e-9 * scale / min_gap.min(1.0);
    let mut sign_changes = Vec::new();
    let mut witnesses = Vec::new();
    let mut last_sign = 0i8;
    for i in 1..h.len().saturating_sub(1) {
        let (tl, tc, tr) = (t_values[i - 1], t_values[i], t_values[i + 1]);
        if tc == tl || tr == tc {
            continue;
        }
        let d2 = (h[i + 1] - h[i]) / (tr - tc) - (h[i] - h[i - 1]) / (tc - tl);
        let sign = if d2 > threshold {
            1
        } else if d2 < -threshold {
            -1
        } else {
            0
        };
        if sign < 0 {
            witnesses.push(i);
        }
        if sign != 0 {
            if last_sign != 0 && sign != last_sign {
                sign_changes.push(i);
            }
            last_sign = sign;
        }
    }

    Ok(RayProfile {
        t: t_values.to_vec(),
        h,
        increasing_violation: increasing_violation.max(0.0),
        decreasing_violation: decreasing_violation.max(0.0),
        second_difference_sign_changes: sign_changes,
        concavity_witnesses: witnesses,
    })
}

/// `count` equispaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}
