//! C interface to the `burkholder` crate.
//!
//! Every function returns a [`BkStatus`] and writes results through out
//! pointers. On failure the message is kept per thread and can be read with
//! [`bk_last_error_message`]. Grid functions live behind the opaque
//! [`BkGrid`] handle, which the caller releases with [`bk_grid_free`].

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use burkholder::functions::{eval_l, eval_l1, eval_m, eval_phi};
use burkholder::optimizer::{self, CgOptions, MinimizationResult, Termination};
use burkholder::radial::{integral_l_stretch, StretchProfile};
use burkholder::torus::{self, GridFunction, TorusGrid};
use burkholder::{Complex64, Error, Exponent, Mat2, WirtingerPair};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Divergent = 4,
    Io = 5,
    Panic = 6,
}

/// How a minimization stopped.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BkTermination {
    GradientSmall = 0,
    FunctionStalled = 1,
    IterationCap = 2,
}

/// Summary of one conjugate-gradient run.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BkMinimization {
    pub start_seed: u64,
    pub n: usize,
    pub initial_value: f64,
    pub final_value: f64,
    pub final_gradient_norm: f64,
    pub iterations: usize,
    pub termination: BkTermination,
}

/// Opaque piecewise-linear map of the torus.
pub struct BkGrid {
    inner: GridFunction,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> BkStatus {
    match e {
        Error::InvalidArgument { .. } | Error::NonFinite(_) | Error::Format(_) | Error::Json(_) | Error::Csv(_) => {
            BkStatus::InvalidArgument
        }
        Error::Divergent(_) => BkStatus::Divergent,
        Error::Io(_) => BkStatus::Io,
        Error::NumericalAbort { .. } | Error::Quadrature { .. } => BkStatus::Numerical,
        Error::Start { source, .. } => status_of(source),
    }
}

enum Failure {
    Null,
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            BkStatus::Ok
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null)) => {
            set_error("null pointer argument".into());
            BkStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic".into());
            BkStatus::Panic
        }
    }
}

fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either null or a pointer valid for writes.
    unsafe { p.as_mut() }.ok_or(Failure::Null)
}

fn grid<'a>(h: *const BkGrid) -> Result<&'a BkGrid, Failure> {
    // SAFETY: non-null handles come from `bk_grid_*` constructors.
    unsafe { h.as_ref() }.ok_or(Failure::Null)
}

fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null);
    }
    // SAFETY: the caller promises `len` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn slice_mut<'a>(p: *mut f64, len: usize) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null);
    }
    // SAFETY: the caller promises `len` writable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

fn pair(z_re: f64, z_im: f64, w_re: f64, w_im: f64) -> burkholder::Result<WirtingerPair> {
    WirtingerPair::new(Complex64::new(z_re, z_im), Complex64::new(w_re, w_im))
}

fn check_len(name: &'static str, got: usize, want: usize) -> Result<(), Failure> {
    if got == want {
        Ok(())
    } else {
        Err(Failure::Core(Error::InvalidArgument {
            name,
            reason: format!("length {got}, expected {want}"),
        }))
    }
}

impl From<Termination> for BkTermination {
    fn from(t: Termination) -> Self {
        match t {
            Termination::GradientSmall => BkTermination::GradientSmall,
            Termination::FunctionStalled => BkTermination::FunctionStalled,
            Termination::IterationCap => BkTermination::IterationCap,
        }
    }
}

fn summary(r: &MinimizationResult) -> BkMinimization {
    BkMinimization {
        start_seed: r.start_seed,
        n: r.n,
        initial_value: r.initial_value,
        final_value: r.final_value,
        final_gradient_norm: r.final_gradient_norm,
        iterations: r.iterations,
        termination: r.termination.into(),
    }
}

fn options(gradient_tolerance: f64) -> CgOptions {
    let mut opts = CgOptions::default();
    if gradient_tolerance > 0.0 {
        opts.gradient_tolerance = gradient_tolerance;
    }
    opts
}

/// Copies the last error message of this thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the
/// untruncated length, so a call with `len == 0` sizes the buffer.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn bk_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// `L(z, w)`.
///
/// # Safety
/// `out_value` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bk_eval_l(z_re: f64, z_im: f64, w_re: f64, w_im: f64, out_value: *mut f64) -> BkStatus {
    guard(|| {
        *out(out_value)? = eval_l(&pair(z_re, z_im, w_re, w_im)?);
        Ok(())
    })
}

/// `M(z, w)`.
///
/// # Safety
/// `out_value` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bk_eval_m(z_re: f64, z_im: f64, w_re: f64, w_im: f64, out_value: *mut f64) -> BkStatus {
    guard(|| {
        *out(out_value)? = eval_m(&pair(z_re, z_im, w_re, w_im)?);
        Ok(())
    })
}

/// `Φ_p(z, w)` for `p > 1`.
///
/// # Safety
/// `out_value` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bk_eval_phi(
    z_re: f64,
    z_im: f64,
    w_re: f64,
    w_im: f64,
    p: f64,
    out_value: *mut f64,
) -> BkStatus {
    guard(|| {
        let p = Exponent::new(p)?;
        *out(out_value)? = eval_phi(&pair(z_re, z_im, w_re, w_im)?, &p);
        Ok(())
    })
}

/// `L₁` of the row-major matrix `[[a, b], [c, d]]`.
///
/// # Safety
/// `out_value` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bk_eval_l1(a: f64, b: f64, c: f64, d: f64, out_value: *mut f64) -> BkStatus {
    guard(|| {
        *out(out_value)? = eval_l1(&Mat2::new(a, b, c, d)?);
        Ok(())
    })
}

/// Exact `∫ L(∂f, ∂̄f)` over the plane for the stretch `f(z) = g(r)·e^{iθ}`
/// with `g(r) = c·r^alpha` on `(0, 1]` and `c·r^{-beta}` beyond.
///
/// # Safety
/// `out_value` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bk_power_stretch_integral(c: f64, alpha: f64, beta: f64, out_value: *mut f64) -> BkStatus {
    guard(|| {
        let g = StretchProfile::power(c, alpha, beta)?;
        *out(out_value)? = integral_l_stretch(&g)?;
        Ok(())
    })
}

/// New grid function on the `n × n` torus mesh from `2·n²` coefficients
/// laid out as `[re₀, im₀, re₁, im₁, …]` in row-major node order.
///
/// # Safety
/// `coeffs` must be valid for `len` reads and `out_grid` for a write.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_new(n: usize, coeffs: *const f64, len: usize, out_grid: *mut *mut BkGrid) -> BkStatus {
    guard(|| {
        let slot = out(out_grid)?;
        let mesh = TorusGrid::new(n)?;
        let data = slice(coeffs, len)?;
        check_len("coeffs", len, mesh.dimension())?;
        let inner = GridFunction::from_coefficients(mesh, data.to_vec())?;
        *slot = Box::into_raw(Box::new(BkGrid { inner }));
        Ok(())
    })
}

/// New grid function with coordinates uniform on `[-amplitude, amplitude]`,
/// drawn from the stream seeded by `seed`.
///
/// # Safety
/// `out_grid` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_random(n: usize, seed: u64, amplitude: f64, out_grid: *mut *mut BkGrid) -> BkStatus {
    guard(|| {
        let slot = out(out_grid)?;
        let mesh = TorusGrid::new(n)?;
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Failure::Core(Error::InvalidArgument {
                name: "amplitude",
                reason: format!("must be positive, got {amplitude}"),
            }));
        }
        let inner = GridFunction::from_coefficients(mesh, optimizer::random_start(mesh, seed, amplitude))?;
        *slot = Box::into_raw(Box::new(BkGrid { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `grid` must be null or a live handle not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_free(grid: *mut BkGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of real coefficients, `2·n²`.
///
/// # Safety
/// `grid` must be null or a live handle; `out_len` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_dimension(grid: *const BkGrid, out_len: *mut usize) -> BkStatus {
    guard(|| {
        *out(out_len)? = self::grid(grid)?.inner.grid().dimension();
        Ok(())
    })
}

/// Copies the coefficients into `buf`, which must hold exactly the dimension.
///
/// # Safety
/// `grid` must be null or a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_coefficients(grid: *const BkGrid, buf: *mut f64, len: usize) -> BkStatus {
    guard(|| {
        let f = &self::grid(grid)?.inner;
        let dst = slice_mut(buf, len)?;
        check_len("buf", len, f.grid().dimension())?;
        dst.copy_from_slice(f.coefficients());
        Ok(())
    })
}

/// Discrete energy `∫ L(∂f, ∂̄f)` over the torus.
///
/// # Safety
/// `grid` must be null or a live handle; `out_value` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_energy(grid: *const BkGrid, out_value: *mut f64) -> BkStatus {
    guard(|| {
        *out(out_value)? = torus::energy_f(&self::grid(grid)?.inner);
        Ok(())
    })
}

/// Discrete `∫ Φ_p(∂f, ∂̄f)` over the torus.
///
/// # Safety
/// `grid` must be null or a live handle; `out_value` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_energy_phi(grid: *const BkGrid, p: f64, out_value: *mut f64) -> BkStatus {
    guard(|| {
        let p = Exponent::new(p)?;
        *out(out_value)? = torus::energy_phi(&self::grid(grid)?.inner, &p);
        Ok(())
    })
}

/// Integral of the Jacobian `|∂f|² − |∂̄f|²`, zero up to rounding.
///
/// # Safety
/// `grid` must be null or a live handle; `out_value` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_null_lagrangian(grid: *const BkGrid, out_value: *mut f64) -> BkStatus {
    guard(|| {
        *out(out_value)? = torus::null_lagrangian(&self::grid(grid)?.inner);
        Ok(())
    })
}

/// Gradient of the energy with respect to the coefficients.
///
/// # Safety
/// `grid` must be null or a live handle; `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_gradient(grid: *const BkGrid, buf: *mut f64, len: usize) -> BkStatus {
    guard(|| {
        let f = &self::grid(grid)?.inner;
        let dst = slice_mut(buf, len)?;
        check_len("buf", len, f.grid().dimension())?;
        f.grid().gradient(f.coefficients(), dst);
        Ok(())
    })
}

/// Minimizes the energy in place starting from the current coefficients.
/// A non-positive `gradient_tolerance` keeps the default.
///
/// # Safety
/// `grid` must be null or a live handle; `out_result` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bk_grid_minimize(
    grid: *mut BkGrid,
    gradient_tolerance: f64,
    out_result: *mut BkMinimization,
) -> BkStatus {
    guard(|| {
        let slot = out(out_result)?;
        // SAFETY: as for `grid`, but mutable.
        let handle = unsafe { grid.as_mut() }.ok_or(Failure::Null)?;
        let mesh = handle.inner.grid();
        let sol = optimizer::minimize_cg(
            |x| mesh.energy(x),
            |x, g| mesh.gradient(x, g),
            handle.inner.coefficients(),
            &options(gradient_tolerance),
        )?;
        *slot = BkMinimization {
            start_seed: 0,
            n: mesh.n(),
            initial_value: sol.initial_value,
            final_value: sol.final_value,
            final_gradient_norm: sol.final_gradient_norm,
            iterations: sol.iterations,
            termination: sol.termination.into(),
        };
        handle.inner = GridFunction::from_coefficients(mesh, sol.x)?;
        Ok(())
    })
}

/// Runs `starts` independent minimizations on the `n × n` mesh and writes
/// one summary per start into `results`, in start order.
///
/// # Safety
/// `results` must be valid for `len` writes of `BkMinimization`.
#[no_mangle]
pub unsafe extern "C" fn bk_multistart(
    n: usize,
    starts: usize,
    master_seed: u64,
    amplitude: f64,
    gradient_tolerance: f64,
    results: *mut BkMinimization,
    len: usize,
) -> BkStatus {
    guard(|| {
        if results.is_null() {
            return Err(Failure::Null);
        }
        check_len("results", len, starts)?;
        let runs = optimizer::multistart(n, starts, master_seed, amplitude, &options(gradient_tolerance))?;
        for (k, r) in runs.iter().enumerate() {
            // SAFETY: `k < starts == len`.
            unsafe { results.add(k).write(summary(r)) };
        }
        Ok(())
    })
}
