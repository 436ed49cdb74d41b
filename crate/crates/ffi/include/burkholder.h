#ifndef BURKHOLDER_H
#define BURKHOLDER_H

#include <stddef.h>
#include <stdint.h>

// Result code of every call.
typedef enum BkStatus {
  BK_STATUS_OK = 0,
  BK_STATUS_NULL_POINTER = 1,
  BK_STATUS_INVALID_ARGUMENT = 2,
  BK_STATUS_NUMERICAL = 3,
  BK_STATUS_DIVERGENT = 4,
  BK_STATUS_IO = 5,
  BK_STATUS_PANIC = 6,
} BkStatus;

// How a minimization stopped.
typedef enum BkTermination {
  BK_TERMINATION_GRADIENT_SMALL = 0,
  BK_TERMINATION_FUNCTION_STALLED = 1,
  BK_TERMINATION_ITERATION_CAP = 2,
} BkTermination;

// Opaque piecewise-linear map of the torus.
typedef struct BkGrid BkGrid;

// Summary of one conjugate-gradient run.
typedef struct BkMinimization {
  uint64_t start_seed;
  size_t n;
  double initial_value;
  double final_value;
  double final_gradient_norm;
  size_t iterations;
  enum BkTermination termination;
} BkMinimization;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the
// untruncated length, so a call with `len == 0` sizes the buffer.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t bk_last_error_message(char *buf, size_t len);

// `L(z, w)`.
//
// # Safety
// `out_value` must be null or valid for a write.
enum BkStatus bk_eval_l(double z_re, double z_im, double w_re, double w_im, double *out_value);

// `M(z, w)`.
//
// # Safety
// `out_value` must be null or valid for a write.
enum BkStatus bk_eval_m(double z_re, double z_im, double w_re, double w_im, double *out_value);

// `Φ_p(z, w)` for `p > 1`.
//
// # Safety
// `out_value` must be null or valid for a write.
enum BkStatus bk_eval_phi(double z_re,
                          double z_im,
                          double w_re,
                          double w_im,
                          double p,
                          double *out_value);

// `L₁` of the row-major matrix `[[a, b], [c, d]]`.
//
// # Safety
// `out_value` must be null or valid for a write.
enum BkStatus bk_eval_l1(double a, double b, double c, double d, double *out_value);

// Exact `∫ L(∂f, ∂̄f)` over the plane for the stretch `f(z) = g(r)·e^{iθ}`
// with `g(r) = c·r^alpha` on `(0, 1]` and `c·r^{-beta}` beyond.
//
// # Safety
// `out_value` must be null or valid for a write.
enum BkStatus bk_power_stretch_integral(double c, double alpha, double beta, double *out_value);

// New grid function on the `n × n` torus mesh from `2·n²` coefficients
// laid out as `[re₀, im₀, re₁, im₁, …]` in row-major node order.
//
// # Safety
// `coeffs` must be valid for `len` reads and `out_grid` for a write.
enum BkStatus bk_grid_new(size_t n, const double *coeffs, size_t len, struct BkGrid **out_grid);

// New grid function with coordinates uniform on `[-amplitude, amplitude]`,
// drawn from the stream seeded by `seed`.
//
// # Safety
// `out_grid` must be null or valid for a write.
enum BkStatus bk_grid_random(size_t n, uint64_t seed, double amplitude, struct BkGrid **out_grid);

// Releases a handle. Null is ignored.
//
// # Safety
// `grid` must be null or a live handle not used afterwards.
void bk_grid_free(struct BkGrid *grid);

// Number of real coefficients, `2·n²`.
//
// # Safety
// `grid` must be null or a live handle; `out_len` null or writable.
enum BkStatus bk_grid_dimension(const struct BkGrid *grid, size_t *out_len);

// Copies the coefficients into `buf`, which must hold exactly the dimension.
//
// # Safety
// `grid` must be null or a live handle; `buf` valid for `len` writes.
enum BkStatus bk_grid_coefficients(const struct BkGrid *grid, double *buf, size_t len);

// Discrete energy `∫ L(∂f, ∂̄f)` over the torus.
//
// # Safety
// `grid` must be null or a live handle; `out_value` null or writable.
enum BkStatus bk_grid_energy(const struct BkGrid *grid, double *out_value);

// Discrete `∫ Φ_p(∂f, ∂̄f)` over the torus.
//
// # Safety
// `grid` must be null or a live handle; `out_value` null or writable.
enum BkStatus bk_grid_energy_phi(const struct BkGrid *grid, double p, double *out_value);

// Integral of the Jacobian `|∂f|² − |∂̄f|²`, zero up to rounding.
//
// # Safety
// `grid` must be null or a live handle; `out_value` null or writable.
enum BkStatus bk_grid_null_lagrangian(const struct BkGrid *grid, double *out_value);

// Gradient of the energy with respect to the coefficients.
//
// # Safety
// `grid` must be null or a live handle; `buf` valid for `len` writes.
enum BkStatus bk_grid_gradient(const struct BkGrid *grid, double *buf, size_t len);

// Minimizes the energy in place starting from the current coefficients.
// A non-positive `gradient_tolerance` keeps the default.
//
// # Safety
// `grid` must be null or a live handle; `out_result` null or writable.
enum BkStatus bk_grid_minimize(struct BkGrid *grid,
                               double gradient_tolerance,
                               struct BkMinimization *out_result);

// Runs `starts` independent minimizations on the `n × n` mesh and writes
// one summary per start into `results`, in start order.
//
// # Safety
// `results` must be valid for `len` writes of `BkMinimization`.
enum BkStatus bk_multistart(size_t n,
                            size_t starts,
                            uint64_t master_seed,
                            double amplitude,
                            double gradient_tolerance,
                            struct BkMinimization *results,
                            size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BURKHOLDER_H */
