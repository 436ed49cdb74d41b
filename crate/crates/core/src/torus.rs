//! Piecewise-linear maps of the unit torus.
//!
//! Nodes sit at `(p_m, p_n)` with `p_n = frac(n/N)`. Each grid square is
//! split along its anti-diagonal into an up triangle `Δ⁺_{m,n}` with corners
//! `(m,n), (m+1,n), (m,n+1)` and a down triangle `Δ⁻_{m+1,n+1}` with corners
//! `(m+1,n+1), (m,n+1), (m+1,n)`. A map in `P_N` is stored by its nodal
//! values, node `(m, n)` at index `m·N + n`, and the real coefficient view
//! interleaves real and imaginary parts per node.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{grad_l_parts, l_moduli, phi_moduli, Exponent, WirtingerPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("N", format!("grid resolution must be at least 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    /// Length of the real coefficient vector, `2N²`.
    pub fn dimension(&self) -> usize {
        2 * self.node_count()
    }

    pub fn triangle_count(&self) -> usize {
        2 * self.node_count()
    }

    pub fn triangle_area(&self) -> f64 {
        1.0 / (2.0 * (self.n * self.n) as f64)
    }

    /// `frac(k / N)` for any integer `k`.
    pub fn coordinate(&self, k: i64) -> f64 {
        k.rem_euclid(self.n as i64) as f64 / self.n as f64
    }

    pub fn node_index(&self, m: i64, n: i64) -> usize {
        let size = self.n as i64;
        (m.rem_euclid(size) * size + n.rem_euclid(size)) as usize
    }

    pub fn triangles(&self) -> impl Iterator<Item = Triangle> + '_ {
        let n = self.n;
        (0..n).flat_map(move |m| {
            (0..n).flat_map(move |k| {
                [Orientation::Up, Orientation::Down].into_iter().map(move |orientation| Triangle {
                    orientation,
                    m,
                    n: k,
                })
            })
        })
    }

    /// For every triangle the node index pairs `(x_plus, x_minus, y_plus, y_minus)`
    /// such that `f_x = N (f[x_plus] − f[x_minus])` and likewise for `f_y`.
    fn stencils(&self) -> impl Iterator<Item = [usize; 4]> + '_ {
        self.triangles().map(|t| t.stencil(self))
    }

    pub fn validate_coefficients(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.dimension() {
            return Err(Error::invalid(
                "coefficients",
                format!("expected {} coefficients, got {}", self.dimension(), coeffs.len()),
            ));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("grid coefficient"));
        }
        Ok(())
    }

    #[inline]
    fn node_value(coeffs: &[f64], idx: usize) -> Complex64 {
        Complex64::new(coeffs[2 * idx], coeffs[2 * idx + 1])
    }

    #[inline]
    fn pair_for(&self, coeffs: &[f64], stencil: &[usize; 4]) -> (Complex64, Complex64) {
        let scale = self.n as f64;
        let fx = (Self::node_value(coeffs, stencil[0]) - Self::node_value(coeffs, stencil[1])) * scale;
        let fy = (Self::node_value(coeffs, stencil[2]) - Self::node_value(coeffs, stencil[3])) * scale;
        wirtinger(fx, fy)
    }

    /// `F_N` on a raw coefficient vector (length is the caller's responsibility).
    pub fn energy(&self, coeffs: &[f64]) -> f64 {
        self.integrate_moduli(coeffs, l_moduli)
    }

    /// Sum of `area · g(|∂f|, |∂̄f|)` over triangles in triangle order.
    pub fn integrate_moduli(&self, coeffs: &[f64], mut g: impl FnMut(f64, f64) -> f64) -> f64 {
        let area = self.triangle_area();
        self.stencils()
            .map(|s| {
                let (z, w) = self.pair_for(coeffs, &s);
                g(z.norm(), w.norm())
            })
            .sum::<f64>()
            * area
    }

    /// `∇F_N` on a raw coefficient vector, written into `out`.
    pub fn gradient(&self, coeffs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        let scale = self.triangle_area() * self.n as f64;
        for s in self.stencils() {
            let (z, w) = self.pair_for(coeffs, &s);
            let [gzr, gzi, gwr, gwi] = grad_l_parts(z, w);
            // z = ½((a+d) + i(b−c)), w = ½((a−d) + i(b+c)) with f_x = a+ib, f_y = c+id
            let da = 0.5 * (gzr + gwr) * scale;
            let db = 0.5 * (gzi + gwi) * scale;
            let dc = 0.5 * (gwi - gzi) * scale;
            let dd = 0.5 * (gzr - gwr) * scale;
            out[2 * s[0]] += da;
            out[2 * s[0] + 1] += db;
            out[2 * s[1]] -= da;
            out[2 * s[1] + 1] -= db;
            out[2 * s[2]] += dc;
            out[2 * s[2] + 1] += dd;
            out[2 * s[3]] -= dc;
            out[2 * s[3] + 1] -= dd;
        }
    }

    /// Energy and gradient in one sweep.
    pub fn energy_and_gradient(&self, coeffs: &[f64], out: &mut [f64]) -> f64 {
        self.gradient(coeffs, out);
        self.energy(coeffs)
    }
}

#[inline]
fn wirtinger(fx: Complex64, fy: Complex64) -> (Complex64, Complex64) {
    let ify = Complex64::new(-fy.im, fy.re);
    ((fx - ify) * 0.5, (fx + ify) * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Up,
    Down,
}

/// Triangle `Δ^±_{m,n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triangle {
    pub orientation: Orientation,
    pub m: usize,
    pub n: usize,
}

impl Triangle {
    /// Corner lattice coordinates, unwrapped (may fall outside `0..N`).
    pub fn corners(&self) -> [(i64, i64); 3] {
        let (m, n) = (self.m as i64, self.n as i64);
        match self.orientation {
            Orientation::Up => [(m, n), (m + 1, n), (m, n + 1)],
            Orientation::Down => [(m, n), (m - 1, n), (m, n - 1)],
        }
    }

    pub fn nodes(&self, grid: &TorusGrid) -> [usize; 3] {
        self.corners().map(|(m, n)| grid.node_index(m, n))
    }

    fn stencil(&self, grid: &TorusGrid) -> [usize; 4] {
        let (m, n) = (self.m as i64, self.n as i64);
        let here = grid.node_index(m, n);
        match self.orientation {
            Orientation::Up => [grid.node_index(m + 1, n), here, grid.node_index(m, n + 1), here],
            Orientation::Down => [here, grid.node_index(m - 1, n), here, grid.node_index(m, n - 1)],
        }
    }
}

/// All `2N²` triangles of the periodic triangulation.
pub fn triangulate(n: usize) -> Result<Vec<Triangle>> {
    let grid = TorusGrid::new(n)?;
    Ok(grid.triangles().collect())
}

/// A continuous map of the torus, linear on each triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GridFunctionRecord", try_from = "GridFunctionRecord")]
pub struct GridFunction {
    grid: TorusGrid,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridFunctionRecord {
    #[serde(rename = "N")]
    n: usize,
    coefficients: Vec<f64>,
}

impl From<GridFunction> for GridFunctionRecord {
    fn from(f: GridFunction) -> Self {
        Self {
            n: f.grid.n(),
            coefficients: f.coeffs,
        }
    }
}

impl TryFrom<GridFunctionRecord> for GridFunction {
    type Error = Error;

    fn try_from(rec: GridFunctionRecord) -> Result<Self> {
        GridFunction::from_coefficients(TorusGrid::new(rec.n)?, rec.coefficients)
    }
}

impl GridFunction {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            coeffs: vec![0.0; grid.dimension()],
        }
    }

    /// From the real coefficient vector (`ι x`).
    pub fn from_coefficients(grid: TorusGrid, coeffs: Vec<f64>) -> Result<Self> {
        grid.validate_coefficients(&coeffs)?;
        Ok(Self { grid, coeffs })
    }

    /// From nodal values, node `(m, n)` at index `m·N + n`.
    pub fn from_values(grid: TorusGrid, values: &[Complex64]) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::invalid(
                "values",
                format!("expected {} nodal values, got {}", grid.node_count(), values.len()),
            ));
        }
        let coeffs = values.iter().flat_map(|v| [v.re, v.im]).collect();
        Self::from_coefficients(grid, coeffs)
    }

    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(usize, usize) -> Complex64) -> Result<Self> {
        let n = grid.n();
        let values: Vec<Complex64> = (0..n).flat_map(|m| (0..n).map(move |k| (m, k))).map(|(m, k)| f(m, k)).collect();
        Self::from_values(grid, &values)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn value(&self, m: usize, n: usize) -> Complex64 {
        TorusGrid::node_value(&self.coeffs, self.grid.node_index(m as i64, n as i64))
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.coeffs.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c * t).collect(),
        }
    }

    pub fn conjugate(&self) -> Self {
        Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .chunks_exact(2)
                .flat_map(|c| [c[0], -c[1]])
                .collect(),
        }
    }

    /// Cyclic shift of the nodal values by `(dm, dn)`.
    pub fn shifted(&self, dm: i64, dn: i64) -> Self {
        let n = self.grid.n();
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for m in 0..n {
            for k in 0..n {
                let src = self.grid.node_index(m as i64, k as i64);
                let dst = self.grid.node_index(m as i64 + dm, k as i64 + dn);
                coeffs[2 * dst] = self.coeffs[2 * src];
                coeffs[2 * dst + 1] = self.coeffs[2 * src + 1];
            }
        }
        Self { grid: self.grid, coeffs }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Little-endian `u64` N followed by `2N²` little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&(self.grid.n() as u64).to_le_bytes())?;
        for c in &self.coeffs {
            out.write_all(&c.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word);
        let n = usize::try_from(n).map_err(|_| Error::Format(format!("grid size {n} out of range")))?;
        if n > 1 << 15 {
            return Err(Error::Format(format!("grid size {n} out of range")));
        }
        let grid = TorusGrid::new(n)?;
        let mut coeffs = Vec::with_capacity(grid.dimension());
        for _ in 0..grid.dimension() {
            input
                .read_exact(&mut word)
                .map_err(|e| Error::Format(format!("truncated coefficient data: {e}")))?;
            coeffs.push(f64::from_le_bytes(word));
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after coefficients", rest.len())));
        }
        Self::from_coefficients(grid, coeffs)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(8 + 8 * self.coeffs.len());
        self.write_binary(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// Constant `(∂f, ∂̄f)` on one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleRecord {
    pub triangle: Triangle,
    pub pair: WirtingerPair,
    pub area: f64,
}

pub type TriangleDerivatives = Vec<TriangleRecord>;

pub fn triangle_derivatives(f: &GridFunction) -> TriangleDerivatives {
    let grid = f.grid;
    let area = grid.triangle_area();
    grid.triangles()
        .map(|t| {
            let (z, w) = grid.pair_for(&f.coeffs, &t.stencil(&grid));
            TriangleRecord {
                triangle: t,
                pair: WirtingerPair::from_finite(z, w),
                area,
            }
        })
        .collect()
}

/// `F_N(f) = ∫ L(∂f, ∂̄f)`, exact since the integrand is constant per triangle.
pub fn energy_f(f: &GridFunction) -> f64 {
    f.grid.energy(&f.coeffs)
}

pub fn grad_f(f: &GridFunction) -> Vec<f64> {
    let mut out = vec![0.0; f.coeffs.len()];
    f.grid.gradient(&f.coeffs, &mut out);
    out
}

/// `∫ |∂f|² − |∂̄f|²`, which vanishes for every periodic map.
pub fn null_lagrangian(f: &GridFunction) -> f64 {
    f.grid.integrate_moduli(&f.coeffs, |a, b| a * a - b * b)
}

/// `∫ |∂f|² + |∂̄f|²`, the scale against which the null Lagrangian is measured.
pub fn dirichlet_energy(f: &GridFunction) -> f64 {
    f.grid.integrate_moduli(&f.coeffs, |a, b| a * a + b * b)
}

pub fn energy_phi(f: &GridFunction, p: &Exponent) -> f64 {
    f.grid.integrate_moduli(&f.coeffs, |a, b| phi_moduli(a, b, p))
}

/// Largest `|∂f| + |∂̄f|` over triangles.
pub fn max_pair_sum(f: &GridFunction) -> f64 {
    triangle_derivatives(f)
        .iter()
        .map(|r| {
            let (a, b) = r.pair.moduli();
            a + b
        })
        .fold(0.0, f64::max)
}

/// Distance of `f` from the kinks of `F_N`: the smallest `||∂f| + |∂̄f| − 1|`
/// over triangles, also bounded by `|∂f|` on outer-branch triangles.
pub fn kink_margin(f: &GridFunction) -> f64 {
    triangle_derivatives(f)
        .iter()
        .map(|r| {
            let (a, b) = r.pair.moduli();
            let m = (a + b - 1.0).abs();
            if a + b > 1.0 {
                m.min(a)
            } else {
                m
            }
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::eval_l;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn random_function(n: usize, amplitude: f64, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = TorusGrid::new(n).unwrap();
        let coeffs = (0..grid.dimension()).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
        GridFunction::from_coefficients(grid, coeffs).unwrap()
    }

    #[test]
    fn rejects_small_grids() {
        assert!(TorusGrid::new(1).is_err());
        assert!(triangulate(0).is_err());
    }

    #[test]
    fn triangle_counts_and_area() {
        let tris = triangulate(2).unwrap();
        assert_eq!(tris.len(), 8);
        let grid = TorusGrid::new(2).unwrap();
        assert_eq!(grid.triangle_area(), 0.125);
        assert_eq!(triangulate(6).unwrap().len(), 72);
        for n in 2..10 {
            let g = TorusGrid::new(n).unwrap();
            let total: f64 = (0..g.triangle_count()).map(|_| g.triangle_area()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_coordinates() {
        let g = TorusGrid::new(5).unwrap();
        for k in -12..12 {
            assert_eq!(g.coordinate(k), g.coordinate(k + 5));
        }
        assert_eq!(g.coordinate(7), 0.4);
    }

    #[test]
    fn every_edge_shared_by_two_triangles() {
        for n in 2..=4 {
            let grid = TorusGrid::new(n).unwrap();
            let mut edges = HashMap::<_, usize>::new();
            for t in triangulate(n).unwrap() {
                let c = t.corners();
                for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                    // canonical: start node wrapped, displacement pointing to +x or (+y with dx = 0)
                    let (mut p, mut q) = (c[i], c[j]);
                    let d = (q.0 - p.0, q.1 - p.1);
                    if d.0 < 0 || (d.0 == 0 && d.1 < 0) {
                        std::mem::swap(&mut p, &mut q);
                    }
                    let d = (q.0 - p.0, q.1 - p.1);
                    let start = (p.0.rem_euclid(n as i64), p.1.rem_euclid(n as i64));
                    *edges.entry((start, d)).or_default() += 1;
                }
            }
            assert_eq!(edges.len(), 3 * grid.node_count());
            assert!(edges.values().all(|&c| c == 2), "N={n}");
        }
    }

    #[test]
    fn triangles_tile_the_torus() {
        let n = 5;
        let tris = triangulate(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let x: f64 = rng.gen();
            let y: f64 = rng.gen();
            let hits = tris
                .iter()
                .filter(|t| {
                    let c = t.corners();
                    let (x0, y0) = (c[0].0 as f64 / n as f64, c[0].1 as f64 / n as f64);
                    // shift the sample into the unwrapped chart of the triangle
                    let dx = (x - x0) - (x - x0).round();
                    let dy = (y - y0) - (y - y0).round();
                    let (u, v) = match t.orientation {
                        Orientation::Up => (dx * n as f64, dy * n as f64),
                        Orientation::Down => (-dx * n as f64, -dy * n as f64),
                    };
                    u > 0.0 && v > 0.0 && u + v < 1.0
                })
                .count();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn constant_function_has_zero_derivatives() {
        let grid = TorusGrid::new(4).unwrap();
        let f = GridFunction::from_fn(grid, |_, _| Complex64::new(2.5, -1.0)).unwrap();
        let recs = triangle_derivatives(&f);
        assert_eq!(recs.len(), 32);
        assert!(recs.iter().all(|r| r.pair.z() == Complex64::new(0.0, 0.0) && r.pair.w() == Complex64::new(0.0, 0.0)));
        assert_eq!(energy_f(&f), 0.0);
        assert!(grad_f(&f).iter().all(|g| *g == 0.0));
    }

    /// Gradient of the affine interpolant from corner positions and values.
    fn affine_gradient(pts: [(f64, f64); 3], vals: [Complex64; 3]) -> (Complex64, Complex64) {
        let (e1, e2) = ((pts[1].0 - pts[0].0, pts[1].1 - pts[0].1), (pts[2].0 - pts[0].0, pts[2].1 - pts[0].1));
        let (d1, d2) = (vals[1] - vals[0], vals[2] - vals[0]);
        let det = e1.0 * e2.1 - e1.1 * e2.0;
        let fx = (d1 * e2.1 - d2 * e1.1) / det;
        let fy = (d2 * e1.0 - d1 * e2.0) / det;
        (fx, fy)
    }

    #[test]
    fn hat_function_matches_affine_interpolation() {
        let n = 4;
        let grid = TorusGrid::new(n).unwrap();
        let f = GridFunction::from_fn(grid, |m, k| if (m, k) == (1, 2) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }).unwrap();
        let recs = triangle_derivatives(&f);
        let nonzero = recs.iter().filter(|r| r.pair.z().norm() + r.pair.w().norm() > 0.0).count();
        assert_eq!(nonzero, 6);
        let i = Complex64::i();
        for r in &recs {
            let corners = r.triangle.corners();
            let pts = corners.map(|(m, k)| (m as f64 / n as f64, k as f64 / n as f64));
            let vals = corners.map(|(m, k)| f.value(m.rem_euclid(n as i64) as usize, k.rem_euclid(n as i64) as usize));
            let (fx, fy) = affine_gradient(pts, vals);
            assert!((r.pair.z() - 0.5 * (fx - i * fy)).norm() < 1e-12);
            assert!((r.pair.w() - 0.5 * (fx + i * fy)).norm() < 1e-12);
        }
    }

    #[test]
    fn random_function_matches_affine_interpolation() {
        let n = 5;
        let f = random_function(n, 2.0, 17);
        let i = Complex64::i();
        for r in triangle_derivatives(&f) {
            let corners = r.triangle.corners();
            let pts = corners.map(|(m, k)| (m as f64 / n as f64, k as f64 / n as f64));
            let vals = corners.map(|(m, k)| f.value(m.rem_euclid(n as i64) as usize, k.rem_euclid(n as i64) as usize));
            let (fx, fy) = affine_gradient(pts, vals);
            assert!((r.pair.z() - 0.5 * (fx - i * fy)).norm() < 1e-12);
            assert!((r.pair.w() - 0.5 * (fx + i * fy)).norm() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_real_function() {
        let grid = TorusGrid::new(6).unwrap();
        let f = GridFunction::from_fn(grid, |m, _| Complex64::new((m as f64).sin(), 0.0)).unwrap();
        for r in triangle_derivatives(&f) {
            assert_eq!(r.pair.z(), r.pair.w());
            assert_eq!(r.pair.z().im, 0.0);
        }
    }

    #[test]
    fn hat_energy_matches_direct_sum() {
        let n = 4;
        let grid = TorusGrid::new(n).unwrap();
        let c = Complex64::new(0.7, -0.4);
        let f = GridFunction::from_fn(grid, |m, k| if (m, k) == (2, 2) { c } else { Complex64::new(0.0, 0.0) }).unwrap();
        // (f_x, f_y) on the six triangles around the node, by hand
        let nc = c * n as f64;
        let zero = Complex64::new(0.0, 0.0);
        let i = Complex64::i();
        let grads = [
            (-nc, -nc), // Δ⁺ at the node: f_x = N(0 − c), f_y = N(0 − c)
            (nc, zero), // Δ⁺_{m−1,n}: f_x = N(c − 0)
            (zero, nc), // Δ⁺_{m,n−1}: f_y = N(c − 0)
            (nc, nc),   // Δ⁻ at the node
            (-nc, zero),
            (zero, -nc),
        ];
        let direct: f64 = grads
            .iter()
            .map(|(fx, fy)| {
                let pair = WirtingerPair::new(0.5 * (fx - i * fy), 0.5 * (fx + i * fy)).unwrap();
                eval_l(&pair) * grid.triangle_area()
            })
            .sum();
        assert!((energy_f(&f) - direct).abs() < 1e-12);
    }

    #[test]
    fn inner_branch_energy_is_null_lagrangian() {
        for seed in 0..20 {
            let f = random_function(6, 1.0, seed);
            let s = max_pair_sum(&f);
            let f = f.scaled(0.9 / s);
            assert!(max_pair_sum(&f) < 1.0);
            assert!(energy_f(&f).abs() < 1e-12);
            assert_eq!(energy_f(&f), null_lagrangian(&f));
        }
    }

    #[test]
    fn null_lagrangian_vanishes() {
        for n in 2..=16 {
            for seed in 0..5 {
                let f = random_function(n, 3.0, seed * 100 + n as u64);
                let nl = null_lagrangian(&f);
                assert!(nl.abs() < 1e-12 * (1.0 + dirichlet_energy(&f)), "N={n}: {nl:e}");
            }
        }
    }

    /// Integer multiple of the null Lagrangian for integer nodal data.
    fn exact_null_lagrangian(n: usize, values: &[(i64, i64)]) -> i128 {
        let grid = TorusGrid::new(n).unwrap();
        let mut acc: i128 = 0;
        for t in grid.triangles() {
            let s = t.stencil(&grid);
            let d = |a: usize, b: usize| {
                let (pa, pb) = (values[a], values[b]);
                ((pa.0 - pb.0) as i128, (pa.1 - pb.1) as i128)
            };
            let (fx, fy) = (d(s[0], s[1]), d(s[2], s[3]));
            // 4|z|² − 4|w|² = |fx − i fy|² − |fx + i fy|² = 4 (Re fx Im fy − Im fx Re fy)
            acc += 4 * (fx.0 * fy.1 - fx.1 * fy.0);
        }
        acc
    }

    #[test]
    fn null_lagrangian_exact_integer_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [2usize, 3] {
            for _ in 0..50 {
                let vals: Vec<(i64, i64)> = (0..n * n).map(|_| (rng.gen_range(-9..=9), rng.gen_range(-9..=9))).collect();
                assert_eq!(exact_null_lagrangian(n, &vals), 0);
                let grid = TorusGrid::new(n).unwrap();
                let cvals: Vec<Complex64> = vals.iter().map(|&(a, b)| Complex64::new(a as f64, b as f64)).collect();
                let f = GridFunction::from_values(grid, &cvals).unwrap();
                assert!(null_lagrangian(&f).abs() < 1e-12 * (1.0 + dirichlet_energy(&f)));
            }
        }
    }

    #[test]
    fn conjugation_negates_null_lagrangian() {
        let f = random_function(5, 2.0, 4);
        let g = f.conjugate();
        assert!((null_lagrangian(&g) + null_lagrangian(&f)).abs() < 1e-12);
        let recs_f = triangle_derivatives(&f);
        let recs_g = triangle_derivatives(&g);
        for (a, b) in recs_f.iter().zip(&recs_g) {
            assert!((b.pair.z() - a.pair.w().conj()).norm() < 1e-12);
            assert!((b.pair.w() - a.pair.z().conj()).norm() < 1e-12);
        }
        // F_N(f̄) through the swapped-argument path
        let swapped: f64 = recs_f.iter().map(|r| r.area * eval_l(&r.pair.swapped())).sum();
        assert!((energy_f(&g) - swapped).abs() < 1e-12);
        let e2 = Exponent::new(2.0).unwrap();
        assert!((energy_phi(&g, &e2) + energy_phi(&f, &e2)).abs() < 1e-12);
    }

    #[test]
    fn translation_invariance() {
        let f = random_function(6, 3.0, 8);
        let e = Exponent::new(3.0).unwrap();
        for (dm, dn) in [(1, 0), (0, 1), (2, -3), (5, 5)] {
            let g = f.shifted(dm, dn);
            assert!((energy_f(&g) - energy_f(&f)).abs() < 1e-12);
            assert!((energy_phi(&g, &e) - energy_phi(&f, &e)).abs() < 1e-12 * energy_phi(&f, &e).abs().max(1.0));
        }
    }

    #[test]
    fn phi_energy() {
        let f = random_function(6, 2.0, 21);
        let e2 = Exponent::new(2.0).unwrap();
        assert!((energy_phi(&f, &e2) - null_lagrangian(&f)).abs() < 1e-12);
        let e3 = Exponent::new(3.0).unwrap();
        let direct: f64 = triangle_derivatives(&f)
            .iter()
            .map(|r| {
                let (a, b) = r.pair.moduli();
                r.area * e3.alpha() * ((e3.pstar() - 1.0) * a - b) * (a + b).powi(2)
            })
            .sum();
        assert!((energy_phi(&f, &e3) - direct).abs() < 1e-12 * direct.abs().max(1.0));
        let c = GridFunction::zeros(TorusGrid::new(3).unwrap());
        assert_eq!(energy_phi(&c, &e3), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        let mut checked = 0;
        let mut seed = 0;
        while checked < 10 {
            seed += 1;
            let n = if seed % 2 == 0 { 4 } else { 6 };
            let f = random_function(n, 0.3, seed);
            if kink_margin(&f) < 1e-4 {
                continue;
            }
            let g = grad_f(&f);
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut x = f.coefficients().to_vec();
            for k in 0..x.len() {
                let orig = x[k];
                x[k] = orig + h;
                let fp = f.grid().energy(&x);
                x[k] = orig - h;
                let fm = f.grid().energy(&x);
                x[k] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-6 * gmax.max(1e-3), "seed {seed} coord {k}: {} vs {fd}", g[k]);
            }
            checked += 1;
        }
    }

    #[test]
    fn outer_branch_hat_gradient() {
        // single hat of value c at node (2,2), N=4: every touched triangle has
        // |∂f| + |∂̄f| ≥ Nc > 1, so L = 2|z| − 1 there
        let n = 4;
        let grid = TorusGrid::new(n).unwrap();
        let c = 3.0;
        let f = GridFunction::from_fn(grid, |m, k| if (m, k) == (2, 2) { Complex64::new(c, 0.0) } else { Complex64::new(0.0, 0.0) }).unwrap();
        let g = grad_f(&f);
        // by hand: on each of the six triangles, ∂/∂(Re f_node) of area·(2|z| − 1).
        // Δ⁺ at the node: f_x = f_y = −Nc, z = −Nc(1 − i)/2, |z| = Nc/√2,
        //   d|z|/dc = N/√2 ⇒ contribution area·2N/√2.
        // Δ⁻ at the node: f_x = f_y = Nc, same modulus ⇒ area·2N/√2.
        // four axis triangles: |z| = Nc/2 ⇒ area·2·N/2 each.
        let area = grid.triangle_area();
        let nf = n as f64;
        let expect = area * (2.0 * 2.0 * nf / 2f64.sqrt() + 4.0 * nf);
        let idx = grid.node_index(2, 2);
        assert!((g[2 * idx] - expect).abs() < 1e-12, "{} vs {expect}", g[2 * idx]);
        assert!(g[2 * idx + 1].abs() < 1e-12);
        assert!(max_pair_sum(&f) > 1.0);
    }

    #[test]
    fn json_and_binary_round_trip() {
        let f = random_function(3, 1.0, 5);
        let back = GridFunction::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        let bytes = f.to_binary();
        assert_eq!(bytes.len(), 8 + 8 * 18);
        assert_eq!(&bytes[..8], &3u64.to_le_bytes());
        assert_eq!(GridFunction::read_binary(&bytes[..]).unwrap(), f);
        assert!(GridFunction::read_binary(&bytes[..bytes.len() - 1]).is_err());
        assert!(GridFunction::from_json(r#"{"n": 2, "coefficients": [1.0]}"#).is_err());
    }
}
