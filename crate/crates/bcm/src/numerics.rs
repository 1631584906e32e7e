//! Uniform grids, trapezoid quadrature, finite-difference stencils and the
//! dense/triangular solvers shared by every pipeline.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BcmError, Result};

/// Uniform grid `t_j = j * step`, `j = 0..=n_steps`, on `[0, t_end]`.
///
/// The same type is used for spatial grids (coordinate `x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(BcmError::InvalidGrid(format!("t_end must be positive, got {t_end}")));
        }
        if n_steps < 2 {
            return Err(BcmError::InvalidGrid(format!("need at least 2 steps, got {n_steps}")));
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn with_step(step: f64, n_steps: usize) -> Result<Self> {
        Self::new(step * n_steps as f64, n_steps)
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn step(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, j: usize) -> f64 {
        if j == self.n_steps {
            self.t_end
        } else {
            j as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    /// Index of the node at `t`, if `t` sits on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let s = t / self.step();
        let j = s.round();
        if j < 0.0 || j > self.n_steps as f64 || (s - j).abs() > 1e-7 {
            None
        } else {
            Some(j as usize)
        }
    }
}

/// Samples of a real function on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(BcmError::SizeMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(BcmError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn step(&self) -> f64 {
        self.grid.step()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    /// Cubic (4-point Lagrange) interpolation, clamped to the grid interval.
    /// Two-column CSV with the given header, e.g. `["t", "f"]`.
    pub fn write_csv(&self, header: [&str; 2], out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for (j, v) in self.values.iter().enumerate() {
            w.write_record([crate::media::fmt(self.grid.node(j)), crate::media::fmt(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        lagrange4(&self.values, self.step(), t)
    }
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Trapezoid weights for `len` nodes of spacing `h`. A single node gets weight 0.
pub fn trapezoid_weights_for(len: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; len];
    if len == 1 {
        w[0] = 0.0;
    } else if len > 1 {
        w[0] = 0.5 * h;
        w[len - 1] = 0.5 * h;
    }
    w
}

pub fn trapezoid_weights(grid: &TimeGrid) -> Vec<f64> {
    trapezoid_weights_for(grid.len(), grid.step())
}

/// Trapezoid integral of `values` sampled with spacing `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Trapezoid inner product of two functions on the same grid.
pub fn inner(f: &SampledFunction, g: &SampledFunction) -> Result<f64> {
    if f.grid != g.grid {
        return Err(BcmError::InvalidGrid("inner product of functions on different grids".into()));
    }
    let w = trapezoid_weights(&f.grid);
    Ok(w.iter().zip(f.values()).zip(g.values()).map(|((w, a), b)| w * a * b).sum())
}

/// Running trapezoid integral `∫_0^{t_j}`, starting from 0.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (j, v) in values.iter().enumerate() {
        if j > 0 {
            acc += 0.5 * h * (values[j - 1] + v);
        }
        out.push(acc);
    }
    out
}

/// Second-order finite differences on raw samples: centered in the interior,
/// one-sided second-order at both ends. Order 1 needs 3 samples, order 2 needs 4.
pub fn derivative(values: &[f64], h: f64, order: usize) -> Result<Vec<f64>> {
    let n = values.len();
    let f = values;
    match order {
        1 => {
            if n < 3 {
                return Err(BcmError::GridTooSmall { need: 3, got: n });
            }
            let mut g = vec![0.0; n];
            for i in 1..n - 1 {
                g[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
            }
            g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
            g[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
            Ok(g)
        }
        2 => {
            if n < 4 {
                return Err(BcmError::GridTooSmall { need: 4, got: n });
            }
            let h2 = h * h;
            let mut g = vec![0.0; n];
            for i in 1..n - 1 {
                g[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
            }
            g[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
            g[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
            Ok(g)
        }
        _ => Err(BcmError::InvalidGrid(format!("derivative order must be 1 or 2, got {order}"))),
    }
}

pub fn differentiate(f: &SampledFunction, order: usize) -> Result<SampledFunction> {
    if f.len() < 5 {
        return Err(BcmError::GridTooSmall { need: 5, got: f.len() });
    }
    let d = derivative(f.values(), f.step(), order)?;
    SampledFunction::new(f.grid, d)
}

/// 4-point Lagrange interpolation of uniform samples with spacing `h`.
/// `x` is clamped to the sampled interval.
pub fn lagrange4(values: &[f64], h: f64, x: f64) -> f64 {
    let n = values.len();
    match n {
        0 => return 0.0,
        1 => return values[0],
        2 | 3 => {
            let s = (x / h).clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            let u = s - i as f64;
            return values[i] * (1.0 - u) + values[i + 1] * u;
        }
        _ => {}
    }
    let s = (x / h).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let u = s - i as f64;
    let l0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
    let l1 = u * (u - 2.0) * (u - 3.0) / 2.0;
    let l2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
    let l3 = u * (u - 1.0) * (u - 2.0) / 6.0;
    l0 * values[i] + l1 * values[i + 1] + l2 * values[i + 2] + l3 * values[i + 3]
}

/// 4-point Lagrange interpolation on strictly increasing abscissae.
pub fn lagrange4_nonuniform(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n < 4 {
        let k = xs.partition_point(|&v| v < x).clamp(1, n - 1);
        let u = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
        return ys[k - 1] * (1.0 - u) + ys[k] * u;
    }
    let k = xs.partition_point(|&v| v < x);
    let i = (k as isize - 2).clamp(0, n as isize - 4) as usize;
    let mut acc = 0.0;
    for a in i..i + 4 {
        let mut l = 1.0;
        for b in i..i + 4 {
            if a != b {
                l *= (x - xs[b]) / (xs[a] - xs[b]);
            }
        }
        acc += l * ys[a];
    }
    acc
}

/// Trapezoid-discretized Volterra equation of the second kind
/// `α(t) f(t) + ∫_0^t K(t,s) f(s) ds = rhs(t)`, solved by forward substitution.
pub fn solve_volterra2(
    kernel: impl Fn(f64, f64) -> f64,
    rhs: &SampledFunction,
    diag_coeff: &SampledFunction,
) -> Result<SampledFunction> {
    let grid = rhs.grid();
    if diag_coeff.grid() != grid {
        return Err(BcmError::InvalidGrid("diagonal coefficient on a different grid".into()));
    }
    let alpha = diag_coeff.values();
    if let Some(i) = alpha.iter().position(|a| a.abs() < 1e-10) {
        return Err(BcmError::SingularEquation { index: i, value: alpha[i] });
    }
    let h = grid.step();
    let t = grid.nodes();
    let b = rhs.values();
    let mut f = vec![0.0; t.len()];
    f[0] = b[0] / alpha[0];
    for i in 1..t.len() {
        let mut acc = 0.5 * h * kernel(t[i], t[0]) * f[0];
        for j in 1..i {
            acc += h * kernel(t[i], t[j]) * f[j];
        }
        let pivot = alpha[i] + 0.5 * h * kernel(t[i], t[i]);
        if pivot.abs() < 1e-300 || !pivot.is_finite() {
            return Err(BcmError::SingularEquation { index: i, value: pivot });
        }
        f[i] = (b[i] - acc) / pivot;
    }
    SampledFunction::new(grid, f)
}

/// Applies the same discrete Volterra operator that [`solve_volterra2`] inverts.
pub fn apply_volterra2(
    kernel: impl Fn(f64, f64) -> f64,
    f: &SampledFunction,
    diag_coeff: &SampledFunction,
) -> Result<SampledFunction> {
    let grid = f.grid();
    let h = grid.step();
    let t = grid.nodes();
    let v = f.values();
    let out = (0..t.len())
        .map(|i| {
            let w = trapezoid_weights_for(i + 1, h);
            let integral: f64 = (0..=i).map(|j| w[j] * kernel(t[i], t[j]) * v[j]).sum();
            diag_coeff.values()[i] * v[i] + integral
        })
        .collect();
    SampledFunction::new(grid, out)
}

/// Output node `j` holds input node `n - j`.
pub fn time_reverse(f: &SampledFunction) -> SampledFunction {
    let mut values = f.values.clone();
    values.reverse();
    SampledFunction { grid: f.grid, values }
}

/// Nyström discretization of an integral operator with positive quadrature
/// weights `w`. The matrix is stored in the weight-symmetrized form
/// `E = W^{1/2} A W^{-1/2}`, so operators that are self-adjoint in the
/// weighted inner product have symmetric `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    entries: DMatrix<f64>,
    weights: Vec<f64>,
    symmetric: bool,
}

impl DenseOperator {
    pub fn new(entries: DMatrix<f64>, weights: Vec<f64>, symmetric: bool) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(BcmError::SizeMismatch { expected: entries.nrows(), got: entries.ncols() });
        }
        if weights.len() != entries.nrows() {
            return Err(BcmError::SizeMismatch { expected: entries.nrows(), got: weights.len() });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(BcmError::InvalidGrid("quadrature weights must be positive".into()));
        }
        if let Some(i) = entries.iter().position(|v| !v.is_finite()) {
            return Err(BcmError::NonFinite(i));
        }
        let mut op = Self { entries, weights, symmetric };
        if symmetric {
            op.symmetrize();
        }
        Ok(op)
    }

    /// `A_ij = d_i δ_ij + K_ij w_j`, with `K` given entrywise.
    pub fn from_nystrom(
        diag: &[f64],
        weights: Vec<f64>,
        symmetric: bool,
        kernel: impl Fn(usize, usize) -> f64,
    ) -> Result<Self> {
        let n = weights.len();
        let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let e = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { diag[i] } else { 0.0 };
            d + sw[i] * kernel(i, j) * sw[j]
        });
        Self::new(e, weights, symmetric)
    }

    pub fn identity(weights: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        Self::new(DMatrix::identity(n, n), weights, true)
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `max |E_ij - E_ji| / max |E|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.entries.amax();
        if scale == 0.0 {
            return 0.0;
        }
        let n = self.size();
        let mut m: f64 = 0.0;
        for j in 0..n {
            for i in 0..j {
                m = m.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        m / scale
    }

    pub fn symmetrize(&mut self) {
        let n = self.size();
        for j in 0..n {
            for i in 0..j {
                let a = 0.5 * (self.entries[(i, j)] + self.entries[(j, i)]);
                self.entries[(i, j)] = a;
                self.entries[(j, i)] = a;
            }
        }
        self.symmetric = true;
    }

    /// The Nyström matrix `A = W^{-1/2} E W^{1/2}` acting on nodal values.
    pub fn nystrom_matrix(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| {
            self.entries[(i, j)] * (self.weights[j] / self.weights[i]).sqrt()
        })
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let z = DVector::from_iterator(f.len(), f.iter().zip(&self.weights).map(|(v, w)| v * w.sqrt()));
        let y = &self.entries * z;
        y.iter().zip(&self.weights).map(|(v, w)| v / w.sqrt()).collect()
    }

    /// Weighted pairing `(A f, g)`.
    pub fn bilinear(&self, f: &[f64], g: &[f64]) -> f64 {
        self.apply(f).iter().zip(g).zip(&self.weights).map(|((a, b), w)| a * b * w).sum()
    }

    /// Matrix dump: first line `n`, then one comma-separated row per line.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        let a = self.nystrom_matrix();
        writeln!(out, "n")?;
        writeln!(out, "{}", self.size())?;
        for i in 0..self.size() {
            let row: Vec<String> = (0..self.size()).map(|j| format!("{:.17e}", a[(i, j)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

struct LuSolver {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl LuSolver {
    fn solve(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        self.lu.solve(b)
    }

    fn solve_transpose(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        let y = self.lu.u().tr_solve_upper_triangular(b)?;
        let mut z = self.lu.l().tr_solve_lower_triangular(&y)?;
        self.lu.p().inv_permute_rows(&mut z);
        Some(z)
    }

    /// Hager/Higham estimate of `‖M^{-1}‖_1`.
    fn inverse_norm1(&self) -> Option<f64> {
        let n = self.n;
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        for iter in 0..5 {
            let y = self.solve(&x)?;
            let new_est = y.lp_norm(1);
            if iter > 0 && new_est <= est {
                break;
            }
            est = new_est;
            let sign = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose(&sign)?;
            let (j, zj) = z.iter().enumerate().fold((0, 0.0), |(bj, bv), (k, v)| {
                if v.abs() > bv {
                    (k, v.abs())
                } else {
                    (bj, bv)
                }
            });
            if iter > 0 && zj <= z.dot(&x) {
                break;
            }
            x = DVector::zeros(n);
            x[j] = 1.0;
        }
        let alt = DVector::from_fn(n, |i, _| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            s * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        });
        let y = self.solve(&alt)?;
        Some(est.max(2.0 * y.lp_norm(1) / (3.0 * n as f64)))
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max)
}

/// Nyström solve of `(A + μ I) f = rhs` with dense LU and one refinement step.
pub fn solve_fredholm2_values(op: &DenseOperator, rhs: &[f64], ridge: f64) -> Result<Vec<f64>> {
    let n = op.size();
    if rhs.len() != n {
        return Err(BcmError::SizeMismatch { expected: n, got: rhs.len() });
    }
    let sw: Vec<f64> = op.weights.iter().map(|w| w.sqrt()).collect();
    let mut m = op.entries.clone();
    if ridge != 0.0 {
        for i in 0..n {
            m[(i, i)] += ridge;
        }
    }
    let anorm = norm1(&m);
    let b = DVector::from_fn(n, |i, _| rhs[i] * sw[i]);
    let solver = LuSolver { lu: m.clone().lu(), n };
    if !solver.lu.is_invertible() {
        return Err(BcmError::NonInvertible { condition: f64::INFINITY });
    }
    let condition = anorm * solver.inverse_norm1().unwrap_or(f64::INFINITY);
    if !condition.is_finite() || condition > 1e14 {
        return Err(BcmError::NonInvertible { condition });
    }
    let mut z = solver.solve(&b).ok_or(BcmError::NonInvertible { condition })?;
    let resid = &b - &m * &z;
    if let Some(dz) = solver.solve(&resid) {
        z += dz;
    }
    Ok(z.iter().zip(&sw).map(|(v, s)| v / s).collect())
}

pub fn solve_fredholm2(op: &DenseOperator, rhs: &SampledFunction, ridge: f64) -> Result<SampledFunction> {
    let f = solve_fredholm2_values(op, rhs.values(), ridge)?;
    SampledFunction::new(rhs.grid(), f)
}

/// Lower-triangular factor and pivots `d_k = L_kk^2` of a successful Cholesky.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub l: DMatrix<f64>,
    pub pivots: Vec<f64>,
}

impl CholeskyFactor {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    pub fn min_pivot(&self) -> f64 {
        self.pivots.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_pivot(&self) -> f64 {
        self.pivots.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub enum CholeskyOutcome {
    Factor(CholeskyFactor),
    /// `pivot` is 1-based.
    Failed { pivot: usize, value: f64 },
}

impl CholeskyOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, CholeskyOutcome::Factor(_))
    }
}

/// Cholesky of the symmetric form of `op`; fails at the first pivot not
/// exceeding `1e-12 * max diagonal`.
pub fn cholesky_posdef(op: &DenseOperator) -> Result<CholeskyOutcome> {
    let asym = op.asymmetry();
    if asym > 1e-12 {
        return Err(BcmError::NotSymmetric(asym));
    }
    let a = &op.entries;
    let n = op.size();
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let tol = 1e-12 * max_diag;
    // row-major copy of L for contiguous dot products
    let mut l = vec![0.0; n * n];
    let mut pivots = Vec::with_capacity(n);
    for j in 0..n {
        let d = a[(j, j)] - l[j * n..j * n + j].iter().map(|x| x * x).sum::<f64>();
        if !(d > tol) || max_diag <= 0.0 {
            return Ok(CholeskyOutcome::Failed { pivot: j + 1, value: d });
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        pivots.push(d);
        for i in j + 1..n {
            let s: f64 = l[i * n..i * n + j].iter().zip(&l[j * n..j * n + j]).map(|(x, y)| x * y).sum();
            l[i * n + j] = (a[(i, j)] - s) / ljj;
        }
    }
    let l = DMatrix::from_row_slice(n, n, &l);
    Ok(CholeskyOutcome::Factor(CholeskyFactor { l, pivots }))
}

/// Reproducible smooth probes on `grid`: `Σ_{k=1}^{4} c_k sin(k π t / (2 t_end))`
/// with `c_k` uniform in `[-1, 1] / k`. Every probe vanishes at `t = 0`.
pub fn seeded_smooth_probes(seed: u64, count: usize, grid: TimeGrid) -> Vec<SampledFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = std::f64::consts::PI / (2.0 * grid.t_end());
    (0..count)
        .map(|_| {
            let c: Vec<f64> = (1..=4).map(|k| rng.gen_range(-1.0..1.0) / k as f64).collect();
            let values = grid
                .nodes()
                .iter()
                .map(|&t| c.iter().enumerate().map(|(k, ck)| ck * ((k + 1) as f64 * w * t).sin()).sum())
                .collect();
            SampledFunction { grid, values }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t, n).unwrap()
    }

    #[test]
    fn grid_nodes_hit_both_ends() {
        let g = grid(0.3, 7);
        assert_eq!(g.len(), 8);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(7), 0.3);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::new(1.0, 1).is_err());
        assert!(TimeGrid::new(0.0, 4).is_err());
    }

    #[test]
    fn trapezoid_exact_cases() {
        for n in [2, 3, 10, 57] {
            let g = grid(1.0, n);
            let one = SampledFunction::from_fn(g, |_| 1.0).unwrap();
            let t = SampledFunction::from_fn(g, |t| t).unwrap();
            assert!((inner(&one, &one).unwrap() - 1.0).abs() < 1e-14);
            assert!((inner(&t, &one).unwrap() - 0.5).abs() < 1e-14);
        }
        let g = grid(std::f64::consts::PI, 100);
        let s = SampledFunction::from_fn(g, f64::sin).unwrap();
        assert!((inner(&s, &s).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = grid(1.0, 10);
        let f = SampledFunction::from_fn(g, |t| t * t).unwrap();
        let d = differentiate(&f, 1).unwrap();
        for (t, v) in g.nodes().iter().zip(d.values()) {
            assert!((v - 2.0 * t).abs() < 1e-12);
        }
        let c = SampledFunction::from_fn(g, |_| 3.5).unwrap();
        assert!(differentiate(&c, 1).unwrap().max_abs() < 1e-12);
        assert!(differentiate(&SampledFunction::zeros(grid(1.0, 3)), 1).is_err());
    }

    #[test]
    fn differentiate_self_converges_at_second_order() {
        let err = |n: usize| {
            let g = grid(1.0, n);
            let f = SampledFunction::from_fn(g, f64::sin).unwrap();
            let d = differentiate(&f, 1).unwrap();
            g.nodes().iter().zip(d.values()).map(|(t, v)| (v - t.cos()).abs()).fold(0.0, f64::max)
        };
        let order = (err(40) / err(80)).log2();
        assert!(order >= 1.9, "order {order}");
        let err2 = |n: usize| {
            let g = grid(1.0, n);
            let f = SampledFunction::from_fn(g, f64::sin).unwrap();
            let d = differentiate(&f, 2).unwrap();
            g.nodes().iter().zip(d.values()).map(|(t, v)| (v + t.sin()).abs()).fold(0.0, f64::max)
        };
        assert!((err2(40) / err2(80)).log2() >= 1.9);
    }

    #[test]
    fn volterra_examples() {
        let g = grid(1.0, 200);
        let one = SampledFunction::from_fn(g, |_| 1.0).unwrap();
        let f = solve_volterra2(|_, _| 0.0, &one, &one).unwrap();
        assert_eq!(f.values(), one.values());
        let f = solve_volterra2(|_, _| 1.0, &one, &one).unwrap();
        assert!((f.values()[200] - (-1.0f64).exp()).abs() < 2e-3);
        let back = apply_volterra2(|_, _| 1.0, &f, &one).unwrap();
        for (a, b) in back.values().iter().zip(one.values()) {
            assert!((a - b).abs() < 1e-10);
        }
        let zero = SampledFunction::zeros(g);
        assert!(matches!(
            solve_volterra2(|_, _| 1.0, &one, &zero),
            Err(BcmError::SingularEquation { .. })
        ));
    }

    #[test]
    fn fredholm_identity_and_perturbation() {
        let g = grid(1.0, 20);
        let w = trapezoid_weights(&g);
        let id = DenseOperator::identity(w.clone()).unwrap();
        let rhs = SampledFunction::from_fn(g, |t| t.cos()).unwrap();
        let f = solve_fredholm2(&id, &rhs, 0.0).unwrap();
        for (a, b) in f.values().iter().zip(rhs.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let op = DenseOperator::from_nystrom(&vec![1.0; g.len()], w, true, |i, j| {
            0.3 * ((i as f64 - j as f64) / 7.0).cos()
        })
        .unwrap();
        let f0: Vec<f64> = g.nodes().iter().map(|t| (3.0 * t).sin()).collect();
        let b = op.apply(&f0);
        let f = solve_fredholm2_values(&op, &b, 0.0).unwrap();
        for (a, b) in f.iter().zip(&f0) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn fredholm_rejects_singular() {
        let w = vec![1.0; 3];
        let e = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 1.0, 0.0, 1.0]);
        let op = DenseOperator::new(e, w, false).unwrap();
        assert!(matches!(
            solve_fredholm2_values(&op, &[1.0, 1.0, 1.0], 0.0),
            Err(BcmError::NonInvertible { .. })
        ));
    }

    #[test]
    fn cholesky_examples() {
        let id = DenseOperator::identity(vec![1.0; 4]).unwrap();
        assert!(cholesky_posdef(&id).unwrap().is_success());
        let d = DenseOperator::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0])), vec![1.0; 2], true)
            .unwrap();
        match cholesky_posdef(&d).unwrap() {
            CholeskyOutcome::Failed { pivot, value } => {
                assert_eq!(pivot, 2);
                assert!(value < 0.0);
            }
            _ => panic!("diag(1,-1) must fail"),
        }
        let ns = DenseOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]), vec![1.0; 2], false)
            .unwrap();
        assert!(matches!(cholesky_posdef(&ns), Err(BcmError::NotSymmetric(_))));
    }

    #[test]
    fn time_reverse_basics() {
        let g = grid(1.0, 10);
        let f = SampledFunction::from_fn(g, |t| t).unwrap();
        let r = time_reverse(&f);
        for (t, v) in g.nodes().iter().zip(r.values()) {
            assert!((v - (1.0 - t)).abs() < 1e-15);
        }
        assert_eq!(time_reverse(&r), f);
    }

    #[test]
    fn interpolation_exact_on_cubics() {
        let h = 0.1;
        let v: Vec<f64> = (0..12).map(|i| {
            let x = i as f64 * h;
            x * x * x - x
        })
        .collect();
        for x in [0.0, 0.05, 0.33, 0.71, 1.1] {
            assert!((lagrange4(&v, h, x) - (x * x * x - x)).abs() < 1e-12);
        }
        let xs: Vec<f64> = (0..9).map(|i| (i as f64 * 0.2).exp()).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!((lagrange4_nonuniform(&xs, &ys, 2.0) - 4.0).abs() < 1e-12);
    }
}
