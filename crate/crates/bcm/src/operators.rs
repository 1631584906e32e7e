//! Response and connecting operators assembled from a response kernel.

use nalgebra::DMatrix;

use crate::error::{BcmError, Result};
use crate::forward::{ResponseKernel, WaveSystem};
use crate::numerics::{
    cholesky_posdef, cumulative_trapezoid, derivative, trapezoid_weights_for, CholeskyOutcome, DenseOperator,
    SampledFunction,
};

/// Which form of the response operator [`apply_response`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseMode {
    Forward,
    /// Continuum adjoint evaluated pointwise.
    Adjoint,
    /// Weighted transpose of the discrete forward matrix.
    DiscreteAdjoint,
}

/// Discrete Dirichlet response matrix `-alpha D + beta I + conv(r)` on
/// `steps + 1` nodes (nodal form).
fn dirichlet_response_matrix(k: &ResponseKernel, steps: usize) -> Result<DMatrix<f64>> {
    let h = k.step();
    let n = steps + 1;
    let mut m = DMatrix::zeros(n, n);
    // derivative stencil, one-sided second order at both ends
    for i in 0..n {
        let row: Vec<(usize, f64)> = if i == 0 {
            vec![(0, -3.0), (1, 4.0), (2, -1.0)]
        } else if i == n - 1 {
            vec![(i, 3.0), (i - 1, -4.0), (i - 2, 1.0)]
        } else {
            vec![(i + 1, 1.0), (i - 1, -1.0)]
        };
        for (j, c) in row {
            m[(i, j)] -= k.alpha() * c / (2.0 * h);
        }
        m[(i, i)] += k.beta();
        for j in 0..=i {
            let w = if i == 0 { 0.0 } else if j == 0 || j == i { 0.5 * h } else { h };
            m[(i, j)] += k.r_index(i - j) * w;
        }
    }
    Ok(m)
}

fn check_kernel_grid(k: &ResponseKernel, f: &SampledFunction) -> Result<usize> {
    if (f.step() - k.step()).abs() > 1e-9 * k.step() {
        return Err(BcmError::InvalidGrid(format!("control step {} differs from kernel step {}", f.step(), k.step())));
    }
    let steps = f.grid().n_steps();
    if steps > k.r().grid().n_steps() {
        return Err(BcmError::KernelTooShort { need: f.grid().t_end(), have: k.r().grid().t_end() });
    }
    Ok(steps)
}

/// Applies the response operator to `f`, sampled on the kernel grid.
///
/// Dirichlet: `-alpha f' + beta f + ∫_0^t r(t-s) f(s) ds` (needs `f(0) = 0`);
/// adjoint `alpha g' + beta g + ∫_t^T r(s-t) g(s) ds` (needs `g(T) = 0`).
/// Neumann: the convolution alone. Scattering: `∫ r(tau + s) f(s) ds`, self-adjoint.
pub fn apply_response(k: &ResponseKernel, f: &SampledFunction, mode: ResponseMode) -> Result<SampledFunction> {
    let steps = check_kernel_grid(k, f)?;
    let h = k.step();
    let v = f.values();
    let n = steps + 1;
    let scale = f.max_abs();
    let conv = |i: usize| -> f64 {
        (0..=i).map(|j| k.r_index(i - j) * v[j] * if j == 0 || j == i { 0.5 * h } else { h }).sum::<f64>()
            * if i == 0 { 0.0 } else { 1.0 }
    };
    let corr = |i: usize| -> f64 {
        (i..n).map(|j| k.r_index(j - i) * v[j] * if j == i || j == n - 1 { 0.5 * h } else { h }).sum::<f64>()
            * if i == n - 1 { 0.0 } else { 1.0 }
    };
    let out: Vec<f64> = match (k.system(), mode) {
        (WaveSystem::Dirichlet, ResponseMode::Forward) => {
            if v[0].abs() > 1e-9 * scale {
                return Err(BcmError::DomainCondition(format!("f(0) = {} must vanish", v[0])));
            }
            let d = derivative(v, h, 1)?;
            (0..n).map(|i| -k.alpha() * d[i] + k.beta() * v[i] + conv(i)).collect()
        }
        (WaveSystem::Dirichlet, ResponseMode::Adjoint) => {
            if v[n - 1].abs() > 1e-9 * scale {
                return Err(BcmError::DomainCondition(format!("g(T) = {} must vanish", v[n - 1])));
            }
            let d = derivative(v, h, 1)?;
            (0..n).map(|i| k.alpha() * d[i] + k.beta() * v[i] + corr(i)).collect()
        }
        (WaveSystem::Dirichlet, ResponseMode::DiscreteAdjoint) => {
            let m = dirichlet_response_matrix(k, steps)?;
            let w = trapezoid_weights_for(n, h);
            (0..n).map(|i| (0..n).map(|j| m[(j, i)] * w[j] * v[j]).sum::<f64>() / w[i]).collect()
        }
        (WaveSystem::Neumann, ResponseMode::Forward) => (0..n).map(conv).collect(),
        (WaveSystem::Neumann, _) => (0..n).map(corr).collect(),
        (WaveSystem::Scattering, _) => {
            let w = trapezoid_weights_for(n, h);
            (0..n).map(|i| (0..n).map(|j| k.r_index(i + j) * w[j] * v[j]).sum()).collect()
        }
    };
    SampledFunction::new(f.grid(), out)
}

/// Symmetric weighted matrix of the scattering response on `[0, 2a]`.
pub fn scattering_response_operator(k: &ResponseKernel) -> Result<DenseOperator> {
    let n = k.horizon_steps() + 1;
    let w = trapezoid_weights_for(n, k.step());
    DenseOperator::from_nystrom(&vec![0.0; n], w, false, |i, j| k.r_index(i + j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectingKind {
    /// `C^T` for Dirichlet controls.
    Plain,
    /// `-d/dt C^T d/dt` for Neumann controls.
    Differentiated,
    /// `I + R` of the scattering system.
    Scattering,
}

/// Connecting operator on the nodes `first..=last` of the kernel grid.
#[derive(Debug, Clone)]
pub struct ConnectingOperator {
    system: WaveSystem,
    kind: ConnectingKind,
    step: f64,
    first: usize,
    last: usize,
    matrix: DenseOperator,
}

impl ConnectingOperator {
    pub fn system(&self) -> WaveSystem {
        self.system
    }

    pub fn kind(&self) -> ConnectingKind {
        self.kind
    }

    pub fn matrix(&self) -> &DenseOperator {
        &self.matrix
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Grid index of the first node.
    pub fn first_index(&self) -> usize {
        self.first
    }

    pub fn size(&self) -> usize {
        self.last - self.first + 1
    }

    /// Length of the control interval.
    pub fn horizon(&self) -> f64 {
        (self.last - self.first) as f64 * self.step
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix.apply(f)
    }

    pub fn bilinear(&self, f: &[f64], g: &[f64]) -> f64 {
        self.matrix.bilinear(f, g)
    }
}

fn horizon_steps(k: &ResponseKernel, horizon: f64) -> Result<usize> {
    let h = k.step();
    let steps = (horizon / h).round() as usize;
    if (steps as f64 * h - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(BcmError::InvalidGrid(format!("horizon {horizon} is not a multiple of the kernel step {h}")));
    }
    if steps > k.horizon_steps() {
        return Err(BcmError::KernelTooShort { need: 2.0 * horizon, have: k.r().grid().t_end() });
    }
    Ok(steps)
}

/// Precomputed kernel data shared by many assemblies.
pub(crate) struct KernelTables<'a> {
    kernel: &'a ResponseKernel,
    r_prime: Vec<f64>,
}

impl<'a> KernelTables<'a> {
    pub(crate) fn new(kernel: &'a ResponseKernel) -> Result<Self> {
        let r_prime = if kernel.system() == WaveSystem::Neumann { kernel.r_prime()? } else { Vec::new() };
        Ok(Self { kernel, r_prime })
    }

    pub(crate) fn r_prime(&self, j: usize) -> f64 {
        self.r_prime.get(j).copied().unwrap_or(0.0)
    }

    /// Dirichlet/Neumann operator on `[0, steps h]`; scattering on `[first h, 2a]`.
    pub(crate) fn connecting(&self, index: usize) -> Result<ConnectingOperator> {
        let k = self.kernel;
        let h = k.step();
        let (first, last, kind) = match k.system() {
            WaveSystem::Dirichlet => (0, index, ConnectingKind::Plain),
            WaveSystem::Neumann => (0, index, ConnectingKind::Differentiated),
            WaveSystem::Scattering => (index, k.horizon_steps(), ConnectingKind::Scattering),
        };
        if last <= first {
            return Err(BcmError::GridTooSmall { need: 2, got: 1 });
        }
        let n = last - first + 1;
        let w = trapezoid_weights_for(n, h);
        let s = last - first;
        let matrix = match k.system() {
            WaveSystem::Dirichlet => {
                let pk = |j: usize| k.p_index(j);
                DenseOperator::from_nystrom(&vec![k.alpha(); n], w, true, |i, j| pk(2 * s - i - j) - pk(i.abs_diff(j)))?
            }
            WaveSystem::Neumann => DenseOperator::from_nystrom(&vec![-k.r_index(0); n], w, true, |i, j| {
                -0.5 * (self.r_prime(2 * s - i - j) + self.r_prime(i.abs_diff(j)))
            })?,
            WaveSystem::Scattering => {
                DenseOperator::from_nystrom(&vec![1.0; n], w, true, |i, j| k.r_index(2 * first + i + j))?
            }
        };
        Ok(ConnectingOperator { system: k.system(), kind, step: h, first, last, matrix })
    }
}

/// Connecting operator on `[0, T]` (Dirichlet, Neumann) or `[0, 2a]`
/// (scattering, `horizon` ignored).
pub fn assemble_connecting(k: &ResponseKernel, horizon: f64) -> Result<ConnectingOperator> {
    let index = match k.system() {
        WaveSystem::Scattering => 0,
        _ => horizon_steps(k, horizon)?,
    };
    KernelTables::new(k)?.connecting(index)
}

/// `C^T f` through the odd extension about `T`, the extended response and
/// time integration. The extension jumps at `T`, so the node `T` carries
/// separate left and right values.
fn factorized_apply(k: &ResponseKernel, steps: usize, f: &[f64]) -> Vec<f64> {
    let h = k.step();
    let n = steps;
    let left = f.to_vec();
    let right: Vec<f64> = (0..=n).map(|m| -f[n - m]).collect();
    let gl = cumulative_trapezoid(&left, h);
    let gr = cumulative_trapezoid(&right, h);
    let g: Vec<f64> = gl.iter().cloned().chain(gr[1..].iter().map(|v| gl[n] + v)).collect();
    let conv: Vec<f64> = (0..=2 * n)
        .map(|i| {
            if i == 0 {
                return 0.0;
            }
            (0..=i).map(|j| k.r_index(i - j) * g[j] * if j == 0 || j == i { 0.5 * h } else { h }).sum()
        })
        .collect();
    let v_left = |i: usize| -k.alpha() * left[i] + k.beta() * g[i] + conv[i];
    let v_right = |m: usize| -k.alpha() * right[m] + k.beta() * g[n + m] + conv[n + m];
    (0..=n).map(|i| -0.5 * (v_left(i) - v_right(n - i))).collect()
}

/// Dirichlet `C^T` composed from the odd extension, the extended response
/// operator and time integration. Not symmetrized; a cross-check of
/// [`assemble_connecting`].
pub fn assemble_connecting_factorized(k: &ResponseKernel, horizon: f64) -> Result<ConnectingOperator> {
    if k.system() != WaveSystem::Dirichlet {
        return Err(BcmError::Incompatible("the factorized form is defined for Dirichlet kernels".into()));
    }
    let steps = horizon_steps(k, horizon)?;
    if steps < 1 {
        return Err(BcmError::GridTooSmall { need: 2, got: 1 });
    }
    let n = steps + 1;
    let h = k.step();
    let w = trapezoid_weights_for(n, h);
    let mut e = DMatrix::zeros(n, n);
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col = factorized_apply(k, steps, &unit);
        unit[j] = 0.0;
        for i in 0..n {
            e[(i, j)] = col[i] * (w[i] / w[j]).sqrt();
        }
    }
    let matrix = DenseOperator::new(e, w, false)?;
    Ok(ConnectingOperator { system: WaveSystem::Dirichlet, kind: ConnectingKind::Plain, step: h, first: 0, last: steps, matrix })
}

/// Relative Frobenius distance of the nodal matrices of two operators.
pub fn relative_frobenius(a: &ConnectingOperator, b: &ConnectingOperator) -> Result<f64> {
    if a.size() != b.size() {
        return Err(BcmError::SizeMismatch { expected: a.size(), got: b.size() });
    }
    let ma = a.matrix.nystrom_matrix();
    let mb = b.matrix.nystrom_matrix();
    Ok((&ma - &mb).norm() / mb.norm())
}

/// `max ‖(K J - J K) f‖_∞ / ‖f‖_∞` over the probes, with `K` the causal
/// convolution part of the extended response and `J` time integration, both
/// as lower-triangular Toeplitz matrices on the kernel grid.
pub fn commutation_defect(k: &ResponseKernel, probes: &[SampledFunction]) -> Result<f64> {
    let h = k.step();
    let toeplitz = |c: &dyn Fn(usize) -> f64, v: &[f64]| -> Vec<f64> {
        (0..v.len()).map(|i| (0..=i).map(|j| c(i - j) * v[j]).sum()).collect()
    };
    let jc = |d: usize| if d == 0 { 0.5 * h } else { h };
    let kc = |d: usize| k.r_index(d) * if d == 0 { 0.5 * h } else { h };
    let mut worst: f64 = 0.0;
    for f in probes {
        check_kernel_grid(k, f)?;
        let v = f.values();
        let a = toeplitz(&kc, &toeplitz(&jc, v));
        let b = toeplitz(&jc, &toeplitz(&kc, v));
        let d = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let s = f.max_abs();
        if s > 0.0 {
            worst = worst.max(d / s);
        }
    }
    Ok(worst)
}

/// Gram matrix of `I + R` in the hat basis `e_i` centered at `i h`,
/// `i = 1..=n`: mass matrix plus `h^2 r(tau_i + tau_j)`.
pub fn scattering_hat_gram(k: &ResponseKernel) -> Result<DMatrix<f64>> {
    if k.system() != WaveSystem::Scattering {
        return Err(BcmError::Incompatible("hat Gram matrix needs a scattering kernel".into()));
    }
    let n = k.horizon_steps();
    let h = k.step();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let mass = match i.abs_diff(j) {
            0 => 2.0 * h / 3.0,
            1 => h / 6.0,
            _ => 0.0,
        };
        mass + h * h * k.r_index(i + j + 2)
    }))
}

/// Outcome of the positivity check.
#[derive(Debug, Clone, PartialEq)]
pub enum Admissibility {
    Admissible { min_pivot: f64, max_pivot: f64 },
    Rejected { reason: String },
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        matches!(self, Admissibility::Admissible { .. })
    }
}

/// Cholesky of the (symmetrized) operator; admissible iff it succeeds and
/// the pivot ratio is at least `1e-10`.
pub fn check_admissibility(c: &ConnectingOperator) -> Admissibility {
    let mut m = c.matrix.clone();
    if !m.is_symmetric() {
        m.symmetrize();
    }
    match cholesky_posdef(&m) {
        Ok(CholeskyOutcome::Factor(f)) => {
            let (lo, hi) = (f.min_pivot(), f.max_pivot());
            if lo / hi < 1e-10 {
                Admissibility::Rejected { reason: format!("pivot ratio {:.3e} below 1e-10", lo / hi) }
            } else {
                Admissibility::Admissible { min_pivot: lo, max_pivot: hi }
            }
        }
        Ok(CholeskyOutcome::Failed { pivot, value }) => {
            let what = if value < 0.0 { "negative pivot" } else { "vanishing pivot" };
            Admissibility::Rejected { reason: format!("{what} {value:.6e} at position {pivot}") }
        }
        Err(e) => Admissibility::Rejected { reason: e.to_string() },
    }
}
