//! Special boundary-control problems, their ξ-families, and the classical
//! kernels derived from them.

use std::io::Write;

use crate::error::{BcmError, Result};
use crate::forward::{Control, ResponseKernel, WaveSystem};
use crate::media::fmt;
use crate::numerics::{cumulative_trapezoid, solve_fredholm2_values, trapezoid_weights_for, DenseOperator, SampledFunction, TimeGrid};
use crate::operators::{assemble_connecting, check_admissibility, Admissibility, ConnectingOperator, KernelTables};

/// Target of a special boundary-control problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyTarget {
    /// Solution of the static equation with `y(0) = y0`, `y'(0) = y0p`.
    Sturm { y0: f64, y0p: f64 },
    /// Solution equal to `e^{-k x}` past the support (scattering).
    Wavenumber(f64),
}

impl FamilyTarget {
    /// `y(0) = 0, y'(0) = 1`: the Gelfand-Levitan family.
    pub const GELFAND_LEVITAN: FamilyTarget = FamilyTarget::Sturm { y0: 0.0, y0p: 1.0 };
    /// `y = -1`: the Krein family.
    pub const KREIN: FamilyTarget = FamilyTarget::Sturm { y0: -1.0, y0p: 0.0 };
    /// `y = -x`: the Pariiskii family.
    pub const PARIISKII: FamilyTarget = FamilyTarget::Sturm { y0: 0.0, y0p: -1.0 };
}

/// Solutions `f^ξ` for `ξ = j h`, `j` in `xi_index`.
///
/// Dirichlet/Neumann: `f^ξ` sampled on `[0, ξ]`, readout `f^ξ(0)`.
/// Scattering: `f^ξ` sampled on `[ξ, 2a]`, readout `f^ξ(ξ)`.
#[derive(Debug, Clone)]
pub struct ControlFamily {
    system: WaveSystem,
    step: f64,
    horizon_index: usize,
    target: FamilyTarget,
    xi_index: Vec<usize>,
    solutions: Vec<Vec<f64>>,
    readouts: Vec<f64>,
}

impl ControlFamily {
    pub fn system(&self) -> WaveSystem {
        self.system
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn target(&self) -> FamilyTarget {
        self.target
    }

    /// Index of `T` (Dirichlet/Neumann) or `2a` (scattering) on the kernel grid.
    pub fn horizon_index(&self) -> usize {
        self.horizon_index
    }

    pub fn xi_indices(&self) -> &[usize] {
        &self.xi_index
    }

    pub fn xi_values(&self) -> Vec<f64> {
        self.xi_index.iter().map(|&j| j as f64 * self.step).collect()
    }

    pub fn solutions(&self) -> &[Vec<f64>] {
        &self.solutions
    }

    pub fn readouts(&self) -> &[f64] {
        &self.readouts
    }

    pub fn len(&self) -> usize {
        self.xi_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_index.is_empty()
    }

    /// Position of grid index `j` in the family.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.xi_index.binary_search(&j).ok()
    }

    /// True when the family covers consecutive grid indices.
    pub fn is_contiguous(&self) -> bool {
        self.xi_index.windows(2).all(|w| w[1] == w[0] + 1)
    }

    /// `xi,t,f` CSV.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["xi", "t", "f"])?;
        for (&j, sol) in self.xi_index.iter().zip(&self.solutions) {
            let offset = if self.system == WaveSystem::Scattering { j } else { 0 };
            for (i, v) in sol.iter().enumerate() {
                w.write_record([fmt(j as f64 * self.step), fmt((offset + i) as f64 * self.step), fmt(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn rejected(a: Admissibility) -> Result<()> {
    match a {
        Admissibility::Admissible { .. } => Ok(()),
        Admissibility::Rejected { reason } => Err(BcmError::Inadmissible(reason)),
    }
}

/// Solves the special problems for every `ξ = j h`, `j` in `xi_index`
/// (strictly increasing). Positivity is checked once, on the largest
/// operator of the family, which contains the others as trailing blocks.
pub fn solve_special_family(
    k: &ResponseKernel,
    xi_index: &[usize],
    target: FamilyTarget,
    ridge: f64,
) -> Result<ControlFamily> {
    let system = k.system();
    let horizon = k.horizon_steps();
    if xi_index.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BcmError::InvalidGrid("xi indices must be strictly increasing".into()));
    }
    if let Some(&last) = xi_index.last() {
        if last > horizon {
            return Err(BcmError::KernelTooShort { need: 2.0 * last as f64 * k.step(), have: k.r().grid().t_end() });
        }
    }
    match (system, target) {
        (WaveSystem::Scattering, FamilyTarget::Wavenumber(kp)) if kp > 0.0 => {}
        (WaveSystem::Dirichlet | WaveSystem::Neumann, FamilyTarget::Sturm { .. }) => {}
        _ => return Err(BcmError::Incompatible(format!("target {target:?} does not fit the {} system", system.name()))),
    }
    let tables = KernelTables::new(k)?;
    let h = k.step();
    let largest = match system {
        WaveSystem::Scattering => xi_index.first().copied().filter(|&j| j < horizon),
        _ => xi_index.last().copied().filter(|&j| j > 0),
    };
    if let Some(j) = largest {
        rejected(check_admissibility(&tables.connecting(j)?))?;
    }
    let p_int = k.p().map(|p| cumulative_trapezoid(p.values(), h)).unwrap_or_default();
    let r_int = cumulative_trapezoid(k.r().values(), h);
    let mut solutions = Vec::with_capacity(xi_index.len());
    for &j in xi_index {
        let sol = match (system, target) {
            (WaveSystem::Dirichlet, FamilyTarget::Sturm { y0, y0p }) => {
                let rhs: Vec<f64> = (0..=j)
                    .map(|i| {
                        let u = (j - i) as f64 * h;
                        y0p * u - y0 * (-k.alpha() + k.beta() * u + 2.0 * p_int[j - i])
                    })
                    .collect();
                if j == 0 {
                    vec![rhs[0] / k.alpha()]
                } else {
                    solve_fredholm2_values(tables.connecting(j)?.matrix(), &rhs, ridge)?
                }
            }
            (WaveSystem::Neumann, FamilyTarget::Sturm { y0, y0p }) => {
                let rhs: Vec<f64> = (0..=j).map(|i| -y0 + y0p * r_int[j - i]).collect();
                if j == 0 {
                    vec![rhs[0] / -k.r_index(0)]
                } else {
                    solve_fredholm2_values(tables.connecting(j)?.matrix(), &rhs, ridge)?
                }
            }
            (WaveSystem::Scattering, FamilyTarget::Wavenumber(kp)) => {
                let rhs: Vec<f64> = (j..=horizon).map(|i| (-kp * i as f64 * h).exp()).collect();
                if j == horizon {
                    rhs
                } else {
                    solve_fredholm2_values(tables.connecting(j)?.matrix(), &rhs, ridge)?
                }
            }
            _ => unreachable!(),
        };
        solutions.push(sol);
    }
    let readouts = solutions.iter().map(|s| s[0]).collect();
    Ok(ControlFamily {
        system,
        step: h,
        horizon_index: horizon,
        target,
        xi_index: xi_index.to_vec(),
        solutions,
        readouts,
    })
}

/// The family over every grid point `ξ = 0, h, ..., T` (or `2a`).
pub fn solve_full_family(k: &ResponseKernel, target: FamilyTarget, ridge: f64) -> Result<ControlFamily> {
    let idx: Vec<usize> = (0..=k.horizon_steps()).collect();
    solve_special_family(k, &idx, target, ridge)
}

/// Solves `C^T f = sin(sqrt(λ)(T - t)) / sqrt(λ)` (Dirichlet kernel).
pub fn solve_eigen_target(k: &ResponseKernel, lambda: f64, horizon: f64, ridge: f64) -> Result<SampledFunction> {
    if k.system() != WaveSystem::Dirichlet {
        return Err(BcmError::Incompatible("eigen targets need a Dirichlet kernel".into()));
    }
    let c = assemble_connecting(k, horizon)?;
    rejected(check_admissibility(&c))?;
    let n = c.size() - 1;
    let grid = TimeGrid::new(horizon, n)?;
    let rhs = SampledFunction::from_fn(grid, |t| sine_solution(lambda, horizon - t))?;
    let f = solve_fredholm2_values(c.matrix(), rhs.values(), ridge)?;
    SampledFunction::new(grid, f)
}

/// `sin(sqrt(λ) x) / sqrt(λ)`, continued to `λ <= 0`.
pub fn sine_solution(lambda: f64, x: f64) -> f64 {
    if lambda > 0.0 {
        let s = lambda.sqrt();
        (s * x).sin() / s
    } else if lambda < 0.0 {
        let s = (-lambda).sqrt();
        (s * x).sinh() / s
    } else {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// `L(ξ, t)`, `0 <= t <= ξ`.
    GelfandLevitan,
    /// `g(ξ, t)`, `-ξ <= t <= ξ`.
    Krein,
    /// `G(ξ, t)`, `-ξ <= t <= ξ`.
    Pariiskii,
    /// `g(ξ, τ)`, `ξ <= τ <= 2a`.
    Marchenko,
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::GelfandLevitan => "gl",
            KernelKind::Krein => "krein",
            KernelKind::Pariiskii => "pariiskii",
            KernelKind::Marchenko => "marchenko",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "gl" => Some(KernelKind::GelfandLevitan),
            "krein" => Some(KernelKind::Krein),
            "pariiskii" => Some(KernelKind::Pariiskii),
            "marchenko" => Some(KernelKind::Marchenko),
            _ => None,
        }
    }

    pub fn system(&self) -> WaveSystem {
        match self {
            KernelKind::GelfandLevitan => WaveSystem::Dirichlet,
            KernelKind::Krein | KernelKind::Pariiskii => WaveSystem::Neumann,
            KernelKind::Marchenko => WaveSystem::Scattering,
        }
    }

    /// Family the kernel is derived from; `kp` is the scattering wavenumber.
    pub fn family_target(&self, kp: f64) -> FamilyTarget {
        match self {
            KernelKind::GelfandLevitan => FamilyTarget::GELFAND_LEVITAN,
            KernelKind::Krein | KernelKind::Pariiskii => FamilyTarget::KREIN,
            KernelKind::Marchenko => FamilyTarget::Wavenumber(kp),
        }
    }
}

/// One `ξ`-slice of a classical kernel: `values[j]` at `t_start + j h`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    pub xi: f64,
    pub t_start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl KernelRow {
    pub fn t(&self, j: usize) -> f64 {
        self.t_start + j as f64 * self.step
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a - b|` over common nodes.
    pub fn max_difference(&self, other: &KernelRow) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(BcmError::SizeMismatch { expected: self.values.len(), got: other.values.len() });
        }
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Classical kernel sampled row by row over a contiguous `ξ` range.
#[derive(Debug, Clone)]
pub struct ClassicalKernel {
    kind: KernelKind,
    step: f64,
    first_index: usize,
    rows: Vec<KernelRow>,
}

impl ClassicalKernel {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn rows(&self) -> &[KernelRow] {
        &self.rows
    }

    /// Row at grid index `j` (`ξ = j h`).
    pub fn row(&self, j: usize) -> Option<&KernelRow> {
        j.checked_sub(self.first_index).and_then(|p| self.rows.get(p))
    }

    pub fn row_at(&self, xi: f64) -> Option<&KernelRow> {
        self.row((xi / self.step).round() as usize)
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.max_abs()))
    }

    /// `xi,t,value` CSV.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        write_rows_csv(&self.rows, out)
    }
}

pub fn write_rows_csv(rows: &[KernelRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["xi", "t", "value"])?;
    for row in rows {
        for (j, v) in row.values.iter().enumerate() {
            w.write_record([fmt(row.xi), fmt(row.t(j)), fmt(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `∂_ξ` at family position `k`: centered, else forward, else backward.
fn xi_derivative(value: impl Fn(isize) -> Option<f64>, k: isize, h: f64) -> Option<f64> {
    if let (Some(a), Some(b)) = (value(k - 1), value(k + 1)) {
        return Some((b - a) / (2.0 * h));
    }
    if let (Some(a), Some(b), Some(c)) = (value(k), value(k + 1), value(k + 2)) {
        return Some((-3.0 * a + 4.0 * b - c) / (2.0 * h));
    }
    if let (Some(a), Some(b), Some(c)) = (value(k), value(k - 1), value(k - 2)) {
        return Some((3.0 * a - 4.0 * b + c) / (2.0 * h));
    }
    None
}

/// Fills gaps by quadratic extrapolation from the neighbours within the row.
fn fill_row(mut v: Vec<Option<f64>>) -> Vec<f64> {
    let n = v.len();
    for j in 3..n {
        if v[j].is_none() {
            if let (Some(a), Some(b), Some(c)) = (v[j - 1], v[j - 2], v[j - 3]) {
                v[j] = Some(3.0 * a - 3.0 * b + c);
            }
        }
    }
    for j in (0..n.saturating_sub(3)).rev() {
        if v[j].is_none() {
            if let (Some(a), Some(b), Some(c)) = (v[j + 1], v[j + 2], v[j + 3]) {
                v[j] = Some(3.0 * a - 3.0 * b + c);
            }
        }
    }
    let known: Vec<(usize, f64)> = v.iter().enumerate().filter_map(|(i, x)| x.map(|x| (i, x))).collect();
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            x.unwrap_or_else(|| known.iter().min_by_key(|(j, _)| j.abs_diff(i)).map_or(0.0, |(_, y)| *y))
        })
        .collect()
}

fn check_normalizer(value: f64, xi: f64) -> Result<f64> {
    if value.abs() < 1e-6 {
        return Err(BcmError::DegenerateKernel { xi, value });
    }
    Ok(value)
}

/// Classical kernel from a contiguous family by `ξ`-differentiation.
///
/// GL: `L(ξ,t) = ∂_ξ f(ξ,t) / f(ξ,ξ)` with `f(ξ,t) = f^ξ(ξ - t)`.
/// Krein: `g(ξ,t) = f^ξ(ξ - |t|)`. Pariiskii: `G = ∂_ξ g / g(ξ,ξ)` from the
/// Krein family. Marchenko: `g(ξ,τ) = ∂_ξ f^ξ(τ) / f^ξ(ξ)`.
pub fn classical_kernel_from_family(fam: &ControlFamily, kind: KernelKind) -> Result<ClassicalKernel> {
    if fam.system() != kind.system() {
        return Err(BcmError::Incompatible(format!("{} kernels need a {} family", kind.name(), kind.system().name())));
    }
    if fam.len() < 5 || !fam.is_contiguous() {
        return Err(BcmError::Incompatible("kernel construction needs at least 5 consecutive xi values".into()));
    }
    let h = fam.step();
    let first = fam.xi_indices()[0];
    let last = *fam.xi_indices().last().unwrap();
    let sol = |k: usize| -> &[f64] { &fam.solutions()[k - first] };
    let within = |k: isize| k >= first as isize && k <= last as isize;
    let mut rows = Vec::with_capacity(fam.len());
    match kind {
        KernelKind::GelfandLevitan => {
            for k in first..=last {
                let xi = k as f64 * h;
                if k == 0 {
                    rows.push(KernelRow { xi, t_start: 0.0, step: h, values: vec![0.0] });
                    continue;
                }
                let norm = check_normalizer(sol(k)[0], xi)?;
                let vals = (0..=k)
                    .map(|j| {
                        let value = |kk: isize| {
                            (within(kk) && kk >= j.max(1) as isize).then(|| sol(kk as usize)[kk as usize - j])
                        };
                        xi_derivative(value, k as isize, h).map(|d| d / norm)
                    })
                    .collect();
                rows.push(KernelRow { xi, t_start: 0.0, step: h, values: fill_row(vals) });
            }
        }
        KernelKind::Krein => {
            for k in first..=last {
                let values = (0..=2 * k).map(|j| sol(k)[k - j.abs_diff(k)]).collect();
                rows.push(KernelRow { xi: k as f64 * h, t_start: -(k as f64) * h, step: h, values });
            }
        }
        KernelKind::Pariiskii => {
            for k in first..=last {
                let xi = k as f64 * h;
                let norm = check_normalizer(sol(k)[0], xi)?;
                let vals = (0..=2 * k)
                    .map(|j| {
                        let t = j.abs_diff(k);
                        let value =
                            |kk: isize| (within(kk) && kk >= t as isize).then(|| sol(kk as usize)[kk as usize - t]);
                        xi_derivative(value, k as isize, h).map(|d| d / norm)
                    })
                    .collect();
                rows.push(KernelRow { xi, t_start: -xi, step: h, values: fill_row(vals) });
            }
        }
        KernelKind::Marchenko => {
            let n = fam.horizon_index();
            for k in first..=last {
                let xi = k as f64 * h;
                let norm = check_normalizer(sol(k)[0], xi)?;
                let vals = (k..=n)
                    .map(|j| {
                        let value =
                            |kk: isize| (within(kk) && kk <= j as isize).then(|| sol(kk as usize)[j - kk as usize]);
                        xi_derivative(value, k as isize, h).map(|d| d / norm)
                    })
                    .collect();
                rows.push(KernelRow { xi, t_start: xi, step: h, values: fill_row(vals) });
            }
        }
    }
    Ok(ClassicalKernel { kind, step: h, first_index: first, rows })
}

/// Direct Nyström solve of the classical equation at one `ξ` on the kernel grid.
pub fn solve_classical(kind: KernelKind, k: &ResponseKernel, xi: f64, ridge: f64) -> Result<KernelRow> {
    if k.system() != kind.system() {
        return Err(BcmError::Incompatible(format!("{} equations need a {} kernel", kind.name(), kind.system().name())));
    }
    let h = k.step();
    let idx = (xi / h).round() as usize;
    if (idx as f64 * h - xi).abs() > 1e-9 * xi.max(1.0) {
        return Err(BcmError::InvalidGrid(format!("xi = {xi} is not on the kernel grid")));
    }
    if idx > k.horizon_steps() {
        return Err(BcmError::KernelTooShort { need: 2.0 * xi, have: k.r().grid().t_end() });
    }
    let xi = idx as f64 * h;
    let tables = KernelTables::new(k)?;
    let symmetric_solve = |n: usize, diag: f64, kern: &dyn Fn(usize, usize) -> f64, rhs: Vec<f64>| -> Result<Vec<f64>> {
        let op = DenseOperator::from_nystrom(&vec![diag; n], trapezoid_weights_for(n, h), true, kern)?;
        solve_fredholm2_values(&op, &rhs, ridge)
    };
    let values = match kind {
        KernelKind::GelfandLevitan => {
            if idx == 0 {
                vec![0.0]
            } else {
                let f = |s: usize, t: usize| k.p_index(s + t) - k.p_index(s.abs_diff(t));
                let rhs = (0..=idx).map(|t| -f(idx, t)).collect();
                symmetric_solve(idx + 1, 1.0, &f, rhs)?
            }
        }
        KernelKind::Krein | KernelKind::Pariiskii => {
            let r0 = k.r_index(0);
            let rhs: Vec<f64> = (0..=2 * idx)
                .map(|j| match kind {
                    KernelKind::Krein => 1.0,
                    _ => 0.5 * (tables.r_prime(j) + tables.r_prime(2 * idx - j)),
                })
                .collect();
            if idx == 0 {
                vec![rhs[0] / -r0]
            } else {
                let kern = |i: usize, j: usize| -0.5 * tables.r_prime(i.abs_diff(j));
                symmetric_solve(2 * idx + 1, -r0, &kern, rhs)?
            }
        }
        KernelKind::Marchenko => {
            let n = k.horizon_steps();
            let rhs: Vec<f64> = (idx..=n).map(|j| k.r_index(j + idx)).collect();
            if idx == n {
                rhs
            } else {
                let kern = |a: usize, b: usize| k.r_index(2 * idx + a + b);
                symmetric_solve(n - idx + 1, 1.0, &kern, rhs)?
            }
        }
    };
    let t_start = match kind {
        KernelKind::GelfandLevitan => 0.0,
        KernelKind::Krein | KernelKind::Pariiskii => -xi,
        KernelKind::Marchenko => xi,
    };
    Ok(KernelRow { xi, t_start, step: h, values })
}

/// `g^{T,ξ} = δ(t - (T - ξ)) + regular(t)`: the `ξ`-derivative of the
/// delayed GL family, normalized by the jump amplitude.
#[derive(Debug, Clone)]
pub struct SingularControl {
    pub xi: f64,
    pub delay: f64,
    pub amplitude: f64,
    /// On `[0, T]`, zero before the delay.
    pub regular: SampledFunction,
    delay_index: usize,
}

impl SingularControl {
    pub fn delay_index(&self) -> usize {
        self.delay_index
    }

    /// Dirac mass plus the regular part started exactly at the delay.
    pub fn to_control(&self) -> Result<Control> {
        let h = self.regular.step();
        let tail = &self.regular.values()[self.delay_index..];
        let dirac = Control::dirac(self.delay, 1.0);
        if tail.len() < 3 {
            return Ok(dirac);
        }
        let f = SampledFunction::new(TimeGrid::with_step(h, tail.len() - 1)?, tail.to_vec())?;
        dirac.plus(Control::sampled_from(self.delay, &f))
    }
}

/// Singular control at `ξ` from a contiguous Dirichlet family on `[0, T]`.
pub fn singular_control(fam: &ControlFamily, xi: f64) -> Result<SingularControl> {
    let l = classical_kernel_from_family(fam, KernelKind::GelfandLevitan)?;
    singular_control_from_kernel(fam, &l, xi)
}

/// As [`singular_control`] with a precomputed GL kernel of the same family.
pub fn singular_control_from_kernel(fam: &ControlFamily, l: &ClassicalKernel, xi: f64) -> Result<SingularControl> {
    let h = fam.step();
    let n = fam.horizon_index();
    if fam.xi_indices().first() != Some(&0) || fam.xi_indices().last() != Some(&n) || !fam.is_contiguous() {
        return Err(BcmError::Incompatible("singular controls need the family over the whole [0, T]".into()));
    }
    let idx = (xi / h).round() as usize;
    if idx == 0 || idx > n {
        return Err(BcmError::InvalidGrid(format!("xi = {xi} must lie in (0, T]")));
    }
    let amplitude = fam.readouts()[idx];
    if amplitude.abs() < 1e-6 {
        return Err(BcmError::SmallAmplitude(amplitude));
    }
    let row = l.row(idx).ok_or_else(|| BcmError::InvalidGrid("kernel row missing".into()))?;
    let delay_index = n - idx;
    let values = (0..=n).map(|i| if i < delay_index { 0.0 } else { row.values[n - i] }).collect();
    let regular = SampledFunction::new(TimeGrid::new(n as f64 * h, n)?, values)?;
    Ok(SingularControl { xi: idx as f64 * h, delay: delay_index as f64 * h, amplitude, regular, delay_index })
}

/// `(C g^{T,ξ}, f)`, the wave value `u^f(ξ, T)` seen through boundary data.
pub fn visualize_wave(c: &ConnectingOperator, sc: &SingularControl, f: &SampledFunction) -> Result<f64> {
    if f.len() != c.size() || sc.regular.len() != c.size() {
        return Err(BcmError::SizeMismatch { expected: c.size(), got: f.len() });
    }
    let cf = c.apply(f.values());
    let i0 = sc.delay_index;
    let tail: Vec<f64> = (i0..cf.len()).map(|i| sc.regular.values()[i] * cf[i]).collect();
    Ok(cf[i0] + crate::numerics::trapezoid(&tail, c.step()))
}

/// `[(W^T)^{-1} a](t) = a(T - t) + ∫_{T-t}^T L(ξ, T - t) a(ξ) dξ` for unit
/// density, with `a` sampled on the GL kernel grid over `[0, T]`.
pub fn apply_inverse_control_operator(l: &ClassicalKernel, a: &SampledFunction) -> Result<SampledFunction> {
    if l.kind() != KernelKind::GelfandLevitan {
        return Err(BcmError::Incompatible("the inverse control operator uses the GL kernel".into()));
    }
    let n = a.grid().n_steps();
    if (a.step() - l.step()).abs() > 1e-9 * l.step() || l.row(0).is_none() || l.row(n).is_none() {
        return Err(BcmError::InvalidGrid("a must be sampled on the kernel rows 0..=n".into()));
    }
    let h = a.step();
    let av = a.values();
    let out = (0..=n)
        .map(|i| {
            let j = n - i;
            let vals: Vec<f64> = (j..=n).map(|k| l.row(k).unwrap().values[j] * av[k]).collect();
            av[j] + crate::numerics::trapezoid(&vals, h)
        })
        .collect();
    SampledFunction::new(a.grid(), out)
}

/// `ψ(x, λ) = s(x) + ∫_0^x L(x, t) s(t) dt`, `s = sin(sqrt(λ) t)/sqrt(λ)`;
/// linear in `x` between kernel rows.
pub fn transformation_apply(l: &ClassicalKernel, lambda: f64, x: f64) -> Result<f64> {
    if l.kind() != KernelKind::GelfandLevitan {
        return Err(BcmError::Incompatible("the transformation operator uses the GL kernel".into()));
    }
    let h = l.step();
    let at_row = |k: usize| -> Result<f64> {
        let row = l.row(k).ok_or_else(|| BcmError::InvalidGrid(format!("x = {x} is outside the kernel")))?;
        let vals: Vec<f64> = row.values.iter().enumerate().map(|(j, v)| v * sine_solution(lambda, j as f64 * h)).collect();
        Ok(sine_solution(lambda, k as f64 * h) + crate::numerics::trapezoid(&vals, h))
    };
    let s = x / h;
    let k0 = s.floor() as usize;
    let u = s - k0 as f64;
    if u < 1e-9 {
        return at_row(k0);
    }
    Ok(at_row(k0)? * (1.0 - u) + at_row(k0 + 1)? * u)
}
