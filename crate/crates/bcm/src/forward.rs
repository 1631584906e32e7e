//! Finite-difference wave solvers, control-operator application and
//! response-kernel synthesis.
//!
//! Two solvers are provided. [`solve_wave`] is the plain explicit leapfrog
//! scheme on the full field. [`apply_control`] and the kernel extraction use a
//! front-split form: the field is written as
//! `A0(x) F_l(z) + A1(x) F_{l+1}(z) + v(x, t)`, where `z` is the travel-time
//! phase, `F_k` the k-th antiderivative of the control and `A0`, `A1` the
//! geometric-optics amplitudes of the medium. The jumps and kinks carried by
//! the wavefront live in the analytic part; only the smooth remainder `v` is
//! time-stepped, so the traces used for kernels are free of the dispersive
//! ringing the plain scheme produces at the front.

use std::io::{Read, Write};

use crate::error::{BcmError, Result};
use crate::media::{build_eikonal, fmt, MediumProfile};
use crate::numerics::{cumulative_trapezoid, derivative, lagrange4, SampledFunction, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WaveSystem {
    Dirichlet,
    Neumann,
    Scattering,
}

impl WaveSystem {
    pub fn name(&self) -> &'static str {
        match self {
            WaveSystem::Dirichlet => "dirichlet",
            WaveSystem::Neumann => "neumann",
            WaveSystem::Scattering => "scattering",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "dirichlet" => Some(WaveSystem::Dirichlet),
            "neumann" => Some(WaveSystem::Neumann),
            "scattering" => Some(WaveSystem::Scattering),
            _ => None,
        }
    }
}

/// Maximum allowed Courant number `h_t sqrt(rho) / h_x`.
pub const CFL_LIMIT: f64 = 0.9;
/// Fine time steps per kernel-grid step.
pub const SUBSTEPS: usize = 2;
const SCATTERING_MARGIN: f64 = 0.1;

/// Resolution of the plain leapfrog solver.
#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    pub hx: f64,
    pub cfl: f64,
}

impl FdConfig {
    pub fn new(hx: f64) -> Self {
        Self { hx, cfl: CFL_LIMIT }
    }
}

/// Explicit leapfrog update for `rho u_tt - u_xx + q u = src`.
struct Stepper {
    hx: f64,
    coef: Vec<f64>,
    q: Vec<f64>,
    neumann: bool,
}

impl Stepper {
    fn new(rho: &[f64], q: &[f64], hx: f64, ht: f64, neumann: bool) -> Self {
        let coef = rho.iter().map(|r| ht * ht / r).collect();
        Self { hx, coef, q: q.to_vec(), neumann }
    }

    /// `left` is the Dirichlet value or, for Neumann, the prescribed `u_x(0, t)`.
    fn step(&self, prev: &[f64], cur: &[f64], next: &mut [f64], src: Option<&[f64]>, left: f64, right: f64) {
        let n = cur.len();
        let h2 = self.hx * self.hx;
        for i in 1..n - 1 {
            let lap = (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) / h2;
            let s = src.map_or(0.0, |s| s[i]);
            next[i] = 2.0 * cur[i] - prev[i] + self.coef[i] * (lap - self.q[i] * cur[i] + s);
        }
        if self.neumann {
            let ghost = cur[1] - 2.0 * self.hx * left;
            let lap = (cur[1] - 2.0 * cur[0] + ghost) / h2;
            let s = src.map_or(0.0, |s| s[0]);
            next[0] = 2.0 * cur[0] - prev[0] + self.coef[0] * (lap - self.q[0] * cur[0] + s);
        } else {
            next[0] = left;
        }
        next[n - 1] = right;
    }
}

/// Smallest `x` with `tau(x) >= t`, using the constant extension past `x_end`.
pub fn distance_for_time(m: &MediumProfile, t: f64) -> Result<f64> {
    let e = build_eikonal(m)?;
    let tau_end = *e.tau().values().last().unwrap();
    if t <= tau_end {
        Ok(e.x_at(t))
    } else {
        Ok(m.x_end() + (t - tau_end) / m.rho_at(m.x_end()).sqrt())
    }
}

fn min_sqrt_rho(m: &MediumProfile) -> f64 {
    m.min_rho().sqrt()
}

/// Field `u(x_i, t_j)` on `x_i = x0 + i h_x`, `t_j = t0 + j h_t`.
#[derive(Debug, Clone)]
pub struct WaveField {
    pub system: WaveSystem,
    pub hx: f64,
    pub ht: f64,
    pub x0: f64,
    pub t0: f64,
    /// Time-major slices.
    pub u: Vec<Vec<f64>>,
}

impl WaveField {
    pub fn nx(&self) -> usize {
        self.u[0].len()
    }

    pub fn nt(&self) -> usize {
        self.u.len()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.hx
    }

    pub fn t(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.ht
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Bilinear interpolation, clamped to the computed window.
    pub fn sample(&self, x: f64, t: f64) -> f64 {
        let r = ((t - self.t0) / self.ht).clamp(0.0, (self.nt() - 1) as f64);
        let j = (r.floor() as usize).min(self.nt().saturating_sub(2));
        let v = r - j as f64;
        let s = ((x - self.x0) / self.hx).clamp(0.0, (self.nx() - 1) as f64);
        let i = (s.floor() as usize).min(self.nx() - 2);
        let u = s - i as f64;
        let at = |j: usize| self.u[j][i] * (1.0 - u) + self.u[j][i + 1] * u;
        if self.nt() < 2 {
            return at(0);
        }
        at(j) * (1.0 - v) + at(j + 1) * v
    }

    /// Largest `|u|` ahead of the front `t < tau(x) - 2 h_t`, relative to `max |u|`.
    pub fn precursor_ratio(&self, tau: impl Fn(f64) -> f64) -> f64 {
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (j, slice) in self.u.iter().enumerate() {
            let t = self.t(j);
            for (i, v) in slice.iter().enumerate() {
                if t < tau(self.x(i)) - 2.0 * self.ht {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst / max
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "t", "u"])?;
        for (j, slice) in self.u.iter().enumerate() {
            for (i, v) in slice.iter().enumerate() {
                w.write_record([fmt(self.x(i)), fmt(self.t(j)), fmt(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn eval_control(control: &SampledFunction, s: f64) -> f64 {
    if s < 0.0 || s > control.grid().t_end() + 1e-12 {
        0.0
    } else {
        control.eval(s)
    }
}

/// Plain leapfrog solve from zero initial data up to `horizon`.
///
/// Dirichlet/Neumann controls are boundary data on `[0, horizon]` and must
/// vanish at `t = 0`; past the end of their grid they hold their last value.
/// A scattering control is the incoming profile `f(s)`, `s >= 0`, zero
/// outside its grid; the field lives on the whole line with `q = 0` for
/// `x < 0`, starts at `t0 < -a - margin` from the exact incoming wave, and
/// `horizon` is the final time.
pub fn solve_wave(
    system: WaveSystem,
    m: &MediumProfile,
    control: &SampledFunction,
    horizon: f64,
    cfg: &FdConfig,
) -> Result<WaveField> {
    if cfg.cfl > CFL_LIMIT + 1e-12 || cfg.cfl <= 0.0 {
        return Err(BcmError::Cfl { ht: cfg.cfl * cfg.hx * min_sqrt_rho(m), limit: CFL_LIMIT * cfg.hx * min_sqrt_rho(m) });
    }
    let hx = cfg.hx;
    match system {
        WaveSystem::Dirichlet | WaveSystem::Neumann => {
            if !(horizon > 0.0) {
                return Err(BcmError::InvalidGrid("horizon must be positive".into()));
            }
            let c0 = control.values()[0];
            if c0.abs() > 1e-12 {
                return Err(BcmError::Compatibility(c0));
            }
            let x_end = distance_for_time(m, horizon)? + 4.0 * hx;
            let nx = (x_end / hx).ceil() as usize + 4;
            let x: Vec<f64> = (0..=nx).map(|i| i as f64 * hx).collect();
            let rho: Vec<f64> = x.iter().map(|&x| m.rho_at(x)).collect();
            let q: Vec<f64> = x.iter().map(|&x| m.q_at(x)).collect();
            let min_sqrt = rho.iter().cloned().fold(f64::INFINITY, f64::min).sqrt();
            let nt = (horizon / (cfg.cfl * hx * min_sqrt)).ceil() as usize;
            let ht = horizon / nt as f64;
            let g = |t: f64| {
                if t > control.grid().t_end() {
                    *control.values().last().unwrap()
                } else {
                    control.eval(t)
                }
            };
            let stepper = Stepper::new(&rho, &q, hx, ht, system == WaveSystem::Neumann);
            // the field vanishes for t <= 0, so leapfrog starts from two zero slices
            let mut u = Vec::with_capacity(nt + 1);
            let mut prev = vec![0.0; nx + 1];
            let mut cur = vec![0.0; nx + 1];
            let mut next = vec![0.0; nx + 1];
            u.push(cur.clone());
            for j in 0..nt {
                let t_next = (j + 1) as f64 * ht;
                let left = match system {
                    WaveSystem::Dirichlet => g(t_next),
                    _ => g(j as f64 * ht),
                };
                stepper.step(&prev, &cur, &mut next, None, left, 0.0);
                std::mem::swap(&mut prev, &mut cur);
                std::mem::swap(&mut cur, &mut next);
                u.push(cur.clone());
            }
            Ok(WaveField { system, hx, ht, x0: 0.0, t0: 0.0, u })
        }
        WaveSystem::Scattering => {
            let a = scattering_support(m)?;
            let s_end = control.grid().t_end();
            let t_first = -(a + SCATTERING_MARGIN);
            let span = horizon - t_first;
            let nt = (span / (cfg.cfl * hx)).ceil() as usize;
            let ht = span / nt as f64;
            let t0 = horizon - nt as f64 * ht;
            let left_len = (horizon - t0).max(0.0) + s_end + 8.0 * hx;
            let right_len = horizon.max(0.0) + 2.0 * a + s_end - t0 + 8.0 * hx;
            let i0 = (left_len / hx).ceil() as usize;
            let nx = i0 + (right_len / hx).ceil() as usize;
            let x: Vec<f64> = (0..=nx).map(|i| (i as f64 - i0 as f64) * hx).collect();
            let q: Vec<f64> = x.iter().map(|&x| if x < 0.0 { 0.0 } else { m.q_at(x) }).collect();
            let rho = vec![1.0; nx + 1];
            let stepper = Stepper::new(&rho, &q, hx, ht, false);
            let inc = |x: f64, t: f64| eval_control(control, x + t);
            let mut prev: Vec<f64> = x.iter().map(|&x| inc(x, t0)).collect();
            let mut cur: Vec<f64> = x.iter().map(|&x| inc(x, t0 + ht)).collect();
            let mut next = vec![0.0; nx + 1];
            let mut u = vec![prev.clone(), cur.clone()];
            for j in 1..nt {
                let t_next = t0 + (j + 1) as f64 * ht;
                stepper.step(&prev, &cur, &mut next, None, inc(x[0], t_next), inc(x[nx], t_next));
                std::mem::swap(&mut prev, &mut cur);
                std::mem::swap(&mut cur, &mut next);
                u.push(cur.clone());
            }
            Ok(WaveField { system, hx, ht, x0: x[0], t0, u })
        }
    }
}

fn scattering_support(m: &MediumProfile) -> Result<f64> {
    if !m.is_unit_density() {
        return Err(BcmError::Incompatible("the scattering system requires rho = 1".into()));
    }
    m.support_bound()
        .ok_or_else(|| BcmError::Incompatible("the scattering system requires a support bound".into()))
}

/// `coeff * (s - start)_+^power / power!`; `power = -1` is a Dirac mass at `start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerTerm {
    pub start: f64,
    pub coeff: f64,
    pub power: i32,
}

impl PowerTerm {
    fn level(&self, k: usize, s: f64) -> f64 {
        let e = self.power + k as i32;
        if e < 0 || s <= self.start {
            return 0.0;
        }
        let d = s - self.start;
        let fact: f64 = (1..=e).map(f64::from).product();
        self.coeff * d.powi(e) / fact
    }
}

#[derive(Debug, Clone)]
struct SampledLevels {
    start: f64,
    h: f64,
    levels: [Vec<f64>; 3],
}

impl SampledLevels {
    fn new(start: f64, f: &SampledFunction) -> Self {
        let h = f.step();
        let f0 = f.values().to_vec();
        let f1 = cumulative_trapezoid(&f0, h);
        let f2 = cumulative_trapezoid(&f1, h);
        Self { start, h, levels: [f0, f1, f2] }
    }

    fn level(&self, k: usize, s: f64) -> f64 {
        let s = s - self.start;
        if s <= 0.0 {
            return 0.0;
        }
        let n = self.levels[0].len();
        let end = (n - 1) as f64 * self.h;
        if s <= end {
            return lagrange4(&self.levels[k], self.h, s);
        }
        let d = s - end;
        let last = |j: usize| self.levels[j][n - 1];
        match k {
            0 => 0.0,
            1 => last(1),
            _ => last(2) + last(1) * d,
        }
    }
}

/// Boundary control made of a sampled regular part, closed-form truncated
/// powers and Dirac masses.
#[derive(Debug, Clone, Default)]
pub struct Control {
    terms: Vec<PowerTerm>,
    sampled: Option<SampledLevels>,
    span: f64,
}

impl Control {
    pub fn sampled(f: &SampledFunction) -> Self {
        Self::sampled_from(0.0, f)
    }

    /// Sampled control supported on `[start, start + t_end]`; a jump at
    /// `start` is represented exactly.
    pub fn sampled_from(start: f64, f: &SampledFunction) -> Self {
        Self { terms: Vec::new(), span: start + f.grid().t_end(), sampled: Some(SampledLevels::new(start, f)) }
    }

    pub fn term(start: f64, coeff: f64, power: i32) -> Self {
        Self { terms: vec![PowerTerm { start, coeff, power }], sampled: None, span: start.max(0.0) }
    }

    /// `f(t) = (t - start)_+`.
    pub fn ramp(start: f64) -> Self {
        Self::term(start, 1.0, 1)
    }

    /// Unit step at `start`.
    pub fn step(start: f64) -> Self {
        Self::term(start, 1.0, 0)
    }

    pub fn dirac(at: f64, mass: f64) -> Self {
        Self::term(at, mass, -1)
    }

    /// Hat of half-width `width` centered at `center`.
    pub fn hat(center: f64, width: f64) -> Self {
        let c = 1.0 / width;
        Self {
            terms: vec![
                PowerTerm { start: center - width, coeff: c, power: 1 },
                PowerTerm { start: center, coeff: -2.0 * c, power: 1 },
                PowerTerm { start: center + width, coeff: c, power: 1 },
            ],
            sampled: None,
            span: center + width,
        }
    }

    pub fn plus(mut self, other: Control) -> Result<Self> {
        if self.sampled.is_some() && other.sampled.is_some() {
            return Err(BcmError::Incompatible("only one sampled part per control".into()));
        }
        self.terms.extend(other.terms);
        if other.sampled.is_some() {
            self.sampled = other.sampled;
        }
        self.span = self.span.max(other.span);
        Ok(self)
    }

    /// `F_k(s)`, the k-th antiderivative (`F_0 = f`), without Dirac parts.
    pub fn level(&self, k: usize, s: f64) -> f64 {
        let mut v: f64 = self.terms.iter().map(|t| t.level(k, s)).sum();
        if let Some(sm) = &self.sampled {
            v += sm.level(k, s);
        }
        v
    }

    /// Dirac masses `(time, mass)`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.terms.iter().filter(|t| t.power == -1).map(|t| (t.start, t.coeff)).collect()
    }

    /// Right end of the region where the control is described.
    pub fn span(&self) -> f64 {
        self.span
    }
}

/// Wave state in `x`: samples on `x_i = i h_x` plus point masses.
#[derive(Debug, Clone)]
pub struct WaveState {
    pub hx: f64,
    pub values: Vec<f64>,
    pub atoms: Vec<(f64, f64)>,
}

impl WaveState {
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    /// `∫ u a w dx` over the sampled part plus `Σ m a(x*) w(x*)` over masses.
    pub fn pair(&self, a: impl Fn(f64) -> f64, weight: impl Fn(f64) -> f64) -> f64 {
        let g: Vec<f64> = self.values.iter().enumerate().map(|(i, v)| v * a(self.x(i)) * weight(self.x(i))).collect();
        let regular = crate::numerics::trapezoid(&g, self.hx);
        regular + self.atoms.iter().map(|(x, m)| m * a(*x) * weight(*x)).sum::<f64>()
    }

    pub fn to_sampled(&self) -> Result<SampledFunction> {
        SampledFunction::new(TimeGrid::with_step(self.hx, self.values.len() - 1)?, self.values.clone())
    }

    /// Linear interpolation of the sampled part.
    pub fn eval(&self, x: f64) -> f64 {
        let s = (x / self.hx).clamp(0.0, (self.values.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.values.len() - 2);
        let u = s - i as f64;
        self.values[i] * (1.0 - u) + self.values[i + 1] * u
    }
}

/// Front-split solver for one system on a fixed FD grid.
struct SplitSolver {
    system: WaveSystem,
    hx: f64,
    ht: f64,
    x: Vec<f64>,
    rho: Vec<f64>,
    tau: Vec<f64>,
    a0: Vec<f64>,
    a1: Vec<f64>,
    coef: Vec<f64>,
    lead: usize,
    boundary_coef: f64,
    stepper: Stepper,
}

impl SplitSolver {
    /// Grid `x_i = x_start + i h_x`, `i = 0..=n_cells`.
    fn new(system: WaveSystem, m: &MediumProfile, hx: f64, ht: f64, x_start: f64, n_cells: usize) -> Result<Self> {
        let x: Vec<f64> = (0..=n_cells).map(|i| x_start + i as f64 * hx).collect();
        let scattering = system == WaveSystem::Scattering;
        let rho: Vec<f64> = x.iter().map(|&x| if scattering { 1.0 } else { m.rho_at(x) }).collect();
        let q: Vec<f64> = x.iter().map(|&x| if x < 0.0 { 0.0 } else { m.q_at(x) }).collect();
        let min_sqrt = rho.iter().cloned().fold(f64::INFINITY, f64::min).sqrt();
        let limit = CFL_LIMIT * hx * min_sqrt;
        if ht > limit * (1.0 + 1e-12) {
            return Err(BcmError::Cfl { ht, limit });
        }
        let sq: Vec<f64> = rho.iter().map(|r| r.sqrt()).collect();
        let tau = cumulative_trapezoid(&sq, hx);
        let (a0, a1, lead, boundary_coef) = match system {
            WaveSystem::Dirichlet => {
                let rho0 = rho[0];
                let a0: Vec<f64> = rho.iter().map(|r| (r / rho0).powf(-0.25)).collect();
                let a1 = next_amplitude(&a0, &rho, &q, hx, 0.0)?;
                (a0, a1, 0, 0.0)
            }
            WaveSystem::Neumann => {
                let rho0 = rho[0];
                let a0: Vec<f64> = rho.iter().map(|r| -(rho0 * r).powf(-0.25)).collect();
                let a0p = derivative(&a0, hx, 1)?[0];
                let b0 = a0p / (a0[0] * rho0.sqrt());
                let a1 = next_amplitude(&a0, &rho, &q, hx, b0)?;
                let a1p = derivative(&a1, hx, 1)?[0];
                (a0, a1, 1, -a1p)
            }
            WaveSystem::Scattering => {
                let a0 = vec![1.0; x.len()];
                let qi = cumulative_trapezoid(&q, hx);
                let total = *qi.last().unwrap();
                let a1: Vec<f64> = qi.iter().map(|v| -0.5 * (total - v)).collect();
                (a0, a1, 0, 0.0)
            }
        };
        let a1pp = derivative(&a1, hx, 2)?;
        let coef: Vec<f64> = (0..x.len()).map(|i| q[i] * a1[i] - a1pp[i]).collect();
        let stepper = Stepper::new(&rho, &q, hx, ht, system == WaveSystem::Neumann);
        Ok(Self { system, hx, ht, x, rho, tau, a0, a1, coef, lead, boundary_coef, stepper })
    }

    fn phase(&self, i: usize, t: f64) -> f64 {
        match self.system {
            WaveSystem::Scattering => self.x[i] + t,
            _ => t - self.tau[i],
        }
    }

    /// Progressive-wave part of `d^d u / dt^d` at node `i`.
    fn analytic(&self, control: &Control, i: usize, t: f64, d: usize) -> f64 {
        let z = self.phase(i, t);
        let k = self.lead - d;
        self.a0[i] * control.level(k, z) + self.a1[i] * control.level(k + 1, z)
    }

    /// Steps the remainder from zero data at `t_start`; `observe(j, t_j, v_j)`
    /// is called for `j = 0..=steps`.
    fn run(&self, control: &Control, t_start: f64, steps: usize, mut observe: impl FnMut(usize, f64, &[f64])) {
        let n = self.x.len();
        let mut prev = vec![0.0; n];
        let mut cur = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut src = vec![0.0; n];
        let k = self.lead + 1;
        observe(0, t_start, &cur);
        for j in 0..steps {
            let t = t_start + j as f64 * self.ht;
            for (i, (s, &c)) in src.iter_mut().zip(&self.coef).enumerate() {
                *s = if c == 0.0 { 0.0 } else { -c * control.level(k, self.phase(i, t)) };
            }
            let left = if self.system == WaveSystem::Neumann { self.boundary_coef * control.level(k, t) } else { 0.0 };
            self.stepper.step(&prev, &cur, &mut next, Some(&src), left, 0.0);
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
            observe(j + 1, t_start + (j + 1) as f64 * self.ht, &cur);
        }
    }

    /// Location and weight of the front image of a Dirac mass fired at `t_a`,
    /// observed at time `t`.
    fn atom_image(&self, t_a: f64, mass: f64, t: f64) -> Option<(f64, f64)> {
        match self.system {
            WaveSystem::Scattering => {
                let x = t_a - t;
                (x >= 0.0).then_some((x, mass))
            }
            _ => {
                let target = t - t_a;
                if target < 0.0 || target > *self.tau.last().unwrap() {
                    return None;
                }
                let k = self.tau.partition_point(|&v| v < target).max(1);
                let u = (target - self.tau[k - 1]) / (self.tau[k] - self.tau[k - 1]);
                let lerp = |v: &[f64]| v[k - 1] * (1.0 - u) + v[k] * u;
                let x = self.x[k - 1] + u * self.hx;
                Some((x, lerp(&self.a0) * mass / lerp(&self.rho).sqrt()))
            }
        }
    }
}

/// `A1 = A0 b` with `b' = (A0'' - q A0) / (2 A0 sqrt(rho))`, `b(0) = b0`.
fn next_amplitude(a0: &[f64], rho: &[f64], q: &[f64], hx: f64, b0: f64) -> Result<Vec<f64>> {
    let a0pp = derivative(a0, hx, 2)?;
    let bp: Vec<f64> = (0..a0.len()).map(|i| (a0pp[i] - q[i] * a0[i]) / (2.0 * a0[i] * rho[i].sqrt())).collect();
    let b = cumulative_trapezoid(&bp, hx);
    Ok(a0.iter().zip(&b).map(|(a, b)| a * (b0 + b)).collect())
}

/// Steps per unit time and spatial step for a given time step.
fn fd_steps_for(ht: f64, min_sqrt_rho: f64) -> f64 {
    ht / (CFL_LIMIT * min_sqrt_rho)
}

/// Applies the control operator with the front-split solver.
///
/// Dirichlet: `u(., T)`. Neumann: `u_t(., T)`, i.e. the state reached by the
/// derivative of the control. Scattering: `u(., 0)`, `T` is ignored.
/// `ht` is the requested time step (refined to divide the interval).
pub fn apply_control(system: WaveSystem, m: &MediumProfile, control: &Control, t_final: f64, ht: f64) -> Result<WaveState> {
    match system {
        WaveSystem::Dirichlet | WaveSystem::Neumann => {
            if !(t_final > 0.0) {
                return Err(BcmError::InvalidGrid("horizon must be positive".into()));
            }
            let nt = (t_final / ht).ceil() as usize;
            let ht = t_final / nt as f64;
            let x_front = distance_for_time(m, t_final)?;
            let x_end = distance_for_time(m, t_final + 20.0 * ht)?;
            let hx = fd_steps_for(ht, min_sqrt_rho_on(m, x_end));
            let n_cells = (x_end / hx).ceil() as usize + 8;
            let solver = SplitSolver::new(system, m, hx, ht, 0.0, n_cells)?;
            let extra = usize::from(system == WaveSystem::Neumann);
            let mut slices: Vec<Vec<f64>> = Vec::new();
            solver.run(control, 0.0, nt + extra, |j, _, v| {
                if j + 1 >= nt {
                    slices.push(v.to_vec());
                }
            });
            let n_out = ((x_front / hx).ceil() as usize + 2).min(n_cells);
            let values: Vec<f64> = (0..=n_out)
                .map(|i| {
                    let rem = match system {
                        WaveSystem::Dirichlet => slices[1][i],
                        _ => (slices[2][i] - slices[0][i]) / (2.0 * ht),
                    };
                    let d = usize::from(system == WaveSystem::Neumann);
                    solver.analytic(control, i, t_final, d) + rem
                })
                .collect();
            let atoms = control.atoms().into_iter().filter_map(|(t, c)| solver.atom_image(t, c, t_final)).collect();
            Ok(WaveState { hx, values, atoms })
        }
        WaveSystem::Scattering => {
            let a = scattering_support(m)?;
            let hx = ht / CFL_LIMIT;
            let k = ((a + SCATTERING_MARGIN) / ht).ceil() as usize;
            let t0 = -(k as f64) * ht;
            let x_out = control.span().max(2.0 * a) + 2.0 * hx;
            let x_end = x_out.max(a + k as f64 * ht) + 12.0 * hx;
            let n_cells = (x_end / hx).ceil() as usize;
            let solver = SplitSolver::new(system, m, hx, ht, 0.0, n_cells)?;
            let mut last = Vec::new();
            solver.run(control, t0, k, |j, _, v| {
                if j == k {
                    last = v.to_vec();
                }
            });
            let n_out = ((x_out / hx).ceil() as usize).min(n_cells);
            let values = (0..=n_out).map(|i| solver.analytic(control, i, 0.0, 0) + last[i]).collect();
            let atoms = control.atoms().into_iter().filter_map(|(t, c)| solver.atom_image(t, c, 0.0)).collect();
            Ok(WaveState { hx, values, atoms })
        }
    }
}

fn min_sqrt_rho_on(m: &MediumProfile, x_end: f64) -> f64 {
    let n = 2000;
    (0..=n).map(|i| m.rho_at(x_end * i as f64 / n as f64)).fold(f64::INFINITY, f64::min).sqrt().min(min_sqrt_rho(m))
}

/// `W^T f` for a sampled control, resampled to the FD grid restricted to
/// `[0, x(T)]` (Dirichlet/Neumann) or the control's support (scattering).
pub fn apply_control_operator(
    system: WaveSystem,
    m: &MediumProfile,
    f: &SampledFunction,
    t_final: f64,
) -> Result<SampledFunction> {
    let state = apply_control(system, m, &Control::sampled(f), t_final, f.step() / SUBSTEPS as f64)?;
    state.to_sampled()
}

/// The inverse data: a response kernel `r` with boundary coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseKernel {
    system: WaveSystem,
    r: SampledFunction,
    alpha: f64,
    beta: f64,
    p: Option<SampledFunction>,
    support_bound: Option<f64>,
}

impl ResponseKernel {
    /// Dirichlet kernel on `[0, 2T]`; `p` is the trapezoid antiderivative of `r / 2`.
    pub fn dirichlet(r: SampledFunction, alpha: f64, beta: f64) -> Result<Self> {
        let p: Vec<f64> = cumulative_trapezoid(r.values(), r.step()).iter().map(|v| 0.5 * v).collect();
        let p = SampledFunction::new(r.grid(), p)?;
        if !(alpha > 0.0) {
            return Err(BcmError::Incompatible(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { system: WaveSystem::Dirichlet, r, alpha, beta, p: Some(p), support_bound: None })
    }

    pub fn neumann(r: SampledFunction, alpha: f64, beta: f64) -> Result<Self> {
        Ok(Self { system: WaveSystem::Neumann, r, alpha, beta, p: None, support_bound: None })
    }

    /// Scattering kernel on `[0, 2a]`, zero beyond.
    pub fn scattering(r: SampledFunction, a: f64) -> Result<Self> {
        if (r.grid().t_end() - 2.0 * a).abs() > 1e-9 * a {
            return Err(BcmError::ScatteringWindow(format!(
                "kernel must cover [0, 2a] = [0, {}], got [0, {}]",
                2.0 * a,
                r.grid().t_end()
            )));
        }
        Ok(Self { system: WaveSystem::Scattering, r, alpha: 1.0, beta: 0.0, p: None, support_bound: Some(a) })
    }

    /// Kernel of the unit medium: `r = 0` (Dirichlet, scattering) or `r = -1` (Neumann).
    pub fn trivial(system: WaveSystem, span: f64, n_steps: usize) -> Result<Self> {
        let grid = TimeGrid::new(span, n_steps)?;
        match system {
            WaveSystem::Dirichlet => Self::dirichlet(SampledFunction::zeros(grid), 1.0, 0.0),
            WaveSystem::Neumann => Self::neumann(SampledFunction::from_fn(grid, |_| -1.0)?, 1.0, 0.0),
            WaveSystem::Scattering => Self::scattering(SampledFunction::zeros(grid), 0.5 * span),
        }
    }

    pub fn system(&self) -> WaveSystem {
        self.system
    }

    pub fn r(&self) -> &SampledFunction {
        &self.r
    }

    pub fn p(&self) -> Option<&SampledFunction> {
        self.p.as_ref()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn support_bound(&self) -> Option<f64> {
        self.support_bound
    }

    pub fn step(&self) -> f64 {
        self.r.step()
    }

    /// `T` for Dirichlet/Neumann kernels on `[0, 2T]`, `2a` for scattering.
    pub fn horizon(&self) -> f64 {
        match self.system {
            WaveSystem::Scattering => self.r.grid().t_end(),
            _ => 0.5 * self.r.grid().t_end(),
        }
    }

    /// Number of kernel steps in the horizon.
    pub fn horizon_steps(&self) -> usize {
        match self.system {
            WaveSystem::Scattering => self.r.grid().n_steps(),
            _ => self.r.grid().n_steps() / 2,
        }
    }

    /// `r(j h)`, zero past the sampled range.
    pub fn r_index(&self, j: usize) -> f64 {
        self.r.values().get(j).copied().unwrap_or(0.0)
    }

    pub fn p_index(&self, j: usize) -> f64 {
        self.p.as_ref().map_or(0.0, |p| p.values()[j.min(p.len() - 1)])
    }

    /// `r'` on the kernel grid.
    pub fn r_prime(&self) -> Result<Vec<f64>> {
        derivative(self.r.values(), self.step(), 1)
    }

    /// `r + c`, same coefficients.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        let r = SampledFunction::new(self.r.grid(), self.r.values().iter().map(|v| v + c).collect())?;
        self.with_r(r)
    }

    /// `r` set to zero on `[0, tau0)`.
    pub fn truncated_below(&self, tau0: f64) -> Result<Self> {
        let h = self.step();
        let r: Vec<f64> =
            self.r.values().iter().enumerate().map(|(j, v)| if (j as f64) * h < tau0 - 1e-12 { 0.0 } else { *v }).collect();
        self.with_r(SampledFunction::new(self.r.grid(), r)?)
    }

    fn with_r(&self, r: SampledFunction) -> Result<Self> {
        match self.system {
            WaveSystem::Dirichlet => Self::dirichlet(r, self.alpha, self.beta),
            WaveSystem::Neumann => Self::neumann(r, self.alpha, self.beta),
            WaveSystem::Scattering => Self::scattering(r, self.support_bound.unwrap_or(0.5 * self.r.grid().t_end())),
        }
    }

    /// `t,r` CSV.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "r"])?;
        for (j, v) in self.r.values().iter().enumerate() {
            w.write_record([fmt(self.r.grid().node(j)), fmt(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `t,r` with uniform `t` starting at 0.
    pub fn read_csv_samples(input: impl Read) -> Result<SampledFunction> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let cols: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if cols != ["t", "r"] {
            return Err(BcmError::Csv(format!("expected header t,r, got {}", cols.join(","))));
        }
        let mut t = Vec::new();
        let mut r = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let get = |k: usize| -> Result<f64> {
                rec.get(k).ok_or_else(|| BcmError::Csv("short row".into()))?.parse().map_err(|e: std::num::ParseFloatError| BcmError::Csv(e.to_string()))
            };
            t.push(get(0)?);
            r.push(get(1)?);
        }
        if t.len() < 3 {
            return Err(BcmError::Csv("need at least 3 rows".into()));
        }
        let end = *t.last().unwrap();
        let h = end / (t.len() - 1) as f64;
        if t.iter().enumerate().any(|(j, v)| (v - j as f64 * h).abs() > 1e-9 * end.max(1.0)) {
            return Err(BcmError::Csv("t must be uniform and start at 0".into()));
        }
        SampledFunction::new(TimeGrid::new(end, t.len() - 1)?, r)
    }
}

/// Kernel extraction settings.
#[derive(Debug, Clone, Copy)]
pub struct ExtractConfig {
    /// Kernel grid steps per horizon `T` (Dirichlet/Neumann) or over `[0, 2a]`.
    pub n: usize,
    /// Fine time steps per kernel step.
    pub substeps: usize,
}

impl ExtractConfig {
    pub fn new(n: usize) -> Self {
        Self { n, substeps: SUBSTEPS }
    }
}

/// Synthesizes the response kernel of `m` by forward solves.
///
/// Dirichlet: probe `f(t) = t` on `[0, 2T]`; the Neumann trace
/// `-alpha + beta t + ∫ r(t-s) s ds` yields `p = (1/2) d/dt` of the
/// convolution part and `r = 2 p'`. Neumann: unit-step probe, `u(0, t) = ∫_0^t r`.
/// Scattering: incident ramp `(s - s0)_+` recorded past the support; the
/// reflected wave is `F(tau) = ∫ r(tau + s) s ds`, so `r = F''`. `T` is
/// ignored for scattering (the window is `[0, 2a]`).
pub fn extract_response_kernel(system: WaveSystem, m: &MediumProfile, t_horizon: f64, cfg: &ExtractConfig) -> Result<ResponseKernel> {
    let n = cfg.n;
    let msub = cfg.substeps.max(1);
    if n < 4 {
        return Err(BcmError::GridTooSmall { need: 5, got: n + 1 });
    }
    match system {
        WaveSystem::Dirichlet | WaveSystem::Neumann => {
            if !(t_horizon > 0.0) {
                return Err(BcmError::InvalidGrid("horizon must be positive".into()));
            }
            let dt = t_horizon / n as f64;
            let ht = dt / msub as f64;
            let x_end = distance_for_time(m, t_horizon + 20.0 * ht)?;
            let hx = fd_steps_for(ht, min_sqrt_rho_on(m, x_end));
            let n_cells = (x_end / hx).ceil() as usize + 8;
            let solver = SplitSolver::new(system, m, hx, ht, 0.0, n_cells)?;
            let rho0 = solver.rho[0];
            let rho_p0 = derivative(&solver.rho, hx, 1)?[0];
            let alpha = rho0.sqrt();
            let beta = -rho_p0 / (4.0 * rho0) + 0.0;
            let steps = 2 * n * msub;
            let mut trace = Vec::with_capacity(2 * n + 1);
            let dirichlet = system == WaveSystem::Dirichlet;
            let control = if dirichlet { Control::ramp(0.0) } else { Control::step(0.0) };
            solver.run(&control, 0.0, steps, |j, _, v| {
                if j % msub == 0 {
                    trace.push(if dirichlet { (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * hx) } else { v[0] });
                }
            });
            let grid = TimeGrid::new(2.0 * t_horizon, 2 * n)?;
            let t = grid.nodes();
            if dirichlet {
                let a1p0 = derivative(&solver.a1, hx, 1)?[0];
                let conv: Vec<f64> = trace.iter().zip(&t).map(|(v, t)| v + 0.5 * a1p0 * t * t).collect();
                let r = derivative(&conv, dt, 2)?;
                ResponseKernel::dirichlet(SampledFunction::new(grid, r)?, alpha, beta)
            } else {
                let vt = derivative(&trace, dt, 1)?;
                let b0 = solver.a0[0];
                let b1 = solver.a1[0];
                let r: Vec<f64> = vt.iter().zip(&t).map(|(v, t)| b0 + b1 * t + v).collect();
                let expected = -1.0 / alpha;
                if (r[0] - expected).abs() > 1e-2 * expected.abs() {
                    return Err(BcmError::RefineGrid(format!("r(0) = {} but -rho(0)^(-1/2) = {expected}", r[0])));
                }
                ResponseKernel::neumann(SampledFunction::new(grid, r)?, alpha, beta)
            }
        }
        WaveSystem::Scattering => {
            let a = scattering_support(m)?;
            let dt = 2.0 * a / n as f64;
            let ht = dt / msub as f64;
            let hx = ht / CFL_LIMIT;
            let s0 = 4.0 * dt;
            let i0 = ((s0 + SCATTERING_MARGIN) / hx).ceil() as usize + 20;
            let irec = ((a + SCATTERING_MARGIN) / hx).round() as usize;
            let x_rec = irec as f64 * hx;
            // record until tau = x_rec + s0 - t reaches 0, starting before the
            // incident front touches the support
            let k = ((x_rec + a + SCATTERING_MARGIN) / ht).ceil() as usize;
            if k < n * msub {
                return Err(BcmError::ScatteringWindow("recording window shorter than [0, 2a]".into()));
            }
            let t0 = x_rec + s0 - k as f64 * ht;
            let x_end = x_rec + k as f64 * ht + 10.0 * hx;
            let n_cells = i0 + (x_end / hx).ceil() as usize;
            let x_start = -(i0 as f64) * hx;
            let solver = SplitSolver::new(system, m, hx, ht, x_start, n_cells)?;
            let node = i0 + irec;
            let control = Control::ramp(s0);
            let mut rec = vec![0.0; k + 1];
            solver.run(&control, t0, k, |j, _, v| rec[j] = v[node]);
            let f: Vec<f64> = (0..=n).map(|i| rec[k - i * msub]).collect();
            let r = derivative(&f, dt, 2)?;
            ResponseKernel::scattering(SampledFunction::new(TimeGrid::new(2.0 * a, n)?, r)?, a)
        }
    }
}

/// Gram matrix `(W e_i, W e_j)` of scattering states for hats `e_i` of
/// half-width `Δ = 2a/n` centered at `iΔ`, `i = 1..=n`. Each state is the
/// incident hat plus an FD remainder driven by `-q e_i(x + t)`.
pub fn scattering_gram_matrix(m: &MediumProfile, n: usize) -> Result<nalgebra::DMatrix<f64>> {
    let a = scattering_support(m)?;
    let dt = 2.0 * a / n as f64;
    let ht = dt / SUBSTEPS as f64;
    let hx = ht / CFL_LIMIT;
    let k = ((a + SCATTERING_MARGIN) / ht).ceil() as usize;
    let t0 = -(k as f64) * ht;
    let x_end = 2.0 * a + dt + k as f64 * ht + 10.0 * hx;
    let nx = (x_end / hx).ceil() as usize;
    let x: Vec<f64> = (0..=nx).map(|i| i as f64 * hx).collect();
    let q: Vec<f64> = x.iter().map(|&x| m.q_at(x)).collect();
    let stepper = Stepper::new(&vec![1.0; nx + 1], &q, hx, ht, false);
    let hat = |s: f64, c: f64| (1.0 - (s - c).abs() / dt).max(0.0);
    let w = crate::numerics::trapezoid_weights_for(nx + 1, hx);
    let mut rem = Vec::with_capacity(n);
    let mut inc = Vec::with_capacity(n);
    for i in 1..=n {
        let c = i as f64 * dt;
        let mut prev = vec![0.0; nx + 1];
        let mut cur = vec![0.0; nx + 1];
        let mut next = vec![0.0; nx + 1];
        let mut src = vec![0.0; nx + 1];
        for j in 0..k {
            let t = t0 + j as f64 * ht;
            for (s, (&x, &q)) in src.iter_mut().zip(x.iter().zip(&q)) {
                *s = if q == 0.0 { 0.0 } else { -q * hat(x + t, c) };
            }
            stepper.step(&prev, &cur, &mut next, Some(&src), 0.0, 0.0);
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        rem.push(cur);
        inc.push(x.iter().map(|&x| hat(x, c)).collect::<Vec<f64>>());
    }
    let dot = |u: &[f64], v: &[f64]| -> f64 { u.iter().zip(v).zip(&w).map(|((a, b), w)| a * b * w).sum() };
    let mut g = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mass = if i == j {
                2.0 * dt / 3.0
            } else if j == i + 1 {
                dt / 6.0
            } else {
                0.0
            };
            let v = mass + dot(&inc[i], &rem[j]) + dot(&rem[i], &inc[j]) + dot(&rem[i], &rem[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}
