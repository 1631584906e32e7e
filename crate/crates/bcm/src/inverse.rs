//! Reconstruction pipelines (Gelfand-Levitan and Marchenko for `q`, Krein
//! for `rho`) and the roundtrip harness comparing them against a known medium.

use std::io::Write;

use serde::Serialize;

use crate::bcp::{solve_full_family, FamilyTarget};
use crate::error::{BcmError, Result};
use crate::forward::{extract_response_kernel, ExtractConfig, ResponseKernel, WaveSystem};
use crate::media::MediumProfile;
use crate::numerics::{cumulative_trapezoid, derivative, lagrange4_nonuniform, TimeGrid};

/// Readouts below this fraction of their maximum are masked.
pub const ZERO_GUARD: f64 = 1e-3;
/// Largest tolerated fraction of masked nodes.
pub const MAX_MASKED_FRACTION: f64 = 0.1;
/// Nodes at each end left out of the error metrics.
pub const EDGE_NODES: usize = 2;
/// Support bound assumed for a vanishing potential in the scattering setting.
pub const ZERO_POTENTIAL_SUPPORT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gl,
    Krein,
    Marchenko,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gl, Method::Krein, Method::Marchenko];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gl => "gl",
            Method::Krein => "krein",
            Method::Marchenko => "marchenko",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Forward system whose response kernel feeds this method.
    pub fn system(&self) -> WaveSystem {
        match self {
            Method::Gl => WaveSystem::Dirichlet,
            Method::Krein => WaveSystem::Neumann,
            Method::Marchenko => WaveSystem::Scattering,
        }
    }
}

/// Errors on one grid of a ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridError {
    pub n: usize,
    pub sup_rel_error: f64,
    pub l2_rel_error: f64,
}

/// Result of a reconstruction, optionally compared against a truth medium.
///
/// `readouts` are the family endpoint values and `front` the positions
/// `x(ξ)` they belong to. `masked` flags recovered nodes whose values were
/// filled in by interpolation.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub method: Method,
    pub n: usize,
    pub recovered: MediumProfile,
    pub truth: Option<MediumProfile>,
    pub readouts: Vec<f64>,
    pub front: Vec<f64>,
    pub masked: Vec<bool>,
    pub masked_fraction: f64,
    pub window: (f64, f64),
    pub sup_rel_error: Option<f64>,
    pub l2_rel_error: Option<f64>,
    pub ladder: Vec<GridError>,
    pub orders: Vec<Option<f64>>,
    pub admissible: bool,
}

/// JSON form of a report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportSummary {
    pub method: Method,
    pub n: usize,
    pub sup_rel_error: Option<f64>,
    pub l2_rel_error: Option<f64>,
    pub masked_fraction: f64,
    pub orders: Vec<Option<f64>>,
    pub admissible: bool,
    pub ladder: Vec<GridError>,
}

impl ReconstructionReport {
    /// `q` for Gelfand-Levitan and Marchenko, `rho` for Krein.
    pub fn recovered_values(&self) -> &[f64] {
        match self.method {
            Method::Krein => self.recovered.rho(),
            _ => self.recovered.q(),
        }
    }

    pub fn truth_at(&self, x: f64) -> Option<f64> {
        let t = self.truth.as_ref()?;
        Some(match self.method {
            Method::Krein => t.rho_at(x),
            _ => t.q_at(x),
        })
    }

    /// Recovered value at `x` by 4-point interpolation.
    pub fn value_at(&self, x: f64) -> f64 {
        crate::numerics::lagrange4(self.recovered_values(), self.recovered.step(), x)
    }

    /// Fills the error fields against `truth` over `window`.
    ///
    /// Errors are relative to the sup (or l2) norm of the truth over the
    /// window, and absolute when the truth vanishes there.
    pub fn compare(&mut self, truth: &MediumProfile, window: (f64, f64)) {
        self.truth = Some(truth.clone());
        self.window = window;
        let vals = self.recovered_values().to_vec();
        let n = vals.len();
        let (mut sup_e, mut sup_t, mut l2_e, mut l2_t, mut count) = (0.0f64, 0.0f64, 0.0, 0.0, 0usize);
        for (j, v) in vals.iter().enumerate() {
            let x = self.recovered.x(j);
            if j < EDGE_NODES || j + EDGE_NODES >= n || self.masked[j] {
                continue;
            }
            if x < window.0 - 1e-12 || x > window.1 + 1e-12 {
                continue;
            }
            let t = self.truth_at(x).unwrap_or(0.0);
            let e = v - t;
            sup_e = sup_e.max(e.abs());
            sup_t = sup_t.max(t.abs());
            l2_e += e * e;
            l2_t += t * t;
            count += 1;
        }
        if count == 0 {
            self.sup_rel_error = None;
            self.l2_rel_error = None;
            return;
        }
        let sup = if sup_t > 1e-12 { sup_e / sup_t } else { sup_e };
        let l2 = if l2_t.sqrt() > 1e-12 { (l2_e / l2_t).sqrt() } else { (l2_e / count as f64).sqrt() };
        self.sup_rel_error = Some(sup);
        self.l2_rel_error = Some(l2);
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            method: self.method,
            n: self.n,
            sup_rel_error: self.sup_rel_error,
            l2_rel_error: self.l2_rel_error,
            masked_fraction: self.masked_fraction,
            orders: self.orders.clone(),
            admissible: self.admissible,
            ladder: self.ladder.clone(),
        }
    }

    /// Recovered profile as `x,rho,q` CSV.
    pub fn write_profile_csv(&self, out: impl Write) -> Result<()> {
        self.recovered.write_csv(out)
    }
}

/// Flags `|v| < ZERO_GUARD * max|v|`.
fn zero_guard(values: &[f64]) -> Vec<bool> {
    let peak = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    values.iter().map(|v| v.abs() < ZERO_GUARD * peak || !v.is_finite()).collect()
}

/// Replaces masked samples by cubic interpolation through the nearest
/// unmasked neighbours, two per side when available.
fn fill_masked(xs: &[f64], values: &mut [f64], masked: &[bool]) -> Result<()> {
    let good: Vec<usize> = (0..xs.len()).filter(|&i| !masked[i]).collect();
    if good.len() < 4 {
        return Err(BcmError::TooManyMasked(1.0 - good.len() as f64 / xs.len() as f64));
    }
    for i in 0..xs.len() {
        if !masked[i] {
            continue;
        }
        let k = good.partition_point(|&g| g < i);
        let lo = k.saturating_sub(2).min(good.len() - 4);
        let pick = &good[lo..lo + 4];
        let px: Vec<f64> = pick.iter().map(|&g| xs[g]).collect();
        let py: Vec<f64> = pick.iter().map(|&g| values[g]).collect();
        values[i] = lagrange4_nonuniform(&px, &py, xs[i]);
    }
    Ok(())
}

fn masked_fraction(masked: &[bool]) -> Result<f64> {
    let frac = masked.iter().filter(|m| **m).count() as f64 / masked.len() as f64;
    if frac >= MAX_MASKED_FRACTION {
        return Err(BcmError::TooManyMasked(frac));
    }
    Ok(frac)
}

/// `q = y'' / y - shift` on the readout grid with the zero guard applied.
fn potential_from_readouts(y: &[f64], h: f64, shift: f64) -> Result<(Vec<f64>, Vec<bool>, f64)> {
    let masked = zero_guard(y);
    let frac = masked_fraction(&masked)?;
    let d2 = derivative(y, h, 2)?;
    let mut q: Vec<f64> = d2.iter().zip(y).map(|(d, y)| d / y - shift).collect();
    let xs: Vec<f64> = (0..y.len()).map(|j| j as f64 * h).collect();
    fill_masked(&xs, &mut q, &masked)?;
    Ok((q, masked, frac))
}

fn empty_report(method: Method, n: usize, recovered: MediumProfile, readouts: Vec<f64>, front: Vec<f64>, masked: Vec<bool>, frac: f64) -> ReconstructionReport {
    let x_end = recovered.x_end();
    ReconstructionReport {
        method,
        n,
        recovered,
        truth: None,
        readouts,
        front,
        masked,
        masked_fraction: frac,
        window: (0.0, x_end),
        sup_rel_error: None,
        l2_rel_error: None,
        ladder: Vec::new(),
        orders: Vec::new(),
        admissible: true,
    }
}

/// Potential from Dirichlet data with `rho = 1`: the Gelfand-Levitan family
/// gives `y(ξ) = f^ξ(0)`, then `q = y'' / y`.
pub fn reconstruct_gl(k: &ResponseKernel, ridge: f64) -> Result<ReconstructionReport> {
    if k.system() != WaveSystem::Dirichlet {
        return Err(BcmError::Incompatible(format!("gl needs a dirichlet kernel, got {}", k.system().name())));
    }
    if (k.alpha() - 1.0).abs() > 1e-3 || k.beta().abs() > 1e-3 {
        return Err(BcmError::Incompatible(format!(
            "gl assumes rho = 1, but the kernel has alpha = {}, beta = {}",
            k.alpha(),
            k.beta()
        )));
    }
    let fam = solve_full_family(k, FamilyTarget::GELFAND_LEVITAN, ridge)?;
    let y = fam.readouts().to_vec();
    let h = fam.step();
    let (q, masked, frac) = potential_from_readouts(&y, h, 0.0)?;
    let n = y.len() - 1;
    let recovered = MediumProfile::new(n as f64 * h, vec![1.0; n + 1], q, None)?;
    Ok(empty_report(Method::Gl, n, recovered, y, fam.xi_values(), masked, frac))
}

/// Density from Neumann data with `q = 0`: the Krein family gives
/// `rho(x(ξ)) = |f^ξ(0)|^4 / rho(0)`, `x(ξ) = ∫ rho^{-1/2}(x(s)) ds`, and
/// `rho = (τ')^2` after inverting `x(ξ)` onto a uniform grid.
pub fn reconstruct_krein(k: &ResponseKernel, ridge: f64) -> Result<ReconstructionReport> {
    if k.system() != WaveSystem::Neumann {
        return Err(BcmError::Incompatible(format!("krein needs a neumann kernel, got {}", k.system().name())));
    }
    let r0 = k.r_index(0);
    if !(r0 < 0.0) {
        return Err(BcmError::Inadmissible(format!("r(0) = {r0} must be negative")));
    }
    let rho0 = r0.powi(-2);
    let fam = solve_full_family(k, FamilyTarget::KREIN, ridge)?;
    let f = fam.readouts().to_vec();
    let h = fam.step();
    let n = f.len() - 1;
    let xi = fam.xi_values();
    let masked_xi = zero_guard(&f);
    let frac = masked_fraction(&masked_xi)?;
    let mut rho_front: Vec<f64> = f.iter().map(|v| v.powi(4) / rho0).collect();
    fill_masked(&xi, &mut rho_front, &masked_xi)?;
    let inv_sqrt: Vec<f64> = rho_front.iter().map(|r| r.max(1e-300).powf(-0.5)).collect();
    let front = cumulative_trapezoid(&inv_sqrt, h);
    if let Some(i) = front.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(BcmError::NonMonotone(xi[i + 1]));
    }
    let x_end = front[n];
    let grid = TimeGrid::new(x_end, n)?;
    let xs = grid.nodes();
    let tau: Vec<f64> = xs.iter().map(|&x| lagrange4_nonuniform(&front, &xi, x)).collect();
    let rho: Vec<f64> = derivative(&tau, grid.step(), 1)?.iter().map(|d| d * d).collect();
    let masked: Vec<bool> = xs
        .iter()
        .map(|&x| {
            let i = front.partition_point(|&v| v < x).min(n);
            masked_xi[i] || (i > 0 && masked_xi[i - 1])
        })
        .collect();
    let recovered = MediumProfile::new(x_end, rho, vec![0.0; n + 1], None)?;
    Ok(empty_report(Method::Krein, n, recovered, f, front, masked, frac))
}

/// Potential from scattering data: the family for wavenumber `kp` gives
/// `y(ξ) = f^ξ(ξ)` on `[0, 2a]`, then `q = y'' / y - kp^2`.
pub fn reconstruct_marchenko(k: &ResponseKernel, kp: f64, ridge: f64) -> Result<ReconstructionReport> {
    if k.system() != WaveSystem::Scattering {
        return Err(BcmError::Incompatible(format!("marchenko needs a scattering kernel, got {}", k.system().name())));
    }
    if !(kp > 0.0) {
        return Err(BcmError::Incompatible(format!("wavenumber must be positive, got {kp}")));
    }
    let fam = solve_full_family(k, FamilyTarget::Wavenumber(kp), ridge)?;
    let y = fam.readouts().to_vec();
    let h = fam.step();
    let (q, masked, frac) = potential_from_readouts(&y, h, kp * kp)?;
    let n = y.len() - 1;
    let recovered = MediumProfile::new(n as f64 * h, vec![1.0; n + 1], q, None)?;
    Ok(empty_report(Method::Marchenko, n, recovered, y, fam.xi_values(), masked, frac))
}

/// Roundtrip settings.
#[derive(Debug, Clone, Copy)]
pub struct RoundtripConfig {
    /// Observation horizon `T` (Gelfand-Levitan and Krein).
    pub horizon: f64,
    /// Wavenumber (Marchenko).
    pub wavenumber: f64,
    pub ridge: f64,
}

impl Default for RoundtripConfig {
    fn default() -> Self {
        Self { horizon: 1.0, wavenumber: 1.0, ridge: 0.0 }
    }
}

/// Checks that `method` applies to `m`, returning the medium to probe
/// (a zero potential gets a default support bound for scattering).
pub fn prepare_medium(m: &MediumProfile, method: Method) -> Result<MediumProfile> {
    match method {
        Method::Gl if !m.is_unit_density() => Err(BcmError::Incompatible("gl needs rho = 1".into())),
        Method::Krein if !m.has_zero_potential() => Err(BcmError::Incompatible("krein needs q = 0".into())),
        Method::Marchenko if !m.is_unit_density() => Err(BcmError::Incompatible("marchenko needs rho = 1".into())),
        Method::Marchenko if m.support_bound().is_none() => {
            if m.has_zero_potential() {
                m.with_support_bound(ZERO_POTENTIAL_SUPPORT)
            } else {
                Err(BcmError::Incompatible("marchenko needs a potential support bound".into()))
            }
        }
        _ => Ok(m.clone()),
    }
}

/// Synthesizes data for `m` on an `n`-step grid and reconstructs it.
pub fn reconstruct_from_medium(m: &MediumProfile, method: Method, n: usize, cfg: &RoundtripConfig) -> Result<ReconstructionReport> {
    let m = prepare_medium(m, method)?;
    let k = extract_response_kernel(method.system(), &m, cfg.horizon, &ExtractConfig::new(n))?;
    let mut rep = match method {
        Method::Gl => reconstruct_gl(&k, cfg.ridge)?,
        Method::Krein => reconstruct_krein(&k, cfg.ridge)?,
        Method::Marchenko => reconstruct_marchenko(&k, cfg.wavenumber, cfg.ridge)?,
    };
    rep.compare(&m, default_window(method, &rep, &m));
    Ok(rep)
}

/// Error window: `[0.05 T, 0.95 T]` (gl), `[0, 0.9 x(T)]` (krein),
/// `[0.1, min(2, 2a)]` (marchenko).
pub fn default_window(method: Method, rep: &ReconstructionReport, m: &MediumProfile) -> (f64, f64) {
    let end = rep.recovered.x_end();
    match method {
        Method::Gl => (0.05 * end, 0.95 * end),
        Method::Krein => (0.0, 0.9 * end),
        Method::Marchenko => {
            let a = m.support_bound().unwrap_or(0.5 * end);
            (0.1f64.min(a), 2.0f64.min(2.0 * a))
        }
    }
}

/// Observed orders `log(e_i / e_{i+1}) / log(n_{i+1} / n_i)`; `None` when an
/// error is at roundoff level.
pub fn convergence_orders(ladder: &[GridError]) -> Vec<Option<f64>> {
    ladder
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].sup_rel_error, w[1].sup_rel_error);
            if a < 1e-12 || b < 1e-12 {
                None
            } else {
                Some((a / b).ln() / (w[1].n as f64 / w[0].n as f64).ln())
            }
        })
        .collect()
}

/// Reconstruction on every grid of `ladder`; the report is the finest one,
/// carrying all per-grid errors and the observed orders.
pub fn roundtrip(m: &MediumProfile, method: Method, ladder: &[usize], cfg: &RoundtripConfig) -> Result<ReconstructionReport> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BcmError::InvalidGrid("ladder must be a non-empty increasing list".into()));
    }
    prepare_medium(m, method)?;
    let mut errors = Vec::with_capacity(ladder.len());
    let mut last = None;
    for &n in ladder {
        let rep = reconstruct_from_medium(m, method, n, cfg)?;
        errors.push(GridError {
            n,
            sup_rel_error: rep.sup_rel_error.unwrap_or(f64::NAN),
            l2_rel_error: rep.l2_rel_error.unwrap_or(f64::NAN),
        });
        last = Some(rep);
    }
    let mut rep = last.expect("non-empty ladder");
    rep.orders = convergence_orders(&errors);
    rep.ladder = errors;
    Ok(rep)
}
