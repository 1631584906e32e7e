//! Media profiles, the eikonal change of variables, the analytic test catalog
//! and a Runge-Kutta Sturm-Liouville oracle.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{BcmError, Result};
use crate::numerics::{cumulative_trapezoid, lagrange4, SampledFunction, TimeGrid};

/// Analytic test media.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Catalog {
    /// `rho = 1`, `q = 0`.
    Unit,
    /// `rho = 1`, `q = 6 / (1 + x^2)`; `y = x + x^3` solves `-y'' + q y = 0`.
    GlRational,
    /// `rho = 4 e^{2x}`, `q = 0`.
    KreinExp,
    /// `rho = e^{2x}`, `q = 0`.
    ExpDensity,
    /// `rho = 1`, smooth bump of height 1 supported on `[0.5, 1.5]`.
    ScatterBump,
}

impl Catalog {
    pub const ALL: [Catalog; 5] =
        [Catalog::Unit, Catalog::GlRational, Catalog::KreinExp, Catalog::ExpDensity, Catalog::ScatterBump];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Catalog::Unit => "unit",
            Catalog::GlRational => "gl_rational",
            Catalog::KreinExp => "krein_exp",
            Catalog::ExpDensity => "exp_density",
            Catalog::ScatterBump => "scatter_bump",
        }
    }

    pub fn rho(&self, x: f64) -> f64 {
        match self {
            Catalog::KreinExp => 4.0 * (2.0 * x).exp(),
            Catalog::ExpDensity => (2.0 * x).exp(),
            _ => 1.0,
        }
    }

    pub fn q(&self, x: f64) -> f64 {
        match self {
            Catalog::GlRational => 6.0 / (1.0 + x * x),
            Catalog::ScatterBump => scatter_bump(x),
            _ => 0.0,
        }
    }

    pub fn support_bound(&self) -> Option<f64> {
        match self {
            Catalog::ScatterBump => Some(1.5),
            _ => None,
        }
    }

    pub fn profile(&self, x_end: f64, n_cells: usize) -> Result<MediumProfile> {
        let mut m = MediumProfile::from_fn(x_end, n_cells, |x| self.rho(x), |x| self.q(x), self.support_bound())?;
        m.analytic = Some(*self);
        Ok(m)
    }
}

/// `e * exp(-1 / (1 - s^2))` with `s = (x - 1) / 0.5`, zero outside `|s| < 1`.
pub fn scatter_bump(x: f64) -> f64 {
    let s = (x - 1.0) / 0.5;
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Density and potential sampled on a uniform grid over `[0, x_end]`.
/// Beyond `x_end` both are extended by their last value.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumProfile {
    x_end: f64,
    rho: Vec<f64>,
    q: Vec<f64>,
    support_bound: Option<f64>,
    analytic: Option<Catalog>,
}

impl MediumProfile {
    pub fn new(x_end: f64, rho: Vec<f64>, q: Vec<f64>, support_bound: Option<f64>) -> Result<Self> {
        if rho.len() != q.len() {
            return Err(BcmError::SizeMismatch { expected: rho.len(), got: q.len() });
        }
        TimeGrid::new(x_end, rho.len().saturating_sub(1))?;
        if let Some(i) = rho.iter().chain(&q).position(|v| !v.is_finite()) {
            return Err(BcmError::NonFinite(i % rho.len()));
        }
        if let Some(i) = rho.iter().position(|r| *r < 1e-8) {
            return Err(BcmError::InvalidMedium(format!("density {} < 1e-8 at node {i}", rho[i])));
        }
        let m = Self { x_end, rho, q, support_bound, analytic: None };
        if let Some(a) = support_bound {
            if !(a > 0.0) {
                return Err(BcmError::InvalidMedium(format!("support bound must be positive, got {a}")));
            }
            for j in 0..m.rho.len() {
                if m.x(j) > a + 1e-12 && m.q[j].abs() > 1e-12 {
                    return Err(BcmError::InvalidMedium(format!(
                        "q({}) = {} beyond support bound {a}",
                        m.x(j),
                        m.q[j]
                    )));
                }
            }
        }
        Ok(m)
    }

    pub fn from_fn(
        x_end: f64,
        n_cells: usize,
        rho: impl Fn(f64) -> f64,
        q: impl Fn(f64) -> f64,
        support_bound: Option<f64>,
    ) -> Result<Self> {
        let grid = TimeGrid::new(x_end, n_cells)?;
        let xs = grid.nodes();
        Self::new(x_end, xs.iter().map(|&x| rho(x)).collect(), xs.iter().map(|&x| q(x)).collect(), support_bound)
    }

    pub fn x_end(&self) -> f64 {
        self.x_end
    }

    pub fn n_cells(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.x_end / self.n_cells() as f64
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.x_end, self.n_cells()).expect("validated on construction")
    }

    pub fn x(&self, j: usize) -> f64 {
        self.grid().node(j)
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn support_bound(&self) -> Option<f64> {
        self.support_bound
    }

    pub fn catalog(&self) -> Option<Catalog> {
        self.analytic
    }

    pub fn rho_at(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.x_end);
        match self.analytic {
            Some(c) => c.rho(x),
            None => lagrange4(&self.rho, self.step(), x),
        }
    }

    pub fn q_at(&self, x: f64) -> f64 {
        if let Some(a) = self.support_bound {
            if x > a {
                return 0.0;
            }
        }
        let x = x.clamp(0.0, self.x_end);
        match self.analytic {
            Some(c) => c.q(x),
            None => lagrange4(&self.q, self.step(), x),
        }
    }

    pub fn min_rho(&self) -> f64 {
        self.rho.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_unit_density(&self) -> bool {
        self.rho.iter().all(|r| (r - 1.0).abs() < 1e-12)
    }

    pub fn has_zero_potential(&self) -> bool {
        self.q.iter().all(|q| q.abs() < 1e-12)
    }

    /// Same samples with a declared potential support bound.
    pub fn with_support_bound(&self, a: f64) -> Result<Self> {
        let mut m = Self::new(self.x_end, self.rho.clone(), self.q.clone(), Some(a))?;
        m.analytic = self.analytic;
        Ok(m)
    }

    /// Same medium on `[0, x_end]`, keeping the analytic form when present.
    pub fn resampled(&self, x_end: f64, n_cells: usize) -> Result<Self> {
        let mut m = Self::from_fn(x_end, n_cells, |x| self.rho_at(x), |x| self.q_at(x), self.support_bound)?;
        m.analytic = self.analytic;
        Ok(m)
    }

    /// Reads the `x,rho,q` format; spacing must be uniform and start at 0.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["x", "rho", "q"] {
            return Err(BcmError::Csv(format!("expected header x,rho,q, got {}", cols.join(","))));
        }
        let (mut xs, mut rho, mut q) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| BcmError::Csv("short row".into()))?
                    .parse::<f64>()
                    .map_err(|e| BcmError::Csv(e.to_string()))
            };
            xs.push(parse(0)?);
            rho.push(parse(1)?);
            q.push(parse(2)?);
        }
        if xs.len() < 3 {
            return Err(BcmError::Csv("need at least 3 rows".into()));
        }
        let x_end = *xs.last().unwrap();
        let h = x_end / (xs.len() - 1) as f64;
        for (j, x) in xs.iter().enumerate() {
            if (x - j as f64 * h).abs() > 1e-9 * x_end.max(1.0) {
                return Err(BcmError::Csv(format!("non-uniform or shifted x at row {}", j + 1)));
            }
        }
        Self::new(x_end, rho, q, None)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "rho", "q"])?;
        for j in 0..self.rho.len() {
            w.write_record([fmt(self.x(j)), fmt(self.rho[j]), fmt(self.q[j])])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}

/// Default extent and resolution used for catalog media.
pub const CATALOG_EXTENT: f64 = 4.0;
pub const CATALOG_CELLS: usize = 4000;

/// Catalog lookup by key, or `user_csv:<path>` / any path ending in `.csv`.
pub fn make_test_medium(name: &str) -> Result<MediumProfile> {
    if let Some(c) = Catalog::from_name(name) {
        return c.profile(CATALOG_EXTENT, CATALOG_CELLS);
    }
    if let Some(path) = name.strip_prefix("user_csv:") {
        return MediumProfile::from_csv_path(path);
    }
    if name.ends_with(".csv") {
        return MediumProfile::from_csv_path(name);
    }
    Err(BcmError::UnknownMedium(name.to_string()))
}

/// Travel time `tau(x) = ∫_0^x rho^{1/2}` and its tabulated inverse.
#[derive(Debug, Clone)]
pub struct Eikonal {
    tau: SampledFunction,
    x_of_t: SampledFunction,
}

impl Eikonal {
    /// `tau` on the profile's spatial grid.
    pub fn tau(&self) -> &SampledFunction {
        &self.tau
    }

    /// Inverse `x(t)` on a uniform time grid over `[0, tau(x_end)]`.
    pub fn x_of_t(&self) -> &SampledFunction {
        &self.x_of_t
    }

    pub fn tau_at(&self, x: f64) -> f64 {
        let h = self.tau.step();
        let v = self.tau.values();
        let s = (x / h).clamp(0.0, (v.len() - 1) as f64);
        let i = (s.floor() as usize).min(v.len() - 2);
        let u = s - i as f64;
        v[i] + u * (v[i + 1] - v[i])
    }

    /// Exact inverse of the piecewise-linear `tau`.
    pub fn x_at(&self, t: f64) -> f64 {
        invert_monotone(self.tau.values(), self.tau.step(), t)
    }
}

fn invert_monotone(tau: &[f64], h: f64, t: f64) -> f64 {
    let n = tau.len();
    if t <= tau[0] {
        return 0.0;
    }
    if t >= tau[n - 1] {
        return (n - 1) as f64 * h;
    }
    let k = tau.partition_point(|&v| v < t).max(1);
    let u = (t - tau[k - 1]) / (tau[k] - tau[k - 1]);
    (k - 1) as f64 * h + u * h
}

pub fn build_eikonal(m: &MediumProfile) -> Result<Eikonal> {
    let grid = m.grid();
    let sq: Vec<f64> = m.rho().iter().map(|r| r.sqrt()).collect();
    let tau = cumulative_trapezoid(&sq, grid.step());
    if tau.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BcmError::InvalidMedium("travel time is not strictly increasing".into()));
    }
    let t_grid = TimeGrid::new(*tau.last().unwrap(), grid.n_steps())?;
    let x_of_t: Vec<f64> = t_grid.nodes().iter().map(|&t| invert_monotone(&tau, grid.step(), t)).collect();
    Ok(Eikonal { tau: SampledFunction::new(grid, tau)?, x_of_t: SampledFunction::new(t_grid, x_of_t)? })
}

/// Classical RK4 for `y'' = (q(x) - lambda) y` from `x0` over `steps` steps of
/// signed size `h`. Returns `y` at the `steps + 1` nodes.
pub fn sl_integrate(
    q: impl Fn(f64) -> f64,
    x0: f64,
    h: f64,
    steps: usize,
    y0: f64,
    y0p: f64,
    lambda: f64,
) -> Vec<f64> {
    let rhs = |x: f64, y: f64, yp: f64| (yp, (q(x) - lambda) * y);
    let mut out = Vec::with_capacity(steps + 1);
    let (mut y, mut yp) = (y0, y0p);
    out.push(y);
    for i in 0..steps {
        let x = x0 + i as f64 * h;
        let (k1y, k1p) = rhs(x, y, yp);
        let (k2y, k2p) = rhs(x + 0.5 * h, y + 0.5 * h * k1y, yp + 0.5 * h * k1p);
        let (k3y, k3p) = rhs(x + 0.5 * h, y + 0.5 * h * k2y, yp + 0.5 * h * k2p);
        let (k4y, k4p) = rhs(x + h, y + h * k3y, yp + h * k3p);
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        yp += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        out.push(y);
    }
    out
}

/// Solution of `-y'' + q y = 0`, `y(0) = y0`, `y'(0) = y0p` on the profile grid.
pub fn sl_solution(m: &MediumProfile, y0: f64, y0p: f64) -> Result<SampledFunction> {
    sl_solution_lambda(m, y0, y0p, 0.0)
}

/// Solution of `-y'' + q y = lambda y` on the profile grid.
pub fn sl_solution_lambda(m: &MediumProfile, y0: f64, y0p: f64, lambda: f64) -> Result<SampledFunction> {
    let grid = m.grid();
    let y = sl_integrate(|x| m.q_at(x), 0.0, grid.step(), grid.n_steps(), y0, y0p, lambda);
    SampledFunction::new(grid, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_values() {
        let u = make_test_medium("unit").unwrap();
        assert!(u.is_unit_density() && u.has_zero_potential());
        let g = make_test_medium("gl_rational").unwrap();
        assert!((g.q_at(1.0) - 3.0).abs() < 1e-15);
        let k = make_test_medium("krein_exp").unwrap();
        assert!((k.rho_at(0.0) - 4.0).abs() < 1e-15);
        let b = make_test_medium("scatter_bump").unwrap();
        assert_eq!(b.support_bound(), Some(1.5));
        assert!((b.q_at(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(b.q_at(0.5), 0.0);
        assert!(matches!(make_test_medium("nope"), Err(BcmError::UnknownMedium(_))));
    }

    #[test]
    fn eikonal_examples() {
        let e = build_eikonal(&make_test_medium("unit").unwrap()).unwrap();
        assert!((e.tau_at(1.3) - 1.3).abs() < 1e-12);
        assert!((e.x_at(0.7) - 0.7).abs() < 1e-12);
        let m = Catalog::ExpDensity.profile(1.0, 400).unwrap();
        let e = build_eikonal(&m).unwrap();
        assert!((e.tau().values()[400] - (1f64.exp() - 1.0)).abs() < 1e-4);
        let m = Catalog::KreinExp.profile(1.0, 400).unwrap();
        let e = build_eikonal(&m).unwrap();
        assert!((e.x_at(2.0 * (1f64.exp() - 1.0)) - 1.0).abs() < 2.0 * m.step());
        for j in 1..400 {
            let x = m.x(j);
            assert!((e.x_at(e.tau_at(x)) - x).abs() < 2.0 * m.step());
        }
    }

    #[test]
    fn sl_oracle_examples() {
        let u = Catalog::Unit.profile(1.0, 100).unwrap();
        let y = sl_solution(&u, 0.0, 1.0).unwrap();
        assert!((y.values()[100] - 1.0).abs() < 1e-12);
        let g = Catalog::GlRational.profile(1.0, 1000).unwrap();
        let y = sl_solution(&g, 0.0, 1.0).unwrap();
        assert!((y.values()[500] - 0.625).abs() < 1e-8);
        let one = MediumProfile::from_fn(1.0, 1000, |_| 1.0, |_| 1.0, None).unwrap();
        let y = sl_solution(&one, 1.0, 0.0).unwrap();
        assert!((y.values()[1000] - 1f64.cosh()).abs() < 1e-9);
    }

    #[test]
    fn csv_roundtrip_and_validation() {
        let m = Catalog::GlRational.profile(2.0, 20).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = MediumProfile::from_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back.n_cells(), 20);
        for j in 0..=20 {
            assert!((back.q()[j] - m.q()[j]).abs() < 1e-10);
        }
        let bad = "x,rho,q\n0,1,0\n0.1,1,0\n0.3,1,0\n";
        assert!(MediumProfile::from_csv_reader(bad.as_bytes()).is_err());
        let neg = "x,rho,q\n0,1,0\n0.1,-1,0\n0.2,1,0\n";
        assert!(MediumProfile::from_csv_reader(neg.as_bytes()).is_err());
    }

    #[test]
    fn support_bound_enforced() {
        assert!(MediumProfile::from_fn(2.0, 20, |_| 1.0, |_| 1.0, Some(1.0)).is_err());
    }
}
