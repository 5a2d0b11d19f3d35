//! Dense operator calculus at desk scale: subordination `Ψ(F;T)`, resolvent
//! scans for the Ritt and Kreiss conditions, and fractional powers of `I − T`
//! by three independent routes.
//!
//! Operator norms are spectral norms throughout.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::families::alpha_frac;
use crate::seq::{conv_power, ConvOptions, ProbSeq, Sequence};
use crate::transforms::gen_fn;

pub type CMat = DMatrix<Complex64>;

const EPS: f64 = f64::EPSILON;
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Norms above this during a power chain count as evidence against power-boundedness.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Horizon used to estimate `sup_n ‖Tⁿ‖` when `‖T‖ > 1`.
pub const DEFAULT_HORIZON: usize = 1024;
/// Eigenbases worse conditioned than this are rejected.
pub const MAX_EIGEN_COND: f64 = 1e10;

/// Square complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOp {
    m: CMat,
}

impl DenseOp {
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(LabError::Dimension(format!("expected a nonempty square matrix, got {}x{}", m.nrows(), m.ncols())));
        }
        if let Some(index) = m.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::NonFinite { index });
        }
        Ok(Self { m })
    }

    pub fn identity(d: usize) -> Self {
        Self { m: CMat::identity(d, d) }
    }

    pub fn zero(d: usize) -> Self {
        Self { m: CMat::zeros(d, d) }
    }

    pub fn diag(values: &[Complex64]) -> Result<Self> {
        Self::new(CMat::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn norm(&self) -> f64 {
        spectral_norm(&self.m)
    }

    /// Rows of `[re, im]` pairs.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| [self.m[(i, j)].re, self.m[(i, j)].im]).collect())
            .collect();
        serde_json::to_value(rows).expect("matrix serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let rows: Vec<Vec<[f64; 2]>> = serde_json::from_value(value.clone())?;
        let d = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(LabError::Dimension(format!("row {i} has {} entries, expected {d}", r.len())));
        }
        Self::new(CMat::from_fn(d, d, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn frob(m: &CMat) -> f64 {
    m.norm()
}

// ---------------------------------------------------------------------------
// power bounds and subordination

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerBound {
    /// `max_{1 ≤ n ≤ reached} ‖Tⁿ‖`.
    pub bound: f64,
    pub norms: Vec<f64>,
    /// True when a norm exceeded [`DIVERGENCE_NORM`] and the chain stopped.
    pub diverging: bool,
}

/// Finite-horizon estimate of `sup_n ‖Tⁿ‖` over `1 ≤ n ≤ horizon`.
pub fn power_bound(t: &DenseOp, horizon: usize) -> Result<PowerBound> {
    if horizon == 0 {
        return Err(invalid("N", "horizon must be at least 1"));
    }
    let mut p = t.m.clone();
    let mut tmp = p.clone();
    let mut norms = Vec::with_capacity(horizon);
    for n in 1..=horizon {
        let s = spectral_norm(&p);
        norms.push(s);
        if s > DIVERGENCE_NORM {
            return Ok(PowerBound { bound: s, norms, diverging: true });
        }
        if s == 0.0 || n == horizon {
            break;
        }
        p.mul_to(&t.m, &mut tmp);
        std::mem::swap(&mut p, &mut tmp);
    }
    Ok(PowerBound {
        bound: norms.iter().copied().fold(0.0, f64::max),
        norms,
        diverging: false,
    })
}

/// `c(T) ≥ sup_n ‖Tⁿ‖` (including `n = 0`), and whether it is certified.
///
/// Contractions give `1` exactly; otherwise a finite-horizon estimate is used.
/// `None` when the power chain diverges.
pub fn power_constant(t: &DenseOp) -> Result<Option<(f64, bool)>> {
    if t.norm() <= 1.0 + 1e-12 {
        return Ok(Some((1.0, true)));
    }
    let pb = power_bound(t, DEFAULT_HORIZON)?;
    Ok((!pb.diverging).then_some((pb.bound.max(1.0), false)))
}

/// An operator with an error bound in spectral norm.
#[derive(Clone, Debug, PartialEq)]
pub struct OpApprox {
    pub op: DenseOp,
    pub error: f64,
    /// False when the bound rests on an uncertified power constant.
    pub certified: bool,
    pub warning: Option<String>,
}

/// `Ψ(F;T) = Σ F(k) Tᵏ` by Horner's rule over the stored coefficients.
///
/// The truncation error is `c(T)·tail_bound(F)`. If the powers of `T` appear
/// to diverge the sum is still returned, with an infinite error.
pub fn psi_op<S: Sequence + ?Sized>(f: &S, t: &DenseOp) -> Result<OpApprox> {
    let d = t.dim();
    let view = f.view();
    let len = view.len();
    let mut acc = CMat::zeros(d, d);
    let mut tmp = CMat::zeros(d, d);
    for k in (0..len).rev() {
        acc.mul_to(&t.m, &mut tmp);
        std::mem::swap(&mut acc, &mut tmp);
        let c = view.get(k);
        for i in 0..d {
            acc[(i, i)] += c;
        }
    }
    let (l1, _) = f.l1_norm();
    let (error, certified, warning) = match power_constant(t)? {
        Some((c, certified)) => {
            let rounding = (len as f64 + d as f64) * EPS * l1 * c * 4.0;
            (c * f.tail_bound() + rounding, certified, None)
        }
        None => (
            f64::INFINITY,
            false,
            Some("powers of T exceed the divergence threshold; no error bound".to_string()),
        ),
    };
    Ok(OpApprox {
        op: DenseOp { m: acc },
        error,
        certified,
        warning,
    })
}

fn mat_pow(m: &CMat, n: u64) -> CMat {
    let d = m.nrows();
    let mut result = CMat::identity(d, d);
    for _ in 0..n {
        result = &result * m;
    }
    result
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub residual: f64,
    pub budget: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.residual <= self.budget
    }
}

/// `‖Ψ(F;T)ⁿ − Ψ(F⁽ⁿ⁾;T)‖` against the combined error budget of both sides.
pub fn subordination_identity_check(f: &ProbSeq, t: &DenseOp, n: u64, conv: &ConvOptions) -> Result<IdentityCheck> {
    if n == 0 {
        return Err(invalid("n", "need n >= 1"));
    }
    let psi = psi_op(f, t)?;
    let lhs = mat_pow(&psi.op.m, n);
    let fn_ = conv_power(f, n, conv)?;
    let rhs = psi_op(&fn_, t)?;
    // ‖Ψ̃ⁿ − Ψⁿ‖ ≤ n·bⁿ⁻¹·‖Ψ̃ − Ψ‖ with b bounding both norms
    let b = psi.op.norm() + psi.error;
    let nf = n as f64;
    let d = t.dim() as f64;
    let budget = nf * b.powf(nf - 1.0) * psi.error + rhs.error + 4.0 * nf * d * EPS * b.powf(nf).max(1.0);
    Ok(IdentityCheck {
        residual: spectral_norm(&(lhs - &rhs.op.m)),
        budget,
    })
}

// ---------------------------------------------------------------------------
// Schur forms and eigenbases

/// `m = q·u·q*` with `u` upper triangular.
struct SchurForm {
    q: CMat,
    u: CMat,
}

fn is_upper(m: &CMat) -> bool {
    (0..m.nrows()).all(|i| (0..i).all(|j| m[(i, j)] == ZERO))
}

fn reversal(d: usize) -> CMat {
    CMat::from_fn(d, d, |i, j| if i + j + 1 == d { ONE } else { ZERO })
}

fn schur_form(m: &CMat) -> Result<SchurForm> {
    let d = m.nrows();
    if is_upper(m) {
        return Ok(SchurForm {
            q: CMat::identity(d, d),
            u: m.clone(),
        });
    }
    if is_upper(&m.transpose()) {
        // reversing rows and columns turns a lower triangular matrix upper
        let j = reversal(d);
        return Ok(SchurForm { u: &j * m * &j, q: j });
    }
    let schur = nalgebra::Schur::try_new(m.clone(), EPS, 100_000)
        .ok_or_else(|| LabError::Spectrum("Schur iteration did not converge".into()))?;
    let (q, mut u) = schur.unpack();
    for i in 0..d {
        for j in 0..i {
            u[(i, j)] = ZERO;
        }
    }
    Ok(SchurForm { q, u })
}

/// Eigenvalues from the Schur diagonal.
pub fn eigenvalues(t: &DenseOp) -> Result<Vec<Complex64>> {
    let s = schur_form(&t.m)?;
    Ok((0..t.dim()).map(|i| s.u[(i, i)]).collect())
}

/// `m = X·diag(values)·X⁻¹`.
struct EigenDecomp {
    values: Vec<Complex64>,
    vectors: CMat,
    inverse: CMat,
    cond: f64,
}

fn condition_number(m: &CMat) -> f64 {
    // the SVD iteration does not terminate on non-finite input
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return f64::INFINITY;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

fn eigen_decomp(m: &CMat) -> Result<EigenDecomp> {
    let d = m.nrows();
    let SchurForm { q, u } = schur_form(m)?;
    // complex division squares the divisor, so keep it well above underflow
    let small = (EPS * frob(&u)).max(1e-150);
    // back substitution for the eigenvectors of the triangular factor
    let mut y = CMat::zeros(d, d);
    for k in 0..d {
        let lambda = u[(k, k)];
        y[(k, k)] = ONE;
        for j in (0..k).rev() {
            let mut s = ZERO;
            for i in j + 1..=k {
                s += u[(j, i)] * y[(i, k)];
            }
            let mut denom = u[(j, j)] - lambda;
            if denom.norm() < small {
                denom = Complex64::new(small, 0.0);
            }
            y[(j, k)] = -s / denom;
        }
        let n = y.column(k).norm();
        y.column_mut(k).unscale_mut(n);
    }
    let vectors = &q * y;
    let cond = condition_number(&vectors);
    if !(cond <= MAX_EIGEN_COND) {
        return Err(LabError::NotDiagonalizable { cond });
    }
    let inverse = vectors
        .clone()
        .try_inverse()
        .ok_or(LabError::NotDiagonalizable { cond: f64::INFINITY })?;
    Ok(EigenDecomp {
        values: (0..d).map(|i| u[(i, i)]).collect(),
        vectors,
        inverse,
        cond,
    })
}

impl EigenDecomp {
    fn apply(&self, f: impl Fn(Complex64) -> Complex64) -> CMat {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let fj = f(self.values[j]);
            for i in 0..d {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * &self.inverse
    }
}

/// Eigenvector condition number of `T`, or an error when it is not diagonalizable.
pub fn eigen_condition(t: &DenseOp) -> Result<f64> {
    Ok(eigen_decomp(&t.m)?.cond)
}

// ---------------------------------------------------------------------------
// resolvent scans

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanKind {
    /// `|λ − 1|·‖(λI − T)⁻¹‖`.
    Ritt,
    /// `(|λ| − 1)·‖(λI − T)⁻¹‖`.
    Kreiss,
}

impl std::str::FromStr for ScanKind {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ritt" => Ok(Self::Ritt),
            "kreiss" => Ok(Self::Kreiss),
            other => Err(invalid("kind", format!("expected ritt or kreiss, got `{other}`"))),
        }
    }
}

/// Contour `(1 + 2^{-j}) e^{iθ}` for `j` in `min_exp..=max_exp` and `angles` uniform `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub min_exp: u32,
    pub max_exp: u32,
    pub angles: usize,
    pub threads: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            min_exp: 0,
            max_exp: 10,
            angles: 256,
            threads: 1,
        }
    }
}

impl ScanOptions {
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn radii(&self) -> Vec<f64> {
        (self.min_exp..=self.max_exp).map(|j| 1.0 + 0.5f64.powi(j as i32)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventScan {
    pub kind: ScanKind,
    pub contour: Vec<Complex64>,
    pub values: Vec<f64>,
    pub constant: f64,
    pub radii: Vec<f64>,
    pub per_radius_max: Vec<f64>,
    /// Contour indices where `λI − T` was numerically singular.
    pub singular: Vec<usize>,
}

/// Relative spread allowed across the last three per-radius maxima.
pub const RADIUS_FLATNESS: f64 = 0.25;

impl ResolventScan {
    /// Finite constant, no singular points, and the last three per-radius
    /// maxima within [`RADIUS_FLATNESS`].
    pub fn stabilizes(&self) -> bool {
        let n = self.per_radius_max.len();
        if !self.constant.is_finite() || !self.singular.is_empty() || n < 3 {
            return false;
        }
        crate::numeric::relative_spread(&self.per_radius_max[n - 3..]) <= RADIUS_FLATNESS
    }

    /// CSV with columns `re_lambda,im_lambda,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re_lambda,im_lambda,value")?;
        for (z, v) in self.contour.iter().zip(&self.values) {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", z.re, z.im, v)?;
        }
        Ok(())
    }
}

/// Matrices up to this size get an exact resolvent norm from a full SVD;
/// larger ones use power iteration on `R*R`, which converges from below.
pub const DENSE_NORM_DIM: usize = 48;
const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_MAX: usize = 500;

/// `‖(λI − U)⁻¹‖` for upper triangular `U`; `None` when singular.
fn tri_resolvent_norm(u: &CMat, lambda: Complex64, warm: &mut DVector<Complex64>) -> Option<f64> {
    let d = u.nrows();
    let scale = frob(u).max(1.0);
    let mut a = -u.clone();
    for i in 0..d {
        a[(i, i)] += lambda;
        if a[(i, i)].norm() <= 1e-14 * scale {
            return None;
        }
    }
    if d <= DENSE_NORM_DIM {
        let inv = a.solve_upper_triangular(&CMat::identity(d, d))?;
        return Some(spectral_norm(&inv));
    }
    let mut sigma = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let y = a.solve_upper_triangular(warm)?;
        let next = y.norm();
        let z = a.ad_solve_upper_triangular(&y)?;
        let zn = z.norm();
        if zn == 0.0 {
            return Some(next);
        }
        *warm = z.unscale(zn);
        let done = (next - sigma).abs() <= POWER_ITER_TOL * next;
        sigma = next;
        if done {
            break;
        }
    }
    Some(sigma)
}

fn scan_radius(u: &CMat, kind: ScanKind, radius: f64, angles: usize) -> Vec<(Complex64, Option<f64>)> {
    let d = u.nrows();
    let mut warm = DVector::from_fn(d, |i, _| Complex64::new(1.0 + 0.25 * (i as f64).sin(), 0.0));
    let n = warm.norm();
    warm.unscale_mut(n);
    (0..angles)
        .map(|k| {
            let lambda = Complex64::from_polar(radius, 2.0 * PI * k as f64 / angles as f64);
            let weight = match kind {
                ScanKind::Ritt => (lambda - ONE).norm(),
                ScanKind::Kreiss => radius - 1.0,
            };
            (lambda, tri_resolvent_norm(u, lambda, &mut warm).map(|r| weight * r))
        })
        .collect()
}

/// Scans the Ritt or Kreiss functional over the contour. Each radius is an
/// independent job, so results do not depend on the thread count.
pub fn resolvent_scan(t: &DenseOp, kind: ScanKind, opts: &ScanOptions) -> Result<ResolventScan> {
    if opts.angles == 0 || opts.min_exp > opts.max_exp {
        return Err(invalid("contour", "need at least one angle and min_exp <= max_exp"));
    }
    let u = schur_form(&t.m)?.u;
    let radii = opts.radii();
    let threads = opts.threads.max(1).min(radii.len());
    let mut per_radius: Vec<Vec<(Complex64, Option<f64>)>> = vec![Vec::new(); radii.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let (u, radii) = (&u, &radii);
                scope.spawn(move || {
                    (w..radii.len())
                        .step_by(threads)
                        .map(|r| (r, scan_radius(u, kind, radii[r], opts.angles)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (r, rows) in h.join().expect("scan worker panicked") {
                per_radius[r] = rows;
            }
        }
    });
    let mut contour = Vec::new();
    let mut values = Vec::new();
    let mut singular = Vec::new();
    let mut per_radius_max = Vec::new();
    for rows in per_radius {
        let mut m = 0.0f64;
        for (lambda, v) in rows {
            if v.is_none() {
                singular.push(contour.len());
            }
            let v = v.unwrap_or(f64::INFINITY);
            m = m.max(v);
            contour.push(lambda);
            values.push(v);
        }
        per_radius_max.push(m);
    }
    let constant = values.iter().copied().fold(0.0, f64::max);
    Ok(ResolventScan {
        kind,
        contour,
        values,
        constant,
        radii,
        per_radius_max,
        singular,
    })
}

// ---------------------------------------------------------------------------
// fractional powers

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FracMethod {
    /// `I − Ψ(A_α; T)`.
    Series,
    /// Principal power on an eigenbasis of `I − T`.
    Eigen,
    /// Kato's resolvent integral, inverted at `λ = 1`.
    Kato,
}

impl std::str::FromStr for FracMethod {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(Self::Series),
            "eigen" => Ok(Self::Eigen),
            "kato" => Ok(Self::Kato),
            other => Err(invalid("method", format!("expected series, eigen or kato, got `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FracOptions {
    /// Largest index of the `A_α` coefficients used by the series route.
    pub series_len: usize,
    /// Relative change between trapezoid refinements that ends the Kato quadrature.
    pub kato_tol: f64,
}

impl Default for FracOptions {
    fn default() -> Self {
        Self {
            series_len: 1 << 16,
            kato_tol: 1e-11,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FracPower {
    /// `(I − T)^α`.
    pub op: DenseOp,
    pub error: f64,
    pub method: FracMethod,
    /// Eigenvector condition number, for the eigen route.
    pub cond: Option<f64>,
}

fn principal_pow(z: Complex64, alpha: f64) -> Complex64 {
    if z == ZERO {
        ZERO
    } else {
        z.powf(alpha)
    }
}

/// `(I − T)^α` for `α ∈ (0, 2)`. For `α > 1` this is `(I − T)·(I − T)^{α−1}`.
pub fn frac_power(t: &DenseOp, alpha: f64, method: FracMethod, opts: &FracOptions) -> Result<FracPower> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(invalid("alpha", format!("must lie in (0, 2), got {alpha}")));
    }
    let d = t.dim();
    let v = CMat::identity(d, d) - &t.m;
    if alpha == 1.0 {
        return Ok(FracPower {
            op: DenseOp { m: v },
            error: 0.0,
            method,
            cond: None,
        });
    }
    if alpha > 1.0 {
        let base = frac_power(t, alpha - 1.0, method, opts)?;
        let vn = spectral_norm(&v);
        return Ok(FracPower {
            op: DenseOp { m: &v * &base.op.m },
            error: vn * base.error + 4.0 * d as f64 * EPS * vn * base.op.norm(),
            method,
            cond: base.cond,
        });
    }
    match method {
        FracMethod::Series => {
            let a = alpha_frac(alpha, opts.series_len)?;
            let psi = psi_op(&a, t)?;
            Ok(FracPower {
                op: DenseOp {
                    m: CMat::identity(d, d) - psi.op.m,
                },
                error: psi.error,
                method,
                cond: None,
            })
        }
        FracMethod::Eigen => {
            let e = eigen_decomp(&v)?;
            if let Some(z) = e.values.iter().find(|z| z.re < 0.0 && z.im.abs() <= 1e-14 * z.norm()) {
                return Err(LabError::Spectrum(format!("eigenvalue {z} of I - T lies on the branch cut")));
            }
            let m = e.apply(|z| principal_pow(z, alpha));
            let top = e.values.iter().map(|z| z.norm().powf(alpha)).fold(0.0, f64::max);
            let vn = spectral_norm(&v);
            Ok(FracPower {
                error: 16.0 * d as f64 * EPS * e.cond * (top + vn + 1.0),
                op: DenseOp { m },
                method,
                cond: Some(e.cond),
            })
        }
        FracMethod::Kato => {
            let s = schur_form(&v)?;
            check_right_half_plane(&s.u)?;
            let r = kato_resolvent_tri(&s.u, alpha, ONE, opts.kato_tol)?;
            let rinv = r
                .resolvent
                .m
                .solve_upper_triangular(&CMat::identity(d, d))
                .ok_or_else(|| LabError::Spectrum("Kato resolvent is singular".into()))?;
            let ua = rinv - CMat::identity(d, d);
            let amp = spectral_norm(&ua) + 1.0;
            Ok(FracPower {
                op: DenseOp {
                    m: &s.q * ua * s.q.adjoint(),
                },
                // ‖A⁻¹ − B⁻¹‖ ≤ ‖A⁻¹‖‖B⁻¹‖‖A − B‖, to first order
                error: r.error * amp * amp + 16.0 * d as f64 * EPS * amp,
                method,
                cond: None,
            })
        }
    }
}

fn check_right_half_plane(u: &CMat) -> Result<()> {
    let scale = frob(u).max(1.0);
    for i in 0..u.nrows() {
        let z = u[(i, i)];
        if z.re < -1e-12 * scale {
            return Err(LabError::Spectrum(format!(
                "eigenvalue {z} of I - T lies outside the closed right half-plane"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct KatoResult {
    /// `(λI + V^α)⁻¹`.
    pub resolvent: DenseOp,
    /// Last change between trapezoid refinements, in Frobenius norm.
    pub error: f64,
    pub nodes: usize,
}

/// `(λI + V^α)⁻¹` from Kato's integral, for `|arg λ| < (1 − α)π` and `σ(V)`
/// in the closed right half-plane.
pub fn kato_resolvent(v: &DenseOp, alpha: f64, lambda: Complex64, tol: f64) -> Result<KatoResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let s = schur_form(&v.m)?;
    check_right_half_plane(&s.u)?;
    let r = kato_resolvent_tri(&s.u, alpha, lambda, tol)?;
    Ok(KatoResult {
        resolvent: DenseOp {
            m: &s.q * r.resolvent.m * s.q.adjoint(),
        },
        ..r
    })
}

const KATO_MAX_HALVINGS: usize = 7;
const KATO_MAX_NODES_PER_SIDE: usize = 20_000;

/// Trapezoid rule in `u = ln t` on the triangular Schur factor.
fn kato_resolvent_tri(u: &CMat, alpha: f64, lambda: Complex64, tol: f64) -> Result<KatoResult> {
    if !(lambda.arg().abs() < (1.0 - alpha) * PI) || lambda == ZERO {
        return Err(invalid("lambda", format!("arg must lie below (1 - alpha)π, got {lambda}")));
    }
    let d = u.nrows();
    let rot = Complex64::from_polar(1.0, alpha * PI);
    let pref = (alpha * PI).sin() / PI;
    let eye = CMat::identity(d, d);
    let integrand = |x: f64| -> Option<(CMat, f64)> {
        let t = x.exp();
        let ta = t.powf(alpha);
        let scalar = pref * t.powf(alpha + 1.0) / ((lambda + rot * ta) * (lambda + rot.conj() * ta));
        let mut a = u.clone();
        for i in 0..d {
            a[(i, i)] += t;
        }
        let inv = a.solve_upper_triangular(&eye)?;
        let m = inv * scalar;
        let n = frob(&m);
        Some((m, n))
    };

    let diag_abs: Vec<f64> = (0..d).map(|i| u[(i, i)].norm()).collect();
    let lam_scale = lambda.norm().powf(1.0 / alpha);
    let hi0 = (frob(u) + lam_scale).ln() + 2.0;
    let lo_min = diag_abs.iter().copied().fold(f64::INFINITY, f64::min).min(lam_scale);
    let lo0 = if lo_min > 0.0 { lo_min.ln() - 2.0 } else { -40.0 };

    // sums g over x = offset + k·step in both directions until three
    // consecutive nodes are negligible past the spectral scale
    let sweep = |offset: f64, step: f64, acc: &mut CMat, nodes: &mut usize| -> Result<()> {
        for dir in [1.0, -1.0] {
            let mut quiet = 0;
            let start = if dir > 0.0 { 0 } else { 1 };
            for k in start..KATO_MAX_NODES_PER_SIDE {
                let x = offset + dir * k as f64 * step;
                let (m, n) = integrand(x).ok_or_else(|| LabError::Spectrum("tI + V singular on the Kato contour".into()))?;
                *acc += m;
                *nodes += 1;
                let past = if dir > 0.0 { x > hi0 } else { x < lo0 };
                if past && n <= 1e-18 * frob(acc).max(f64::MIN_POSITIVE) {
                    quiet += 1;
                    if quiet >= 3 {
                        break;
                    }
                } else {
                    quiet = 0;
                }
            }
        }
        Ok(())
    };

    let mut h = 0.5;
    let mut nodes = 0;
    let mut sum = CMat::zeros(d, d);
    sweep(0.0, h, &mut sum, &mut nodes)?;
    let mut estimate = sum.scale(h);
    for _ in 0..KATO_MAX_HALVINGS {
        // new nodes sit at the odd multiples of h/2
        let mut odd = CMat::zeros(d, d);
        sweep(0.5 * h, h, &mut odd, &mut nodes)?;
        sum += odd;
        h *= 0.5;
        let next = sum.scale(h);
        let change = frob(&(&next - &estimate));
        estimate = next;
        if change <= tol * frob(&estimate) {
            let mut r = estimate;
            for i in 0..d {
                for j in 0..i {
                    r[(i, j)] = ZERO;
                }
            }
            return Ok(KatoResult {
                resolvent: DenseOp { m: r },
                error: change,
                nodes,
            });
        }
    }
    Err(LabError::Quadrature(format!(
        "Kato trapezoid rule did not reach relative change {tol:e} after {KATO_MAX_HALVINGS} halvings"
    )))
}

/// `(λI + V^α)⁻¹` on an eigenbasis, for validating the Kato route.
pub fn eigen_frac_resolvent(v: &DenseOp, alpha: f64, lambda: Complex64) -> Result<DenseOp> {
    let e = eigen_decomp(&v.m)?;
    Ok(DenseOp {
        m: e.apply(|z| ONE / (lambda + principal_pow(z, alpha))),
    })
}

/// Picks the eigen route for well-conditioned eigenbases and Kato otherwise.
pub fn frac_power_best(t: &DenseOp, alpha: f64, opts: &FracOptions) -> Result<FracPower> {
    let v = DenseOp {
        m: CMat::identity(t.dim(), t.dim()) - &t.m,
    };
    match eigen_decomp(&v.m) {
        Ok(e) if e.cond <= 1e8 => frac_power(t, alpha, FracMethod::Eigen, opts),
        _ => frac_power(t, alpha, FracMethod::Kato, opts),
    }
}

// ---------------------------------------------------------------------------
// concrete operators

/// Rectangle-rule Volterra matrix on `d` cells: `h` below the diagonal, `h/2` on it.
pub fn volterra_generator(d: usize) -> Result<DenseOp> {
    if d < 2 {
        return Err(invalid("d", "Volterra discretization needs d >= 2"));
    }
    let h = 1.0 / d as f64;
    DenseOp::new(CMat::from_fn(d, d, |i, j| {
        if i > j {
            Complex64::new(h, 0.0)
        } else if i == j {
            Complex64::new(0.5 * h, 0.0)
        } else {
            ZERO
        }
    }))
}

/// `T = (I + V)⁻¹` for the discretized Volterra operator.
pub fn volterra_op(d: usize) -> Result<DenseOp> {
    let v = volterra_generator(d)?;
    let a = CMat::identity(d, d) + v.m;
    let t = a
        .solve_lower_triangular(&CMat::identity(d, d))
        .ok_or_else(|| LabError::Spectrum("I + V is singular".into()))?;
    DenseOp::new(t)
}

/// Largest `|λ − 1|` over the eigenvalues of `T`.
pub fn spectrum_distance_from_one(t: &DenseOp) -> Result<f64> {
    Ok(eigenvalues(t)?.iter().map(|z| (z - ONE).norm()).fold(0.0, f64::max))
}

/// Nilpotent lower shift, the `d`-dimensional truncation of convolution by `δ₁`.
pub fn shift_op(d: usize) -> Result<DenseOp> {
    if d < 2 {
        return Err(invalid("d", "shift needs d >= 2"));
    }
    DenseOp::new(CMat::from_fn(d, d, |i, j| if i == j + 1 { ONE } else { ZERO }))
}

/// `U·diag(λ)·U*` with Haar-distributed `U` and eigenvalues uniform in the closed unit disc.
pub fn random_normal_contraction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<DenseOp> {
    if d == 0 {
        return Err(invalid("d", "need d >= 1"));
    }
    let g = CMat::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let (mut q, r) = g.qr().unpack();
    for j in 0..d {
        let p = r[(j, j)];
        let phase = if p.norm() > 0.0 { p / p.norm() } else { ONE };
        for i in 0..d {
            q[(i, j)] *= phase;
        }
    }
    let values: Vec<Complex64> = (0..d)
        .map(|_| Complex64::from_polar(rng.gen::<f64>().sqrt(), 2.0 * PI * rng.gen::<f64>()))
        .collect();
    let lam = CMat::from_diagonal(&DVector::from_vec(values));
    DenseOp::new(&q * lam * q.adjoint())
}

// ---------------------------------------------------------------------------
// checks built from the pieces above

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralMapCheck {
    /// Hausdorff distance between `σ(Ψ(F;T))` and `φ_F(σ(T))`.
    pub distance: f64,
    pub budget: f64,
    pub cond: f64,
}

impl SpectralMapCheck {
    pub fn passed(&self) -> bool {
        self.distance <= self.budget
    }
}

fn hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let one_way = |x: &[Complex64], y: &[Complex64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

/// Compares `eig(Ψ(F;T))` with `φ_F(eig(T))` for diagonalizable `T`.
///
/// The budget is the Bauer–Fike bound `κ(X)·(error of Ψ)` plus the error of
/// each `φ_F` evaluation and the effect of eigensolver backward error on `φ_F`.
pub fn spectral_map_check(f: &ProbSeq, t: &DenseOp) -> Result<SpectralMapCheck> {
    let e = eigen_decomp(&t.m)?;
    let psi = psi_op(f, t)?;
    let got = eigenvalues(&psi.op)?;
    let mut want = Vec::with_capacity(e.values.len());
    let mut eval_err = 0.0f64;
    for &z in &e.values {
        // eigensolver output can sit a rounding error outside the disc
        let w = if z.norm() > 1.0 { z / z.norm() } else { z };
        let a = gen_fn(f, w)?;
        eval_err = eval_err.max(a.error);
        want.push(a.value);
    }
    let d = t.dim() as f64;
    let moment: f64 = f.coeffs().iter().enumerate().map(|(k, c)| k as f64 * c).sum();
    let tn = t.norm();
    let rounding = 16.0 * d * EPS * (psi.op.norm() + 1.0);
    let budget = e.cond * (psi.error + rounding) + eval_err + e.cond * d * EPS * tn * moment * 16.0;
    Ok(SpectralMapCheck {
        distance: hausdorff(&got, &want),
        budget,
        cond: e.cond,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RittFromKreiss {
    pub kreiss: ResolventScan,
    pub ritt: ResolventScan,
    pub method: FracMethod,
    pub frac_error: f64,
}

/// `S = I − (I − T)^α`: scans `T` for the Kreiss condition and `S` for the Ritt condition.
pub fn ritt_from_kreiss_check(t: &DenseOp, alpha: f64, frac: &FracOptions, scan: &ScanOptions) -> Result<RittFromKreiss> {
    let kreiss = resolvent_scan(t, ScanKind::Kreiss, scan)?;
    let p = frac_power_best(t, alpha, frac)?;
    let s = DenseOp::new(CMat::identity(t.dim(), t.dim()) - &p.op.m)?;
    let ritt = resolvent_scan(&s, ScanKind::Ritt, scan)?;
    Ok(RittFromKreiss {
        kreiss,
        ritt,
        method: p.method,
        frac_error: p.error,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrittRow {
    pub gamma: f64,
    pub constant: f64,
    pub per_radius_max: Vec<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrittReport {
    /// Ritt constant of `T` itself.
    pub base_constant: f64,
    pub rows: Vec<KrittRow>,
    /// Largest tested `γ` whose scan stabilizes.
    pub largest_passing: Option<f64>,
}

/// Scans `I − (I − T)^γ` for each `γ ∈ (1, 2)`.
pub fn kritt_equivalence_suite(t: &DenseOp, gammas: &[f64], frac: &FracOptions, scan: &ScanOptions) -> Result<KrittReport> {
    let base = resolvent_scan(t, ScanKind::Ritt, scan)?;
    let mut rows = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        if !(gamma > 1.0 && gamma < 2.0) {
            return Err(invalid("gamma", format!("must lie in (1, 2), got {gamma}")));
        }
        let p = frac_power_best(t, gamma, frac)?;
        let s = DenseOp::new(CMat::identity(t.dim(), t.dim()) - &p.op.m)?;
        let r = resolvent_scan(&s, ScanKind::Ritt, scan)?;
        rows.push(KrittRow {
            gamma,
            constant: r.constant,
            passed: r.stabilizes(),
            per_radius_max: r.per_radius_max,
        });
    }
    let largest_passing = rows.iter().filter(|r| r.passed).map(|r| r.gamma).fold(None, |m: Option<f64>, g| {
        Some(m.map_or(g, |m| m.max(g)))
    });
    Ok(KrittReport {
        base_constant: base.constant,
        rows,
        largest_passing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{bernoulli, mixture};
    use crate::seq::{convolve, TailInfo, TruncSeq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn dist(a: &CMat, b: &CMat) -> f64 {
        spectral_norm(&(a - b))
    }

    #[test]
    fn power_bound_examples() {
        assert_eq!(power_bound(&DenseOp::identity(3), 10).unwrap().bound, 1.0);
        let s = power_bound(&shift_op(4).unwrap(), 10).unwrap();
        assert_eq!(s.norms.len(), 4);
        for (n, want) in s.norms.iter().zip([1.0, 1.0, 1.0, 0.0]) {
            assert!((n - want).abs() < 1e-14);
        }
        let d = DenseOp::diag(&[c(0.9, 0.0), c(0.0, 0.5)]).unwrap();
        assert!((power_bound(&d, 50).unwrap().bound - 0.9).abs() < 1e-14);
        let big = DenseOp::diag(&[c(2.0, 0.0)]).unwrap();
        assert!(power_bound(&big, 100).unwrap().diverging);
    }

    #[test]
    fn psi_of_delta_and_bernoulli() {
        let t = random_normal_contraction(4, &mut rng()).unwrap();
        let id = psi_op(&ProbSeq::delta(0), &t).unwrap();
        assert!(dist(&id.op.m, &CMat::identity(4, 4)) < 1e-15);
        let b = psi_op(&bernoulli(0.3).unwrap(), &t).unwrap();
        let want = CMat::identity(4, 4) * c(0.7, 0.0) + &t.m * c(0.3, 0.0);
        assert!(dist(&b.op.m, &want) < 1e-14);
        assert!(b.certified);
    }

    #[test]
    fn psi_of_alpha_frac_on_diagonal() {
        let lam = [c(0.5, 0.0), c(-0.3, 0.6), c(0.0, -1.0)];
        let t = DenseOp::diag(&lam).unwrap();
        let a = alpha_frac(0.5, 1 << 14).unwrap();
        let p = psi_op(&a, &t).unwrap();
        for (i, &z) in lam.iter().enumerate() {
            let want = ONE - (ONE - z).powf(0.5);
            assert!((p.op.m[(i, i)] - want).norm() <= p.error, "entry {i}");
        }
        assert!(p.error < 1e-2);
    }

    #[test]
    fn subordination_identity_rotation() {
        let (s, co) = (PI / 3.0).sin_cos();
        let t = DenseOp::new(CMat::from_row_slice(2, 2, &[c(0.9 * co, 0.0), c(-0.9 * s, 0.0), c(0.9 * s, 0.0), c(0.9 * co, 0.0)]))
            .unwrap();
        let r = subordination_identity_check(&bernoulli(0.5).unwrap(), &t, 8, &ConvOptions::default()).unwrap();
        assert!(r.residual <= 1e-10, "{r:?}");
        assert!(r.passed());
        let one = subordination_identity_check(&bernoulli(0.5).unwrap(), &t, 1, &ConvOptions::default()).unwrap();
        assert_eq!(one.residual, 0.0);
    }

    #[test]
    fn subordination_identity_alpha_frac() {
        let t = random_normal_contraction(6, &mut rng()).unwrap();
        let a = alpha_frac(0.5, 4096).unwrap();
        let r = subordination_identity_check(&a, &t, 4, &ConvOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn scan_scalar_oracles() {
        let opts = ScanOptions {
            angles: 64,
            ..ScanOptions::default()
        };
        let zero = resolvent_scan(&DenseOp::zero(1), ScanKind::Ritt, &opts).unwrap();
        for (z, v) in zero.contour.iter().zip(&zero.values) {
            assert!((v - (z - ONE).norm() / z.norm()).abs() < 1e-14);
            assert!(*v <= 2.0);
        }
        let id = resolvent_scan(&DenseOp::identity(3), ScanKind::Ritt, &opts).unwrap();
        assert!(id.values.iter().all(|v| (v - 1.0).abs() < 1e-13));

        let mu = [Complex64::from_polar(0.99, 0.1), Complex64::from_polar(0.99, -0.1)];
        let t = DenseOp::diag(&mu).unwrap();
        let scan = resolvent_scan(&t, ScanKind::Ritt, &opts).unwrap();
        let mut want = 0.0f64;
        for (z, v) in scan.contour.iter().zip(&scan.values) {
            let w = mu.iter().map(|m| (z - ONE).norm() / (z - m).norm()).fold(0.0, f64::max);
            assert!((v - w).abs() <= 1e-12 * w);
            want = want.max(w);
        }
        assert!((scan.constant - want).abs() <= 1e-12 * want);
        assert!(scan.contour.iter().all(|z| z.norm() > 1.0));
    }

    #[test]
    fn kreiss_below_ritt_pointwise_and_threads_agree() {
        let t = random_normal_contraction(5, &mut rng()).unwrap();
        let opts = ScanOptions {
            angles: 32,
            ..ScanOptions::default()
        };
        let r = resolvent_scan(&t, ScanKind::Ritt, &opts).unwrap();
        let k = resolvent_scan(&t, ScanKind::Kreiss, &opts).unwrap();
        for (a, b) in k.values.iter().zip(&r.values) {
            assert!(a <= b);
        }
        let r3 = resolvent_scan(&t, ScanKind::Ritt, &opts.with_threads(3)).unwrap();
        assert_eq!(r.values, r3.values);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let t = volterra_op(64).unwrap();
        let u = schur_form(&t.m).unwrap().u;
        let lambda = c(1.01, 0.05);
        let mut warm = DVector::from_element(64, c(0.125, 0.0));
        let est = tri_resolvent_norm(&u, lambda, &mut warm).unwrap();
        let mut a = -t.m.clone();
        for i in 0..64 {
            a[(i, i)] += lambda;
        }
        let exact = spectral_norm(&a.try_inverse().unwrap());
        assert!((est - exact).abs() <= 1e-8 * exact, "{est} vs {exact}");
    }

    #[test]
    fn frac_power_trivial_cases() {
        let o = FracOptions::default();
        for method in [FracMethod::Series, FracMethod::Eigen, FracMethod::Kato] {
            let p = frac_power(&DenseOp::zero(2), 0.5, method, &o).unwrap();
            assert!(dist(&p.op.m, &CMat::identity(2, 2)) <= p.error + 1e-12, "{method:?}");
            let h = frac_power(&DenseOp::diag(&[c(0.5, 0.0)]).unwrap(), 0.5, method, &o).unwrap();
            assert!((h.op.m[(0, 0)].re - 0.5f64.sqrt()).abs() <= h.error + 1e-12, "{method:?}");
        }
    }

    #[test]
    fn square_root_squares_back() {
        let t = random_normal_contraction(5, &mut rng()).unwrap();
        let v = CMat::identity(5, 5) - &t.m;
        let o = FracOptions::default();
        for method in [FracMethod::Eigen, FracMethod::Kato] {
            let h = frac_power(&t, 0.5, method, &o).unwrap();
            let r = dist(&(&h.op.m * &h.op.m), &v);
            assert!(r <= 1e-8, "{method:?}: {r}");
        }
    }

    #[test]
    fn three_routes_agree() {
        let t = random_normal_contraction(4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let o = FracOptions::default();
        let s = frac_power(&t, 0.25, FracMethod::Series, &o).unwrap();
        let e = frac_power(&t, 0.25, FracMethod::Eigen, &o).unwrap();
        let k = frac_power(&t, 0.25, FracMethod::Kato, &o).unwrap();
        assert!(dist(&s.op.m, &e.op.m) <= s.error + e.error);
        assert!(dist(&k.op.m, &e.op.m) <= 1e-9, "{}", dist(&k.op.m, &e.op.m));
    }

    #[test]
    fn kato_resolvent_matches_eigen() {
        let t = random_normal_contraction(6, &mut rng()).unwrap();
        let v = DenseOp::new(CMat::identity(6, 6) - &t.m).unwrap();
        for lambda in [c(1.0, 0.0), c(0.5, 0.4), c(2.0, -1.0)] {
            let k = kato_resolvent(&v, 0.5, lambda, 1e-12).unwrap();
            let e = eigen_frac_resolvent(&v, 0.5, lambda).unwrap();
            assert!(dist(&k.resolvent.m, &e.m) <= 1e-10, "{lambda}");
        }
        assert!(kato_resolvent(&v, 0.5, c(-1.0, 0.1), 1e-12).is_err());
    }

    #[test]
    fn gamma_above_one_is_a_product() {
        let t = DenseOp::diag(&[c(0.5, 0.0)]).unwrap();
        let p = frac_power(&t, 1.5, FracMethod::Eigen, &FracOptions::default()).unwrap();
        assert!((p.op.m[(0, 0)].re - 0.5f64.powf(1.5)).abs() < 1e-15);
    }

    #[test]
    fn eigen_rejects_defective_input() {
        let t = volterra_op(8).unwrap();
        let err = frac_power(&t, 0.5, FracMethod::Eigen, &FracOptions::default()).unwrap_err();
        assert!(matches!(err, LabError::NotDiagonalizable { .. }), "{err}");
    }

    #[test]
    fn volterra_two_by_two() {
        let t = volterra_op(2).unwrap();
        let want = CMat::from_row_slice(2, 2, &[c(0.8, 0.0), ZERO, c(-0.32, 0.0), c(0.8, 0.0)]);
        assert!(dist(&t.m, &want) < 1e-15);
        let eig = eigenvalues(&volterra_op(32).unwrap()).unwrap();
        let h = 1.0 / 32.0;
        assert!(eig.iter().all(|z| (z - ONE / (1.0 + 0.5 * h)).norm() < 1e-14));
    }

    #[test]
    fn volterra_square_root_squares_back() {
        let t = volterra_op(32).unwrap();
        let v = CMat::identity(32, 32) - &t.m;
        let h = frac_power(&t, 0.5, FracMethod::Kato, &FracOptions::default()).unwrap();
        assert!(dist(&(&h.op.m * &h.op.m), &v) <= 1e-9);
    }

    #[test]
    fn shift_examples() {
        let s = shift_op(3).unwrap();
        assert_eq!(mat_pow(&s.m, 3), CMat::zeros(3, 3));
        let a = alpha_frac(0.5, 20).unwrap();
        let p = psi_op(&a, &shift_op(8).unwrap()).unwrap();
        for k in 0..8 {
            assert!((p.op.m[(k, 0)].re - a.get(k)).abs() < 1e-16);
        }
    }

    #[test]
    fn spectral_map_examples() {
        let t = random_normal_contraction(8, &mut rng()).unwrap();
        let d0 = spectral_map_check(&ProbSeq::delta(0), &t).unwrap();
        assert!(d0.distance < 1e-13);
        let diag = DenseOp::diag(&[c(0.2, 0.1), c(-0.5, 0.0), c(0.0, 0.9)]).unwrap();
        let b = spectral_map_check(&bernoulli(0.4).unwrap(), &diag).unwrap();
        assert!(b.distance < 1e-15);
        let a = spectral_map_check(&alpha_frac(0.5, 1 << 14).unwrap(), &t).unwrap();
        assert!(a.passed(), "{a:?}");
    }

    #[test]
    fn kritt_scalar_oracle() {
        let t = DenseOp::diag(&[c(0.5, 0.0)]).unwrap();
        let opts = ScanOptions {
            angles: 64,
            ..ScanOptions::default()
        };
        let rep = kritt_equivalence_suite(&t, &[1.5], &FracOptions::default(), &opts).unwrap();
        let s = 1.0 - 0.5f64.powf(1.5);
        let want = opts
            .radii()
            .iter()
            .flat_map(|&r| (0..64).map(move |k| Complex64::from_polar(r, 2.0 * PI * k as f64 / 64.0)))
            .map(|z| (z - ONE).norm() / (z - s).norm())
            .fold(0.0, f64::max);
        assert!((rep.rows[0].constant - want).abs() < 1e-12);
        assert_eq!(rep.largest_passing, Some(1.5));
    }

    #[test]
    fn ritt_from_kreiss_identity() {
        let opts = ScanOptions {
            angles: 16,
            ..ScanOptions::default()
        };
        let r = ritt_from_kreiss_check(&DenseOp::identity(2), 0.5, &FracOptions::default(), &opts).unwrap();
        assert!(r.ritt.values.iter().all(|v| (v - 1.0).abs() < 1e-13));
    }

    #[test]
    fn matrix_json_round_trip() {
        let t = random_normal_contraction(3, &mut rng()).unwrap();
        let back = DenseOp::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert!(DenseOp::from_json(&serde_json::json!([[[1.0, 0.0], [0.0, 0.0]]])).is_err());
    }

    #[test]
    fn psi_linearity_and_multiplicativity() {
        let t = random_normal_contraction(4, &mut rng()).unwrap();
        let f1 = bernoulli(0.3).unwrap();
        let f2 = crate::families::poisson(1.5, 0).unwrap();
        let mix = mixture(&[0.25, 0.75], &[f1.clone(), f2.clone()]).unwrap();
        let lhs = psi_op(&mix, &t).unwrap();
        let p1 = psi_op(&f1, &t).unwrap();
        let p2 = psi_op(&f2, &t).unwrap();
        let rhs = &p1.op.m * c(0.25, 0.0) + &p2.op.m * c(0.75, 0.0);
        assert!(dist(&lhs.op.m, &rhs) < 1e-14);

        let conv = f1.convolve(&f2, &ConvOptions::default());
        let prod = psi_op(&conv, &t).unwrap();
        assert!(dist(&prod.op.m, &(&p1.op.m * &p2.op.m)) <= prod.error + p1.error + p2.error + 1e-14);

        let z = TruncSeq::new(vec![c(0.0, 1.0), c(0.5, 0.0)], TailInfo::exact()).unwrap();
        let zz = convolve(&z, &z, &ConvOptions::default()).unwrap();
        let pz = psi_op(&z, &t).unwrap();
        assert!(dist(&psi_op(&zz, &t).unwrap().op.m, &(&pz.op.m * &pz.op.m)) < 1e-14);
    }
}
