//! Fourier transforms on `[-π, π]`, generating functions on the closed disc,
//! sector-angle reports and finite-grid versions of the sufficient Fourier
//! conditions for membership in the Ritt class.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numeric::{fit_line, fit_loglog, geometric_xi_grid, KahanComplex, KahanSum};
pub use crate::special::Approx;
use crate::seq::{CoeffView, Sequence, TailInfo};

const EPS: f64 = f64::EPSILON;

/// `Σ c_k w^k` with `w = r e^{iθ}`, plus `Σ|c_k|` and `Σ k|c_k|` for the rounding budget.
fn series_polar(view: CoeffView<'_>, r: f64, theta: f64) -> (Complex64, f64, f64) {
    let mut acc = KahanComplex::new();
    let mut l1 = KahanSum::new();
    let mut m1 = KahanSum::new();
    let log_r = if r > 0.0 { r.ln() } else { f64::NEG_INFINITY };
    for k in 0..view.len() {
        let c = view.get(k);
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let kf = k as f64;
        let (s, co) = (kf * theta).sin_cos();
        let rk = if k == 0 { 1.0 } else if r == 1.0 { 1.0 } else { (kf * log_r).exp() };
        acc.add(c * Complex64::new(co * rk, s * rk));
        let a = c.norm();
        l1.add(a);
        m1.add(kf * a);
    }
    (acc.value(), l1.value(), m1.value())
}

/// Truncation error of the series at a point of modulus `r` where `|1 - w| = gap`.
fn truncation_error(tail: &TailInfo, len: usize, r: f64, gap: f64) -> f64 {
    if tail.exact_len == crate::seq::EXACT_EVERYWHERE {
        return tail.prefix_err;
    }
    let plain = tail.bound * r.powf(tail.exact_len as f64);
    let abel = match tail.monotone {
        Some(m) if tail.exact_len == len && gap > 0.0 => 2.0 * m.coeff_bound * r.powf(len as f64) / gap,
        _ => f64::INFINITY,
    };
    tail.prefix_err + plain.min(abel)
}

fn eval_polar<S: Sequence + ?Sized>(f: &S, r: f64, theta: f64) -> Approx {
    let (value, l1, m1) = series_polar(f.view(), r, theta);
    let w = Complex64::from_polar(r, theta);
    let gap = (Complex64::new(1.0, 0.0) - w).norm();
    let log_r = if r > 0.0 { -r.ln() } else { 0.0 };
    let rounding = EPS * (8.0 * l1 + (theta.abs() + log_r) * m1);
    Approx {
        value,
        error: truncation_error(f.tail(), f.len(), r, gap) + rounding,
    }
}

/// `F̂(ξ) = Σ F(k) e^{-ikξ}` with an absolute error bound.
pub fn fourier<S: Sequence + ?Sized>(f: &S, xi: f64) -> Approx {
    eval_polar(f, 1.0, -xi)
}

/// `φ_F(w) = Σ F(k) wᵏ` on the closed unit disc.
pub fn gen_fn<S: Sequence + ?Sized>(f: &S, w: Complex64) -> Result<Approx> {
    let mut r = w.norm();
    if r > 1.0 + 1e-12 {
        return Err(invalid("w", format!("|w| = {r} lies outside the closed unit disc")));
    }
    if (r - 1.0).abs() <= 4.0 * EPS {
        r = 1.0;
    }
    Ok(eval_polar(f, r, w.arg()))
}

/// `∂_ξ F̂(ξ) = Σ (-ik) F(k) e^{-ikξ}`.
///
/// The omitted part is bounded only when the tail carries a moment bound
/// (`k F(k)` nonincreasing past the truncation); otherwise `certified` is false
/// and the error covers the stored prefix alone.
pub fn fourier_deriv<S: Sequence + ?Sized>(f: &S, xi: f64) -> (Approx, bool) {
    let view = f.view();
    let tail = f.tail();
    let mut acc = KahanComplex::new();
    let mut m1 = KahanSum::new();
    let mut m2 = KahanSum::new();
    for k in 1..view.len() {
        let c = view.get(k);
        if c.re == 0.0 && c.im == 0.0 {
            continue;
        }
        let kf = k as f64;
        let (s, co) = (kf * xi).sin_cos();
        // -ik e^{-ikξ}
        acc.add(c * Complex64::new(-kf * s, -kf * co));
        let a = c.norm();
        m1.add(kf * a);
        m2.add(kf * kf * a);
    }
    let rounding = EPS * (8.0 * m1.value() + xi.abs() * m2.value());
    let len = view.len();
    let prefix = tail.prefix_err * (len.min(tail.exact_len) as f64);
    let (tail_err, certified) = if tail.exact_len == crate::seq::EXACT_EVERYWHERE {
        (0.0, true)
    } else {
        match tail.monotone.and_then(|m| m.moment_bound) {
            Some(mb) if tail.exact_len == len && xi != 0.0 => (mb / (0.5 * xi).sin().abs(), true),
            _ => (0.0, false),
        }
    };
    (
        Approx {
            value: acc.value(),
            error: prefix + tail_err + rounding,
        },
        certified,
    )
}

/// One evaluation of `1 − F̂(ξ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorPoint {
    pub xi: f64,
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    /// `|Arg(1 − F̂(ξ))|`, in `[0, π]`.
    pub arg: f64,
    pub eval_error: f64,
    /// Bound on the error of `arg`: `asin(eval_error / modulus)`, or `π` when indeterminate.
    pub arg_error: f64,
    /// False when the modulus does not exceed the evaluation error.
    pub determinate: bool,
}

impl SectorPoint {
    fn at<S: Sequence + ?Sized>(f: &S, xi: f64) -> Self {
        let v = fourier(f, xi);
        let z = Complex64::new(1.0, 0.0) - v.value;
        let modulus = z.norm();
        Self {
            xi,
            re: z.re,
            im: z.im,
            modulus,
            arg: z.arg().abs(),
            eval_error: v.error,
            arg_error: if modulus > v.error { (v.error / modulus).asin() } else { PI },
            determinate: modulus > v.error,
        }
    }
}

/// Sector data for `1 − F̂` on a grid and on a geometric sequence shrinking to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorReport {
    pub points: Vec<SectorPoint>,
    /// Largest `|Arg|` over the determinate grid points.
    pub sup_angle: f64,
    /// Evaluations at `ξ = π 2^{-j}`, `j = 1..=levels`.
    pub near_zero: Vec<SectorPoint>,
    /// Extrapolated `lim_{ξ→0} |Arg(1 − F̂(ξ))|`.
    pub limit_estimate: Option<f64>,
}

pub const NEAR_ZERO_LEVELS: usize = 40;

/// Largest argument error admitted into the limit fit.
pub const LIMIT_ARG_TOL: f64 = 0.05;

/// Fits `arg = a + b / ln(1/ξ)` to the smallest points with `ξ ≤ 0.05` whose
/// argument is known to within [`LIMIT_ARG_TOL`], and returns `a`. The
/// logarithmic variable captures both algebraic and logarithmic approach rates.
fn extrapolate_limit(points: &[SectorPoint]) -> Option<f64> {
    let usable: Vec<&SectorPoint> = points
        .iter()
        .filter(|p| p.arg_error <= LIMIT_ARG_TOL && p.xi <= 0.05)
        .collect();
    let last = &usable[usable.len().saturating_sub(8)..];
    if last.len() < 3 {
        return usable.last().map(|p| p.arg);
    }
    let xs: Vec<f64> = last.iter().map(|p| 1.0 / (1.0 / p.xi).ln()).collect();
    let ys: Vec<f64> = last.iter().map(|p| p.arg).collect();
    fit_line(&xs, &ys).map(|fit| fit.intercept.clamp(0.0, PI))
}

pub fn sector_report<S: Sequence + ?Sized>(f: &S, grid: &[f64]) -> SectorReport {
    sector_report_with_levels(f, grid, NEAR_ZERO_LEVELS)
}

pub fn sector_report_with_levels<S: Sequence + ?Sized>(f: &S, grid: &[f64], levels: usize) -> SectorReport {
    let points: Vec<SectorPoint> = grid
        .iter()
        .filter(|xi| xi.abs() > 0.0)
        .map(|&xi| SectorPoint::at(f, xi))
        .collect();
    let sup_angle = points
        .iter()
        .filter(|p| p.determinate)
        .map(|p| p.arg)
        .fold(0.0, f64::max);
    let near_zero: Vec<SectorPoint> = geometric_xi_grid(levels)
        .into_iter()
        .map(|xi| SectorPoint::at(f, xi))
        .collect();
    let limit_estimate = extrapolate_limit(&near_zero);
    SectorReport {
        points,
        sup_angle,
        near_zero,
        limit_estimate,
    }
}

impl SectorReport {
    /// CSV with columns `xi,re,im,modulus,arg,eval_error`; near-zero rows follow the grid rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "xi,re,im,modulus,arg,eval_error")?;
        for p in self.points.iter().chain(&self.near_zero) {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.xi, p.re, p.im, p.modulus, p.arg, p.eval_error
            )?;
        }
        Ok(())
    }
}

/// Uniform grid of `n` points in `(0, π]`.
pub fn uniform_positive_grid(n: usize) -> Vec<f64> {
    (1..=n).map(|j| PI * j as f64 / n as f64).collect()
}

/// Outcome of a finite-grid inequality check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    /// Best constant valid on the grid (`ε` for the lower bound, `c` for the derivative bound).
    pub constant: Option<f64>,
    /// Grid point where the inequality breaks, if any.
    pub failure: Option<f64>,
    /// Log-log slope of the ratio against `ξ` over the small-`ξ` half of the grid.
    pub trend_slope: Option<f64>,
    /// False when some error term could not be bounded.
    pub certified: bool,
    /// `(ξ, ratio)` per grid point.
    pub ratios: Vec<(f64, f64)>,
}

impl GridCheck {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Slope threshold separating a ratio that settles from one that drifts
/// to `0` or `∞` as `ξ → 0`.
pub const TREND_TOL: f64 = 0.1;

fn small_half_slope(ratios: &[(f64, f64)]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = ratios.iter().copied().filter(|(_, r)| *r > 0.0).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let half = &pts[..pts.len().div_ceil(2)];
    let (xs, ys): (Vec<f64>, Vec<f64>) = half.iter().copied().unzip();
    fit_loglog(&xs, &ys).map(|f| f.slope)
}

/// Checks `1 − Re F̂(ξ) ≥ ε|ξ|^α` on `grid`, using the certified lower value
/// `1 − Re F̂ − error` at each point.
pub fn check_real_lower<S: Sequence + ?Sized>(f: &S, alpha: f64, grid: &[f64]) -> GridCheck {
    let mut ratios = Vec::with_capacity(grid.len());
    let mut failure = None;
    for &xi in grid.iter().filter(|xi| xi.abs() > 0.0) {
        let v = fourier(f, xi);
        let lower = 1.0 - v.value.re - v.error;
        let ratio = lower / xi.abs().powf(alpha);
        if ratio <= 0.0 && failure.is_none() {
            failure = Some(xi);
        }
        ratios.push((xi, ratio));
    }
    let trend_slope = small_half_slope(&ratios);
    if failure.is_none() && trend_slope.is_some_and(|s| s > TREND_TOL) {
        failure = ratios.iter().map(|r| r.0).min_by(|a, b| a.abs().total_cmp(&b.abs()));
    }
    let constant = if failure.is_none() {
        ratios.iter().map(|r| r.1).reduce(f64::min)
    } else {
        None
    };
    GridCheck {
        constant,
        failure,
        trend_slope,
        certified: true,
        ratios,
    }
}

/// Checks `|∂_ξ F̂(ξ)| ≤ c|ξ|^{α−1}` on `grid`, using `|∂F̂| + error` at each point.
pub fn check_deriv_bound<S: Sequence + ?Sized>(f: &S, alpha: f64, grid: &[f64]) -> GridCheck {
    let mut ratios = Vec::with_capacity(grid.len());
    let mut certified = true;
    for &xi in grid.iter().filter(|xi| xi.abs() > 0.0) {
        let (v, ok) = fourier_deriv(f, xi);
        certified &= ok;
        let upper = v.value.norm() + v.error;
        ratios.push((xi, upper / xi.abs().powf(alpha - 1.0)));
    }
    let trend_slope = small_half_slope(&ratios);
    let failure = if trend_slope.is_some_and(|s| s < -TREND_TOL) || ratios.iter().any(|r| !r.1.is_finite()) {
        ratios.iter().map(|r| r.0).min_by(|a, b| a.abs().total_cmp(&b.abs()))
    } else {
        None
    };
    let constant = if failure.is_none() {
        ratios.iter().map(|r| r.1).reduce(f64::max)
    } else {
        None
    };
    GridCheck {
        constant,
        failure,
        trend_slope,
        certified,
        ratios,
    }
}

/// Principal-branch `(1 − w)^α`, with `0^α = 0`.
pub fn one_minus_pow(w: Complex64, alpha: f64) -> Complex64 {
    let z = Complex64::new(1.0, 0.0) - w;
    if z.norm() == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    (z.ln() * alpha).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq::{ProbSeq, TailInfo, TruncSeq};

    #[test]
    fn fourier_at_zero_is_mass() {
        let f = ProbSeq::new(vec![0.2, 0.3, 0.4], TailInfo::truncated(3, 0.1)).unwrap();
        let v = fourier(&f, 0.0);
        assert!((v.value.re - 0.9).abs() < 1e-15);
        assert!((1.0 - v.value.re).abs() <= v.error + 1e-15);
    }

    #[test]
    fn fourier_of_shift() {
        let d = ProbSeq::delta(1);
        for xi in [-3.0, -0.5, 0.1, 2.0] {
            let v = fourier(&d, xi);
            assert!((v.value - Complex64::from_polar(1.0, -xi)).norm() < 1e-15);
        }
    }

    #[test]
    fn gen_fn_rejects_outside_disc() {
        let d = ProbSeq::delta(1);
        assert!(gen_fn(&d, Complex64::new(1.1, 0.0)).is_err());
        assert!(gen_fn(&d, Complex64::new(1.0, 0.0)).is_ok());
    }

    #[test]
    fn gen_fn_on_circle_equals_fourier() {
        let f = TruncSeq::from_real(&[0.1, 0.25, 0.3, 0.05, 0.3], 0.0).unwrap();
        for xi in [0.3, 1.0, 2.5] {
            let a = fourier(&f, xi);
            let b = gen_fn(&f, Complex64::from_polar(1.0, -xi)).unwrap();
            assert!((a.value - b.value).norm() < 1e-15);
        }
    }

    #[test]
    fn deriv_of_shift_meets_boundary_constant() {
        let d = ProbSeq::delta(1);
        let grid = uniform_positive_grid(256);
        let chk = check_deriv_bound(&d, 0.5, &grid);
        assert!(chk.passed());
        assert!((chk.constant.unwrap() - PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sector_args_lie_in_range() {
        let f = ProbSeq::new(vec![0.5, 0.5], TailInfo::exact()).unwrap();
        let rep = sector_report(&f, &uniform_positive_grid(64));
        for p in rep.points.iter().chain(&rep.near_zero) {
            assert!((0.0..=PI).contains(&p.arg));
        }
        // Bernoulli: 1 − F̂ = (1 − e^{-iξ})/2, argument (π − ξ)/2
        let limit = rep.limit_estimate.unwrap();
        assert!((limit - PI / 2.0).abs() < 1e-6);
    }
}
