//! Riemann zeta, polylogarithm and the gamma function at the arguments the
//! families and transform checks need.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::numeric::KahanComplex;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// `B_{2j} / (2j)!` for `j = 1..=12`.
const BERNOULLI_OVER_FACTORIAL: [f64; 12] = [
    1.0 / 6.0 / 2.0,
    -1.0 / 30.0 / 24.0,
    1.0 / 42.0 / 720.0,
    -1.0 / 30.0 / 40320.0,
    5.0 / 66.0 / 3628800.0,
    -691.0 / 2730.0 / 479001600.0,
    7.0 / 6.0 / 87178291200.0,
    -3617.0 / 510.0 / 20922789888000.0,
    43867.0 / 798.0 / 6402373705728000.0,
    -174611.0 / 330.0 / 2432902008176640000.0,
    854513.0 / 138.0 / 1.1240007277776077e21,
    -236364091.0 / 2730.0 / 6.204484017332394e23,
];

/// Riemann zeta function for real `s != 1`.
///
/// Euler–Maclaurin with 32 explicit terms and 12 Bernoulli corrections for
/// `s >= 0`; the reflection formula for negative `s`.
pub fn zeta(s: f64) -> f64 {
    if s == 1.0 {
        return f64::INFINITY;
    }
    if s < 0.0 {
        // zeta(s) = 2^s pi^(s-1) sin(pi s / 2) Gamma(1-s) zeta(1-s)
        if s == s.floor() && s < 0.0 && (s as i64) % 2 == 0 {
            return 0.0;
        }
        let t = 1.0 - s;
        return 2f64.powf(s) * PI.powf(s - 1.0) * (PI * s / 2.0).sin() * gamma(t) * zeta(t);
    }
    let n = 32usize;
    let nf = n as f64;
    let mut acc = 0.0;
    for k in (1..n).rev() {
        acc += (k as f64).powf(-s);
    }
    acc += nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    // rising factorial s(s+1)...(s+2j-2) times n^{-s-2j+1}
    let mut rising = s;
    let mut npow = nf.powf(-s - 1.0);
    for (j, c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        acc += c * rising * npow;
        let a = s + 2.0 * j as f64 + 1.0;
        rising *= a * (a + 1.0);
        npow /= nf * nf;
    }
    acc
}

/// Hurwitz zeta `Σ_{k≥0} (k+a)^{-s}` for `s > 1`, `a > 0`, by Euler–Maclaurin
/// after 32 explicit terms.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    let n = 32usize;
    let mut acc = 0.0;
    for k in (0..n).rev() {
        acc += (k as f64 + a).powf(-s);
    }
    let x = n as f64 + a;
    acc += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    let mut rising = s;
    let mut xpow = x.powf(-s - 1.0);
    for (j, c) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        acc += c * rising * xpow;
        let b = s + 2.0 * j as f64 + 1.0;
        rising *= b * (b + 1.0);
        xpow /= x * x;
    }
    acc
}

/// A value together with an absolute error bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Approx {
    pub value: Complex64,
    pub error: f64,
}

/// `w^k` for a unit-modulus or interior `w`, via `exp(k Log w)`.
#[inline]
fn cpow_int(w: Complex64, log_w: Complex64, k: usize) -> Complex64 {
    if w == Complex64::new(0.0, 0.0) {
        return if k == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
    }
    (log_w * k as f64).exp()
}

/// Reference polylogarithm `Li_s(w) = Σ_{k≥1} k^{-s} w^k` on the closed unit disc.
///
/// The series is summed directly up to an index `m`; the remainder is
/// resolved by six rounds of summation by parts, whose residual is bounded by
/// the Abel estimate `2 |∇⁶b_{m+6}| |w|^{m+6} / |1-w|⁷`. `m` doubles until the
/// bound drops below `tol`.
pub fn polylog_ref(s: f64, w: Complex64, tol: f64) -> Result<Approx> {
    if !(s > 1.0) {
        return Err(invalid("s", format!("polylog reference needs s > 1, got {s}")));
    }
    let r = w.norm();
    if r > 1.0 + 1e-12 {
        return Err(invalid("w", format!("|w| = {r} lies outside the closed unit disc")));
    }
    if r == 0.0 {
        return Ok(Approx { value: Complex64::new(0.0, 0.0), error: 0.0 });
    }
    let one = Complex64::new(1.0, 0.0);
    let gap = (one - w).norm();
    if gap < 1e-300 {
        return Ok(Approx { value: Complex64::new(zeta(s), 0.0), error: 1e-15 * zeta(s) });
    }
    const LEVELS: usize = 6;
    let log_w = w.ln();
    let b = |k: usize| (k as f64).powf(-s);
    let mut m = 256usize;
    loop {
        // ∇^LEVELS b at m+LEVELS, |.| decreasing in k for a completely monotone b
        let nabla_p = nabla(&b, m + LEVELS, LEVELS).abs();
        let bound = 2.0 * nabla_p * r.powf((m + LEVELS) as f64) / gap.powi(LEVELS as i32 + 1);
        if bound <= tol || m >= 1 << 24 {
            let mut acc = KahanComplex::new();
            for k in 1..m {
                acc.add(cpow_int(w, log_w, k) * b(k));
            }
            let inv = one / (one - w);
            let mut factor = inv;
            for j in 0..LEVELS {
                let term = cpow_int(w, log_w, m + j) * nabla(&b, m + j, j) * factor;
                acc.add(term);
                factor *= inv;
            }
            let rounding = 1e-15 * (zeta(s) + 1.0);
            return Ok(Approx { value: acc.value(), error: bound + rounding });
        }
        m *= 2;
    }
}

/// Backward difference `∇^j b` evaluated at index `k` (needs `k >= j + 1`).
fn nabla(b: &impl Fn(usize) -> f64, k: usize, j: usize) -> f64 {
    let mut binom = 1.0;
    let mut acc = 0.0;
    for i in 0..=j {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * binom * b(k - i);
        binom = binom * (j - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Expansion of `Li_s(e^μ)` about `μ = 0` for non-integer `s > 1`:
/// `ζ(s) + Γ(1-s)(-μ)^{s-1} + Σ_{n≥1} ζ(s-n) μⁿ / n!`, summed until the
/// terms fall below `1e-15` relative to the running value.
pub fn polylog_near_one(s: f64, mu: Complex64) -> Result<Complex64> {
    if !(s > 1.0) || s == s.floor() {
        return Err(invalid("s", format!("expansion needs non-integer s > 1, got {s}")));
    }
    if mu.norm() >= 2.0 * PI {
        return Err(invalid("mu", format!("|mu| = {} outside the expansion radius", mu.norm())));
    }
    let mut total = Complex64::new(zeta(s), 0.0) + gamma(1.0 - s) * (-mu).powf(s - 1.0);
    let mut mu_pow_over_fact = Complex64::new(1.0, 0.0);
    for n in 1..400 {
        mu_pow_over_fact = mu_pow_over_fact * mu / n as f64;
        let term = mu_pow_over_fact * zeta(s - n as f64);
        total += term;
        if term.norm() < 1e-16 * total.norm().max(1e-300) && n > 4 {
            break;
        }
    }
    Ok(total)
}

/// `b_α = -Γ(-α) / ζ(1+α)`, the leading coefficient of `1 - Ẑ_α(ξ)` near zero.
pub fn zeta_family_leading_coefficient(alpha: f64) -> f64 {
    -gamma(-alpha) / zeta(1.0 + alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zeta_known_values() {
        assert_relative_eq!(zeta(2.0), PI * PI / 6.0, epsilon = 1e-15);
        assert_relative_eq!(zeta(4.0), PI.powi(4) / 90.0, epsilon = 1e-15);
        assert_relative_eq!(zeta(1.5), 2.612_375_348_685_488, epsilon = 1e-14);
        assert_relative_eq!(zeta(0.0), -0.5, epsilon = 1e-14);
        assert_relative_eq!(zeta(-1.0), -1.0 / 12.0, epsilon = 1e-14);
        assert_relative_eq!(zeta(0.5), -1.460_354_508_809_586_8, epsilon = 1e-13);
        assert_eq!(zeta(-2.0), 0.0);
    }

    #[test]
    fn zeta_against_brute_force_partial_sums() {
        // s = 3: the tail after K terms is below 1/(2K^2)
        let k = 200_000usize;
        let brute: f64 = (1..=k).rev().map(|j| (j as f64).powi(-3)).sum::<f64>();
        assert!((zeta(3.0) - brute - 0.5 / (k as f64).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn hurwitz_matches_zeta_minus_partial_sum() {
        let partial: f64 = (1..=100).map(|k| (k as f64).powf(-1.5)).sum();
        assert!((hurwitz_zeta(1.5, 101.0) - (zeta(1.5) - partial)).abs() < 1e-13);
        assert!((hurwitz_zeta(2.0, 1.0) - PI * PI / 6.0).abs() < 1e-15);
    }

    #[test]
    fn polylog_trivial_points() {
        let z = polylog_ref(1.5, Complex64::new(0.0, 0.0), 1e-14).unwrap();
        assert_eq!(z.value, Complex64::new(0.0, 0.0));
        let one = polylog_ref(1.5, Complex64::new(1.0, 0.0), 1e-14).unwrap();
        assert_relative_eq!(one.value.re, zeta(1.5), epsilon = 1e-14);
    }

    #[test]
    fn polylog_interior_matches_plain_series() {
        let w = Complex64::new(0.3, -0.4);
        let got = polylog_ref(1.7, w, 1e-15).unwrap();
        let mut want = Complex64::new(0.0, 0.0);
        let mut wk = Complex64::new(1.0, 0.0);
        for k in 1..400 {
            wk *= w;
            want += wk * (k as f64).powf(-1.7);
        }
        assert!((got.value - want).norm() < 1e-14);
    }

    #[test]
    fn polylog_order_two_on_circle_matches_closed_form() {
        // Re Li_2(e^{iθ}) = π²/6 - θ(2π - θ)/4 for θ ∈ [0, 2π]
        let theta: f64 = 0.3;
        let w = Complex64::from_polar(1.0, theta);
        let got = polylog_ref(2.0, w, 1e-13).unwrap();
        let want = PI * PI / 6.0 - theta * (2.0 * PI - theta) / 4.0;
        assert!((got.value.re - want).abs() < 1e-12, "{} vs {}", got.value.re, want);
        assert!(got.error < 1e-12);
    }

    #[test]
    fn expansion_agrees_with_reference_series() {
        for xi in [0.05, 0.1, 0.2] {
            let w = Complex64::from_polar(1.0, -xi);
            let direct = polylog_ref(1.5, w, 1e-13).unwrap();
            let expanded = polylog_near_one(1.5, Complex64::new(0.0, -xi)).unwrap();
            assert!((direct.value - expanded).norm() < 1e-10, "xi={xi}");
        }
    }

    #[test]
    fn leading_coefficient_is_positive() {
        for a in [0.25, 0.5, 0.75] {
            assert!(zeta_family_leading_coefficient(a) > 0.0);
        }
    }
}
