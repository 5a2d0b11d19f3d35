//! Constructors for the probability families on ℤ⁺ used throughout the crate,
//! each with a certified truncation.
//!
//! Convention: `n` is the largest stored index, so a constructed sequence holds
//! `n + 1` coefficients.

use serde_json::{json, Map, Value};

use crate::error::{invalid, LabError, Result};
use crate::numeric::{gauss_legendre_on, KahanSum};
use crate::seq::{
    conv_real_tail, poisson_tail_bound, poisson_weight, ConvOptions, MonotoneTail, ProbSeq, Sequence, TailInfo,
};
use crate::special::{hurwitz_zeta, zeta};

const EPS: f64 = f64::EPSILON;

fn open_unit(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in (0, 1), got {x}")))
    }
}

fn min_len(n: usize, need: usize) -> Result<()> {
    if n >= need {
        Ok(())
    } else {
        Err(invalid("N", format!("must be at least {need}, got {n}")))
    }
}

fn monotone(coeff: f64, index: usize) -> MonotoneTail {
    MonotoneTail {
        coeff_bound: coeff,
        moment_bound: Some(coeff * index as f64),
    }
}

pub fn delta(m: usize) -> ProbSeq {
    ProbSeq::delta(m)
}

pub fn bernoulli(beta: f64) -> Result<ProbSeq> {
    open_unit("beta", beta)?;
    Ok(ProbSeq::new(vec![1.0 - beta, beta], TailInfo::exact())?.with_meta("bernoulli", json!({ "beta": beta })))
}

/// Poisson(s), stored up to index `max(n, ceil(s + 12√s + 25))`.
pub fn poisson(s: f64, n: usize) -> Result<ProbSeq> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(invalid("s", format!("must be positive and finite, got {s}")));
    }
    let top = n.max((s + 12.0 * s.sqrt() + 25.0).ceil() as usize);
    let mut coeffs = Vec::with_capacity(top + 1);
    let mut pe = KahanSum::new();
    for k in 0..=top {
        let p = poisson_weight(s, k);
        pe.add(p * (4.0 + p.ln().abs().min(800.0)) * EPS);
        coeffs.push(p);
    }
    let pe = pe.value();
    let next = poisson_weight(s, top + 1);
    let tail = TailInfo {
        bound: poisson_tail_bound(s, top) + pe,
        exact_len: top + 1,
        prefix_err: pe,
        // past the mode both p_k and k p_k decrease
        monotone: (top as f64 > s).then(|| monotone(next * (1.0 + 1e-12), top + 1)),
    };
    Ok(ProbSeq::new(coeffs, tail)?.with_meta("poisson", json!({ "s": s, "N": top })))
}

/// Coefficients `a_0..=a_{n+1}` of `1 − (1−w)^α` by the multiplicative recurrence
/// `a_1 = α`, `a_{k+1} = a_k (k − α)/(k + 1)`.
fn alpha_coeffs(alpha: f64, n: usize) -> Vec<f64> {
    let mut a = vec![0.0; n + 2];
    if n + 2 > 1 {
        a[1] = alpha;
    }
    for k in 1..=n {
        a[k + 1] = a[k] * (k as f64 - alpha) / (k as f64 + 1.0);
    }
    a
}

/// `A_α`, the coefficients of `1 − (1−w)^α`.
///
/// The omitted mass is exactly `Π_{j≤n} (1 − α/j) = (n+1) a_{n+1} / α`.
pub fn alpha_frac(alpha: f64, n: usize) -> Result<ProbSeq> {
    open_unit("alpha", alpha)?;
    min_len(n, 1)?;
    let mut a = alpha_coeffs(alpha, n);
    let next = a.pop().unwrap_or(0.0);
    // relative rounding of a_k is at most about 2k ulps
    let pe = a
        .iter()
        .enumerate()
        .map(|(k, &x)| x * (2 * k + 2) as f64 * EPS)
        .collect::<KahanSum>()
        .value();
    let rel = 1.0 + (2 * n + 6) as f64 * EPS;
    let tail_mass = next * (n + 1) as f64 / alpha * rel;
    let tail = TailInfo {
        bound: tail_mass + pe,
        exact_len: n + 1,
        prefix_err: pe,
        monotone: Some(monotone(next * rel, n + 1)),
    };
    Ok(ProbSeq::new(a, tail)?.with_meta("alpha_frac", json!({ "alpha": alpha, "N": n })))
}

/// Exact omitted mass of `A_α` truncated at index `n`.
pub fn alpha_frac_tail(alpha: f64, n: usize) -> f64 {
    (1..=n).map(|j| (1.0 - alpha / j as f64).ln()).sum::<f64>().exp()
}

/// `Z_α(k) = k^{-1-α} / ζ(1+α)` for `k ≥ 1`, `α ∈ (0, 1]`.
///
/// Tail bound `n^{-α} / (α ζ(1+α))` from the integral comparison.
pub fn zeta_family(alpha: f64, n: usize) -> Result<ProbSeq> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    min_len(n, 1)?;
    let z = zeta(1.0 + alpha);
    let mut coeffs = vec![0.0; n + 1];
    for (k, c) in coeffs.iter_mut().enumerate().skip(1) {
        *c = (k as f64).powf(-1.0 - alpha) / z;
    }
    let pe = 8.0 * EPS;
    let nf = n as f64;
    let next = (nf + 1.0).powf(-1.0 - alpha) / z * (1.0 + 4.0 * EPS);
    let tail = TailInfo {
        bound: nf.powf(-alpha) / (alpha * z) * (1.0 + 4.0 * EPS) + pe,
        exact_len: n + 1,
        prefix_err: pe,
        monotone: Some(monotone(next, n + 1)),
    };
    let family = if alpha == 1.0 { "zeta_one" } else { "zeta" };
    Ok(ProbSeq::new(coeffs, tail)?.with_meta(family, json!({ "alpha": alpha, "N": n })))
}

/// `Z_1(k) = k^{-2} / ζ(2)`.
pub fn zeta_one(n: usize) -> Result<ProbSeq> {
    zeta_family(1.0, n)
}

/// `F(k) = 1/(k(k−1))` for `k ≥ 2`; omitted mass exactly `1/n`.
pub fn counterexample_log(n: usize) -> Result<ProbSeq> {
    min_len(n, 3)?;
    let mut coeffs = vec![0.0; n + 1];
    for (k, c) in coeffs.iter_mut().enumerate().skip(2) {
        *c = 1.0 / (k as f64 * (k - 1) as f64);
    }
    let pe = 2.0 * EPS;
    let nf = n as f64;
    let tail = TailInfo {
        bound: (1.0 + 2.0 * EPS) / nf + pe,
        exact_len: n + 1,
        prefix_err: pe,
        monotone: Some(MonotoneTail {
            coeff_bound: (1.0 + 2.0 * EPS) / ((nf + 1.0) * nf),
            moment_bound: Some((1.0 + 2.0 * EPS) / nf),
        }),
    };
    Ok(ProbSeq::new(coeffs, tail)?.with_meta("counterexample_log", json!({ "N": n })))
}

pub const DEFAULT_QUAD_ORDER: usize = 32;
/// Largest tolerated per-coefficient change under order doubling.
pub const QUAD_TOL: f64 = 1e-10;

/// `B = ε^{-1} ∫_0^ε A_α dα`, coefficientwise Gauss–Legendre in `α`.
///
/// Each node runs the `A_α` recurrence over all indices. The rule of order
/// `quad_order` is compared against twice that order; the larger rule is
/// kept and the differences are charged to the error.
pub fn log_mix(eps: f64, n: usize, quad_order: usize) -> Result<ProbSeq> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1], got {eps}")));
    }
    if quad_order < 8 {
        return Err(invalid("quad_order", format!("must be at least 8, got {quad_order}")));
    }
    min_len(n, 1)?;
    let run = |order: usize| -> (Vec<f64>, f64) {
        let (nodes, weights) = gauss_legendre_on(order, 0.0, eps);
        let mut acc = vec![0.0; n + 2];
        let mut tail = 0.0;
        for (&alpha, &w) in nodes.iter().zip(&weights) {
            let wt = w / eps;
            let mut a = alpha;
            acc[1] += wt * a;
            for k in 1..=n {
                a *= (k as f64 - alpha) / (k as f64 + 1.0);
                acc[k + 1] += wt * a;
            }
            tail += wt * a * (n + 1) as f64 / alpha;
        }
        (acc, tail)
    };
    let (low, tail_low) = run(quad_order);
    let (mut high, tail_high) = run(2 * quad_order);
    let mut quad_err = KahanSum::new();
    let mut worst: f64 = 0.0;
    for (h, l) in high.iter().zip(&low) {
        let d = (h - l).abs();
        worst = worst.max(d);
        quad_err.add(d);
    }
    if worst > QUAD_TOL {
        return Err(LabError::Quadrature(format!(
            "order doubling {} -> {} changed a coefficient by {worst:.3e}",
            quad_order,
            2 * quad_order
        )));
    }
    let next = high.pop().unwrap_or(0.0);
    let rounding = high
        .iter()
        .enumerate()
        .map(|(k, &x)| x * (2 * k + 4) as f64 * EPS)
        .collect::<KahanSum>()
        .value();
    let pe = quad_err.value() + rounding;
    let tail_err = (tail_high - tail_low).abs();
    let next_bound = next * (1.0 + (2 * n + 6) as f64 * EPS) + worst;
    let tail = TailInfo {
        bound: tail_high * (1.0 + (2 * n + 6) as f64 * EPS) + tail_err + pe,
        exact_len: n + 1,
        prefix_err: pe,
        monotone: Some(monotone(next_bound, n + 1)),
    };
    Ok(ProbSeq::new(high, tail)?.with_meta(
        "log_mix",
        json!({ "epsilon": eps, "N": n, "quad_order": quad_order }),
    ))
}

/// Options for [`subordinate_prob`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubordOptions {
    pub conv: ConvOptions,
    /// Stop once the outer mass still to come, or the stored window mass of
    /// the current inner power, falls below this.
    pub eps_stop: f64,
}

impl Default for SubordOptions {
    fn default() -> Self {
        Self {
            conv: ConvOptions::default(),
            eps_stop: 1e-12,
        }
    }
}

/// `H = Σ_k outer(k) inner⁽ᵏ⁾` on the window `0..=n`.
///
/// Inner powers are carried only on the window. Since every term is
/// nonnegative and the true `H` has mass one, the ℓ¹ error is the stored
/// deficit plus twice the error on the window.
pub fn subordinate_prob(outer: &ProbSeq, inner: &ProbSeq, n: usize, opts: &SubordOptions) -> Result<ProbSeq> {
    let window = n + 1;
    let conv = opts.conv.with_cap(window);
    let exact = TailInfo::exact();
    let inner_coeffs = &inner.coeffs()[..inner.len().min(window)];
    let inner_tail = inner.tail();
    let inner_step_err = if inner_tail.exact_len >= window {
        inner_tail.prefix_err
    } else {
        inner_tail.bound
    };
    let (inner_l1, _) = inner.l1_norm();

    let mut acc = vec![0.0; window];
    let mut power = vec![1.0];
    let mut power_err = 0.0;
    let mut window_err = KahanSum::new();
    let mut used = KahanSum::new();
    let mut k = 0usize;
    loop {
        let weight = outer.get(k);
        if weight > 0.0 {
            for (h, p) in acc.iter_mut().zip(&power) {
                *h += weight * p;
            }
            window_err.add(weight * power_err);
        }
        used.add(weight);
        k += 1;
        let outer_err = if k <= outer.tail().exact_len {
            outer.tail().prefix_err
        } else {
            outer.tail().bound
        };
        let rest_outer = (1.0 - used.value()).max(0.0) + outer_err;
        if k >= outer.len() || rest_outer <= opts.eps_stop {
            window_err.add(rest_outer);
            break;
        }
        let (next, tail) = conv_real_tail(&power, &exact, inner_coeffs, &exact, &conv, true);
        power = next;
        power_err = power_err * inner_l1 + inner_step_err + tail.prefix_err;
        let stored: f64 = power.iter().sum();
        if stored < opts.eps_stop {
            // later powers carry no more window mass than this one
            window_err.add(rest_outer * (stored + power_err));
            break;
        }
    }
    let pe = window_err.value() + outer.tail().prefix_err + window as f64 * EPS;
    let mass: f64 = acc.iter().copied().collect::<KahanSum>().value();
    let tail = TailInfo {
        bound: (1.0 - mass).max(0.0) + 2.0 * pe,
        exact_len: window,
        prefix_err: pe,
        monotone: None,
    };
    Ok(ProbSeq::new(acc, tail)?.with_meta("subordinate", json!({ "N": n, "terms": k })))
}

/// `B_β = Σ_k A_β(k) B⁽ᵏ⁾` with `B` the logarithmic mixture.
pub fn log_mix_sub(eps: f64, beta: f64, n: usize, quad_order: usize, opts: &SubordOptions) -> Result<ProbSeq> {
    open_unit("beta", beta)?;
    let b = log_mix(eps, n, quad_order)?;
    let a = alpha_frac(beta, n)?;
    Ok(subordinate_prob(&a, &b, n, opts)?.with_meta(
        "log_mix_sub",
        json!({ "epsilon": eps, "beta": beta, "N": n, "quad_order": quad_order }),
    ))
}

/// `F(k) = Σ_j c_j k^{-1-α_j} + P(k)` for `k ≥ 1`, `F(0) = P(0)`.
///
/// `P` must have finite support inside the window. The total mass is checked
/// against one using the exact omitted power-law mass.
pub fn power_tail_mix(terms: &[(f64, f64)], perturbation: &[f64], n: usize) -> Result<ProbSeq> {
    if terms.is_empty() {
        return Err(invalid("terms", "need at least one (c, alpha) pair"));
    }
    min_len(n, 1)?;
    let mut prev = 0.0;
    for &(c, alpha) in terms {
        open_unit("alpha", alpha)?;
        if alpha <= prev {
            return Err(invalid("alpha", "exponents must be strictly increasing"));
        }
        prev = alpha;
        if !(c > 0.0) || !c.is_finite() {
            return Err(invalid("c", format!("must be positive, got {c}")));
        }
    }
    if perturbation.len() > n + 1 {
        return Err(invalid("perturbation", format!("support exceeds the window 0..={n}")));
    }
    let mut coeffs = vec![0.0; n + 1];
    for (k, c) in coeffs.iter_mut().enumerate() {
        let kf = k as f64;
        let power: f64 = if k == 0 {
            0.0
        } else {
            terms.iter().map(|&(c, a)| c * kf.powf(-1.0 - a)).sum()
        };
        *c = power + perturbation.get(k).copied().unwrap_or(0.0);
    }
    if let Some(index) = coeffs.iter().position(|&c| c < 0.0) {
        return Err(LabError::NegativeCoefficient {
            index,
            value: coeffs[index],
        });
    }
    let nf = n as f64;
    let exact_tail: f64 = terms.iter().map(|&(c, a)| c * hurwitz_zeta(1.0 + a, nf + 1.0)).sum();
    let stored = coeffs.iter().copied().collect::<KahanSum>().value();
    let total = stored + exact_tail;
    const MASS_TOL: f64 = 1e-10;
    if (total - 1.0).abs() > MASS_TOL {
        return Err(LabError::MassMismatch { mass: total, tol: MASS_TOL });
    }
    let pe = (4.0 * terms.len() as f64 + 4.0) * EPS + (total - 1.0).abs();
    let next: f64 = terms.iter().map(|&(c, a)| c * (nf + 1.0).powf(-1.0 - a)).sum();
    let tail = TailInfo {
        bound: terms.iter().map(|&(c, a)| c * nf.powf(-a) / a).sum::<f64>() * (1.0 + 8.0 * EPS) + pe,
        exact_len: n + 1,
        prefix_err: pe,
        monotone: Some(monotone(next * (1.0 + 8.0 * EPS), n + 1)),
    };
    let params = json!({
        "terms": terms.iter().map(|&(c, a)| json!([c, a])).collect::<Vec<_>>(),
        "perturbation": perturbation,
        "N": n,
    });
    Ok(ProbSeq::new(coeffs, tail)?.with_meta("power_tail_mix", params))
}

/// Convex combination `Σ w_i F_i`, computed coefficientwise.
pub fn mixture(weights: &[f64], components: &[ProbSeq]) -> Result<ProbSeq> {
    if weights.len() != components.len() || weights.is_empty() {
        return Err(invalid("weights", "need one weight per component"));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(invalid("weights", format!("must be nonnegative, got {w}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(invalid("weights", format!("must sum to 1, got {sum}")));
    }
    let len = components.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut coeffs = vec![0.0; len];
    let mut tail = TailInfo {
        bound: 0.0,
        exact_len: usize::MAX,
        prefix_err: 0.0,
        monotone: None,
    };
    for (&w, c) in weights.iter().zip(components) {
        for (acc, &x) in coeffs.iter_mut().zip(c.coeffs()) {
            *acc += w * x;
        }
        tail.bound += w * c.tail().bound;
        tail.prefix_err += w * c.tail().prefix_err;
        tail.exact_len = tail.exact_len.min(c.tail().exact_len);
    }
    let same_len = components.iter().all(|c| c.len() == len);
    if same_len && tail.exact_len == len {
        let mut total = MonotoneTail {
            coeff_bound: 0.0,
            moment_bound: Some(0.0),
        };
        let mut ok = true;
        for (&w, c) in weights.iter().zip(components) {
            match c.tail().monotone {
                Some(m) => {
                    total.coeff_bound += w * m.coeff_bound;
                    total.moment_bound = total.moment_bound.zip(m.moment_bound).map(|(a, b)| a + w * b);
                }
                None if c.tail().bound == 0.0 => {}
                None => ok = false,
            }
        }
        if ok {
            tail.monotone = Some(total);
        }
    }
    Ok(ProbSeq::new(coeffs, tail)?.with_meta("mixture", json!({ "weights": weights })))
}

/// Declarative description of a family, as read from experiment configs.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilySpec {
    Delta { m: usize },
    Bernoulli { beta: f64 },
    Poisson { s: f64, n: usize },
    AlphaFrac { alpha: f64, n: usize },
    Zeta { alpha: f64, n: usize },
    ZetaOne { n: usize },
    LogMix { epsilon: f64, n: usize, quad_order: usize },
    LogMixSub { epsilon: f64, beta: f64, n: usize, quad_order: usize },
    PowerTailMix { terms: Vec<(f64, f64)>, perturbation: Vec<f64>, n: usize },
    CounterexampleLog { n: usize },
    Mixture { weights: Vec<f64>, components: Vec<FamilySpec> },
    Subordinate { outer: Box<FamilySpec>, inner: Box<FamilySpec>, n: usize },
}

fn config_err(path: &str, message: impl std::fmt::Display) -> LabError {
    LabError::Config {
        line: None,
        message: format!("{path}: {message}"),
    }
}

/// Reads keys from a JSON object, remembering which ones were consumed.
struct Fields<'a> {
    obj: &'a Map<String, Value>,
    path: String,
    seen: Vec<&'static str>,
}

impl<'a> Fields<'a> {
    fn new(value: &'a Value, path: &str) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| config_err(path, "expected a JSON object"))?;
        Ok(Self {
            obj,
            path: path.to_string(),
            seen: Vec::new(),
        })
    }

    fn key_path(&self, key: &str) -> String {
        format!("{}.{}", self.path, key)
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.obj.get(key)
    }

    fn num(&mut self, key: &'static str) -> Result<f64> {
        let path = self.key_path(key);
        self.raw(key)
            .ok_or_else(|| config_err(&path, "missing"))?
            .as_f64()
            .ok_or_else(|| config_err(&path, "expected a number"))
    }

    fn uint(&mut self, key: &'static str) -> Result<usize> {
        let path = self.key_path(key);
        self.raw(key)
            .ok_or_else(|| config_err(&path, "missing"))?
            .as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| config_err(&path, "expected a nonnegative integer"))
    }

    fn uint_or(&mut self, key: &'static str, default: usize) -> Result<usize> {
        if self.obj.contains_key(key) {
            self.uint(key)
        } else {
            self.seen.push(key);
            Ok(default)
        }
    }

    fn nums(&mut self, key: &'static str) -> Result<Vec<f64>> {
        let path = self.key_path(key);
        let arr = self
            .raw(key)
            .ok_or_else(|| config_err(&path, "missing"))?
            .as_array()
            .ok_or_else(|| config_err(&path, "expected an array"))?;
        arr.iter()
            .enumerate()
            .map(|(i, v)| v.as_f64().ok_or_else(|| config_err(&format!("{path}[{i}]"), "expected a number")))
            .collect()
    }

    fn finish(self) -> Result<()> {
        for key in self.obj.keys() {
            if key != "family" && !self.seen.contains(&key.as_str()) {
                return Err(config_err(&format!("{}.{}", self.path, key), "unknown key"));
            }
        }
        Ok(())
    }
}

fn check_range(path: &str, x: f64, lo_open: f64, hi: f64, hi_closed: bool) -> Result<()> {
    let ok = x > lo_open && (x < hi || (hi_closed && x == hi));
    if ok {
        Ok(())
    } else {
        let close = if hi_closed { "]" } else { ")" };
        Err(config_err(path, format!("must lie in ({lo_open}, {hi}{close}, got {x}")))
    }
}

impl FamilySpec {
    /// Parses `{"family": "<kind>", ...params}`; unknown keys are rejected.
    pub fn from_json(value: &Value) -> Result<Self> {
        Self::parse_at(value, "family")
    }

    fn parse_at(value: &Value, path: &str) -> Result<Self> {
        let mut f = Fields::new(value, path)?;
        let kind = value
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| config_err(&format!("{path}.family"), "missing family name"))?;
        let p = |k: &str| format!("{path}.{k}");
        let spec = match kind {
            "delta" => FamilySpec::Delta { m: f.uint("m")? },
            "bernoulli" => {
                let beta = f.num("beta")?;
                check_range(&p("beta"), beta, 0.0, 1.0, false)?;
                FamilySpec::Bernoulli { beta }
            }
            "poisson" => {
                let s = f.num("s")?;
                if !(s > 0.0) {
                    return Err(config_err(&p("s"), format!("must be positive, got {s}")));
                }
                FamilySpec::Poisson { s, n: f.uint_or("N", 0)? }
            }
            "alpha_frac" => {
                let alpha = f.num("alpha")?;
                check_range(&p("alpha"), alpha, 0.0, 1.0, false)?;
                FamilySpec::AlphaFrac { alpha, n: f.uint("N")? }
            }
            "zeta" => {
                let alpha = f.num("alpha")?;
                check_range(&p("alpha"), alpha, 0.0, 1.0, true)?;
                FamilySpec::Zeta { alpha, n: f.uint("N")? }
            }
            "zeta_one" => FamilySpec::ZetaOne { n: f.uint("N")? },
            "log_mix" => {
                let epsilon = f.num("epsilon")?;
                check_range(&p("epsilon"), epsilon, 0.0, 1.0, true)?;
                FamilySpec::LogMix {
                    epsilon,
                    n: f.uint("N")?,
                    quad_order: f.uint_or("quad_order", DEFAULT_QUAD_ORDER)?,
                }
            }
            "log_mix_sub" => {
                let epsilon = f.num("epsilon")?;
                check_range(&p("epsilon"), epsilon, 0.0, 1.0, true)?;
                let beta = f.num("beta")?;
                check_range(&p("beta"), beta, 0.0, 1.0, false)?;
                FamilySpec::LogMixSub {
                    epsilon,
                    beta,
                    n: f.uint("N")?,
                    quad_order: f.uint_or("quad_order", DEFAULT_QUAD_ORDER)?,
                }
            }
            "power_tail_mix" => {
                let path_terms = p("terms");
                let raw = f
                    .raw("terms")
                    .and_then(Value::as_array)
                    .ok_or_else(|| config_err(&path_terms, "expected an array of [c, alpha] pairs"))?;
                let mut terms = Vec::new();
                for (i, t) in raw.iter().enumerate() {
                    let pair = t
                        .as_array()
                        .filter(|a| a.len() == 2)
                        .and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?)))
                        .ok_or_else(|| config_err(&format!("{path_terms}[{i}]"), "expected [c, alpha]"))?;
                    check_range(&format!("{path_terms}[{i}].alpha"), pair.1, 0.0, 1.0, false)?;
                    terms.push(pair);
                }
                let perturbation = if value.get("perturbation").is_some() {
                    f.nums("perturbation")?
                } else {
                    f.seen.push("perturbation");
                    Vec::new()
                };
                FamilySpec::PowerTailMix {
                    terms,
                    perturbation,
                    n: f.uint("N")?,
                }
            }
            "counterexample_log" => FamilySpec::CounterexampleLog { n: f.uint("N")? },
            "mixture" => {
                let weights = f.nums("weights")?;
                let path_c = p("components");
                let raw = f
                    .raw("components")
                    .and_then(Value::as_array)
                    .ok_or_else(|| config_err(&path_c, "expected an array of family objects"))?;
                let components = raw
                    .iter()
                    .enumerate()
                    .map(|(i, v)| Self::parse_at(v, &format!("{path_c}[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                if weights.len() != components.len() {
                    return Err(config_err(&p("weights"), "need one weight per component"));
                }
                FamilySpec::Mixture { weights, components }
            }
            "subordinate" => {
                let outer = f.raw("outer").ok_or_else(|| config_err(&p("outer"), "missing"))?;
                let inner = f.raw("inner").ok_or_else(|| config_err(&p("inner"), "missing"))?;
                FamilySpec::Subordinate {
                    outer: Box::new(Self::parse_at(outer, &p("outer"))?),
                    inner: Box::new(Self::parse_at(inner, &p("inner"))?),
                    n: f.uint("N")?,
                }
            }
            other => return Err(config_err(&p("family"), format!("unknown family `{other}`"))),
        };
        f.finish()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Value {
        match self {
            FamilySpec::Delta { m } => json!({ "family": "delta", "m": m }),
            FamilySpec::Bernoulli { beta } => json!({ "family": "bernoulli", "beta": beta }),
            FamilySpec::Poisson { s, n } => json!({ "family": "poisson", "s": s, "N": n }),
            FamilySpec::AlphaFrac { alpha, n } => json!({ "family": "alpha_frac", "alpha": alpha, "N": n }),
            FamilySpec::Zeta { alpha, n } => json!({ "family": "zeta", "alpha": alpha, "N": n }),
            FamilySpec::ZetaOne { n } => json!({ "family": "zeta_one", "N": n }),
            FamilySpec::LogMix { epsilon, n, quad_order } => {
                json!({ "family": "log_mix", "epsilon": epsilon, "N": n, "quad_order": quad_order })
            }
            FamilySpec::LogMixSub {
                epsilon,
                beta,
                n,
                quad_order,
            } => json!({
                "family": "log_mix_sub", "epsilon": epsilon, "beta": beta, "N": n, "quad_order": quad_order
            }),
            FamilySpec::PowerTailMix { terms, perturbation, n } => json!({
                "family": "power_tail_mix",
                "terms": terms.iter().map(|&(c, a)| json!([c, a])).collect::<Vec<_>>(),
                "perturbation": perturbation,
                "N": n,
            }),
            FamilySpec::CounterexampleLog { n } => json!({ "family": "counterexample_log", "N": n }),
            FamilySpec::Mixture { weights, components } => json!({
                "family": "mixture",
                "weights": weights,
                "components": components.iter().map(FamilySpec::to_json).collect::<Vec<_>>(),
            }),
            FamilySpec::Subordinate { outer, inner, n } => json!({
                "family": "subordinate", "outer": outer.to_json(), "inner": inner.to_json(), "N": n
            }),
        }
    }

    /// Short label used in file names and reports.
    pub fn label(&self) -> String {
        match self {
            FamilySpec::Delta { m } => format!("delta_{m}"),
            FamilySpec::Bernoulli { beta } => format!("bernoulli_{beta}"),
            FamilySpec::Poisson { s, .. } => format!("poisson_{s}"),
            FamilySpec::AlphaFrac { alpha, .. } => format!("alpha_frac_{alpha}"),
            FamilySpec::Zeta { alpha, .. } => format!("zeta_{alpha}"),
            FamilySpec::ZetaOne { .. } => "zeta_one".into(),
            FamilySpec::LogMix { epsilon, .. } => format!("log_mix_{epsilon}"),
            FamilySpec::LogMixSub { epsilon, beta, .. } => format!("log_mix_sub_{epsilon}_{beta}"),
            FamilySpec::PowerTailMix { terms, .. } => format!("power_tail_mix_{}", terms.len()),
            FamilySpec::CounterexampleLog { .. } => "counterexample_log".into(),
            FamilySpec::Mixture { components, .. } => format!("mixture_{}", components.len()),
            FamilySpec::Subordinate { .. } => "subordinate".into(),
        }
    }

    pub fn build(&self) -> Result<ProbSeq> {
        self.build_with(&SubordOptions::default())
    }

    pub fn build_with(&self, opts: &SubordOptions) -> Result<ProbSeq> {
        match self {
            FamilySpec::Delta { m } => Ok(delta(*m)),
            FamilySpec::Bernoulli { beta } => bernoulli(*beta),
            FamilySpec::Poisson { s, n } => poisson(*s, *n),
            FamilySpec::AlphaFrac { alpha, n } => alpha_frac(*alpha, *n),
            FamilySpec::Zeta { alpha, n } => zeta_family(*alpha, *n),
            FamilySpec::ZetaOne { n } => zeta_one(*n),
            FamilySpec::LogMix { epsilon, n, quad_order } => log_mix(*epsilon, *n, *quad_order),
            FamilySpec::LogMixSub {
                epsilon,
                beta,
                n,
                quad_order,
            } => log_mix_sub(*epsilon, *beta, *n, *quad_order, opts),
            FamilySpec::PowerTailMix { terms, perturbation, n } => power_tail_mix(terms, perturbation, *n),
            FamilySpec::CounterexampleLog { n } => counterexample_log(*n),
            FamilySpec::Mixture { weights, components } => {
                let built = components.iter().map(|c| c.build_with(opts)).collect::<Result<Vec<_>>>()?;
                mixture(weights, &built)
            }
            FamilySpec::Subordinate { outer, inner, n } => {
                subordinate_prob(&outer.build_with(opts)?, &inner.build_with(opts)?, *n, opts)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;
    use approx::assert_relative_eq;

    #[test]
    fn alpha_frac_first_coefficients() {
        let a = alpha_frac(0.3, 10).unwrap();
        assert_eq!(a.get(0), 0.0);
        assert_relative_eq!(a.get(1), 0.3);
        assert_relative_eq!(a.get(2), 0.3 * 0.7 / 2.0, epsilon = 1e-16);
    }

    #[test]
    fn alpha_frac_tail_is_exact() {
        for alpha in [0.25, 0.5, 0.75] {
            let n = 5000;
            let a = alpha_frac(alpha, n).unwrap();
            let deficit = 1.0 - a.mass();
            assert!((deficit - alpha_frac_tail(alpha, n)).abs() < 1e-12);
            assert!(deficit <= a.tail_bound());
            assert!(a.tail_bound() - deficit < 1e-10);
        }
    }

    #[test]
    fn alpha_frac_asymptotic_ratio() {
        let alpha = 0.5;
        let a = alpha_frac(alpha, 10_000).unwrap();
        let k = 10_000f64;
        let ratio = a.get(10_000) * k.powf(1.0 + alpha) * gamma(1.0 - alpha) / alpha;
        assert!((ratio - 1.0).abs() < 0.02);
    }

    #[test]
    fn alpha_frac_rejects_endpoints() {
        assert!(alpha_frac(0.0, 10).is_err());
        assert!(alpha_frac(1.0, 10).is_err());
    }

    #[test]
    fn zeta_family_values() {
        let z = zeta_family(0.5, 1000).unwrap();
        assert_eq!(z.get(0), 0.0);
        assert_relative_eq!(z.get(1), 1.0 / zeta(1.5), epsilon = 1e-15);
        assert!(1.0 - z.mass() <= z.tail_bound());
    }

    #[test]
    fn counterexample_values() {
        let f = counterexample_log(1000).unwrap();
        assert_relative_eq!(f.get(2), 0.5);
        assert!((f.mass() - (1.0 - 1.0 / 1000.0)).abs() < 1e-13);
    }

    #[test]
    fn log_mix_first_coefficient() {
        for eps in [0.3, 1.0] {
            let b = log_mix(eps, 200, 32).unwrap();
            assert_eq!(b.get(0), 0.0);
            assert_relative_eq!(b.get(1), eps / 2.0, epsilon = 1e-15);
            assert!(1.0 - b.mass() <= b.tail_bound());
        }
    }

    #[test]
    fn subordinate_with_trivial_factors() {
        let g = alpha_frac(0.5, 64).unwrap();
        let opts = SubordOptions::default();
        let h = subordinate_prob(&ProbSeq::delta(1), &g, 64, &opts).unwrap();
        for k in 0..=64 {
            assert!((h.get(k) - g.get(k)).abs() < 1e-16);
        }
        let h = subordinate_prob(&g, &ProbSeq::delta(1), 64, &opts).unwrap();
        for k in 0..=64 {
            assert!((h.get(k) - g.get(k)).abs() < 1e-16);
        }
    }

    #[test]
    fn mixture_is_exact_convex_combination() {
        let a = zeta_family(0.3, 100).unwrap();
        let b = zeta_family(0.7, 100).unwrap();
        let m = mixture(&[0.25, 0.75], &[a.clone(), b.clone()]).unwrap();
        for k in 0..=100 {
            assert_eq!(m.get(k), 0.25 * a.get(k) + 0.75 * b.get(k));
        }
    }

    #[test]
    fn power_tail_mix_reproduces_zeta() {
        let z = zeta_family(0.5, 500).unwrap();
        let p = power_tail_mix(&[(1.0 / zeta(1.5), 0.5)], &[], 500).unwrap();
        for k in 0..=500 {
            assert_relative_eq!(p.get(k), z.get(k), max_relative = 1e-14);
        }
    }

    #[test]
    fn power_tail_mix_rejects_bad_mass() {
        assert!(matches!(
            power_tail_mix(&[(0.5, 0.5)], &[], 100),
            Err(LabError::MassMismatch { .. })
        ));
        assert!(matches!(
            power_tail_mix(&[(1.0 / zeta(1.5), 0.5)], &[0.1, -0.9], 100),
            Err(LabError::NegativeCoefficient { index: 1, .. })
        ));
    }

    #[test]
    fn spec_parsing_round_trip_and_errors() {
        let v = json!({ "family": "alpha_frac", "alpha": 0.5, "N": 65536 });
        let spec = FamilySpec::from_json(&v).unwrap();
        assert_eq!(spec, FamilySpec::AlphaFrac { alpha: 0.5, n: 65536 });
        assert_eq!(FamilySpec::from_json(&spec.to_json()).unwrap(), spec);

        let bad = json!({ "family": "alpha_frac", "alpha": 1.5, "N": 10 });
        let msg = FamilySpec::from_json(&bad).unwrap_err().to_string();
        assert!(msg.contains("alpha"), "{msg}");

        let unknown = json!({ "family": "bernoulli", "beta": 0.5, "gamma": 1 });
        let msg = FamilySpec::from_json(&unknown).unwrap_err().to_string();
        assert!(msg.contains("gamma"), "{msg}");
    }
}
