//! Truncated sequences on the nonnegative integers and their convolution algebra.
//!
//! A sequence is stored as a finite prefix of coefficients together with a
//! [`TailInfo`] describing how far the stored prefix may be from the true
//! (infinite) sequence in ℓ¹. Every operation propagates that description, so
//! statistics computed downstream come with intervals rather than bare values.
//!
//! Error model: with `x` the true sequence and `c` the stored prefix extended
//! by zeros, `‖x − c‖₁ ≤ bound`, and the part of `x − c` supported on indices
//! below `exact_len` has ℓ¹ norm at most `prefix_err`.

use std::cell::RefCell;
use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::RealFftPlanner;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::numeric::{fit_loglog, kahan_sum, KahanSum};
use crate::special::ln_gamma;

/// Indices below this value carry no truncation error: the whole sequence is exact.
pub const EXACT_EVERYWHERE: usize = usize::MAX;

/// Default length cap for convolution results.
pub const DEFAULT_CAP: usize = 1 << 20;

/// Shape of the omitted tail, when known analytically.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneTail {
    /// Every omitted coefficient is at most this, and they are nonincreasing.
    pub coeff_bound: f64,
    /// When present: `k·F(k)` is nonincreasing over the omitted indices and bounded by this.
    pub moment_bound: Option<f64>,
}

/// Truncation error description carried by every sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailInfo {
    pub bound: f64,
    pub exact_len: usize,
    pub prefix_err: f64,
    pub monotone: Option<MonotoneTail>,
}

impl TailInfo {
    /// A finite, exactly known sequence.
    pub fn exact() -> Self {
        Self {
            bound: 0.0,
            exact_len: EXACT_EVERYWHERE,
            prefix_err: 0.0,
            monotone: None,
        }
    }

    /// Exact prefix of length `len`; everything omitted has ℓ¹ mass at most `bound`.
    pub fn truncated(len: usize, bound: f64) -> Self {
        if bound == 0.0 {
            return Self::exact();
        }
        Self {
            bound,
            exact_len: len,
            prefix_err: 0.0,
            monotone: None,
        }
    }

    pub fn with_monotone(mut self, tail: MonotoneTail) -> Self {
        self.monotone = Some(tail);
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.bound >= 0.0) || !self.bound.is_finite() {
            return Err(invalid("tail_bound", format!("must be finite and nonnegative, got {}", self.bound)));
        }
        if !(self.prefix_err >= 0.0) || self.prefix_err > self.bound * (1.0 + 1e-12) + 1e-300 {
            return Err(invalid("prefix_err", format!("must lie in [0, tail_bound], got {}", self.prefix_err)));
        }
        Ok(())
    }
}

/// Family tag and parameters attached to constructed sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqMeta {
    pub family: String,
    pub params: serde_json::Value,
}

/// Finitely truncated complex sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncSeq {
    coeffs: Vec<Complex64>,
    tail: TailInfo,
}

/// Truncated probability on ℤ⁺: nonnegative coefficients, mass deficit covered by the tail.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbSeq {
    coeffs: Vec<f64>,
    tail: TailInfo,
    meta: Option<SeqMeta>,
}

/// Coefficient storage viewed without copying; used by transforms.
#[derive(Clone, Copy, Debug)]
pub enum CoeffView<'a> {
    Real(&'a [f64]),
    Complex(&'a [Complex64]),
}

impl CoeffView<'_> {
    pub fn len(&self) -> usize {
        match self {
            CoeffView::Real(c) => c.len(),
            CoeffView::Complex(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, k: usize) -> Complex64 {
        match self {
            CoeffView::Real(c) => Complex64::new(c[k], 0.0),
            CoeffView::Complex(c) => c[k],
        }
    }
}

/// Anything with coefficients and a tail description.
pub trait Sequence {
    fn view(&self) -> CoeffView<'_>;
    fn tail(&self) -> &TailInfo;

    fn len(&self) -> usize {
        self.view().len()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tail_bound(&self) -> f64 {
        self.tail().bound
    }

    /// `(Σ|coeffs|, Σ|coeffs| + tail_bound)`.
    fn l1_norm(&self) -> (f64, f64) {
        let lower = match self.view() {
            CoeffView::Real(c) => c.iter().map(|x| x.abs()).collect::<KahanSum>().value(),
            CoeffView::Complex(c) => c.iter().map(|x| x.norm()).collect::<KahanSum>().value(),
        };
        (lower, lower + self.tail_bound())
    }
}

impl Sequence for TruncSeq {
    fn view(&self) -> CoeffView<'_> {
        CoeffView::Complex(&self.coeffs)
    }
    fn tail(&self) -> &TailInfo {
        &self.tail
    }
}

impl Sequence for ProbSeq {
    fn view(&self) -> CoeffView<'_> {
        CoeffView::Real(&self.coeffs)
    }
    fn tail(&self) -> &TailInfo {
        &self.tail
    }
}

fn check_finite<T>(xs: &[T], finite: impl Fn(&T) -> bool) -> Result<()> {
    match xs.iter().position(|x| !finite(x)) {
        Some(index) => Err(LabError::NonFinite { index }),
        None => Ok(()),
    }
}

impl TruncSeq {
    pub fn new(coeffs: Vec<Complex64>, tail: TailInfo) -> Result<Self> {
        check_finite(&coeffs, |z| z.re.is_finite() && z.im.is_finite())?;
        tail.check()?;
        Ok(Self { coeffs, tail })
    }

    /// Real coefficients with a plain ℓ¹ tail bound on everything omitted.
    pub fn from_real(coeffs: &[f64], tail_bound: f64) -> Result<Self> {
        let len = coeffs.len();
        Self::new(
            coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            TailInfo::truncated(len, tail_bound),
        )
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_parts(self) -> (Vec<Complex64>, TailInfo) {
        (self.coeffs, self.tail)
    }
}

const NEG_FLOOR: f64 = -1e-14;
const MASS_TOL: f64 = 1e-12;

impl ProbSeq {
    /// Validates nonnegativity (down to a `-1e-14` rounding floor, which is
    /// clamped to zero) and that the stored mass plus tail brackets one.
    pub fn new(mut coeffs: Vec<f64>, mut tail: TailInfo) -> Result<Self> {
        check_finite(&coeffs, |x| x.is_finite())?;
        tail.check()?;
        let mut clamped = 0.0;
        for (index, c) in coeffs.iter_mut().enumerate() {
            if *c < 0.0 {
                if *c < NEG_FLOOR {
                    return Err(LabError::NegativeCoefficient { index, value: *c });
                }
                clamped -= *c;
                *c = 0.0;
            }
        }
        tail.bound += clamped;
        tail.prefix_err += clamped;
        let mass = kahan_sum(&coeffs);
        if mass > 1.0 + MASS_TOL {
            return Err(LabError::MassMismatch { mass, tol: MASS_TOL });
        }
        if 1.0 - mass > tail.bound + MASS_TOL {
            return Err(LabError::MassMismatch {
                mass: mass + tail.bound,
                tol: MASS_TOL,
            });
        }
        if coeffs.is_empty() {
            return Err(LabError::EmptySupport);
        }
        Ok(Self { coeffs, tail, meta: None })
    }

    /// Internal constructor for results whose invariants follow from the inputs.
    pub(crate) fn from_parts_unchecked(coeffs: Vec<f64>, mut tail: TailInfo) -> Self {
        let mass = kahan_sum(&coeffs);
        tail.bound = tail.bound.max((1.0 - mass).abs()).max(tail.prefix_err);
        Self { coeffs, tail, meta: None }
    }

    /// Point mass at `m`.
    pub fn delta(m: usize) -> Self {
        let mut coeffs = vec![0.0; m + 1];
        coeffs[m] = 1.0;
        Self {
            coeffs,
            tail: TailInfo::exact(),
            meta: Some(SeqMeta {
                family: "delta".into(),
                params: serde_json::json!({ "m": m }),
            }),
        }
    }

    pub fn with_meta(mut self, family: &str, params: serde_json::Value) -> Self {
        self.meta = Some(SeqMeta {
            family: family.to_string(),
            params,
        });
        self
    }

    pub fn meta(&self) -> Option<&SeqMeta> {
        self.meta.as_ref()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient at `k`, zero past the stored prefix.
    pub fn get(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        kahan_sum(&self.coeffs)
    }

    pub fn to_trunc(&self) -> TruncSeq {
        TruncSeq {
            coeffs: self.coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            tail: self.tail.clone(),
        }
    }

    pub fn into_parts(self) -> (Vec<f64>, TailInfo) {
        (self.coeffs, self.tail)
    }

    /// Index of the first nonzero stored coefficient.
    pub fn first_support(&self) -> Option<usize> {
        self.coeffs.iter().position(|&c| c > 0.0)
    }
}

/// Convolution algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConvMethod {
    Direct,
    Fft,
    /// Direct when one operand is short, FFT otherwise.
    #[default]
    Auto,
}

impl std::str::FromStr for ConvMethod {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(ConvMethod::Direct),
            "fft" => Ok(ConvMethod::Fft),
            "auto" => Ok(ConvMethod::Auto),
            other => Err(invalid("method", format!("expected direct|fft|auto, got `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvOptions {
    pub method: ConvMethod,
    /// Results longer than this are cut; the cut mass moves into the tail.
    pub cap: usize,
}

impl Default for ConvOptions {
    fn default() -> Self {
        Self {
            method: ConvMethod::Auto,
            cap: DEFAULT_CAP,
        }
    }
}

impl ConvOptions {
    pub fn with_method(mut self, method: ConvMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap.max(1);
        self
    }
}

const DIRECT_THRESHOLD: usize = 64;
const EPS: f64 = f64::EPSILON;

thread_local! {
    static REAL_PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
    static COMPLEX_PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn pick_fft(method: ConvMethod, la: usize, lb: usize) -> bool {
    match method {
        ConvMethod::Direct => false,
        ConvMethod::Fft => true,
        ConvMethod::Auto => la.min(lb) > DIRECT_THRESHOLD,
    }
}

/// Direct O(la·lb) product truncated to `out_len` entries.
fn direct_real(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_len];
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    for (i, &s) in short.iter().enumerate() {
        if s == 0.0 || i >= out_len {
            continue;
        }
        let upto = (out_len - i).min(long.len());
        for (o, &l) in out[i..i + upto].iter_mut().zip(&long[..upto]) {
            *o += s * l;
        }
    }
    out
}

fn direct_complex(a: &[Complex64], b: &[Complex64], out_len: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); out_len];
    for (i, &x) in a.iter().enumerate() {
        if i >= out_len {
            break;
        }
        let upto = (out_len - i).min(b.len());
        for (o, &y) in out[i..i + upto].iter_mut().zip(&b[..upto]) {
            *o += x * y;
        }
    }
    out
}

fn fft_real(a: &[f64], b: &[f64], out_len: usize, same: bool) -> Vec<f64> {
    let full = a.len() + b.len() - 1;
    let size = full.next_power_of_two().max(2);
    REAL_PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let r2c = planner.plan_fft_forward(size);
        let c2r = planner.plan_fft_inverse(size);
        let mut buf = r2c.make_input_vec();
        buf[..a.len()].copy_from_slice(a);
        let mut fa = r2c.make_output_vec();
        r2c.process(&mut buf, &mut fa).expect("fft length");
        if same {
            for z in fa.iter_mut() {
                *z = *z * *z;
            }
        } else {
            let mut buf_b = r2c.make_input_vec();
            buf_b[..b.len()].copy_from_slice(b);
            let mut fb = r2c.make_output_vec();
            r2c.process(&mut buf_b, &mut fb).expect("fft length");
            for (x, y) in fa.iter_mut().zip(&fb) {
                *x *= *y;
            }
        }
        // imaginary parts at DC and Nyquist must vanish for the inverse
        fa[0].im = 0.0;
        let last = fa.len() - 1;
        fa[last].im = 0.0;
        let mut out = c2r.make_output_vec();
        c2r.process(&mut fa, &mut out).expect("fft length");
        let scale = 1.0 / size as f64;
        out.truncate(out_len);
        for x in out.iter_mut() {
            *x *= scale;
        }
        out
    })
}

fn fft_complex(a: &[Complex64], b: &[Complex64], out_len: usize) -> Vec<Complex64> {
    let full = a.len() + b.len() - 1;
    let size = full.next_power_of_two();
    let (fwd, inv): (Arc<dyn rustfft::Fft<f64>>, Arc<dyn rustfft::Fft<f64>>) = COMPLEX_PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        (planner.plan_fft_forward(size), planner.plan_fft_inverse(size))
    });
    let zero = Complex64::new(0.0, 0.0);
    let mut fa = vec![zero; size];
    fa[..a.len()].copy_from_slice(a);
    let mut fb = vec![zero; size];
    fb[..b.len()].copy_from_slice(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa.truncate(out_len);
    for x in fa.iter_mut() {
        *x *= scale;
    }
    fa
}

/// Σ over index pairs with `i + j >= cap` of `|a_i| |b_j|`.
fn cut_mass(abs_a: &[f64], abs_b: &[f64], cap: usize) -> f64 {
    if abs_a.len() + abs_b.len() - 1 <= cap {
        return 0.0;
    }
    // suffix sums of |b|
    let mut suffix = vec![0.0; abs_b.len() + 1];
    for j in (0..abs_b.len()).rev() {
        suffix[j] = suffix[j + 1] + abs_b[j];
    }
    let mut acc = KahanSum::new();
    for (i, &x) in abs_a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let start = cap.saturating_sub(i).min(abs_b.len());
        acc.add(x * suffix[start]);
    }
    acc.value() * (1.0 + 1e-12)
}

/// Error propagation for a product of two truncated sequences.
fn propagate(
    ta: &TailInfo,
    l1a: f64,
    tb: &TailInfo,
    l1b: f64,
    cut: f64,
    slack: f64,
    kept_len: usize,
) -> TailInfo {
    let prefix_err = ta.prefix_err * (l1b + tb.bound) + l1a * tb.prefix_err + slack;
    let bound = l1a * tb.bound + ta.bound * l1b + ta.bound * tb.bound + cut + slack;
    let mut exact_len = ta.exact_len.min(tb.exact_len);
    if cut > 0.0 {
        exact_len = exact_len.min(kept_len);
    }
    TailInfo {
        bound: bound.max(prefix_err),
        exact_len,
        prefix_err,
        monotone: None,
    }
}

/// Rounding allowance for an FFT product: `len · (log₂P + 2) · ε · ‖a‖₁‖b‖₁`.
fn fft_slack(out_len: usize, la: usize, lb: usize, norm_product: f64) -> f64 {
    let size = (la + lb - 1).next_power_of_two().max(2);
    out_len as f64 * ((size as f64).log2() + 2.0) * EPS * norm_product
}

/// Rounding allowance for the direct product: each output sums at most `m`
/// products, `m` the smaller nonzero count. A lone power-of-two factor is exact.
fn direct_slack(abs_a: &[f64], abs_b: &[f64], norm_product: f64, real: bool) -> f64 {
    let nonzero = |xs: &[f64]| xs.iter().filter(|&&x| x != 0.0).count();
    let (na, nb) = (nonzero(abs_a), nonzero(abs_b));
    let single = |xs: &[f64]| xs.iter().copied().find(|&x| x != 0.0).is_some_and(is_pow2);
    if real && ((na == 1 && single(abs_a)) || (nb == 1 && single(abs_b))) {
        return 0.0;
    }
    na.min(nb) as f64 * EPS * norm_product
}

fn is_pow2(x: f64) -> bool {
    x > 0.0 && x == 2f64.powi(x.log2().round() as i32)
}

/// Core real convolution with error propagation. `nonneg` clamps negative
/// rounding noise to zero, which only holds when both inputs are nonnegative.
pub(crate) fn conv_real_tail(
    a: &[f64],
    ta: &TailInfo,
    b: &[f64],
    tb: &TailInfo,
    opts: &ConvOptions,
    nonneg: bool,
) -> (Vec<f64>, TailInfo) {
    let full = a.len() + b.len() - 1;
    let out_len = full.min(opts.cap);
    let abs_a: Vec<f64> = a.iter().map(|x| x.abs()).collect();
    let abs_b: Vec<f64> = b.iter().map(|x| x.abs()).collect();
    let l1a = kahan_sum(&abs_a);
    let l1b = kahan_sum(&abs_b);
    let cut = cut_mass(&abs_a, &abs_b, out_len);
    // inputs beyond the cap only feed cut indices
    let a_in = &a[..a.len().min(out_len)];
    let b_in = &b[..b.len().min(out_len)];
    let use_fft = pick_fft(opts.method, a_in.len(), b_in.len());
    let same = std::ptr::eq(a, b);
    let (mut out, mut slack) = if use_fft {
        let out = fft_real(a_in, b_in, out_len, same);
        (out, fft_slack(out_len, a_in.len(), b_in.len(), l1a * l1b))
    } else {
        (
            direct_real(a_in, b_in, out_len),
            direct_slack(&abs_a, &abs_b, l1a * l1b, true),
        )
    };
    if use_fft {
        let threshold = 1e-15 * l1a * l1b;
        for x in out.iter_mut() {
            if x.abs() < threshold || (nonneg && *x < 0.0) {
                slack += x.abs();
                *x = 0.0;
            }
        }
    }
    let tail = propagate(ta, l1a, tb, l1b, cut, slack, out_len);
    (out, tail)
}

/// Convolution of two truncated complex sequences.
///
/// The FFT route zero-pads to the next power of two covering the full product
/// and zeroes entries below `1e-15·‖a‖₁‖b‖₁`; the zeroed mass is charged to the tail.
pub fn convolve(a: &TruncSeq, b: &TruncSeq, opts: &ConvOptions) -> Result<TruncSeq> {
    check_finite(&a.coeffs, |z| z.re.is_finite() && z.im.is_finite())?;
    check_finite(&b.coeffs, |z| z.re.is_finite() && z.im.is_finite())?;
    if a.coeffs.is_empty() || b.coeffs.is_empty() {
        return Err(LabError::EmptySupport);
    }
    let full = a.coeffs.len() + b.coeffs.len() - 1;
    let out_len = full.min(opts.cap);
    let abs_a: Vec<f64> = a.coeffs.iter().map(|z| z.norm()).collect();
    let abs_b: Vec<f64> = b.coeffs.iter().map(|z| z.norm()).collect();
    let l1a = kahan_sum(&abs_a);
    let l1b = kahan_sum(&abs_b);
    let cut = cut_mass(&abs_a, &abs_b, out_len);
    let a_in = &a.coeffs[..a.coeffs.len().min(out_len)];
    let b_in = &b.coeffs[..b.coeffs.len().min(out_len)];
    let use_fft = pick_fft(opts.method, a_in.len(), b_in.len());
    let (mut out, mut slack) = if use_fft {
        (
            fft_complex(a_in, b_in, out_len),
            fft_slack(out_len, a_in.len(), b_in.len(), l1a * l1b),
        )
    } else {
        (
            direct_complex(a_in, b_in, out_len),
            direct_slack(&abs_a, &abs_b, l1a * l1b, false),
        )
    };
    if use_fft {
        let threshold = 1e-15 * l1a * l1b;
        for z in out.iter_mut() {
            if z.norm() < threshold {
                slack += z.norm();
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }
    let tail = propagate(&a.tail, l1a, &b.tail, l1b, cut, slack, out_len);
    Ok(TruncSeq { coeffs: out, tail })
}

impl ProbSeq {
    /// Convolution of probabilities; the result is again a probability.
    pub fn convolve(&self, other: &ProbSeq, opts: &ConvOptions) -> ProbSeq {
        let (coeffs, tail) = conv_real_tail(&self.coeffs, &self.tail, &other.coeffs, &other.tail, opts, true);
        ProbSeq::from_parts_unchecked(coeffs, tail)
    }

    fn square(&self, opts: &ConvOptions) -> ProbSeq {
        let (coeffs, tail) = conv_real_tail(&self.coeffs, &self.tail, &self.coeffs, &self.tail, opts, true);
        ProbSeq::from_parts_unchecked(coeffs, tail)
    }
}

/// `n`-th convolution power by square-and-multiply over the binary expansion
/// of `n`, most significant bit first, re-truncating after every step.
pub fn conv_power(f: &ProbSeq, n: u64, opts: &ConvOptions) -> Result<ProbSeq> {
    if n == 0 {
        return Err(invalid("n", "convolution power needs n >= 1"));
    }
    let bits = 64 - n.leading_zeros();
    let mut acc = f.clone();
    acc.meta = None;
    for bit in (0..bits - 1).rev() {
        acc = acc.square(opts);
        if (n >> bit) & 1 == 1 {
            acc = acc.convolve(f, opts);
        }
    }
    Ok(acc)
}

/// Options for the convolution exponential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpOptions {
    pub conv: ConvOptions,
    /// Target bound on the discarded Poisson mass.
    pub poisson_eps: f64,
}

impl Default for ExpOptions {
    fn default() -> Self {
        Self {
            conv: ConvOptions::default(),
            poisson_eps: 1e-12,
        }
    }
}

/// `e^{-t} tⁿ / n!`, evaluated in log space.
pub fn poisson_weight(t: f64, n: usize) -> f64 {
    if t == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (-t + n as f64 * t.ln() - ln_gamma(n as f64 + 1.0)).exp()
}

/// Bound on `e^{-t} Σ_{n>m} tⁿ/n!` via the geometric majorant of the ratio
/// `t/(n+1)` past `m`.
pub fn poisson_tail_bound(t: f64, m: usize) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let ratio = t / (m as f64 + 2.0);
    if ratio >= 1.0 {
        return 1.0;
    }
    (poisson_weight(t, m + 1) / (1.0 - ratio)).min(1.0)
}

/// Uniformization cutoff: starts at `ceil(t + 12√t + 25)` and grows until the
/// Poisson remainder bound is at most `eps`.
pub fn uniformization_cutoff(t: f64, eps: f64) -> usize {
    let mut m = (t + 12.0 * t.sqrt() + 25.0).ceil() as usize;
    while poisson_tail_bound(t, m) > eps {
        m += 8 + m / 64;
    }
    m
}

/// Convolution exponential `e^{-t(δ₀ - F)} = e^{-t} Σ tⁿ/n! F⁽ⁿ⁾`, evaluated
/// by Horner's scheme over the truncated uniformization sum.
pub fn conv_exp(f: &ProbSeq, t: f64, opts: &ExpOptions) -> Result<ProbSeq> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid("t", format!("must be finite and nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(ProbSeq::delta(0).without_meta());
    }
    let m = uniformization_cutoff(t, opts.poisson_eps);
    let remainder = poisson_tail_bound(t, m);
    // skip the top terms that underflow
    let mut top = m;
    while top > 0 && poisson_weight(t, top) == 0.0 {
        top -= 1;
    }
    let mut coeffs = vec![poisson_weight(t, top)];
    let mut tail = TailInfo::exact();
    for n in (0..top).rev() {
        let (c, tl) = conv_real_tail(&coeffs, &tail, &f.coeffs, &f.tail, &opts.conv, true);
        coeffs = c;
        tail = tl;
        coeffs[0] += poisson_weight(t, n);
    }
    // terms n > m live at indices >= n·(first support index)
    let k_min = match f.first_support() {
        Some(k) if k < f.tail.exact_len && f.tail.prefix_err == 0.0 => k,
        _ => 0,
    };
    tail.bound += remainder;
    if k_min >= 1 {
        tail.exact_len = tail.exact_len.min((m + 1).saturating_mul(k_min));
    } else {
        tail.prefix_err += remainder;
    }
    Ok(ProbSeq::from_parts_unchecked(coeffs, tail))
}

impl ProbSeq {
    fn without_meta(mut self) -> Self {
        self.meta = None;
        self
    }
}

/// Certified interval for an ℓ¹ norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    /// Stored difference norm plus the unmatched stored mass; not itself a bound.
    pub estimate: f64,
}

impl Interval {
    pub fn point(x: f64) -> Self {
        Self {
            lower: x,
            upper: x,
            estimate: x,
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            lower: self.lower * s,
            upper: self.upper * s,
            estimate: self.estimate * s,
        }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Interval for `‖G − H‖₁` where `G` and `H` are both probabilities.
///
/// On the common exact prefix the difference is known up to the prefix
/// errors. Since `G − H` sums to zero, the prefix sum `m` is minus the mass
/// of the difference past the prefix, so `s + |m|` bounds the norm from below.
/// The upper bound charges the full mass of both sequences past the prefix.
pub fn prob_diff_interval(g: &ProbSeq, h: &ProbSeq) -> Interval {
    let longest = g.len().max(h.len());
    let exact = g.tail.exact_len.min(h.tail.exact_len).min(longest);
    let pe = g.tail.prefix_err + h.tail.prefix_err;
    let mut s = KahanSum::new();
    let mut m = KahanSum::new();
    let mut mass_g = KahanSum::new();
    let mut mass_h = KahanSum::new();
    for k in 0..exact {
        let a = g.get(k);
        let b = h.get(k);
        s.add((a - b).abs());
        m.add(a - b);
        mass_g.add(a);
        mass_h.add(b);
    }
    let s = s.value();
    let m = m.value();
    let lower = (s + m.abs() - 2.0 * pe).max(0.0);
    let beyond = (1.0 - mass_g.value()).max(0.0) + (1.0 - mass_h.value()).max(0.0);
    let upper_prefix = s + 2.0 * pe + beyond;
    // plain bound over all stored entries
    let mut all = KahanSum::new();
    let mut all_signed = KahanSum::new();
    for k in 0..longest {
        let d = g.get(k) - h.get(k);
        all.add(d.abs());
        all_signed.add(d);
    }
    let total_err = g.tail.bound + h.tail.bound;
    let s_all = all.value();
    let m_all = all_signed.value();
    // same bounds treating every stored entry as perturbed by the full error
    let lower = lower
        .max(s_all - total_err)
        .max(s_all + m_all.abs() - 2.0 * total_err)
        .min(2.0);
    let upper_plain = s_all + total_err;
    let upper = upper_prefix.min(upper_plain).min(2.0).max(lower);
    // the mass mismatch has to reappear beyond the window
    Interval {
        lower,
        upper,
        estimate: (s_all + m_all.abs()).clamp(lower, upper),
    }
}

/// Interval bounding `‖F⁽ⁿ⁾ − F⁽ⁿ⁺¹⁾‖₁`, with `F⁽ⁿ⁺¹⁾ = F⁽ⁿ⁾ * F`.
pub fn diff_norm(f: &ProbSeq, n: u64, opts: &ConvOptions) -> Result<Interval> {
    let fn_ = conv_power(f, n, opts)?;
    let fn1 = fn_.convolve(f, opts);
    Ok(prob_diff_interval(&fn_, &fn1))
}

/// Outcome of the first-moment screen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentEvidence {
    /// Partial sum of `k F(k)`; `slope` is the fitted tail exponent when a fit was made.
    Finite { mean: f64, slope: Option<f64> },
    /// Tail decays no faster than `k^{-2+margin}`.
    DivergentEvidence { partial_sum: f64, slope: f64 },
    /// Fitted exponent within `margin` of `-2`: no call either way.
    Borderline { partial_sum: f64, slope: f64 },
}

pub const DEFAULT_MOMENT_MARGIN: f64 = 0.15;
const MIN_FIT_POINTS: usize = 8;

/// First-moment screen: partial sum of `k F(k)` and a log-log slope of `F(k)`
/// over `window`.
pub fn first_moment(f: &ProbSeq, window: Range<usize>, margin: f64) -> Result<MomentEvidence> {
    let partial = f
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, &c)| k as f64 * c)
        .collect::<KahanSum>()
        .value();
    if f.tail.bound == 0.0 {
        return Ok(MomentEvidence::Finite {
            mean: partial,
            slope: None,
        });
    }
    let end = window.end.min(f.len());
    let start = window.start.max(1);
    if end <= start {
        return Err(LabError::WindowTooShort { got: 0, need: MIN_FIT_POINTS });
    }
    // up to 64 log-spaced sample points inside the window
    let mut idx: Vec<usize> = (0..64)
        .map(|i| {
            let t = i as f64 / 63.0;
            ((start as f64).ln() * (1.0 - t) + ((end - 1) as f64).ln() * t).exp().round() as usize
        })
        .filter(|&k| k >= start && k < end)
        .collect();
    idx.dedup();
    let (xs, ys): (Vec<f64>, Vec<f64>) = idx
        .iter()
        .filter(|&&k| f.coeffs[k] > 0.0)
        .map(|&k| (k as f64, f.coeffs[k]))
        .unzip();
    if xs.len() < MIN_FIT_POINTS {
        return Err(LabError::WindowTooShort { got: xs.len(), need: MIN_FIT_POINTS });
    }
    let slope = fit_loglog(&xs, &ys)
        .ok_or(LabError::WindowTooShort { got: xs.len(), need: MIN_FIT_POINTS })?
        .slope;
    Ok(if slope >= -2.0 + margin {
        MomentEvidence::DivergentEvidence { partial_sum: partial, slope }
    } else if slope > -2.0 - margin {
        MomentEvidence::Borderline { partial_sum: partial, slope }
    } else {
        MomentEvidence::Finite { mean: partial, slope: Some(slope) }
    })
}

/// Periodicity class of the inspected support.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Periodicity {
    /// Support generates `mℤ` with `m != 1`; `m = 0` is the point mass at the origin.
    NotAdapted { modulus: u64 },
    /// Support generates ℤ but sits in `mℤ + r`; `m = 0` for a single point mass at `r`.
    AdaptedNotAperiodic { modulus: u64, offset: u64 },
    Aperiodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicityReport {
    pub class: Periodicity,
    /// Number of leading coefficients inspected.
    pub prefix_len: usize,
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Classifies the stored support: `g = gcd(supp)` decides adaptedness and
/// `d = gcd` of differences decides aperiodicity.
pub fn classify_periodicity(f: &ProbSeq) -> Result<PeriodicityReport> {
    let support: Vec<u64> = f
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(k, _)| k as u64)
        .collect();
    let first = *support.first().ok_or(LabError::EmptySupport)?;
    let g = support.iter().fold(0, |acc, &k| gcd(acc, k));
    let d = support.iter().fold(0, |acc, &k| gcd(acc, k - first));
    let class = if d == 1 {
        Periodicity::Aperiodic
    } else if g != 1 {
        Periodicity::NotAdapted { modulus: g }
    } else {
        Periodicity::AdaptedNotAperiodic {
            modulus: d,
            offset: if d == 0 { first } else { first % d },
        }
    };
    Ok(PeriodicityReport {
        class,
        prefix_len: f.len(),
    })
}

/// Outcome of the Fourier-side aperiodicity test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FourierAperiodicity {
    ConsistentAperiodic,
    Violation { xi: f64, re: f64, im: f64 },
}

/// Flags any grid point `ξ != 0` with `|F̂(ξ)| ≥ 1 − eval_error − tol`.
pub fn fourier_aperiodicity_check(f: &ProbSeq, grid: &[f64], tol: f64) -> FourierAperiodicity {
    for &xi in grid {
        if xi.abs() < 1e-12 {
            continue;
        }
        let v = crate::transforms::fourier(f, xi);
        if v.value.norm() >= 1.0 - v.error - tol {
            return FourierAperiodicity::Violation {
                xi,
                re: v.value.re,
                im: v.value.im,
            };
        }
    }
    FourierAperiodicity::ConsistentAperiodic
}

/// Grid holding every `2πj/m` (reduced to `(-π, π]`) for `2 ≤ m ≤ max_modulus`,
/// plus `uniform` evenly spaced points.
pub fn periodicity_grid(max_modulus: u64, uniform: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let mut grid = Vec::new();
    for m in 2..=max_modulus {
        for j in 1..m {
            if gcd(j, m) != 1 {
                continue;
            }
            let mut xi = 2.0 * PI * j as f64 / m as f64;
            if xi > PI {
                xi -= 2.0 * PI;
            }
            grid.push(xi);
        }
    }
    for i in 0..uniform {
        let xi = -PI + 2.0 * PI * (i as f64 + 0.5) / uniform as f64;
        grid.push(xi);
    }
    grid
}

/// One serialized coefficient: a real number or an `[re, im]` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum CoeffJson {
    Real(f64),
    Pair([f64; 2]),
}

/// On-disk form of a sequence. Only the scalar tail bound survives a round trip.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeqJson {
    coeffs: Vec<CoeffJson>,
    tail_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<SeqMeta>,
}

impl TruncSeq {
    pub fn to_json(&self) -> serde_json::Value {
        let coeffs = self
            .coeffs
            .iter()
            .map(|z| if z.im == 0.0 { CoeffJson::Real(z.re) } else { CoeffJson::Pair([z.re, z.im]) })
            .collect();
        serde_json::to_value(SeqJson {
            coeffs,
            tail_bound: self.tail.bound,
            meta: None,
        })
        .expect("sequence serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let raw: SeqJson = serde_json::from_value(value.clone())?;
        let coeffs: Vec<Complex64> = raw
            .coeffs
            .iter()
            .map(|c| match *c {
                CoeffJson::Real(x) => Complex64::new(x, 0.0),
                CoeffJson::Pair([re, im]) => Complex64::new(re, im),
            })
            .collect();
        let len = coeffs.len();
        Self::new(coeffs, TailInfo::truncated(len, raw.tail_bound))
    }

    /// CSV with columns `k,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,re,im")?;
        for (k, z) in self.coeffs.iter().enumerate() {
            writeln!(out, "{k},{:.16e},{:.16e}", z.re, z.im)?;
        }
        Ok(())
    }
}

impl ProbSeq {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SeqJson {
            coeffs: self.coeffs.iter().map(|&x| CoeffJson::Real(x)).collect(),
            tail_bound: self.tail.bound,
            meta: self.meta.clone(),
        })
        .expect("sequence serializes")
    }

    /// Parses the JSON form; complex entries must have zero imaginary part.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let raw: SeqJson = serde_json::from_value(value.clone())?;
        let mut coeffs = Vec::with_capacity(raw.coeffs.len());
        for (index, c) in raw.coeffs.iter().enumerate() {
            match *c {
                CoeffJson::Real(x) => coeffs.push(x),
                CoeffJson::Pair([re, im]) if im == 0.0 => coeffs.push(re),
                CoeffJson::Pair(_) => {
                    return Err(invalid("coeffs", format!("entry {index} has a nonzero imaginary part")));
                }
            }
        }
        let len = coeffs.len();
        let mut seq = Self::new(coeffs, TailInfo::truncated(len, raw.tail_bound))?;
        seq.meta = raw.meta;
        Ok(seq)
    }

    /// CSV with columns `k,value`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,value")?;
        for (k, x) in self.coeffs.iter().enumerate() {
            writeln!(out, "{k},{x:.16e}")?;
        }
        Ok(())
    }

    /// Reads `k,value` rows; missing indices are zero. The tail bound is
    /// taken as the mass deficit.
    pub fn read_csv<R: std::io::BufRead>(input: R) -> Result<Self> {
        let mut coeffs: Vec<f64> = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with('k')) {
                continue;
            }
            let bad = || LabError::Config {
                line: Some(i + 1),
                message: format!("expected `k,value`, got `{line}`"),
            };
            let (k, v) = line.split_once(',').ok_or_else(bad)?;
            let k: usize = k.trim().parse().map_err(|_| bad())?;
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            if k >= coeffs.len() {
                coeffs.resize(k + 1, 0.0);
            }
            coeffs[k] = v;
        }
        let len = coeffs.len();
        let deficit = (1.0 - kahan_sum(&coeffs)).max(0.0);
        Self::new(coeffs, TailInfo::truncated(len, deficit))
    }
}
