//! Sequence-level diagnostics for the Ritt class: tables of
//! `n‖F⁽ⁿ⁾ − F⁽ⁿ⁺¹⁾‖₁`, `n^{1/2}‖F⁽ⁿ⁾ − F⁽ⁿ⁺¹⁾‖₁` and
//! `t‖(δ₀ − F) * e^{−t(δ₀−F)}‖₁`, trend verdicts, and an aggregate report.
//!
//! Every statistic is an interval. A row whose width exceeds 10% of its
//! upper end is flagged low-precision; tables with such rows base their
//! verdicts on the lower ends and say so.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::numeric::{fit_loglog, powers_of_two, relative_spread, LineFit};
use crate::seq::{
    classify_periodicity, conv_exp, conv_power, first_moment, fourier_aperiodicity_check, periodicity_grid,
    prob_diff_interval, uniformization_cutoff, ConvOptions, ExpOptions, FourierAperiodicity, Interval,
    MomentEvidence, MonotoneTail, Periodicity, PeriodicityReport, ProbSeq, Sequence, TailInfo,
    DEFAULT_MOMENT_MARGIN,
};
use crate::transforms::{sector_report, uniform_positive_grid, SectorReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    RittN,
    HalfN,
    SemigroupT,
}

impl StatKind {
    /// Exponent `p` with statistic `= index^p · norm`.
    pub fn weight_exponent(self) -> f64 {
        match self {
            StatKind::RittN | StatKind::SemigroupT => 1.0,
            StatKind::HalfN => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StatKind::RittN => "ritt_n",
            StatKind::HalfN => "half_n",
            StatKind::SemigroupT => "semigroup_t",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    /// `n` or `t`.
    pub index: f64,
    /// Weighted computed norm, before error budgets.
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Interval for the unweighted norm.
    pub norm: Interval,
    pub low_precision: bool,
    /// Set for semigroup rows whose uniformization cutoff exceeded the budget.
    pub budget_exceeded: bool,
}

/// Which end of the row intervals a verdict rests on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Upper ends: every row is certified to 10%.
    Upper,
    /// Lower ends, used when some row is low-precision; not a certified boundedness claim.
    LowerUncertified,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Bounded,
    Growing,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagTable {
    pub kind: StatKind,
    pub rows: Vec<DiagRow>,
    /// Log-log fit of the unweighted norm against the index over the top half of the grid.
    pub slope_fit: Option<LineFit>,
    pub basis: Basis,
}

/// Thresholds for trend verdicts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendRule {
    /// Largest relative spread of the last three rows still called flat.
    pub flatness: f64,
    /// Allowed deviation of the slope from `-p`.
    pub slope_band: f64,
    /// Slope above `-p + growth_margin` reads as growth.
    pub growth_margin: f64,
}

impl Default for TrendRule {
    fn default() -> Self {
        Self {
            flatness: 0.25,
            slope_band: 0.15,
            growth_margin: 0.15,
        }
    }
}

pub const LOW_PRECISION_WIDTH: f64 = 0.1;

impl DiagTable {
    fn new(kind: StatKind, indices: &[f64], norms: &[Interval], budget: &[bool]) -> Self {
        let p = kind.weight_exponent();
        let rows: Vec<DiagRow> = indices
            .iter()
            .zip(norms)
            .zip(budget)
            .map(|((&index, &norm), &budget_exceeded)| {
                let w = index.powf(p);
                DiagRow {
                    index,
                    estimate: w * norm.estimate,
                    lower: w * norm.lower,
                    upper: w * norm.upper,
                    norm,
                    low_precision: norm.width() > LOW_PRECISION_WIDTH * norm.upper,
                    budget_exceeded,
                }
            })
            .collect();
        let basis = if rows.iter().any(|r| r.low_precision || r.budget_exceeded) {
            Basis::LowerUncertified
        } else {
            Basis::Upper
        };
        let mut table = Self {
            kind,
            rows,
            slope_fit: None,
            basis,
        };
        table.slope_fit = table.fit_top_half();
        table
    }

    fn basis_value(&self, row: &DiagRow) -> f64 {
        match self.basis {
            Basis::Upper => row.upper,
            Basis::LowerUncertified => row.lower,
        }
    }

    fn fit_top_half(&self) -> Option<LineFit> {
        let start = self.rows.len() / 2;
        let rows = &self.rows[start..];
        let xs: Vec<f64> = rows.iter().map(|r| r.index).collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|r| match self.basis {
                Basis::Upper => r.norm.upper,
                Basis::LowerUncertified => r.norm.lower,
            })
            .collect();
        fit_loglog(&xs, &ys)
    }

    /// Relative spread of the last three rows on the given end.
    pub fn tail_spread(&self, upper: bool) -> f64 {
        let last: Vec<f64> = self.rows[self.rows.len().saturating_sub(3)..]
            .iter()
            .map(|r| if upper { r.upper } else { r.lower })
            .collect();
        relative_spread(&last)
    }

    pub fn max_upper(&self) -> f64 {
        self.rows.iter().map(|r| r.upper).fold(0.0, f64::max)
    }

    pub fn trend(&self, rule: &TrendRule) -> Trend {
        if self.rows.iter().all(|r| r.upper == 0.0) {
            return Trend::Bounded;
        }
        let p = self.kind.weight_exponent();
        let Some(fit) = self.slope_fit else {
            return Trend::Inconclusive;
        };
        let last: Vec<f64> = self.rows[self.rows.len().saturating_sub(3)..]
            .iter()
            .map(|r| self.basis_value(r))
            .collect();
        let flat = last.len() == 3 && relative_spread(&last) <= rule.flatness;
        if flat && (fit.slope + p).abs() <= rule.slope_band {
            Trend::Bounded
        } else if fit.slope >= -p + rule.growth_margin {
            Trend::Growing
        } else {
            Trend::Inconclusive
        }
    }

    /// CSV with columns `index,estimate,lower,upper`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,estimate,lower,upper")?;
        for r in &self.rows {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", r.index, r.estimate, r.lower, r.upper)?;
        }
        Ok(())
    }
}

fn check_grid(grid: &[u64]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("n_grid", "must be nonempty, strictly ascending and start at n >= 1"));
    }
    Ok(())
}

/// Intervals for `‖F⁽ⁿ⁾ − F⁽ⁿ⁺¹⁾‖₁` along an ascending grid, sharing one
/// chain of convolution powers: `F⁽²ᵐ⁾` is a square, other steps multiply
/// by the power of the gap.
pub fn diff_chain(f: &ProbSeq, n_grid: &[u64], opts: &ConvOptions) -> Result<Vec<Interval>> {
    check_grid(n_grid)?;
    let mut out = Vec::with_capacity(n_grid.len());
    let mut current: Option<(u64, ProbSeq)> = None;
    for &n in n_grid {
        let power = match current.take() {
            None => conv_power(f, n, opts)?,
            Some((m, pm)) if n == 2 * m => pm.convolve(&pm, opts),
            Some((m, pm)) => pm.convolve(&conv_power(f, n - m, opts)?, opts),
        };
        let next = power.convolve(f, opts);
        out.push(prob_diff_interval(&power, &next));
        current = Some((n, power));
    }
    Ok(out)
}

fn no_budget(len: usize) -> Vec<bool> {
    vec![false; len]
}

/// Rows `n · ‖F⁽ⁿ⁾ − F⁽ⁿ⁺¹⁾‖₁`.
pub fn ritt_table(f: &ProbSeq, n_grid: &[u64], opts: &ConvOptions) -> Result<DiagTable> {
    let norms = diff_chain(f, n_grid, opts)?;
    Ok(tables_from_chain(n_grid, &norms).0)
}

/// Rows `n^{1/2} · ‖F⁽ⁿ⁾ − F⁽ⁿ⁺¹⁾‖₁`.
pub fn half_table(f: &ProbSeq, n_grid: &[u64], opts: &ConvOptions) -> Result<DiagTable> {
    let norms = diff_chain(f, n_grid, opts)?;
    Ok(tables_from_chain(n_grid, &norms).1)
}

/// Ritt and half-power tables from one chain.
pub fn tables_from_chain(n_grid: &[u64], norms: &[Interval]) -> (DiagTable, DiagTable) {
    let idx: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let budget = no_budget(idx.len());
    (
        DiagTable::new(StatKind::RittN, &idx, norms, &budget),
        DiagTable::new(StatKind::HalfN, &idx, norms, &budget),
    )
}

/// Options for the semigroup table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupOptions {
    pub exp: ExpOptions,
    /// Largest uniformization cutoff evaluated directly; longer times are
    /// reached by squaring `e^{−(t/2)(δ₀−F)}`.
    pub max_terms: usize,
}

impl Default for SemigroupOptions {
    fn default() -> Self {
        Self {
            exp: ExpOptions::default(),
            max_terms: 256,
        }
    }
}

/// `e^{−t(δ₀−F)}` by Horner's scheme at `t / 2^j` followed by `j` squarings,
/// with `j` the least value keeping the cutoff within budget.
/// The flag reports a cutoff still above budget after the maximal number of halvings.
pub fn conv_exp_by_squaring(f: &ProbSeq, t: f64, opts: &SemigroupOptions) -> Result<(ProbSeq, bool)> {
    const MAX_HALVINGS: usize = 60;
    let mut j = 0;
    let mut step = t;
    while uniformization_cutoff(step, opts.exp.poisson_eps) > opts.max_terms && j < MAX_HALVINGS {
        step *= 0.5;
        j += 1;
    }
    let exceeded = uniformization_cutoff(step, opts.exp.poisson_eps) > opts.max_terms;
    let mut e = conv_exp(f, step, &opts.exp)?;
    for _ in 0..j {
        e = e.convolve(&e, &opts.exp.conv);
    }
    Ok((e, exceeded))
}

/// Rows `t · ‖(δ₀ − F) * e^{−t(δ₀−F)}‖₁`, the norm taken as `‖E_t − F * E_t‖₁`.
/// Consecutive doublings of `t` reuse the previous row by squaring.
pub fn semigroup_table(f: &ProbSeq, t_grid: &[f64], opts: &SemigroupOptions) -> Result<DiagTable> {
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t >= 1.0)) || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("t_grid", "must be nonempty, strictly ascending with every t >= 1"));
    }
    let conv = &opts.exp.conv;
    let mut norms = Vec::with_capacity(t_grid.len());
    let mut budget = Vec::with_capacity(t_grid.len());
    let mut prev: Option<(f64, ProbSeq)> = None;
    for &t in t_grid {
        let (e, exceeded) = match prev.take() {
            Some((s, es)) if t == 2.0 * s => (es.convolve(&es, conv), false),
            Some((s, es)) => {
                let (step, exceeded) = conv_exp_by_squaring(f, t - s, opts)?;
                (es.convolve(&step, conv), exceeded)
            }
            None => conv_exp_by_squaring(f, t, opts)?,
        };
        let fe = e.convolve(f, conv);
        norms.push(prob_diff_interval(&e, &fe));
        budget.push(exceeded);
        prev = Some((t, e));
    }
    Ok(DiagTable::new(StatKind::SemigroupT, t_grid, &norms, &budget))
}

/// `F̃(k) = F(km)` for a sequence supported on `mℤ`.
pub fn rescale(f: &ProbSeq, m: usize) -> Result<ProbSeq> {
    if m < 2 {
        return Err(invalid("m", format!("rescaling needs m >= 2, got {m}")));
    }
    let coeffs: Vec<f64> = f.coeffs().iter().step_by(m).copied().collect();
    let t = f.tail();
    let exact_len = if t.exact_len == usize::MAX {
        usize::MAX
    } else {
        t.exact_len.div_ceil(m)
    };
    let monotone = match t.monotone {
        Some(mt) if exact_len == coeffs.len() => Some(MonotoneTail {
            coeff_bound: mt.coeff_bound,
            moment_bound: mt.moment_bound.map(|b| b / m as f64),
        }),
        _ => None,
    };
    let tail = TailInfo {
        bound: t.bound,
        exact_len,
        prefix_err: t.prefix_err,
        monotone,
    };
    ProbSeq::new(coeffs, tail)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConsistentWithA,
    InconsistentWithA,
    Inconclusive,
    /// Reported for context; does not enter the overall verdict.
    Informational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    pub name: String,
    pub verdict: Verdict,
    pub evidence: String,
}

/// Settings for [`class_a_report`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub n_grid: Vec<u64>,
    pub t_grid: Vec<f64>,
    pub conv: ConvOptions,
    pub semigroup: SemigroupOptions,
    pub moment_margin: f64,
    pub sector_points: usize,
    pub trend: TrendRule,
    /// Sector screen: a limit at or above `π/2 − sector_margin` is inconsistent.
    pub sector_margin: f64,
    pub run_semigroup: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            n_grid: powers_of_two(1, 11),
            t_grid: powers_of_two(0, 10).into_iter().map(|t| t as f64).collect(),
            conv: ConvOptions::default(),
            semigroup: SemigroupOptions::default(),
            moment_margin: DEFAULT_MOMENT_MARGIN,
            sector_points: 256,
            trend: TrendRule::default(),
            sector_margin: 0.05,
            run_semigroup: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAReport {
    pub family: Option<String>,
    pub periodicity: PeriodicityReport,
    /// Modulus used for rescaling a non-adapted sequence.
    pub rescaled_by: Option<u64>,
    pub screens: Vec<Screen>,
    pub overall: Verdict,
    pub moment: Option<MomentEvidence>,
    pub sector: Option<SectorSummary>,
    pub ritt: Option<DiagTable>,
    pub half: Option<DiagTable>,
    pub semigroup: Option<DiagTable>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSummary {
    pub sup_angle: f64,
    pub limit_estimate: Option<f64>,
    pub indeterminate_points: usize,
}

impl From<&SectorReport> for SectorSummary {
    fn from(r: &SectorReport) -> Self {
        Self {
            sup_angle: r.sup_angle,
            limit_estimate: r.limit_estimate,
            indeterminate_points: r.points.iter().chain(&r.near_zero).filter(|p| !p.determinate).count(),
        }
    }
}

fn screen(name: &str, verdict: Verdict, evidence: String) -> Screen {
    Screen {
        name: name.to_string(),
        verdict,
        evidence,
    }
}

fn trend_screen(name: &str, table: &DiagTable, rule: &TrendRule) -> Screen {
    let slope = table.slope_fit.map(|f| f.slope).unwrap_or(f64::NAN);
    let basis = match table.basis {
        Basis::Upper => "upper",
        Basis::LowerUncertified => "lower (uncertified)",
    };
    let (verdict, what) = match table.trend(rule) {
        Trend::Bounded => (Verdict::ConsistentWithA, "bounded"),
        Trend::Growing => (Verdict::InconsistentWithA, "growing"),
        Trend::Inconclusive => (Verdict::Inconclusive, "no clear trend"),
    };
    screen(
        name,
        verdict,
        format!(
            "{what}: slope {slope:.4}, last-three spread {:.4} on {basis} ends, max upper {:.4e}",
            match table.basis {
                Basis::Upper => table.tail_spread(true),
                Basis::LowerUncertified => table.tail_spread(false),
            },
            table.max_upper()
        ),
    )
}

fn moment_window(len: usize) -> std::ops::Range<usize> {
    (len / 64).max(8)..len
}

/// Runs every screen and combines them: one inconsistent screen decides;
/// otherwise all non-informational screens must be consistent.
pub fn class_a_report(f: &ProbSeq, cfg: &ReportConfig) -> Result<ClassAReport> {
    let family = f.meta().map(|m| m.family.clone());
    let periodicity = classify_periodicity(f)?;
    let mut screens = Vec::new();
    let fourier = fourier_aperiodicity_check(f, &periodicity_grid(16, 512), 1e-9);
    let cross = match fourier {
        FourierAperiodicity::ConsistentAperiodic => "Fourier check finds no unimodular point".to_string(),
        FourierAperiodicity::Violation { xi, .. } => format!("Fourier check: |F̂| reaches 1 at ξ = {xi:.6}"),
    };
    let mut report = ClassAReport {
        family,
        periodicity,
        rescaled_by: None,
        screens: Vec::new(),
        overall: Verdict::Inconclusive,
        moment: None,
        sector: None,
        ritt: None,
        half: None,
        semigroup: None,
    };
    let work = match periodicity.class {
        Periodicity::NotAdapted { modulus: 0 } => {
            screens.push(screen(
                "periodicity",
                Verdict::ConsistentWithA,
                "point mass at the origin; all differences vanish".into(),
            ));
            report.screens = screens;
            report.overall = Verdict::ConsistentWithA;
            return Ok(report);
        }
        Periodicity::Aperiodic => {
            screens.push(screen("periodicity", Verdict::ConsistentWithA, format!("aperiodic; {cross}")));
            f.clone()
        }
        Periodicity::AdaptedNotAperiodic { modulus, offset } => {
            screens.push(screen(
                "periodicity",
                Verdict::InconsistentWithA,
                format!("adapted but supported in {modulus}Z + {offset}; {cross}"),
            ));
            f.clone()
        }
        Periodicity::NotAdapted { modulus } => {
            report.rescaled_by = Some(modulus);
            let g = rescale(f, modulus as usize)?;
            let inner = classify_periodicity(&g)?;
            let verdict = if inner.class == Periodicity::Aperiodic {
                Verdict::ConsistentWithA
            } else {
                Verdict::InconsistentWithA
            };
            screens.push(screen(
                "periodicity",
                verdict,
                format!("support in {modulus}Z; screens run on F(k·{modulus}), classified {:?}", inner.class),
            ));
            g
        }
    };

    match first_moment(&work, moment_window(work.len()), cfg.moment_margin) {
        Ok(ev) => {
            let s = match &ev {
                MomentEvidence::Finite { mean, slope } => screen(
                    "first_moment",
                    Verdict::InconsistentWithA,
                    format!("finite first moment {mean:.6e} (tail slope {slope:?})"),
                ),
                MomentEvidence::DivergentEvidence { partial_sum, slope } => screen(
                    "first_moment",
                    Verdict::ConsistentWithA,
                    format!("tail slope {slope:.4} >= -2 + margin; partial sum {partial_sum:.4e}"),
                ),
                MomentEvidence::Borderline { partial_sum, slope } => screen(
                    "first_moment",
                    Verdict::Inconclusive,
                    format!("tail slope {slope:.4} within margin of -2; partial sum {partial_sum:.4e}"),
                ),
            };
            screens.push(s);
            report.moment = Some(ev);
        }
        Err(LabError::WindowTooShort { got, need }) => screens.push(screen(
            "first_moment",
            Verdict::Inconclusive,
            format!("fit window has {got} usable points, need {need}"),
        )),
        Err(e) => return Err(e),
    }

    let sector = sector_report(&work, &uniform_positive_grid(cfg.sector_points));
    let half_pi = std::f64::consts::FRAC_PI_2;
    let sector_verdict = match sector.limit_estimate {
        Some(l) if l >= half_pi - cfg.sector_margin => Verdict::InconsistentWithA,
        _ if sector.sup_angle >= half_pi => Verdict::InconsistentWithA,
        Some(_) => Verdict::ConsistentWithA,
        None => Verdict::Inconclusive,
    };
    let summary = SectorSummary::from(&sector);
    screens.push(screen(
        "sector",
        sector_verdict,
        format!(
            "sup |Arg(1-F̂)| = {:.6}, limit estimate {:?}, {} indeterminate points",
            summary.sup_angle, summary.limit_estimate, summary.indeterminate_points
        ),
    ));
    report.sector = Some(summary);

    let norms = diff_chain(&work, &cfg.n_grid, &cfg.conv)?;
    let (ritt, half) = tables_from_chain(&cfg.n_grid, &norms);
    screens.push(trend_screen("ritt", &ritt, &cfg.trend));
    let mut half_screen = trend_screen("half", &half, &cfg.trend);
    half_screen.verdict = Verdict::Informational;
    screens.push(half_screen);
    report.ritt = Some(ritt);
    report.half = Some(half);

    if cfg.run_semigroup {
        let table = semigroup_table(&work, &cfg.t_grid, &cfg.semigroup)?;
        screens.push(trend_screen("semigroup", &table, &cfg.trend));
        report.semigroup = Some(table);
    }

    report.overall = if screens.iter().any(|s| s.verdict == Verdict::InconsistentWithA) {
        Verdict::InconsistentWithA
    } else if screens
        .iter()
        .filter(|s| s.verdict != Verdict::Informational)
        .all(|s| s.verdict == Verdict::ConsistentWithA)
    {
        Verdict::ConsistentWithA
    } else {
        Verdict::Inconclusive
    };
    report.screens = screens;
    Ok(report)
}

impl ClassAReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn screen(&self, name: &str) -> Option<&Screen> {
        self.screens.iter().find(|s| s.name == name)
    }
}
