//! Growth functions and their quantitative classes.
//!
//! A growth function is a continuous nondecreasing map `Φ` of `[0, ∞)` onto
//! itself with `Φ(0) = 0`. The module provides parametric families (pure
//! powers, power-log products, `eᵗ − t − 1`, the entropy function
//! `(1+t)ln(1+t) − t`), tabulated functions with power-law extrapolation, and
//! two derived forms: the product composition whose inverse is `∏ Φᵢ⁻¹`, and
//! `outer ∘ inner⁻¹` used for quantities like `Ψ∘Φ⁻¹`.
//!
//! Class membership (doubling, submultiplicativity, the integral condition
//! `∫₀ᵗ Φ(s)/s² ds ≲ Φ(t)/t`, upper types, quotient bounds, ratio
//! monotonicity) is *sampled* on a log-spaced grid: verdicts are evidence,
//! never proof, and are named accordingly (`holds-on-grid`).

use crate::numerics::{log_spaced, neumaier_sum};
use crate::{Error, Result};

/// Default classification grid: 241 log-spaced points spanning twelve
/// decades. Small enough that two-variable ratios can use the full product
/// grid exhaustively.
pub const DEFAULT_GRID_LO: f64 = 1e-6;
pub const DEFAULT_GRID_HI: f64 = 1e6;
pub const DEFAULT_GRID_POINTS: usize = 241;

/// The default grid used by [`classify`] when callers do not supply one.
pub fn default_grid() -> Vec<f64> {
    log_spaced(DEFAULT_GRID_LO, DEFAULT_GRID_HI, DEFAULT_GRID_POINTS)
}

/// Strictly increasing log-log sample table with power-law extrapolation
/// beyond both ends. The extrapolation exponents are the log-log slopes of
/// the outermost two samples, so pure powers are represented exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    ln_t: Vec<f64>,
    ln_y: Vec<f64>,
    lo_slope: f64,
    hi_slope: f64,
}

impl Tabulated {
    /// Builds a table from `(t, y)` samples, strictly increasing in both
    /// coordinates and strictly positive (the implicit sample `(0, 0)` is
    /// handled by extrapolation).
    pub fn from_samples(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Domain(
                "tabulated function needs at least two samples".into(),
            ));
        }
        for &(t, y) in samples {
            if !(t > 0.0 && y > 0.0 && t.is_finite() && y.is_finite()) {
                return Err(Error::Domain(format!(
                    "tabulated sample ({t}, {y}) must be positive and finite"
                )));
            }
        }
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return Err(Error::Domain(format!(
                    "tabulated samples must be strictly increasing in both \
                     coordinates; offending pair ({}, {}) -> ({}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        let ln_t: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
        let ln_y: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
        let k = ln_t.len();
        let lo_slope = (ln_y[1] - ln_y[0]) / (ln_t[1] - ln_t[0]);
        let hi_slope = (ln_y[k - 1] - ln_y[k - 2]) / (ln_t[k - 1] - ln_t[k - 2]);
        if !(hi_slope > 0.0) {
            return Err(Error::Domain(format!(
                "tabulated upper extrapolation exponent {hi_slope} must be \
                 positive for the function to be onto"
            )));
        }
        if !(lo_slope > 0.0) {
            return Err(Error::Domain(format!(
                "tabulated lower extrapolation exponent {lo_slope} must be \
                 positive so the function vanishes at zero"
            )));
        }
        Ok(Self {
            ln_t,
            ln_y,
            lo_slope,
            hi_slope,
        })
    }

    pub fn len(&self) -> usize {
        self.ln_t.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `ln Φ(t)` by piecewise-linear interpolation in log-log coordinates;
    /// power-law extrapolation outside the table.
    fn log_eval(&self, ln_t: f64) -> f64 {
        let n = self.ln_t.len();
        if ln_t <= self.ln_t[0] {
            return self.ln_y[0] + self.lo_slope * (ln_t - self.ln_t[0]);
        }
        if ln_t >= self.ln_t[n - 1] {
            return self.ln_y[n - 1] + self.hi_slope * (ln_t - self.ln_t[n - 1]);
        }
        let i = match self
            .ln_t
            .binary_search_by(|x| x.partial_cmp(&ln_t).unwrap())
        {
            Ok(i) => return self.ln_y[i],
            Err(i) => i,
        };
        let (a, b) = (self.ln_t[i - 1], self.ln_t[i]);
        let (ya, yb) = (self.ln_y[i - 1], self.ln_y[i]);
        ya + (yb - ya) * (ln_t - a) / (b - a)
    }

    /// `ln Φ⁻¹(y)`: the same interpolation with the roles of the coordinates
    /// swapped, legitimate because both are strictly increasing.
    fn log_eval_inverse(&self, ln_y: f64) -> f64 {
        let n = self.ln_y.len();
        if ln_y <= self.ln_y[0] {
            return self.ln_t[0] + (ln_y - self.ln_y[0]) / self.lo_slope;
        }
        if ln_y >= self.ln_y[n - 1] {
            return self.ln_t[n - 1] + (ln_y - self.ln_y[n - 1]) / self.hi_slope;
        }
        let i = match self
            .ln_y
            .binary_search_by(|x| x.partial_cmp(&ln_y).unwrap())
        {
            Ok(i) => return self.ln_t[i],
            Err(i) => i,
        };
        let (a, b) = (self.ln_y[i - 1], self.ln_y[i]);
        let (ta, tb) = (self.ln_t[i - 1], self.ln_t[i]);
        ta + (tb - ta) * (ln_y - a) / (b - a)
    }
}

/// A growth function: continuous, nondecreasing, `Φ(0) = 0`, `Φ(t) → ∞`.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthFunction {
    /// `t ↦ t^p`, `p > 0`.
    Power { p: f64 },
    /// `t ↦ t^a · lnᵇ(1 + t)`, `a > 0`, `b ≥ 0`.
    PowerLog { a: f64, b: f64 },
    /// `t ↦ eᵗ − t − 1`.
    ExpMinusLinear,
    /// `t ↦ (1 + t)·ln(1 + t) − t`.
    Entropy,
    /// Log-log interpolated sample table.
    Tabulated(Tabulated),
    /// The function whose inverse at `y` is the product of the member
    /// inverses `∏ Φᵢ⁻¹(y)`; forward evaluation inverts that product
    /// numerically.
    InverseProduct(Vec<GrowthFunction>),
    /// `t ↦ outer(inner⁻¹(t))`, the composition against an inverse.
    OfInverse {
        outer: Box<GrowthFunction>,
        inner: Box<GrowthFunction>,
    },
}

/// Default relative tolerance for numeric inversion.
pub const INVERSE_TOL: f64 = 1e-10;
/// Hard iteration cap for bisections; 200 halvings exhaust an f64 bracket.
const BISECT_CAP: usize = 200;

impl GrowthFunction {
    /// Pure power `t^p`. Fails for non-positive or non-finite `p`.
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!(
                "power exponent must be positive and finite, got {p}"
            )));
        }
        Ok(Self::Power { p })
    }

    /// `t^a · lnᵇ(1+t)`. Fails unless `a > 0` and `b ≥ 0`, both finite.
    pub fn power_log(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b >= 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!(
                "power-log parameters need a > 0, b >= 0, got a={a}, b={b}"
            )));
        }
        Ok(Self::PowerLog { a, b })
    }

    pub fn exp_minus_linear() -> Self {
        Self::ExpMinusLinear
    }

    pub fn entropy() -> Self {
        Self::Entropy
    }

    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        Ok(Self::Tabulated(Tabulated::from_samples(samples)?))
    }

    /// `outer ∘ inner⁻¹` as a first-class growth function. For two pure
    /// powers the closed form `t^{q/p}` is used.
    pub fn of_inverse(outer: GrowthFunction, inner: GrowthFunction) -> Self {
        if let (Self::Power { p: q }, Self::Power { p }) = (&outer, &inner) {
            return Self::Power { p: q / p };
        }
        Self::OfInverse {
            outer: Box::new(outer),
            inner: Box::new(inner),
        }
    }

    /// Evaluates `Φ(t)`. `t` must be finite and nonnegative.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!(
                "growth functions are evaluated on finite nonnegative \
                 arguments, got {t}"
            )));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        Ok(match self {
            Self::Power { p } => t.powf(*p),
            Self::PowerLog { a, b } => t.powf(*a) * t.ln_1p().powf(*b),
            Self::ExpMinusLinear => t.exp_m1() - t,
            Self::Entropy => (1.0 + t) * t.ln_1p() - t,
            Self::Tabulated(tab) => tab.log_eval(t.ln()).exp(),
            Self::InverseProduct(_) => self.eval_by_inverting(t)?,
            Self::OfInverse { outer, inner } => outer.eval(inner.inverse(t, INVERSE_TOL)?)?,
        })
    }

    /// `ln Φ(t)` for `t > 0`, computed without overflowing where a closed
    /// log-domain form exists. Essential for ratio classification at large
    /// arguments (for example `eᵗ − t − 1` at `t = 10⁶`).
    pub fn log_eval(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!(
                "log-domain evaluation needs a positive finite argument, got {t}"
            )));
        }
        Ok(match self {
            Self::Power { p } => p * t.ln(),
            Self::PowerLog { a, b } => a * t.ln() + b * t.ln_1p().ln(),
            Self::ExpMinusLinear => {
                if t > 40.0 {
                    // e^t − t − 1 = e^t · (1 − (t+1)e^{−t});  the correction
                    // is far below working precision once t exceeds ~40.
                    t + (-(t + 1.0) * (-t).exp()).ln_1p()
                } else {
                    (t.exp_m1() - t).ln()
                }
            }
            Self::Entropy => {
                // (1+t)ln(1+t) − t = (1+t)·(ln(1+t) − t/(1+t)), exact in
                // log form for arbitrarily large t.
                let l = t.ln_1p();
                let v = l - t / (1.0 + t);
                if v > 0.0 {
                    l + v.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::Tabulated(tab) => tab.log_eval(t.ln()),
            Self::InverseProduct(_) | Self::OfInverse { .. } => {
                let v = self.eval(t)?;
                v.ln()
            }
        })
    }

    /// Evaluates `Φ⁻¹(y)` to relative tolerance `tol`: closed forms where
    /// available, otherwise a doubling bracket from `1` followed by
    /// bisection. `inverse(Φ, 0) = 0`.
    pub fn inverse(&self, y: f64, tol: f64) -> Result<f64> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Usage(format!(
                "inversion tolerance must be positive, got {tol}"
            )));
        }
        if !(y >= 0.0) || y.is_nan() {
            return Err(Error::Domain(format!(
                "growth functions are inverted at nonnegative values, got {y}"
            )));
        }
        if y == 0.0 {
            return Ok(0.0);
        }
        match self {
            Self::Power { p } => Ok(y.powf(1.0 / p)),
            Self::Tabulated(tab) => {
                if y.is_infinite() {
                    return Err(Error::Overflow(
                        "cannot invert a growth function at infinity".into(),
                    ));
                }
                Ok(tab.log_eval_inverse(y.ln()).exp())
            }
            Self::InverseProduct(parts) => {
                let mut prod = 1.0;
                for part in parts {
                    prod *= part.inverse(y, tol)?;
                }
                Ok(prod)
            }
            Self::OfInverse { outer, inner } => inner.eval(outer.inverse(y, tol)?),
            _ => self.invert_by_bisection(y, tol),
        }
    }

    /// Shared numeric inversion: doubling/halving bracket from 1, then
    /// bisection until `|Φ(t) − y| ≤ tol·max(y, f64::MIN_POSITIVE)`.
    fn invert_by_bisection(&self, y: f64, tol: f64) -> Result<f64> {
        if y.is_infinite() {
            return Err(Error::Overflow(
                "cannot invert a growth function at infinity".into(),
            ));
        }
        let target = tol * y.max(f64::MIN_POSITIVE);
        let mut t = 1.0f64;
        let mut v = self.eval(t)?;
        let (mut lo, mut hi);
        if v < y {
            loop {
                let next = t * 2.0;
                if !next.is_finite() {
                    return Err(Error::Overflow(format!(
                        "no bracket for inverse at {y}: function still below \
                         the target at the largest representable argument"
                    )));
                }
                let w = self.eval(next)?;
                if w >= y {
                    lo = t;
                    hi = next;
                    break;
                }
                t = next;
                v = w;
            }
            let _ = v;
        } else {
            loop {
                let next = t / 2.0;
                if next == 0.0 {
                    // Φ stays above y arbitrarily close to 0; y is below
                    // resolvable scale, and 0 is the honest answer.
                    return Ok(0.0);
                }
                let w = self.eval(next)?;
                if w <= y {
                    lo = next;
                    hi = t;
                    break;
                }
                t = next;
            }
        }
        for _ in 0..BISECT_CAP {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let w = self.eval(mid)?;
            if (w - y).abs() <= target {
                return Ok(mid);
            }
            if w < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Forward evaluation of an inverse-product composition: the unique `y`
    /// with `∏ Φᵢ⁻¹(y) = t`, found by doubling bracket and bisection on `y`.
    fn eval_by_inverting(&self, t: f64) -> Result<f64> {
        let parts = match self {
            Self::InverseProduct(parts) => parts,
            _ => unreachable!("eval_by_inverting is only called on InverseProduct"),
        };
        let inv_prod = |y: f64| -> Result<f64> {
            let mut prod = 1.0;
            for part in parts {
                prod *= part.inverse(y, INVERSE_TOL)?;
            }
            Ok(prod)
        };
        let mut y = 1.0f64;
        let mut v = inv_prod(y)?;
        let (mut lo, mut hi);
        if v < t {
            loop {
                let next = y * 2.0;
                if !next.is_finite() {
                    return Err(Error::Overflow(format!(
                        "composed growth function cannot reach argument {t}"
                    )));
                }
                let w = inv_prod(next)?;
                if w >= t {
                    lo = y;
                    hi = next;
                    break;
                }
                y = next;
                v = w;
            }
            let _ = v;
        } else {
            loop {
                let next = y / 2.0;
                if next == 0.0 {
                    return Ok(0.0);
                }
                let w = inv_prod(next)?;
                if w <= t {
                    lo = next;
                    hi = y;
                    break;
                }
                y = next;
            }
        }
        for _ in 0..BISECT_CAP {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let w = inv_prod(mid)?;
            if (w - t).abs() <= INVERSE_TOL * t.max(f64::MIN_POSITIVE) {
                return Ok(mid);
            }
            if w < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Plain-text descriptor, the external serialization of parametric
    /// families. Derived compositions render as informational pseudo-forms
    /// that are not round-trippable.
    pub fn descriptor(&self) -> String {
        match self {
            Self::Power { p } => format!("power:p={p}"),
            Self::PowerLog { a, b } => format!("powerlog:a={a},b={b}"),
            Self::ExpMinusLinear => "expml".into(),
            Self::Entropy => "entropy".into(),
            Self::Tabulated(tab) => format!("table:{}pts", tab.len()),
            Self::InverseProduct(parts) => {
                let inner: Vec<String> = parts.iter().map(|p| p.descriptor()).collect();
                format!("inverse-product({})", inner.join(";"))
            }
            Self::OfInverse { outer, inner } => {
                format!("of-inverse({};{})", outer.descriptor(), inner.descriptor())
            }
        }
    }

    /// Parses a descriptor: `power:p=2`, `powerlog:a=2,b=1`, `expml`,
    /// `entropy`, or `table:<path>` (two-column CSV, strictly increasing).
    pub fn from_descriptor(desc: &str) -> Result<Self> {
        let desc = desc.trim();
        if desc == "expml" {
            return Ok(Self::ExpMinusLinear);
        }
        if desc == "entropy" {
            return Ok(Self::Entropy);
        }
        if let Some(rest) = desc.strip_prefix("power:") {
            let p = parse_kv(rest, "p")?;
            return Self::power(p);
        }
        if let Some(rest) = desc.strip_prefix("powerlog:") {
            let a = parse_kv(rest, "a")?;
            let b = parse_kv(rest, "b")?;
            return Self::power_log(a, b);
        }
        if let Some(path) = desc.strip_prefix("table:") {
            let text = std::fs::read_to_string(path.trim())?;
            let mut samples = Vec::new();
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let mut cols = line.split(',');
                let t: f64 = cols
                    .next()
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::Parse(format!("table line {}: bad abscissa", lineno + 1))
                    })?;
                let y: f64 = cols
                    .next()
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::Parse(format!("table line {}: bad ordinate", lineno + 1))
                    })?;
                samples.push((t, y));
            }
            return Self::tabulated(&samples);
        }
        Err(Error::Parse(format!(
            "unrecognized growth descriptor `{desc}`; expected power:p=..., \
             powerlog:a=...,b=..., expml, entropy, or table:<path>"
        )))
    }
}

fn parse_kv(args: &str, key: &str) -> Result<f64> {
    for part in args.split(',') {
        let part = part.trim();
        if let Some(v) = part.strip_prefix(&format!("{key}=")) {
            return v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad numeric value for `{key}`: {v}")));
        }
    }
    Err(Error::Parse(format!(
        "missing parameter `{key}` in descriptor arguments `{args}`"
    )))
}

/// The classified property. Upper-type variants carry the exponent `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GrowthProperty {
    /// `Φ(2t) ≤ K·Φ(t)`; estimate is the grid supremum of `Φ(2t)/Φ(t)`.
    Delta2,
    /// `Φ(st) ≤ C·Φ(s)Φ(t)`; two-variable ratio over the grid product.
    DeltaPrime,
    /// `∫₀ᵗ Φ(s)/s² ds ≤ C·Φ(t)/t`.
    Nabla2,
    /// `Φ(st) ≤ C·t^q·Φ(s)` for `t ≥ 1`.
    UpperType(f64),
    /// `Φ(s/t) ≤ C·Φ(s)/t^q` for `s, t ≥ 1`.
    UTilde(f64),
    /// `Φ(s/t) ≤ C·Φ(s)/Φ(t)` over all positive `s, t`.
    QuotientBound,
    /// `t ↦ aux(t)/Φ(t)` nondecreasing; estimate is the worst consecutive
    /// decrease factor, so the property holds when the estimate stays near 1.
    RatioMonotone,
}

impl GrowthProperty {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Delta2 => "delta2",
            Self::DeltaPrime => "delta-prime",
            Self::Nabla2 => "nabla2",
            Self::UpperType(_) => "upper-type",
            Self::UTilde(_) => "u-tilde",
            Self::QuotientBound => "quotient-bound",
            Self::RatioMonotone => "ratio-monotone",
        }
    }
}

/// Outcome of sampling a class ratio on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The defining ratio stayed bounded on the grid and did not inflate
    /// when the grid was extended upward.
    HoldsOnGrid,
    /// The property has a hard target (ratio monotonicity) and the grid
    /// exhibits a violation.
    Fails,
    /// The estimate is infinite, or grew by more than 10% when the grid's
    /// upper end was multiplied by 10 — the constant escapes with the grid.
    GrowsWithGrid,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::HoldsOnGrid => "holds-on-grid",
            Self::Fails => "fails",
            Self::GrowsWithGrid => "grows-with-grid",
        })
    }
}

/// Report of one classification run.
#[derive(Debug, Clone)]
pub struct GrowthClassReport {
    pub property: GrowthProperty,
    /// The smallest constant witnessed on the grid: exactly the grid
    /// supremum of the defining ratio, reproducible given the grid.
    pub estimate: f64,
    pub verdict: Verdict,
    /// The sample abscissa that produced the estimate.
    pub grid: Vec<f64>,
}

/// Tolerance band above 1 within which a ratio-monotonicity estimate still
/// counts as nondecreasing (absorbs log-domain rounding).
const RATIO_MONOTONE_SLACK: f64 = 1e-9;
/// A regrown-grid estimate more than 10% above the base estimate flags the
/// constant as growing with the grid.
const REGROW_INFLATION: f64 = 1.10;

/// Samples the defining ratio of `property` for `phi` on `grid` and reports
/// the witnessed constant.
///
/// `aux` supplies the second function for [`GrowthProperty::RatioMonotone`]
/// and is ignored otherwise. The grid needs at least three positive points;
/// upper-type properties require their exponent `q ≥ 1`.
pub fn classify(
    phi: &GrowthFunction,
    property: GrowthProperty,
    grid: &[f64],
    aux: Option<&GrowthFunction>,
) -> Result<GrowthClassReport> {
    if grid.len() < 3 || grid.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Usage(
            "classification grid needs at least three positive finite points".into(),
        ));
    }
    match property {
        GrowthProperty::UpperType(q) | GrowthProperty::UTilde(q) => {
            if !(q >= 1.0 && q.is_finite()) {
                return Err(Error::Usage(format!(
                    "upper-type exponent must satisfy q >= 1, got {q}"
                )));
            }
        }
        GrowthProperty::RatioMonotone => {
            if aux.is_none() {
                return Err(Error::Usage(
                    "ratio monotonicity needs the second function".into(),
                ));
            }
        }
        _ => {}
    }

    let estimate = property_estimate(phi, property, grid, aux)?;
    let verdict = if matches!(property, GrowthProperty::RatioMonotone)
        && estimate > 1.0 + RATIO_MONOTONE_SLACK
    {
        // Ratio monotonicity has a hard target: any witnessed decrease is a
        // failure regardless of how the estimate scales with the grid.
        Verdict::Fails
    } else if !estimate.is_finite() {
        Verdict::GrowsWithGrid
    } else {
        // Re-run with the upper end stretched by a decade; a constant that
        // inflates under that extension is escaping with the grid.
        let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = grid.iter().cloned().fold(0.0f64, f64::max);
        let extended = log_spaced(lo, hi * 10.0, grid.len());
        let regrown = property_estimate(phi, property, &extended, aux)?;
        if !regrown.is_finite() || regrown > estimate * REGROW_INFLATION {
            Verdict::GrowsWithGrid
        } else {
            Verdict::HoldsOnGrid
        }
    };
    Ok(GrowthClassReport {
        property,
        estimate,
        verdict,
        grid: grid.to_vec(),
    })
}

fn property_estimate(
    phi: &GrowthFunction,
    property: GrowthProperty,
    grid: &[f64],
    aux: Option<&GrowthFunction>,
) -> Result<f64> {
    // All ratios are formed in the log domain so that arguments near the
    // grid's upper end cannot overflow before the division.
    let lphi = |t: f64| -> Result<f64> {
        let v = phi.log_eval(t)?;
        if v == f64::NEG_INFINITY {
            return Err(Error::Degenerate(format!(
                "growth function vanishes at positive argument {t}"
            )));
        }
        Ok(v)
    };
    let mut sup = f64::NEG_INFINITY;
    match property {
        GrowthProperty::Delta2 => {
            for &t in grid {
                let r = lphi(2.0 * t)? - lphi(t)?;
                sup = sup.max(r);
            }
            Ok(sup.exp())
        }
        GrowthProperty::DeltaPrime => {
            let lv: Vec<f64> = grid.iter().map(|&t| lphi(t)).collect::<Result<_>>()?;
            for (i, &s) in grid.iter().enumerate() {
                for (j, &t) in grid.iter().enumerate() {
                    let r = lphi(s * t)? - lv[i] - lv[j];
                    sup = sup.max(r);
                }
            }
            Ok(sup.exp())
        }
        GrowthProperty::Nabla2 => nabla2_estimate(phi, grid),
        GrowthProperty::UpperType(q) => {
            let lv: Vec<f64> = grid.iter().map(|&t| lphi(t)).collect::<Result<_>>()?;
            for (i, &s) in grid.iter().enumerate() {
                for &t in grid.iter().filter(|&&t| t >= 1.0) {
                    let r = lphi(s * t)? - q * t.ln() - lv[i];
                    sup = sup.max(r);
                }
            }
            Ok(sup.exp())
        }
        GrowthProperty::UTilde(q) => {
            for &s in grid.iter().filter(|&&s| s >= 1.0) {
                let ls = lphi(s)?;
                for &t in grid.iter().filter(|&&t| t >= 1.0) {
                    let r = lphi(s / t)? + q * t.ln() - ls;
                    sup = sup.max(r);
                }
            }
            Ok(sup.exp())
        }
        GrowthProperty::QuotientBound => {
            let lv: Vec<f64> = grid.iter().map(|&t| lphi(t)).collect::<Result<_>>()?;
            for (i, &s) in grid.iter().enumerate() {
                for (j, &t) in grid.iter().enumerate() {
                    let r = lphi(s / t)? + lv[j] - lv[i];
                    sup = sup.max(r);
                }
            }
            Ok(sup.exp())
        }
        GrowthProperty::RatioMonotone => {
            let psi = aux.expect("presence checked by classify");
            // Worst consecutive decrease factor of aux/Φ along the grid;
            // nondecreasing ratios keep every factor at or below 1.
            let mut worst = f64::NEG_INFINITY;
            let mut prev: Option<f64> = None;
            for &t in grid {
                let r = psi.log_eval(t)? - lphi(t)?;
                if let Some(p) = prev {
                    worst = worst.max(p - r);
                }
                prev = Some(r);
            }
            Ok(worst.exp())
        }
    }
}

/// Grid supremum of `(t/Φ(t))·∫₀ᵗ Φ(s)/s² ds`.
///
/// The integral below the smallest grid point is closed in power form using
/// the local log-log slope; a slope at or below 1 means the tail diverges
/// and the estimate is infinite. Interior segments use log-spaced trapezoid
/// refinement until the relative change drops below `1e-6`.
fn nabla2_estimate(phi: &GrowthFunction, grid: &[f64]) -> Result<f64> {
    let mut ts: Vec<f64> = grid.to_vec();
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ts.dedup();
    let t0 = ts[0];

    // Local growth exponent a = d ln Φ / d ln t at the grid's lower end.
    let h: f64 = 1e-3;
    let a = (phi.log_eval(t0 * h.exp())? - phi.log_eval(t0 * (-h).exp())?) / (2.0 * h);
    if a <= 1.0 + 1e-9 {
        return Ok(f64::INFINITY);
    }
    // Power-law tail: Φ(s) ≈ Φ(t0)·(s/t0)^a gives ∫₀^{t0} Φ/s² = Φ(t0)/(t0(a−1)).
    let phi_t0 = phi.log_eval(t0)?.exp();
    let mut integral = phi_t0 / (t0 * (a - 1.0));

    let mut sup: f64 = integral * t0 / phi_t0;
    for w in ts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        integral += trapezoid_log_refined(phi, lo, hi)?;
        let t = hi;
        let ratio_ln = integral.ln() + t.ln() - phi.log_eval(t)?;
        sup = sup.max(ratio_ln.exp());
    }
    Ok(sup)
}

/// `∫_{lo}^{hi} Φ(s)/s² ds` by trapezoid in `u = ln s`, doubling the panel
/// count until the value settles to a relative 1e-6.
fn trapezoid_log_refined(phi: &GrowthFunction, lo: f64, hi: f64) -> Result<f64> {
    // In u = ln s the integrand becomes Φ(e^u)·e^{−u}.
    let f = |u: f64| -> Result<f64> { Ok((phi.log_eval(u.exp())? - u).exp()) };
    let (a, b) = (lo.ln(), hi.ln());
    let mut n = 2usize;
    let mut prev = {
        let fa = f(a)?;
        let fb = f(b)?;
        0.5 * (fa + fb) * (b - a)
    };
    for _ in 0..20 {
        n *= 2;
        let step = (b - a) / n as f64;
        let mut terms = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            terms.push(w * f(a + step * i as f64)?);
        }
        let cur = neumaier_sum(terms) * step;
        if (cur - prev).abs() <= 1e-6 * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// Pointwise complementary (Legendre-type conjugate) value
/// `sup_{t≥0} { s·t − Φ(t) }`, for convex `Φ` (convexity is the caller's
/// responsibility). Golden-section maximization on a doubling bracket;
/// `tol` is a relative tolerance on the maximizing argument.
///
/// A supremum still increasing at astronomically large arguments is reported
/// as [`Error::Unbounded`] — this is how `Φ` of linear growth behaves for
/// slopes past its asymptote.
pub fn complementary(phi: &GrowthFunction, s: f64, tol: f64) -> Result<f64> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!(
            "complementary function argument must be finite and nonnegative, got {s}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Usage(format!(
            "complementary tolerance must be positive, got {tol}"
        )));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let g = |t: f64| -> Result<f64> { Ok(s * t - phi.eval(t)?) };

    // Push the right end outward until the objective stops improving there.
    let mut hi = 1.0f64;
    let mut g_hi = g(hi)?;
    loop {
        let next = hi * 2.0;
        if next > 1e300 {
            return Err(Error::Unbounded(format!(
                "supremum of s·t − Φ(t) still increasing at t = {hi:e} for s = {s}"
            )));
        }
        let g_next = g(next)?;
        if g_next <= g_hi {
            break;
        }
        hi = next;
        g_hi = g_next;
    }
    let mut a = 0.0f64;
    let mut b = hi * 2.0;

    // Golden-section search; the objective is unimodal for convex Φ.
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = g(x1)?;
    let mut f2 = g(x2)?;
    for _ in 0..300 {
        if b - a <= tol * b.max(1.0) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = g(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = g(x2)?;
        }
    }
    Ok(f1.max(f2).max(0.0))
}

/// Number of samples used when memoizing a complementary function into a
/// table.
const COMPLEMENTARY_SAMPLES: usize = 201;

/// Materializes the complementary function as a tabulated growth function
/// on a wide log-spaced grid, for callers that apply it (or its inverse)
/// repeatedly. Pure-power conjugates are exactly representable because the
/// table interpolates linearly in log-log coordinates.
pub fn complementary_function(phi: &GrowthFunction) -> Result<GrowthFunction> {
    let grid = log_spaced(1e-6, 1e6, COMPLEMENTARY_SAMPLES);
    let mut samples = Vec::with_capacity(grid.len());
    let mut last_y = 0.0f64;
    for &s in &grid {
        // An exponential-type conjugate overflows past some slope; the
        // table simply ends there and extrapolates from its edge.
        let y = match complementary(phi, s, 1e-12) {
            Ok(y) => y,
            Err(Error::Unbounded(_)) if !samples.is_empty() => break,
            Err(e) => return Err(e),
        };
        // Strictness filter: drop samples that fail to increase, which can
        // happen at denormal scale where the conjugate is numerically flat.
        if y > last_y && y.is_finite() && y > 0.0 {
            samples.push((s, y));
            last_y = y;
        }
    }
    if samples.len() < 2 {
        return Err(Error::Degenerate(
            "complementary function is numerically flat on the sample grid".into(),
        ));
    }
    GrowthFunction::tabulated(&samples)
}

/// The composed growth function `Φ` with `Φ⁻¹(y) = ∏ Φᵢ⁻¹(y)`.
///
/// All-power input lists use the closed form `1/p = Σ 1/pᵢ`; a single
/// function composes to itself.
pub fn product_compose(parts: &[GrowthFunction]) -> Result<GrowthFunction> {
    if parts.is_empty() {
        return Err(Error::Usage(
            "product composition needs at least one function".into(),
        ));
    }
    if parts.len() == 1 {
        return Ok(parts[0].clone());
    }
    let mut inv_p = 0.0f64;
    let mut all_power = true;
    for part in parts {
        match part {
            GrowthFunction::Power { p } => inv_p += 1.0 / p,
            _ => {
                all_power = false;
                break;
            }
        }
    }
    if all_power {
        return GrowthFunction::power(1.0 / inv_p);
    }
    Ok(GrowthFunction::InverseProduct(parts.to_vec()))
}

/// `1 / Ψ(Φ⁻¹(1/t))` for `t > 0`, with the continuous extension `0 ↦ 0`.
pub fn omega3(psi: &GrowthFunction, phi: &GrowthFunction, t: f64) -> Result<f64> {
    if !(t >= 0.0) || t.is_nan() {
        return Err(Error::Domain(format!(
            "omega3 is defined for nonnegative arguments, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let inner = phi.inverse(1.0 / t, INVERSE_TOL)?;
    Ok(1.0 / psi.eval(inner)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Relative comparison helper: absolute below 1, relative above.
    fn close(a: f64, b: f64, tol: f64) -> bool {
        let scale = a.abs().max(b.abs()).max(1.0);
        (a - b).abs() <= tol * scale
    }

    #[test]
    fn power_eval_is_exact() {
        let phi = GrowthFunction::power(2.0).unwrap();
        assert_eq!(phi.eval(3.0).unwrap(), 9.0);
        assert_eq!(phi.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn every_family_vanishes_at_zero() {
        let fns = [
            GrowthFunction::power(1.7).unwrap(),
            GrowthFunction::power_log(2.0, 1.0).unwrap(),
            GrowthFunction::exp_minus_linear(),
            GrowthFunction::entropy(),
            GrowthFunction::tabulated(&[(1.0, 1.0), (2.0, 4.0)]).unwrap(),
        ];
        for phi in &fns {
            assert_eq!(phi.eval(0.0).unwrap(), 0.0, "{}", phi.descriptor());
        }
    }

    #[test]
    fn exp_minus_linear_at_one_matches_closed_form() {
        let phi = GrowthFunction::exp_minus_linear();
        // e − 2
        let expected = 0.718_281_828_459_045_2_f64;
        assert!(close(phi.eval(1.0).unwrap(), expected, 1e-14));
    }

    #[test]
    fn eval_rejects_negative_and_non_finite_arguments() {
        let phi = GrowthFunction::power(2.0).unwrap();
        assert!(matches!(phi.eval(-1.0), Err(Error::Domain(_))));
        assert!(matches!(phi.eval(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(phi.eval(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn inverse_of_square_at_four_is_two() {
        let phi = GrowthFunction::power(2.0).unwrap();
        assert!(close(phi.inverse(4.0, 1e-10).unwrap(), 2.0, 1e-10));
        assert_eq!(
            GrowthFunction::power(3.0).unwrap().inverse(0.0, 1e-10).unwrap(),
            0.0
        );
    }

    #[test]
    fn inverse_rejects_nonpositive_tolerance() {
        let phi = GrowthFunction::entropy();
        assert!(matches!(phi.inverse(1.0, 0.0), Err(Error::Usage(_))));
        assert!(matches!(phi.inverse(1.0, -1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn entropy_inverse_matches_fine_grid_scan() {
        // Independent oracle: scan a fine grid for the smallest t with
        // (1+t)ln(1+t) − t >= 1, then compare against the bisection result.
        let phi = GrowthFunction::entropy();
        let t = phi.inverse(1.0, 1e-12).unwrap();
        let mut scan = f64::NAN;
        let n = 1_000_000;
        for i in 0..=n {
            let x = 1.0 + (i as f64) / (n as f64); // root lies in [1, 2]
            if (1.0 + x) * x.ln_1p() - x >= 1.0 {
                scan = x;
                break;
            }
        }
        assert!(close(t, scan, 2e-6), "bisection {t} vs scan {scan}");
        assert!(close(phi.eval(t).unwrap(), 1.0, 1e-9));
    }

    #[test]
    fn log_eval_agrees_with_direct_eval_in_range() {
        let fns = [
            GrowthFunction::power(2.5).unwrap(),
            GrowthFunction::power_log(1.5, 2.0).unwrap(),
            GrowthFunction::exp_minus_linear(),
            GrowthFunction::entropy(),
        ];
        for phi in &fns {
            for &t in &[0.01, 0.5, 1.0, 7.0, 35.0] {
                let direct = phi.eval(t).unwrap().ln();
                let logd = phi.log_eval(t).unwrap();
                assert!(
                    close(direct, logd, 1e-9),
                    "{} at {t}: {direct} vs {logd}",
                    phi.descriptor()
                );
            }
        }
        // Beyond f64 overflow the log-domain form must keep working.
        let big = GrowthFunction::exp_minus_linear().log_eval(1e4).unwrap();
        assert!(close(big, 1e4, 1e-9));
    }

    #[test]
    fn delta2_of_square_is_four() {
        let phi = GrowthFunction::power(2.0).unwrap();
        let report = classify(&phi, GrowthProperty::Delta2, &default_grid(), None).unwrap();
        assert!(close(report.estimate, 4.0, 1e-9));
        assert_eq!(report.verdict, Verdict::HoldsOnGrid);
    }

    #[test]
    fn powers_are_exactly_submultiplicative() {
        let phi = GrowthFunction::power(2.0).unwrap();
        let report = classify(&phi, GrowthProperty::DeltaPrime, &default_grid(), None).unwrap();
        assert!(close(report.estimate, 1.0, 1e-9));
        assert_eq!(report.verdict, Verdict::HoldsOnGrid);
    }

    #[test]
    fn exponential_doubling_escapes_the_grid() {
        let phi = GrowthFunction::exp_minus_linear();
        let report = classify(&phi, GrowthProperty::Delta2, &default_grid(), None).unwrap();
        assert_eq!(report.verdict, Verdict::GrowsWithGrid);
    }

    #[test]
    fn integral_condition_holds_for_superlinear_powers() {
        for phi in [
            GrowthFunction::power_log(2.0, 0.0).unwrap(),
            GrowthFunction::power_log(1.5, 1.0).unwrap(),
        ] {
            let report = classify(&phi, GrowthProperty::Nabla2, &default_grid(), None).unwrap();
            assert_eq!(report.verdict, Verdict::HoldsOnGrid, "{}", phi.descriptor());
            assert!(report.estimate.is_finite());
        }
    }

    #[test]
    fn integral_condition_diverges_for_linear_growth() {
        let phi = GrowthFunction::power(1.0).unwrap();
        let report = classify(&phi, GrowthProperty::Nabla2, &default_grid(), None).unwrap();
        assert_eq!(report.verdict, Verdict::GrowsWithGrid);
    }

    #[test]
    fn nabla2_estimate_is_sharp_for_pure_powers() {
        // For t^p the ratio is identically 1/(p−1).
        let phi = GrowthFunction::power(3.0).unwrap();
        let report = classify(&phi, GrowthProperty::Nabla2, &default_grid(), None).unwrap();
        assert!(
            close(report.estimate, 0.5, 1e-4),
            "estimate {}",
            report.estimate
        );
    }

    #[test]
    fn ratio_monotone_detects_order() {
        // classify computes aux/phi, so phi as function and psi as aux
        // samples the quotient Ψ/Φ.
        let phi = GrowthFunction::power(2.0).unwrap();
        let psi = GrowthFunction::power(3.0).unwrap();
        let good = classify(
            &phi,
            GrowthProperty::RatioMonotone,
            &default_grid(),
            Some(&psi),
        )
        .unwrap();
        assert_eq!(good.verdict, Verdict::HoldsOnGrid, "t^3/t^2 nondecreasing");
        let bad = classify(
            &psi,
            GrowthProperty::RatioMonotone,
            &default_grid(),
            Some(&phi),
        )
        .unwrap();
        assert_eq!(bad.verdict, Verdict::Fails, "t^2/t^3 decreasing");
    }

    #[test]
    fn upper_type_of_powers_is_tight() {
        let phi = GrowthFunction::power(2.0).unwrap();
        let report = classify(&phi, GrowthProperty::UpperType(2.0), &default_grid(), None).unwrap();
        assert!(close(report.estimate, 1.0, 1e-9));
        assert_eq!(report.verdict, Verdict::HoldsOnGrid);
        let report = classify(&phi, GrowthProperty::UTilde(2.0), &default_grid(), None).unwrap();
        assert!(close(report.estimate, 1.0, 1e-9));
    }

    #[test]
    fn quotient_bound_finite_for_powers() {
        let phi = GrowthFunction::power(2.0).unwrap();
        let report = classify(&phi, GrowthProperty::QuotientBound, &default_grid(), None).unwrap();
        assert!(close(report.estimate, 1.0, 1e-9)); // Φ(s/t)Φ(t)/Φ(s) = 1 for powers
        assert_eq!(report.verdict, Verdict::HoldsOnGrid);
    }

    #[test]
    fn conjugate_of_half_square_is_self_dual() {
        // t²/2 as a table; log-log interpolation represents it exactly.
        let samples: Vec<(f64, f64)> = log_spaced(1e-6, 1e6, 41)
            .into_iter()
            .map(|t| (t, 0.5 * t * t))
            .collect();
        let phi = GrowthFunction::tabulated(&samples).unwrap();
        let v = complementary(&phi, 2.0, 1e-10).unwrap();
        assert!(close(v, 2.0, 1e-6), "got {v}");
    }

    #[test]
    fn conjugate_of_scaled_power_matches_closed_form() {
        // Φ(t) = t³/3 has conjugate s^{3/2}/(3/2); at s = 1 that is 2/3.
        let samples: Vec<(f64, f64)> = log_spaced(1e-6, 1e6, 41)
            .into_iter()
            .map(|t| (t, t.powi(3) / 3.0))
            .collect();
        let phi = GrowthFunction::tabulated(&samples).unwrap();
        let v = complementary(&phi, 1.0, 1e-10).unwrap();
        assert!(close(v, 2.0 / 3.0, 1e-6), "got {v}");
    }

    #[test]
    fn conjugate_of_exp_minus_linear_is_entropy() {
        let phi = GrowthFunction::exp_minus_linear();
        let ent = GrowthFunction::entropy();
        for &s in &[0.5, 1.0, 3.0] {
            let v = complementary(&phi, s, 1e-10).unwrap();
            let expected = ent.eval(s).unwrap();
            assert!(close(v, expected, 1e-6), "s={s}: {v} vs {expected}");
        }
    }

    #[test]
    fn conjugate_of_linear_growth_is_unbounded_past_the_slope() {
        let phi = GrowthFunction::power(1.0).unwrap();
        assert_eq!(complementary(&phi, 0.5, 1e-10).unwrap(), 0.0);
        assert!(matches!(
            complementary(&phi, 2.0, 1e-10),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn product_composition_closed_forms() {
        let a = GrowthFunction::power(2.0).unwrap();
        let b = GrowthFunction::power(2.0).unwrap();
        let c = product_compose(&[a, b]).unwrap();
        match c {
            GrowthFunction::Power { p } => assert!(close(p, 1.0, 1e-14)),
            other => panic!("expected a pure power, got {}", other.descriptor()),
        }
        let c = product_compose(&[
            GrowthFunction::power(3.0).unwrap(),
            GrowthFunction::power(6.0).unwrap(),
        ])
        .unwrap();
        match c {
            GrowthFunction::Power { p } => assert!(close(p, 2.0, 1e-14)),
            other => panic!("expected t², got {}", other.descriptor()),
        }
    }

    #[test]
    fn single_function_composes_to_itself() {
        let phi = GrowthFunction::entropy();
        let c = product_compose(std::slice::from_ref(&phi)).unwrap();
        for &t in &[0.3, 1.0, 5.0] {
            assert_eq!(c.eval(t).unwrap(), phi.eval(t).unwrap());
        }
    }

    #[test]
    fn mixed_composition_inverse_is_the_product_of_inverses() {
        let parts = vec![GrowthFunction::power(2.0).unwrap(), GrowthFunction::entropy()];
        let composed = product_compose(&parts).unwrap();
        for &y in &[0.25, 1.0, 4.0] {
            let prod: f64 = parts
                .iter()
                .map(|p| p.inverse(y, 1e-12).unwrap())
                .product();
            let inv = composed.inverse(y, 1e-12).unwrap();
            assert!(close(inv, prod, 1e-9), "y={y}: {inv} vs {prod}");
            // Forward evaluation inverts the product relation.
            let back = composed.eval(inv).unwrap();
            assert!(close(back, y, 1e-7), "round trip at y={y}: {back}");
        }
    }

    #[test]
    fn omega3_closed_forms() {
        let sq = GrowthFunction::power(2.0).unwrap();
        let id = GrowthFunction::power(1.0).unwrap();
        assert!(close(omega3(&sq, &id, 3.0).unwrap(), 9.0, 1e-9));
        let ent = GrowthFunction::entropy();
        assert!(close(omega3(&ent, &ent, 0.7).unwrap(), 0.7, 1e-8));
        let p4 = GrowthFunction::power(4.0).unwrap();
        assert!(close(omega3(&p4, &sq, 4.0).unwrap(), 16.0, 1e-9));
        assert_eq!(omega3(&p4, &sq, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn of_inverse_composition_collapses_powers() {
        let psi = GrowthFunction::power(4.0).unwrap();
        let phi = GrowthFunction::power(2.0).unwrap();
        let theta = GrowthFunction::of_inverse(psi, phi);
        match theta {
            GrowthFunction::Power { p } => assert!(close(p, 2.0, 1e-14)),
            other => panic!("expected t², got {}", other.descriptor()),
        }
    }

    #[test]
    fn of_inverse_general_case_round_trips() {
        let theta = GrowthFunction::of_inverse(
            GrowthFunction::entropy(),
            GrowthFunction::power(2.0).unwrap(),
        );
        // Θ(t) = entropy(√t); check against the direct composition.
        let ent = GrowthFunction::entropy();
        for &t in &[0.25f64, 1.0, 9.0] {
            let expected = ent.eval(t.sqrt()).unwrap();
            assert!(close(theta.eval(t).unwrap(), expected, 1e-8));
        }
        // Θ⁻¹(y) = (entropy⁻¹(y))².
        let y = 1.3;
        let expected = ent.inverse(y, 1e-12).unwrap().powi(2);
        assert!(close(theta.inverse(y, 1e-12).unwrap(), expected, 1e-8));
    }

    #[test]
    fn descriptors_round_trip() {
        for desc in ["power:p=2", "powerlog:a=2,b=1", "expml", "entropy"] {
            let phi = GrowthFunction::from_descriptor(desc).unwrap();
            assert_eq!(phi.descriptor(), desc);
        }
        assert!(matches!(
            GrowthFunction::from_descriptor("nonsense:x=1"),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            GrowthFunction::from_descriptor("power:p=-1"),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn table_descriptor_reads_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.csv");
        std::fs::write(&path, "# t,y\n0.5,0.25\n1,1\n2,4\n4,16\n").unwrap();
        let phi = GrowthFunction::from_descriptor(&format!("table:{}", path.display())).unwrap();
        // The table is t² on its samples and extrapolates as a pure power.
        assert!(close(phi.eval(3.0).unwrap(), 9.0, 1e-12));
        assert!(close(phi.eval(8.0).unwrap(), 64.0, 1e-12));
        std::fs::write(&path, "1,1\n2,0.5\n").unwrap();
        assert!(GrowthFunction::from_descriptor(&format!("table:{}", path.display())).is_err());
    }
}
