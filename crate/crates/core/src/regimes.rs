//! Exponent arithmetic and well-posedness classification.
//!
//! Parameters are carried as [`Real`] values: exact rationals when the input
//! is a short decimal or a fraction, floating point otherwise. Strict
//! inequalities between exact values are decided exactly; floating
//! comparisons that land within `1e-12` of equality are reported as
//! boundary cases instead of being classified.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_rational::Rational64;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative width of the floating-point boundary band.
pub const BOUNDARY_BAND: f64 = 1e-12;

/// Decimal places up to which an `f64` is read as an exact decimal.
const EXACT_DECIMALS: usize = 6;

/// A real parameter, exact when possible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real {
    exact: Option<Rational64>,
    approx: f64,
}

impl Real {
    pub fn exact(num: i64, den: i64) -> Self {
        let r = Rational64::new(num, den);
        Real {
            exact: Some(r),
            approx: r.to_f64().unwrap_or(f64::NAN),
        }
    }

    pub fn float(x: f64) -> Self {
        Real { exact: None, approx: x }
    }

    pub fn int(n: i64) -> Self {
        Self::exact(n, 1)
    }

    /// Reads `x` through its shortest decimal form; values with at most six
    /// decimals become exact, anything longer stays floating point.
    pub fn from_f64(x: f64) -> Self {
        if !x.is_finite() {
            return Self::float(x);
        }
        Self::parse_decimal(&format!("{x}")).unwrap_or(Self::float(x))
    }

    fn parse_decimal(text: &str) -> Option<Self> {
        let (neg, body) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text),
        };
        let (int_part, frac) = body.split_once('.').unwrap_or((body, ""));
        if frac.len() > EXACT_DECIMALS || int_part.is_empty() && frac.is_empty() {
            return None;
        }
        let digits = format!("{int_part}{frac}");
        if !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let mut num: i64 = digits.parse().ok()?;
        if neg {
            num = -num;
        }
        let den = 10i64.checked_pow(frac.len() as u32)?;
        Some(Self::exact(num, den))
    }

    /// Parses `"3"`, `"-1.25"` or `"4/3"` exactly; other finite numbers
    /// (e.g. `"1e-3"`) become floating point.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || Error::Configuration(format!("cannot parse '{text}' as a number"));
        if let Some((n, d)) = text.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(Self::exact(n, d));
        }
        if let Some(r) = Self::parse_decimal(text) {
            return Ok(r);
        }
        let x: f64 = text.parse().map_err(|_| bad())?;
        if !x.is_finite() {
            return Err(bad());
        }
        Ok(Self::float(x))
    }

    pub fn value(&self) -> f64 {
        self.approx
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn as_rational(&self) -> Option<Rational64> {
        self.exact
    }

    fn combine(
        self,
        other: Real,
        exact: impl Fn(&Rational64, &Rational64) -> Option<Rational64>,
        float: impl Fn(f64, f64) -> f64,
    ) -> Real {
        match (self.exact, other.exact) {
            (Some(a), Some(b)) => match exact(&a, &b) {
                Some(r) => Real {
                    exact: Some(r),
                    approx: r.to_f64().unwrap_or(f64::NAN),
                },
                None => Real::float(float(self.approx, other.approx)),
            },
            _ => Real::float(float(self.approx, other.approx)),
        }
    }

    pub fn recip(self) -> Real {
        Real::int(1) / self
    }

    /// Three-way comparison; `None` inside the floating boundary band.
    pub fn compare(&self, other: &Real) -> Option<Ordering> {
        if let (Some(a), Some(b)) = (self.exact, other.exact) {
            return Some(a.cmp(&b));
        }
        let (a, b) = (self.approx, other.approx);
        if (a - b).abs() <= BOUNDARY_BAND * a.abs().max(b.abs()).max(1.0) {
            None
        } else {
            a.partial_cmp(&b)
        }
    }

    pub fn lt(&self, other: &Real) -> Truth {
        match self.compare(other) {
            None => Truth::Boundary,
            Some(Ordering::Less) => Truth::Yes,
            Some(_) => Truth::No,
        }
    }

    pub fn le(&self, other: &Real) -> Truth {
        match self.compare(other) {
            None => Truth::Boundary,
            Some(Ordering::Greater) => Truth::No,
            Some(_) => Truth::Yes,
        }
    }

    pub fn gt(&self, other: &Real) -> Truth {
        other.lt(self)
    }

    pub fn ge(&self, other: &Real) -> Truth {
        other.le(self)
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Some(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            None => write!(f, "{}", self.approx),
        }
    }
}

impl Add for Real {
    type Output = Real;
    fn add(self, o: Real) -> Real {
        self.combine(o, |a, b| a.checked_add(b), |a, b| a + b)
    }
}

impl Sub for Real {
    type Output = Real;
    fn sub(self, o: Real) -> Real {
        self.combine(o, |a, b| a.checked_sub(b), |a, b| a - b)
    }
}

impl Mul for Real {
    type Output = Real;
    fn mul(self, o: Real) -> Real {
        self.combine(o, |a, b| a.checked_mul(b), |a, b| a * b)
    }
}

impl Div for Real {
    type Output = Real;
    fn div(self, o: Real) -> Real {
        self.combine(
            o,
            |a, b| if b.is_zero() { None } else { a.checked_div(b) },
            |a, b| a / b,
        )
    }
}

/// Outcome of a strict or non-strict comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Yes,
    No,
    Boundary,
}

impl Truth {
    pub fn and(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::No, _) | (_, Truth::No) => Truth::No,
            (Truth::Boundary, _) | (_, Truth::Boundary) => Truth::Boundary,
            _ => Truth::Yes,
        }
    }

    pub fn holds(self) -> bool {
        self == Truth::Yes
    }
}

/// Local well-posedness case for non-resistive `H^s` data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LwpCase {
    /// Neither case applies.
    None,
    /// `α > d/2` and `s ≥ 1`.
    CaseI,
    /// `0 ≤ α ≤ d/2` and `s > d/2 + 1 − α`.
    CaseII,
    /// A defining comparison fell inside the boundary band.
    Boundary,
}

/// Scaling class of `L^p` relative to the critical exponent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingClass {
    Sub,
    Critical,
    Super,
    Boundary,
}

/// Mild-solution exponents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub sigma: f64,
    /// Exact forms, when available (e.g. `"9/2"`).
    pub p_exact: Option<String>,
    pub q_exact: Option<String>,
    pub r_exact: Option<String>,
    pub sigma_exact: Option<String>,
}

/// Checks of the exponent identities that hold for admissible parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// `3σ + 1/(2β) − 1`.
    pub sigma_defect: f64,
    /// `1/p − 1/r − 1/q`.
    pub holder_defect: f64,
    /// `max{p, 2} < q < ∞` and `0 < 1/r < 1`.
    pub ranges_ok: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub s: f64,
    pub eta: f64,
    pub lwp_case: LwpCase,
    /// Velocity regularity gain: `α` in case I, `2α − d/2` in case II.
    pub alpha_star: Option<f64>,
    /// Case II with `α* ≤ 0`.
    pub low_regularity_velocity: bool,
    /// `η = 0`, `α ≥ d/2 + 1`, `s ≥ 1`.
    pub global_nonresistive: bool,
    pub mild_admissible: bool,
    /// Conditions that failed or sat on the boundary band.
    pub mild_reasons: Vec<String>,
    pub exponents: Option<Exponents>,
    /// Open interval for `1/s` in the decay probe.
    pub theta_window: Option<(f64, f64)>,
    pub scaling_p: Option<f64>,
    pub scaling_class: Option<ScalingClass>,
    pub identities: Option<IdentityCheck>,
}

fn fmt_exact(r: Real) -> Option<String> {
    r.is_exact().then(|| r.to_string())
}

/// Classifies `(d, α, β, s, η)` and, when given, the Lebesgue exponent `p_opt`.
pub fn classify(d: usize, alpha: Real, beta: Real, s: Real, eta: Real, p_opt: Option<Real>) -> RegimeReport {
    let dd = Real::int(d as i64);
    let half = Real::exact(1, 2);
    let zero = Real::int(0);
    let one = Real::int(1);
    let d_half = dd * half;

    let case1 = alpha.gt(&d_half).and(s.ge(&one));
    let case2 = alpha
        .ge(&zero)
        .and(alpha.le(&d_half))
        .and(s.gt(&(d_half + one - alpha)));
    let lwp_case = match (case1, case2) {
        (Truth::Yes, _) => LwpCase::CaseI,
        (_, Truth::Yes) => LwpCase::CaseII,
        (Truth::Boundary, _) | (_, Truth::Boundary) => LwpCase::Boundary,
        _ => LwpCase::None,
    };
    let alpha_star = match lwp_case {
        LwpCase::CaseI => Some(alpha),
        LwpCase::CaseII => Some(Real::int(2) * alpha - d_half),
        _ => None,
    };
    let low_regularity_velocity =
        lwp_case == LwpCase::CaseII && alpha_star.is_some_and(|a| a.le(&zero) != Truth::No);

    let global_nonresistive = eta
        .compare(&zero)
        .is_some_and(|o| o == Ordering::Equal)
        && alpha.ge(&(d_half + one)).holds()
        && s.ge(&one).holds();

    let mut reasons = Vec::new();
    let mut mild = Truth::Yes;
    let mut require = |label: &str, t: Truth| {
        match t {
            Truth::No => reasons.push(format!("fails {label}")),
            Truth::Boundary => reasons.push(format!("boundary of {label}")),
            Truth::Yes => {}
        }
        mild = mild.and(t);
    };
    require("d >= 2", if d >= 2 { Truth::Yes } else { Truth::No });
    require("eta = 1", if eta.compare(&one) == Some(Ordering::Equal) { Truth::Yes } else { Truth::No });
    let d_plus_one_half = (dd + one) * half;
    require("1/2 < alpha", half.lt(&alpha));
    require("alpha < (d+1)/2", alpha.lt(&d_plus_one_half));
    require("beta > 1/2", beta.gt(&half));
    require("alpha + beta < d + 1", (alpha + beta).lt(&(dd + one)));
    let upper_band = Real::exact(1, 4) * (dd + Real::int(2));
    match upper_band.lt(&alpha) {
        Truth::No => {}
        band => {
            let cond = (Real::int(3) * alpha + beta).lt(&((Real::int(3) * dd + Real::int(4)) * half));
            let t = if band == Truth::Boundary { cond.and(Truth::Boundary) } else { cond };
            require("3 alpha + beta < (3d+4)/2", t);
        }
    }
    let mild_admissible = mild.holds();

    let exps = (alpha + beta - one).gt(&zero).holds().then(|| {
        let p = dd / (alpha + beta - one);
        let inv_q = p.recip() - (Real::int(2) * beta - one) / (Real::int(3) * dd);
        let inv_r = Real::int(2) * inv_q - (Real::int(2) * alpha - one) / dd;
        let sigma = dd / (Real::int(2) * beta) * (p.recip() - inv_q);
        (p, inv_q, inv_r, sigma)
    });
    let exponents = exps.map(|(p, inv_q, inv_r, sigma)| Exponents {
        p: p.value(),
        q: inv_q.recip().value(),
        r: inv_r.recip().value(),
        sigma: sigma.value(),
        p_exact: fmt_exact(p),
        q_exact: fmt_exact(inv_q.recip()),
        r_exact: fmt_exact(inv_r.recip()),
        sigma_exact: fmt_exact(sigma),
    });
    let identities = exps.map(|(p, inv_q, inv_r, sigma)| {
        let sigma_defect = (Real::int(3) * sigma + (Real::int(2) * beta).recip() - one).value();
        let holder_defect = (p.recip() - inv_r - inv_q).value();
        let q = inv_q.recip().value();
        let ranges_ok = inv_q.value() > 0.0 && q > p.value().max(2.0) && inv_r.value() > 0.0 && inv_r.value() < 1.0;
        let ok = sigma_defect.abs() <= 1e-12 && holder_defect.abs() <= 1e-12 && (ranges_ok || !mild_admissible);
        IdentityCheck {
            sigma_defect,
            holder_defect,
            ranges_ok,
            ok,
        }
    });
    let theta_window = exps.map(|(p, inv_q, _, _)| {
        let lo = p.recip();
        let hi = Real::int(2) * beta / dd + Real::int(2) * inv_q - p.recip();
        (lo.value(), hi.value())
    });

    let scaling_class = p_opt.map(|p_in| {
        let crit = alpha + beta - one - dd / p_in;
        match crit.compare(&zero) {
            None => ScalingClass::Boundary,
            Some(Ordering::Greater) => ScalingClass::Sub,
            Some(Ordering::Equal) => ScalingClass::Critical,
            Some(Ordering::Less) => ScalingClass::Super,
        }
    });

    RegimeReport {
        d,
        alpha: alpha.value(),
        beta: beta.value(),
        s: s.value(),
        eta: eta.value(),
        lwp_case,
        alpha_star: alpha_star.map(|a| a.value()),
        low_regularity_velocity,
        global_nonresistive,
        mild_admissible,
        mild_reasons: reasons,
        exponents,
        theta_window,
        scaling_p: p_opt.map(|p| p.value()),
        scaling_class,
        identities,
    }
}

/// [`classify`] on plain floating-point inputs read through [`Real::from_f64`].
pub fn classify_f64(d: usize, alpha: f64, beta: f64, s: f64, eta: f64, p_opt: Option<f64>) -> RegimeReport {
    classify(
        d,
        Real::from_f64(alpha),
        Real::from_f64(beta),
        Real::from_f64(s),
        Real::from_f64(eta),
        p_opt.map(Real::from_f64),
    )
}

/// Advisory existence time `(c_cal · ‖b0‖_{H^s})^{-2}`.
pub fn local_time_hint(b0_hs_norm: f64, c_cal: f64) -> f64 {
    (c_cal * b0_hs_norm).powi(-2)
}

/// Decay exponent `θ = (d/2β)(1/s − 1/p)`.
pub fn decay_theta(d: usize, beta: f64, s_low: f64, p: f64) -> f64 {
    d as f64 / (2.0 * beta) * (1.0 / s_low - 1.0 / p)
}

/// Whether `1/s_low` lies strictly inside the decay-probe window.
pub fn in_decay_window(report: &RegimeReport, s_low: f64) -> Truth {
    match report.theta_window {
        None => Truth::No,
        Some((lo, hi)) => {
            let x = Real::from_f64(s_low).recip();
            Real::float(lo).lt(&x).and(x.lt(&Real::float(hi)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x: f64) -> Real {
        Real::from_f64(x)
    }

    #[test]
    fn three_dimensional_unit_exponents() {
        let rep = classify(3, Real::int(1), Real::int(1), Real::int(2), Real::int(1), None);
        let e = rep.exponents.clone().unwrap();
        assert_eq!(e.p, 3.0);
        assert_eq!(e.q_exact.as_deref(), Some("9/2"));
        assert_eq!(e.sigma_exact.as_deref(), Some("1/6"));
        assert!((e.q - 4.5).abs() < 1e-15 && (e.sigma - 1.0 / 6.0).abs() < 1e-15);
        assert!(rep.mild_admissible, "{:?}", rep.mild_reasons);
        let id = rep.identities.unwrap();
        assert!(id.ok && id.sigma_defect.abs() < 1e-12 && id.holder_defect.abs() < 1e-12);
    }

    #[test]
    fn upper_alpha_band_rejects() {
        let rep = classify_f64(3, 1.8, 1.5, 2.0, 1.0, None);
        assert!(!rep.mild_admissible);
        assert!(rep.mild_reasons.iter().any(|m| m.contains("3 alpha + beta")));
        // just inside the band with a small beta the extra condition holds
        let ok = classify_f64(3, 1.8, 0.9, 2.0, 1.0, None);
        assert!(ok.mild_admissible, "{:?}", ok.mild_reasons);
    }

    #[test]
    fn global_nonresistive_case() {
        let rep = classify_f64(2, 2.0, 1.0, 1.0, 0.0, None);
        assert_eq!(rep.lwp_case, LwpCase::CaseI);
        assert_eq!(rep.alpha_star, Some(2.0));
        assert!(rep.global_nonresistive);
        assert!(!rep.mild_admissible);
        assert!(!classify_f64(2, 2.0, 1.0, 0.5, 0.0, None).global_nonresistive);
        assert!(!classify_f64(2, 2.0, 1.0, 1.0, 1.0, None).global_nonresistive);
    }

    #[test]
    fn lwp_cases() {
        let rep = classify_f64(3, 0.5, 1.0, 2.5, 0.0, None);
        assert_eq!(rep.lwp_case, LwpCase::CaseII);
        assert_eq!(rep.alpha_star, Some(-0.5));
        assert!(rep.low_regularity_velocity);
        // s must exceed d/2 + 1 - alpha = 2 strictly in case II
        assert_eq!(classify_f64(3, 0.5, 1.0, 2.0, 0.0, None).lwp_case, LwpCase::None);
        assert_eq!(classify_f64(3, 0.5, 1.0, 2.1, 0.0, None).lwp_case, LwpCase::CaseII);
        assert_eq!(classify_f64(2, 0.0, 1.0, 2.5, 0.0, None).lwp_case, LwpCase::CaseII);
        assert_eq!(classify_f64(2, 1.0, 1.0, 1.0, 0.0, None).lwp_case, LwpCase::None);
        assert_eq!(classify_f64(2, 1.0, 1.0, 2.5, 0.0, None).alpha_star, Some(1.0));
    }

    #[test]
    fn exact_boundaries_are_decided() {
        // alpha = (d+1)/2 exactly is excluded
        let rep = classify_f64(3, 2.0, 0.75, 2.0, 1.0, None);
        assert!(!rep.mild_admissible);
        assert!(rep.mild_reasons.iter().any(|m| m.starts_with("fails alpha < (d+1)/2")));
    }

    #[test]
    fn float_boundaries_are_flagged() {
        let rep = classify(3, Real::float(2.0 + 1e-14), Real::float(0.6), r(2.0), r(1.0), None);
        assert!(!rep.mild_admissible);
        assert!(rep.mild_reasons.iter().any(|m| m.starts_with("boundary")), "{:?}", rep.mild_reasons);
        assert_eq!(Real::float(1.0).lt(&(Real::float(1.0) + Real::float(1e-13))), Truth::Boundary);
    }

    #[test]
    fn scaling_classes() {
        let p_c = classify_f64(2, 1.0, 1.0, 2.0, 1.0, Some(2.0));
        assert_eq!(p_c.scaling_class, Some(ScalingClass::Critical));
        assert_eq!(classify_f64(2, 1.0, 1.0, 2.0, 1.0, Some(4.0)).scaling_class, Some(ScalingClass::Sub));
        assert_eq!(classify_f64(2, 1.0, 1.0, 2.0, 1.0, Some(1.5)).scaling_class, Some(ScalingClass::Super));
        let third = classify(3, Real::exact(4, 3), Real::int(1), Real::int(2), Real::int(1), Some(Real::exact(9, 4)));
        assert_eq!(third.scaling_class, Some(ScalingClass::Critical));
    }

    #[test]
    fn identities_over_admissible_grid() {
        for d in [2usize, 3] {
            for ai in 1..20 {
                for bi in 1..20 {
                    let alpha = 0.5 + ai as f64 * 0.05 * d as f64 / 2.0;
                    let beta = 0.5 + bi as f64 * 0.1;
                    let rep = classify_f64(d, alpha, beta, 2.0, 1.0, None);
                    if !rep.mild_admissible {
                        continue;
                    }
                    let id = rep.identities.clone().unwrap();
                    assert!(id.ok, "d={d} a={alpha} b={beta}: {id:?}");
                    let e = rep.exponents.unwrap();
                    assert!((1.0 / e.p - 1.0 / e.r - 1.0 / e.q).abs() < 1e-12);
                    assert!((3.0 * e.sigma + 1.0 / (2.0 * beta) - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn classify_is_pure() {
        let a = classify_f64(3, 1.2, 0.8, 2.0, 1.0, Some(3.0));
        let b = classify_f64(3, 1.2, 0.8, 2.0, 1.0, Some(3.0));
        assert_eq!(a, b);
    }

    #[test]
    fn parsing_reals() {
        assert_eq!(Real::parse("4/3").unwrap().to_string(), "4/3");
        assert_eq!(Real::parse("1.25").unwrap().to_string(), "5/4");
        assert!(Real::parse("1e-3").unwrap().value() == 1e-3);
        assert!(!Real::parse("0.1234567").unwrap().is_exact());
        assert!(Real::parse("x").is_err());
        assert!(Real::parse("1/0").is_err());
        assert!(Real::from_f64(1.8).is_exact());
        assert!(!Real::from_f64(1.0 / 3.0).is_exact());
    }

    #[test]
    fn time_hint_and_decay_window() {
        assert_eq!(local_time_hint(1.0, 1.0), 1.0);
        assert_eq!(local_time_hint(2.0, 1.0), 0.25);
        let rep = classify_f64(2, 1.0, 1.0, 2.0, 1.0, None);
        // p = 2, q = 3: window 1/2 < 1/s < 1 + 2/3 - 1/2
        let (lo, hi) = rep.theta_window.unwrap();
        assert!((lo - 0.5).abs() < 1e-15 && (hi - (1.0 + 2.0 / 3.0 - 0.5)).abs() < 1e-15);
        assert_eq!(in_decay_window(&rep, 1.5), Truth::Yes);
        assert_eq!(in_decay_window(&rep, 2.0), Truth::Boundary);
        assert_eq!(in_decay_window(&rep, 3.0), Truth::No);
        assert!((decay_theta(2, 1.0, 1.0, 2.0) - 0.5).abs() < 1e-15);
    }
}
