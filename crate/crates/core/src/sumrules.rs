//! Relative-entropy sum rules for measures with prescribed density zeros.
//!
//! Each catalogued case pairs a target density (vanishing to given orders at
//! given angles) with the coefficient-side functional it controls.  The
//! measure side is the relative entropy of the target against the input
//! measure; the coefficient side is a window sum over the Verblunsky
//! sequence, split into a completed-square quadratic term, optional quartic
//! and sextic regroupings, and a positive log-series remainder.  Both sides
//! are evaluated on a dyadic truncation ladder, and divergence verdicts
//! combine exact tail analysis with measured partial-sum growth.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ladder::{classify_partial_sums, dyadic_rungs, Growth, GrowthReport, Kahan};
use crate::measures::{
    kl_divergence, ExtReal, EtaSpec, MeasureSpec, SingularPoint, TrigPoly, GRID_LOG2_DEFAULT,
};
use crate::tracepoly::{binomial, combine_for_potential, Poly, QuadraticForm, TraceDecomposition};
use crate::verblunsky::{
    coeffs_from_measure, measure_from_coeffs, truncated_density_of, CoeffSequence, Tail,
};

/// Default base truncation for the dyadic ladder.
pub const DEFAULT_BASE: usize = 1 << 12;

/// Floor for the absolute discrepancy tolerance between the two sides.
pub const DISCREPANCY_FLOOR: f64 = 1e-4;

/// Moduli this close to the unit circle make the log series blow up.
const UNIT_EPS: f64 = 1e-14;

fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn rat_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("rational fits in f64")
}

fn ext(x: f64) -> ExtReal {
    if x.is_finite() {
        ExtReal::Finite(x)
    } else {
        ExtReal::PlusInf
    }
}

// ---- Case catalog ----

/// One catalogued sum rule: target density, potential, and the shape of the
/// coefficient-side series.
#[derive(Clone, Debug)]
pub struct SumRuleCase {
    id: String,
    eta: EtaSpec,
    potential: TrigPoly,
    /// Cosine coefficients of the potential, starting at frequency 1.
    r: Vec<BigRational>,
    /// Shift polynomial whose squared norm is the quadratic term.
    shift_poly: Vec<BigRational>,
    /// Scale in front of the completed square.
    square_scale: BigRational,
    /// Log-series borrow depth: powers up to |a|^{2 depth} are regrouped
    /// into the polynomial terms, the rest stays in the remainder.
    depth: u32,
    real_only: bool,
    decomp: Option<TraceDecomposition>,
    quartic: Poly,
    sextic: Poly,
    higher: Poly,
}

/// Keep only monomials of total degree above the cutoff.
fn degree_above(p: &Poly, cutoff: u32) -> Poly {
    let mut out = Poly::zero();
    for (k, v) in p.terms() {
        let deg: u32 = k.iter().map(|f| f.power).sum();
        if deg > cutoff {
            out.add_term(k.to_vec(), v.clone());
        }
    }
    out
}

impl SumRuleCase {
    fn build(
        id: &str,
        points: Vec<SingularPoint>,
        r: Vec<BigRational>,
        shift_poly: Vec<BigRational>,
        square_scale: BigRational,
        depth: u32,
        real_only: bool,
    ) -> Result<SumRuleCase> {
        let eta = if points.is_empty() {
            EtaSpec::flat()
        } else {
            EtaSpec::new(points)?
        };
        let r_f64: Vec<f64> = r.iter().map(rat_f64).collect();
        let potential = TrigPoly::from_cosine(0.0, &r_f64);
        let has_potential = r.iter().any(|x| !x.is_zero());
        let (decomp, quartic, sextic, higher) = if has_potential {
            let dec = combine_for_potential(&r)?;
            // the lag identity pins the completed square against the
            // quadratic content of the trace decomposition, exactly
            let mut left = dec.quadratic_part();
            left.add_lag(0, BigRational::one());
            let right = QuadraticForm::from_shift_poly(&shift_poly).scaled(&square_scale);
            if left != right {
                let residual: Vec<String> = left
                    .sub(&right)
                    .lags()
                    .map(|(l, c)| format!("lag {l}: {c}"))
                    .collect();
                return Err(Error::internal(format!(
                    "case {id}: quadratic term does not complete the square; residual {}",
                    residual.join(", ")
                )));
            }
            let quartic = dec.g.degree_slice(4);
            let sextic = dec.g.degree_slice(6);
            let higher = degree_above(&dec.g, 2 * depth);
            (Some(dec), quartic, sextic, higher)
        } else {
            (None, Poly::zero(), Poly::zero(), Poly::zero())
        };
        Ok(SumRuleCase {
            id: id.to_string(),
            eta,
            potential,
            r,
            shift_poly,
            square_scale,
            depth,
            real_only,
            decomp,
            quartic,
            sextic,
            higher,
        })
    }

    /// Uniform target: no potential, the coefficient side is the plain
    /// entropy series.
    pub fn szego() -> SumRuleCase {
        SumRuleCase::build("szego", Vec::new(), Vec::new(), vec![big(1)], big(1), 1, false)
            .expect("szego case is static")
    }

    /// One zero of order k at angle 0.  The quadratic term is the k-th
    /// difference norm with the central binomial reciprocal in front.
    /// k = 2 uses the deeper quartic regrouping and takes real input only.
    pub fn single(k: u32) -> Result<SumRuleCase> {
        if !(1..=5).contains(&k) {
            return Err(Error::domain("single-point order must lie in 1..=5"));
        }
        let ku = k as usize;
        let central = BigRational::new(BigInt::from(1), binomial(2 * ku, ku));
        // r_l = -2 c_k binom(2k, k+l) (-1)^l / l
        let mut r = Vec::with_capacity(ku);
        for l in 1..=ku {
            let sign = if l % 2 == 0 { 1 } else { -1 };
            let coeff = BigRational::new(
                BigInt::from(-2 * sign),
                BigInt::from(l as i64),
            ) * BigRational::new(binomial(2 * ku, ku + l), BigInt::from(1))
                * &central;
            r.push(coeff);
        }
        // (S - 1)^k
        let mut shift = Vec::with_capacity(ku + 1);
        for i in 0..=ku {
            let sign = if (ku - i) % 2 == 0 { 1 } else { -1 };
            shift.push(BigRational::new(
                BigInt::from(sign) * binomial(ku, i),
                BigInt::from(1),
            ));
        }
        let (depth, real_only) = if k == 2 { (2, true) } else { (1, false) };
        SumRuleCase::build(
            &format!("single_{k}"),
            vec![SingularPoint { theta: 0.0, m: k }],
            r,
            shift,
            central,
            depth,
            real_only,
        )
    }

    /// Simple zeros at all k-th roots of unity; the potential is a single
    /// cosine at frequency k and the quadratic term is half the squared
    /// norm of the k-step difference.
    pub fn roots(k: u32) -> Result<SumRuleCase> {
        if !(1..=6).contains(&k) {
            return Err(Error::domain("root count must lie in 1..=6"));
        }
        let ku = k as usize;
        let points = (0..ku)
            .map(|j| SingularPoint {
                theta: std::f64::consts::TAU * j as f64 / ku as f64,
                m: 1,
            })
            .collect();
        let mut r = vec![BigRational::zero(); ku];
        r[ku - 1] = rat(1, k as i64);
        let mut shift = vec![BigRational::zero(); ku + 1];
        shift[0] = big(-1);
        shift[ku] = big(1);
        SumRuleCase::build(&format!("roots_{k}"), points, r, shift, rat(1, 2), 1, false)
    }

    /// Simple zeros at 0 and pi; quartic regrouping depth, real input only.
    pub fn pair_11() -> Result<SumRuleCase> {
        let points = vec![
            SingularPoint { theta: 0.0, m: 1 },
            SingularPoint { theta: std::f64::consts::PI, m: 1 },
        ];
        let r = vec![BigRational::zero(), rat(1, 2)];
        let shift = vec![big(-1), big(0), big(1)];
        SumRuleCase::build("pair_11", points, r, shift, rat(1, 2), 2, true)
    }

    /// Order-2 zero at 0 and a simple zero at pi; series split down to the
    /// sextic term, real input only.
    pub fn mixed_21() -> Result<SumRuleCase> {
        let points = vec![
            SingularPoint { theta: 0.0, m: 2 },
            SingularPoint { theta: std::f64::consts::PI, m: 1 },
        ];
        let r = vec![rat(1, 2), rat(1, 2), rat(-1, 6)];
        let shift = vec![big(1), big(-1), big(-1), big(1)];
        SumRuleCase::build("mixed_21", points, r, shift, rat(1, 4), 3, true)
    }

    /// Look a case up by its identifier.
    pub fn by_id(id: &str) -> Result<SumRuleCase> {
        match id {
            "szego" => Ok(SumRuleCase::szego()),
            "pair_11" => Ok(SumRuleCase::pair_11()?),
            "mixed_21" => Ok(SumRuleCase::mixed_21()?),
            _ => {
                if let Some(k) = id.strip_prefix("single_") {
                    let k: u32 = k
                        .parse()
                        .map_err(|_| Error::parse(format!("bad case id: {id}")))?;
                    return SumRuleCase::single(k);
                }
                if let Some(k) = id.strip_prefix("roots_") {
                    let k: u32 = k
                        .parse()
                        .map_err(|_| Error::parse(format!("bad case id: {id}")))?;
                    return SumRuleCase::roots(k);
                }
                Err(Error::domain(format!("unknown case id: {id}")))
            }
        }
    }

    /// Every catalogued case.
    pub fn catalog() -> Result<Vec<SumRuleCase>> {
        let mut out = vec![SumRuleCase::szego()];
        for k in 1..=5 {
            out.push(SumRuleCase::single(k)?);
        }
        for k in 2..=6 {
            out.push(SumRuleCase::roots(k)?);
        }
        out.push(SumRuleCase::pair_11()?);
        out.push(SumRuleCase::mixed_21()?);
        Ok(out)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn eta(&self) -> &EtaSpec {
        &self.eta
    }

    pub fn potential(&self) -> &TrigPoly {
        &self.potential
    }

    /// Cosine coefficients of the potential, frequency 1 upward.
    pub fn cosine_coeffs(&self) -> &[BigRational] {
        &self.r
    }

    pub fn shift_poly(&self) -> &[BigRational] {
        &self.shift_poly
    }

    pub fn square_scale(&self) -> &BigRational {
        &self.square_scale
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn real_only(&self) -> bool {
        self.real_only
    }

    pub fn decomposition(&self) -> Option<&TraceDecomposition> {
        self.decomp.as_ref()
    }

    /// Window span of the interior polynomial (0 for the uniform target).
    pub fn degree(&self) -> usize {
        self.decomp.as_ref().map_or(0, |d| d.degree())
    }

    /// Series term names in report order.
    pub fn term_names(&self) -> Vec<&'static str> {
        let mut names = vec!["I2"];
        if self.depth >= 2 {
            names.push("I4");
        }
        if self.depth >= 3 {
            names.push("I6");
        }
        if !self.higher.is_zero() {
            names.push("higher");
        }
        names.push("L");
        names
    }
}

// ---- Log-series remainder ----

/// One remainder summand: -log(1-x) minus the first m powers of the series,
/// for x = |a|^2.  Nonnegative; computed from the tail series when x is
/// small so no cancellation occurs.
fn remainder_term(x: f64, m: u32) -> f64 {
    debug_assert!(m >= 1, "borrow depth must be at least 1");
    debug_assert!((0.0..1.0).contains(&x), "modulus out of range: {x}");
    if x <= 0.5 {
        let mut term = x.powi(m as i32 + 1);
        let mut k = m as f64 + 1.0;
        let mut acc = 0.0;
        loop {
            let inc = term / k;
            if inc <= acc * 1e-17 + 1e-300 {
                break;
            }
            acc += inc;
            term *= x;
            k += 1.0;
        }
        acc
    } else {
        let mut s = 0.0;
        let mut pow = 1.0;
        for k in 1..=m {
            pow *= x;
            s += pow / k as f64;
        }
        (-(1.0 - x).ln() - s).max(0.0)
    }
}

/// Partial sum of the log-series remainder at borrow depth `m`:
/// sum_{j<n} [-log(1-|a_j|^2) - sum_{k<=m} |a_j|^{2k}/k].
///
/// Every summand is nonnegative and, for |a_j|^2 <= 1/2, lies between
/// |a_j|^{2m+2}/(m+1) and twice that.  Returns +inf when a coefficient
/// reaches the unit circle inside the range.
pub fn log_series_remainder(a: &CoeffSequence, m: u32, n: usize) -> Result<f64> {
    if m < 1 {
        return Err(Error::domain("borrow depth must be at least 1"));
    }
    let mut acc = Kahan::new();
    for j in 0..n {
        let x = a.get(j).norm_sqr();
        if x > 1.0 + UNIT_EPS {
            return Err(Error::domain(format!(
                "coefficient {j} lies outside the closed unit disk"
            )));
        }
        if x >= 1.0 - UNIT_EPS {
            return Ok(f64::INFINITY);
        }
        acc.add(remainder_term(x, m));
    }
    Ok(acc.value())
}

// ---- Coefficient side ----

/// Per-term partial sums of the coefficient side at one truncation.
#[derive(Clone, Debug)]
pub struct CoeffSide {
    pub n: usize,
    /// Leading boundary polynomial plus the window sum of the interior
    /// polynomial with the entropy terms.  +inf when a coefficient sits on
    /// the unit circle inside the range.
    pub total: f64,
    /// Named series partial sums: the completed square I2, the regrouped
    /// I4/I6 where the depth includes them, monomials beyond the borrow
    /// depth under "higher", the log remainder L, and the regrouping
    /// boundary under "boundary" when finite.
    pub terms: BTreeMap<&'static str, f64>,
    /// The regrouped closed form for the one-point case: entropy constant,
    /// first-coefficient boundary terms, squared difference sum, and log
    /// remainder.  Present only for case single_1.
    pub exact_form: Option<f64>,
}

/// Evaluate the coefficient side of a case at truncation `n`.
pub fn coefficient_side(case: &SumRuleCase, a: &CoeffSequence, n: usize) -> Result<CoeffSide> {
    if n == 0 {
        return Err(Error::domain("truncation must be positive"));
    }
    if case.real_only && !a.is_real() {
        return Err(Error::domain(format!(
            "case {} takes real coefficients only",
            case.id
        )));
    }
    let d = case.degree();
    let qdeg = case.shift_poly.len() - 1;
    let need = n + d.max(qdeg).max(1) + 1;
    let vals: Vec<Complex64> = (0..need).map(|j| a.get(j)).collect();
    for (j, v) in vals.iter().enumerate() {
        if v.norm_sqr() > 1.0 + 1e-9 {
            return Err(Error::domain(format!(
                "coefficient {j} lies outside the closed unit disk"
            )));
        }
    }

    let qv: Vec<f64> = case.shift_poly.iter().map(rat_f64).collect();
    let c_scale = rat_f64(&case.square_scale);
    let depth = case.depth;
    let g = case.decomp.as_ref().map(|dec| &dec.g);

    let mut infinite = false;
    let mut total = Kahan::new();
    let mut l_acc = Kahan::new();
    let mut i2 = Kahan::new();
    let mut i4 = Kahan::new();
    let mut i6 = Kahan::new();
    let mut hi = Kahan::new();
    for j in 0..n {
        let x2 = vals[j].norm_sqr();
        if x2 >= 1.0 - UNIT_EPS {
            infinite = true;
        } else {
            let g_val = g.map_or(0.0, |g| g.eval(&vals[j..]).re);
            total.add(g_val - (1.0 - x2).ln());
            l_acc.add(remainder_term(x2, depth));
        }
        let mut applied = Complex64::new(0.0, 0.0);
        for (i, &v) in qv.iter().enumerate() {
            applied += v * vals[j + i];
        }
        i2.add(c_scale * applied.norm_sqr());
        if depth >= 2 {
            i4.add(case.quartic.eval(&vals[j..]).re + 0.5 * x2 * x2);
        }
        if depth >= 3 {
            i6.add(case.sextic.eval(&vals[j..]).re + x2.powi(3) / 3.0);
        }
        if !case.higher.is_zero() {
            hi.add(case.higher.eval(&vals[j..]).re);
        }
    }
    let f_minus = case
        .decomp
        .as_ref()
        .map_or(0.0, |dec| dec.f_minus.eval(&vals).re);
    let total_v = if infinite {
        f64::INFINITY
    } else {
        f_minus + total.value()
    };

    let mut terms: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut polynomial_sum = i2.value();
    terms.insert("I2", i2.value());
    if depth >= 2 {
        terms.insert("I4", i4.value());
        polynomial_sum += i4.value();
    }
    if depth >= 3 {
        terms.insert("I6", i6.value());
        polynomial_sum += i6.value();
    }
    if !case.higher.is_zero() {
        terms.insert("higher", hi.value());
        polynomial_sum += hi.value();
    }
    let l_v = if infinite { f64::INFINITY } else { l_acc.value() };
    terms.insert("L", l_v);
    if total_v.is_finite() {
        terms.insert("boundary", total_v - polynomial_sum - l_v);
    }

    let exact_form = if case.id == "single_1" {
        let mut sq = Kahan::new();
        let mut lrem = Kahan::new();
        let mut inf_form = false;
        for j in 0..n {
            sq.add((vals[j + 1] - vals[j]).norm_sqr());
            let x2 = vals[j].norm_sqr();
            if x2 >= 1.0 - UNIT_EPS {
                inf_form = true;
            } else {
                lrem.add(remainder_term(x2, 1));
            }
        }
        Some(if inf_form {
            f64::INFINITY
        } else {
            (1.0 - LN_2)
                + 0.5 * vals[0].norm_sqr()
                + vals[0].re
                + 0.5 * sq.value()
                + lrem.value()
        })
    } else {
        None
    };

    Ok(CoeffSide { n, total: total_v, terms, exact_form })
}

/// Entropy constant of the one-point density: the mean of w log w for
/// w = 1 - cos theta.
pub fn one_point_entropy() -> f64 {
    1.0 - LN_2
}

/// Additive constant in the classical unnormalized one-point sum rule;
/// differs from the entropy constant by the borrowed half square.
pub fn one_point_offset() -> f64 {
    0.5 - LN_2
}

// ---- Ladder options ----

/// Truncation ladder and grid used by the report builders.
#[derive(Clone, Debug)]
pub struct LadderOpts {
    /// Base truncation; rungs are base, 2 base, 4 base.
    pub base: usize,
    /// Grid resolution for density reconstruction and divergence.
    pub grid_log2: u32,
}

impl Default for LadderOpts {
    fn default() -> Self {
        LadderOpts { base: DEFAULT_BASE, grid_log2: GRID_LOG2_DEFAULT }
    }
}

impl LadderOpts {
    pub fn with_base(base: usize) -> Self {
        LadderOpts { base, ..Default::default() }
    }

    pub fn rungs(&self) -> Vec<usize> {
        dyadic_rungs(self.base.max(2), 3)
    }
}

// ---- Verdicts ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TermVerdict {
    Finite,
    Divergent,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GemOutcome {
    Finite,
    Infinite,
    Inconclusive,
}

impl GemOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            GemOutcome::Finite => "finite",
            GemOutcome::Infinite => "infinite",
            GemOutcome::Inconclusive => "inconclusive",
        }
    }
}

/// One series term across the ladder with its classification.
#[derive(Clone, Debug, Serialize)]
pub struct TermReport {
    pub name: String,
    pub partials: Vec<ExtReal>,
    pub verdict: TermVerdict,
    pub rationale: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub growth: Option<GrowthReport>,
}

/// Coefficient-side classification of a case on a sequence.
#[derive(Clone, Debug, Serialize)]
pub struct GemReport {
    pub case: String,
    pub outcome: GemOutcome,
    pub rungs: Vec<usize>,
    pub terms: Vec<TermReport>,
}

/// A merged power-law component of the tail: values behave like
/// sign * |c| n^{-p}, with an alternating sign when `alt` is set.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PowerComponent {
    pub(crate) c: f64,
    pub(crate) p: f64,
    pub(crate) alt: bool,
}

/// Decompose a tail into power-law components.  Zero and geometric parts
/// drop out (they decay faster than any power); unit-ratio geometric parts
/// become constants.  Returns None when the tail has a growing part or no
/// power-law description.
pub(crate) fn power_components(tail: &Tail) -> Option<Vec<PowerComponent>> {
    fn collect(tail: &Tail, out: &mut Vec<PowerComponent>) -> bool {
        match tail {
            Tail::Zero => true,
            Tail::PowerDecay { c, p, alt } => {
                if *c == 0.0 {
                    true
                } else if *p >= 0.0 {
                    out.push(PowerComponent { c: *c, p: *p, alt: *alt });
                    true
                } else {
                    false
                }
            }
            Tail::Geometric { c, r, alt } => {
                if *c == 0.0 || r.abs() < 1.0 {
                    true
                } else if r.abs() == 1.0 {
                    // ratio -1 flips parity relative to the declared alt
                    let flip = *r < 0.0;
                    out.push(PowerComponent { c: *c, p: 0.0, alt: *alt != flip });
                    true
                } else {
                    false
                }
            }
            Tail::HarmonicShift { c } => {
                if *c != 0.0 {
                    out.push(PowerComponent { c: *c, p: 1.0, alt: false });
                }
                true
            }
            Tail::Sum { terms } => terms.iter().all(|t| collect(t, out)),
        }
    }
    let mut out = Vec::new();
    if !collect(tail, &mut out) {
        return None;
    }
    // merge equal (p, alt) classes so ties cannot hide a cancellation
    out.sort_by(|a, b| (a.p, a.alt).partial_cmp(&(b.p, b.alt)).expect("finite exponents"));
    let mut merged: Vec<PowerComponent> = Vec::new();
    for comp in out {
        match merged.last_mut() {
            Some(last) if last.p == comp.p && last.alt == comp.alt => last.c += comp.c,
            _ => merged.push(comp),
        }
    }
    merged.retain(|c| c.c != 0.0);
    Some(merged)
}

/// Multiplicity of the root at +1 (or -1) of a shift polynomial.
fn zero_order_at(poly: &[BigRational], at_minus_one: bool) -> u32 {
    let mut coeffs: Vec<BigRational> = poly.to_vec();
    let root = if at_minus_one { big(-1) } else { big(1) };
    let mut order = 0;
    loop {
        if coeffs.iter().all(|c| c.is_zero()) || coeffs.len() <= 1 {
            return order;
        }
        // synthetic division by (S - root); remainder is the value at root
        let mut acc = BigRational::zero();
        let mut quotient = vec![BigRational::zero(); coeffs.len() - 1];
        for i in (0..coeffs.len()).rev() {
            acc = &acc * &root + &coeffs[i];
            if i > 0 {
                quotient[i - 1] = acc.clone();
            }
        }
        if !acc.is_zero() {
            return order;
        }
        order += 1;
        coeffs = quotient;
    }
}

/// True when all sequence values are real with a single sign, so that sums
/// of even-degree monomials with nonnegative coefficients are nonnegative.
fn sign_definite(a: &CoeffSequence, comps: &[PowerComponent]) -> bool {
    if !a.is_real() || a.is_terminated() {
        return false;
    }
    let mut sign = 0.0f64;
    let mut fits = |v: f64| -> bool {
        if v == 0.0 {
            return true;
        }
        if sign == 0.0 {
            sign = v.signum();
            true
        } else {
            v.signum() == sign
        }
    };
    a.prefix().iter().all(|v| fits(v.re)) && comps.iter().all(|c| !c.alt && fits(c.c))
}

/// All real-merged coefficients of the term polynomial are nonnegative.
fn nonneg_coeffs(p: &Poly) -> bool {
    p.real_merge().terms().all(|(_, c)| !c.is_negative())
}

enum TailCall {
    Finite(String),
    Divergent(String),
    Unknown,
}

/// Exact classification of one series term from the closed-form tail.
/// Finiteness claims rest on absolute convergence; divergence claims are
/// made only when the term is a sum of nonnegative summands whose leading
/// power survives.
fn classify_by_tail(case: &SumRuleCase, a: &CoeffSequence, name: &str) -> TailCall {
    let Some(comps) = power_components(a.tail()) else {
        return TailCall::Unknown;
    };
    if comps.is_empty() {
        return TailCall::Finite("tail decays faster than any power".into());
    }

    if name == "I2" {
        // each component gains the multiplicity of the shift polynomial's
        // zero at +1 (or -1 for alternating components)
        let mut eff = Vec::with_capacity(comps.len());
        for comp in &comps {
            let z = zero_order_at(&case.shift_poly, comp.alt);
            let e = if comp.p == 0.0 && z >= 1 {
                // the difference operator annihilates constants exactly
                f64::INFINITY
            } else {
                comp.p + z as f64
            };
            eff.push(e);
        }
        if eff.iter().all(|&e| 2.0 * e > 1.0) {
            return TailCall::Finite("squared differences absolutely summable".into());
        }
        // distinct (p, alt) classes cannot cancel the slowest component
        let e_min = eff.iter().cloned().fold(f64::INFINITY, f64::min);
        return TailCall::Divergent(format!(
            "sum of squares with effective decay exponent {:.3} <= 1/2",
            e_min
        ));
    }

    let p_min = comps.iter().map(|c| c.p).fold(f64::INFINITY, f64::min);
    let degree = match name {
        "L" => (2 * case.depth + 2) as f64,
        "I4" => 4.0,
        "I6" => 6.0,
        "higher" => match case.higher.min_degree() {
            Some(d) => d as f64,
            None => return TailCall::Finite("no monomials beyond the borrow depth".into()),
        },
        _ => return TailCall::Unknown,
    };
    if p_min > 0.0 && degree * p_min > 1.0 {
        return TailCall::Finite(format!(
            "absolutely convergent: degree {degree} times decay {p_min:.3} exceeds 1"
        ));
    }
    if name == "L" {
        // the remainder is a sum of nonnegative terms comparable to
        // |a_n|^{2 depth + 2}; distinct parity classes cannot cancel
        return TailCall::Divergent(format!(
            "nonnegative summands of order n^(-{:.3}) are not summable",
            degree * p_min
        ));
    }
    let poly = match name {
        "I4" => &case.quartic,
        "I6" => &case.sextic,
        "higher" => &case.higher,
        _ => unreachable!(),
    };
    if sign_definite(a, &comps) && nonneg_coeffs(poly) {
        return TailCall::Divergent(format!(
            "nonnegative summands of order n^(-{:.3}) are not summable",
            degree * p_min
        ));
    }
    TailCall::Unknown
}

fn classify_one(
    case: &SumRuleCase,
    a: &CoeffSequence,
    name: &str,
    rungs: &[usize],
    partials: &[f64],
) -> (TermVerdict, String, Option<GrowthReport>) {
    if a.tail().is_zero() && !a.is_terminated() {
        return (
            TermVerdict::Finite,
            "finite sum over finitely supported coefficients".into(),
            None,
        );
    }
    if partials.iter().any(|p| !p.is_finite()) {
        return (
            TermVerdict::Divergent,
            "a coefficient reaches the unit circle".into(),
            None,
        );
    }
    let growth = classify_partial_sums(rungs, partials);
    match classify_by_tail(case, a, name) {
        TailCall::Finite(why) => (TermVerdict::Finite, why, Some(growth)),
        TailCall::Divergent(why) => (TermVerdict::Divergent, why, Some(growth)),
        TailCall::Unknown => {
            let verdict = match growth.class {
                Growth::Converging => TermVerdict::Finite,
                Growth::Diverging => TermVerdict::Divergent,
                Growth::Unclear => TermVerdict::Inconclusive,
            };
            let why = format!(
                "ladder measurement: growth {}, largest Cauchy ratio {}",
                growth
                    .total_growth
                    .map_or("n/a".into(), |g| format!("{g:.3}x")),
                growth
                    .cauchy_ratio_max
                    .map_or("n/a".into(), |r| format!("{r:.3}")),
            );
            (verdict, why, Some(growth))
        }
    }
}

fn classify_terms(
    case: &SumRuleCase,
    a: &CoeffSequence,
    rungs: &[usize],
    sides: &[CoeffSide],
) -> (Vec<TermReport>, GemOutcome) {
    let mut reports = Vec::new();
    let mut any_divergent = false;
    let mut all_finite = true;
    for name in case.term_names() {
        let partials: Vec<f64> = sides
            .iter()
            .map(|s| s.terms.get(name).copied().unwrap_or(0.0))
            .collect();
        let (verdict, rationale, growth) = classify_one(case, a, name, rungs, &partials);
        match verdict {
            TermVerdict::Divergent => any_divergent = true,
            TermVerdict::Inconclusive => all_finite = false,
            TermVerdict::Finite => {}
        }
        reports.push(TermReport {
            name: name.to_string(),
            partials: partials.iter().map(|&p| ext(p)).collect(),
            verdict,
            rationale,
            growth,
        });
    }
    let outcome = if any_divergent {
        GemOutcome::Infinite
    } else if all_finite {
        GemOutcome::Finite
    } else {
        GemOutcome::Inconclusive
    };
    (reports, outcome)
}

/// Classify the coefficient-side limit of a case on a sequence.
pub fn gem_verdict(case: &SumRuleCase, a: &CoeffSequence, opts: &LadderOpts) -> Result<GemReport> {
    let rungs = opts.rungs();
    let sides: Vec<CoeffSide> = rungs
        .iter()
        .map(|&n| coefficient_side(case, a, n))
        .collect::<Result<_>>()?;
    let (terms, outcome) = classify_terms(case, a, &rungs, &sides);
    Ok(GemReport { case: case.id.clone(), outcome, rungs, terms })
}

// ---- Reports over both sides ----

/// One ladder rung with both sides evaluated.
#[derive(Clone, Debug, Serialize)]
pub struct LadderRung {
    pub n: usize,
    pub measure_side: ExtReal,
    pub coeff_total: ExtReal,
}

/// Two-sided evaluation of a sum rule.
#[derive(Clone, Debug, Serialize)]
pub struct SumRuleReport {
    pub case: String,
    pub measure_side: ExtReal,
    /// Top-rung series partial sums plus the normalized total under
    /// "total": the input's window sum minus the reference sequence's.
    pub coeff_side: BTreeMap<String, ExtReal>,
    pub verdict: String,
    pub ladder: Vec<LadderRung>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrepancy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_bar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_tolerance: Option<bool>,
    pub terms: Vec<TermReport>,
}

impl SumRuleReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

fn tail_decays(t: &Tail) -> bool {
    match t {
        Tail::Zero => true,
        Tail::PowerDecay { c, p, .. } => *c == 0.0 || *p > 0.0,
        Tail::Geometric { c, r, .. } => *c == 0.0 || r.abs() < 1.0,
        Tail::HarmonicShift { .. } => true,
        Tail::Sum { terms } => terms.iter().all(tail_decays),
    }
}

/// Reconstruct the measure of a sequence at truncation k: the exact
/// finitely supported measure when the sequence terminates inside the
/// range, the reciprocal-square density otherwise.
fn reconstruct(a: &CoeffSequence, k: usize, grid_log2: u32) -> Result<MeasureSpec> {
    match a.len() {
        Some(len) if len <= k => measure_from_coeffs(a, len),
        _ => truncated_density_of(a, k, grid_log2),
    }
}

/// Zero out rounding-level imaginary parts of an extracted reference
/// sequence so real-only cases accept it.
fn real_prefix(seq: &CoeffSequence) -> Result<CoeffSequence> {
    let mut prefix = Vec::with_capacity(seq.prefix().len());
    for v in seq.prefix() {
        if v.im.abs() > 1e-9 {
            return Err(Error::internal(
                "reference coefficients have unexpectedly large imaginary parts",
            ));
        }
        prefix.push(Complex64::new(v.re, 0.0));
    }
    Ok(CoeffSequence::new(prefix, seq.tail().clone()))
}

/// Evaluate both sides of a catalogued sum rule on a sequence.
///
/// The measure side is the divergence of the case target against the
/// reconstructed measure; the coefficient side subtracts the reference
/// sequence's window sum (extracted once from the target) from the
/// input's, per rung.  Verdicts come from the series classification; a
/// non-decaying tail downgrades the report to diagnostics only.
pub fn sum_rule_check(
    case: &SumRuleCase,
    a: &CoeffSequence,
    opts: &LadderOpts,
) -> Result<SumRuleReport> {
    let rungs = opts.rungs();
    let top = *rungs.last().expect("ladder has rungs");

    let sides: Vec<CoeffSide> = rungs
        .iter()
        .map(|&n| coefficient_side(case, a, n))
        .collect::<Result<_>>()?;

    // reference window sums; the uniform target's reference is identically 0
    let eta_totals: Vec<f64> = if case.decomp.is_none() {
        vec![0.0; rungs.len()]
    } else {
        let margin = case.degree().max(case.shift_poly.len() - 1) + 1;
        let extraction = coeffs_from_measure(&case.eta.measure(), top + margin)?;
        let reference = real_prefix(&extraction.seq)?;
        rungs
            .iter()
            .map(|&n| coefficient_side(case, &reference, n).map(|s| s.total))
            .collect::<Result<_>>()?
    };

    let eta_measure = case.eta.measure();
    let mut measure_rungs = Vec::with_capacity(rungs.len());
    for &k in &rungs {
        let mu = reconstruct(a, k, opts.grid_log2)?;
        measure_rungs.push(kl_divergence(&eta_measure, &mu, opts.grid_log2));
    }

    let coeff_totals: Vec<f64> = sides
        .iter()
        .zip(&eta_totals)
        .map(|(s, e)| s.total - e)
        .collect();

    let ladder: Vec<LadderRung> = rungs
        .iter()
        .zip(measure_rungs.iter().zip(&coeff_totals))
        .map(|(&n, (m, &c))| LadderRung { n, measure_side: *m, coeff_total: ext(c) })
        .collect();

    let coeff_cauchy = {
        let k = coeff_totals.len();
        let (a, b) = (coeff_totals[k - 2], coeff_totals[k - 1]);
        (a.is_finite() && b.is_finite()).then(|| (b - a).abs())
    };
    let measure_cauchy = {
        let k = measure_rungs.len();
        match (measure_rungs[k - 2].finite(), measure_rungs[k - 1].finite()) {
            (Some(a), Some(b)) => Some((b - a).abs()),
            _ => None,
        }
    };

    let measure_side = *measure_rungs.last().expect("ladder has rungs");
    let coeff_top = ext(*coeff_totals.last().expect("ladder has rungs"));

    let diagnostics_only = !tail_decays(a.tail());
    let (terms, outcome) = classify_terms(case, a, &rungs, &sides);
    let verdict = if diagnostics_only {
        "diagnostics_only".to_string()
    } else {
        outcome.as_str().to_string()
    };

    let (discrepancy, error_bar, within_tolerance) = match (measure_side.finite(), coeff_top.finite())
    {
        (Some(m), Some(c)) => {
            let cauchy = coeff_cauchy.unwrap_or(0.0).max(measure_cauchy.unwrap_or(0.0));
            let bar = DISCREPANCY_FLOOR.max(3.0 * cauchy);
            let d = (m - c).abs();
            let within = (!diagnostics_only).then_some(d <= bar);
            (Some(d), Some(bar), within)
        }
        (None, None) => (None, None, (!diagnostics_only).then_some(true)),
        _ => (None, None, (!diagnostics_only).then_some(false)),
    };

    let mut coeff_side: BTreeMap<String, ExtReal> = sides
        .last()
        .expect("ladder has rungs")
        .terms
        .iter()
        .map(|(&k, &v)| (k.to_string(), ext(v)))
        .collect();
    coeff_side.insert("total".to_string(), coeff_top);

    Ok(SumRuleReport {
        case: case.id.clone(),
        measure_side,
        coeff_side,
        verdict,
        ladder,
        discrepancy,
        error_bar,
        within_tolerance,
        terms,
    })
}

/// The classical sum rule against the uniform target: the divergence of
/// the uniform measure equals the entropy series of the coefficients.
///
/// Either side may be supplied; the other is derived (coefficients by
/// extraction, the measure by reconstruction).  When the measure is given
/// explicitly the measure side uses it directly instead of a truncation.
pub fn szego_sum_rule(
    a: Option<&CoeffSequence>,
    m: Option<&MeasureSpec>,
    opts: &LadderOpts,
) -> Result<SumRuleReport> {
    let case = SumRuleCase::szego();
    let top = *opts.rungs().last().expect("ladder has rungs");
    let derived;
    let seq = match (a, m) {
        (Some(seq), _) => seq,
        (None, Some(mu)) => {
            derived = coeffs_from_measure(mu, top)?.seq;
            &derived
        }
        (None, None) => {
            return Err(Error::domain("need coefficients or a measure"));
        }
    };
    let mut report = sum_rule_check(&case, seq, opts)?;
    if let Some(mu) = m {
        // exact measure available: replace the reconstruction-based side
        let direct = kl_divergence(&MeasureSpec::uniform(), mu, opts.grid_log2);
        report.measure_side = direct;
        let coeff_top = report.coeff_side["total"];
        let (d, within) = match (direct.finite(), coeff_top.finite()) {
            (Some(mv), Some(cv)) => {
                let d = (mv - cv).abs();
                let bar = report.error_bar.unwrap_or(DISCREPANCY_FLOOR);
                (Some(d), Some(d <= bar))
            }
            (None, None) => (None, Some(true)),
            _ => (None, Some(false)),
        };
        report.discrepancy = d;
        report.within_tolerance = within;
    }
    Ok(report)
}
