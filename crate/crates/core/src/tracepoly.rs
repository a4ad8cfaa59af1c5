//! Symbolic window decomposition of operator traces.
//!
//! For the Hessenberg truncation the trace of a power is a sum over closed
//! walks whose steps go down by at most one row.  Collecting walks by their
//! offset pattern turns tr(V(U_N)) into
//!
//! ```text
//! F_minus(alpha_0..alpha_{d-1})
//!   + sum_{j=0}^{N-1-d} G(alpha_j, ..., alpha_{j+d})
//!   + F_plus(alpha_{N-d}..alpha_{N-1})
//! ```
//!
//! exactly, for every N > d and arbitrary complex coefficients: G is a
//! translation-invariant window polynomial, F_minus absorbs the walks that
//! touch row zero (where the entry formula substitutes -1 for the
//! coefficient at index -1), and F_plus collects window positions the
//! common interior range cuts off at the top.  All coefficients are exact
//! rationals; auxiliary rho factors appear to even powers only and are
//! eliminated through rho^2 = 1 - alpha conj(alpha) before anything is
//! returned.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported trace power; tuple counts grow combinatorially beyond.
pub const MAX_POWER: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Alpha,
    AlphaBar,
}

/// One variable power in a monomial: the coefficient at `offset` positions
/// from the window start, either plain or conjugated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Factor {
    pub offset: usize,
    pub kind: VarKind,
    pub power: u32,
}

fn canon(mut factors: Vec<Factor>) -> Vec<Factor> {
    factors.retain(|f| f.power > 0);
    factors.sort_by_key(|f| (f.offset, f.kind));
    let mut out: Vec<Factor> = Vec::with_capacity(factors.len());
    for f in factors {
        match out.last_mut() {
            Some(last) if last.offset == f.offset && last.kind == f.kind => last.power += f.power,
            _ => out.push(f),
        }
    }
    out
}

/// Polynomial in window variables with exact rational coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Poly {
    terms: BTreeMap<Vec<Factor>, BigRational>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[Factor], &BigRational)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn add_term(&mut self, factors: Vec<Factor>, coeff: BigRational) {
        if coeff.is_zero() {
            return;
        }
        let key = canon(factors);
        match self.terms.get_mut(&key) {
            Some(slot) => {
                *slot += coeff;
                if slot.is_zero() {
                    self.terms.remove(&key);
                }
            }
            None => {
                self.terms.insert(key, coeff);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Poly, scale: &BigRational) {
        for (k, v) in &other.terms {
            self.add_term(k.clone(), v * scale);
        }
    }

    /// Swap alpha and alphabar in every factor.
    pub fn conj(&self) -> Poly {
        let mut out = Poly::zero();
        for (k, v) in &self.terms {
            let swapped = k
                .iter()
                .map(|f| Factor {
                    offset: f.offset,
                    kind: match f.kind {
                        VarKind::Alpha => VarKind::AlphaBar,
                        VarKind::AlphaBar => VarKind::Alpha,
                    },
                    power: f.power,
                })
                .collect();
            out.add_term(swapped, v.clone());
        }
        out
    }

    /// Identify alphabar with alpha; meaningful for real coefficient
    /// sequences, where the distinction disappears.
    pub fn real_merge(&self) -> Poly {
        let mut out = Poly::zero();
        for (k, v) in &self.terms {
            let merged = k
                .iter()
                .map(|f| Factor { offset: f.offset, kind: VarKind::Alpha, power: f.power })
                .collect();
            out.add_term(merged, v.clone());
        }
        out
    }

    pub fn shift(&self, by: usize) -> Poly {
        let mut out = Poly::zero();
        for (k, v) in &self.terms {
            let moved = k
                .iter()
                .map(|f| Factor { offset: f.offset + by, kind: f.kind, power: f.power })
                .collect();
            out.add_term(moved, v.clone());
        }
        out
    }

    pub fn max_offset(&self) -> usize {
        self.terms
            .keys()
            .flat_map(|k| k.iter().map(|f| f.offset))
            .max()
            .unwrap_or(0)
    }

    /// Smallest total degree over monomials (None when zero).
    pub fn min_degree(&self) -> Option<u32> {
        self.terms
            .keys()
            .map(|k| k.iter().map(|f| f.power).sum())
            .min()
    }

    /// Keep only monomials of the given total degree.
    pub fn degree_slice(&self, degree: u32) -> Poly {
        let mut out = Poly::zero();
        for (k, v) in &self.terms {
            if k.iter().map(|f| f.power).sum::<u32>() == degree {
                out.add_term(k.clone(), v.clone());
            }
        }
        out
    }

    /// Evaluate with window start at `vars[0]`.
    pub fn eval(&self, vars: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, v) in &self.terms {
            let mut prod = Complex64::new(v.to_f64().expect("rational fits in f64"), 0.0);
            for f in k {
                let base = vars[f.offset];
                let base = match f.kind {
                    VarKind::Alpha => base,
                    VarKind::AlphaBar => base.conj(),
                };
                prod *= base.powi(f.power as i32);
            }
            acc += prod;
        }
        acc
    }
}

#[derive(Serialize, Deserialize)]
struct MonomialRepr {
    coeff: String,
    factors: Vec<Factor>,
}

fn poly_to_repr(p: &Poly) -> Vec<MonomialRepr> {
    p.terms
        .iter()
        .map(|(k, v)| MonomialRepr { coeff: v.to_string(), factors: k.clone() })
        .collect()
}

fn poly_from_repr(list: &[MonomialRepr]) -> Result<Poly> {
    let mut p = Poly::zero();
    for m in list {
        let coeff: BigRational = m
            .coeff
            .parse()
            .map_err(|_| Error::parse(format!("bad rational: {}", m.coeff)))?;
        p.add_term(m.factors.clone(), coeff);
    }
    Ok(p)
}

/// The exact window decomposition of a trace polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceDecomposition {
    degree: usize,
    /// Window polynomial over offsets 0..=degree; no constant term.
    pub g: Poly,
    /// Leading boundary terms; offset r refers to coefficient index r.
    pub f_minus: Poly,
    /// Trailing boundary terms; offset r refers to index N - degree + r.
    pub f_plus: Poly,
}

#[derive(Serialize, Deserialize)]
struct DecompositionRepr {
    degree: usize,
    g: Vec<MonomialRepr>,
    f_minus: Vec<MonomialRepr>,
    f_plus: Vec<MonomialRepr>,
}

impl TraceDecomposition {
    fn empty(degree: usize) -> Self {
        TraceDecomposition {
            degree,
            g: Poly::zero(),
            f_minus: Poly::zero(),
            f_plus: Poly::zero(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn conj(&self) -> Self {
        TraceDecomposition {
            degree: self.degree,
            g: self.g.conj(),
            f_minus: self.f_minus.conj(),
            f_plus: self.f_plus.conj(),
        }
    }

    pub fn add_scaled(&mut self, other: &TraceDecomposition, scale: &BigRational) {
        assert_eq!(self.degree, other.degree, "degree mismatch in decomposition sum");
        self.g.add_scaled(&other.g, scale);
        self.f_minus.add_scaled(&other.f_minus, scale);
        self.f_plus.add_scaled(&other.f_plus, scale);
    }

    /// Evaluate on a finite coefficient array.  Exact for any complex
    /// entries, including a final entry on or off the unit circle.
    pub fn evaluate(&self, alpha: &[Complex64]) -> Result<Complex64> {
        let n = alpha.len();
        let d = self.degree;
        if n <= d {
            return Err(Error::TruncationTooSmall { degree: d, n });
        }
        let mut acc = self.f_minus.eval(alpha);
        for i in 0..=(n - 1 - d) {
            acc += self.g.eval(&alpha[i..]);
        }
        acc += self.f_plus.eval(&alpha[n - d..]);
        Ok(acc)
    }

    /// Degree-2 content of G in the lag basis, after identifying conjugated
    /// variables with plain ones (real-sequence semantics): the coefficient
    /// at lag l multiplies sum_n (alpha_n conj(alpha_{n+l}) + c.c.)/2.
    pub fn quadratic_part(&self) -> QuadraticForm {
        let merged = self.g.real_merge().degree_slice(2);
        let mut q = QuadraticForm::zero();
        for (k, v) in merged.terms() {
            let lag = match k {
                [f] if f.power == 2 => 0,
                [a, b] if a.power == 1 && b.power == 1 => b.offset - a.offset,
                _ => unreachable!("degree slice produced a non-quadratic monomial"),
            };
            q.add_lag(lag, v.clone());
        }
        q
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(DecompositionRepr {
            degree: self.degree,
            g: poly_to_repr(&self.g),
            f_minus: poly_to_repr(&self.f_minus),
            f_plus: poly_to_repr(&self.f_plus),
        })
        .unwrap()
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let repr: DecompositionRepr = serde_json::from_value(v.clone())?;
        Ok(TraceDecomposition {
            degree: repr.degree,
            g: poly_from_repr(&repr.g)?,
            f_minus: poly_from_repr(&repr.f_minus)?,
            f_plus: poly_from_repr(&repr.f_plus)?,
        })
    }
}

/// One offset tuple's contribution: the window monomials and the boundary
/// term from the walk pinned to row zero.
struct TupleTerm {
    /// Window polynomial over offsets 0..=width.
    poly: Poly,
    /// Largest offset the polynomial references.
    width: usize,
    /// The tuple evaluated at the bottom row, coefficient index -1
    /// substituted by -1; offsets are absolute indices.
    boundary: Poly,
}

/// Enumerate offset tuples of length q summing to zero, each step >= -1.
fn tuples(q: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut cur = vec![0i64; q];
    fn rec(q: usize, idx: usize, sum: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if idx == q {
            if sum == 0 {
                out.push(cur.clone());
            }
            return;
        }
        let rest = (q - idx - 1) as i64;
        for off in -1..=(q as i64 - 1) {
            let s = sum + off;
            // later steps lower the sum by at most rest and raise it by at
            // most rest * (q-1)
            if s > rest || s < -rest * (q as i64 - 1) {
                continue;
            }
            cur[idx] = off;
            rec(q, idx + 1, s, cur, out);
        }
    }
    rec(q, 0, 0, &mut cur, &mut out);
    out
}

fn big(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact binomial coefficient.
pub fn binomial(n: usize, k: usize) -> BigInt {
    if k > n {
        return BigInt::from(0);
    }
    let mut num = BigInt::from(1);
    let mut den = BigInt::from(1);
    for i in 0..k.min(n - k) {
        num *= BigInt::from((n - i) as i64);
        den *= BigInt::from((i + 1) as i64);
    }
    num / den
}

/// Expand one tuple into its window polynomial and boundary term.
fn expand_tuple(offsets: &[i64]) -> Result<TupleTerm> {
    let q = offsets.len();
    // walk positions relative to the base row
    let mut pos = vec![0i64; q];
    for m in 1..q {
        pos[m] = pos[m - 1] + offsets[m - 1];
    }
    let minr = *pos.iter().min().unwrap();
    let maxr = *pos.iter().max().unwrap();
    // raw factor collection over relative indices
    let mut sign = 1i64;
    let mut alpha: BTreeMap<i64, u32> = BTreeMap::new();
    let mut alphabar: BTreeMap<i64, u32> = BTreeMap::new();
    let mut rho: BTreeMap<i64, u32> = BTreeMap::new();
    for m in 0..q {
        let p = pos[m];
        let off = offsets[m];
        if off >= 0 {
            sign = -sign;
            *alphabar.entry(p + off).or_insert(0) += 1;
            *alpha.entry(p - 1).or_insert(0) += 1;
            for i in p..p + off {
                *rho.entry(i).or_insert(0) += 1;
            }
        } else {
            *rho.entry(p - 1).or_insert(0) += 1;
        }
    }
    for (&i, &r) in &rho {
        if r % 2 != 0 {
            return Err(Error::internal(format!(
                "odd rho power {r} at relative index {i} in tuple {offsets:?}"
            )));
        }
    }
    // base monomial in alpha/alphabar, shifted so index minr-1 becomes 0
    let shift = 1 - minr;
    let mut base: Vec<Factor> = Vec::new();
    for (&i, &p) in &alpha {
        base.push(Factor { offset: (i + shift) as usize, kind: VarKind::Alpha, power: p });
    }
    for (&i, &p) in &alphabar {
        base.push(Factor { offset: (i + shift) as usize, kind: VarKind::AlphaBar, power: p });
    }
    // rho^2 = 1 - alpha alphabar, expanded binomially per index
    let rho_sites: Vec<(usize, u32)> = rho
        .iter()
        .map(|(&i, &r)| ((i + shift) as usize, r / 2))
        .collect();
    let mut poly = Poly::zero();
    let mut choice = vec![0u32; rho_sites.len()];
    loop {
        let mut coeff = big(sign);
        let mut factors = base.clone();
        for (site, &k) in rho_sites.iter().zip(&choice) {
            let (offset, h) = *site;
            coeff *= BigRational::from_integer(binomial(h as usize, k as usize));
            if k % 2 == 1 {
                coeff = -coeff;
            }
            if k > 0 {
                factors.push(Factor { offset, kind: VarKind::Alpha, power: k });
                factors.push(Factor { offset, kind: VarKind::AlphaBar, power: k });
            }
        }
        poly.add_term(factors, coeff);
        // odometer over 0..=h per site
        let mut idx = 0;
        loop {
            if idx == rho_sites.len() {
                break;
            }
            choice[idx] += 1;
            if choice[idx] <= rho_sites[idx].1 {
                break;
            }
            choice[idx] = 0;
            idx += 1;
        }
        if idx == rho_sites.len() {
            break;
        }
    }
    // boundary: substitute -1 for the variable at offset 0, which is always
    // a plain alpha of positive power (the walk's bottom row sends at least
    // one step up or sideways, and nothing else reaches index -1)
    let mut boundary = Poly::zero();
    for (k, v) in poly.terms() {
        let lead = k
            .iter()
            .find(|f| f.offset == 0)
            .expect("window monomial misses its leading factor");
        if lead.kind != VarKind::Alpha {
            return Err(Error::internal(
                "conjugated factor at the substitution offset",
            ));
        }
        let mut coeff = v.clone();
        if lead.power % 2 == 1 {
            coeff = -coeff;
        }
        let rest: Vec<Factor> = k
            .iter()
            .filter(|f| f.offset != 0)
            .map(|f| Factor { offset: f.offset - 1, kind: f.kind, power: f.power })
            .collect();
        boundary.add_term(rest, coeff);
    }
    Ok(TupleTerm { poly, width: (maxr - minr + 1) as usize, boundary })
}

fn raw_expansion(q: usize) -> Result<Vec<TupleTerm>> {
    if q == 0 || q > MAX_POWER {
        return Err(Error::domain(format!(
            "trace power must be between 1 and {MAX_POWER}, got {q}"
        )));
    }
    tuples(q).iter().map(|t| expand_tuple(t)).collect()
}

/// Fold tuple terms into a decomposition of the given degree d >= power:
/// window positions beyond the common interior range move to F_plus.
fn fold(terms: &[TupleTerm], d: usize) -> TraceDecomposition {
    let one = BigRational::one();
    let mut dec = TraceDecomposition::empty(d);
    for t in terms {
        debug_assert!(t.width <= d);
        dec.g.add_scaled(&t.poly, &one);
        dec.f_minus.add_scaled(&t.boundary, &one);
        // interior range of this tuple runs to N-1-width; the common sum
        // stops at N-1-d, leaving d-width trailing window positions
        for b in 0..d.saturating_sub(t.width) {
            dec.f_plus.add_scaled(&t.poly.shift(b), &one);
        }
    }
    debug_assert!(dec.g.min_degree().map_or(true, |m| m >= 1), "constant term in G");
    debug_assert!(dec.f_minus.min_degree().map_or(true, |m| m >= 1));
    debug_assert!(dec.f_plus.min_degree().map_or(true, |m| m >= 1));
    dec
}

/// Decomposition of tr(U^q) for the Hessenberg truncation.
pub fn expand_trace_ggt(q: usize) -> Result<TraceDecomposition> {
    Ok(fold(&raw_expansion(q)?, q))
}

/// Decomposition of tr(V(U)) for V = sum_l r_l cos(l theta), using
/// tr(U^{-l}) = conj(tr(U^l)).  The coefficient list starts at l = 1; a
/// constant term in V is excluded (it only shifts the trace by r_0 N).
pub fn combine_for_potential(r: &[BigRational]) -> Result<TraceDecomposition> {
    let mut d = r.len();
    while d > 0 && r[d - 1].is_zero() {
        d -= 1;
    }
    if d == 0 {
        return Err(Error::domain("potential has no cosine coefficients"));
    }
    let mut dec = TraceDecomposition::empty(d);
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    for (idx, rl) in r[..d].iter().enumerate() {
        if rl.is_zero() {
            continue;
        }
        let l = idx + 1;
        let single = fold(&raw_expansion(l)?, d);
        let scale = rl * &half;
        dec.add_scaled(&single, &scale);
        dec.add_scaled(&single.conj(), &scale);
    }
    Ok(dec)
}

/// Quadratic form sum_l q_l P_l in the lag basis
/// P_l = sum_n (alpha_n conj(alpha_{n+l}) + conj(alpha_n) alpha_{n+l}) / 2,
/// which for real sequences is sum_n alpha_n alpha_{n+l}.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadraticForm {
    coeffs: BTreeMap<usize, BigRational>,
}

impl QuadraticForm {
    pub fn zero() -> Self {
        QuadraticForm::default()
    }

    pub fn add_lag(&mut self, lag: usize, coeff: BigRational) {
        if coeff.is_zero() {
            return;
        }
        let slot = self.coeffs.entry(lag).or_insert_with(BigRational::zero);
        *slot += coeff;
        if slot.is_zero() {
            self.coeffs.remove(&lag);
        }
    }

    pub fn coeff(&self, lag: usize) -> BigRational {
        self.coeffs.get(&lag).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn lags(&self) -> impl Iterator<Item = (usize, &BigRational)> {
        self.coeffs.iter().map(|(&l, c)| (l, c))
    }

    pub fn max_lag(&self) -> usize {
        self.coeffs.keys().copied().max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn scaled(&self, s: &BigRational) -> QuadraticForm {
        let mut out = QuadraticForm::zero();
        for (&l, c) in &self.coeffs {
            out.add_lag(l, c * s);
        }
        out
    }

    pub fn sub(&self, other: &QuadraticForm) -> QuadraticForm {
        let mut out = self.clone();
        for (&l, c) in &other.coeffs {
            out.add_lag(l, -c.clone());
        }
        out
    }

    /// ||p(S) alpha||^2 for a real shift polynomial p(S) = sum_i v_i S^i:
    /// lag 0 carries sum v_i^2, lag l carries 2 sum_i v_i v_{i+l}.
    pub fn from_shift_poly(v: &[BigRational]) -> QuadraticForm {
        let mut out = QuadraticForm::zero();
        let mut q0 = BigRational::zero();
        for vi in v {
            q0 += vi * vi;
        }
        out.add_lag(0, q0);
        for l in 1..v.len() {
            let mut ql = BigRational::zero();
            for i in 0..v.len() - l {
                ql += &v[i] * &v[i + l];
            }
            out.add_lag(l, ql * big(2));
        }
        out
    }

    /// Exact evaluation on a finite real rational sequence (zero beyond).
    pub fn eval_exact(&self, alpha: &[BigRational]) -> BigRational {
        let mut acc = BigRational::zero();
        for (&l, c) in &self.coeffs {
            let mut s = BigRational::zero();
            for n in 0..alpha.len().saturating_sub(l) {
                s += &alpha[n] * &alpha[n + l];
            }
            acc += c * s;
        }
        acc
    }

    /// Floating evaluation on a window of a real sequence.
    pub fn eval_f64(&self, alpha: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&l, c) in &self.coeffs {
            let mut s = 0.0;
            for n in 0..alpha.len().saturating_sub(l) {
                s += alpha[n] * alpha[n + l];
            }
            acc += c.to_f64().expect("rational fits in f64") * s;
        }
        acc
    }
}

/// Check one quadratic identity: the degree-2 content of the potential's
/// trace decomposition plus the lag-0 unit borrowed from the entropy series
/// must equal `scale * ||shift_poly(S) alpha||^2`, exactly.
pub fn quadratic_identity_check(
    r: &[BigRational],
    shift_poly: &[BigRational],
    scale: &BigRational,
) -> Result<()> {
    let dec = combine_for_potential(r)?;
    let mut left = dec.quadratic_part();
    left.add_lag(0, BigRational::one());
    let right = QuadraticForm::from_shift_poly(shift_poly).scaled(scale);
    if left != right {
        let diff = left.sub(&right);
        let lags: Vec<String> = diff
            .lags()
            .map(|(l, c)| format!("lag {l}: {c}"))
            .collect();
        return Err(Error::internal(format!(
            "quadratic identity failed; residual {}",
            lags.join(", ")
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opmatrix::{CMVOperator, GGTOperator};
    use crate::measures::TrigPoly;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn power_one_structure() {
        let dec = expand_trace_ggt(1).unwrap();
        // G = -x0 conj(x1)
        assert_eq!(dec.g.num_terms(), 1);
        let (factors, coeff) = dec.g.terms().next().unwrap();
        assert_eq!(coeff, &big(-1));
        assert_eq!(
            factors,
            &[
                Factor { offset: 0, kind: VarKind::Alpha, power: 1 },
                Factor { offset: 1, kind: VarKind::AlphaBar, power: 1 },
            ]
        );
        // F_minus = +conj(x0), F_plus empty
        assert_eq!(dec.f_minus.num_terms(), 1);
        let (bf, bc) = dec.f_minus.terms().next().unwrap();
        assert_eq!(bc, &big(1));
        assert_eq!(bf, &[Factor { offset: 0, kind: VarKind::AlphaBar, power: 1 }]);
        assert!(dec.f_plus.is_zero());
    }

    #[test]
    fn no_constant_terms_up_to_max_power() {
        for q in 1..=MAX_POWER {
            let dec = expand_trace_ggt(q).unwrap();
            assert!(dec.g.min_degree().unwrap() >= 1, "q={q}");
            assert!(dec.f_minus.min_degree().unwrap() >= 1, "q={q}");
            if !dec.f_plus.is_zero() {
                assert!(dec.f_plus.min_degree().unwrap() >= 1, "q={q}");
            }
            assert!(dec.g.max_offset() <= q, "q={q}");
        }
    }

    #[test]
    fn quadratic_parts_of_powers() {
        for q in 1..=MAX_POWER {
            let quad = expand_trace_ggt(q).unwrap().quadratic_part();
            assert_eq!(quad.coeff(q), big(-(q as i64)), "q={q}");
            for l in 0..q {
                assert!(quad.coeff(l).is_zero(), "q={q} lag {l}");
            }
        }
    }

    #[test]
    fn power_two_quartic_content() {
        // real-merged quartic slice of tr(U^2):
        // x0^2 x1^2 + 2 x0 x1^2 x2 per window
        let dec = expand_trace_ggt(2).unwrap();
        let quartic = dec.g.real_merge().degree_slice(4);
        let mut seen = BTreeMap::new();
        for (k, v) in quartic.terms() {
            seen.insert(k.to_vec(), v.clone());
        }
        assert_eq!(
            seen.get(&vec![
                Factor { offset: 0, kind: VarKind::Alpha, power: 2 },
                Factor { offset: 1, kind: VarKind::Alpha, power: 2 },
            ]),
            Some(&big(1))
        );
        assert_eq!(
            seen.get(&vec![
                Factor { offset: 0, kind: VarKind::Alpha, power: 1 },
                Factor { offset: 1, kind: VarKind::Alpha, power: 2 },
                Factor { offset: 2, kind: VarKind::Alpha, power: 1 },
            ]),
            Some(&big(2))
        );
        assert_eq!(seen.len(), 2);
    }

    /// Exact complex rational arithmetic for the dense oracle.
    #[derive(Clone, PartialEq, Debug)]
    struct CRat {
        re: BigRational,
        im: BigRational,
    }

    impl CRat {
        fn zero() -> Self {
            CRat { re: BigRational::zero(), im: BigRational::zero() }
        }
        fn real(x: BigRational) -> Self {
            CRat { re: x, im: BigRational::zero() }
        }
        fn add(&self, o: &CRat) -> CRat {
            CRat { re: &self.re + &o.re, im: &self.im + &o.im }
        }
        fn mul(&self, o: &CRat) -> CRat {
            CRat {
                re: &self.re * &o.re - &self.im * &o.im,
                im: &self.re * &o.im + &self.im * &o.re,
            }
        }
        fn conj(&self) -> CRat {
            CRat { re: self.re.clone(), im: -self.im.clone() }
        }
        fn neg(&self) -> CRat {
            CRat { re: -self.re.clone(), im: -self.im.clone() }
        }
        fn norm_sqr(&self) -> BigRational {
            &self.re * &self.re + &self.im * &self.im
        }
    }

    /// Dense Hessenberg truncation over exact complex rationals; requires
    /// every 1 - |alpha|^2 to be the square of a rational.
    fn dense_exact_trace(alpha: &[CRat], q: usize) -> CRat {
        let n = alpha.len();
        let rho: Vec<BigRational> = alpha
            .iter()
            .map(|a| {
                let r2 = BigRational::one() - a.norm_sqr();
                // rational square root by construction of the test values
                let num = r2.numer().sqrt();
                let den = r2.denom().sqrt();
                let r = BigRational::new(num.clone(), den.clone());
                assert_eq!(&r * &r, r2, "test value lacks a rational rho");
                r
            })
            .collect();
        let a_ext = |k: i64| -> CRat {
            if k < 0 {
                CRat::real(-BigRational::one())
            } else {
                alpha[k as usize].clone()
            }
        };
        let entry = |i: usize, j: usize| -> CRat {
            if i == j + 1 {
                CRat::real(rho[j].clone())
            } else if i > j {
                CRat::zero()
            } else {
                let mut prod = BigRational::one();
                for k in i..j {
                    prod *= &rho[k];
                }
                alpha[j]
                    .conj()
                    .mul(&a_ext(i as i64 - 1))
                    .mul(&CRat::real(prod))
                    .neg()
            }
        };
        let mut m: Vec<Vec<CRat>> = (0..n)
            .map(|i| (0..n).map(|j| entry(i, j)).collect())
            .collect();
        let base = m.clone();
        for _ in 1..q {
            let mut next = vec![vec![CRat::zero(); n]; n];
            for i in 0..n {
                for k in 0..n {
                    if m[i][k] == CRat::zero() {
                        continue;
                    }
                    for j in 0..n {
                        next[i][j] = next[i][j].add(&m[i][k].mul(&base[k][j]));
                    }
                }
            }
            m = next;
        }
        let mut tr = CRat::zero();
        for i in 0..n {
            tr = tr.add(&m[i][i]);
        }
        tr
    }

    fn poly_eval_exact(p: &Poly, vars: &[CRat]) -> CRat {
        let mut acc = CRat::zero();
        for (k, v) in p.terms() {
            let mut prod = CRat::real(v.clone());
            for f in k {
                let base = match f.kind {
                    VarKind::Alpha => vars[f.offset].clone(),
                    VarKind::AlphaBar => vars[f.offset].conj(),
                };
                for _ in 0..f.power {
                    prod = prod.mul(&base);
                }
            }
            acc = acc.add(&prod);
        }
        acc
    }

    fn decomposition_eval_exact(dec: &TraceDecomposition, alpha: &[CRat]) -> CRat {
        let n = alpha.len();
        let d = dec.degree();
        let mut acc = poly_eval_exact(&dec.f_minus, alpha);
        for i in 0..=(n - 1 - d) {
            acc = acc.add(&poly_eval_exact(&dec.g, &alpha[i..]));
        }
        acc.add(&poly_eval_exact(&dec.f_plus, &alpha[n - d..]))
    }

    #[test]
    fn exact_agreement_with_dense_trace() {
        // coefficients with rational rho: t*(3/5 + 4i/5) for t in {3/5, 5/13, 0, -3/5}
        let dir = (r(3, 5), r(4, 5));
        let ts = [r(3, 5), r(5, 13), r(0, 1), r(-3, 5), r(5, 13), r(3, 5), r(0, 1), r(-5, 13), r(3, 5)];
        let alpha: Vec<CRat> = ts
            .iter()
            .map(|t| CRat { re: t * &dir.0, im: t * &dir.1 })
            .collect();
        for q in 1..=4usize {
            let dec = expand_trace_ggt(q).unwrap();
            let sym = decomposition_eval_exact(&dec, &alpha);
            let dense = dense_exact_trace(&alpha, q);
            assert_eq!(sym, dense, "q={q}");
        }
    }

    #[test]
    fn exact_agreement_with_unimodular_final_entry() {
        // final coefficient on the circle: 3/5 + 4i/5 itself
        let alpha = vec![
            CRat { re: r(3, 5), im: r(4, 5) }.mul(&CRat::real(r(3, 5))),
            CRat { re: r(-5, 13), im: r(0, 1) },
            CRat { re: r(0, 1), im: r(3, 5) },
            CRat { re: r(3, 5), im: r(4, 5) },
        ];
        for q in 1..=3usize {
            let dec = expand_trace_ggt(q).unwrap();
            assert_eq!(
                decomposition_eval_exact(&dec, &alpha),
                dense_exact_trace(&alpha, q),
                "q={q}"
            );
        }
    }

    fn random_alpha(rng: &mut StdRng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::from_polar(0.7 * rng.gen::<f64>(), rng.gen::<f64>() * std::f64::consts::TAU))
            .collect()
    }

    #[test]
    fn float_agreement_with_operator_traces() {
        let mut rng = StdRng::seed_from_u64(42);
        for &n in &[7usize, 12] {
            let mut alpha = random_alpha(&mut rng, n);
            alpha[n - 1] = Complex64::from_polar(1.0, rng.gen::<f64>());
            let g = GGTOperator::new(alpha.clone()).unwrap();
            for q in 1..=5usize {
                let dec = expand_trace_ggt(q).unwrap();
                let sym = dec.evaluate(&alpha).unwrap();
                let num = g.trace_power(q);
                assert!((sym - num).norm() < 1e-12, "n={n} q={q}: {sym} vs {num}");
            }
        }
    }

    #[test]
    fn potential_decomposition_matches_both_operators() {
        let mut rng = StdRng::seed_from_u64(43);
        let n = 11;
        let mut alpha = random_alpha(&mut rng, n);
        alpha[n - 1] = Complex64::from_polar(1.0, 1.1);
        // V = (4/3) cos - (1/6) cos 2theta
        let dec = combine_for_potential(&[r(4, 3), r(-1, 6)]).unwrap();
        let sym = dec.evaluate(&alpha).unwrap();
        let v = TrigPoly::from_cosine(0.0, &[4.0 / 3.0, -1.0 / 6.0]);
        let via_ggt = GGTOperator::new(alpha.clone()).unwrap().trace_of_potential(&v).unwrap();
        let via_cmv = CMVOperator::new(alpha).unwrap().trace_of_potential(&v).unwrap();
        assert!((sym - via_ggt).norm() < 1e-12, "{sym} vs {via_ggt}");
        assert!((sym - via_cmv).norm() < 1e-12, "{sym} vs {via_cmv}");
        assert!(sym.im.abs() < 1e-12);
    }

    #[test]
    fn interior_support_sees_no_boundary() {
        // coefficients supported on 5..=8 inside N=20: only interior windows
        // meeting the support contribute, and the value is N-independent
        let mut rng = StdRng::seed_from_u64(44);
        let support: Vec<Complex64> = random_alpha(&mut rng, 4);
        let embed = |n: usize| -> Vec<Complex64> {
            let mut a = vec![Complex64::new(0.0, 0.0); n];
            a[5..9].copy_from_slice(&support);
            let last = n - 1;
            a[last] = Complex64::new(1.0, 0.0);
            a
        };
        for q in 1..=4usize {
            let dec = expand_trace_ggt(q).unwrap();
            let v20 = dec.evaluate(&embed(20)).unwrap();
            let v33 = dec.evaluate(&embed(33)).unwrap();
            assert!((v20 - v33).norm() < 1e-13, "q={q}");
            assert!((v20 - GGTOperator::new(embed(20)).unwrap().trace_power(q)).norm() < 1e-12);
        }
    }

    #[test]
    fn shift_poly_norm_matches_central_binomials() {
        // ||(S-1)^k alpha||^2 has lag coefficients given exactly by central
        // binomial columns: lag 0 -> C(2k,k), lag l -> 2(-1)^l C(2k,k+l)
        for k in 1..=20usize {
            let v: Vec<BigRational> = (0..=k)
                .map(|i| {
                    let c = BigRational::from_integer(binomial(k, i));
                    if (k - i) % 2 == 1 {
                        -c
                    } else {
                        c
                    }
                })
                .collect();
            let q = QuadraticForm::from_shift_poly(&v);
            assert_eq!(q.coeff(0), BigRational::from_integer(binomial(2 * k, k)), "k={k}");
            for l in 1..=k {
                let mut want = BigRational::from_integer(binomial(2 * k, k + l)) * big(2);
                if l % 2 == 1 {
                    want = -want;
                }
                assert_eq!(q.coeff(l), want, "k={k} l={l}");
            }
        }
    }

    #[test]
    fn quadratic_identity_single_zero() {
        // V = cos theta; quadratic content + borrowed lag-0 unit
        // = (1/2)||(S-1) alpha||^2
        quadratic_identity_check(&[r(1, 1)], &[r(-1, 1), r(1, 1)], &r(1, 2)).unwrap();
    }

    #[test]
    fn quadratic_identity_double_zero() {
        // V = (4/3) cos - (1/6) cos 2theta; (1/6)||(S-1)^2 alpha||^2
        quadratic_identity_check(
            &[r(4, 3), r(-1, 6)],
            &[r(1, 1), r(-2, 1), r(1, 1)],
            &r(1, 6),
        )
        .unwrap();
    }

    #[test]
    fn quadratic_identity_detects_mismatch() {
        let err = quadratic_identity_check(&[r(1, 1)], &[r(-1, 1), r(1, 1)], &r(1, 3));
        assert!(err.is_err());
    }

    #[test]
    fn decomposition_json_round_trip() {
        let dec = expand_trace_ggt(3).unwrap();
        let j = dec.to_json();
        let back = TraceDecomposition::from_json(&j).unwrap();
        assert_eq!(dec, back);
        // coefficients serialized as exact rational strings
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.contains("\"coeff\""), "{s}");
    }

    #[test]
    fn power_bounds_enforced() {
        assert!(expand_trace_ggt(0).is_err());
        assert!(expand_trace_ggt(MAX_POWER + 1).is_err());
        let alpha = vec![Complex64::new(0.0, 0.0); 3];
        let dec = expand_trace_ggt(3).unwrap();
        assert!(dec.evaluate(&alpha).is_err());
    }

    #[test]
    fn zero_sequence_leaves_only_boundary() {
        // G and F+ vanish on zeros; F- evaluated at zero is zero too, so
        // the whole trace vanishes; with only the final entry unimodular
        // the boundary terms alone survive
        let mut alpha = vec![Complex64::new(0.0, 0.0); 9];
        let dec = expand_trace_ggt(4).unwrap();
        assert_eq!(dec.evaluate(&alpha).unwrap(), Complex64::new(0.0, 0.0));
        alpha[8] = Complex64::new(0.0, 1.0);
        let sym = dec.evaluate(&alpha).unwrap();
        let num = GGTOperator::new(alpha).unwrap().trace_power(4);
        assert!((sym - num).norm() < 1e-13);
    }
}
