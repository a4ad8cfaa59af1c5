//! The coefficient side of the measure correspondence.
//!
//! Every probability measure on the circle with infinite support determines
//! a sequence of recursion coefficients in the open unit disk through the
//! monic orthogonal polynomial recursion
//!
//! ```text
//! Phi_{n+1}(z) = z Phi_n(z) - conj(alpha_n) Phi_n^*(z),
//! Phi_n^*(z) = z^n conj(Phi_n(1 / conj(z)))
//! ```
//!
//! and a measure supported on exactly N points yields N coefficients, the
//! last of unit modulus.  This module extracts coefficients from moments,
//! rebuilds measures from coefficients via spectral truncation, and carries
//! closed-form tails of named reference sequences.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{Density, MeasureSpec};
use crate::opmatrix::CMVOperator;

/// A coefficient this close to the unit circle terminates extraction.
pub const BOUNDARY_TOL: f64 = 1e-10;

/// Relative squared-norm floor below which moment extraction warns.
pub const CONDITIONING_FLOOR: f64 = 1e-12;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Closed-form description of a coefficient sequence beyond its stored
/// prefix.  All tails are real-valued; `alt` multiplies by (-1)^n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    Zero,
    /// c (n+1)^{-p}, optionally alternating.
    PowerDecay {
        c: f64,
        p: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        alt: bool,
    },
    /// c r^n, optionally alternating.
    Geometric {
        c: f64,
        r: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        alt: bool,
    },
    /// c / (n+2).
    HarmonicShift { c: f64 },
    /// Pointwise sum of closed forms.
    Sum { terms: Vec<Tail> },
}

impl Tail {
    pub fn value(&self, n: usize) -> f64 {
        let sign = |alt: bool| if alt && n % 2 == 1 { -1.0 } else { 1.0 };
        match self {
            Tail::Zero => 0.0,
            Tail::PowerDecay { c, p, alt } => sign(*alt) * c * ((n + 1) as f64).powf(-p),
            Tail::Geometric { c, r, alt } => sign(*alt) * c * r.powi(n as i32),
            Tail::HarmonicShift { c } => c / (n + 2) as f64,
            Tail::Sum { terms } => terms.iter().map(|t| t.value(n)).sum(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Tail::Zero => true,
            Tail::Sum { terms } => terms.iter().all(Tail::is_zero),
            _ => false,
        }
    }

    /// Upper bound on |value(n)| over all n >= from (monotone envelopes).
    pub fn sup_bound(&self, from: usize) -> f64 {
        match self {
            Tail::Zero => 0.0,
            Tail::PowerDecay { c, p, .. } => {
                if *p >= 0.0 {
                    c.abs() * ((from + 1) as f64).powf(-p)
                } else {
                    f64::INFINITY
                }
            }
            Tail::Geometric { c, r, .. } => {
                if r.abs() <= 1.0 {
                    c.abs() * r.abs().powi(from as i32)
                } else {
                    f64::INFINITY
                }
            }
            Tail::HarmonicShift { c } => c.abs() / (from + 2) as f64,
            Tail::Sum { terms } => terms.iter().map(|t| t.sup_bound(from)).sum(),
        }
    }
}

/// A coefficient sequence: explicit prefix, closed-form tail, and an
/// optional terminating unimodular phase for finitely supported measures.
///
/// Construction is permissive about moduli so that reference sequences
/// whose first entry touches the circle can still be described; operator
/// and measure constructions enforce the disk constraint at the boundary
/// where it matters.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSequence {
    prefix: Vec<Complex64>,
    tail: Tail,
    boundary_phase: Option<Complex64>,
}

impl CoeffSequence {
    pub fn new(prefix: Vec<Complex64>, tail: Tail) -> Self {
        CoeffSequence { prefix, tail, boundary_phase: None }
    }

    pub fn from_reals(prefix: &[f64], tail: Tail) -> Self {
        CoeffSequence::new(
            prefix.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            tail,
        )
    }

    /// Finite sequence terminated by a unimodular phase after the prefix.
    pub fn terminated(prefix: Vec<Complex64>, phase: Complex64) -> Result<Self> {
        if phase.norm() < 0.5 {
            return Err(Error::domain("boundary phase must be unimodular"));
        }
        Ok(CoeffSequence {
            prefix,
            tail: Tail::Zero,
            boundary_phase: Some(phase / phase.norm()),
        })
    }

    pub fn zero() -> Self {
        CoeffSequence::new(Vec::new(), Tail::Zero)
    }

    pub fn prefix(&self) -> &[Complex64] {
        &self.prefix
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn boundary_phase(&self) -> Option<Complex64> {
        self.boundary_phase
    }

    /// Total length for terminated sequences, None for infinite ones.
    pub fn len(&self) -> Option<usize> {
        self.boundary_phase.map(|_| self.prefix.len() + 1)
    }

    pub fn is_terminated(&self) -> bool {
        self.boundary_phase.is_some()
    }

    /// alpha_n.  Beyond a terminating phase the sequence is undefined;
    /// this returns zero there, and sized accessors guard the boundary.
    pub fn get(&self, n: usize) -> Complex64 {
        if n < self.prefix.len() {
            return self.prefix[n];
        }
        match (self.boundary_phase, n == self.prefix.len()) {
            (Some(phase), true) => phase,
            (Some(_), false) => ZERO,
            (None, _) => Complex64::new(self.tail.value(n), 0.0),
        }
    }

    pub fn rho(&self, n: usize) -> f64 {
        (1.0 - self.get(n).norm_sqr()).max(0.0).sqrt()
    }

    pub fn is_real(&self) -> bool {
        self.prefix.iter().all(|a| a.im == 0.0)
            && self.boundary_phase.map_or(true, |p| p.im.abs() < 1e-15)
    }

    /// First n coefficients of an untruncated sequence.  Errors if the
    /// sequence terminates before n.
    pub fn first_n(&self, n: usize) -> Result<Vec<Complex64>> {
        if let Some(len) = self.len() {
            if n > len {
                return Err(Error::domain(format!(
                    "sequence terminates at length {len}, cannot take {n}"
                )));
            }
        }
        Ok((0..n).map(|j| self.get(j)).collect())
    }

    /// Coefficients for an N-point truncation: the first N-1 entries with a
    /// unimodular final entry appended (phase 1 unless the sequence itself
    /// terminates exactly at N).  All interior entries must lie strictly in
    /// the disk.
    pub fn truncation_coeffs(&self, n: usize) -> Result<Vec<Complex64>> {
        if n < 2 {
            return Err(Error::domain("truncation size must be at least 2"));
        }
        if let Some(len) = self.len() {
            if n > len {
                return Err(Error::domain(format!(
                    "sequence terminates at length {len} < requested size {n}"
                )));
            }
        }
        let mut out = self.first_n(n - 1)?;
        for (j, a) in out.iter().enumerate() {
            if a.norm() >= 1.0 {
                return Err(Error::domain(format!(
                    "coefficient {j} has modulus {:.6} >= 1",
                    a.norm()
                )));
            }
        }
        let cap = match (self.boundary_phase, self.len()) {
            (Some(phase), Some(len)) if len == n => phase,
            _ => Complex64::new(1.0, 0.0),
        };
        out.push(cap);
        Ok(out)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(SeqRepr::from(self)).unwrap()
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let repr: SeqRepr = serde_json::from_value(v.clone())?;
        repr.build()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrPair {
    Num(f64),
    Complex { re: f64, im: f64 },
}

#[derive(Serialize, Deserialize)]
struct SeqRepr {
    prefix: Vec<NumOrPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tail: Option<Tail>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary_phase: Option<NumOrPair>,
    real: bool,
}

impl From<&CoeffSequence> for SeqRepr {
    fn from(s: &CoeffSequence) -> Self {
        let pack = |z: &Complex64| {
            if z.im == 0.0 {
                NumOrPair::Num(z.re)
            } else {
                NumOrPair::Complex { re: z.re, im: z.im }
            }
        };
        SeqRepr {
            prefix: s.prefix.iter().map(pack).collect(),
            tail: if s.tail.is_zero() && s.is_terminated() {
                None
            } else {
                Some(s.tail.clone())
            },
            boundary_phase: s.boundary_phase.as_ref().map(pack),
            real: s.is_real(),
        }
    }
}

impl SeqRepr {
    fn build(self) -> Result<CoeffSequence> {
        let unpack = |v: &NumOrPair| match v {
            NumOrPair::Num(x) => Complex64::new(*x, 0.0),
            NumOrPair::Complex { re, im } => Complex64::new(*re, *im),
        };
        let prefix: Vec<Complex64> = self.prefix.iter().map(unpack).collect();
        let tail = self.tail.unwrap_or(Tail::Zero);
        match self.boundary_phase {
            Some(p) => CoeffSequence::terminated(prefix, unpack(&p)),
            None => Ok(CoeffSequence::new(prefix, tail)),
        }
    }
}

impl Serialize for CoeffSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SeqRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoeffSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        SeqRepr::deserialize(d)?.build().map_err(serde::de::Error::custom)
    }
}

/// Named reference sequences with exact tails.
///
/// * `zero`: the free sequence.
/// * `one_point_minimizer`: alpha_n = -1/(n+2), the coefficients of the
///   density 1 - cos(theta) against d(theta)/2pi.
/// * `fifth_root_decay`: alpha_n = (n+1)^{-1/5}, square and fourth-power
///   divergent but sixth-power summable; its first entry sits on the
///   circle, which the permissive constructor allows.
pub fn closed_form(tag: &str) -> Result<CoeffSequence> {
    match tag {
        "zero" => Ok(CoeffSequence::zero()),
        "one_point_minimizer" => Ok(CoeffSequence::new(
            Vec::new(),
            Tail::HarmonicShift { c: -1.0 },
        )),
        "fifth_root_decay" => Ok(CoeffSequence::new(
            Vec::new(),
            Tail::PowerDecay { c: 1.0, p: 0.2, alt: false },
        )),
        _ => Err(Error::domain(format!("unknown closed form: {tag}"))),
    }
}

/// Parse a sequence description: either a full coefficient-sequence
/// object or a reference to a named closed form, {"closed_form": "zero"}.
pub fn sequence_from_json(v: &serde_json::Value) -> Result<CoeffSequence> {
    if let Some(tag) = v.get("closed_form").and_then(serde_json::Value::as_str) {
        return closed_form(tag);
    }
    CoeffSequence::from_json(v)
}

/// Monic orthogonal polynomial and its reversed conjugate, as coefficient
/// arrays in the monomial basis.
#[derive(Clone, Debug)]
pub struct MonicPolyPair {
    /// Phi_n, length n+1, last entry 1.
    pub phi: Vec<Complex64>,
    /// Phi_n^*, the conjugated coefficient reversal of phi.
    pub phi_star: Vec<Complex64>,
}

impl MonicPolyPair {
    pub fn constant() -> Self {
        MonicPolyPair {
            phi: vec![Complex64::new(1.0, 0.0)],
            phi_star: vec![Complex64::new(1.0, 0.0)],
        }
    }

    pub fn degree(&self) -> usize {
        self.phi.len() - 1
    }

    /// One recursion step with coefficient alpha.
    pub fn step(&self, alpha: Complex64) -> Self {
        let n = self.phi.len();
        let ab = alpha.conj();
        let mut phi = vec![ZERO; n + 1];
        for (m, &c) in self.phi.iter().enumerate() {
            phi[m + 1] += c;
        }
        for (m, &c) in self.phi_star.iter().enumerate() {
            phi[m] -= ab * c;
        }
        let phi_star: Vec<Complex64> = (0..=n).map(|m| phi[n - m].conj()).collect();
        MonicPolyPair { phi, phi_star }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = ZERO;
        for &c in self.phi.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }
}

/// Result of coefficient extraction: the sequence plus diagnostics.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub seq: CoeffSequence,
    /// Squared norms of the monic polynomials, one per recursion step.
    pub norms: Vec<f64>,
    /// Set when ||Phi_n||^2 / c_0 fell below [`CONDITIONING_FLOOR`].
    pub conditioning_warning: bool,
}

/// Extract the first `l` coefficients of a measure from its moments.
///
/// Inner products against the moment array make each step a Toeplitz
/// bilinear form; the whole extraction costs O(l^2).  Extraction stops
/// early with a terminating phase when a coefficient reaches the unit
/// circle, which happens exactly when the measure is supported on that
/// many points.
pub fn coeffs_from_measure(mu: &MeasureSpec, l: usize) -> Result<Extraction> {
    if l == 0 {
        return Err(Error::domain("need at least one coefficient"));
    }
    let c = mu.moments(l);
    let c0 = c[0].re;
    let mut pair = MonicPolyPair::constant();
    let mut norm2 = c0;
    let mut prefix = Vec::with_capacity(l);
    let mut norms = vec![norm2];
    let mut warned = false;
    for _n in 0..l {
        // <1, z Phi_n> = sum_m phi_m conj(c_{m+1})
        let inner: Complex64 = pair
            .phi
            .iter()
            .enumerate()
            .map(|(m, &p)| p * c[m + 1].conj())
            .sum();
        let alpha = (inner / norm2).conj();
        if alpha.norm() >= 1.0 - BOUNDARY_TOL {
            let seq = CoeffSequence::terminated(prefix, alpha)?;
            return Ok(Extraction { seq, norms, conditioning_warning: warned });
        }
        prefix.push(alpha);
        pair = pair.step(alpha);
        norm2 *= 1.0 - alpha.norm_sqr();
        norms.push(norm2);
        if norm2 / c0 < CONDITIONING_FLOOR {
            warned = true;
        }
    }
    Ok(Extraction {
        seq: CoeffSequence::new(prefix, Tail::Zero),
        norms,
        conditioning_warning: warned,
    })
}

/// The N-point measure whose coefficients extend the given sequence: the
/// spectral measure of the N-by-N five-banded truncation with final
/// coefficient set to phase 1 (or the sequence's own terminating phase).
/// Its first N-1 moments coincide with those of the full sequence.
pub fn measure_from_coeffs(seq: &CoeffSequence, n: usize) -> Result<MeasureSpec> {
    let n = match seq.len() {
        Some(len) => n.min(len),
        None => n,
    };
    let coeffs = seq.truncation_coeffs(n)?;
    CMVOperator::new(coeffs)?.spectral_measure()
}

/// Absolutely continuous density with coefficient sequence
/// (alpha_0..alpha_{K-1}, 0, 0, ...): on the circle
///
/// ```text
/// w(theta) = prod_{j<K} rho_j^2 / |Phi_K(e^{i theta})|^2
/// ```
///
/// evaluated in log space on a uniform grid of 2^grid_log2 nodes.  Exact
/// (up to quadrature of the moments) for sequences of finite support, and
/// the standard approximation route for infinite ones.
pub fn truncated_density(coeffs: &[Complex64], grid_log2: u32) -> Result<MeasureSpec> {
    for (j, a) in coeffs.iter().enumerate() {
        if a.norm() >= 1.0 {
            return Err(Error::domain(format!(
                "coefficient {j} has modulus {:.6} >= 1",
                a.norm()
            )));
        }
    }
    let log_rho2: f64 = coeffs
        .iter()
        .map(|a| (1.0 - a.norm_sqr()).ln())
        .sum();
    let g = 1usize << grid_log2;
    let mut w = Vec::with_capacity(g);
    for i in 0..g {
        let theta = std::f64::consts::TAU * i as f64 / g as f64;
        let z = Complex64::from_polar(1.0, theta);
        // run the recursion in value space; the polynomials stay O(2^K)
        // bounded so a scale counter guards against overflow
        let mut phi = Complex64::new(1.0, 0.0);
        let mut star = Complex64::new(1.0, 0.0);
        let mut scale = 0.0f64;
        for a in coeffs {
            let next = z * phi - a.conj() * star;
            let next_star = star - *a * z * phi;
            phi = next;
            star = next_star;
            let m = phi.norm().max(star.norm());
            if m > 1e140 {
                phi /= m;
                star /= m;
                scale += m.ln();
            }
        }
        let log_abs2 = 2.0 * (phi.norm().ln() + scale);
        w.push((log_rho2 - log_abs2).exp());
    }
    MeasureSpec::new(Density::Grid(w), Vec::new())
}

/// Same density as a trigonometric polynomial reciprocal is not available;
/// for sum-rule work the grid form above suffices.  This helper returns
/// the density of the sequence's first K coefficients.
pub fn truncated_density_of(seq: &CoeffSequence, k: usize, grid_log2: u32) -> Result<MeasureSpec> {
    truncated_density(&seq.first_n(k)?, grid_log2)
}

/// Verify orthogonality of the recursion output against the moment array:
/// max over n < l of max_{j <= n} |<z^j, Phi_{n+1}>| (normalized by the
/// norm), a direct residual for the extraction.
pub fn orthogonality_defect(mu: &MeasureSpec, l: usize) -> Result<f64> {
    let c = mu.moments(l + 1);
    let ext = coeffs_from_measure(mu, l)?;
    let full = match ext.seq.len() {
        Some(len) => len.min(l),
        None => l,
    };
    let mut pair = MonicPolyPair::constant();
    let mut worst = 0.0f64;
    for n in 0..full {
        pair = pair.step(ext.seq.get(n));
        for j in 0..=n {
            // <z^j, Phi_{n+1}> = sum_m phi_m conj(c_{j - m}) with c_{-k} = conj(c_k)
            let mut acc = ZERO;
            for (m, &p) in pair.phi.iter().enumerate() {
                let k = j as i64 - m as i64;
                let ck = if k >= 0 { c[k as usize] } else { c[(-k) as usize].conj() };
                // integral of z^{m-j} is conj(c_{m-j}) = c_{j-m}
                acc += p * ck;
            }
            worst = worst.max(acc.norm() / ext.norms[n].max(1e-300));
        }
    }
    Ok(worst)
}
