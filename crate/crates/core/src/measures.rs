//! Probability measures on the unit circle.
//!
//! A measure is an absolutely continuous part (trigonometric polynomial or
//! grid samples of a density against d(theta)/2pi) plus finitely many point
//! masses.  Construction normalizes eagerly to total mass one.  The module
//! also provides trigonometric moments, relative entropy between two
//! measures, the Fourier transform of the logarithmic kernel, and the
//! equilibrium potential of a density vanishing at prescribed points.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ladder::Kahan;

/// Default quadrature grid resolution, log2 of the node count.
pub const GRID_LOG2_DEFAULT: u32 = 12;

/// Densities below this floor count as vanishing for divergence detection.
pub const W_FLOOR: f64 = 1e-14;

/// Numerator densities above this threshold must see a nonvanishing
/// denominator, else the divergence is declared.
pub const NU_THRESHOLD: f64 = 1e-10;

/// Tolerance for "negative density" rejection; values in [-NEG_TOL, 0) are
/// treated as roundoff and clamped to zero.
const NEG_TOL: f64 = 1e-12;

const TWO_PI: f64 = 2.0 * PI;

/// [0, +inf] valued results: relative entropy can be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    PlusInf,
}

impl ExtReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(*x),
            ExtReal::PlusInf => None,
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            ExtReal::Finite(x) => *x,
            ExtReal::PlusInf => f64::INFINITY,
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            ExtReal::PlusInf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(ExtReal::Finite(x)),
            Raw::Str(s) if s == "inf" => Ok(ExtReal::PlusInf),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad extended real: {s}"))),
        }
    }
}

/// Wrap an angle into [0, 2pi).
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % TWO_PI;
    if t < 0.0 {
        t += TWO_PI;
    }
    t
}

/// Uniform quadrature nodes theta_g = 2 pi g / G, G = 2^log2.
pub fn grid_thetas(log2: u32) -> Vec<f64> {
    let g = 1usize << log2;
    (0..g).map(|i| TWO_PI * i as f64 / g as f64).collect()
}

/// Laurent polynomial sum_{l=-d}^{d} c_l e^{i l theta} on the circle.
///
/// Coefficients are stored from l = -d to l = d.  Hermitian coefficient
/// symmetry (c_{-l} = conj c_l) makes the values real; densities and
/// potentials are of that kind, but the type itself does not require it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    c: Vec<Complex64>,
}

impl TrigPoly {
    pub fn new(neg_to_pos: Vec<Complex64>) -> Result<Self> {
        if neg_to_pos.len() % 2 == 0 || neg_to_pos.is_empty() {
            return Err(Error::domain("trig poly needs odd coefficient count (l = -d..d)"));
        }
        Ok(TrigPoly { c: neg_to_pos })
    }

    pub fn constant(value: f64) -> Self {
        TrigPoly { c: vec![Complex64::new(value, 0.0)] }
    }

    /// Build sum_l r_l cos(l theta) from cosine coefficients r_1..r_d
    /// (plus an optional constant term r0).
    pub fn from_cosine(r0: f64, r: &[f64]) -> Self {
        let d = r.len();
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * d + 1];
        c[d] = Complex64::new(r0, 0.0);
        for (l, &rl) in r.iter().enumerate() {
            let half = Complex64::new(rl / 2.0, 0.0);
            c[d + l + 1] = half;
            c[d - l - 1] = half;
        }
        TrigPoly { c }
    }

    /// Parse a potential description: {"cosine": [r1, ...]} with an
    /// optional "constant" term, or {"coeffs": [...]} listing c_{-d}..c_d
    /// where each entry is a number or {"re": x, "im": y}.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        use serde_json::Value;
        if let Some(r) = v.get("cosine") {
            let r: Vec<f64> = serde_json::from_value(r.clone())?;
            let r0 = match v.get("constant") {
                Some(c) => c
                    .as_f64()
                    .ok_or_else(|| Error::parse("constant term must be a number"))?,
                None => 0.0,
            };
            return Ok(TrigPoly::from_cosine(r0, &r));
        }
        if let Some(c) = v.get("coeffs") {
            let entries = c
                .as_array()
                .ok_or_else(|| Error::parse("coeffs must be an array"))?;
            let parsed: Vec<Complex64> = entries
                .iter()
                .map(|e| {
                    if let Some(x) = e.as_f64() {
                        return Ok(Complex64::new(x, 0.0));
                    }
                    let re = e.get("re").and_then(Value::as_f64);
                    let im = e.get("im").and_then(Value::as_f64);
                    match (re, im) {
                        (Some(re), Some(im)) => Ok(Complex64::new(re, im)),
                        _ => Err(Error::parse("coeff entries are numbers or {re, im}")),
                    }
                })
                .collect::<Result<_>>()?;
            return TrigPoly::new(parsed);
        }
        Err(Error::parse("potential needs a cosine or coeffs field"))
    }

    pub fn degree(&self) -> usize {
        self.c.len() / 2
    }

    pub fn coeff(&self, l: i64) -> Complex64 {
        let d = self.degree() as i64;
        if l.abs() > d {
            Complex64::new(0.0, 0.0)
        } else {
            self.c[(l + d) as usize]
        }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.c
    }

    pub fn mean(&self) -> Complex64 {
        self.coeff(0)
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        // Horner in z = e^{i theta} over e^{-i d theta} * poly(z)
        let z = Complex64::from_polar(1.0, theta);
        let mut acc = Complex64::new(0.0, 0.0);
        for &ck in self.c.iter().rev() {
            acc = acc * z + ck;
        }
        let d = self.degree() as f64;
        acc * Complex64::from_polar(1.0, -d * theta)
    }

    /// Value as a real number; valid when coefficients are Hermitian.
    pub fn eval_real(&self, theta: f64) -> f64 {
        self.eval(theta).re
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let d = self.degree() as i64;
        (0..=d).all(|l| (self.coeff(l) - self.coeff(-l).conj()).norm() <= tol)
    }

    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        let d = self.degree() + other.degree();
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * d + 1];
        let (da, db) = (self.degree() as i64, other.degree() as i64);
        for la in -da..=da {
            for lb in -db..=db {
                let idx = (la + lb + d as i64) as usize;
                c[idx] += self.coeff(la) * other.coeff(lb);
            }
        }
        TrigPoly { c }
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let d = self.degree().max(other.degree());
        let c = (-(d as i64)..=d as i64)
            .map(|l| self.coeff(l) + other.coeff(l))
            .collect();
        TrigPoly { c }
    }

    pub fn scale(&self, s: f64) -> TrigPoly {
        TrigPoly { c: self.c.iter().map(|z| z * s).collect() }
    }

    /// Drop leading coefficients below `tol` in modulus.
    pub fn trim(&self, tol: f64) -> TrigPoly {
        let mut d = self.degree();
        while d > 0 && self.coeff(d as i64).norm() <= tol && self.coeff(-(d as i64)).norm() <= tol {
            d -= 1;
        }
        let c = (-(d as i64)..=d as i64).map(|l| {
            let v = self.coeff(l);
            if v.norm() <= tol { Complex64::new(0.0, 0.0) } else { v }
        })
        .collect();
        TrigPoly { c }
    }

    /// Exact integral over [a, b] against d(theta)/2pi.
    pub fn bin_integral(&self, a: f64, b: f64) -> f64 {
        let d = self.degree() as i64;
        let mut acc = self.coeff(0).re * (b - a) / TWO_PI;
        for l in 1..=d {
            let il = Complex64::new(0.0, l as f64);
            let term = (Complex64::from_polar(1.0, l as f64 * b)
                - Complex64::from_polar(1.0, l as f64 * a))
                / il;
            // c_l term plus its conjugate partner
            acc += (self.coeff(l) * term).re * 2.0 / TWO_PI;
        }
        acc
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointMass {
    pub theta: f64,
    pub weight: f64,
}

/// Absolutely continuous part of a measure.
#[derive(Clone, Debug)]
pub enum Density {
    /// Trigonometric-polynomial density against d(theta)/2pi.
    Trig(TrigPoly),
    /// Samples w(theta_g) on the uniform grid theta_g = 2 pi g / len.
    Grid(Vec<f64>),
}

/// A probability measure on the circle: density plus point masses.
/// Always normalized; constructors reject negative inputs.
#[derive(Clone, Debug)]
pub struct MeasureSpec {
    density: Density,
    point_masses: Vec<PointMass>,
}

impl MeasureSpec {
    pub fn new(density: Density, point_masses: Vec<PointMass>) -> Result<Self> {
        // validate density
        let ac_mass = match &density {
            Density::Trig(p) => {
                for &theta in &grid_thetas(GRID_LOG2_DEFAULT) {
                    let v = p.eval_real(theta);
                    if v < -NEG_TOL * (1.0 + p.mean().norm()) {
                        return Err(Error::domain(format!(
                            "density negative at theta = {theta:.6}: {v:.3e}"
                        )));
                    }
                }
                let m = p.mean();
                if m.im.abs() > 1e-9 * (1.0 + m.norm()) {
                    return Err(Error::domain("density mean not real"));
                }
                m.re
            }
            Density::Grid(v) => {
                if v.is_empty() {
                    return Err(Error::domain("empty grid density"));
                }
                for (i, &w) in v.iter().enumerate() {
                    if w < -NEG_TOL || !w.is_finite() {
                        let theta = TWO_PI * i as f64 / v.len() as f64;
                        return Err(Error::domain(format!(
                            "density negative at theta = {theta:.6}: {w:.3e}"
                        )));
                    }
                }
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let mut pm = Vec::with_capacity(point_masses.len());
        let mut point_mass_total = 0.0;
        for p in point_masses {
            if p.weight < 0.0 || !p.weight.is_finite() {
                return Err(Error::domain(format!("negative point mass at {}", p.theta)));
            }
            if p.weight > 0.0 {
                point_mass_total += p.weight;
                pm.push(PointMass { theta: wrap_angle(p.theta), weight: p.weight });
            }
        }
        let total = ac_mass + point_mass_total;
        if total <= W_FLOOR {
            return Err(Error::domain("measure has no mass"));
        }
        let density = match density {
            Density::Trig(p) => Density::Trig(p.scale(1.0 / total)),
            Density::Grid(v) => Density::Grid(v.iter().map(|w| w.max(0.0) / total).collect()),
        };
        for p in &mut pm {
            p.weight /= total;
        }
        pm.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        Ok(MeasureSpec { density, point_masses: pm })
    }

    pub fn uniform() -> Self {
        MeasureSpec {
            density: Density::Trig(TrigPoly::constant(1.0)),
            point_masses: Vec::new(),
        }
    }

    /// Pure point measure.
    pub fn from_points(points: Vec<PointMass>) -> Result<Self> {
        MeasureSpec::new(Density::Trig(TrigPoly::constant(0.0)), points)
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn point_masses(&self) -> &[PointMass] {
        &self.point_masses
    }

    pub fn ac_mass(&self) -> f64 {
        1.0 - self.point_masses.iter().map(|p| p.weight).sum::<f64>()
    }

    /// Density sampled on the uniform 2^log2 grid (linear interpolation for
    /// grid densities of other resolutions).
    pub fn ac_on_grid(&self, log2: u32) -> Vec<f64> {
        let g = 1usize << log2;
        match &self.density {
            Density::Trig(p) => grid_thetas(log2)
                .iter()
                .map(|&t| p.eval_real(t).max(0.0))
                .collect(),
            Density::Grid(v) => {
                if v.len() == g {
                    return v.clone();
                }
                let n = v.len();
                (0..g)
                    .map(|i| {
                        let x = i as f64 * n as f64 / g as f64;
                        let j = x.floor() as usize % n;
                        let frac = x - x.floor();
                        v[j] * (1.0 - frac) + v[(j + 1) % n] * frac
                    })
                    .collect()
            }
        }
    }

    /// Trigonometric moments c_k = integral of e^{-ik theta} d mu,
    /// for k = 0..=k_max.
    pub fn moments(&self, k_max: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(k_max + 1);
        match &self.density {
            Density::Trig(p) => {
                for k in 0..=k_max {
                    out.push(p.coeff(k as i64));
                }
            }
            Density::Grid(v) => {
                let n = v.len() as f64;
                for k in 0..=k_max {
                    let mut re = Kahan::new();
                    let mut im = Kahan::new();
                    for (i, &w) in v.iter().enumerate() {
                        let t = -(k as f64) * TWO_PI * i as f64 / n;
                        re.add(w * t.cos());
                        im.add(w * t.sin());
                    }
                    out.push(Complex64::new(re.value() / n, im.value() / n));
                }
            }
        }
        for (k, c) in out.iter_mut().enumerate() {
            for p in &self.point_masses {
                *c += p.weight * Complex64::from_polar(1.0, -(k as f64) * p.theta);
            }
        }
        out
    }
}

// ---- JSON schema ----

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrComplex {
    Num(f64),
    Complex { re: f64, im: f64 },
}

impl NumOrComplex {
    fn to_c(&self) -> Complex64 {
        match self {
            NumOrComplex::Num(x) => Complex64::new(*x, 0.0),
            NumOrComplex::Complex { re, im } => Complex64::new(*re, *im),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum DensityRepr {
    Trigpoly { coeffs: Vec<NumOrComplex> },
    Grid { values: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    density: DensityRepr,
    #[serde(default)]
    point_masses: Vec<PointMass>,
}

impl Serialize for MeasureSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let density = match &self.density {
            Density::Trig(p) => DensityRepr::Trigpoly {
                coeffs: p
                    .coeffs()
                    .iter()
                    .map(|z| {
                        if z.im == 0.0 {
                            NumOrComplex::Num(z.re)
                        } else {
                            NumOrComplex::Complex { re: z.re, im: z.im }
                        }
                    })
                    .collect(),
            },
            Density::Grid(v) => DensityRepr::Grid { values: v.clone() },
        };
        MeasureRepr { density, point_masses: self.point_masses.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasureSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MeasureRepr::deserialize(d)?;
        let density = match repr.density {
            DensityRepr::Trigpoly { coeffs } => Density::Trig(
                TrigPoly::new(coeffs.iter().map(NumOrComplex::to_c).collect())
                    .map_err(serde::de::Error::custom)?,
            ),
            DensityRepr::Grid { values } => Density::Grid(values),
        };
        MeasureSpec::new(density, repr.point_masses).map_err(serde::de::Error::custom)
    }
}

// ---- Relative entropy ----

/// Relative entropy H(nu | mu) = integral log(d nu / d mu) d nu, computed on
/// a common 2^grid_log2 quadrature grid; +inf when nu is not absolutely
/// continuous with respect to mu at grid resolution.
///
/// Conventions: integrand terms with nu'(theta) = 0 contribute zero
/// (0 log 0 = 0); the result is +inf as soon as mu' < [`W_FLOOR`] on a node
/// where nu' > [`NU_THRESHOLD`], or a nu point mass lacks a matching mu
/// point mass.
pub fn kl_divergence(nu: &MeasureSpec, mu: &MeasureSpec, grid_log2: u32) -> ExtReal {
    let nv = nu.ac_on_grid(grid_log2);
    let mv = mu.ac_on_grid(grid_log2);
    let mut acc = Kahan::new();
    for (&a, &b) in nv.iter().zip(&mv) {
        if a <= 0.0 {
            continue;
        }
        if b < W_FLOOR {
            if a > NU_THRESHOLD {
                return ExtReal::PlusInf;
            }
            continue;
        }
        acc.add(a * (a / b).ln());
    }
    let mut total = acc.value() / nv.len() as f64;
    for p in nu.point_masses() {
        match mu
            .point_masses()
            .iter()
            .find(|q| (q.theta - p.theta).abs() <= 1e-9 || (TWO_PI - (q.theta - p.theta).abs()) <= 1e-9)
        {
            Some(q) => total += p.weight * (p.weight / q.weight).ln(),
            None => return ExtReal::PlusInf,
        }
    }
    ExtReal::Finite(total)
}

// ---- Logarithmic kernel and equilibrium potential ----

/// Fourier transform of the logarithmic kernel:
/// -(2 pi)^{-1} * integral of e^{i n psi} log |e^{i psi} - e^{i theta}| d psi
/// equals e^{i n theta} / (2 |n|) for n != 0 and vanishes at n = 0.
pub fn log_kernel_fourier(n: i64, theta: f64) -> Complex64 {
    if n == 0 {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::from_polar(1.0, n as f64 * theta) / (2.0 * n.abs() as f64)
    }
}

/// Potential of a trig-polynomial probability density h:
/// V(theta) = 2 * integral of log |e^{i theta} - e^{i psi}| h(psi) d psi / 2pi,
/// again a trig polynomial, with mean zero.
pub fn potential_from_density(h: &TrigPoly) -> TrigPoly {
    let d = h.degree() as i64;
    let c = (-d..=d)
        .map(|m| {
            if m == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                -h.coeff(m) / (m.abs() as f64)
            }
        })
        .collect();
    TrigPoly { c }
}

// ---- Densities vanishing at prescribed points ----

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingularPoint {
    pub theta: f64,
    pub m: u32,
}

/// A probability density proportional to prod_j (1 - cos(theta - theta_j))^{m_j};
/// it vanishes to order 2 m_j at each theta_j.
#[derive(Clone, Debug)]
pub struct EtaSpec {
    points: Vec<SingularPoint>,
    density: TrigPoly,
    z: f64,
}

#[derive(Serialize, Deserialize)]
struct EtaRepr {
    singular_points: Vec<SingularPoint>,
}

impl EtaSpec {
    pub fn new(points: Vec<SingularPoint>) -> Result<Self> {
        let mut pts: Vec<SingularPoint> = points
            .into_iter()
            .map(|p| SingularPoint { theta: wrap_angle(p.theta), m: p.m })
            .collect();
        pts.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        for p in &pts {
            if p.m == 0 {
                return Err(Error::domain("singular point with order zero"));
            }
        }
        for w in pts.windows(2) {
            if (w[1].theta - w[0].theta).abs() < 1e-9 {
                return Err(Error::domain("duplicate singular points"));
            }
        }
        // prod (1 - cos(theta - theta_j))^{m_j}
        let mut poly = TrigPoly::constant(1.0);
        for p in &pts {
            let phase = Complex64::from_polar(1.0, p.theta);
            let factor = TrigPoly::new(vec![
                -phase / 2.0,
                Complex64::new(1.0, 0.0),
                -phase.conj() / 2.0,
            ])?;
            for _ in 0..p.m {
                poly = poly.mul(&factor);
            }
        }
        let poly = poly.trim(1e-13);
        let z = poly.mean().re;
        if z <= 0.0 {
            return Err(Error::internal("vanishing normalization constant"));
        }
        let density = poly.scale(1.0 / z);
        Ok(EtaSpec { points: pts, density, z })
    }

    /// The uniform measure: no singular points.
    pub fn flat() -> Self {
        EtaSpec { points: Vec::new(), density: TrigPoly::constant(1.0), z: 1.0 }
    }

    pub fn points(&self) -> &[SingularPoint] {
        &self.points
    }

    /// Total vanishing order sum_j m_j: the degree of the density and of the
    /// potential.
    pub fn total_order(&self) -> usize {
        self.points.iter().map(|p| p.m as usize).sum()
    }

    /// Normalization constant: mean of the unnormalized product.
    pub fn z_eta(&self) -> f64 {
        self.z
    }

    pub fn density(&self) -> &TrigPoly {
        &self.density
    }

    pub fn measure(&self) -> MeasureSpec {
        MeasureSpec {
            density: Density::Trig(self.density.clone()),
            point_masses: Vec::new(),
        }
    }

    /// Equilibrium potential of the density (mean-zero trig polynomial).
    pub fn potential(&self) -> TrigPoly {
        potential_from_density(&self.density)
    }

    /// Smallest gap between neighboring singular points (2pi for 0 or 1
    /// point).
    pub fn min_gap(&self) -> f64 {
        if self.points.len() < 2 {
            return TWO_PI;
        }
        let mut gap = f64::INFINITY;
        for i in 0..self.points.len() {
            let a = self.points[i].theta;
            let b = if i + 1 < self.points.len() {
                self.points[i + 1].theta
            } else {
                self.points[0].theta + TWO_PI
            };
            gap = gap.min(b - a);
        }
        gap
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(EtaRepr { singular_points: self.points.clone() }).unwrap()
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let repr: EtaRepr = serde_json::from_value(v.clone())?;
        EtaSpec::new(repr.singular_points)
    }
}

/// Parse a measure description: a density spec, or a singular-point list
/// under "singular_points", in which case the normalized reference
/// measure vanishing at those points is returned.
pub fn measure_from_json(v: &serde_json::Value) -> Result<MeasureSpec> {
    if v.get("singular_points").is_some() {
        return Ok(EtaSpec::from_json(v)?.measure());
    }
    Ok(serde_json::from_value(v.clone())?)
}
