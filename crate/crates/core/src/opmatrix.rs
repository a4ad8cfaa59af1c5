//! Finite matrix representations of the multiplication operator.
//!
//! Two unitary truncations of multiplication by z are built from a
//! coefficient array alpha_0..alpha_{N-1}: the five-banded CMV form, a
//! product of two block-diagonal factors, and the upper Hessenberg form
//! with explicit entry formula.  Both give the same N-point spectral
//! measure when the final coefficient is unimodular.  Traces of Laurent
//! polynomials in the operator are computed without densifying.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::measures::{MeasureSpec, PointMass, TrigPoly};

/// Interior coefficients must satisfy |alpha| < 1 - this margin is not
/// enforced; only |alpha| < 1 strictly.  The final coefficient counts as
/// unimodular within this tolerance.
pub const UNIMODULAR_TOL: f64 = 1e-9;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

fn rho(a: Complex64) -> f64 {
    (1.0 - a.norm_sqr()).max(0.0).sqrt()
}

/// Check alpha_0..alpha_{N-2} strictly inside the disk; the final entry may
/// be anywhere in the closed disk.
fn check_coeffs(alpha: &[Complex64]) -> Result<()> {
    if alpha.len() < 2 {
        return Err(Error::domain("need at least two coefficients"));
    }
    for (j, a) in alpha.iter().enumerate() {
        if !a.re.is_finite() || !a.im.is_finite() {
            return Err(Error::domain(format!("coefficient {j} not finite")));
        }
        let r = a.norm();
        let interior = j + 1 < alpha.len();
        if interior && r >= 1.0 {
            return Err(Error::domain(format!(
                "coefficient {j} has modulus {r:.6} >= 1"
            )));
        }
        if !interior && r > 1.0 + UNIMODULAR_TOL {
            return Err(Error::domain(format!(
                "final coefficient has modulus {r:.6} > 1"
            )));
        }
    }
    Ok(())
}

/// Square banded matrix: entries with col - row in [-kl, ku].
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// Row-major bands: data[row * width + (col - row + kl)].
    data: Vec<Complex64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let (kl, ku) = (kl.min(n - 1), ku.min(n - 1));
        BandedMatrix { n, kl, ku, data: vec![ZERO; n * (kl + ku + 1)] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let off = j as i64 - i as i64;
        if off < -(self.kl as i64) || off > self.ku as i64 {
            ZERO
        } else {
            self.data[i * self.width() + (off + self.kl as i64) as usize]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        let off = j as i64 - i as i64;
        debug_assert!(off >= -(self.kl as i64) && off <= self.ku as i64);
        let w = self.width();
        self.data[i * w + (off + self.kl as i64) as usize] = v;
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Banded product; the result band is the sum of the factors' bands,
    /// clipped to the matrix size.
    pub fn mul(&self, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!(self.n, other.n);
        let mut out = BandedMatrix::zeros(self.n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..self.n {
            let klo = i.saturating_sub(self.kl);
            let khi = (i + self.ku).min(self.n - 1);
            for k in klo..=khi {
                let aik = self.get(i, k);
                if aik == ZERO {
                    continue;
                }
                let jlo = k.saturating_sub(other.kl);
                let jhi = (k + other.ku).min(self.n - 1);
                for j in jlo..=jhi {
                    let v = out.get(i, j) + aik * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// max |(A* A - I)_{ij}|
    pub fn unitarity_defect(&self) -> f64 {
        let d = self.to_dense();
        let p = d.adjoint() * &d;
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                let want = if i == j { ONE } else { ZERO };
                worst = worst.max((p[(i, j)] - want).norm());
            }
        }
        worst
    }
}

/// One block-diagonal factor: 2x2 rotation-like blocks plus 1x1 entries.
#[derive(Clone, Debug)]
pub struct BlockFactor {
    n: usize,
    /// (start row, coefficient index) of each 2x2 block.
    pub thetas: Vec<(usize, usize)>,
    /// (row, value) of each 1x1 entry.
    pub caps: Vec<(usize, Complex64)>,
}

impl BlockFactor {
    fn to_banded(&self, alpha: &[Complex64]) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(self.n, 1, 1);
        for &(row, j) in &self.thetas {
            let a = alpha[j];
            let r = Complex64::new(rho(a), 0.0);
            m.set(row, row, a.conj());
            m.set(row, row + 1, r);
            m.set(row + 1, row, r);
            m.set(row + 1, row + 1, -a);
        }
        for &(row, v) in &self.caps {
            m.set(row, row, v);
        }
        m
    }
}

/// Five-banded unitary truncation built as a product of two block factors.
pub struct CMVOperator {
    alpha: Vec<Complex64>,
    pub l_factor: BlockFactor,
    pub m_factor: BlockFactor,
    matrix: BandedMatrix,
}

impl CMVOperator {
    pub fn new(alpha: Vec<Complex64>) -> Result<Self> {
        check_coeffs(&alpha)?;
        let n = alpha.len();
        let cap = alpha[n - 1].conj();
        let mut l_factor = BlockFactor { n, thetas: Vec::new(), caps: Vec::new() };
        let mut m_factor = BlockFactor { n, thetas: Vec::new(), caps: vec![(0, ONE)] };
        // even blocks in L, odd blocks in M, degenerate last block as a cap
        let mut j = 0;
        while j + 1 < n {
            l_factor.thetas.push((j, j));
            j += 2;
        }
        if j == n - 1 {
            l_factor.caps.push((n - 1, cap));
        }
        let mut j = 1;
        while j + 1 < n {
            m_factor.thetas.push((j, j));
            j += 2;
        }
        if j == n - 1 {
            m_factor.caps.push((n - 1, cap));
        }
        let matrix = l_factor.to_banded(&alpha).mul(&m_factor.to_banded(&alpha));
        Ok(CMVOperator { alpha, l_factor, m_factor, matrix })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    pub fn matrix(&self) -> &BandedMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        self.matrix.to_dense()
    }

    /// tr(C^q) by repeated banded multiplication.
    pub fn trace_power(&self, q: usize) -> Complex64 {
        if q == 0 {
            return Complex64::new(self.n() as f64, 0.0);
        }
        let mut p = self.matrix.clone();
        for _ in 1..q {
            p = p.mul(&self.matrix);
        }
        p.trace()
    }

    /// tr(V(C)) for a Laurent polynomial V, using conj-symmetry of negative
    /// powers of a unitary.
    pub fn trace_of_potential(&self, v: &TrigPoly) -> Result<Complex64> {
        trace_from_powers(self.n(), v, |q| self.trace_power(q))
    }

    /// N-point spectral measure with respect to the first basis vector.
    /// Requires a unimodular final coefficient; errors otherwise.
    pub fn spectral_measure(&self) -> Result<MeasureSpec> {
        let cap = self.alpha[self.n() - 1].norm();
        if (cap - 1.0).abs() > UNIMODULAR_TOL {
            return Err(Error::domain(format!(
                "spectral measure needs |final coefficient| = 1, got {cap:.6}"
            )));
        }
        let masses = unitary_spectrum(&self.to_dense())?;
        MeasureSpec::from_points(masses)
    }

    /// Eigenphase angles in (-pi, pi], sorted ascending. Same unimodularity
    /// requirement as `spectral_measure`; unlike it, every phase carries equal
    /// weight here, so this is the right input for empirical eigenvalue
    /// statistics.
    pub fn eigenphases(&self) -> Result<Vec<f64>> {
        let cap = self.alpha[self.n() - 1].norm();
        if (cap - 1.0).abs() > UNIMODULAR_TOL {
            return Err(Error::domain(format!(
                "eigenphases need |final coefficient| = 1, got {cap:.6}"
            )));
        }
        let masses = unitary_spectrum(&self.to_dense())?;
        let mut thetas: Vec<f64> = masses.iter().map(|m| m.theta).collect();
        thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(thetas)
    }
}

/// Upper Hessenberg unitary truncation with explicit entries.
///
/// For column l >= row k:  G_{kl} = -conj(alpha_l) alpha_{k-1} prod_{j=k}^{l-1} rho_j
/// with alpha_{-1} = -1; the subdiagonal is G_{l+1,l} = rho_l; zero below.
pub struct GGTOperator {
    alpha: Vec<Complex64>,
    /// log_rho_prefix[i] = sum_{j<i} ln rho_j; products of rho over a column
    /// range come from differences, stable for long slowly decaying tails.
    log_rho_prefix: Vec<f64>,
}

impl GGTOperator {
    pub fn new(alpha: Vec<Complex64>) -> Result<Self> {
        check_coeffs(&alpha)?;
        let n = alpha.len();
        let mut log_rho_prefix = Vec::with_capacity(n);
        let mut acc = 0.0;
        for a in alpha.iter().take(n - 1) {
            log_rho_prefix.push(acc);
            acc += rho(*a).ln();
        }
        log_rho_prefix.push(acc);
        Ok(GGTOperator { alpha, log_rho_prefix })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[Complex64] {
        &self.alpha
    }

    fn alpha_ext(&self, k: i64) -> Complex64 {
        if k < 0 {
            -ONE
        } else {
            self.alpha[k as usize]
        }
    }

    /// prod_{j=a}^{b-1} rho_j for a <= b <= N-1.
    fn rho_prod(&self, a: usize, b: usize) -> f64 {
        (self.log_rho_prefix[b] - self.log_rho_prefix[a]).exp()
    }

    pub fn entry(&self, k: usize, l: usize) -> Complex64 {
        if k == l + 1 {
            Complex64::new(self.rho_prod(l, l + 1), 0.0)
        } else if k > l {
            ZERO
        } else {
            -self.alpha[l].conj() * self.alpha_ext(k as i64 - 1) * self.rho_prod(k, l)
        }
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.n(), self.n(), |i, j| self.entry(i, j))
    }

    /// tr(G^q) as a sum over closed walks.  Steps go down by at most one
    /// row, so offsets lie in {-1, ..., q-1}; the walk product telescopes
    /// over the entry formula.  Cost O(#tuples * N * q), no densification.
    pub fn trace_power(&self, q: usize) -> Complex64 {
        if q == 0 {
            return Complex64::new(self.n() as f64, 0.0);
        }
        let mut total = ZERO;
        let mut offsets = vec![0i64; q];
        self.walk_tuples(&mut offsets, 0, 0, &mut total);
        total
    }

    fn walk_tuples(&self, offsets: &mut Vec<i64>, idx: usize, sum: i64, total: &mut Complex64) {
        let q = offsets.len();
        if idx == q {
            if sum == 0 {
                *total += self.tuple_trace(offsets);
            }
            return;
        }
        let remaining = (q - idx - 1) as i64;
        // each later step >= -1, so the current partial sum can still reach 0
        for off in -1..=(q as i64 - 1) {
            if sum + off > remaining {
                continue;
            }
            offsets[idx] = off;
            self.walk_tuples(offsets, idx + 1, sum + off, total);
        }
    }

    /// Sum over base rows of the product of entries along one offset tuple.
    fn tuple_trace(&self, offsets: &[i64]) -> Complex64 {
        let n = self.n() as i64;
        let mut acc = ZERO;
        'row: for start in 0..n {
            let mut pos = start;
            let mut prod = ONE;
            for &off in offsets {
                let next = pos + off;
                if next < 0 || next >= n {
                    continue 'row;
                }
                let e = self.entry(pos as usize, next as usize);
                if e == ZERO {
                    continue 'row;
                }
                prod *= e;
                pos = next;
            }
            acc += prod;
        }
        acc
    }

    pub fn trace_of_potential(&self, v: &TrigPoly) -> Result<Complex64> {
        trace_from_powers(self.n(), v, |q| self.trace_power(q))
    }

    pub fn spectral_measure(&self) -> Result<MeasureSpec> {
        let cap = self.alpha[self.n() - 1].norm();
        if (cap - 1.0).abs() > UNIMODULAR_TOL {
            return Err(Error::domain(format!(
                "spectral measure needs |final coefficient| = 1, got {cap:.6}"
            )));
        }
        let masses = unitary_spectrum(&self.to_dense())?;
        MeasureSpec::from_points(masses)
    }
}

fn trace_from_powers(
    n: usize,
    v: &TrigPoly,
    tr_pow: impl Fn(usize) -> Complex64,
) -> Result<Complex64> {
    let d = v.degree();
    if d >= n {
        return Err(Error::TruncationTooSmall { degree: d, n });
    }
    let mut acc = v.coeff(0) * n as f64;
    for l in 1..=d {
        let t = tr_pow(l);
        // negative powers of a unitary: tr(U^{-l}) = conj tr(U^l)
        acc += v.coeff(l as i64) * t + v.coeff(-(l as i64)) * t.conj();
    }
    Ok(acc)
}

/// Dense matrix rendering for debugging: row-major, entries "re+imi".
pub fn dense_text(m: &DMatrix<Complex64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                s.push(' ');
            }
            let e = m[(i, j)];
            s.push_str(&format!("{:+.6e}{:+.6e}i", e.re, e.im));
        }
        s.push('\n');
    }
    s
}

/// Eigen-decomposition of a unitary matrix via a random real combination of
/// its commuting Hermitian real and imaginary parts.  A degenerate
/// combination (distinct unitary eigenvalues colliding in the combination)
/// is detected by the eigenvector residual and retried at a new angle.
fn unitary_spectrum(u: &DMatrix<Complex64>) -> Result<Vec<PointMass>> {
    let n = u.nrows();
    let i2 = Complex64::new(0.0, 2.0);
    let a = (u + u.adjoint()) * Complex64::new(0.5, 0.0);
    let b = (u - u.adjoint()) / i2;
    // golden-angle sweep: no two sweep angles are close for many retries
    const GOLDEN: f64 = 2.399963229728653;
    for attempt in 0..24 {
        let phi = 0.37 + GOLDEN * attempt as f64;
        let m = &a * Complex64::new(phi.cos(), 0.0) + &b * Complex64::new(phi.sin(), 0.0);
        let eig = nalgebra::SymmetricEigen::new(m);
        let mut masses = Vec::with_capacity(n);
        let mut ok = true;
        for k in 0..n {
            let v = eig.eigenvectors.column(k);
            let uv = u * v;
            let lambda = v.dotc(&uv);
            let residual = (&uv - v * lambda).norm();
            if residual > 1e-9 * n as f64 {
                ok = false;
                break;
            }
            masses.push(PointMass { theta: lambda.arg(), weight: v[0].norm_sqr() });
        }
        if ok {
            return Ok(masses);
        }
    }
    Err(Error::internal(
        "unitary eigenbasis did not converge after angle retries",
    ))
}
