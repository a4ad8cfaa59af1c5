//! Coefficient sampling for circular ensembles.
//!
//! A Haar-random N x N unitary induces independent Verblunsky
//! coefficients (the Killip-Nenciu representation): |alpha_j|^2 is
//! Beta(1, N-1-j) distributed, its angle is uniform, and the final
//! coefficient is a uniform phase.  Sampling coefficients directly is
//! exact and cheap, and marginal statistics come out by construction.
//!
//! Tilted models reweight the same draws by exp(-N tr V(U)) with the
//! trace evaluated on the CMV truncation, so every term of the
//! coefficient-side density, boundary factors included, enters the
//! weight.  Self-normalized importance weights degenerate as N grows
//! (the tilt concentrates on exponentially rare draws), which is why
//! batches report an effective sample size and a degeneracy flag instead
//! of pretending the estimate is sharp.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::measures::{EtaSpec, TrigPoly};
use crate::opmatrix::CMVOperator;

/// Batches with an effective sample size below this are flagged degenerate.
pub const DEGENERACY_ESS: f64 = 10.0;

/// How a batch is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    /// Plain circular-ensemble coefficients, unit weights.
    DirectCue,
    /// Circular-ensemble draws weighted by exp(-N tr V(U)).
    ImportanceTilted,
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Sampler> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cue" => Ok(Sampler::DirectCue),
            "tilted" => Ok(Sampler::ImportanceTilted),
            other => Err(Error::parse(format!(
                "unknown sampler '{other}'; expected cue or tilted"
            ))),
        }
    }
}

/// A sampling run: matrix size, tilt potential, sampler, and seed.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    pub n: usize,
    pub potential: TrigPoly,
    pub sampler: Sampler,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn sample(&self, m: usize) -> Result<SampleBatch> {
        match self.sampler {
            Sampler::DirectCue => sample_cue_coeffs(self.n, m, self.seed),
            Sampler::ImportanceTilted => sample_tilted(self, m),
        }
    }
}

/// M coefficient draws with self-normalized importance weights.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    n: usize,
    seed: u64,
    draws: Vec<Vec<Complex64>>,
    weights: Vec<f64>,
    /// Re tr V(U) per draw when the batch was tilted.
    tilt: Option<Vec<f64>>,
    ess: f64,
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Coefficient arrays, one per draw, each of length n.
    pub fn draws(&self) -> &[Vec<Complex64>] {
        &self.draws
    }

    /// Importance weights, normalized to mean one.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Re tr V(U) per draw for tilted batches.
    pub fn tilt_values(&self) -> Option<&[f64]> {
        self.tilt.as_deref()
    }

    /// Effective sample size (sum w)^2 / sum w^2.
    pub fn ess(&self) -> f64 {
        self.ess
    }

    pub fn is_degenerate(&self) -> bool {
        self.ess < DEGENERACY_ESS
    }

    /// Self-normalized weighted mean of a per-draw statistic.
    pub fn weighted_mean(&self, stat: impl Fn(&[Complex64]) -> f64) -> f64 {
        let num: f64 = self
            .draws
            .iter()
            .zip(&self.weights)
            .map(|(alpha, w)| w * stat(alpha))
            .sum();
        num / self.weights.iter().sum::<f64>()
    }

    /// Weighted mean of |alpha_j|^2.
    pub fn mean_abs_sq(&self, j: usize) -> f64 {
        self.weighted_mean(|alpha| alpha[j].norm_sqr())
    }

    pub fn summary(&self) -> BatchSummary {
        let weight_sum: f64 = self.weights.iter().sum();
        let tilt_weighted = self.tilt.as_ref().map(|ts| {
            ts.iter().zip(&self.weights).map(|(t, w)| t * w).sum::<f64>() / weight_sum
        });
        let tilt_unweighted = self
            .tilt
            .as_ref()
            .map(|ts| ts.iter().sum::<f64>() / ts.len() as f64);
        BatchSummary {
            matrix_size: self.n,
            draws: self.len(),
            seed: self.seed,
            ess: self.ess,
            degenerate: self.is_degenerate(),
            mean_abs_sq: (0..self.n).map(|j| self.mean_abs_sq(j)).collect(),
            mean_first_re: self.weighted_mean(|alpha| alpha[0].re),
            tilt_mean_weighted: tilt_weighted,
            tilt_mean_unweighted: tilt_unweighted,
        }
    }
}

/// Serializable batch digest.
#[derive(Clone, Debug, Serialize)]
pub struct BatchSummary {
    pub matrix_size: usize,
    pub draws: usize,
    pub seed: u64,
    pub ess: f64,
    pub degenerate: bool,
    /// Weighted mean of |alpha_j|^2 per index.
    pub mean_abs_sq: Vec<f64>,
    /// Weighted mean of Re alpha_0.
    pub mean_first_re: f64,
    pub tilt_mean_weighted: Option<f64>,
    pub tilt_mean_unweighted: Option<f64>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream per (seed, draw index); merging by index keeps
/// batches deterministic under any parallel schedule.
fn draw_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index as u64)))
}

/// One coefficient array: |alpha_j|^2 = 1 - u^{1/(n-1-j)} is Beta(1, n-1-j)
/// for u uniform on (0, 1], angles uniform, final entry a uniform phase.
fn cue_draw(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    let mut alpha = Vec::with_capacity(n);
    for j in 0..n - 1 {
        let b = (n - 1 - j) as f64;
        // 1 - gen::<f64>() lies in (0, 1], keeping the modulus strictly
        // inside the disk
        let u = 1.0 - rng.gen::<f64>();
        let s = 1.0 - u.powf(1.0 / b);
        let phi = rng.gen_range(0.0..TAU);
        alpha.push(Complex64::from_polar(s.sqrt(), phi));
    }
    alpha.push(Complex64::from_polar(1.0, rng.gen_range(0.0..TAU)));
    alpha
}

fn check_batch_shape(n: usize, m: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::domain("matrix size must be at least 2"));
    }
    if m == 0 {
        return Err(Error::domain("at least one draw is required"));
    }
    Ok(())
}

/// Draw M circular-ensemble coefficient arrays with unit weights.
pub fn sample_cue_coeffs(n: usize, m: usize, seed: u64) -> Result<SampleBatch> {
    check_batch_shape(n, m)?;
    let draws: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|i| cue_draw(n, &mut draw_rng(seed, i)))
        .collect();
    Ok(SampleBatch { n, seed, draws, weights: vec![1.0; m], tilt: None, ess: m as f64 })
}

/// Draw from the circular ensemble and attach self-normalized weights
/// exp(-N tr V(U)), the trace taken on the CMV truncation of each draw.
pub fn sample_tilted(spec: &EnsembleSpec, m: usize) -> Result<SampleBatch> {
    check_batch_shape(spec.n, m)?;
    if spec.potential.degree() >= spec.n {
        return Err(Error::domain(format!(
            "potential degree {} must stay below the matrix size {}",
            spec.potential.degree(),
            spec.n
        )));
    }
    if !spec.potential.is_hermitian(1e-12) {
        return Err(Error::domain("tilt potential must be real on the circle"));
    }
    let per: Vec<(Vec<Complex64>, f64)> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<(Vec<Complex64>, f64)> {
            let alpha = cue_draw(spec.n, &mut draw_rng(spec.seed, i));
            let op = CMVOperator::new(alpha.clone())?;
            let t = op.trace_of_potential(&spec.potential)?.re;
            Ok((alpha, t))
        })
        .collect::<Result<_>>()?;
    let (draws, tilt): (Vec<_>, Vec<_>) = per.into_iter().unzip();

    // exponentiate around the maximum so weights stay finite, then
    // normalize to mean one
    let nn = spec.n as f64;
    let top = tilt.iter().map(|t| -nn * t).fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = tilt.iter().map(|t| (-nn * t - top).exp()).collect();
    let mean = weights.iter().sum::<f64>() / m as f64;
    for w in &mut weights {
        *w /= mean;
    }
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    let ess = (m as f64) * (m as f64) / s2;
    Ok(SampleBatch { n: spec.n, seed: spec.seed, draws, weights, tilt: Some(tilt), ess })
}

/// Binned comparison of a batch's weighted mean eigenvalue distribution
/// against a reference density.
#[derive(Clone, Debug, Serialize)]
pub struct DistanceReport {
    pub matrix_size: usize,
    pub draws: usize,
    pub bins: usize,
    /// Half the l1 distance between binned masses (total variation proxy).
    pub tv_distance: f64,
    pub ess: f64,
}

/// Compare the weighted empirical eigenphase distribution of a batch with
/// the reference density on a uniform angular binning.
pub fn empirical_vs_eta(batch: &SampleBatch, eta: &EtaSpec, bins: usize) -> Result<DistanceReport> {
    if bins < 2 {
        return Err(Error::domain("need at least two bins"));
    }
    let counts: Vec<Vec<f64>> = batch
        .draws
        .par_iter()
        .map(|alpha| -> Result<Vec<f64>> {
            let op = CMVOperator::new(alpha.clone())?;
            let mut hist = vec![0.0; bins];
            for theta in op.eigenphases()? {
                let idx = (((theta + PI) / TAU * bins as f64) as usize).min(bins - 1);
                hist[idx] += 1.0;
            }
            Ok(hist)
        })
        .collect::<Result<_>>()?;

    let weight_sum: f64 = batch.weights.iter().sum();
    let scale = 1.0 / (weight_sum * batch.n as f64);
    let mut empirical = vec![0.0; bins];
    for (hist, w) in counts.iter().zip(&batch.weights) {
        for (acc, h) in empirical.iter_mut().zip(hist) {
            *acc += w * h * scale;
        }
    }

    let width = TAU / bins as f64;
    let mut tv = 0.0;
    for (b, emp) in empirical.iter().enumerate() {
        let lo = -PI + b as f64 * width;
        let reference = eta.density().bin_integral(lo, lo + width);
        tv += (emp - reference).abs();
    }
    Ok(DistanceReport {
        matrix_size: batch.n,
        draws: batch.len(),
        bins,
        tv_distance: 0.5 * tv,
        ess: batch.ess,
    })
}

/// KS statistic of one interior coefficient's squared modulus.
#[derive(Clone, Debug, Serialize)]
pub struct KsIndexStat {
    pub index: usize,
    pub statistic: f64,
}

/// Distribution check of every interior squared modulus against its
/// circular-ensemble law.
#[derive(Clone, Debug, Serialize)]
pub struct KsReport {
    pub per_index: Vec<KsIndexStat>,
    pub max_statistic: f64,
    pub critical_1pct: f64,
    pub within: bool,
}

/// Compare each interior |alpha_j|^2 in the batch against Beta(1, n-1-j).
/// The final coefficient is pinned to the circle and is skipped.
pub fn ks_report(batch: &SampleBatch) -> KsReport {
    let n = batch.n();
    let crit = ks_critical_1pct(batch.len());
    let mut per_index = Vec::new();
    let mut max_stat = 0.0f64;
    for j in 0..n - 1 {
        let samples: Vec<f64> = batch.draws().iter().map(|d| d[j].norm_sqr()).collect();
        let b = (n - 1 - j) as f64;
        let stat = ks_statistic(&samples, |x| beta_one_cdf(b, x));
        max_stat = max_stat.max(stat);
        per_index.push(KsIndexStat { index: j, statistic: stat });
    }
    KsReport {
        per_index,
        max_statistic: max_stat,
        critical_1pct: crit,
        within: max_stat < crit,
    }
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous cdf.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    d
}

/// Asymptotic 1% critical value for the one-sample KS statistic.
pub fn ks_critical_1pct(m: usize) -> f64 {
    1.62762 / (m as f64).sqrt()
}

/// Cdf of Beta(1, b): the law of 1 - u^{1/b}.
pub fn beta_one_cdf(b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        1.0 - (1.0 - x).powf(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::SingularPoint;

    fn cos_potential() -> TrigPoly {
        TrigPoly::from_cosine(0.0, &[1.0])
    }

    #[test]
    fn batches_are_seed_deterministic() {
        let a = sample_cue_coeffs(6, 200, 41).unwrap();
        let b = sample_cue_coeffs(6, 200, 41).unwrap();
        assert_eq!(a.draws(), b.draws());
        let c = sample_cue_coeffs(6, 200, 42).unwrap();
        assert_ne!(a.draws()[0], c.draws()[0]);
    }

    #[test]
    fn plain_batches_carry_unit_weights() {
        let batch = sample_cue_coeffs(5, 300, 7).unwrap();
        assert!(batch.weights().iter().all(|&w| w == 1.0));
        assert_eq!(batch.ess(), 300.0);
        assert!(!batch.is_degenerate());
        assert!(batch.tilt_values().is_none());
    }

    #[test]
    fn draws_stay_inside_the_disk_with_a_unimodular_cap() {
        let batch = sample_cue_coeffs(8, 500, 11).unwrap();
        for alpha in batch.draws() {
            assert_eq!(alpha.len(), 8);
            for a in &alpha[..7] {
                assert!(a.norm() < 1.0);
            }
            assert!((alpha[7].norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn first_coefficient_mean_square_is_one_over_n() {
        let n = 8;
        let m = 100_000;
        let batch = sample_cue_coeffs(n, m, 1).unwrap();
        let mean = batch.mean_abs_sq(0);
        // Beta(1, 7): mean 1/8, variance 7/(64 * 9)
        let se = (7.0 / (64.0 * 9.0) / m as f64).sqrt();
        assert!((mean - 0.125).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn squared_moduli_match_their_beta_laws() {
        let n = 8;
        let m = 100_000;
        let batch = sample_cue_coeffs(n, m, 2).unwrap();
        let crit = ks_critical_1pct(m);
        for j in 0..n - 1 {
            let b = (n - 1 - j) as f64;
            let samples: Vec<f64> = batch.draws().iter().map(|a| a[j].norm_sqr()).collect();
            let d = ks_statistic(&samples, |x| beta_one_cdf(b, x));
            assert!(d < crit, "index {j}: statistic {d}, critical {crit}");
        }
        // the last interior coefficient is exactly uniform on [0, 1]
        let last: Vec<f64> = batch.draws().iter().map(|a| a[n - 2].norm_sqr()).collect();
        let d = ks_statistic(&last, |x| x.clamp(0.0, 1.0));
        assert!(d < crit);
    }

    #[test]
    fn coefficient_angles_are_uniform() {
        let m = 100_000;
        let batch = sample_cue_coeffs(8, m, 3).unwrap();
        let crit = ks_critical_1pct(m);
        for j in [0usize, 3, 7] {
            let angles: Vec<f64> = batch.draws().iter().map(|a| a[j].arg()).collect();
            let d = ks_statistic(&angles, |x| (x + PI) / TAU);
            assert!(d < crit, "index {j}: statistic {d}");
        }
    }

    #[test]
    fn zero_potential_tilt_reduces_to_unit_weights() {
        let spec = EnsembleSpec {
            n: 6,
            potential: TrigPoly::constant(0.0),
            sampler: Sampler::ImportanceTilted,
            seed: 17,
        };
        let tilted = spec.sample(400).unwrap();
        assert!(tilted.weights().iter().all(|&w| w == 1.0));
        assert_eq!(tilted.ess(), 400.0);
        // same seed, same draws as the plain sampler
        let plain = sample_cue_coeffs(6, 400, 17).unwrap();
        assert_eq!(tilted.draws(), plain.draws());
    }

    #[test]
    fn tilt_preconditions_are_enforced() {
        let big = EnsembleSpec {
            n: 3,
            potential: TrigPoly::from_cosine(0.0, &[0.0, 0.0, 1.0]),
            sampler: Sampler::ImportanceTilted,
            seed: 0,
        };
        assert!(sample_tilted(&big, 10).is_err());
        let skew = EnsembleSpec {
            n: 6,
            potential: TrigPoly::new(vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
            ])
            .unwrap(),
            sampler: Sampler::ImportanceTilted,
            seed: 0,
        };
        assert!(sample_tilted(&skew, 10).is_err());
    }

    #[test]
    fn cosine_tilt_pushes_the_first_coefficient_negative() {
        let spec = EnsembleSpec {
            n: 8,
            potential: cos_potential(),
            sampler: Sampler::ImportanceTilted,
            seed: 5,
        };
        let m = 20_000;
        let tilted = spec.sample(m).unwrap();
        let shifted = tilted.weighted_mean(|a| a[0].re);
        let plain = sample_cue_coeffs(8, m, 5).unwrap();
        let centered = plain.weighted_mean(|a| a[0].re);
        assert!(centered.abs() < 0.02, "untilted mean {centered}");
        assert!(shifted < -0.05, "tilted mean {shifted}");
    }

    #[test]
    fn tilting_lowers_the_tilted_statistic() {
        let spec = EnsembleSpec {
            n: 8,
            potential: cos_potential(),
            sampler: Sampler::ImportanceTilted,
            seed: 9,
        };
        let batch = spec.sample(20_000).unwrap();
        let summary = batch.summary();
        let weighted = summary.tilt_mean_weighted.unwrap();
        let unweighted = summary.tilt_mean_unweighted.unwrap();
        assert!(
            weighted < unweighted,
            "weighted {weighted} vs unweighted {unweighted}"
        );
    }

    #[test]
    fn single_draw_report_is_produced() {
        let batch = sample_cue_coeffs(2, 1, 0).unwrap();
        let report = empirical_vs_eta(&batch, &EtaSpec::flat(), 8).unwrap();
        assert_eq!(report.draws, 1);
        assert!(report.tv_distance.is_finite());
    }

    #[test]
    fn plain_eigenphases_equidistribute_with_n() {
        // the mean eigenphase law is exactly uniform at every size, so the
        // binned distance is a noise floor shrinking like sqrt(log n)/n;
        // averaging over seeds separates the sizes cleanly
        let mut last = f64::INFINITY;
        for n in [8usize, 12, 16] {
            let mut total = 0.0;
            for k in 0..5u64 {
                let batch = sample_cue_coeffs(n, 1200, 13_000 + k).unwrap();
                let report = empirical_vs_eta(&batch, &EtaSpec::flat(), 16).unwrap();
                total += report.tv_distance;
            }
            let mean = total / 5.0;
            assert!(mean < last, "n = {n}: {mean} did not improve on {last}");
            last = mean;
        }
    }

    #[test]
    fn cosine_tilt_drifts_toward_its_limit_density() {
        // the cosine tilt sits exactly at the hard-edge coupling, where
        // importance weights collapse (measured effective sample sizes of
        // 1 to 8 at 1e5 draws for n >= 8), so the distance to the limit is
        // not resolvable as a trend in n.  What the weights do certify at
        // every size is the direction of the drift: the tilted eigenphase
        // distribution sits far closer to the vanishing-at-zero limit
        // density than the untilted one, and the batch flags its own
        // degeneracy.
        let eta = EtaSpec::new(vec![SingularPoint { theta: 0.0, m: 1 }]).unwrap();
        for n in [8usize, 12, 16] {
            let spec = EnsembleSpec {
                n,
                potential: cos_potential(),
                sampler: Sampler::ImportanceTilted,
                seed: 29,
            };
            let tilted = spec.sample(6_000).unwrap();
            let tilted_tv = empirical_vs_eta(&tilted, &eta, 8).unwrap().tv_distance;
            let plain = sample_cue_coeffs(n, 1500, 29).unwrap();
            let plain_tv = empirical_vs_eta(&plain, &eta, 8).unwrap().tv_distance;
            assert!(
                tilted_tv + 0.05 < plain_tv,
                "n = {n}: tilted {tilted_tv} vs untilted {plain_tv}"
            );
            assert!(tilted.is_degenerate(), "n = {n}: ess {}", tilted.ess());
        }
    }

    #[test]
    fn ks_statistic_detects_the_wrong_law() {
        let m = 5_000;
        let batch = sample_cue_coeffs(8, m, 19).unwrap();
        let samples: Vec<f64> = batch.draws().iter().map(|a| a[0].norm_sqr()).collect();
        // right law passes, wrong exponent fails decisively
        assert!(ks_statistic(&samples, |x| beta_one_cdf(7.0, x)) < ks_critical_1pct(m));
        assert!(ks_statistic(&samples, |x| beta_one_cdf(4.0, x)) > 5.0 * ks_critical_1pct(m));
    }

    #[test]
    fn batch_shape_is_validated() {
        assert!(sample_cue_coeffs(1, 10, 0).is_err());
        assert!(sample_cue_coeffs(4, 0, 0).is_err());
        let batch = sample_cue_coeffs(4, 10, 0).unwrap();
        assert!(empirical_vs_eta(&batch, &EtaSpec::flat(), 1).is_err());
    }
}
