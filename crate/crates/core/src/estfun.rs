//! The stacked estimating function `Ψ = (Ψ^ps, Ψ^Δ)` and its analytic
//! Jacobian.
//!
//! `Ψ^ps(A,X;γ) = X{A − e(X;γ)}` is the logistic propensity score, and
//! `Ψ^Δ(Y,A,X;θ) = (1,A)ᵀ ω(A,X;γ) {Y − g(β₀ + β_A·A)}` is the weighted
//! marginal structural model score with IPTW weight
//! `ω = A/e + (1−A)/(1−e)`. Summation order over rows is fixed, and the
//! per-row arithmetic is shared between the full stacked evaluation and the
//! per-block evaluations, so block sums are bit-identical no matter which
//! entry point produced them. Sequential relay protocols rely on this to make
//! their point estimates reproducible across protocol variants.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::data::SiteDataset;
use crate::error::{Error, Result};
use crate::params::ParameterVector;

/// Estimated propensity scores are clamped to
/// `[PROPENSITY_CLAMP, 1 − PROPENSITY_CLAMP]` before weighting; every clamp
/// event is counted in the evaluation diagnostics. This prevents silent
/// `Inf` propagation while keeping positivity violations detectable.
pub const PROPENSITY_CLAMP: f64 = 1e-10;

/// Numerically stable inverse-logit `1/(1+e^{−x})`; saturates to 0/1 in
/// floating point without overflow for any finite input.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`expit`] on (0,1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Outcome-model link `g` in the marginal structural model
/// `g⁻¹(β₀ + β_A·A)`. Binary outcomes use [`Link::Logistic`]; the identity
/// and log links are wired through the same interface for continuous and
/// count extensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Logistic,
    Identity,
    Log,
}

impl Link {
    /// `g⁻¹(η)`, the modelled outcome mean.
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Logistic => expit(eta),
            Link::Identity => eta,
            Link::Log => eta.exp(),
        }
    }

    /// `d g⁻¹/d η`.
    pub fn dinverse(self, eta: f64) -> f64 {
        match self {
            Link::Logistic => {
                let m = expit(eta);
                m * (1.0 - m)
            }
            Link::Identity => 1.0,
            Link::Log => eta.exp(),
        }
    }
}

/// Propensity score `e(x;γ) = expit(xᵀγ)`.
pub fn propensity_score(x_row: &[f64], gamma: &[f64]) -> Result<f64> {
    if x_row.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            context: "propensity_score",
            expected: gamma.len(),
            actual: x_row.len(),
        });
    }
    let mut eta = 0.0;
    for (x, g) in x_row.iter().zip(gamma.iter()) {
        eta += x * g;
    }
    Ok(expit(eta))
}

/// IPTW weight `ω = a/e + (1−a)/(1−e)`. `a` is 0 or 1 in estimation; general
/// reals are accepted so synthetic residual-zero checks can be expressed.
pub fn iptw_weight(a: f64, e: f64) -> Result<f64> {
    if !(e > 0.0 && e < 1.0) {
        return Err(Error::DegenerateWeight { value: e });
    }
    Ok(a / e + (1.0 - a) / (1.0 - e))
}

/// Per-dataset sums of the stacked estimating function at a fixed `θ`.
///
/// `jacobian_sum = Σᵢ ∂Ψᵢ/∂θᵀ` carries the raw analytic Jacobian; the
/// sensitivity matrix used by the sandwich formula is its negation,
/// available as [`EstimatingEvaluation::h_sum`]. The upper-right `p_γ×2`
/// block of the Jacobian is exactly zero (`Ψ^ps` does not depend on `β`).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatingEvaluation {
    pub psi_sum: DVector<f64>,
    pub jacobian_sum: DMatrix<f64>,
    /// `Σᵢ Ψᵢ Ψᵢᵀ`, symmetric by construction.
    pub outer_sum: DMatrix<f64>,
    pub n: usize,
    /// Rows whose propensity score hit the clamp bounds.
    pub clamp_events: usize,
}

impl EstimatingEvaluation {
    /// Sensitivity matrix `H = −jacobian_sum`.
    pub fn h_sum(&self) -> DMatrix<f64> {
        -&self.jacobian_sum
    }
}

/// Score and sensitivity sums for a single estimating-equation block, in the
/// sensitivity (negated-Jacobian) sign convention.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEvaluation {
    pub psi_sum: DVector<f64>,
    pub h_sum: DMatrix<f64>,
    pub n: usize,
    pub clamp_events: usize,
}

#[inline]
fn linear_predictor(design: &DMatrix<f64>, i: usize, coeffs: &DVector<f64>) -> f64 {
    let mut eta = 0.0;
    for c in 0..coeffs.len() {
        eta += design[(i, c)] * coeffs[c];
    }
    eta
}

#[inline]
fn clamped_propensity(eta: f64) -> (f64, bool) {
    let e = expit(eta);
    if e < PROPENSITY_CLAMP {
        (PROPENSITY_CLAMP, true)
    } else if e > 1.0 - PROPENSITY_CLAMP {
        (1.0 - PROPENSITY_CLAMP, true)
    } else {
        (e, false)
    }
}

/// Per-row MSM terms. One shared kernel guarantees that every caller
/// accumulates bit-identical `Ψ^Δ` scores and `H^Δ_ββ` entries.
#[derive(Debug, Clone, Copy)]
struct MsmRow {
    psi0: f64,
    psi1: f64,
    h00: f64,
    h01: f64,
    h11: f64,
}

#[inline]
fn msm_row(y: f64, a: f64, w: f64, beta: &Vector2<f64>, link: Link) -> MsmRow {
    let eta = beta[0] + beta[1] * a;
    let m = link.inverse(eta);
    let r = w * (y - m);
    let k = w * link.dinverse(eta);
    let h01 = k * a;
    MsmRow {
        psi0: r,
        psi1: r * a,
        h00: k,
        h01,
        h11: h01 * a,
    }
}

/// The stacked per-row estimating function `(Ψ^ps, Ψ^Δ)` at `θ`, using the
/// logistic outcome link.
pub fn psi_stacked(y: f64, a: f64, x_row: &[f64], theta: &ParameterVector) -> Result<DVector<f64>> {
    psi_stacked_with_link(y, a, x_row, theta, Link::Logistic)
}

pub fn psi_stacked_with_link(
    y: f64,
    a: f64,
    x_row: &[f64],
    theta: &ParameterVector,
    link: Link,
) -> Result<DVector<f64>> {
    let p_gamma = theta.p_gamma();
    if x_row.len() != p_gamma {
        return Err(Error::DimensionMismatch {
            context: "psi_stacked covariate row",
            expected: p_gamma,
            actual: x_row.len(),
        });
    }
    let mut eta = 0.0;
    for (x, g) in x_row.iter().zip(theta.gamma().iter()) {
        eta += x * g;
    }
    if !eta.is_finite() {
        return Err(Error::Positivity { rows: vec![1] });
    }
    let (e, _) = clamped_propensity(eta);
    let w = iptw_weight(a, e)?;
    let t = msm_row(y, a, w, theta.beta(), link);
    let mut psi = DVector::zeros(p_gamma + 2);
    let r_ps = a - e;
    for (c, x) in x_row.iter().enumerate() {
        psi[c] = x * r_ps;
    }
    psi[p_gamma] = t.psi0;
    psi[p_gamma + 1] = t.psi1;
    Ok(psi)
}

fn check_theta_dims(dataset: &SiteDataset, p_gamma: usize) -> Result<()> {
    if dataset.p_gamma() != p_gamma {
        return Err(Error::DimensionMismatch {
            context: "evaluate: dataset design vs gamma",
            expected: dataset.p_gamma(),
            actual: p_gamma,
        });
    }
    Ok(())
}

/// Full-dataset sums of `Ψ`, its Jacobian, and the score outer products at a
/// fixed `θ` (logistic outcome link).
pub fn evaluate(dataset: &SiteDataset, theta: &ParameterVector) -> Result<EstimatingEvaluation> {
    evaluate_with_link(dataset, theta, Link::Logistic)
}

pub fn evaluate_with_link(
    dataset: &SiteDataset,
    theta: &ParameterVector,
    link: Link,
) -> Result<EstimatingEvaluation> {
    check_theta_dims(dataset, theta.p_gamma())?;
    let design = dataset.design();
    let p_gamma = theta.p_gamma();
    let p = p_gamma + 2;
    let n = dataset.n();

    let mut psi_sum: DVector<f64> = DVector::zeros(p);
    let mut h_gg: DMatrix<f64> = DMatrix::zeros(p_gamma, p_gamma);
    let mut h_bg: DMatrix<f64> = DMatrix::zeros(2, p_gamma);
    let mut h_bb: Matrix2<f64> = Matrix2::zeros();
    let mut outer: DMatrix<f64> = DMatrix::zeros(p, p);
    let mut psi_row: DVector<f64> = DVector::zeros(p);
    let mut clamp_events = 0;
    let mut bad_rows = Vec::new();

    for i in 0..n {
        let eta = linear_predictor(design, i, theta.gamma());
        if !eta.is_finite() {
            bad_rows.push(i + 1);
            continue;
        }
        let (e, clamped) = clamped_propensity(eta);
        clamp_events += clamped as usize;
        let y = f64::from(dataset.outcome()[i]);
        let a = f64::from(dataset.treatment()[i]);
        let w = a / e + (1.0 - a) / (1.0 - e);

        // Ψ^ps block and H_γγ (upper triangle).
        let r_ps = a - e;
        let s = e * (1.0 - e);
        for c in 0..p_gamma {
            let xc = design[(i, c)];
            psi_row[c] = xc * r_ps;
            for cc in c..p_gamma {
                h_gg[(c, cc)] += s * xc * design[(i, cc)];
            }
        }

        // Ψ^Δ block and H_ββ via the shared MSM row kernel.
        let t = msm_row(y, a, w, theta.beta(), link);
        psi_row[p_gamma] = t.psi0;
        psi_row[p_gamma + 1] = t.psi1;
        h_bb[(0, 0)] += t.h00;
        h_bb[(0, 1)] += t.h01;
        h_bb[(1, 1)] += t.h11;

        // H_βγ = −Σ (1,a)ᵀ (y−m) (∂ω/∂e) e(1−e) xᵀ.
        let eta_out = theta.beta()[0] + theta.beta()[1] * a;
        let m = link.inverse(eta_out);
        let dwde = -a / (e * e) + (1.0 - a) / ((1.0 - e) * (1.0 - e));
        let coef = -((y - m) * dwde * s);
        let coef_a = coef * a;
        for c in 0..p_gamma {
            let xc = design[(i, c)];
            h_bg[(0, c)] += coef * xc;
            h_bg[(1, c)] += coef_a * xc;
        }

        for r in 0..p {
            psi_sum[r] += psi_row[r];
            for cc in r..p {
                outer[(r, cc)] += psi_row[r] * psi_row[cc];
            }
        }
    }

    if !bad_rows.is_empty() {
        return Err(Error::Positivity { rows: bad_rows });
    }

    // Mirror the upper triangles and assemble the Jacobian in its raw sign:
    // jacobian = [[−H_γγ, 0], [−H_βγ, −H_ββ]].
    let mut jacobian: DMatrix<f64> = DMatrix::zeros(p, p);
    for r in 0..p_gamma {
        for c in r..p_gamma {
            let v = -h_gg[(r, c)];
            jacobian[(r, c)] = v;
            jacobian[(c, r)] = v;
        }
    }
    for c in 0..p_gamma {
        jacobian[(p_gamma, c)] = -h_bg[(0, c)];
        jacobian[(p_gamma + 1, c)] = -h_bg[(1, c)];
    }
    h_bb[(1, 0)] = h_bb[(0, 1)];
    for r in 0..2 {
        for c in 0..2 {
            jacobian[(p_gamma + r, p_gamma + c)] = -h_bb[(r, c)];
        }
    }
    for r in 0..p {
        for c in r + 1..p {
            outer[(c, r)] = outer[(r, c)];
        }
    }

    Ok(EstimatingEvaluation {
        psi_sum,
        jacobian_sum: jacobian,
        outer_sum: outer,
        n,
        clamp_events,
    })
}

/// Score and sensitivity sums of the propensity block `Ψ^ps` alone:
/// `psi = Σ x(a−e)`, `H = Σ e(1−e) x xᵀ`.
pub fn evaluate_ps(dataset: &SiteDataset, gamma: &DVector<f64>) -> Result<BlockEvaluation> {
    check_theta_dims(dataset, gamma.len())?;
    let design = dataset.design();
    let p_gamma = gamma.len();
    let n = dataset.n();
    let mut psi_sum = DVector::zeros(p_gamma);
    let mut h = DMatrix::zeros(p_gamma, p_gamma);
    let mut bad_rows = Vec::new();
    for i in 0..n {
        let eta = linear_predictor(design, i, gamma);
        if !eta.is_finite() {
            bad_rows.push(i + 1);
            continue;
        }
        let (e, _) = clamped_propensity(eta);
        let a = f64::from(dataset.treatment()[i]);
        let r_ps = a - e;
        let s = e * (1.0 - e);
        for c in 0..p_gamma {
            let xc = design[(i, c)];
            psi_sum[c] += xc * r_ps;
            for cc in c..p_gamma {
                h[(c, cc)] += s * xc * design[(i, cc)];
            }
        }
    }
    if !bad_rows.is_empty() {
        return Err(Error::Positivity { rows: bad_rows });
    }
    for r in 0..p_gamma {
        for c in r + 1..p_gamma {
            h[(c, r)] = h[(r, c)];
        }
    }
    Ok(BlockEvaluation {
        psi_sum,
        h_sum: h,
        n,
        clamp_events: 0,
    })
}

/// Score and sensitivity sums of the MSM block `Ψ^Δ` at a fixed `γ`
/// (logistic outcome link): `psi = Σ (1,a)ᵀ ω (y−m)`, `H = Σ ω m(1−m) d dᵀ`.
pub fn evaluate_msm(
    dataset: &SiteDataset,
    gamma: &DVector<f64>,
    beta: &Vector2<f64>,
) -> Result<BlockEvaluation> {
    evaluate_msm_with_link(dataset, gamma, beta, Link::Logistic)
}

pub fn evaluate_msm_with_link(
    dataset: &SiteDataset,
    gamma: &DVector<f64>,
    beta: &Vector2<f64>,
    link: Link,
) -> Result<BlockEvaluation> {
    check_theta_dims(dataset, gamma.len())?;
    let design = dataset.design();
    let n = dataset.n();
    let mut psi0 = 0.0;
    let mut psi1 = 0.0;
    let mut h00 = 0.0;
    let mut h01 = 0.0;
    let mut h11 = 0.0;
    let mut clamp_events = 0;
    let mut bad_rows = Vec::new();
    for i in 0..n {
        let eta = linear_predictor(design, i, gamma);
        if !eta.is_finite() {
            bad_rows.push(i + 1);
            continue;
        }
        let (e, clamped) = clamped_propensity(eta);
        clamp_events += clamped as usize;
        let y = f64::from(dataset.outcome()[i]);
        let a = f64::from(dataset.treatment()[i]);
        let w = a / e + (1.0 - a) / (1.0 - e);
        let t = msm_row(y, a, w, beta, link);
        psi0 += t.psi0;
        psi1 += t.psi1;
        h00 += t.h00;
        h01 += t.h01;
        h11 += t.h11;
    }
    if !bad_rows.is_empty() {
        return Err(Error::Positivity { rows: bad_rows });
    }
    Ok(BlockEvaluation {
        psi_sum: DVector::from_vec(vec![psi0, psi1]),
        h_sum: DMatrix::from_row_slice(2, 2, &[h00, h01, h01, h11]),
        n,
        clamp_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    // Frozen reference values computed with an arbitrary-precision oracle.
    const EXPIT_0364: f64 = 0.590_008_375_228_88;
    const EXPIT_05: f64 = 0.622_459_331_201_854_6;

    #[test]
    fn expit_trivials() {
        assert_eq!(expit(0.0), 0.5);
        assert_eq!(expit(800.0), 1.0);
        assert_eq!(expit(-800.0), 0.0);
        assert!((expit(0.364) - EXPIT_0364).abs() < 1e-15);
    }

    #[test]
    fn expit_is_monotone_and_symmetric() {
        let mut prev = expit(-30.0);
        let mut x = -29.5;
        while x <= 30.0 {
            let v = expit(x);
            assert!(v >= prev);
            prev = v;
            x += 0.5;
        }
        for x in [-5.0, -0.5, 0.25, 3.0] {
            assert!((expit(x) + expit(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn logit_inverts_expit() {
        for x in [-7.5, -1.0, 0.0, 0.364, 4.25] {
            assert!((logit(expit(x)) - x).abs() < 1e-9);
        }
    }

    #[test]
    fn propensity_score_trivials() {
        let x = [1.0, 0.7, -2.5];
        assert_eq!(propensity_score(&x, &[0.0, 0.0, 0.0]).unwrap(), 0.5);
        let intercept_only = propensity_score(&[1.0, 0.0, 0.0], &[0.5, 2.0, -3.0]).unwrap();
        assert!((intercept_only - EXPIT_05).abs() < 1e-15);
        assert!(propensity_score(&x, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn iptw_weight_trivials() {
        assert_eq!(iptw_weight(1.0, 0.5).unwrap(), 2.0);
        assert_eq!(iptw_weight(0.0, 0.5).unwrap(), 2.0);
        assert_eq!(iptw_weight(1.0, 0.25).unwrap(), 4.0);
        assert!(iptw_weight(1.0, 0.0).is_err());
        assert!(iptw_weight(0.0, 1.0).is_err());
        assert!(iptw_weight(1.0, f64::NAN).is_err());
    }

    #[test]
    fn psi_ps_block_vanishes_when_a_equals_e() {
        // Synthetic: a = e(x;γ) = 0.5 exactly at γ = 0.
        let theta = ParameterVector::zeros(3);
        let psi = psi_stacked(0.25, 0.5, &[1.0, -0.7, 2.2], &theta).unwrap();
        for c in 0..3 {
            assert_eq!(psi[c], 0.0);
        }
    }

    #[test]
    fn psi_msm_block_vanishes_when_y_equals_mean() {
        let theta = ParameterVector::new(
            DVector::from_vec(vec![0.3, -0.2]),
            nalgebra::Vector2::new(-0.5, 0.8),
        )
        .unwrap();
        let a = 1.0;
        let y = expit(-0.5 + 0.8 * a);
        let psi = psi_stacked(y, a, &[1.0, 0.4], &theta).unwrap();
        assert_eq!(psi[2], 0.0);
        assert_eq!(psi[3], 0.0);
    }

    fn toy_dataset() -> SiteDataset {
        SiteDataset::new(
            "toy",
            vec![0, 1, 1, 0, 1, 0],
            vec![1, 0, 1, 1, 0, 0],
            DMatrix::from_row_slice(
                6,
                2,
                &[
                    0.5, -1.0, 1.5, 0.25, -0.75, 2.0, 0.1, 0.3, -1.2, -0.4, 0.9, 1.1,
                ],
            ),
            false,
        )
        .unwrap()
    }

    fn toy_theta() -> ParameterVector {
        ParameterVector::new(
            DVector::from_vec(vec![0.2, -0.4, 0.3]),
            nalgebra::Vector2::new(-0.6, 0.5),
        )
        .unwrap()
    }

    #[test]
    fn single_row_outer_is_rank_one() {
        let ds = SiteDataset::new(
            "one",
            vec![1],
            vec![1],
            DMatrix::from_row_slice(1, 2, &[0.5, -1.0]),
            false,
        )
        .unwrap();
        let eval = evaluate(&ds, &toy_theta()).unwrap();
        let expected = &eval.psi_sum * eval.psi_sum.transpose();
        assert_eq!(eval.outer_sum, expected);
    }

    #[test]
    fn upper_right_jacobian_block_is_exactly_zero() {
        let eval = evaluate(&toy_dataset(), &toy_theta()).unwrap();
        for r in 0..3 {
            for c in 3..5 {
                assert_eq!(eval.jacobian_sum[(r, c)], 0.0);
            }
        }
    }

    #[test]
    fn halves_sum_to_whole() {
        let ds = toy_dataset();
        let theta = toy_theta();
        let whole = evaluate(&ds, &theta).unwrap();
        let first = SiteDataset::new(
            "h1",
            ds.outcome()[..3].to_vec(),
            ds.treatment()[..3].to_vec(),
            ds.covariates().rows(0, 3).into_owned(),
            false,
        )
        .unwrap();
        let second = SiteDataset::new(
            "h2",
            ds.outcome()[3..].to_vec(),
            ds.treatment()[3..].to_vec(),
            ds.covariates().rows(3, 3).into_owned(),
            false,
        )
        .unwrap();
        let (e1, e2) = (
            evaluate(&first, &theta).unwrap(),
            evaluate(&second, &theta).unwrap(),
        );
        let scale = whole.psi_sum.amax().max(1.0);
        for r in 0..5 {
            assert!(((e1.psi_sum[r] + e2.psi_sum[r]) - whole.psi_sum[r]).abs() <= 1e-12 * scale);
        }
        let jscale = whole.jacobian_sum.amax();
        for r in 0..5 {
            for c in 0..5 {
                let sum = e1.jacobian_sum[(r, c)] + e2.jacobian_sum[(r, c)];
                assert!((sum - whole.jacobian_sum[(r, c)]).abs() <= 1e-12 * jscale);
            }
        }
    }

    #[test]
    fn outer_sum_is_bitwise_symmetric() {
        let eval = evaluate(&toy_dataset(), &toy_theta()).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                assert_eq!(
                    eval.outer_sum[(r, c)].to_bits(),
                    eval.outer_sum[(c, r)].to_bits()
                );
            }
        }
    }

    #[test]
    fn block_evaluations_match_full_evaluation_bitwise() {
        let ds = toy_dataset();
        let theta = toy_theta();
        let full = evaluate(&ds, &theta).unwrap();
        let h = full.h_sum();
        let ps = evaluate_ps(&ds, theta.gamma()).unwrap();
        let msm = evaluate_msm(&ds, theta.gamma(), theta.beta()).unwrap();
        for r in 0..3 {
            assert_eq!(full.psi_sum[r].to_bits(), ps.psi_sum[r].to_bits());
            for c in 0..3 {
                assert_eq!(h[(r, c)].to_bits(), ps.h_sum[(r, c)].to_bits());
            }
        }
        for r in 0..2 {
            assert_eq!(full.psi_sum[3 + r].to_bits(), msm.psi_sum[r].to_bits());
            for c in 0..2 {
                assert_eq!(h[(3 + r, 3 + c)].to_bits(), msm.h_sum[(r, c)].to_bits());
            }
        }
    }

    #[test]
    fn clamp_events_are_counted_not_fatal() {
        let theta = ParameterVector::new(
            DVector::from_vec(vec![9000.0, 0.0, 0.0]),
            nalgebra::Vector2::zeros(),
        )
        .unwrap();
        let eval = evaluate(&toy_dataset(), &theta).unwrap();
        assert_eq!(eval.clamp_events, 6);
        assert!(eval.psi_sum.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn non_finite_linear_predictor_reports_rows() {
        let ds = SiteDataset::new(
            "big",
            vec![0, 1],
            vec![1, 0],
            DMatrix::from_row_slice(2, 1, &[1e300, 0.5]),
            false,
        )
        .unwrap();
        let theta = ParameterVector::new(
            DVector::from_vec(vec![0.0, 1e10]),
            nalgebra::Vector2::zeros(),
        )
        .unwrap();
        match evaluate(&ds, &theta) {
            Err(Error::Positivity { rows }) => assert_eq!(rows, vec![1]),
            other => panic!("expected positivity error, got {other:?}"),
        }
    }

    #[test]
    fn identity_and_log_links_evaluate() {
        assert_eq!(Link::Identity.inverse(0.3), 0.3);
        assert_eq!(Link::Identity.dinverse(-5.0), 1.0);
        assert!((Link::Log.inverse(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(Link::Log.inverse(0.5), Link::Log.dinverse(0.5));
        let msm = evaluate_msm_with_link(
            &toy_dataset(),
            toy_theta().gamma(),
            toy_theta().beta(),
            Link::Identity,
        )
        .unwrap();
        assert!(msm.psi_sum.iter().all(|v| v.is_finite()));
    }
}
