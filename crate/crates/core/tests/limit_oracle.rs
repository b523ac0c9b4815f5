//! Limit distribution functions against an independent adaptive Simpson
//! integration over the latent normal, and against frozen values.

use approx::assert_abs_diff_eq;
use maxdisc_core::limits::{limit_cdf, LimitRegime, LimitSpec};
use maxdisc_core::model::{ComponentParams, VectorCorrelationModel};
use maxdisc_core::quadrature::Integrator;

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// `E[exp(-s e^{-r + sqrt(2r) Z})]` by adaptive Simpson on `[-12, 12]`.
fn oracle(s: f64, r: f64) -> f64 {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    simpson(&|z| phi(z) * (-s * (-r + (2.0 * r).sqrt() * z).exp()).exp(), -12.0, 12.0, 1e-13, 40)
}

fn one_component(r: f64) -> VectorCorrelationModel {
    VectorCorrelationModel::build(vec![ComponentParams::new(1.0, 1.0, r).unwrap()], &[r], false).unwrap()
}

const AXIS: [f64; 4] = [-1.0, 0.0, 1.0, 2.0];

#[rustfmt::skip]
const SPARSE_GOLDEN: [[f64; 4]; 4] = [
    [0.125287656046, 0.191843570082, 0.230440846743, 0.247715139776],
    [0.191843570082, 0.332484900847, 0.430496086352, 0.479386029727],
    [0.230440846743, 0.430496086352, 0.589891416400, 0.677797066502],
    [0.247715139776, 0.479386029727, 0.677797066502, 0.794746845992],
];

#[test]
fn sparse_lattice_matches_oracle_and_golden() {
    let spec = LimitSpec::new(&one_component(0.5), LimitRegime::Sparse, None).unwrap();
    for (i, &x) in AXIS.iter().enumerate() {
        for (j, &y) in AXIS.iter().enumerate() {
            let v = limit_cdf(&spec, &[x], &[y], Integrator::default()).unwrap();
            let s = (-x as f64).exp() + (-y as f64).exp();
            assert_abs_diff_eq!(v.value, oracle(s, 0.5), epsilon = 1e-9);
            assert_abs_diff_eq!(v.value, SPARSE_GOLDEN[i][j], epsilon = 1e-9);
        }
    }
}

#[test]
fn dense_and_corollary_match_oracle() {
    for r in [0.1, 0.5, 1.5] {
        let model = one_component(r);
        let dense = LimitSpec::new(&model, LimitRegime::Dense, None).unwrap();
        let marginal = LimitSpec::new(&model, LimitRegime::CorollaryMarginal, None).unwrap();
        for &x in &AXIS {
            for &y in &AXIS {
                // steep integrands at large r: the reported error must cover the gap
                let v = limit_cdf(&dense, &[x], &[y], Integrator::default()).unwrap();
                assert_abs_diff_eq!(v.value, oracle((-x.min(y)).exp(), r), epsilon = v.error.max(1e-9));
            }
            let m = limit_cdf(&marginal, &[x], &[], Integrator::default()).unwrap();
            assert_abs_diff_eq!(m.value, oracle((-x).exp(), r), epsilon = m.error.max(1e-9));
        }
    }
}

#[test]
fn weak_dependence_is_gumbel() {
    let spec = LimitSpec::new(&one_component(0.0), LimitRegime::Sparse, None).unwrap();
    let v = limit_cdf(&spec, &[0.0], &[0.0], Integrator::default()).unwrap();
    assert_abs_diff_eq!(v.value, (-2.0f64).exp(), epsilon = 1e-15);
    assert_eq!(v.error, 0.0);
}

#[test]
fn two_component_product_structure_when_latents_independent() {
    // r_12 = 0 makes the latent normals independent, so the limit factorises
    let comps = vec![ComponentParams::new(1.0, 1.0, 0.5).unwrap(), ComponentParams::new(1.5, 2.0, 0.3).unwrap()];
    let model = VectorCorrelationModel::build(comps, &[0.5, 0.0, 0.0, 0.3], false).unwrap();
    let spec = LimitSpec::new(&model, LimitRegime::Sparse, None).unwrap();
    let v = limit_cdf(&spec, &[0.0, 1.0], &[1.0, -1.0], Integrator::default()).unwrap().value;
    let expected = oracle(1.0 + (-1.0f64).exp(), 0.5) * oracle((-1.0f64).exp() + 1.0f64.exp(), 0.3);
    assert_abs_diff_eq!(v, expected, epsilon = 1e-9);
}
