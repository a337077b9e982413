#![allow(dead_code)]

use coinfect::{derive, ModelParams};
use nalgebra::Matrix4;
use proptest::prelude::*;

/// Valid parameters with `sigma1 < sigma2 < sigma3` built in and the
/// coinfection-from-single rates bounded by `gamma_max`.
pub fn valid_params(gamma_max: f64) -> impl Strategy<Value = ModelParams> {
    (
        (0.2f64..3.0, 1.0f64..20.0),
        (0.5f64..5.0, 0.5f64..5.0, 0.5f64..5.0),
        (0.1f64..2.0, 0.05f64..2.0, 0.05f64..2.0),
        (0.01f64..20.0, 0.01f64..20.0),
        (0.0f64..=1.0, 0.0f64..=1.0),
        (0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.1f64..2.0),
    )
        .prop_map(
            move |((r, k), (a1, a2, a3), (s1, g2, g3), (e1, e2), (c1, c2), (f1, f2, f3, mu4p))| {
                let (s2, s3) = (s1 + g2, s1 + g2 + g3);
                let (mu1, mu2, mu3) = (a1 * s1, a2 * s2, a3 * s3);
                ModelParams {
                    r,
                    k,
                    alpha1: a1,
                    alpha2: a2,
                    alpha3: a3,
                    eta1: e1,
                    eta2: e2,
                    gamma1: c1 * gamma_max,
                    gamma2: c2 * gamma_max,
                    mu1,
                    mu2,
                    mu3,
                    rho1: f1 * mu1,
                    rho2: f2 * mu2,
                    rho3: f3 * mu3,
                    mu4p,
                }
            },
        )
        .prop_filter("non-degenerate dAlpha", |p| derive(p).is_ok())
}

/// Parameters with `eta1* > eta2* > 1` and `gamma-bar` small relative to
/// `min A_i`.
pub fn scenario_iii_params() -> impl Strategy<Value = ModelParams> {
    (valid_params(0.0), 1.3f64..3.0, 0.1f64..0.9, 0.0f64..=1.0, 0.0f64..=1.0).prop_filter_map(
        "scenario iii with gamma1 < dAlpha/alpha3",
        |(p, e1s, frac, c1, c2)| {
            let d = derive(&p).ok()?;
            let e2s = 1.0 + frac * (e1s - 1.0) * 0.9;
            let gmax = 0.01 * d.a1.min(d.a2).min(d.a3);
            let q = ModelParams {
                eta1: e1s * d.a1,
                eta2: e2s * d.a2,
                gamma1: c1 * gmax,
                gamma2: c2 * gmax,
                ..p
            };
            let dq = derive(&q).ok()?;
            (dq.delta_alpha - q.gamma1 * q.alpha3 > 0.0).then_some(q)
        },
    )
}

/// Plain cofactor-expansion determinant, independent of any library
/// factorization.
pub fn det4(m: &Matrix4<f64>) -> f64 {
    let minor = |skip: usize| -> f64 {
        let idx: Vec<usize> = (0..4).filter(|&c| c != skip).collect();
        let a = |i: usize, j: usize| m[(i + 1, idx[j])];
        a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0))
            + a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0))
    };
    (0..4)
        .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } * m[(0, j)] * minor(j))
        .sum()
}

/// `P(S)` as the 4x4 determinant of the coexistence conditions.
pub fn p_det(p: &ModelParams, k: f64, s: f64) -> f64 {
    let g = p.r / k * (s - k);
    let m = Matrix4::new(
        p.mu1,
        p.mu2,
        p.mu3,
        g * s, //
        p.alpha1,
        p.alpha2,
        p.alpha3,
        g, //
        0.0,
        p.gamma1,
        p.eta1,
        p.mu1 - p.alpha1 * s, //
        p.gamma2,
        0.0,
        p.eta2,
        p.mu2 - p.alpha2 * s,
    );
    det4(&m)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
