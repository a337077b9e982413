//! Reference parameter sets used throughout the tests and shipped as JSON
//! under `fixtures/` at the repository root.

use crate::model::ModelParams;

/// `eta1* = 2 > eta2* = 1.5 > 1`: the branch passes through a coexistence
/// section bounded by two transcritical points.
pub fn p1() -> ModelParams {
    ModelParams {
        r: 1.0,
        k: 7.0,
        alpha1: 2.0,
        alpha2: 1.0,
        alpha3: 1.0,
        eta1: 14.0,
        eta2: 3.0,
        gamma1: 0.01,
        gamma2: 0.01,
        mu1: 1.0,
        mu2: 2.0,
        mu3: 4.0,
        rho1: 0.1,
        rho2: 0.1,
        rho3: 0.1,
        mu4p: 1.0,
    }
}

/// As [`p1`] with `eta2 = 1`, so `eta2* = 0.5 < 1` and the coexistence
/// section extends to infinite `K`.
pub fn p2() -> ModelParams {
    ModelParams { eta2: 1.0, ..p1() }
}

/// `eta1*` just above one, `eta2*` just below: coexistence for all large `K`
/// with loss of stability through a Hopf bifurcation.
pub fn p3() -> ModelParams {
    ModelParams {
        r: 1.0,
        k: 1e5,
        alpha1: 10.0,
        alpha2: 9.9,
        alpha3: 1.0,
        eta1: 9.01,
        eta2: 8.899,
        gamma1: 0.001,
        gamma2: 0.001,
        mu1: 1.0,
        mu2: 1.0,
        mu3: 1.0,
        rho1: 0.1,
        rho2: 0.1,
        rho3: 0.1,
        mu4p: 1.0,
    }
}
