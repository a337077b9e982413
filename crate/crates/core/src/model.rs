//! Model parameters, derived quantities and the reduced vector field.
//!
//! The state is `(S, I1, I2, I12)` with an optional recovered class `R` that
//! does not feed back into the first four equations.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw rates of the five-compartment system.
///
/// JSON field names match the struct names except the carrying capacity,
/// which is spelled `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub r: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub mu4p: f64,
}

impl ModelParams {
    pub fn with_k(&self, k: f64) -> Self {
        Self { k, ..*self }
    }

    pub fn with_gamma(&self, gamma1: f64, gamma2: f64) -> Self {
        Self {
            gamma1,
            gamma2,
            ..*self
        }
    }

    pub fn alpha(&self) -> [f64; 3] {
        [self.alpha1, self.alpha2, self.alpha3]
    }

    pub fn mu(&self) -> [f64; 3] {
        [self.mu1, self.mu2, self.mu3]
    }

    pub fn gamma_bar(&self) -> f64 {
        self.gamma1 + self.gamma2
    }

    /// Field-level checks: signs, finiteness and `mu_i >= rho_i`.
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, f64); 9] = [
            ("r", self.r),
            ("K", self.k),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
            ("mu4p", self.mu4p),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be a positive finite number, got {v}"),
                });
            }
        }
        let nonneg: [(&'static str, f64); 7] = [
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be a nonnegative finite number, got {v}"),
                });
            }
        }
        for (name, mu, rho) in [
            ("rho1", self.mu1, self.rho1),
            ("rho2", self.mu2, self.rho2),
            ("rho3", self.mu3, self.rho3),
        ] {
            if rho > mu {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("recovery rate {rho} exceeds removal rate {mu}"),
                });
            }
        }
        Ok(())
    }
}

/// Quantities computed once from [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedQuantities {
    pub sigma1: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub eta1star: f64,
    pub eta2star: f64,
    pub gammastar: f64,
    pub gammabar: f64,
    pub delta_alpha: f64,
    pub delta_mu: f64,
    pub rho_det: f64,
    pub theta_det: f64,
}

/// Relative residuals of the algebraic identities linking the derived
/// quantities. All should be at rounding level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResiduals {
    /// `alpha2*A1 = alpha3*A3 + alpha1*A2`
    pub a_relation: f64,
    /// `eta1* - eta2* = (dAlpha*sigma3 - dMu)*alpha3 / (r*A1*A2)`
    pub eta_star_gap: f64,
    /// `dMu = eta1*r*A3/alpha1 + sigma1*dAlpha = eta2*r*A3/alpha2 + sigma2*dAlpha`
    pub delta_mu_split: f64,
}

/// Ratio `|a - b| / max(|a|, |b|, tiny)`.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    (a - b).abs() / scale
}

/// Compute all derived quantities; fails when the sigma ordering,
/// `dAlpha != 0` or positivity of the `A_i` is violated.
pub fn derive(p: &ModelParams) -> Result<DerivedQuantities> {
    p.validate()?;
    let sigma1 = p.mu1 / p.alpha1;
    let sigma2 = p.mu2 / p.alpha2;
    let sigma3 = p.mu3 / p.alpha3;
    if !(sigma1 < sigma2 && sigma2 < sigma3) {
        return Err(Error::AssumptionViolation(format!(
            "sigma ordering sigma1 < sigma2 < sigma3 fails: ({sigma1}, {sigma2}, {sigma3})"
        )));
    }
    let a1 = p.alpha1 * p.alpha3 * (sigma3 - sigma1) / p.r;
    let a2 = p.alpha2 * p.alpha3 * (sigma3 - sigma2) / p.r;
    let a3 = p.alpha1 * p.alpha2 * (sigma2 - sigma1) / p.r;
    if !(a1 > 0.0 && a2 > 0.0 && a3 > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "A_i must be positive, got ({a1}, {a2}, {a3})"
        )));
    }
    let delta_alpha = p.eta1 * p.alpha2 - p.eta2 * p.alpha1;
    if delta_alpha == 0.0 {
        return Err(Error::AssumptionViolation(
            "non-degeneracy dAlpha = eta1*alpha2 - eta2*alpha1 != 0 fails".into(),
        ));
    }
    let delta_mu = p.eta1 * p.mu2 - p.eta2 * p.mu1;
    let (g1, g2) = (p.gamma1, p.gamma2);
    let rho_det = g1 * p.alpha1 * p.eta2 + g2 * p.alpha2 * p.eta1 - g1 * g2 * p.alpha3;
    let theta_det = g1 * p.mu1 * p.eta2 + g2 * p.mu2 * p.eta1 - g1 * g2 * p.mu3;
    Ok(DerivedQuantities {
        sigma1,
        sigma2,
        sigma3,
        a1,
        a2,
        a3,
        eta1star: p.eta1 / a1,
        eta2star: p.eta2 / a2,
        gammastar: g1 / a3,
        gammabar: g1 + g2,
        delta_alpha,
        delta_mu,
        rho_det,
        theta_det,
    })
}

impl DerivedQuantities {
    pub fn sigma(&self) -> [f64; 3] {
        [self.sigma1, self.sigma2, self.sigma3]
    }

    pub fn identity_residuals(&self, p: &ModelParams) -> IdentityResiduals {
        let a_relation = rel_diff(p.alpha2 * self.a1, p.alpha3 * self.a3 + p.alpha1 * self.a2);
        let eta_star_gap = rel_diff(
            self.eta1star - self.eta2star,
            (self.delta_alpha * self.sigma3 - self.delta_mu) * p.alpha3 / (p.r * self.a1 * self.a2),
        );
        let split1 = p.eta1 * p.r * self.a3 / p.alpha1 + self.sigma1 * self.delta_alpha;
        let split2 = p.eta2 * p.r * self.a3 / p.alpha2 + self.sigma2 * self.delta_alpha;
        let delta_mu_split = rel_diff(split1, self.delta_mu).max(rel_diff(split2, self.delta_mu));
        IdentityResiduals {
            a_relation,
            eta_star_gap,
            delta_mu_split,
        }
    }
}

/// One row of the standing-assumption report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub holds: bool,
    pub detail: String,
}

/// Report the standing assumptions; never fails.
pub fn validate_standing_assumptions(p: &ModelParams, d: &DerivedQuantities) -> Vec<AssumptionCheck> {
    let gamma1_bound = d.delta_alpha / p.alpha3;
    vec![
        AssumptionCheck {
            name: "sigma1 < sigma2 < sigma3",
            holds: d.sigma1 < d.sigma2 && d.sigma2 < d.sigma3,
            detail: format!("sigma = ({}, {}, {})", d.sigma1, d.sigma2, d.sigma3),
        },
        AssumptionCheck {
            name: "delta_alpha != 0",
            holds: d.delta_alpha != 0.0,
            detail: format!("delta_alpha = {}", d.delta_alpha),
        },
        AssumptionCheck {
            name: "gamma* < 1",
            holds: d.gammastar < 1.0,
            detail: format!("gamma* = {}", d.gammastar),
        },
        AssumptionCheck {
            name: "gamma1 < delta_alpha / alpha3",
            holds: p.gamma1 < gamma1_bound,
            detail: format!("gamma1 = {}, bound = {}", p.gamma1, gamma1_bound),
        },
    ]
}

/// Compartment sizes. `r` is the recovered class and is only evolved when
/// requested.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub i1: f64,
    pub i2: f64,
    pub i12: f64,
    #[serde(default)]
    pub r: f64,
}

impl State {
    pub const fn new(s: f64, i1: f64, i2: f64, i12: f64) -> Self {
        Self { s, i1, i2, i12, r: 0.0 }
    }

    pub fn with_r(self, r: f64) -> Self {
        Self { r, ..self }
    }

    pub fn to_vector4(&self) -> Vector4<f64> {
        Vector4::new(self.s, self.i1, self.i2, self.i12)
    }

    pub fn from_vector4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array5(&self) -> [f64; 5] {
        [self.s, self.i1, self.i2, self.i12, self.r]
    }

    pub fn from_array5(a: [f64; 5]) -> Self {
        Self {
            s: a[0],
            i1: a[1],
            i2: a[2],
            i12: a[3],
            r: a[4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array5().iter().all(|v| v.is_finite())
    }

    /// Max-norm over the four disease compartments.
    pub fn norm4(&self) -> f64 {
        self.to_vector4().amax()
    }
}

/// Parameters bundled with their validated derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Model {
    pub params: ModelParams,
    pub derived: DerivedQuantities,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let derived = derive(&params)?;
        Ok(Self { params, derived })
    }

    pub fn with_gamma(&self, gamma1: f64, gamma2: f64) -> Result<Self> {
        Self::new(self.params.with_gamma(gamma1, gamma2))
    }

    /// Right-hand side of the system at carrying capacity `k`. With
    /// `include_r = false` the returned `r` component is zero.
    pub fn vector_field(&self, x: &State, k: f64, include_r: bool) -> Result<State> {
        let p = &self.params;
        let gb = p.gamma_bar();
        let ds = (p.r * (1.0 - x.s / k) - p.alpha1 * x.i1 - p.alpha2 * x.i2 - p.alpha3 * x.i12) * x.s;
        let di1 = (p.alpha1 * x.s - p.eta1 * x.i12 - p.gamma1 * x.i2 - p.mu1) * x.i1;
        let di2 = (p.alpha2 * x.s - p.eta2 * x.i12 - p.gamma2 * x.i1 - p.mu2) * x.i2;
        let di12 = (p.alpha3 * x.s + p.eta1 * x.i1 + p.eta2 * x.i2 - p.mu3) * x.i12 + gb * x.i1 * x.i2;
        let dr = if include_r {
            p.rho1 * x.i1 + p.rho2 * x.i2 + p.rho3 * x.i12 - p.mu4p * x.r
        } else {
            0.0
        };
        let out = State {
            s: ds,
            i1: di1,
            i2: di2,
            i12: di12,
            r: dr,
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite("vector field"))
        }
    }

    /// Analytic Jacobian of the reduced four-dimensional system.
    pub fn jacobian(&self, x: &State, k: f64) -> Matrix4<f64> {
        let p = &self.params;
        let gb = p.gamma_bar();
        let (s, i1, i2, i12) = (x.s, x.i1, x.i2, x.i12);
        Matrix4::new(
            p.r * (1.0 - 2.0 * s / k) - p.alpha1 * i1 - p.alpha2 * i2 - p.alpha3 * i12,
            -p.alpha1 * s,
            -p.alpha2 * s,
            -p.alpha3 * s,
            p.alpha1 * i1,
            p.alpha1 * s - p.eta1 * i12 - p.gamma1 * i2 - p.mu1,
            -p.gamma1 * i1,
            -p.eta1 * i1,
            p.alpha2 * i2,
            -p.gamma2 * i2,
            p.alpha2 * s - p.eta2 * i12 - p.gamma2 * i1 - p.mu2,
            -p.eta2 * i2,
            p.alpha3 * i12,
            p.eta1 * i12 + gb * i2,
            p.eta2 * i12 + gb * i1,
            p.alpha3 * s + p.eta1 * i1 + p.eta2 * i2 - p.mu3,
        )
    }

    /// The matrix `B` with `J = diag(S, I1, I2, I12) * B` at an interior
    /// equilibrium. Depends on the point only through `r1 = I1/I12` and
    /// `r2 = I2/I12`; requires `I12 > 0`.
    pub fn b_matrix(&self, x: &State, k: f64) -> Matrix4<f64> {
        let p = &self.params;
        let gb = p.gamma_bar();
        let r1 = x.i1 / x.i12;
        let r2 = x.i2 / x.i12;
        Matrix4::new(
            -p.r / k,
            -p.alpha1,
            -p.alpha2,
            -p.alpha3,
            p.alpha1,
            0.0,
            -p.gamma1,
            -p.eta1,
            p.alpha2,
            -p.gamma2,
            0.0,
            -p.eta2,
            p.alpha3,
            p.eta1 + gb * r2,
            p.eta2 + gb * r1,
            -gb * r1 * r2,
        )
    }

    /// Residual of the divided coexistence system; its Jacobian is
    /// [`Model::b_matrix`].
    pub fn coexistence_residual(&self, x: &State, k: f64) -> Vector4<f64> {
        let p = &self.params;
        Vector4::new(
            p.r * (1.0 - x.s / k) - p.alpha1 * x.i1 - p.alpha2 * x.i2 - p.alpha3 * x.i12,
            p.alpha1 * x.s - p.eta1 * x.i12 - p.gamma1 * x.i2 - p.mu1,
            p.alpha2 * x.s - p.eta2 * x.i12 - p.gamma2 * x.i1 - p.mu2,
            p.alpha3 * x.s + p.eta1 * x.i1 + p.eta2 * x.i2 - p.mu3 + p.gamma_bar() * x.i1 * x.i2 / x.i12,
        )
    }

    /// Max-norm of the equilibrium equations (vector field without `R`).
    pub fn equilibrium_residual(&self, x: &State, k: f64) -> f64 {
        match self.vector_field(x, k, false) {
            Ok(f) => f.to_vector4().amax(),
            Err(_) => f64::INFINITY,
        }
    }
}
