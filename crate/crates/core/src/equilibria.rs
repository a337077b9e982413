//! Closed-form boundary equilibria, the coexistence polynomial and the
//! bifurcation thresholds in `K`.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, State};

/// Components at or below this value count as zero when typing a point.
pub const ZERO_TOL: f64 = 1e-12;

/// Equilibrium type by zero/nonzero pattern of `(S, I1, I2, I12)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquilibriumType {
    G1,
    G2,
    G3,
    G4,
    G5,
    G6,
    G7,
    G8,
}

impl EquilibriumType {
    pub const ALL: [EquilibriumType; 8] = [
        Self::G1,
        Self::G2,
        Self::G3,
        Self::G4,
        Self::G5,
        Self::G6,
        Self::G7,
        Self::G8,
    ];

    /// Which of `(S, I1, I2, I12)` are nonzero.
    pub fn pattern(self) -> [bool; 4] {
        match self {
            Self::G1 => [false, false, false, false],
            Self::G2 => [true, false, false, false],
            Self::G3 => [true, true, false, false],
            Self::G4 => [true, false, true, false],
            Self::G5 => [true, false, false, true],
            Self::G6 => [true, true, false, true],
            Self::G7 => [true, false, true, true],
            Self::G8 => [true, true, true, true],
        }
    }

    pub fn from_point(x: &State) -> Option<Self> {
        let nz = [x.s, x.i1, x.i2, x.i12].map(|v| v.abs() > ZERO_TOL);
        Self::ALL.into_iter().find(|t| t.pattern() == nz)
    }
}

impl fmt::Display for EquilibriumType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for EquilibriumType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| format!("unknown equilibrium type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EquilibriumWarning {
    /// `dP/dS <= 0` at a coexistence point; the branch-regularity
    /// assumption fails here.
    NonPositiveDpDs(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Equilibrium {
    pub point: State,
    pub kind: EquilibriumType,
    /// Max-norm of the equilibrium equations at `point`.
    pub residual: f64,
    pub warning: Option<EquilibriumWarning>,
}

impl Equilibrium {
    fn new(model: &Model, point: State, kind: EquilibriumType, k: f64) -> Self {
        Self {
            point,
            kind,
            residual: model.equilibrium_residual(&point, k),
            warning: None,
        }
    }

    /// The residual bound every constructed equilibrium satisfies.
    pub fn residual_bound(&self) -> f64 {
        1e-10 * self.point.norm4().max(1.0)
    }
}

fn admissible(x: &State, kind: EquilibriumType) -> bool {
    let v = [x.s, x.i1, x.i2, x.i12];
    kind.pattern()
        .iter()
        .zip(v)
        .all(|(&nz, c)| if nz { c > ZERO_TOL } else { c == 0.0 })
}

/// Closed form of a boundary equilibrium type at `k`, whether or not it is
/// admissible. `None` for `G8`.
pub fn boundary_point(model: &Model, kind: EquilibriumType, k: f64) -> Option<State> {
    let p = &model.params;
    let d = &model.derived;
    let pt = match kind {
        EquilibriumType::G1 => State::new(0.0, 0.0, 0.0, 0.0),
        EquilibriumType::G2 => State::new(k, 0.0, 0.0, 0.0),
        EquilibriumType::G3 => State::new(d.sigma1, p.r / (k * p.alpha1) * (k - d.sigma1), 0.0, 0.0),
        EquilibriumType::G4 => State::new(d.sigma2, 0.0, p.r / (k * p.alpha2) * (k - d.sigma2), 0.0),
        EquilibriumType::G5 => State::new(d.sigma3, 0.0, 0.0, p.r / (k * p.alpha3) * (k - d.sigma3)),
        EquilibriumType::G6 => {
            let s = k * (1.0 - 1.0 / d.eta1star);
            State::new(
                s,
                p.alpha3 / p.eta1 * (d.sigma3 - s),
                0.0,
                p.alpha1 / p.eta1 * (s - d.sigma1),
            )
        }
        EquilibriumType::G7 => {
            let s = k * (1.0 - 1.0 / d.eta2star);
            State::new(
                s,
                0.0,
                p.alpha3 / p.eta2 * (d.sigma3 - s),
                p.alpha2 / p.eta2 * (s - d.sigma2),
            )
        }
        EquilibriumType::G8 => return None,
    };
    Some(pt)
}

/// All admissible equilibria of types `G1`..`G7` at `k`.
pub fn boundary_equilibria(model: &Model, k: f64) -> Vec<Equilibrium> {
    EquilibriumType::ALL
        .into_iter()
        .filter_map(|kind| {
            let x = boundary_point(model, kind, k)?;
            admissible(&x, kind).then(|| Equilibrium::new(model, x, kind, k))
        })
        .collect()
}

/// `P(S) = p2 S^2 + p1 S + p0`, whose admissible roots are the `S`
/// coordinates of coexistence equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoexistencePolynomial {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub rho_det: f64,
    pub theta_det: f64,
}

impl CoexistencePolynomial {
    pub fn eval(&self, s: f64) -> f64 {
        (self.p2 * s + self.p1) * s + self.p0
    }

    pub fn derivative(&self, s: f64) -> f64 {
        2.0 * self.p2 * s + self.p1
    }

    /// Real roots, using the cancellation-free form of the quadratic formula.
    pub fn real_roots(&self) -> Vec<f64> {
        let (a, b, c) = (self.p2, self.p1, self.p0);
        if a.abs() < 1e-14 * b.abs() || a == 0.0 {
            return if b != 0.0 { vec![-c / b] } else { Vec::new() };
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Vec::new();
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return vec![0.0];
        }
        let mut roots = vec![q / a, c / q];
        roots.sort_by(f64::total_cmp);
        roots.dedup();
        roots
    }
}

pub fn coexistence_polynomial(model: &Model, k: f64) -> CoexistencePolynomial {
    let p = &model.params;
    let d = &model.derived;
    let (g1, g2, r) = (p.gamma1, p.gamma2, p.r);
    let p0 = r * (-d.a3 * d.delta_mu - d.theta_det + g1 * p.mu2 * d.a1 + g2 * p.mu1 * d.a2);
    let p1 = r * (d.a3 * d.delta_alpha + d.theta_det / k + d.rho_det - g1 * p.alpha2 * d.a1 - g2 * p.alpha1 * d.a2);
    let p2 = -r / k * d.rho_det;
    CoexistencePolynomial {
        p0,
        p1,
        p2,
        rho_det: d.rho_det,
        theta_det: d.theta_det,
    }
}

/// `dP/dS` at `s`.
pub fn dpds_at(model: &Model, k: f64, s: f64) -> f64 {
    coexistence_polynomial(model, k).derivative(s)
}

/// Solve `(I1, I2, I12)` for a known `S` from the three linear equilibrium
/// equations. When all `gamma` vanish that system is singular and the
/// (then linear) fourth equation replaces the third.
pub fn back_solve(model: &Model, k: f64, s: f64) -> Result<State> {
    let p = &model.params;
    let rhs_growth = p.r * (1.0 - s / k);
    let (m, rhs) = if p.gamma_bar() == 0.0 {
        (
            Matrix3::new(
                p.alpha1, p.alpha2, p.alpha3, //
                0.0, 0.0, p.eta1, //
                p.eta1, p.eta2, 0.0,
            ),
            Vector3::new(rhs_growth, p.alpha1 * s - p.mu1, p.mu3 - p.alpha3 * s),
        )
    } else {
        (
            Matrix3::new(
                p.alpha1, p.alpha2, p.alpha3, //
                0.0, p.gamma1, p.eta1, //
                p.gamma2, 0.0, p.eta2,
            ),
            Vector3::new(rhs_growth, p.alpha1 * s - p.mu1, p.alpha2 * s - p.mu2),
        )
    };
    let scale = m.amax().powi(3);
    if m.determinant().abs() <= 1e-14 * scale {
        return Err(Error::SingularLinearSystem { s });
    }
    let sol = m.lu().solve(&rhs).ok_or(Error::SingularLinearSystem { s })?;
    Ok(State::new(s, sol[0], sol[1], sol[2]))
}

/// Each real root of `P` paired with its back-solved point, admissible or
/// not.
pub fn coexistence_candidates(model: &Model, k: f64) -> Vec<Result<State>> {
    let poly = coexistence_polynomial(model, k);
    let mut roots = poly.real_roots();
    if model.params.gamma_bar() == 0.0 {
        roots = vec![model.derived.delta_mu / model.derived.delta_alpha];
    }
    roots.into_iter().map(|s| back_solve(model, k, s)).collect()
}

/// Newton iteration on the divided coexistence system, whose Jacobian is
/// `B`. Returns `None` if the iteration leaves the region `I12 > 0` or does
/// not settle.
pub fn newton_coexistence(model: &Model, k: f64, start: State, max_iter: usize) -> Option<State> {
    let mut x = start.to_vector4();
    for _ in 0..max_iter {
        let st = State::from_vector4(&x);
        if !(st.i12 > 0.0) || !st.is_finite() {
            return None;
        }
        let f = model.coexistence_residual(&st, k);
        let b = model.b_matrix(&st, k);
        let dx = b.lu().solve(&f)?;
        x -= dx;
        if dx.amax() <= 4.0 * f64::EPSILON * x.amax() {
            break;
        }
    }
    let st = State::from_vector4(&x);
    (st.is_finite() && st.i12 > 0.0).then_some(st)
}

/// Admissible coexistence equilibria (`G8`) at `k`, polished by Newton.
pub fn solve_coexistence(model: &Model, k: f64) -> Vec<Equilibrium> {
    coexistence_candidates(model, k)
        .into_iter()
        .filter_map(|c| c.ok())
        .filter(|x| x.s > ZERO_TOL && x.i1 > ZERO_TOL && x.i2 > ZERO_TOL && x.i12 > ZERO_TOL)
        .filter_map(|x| {
            let x = if model.params.gamma_bar() == 0.0 {
                x
            } else {
                newton_coexistence(model, k, x, 12)?
            };
            admissible(&x, EquilibriumType::G8).then(|| coexistence_equilibrium(model, k, x))
        })
        .collect()
}

/// Wrap an interior point as a `G8` equilibrium, flagging `dP/dS <= 0`.
pub fn coexistence_equilibrium(model: &Model, k: f64, x: State) -> Equilibrium {
    let mut eq = Equilibrium::new(model, x, EquilibriumType::G8, k);
    let dpds = dpds_at(model, k, x.s);
    if dpds <= 0.0 {
        eq.warning = Some(EquilibriumWarning::NonPositiveDpDs(dpds));
    }
    eq
}

/// Every admissible equilibrium at `k`, boundary types first.
pub fn all_equilibria(model: &Model, k: f64) -> Vec<Equilibrium> {
    let mut v = boundary_equilibria(model, k);
    v.extend(solve_coexistence(model, k));
    v
}

/// Threshold values of `K` (and the matching `S`) where the stable
/// equilibrium changes type. Entries are `None` when their defining
/// condition fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub sigma1: f64,
    /// `sigma1*eta1*/(eta1*-1)`, when `eta1* > 1`.
    pub k_g3_to_g6: Option<f64>,
    /// `sigma3*eta1*/(eta1*-1)`, when `eta1* > 1`.
    pub k_g6_to_g5: Option<f64>,
    pub shat1: Option<f64>,
    pub khat1: Option<f64>,
    pub shat2: Option<f64>,
    pub khat2: Option<f64>,
    /// `sigma3*eta2*/(eta2*-1)`, when `eta2* > 1`.
    pub k_g7_to_g5: Option<f64>,
}

fn amplify(eta_star: f64) -> Option<f64> {
    (eta_star > 1.0).then(|| eta_star / (eta_star - 1.0))
}

pub fn thresholds(model: &Model) -> Result<Thresholds> {
    let p = &model.params;
    let d = &model.derived;
    let den1 = d.delta_alpha + p.gamma2 * p.alpha3;
    let den2 = d.delta_alpha - p.gamma1 * p.alpha3;
    if den2 == 0.0 {
        return Err(Error::DivisionDegenerate(
            "dAlpha - gamma1*alpha3 = 0: S-hat-2 undefined",
        ));
    }
    let shat1 = (den1 != 0.0).then(|| (d.delta_mu + p.gamma2 * p.mu3) / den1);
    let shat2 = Some((d.delta_mu - p.gamma1 * p.mu3) / den2);
    let c1 = amplify(d.eta1star);
    let c2 = amplify(d.eta2star);
    Ok(Thresholds {
        sigma1: d.sigma1,
        k_g3_to_g6: c1.map(|c| d.sigma1 * c),
        k_g6_to_g5: c1.map(|c| d.sigma3 * c),
        shat1,
        khat1: c1.zip(shat1).map(|(c, s)| s * c),
        shat2,
        khat2: c2.zip(shat2).map(|(c, s)| s * c),
        k_g7_to_g5: c2.map(|c| d.sigma3 * c),
    })
}

/// Right-hand side of the `S-hat-1 - S-hat-2` identity,
/// `gbar*r*A1*A2*(eta1*-eta2*) / ((dAlpha-gamma1*alpha3)(dAlpha+gamma2*alpha3))`.
pub fn shat_gap_identity(model: &Model) -> f64 {
    let p = &model.params;
    let d = &model.derived;
    d.gammabar * p.r * d.a1 * d.a2 * (d.eta1star - d.eta2star)
        / ((d.delta_alpha - p.gamma1 * p.alpha3) * (d.delta_alpha + p.gamma2 * p.alpha3))
}
