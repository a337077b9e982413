//! The locally stable equilibrium as a function of the carrying capacity:
//! scenario prediction, continuation of the coexistence branch, transition
//! and Hopf detection.

use nalgebra::Vector4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{
    all_equilibria, boundary_equilibria, coexistence_equilibrium, dpds_at, solve_coexistence, thresholds, Equilibrium,
    EquilibriumType, EquilibriumWarning, ZERO_TOL,
};
use crate::error::{Error, Result};
use crate::model::{Model, State};
use crate::stability::{classify, Classification, StabilityReport};

use EquilibriumType::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioTag {
    #[serde(rename = "i")]
    I,
    #[serde(rename = "ii")]
    Ii,
    #[serde(rename = "iii")]
    Iii,
    #[serde(rename = "iv")]
    Iv,
}

impl ScenarioTag {
    pub fn chain(self) -> &'static [EquilibriumType] {
        match self {
            ScenarioTag::I => &[G2, G3],
            ScenarioTag::Ii => &[G2, G3, G6, G5],
            ScenarioTag::Iii => &[G2, G3, G6, G8, G7, G5],
            ScenarioTag::Iv => &[G2, G3, G6, G8],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioTag::I => "i",
            ScenarioTag::Ii => "ii",
            ScenarioTag::Iii => "iii",
            ScenarioTag::Iv => "iv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictedTransition {
    pub k: f64,
    pub from: EquilibriumType,
    pub to: EquilibriumType,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub tag: ScenarioTag,
    pub predicted_transitions: Vec<PredictedTransition>,
    /// Scenarios (i) and (ii) rest on results about the boundary dynamics
    /// established elsewhere; flagged so reports can say so.
    pub per_companion: bool,
}

impl Scenario {
    /// Stable type predicted by the chain at `k`.
    pub fn predicted_type(&self, k: f64) -> EquilibriumType {
        let mut t = G2;
        for tr in &self.predicted_transitions {
            if k > tr.k {
                t = tr.to;
            }
        }
        t
    }
}

/// Select the scenario from the ordering of `eta1*`, `eta2*` and one, and
/// check that `dP/dS > 0` at each coexistence bifurcation point.
pub fn classify_scenario(model: &Model) -> Result<Scenario> {
    let d = &model.derived;
    let th = thresholds(model)?;
    let tr = |k: Option<f64>, from, to| -> Result<PredictedTransition> {
        let k = k.ok_or(Error::DivisionDegenerate("threshold undefined for this scenario"))?;
        Ok(PredictedTransition { k, from, to })
    };
    let first = PredictedTransition {
        k: d.sigma1,
        from: G2,
        to: G3,
    };
    let (tag, rest) = if d.eta1star <= 1.0 {
        (ScenarioTag::I, vec![])
    } else if d.eta2star >= d.eta1star {
        (
            ScenarioTag::Ii,
            vec![tr(th.k_g3_to_g6, G3, G6)?, tr(th.k_g6_to_g5, G6, G5)?],
        )
    } else if d.eta2star > 1.0 {
        check_assumption_ii(model, th.khat1, th.shat1)?;
        check_assumption_ii(model, th.khat2, th.shat2)?;
        (
            ScenarioTag::Iii,
            vec![
                tr(th.k_g3_to_g6, G3, G6)?,
                tr(th.khat1, G6, G8)?,
                tr(th.khat2, G8, G7)?,
                tr(th.k_g7_to_g5, G7, G5)?,
            ],
        )
    } else {
        check_assumption_ii(model, th.khat1, th.shat1)?;
        (ScenarioTag::Iv, vec![tr(th.k_g3_to_g6, G3, G6)?, tr(th.khat1, G6, G8)?])
    };
    let mut predicted_transitions = vec![first];
    predicted_transitions.extend(rest);
    Ok(Scenario {
        tag,
        predicted_transitions,
        per_companion: matches!(tag, ScenarioTag::I | ScenarioTag::Ii),
    })
}

fn check_assumption_ii(model: &Model, k: Option<f64>, s: Option<f64>) -> Result<()> {
    if let (Some(k), Some(s)) = (k, s) {
        if dpds_at(model, k, s) <= 0.0 {
            return Err(Error::AssumptionIIFailure { k });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepPolicy {
    /// Base step; `None` means `(K_max - K_min)/2000`.
    pub base: Option<f64>,
    /// Relative half-width of the neighbourhoods around predicted thresholds
    /// where the step is halved.
    pub refine_radius: f64,
    /// Smallest continuation step relative to `K`.
    pub floor_rel: f64,
    pub max_halvings: u32,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            base: None,
            refine_radius: 0.01,
            floor_rel: 1e-9,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPoint {
    pub k: f64,
    pub equilibrium: Equilibrium,
    pub report: StabilityReport,
}

impl BranchPoint {
    pub fn stable(&self) -> bool {
        self.report.is_stable()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event")]
pub enum BranchEvent {
    Transition {
        k: f64,
        from: EquilibriumType,
        to: EquilibriumType,
        predicted_k: Option<f64>,
    },
    HopfOnset {
        k_c: f64,
    },
    AssumptionBreak {
        k: f64,
        which: String,
    },
    ThresholdMismatch {
        detected_k: f64,
        predicted_k: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub scenario: Option<Scenario>,
    pub samples: Vec<BranchPoint>,
    pub events: Vec<BranchEvent>,
}

impl Branch {
    /// Detected transitions in order.
    pub fn transitions(&self) -> Vec<(f64, EquilibriumType, EquilibriumType)> {
        self.events
            .iter()
            .filter_map(|e| match *e {
                BranchEvent::Transition { k, from, to, .. } => Some((k, from, to)),
                _ => None,
            })
            .collect()
    }

    /// Sequence of sample types with consecutive repeats removed.
    pub fn type_chain(&self) -> Vec<EquilibriumType> {
        let mut v: Vec<EquilibriumType> = Vec::new();
        for s in &self.samples {
            if v.last() != Some(&s.equilibrium.kind) {
                v.push(s.equilibrium.kind);
            }
        }
        v
    }
}

/// Every admissible equilibrium at `k` with its stability report.
pub fn stable_equilibria(model: &Model, k: f64) -> Result<Vec<(Equilibrium, StabilityReport)>> {
    all_equilibria(model, k)
        .into_iter()
        .map(|e| Ok((e, classify(model, &e, k)?)))
        .collect()
}

/// Tangent `dX/dK = -B^{-1} dF/dK` of the coexistence branch.
pub fn branch_tangent(model: &Model, x: &State, k: f64) -> Option<Vector4<f64>> {
    let b = model.b_matrix(x, k);
    let rhs = Vector4::new(model.params.r * x.s / (k * k), 0.0, 0.0, 0.0);
    b.lu().solve(&rhs).map(|v| -v)
}

fn corrector(model: &Model, k: f64, guess: Vector4<f64>) -> Option<State> {
    let mut x = guess;
    for _ in 0..25 {
        let st = State::from_vector4(&x);
        if !(st.i12 > 0.0) || !st.is_finite() {
            return None;
        }
        let f = model.coexistence_residual(&st, k);
        let dx = model.b_matrix(&st, k).lu().solve(&f)?;
        x -= dx;
        // quadratic convergence: a 1e-12 step leaves only round-off behind
        if dx.amax() <= 1e-12 * x.amax().max(1.0) {
            let st = State::from_vector4(&x);
            let res = model.coexistence_residual(&st, k).amax();
            return (st.i12 > 0.0 && res <= 1e-10).then_some(st);
        }
    }
    None
}

fn interior(x: &State) -> bool {
    x.s > ZERO_TOL && x.i1 > ZERO_TOL && x.i2 > ZERO_TOL && x.i12 > ZERO_TOL
}

/// Advance a coexistence point from `k0` to `k1` by predictor-corrector
/// steps. `Ok(None)` when the branch leaves the interior on the way.
pub fn continue_coexistence(
    model: &Model,
    start: State,
    k0: f64,
    k1: f64,
    policy: &StepPolicy,
) -> Result<Option<State>> {
    let mut x = start;
    let mut k = k0;
    let full = k1 - k0;
    let mut h = full;
    // consecutive failures; the step regrows after each success
    let mut halvings = 0;
    while k < k1 {
        let step = h.min(k1 - k);
        let guess = match branch_tangent(model, &x, k) {
            Some(t) => x.to_vector4() + t * step,
            None => x.to_vector4(),
        };
        match corrector(model, k + step, guess) {
            Some(y) => {
                x = y;
                k += step;
                if !interior(&x) {
                    return Ok(None);
                }
                halvings = 0;
                h = (2.0 * h).min(full);
            }
            None => {
                h *= 0.5;
                halvings += 1;
                if h < policy.floor_rel * k || halvings > policy.max_halvings {
                    if solve_coexistence(model, k1).is_empty() {
                        return Ok(None);
                    }
                    return Err(Error::ContinuationStall { last_k: k });
                }
            }
        }
    }
    Ok(Some(x))
}

fn pick(
    cands: &[(Equilibrium, StabilityReport)],
    prev: Option<EquilibriumType>,
) -> Option<(Equilibrium, StabilityReport)> {
    let stable: Vec<_> = cands.iter().filter(|(_, r)| r.is_stable()).collect();
    if stable.len() == 1 {
        return Some(*stable[0]);
    }
    let pool: Vec<_> = if stable.is_empty() {
        cands.iter().collect()
    } else {
        stable
    };
    if let Some(c) = pool.iter().find(|(e, _)| Some(e.kind) == prev) {
        return Some(**c);
    }
    pool.into_iter()
        .min_by(|a, b| a.1.max_real_part.total_cmp(&b.1.max_real_part))
        .copied()
}

/// Whether an equilibrium of `kind` is admissible and stable at `k`.
pub fn type_is_stable(model: &Model, kind: EquilibriumType, k: f64) -> bool {
    let eqs = if kind == G8 {
        solve_coexistence(model, k)
    } else {
        boundary_equilibria(model, k)
    };
    eqs.iter()
        .filter(|e| e.kind == kind)
        .any(|e| classify(model, e, k).is_ok_and(|r| r.is_stable()))
}

/// Bisect for the `K` where `kind` stops being stable, given it is stable
/// at `lo` and not at `hi`.
pub fn refine_loss_of_stability(model: &Model, kind: EquilibriumType, mut lo: f64, mut hi: f64) -> f64 {
    if !type_is_stable(model, kind, lo) || type_is_stable(model, kind, hi) {
        return 0.5 * (lo + hi);
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if type_is_stable(model, kind, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn sample_grid(k_min: f64, k_max: f64, policy: &StepPolicy, marks: &[f64]) -> Vec<f64> {
    let base = policy.base.unwrap_or((k_max - k_min) / 2000.0);
    let mut ks = vec![k_min];
    let mut k = k_min;
    while k < k_max {
        let near = marks.iter().any(|&m| (k - m).abs() <= policy.refine_radius * m);
        let step = if near { 0.5 * base } else { base };
        k = (k + step.max(policy.floor_rel * k)).min(k_max);
        ks.push(k);
    }
    ks
}

/// Trace the stable equilibrium over `[k_min, k_max]`.
pub fn trace(model: &Model, k_min: f64, k_max: f64, policy: &StepPolicy) -> Result<Branch> {
    if !(k_min > 0.0 && k_max > k_min && k_max.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "K-range",
            reason: format!("need 0 < K_min < K_max, got [{k_min}, {k_max}]"),
        });
    }
    let mut events = Vec::new();
    let scenario = match classify_scenario(model) {
        Ok(s) => Some(s),
        Err(Error::AssumptionIIFailure { k }) => {
            events.push(BranchEvent::AssumptionBreak {
                k,
                which: "dP/dS > 0 at the coexistence bifurcation point".into(),
            });
            None
        }
        Err(Error::DivisionDegenerate(msg)) => {
            events.push(BranchEvent::AssumptionBreak {
                k: k_min,
                which: msg.into(),
            });
            None
        }
        Err(e) => return Err(e),
    };
    let marks: Vec<f64> = scenario
        .as_ref()
        .map(|s| s.predicted_transitions.iter().map(|t| t.k).collect())
        .unwrap_or_default();
    let grid = sample_grid(k_min, k_max, policy, &marks);

    let mut samples: Vec<BranchPoint> = Vec::with_capacity(grid.len());
    let mut g8_prev: Option<(f64, State)> = None;
    let mut flagged_dpds = false;
    for &k in &grid {
        let mut cands: Vec<Equilibrium> = boundary_equilibria(model, k);
        let g8_now = match g8_prev {
            Some((k0, x0)) => continue_coexistence(model, x0, k0, k, policy)?
                .map(|x| vec![coexistence_equilibrium(model, k, x)])
                .unwrap_or_default(),
            None => solve_coexistence(model, k),
        };
        g8_prev = g8_now.first().map(|e| (k, e.point));
        for e in &g8_now {
            if let Some(EquilibriumWarning::NonPositiveDpDs(_)) = e.warning {
                if !flagged_dpds {
                    events.push(BranchEvent::AssumptionBreak {
                        k,
                        which: "dP/dS <= 0 at a coexistence point".into(),
                    });
                    flagged_dpds = true;
                }
            }
        }
        cands.extend(g8_now);
        let reports = cands
            .iter()
            .map(|e| Ok((*e, classify(model, e, k)?)))
            .collect::<Result<Vec<_>>>()?;
        let prev_kind = samples.last().map(|s| s.equilibrium.kind);
        let Some((eq, report)) = pick(&reports, prev_kind) else {
            continue;
        };
        if let Some(prev) = samples.last() {
            let from = prev.equilibrium.kind;
            if from != eq.kind {
                let k_sw = refine_loss_of_stability(model, from, prev.k, k);
                let predicted = scenario.as_ref().and_then(|s| {
                    s.predicted_transitions
                        .iter()
                        .find(|t| t.from == from && t.to == eq.kind)
                        .map(|t| t.k)
                });
                events.push(BranchEvent::Transition {
                    k: k_sw,
                    from,
                    to: eq.kind,
                    predicted_k: predicted,
                });
                if let Some(pk) = predicted {
                    if (pk - k_sw).abs() > 1e-5 * pk {
                        events.push(BranchEvent::ThresholdMismatch {
                            detected_k: k_sw,
                            predicted_k: pk,
                        });
                    }
                }
            } else if from == G8 && prev.stable() && report.classification == Classification::Unstable {
                let k_c = hopf_refine(model, prev.k, k).map(|h| h.k_c).unwrap_or(k);
                events.push(BranchEvent::HopfOnset { k_c });
            }
        }
        samples.push(BranchPoint {
            k,
            equilibrium: eq,
            report,
        });
    }
    Ok(Branch {
        scenario,
        samples,
        events,
    })
}

/// Closed-form slopes of the coexistence branch at its end points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BifurcationSlopes {
    /// `dI2/dK` just above `K-hat-1`.
    pub di2dk_at_khat1: Option<f64>,
    /// `dI1/dK` just below `K-hat-2`.
    pub di1dk_at_khat2: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
}

pub fn bifurcation_slopes(model: &Model) -> Result<BifurcationSlopes> {
    let p = &model.params;
    let d = &model.derived;
    let th = thresholds(model)?;
    let mut out = BifurcationSlopes {
        di2dk_at_khat1: None,
        di1dk_at_khat2: None,
        theta1: None,
        theta2: None,
    };
    if let (Some(k), Some(s)) = (th.khat1, th.shat1) {
        let dp = dpds_at(model, k, s);
        if dp <= 0.0 {
            return Err(Error::AssumptionIIFailure { k });
        }
        let i12 = p.alpha1 / p.eta1 * (s - d.sigma1);
        out.di2dk_at_khat1 = Some(p.eta1 * p.r * (d.delta_mu + p.gamma2 * p.mu3) * i12 / (dp * k * k));
        out.theta1 = Some(k * dp / (p.r * p.eta1 * p.eta1 * i12));
    }
    if let (Some(k), Some(s)) = (th.khat2, th.shat2) {
        let dp = dpds_at(model, k, s);
        if dp <= 0.0 {
            return Err(Error::AssumptionIIFailure { k });
        }
        let i12 = p.alpha2 / p.eta2 * (s - d.sigma2);
        out.di1dk_at_khat2 = Some(-p.eta2 * p.r * (d.delta_mu - p.gamma1 * p.mu3) * i12 / (dp * k * k));
        out.theta2 = Some(k * dp / (p.r * p.eta2 * p.eta2 * i12));
    }
    Ok(out)
}

/// `dS/dK` and `dI12/dK` along the coexistence branch, from the explicit
/// `gamma` brackets and from the first column of `B^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoexistenceDerivatives {
    pub ds_dk: f64,
    pub di12_dk: f64,
    pub ds_dk_inverse: f64,
    pub di12_dk_inverse: f64,
}

pub fn coexistence_derivatives(model: &Model, x: &State, k: f64) -> Result<CoexistenceDerivatives> {
    let p = &model.params;
    let dp = dpds_at(model, k, x.s);
    if dp <= 0.0 {
        return Err(Error::AssumptionIIFailure { k });
    }
    let (g1, g2, gb) = (p.gamma1, p.gamma2, p.gamma_bar());
    let r1 = x.i1 / x.i12;
    let r2 = x.i2 / x.i12;
    let pre = -p.r * x.s * x.i12 / (k * k * dp);
    let bs = g1 * g2 * gb * r1 * r2 + g1 * p.eta2 * (p.eta1 + gb * r2) + p.eta1 * g2 * (p.eta2 + gb * r1);
    let bi = p.alpha1 * g2 * (p.eta2 + gb * r1) + g1 * p.alpha2 * (p.eta1 + gb * r2) + g1 * g2 * p.alpha3;
    let binv = model
        .b_matrix(x, k)
        .try_inverse()
        .ok_or(Error::SingularLinearSystem { s: x.s })?;
    let f = p.r * x.s / (k * k);
    Ok(CoexistenceDerivatives {
        ds_dk: pre * bs,
        di12_dk: pre * bi,
        ds_dk_inverse: -binv[(0, 0)] * f,
        di12_dk_inverse: -binv[(3, 0)] * f,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HopfPoint {
    pub k_c: f64,
    /// Leading eigenvalue of the crossing pair at `k_c`.
    pub eigenvalue: Complex64,
    /// `|Re| / |lambda|` at `k_c`.
    pub rel_real_part: f64,
    /// Central-difference estimate of `d Re(lambda)/dK` at `k_c`.
    pub transversality: f64,
    pub fd_step: f64,
}

/// Real part of the leading pair of the coexistence point at `k`, with the
/// eigenvalue itself.
fn g8_leading(model: &Model, k: f64) -> Option<Complex64> {
    let eqs = solve_coexistence(model, k);
    let eq = eqs.iter().find(|e| e.warning.is_none()).or(eqs.first())?;
    let rep = classify(model, eq, k).ok()?;
    Some(rep.leading_complex_pair().unwrap_or(rep.eigenvalues[0]))
}

/// Bisect the sign change of the leading pair's real part between `lo`
/// (stable) and `hi` (unstable).
pub fn hopf_refine(model: &Model, mut lo: f64, mut hi: f64) -> Result<HopfPoint> {
    let mut best = None;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let Some(z) = g8_leading(model, mid) else {
            return Err(Error::MissingEquilibrium { kind: G8, k: mid });
        };
        best = Some((mid, z));
        if z.re.abs() < 1e-10 * z.norm() || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        if z.re < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (k_c, z) = best.ok_or(Error::NoCrossing { marginal: false })?;
    let h = 1e-3 * k_c;
    let up = g8_leading(model, k_c + h).ok_or(Error::MissingEquilibrium { kind: G8, k: k_c + h })?;
    let dn = g8_leading(model, k_c - h).ok_or(Error::MissingEquilibrium { kind: G8, k: k_c - h })?;
    Ok(HopfPoint {
        k_c,
        eigenvalue: z,
        rel_real_part: z.re.abs() / z.norm(),
        transversality: (up.re - dn.re) / (2.0 * h),
        fd_step: h,
    })
}

/// Scan `[k_lo, k_hi]` on a geometric grid for the first loss of stability
/// of the coexistence point through a complex pair, then bisect.
pub fn hopf_scan(model: &Model, k_lo: f64, k_hi: f64, grid_points: usize) -> Result<HopfPoint> {
    if !(k_lo > 0.0 && k_hi > k_lo) {
        return Err(Error::InvalidParameter {
            name: "K-range",
            reason: format!("need 0 < K_min < K_max, got [{k_lo}, {k_hi}]"),
        });
    }
    let n = grid_points.max(2);
    let ratio = (k_hi / k_lo).powf(1.0 / (n - 1) as f64);
    let ks: Vec<f64> = (0..n).map(|i| k_lo * ratio.powi(i as i32)).collect();
    let lead: Vec<Option<Complex64>> = ks.par_iter().map(|&k| g8_leading(model, k)).collect();
    let mut marginal = false;
    let mut prev: Option<(f64, Complex64)> = None;
    for (&k, z) in ks.iter().zip(&lead) {
        let Some(z) = *z else {
            prev = None;
            continue;
        };
        if z.re.abs() <= 1e-9 * z.norm() {
            marginal = true;
        }
        if let Some((k0, z0)) = prev {
            if z0.re < 0.0 && z.re > 0.0 {
                return hopf_refine(model, k0, k);
            }
        }
        prev = Some((k, z));
    }
    Err(Error::NoCrossing { marginal })
}
