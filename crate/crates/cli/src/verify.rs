//! Invariant suite run by `coinfect verify` on one parameter set.

use coinfect::equilibria::shat_gap_identity;
use coinfect::stability::{classify_point, closed_form_verdict, lemma6_check, MMatrixSample, WindowVerdict};
use coinfect::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Longest `20 / |max Re lambda|` probed by the simulation check.
const PROBE_HORIZON_CAP: f64 = 1e5;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn threshold_marks(model: &Model) -> Vec<f64> {
    let mut marks = vec![model.derived.sigma1];
    if let Ok(th) = thresholds(model) {
        marks.extend(
            [th.k_g3_to_g6, th.k_g6_to_g5, th.khat1, th.khat2, th.k_g7_to_g5]
                .into_iter()
                .flatten(),
        );
    }
    marks
}

pub fn run(model: &Model, k_lo: f64, k_hi: f64, steps: usize, seed: u64) -> Result<Vec<Check>> {
    let p = &model.params;
    let d = &model.derived;
    let mut out = Vec::new();

    let res = d.identity_residuals(p);
    let mut worst = res.a_relation.max(res.eta_star_gap).max(res.delta_mu_split);
    if let Ok(th) = thresholds(model) {
        if let (Some(a), Some(b)) = (th.shat1, th.shat2) {
            worst = worst.max(rel(a - b, shat_gap_identity(model)));
        }
    }
    out.push(check(
        "derived identities",
        worst <= 1e-10,
        format!("worst relative residual {worst:.3e}"),
    ));

    let failing: Vec<_> = validate_standing_assumptions(p, d)
        .into_iter()
        .filter(|a| !a.holds)
        .map(|a| a.name)
        .collect();
    out.push(check(
        "standing assumptions",
        failing.is_empty(),
        if failing.is_empty() {
            "all hold".into()
        } else {
            format!("failing: {}", failing.join("; "))
        },
    ));

    let marks = threshold_marks(model);
    let n = steps.max(2);
    let ks: Vec<f64> = (0..n)
        .map(|i| k_lo + (k_hi - k_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let (mut worst_res, mut worst_poly, mut worst_detb) = (0.0f64, 0.0f64, 0.0f64);
    let mut disagreements = Vec::new();
    for &k in &ks {
        let near = marks.iter().any(|&t| (k - t).abs() <= 1e-6 * k);
        for e in all_equilibria(model, k) {
            worst_res = worst_res.max(e.residual / e.residual_bound());
            let rep = classify(model, &e, k)?;
            worst_poly = worst_poly.max(rep.char_poly_residual());
            if e.kind == EquilibriumType::G8 {
                let x = e.point;
                let detb = model.b_matrix(&x, k).determinant();
                worst_detb = worst_detb.max(rel(x.i12 * detb, dpds_at(model, k, x.s)));
            } else if !near && rep.classification != Classification::Marginal {
                let closed = closed_form_verdict(model, e.kind, k);
                let agree = match closed {
                    WindowVerdict::Stable => rep.is_stable(),
                    WindowVerdict::Unstable => !rep.is_stable(),
                    WindowVerdict::ExcludedByAssumption => true,
                };
                if !agree {
                    disagreements.push(format!("{} at K = {k}", e.kind));
                }
            }
        }
    }
    out.push(check(
        "equilibrium residuals",
        worst_res <= 1.0,
        format!("worst residual / bound {worst_res:.3e} over {n} K values"),
    ));
    out.push(check(
        "characteristic polynomial residual",
        worst_poly <= 1e-8,
        format!("worst {worst_poly:.3e}"),
    ));
    out.push(check(
        "coexistence det-B identity",
        worst_detb <= 1e-8,
        format!("worst relative gap {worst_detb:.3e}"),
    ));
    out.push(check(
        "closed-form verdicts match spectra",
        disagreements.is_empty(),
        if disagreements.is_empty() {
            "no disagreement away from thresholds".into()
        } else {
            disagreements.join(", ")
        },
    ));

    let policy = StepPolicy {
        base: Some((k_hi - k_lo) / n as f64),
        ..StepPolicy::default()
    };
    let branch = trace(model, k_lo, k_hi, &policy)?;
    let mismatches: Vec<String> = branch
        .events
        .iter()
        .filter_map(|e| match e {
            BranchEvent::ThresholdMismatch {
                detected_k,
                predicted_k,
            } => Some(format!("detected {detected_k} vs predicted {predicted_k}")),
            _ => None,
        })
        .collect();
    out.push(check(
        "branch switches match closed-form thresholds",
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{} switches", branch.transitions().len())
        } else {
            mismatches.join(", ")
        },
    ));

    if let Ok(th) = thresholds(model) {
        if let (Some(k1), Some(k2)) = (th.khat1, th.khat2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<MMatrixSample> = (0..1000)
                .map(|_| MMatrixSample::sample(&mut rng, 0.01, 100.0, (k1, k2)))
                .collect();
            let lemma = lemma6_check(&samples, p)?;
            out.push(check(
                "scaled skeleton spectrum",
                lemma.holds(),
                format!("max real part of kept eigenvalues {:.3e}", lemma.max_re_kept),
            ));
        }
    }

    // slowly decaying samples near a loss of stability need horizons beyond
    // a desk-scale run; they are counted but not probed
    let stable: Vec<&BranchPoint> = branch.samples.iter().filter(|s| s.stable()).collect();
    let stable_points: Vec<&BranchPoint> = stable
        .iter()
        .copied()
        .filter(|s| 20.0 / -s.report.max_real_part <= PROBE_HORIZON_CAP)
        .collect();
    let skipped = stable.len() - stable_points.len();
    let stride = (stable_points.len() / 20).max(1);
    let mut probe_fail = Vec::new();
    let mut probed = 0;
    for (i, s) in stable_points.iter().step_by(stride).enumerate() {
        let opts = simulate::ProbeOptions {
            seed: seed.wrapping_add(i as u64),
            ..simulate::ProbeOptions::default()
        };
        let o = basin_probe(model, s.k, &s.equilibrium.point, 20, 0.005, &opts)?;
        probed += 1;
        if o.fraction < 1.0 {
            probe_fail.push(format!("{} at K = {} ({})", s.equilibrium.kind, s.k, o.fraction));
        }
    }
    out.push(check(
        "stable verdicts confirmed by simulation",
        probe_fail.is_empty(),
        if probe_fail.is_empty() {
            format!("{probed} stable samples, all probes converged; {skipped} with decay horizon above {PROBE_HORIZON_CAP:e} not probed")
        } else {
            probe_fail.join(", ")
        },
    ));

    // a spot check that the eigen-solver reproduces the disease-free spectrum
    let k = ks[0];
    let rep = classify_point(model, &State::new(k, 0.0, 0.0, 0.0), k)?;
    let mut got: Vec<f64> = rep.eigenvalues.iter().map(|z| z.re).collect();
    let mut want = vec![-p.r, p.alpha1 * k - p.mu1, p.alpha2 * k - p.mu2, p.alpha3 * k - p.mu3];
    got.sort_by(f64::total_cmp);
    want.sort_by(f64::total_cmp);
    let gap = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(check(
        "disease-free spectrum",
        gap <= 1e-10 * want.iter().fold(1.0f64, |m, v| m.max(v.abs())),
        format!("max gap {gap:.3e}"),
    ));
    Ok(out)
}
