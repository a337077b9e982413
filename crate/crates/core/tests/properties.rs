mod common;

use coinfect::equilibria::{boundary_point, coexistence_candidates, shat_gap_identity};
use coinfect::stability::{
    char_poly4, classify_point, closed_form_verdict, g6_window, g7_block_routh_hurwitz, g7_window, poly_rel_residual,
    StabilityWindow, WindowVerdict,
};
use coinfect::*;
use common::*;
use nalgebra::Matrix4;
use proptest::prelude::*;

fn interior_state() -> impl Strategy<Value = State> {
    (0.05f64..10.0, 0.01f64..3.0, 0.01f64..3.0, 0.01f64..3.0).prop_map(|(s, a, b, c)| State::new(s, a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn derived_identities(p in valid_params(0.5)) {
        let d = derive(&p).unwrap();
        let res = d.identity_residuals(&p);
        prop_assert!(res.a_relation <= 1e-12, "{res:?}");
        prop_assert!(res.eta_star_gap <= 1e-10, "{res:?}");
        prop_assert!(res.delta_mu_split <= 1e-10, "{res:?}");
        prop_assert!(d.delta_mu > d.sigma1 * d.delta_alpha);
        prop_assert!(d.delta_mu > d.sigma2 * d.delta_alpha);
        prop_assert!(d.sigma2 * (d.delta_alpha + p.gamma2 * p.alpha3) < d.delta_mu + p.gamma2 * p.mu3);
        prop_assert_eq!(derive(&p).unwrap(), d);
    }

    #[test]
    fn jacobian_matches_finite_differences(p in valid_params(0.5), x in interior_state()) {
        let m = Model::new(p).unwrap();
        let k = p.k;
        let j = m.jacobian(&x, k);
        let v = x.to_vector4();
        let scale = j.amax().max(1.0);
        for c in 0..4 {
            let h = 1e-6 * v[c].abs().max(1.0);
            let mut up = v;
            let mut dn = v;
            up[c] += h;
            dn[c] -= h;
            let fu = m.vector_field(&State::from_vector4(&up), k, false).unwrap().to_vector4();
            let fd = m.vector_field(&State::from_vector4(&dn), k, false).unwrap().to_vector4();
            let col = (fu - fd) / (2.0 * h);
            for r in 0..4 {
                prop_assert!((col[r] - j[(r, c)]).abs() <= 1e-6 * scale, "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn jacobian_factorizes_at_interior_points(p in valid_params(0.5), x in interior_state()) {
        let m = Model::new(p).unwrap();
        let j = m.jacobian(&x, p.k);
        let b = m.b_matrix(&x, p.k);
        // the factorization holds at equilibria; at any interior point the
        // off-diagonal parts still agree row by row
        let d = [x.s, x.i1, x.i2, x.i12];
        for r in 0..4 {
            for c in 0..4 {
                if r != c && !(r == 3 && (c == 1 || c == 2)) {
                    prop_assert!(rel(j[(r, c)], d[r] * b[(r, c)]) < 1e-12 || j[(r, c)] == d[r] * b[(r, c)]);
                }
            }
        }
    }

    #[test]
    fn polynomial_matches_determinant(p in valid_params(0.5), s in 0.01f64..20.0) {
        let m = Model::new(p).unwrap();
        let poly = coexistence_polynomial(&m, p.k);
        let scale = poly.p2.abs() * s * s + poly.p1.abs() * s + poly.p0.abs();
        let diff = (poly.eval(s) - p_det(&p, p.k, s)).abs();
        prop_assert!(diff <= 1e-10 * scale.max(1e-300), "{diff} vs scale {scale}");
    }

    #[test]
    fn shat_gap_identity_holds(p in valid_params(0.5)) {
        let m = Model::new(p).unwrap();
        if let Ok(th) = thresholds(&m) {
            if let (Some(a), Some(b)) = (th.shat1, th.shat2) {
                let lhs = a - b;
                let rhs = shat_gap_identity(&m);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(a.abs()));
            }
        }
    }

    #[test]
    fn coexistence_points_satisfy_identities(p in valid_params(0.5), kf in 0.5f64..20.0) {
        let m = Model::new(p).unwrap();
        let k = kf * m.derived.sigma3;
        for e in solve_coexistence(&m, k) {
            let x = e.point;
            prop_assert!(e.residual <= 1e-10 * x.norm4().max(1.0));
            let dp = dpds_at(&m, k, x.s);
            let b = m.b_matrix(&x, k);
            let detb = det4(&b);
            prop_assert!(rel(x.i12 * detb, dp) < 1e-8, "{} vs {}", x.i12 * detb, dp);
            let j = m.jacobian(&x, k);
            let rep = classify_point(&m, &x, k).unwrap();
            prop_assert!(j.trace() < 0.0);
            let prod = rep.eigenvalues.iter().fold(num_complex::Complex64::new(1.0, 0.0), |a, z| a * z);
            let detj = det4(&j);
            prop_assert!(rel(prod.re, detj) < 1e-6, "{prod} vs {detj}");
            if dp > 0.0 {
                prop_assert!(detj > 0.0);
            }
            prop_assert!(rep.char_poly_residual() < 1e-8);
        }
    }

    #[test]
    fn char_poly_reproduces_spectrum(v in prop::collection::vec(-5.0f64..5.0, 16)) {
        let a = Matrix4::from_iterator(v);
        let c = char_poly4(&a);
        for z in eigenvalues4(&a).unwrap() {
            prop_assert!(poly_rel_residual(&c, z) < 1e-8);
        }
    }

    #[test]
    fn gamma_zero_root_is_exact(p in valid_params(0.0)) {
        let m = Model::new(p).unwrap();
        let want = m.derived.delta_mu / m.derived.delta_alpha;
        for c in coexistence_candidates(&m, p.k).into_iter().flatten() {
            prop_assert_eq!(c.s, want);
        }
        for e in solve_coexistence(&m, p.k) {
            prop_assert_eq!(e.point.s, want);
        }
    }

    #[test]
    fn g7_block_always_hurwitz(p in valid_params(0.5), u in 0.001f64..0.999) {
        let m = Model::new(p).unwrap();
        let d = m.derived;
        prop_assume!(d.eta2star > 1.0);
        let c = d.eta2star / (d.eta2star - 1.0);
        let k = (d.sigma2 + u * (d.sigma3 - d.sigma2)) * c;
        let x = boundary_point(&m, EquilibriumType::G7, k).unwrap();
        prop_assert!(x.i2 > 0.0 && x.i12 > 0.0);
        prop_assert!(g7_block_routh_hurwitz(&m, &x, k));
    }

    #[test]
    fn g7_admissibility_endpoints(p in valid_params(0.5)) {
        let m = Model::new(p).unwrap();
        let d = m.derived;
        prop_assume!(d.eta2star > 1.0);
        let c = d.eta2star / (d.eta2star - 1.0);
        for (edge, comp) in [(d.sigma2 * c, 3usize), (d.sigma3 * c, 2usize)] {
            let x = boundary_point(&m, EquilibriumType::G7, edge).unwrap().to_vector4();
            prop_assert!(x[comp].abs() <= 1e-12 * x.amax().max(1.0), "{x:?}");
        }
    }

    #[test]
    fn boundary_verdicts_match_spectra(p in valid_params(0.2), kf in 0.05f64..4.0) {
        let m = Model::new(p).unwrap();
        let k = kf * m.derived.sigma3;
        let marks = [
            m.derived.sigma1,
            m.derived.sigma3,
        ];
        for e in boundary_equilibria(&m, k) {
            let rep = classify(&m, &e, k).unwrap();
            let verdict = closed_form_verdict(&m, e.kind, k);
            let window = match e.kind {
                EquilibriumType::G6 => g6_window(&m),
                EquilibriumType::G7 => g7_window(&m),
                _ => StabilityWindow::Empty,
            };
            let mut near = marks.iter().any(|&t| (k - t).abs() < 1e-6 * k);
            if let Some((a, b)) = window.endpoints() {
                near |= (k - a).abs() < 1e-6 * k || (k - b).abs() < 1e-6 * k;
            }
            if let Ok(th) = thresholds(&m) {
                for t in [th.k_g3_to_g6, th.k_g6_to_g5, th.khat1, th.khat2, th.k_g7_to_g5].into_iter().flatten() {
                    near |= (k - t).abs() < 1e-6 * k;
                }
            }
            if near || rep.classification == Classification::Marginal {
                continue;
            }
            match verdict {
                WindowVerdict::Stable => prop_assert!(rep.is_stable(), "{:?} at K={k}", e.kind),
                WindowVerdict::Unstable => prop_assert!(!rep.is_stable(), "{:?} at K={k}", e.kind),
                WindowVerdict::ExcludedByAssumption => {}
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn scenario_iii_unique_coexistence_and_stable_state(p in scenario_iii_params()) {
        let m = Model::new(p).unwrap();
        let th = thresholds(&m).unwrap();
        let (k1, k2) = (th.khat1.unwrap(), th.khat2.unwrap());
        let k_hi = th.k_g7_to_g5.unwrap() * 1.3;
        let marks: Vec<f64> = [Some(m.derived.sigma1), th.k_g3_to_g6, th.khat1, th.khat2, th.k_g7_to_g5]
            .into_iter()
            .flatten()
            .collect();
        for i in 1..80 {
            let k = k_hi * i as f64 / 80.0;
            if marks.iter().any(|&t| (k - t).abs() < 1e-6 * k) {
                continue;
            }
            let g8 = solve_coexistence(&m, k);
            if k1 < k && k < k2 {
                prop_assert_eq!(g8.len(), 1, "K = {} in ({}, {})", k, k1, k2);
            } else {
                prop_assert!(g8.is_empty(), "K = {} outside ({}, {})", k, k1, k2);
            }
            let stable = coinfect::branch::stable_equilibria(&m, k)
                .unwrap()
                .into_iter()
                .filter(|(_, r)| r.is_stable())
                .count();
            prop_assert_eq!(stable, 1, "K = {}", k);
        }
    }

    #[test]
    fn scenario_iii_branch_monotone(p in scenario_iii_params()) {
        let m = Model::new(p).unwrap();
        let th = thresholds(&m).unwrap();
        let (k1, k2) = (th.khat1.unwrap(), th.khat2.unwrap());
        let b = trace(&m, k1 * 0.9, k2 * 1.1, &StepPolicy { base: Some((k2 - k1) / 200.0), ..StepPolicy::default() }).unwrap();
        let g8: Vec<_> = b.samples.iter().filter(|s| s.equilibrium.kind == EquilibriumType::G8).collect();
        prop_assert!(g8.len() > 10);
        for w in g8.windows(2) {
            let (a, b) = (w[0].equilibrium.point, w[1].equilibrium.point);
            if p.gamma_bar() > 0.0 {
                prop_assert!(b.s < a.s && b.i12 < a.i12, "{a:?} -> {b:?}");
            } else {
                // without coinfection-from-single S and I12 are pinned
                prop_assert!(rel(a.s, b.s) < 1e-12 && rel(a.i12, b.i12) < 1e-10, "{a:?} -> {b:?}");
            }
        }
        let tr: Vec<_> = b
            .transitions()
            .into_iter()
            .filter(|t| t.1 == EquilibriumType::G8 || t.2 == EquilibriumType::G8)
            .collect();
        prop_assert_eq!(tr.len(), 2, "{:?}", b.transitions());
        prop_assert!(rel(tr[0].0, k1) < 1e-6 && rel(tr[1].0, k2) < 1e-6, "{:?}", tr);
    }
}

#[test]
fn disease_free_spectrum_below_sigma1() {
    let m = Model::new(fixtures::p1()).unwrap();
    for k in [0.1, 0.3, 0.49] {
        let rep = classify_point(&m, &State::new(k, 0.0, 0.0, 0.0), k).unwrap();
        assert!(rep.eigenvalues.iter().all(|z| z.re < 0.0));
        // -r and alpha_i K - mu_i
        let mut re: Vec<f64> = rep.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        let p = &m.params;
        let mut want = vec![-p.r, p.alpha1 * k - p.mu1, p.alpha2 * k - p.mu2, p.alpha3 * k - p.mu3];
        want.sort_by(f64::total_cmp);
        for (a, b) in re.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
