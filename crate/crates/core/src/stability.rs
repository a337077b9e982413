//! Spectra, Routh-Hurwitz tests, closed-form stability windows of the
//! boundary equilibria and the coexistence-point diagnostics.

use nalgebra::{Matrix3, Matrix4, Schur};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{Equilibrium, EquilibriumType};
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams, State};

const SCHUR_MAX_ITER: usize = 500;

/// Relative deadband around zero real part.
pub const MARGINAL_TOL: f64 = 1e-9;

/// Eigenvalues of a real 4x4 matrix, sorted by descending real part (ties
/// by descending imaginary part).
pub fn eigenvalues4(m: &Matrix4<f64>) -> Result<[Complex64; 4]> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    let schur = Schur::try_new(*m, f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::NoConvergence {
        iterations: SCHUR_MAX_ITER,
    })?;
    let ev = schur.complex_eigenvalues();
    let mut out = [ev[0], ev[1], ev[2], ev[3]];
    out.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(out)
}

/// Monic characteristic polynomial `det(lambda*I - A)`, coefficients in
/// descending powers, by the Faddeev-LeVerrier trace recursion.
pub fn char_poly4(a: &Matrix4<f64>) -> [f64; 5] {
    let mut c = [0.0; 5];
    c[0] = 1.0;
    let mut m = Matrix4::<f64>::zeros();
    for k in 1..=4 {
        m = a * m + Matrix4::identity() * c[k - 1];
        c[k] = -(a * m).trace() / k as f64;
    }
    c
}

/// Relative residual `|p(z)| / sum |c_i| |z|^i` of a polynomial at `z`.
pub fn poly_rel_residual(coeffs: &[f64], z: Complex64) -> f64 {
    let mut val = Complex64::new(0.0, 0.0);
    let mut scale = 0.0;
    for &c in coeffs {
        val = val * z + c;
        scale = scale * z.norm() + c.abs();
    }
    if scale == 0.0 {
        0.0
    } else {
        val.norm() / scale
    }
}

/// Hurwitz test for a monic cubic `l^3 + a1 l^2 + a2 l + a3`.
pub fn routh_hurwitz3(c: [f64; 4]) -> bool {
    let [_, a1, a2, a3] = c;
    a1 > 0.0 && a3 > 0.0 && a1 * a2 > a3
}

/// Hurwitz test for a monic quartic `l^4 + a1 l^3 + a2 l^2 + a3 l + a4`.
pub fn routh_hurwitz4(c: [f64; 5]) -> bool {
    let [_, a1, a2, a3, a4] = c;
    a1 > 0.0 && a3 > 0.0 && a4 > 0.0 && a1 * a2 > a3 && hurwitz_delta3(c) > 0.0
}

/// Third Hurwitz determinant `a1 a2 a3 - a3^2 - a1^2 a4`; vanishes when a
/// root pair is purely imaginary.
pub fn hurwitz_delta3(c: [f64; 5]) -> f64 {
    let [_, a1, a2, a3, a4] = c;
    a1 * a2 * a3 - a3 * a3 - a1 * a1 * a4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Stable,
    Unstable,
    Marginal,
}

/// Sign verdict of the closed-form stability condition for a boundary type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WindowVerdict {
    Stable,
    Unstable,
    /// The closed form is not available under the standing assumptions.
    ExcludedByAssumption,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub eigenvalues: [Complex64; 4],
    pub classification: Classification,
    /// Monic, descending powers.
    pub char_poly: [f64; 5],
    pub max_real_part: f64,
    /// Closed-form verdict for boundary types; `None` for `G8`.
    pub window_verdict: Option<WindowVerdict>,
}

impl StabilityReport {
    pub fn from_matrix(j: &Matrix4<f64>) -> Result<Self> {
        let eigenvalues = eigenvalues4(j)?;
        let max_real_part = eigenvalues[0].re;
        let scale = eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tol = MARGINAL_TOL * scale;
        let classification = if max_real_part < -tol {
            Classification::Stable
        } else if max_real_part > tol {
            Classification::Unstable
        } else {
            Classification::Marginal
        };
        Ok(Self {
            eigenvalues,
            classification,
            char_poly: char_poly4(j),
            max_real_part,
            window_verdict: None,
        })
    }

    pub fn is_stable(&self) -> bool {
        self.classification == Classification::Stable
    }

    /// Largest relative residual of the characteristic polynomial over the
    /// computed eigenvalues.
    pub fn char_poly_residual(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&z| poly_rel_residual(&self.char_poly, z))
            .fold(0.0, f64::max)
    }

    /// Eigenvalue of largest real part among those with nonzero imaginary
    /// part.
    pub fn leading_complex_pair(&self) -> Option<Complex64> {
        let scale = self.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
        self.eigenvalues
            .iter()
            .copied()
            .find(|z| z.im.abs() > 1e-12 * scale && z.im > 0.0)
    }
}

/// Eigenvalue-based report, augmented by the closed-form verdict for
/// boundary types.
pub fn classify(model: &Model, eq: &Equilibrium, k: f64) -> Result<StabilityReport> {
    let j = model.jacobian(&eq.point, k);
    let mut rep = StabilityReport::from_matrix(&j)?;
    if eq.kind != EquilibriumType::G8 {
        rep.window_verdict = Some(closed_form_verdict(model, eq.kind, k));
    }
    Ok(rep)
}

/// Report for an arbitrary state, without a closed-form verdict.
pub fn classify_point(model: &Model, x: &State, k: f64) -> Result<StabilityReport> {
    StabilityReport::from_matrix(&model.jacobian(x, k))
}

/// A stability interval in `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StabilityWindow {
    Empty,
    Interval { k_lo: f64, k_hi: f64 },
    ExcludedByAssumption,
}

impl StabilityWindow {
    pub fn contains(&self, k: f64) -> bool {
        matches!(*self, StabilityWindow::Interval { k_lo, k_hi } if k_lo < k && k < k_hi)
    }

    pub fn endpoints(&self) -> Option<(f64, f64)> {
        match *self {
            StabilityWindow::Interval { k_lo, k_hi } => Some((k_lo, k_hi)),
            _ => None,
        }
    }
}

fn s_interval_to_k(lo: f64, hi: f64, eta_star: f64) -> StabilityWindow {
    let c = eta_star / (eta_star - 1.0);
    if lo < hi {
        StabilityWindow::Interval {
            k_lo: lo * c,
            k_hi: hi * c,
        }
    } else {
        StabilityWindow::Empty
    }
}

/// Window of `K` where `G6` is admissible and stable. Along `G6`,
/// `S = K(1 - 1/eta1*)`; admissibility needs `sigma1 < S < sigma3` and the
/// transverse `I2` eigenvalue is negative iff `S < S-hat-1`.
pub fn g6_window(model: &Model) -> StabilityWindow {
    let p = &model.params;
    let d = &model.derived;
    if d.eta1star <= 1.0 {
        return StabilityWindow::Empty;
    }
    let den = d.delta_alpha + p.gamma2 * p.alpha3;
    let num = d.delta_mu + p.gamma2 * p.mu3;
    let (mut lo, mut hi) = (d.sigma1, d.sigma3);
    if den > 0.0 {
        hi = hi.min(num / den);
    } else if den < 0.0 {
        lo = lo.max(num / den);
    } else if num <= 0.0 {
        return StabilityWindow::Empty;
    }
    s_interval_to_k(lo, hi, d.eta1star)
}

/// Window of `K` where `G7` is admissible and stable. The transverse `I1`
/// eigenvalue is negative iff `(dAlpha - gamma1 alpha3) S > dMu - gamma1 mu3`.
pub fn g7_window(model: &Model) -> StabilityWindow {
    let p = &model.params;
    let d = &model.derived;
    if d.eta2star <= 1.0 {
        return StabilityWindow::Empty;
    }
    let den = d.delta_alpha - p.gamma1 * p.alpha3;
    let num = d.delta_mu - p.gamma1 * p.mu3;
    let (mut lo, hi) = (d.sigma2, d.sigma3);
    if den > 0.0 {
        lo = lo.max(num / den);
    } else if den < 0.0 {
        return StabilityWindow::ExcludedByAssumption;
    } else if num >= 0.0 {
        return StabilityWindow::Empty;
    }
    s_interval_to_k(lo, hi, d.eta2star)
}

/// Closed-form stability of a boundary type at `k`, from the block
/// structure of its Jacobian.
pub fn closed_form_verdict(model: &Model, kind: EquilibriumType, k: f64) -> WindowVerdict {
    let p = &model.params;
    let d = &model.derived;
    let yes = |b: bool| {
        if b {
            WindowVerdict::Stable
        } else {
            WindowVerdict::Unstable
        }
    };
    match kind {
        EquilibriumType::G1 => WindowVerdict::Unstable,
        EquilibriumType::G2 => yes(k < d.sigma1),
        EquilibriumType::G3 => {
            // I12 direction: alpha3 sigma1 + eta1 I1 - mu3 < 0
            let i1 = p.r * (k - d.sigma1) / (k * p.alpha1);
            yes(k > d.sigma1 && p.eta1 * i1 < p.alpha3 * (d.sigma3 - d.sigma1))
        }
        EquilibriumType::G4 => {
            if d.gammastar < 1.0 {
                WindowVerdict::Unstable
            } else {
                WindowVerdict::ExcludedByAssumption
            }
        }
        EquilibriumType::G5 => {
            let i12 = p.r * (k - d.sigma3) / (k * p.alpha3);
            yes(k > d.sigma3
                && p.eta1 * i12 > p.alpha1 * (d.sigma3 - d.sigma1)
                && p.eta2 * i12 > p.alpha2 * (d.sigma3 - d.sigma2))
        }
        EquilibriumType::G6 => match g6_window(model) {
            StabilityWindow::ExcludedByAssumption => WindowVerdict::ExcludedByAssumption,
            w => yes(w.contains(k)),
        },
        EquilibriumType::G7 => match g7_window(model) {
            StabilityWindow::ExcludedByAssumption => WindowVerdict::ExcludedByAssumption,
            w => yes(w.contains(k)),
        },
        EquilibriumType::G8 => WindowVerdict::ExcludedByAssumption,
    }
}

/// The `(S, I2, I12)` block of the Jacobian at `G7`.
pub fn g7_block(model: &Model, x: &State, k: f64) -> Matrix3<f64> {
    let j = model.jacobian(x, k);
    let idx = [0, 2, 3];
    Matrix3::from_fn(|a, b| j[(idx[a], idx[b])])
}

/// Hurwitz verdict on the `G7` block; the block is stable wherever `G7` is
/// admissible.
pub fn g7_block_routh_hurwitz(model: &Model, x: &State, k: f64) -> bool {
    let m = g7_block(model, x, k);
    let a1 = -m.trace();
    let a2 = (0..3)
        .map(|i| {
            let (u, v) = match i {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            m[(u, u)] * m[(v, v)] - m[(u, v)] * m[(v, u)]
        })
        .sum::<f64>();
    let a3 = -m.determinant();
    routh_hurwitz3([1.0, a1, a2, a3])
}

fn minor3(b: &Matrix4<f64>, skip: usize) -> f64 {
    let idx: Vec<usize> = (0..4).filter(|&i| i != skip).collect();
    Matrix3::from_fn(|a, c| b[(idx[a], idx[c])]).determinant()
}

/// The `lambda^1` coefficient of the characteristic polynomial at an
/// interior point, divided by `S I1 I2 I12`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lambda1Coefficient {
    pub from_char_poly: f64,
    /// Sum of principal 3x3 minors of `B` weighted by `1/D_k`.
    pub from_minors: f64,
    /// The same minor sum with the `-r/K` entry of `B` dropped, i.e. the
    /// large-`K` form of the coefficient. Vanishes identically at `gamma = 0`.
    pub large_k_form: f64,
}

impl Lambda1Coefficient {
    pub fn value(&self) -> f64 {
        self.from_minors
    }

    pub fn rel_gap(&self) -> f64 {
        crate::model::rel_diff(self.from_char_poly, self.from_minors)
    }
}

pub fn lambda1_coefficient(model: &Model, x: &State, k: f64) -> Result<Lambda1Coefficient> {
    let dvec = [x.s, x.i1, x.i2, x.i12];
    if dvec.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "point",
            reason: "lambda-1 coefficient needs an interior point".into(),
        });
    }
    let prod: f64 = dvec.iter().product();
    let cp = char_poly4(&model.jacobian(x, k));
    let b = model.b_matrix(x, k);
    let from_minors = -(0..4).map(|i| minor3(&b, i) / dvec[i]).sum::<f64>();
    let mut b_inf = b;
    b_inf[(0, 0)] = 0.0;
    let large_k_form = -(0..4).map(|i| minor3(&b_inf, i) / dvec[i]).sum::<f64>();
    Ok(Lambda1Coefficient {
        from_char_poly: cp[3] / prod,
        from_minors,
        large_k_form,
    })
}

/// A diagonal scaling drawn from the set bounded by `q` and `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MMatrixSample {
    pub y: [f64; 4],
    pub k: f64,
}

impl MMatrixSample {
    pub fn in_set(&self, q: f64, big_q: f64) -> bool {
        let y = self.y;
        y.iter().all(|&v| (0.0..=big_q).contains(&v)) && y[0] >= q && y[3] >= q && y[1] + y[2] >= q
    }

    /// Draw uniformly, rejecting `Y2 + Y3 < q`.
    pub fn sample<R: Rng>(rng: &mut R, q: f64, big_q: f64, k_range: (f64, f64)) -> Self {
        let k = rng.random_range(k_range.0..=k_range.1);
        loop {
            let y = [
                rng.random_range(q..=big_q),
                rng.random_range(0.0..=big_q),
                rng.random_range(0.0..=big_q),
                rng.random_range(q..=big_q),
            ];
            if y[1] + y[2] >= q {
                return Self { y, k };
            }
        }
    }
}

/// The `gamma`-free skeleton of `B` at carrying capacity `k`.
pub fn skeleton_matrix(p: &ModelParams, k: f64) -> Matrix4<f64> {
    Matrix4::new(
        -p.r / k,
        -p.alpha1,
        -p.alpha2,
        -p.alpha3,
        p.alpha1,
        0.0,
        0.0,
        -p.eta1,
        p.alpha2,
        0.0,
        0.0,
        -p.eta2,
        p.alpha3,
        p.eta1,
        p.eta2,
        0.0,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lemma6Outcome {
    pub samples: usize,
    /// Max real part over the three eigenvalues kept after discarding the
    /// one of smallest modulus.
    pub max_re_kept: f64,
    /// Min `|Re|` over the kept eigenvalues.
    pub min_abs_re_kept: f64,
    /// Max real part over all four eigenvalues.
    pub max_re_all: f64,
}

impl Lemma6Outcome {
    pub fn holds(&self) -> bool {
        self.max_re_kept < 0.0
    }
}

fn kept_three(ev: [Complex64; 4]) -> [Complex64; 3] {
    let drop = (0..4)
        .min_by(|&a, &b| ev[a].norm().total_cmp(&ev[b].norm()))
        .unwrap_or(3);
    let mut out = [Complex64::default(); 3];
    let mut n = 0;
    for (i, z) in ev.into_iter().enumerate() {
        if i != drop {
            out[n] = z;
            n += 1;
        }
    }
    out
}

/// Spectrum of `diag(Y) M` over the samples.
pub fn lemma6_check(samples: &[MMatrixSample], p: &ModelParams) -> Result<Lemma6Outcome> {
    let per: Vec<([Complex64; 3], f64)> = samples
        .par_iter()
        .map(|smp| {
            let m = skeleton_matrix(p, smp.k);
            let scaled = Matrix4::from_fn(|i, j| smp.y[i] * m[(i, j)]);
            let ev = eigenvalues4(&scaled)?;
            Ok((kept_three(ev), ev[0].re))
        })
        .collect::<Result<_>>()?;
    let mut out = Lemma6Outcome {
        samples: samples.len(),
        max_re_kept: f64::NEG_INFINITY,
        min_abs_re_kept: f64::INFINITY,
        max_re_all: f64::NEG_INFINITY,
    };
    for (kept, top) in per {
        for z in kept {
            out.max_re_kept = out.max_re_kept.max(z.re);
            out.min_abs_re_kept = out.min_abs_re_kept.min(z.re.abs());
        }
        out.max_re_all = out.max_re_all.max(top);
    }
    Ok(out)
}
