//! Time integration of the full system with an adaptive Dormand-Prince
//! 5(4) pair, plus the convergence and oscillation diagnostics built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::Equilibrium;
use crate::error::{Error, Result};
use crate::model::{Model, State};
use crate::stability::classify_point;

type Y = [f64; 5];

const STAB_CAP: f64 = 2.0;

// the field is autonomous so stage times only serve the tableau check
#[cfg(test)]
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Dense-output weights.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Where the trajectory is recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SampleTimes {
    /// Every accepted step.
    Steps,
    /// `n + 1` equally spaced times on `[0, t_end]`.
    Uniform(usize),
    /// Explicit increasing times within `[0, t_end]`.
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub include_r: bool,
    pub samples: SampleTimes,
    pub max_steps: u64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    /// Upper bound on `h * rho`, with `rho` the spectral-radius estimate
    /// from the last two stages. Keeps the step inside the stability region
    /// instead of letting the error controller hover at its edge.
    pub stability_cap: Option<f64>,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            include_r: false,
            samples: SampleTimes::Uniform(1000),
            max_steps: 1_000_000_000,
            h0: None,
            stability_cap: Some(STAB_CAP),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    /// Largest scaled error norm of an accepted step.
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub step_stats: StepStats,
}

impl Trajectory {
    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    /// Indices of samples with `t >= (1 - frac) * t_end`.
    fn tail(&self, frac: f64) -> std::ops::Range<usize> {
        let t_end = self.times.last().copied().unwrap_or(0.0);
        let start = self.times.partition_point(|&t| t < (1.0 - frac) * t_end);
        start..self.times.len()
    }

    /// Largest max-norm distance to `target` over the final `frac` of the
    /// horizon, relative to the size of `target`.
    pub fn tail_distance(&self, target: &State, frac: f64) -> f64 {
        let scale = target.norm4().max(f64::MIN_POSITIVE);
        self.tail(frac)
            .map(|i| (self.states[i].to_vector4() - target.to_vector4()).amax() / scale)
            .fold(0.0, f64::max)
    }

    /// Converged when the relative distance stays below `1e-6` over the
    /// final 10% of the run.
    pub fn converged_to(&self, target: &State) -> bool {
        !self.times.is_empty() && self.tail_distance(target, 0.1) < 1e-6
    }
}

fn field(model: &Model, k: f64, include_r: bool, y: &Y) -> Result<Y> {
    let f = model.vector_field(&State::from_array5(*y), k, include_r)?;
    Ok(f.to_array5())
}

fn err_norm(y: &Y, yn: &Y, e: &Y, rtol: f64, atol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..5 {
        let sc = atol + rtol * y[i].abs().max(yn[i].abs());
        acc += (e[i] / sc).powi(2);
    }
    (acc / 5.0).sqrt()
}

fn initial_step(model: &Model, k: f64, o: &IntegratorOptions, y: &Y, f0: &Y, t_end: f64) -> Result<f64> {
    let sc: Y = std::array::from_fn(|i| o.abs_tol + o.rel_tol * y[i].abs());
    let norm = |v: &Y| (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / 5.0).sqrt();
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(t_end);
    let y1: Y = std::array::from_fn(|i| y[i] + h0 * f0[i]);
    let f1 = field(model, k, o.include_r, &y1)?;
    let df: Y = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = norm(&df) / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(t_end))
}

fn clip(y: &mut Y) {
    for v in y.iter_mut() {
        if *v < 0.0 && *v >= -1e-12 {
            *v = 0.0;
        }
    }
}

/// Integrate from `initial` at `t = 0` to `t_end` at carrying capacity `k`.
pub fn integrate(model: &Model, k: f64, initial: &State, t_end: f64, opts: &IntegratorOptions) -> Result<Trajectory> {
    let y0 = initial.to_array5();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    if y0.iter().any(|&v| v < 0.0) || !(initial.s > 0.0) {
        return Err(Error::InvalidParameter {
            name: "initial",
            reason: "components must be nonnegative with S > 0".into(),
        });
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "t_end",
            reason: format!("must be positive and finite, got {t_end}"),
        });
    }
    if !(opts.rel_tol > 0.0 && opts.abs_tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tolerance",
            reason: "rel_tol and abs_tol must be positive".into(),
        });
    }
    let grid: Option<Vec<f64>> = match &opts.samples {
        SampleTimes::Steps => None,
        SampleTimes::Uniform(n) => {
            let n = (*n).max(1);
            Some((0..=n).map(|i| t_end * i as f64 / n as f64).collect())
        }
        SampleTimes::Given(v) => Some(v.clone()),
    };
    let mut times = vec![0.0];
    let mut states = vec![State::from_array5(y0)];
    let mut next_sample = 1usize;

    let (rtol, atol) = (opts.rel_tol, opts.abs_tol);
    let mut y = y0;
    let mut t = 0.0;
    let mut k1 = field(model, k, opts.include_r, &y)?;
    let mut h = match opts.h0 {
        Some(h) => h.min(t_end),
        None => initial_step(model, k, opts, &y, &k1, t_end)?,
    };
    let mut stats = StepStats::default();
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let beta = 0.04;
    let expo = 0.2 - 0.75 * beta;
    let mut ks = [[0.0; 5]; 7];

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepUnderflow { t });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }
        ks[0] = k1;
        let mut y6 = y;
        for s in 1..7 {
            let ys: Y = std::array::from_fn(|i| y[i] + h * (0..s).map(|j| A[s][j] * ks[j][i]).sum::<f64>());
            ks[s] = field(model, k, opts.include_r, &ys)?;
            if s == 5 {
                y6 = ys;
            }
        }
        let yn: Y = std::array::from_fn(|i| y[i] + h * (0..6).map(|j| A[6][j] * ks[j][i]).sum::<f64>());
        let e: Y = std::array::from_fn(|i| h * (0..7).map(|j| E[j] * ks[j][i]).sum::<f64>());
        let err = err_norm(&y, &yn, &e, rtol, atol);
        if !err.is_finite() {
            return Err(Error::NonFinite("integrator error estimate"));
        }
        let fac11 = err.powf(expo);
        if err <= 1.0 {
            let mut fac = fac11 / err_old.powf(beta);
            fac = (fac / 0.9).clamp(0.1, 5.0);
            let mut hnew = h / fac;
            if last_rejected {
                hnew = hnew.min(h);
            }
            if let Some(cap) = opts.stability_cap {
                // both stages sit at t + h, so their slope difference over
                // their state difference estimates the spectral radius
                let num: f64 = (0..5).map(|i| (ks[6][i] - ks[5][i]).powi(2)).sum();
                let den: f64 = (0..5).map(|i| (yn[i] - y6[i]).powi(2)).sum();
                if den > 0.0 && num > 0.0 {
                    hnew = hnew.min(cap / (num / den).sqrt()).max(h.min(hnew) * 0.2);
                }
            }
            let t_new = if last { t_end } else { t + h };
            if let Some(g) = &grid {
                if next_sample < g.len() && g[next_sample] <= t_new {
                    let r2: Y = std::array::from_fn(|i| yn[i] - y[i]);
                    let r3: Y = std::array::from_fn(|i| h * ks[0][i] - r2[i]);
                    let r4: Y = std::array::from_fn(|i| r2[i] - h * ks[6][i] - r3[i]);
                    let r5: Y = std::array::from_fn(|i| h * (0..7).map(|j| D[j] * ks[j][i]).sum::<f64>());
                    while next_sample < g.len() && g[next_sample] <= t_new {
                        let ts = g[next_sample];
                        let th = (ts - t) / h;
                        let th1 = 1.0 - th;
                        let mut ys: Y =
                            std::array::from_fn(|i| y[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))));
                        if ts >= t_end {
                            ys = yn;
                        }
                        clip(&mut ys);
                        times.push(ts);
                        states.push(State::from_array5(ys));
                        next_sample += 1;
                    }
                }
            }
            err_old = err.max(1e-4);
            stats.accepted += 1;
            stats.max_error = stats.max_error.max(err);
            y = yn;
            clip(&mut y);
            k1 = ks[6];
            t = t_new;
            if grid.is_none() {
                times.push(t);
                states.push(State::from_array5(y));
            }
            h = hnew;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h /= (fac11 / 0.9).min(10.0);
            last_rejected = true;
        }
    }
    Ok(Trajectory {
        times,
        states,
        step_stats: stats,
    })
}

/// Limit of the recovered class at an equilibrium,
/// `(rho1 I1 + rho2 I2 + rho3 I12) / mu4'`.
pub fn r_limit(model: &Model, eq: &Equilibrium) -> f64 {
    let p = &model.params;
    let x = &eq.point;
    (p.rho1 * x.i1 + p.rho2 * x.i2 + p.rho3 * x.i12) / p.mu4p
}

/// Peak-to-peak amplitude of `S` over the last two 20% windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillationSummary {
    pub amplitude_last: f64,
    pub amplitude_prev: f64,
    pub sustained: bool,
}

/// Extreme of a sampled signal, refined by a parabola through the
/// neighbouring samples on a uniform grid.
fn refined_extreme(v: &[f64], max: bool) -> f64 {
    let pick = |a: f64, b: f64| if max { a > b } else { a < b };
    let mut idx = 0;
    for i in 1..v.len() {
        if pick(v[i], v[idx]) {
            idx = i;
        }
    }
    if idx == 0 || idx + 1 >= v.len() {
        return v[idx];
    }
    let (a, b, c) = (v[idx - 1], v[idx], v[idx + 1]);
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        return b;
    }
    let off = 0.5 * (a - c) / den;
    b - 0.25 * (a - c) * off
}

/// Sustained oscillation: the latest window's amplitude exceeds
/// `100 * abs_tol` and is within 10% of the preceding window's.
pub fn oscillation_summary(traj: &Trajectory, abs_tol: f64) -> OscillationSummary {
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let window = |lo: f64, hi: f64| -> f64 {
        let v: Vec<f64> = traj
            .times
            .iter()
            .zip(&traj.states)
            .filter(|(t, _)| **t >= lo * t_end && **t <= hi * t_end)
            .map(|(_, s)| s.s)
            .collect();
        if v.is_empty() {
            0.0
        } else {
            refined_extreme(&v, true) - refined_extreme(&v, false)
        }
    };
    let amplitude_last = window(0.8, 1.0);
    let amplitude_prev = window(0.6, 0.8);
    let sustained = amplitude_last > 100.0 * abs_tol && (amplitude_last - amplitude_prev).abs() <= 0.1 * amplitude_prev;
    OscillationSummary {
        amplitude_last,
        amplitude_prev,
        sustained,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOptions {
    /// Horizon; when `None`, `20 / |max Re lambda|` clamped to
    /// `[100, 1e7]`.
    pub t_end: Option<f64>,
    pub integrator: IntegratorOptions,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            t_end: None,
            integrator: IntegratorOptions {
                samples: SampleTimes::Uniform(200),
                ..IntegratorOptions::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinOutcome {
    pub fraction: f64,
    pub converged: usize,
    pub samples: usize,
    pub t_end: f64,
    /// Largest final relative distance among the samples.
    pub worst_distance: f64,
}

/// Horizon long enough for the slowest linear mode to decay by `e^-20`.
pub fn default_horizon(model: &Model, point: &State, k: f64) -> f64 {
    match classify_point(model, point, k) {
        Ok(rep) if rep.max_real_part < 0.0 => (20.0 / -rep.max_real_part).clamp(100.0, 1e7),
        _ => 1e3,
    }
}

/// Perturb `point` component-wise within relative `radius` and report the
/// fraction of runs that return to it. Zero components receive a
/// nonnegative kick scaled by the largest component.
pub fn basin_probe(
    model: &Model,
    k: f64,
    point: &State,
    n_samples: usize,
    radius: f64,
    opts: &ProbeOptions,
) -> Result<BasinOutcome> {
    let t_end = opts.t_end.unwrap_or_else(|| default_horizon(model, point, k));
    let scale = point.norm4();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<State> = (0..n_samples)
        .map(|_| {
            let v = [point.s, point.i1, point.i2, point.i12].map(|c| {
                if c > 0.0 {
                    c * (1.0 + radius * rng.random_range(-1.0..=1.0))
                } else {
                    radius * scale * rng.random_range(0.0..=1.0)
                }
            });
            State::new(v[0], v[1], v[2], v[3]).with_r(point.r)
        })
        .collect();
    let dists: Vec<f64> = starts
        .par_iter()
        .map(|x0| {
            let tr = integrate(model, k, x0, t_end, &opts.integrator)?;
            Ok(tr.tail_distance(point, 0.1))
        })
        .collect::<Result<_>>()?;
    let converged = dists.iter().filter(|&&d| d < 1e-6).count();
    Ok(BasinOutcome {
        fraction: if n_samples == 0 {
            1.0
        } else {
            converged as f64 / n_samples as f64
        },
        converged,
        samples: n_samples,
        t_end,
        worst_distance: dists.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::{boundary_equilibria, solve_coexistence, EquilibriumType};
    use crate::fixtures;

    fn p1() -> Model {
        Model::new(fixtures::p1()).unwrap()
    }

    #[test]
    fn tableau_consistency() {
        for (s, row) in A.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!((sum - C[s]).abs() < 1e-15, "row {s}");
        }
        assert!(E.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn exponential_decay_accuracy() {
        // S-only logistic growth has the closed form K / (1 + (K/S0 - 1) e^{-rt})
        let m = p1();
        let x0 = State::new(0.1, 0.0, 0.0, 0.0);
        let o = IntegratorOptions {
            rel_tol: 1e-10,
            ..IntegratorOptions::default()
        };
        let tr = integrate(&m, 3.0, &x0, 10.0, &o).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let exact = 3.0 / (1.0 + (30.0 - 1.0) * (-t).exp());
            assert!((s.s - exact).abs() < 1e-8, "t = {t}");
        }
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*tr.times.last().unwrap(), 10.0);
    }

    #[test]
    fn fixed_point_stays_put() {
        let m = p1();
        let g8 = solve_coexistence(&m, 7.0)[0];
        let o = IntegratorOptions {
            rel_tol: 1e-12,
            abs_tol: 1e-11,
            ..IntegratorOptions::default()
        };
        let tr = integrate(&m, 7.0, &g8.point, 1e3, &o).unwrap();
        let drift = tr
            .states
            .iter()
            .map(|s| (s.to_vector4() - g8.point.to_vector4()).amax())
            .fold(0.0, f64::max);
        assert!(drift < 10.0 * o.abs_tol, "{drift}");
    }

    #[test]
    fn perturbed_g8_returns() {
        let m = p1();
        let g8 = solve_coexistence(&m, 7.0)[0].point;
        let x0 = State::new(g8.s * 1.01, g8.i1 * 1.01, g8.i2 * 1.01, g8.i12 * 1.01);
        let tr = integrate(&m, 7.0, &x0, 1e4, &IntegratorOptions::default()).unwrap();
        assert!(tr.converged_to(&g8));
    }

    #[test]
    fn recovered_class_reaches_limit() {
        let m = p1();
        let g8 = solve_coexistence(&m, 7.0)[0];
        let rhat = r_limit(&m, &g8);
        let x = g8.point;
        assert!((rhat - 0.1 * (x.i1 + x.i2 + x.i12)).abs() < 1e-15);
        let o = IntegratorOptions {
            include_r: true,
            ..IntegratorOptions::default()
        };
        let x0 = State::new(x.s * 1.01, x.i1, x.i2 * 0.99, x.i12).with_r(3.0);
        let tr = integrate(&m, 7.0, &x0, 1e4, &o).unwrap();
        assert!((tr.last().unwrap().r - rhat).abs() < 1e-6);
    }

    #[test]
    fn no_recovery_means_zero_limit() {
        let mut p = fixtures::p1();
        p.rho1 = 0.0;
        p.rho2 = 0.0;
        p.rho3 = 0.0;
        let m = Model::new(p).unwrap();
        let g8 = solve_coexistence(&m, 7.0)[0];
        assert_eq!(r_limit(&m, &g8), 0.0);
    }

    #[test]
    fn step_mode_records_every_step() {
        let m = p1();
        let o = IntegratorOptions {
            samples: SampleTimes::Steps,
            ..IntegratorOptions::default()
        };
        let tr = integrate(&m, 7.0, &State::new(1.0, 0.1, 0.1, 0.1), 50.0, &o).unwrap();
        assert_eq!(tr.times.len() as u64, tr.step_stats.accepted + 1);
        assert_eq!(*tr.times.last().unwrap(), 50.0);
        assert!(tr.states.iter().all(|s| s.to_array5().iter().all(|&v| v >= -1e-9)));
    }

    #[test]
    fn fixture_runs_stay_nonnegative() {
        let o = IntegratorOptions {
            samples: SampleTimes::Steps,
            include_r: true,
            ..IntegratorOptions::default()
        };
        for (p, k) in [
            (fixtures::p1(), 7.0f64),
            (fixtures::p1(), 13.0),
            (fixtures::p2(), 30.0),
            (fixtures::p3(), 2e4),
        ] {
            let m = Model::new(p).unwrap();
            // near-extinct infected classes probe the boundary
            let x0 = State::new(0.9 * k.min(5.0), 1e-8, 1e-8, 1e-10);
            let tr = integrate(&m, k, &x0, 2e3, &o).unwrap();
            let low = tr
                .states
                .iter()
                .flat_map(|s| s.to_array5())
                .fold(f64::INFINITY, f64::min);
            assert!(low >= -1e-9, "K = {k}: {low}");
        }
    }

    #[test]
    fn invalid_inputs() {
        let m = p1();
        let o = IntegratorOptions::default();
        assert!(integrate(&m, 7.0, &State::new(-1.0, 0.0, 0.0, 0.0), 1.0, &o).is_err());
        assert!(integrate(&m, 7.0, &State::new(1.0, 0.0, 0.0, 0.0), 0.0, &o).is_err());
        assert_eq!(
            integrate(&m, 7.0, &State::new(f64::NAN, 0.0, 0.0, 0.0), 1.0, &o),
            Err(Error::NonFinite("initial state"))
        );
    }

    #[test]
    fn basin_probe_stable_g2() {
        let m = p1();
        let g2 = boundary_equilibria(&m, 0.4)
            .into_iter()
            .find(|e| e.kind == EquilibriumType::G2)
            .unwrap();
        let out = basin_probe(&m, 0.4, &g2.point, 50, 0.01, &ProbeOptions::default()).unwrap();
        assert_eq!(out.fraction, 1.0);
        let zero = basin_probe(&m, 0.4, &g2.point, 5, 0.0, &ProbeOptions::default()).unwrap();
        assert_eq!(zero.fraction, 1.0);
    }

    #[test]
    fn basin_probe_unstable_g3_escapes_toward_g6() {
        let m = p1();
        let k = 2.0;
        let g3 = boundary_equilibria(&m, k)
            .into_iter()
            .find(|e| e.kind == EquilibriumType::G3)
            .unwrap();
        let opts = ProbeOptions {
            t_end: Some(2e3),
            ..ProbeOptions::default()
        };
        let out = basin_probe(&m, k, &g3.point, 10, 0.01, &opts).unwrap();
        assert!(out.fraction < 1.0);
        let g6 = boundary_equilibria(&m, k)
            .into_iter()
            .find(|e| e.kind == EquilibriumType::G6)
            .unwrap();
        let x0 = State::new(g3.point.s, g3.point.i1, 0.0, 1e-3);
        let tr = integrate(&m, k, &x0, 2e3, &IntegratorOptions::default()).unwrap();
        assert!(tr.converged_to(&g6.point));
    }

    #[test]
    fn tolerance_halving_reduces_error() {
        let m = p1();
        let x0 = State::new(2.0, 0.2, 0.05, 0.3);
        let run = |tol: f64| {
            let o = IntegratorOptions {
                rel_tol: tol,
                abs_tol: tol * 1e-3,
                samples: SampleTimes::Uniform(1),
                ..IntegratorOptions::default()
            };
            *integrate(&m, 7.0, &x0, 40.0, &o).unwrap().last().unwrap()
        };
        let reference = run(1e-13);
        let err = |tol: f64| (run(tol).to_vector4() - reference.to_vector4()).amax();
        let tols = [1e-6, 5e-7, 2.5e-7, 1.25e-7, 6.25e-8];
        let errs: Vec<f64> = tols.iter().map(|&t| err(t)).collect();
        let mean_ratio = (errs[0] / errs[4]).powf(0.25);
        assert!((1.0..=4.0).contains(&mean_ratio), "{errs:?} {mean_ratio}");
    }

    #[test]
    fn oscillation_rule_on_synthetic_signal() {
        let times: Vec<f64> = (0..=5000).map(|i| i as f64).collect();
        let states: Vec<State> = times
            .iter()
            .map(|t| State::new(1.0 + 0.05 * (t * 0.05).sin(), 0.0, 0.0, 0.0))
            .collect();
        let tr = Trajectory {
            times: times.clone(),
            states,
            step_stats: StepStats::default(),
        };
        let o = oscillation_summary(&tr, 1e-12);
        assert!(o.sustained, "{o:?}");
        assert!((o.amplitude_last - 0.1).abs() < 1e-4);
        let decaying: Vec<State> = times
            .iter()
            .map(|t| State::new(1.0 + 0.05 * (-t / 500.0).exp() * (t * 0.05).sin(), 0.0, 0.0, 0.0))
            .collect();
        let tr = Trajectory {
            times,
            states: decaying,
            step_stats: StepStats::default(),
        };
        assert!(!oscillation_summary(&tr, 1e-12).sustained);
    }
}
