//! Modulation decomposition `u = Q(· − ρ) + η` with `∫Q′η = 0`, mass-matched
//! speeds and tracking of `(ρ, ρ̇)` along trajectories.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::solitary::{petviashvili_solve, solve_wave, PetviashviliOptions, SolitaryWave, WaveParams};
use crate::spectral::{Field, Grid, Norm};

pub const MAX_NEWTON_STEPS: usize = 50;

/// Speed range over which [`match_speed`] searches the branch.
pub const SPEED_RANGE: (f64, f64) = (0.5, 2.0);

/// `‖η‖_{L²}` below which a record counts as an exact solitary wave.
pub const ETA_FLOOR: f64 = 1e-10;

// Relative tolerance under which two coarse-scan peaks count as a tie.
const TIE_TOLERANCE: f64 = 1e-9;

/// `F(s) = ∫ w(D)Q′ · u(· + s)` and its derivative, in Fourier space.
struct Projection<'a> {
    grid: &'a Grid,
    // conj(ŵQ̂′)·û, Nyquist removed
    weights: Vec<Complex64>,
    scale: f64,
}

impl<'a> Projection<'a> {
    fn new(u: &'a Field, q: &Field, weight: impl Fn(f64) -> f64) -> Projection<'a> {
        let grid = u.grid().as_ref();
        let nyq = grid.nyquist_index();
        let weights = q
            .spectrum()
            .iter()
            .zip(u.spectrum())
            .zip(grid.wavenumbers())
            .enumerate()
            .map(|(k, ((&qk, &uk), &xi))| {
                if k == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    (Complex64::new(0.0, xi) * qk).conj() * uk * weight(xi)
                }
            })
            .collect();
        let n = grid.n() as f64;
        Projection {
            grid,
            weights,
            scale: grid.length() / (n * n),
        }
    }

    fn eval(&self, s: f64) -> (f64, f64) {
        let (mut f, mut df) = (0.0, 0.0);
        for (w, &xi) in self.weights.iter().zip(self.grid.wavenumbers()) {
            let z = w * Complex64::from_polar(1.0, xi * s);
            f += z.re;
            df -= xi * z.im;
        }
        (self.scale * f, self.scale * df)
    }
}

/// Circular cross-correlation `C(j·dx) = ∫u(x)Q(x − j·dx)dx`.
fn cross_correlation(u: &Field, q: &Field) -> Vec<f64> {
    let grid = u.grid();
    let spec: Vec<Complex64> = u
        .spectrum()
        .iter()
        .zip(q.spectrum())
        .map(|(a, b)| a * b.conj())
        .collect();
    let dx = grid.dx();
    grid.inverse(&spec).into_iter().map(|v| v * dx).collect()
}

// Grid seed for the translation: argmax of the correlation, with a tie check.
fn coarse_seed(u: &Field, q: &Field) -> Result<f64> {
    let grid = u.grid();
    let n = grid.n();
    let corr = cross_correlation(u, q);
    let scale = corr.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let shift = |j: usize| grid.wrap(j as f64 * grid.dx());
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::AmbiguousFit {
            first: shift(0),
            second: shift(1),
        });
    }
    let mut peaks: Vec<(usize, f64)> = (0..n)
        .filter(|&j| {
            let c = corr[j];
            c >= corr[(j + n - 1) % n] && c > corr[(j + 1) % n]
        })
        .map(|j| (j, corr[j]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    let Some(&(best, top)) = peaks.first() else {
        return Err(Error::AmbiguousFit {
            first: shift(0),
            second: shift(1),
        });
    };
    if let Some(&(other, second)) = peaks.get(1) {
        if top - second <= TIE_TOLERANCE * scale {
            return Err(Error::AmbiguousFit {
                first: shift(best),
                second: shift(other),
            });
        }
    }
    Ok(shift(best))
}

// Safeguarded Newton for the root of F near `seed`, bracketed within one cell.
fn refine(p: &Projection<'_>, seed: f64, tol: f64) -> Result<f64> {
    let h = p.grid.dx();
    let (mut lo, mut hi) = (seed - h, seed + h);
    let (flo, fhi) = (p.eval(lo).0, p.eval(hi).0);
    let bracketed = flo < 0.0 && fhi > 0.0;
    let mut s = seed;
    // iterate to stagnation: the orthogonality defect must reach round-off,
    // well below the acceptance tolerance
    let mut last = f64::INFINITY;
    let mut best = (s, f64::INFINITY);
    for step in 0..MAX_NEWTON_STEPS {
        let (f, df) = p.eval(s);
        if f.abs() < best.1 {
            best = (s, f.abs());
        }
        if f == 0.0 || (f.abs() <= tol && f.abs() >= 0.5 * last) {
            return Ok(best.0);
        }
        last = f.abs();
        if bracketed {
            if f < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
        }
        let mut next = if df > 0.0 { s - f / df } else { f64::NAN };
        if bracketed && !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if !next.is_finite() {
            return Err(Error::NoConvergence {
                steps: step + 1,
                residual: f.abs(),
            });
        }
        if next == s {
            return if f.abs() <= tol {
                Ok(best.0)
            } else {
                Err(Error::NoConvergence {
                    steps: step + 1,
                    residual: f.abs(),
                })
            };
        }
        s = next;
    }
    let f = p.eval(s).0;
    if f.abs() <= tol {
        Ok(s)
    } else {
        Err(Error::NoConvergence {
            steps: MAX_NEWTON_STEPS,
            residual: f.abs(),
        })
    }
}

fn check_same_grid(u: &Field, q: &Field) -> Result<()> {
    if u.grid().same_as(q.grid()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument("field and profile live on different grids".into()))
    }
}

/// Translation `ρ` (wrapped into `[−L/2, L/2)`) with `∫Q′(x)u(x + ρ)dx = 0`,
/// taken at the best-correlated grid shift.
pub fn fit_translation(u: &Field, q: &Field) -> Result<f64> {
    check_same_grid(u, q)?;
    let seed = coarse_seed(u, q)?;
    let dq = q.derivative_unchecked(1).norm(Norm::L2)?;
    let tol = 1e-10 * dq * u.norm(Norm::L2)?;
    let p = Projection::new(u, q, |_| 1.0);
    let rho = refine(&p, seed, tol)?;
    Ok(u.grid().wrap(rho))
}

/// Minimizer of `‖u − Q(· − s)‖_{H¹}` near the L² fit.
fn h1_translation(u: &Field, q: &Field, seed: f64) -> Result<f64> {
    let p = Projection::new(u, q, |xi| 1.0 + xi * xi);
    let dq = q.derivative_unchecked(1).norm(Norm::H1)?;
    refine(&p, seed, 1e-10 * dq * u.norm(Norm::H1)?)
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub rho: f64,
    /// `η = u(· + ρ) − Q`.
    pub eta: Field,
    pub eta_l2: f64,
    pub eta_h1: f64,
    /// `|∫Q′η|`.
    pub ortho_defect: f64,
    /// `10⁻⁸‖Q′‖‖η‖ + 10⁻¹²`.
    pub ortho_threshold: f64,
    /// `‖η‖_{H¹} / inf_r ‖u − Q(· − r)‖_{H¹}` (1 when both vanish).
    pub h1_ratio: f64,
}

pub fn decompose(u: &Field, wave: &SolitaryWave) -> Result<Decomposition> {
    let q = &wave.profile;
    let rho = fit_translation(u, q)?;
    let eta = u.shift(-rho).sub(q);
    let dq = q.derivative_unchecked(1);
    let eta_l2 = eta.norm(Norm::L2)?;
    let eta_h1 = eta.norm(Norm::H1)?;
    let ortho_defect = dq.inner(&eta).abs();
    let ortho_threshold = 1e-8 * dq.norm(Norm::L2)? * eta_l2 + 1e-12;
    let best = match h1_translation(u, q, rho) {
        Ok(r) => u.shift(-r).sub(q).norm(Norm::H1)?.min(eta_h1),
        Err(_) => eta_h1,
    };
    let h1_ratio = if best > 0.0 { eta_h1 / best } else { 1.0 };
    Ok(Decomposition {
        rho,
        eta,
        eta_l2,
        eta_h1,
        ortho_defect,
        ortho_threshold,
        h1_ratio,
    })
}

#[derive(Debug, Clone)]
pub struct MatchedSpeed {
    pub c_star: f64,
    pub wave: SolitaryWave,
    pub evaluations: usize,
}

/// `c*` in [`SPEED_RANGE`] with `‖Q_{γ,c*}‖² = target` (monotone branch, Illinois iteration).
pub fn match_speed(
    target_l2sq: f64,
    gamma: f64,
    grid: &Arc<Grid>,
    opts: PetviashviliOptions,
) -> Result<MatchedSpeed> {
    if !target_l2sq.is_finite() {
        return Err(Error::InvalidArgument(format!("target must be finite, got {target_l2sq}")));
    }
    let (c_min, c_max) = SPEED_RANGE;
    let solve = |c: f64, seed: Option<&Field>| -> Result<SolitaryWave> {
        let params = WaveParams::new(gamma, c)?;
        match seed {
            Some(s) => petviashvili_solve(params, grid, Some(s), opts)
                .or_else(|_| solve_wave(params, grid, opts)),
            None => solve_wave(params, grid, opts),
        }
    };
    let lo_wave = solve(c_min, None)?;
    let hi_wave = solve(c_max, None)?;
    let (low, high) = (lo_wave.l2_squared(), hi_wave.l2_squared());
    if !(target_l2sq >= low - 1e-8 && target_l2sq <= high + 1e-8) {
        return Err(Error::OutOfRange {
            target: target_l2sq,
            low,
            high,
            c_min,
            c_max,
        });
    }
    let mut evaluations = 2;
    let (mut a, mut fa) = (c_min, low - target_l2sq);
    let (mut b, mut fb) = (c_max, high - target_l2sq);
    if fa.abs() < 1e-8 {
        return Ok(MatchedSpeed { c_star: a, wave: lo_wave, evaluations });
    }
    if fb.abs() < 1e-8 {
        return Ok(MatchedSpeed { c_star: b, wave: hi_wave, evaluations });
    }
    let mut best = lo_wave;
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        // the profile shape changes slowly with c; rescale the nearest one as seed
        let seed = best.profile.scale(c / best.params.c);
        let w = solve(c, Some(&seed))?;
        evaluations += 1;
        let fc = w.l2_squared() - target_l2sq;
        if fc.abs() < 1e-8 || (b - a).abs() < 1e-14 {
            return Ok(MatchedSpeed { c_star: c, wave: w, evaluations });
        }
        if (fc < 0.0) == (fa < 0.0) {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        best = w;
    }
    Err(Error::NonConvergence {
        iterations: evaluations,
        residual: fa.abs().min(fb.abs()),
    })
}

#[derive(Debug, Clone)]
pub struct ModulationRecord {
    pub t: f64,
    /// Lab-frame translation, unwrapped across the periodic seam.
    pub rho: f64,
    pub rho_dot: f64,
    pub c_star: f64,
    pub eta_l2: f64,
    pub eta_h1: f64,
    pub ortho_defect: f64,
    pub ortho_threshold: f64,
    pub h1_ratio: f64,
    /// Why the decomposition failed, if it did; numeric fields are then NaN.
    pub failure: Option<String>,
}

impl ModulationRecord {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }
}

/// Decomposes every snapshot of `trajectory` (in parallel) and differentiates
/// the unwrapped translation.
pub fn track_modulation(
    trajectory: &Trajectory,
    wave: &SolitaryWave,
    c_star: f64,
) -> Result<Vec<ModulationRecord>> {
    let grid = wave.grid();
    let length = grid.length();
    let snaps: Vec<(f64, f64, &Field)> = trajectory
        .records
        .iter()
        .map(|r| {
            r.snapshot
                .as_ref()
                .map(|s| (r.t, r.frame_shift, s))
                .ok_or_else(|| {
                    Error::InvalidArgument(
                        "trajectory has no snapshots; enable them in the evolution config".into(),
                    )
                })
        })
        .collect::<Result<_>>()?;
    let mut records: Vec<ModulationRecord> = snaps
        .par_iter()
        .map(|&(t, frame_shift, u)| match decompose(u, wave) {
            Ok(d) => ModulationRecord {
                t,
                rho: d.rho + frame_shift,
                rho_dot: f64::NAN,
                c_star,
                eta_l2: d.eta_l2,
                eta_h1: d.eta_h1,
                ortho_defect: d.ortho_defect,
                ortho_threshold: d.ortho_threshold,
                h1_ratio: d.h1_ratio,
                failure: None,
            },
            Err(e) => ModulationRecord {
                t,
                rho: f64::NAN,
                rho_dot: f64::NAN,
                c_star,
                eta_l2: f64::NAN,
                eta_h1: f64::NAN,
                ortho_defect: f64::NAN,
                ortho_threshold: f64::NAN,
                h1_ratio: f64::NAN,
                failure: Some(e.to_string()),
            },
        })
        .collect();

    let valid: Vec<usize> = (0..records.len()).filter(|&i| records[i].is_valid()).collect();
    // unwrap ρ: consecutive valid fits never jump by more than half a box
    for w in valid.windows(2) {
        let prev = records[w[0]].rho;
        let cur = &mut records[w[1]].rho;
        *cur -= length * ((*cur - prev) / length).round();
    }
    let t: Vec<f64> = valid.iter().map(|&i| records[i].t).collect();
    let rho: Vec<f64> = valid.iter().map(|&i| records[i].rho).collect();
    for (&i, d) in valid.iter().zip(smoothed_derivative(&t, &rho)) {
        records[i].rho_dot = d;
    }
    Ok(records)
}

/// Second-order finite differences (one-sided at the ends) followed by a
/// (¼, ½, ¼) smoothing pass on interior points.
pub fn smoothed_derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![0.0],
        2 => {
            let d = (y[1] - y[0]) / (t[1] - t[0]);
            return vec![d, d];
        }
        _ => {}
    }
    // three-point Lagrange derivative at t[at] using nodes i, i+1, i+2
    let three_point = |i: usize, at: usize| {
        let (t0, t1, t2) = (t[i], t[i + 1], t[i + 2]);
        let x = t[at];
        y[i] * ((x - t1) + (x - t2)) / ((t0 - t1) * (t0 - t2))
            + y[i + 1] * ((x - t0) + (x - t2)) / ((t1 - t0) * (t1 - t2))
            + y[i + 2] * ((x - t0) + (x - t1)) / ((t2 - t0) * (t2 - t1))
    };
    let mut raw = Vec::with_capacity(n);
    raw.push(three_point(0, 0));
    for i in 1..n - 1 {
        raw.push(three_point(i - 1, i));
    }
    raw.push(three_point(n - 3, n - 1));
    let mut out = raw.clone();
    for i in 1..n - 1 {
        out[i] = 0.25 * raw[i - 1] + 0.5 * raw[i] + 0.25 * raw[i + 1];
    }
    out
}

/// Smallest `C` with `|ρ̇ − c*| ≤ C‖η‖_{L²}` over the valid records
/// (records with `‖η‖ ≤` [`ETA_FLOOR`] are skipped).
pub fn speed_defect_constant(records: &[ModulationRecord]) -> f64 {
    records
        .iter()
        .filter(|r| r.is_valid() && r.eta_l2 > ETA_FLOOR && r.rho_dot.is_finite())
        .map(|r| (r.rho_dot - r.c_star).abs() / r.eta_l2)
        .fold(0.0, f64::max)
}
