//! Configurable end-to-end experiments: asymptotic stability, the KdV limit,
//! the Liouville tail probe, monotonicity sweeps and commutator ensembles.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{
    evolve, evolve_perturbation, evolve_toward, EvolutionConfig, Sponge, TimeSeries, Trajectory, TrajectoryRecord,
};
use crate::modulation::{decompose, match_speed, track_modulation, ModulationRecord};
use crate::monotonicity::{
    besov_operator_norm, commutator_defect, log_log_slope, monotonicity_sweep, periodized_psi,
    Functional, SweepOptions, SweepReport, THETA, VARTHETA,
};
use crate::solitary::{petviashvili_solve, solve_wave, PetviashviliOptions, SolitaryWave, WaveParams};
use crate::spectral::{Field, Grid, Norm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub n: usize,
    pub length: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        GridSettings { n: 2048, length: 400.0 }
    }
}

impl GridSettings {
    pub fn build(&self) -> Result<Arc<Grid>> {
        Grid::new(self.n, self.length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveSettings {
    pub gamma: f64,
    pub c: f64,
}

impl Default for WaveSettings {
    fn default() -> Self {
        WaveSettings { gamma: 0.1, c: 1.0 }
    }
}

impl WaveSettings {
    pub fn params(&self) -> Result<WaveParams> {
        WaveParams::new(self.gamma, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationShape {
    /// `sech((x − center)/width)`.
    EvenSech,
    /// `tanh · sech` of `(x − center)/width`.
    OddSech,
    /// Random Fourier series over `|ξ| ≤ band`, seeded.
    Noise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSpec {
    /// `‖p‖_{H¹}` relative to `‖Q‖_{H¹}`.
    pub amplitude: f64,
    pub shape: PerturbationShape,
    pub width: f64,
    pub center: f64,
    pub seed: u64,
    /// Largest wavenumber of the noise.
    pub band: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            amplitude: 0.01,
            shape: PerturbationShape::EvenSech,
            width: 2.0,
            center: 0.0,
            seed: 0,
            band: 1.0,
        }
    }
}

/// Perturbation with `‖p‖_{H¹} = amplitude·‖reference‖_{H¹}`.
pub fn perturbation(spec: &PerturbationSpec, reference: &Field) -> Result<Field> {
    let grid = reference.grid();
    if spec.amplitude == 0.0 {
        return Ok(Field::zeros(grid));
    }
    let raw = match spec.shape {
        PerturbationShape::EvenSech => {
            Field::from_fn(grid, |x| 1.0 / ((x - spec.center) / spec.width).cosh())?
        }
        PerturbationShape::OddSech => Field::from_fn(grid, |x| {
            let y = (x - spec.center) / spec.width;
            y.tanh() / y.cosh()
        })?,
        PerturbationShape::Noise => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let dk = 2.0 * PI / grid.length();
            let modes = ((spec.band / dk).floor() as usize).min(grid.n() / 3);
            let coeffs: Vec<(f64, f64)> = (0..modes)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            Field::from_fn(grid, |x| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let arg = (k + 1) as f64 * dk * x;
                        a * arg.cos() + b * arg.sin()
                    })
                    .sum()
            })?
        }
    };
    let norm = raw.norm(Norm::H1)?;
    if norm == 0.0 {
        return Err(Error::DegenerateInput("perturbation shape has zero norm on this grid".into()));
    }
    Ok(raw.scale(spec.amplitude * reference.norm(Norm::H1)? / norm))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySettings {
    /// Run in the frame moving with the unperturbed wave.
    pub co_moving: bool,
    /// Strength of the default outer-tenth sponge (used when the evolution
    /// config has none; 0 disables it).
    pub sponge_strength: f64,
    /// Let the sponge relax toward the unperturbed wave rather than zero
    /// (only meaningful in the co-moving frame).
    pub relax_to_wave: bool,
    /// `ε₀` of the orbital proximity monitor.
    pub proximity_threshold: f64,
    pub speed_tolerance: f64,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        StabilitySettings {
            co_moving: true,
            sponge_strength: 1.0,
            relax_to_wave: true,
            proximity_threshold: 0.5,
            speed_tolerance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdvLimitSettings {
    pub gammas: Vec<f64>,
}

impl Default for KdvLimitSettings {
    fn default() -> Self {
        KdvLimitSettings {
            gammas: vec![0.2, 0.1, 0.05, 0.025],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvilleSettings {
    pub b: f64,
    pub sponge_strength: f64,
    /// Also evolve the full equation and report whether `η` decays.
    pub nonlinear_check: bool,
}

impl Default for LiouvilleSettings {
    fn default() -> Self {
        LiouvilleSettings {
            b: 1e-3,
            sponge_strength: 1.0,
            nonlinear_check: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonotonicitySettings {
    pub functionals: Vec<Functional>,
    pub vartheta: f64,
    pub theta: f64,
    pub theta0: Option<f64>,
    pub t0: Option<f64>,
    pub co_moving: bool,
    pub sponge_strength: f64,
    pub relax_to_wave: bool,
}

impl Default for MonotonicitySettings {
    fn default() -> Self {
        MonotonicitySettings {
            functionals: vec![Functional::IRight, Functional::Combo4IJ, Functional::HRight],
            vartheta: VARTHETA,
            theta: THETA,
            theta0: None,
            t0: None,
            co_moving: true,
            sponge_strength: 1.0,
            relax_to_wave: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommutatorSettings {
    pub samples: usize,
    /// Ensemble grid size on `[−π, π)`.
    pub n: usize,
    pub f_modes: usize,
    pub u_modes: usize,
    pub lambdas: Vec<f64>,
    pub eps: f64,
    pub besov_grid: GridSettings,
    pub ramp_start: f64,
    pub ramp_width: f64,
    pub iterations: usize,
}

impl Default for CommutatorSettings {
    fn default() -> Self {
        CommutatorSettings {
            samples: 200,
            n: 256,
            f_modes: 8,
            u_modes: 40,
            lambdas: vec![-2.5, 1e-3, 1e3],
            eps: 0.1,
            besov_grid: GridSettings {
                n: 16384,
                length: 2048.0,
            },
            ramp_start: 100.0,
            ramp_width: 800.0,
            iterations: 400,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub output_dir: PathBuf,
    pub wave: WaveSettings,
    pub grid: GridSettings,
    pub evolution: EvolutionConfig,
    pub perturbation: PerturbationSpec,
    /// Radii for tails and sweeps; empty selects the experiment's default.
    pub radii: Vec<f64>,
    pub stability: StabilitySettings,
    pub kdv_limit: KdvLimitSettings,
    pub liouville: LiouvilleSettings,
    pub monotonicity: MonotonicitySettings,
    pub commutator: CommutatorSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: "default".into(),
            output_dir: PathBuf::from("out"),
            wave: WaveSettings::default(),
            grid: GridSettings::default(),
            evolution: EvolutionConfig::default(),
            perturbation: PerturbationSpec::default(),
            radii: Vec::new(),
            stability: StabilitySettings::default(),
            kdv_limit: KdvLimitSettings::default(),
            liouville: LiouvilleSettings::default(),
            monotonicity: MonotonicitySettings::default(),
            commutator: CommutatorSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid.build()?;
        self.wave.params()?;
        self.evolution.validate(&grid)?;
        let p = &self.perturbation;
        if !(p.amplitude >= 0.0) || !p.amplitude.is_finite() {
            return Err(Error::Config(format!("perturbation amplitude must be >= 0, got {}", p.amplitude)));
        }
        if !(p.width > 0.0) || !(p.band > 0.0) {
            return Err(Error::Config("perturbation width and band must be positive".into()));
        }
        if self.radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Config(format!("radii must be positive, got {:?}", self.radii)));
        }
        if !(self.stability.proximity_threshold > 0.0) || !(self.stability.speed_tolerance > 0.0) {
            return Err(Error::Config("stability thresholds must be positive".into()));
        }
        if !(self.stability.sponge_strength >= 0.0)
            || !(self.liouville.sponge_strength >= 0.0)
            || !(self.monotonicity.sponge_strength >= 0.0)
        {
            return Err(Error::Config("sponge strengths must be >= 0".into()));
        }
        Ok(())
    }

    fn radii_or(&self, default: &[f64]) -> Vec<f64> {
        if self.radii.is_empty() {
            default.to_vec()
        } else {
            self.radii.clone()
        }
    }

    // the evolution config with snapshots, an optional co-moving frame and a
    // default sponge filled in
    fn evolution_for(&self, grid: &Grid, c: f64, co_moving: bool, sponge_strength: f64, snapshots: bool) -> EvolutionConfig {
        let mut ev = self.evolution.clone();
        ev.snapshots = snapshots;
        if co_moving {
            ev.frame_speed = c;
        }
        if ev.sponge.is_none() && sponge_strength > 0.0 {
            ev.sponge = Some(Sponge::outer_tenth(sponge_strength, grid.length()));
        }
        ev
    }
}

fn snapshot(r: &TrajectoryRecord) -> &Field {
    r.snapshot.as_ref().expect("snapshots enabled")
}

// Co-moving runs may relax the sponge toward the (then stationary) wave.
fn run_flow(u0: &Field, wave: &SolitaryWave, ev: &EvolutionConfig, relax: bool) -> Result<Trajectory> {
    let stationary = ev.frame_speed == wave.params.c;
    if relax && stationary && ev.sponge.is_some() {
        evolve_toward(u0, wave.params.gamma, ev, &wave.profile)
    } else {
        evolve(u0, wave.params.gamma, ev)
    }
}

/// Trapezoid sum of `values` over the nodes with `lo ≤ x ≤ hi`.
fn window_sum(grid: &Grid, values: impl Iterator<Item = f64>, lo: f64, hi: f64) -> f64 {
    grid.dx()
        * grid
            .nodes()
            .iter()
            .zip(values)
            .filter(|(x, _)| **x >= lo && **x <= hi)
            .map(|(_, v)| v)
            .sum::<f64>()
}

/// `‖f‖_{H¹(lo, hi)}`.
pub fn windowed_h1(f: &Field, lo: f64, hi: f64) -> f64 {
    let fx = f.derivative_unchecked(1);
    window_sum(
        f.grid(),
        f.values().iter().zip(fx.values()).map(|(a, b)| a * a + b * b),
        lo,
        hi,
    )
    .sqrt()
}

/// Least-squares slope of `log y` against `t` over `t ≥ from`, together with
/// whether the last value is below the first; `None` for fewer than two points.
fn late_decay(times: &[f64], values: &[f64], from: f64) -> Option<(f64, bool)> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= from && v.is_finite() && **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    Some((sty / stt, pts[pts.len() - 1].1 < pts[0].1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityFlags {
    /// Right-of-`x(t)` error decays over the final half of the run.
    pub error_decreasing: bool,
    /// Same for the half line `x > ct/2`.
    pub half_line_decreasing: bool,
    /// `|ẋ(T) − c*|` within the configured tolerance.
    pub speed_matched: bool,
    /// Proximity monitor exceeded `ε₀`.
    pub orbit_lost: bool,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub params: WaveParams,
    pub c_star: f64,
    /// Mean over the final third of `∫_{x > ct/2} u²`.
    pub alpha_sq: f64,
    pub times: Vec<f64>,
    /// `‖u − Q_{γ,c*}(· − x(t))‖_{H¹}` over `x > ct/2` (clipped to the sponge).
    pub half_line_error: Vec<f64>,
    /// The same error over `x > x(t)`.
    pub right_error: Vec<f64>,
    /// Lab-frame translation `x(t)` and its derivative.
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub eta_l2: Vec<f64>,
    /// `inf_y ‖u(t) − Q_{γ,c}(· − y)‖_{H¹}`.
    pub proximity: Vec<f64>,
    /// Slope of `log right_error` against `t` over the final half.
    pub late_slope: Option<f64>,
    pub speed_defect: f64,
    pub flags: StabilityFlags,
    pub modulation: Vec<ModulationRecord>,
}

/// Evolves the perturbed wave, matches `c*` to the mass escaping to the
/// right and measures the convergence to `Q_{γ,c*}` on right half-lines.
pub fn run_stability(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let params = cfg.wave.params()?;
    let opts = PetviashviliOptions::default();
    let wave = solve_wave(params, &grid, opts)?;
    let u0 = wave.profile.add(&perturbation(&cfg.perturbation, &wave.profile)?);
    let s = &cfg.stability;
    let ev = cfg.evolution_for(&grid, params.c, s.co_moving, s.sponge_strength, true);
    ev.validate(&grid)?;
    let traj = run_flow(&u0, &wave, &ev, s.relax_to_wave)?;

    let edge = ev.sponge.map_or(0.5 * grid.length(), |sp| sp.inner_edge(&grid));
    let half_line = |r: &TrajectoryRecord| (0.5 * params.c * r.t - r.frame_shift).max(-edge);

    let t_end = traj.final_time;
    let late: Vec<f64> = traj
        .records
        .iter()
        .filter(|r| r.t >= 2.0 * t_end / 3.0)
        .map(|r| {
            let u = snapshot(r);
            window_sum(&grid, u.values().iter().map(|v| v * v), half_line(r), edge)
        })
        .collect();
    let alpha_sq = late.iter().sum::<f64>() / late.len() as f64;
    let matched = match_speed(alpha_sq, params.gamma, &grid, opts)?;
    let c_star = matched.c_star;
    let modulation = track_modulation(&traj, &matched.wave, c_star)?;

    let rows: Vec<(f64, f64, f64)> = traj
        .records
        .par_iter()
        .zip(modulation.par_iter())
        .map(|(r, m)| -> Result<(f64, f64, f64)> {
            let u = snapshot(r);
            let proximity = match decompose(u, &wave) {
                Ok(d) if d.h1_ratio > 0.0 => d.eta_h1 / d.h1_ratio,
                _ => f64::INFINITY,
            };
            if !m.is_valid() {
                return Ok((f64::NAN, f64::NAN, proximity));
            }
            let centre = grid.wrap(m.rho - r.frame_shift);
            let err = u.sub(&matched.wave.profile.shift(centre));
            Ok((
                windowed_h1(&err, half_line(r), edge),
                windowed_h1(&err, centre.max(-edge), edge),
                proximity,
            ))
        })
        .collect::<Result<_>>()?;

    let times: Vec<f64> = traj.records.iter().map(|r| r.t).collect();
    let half_line_error: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let right_error: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let proximity: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let late_right = late_decay(&times, &right_error, 0.5 * t_end);
    let late_half = late_decay(&times, &half_line_error, 0.5 * t_end);
    let decreasing = |d: Option<(f64, bool)>| d.is_some_and(|(slope, last_below)| slope < 0.0 && last_below);
    let xdot: Vec<f64> = modulation.iter().map(|m| m.rho_dot).collect();
    let speed_defect = (xdot[xdot.len() - 1] - c_star).abs();
    let flags = StabilityFlags {
        error_decreasing: decreasing(late_right),
        half_line_decreasing: decreasing(late_half),
        speed_matched: speed_defect < s.speed_tolerance,
        orbit_lost: proximity.iter().any(|p| !(*p <= s.proximity_threshold)),
    };
    Ok(StabilityReport {
        params,
        c_star,
        alpha_sq,
        times,
        half_line_error,
        right_error,
        x: modulation.iter().map(|m| m.rho).collect(),
        xdot,
        eta_l2: modulation.iter().map(|m| m.eta_l2).collect(),
        proximity,
        late_slope: late_right.map(|d| d.0),
        speed_defect,
        flags,
        modulation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdvLimitRow {
    pub gamma: f64,
    /// `‖Q_{γ,c} − Q_{0,c}‖_{H¹}`.
    pub h1: f64,
    pub h2: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct KdvLimitReport {
    pub c: f64,
    pub rows: Vec<KdvLimitRow>,
    /// Fitted exponents of the H¹ and H² differences in `|γ|`.
    pub order_h1: Option<f64>,
    pub order_h2: Option<f64>,
    /// Differences increase with `|γ|`.
    pub monotone: bool,
}

/// Distances of `Q_{γ,c}` from the KdV profile for each configured `γ`.
pub fn run_kdv_limit(cfg: &ExperimentConfig) -> Result<KdvLimitReport> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let c = cfg.wave.c;
    let opts = PetviashviliOptions::default();
    let kdv = petviashvili_solve(WaveParams::new(0.0, c)?, &grid, None, opts)?;
    let mut rows: Vec<KdvLimitRow> = cfg
        .kdv_limit
        .gammas
        .par_iter()
        .map(|&gamma| -> Result<KdvLimitRow> {
            let wave = if gamma == 0.0 {
                kdv.clone()
            } else {
                solve_wave(WaveParams::new(gamma, c)?, &grid, opts)?
            };
            let diff = wave.profile.sub(&kdv.profile);
            Ok(KdvLimitRow {
                gamma,
                h1: diff.norm(Norm::H1)?,
                h2: diff.norm(Norm::H2)?,
                residual: wave.residual,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.gamma.abs().total_cmp(&b.gamma.abs()));
    let fit = |f: fn(&KdvLimitRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.gamma != 0.0)
            .map(|r| (r.gamma.abs(), f(r)))
            .collect();
        log_log_slope(&pts)
    };
    let monotone = rows.windows(2).all(|w| w[0].h1 <= w[1].h1 && w[0].h2 <= w[1].h2);
    Ok(KdvLimitReport {
        c,
        order_h1: fit(|r| r.h1),
        order_h2: fit(|r| r.h2),
        rows,
        monotone,
    })
}

#[derive(Debug, Clone)]
pub struct EtaEvidence {
    pub c_star: f64,
    pub times: Vec<f64>,
    pub eta_l2: Vec<f64>,
    /// Last valid `‖η‖` below the first.
    pub decays: bool,
}

#[derive(Debug, Clone)]
pub struct LiouvilleReport {
    pub b: f64,
    pub gamma: f64,
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    /// `tails[i][k]`: `∫_{|x|>R_k}(v² + v_x²)` at `times[i]`.
    pub tails: Vec<Vec<f64>>,
    /// `sup_t` tail for each radius.
    pub sup_tails: Vec<f64>,
    /// Smallest `C` with `tail(t, R) ≤ C·R^{−1/4}` over the run.
    pub c_fit: f64,
    /// Log-log slope of `sup_tails` in `R`.
    pub slope: Option<f64>,
    pub eta: Option<EtaEvidence>,
}

/// Tails of the perturbation equation around `Q_{γ,c}` and, optionally, the
/// decay of the modulation residual for the full flow.
pub fn run_liouville_probe(cfg: &ExperimentConfig) -> Result<LiouvilleReport> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let params = cfg.wave.params()?;
    let opts = PetviashviliOptions::default();
    let wave = solve_wave(params, &grid, opts)?;
    let radii = cfg.radii_or(&[20.0, 40.0, 80.0, 160.0]);
    let v0 = perturbation(&cfg.perturbation, &wave.profile)?;
    let ls = &cfg.liouville;
    let ev = cfg.evolution_for(&grid, 0.0, false, ls.sponge_strength, false);
    let xdot = TimeSeries::constant(params.c);
    let a = TimeSeries::default_forcing(params.c, &xdot);
    let traj = evolve_perturbation(&v0, &wave, ls.b, &a, &xdot, &ev, &radii)?;

    let times: Vec<f64> = traj.records.iter().map(|r| r.t).collect();
    let tails: Vec<Vec<f64>> = traj.records.iter().map(|r| r.tails.clone()).collect();
    let sup_tails: Vec<f64> = (0..radii.len())
        .map(|k| tails.iter().map(|row| row[k]).fold(0.0, f64::max))
        .collect();
    let c_fit = radii
        .iter()
        .zip(&sup_tails)
        .map(|(r, t)| t * r.powf(0.25))
        .fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = radii.iter().cloned().zip(sup_tails.iter().cloned()).collect();
    let eta = if ls.nonlinear_check { Some(eta_evidence(cfg, &grid, &wave)?) } else { None };
    Ok(LiouvilleReport {
        b: ls.b,
        gamma: params.gamma,
        radii,
        times,
        tails,
        sup_tails,
        c_fit,
        slope: log_log_slope(&pts),
        eta,
    })
}

fn eta_evidence(cfg: &ExperimentConfig, grid: &Arc<Grid>, wave: &SolitaryWave) -> Result<EtaEvidence> {
    let params = wave.params;
    let u0 = wave.profile.add(&perturbation(&cfg.perturbation, &wave.profile)?);
    let ev = cfg.evolution_for(grid, params.c, true, cfg.liouville.sponge_strength, true);
    let traj = run_flow(&u0, wave, &ev, true)?;
    let target = traj.final_state.inner(&traj.final_state);
    let matched = match_speed(target, params.gamma, grid, PetviashviliOptions::default())?;
    let records = track_modulation(&traj, &matched.wave, matched.c_star)?;
    let valid: Vec<&ModulationRecord> = records.iter().filter(|r| r.is_valid()).collect();
    let decays = valid.len() >= 2 && valid[valid.len() - 1].eta_l2 < valid[0].eta_l2;
    Ok(EtaEvidence {
        c_star: matched.c_star,
        times: records.iter().map(|r| r.t).collect(),
        eta_l2: records.iter().map(|r| r.eta_l2).collect(),
        decays,
    })
}

#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    pub gamma: f64,
    pub radii: Vec<f64>,
    /// Lab-frame position of the wave used to place the cutoffs.
    pub x_of_t: TimeSeries,
    pub sweeps: Vec<SweepReport>,
}

/// Evolves the perturbed wave and sweeps every configured functional.
pub fn run_monotonicity(cfg: &ExperimentConfig) -> Result<MonotonicityReport> {
    cfg.validate()?;
    let grid = cfg.grid.build()?;
    let params = cfg.wave.params()?;
    let wave = solve_wave(params, &grid, PetviashviliOptions::default())?;
    let u0 = wave.profile.add(&perturbation(&cfg.perturbation, &wave.profile)?);
    let ms = &cfg.monotonicity;
    let ev = cfg.evolution_for(&grid, params.c, ms.co_moving, ms.sponge_strength, true);
    let traj = run_flow(&u0, &wave, &ev, ms.relax_to_wave)?;
    let x_of_t = wave_position(&traj, &wave)?;
    let radii = cfg.radii_or(&[10.0, 20.0, 40.0, 80.0]);
    let opts = SweepOptions {
        vartheta: ms.vartheta,
        t0: ms.t0,
        theta0: ms.theta0,
        theta: ms.theta,
        ..SweepOptions::default()
    };
    let sweeps = ms
        .functionals
        .par_iter()
        .map(|&f| monotonicity_sweep(&traj, &x_of_t, &radii, f, &opts))
        .collect::<Result<_>>()?;
    Ok(MonotonicityReport {
        gamma: params.gamma,
        radii,
        x_of_t,
        sweeps,
    })
}

/// Lab-frame translation of the wave along a trajectory with snapshots.
pub fn wave_position(traj: &Trajectory, wave: &SolitaryWave) -> Result<TimeSeries> {
    let records = track_modulation(traj, wave, wave.params.c)?;
    if let Some(bad) = records.iter().find(|r| !r.is_valid()) {
        return Err(Error::DegenerateInput(format!(
            "translation fit failed at t = {}: {}",
            bad.t,
            bad.failure.as_deref().unwrap_or("unknown")
        )));
    }
    TimeSeries::new(
        records.iter().map(|r| r.t).collect(),
        records.iter().map(|r| r.rho).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommutatorSample {
    pub index: usize,
    pub hilbert: f64,
    pub hilbert_derivative: f64,
    pub ratio: f64,
    /// Largest relative change of the ratio under `f ↦ λf`.
    pub scaling_defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BesovRow {
    pub radius: f64,
    /// Operator norm of `u ↦ ∂ₓ([H, Ψ]u_x)`.
    pub norm: f64,
    /// `‖D^{2−ε}Ψ‖_∞ + ‖D^{2+ε}Ψ‖_∞`.
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct CommutatorReport {
    pub samples: Vec<CommutatorSample>,
    pub max_ratio: f64,
    pub max_scaling_defect: f64,
    pub besov: Vec<BesovRow>,
    pub slope: Option<f64>,
    /// `−(2 − ε)θ`.
    pub predicted_slope: f64,
    /// Fitted slope within 15% of the prediction.
    pub slope_ok: bool,
}

fn random_series(grid: &Arc<Grid>, modes: usize, rng: &mut ChaCha8Rng) -> Result<Field> {
    let dk = 2.0 * PI / grid.length();
    let offset = rng.gen_range(-1.0..1.0);
    let coeffs: Vec<(f64, f64)> = (1..=modes)
        .map(|k| {
            let decay = 1.0 / k as f64;
            (decay * rng.gen_range(-1.0..1.0), decay * rng.gen_range(-1.0..1.0))
        })
        .collect();
    Field::from_fn(grid, |x| {
        offset
            + coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let arg = (k + 1) as f64 * dk * x;
                    a * arg.cos() + b * arg.sin()
                })
                .sum::<f64>()
    })
}

/// Random ensemble for the first commutator estimate and operator norms of
/// the second over the cutoff family `Ψ_R`.
pub fn run_commutator(cfg: &ExperimentConfig) -> Result<CommutatorReport> {
    let cs = &cfg.commutator;
    if cs.f_modes + cs.u_modes >= cs.n / 2 {
        return Err(Error::Config(format!(
            "f_modes + u_modes = {} must stay below n/2 = {} so products are exact",
            cs.f_modes + cs.u_modes,
            cs.n / 2
        )));
    }
    if !(cs.eps > 0.0 && cs.eps <= 0.5) {
        return Err(Error::Config(format!("eps must lie in (0, 1/2], got {}", cs.eps)));
    }
    let grid = Grid::new(cs.n, 2.0 * PI)?;
    let seed = cfg.perturbation.seed;
    let samples: Vec<CommutatorSample> = (0..cs.samples)
        .into_par_iter()
        .map(|index| -> Result<CommutatorSample> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64));
            let f = random_series(&grid, cs.f_modes, &mut rng)?;
            let u = random_series(&grid, cs.u_modes, &mut rng)?;
            let base = commutator_defect(&f, &u)?;
            let mut scaling_defect = 0.0_f64;
            for &lambda in &cs.lambdas {
                let scaled = commutator_defect(&f.scale(lambda), &u)?;
                scaling_defect = scaling_defect.max((scaled.ratio - base.ratio).abs() / base.ratio);
            }
            Ok(CommutatorSample {
                index,
                hilbert: base.hilbert,
                hilbert_derivative: base.hilbert_derivative,
                ratio: base.ratio,
                scaling_defect,
            })
        })
        .collect::<Result<_>>()?;

    let bgrid = cs.besov_grid.build()?;
    let radii = cfg.radii_or(&[10.0, 20.0, 40.0, 80.0]);
    let besov: Vec<BesovRow> = radii
        .par_iter()
        .map(|&radius| -> Result<BesovRow> {
            let psi = periodized_psi(&bgrid, radius, cs.ramp_start, cs.ramp_width)?;
            let norm = besov_operator_norm(&psi, cs.iterations, seed)?;
            let rhs = psi.fractional_derivative(2.0 - cs.eps)?.sup()
                + psi.fractional_derivative(2.0 + cs.eps)?.sup();
            Ok(BesovRow {
                radius,
                norm,
                rhs,
                ratio: norm / rhs,
            })
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = besov.iter().map(|r| (r.radius, r.norm)).collect();
    let slope = log_log_slope(&pts);
    let predicted_slope = -(2.0 - cs.eps) * THETA;
    Ok(CommutatorReport {
        max_ratio: samples.iter().map(|s| s.ratio).fold(0.0, f64::max),
        max_scaling_defect: samples.iter().map(|s| s.scaling_defect).fold(0.0, f64::max),
        samples,
        besov,
        slope_ok: slope.is_some_and(|s| (s - predicted_slope).abs() <= 0.15 * predicted_slope.abs()),
        slope,
        predicted_slope,
    })
}
