use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use benjamin_core::evolution::{energy, evolve, mass, peak_position, rescale, unresolved_fraction};
use benjamin_core::experiments::{
    perturbation, run_commutator, run_kdv_limit, run_liouville_probe, run_monotonicity, run_stability,
    ExperimentConfig,
};
use benjamin_core::solitary::{eqq_residual, solve_wave, PetviashviliOptions};
use benjamin_core::Norm;

use crate::output::{line_plot, num, write_file, Csv, Report, Scale, Series};
use crate::{Cli, Command, Common};

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.common.config.as_deref())?;
    apply_overrides(&mut cfg, &cli.common, &cli.command);
    if cfg.scenario == ExperimentConfig::default().scenario {
        cfg.scenario = command_name(&cli.command).to_string();
    }
    cfg.validate().context("invalid configuration")?;
    let out = prepare_output(&cfg.output_dir)?;
    match &cli.command {
        Command::SolveWave => solve_wave_cmd(&cfg, &out),
        Command::Evolve { .. } => evolve_cmd(&cfg, &out),
        Command::Stability { .. } => stability_cmd(&cfg, &out),
        Command::KdvLimit { .. } => kdv_limit_cmd(&cfg, &out),
        Command::Liouville { .. } => liouville_cmd(&cfg, &out),
        Command::Monotonicity { .. } => monotonicity_cmd(&cfg, &out),
        Command::CommutatorTest { .. } => commutator_cmd(&cfg, &out),
        Command::Rescale { lambda } => rescale_cmd(&cfg, &out, *lambda),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::SolveWave => "solve-wave",
        Command::Evolve { .. } => "evolve",
        Command::Stability { .. } => "stability",
        Command::KdvLimit { .. } => "kdv-limit",
        Command::Liouville { .. } => "liouville",
        Command::Monotonicity { .. } => "monotonicity",
        Command::CommutatorTest { .. } => "commutator-test",
        Command::Rescale { .. } => "rescale",
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

fn apply_overrides(cfg: &mut ExperimentConfig, common: &Common, cmd: &Command) {
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.perturbation.seed = seed;
    }
    if let Some(v) = common.gamma {
        cfg.wave.gamma = v;
    }
    if let Some(v) = common.c {
        cfg.wave.c = v;
    }
    if let Some(v) = common.n {
        cfg.grid.n = v;
    }
    if let Some(v) = common.length {
        cfg.grid.length = v;
    }
    if let Some(v) = common.dt {
        cfg.evolution.dt = v;
    }
    if let Some(v) = common.t_final {
        cfg.evolution.t_final = v;
    }
    let set_radii = |cfg: &mut ExperimentConfig, radii: &Vec<f64>| {
        if !radii.is_empty() {
            cfg.radii = radii.clone();
        }
    };
    match cmd {
        Command::Evolve { amplitude } | Command::Stability { amplitude } => {
            if let Some(a) = amplitude {
                cfg.perturbation.amplitude = *a;
            }
        }
        Command::KdvLimit { gammas } => {
            if !gammas.is_empty() {
                cfg.kdv_limit.gammas = gammas.clone();
            }
        }
        Command::Liouville { b, radii, amplitude } => {
            if let Some(b) = b {
                cfg.liouville.b = *b;
            }
            if let Some(a) = amplitude {
                cfg.perturbation.amplitude = *a;
            }
            set_radii(cfg, radii);
        }
        Command::Monotonicity { radii, amplitude } => {
            if let Some(a) = amplitude {
                cfg.perturbation.amplitude = *a;
            }
            set_radii(cfg, radii);
        }
        Command::CommutatorTest { samples, eps, radii } => {
            if let Some(s) = samples {
                cfg.commutator.samples = *s;
            }
            if let Some(e) = eps {
                cfg.commutator.eps = *e;
            }
            set_radii(cfg, radii);
        }
        Command::SolveWave | Command::Rescale { .. } => {}
    }
}

fn prepare_output(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let probe = dir.join(".write-test");
    fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", dir.display()))?;
    let _ = fs::remove_file(probe);
    Ok(dir.to_path_buf())
}

fn plot(dir: &Path, name: &str, svg: String) -> Result<()> {
    write_file(&dir.join(name), &svg)
}

fn solve_wave_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid.build()?;
    let params = cfg.wave.params()?;
    let wave = solve_wave(params, &grid, PetviashviliOptions::default())?;
    let q = &wave.profile;
    let dq = q.derivative(1)?;
    let mut csv = Csv::new(&["x", "q", "dq"]);
    for ((x, v), d) in grid.nodes().iter().zip(q.values()).zip(dq.values()) {
        csv.numbers(&[*x, *v, *d]);
    }
    csv.save(out, "wave.csv")?;
    let half = 0.5 * grid.length();
    Report::new("solve-wave")
        .num("gamma", params.gamma)
        .num("c", params.c)
        .num("residual", wave.residual)
        .int("iterations", wave.iterations)
        .num("stabilizer", wave.stabilizer)
        .num("peak_value", q.sup())
        .num("peak_position", peak_position(q))
        .num("l2_squared", wave.l2_squared())
        .num("mass", mass(q))
        .num("energy", energy(q, params.gamma))
        .num("h1_norm", q.norm(Norm::H1)?)
        .num("evenness_defect", wave.evenness_defect())
        .num("decay_constant", wave.decay_constant)
        .num("tail_estimate", wave.decay_constant / (half * half))
        .save(out, cfg)?;
    plot(
        out,
        "wave.svg",
        line_plot(
            &format!("Q for gamma = {}, c = {}", params.gamma, params.c),
            "x",
            "Q",
            &[Series { label: "Q", x: grid.nodes(), y: q.values() }],
            Scale::Linear,
            Scale::Linear,
        ),
    )?;
    println!("solve-wave: residual {:.3e}, peak {:.12}, outputs in {}", wave.residual, q.sup(), out.display());
    Ok(())
}

fn evolve_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let grid = cfg.grid.build()?;
    let params = cfg.wave.params()?;
    let wave = solve_wave(params, &grid, PetviashviliOptions::default())?;
    let u0 = wave.profile.add(&perturbation(&cfg.perturbation, &wave.profile)?);
    let traj = evolve(&u0, params.gamma, &cfg.evolution)?;
    let mut csv = Csv::new(&["t", "mass", "energy", "h1", "linf", "frame_shift"]);
    for r in &traj.records {
        csv.numbers(&[r.t, r.mass, r.energy, r.h1, r.linf, r.frame_shift]);
    }
    csv.save(out, "trajectory.csv")?;
    let mut fin = Csv::new(&["x", "u"]);
    for (x, v) in grid.nodes().iter().zip(traj.final_state.values()) {
        fin.numbers(&[*x, *v]);
    }
    fin.save(out, "final.csv")?;
    let (first, last) = (&traj.records[0], &traj.records[traj.records.len() - 1]);
    let mass_drift = (last.mass - first.mass).abs() / first.mass.abs();
    let energy_drift = (last.energy - first.energy).abs() / first.energy.abs();
    Report::new("evolve")
        .num("final_time", traj.final_time)
        .int("records", traj.records.len())
        .num("mass_initial", first.mass)
        .num("energy_initial", first.energy)
        .num("mass_relative_drift", mass_drift)
        .num("energy_relative_drift", energy_drift)
        .save(out, cfg)?;
    let t: Vec<f64> = traj.records.iter().map(|r| r.t).collect();
    let linf: Vec<f64> = traj.records.iter().map(|r| r.linf).collect();
    plot(
        out,
        "linf.svg",
        line_plot("sup |u|", "t", "sup |u|", &[Series { label: "sup |u|", x: &t, y: &linf }], Scale::Linear, Scale::Linear),
    )?;
    println!(
        "evolve: T = {}, mass drift {:.3e}, energy drift {:.3e}, outputs in {}",
        traj.final_time,
        mass_drift,
        energy_drift,
        out.display()
    );
    Ok(())
}

fn stability_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let r = run_stability(cfg)?;
    let mut csv = Csv::new(&["t", "x", "xdot", "eta_l2", "half_line_error", "right_error", "proximity"]);
    for i in 0..r.times.len() {
        csv.numbers(&[r.times[i], r.x[i], r.xdot[i], r.eta_l2[i], r.half_line_error[i], r.right_error[i], r.proximity[i]]);
    }
    csv.save(out, "stability.csv")?;
    let proximity = r.proximity.iter().cloned().fold(0.0, f64::max);
    Report::new("stability")
        .num("c", r.params.c)
        .num("gamma", r.params.gamma)
        .num("alpha_sq", r.alpha_sq)
        .num("c_star", r.c_star)
        .num("speed_defect", r.speed_defect)
        .opt("late_log_slope", r.late_slope)
        .num("max_proximity", proximity)
        .flag("error_decreasing", r.flags.error_decreasing)
        .flag("half_line_decreasing", r.flags.half_line_decreasing)
        .flag("speed_matched", r.flags.speed_matched)
        .flag("orbit_lost", r.flags.orbit_lost)
        .text("error_label", "local-window strong H1 error (weak convergence is not distinguished)")
        .save(out, cfg)?;
    plot(
        out,
        "errors.svg",
        line_plot(
            "H1 error against Q_{gamma,c*}",
            "t",
            "error",
            &[
                Series { label: "x > ct/2", x: &r.times, y: &r.half_line_error },
                Series { label: "x > x(t)", x: &r.times, y: &r.right_error },
            ],
            Scale::Linear,
            Scale::Log,
        ),
    )?;
    let cstar = vec![r.c_star; r.times.len()];
    plot(
        out,
        "speed.svg",
        line_plot(
            "translation speed",
            "t",
            "x'(t)",
            &[
                Series { label: "x'(t)", x: &r.times, y: &r.xdot },
                Series { label: "c*", x: &r.times, y: &cstar },
            ],
            Scale::Linear,
            Scale::Linear,
        ),
    )?;
    println!(
        "stability: c* = {:.10}, |x'(T) - c*| = {:.3e}, error decreasing: {}, outputs in {}",
        r.c_star,
        r.speed_defect,
        r.flags.error_decreasing,
        out.display()
    );
    if r.flags.orbit_lost {
        bail!(
            "orbit lost: proximity {:.3e} exceeded {} (run archived in {})",
            proximity,
            cfg.stability.proximity_threshold,
            out.display()
        );
    }
    Ok(())
}

fn kdv_limit_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let r = run_kdv_limit(cfg)?;
    let mut csv = Csv::new(&["gamma", "h1", "h2", "residual"]);
    for row in &r.rows {
        csv.numbers(&[row.gamma, row.h1, row.h2, row.residual]);
    }
    csv.save(out, "kdv_limit.csv")?;
    Report::new("kdv-limit")
        .num("c", r.c)
        .opt("order_h1", r.order_h1)
        .opt("order_h2", r.order_h2)
        .flag("monotone", r.monotone)
        .save(out, cfg)?;
    let g: Vec<f64> = r.rows.iter().map(|row| row.gamma.abs()).collect();
    let h1: Vec<f64> = r.rows.iter().map(|row| row.h1).collect();
    let h2: Vec<f64> = r.rows.iter().map(|row| row.h2).collect();
    plot(
        out,
        "kdv_limit.svg",
        line_plot(
            "distance to the KdV soliton",
            "|gamma|",
            "norm",
            &[Series { label: "H1", x: &g, y: &h1 }, Series { label: "H2", x: &g, y: &h2 }],
            Scale::Log,
            Scale::Log,
        ),
    )?;
    println!("kdv-limit: fitted order (H1) {:?}, outputs in {}", r.order_h1, out.display());
    Ok(())
}

fn liouville_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let r = run_liouville_probe(cfg)?;
    let mut csv = Csv::new(&["t", "R", "tail"]);
    for (t, row) in r.times.iter().zip(&r.tails) {
        for (radius, tail) in r.radii.iter().zip(row) {
            csv.numbers(&[*t, *radius, *tail]);
        }
    }
    csv.save(out, "tails.csv")?;
    let mut report = Report::new("liouville");
    report
        .num("b", r.b)
        .num("gamma", r.gamma)
        .num("c_fit", r.c_fit)
        .opt("tail_slope", r.slope);
    for (radius, sup) in r.radii.iter().zip(&r.sup_tails) {
        report.num(format!("sup_tail.R{radius}"), *sup);
    }
    if let Some(eta) = &r.eta {
        let mut e = Csv::new(&["t", "eta_l2"]);
        for (t, v) in eta.times.iter().zip(&eta.eta_l2) {
            e.numbers(&[*t, *v]);
        }
        e.save(out, "eta.csv")?;
        report
            .num("evidence.c_star", eta.c_star)
            .flag("evidence.eta_decays", eta.decays)
            .text("evidence.label", "numerical evidence only, not a verification");
    }
    report.save(out, cfg)?;
    let bound: Vec<f64> = r.radii.iter().map(|x| r.c_fit * x.powf(-0.25)).collect();
    plot(
        out,
        "tails.svg",
        line_plot(
            "sup_t tail(R)",
            "R",
            "tail",
            &[
                Series { label: "sup_t tail", x: &r.radii, y: &r.sup_tails },
                Series { label: "C R^-1/4", x: &r.radii, y: &bound },
            ],
            Scale::Log,
            Scale::Log,
        ),
    )?;
    println!("liouville: C = {:.6e}, outputs in {}", r.c_fit, out.display());
    Ok(())
}

fn monotonicity_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let r = run_monotonicity(cfg)?;
    let mut csv = Csv::new(&["R", "t", "t0", "functional", "value", "defect"]);
    let mut report = Report::new("monotonicity");
    report.num("gamma", r.gamma);
    let mut series_data = Vec::new();
    for s in &r.sweeps {
        let name = s.functional.name();
        for row in &s.rows {
            csv.row(&[num(row.radius), num(row.t), num(row.t0), name.to_string(), num(row.value), num(row.defect)]);
        }
        report
            .num(format!("{name}.t0"), s.t0)
            .num(format!("{name}.theta0"), s.theta0)
            .num(format!("{name}.k_min"), s.k_min)
            .opt(format!("{name}.slope"), s.slope);
        for (radius, d) in &s.max_defects {
            report.num(format!("{name}.max_defect.R{radius}"), *d);
        }
        let h = &s.hypotheses;
        report
            .num(format!("{name}.min_speed"), h.min_speed)
            .flag(format!("{name}.speed_ok"), h.speed_ok)
            .num(format!("{name}.loc_sup"), h.loc_sup)
            .flag(format!("{name}.loc_ok"), h.loc_ok)
            .flag(format!("{name}.gamma_ok"), h.gamma_ok);
        for (k, w) in h.warnings.iter().enumerate() {
            report.text(format!("{name}.warning{k}"), w);
        }
        let (x, y): (Vec<f64>, Vec<f64>) = s.max_defects.iter().cloned().unzip();
        series_data.push((name, x, y));
    }
    csv.save(out, "sweep.csv")?;
    report.save(out, cfg)?;
    let series: Vec<Series<'_>> = series_data
        .iter()
        .map(|(name, x, y)| Series { label: name, x, y })
        .collect();
    plot(
        out,
        "defects.svg",
        line_plot("max positive defect", "R", "defect", &series, Scale::Log, Scale::Log),
    )?;
    for s in &r.sweeps {
        println!("monotonicity: {} K = {:.3e}, slope {:?}", s.functional.name(), s.k_min, s.slope);
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn commutator_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let r = run_commutator(cfg)?;
    let mut csv = Csv::new(&["index", "hilbert", "hilbert_derivative", "ratio", "scaling_defect"]);
    for s in &r.samples {
        csv.row(&[s.index.to_string(), num(s.hilbert), num(s.hilbert_derivative), num(s.ratio), num(s.scaling_defect)]);
    }
    csv.save(out, "commutator.csv")?;
    let mut b = Csv::new(&["R", "norm", "rhs", "ratio"]);
    for row in &r.besov {
        b.numbers(&[row.radius, row.norm, row.rhs, row.ratio]);
    }
    b.save(out, "besov.csv")?;
    Report::new("commutator-test")
        .int("samples", r.samples.len())
        .num("max_ratio", r.max_ratio)
        .num("max_scaling_defect", r.max_scaling_defect)
        .opt("besov_slope", r.slope)
        .num("predicted_slope", r.predicted_slope)
        .flag("slope_within_15_percent", r.slope_ok)
        .save(out, cfg)?;
    let radii: Vec<f64> = r.besov.iter().map(|row| row.radius).collect();
    let norms: Vec<f64> = r.besov.iter().map(|row| row.norm).collect();
    let reference: Vec<f64> = radii
        .iter()
        .map(|x| norms[0] * (x / radii[0]).powf(r.predicted_slope))
        .collect();
    plot(
        out,
        "besov.svg",
        line_plot(
            "operator norm of d/dx [H, Psi_R] d/dx",
            "R",
            "norm",
            &[
                Series { label: "measured", x: &radii, y: &norms },
                Series { label: "predicted slope", x: &radii, y: &reference },
            ],
            Scale::Log,
            Scale::Log,
        ),
    )?;
    println!(
        "commutator-test: max ratio {:.4}, scaling defect {:.2e}, slope {:?} (predicted {:.4}), outputs in {}",
        r.max_ratio,
        r.max_scaling_defect,
        r.slope,
        r.predicted_slope,
        out.display()
    );
    Ok(())
}

fn rescale_cmd(cfg: &ExperimentConfig, out: &Path, lambda: f64) -> Result<()> {
    let grid = cfg.grid.build()?;
    let params = cfg.wave.params()?;
    let wave = solve_wave(params, &grid, PetviashviliOptions::default())?;
    let (v, mapped) = rescale(&wave.profile, lambda, params)?;
    let mut csv = Csv::new(&["x", "q", "rescaled"]);
    for ((x, a), b) in grid.nodes().iter().zip(wave.profile.values()).zip(v.values()) {
        csv.numbers(&[*x, *a, *b]);
    }
    csv.save(out, "rescaled.csv")?;
    let residual = eqq_residual(&v, &mapped);
    Report::new("rescale")
        .num("lambda", lambda)
        .num("gamma", params.gamma)
        .num("c", params.c)
        .num("mapped_gamma", mapped.gamma)
        .num("mapped_c", mapped.c)
        .num("profile_residual", residual)
        .num("unresolved_fraction", unresolved_fraction(&v))
        .save(out, cfg)?;
    println!(
        "rescale: (gamma, c) -> ({}, {}), residual {:.3e}, outputs in {}",
        mapped.gamma,
        mapped.c,
        residual,
        out.display()
    );
    Ok(())
}
