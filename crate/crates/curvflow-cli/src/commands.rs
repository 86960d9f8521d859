use std::path::{Path, PathBuf};
use std::sync::Arc;

use curvflow::bubbles::{bubble_eval, interaction_integral, BubbleEnsemble, BubbleParam, InteractionKind, InteractionQuad};
use curvflow::constants::{constants_table, verify_identities};
use curvflow::decompose::{fit, Pole};
use curvflow::energy::{ScalarField, SphereGrid, SymmetricK};
use curvflow::geometry::{check_cond, Backend, CondOptions, FnSpec, KSpec, ModelSpace};
use curvflow::ode::OdeOptions;
use curvflow::pdeflow::{run, verify_monotonicity, FlowOptions};
use curvflow::shadow::{integrate, lyapunov_monotonicity, run_diverging_scenario, ShadowConfig, ShadowState};
use curvflow::Dim;
use serde_json::json;

use crate::config::{self, CheckCondConfig, Fields, FlowConfig, InitialData, InteractionsConfig, ShadowRunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{atomic_write, gnuplot_flow, gnuplot_shadow, sibling, write_json, write_text};
use crate::{Command, Scenario};

fn dim(n: u32) -> CliResult<Dim> {
    Dim::new(n).map_err(|e| CliError::config(e.to_string()))
}

/// Relative paths inside a config are taken from the config's directory.
fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    config.parent().map(|d| d.join(p)).unwrap_or_else(|| p.to_path_buf())
}

fn output_path(cli: Option<PathBuf>, cfg: Option<PathBuf>, config: &Path) -> CliResult<PathBuf> {
    cli.or_else(|| cfg.map(|p| resolve(config, &p)))
        .ok_or_else(|| CliError::config("no output path: pass --out or set `out` in the config"))
}

fn csv_to(path: &Path, f: impl FnOnce(&mut dyn std::io::Write) -> curvflow::Result<()>) -> CliResult<()> {
    atomic_write(path, |w| f(w).map_err(CliError::from))
}

/// Run one subcommand; the returned line summarizes what was written.
pub fn execute(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::Constants { dim: n, out } => constants(dim(n)?, &out),
        Command::Interactions { dim: n, config, out } => {
            let d = dim(n)?;
            interactions(d, InteractionsConfig::from_fields(Fields::read(&config)?)?, &out)
        }
        Command::Flow { config, out, emit_gnuplot } => {
            let cfg = FlowConfig::from_fields(Fields::read(&config)?)?;
            flow(cfg, &config, out, emit_gnuplot)
        }
        Command::Shadow { config, out, emit_gnuplot } => {
            let cfg = ShadowRunConfig::from_fields(Fields::read(&config)?)?;
            let out = output_path(out, cfg.out.clone(), &config)?;
            shadow(cfg, &out, emit_gnuplot)
        }
        Command::Decompose { input, dim: n, p, out, k, lambda } => decompose(dim(n)?, &input, p, &out, k.as_deref(), lambda),
        Command::CheckCond { config, out } => {
            let cfg = CheckCondConfig::from_fields(Fields::read(&config)?)?;
            let out = output_path(out, cfg.out.clone(), &config)?;
            check_condition(cfg, &out)
        }
        Command::Scenario { which: Scenario::DivergeN5 { out, config, emit_gnuplot } } => {
            let setup = match config {
                Some(c) => config::diverging_setup(Fields::read(&c)?)?,
                None => Default::default(),
            };
            diverge_n5(setup, &out, emit_gnuplot)
        }
    }
}

fn constants(d: Dim, out: &Path) -> CliResult<String> {
    let table = constants_table(d)?;
    let ids = verify_identities(&table)?;
    write_json(out, &table.to_json())?;
    let worst = [ids.e3_two_ways / table.e3, ids.b2_minus_b3 / table.b2, ids.b2_over_b1, ids.d2_over_d1]
        .into_iter()
        .chain(ids.gamma_ratio)
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if worst > 1e-8 {
        return Err(CliError::Check(format!("constant identities off by {worst:e}")));
    }
    Ok(format!("wrote {} (identities within {worst:.1e})", out.display()))
}

fn interactions(d: Dim, cfg: InteractionsConfig, out: &Path) -> CliResult<String> {
    let space = match cfg.backend {
        Backend::Flat => ModelSpace::flat(d),
        Backend::Sphere => ModelSpace::sphere(d),
    };
    let consts = constants_table(d)?;
    let quad = InteractionQuad { panels_per_log_unit: cfg.panels_per_log_unit, rel_tol: cfg.rel_tol };
    let (pi, pj) = (&cfg.bubbles[0], &cfg.bubbles[1]);
    let eps = curvflow::bubbles::epsilon(&space, pi, pj);
    let kinds = [
        (InteractionKind::SelfNorm, None),
        (InteractionKind::SelfCross(2), None),
        (InteractionKind::Pair(1), Some(pj)),
        (InteractionKind::Pair(2), Some(pj)),
        (InteractionKind::Pair(3), Some(pj)),
    ];
    let estimates = kinds
        .iter()
        .map(|(k, other)| interaction_integral(&space, *k, pi, *other, &consts, &quad))
        .collect::<curvflow::Result<Vec<_>>>()?;
    let lead = estimates[2].ratio.unwrap_or(f64::NAN);
    let pass = (cfg.band.0..=cfg.band.1).contains(&lead);
    write_json(
        out,
        &json!({
            "dim": d,
            "backend": cfg.backend,
            "epsilon": eps,
            "estimates": estimates,
            "band": [cfg.band.0, cfg.band.1],
            "pass": pass,
        }),
    )?;
    if !pass {
        return Err(CliError::Check(format!("pair ratio {lead} outside [{}, {}]", cfg.band.0, cfg.band.1)));
    }
    Ok(format!("wrote {} (pair ratio {lead:.6})", out.display()))
}

fn flow(cfg: FlowConfig, config: &Path, out: Option<PathBuf>, gnuplot: bool) -> CliResult<String> {
    let out = output_path(out, cfg.out.clone(), config)?;
    let kspec = KSpec::new(cfg.k.clone(), cfg.dim, Backend::Sphere)?;
    let field = match &cfg.init {
        InitialData::Preset(p) => {
            let g = Arc::new(SphereGrid::uniform(cfg.dim, cfg.grid_size)?);
            let k = SymmetricK::new(&kspec, &g)?;
            p.build(g, &k)?
        }
        InitialData::File(f) => {
            let path = resolve(config, f);
            let file = std::fs::File::open(&path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            let u = ScalarField::read_csv(cfg.dim, file)?;
            if u.grid().len() != cfg.grid_size {
                return Err(CliError::config(format!(
                    "`grid_size` is {} but {} has {} rows",
                    cfg.grid_size,
                    path.display(),
                    u.grid().len()
                )));
            }
            u
        }
    };
    let k = SymmetricK::new(&kspec, field.grid())?;
    let opts = FlowOptions { t_end: cfg.t_end, dt_init: cfg.dt_init, tol: cfg.tol, dt_max: cfg.dt_max };
    let result = run(field, &k, &opts)?;
    csv_to(&out, |w| result.diagnostics.write_csv(w))?;
    if let Some(f) = &cfg.final_field {
        csv_to(&resolve(config, f), |w| result.state.field.write_csv(w))?;
    }
    let report = verify_monotonicity(&result.diagnostics, k.max());
    write_json(
        &sibling(&out, "summary.json"),
        &json!({
            "steps": result.diagnostics.rows.len() - 1,
            "rejected_steps": result.rejected_steps,
            "t": result.state.t,
            "failure": result.failure,
            "checks": report,
        }),
    )?;
    if gnuplot {
        write_text(&sibling(&out, "gp"), &gnuplot_flow(&out))?;
    }
    if let Some(f) = result.failure {
        return Err(CliError::Numerical(curvflow::Error::from(f).to_string()));
    }
    if !report.all_pass() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        return Err(CliError::Check(format!("flow invariants failed: {}", failed.join(", "))));
    }
    Ok(format!("wrote {} ({} steps, all invariants hold)", out.display(), result.diagnostics.rows.len() - 1))
}

fn shadow(cfg: ShadowRunConfig, out: &Path, gnuplot: bool) -> CliResult<String> {
    let space = ModelSpace::new(cfg.dim, cfg.backend, cfg.mass.clone())?;
    let k = KSpec::new(cfg.k.clone(), cfg.dim, cfg.backend)?;
    let consts = constants_table(cfg.dim)?;
    let sc = ShadowConfig::new(space, cfg.mode, k, cfg.solution.clone(), consts, cfg.policy)?;
    let mut state = ShadowState::locked(&sc, cfg.bubbles.iter().map(|b| (b.a.clone(), b.lambda)).collect())?;
    for (p, b) in state.params.params.iter_mut().zip(&cfg.bubbles) {
        if let Some(a) = b.alpha {
            p.alpha = a;
        }
    }
    let opts = OdeOptions { rtol: cfg.rtol, atol: cfg.atol, h_max: cfg.h_max, ..OdeOptions::default() };
    let traj = integrate(&state, &sc, cfg.t_end, &opts)?;
    csv_to(out, |w| traj.write_csv(w))?;
    let lyap = cfg.lyapunov.as_ref().map(|spec| lyapunov_monotonicity(&traj, &sc, spec)).transpose()?;
    write_json(
        &sibling(out, "summary.json"),
        &json!({
            "t_end": traj.t_end(),
            "accepted_steps": traj.states.len() - 1,
            "regime_exit": traj.exit,
            "lyapunov": lyap,
        }),
    )?;
    if gnuplot {
        write_text(&sibling(out, "gp"), &gnuplot_shadow(out, cfg.bubbles.len()))?;
    }
    if let Some(rep) = &lyap {
        if !rep.pass {
            return Err(CliError::Check(format!("Lyapunov function dropped by {:e} at t = {}", -rep.min_increment, rep.at_time)));
        }
    }
    let tail = match &traj.exit {
        Some(r) => format!("stopped at t = {}: {r}", traj.t_end()),
        None => format!("reached t = {}", traj.t_end()),
    };
    Ok(format!("wrote {} ({tail})", out.display()))
}

fn decompose(d: Dim, input: &Path, p: usize, out: &Path, k: Option<&Path>, lambda: f64) -> CliResult<String> {
    if !(1..=2).contains(&p) {
        return Err(CliError::config(format!("--p must be 1 or 2 (got {p})")));
    }
    if !(lambda > 1.0) {
        return Err(CliError::config(format!("--lambda must exceed 1 (got {lambda})")));
    }
    let file = std::fs::File::open(input).map_err(|e| CliError::Input(format!("cannot read {}: {e}", input.display())))?;
    let u = ScalarField::read_csv(d, file)?;
    let kspec = match k {
        Some(path) => {
            let src = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            let spec: FnSpec = serde_json::from_str(&src)
                .map_err(|e| CliError::config(format!("{}: line {}: {e}", path.display(), e.line())))?;
            KSpec::new(spec, d, Backend::Sphere)?
        }
        None => KSpec::constant(1.0, d, Backend::Sphere),
    };
    let kv = SymmetricK::new(&kspec, u.grid())?;
    // amplitudes start where the bubble matches the field at the grid point nearest its pole
    let space = ModelSpace::sphere(d);
    let n = d.usize();
    let theta = u.grid().theta();
    let params = [Pole::North, Pole::South][..p]
        .iter()
        .map(|pole| {
            let m = if *pole == Pole::North { 0 } else { theta.len() - 1 };
            let probe = BubbleParam::new(1.0, pole.point(n), lambda);
            let phi = bubble_eval(&space, &probe, &u.grid().point(theta[m]));
            BubbleParam::new(u.values()[m] / phi, pole.point(n), lambda)
        })
        .collect();
    let r = fit(&u, &kv, &BubbleEnsemble::new(params))?;
    write_json(
        out,
        &json!({
            "dim": d,
            "bubbles": p,
            "converged": r.converged,
            "iterations": r.iterations,
            "ensemble": r.ensemble,
            "misfit": r.misfit,
            "v_norm": r.v_norm,
            "residuals": r.residuals,
            "gradient": r.gradient,
        }),
    )?;
    if !r.converged {
        return Err(CliError::Check(format!("fit did not converge in {} iterations", r.iterations)));
    }
    Ok(format!("wrote {} (misfit {:.3e}, {} iterations)", out.display(), r.misfit, r.iterations))
}

fn check_condition(cfg: CheckCondConfig, out: &Path) -> CliResult<String> {
    let space = ModelSpace::new(cfg.dim, cfg.backend, FnSpec::constant(0.0))?;
    let k = KSpec::new(cfg.k.clone(), cfg.dim, cfg.backend)?;
    let opts = CondOptions {
        budget: cfg.budget,
        margin_c: cfg.margin_c,
        variant: cfg.variant,
        box_radius: cfg.box_radius,
        tube_radius: cfg.tube_radius,
        not_round_sphere: cfg.not_round_sphere,
    };
    let rep = check_cond(&k, &space, &opts)?;
    write_json(out, &rep)?;
    if !rep.pass {
        return Err(CliError::Check(format!("condition not met ({:?}, margin {})", rep.status, rep.margin)));
    }
    Ok(format!("wrote {} (pass, margin {:.3e}, {} critical points)", out.display(), rep.margin, rep.critical_points))
}

fn diverge_n5(setup: curvflow::shadow::DivergingSetup, dir: &Path, gnuplot: bool) -> CliResult<String> {
    let (traj, rep) = run_diverging_scenario(&setup, &OdeOptions::default())?;
    let csv = dir.join("trajectory.csv");
    csv_to(&csv, |w| traj.write_csv(w))?;
    write_json(&dir.join("report.json"), &json!({ "setup": setup, "all_pass": rep.all_pass(), "report": rep }))?;
    if gnuplot {
        write_text(&dir.join("trajectory.gp"), &gnuplot_shadow(&csv, 1))?;
    }
    if !rep.all_pass() {
        let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        return Err(CliError::Check(format!("scenario assertions failed: {}", failed.join(", "))));
    }
    Ok(format!("wrote {} (all {} assertions hold)", dir.display(), rep.checks.len()))
}
