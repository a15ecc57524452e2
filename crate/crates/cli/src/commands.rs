use std::io::Write;
use std::path::{Path, PathBuf};

use aiamd::aia::{fastest_period, rho, rho_quarter, select_b, verlet_timestep_check, TimestepStatus};
use aiamd::analysis::{acf, histogram, iacf, radius_of_gyration, rmsd, rmst, TimeSeries};
use aiamd::samplers::{chain_rng, resample_momenta, run_hmc, run_md, HmcConfig, MdConfig, RunError, RunReport};
use aiamd::{PhaseState, Scheme, System};
use serde_json::{json, Value};

use crate::config::{Method, RunConfig};
use crate::error::CliError;
use crate::output::{format_g, write_observables, write_trajectory, Table, TrajectoryFile, Truncation};

fn stdout_line(line: impl AsRef<str>) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

pub fn select(cfg: &RunConfig) -> Result<(), CliError> {
    let (system, _) = cfg.build_system()?;
    let dt = cfg.require_dt()?;
    let sel = select_b(&system, dt, cfg.safety_factor)?;
    stdout_line(format!("T_min     = {}", sel.t_min))?;
    stdout_line(format!("h_bar     = {}", sel.h_bar))?;
    stdout_line(format!("b_opt     = {}", sel.b_opt))?;
    stdout_line(format!("objective = {}", sel.objective))?;
    stdout_line(format!("dt range  = (0, {})", sel.max_dt()))?;
    let mut record = serde_json::to_value(sel).expect("plain struct");
    record["max_dt"] = json!(sel.max_dt());
    stdout_line(record.to_string())
}

pub fn check_dt(cfg: &RunConfig) -> Result<(), CliError> {
    let (system, _) = cfg.build_system()?;
    let dt = cfg.require_dt()?;
    let checks = verlet_timestep_check(&system, dt)?;
    stdout_line("i,j,period,status")?;
    for c in &checks {
        let status = serde_json::to_value(c.status).expect("unit enum");
        stdout_line(format!("{},{},{},{}", c.i, c.j, c.period, status.as_str().unwrap_or("?")))?;
    }
    let errors = checks.iter().filter(|c| c.status == TimestepStatus::Error).count();
    let warnings = checks.iter().filter(|c| c.status == TimestepStatus::Warning).count();
    stdout_line(format!("{} bonds checked: {errors} error, {warnings} warning", checks.len()))?;
    if errors > 0 {
        return Err(CliError::Unstable(format!(
            "{errors} bond(s) have a period of at most 5 dt = {}",
            5.0 * dt
        )));
    }
    Ok(())
}

pub struct RunOptions {
    pub output_dir: PathBuf,
    pub replicas: usize,
}

fn suffixed(name: &str, replica: usize, replicas: usize) -> String {
    if replicas <= 1 {
        return name.to_string();
    }
    match name.rsplit_once('.') {
        Some((stem, ext)) if !stem.is_empty() => format!("{stem}.r{replica}.{ext}"),
        _ => format!("{name}.r{replica}"),
    }
}

fn header(cfg: &RunConfig, system: &System, report: &RunReport, replica: usize) -> Value {
    let (scheme, b) = match report.scheme {
        Scheme::Verlet => ("verlet", Value::Null),
        Scheme::TwoStage(b) => ("two-stage", json!(b.value())),
    };
    let mut h = json!({
        "method": if cfg.method == Method::Hmc { "HMC" } else { "MD" },
        "integrator": cfg.integrator,
        "scheme": scheme,
        "b": b,
        "dt": cfg.dt,
        "seed": cfg.seed,
        "replica": replica,
        "dimension": system.dimension(),
        "masses": system.masses(),
    });
    if let Some(sel) = &report.selection {
        h["h_bar"] = json!(sel.h_bar);
        h["t_min"] = json!(sel.t_min);
        h["safety_factor"] = json!(sel.safety_factor);
        h["objective"] = json!(sel.objective);
    } else if let Ok(t) = fastest_period(system) {
        h["t_min"] = json!(t);
        h["h_bar"] = json!(aiamd::aia::h_bar(cfg.dt.unwrap_or(0.0), t, cfg.safety_factor).ok());
    }
    h
}

fn one_run(cfg: &RunConfig, system: &System, q0: &[f64], replica: usize) -> Result<Result<RunReport, RunError>, CliError> {
    let solve = cfg.solve()?;
    let dt = cfg.require_dt()?;
    match cfg.method {
        Method::Hmc => {
            let mut h = HmcConfig::new(
                cfg.canonical_temperature.expect("checked"),
                cfg.nr_md_steps.expect("checked"),
                dt,
                cfg.integrator_spec(),
                cfg.n_proposals.expect("checked"),
                cfg.seed,
            );
            h.momentum_flip = cfg.momentum_flip;
            h.replica = replica as u64;
            h.output_stride = cfg.output_stride;
            h.solve = solve;
            let init = PhaseState::at_rest(q0.to_vec())?;
            Ok(run_hmc(system, &init, &h))
        }
        Method::Md => {
            let p = match cfg.initial_temperature {
                Some(t) => {
                    let mut rng = chain_rng(cfg.seed, replica as u64);
                    resample_momenta(system, q0, t, &mut rng)?
                }
                None => vec![0.0; q0.len()],
            };
            let mut m = MdConfig::new(cfg.integrator_spec(), dt, cfg.nsteps.expect("checked"));
            m.rescale = cfg.rescale;
            m.output_stride = cfg.output_stride;
            m.solve = solve;
            let init = PhaseState::new(q0.to_vec(), p)?;
            Ok(run_md(system, &init, &m))
        }
    }
}

fn energy_errors(report: &RunReport, hmc: bool) -> (f64, f64) {
    if hmc {
        return (report.mean_abs_delta_h(), report.max_abs_delta_h());
    }
    let h = &report.observables.total;
    match h.first() {
        Some(h0) if h.len() > 1 => {
            let d: Vec<f64> = h[1..].iter().map(|x| (x - h0).abs()).collect();
            (d.iter().sum::<f64>() / d.len() as f64, d.iter().copied().fold(0.0, f64::max))
        }
        _ => (0.0, 0.0),
    }
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<(), CliError> {
    let dt = cfg.require_dt()?;
    let missing = |k: &str| CliError::Config(crate::config::ConfigError::Invalid(format!("missing required key '{k}'")));
    match cfg.method {
        Method::Md => {
            cfg.nsteps.ok_or_else(|| missing("nsteps"))?;
        }
        Method::Hmc => {
            cfg.nr_md_steps.ok_or_else(|| missing("nr_MD_steps"))?;
            cfg.n_proposals.ok_or_else(|| missing("n_proposals"))?;
            cfg.canonical_temperature.ok_or_else(|| missing("canonical_temperature"))?;
        }
    }
    if opts.replicas == 0 {
        return Err(CliError::Usage("--replicas must be at least 1".into()));
    }
    let (system, q0) = cfg.build_system()?;
    // fail on the selection before any output exists
    cfg.integrator_spec().resolve(&system, dt)?;

    let results: Vec<Result<Result<RunReport, RunError>, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..opts.replicas)
            .map(|r| {
                let (system, q0) = (&system, &q0);
                scope.spawn(move || one_run(cfg, system, q0, r))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("replica thread panicked")).collect()
    });

    let hmc = cfg.method == Method::Hmc;
    let mut first_error = None;
    for (r, result) in results.into_iter().enumerate() {
        let (report, failure) = match result? {
            Ok(rep) => (rep, None),
            Err(e) => (*e.partial, Some(e.error)),
        };
        let truncation = failure.as_ref().map(|e| Truncation {
            reason: e.to_string(),
            records: report.observables.len(),
        });
        let traj_path = opts.output_dir.join(suffixed(&cfg.trajectory, r, opts.replicas));
        let obs_path = opts.output_dir.join(suffixed(&cfg.observables, r, opts.replicas));
        write_trajectory(&traj_path, &header(cfg, &system, &report, r), &report.frames, truncation.as_ref())?;
        write_observables(&obs_path, &report.observables, hmc, truncation.as_ref())?;

        let tag = if opts.replicas > 1 { format!("[replica {r}] ") } else { String::new() };
        match report.scheme {
            Scheme::Verlet => stdout_line(format!("{tag}scheme = verlet"))?,
            Scheme::TwoStage(b) => stdout_line(format!("{tag}scheme = two-stage, b = {}", b.value()))?,
        }
        if let Some(sel) = &report.selection {
            stdout_line(format!("{tag}h_bar = {}", sel.h_bar))?;
        }
        if hmc {
            stdout_line(format!(
                "{tag}acceptance_rate = {} ({}/{})",
                report.acceptance_rate, report.accepted, report.n_proposals
            ))?;
        }
        let (mean, max) = energy_errors(&report, hmc);
        stdout_line(format!("{tag}mean |dH| = {mean}"))?;
        stdout_line(format!("{tag}max |dH| = {max}"))?;
        stdout_line(format!("{tag}force_evals = {}", report.force_evals))?;
        if let Some(e) = failure {
            stdout_line(format!("{tag}run stopped early: {e}"))?;
            first_error.get_or_insert(e);
        }
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// `start:stop:count` (inclusive, evenly spaced) or a comma-separated list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: String| CliError::Usage(format!("grid '{spec}': {m}"));
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(bad("grid is empty".into()));
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("'{s}' is not a number")));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [list] => list.split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<Result<Vec<_>, _>>().and_then(|v| {
            if v.is_empty() {
                Err(bad("grid is empty".into()))
            } else {
                Ok(v)
            }
        }),
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().map_err(|_| bad(format!("'{n}' is not a count")))?;
            match n {
                0 => Err(bad("grid is empty".into())),
                1 => Ok(vec![a]),
                _ => Ok((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()),
            }
        }
        _ => Err(bad("expected start:stop:count or a comma-separated list".into())),
    }
}

pub fn scan_rho(b_grid: &[f64], h_grid: &[f64], output: Option<&Path>) -> Result<(), CliError> {
    let mut text = String::from("h,b,rho\n");
    for &h in h_grid {
        for &b in b_grid {
            let r = if (b - 0.25).abs() < 1e-9 { rho_quarter(h) } else { rho(h, b) };
            let r = r.map_err(|e| CliError::Usage(e.to_string()))?;
            text.push_str(&format!("{},{},{}\n", format_g(h, 6), format_g(b, 6), format_g(r, 6)));
        }
    }
    emit(output, &text)
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AnalysisTable {
    Acf,
    Iacf,
    Histogram,
    Rmsd,
    Rmst,
    Rg,
}

pub struct AnalyzeOptions {
    pub table: AnalysisTable,
    pub input: PathBuf,
    pub column: String,
    pub max_lag: Option<usize>,
    pub bin_width: Option<f64>,
    pub stride: usize,
    pub output: Option<PathBuf>,
}

fn series(path: &Path, column: &str) -> Result<TimeSeries, CliError> {
    let table = Table::read(path)?;
    let values = table.column(column)?.to_vec();
    let spacing = match table.column("time") {
        Ok(t) if t.len() >= 2 && t[1] > t[0] => t[1] - t[0],
        _ => 1.0,
    };
    Ok(TimeSeries::new(values, spacing)?)
}

fn read_trajectory(path: &Path) -> Result<TrajectoryFile, CliError> {
    let traj = TrajectoryFile::read(path)?;
    if traj.truncated {
        eprintln!("warning: {} is from a run that stopped early", path.display());
    }
    Ok(traj)
}

pub fn analyze(opts: &AnalyzeOptions) -> Result<(), CliError> {
    let mut text = String::new();
    match opts.table {
        AnalysisTable::Acf => {
            let ts = series(&opts.input, &opts.column)?;
            let max_lag = opts.max_lag.unwrap_or(ts.len().saturating_sub(1).min(1000));
            text.push_str("lag,acf\n");
            for (k, v) in acf(&ts, max_lag)?.iter().enumerate() {
                text.push_str(&format!("{k},{v}\n"));
            }
        }
        AnalysisTable::Iacf => {
            let ts = series(&opts.input, &opts.column)?;
            let r = iacf(&ts)?;
            text.push_str("column,iacf,cutoff,warning\n");
            text.push_str(&format!("{},{},{},{}\n", opts.column, r.value, r.cutoff, r.warning));
        }
        AnalysisTable::Histogram => {
            let width = opts
                .bin_width
                .ok_or_else(|| CliError::Usage("histogram needs --bin-width".into()))?;
            let table = Table::read(&opts.input)?;
            let h = histogram(table.column(&opts.column)?, width)?;
            text.push_str("bin_start,count,frequency\n");
            for (k, (c, f)) in h.counts.iter().zip(&h.frequencies).enumerate() {
                text.push_str(&format!("{},{c},{f}\n", h.bin_start(k)));
            }
        }
        AnalysisTable::Rmsd | AnalysisTable::Rg => {
            let traj = read_trajectory(&opts.input)?;
            let dim = traj.dimension()?;
            let first = traj
                .frames
                .first()
                .ok_or_else(|| CliError::Usage("trajectory has no frames".into()))?;
            if opts.table == AnalysisTable::Rmsd {
                text.push_str("step,time,rmsd\n");
                for f in &traj.frames {
                    text.push_str(&format!("{},{},{}\n", f.step, f.time, rmsd(&first.q, &f.q, dim, None)?));
                }
            } else {
                let mut b = System::builder(dim);
                for m in traj.masses()? {
                    b = b.particle(m);
                }
                let system = b.build()?;
                text.push_str("step,time,rg\n");
                for f in &traj.frames {
                    text.push_str(&format!("{},{},{}\n", f.step, f.time, radius_of_gyration(&system, &f.q)?));
                }
            }
        }
        AnalysisTable::Rmst => {
            let traj = read_trajectory(&opts.input)?;
            let qs: Vec<Vec<f64>> = traj.frames.iter().map(|f| f.q.clone()).collect();
            text.push_str("rmst\n");
            text.push_str(&format!("{}\n", rmst(&qs, traj.dimension()?, None, opts.stride)?));
        }
    }
    emit(opts.output.as_deref(), &text)
}
