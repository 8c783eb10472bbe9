//! Subcommand dispatch: runs one operation from a [`RunConfig`] and writes
//! its CSV/JSON outputs plus `metadata.json` into an output directory.
//!
//! Every CSV starts with a `# seed=.. config_hash=..` comment line and every
//! JSON object carries `seed` and `config_hash`; nothing time- or
//! host-dependent is written, so reruns are byte-identical.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiments::{
    epoch_lemma_checks, fluid_convergence_with, homogenization_discrepancy, positivity_experiment,
    sum_law_check_with, ConvergenceSettings, Frequency, Reference, SumLawSettings,
};
use crate::fluid::{classify_regime, solve_complete_with, solve_general_with, FluidOptions};
use crate::measures::{asymptotic_service_rate, poisson_solve, spectral_gap, stationary_measure};
use crate::sim::{scale, simulate_with, Dynamics, NetworkState, DEFAULT_EVENT_CAP, RNG_ALGORITHM};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Enumerate,
    Stationary,
    Simulate,
    Fluid,
    Convergence,
    Homogenize,
    Hitting,
    Epochs,
    Sumlaw,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Enumerate,
        Command::Stationary,
        Command::Simulate,
        Command::Fluid,
        Command::Convergence,
        Command::Homogenize,
        Command::Hitting,
        Command::Epochs,
        Command::Sumlaw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Enumerate => "enumerate",
            Command::Stationary => "stationary",
            Command::Simulate => "simulate",
            Command::Fluid => "fluid",
            Command::Convergence => "convergence",
            Command::Homogenize => "homogenize",
            Command::Hitting => "hitting",
            Command::Epochs => "epochs",
            Command::Sumlaw => "sumlaw",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand `{s}`")))
    }
}

/// Files written by [`run`], relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
}

struct Output<'a> {
    dir: &'a Path,
    seed: u64,
    hash: String,
    files: Vec<PathBuf>,
}

impl Output<'_> {
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(fs::File::create(&path)?);
        writeln!(w, "# seed={} config_hash={}", self.seed, self.hash)?;
        body(&mut w)?;
        w.flush()?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }

    fn json(&mut self, name: &str, value: impl Serialize) -> Result<()> {
        let mut v = serde_json::to_value(value).map_err(|e| Error::Io(e.to_string()))?;
        if let Value::Object(map) = &mut v {
            map.insert("seed".into(), json!(self.seed));
            map.insert("config_hash".into(), json!(self.hash));
        }
        let text = serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.files.push(PathBuf::from(name));
        Ok(())
    }
}

fn need_scales(cfg: &RunConfig, cmd: Command) -> Result<Vec<u64>> {
    cfg.scales()
        .ok_or_else(|| Error::invalid("N", format!("required by `{cmd}`")))
}

fn strictly_decreasing(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] < w[0])
}

fn nondecreasing(f: &[Frequency]) -> bool {
    f.windows(2).all(|w| w[1].value >= w[0].value)
}

fn at_most(value: Option<f64>, level: Option<f64>) -> Option<bool> {
    Some(value? <= level?)
}

fn at_least(value: Option<f64>, level: Option<f64>) -> Option<bool> {
    Some(value? >= level?)
}

/// Runs `cmd` and writes its outputs into `out_dir` (created if missing).
pub fn run(cfg: &RunConfig, cmd: Command, out_dir: &Path) -> Result<RunOutcome> {
    let cfg = cfg.clone().validated()?;
    let params = cfg.params()?;
    fs::create_dir_all(out_dir)?;
    let mut out = Output {
        dir: out_dir,
        seed: cfg.seed,
        hash: cfg.hash(),
        files: Vec::new(),
    };
    let thr = &cfg.thresholds;
    let n = params.node_count();

    match cmd {
        Command::Enumerate => {
            let g = params.graph();
            let cat = g.stable_sets();
            out.csv("stable_sets.csv", |w| {
                writeln!(w, "index,size,maximum,sigma")?;
                for (i, s) in cat.all_sets().iter().enumerate() {
                    let max = cat.maximum_indices().binary_search(&i).is_ok();
                    writeln!(w, "{i},{},{},{}", s.size(), max as u8, s.label(n))?;
                }
                Ok(())
            })?;
            out.json(
                "enumerate.json",
                json!({
                    "nodes": n,
                    "edges": g.edges(),
                    "stable_sets": cat.len(),
                    "upsilon": cat.upsilon(),
                    "maximum_sets": cat.maximum_sets().map(|s| s.label(n)).collect::<Vec<_>>(),
                    "complete": g.is_complete(),
                }),
            )?;
        }
        Command::Stationary => {
            let q = &cfg.q0;
            let pi = stationary_measure(&params, q)?;
            out.csv("stationary.csv", |w| {
                writeln!(w, "sigma,probability")?;
                for (s, p) in pi.iter() {
                    writeln!(w, "{},{p}", s.label(n))?;
                }
                Ok(())
            })?;
            let poisson = match cfg.node {
                Some(v) => {
                    let sol = poisson_solve(&params, q, v)?;
                    let phi: serde_json::Map<String, Value> = params
                        .graph()
                        .stable_sets()
                        .all_sets()
                        .iter()
                        .zip(&sol.phi)
                        .map(|(s, &x)| (s.label(n), json!(x)))
                        .collect();
                    Some(json!({"node": v, "phi": phi, "residual": sol.residual, "mean": sol.mean}))
                }
                None => None,
            };
            out.json(
                "stationary.json",
                json!({
                    "q": q,
                    "pi": pi.iter().map(|(s, p)| (s.label(n), json!(p))).collect::<serde_json::Map<_, _>>(),
                    "a": params.a(),
                    "beta": params.beta(),
                    "marginals": pi.marginals(),
                    "asymptotic_service_rate": asymptotic_service_rate(&params, q).ok(),
                    "spectral_gap": spectral_gap(&params, q)?,
                    "poisson": poisson,
                }),
            )?;
        }
        Command::Simulate => {
            let ns = need_scales(&cfg, cmd)?;
            let mut runs = Vec::new();
            for &scale_n in &ns {
                let initial = match &cfg.q0_raw {
                    Some(raw) => NetworkState::idle(raw.clone()),
                    None => NetworkState::from_fluid(&cfg.q0, scale_n),
                };
                let raw_horizon = scale_n as f64 * cfg.horizon;
                let traj = simulate_with(&params, &initial, raw_horizon, cfg.seed, 0, Dynamics::Full, DEFAULT_EVENT_CAP)?;
                let scaled = scale(&traj, scale_n, cfg.grid_step())?;
                out.csv(&format!("trajectory_N{scale_n}.csv"), |w| traj.write_csv(w))?;
                out.csv(&format!("scaled_N{scale_n}.csv"), |w| {
                    write!(w, "t")?;
                    for v in 0..n {
                        write!(w, ",q_{v}")?;
                    }
                    writeln!(w)?;
                    for (t, x) in scaled.times.iter().zip(&scaled.values) {
                        write!(w, "{t}")?;
                        for y in x {
                            write!(w, ",{y}")?;
                        }
                        writeln!(w)?;
                    }
                    Ok(())
                })?;
                runs.push(json!({
                    "N": scale_n,
                    "raw_horizon": raw_horizon,
                    "events": traj.total_events,
                    "truncated": traj.truncated,
                    "final_queues": traj.final_state.q,
                    "sampling_bound": scaled.sampling_bound,
                }));
            }
            out.json("simulate.json", json!({ "runs": runs }))?;
        }
        Command::Fluid => {
            let opts = FluidOptions {
                output_step: Some(cfg.grid_step()),
                ..FluidOptions::default()
            };
            let (sol, regime) = if params.graph().is_complete() {
                (
                    solve_complete_with(&params, &cfg.q0, cfg.horizon, &opts)?,
                    Some(classify_regime(&params, &cfg.q0)),
                )
            } else {
                (solve_general_with(&params, &cfg.q0, cfg.horizon, &opts)?, None)
            };
            out.csv("fluid.csv", |w| sol.write_csv(w))?;
            out.json(
                "fluid.json",
                json!({
                    "exit_time": sol.exit_time,
                    "extension_mode": sol.extension_mode,
                    "metadata": sol.metadata,
                    "regime": regime,
                }),
            )?;
        }
        Command::Convergence => {
            let ns = need_scales(&cfg, cmd)?;
            let settings = ConvergenceSettings {
                grid_step: cfg.grid_step(),
                tube_radius: thr.tube_radius,
            };
            let table = fluid_convergence_with(
                &params,
                &cfg.q0,
                &ns,
                cfg.horizon,
                cfg.replicas,
                cfg.seed,
                Reference::Fluid,
                &settings,
            )?;
            out.csv("convergence.csv", |w| {
                writeln!(w, "N,replicas,median_sup_error,p90_sup_error,mean_sup_error,std_err,horizon,tube_exit_frequency")?;
                for r in &table.rows {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{}",
                        r.n, r.replicas, r.median_sup_error, r.p90_sup_error, r.sup_error.mean, r.sup_error.std_err, r.horizon, r.tube_exit.value
                    )?;
                }
                Ok(())
            })?;
            let medians = table.medians();
            out.json(
                "convergence.json",
                json!({
                    "table": table,
                    "checks": {
                        "median_strictly_decreasing": strictly_decreasing(&medians),
                        "largest_scale_within_max_error": at_most(medians.last().copied(), thr.max_error),
                    },
                }),
            )?;
        }
        Command::Homogenize => {
            let ns = need_scales(&cfg, cmd)?;
            let rep = homogenization_discrepancy(&params, &cfg.q0, &ns, cfg.horizon, cfg.replicas, cfg.seed)?;
            out.csv("homogenize.csv", |w| {
                writeln!(w, "N,replicas,mean,std_err,median,p90,box_exit_frequency")?;
                for r in &rep.rows {
                    let d = &r.discrepancy;
                    writeln!(w, "{},{},{},{},{},{},{}", r.n, r.replicas, d.mean, d.std_err, d.median, d.p90, r.box_exit.value)?;
                }
                Ok(())
            })?;
            out.json(
                "homogenize.json",
                json!({
                    "report": rep,
                    "checks": { "slope_within_max_slope": at_most(rep.slope, thr.max_slope) },
                }),
            )?;
        }
        Command::Hitting => {
            let ns = need_scales(&cfg, cmd)?;
            let rep = positivity_experiment(&params, &cfg.q0, &ns, cfg.replicas, cfg.seed)?;
            out.csv("hitting.csv", |w| {
                writeln!(w, "N,replicas,hit_frequency,hit_std_err,all_above_frequency,median_crossing_time")?;
                for r in &rep.rows {
                    let above = r.all_above.map_or(f64::NAN, |f| f.value);
                    let median = r.crossing_time.as_ref().map_or(f64::NAN, |s| s.median);
                    writeln!(w, "{},{},{},{},{above},{median}", r.n, r.replicas, r.hit.value, r.hit.std_err)?;
                }
                Ok(())
            })?;
            let hits: Vec<Frequency> = rep.rows.iter().map(|r| r.hit).collect();
            out.json(
                "hitting.json",
                json!({
                    "report": rep,
                    "checks": {
                        "frequency_nondecreasing": nondecreasing(&hits),
                        "largest_scale_above_min_frequency": at_least(hits.last().map(|f| f.value), thr.min_frequency),
                    },
                }),
            )?;
        }
        Command::Epochs => {
            let ns = need_scales(&cfg, cmd)?;
            let reports = ns
                .iter()
                .enumerate()
                .map(|(k, &scale_n)| {
                    epoch_lemma_checks(&params, &cfg.q0, scale_n, cfg.replicas, cfg.seed.wrapping_add(k as u64))
                })
                .collect::<Result<Vec<_>>>()?;
            out.csv("epochs.csv", |w| {
                writeln!(w, "N,replicas,deactivations,completes_in_time,proportion_violation,not_too_early,e_minus,e_plus,flagged")?;
                for r in &reports {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{}",
                        r.n,
                        r.replicas,
                        r.deactivations,
                        r.completes_in_time.value,
                        r.proportion_violation.value,
                        r.not_too_early.value,
                        r.e_minus.value,
                        r.e_plus.value,
                        r.flagged
                    )?;
                }
                Ok(())
            })?;
            let first: Vec<Frequency> = reports.iter().map(|r| r.completes_in_time).collect();
            let third: Vec<Frequency> = reports.iter().map(|r| r.not_too_early).collect();
            out.json(
                "epochs.json",
                json!({
                    "reports": reports,
                    "checks": {
                        "completes_in_time_nondecreasing": nondecreasing(&first),
                        "not_too_early_nondecreasing": nondecreasing(&third),
                        "largest_scale_above_min_frequency": at_least(
                            first.last().zip(third.last()).map(|(a, b)| a.value.min(b.value)),
                            thr.min_frequency,
                        ),
                    },
                }),
            )?;
        }
        Command::Sumlaw => {
            let ns = need_scales(&cfg, cmd)?;
            let settings = SumLawSettings {
                absorption_threshold: thr.absorption_level.unwrap_or(SumLawSettings::default().absorption_threshold),
            };
            let rep = sum_law_check_with(&params, &cfg.q0, &ns, cfg.horizon, cfg.replicas, cfg.seed, &settings)?;
            out.csv("sumlaw.csv", |w| {
                writeln!(w, "N,replicas,median_sup_deviation,p90_sup_deviation,median_crossing_time,crossing_frequency,median_max_at_first_empty,sup_sum_exceeds_frequency")?;
                for r in &rep.rows {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{}",
                        r.n,
                        r.replicas,
                        r.sup_deviation.median,
                        r.sup_deviation.p90,
                        r.crossing_time.median,
                        r.crossing_observed.value,
                        r.max_at_first_empty.median,
                        r.sup_sum_exceeds.value
                    )?;
                }
                Ok(())
            })?;
            let medians: Vec<f64> = rep.rows.iter().map(|r| r.sup_deviation.median).collect();
            out.json(
                "sumlaw.json",
                json!({
                    "report": rep,
                    "checks": {
                        "median_strictly_decreasing": strictly_decreasing(&medians),
                        "largest_scale_within_max_error": at_most(medians.last().copied(), thr.max_error),
                    },
                }),
            )?;
        }
    }

    let mut files: Vec<String> = out.files.iter().map(|p| p.display().to_string()).collect();
    files.push("metadata.json".into());
    let meta = json!({
        "subcommand": cmd.as_str(),
        "config": cfg,
        "rng": RNG_ALGORITHM,
        "version": env!("CARGO_PKG_VERSION"),
        "files": files,
    });
    out.json("metadata.json", meta)?;
    Ok(RunOutcome { files: out.files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn config(extra: &str) -> RunConfig {
        parse_config(&format!(
            r#"{{"graph": "complete:2", "lambda": [0.3, 0.3], "a": 0.5, "q0": [3.0, 0.0],
                "horizon": 1.0, "seed": 3, "N": [20, 40], "replicas": 4 {extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn stationary_marginals() {
        let dir = tempfile::tempdir().unwrap();
        run(&config(""), Command::Stationary, dir.path()).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("stationary.json")).unwrap()).unwrap();
        let m = v["marginals"].as_array().unwrap();
        assert!((m[0].as_f64().unwrap() - 0.5).abs() < 1e-12);
        assert!((m[1].as_f64().unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(v["seed"], 3);
        assert!((v["pi"]["10"].as_f64().unwrap() - 0.5).abs() < 1e-12);
        let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["rng"], RNG_ALGORITHM);
        assert_eq!(meta["config"]["beta"], 1.0);
    }

    #[test]
    fn every_command_runs_and_reruns_identically() {
        let interior = parse_config(
            r#"{"graph": "complete:2", "lambda": [0.2, 0.2], "a": 0.25, "q0": [1.0, 0.5],
                "horizon": 0.5, "seed": 3, "N": [20, 40], "replicas": 4}"#,
        )
        .unwrap();
        let mut empty = interior.clone();
        empty.q0 = vec![1.0, 0.0];
        for cmd in Command::ALL {
            let cfg = if cmd == Command::Epochs { &empty } else { &interior };
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            let out_a = run(cfg, cmd, a.path()).unwrap();
            run(cfg, cmd, b.path()).unwrap();
            for f in &out_a.files {
                let x = fs::read(a.path().join(f)).unwrap();
                let y = fs::read(b.path().join(f)).unwrap();
                assert_eq!(x, y, "{cmd}: {}", f.display());
            }
            let meta = a.path().join("metadata.json");
            assert!(meta.exists(), "{cmd}");
        }
    }

    #[test]
    fn unknown_and_missing() {
        assert!("bogus".parse::<Command>().is_err());
        assert_eq!("sumlaw".parse::<Command>().unwrap(), Command::Sumlaw);
        let mut cfg = config("");
        cfg.n = None;
        let dir = tempfile::tempdir().unwrap();
        let e = run(&cfg, Command::Simulate, dir.path()).unwrap_err();
        assert!(e.is_validation());
        assert!(e.to_string().contains("N"));
    }
}
