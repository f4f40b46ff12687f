use serde_json::{json, Value};

use gkls_core::generator::{
    build_generator, detailed_balance_residual, ising_measure_vector, lemma_identity_residuals,
    relative_invariance_residual, stationary_distribution,
};
use gkls_core::ising::{
    correlations_limit, correlations_periodic, current_limit, current_periodic, ln_partition_periodic,
    partition_periodic, spectrum,
};
use gkls_core::model::{
    derived_constants, invariance_conditions_check, BoundaryVariant, Configuration, MeasureParams, Topology,
};
use gkls_core::phase::{build_curve, coexistence_line, phase_grid, CurrentDensityCurve, ExtremumKind};
use gkls_core::sim::{
    current_vs_density_scan, replica_seeds, run_many, Initial, Observables, ScanSettings, SimConfig, Span,
    DEFAULT_BATCHES,
};
use gkls_core::Exec;

use crate::output::{num, OutDir};
use crate::params::Params;
use crate::{Cli, CliError, Command};

/// Residual bound for every asserted certificate.
pub const CERTIFICATE_TOL: f64 = 1e-12;
/// Agreement of the solved stationary law with the Ising measure.
pub const STATIONARY_TOL: f64 = 1e-10;
pub const REVERSIBILITY_TOL: f64 = 1e-14;

const EXEC: Exec = Exec::Parallel;

pub fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    let config = cli.config.as_deref();
    let with = |mut flags: Vec<(&'static str, Option<String>)>, extra: Vec<(&'static str, Option<String>)>| {
        flags.extend(extra);
        let mut p = Params::resolve(config, flags)?;
        p.set("seed", cli.seed);
        Ok::<_, CliError>(p)
    };
    match &cli.command {
        Command::Exact(a) => exact(cli, with(a.model.flags(), vec![("L", a.len.clone())])?),
        Command::Verify(a) => verify(cli, with(a.model.flags(), vec![("L", a.len.clone())])?),
        Command::Simulate(a) => simulate(
            cli,
            with(
                a.model.flags(),
                vec![
                    ("L", a.len.clone()),
                    ("events", a.events.clone()),
                    ("time", a.time.clone()),
                    ("burn_in", a.burn_in.clone()),
                    ("batches", a.batches.clone()),
                    ("initial", a.initial.clone()),
                    ("replicas", a.replicas.clone()),
                    ("histogram", a.histogram.then(|| "true".into())),
                ],
            )?,
        ),
        Command::Phases(a) => phases(
            cli,
            with(
                a.model.flags(),
                vec![("points", a.points.clone()), ("grid", a.grid.clone())],
            )?,
        ),
        Command::Sweep(a) => sweep(
            cli,
            with(
                a.model.flags(),
                vec![
                    ("pairs", a.pairs.clone()),
                    ("points", a.points.clone()),
                    ("simulate", a.simulate.then(|| "true".into())),
                    ("sim_x", a.sim_x.clone()),
                    ("sim_len", a.sim_len.clone()),
                    ("events", a.events.clone()),
                    ("burn_in", a.burn_in.clone()),
                ],
            )?,
        ),
    }
}

fn float_list(p: &Params, key: &str, default: &str) -> Result<Vec<f64>, CliError> {
    p.str(key)
        .unwrap_or(default)
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{key}: {s:?} is not a number")))
        })
        .collect()
}

fn exact(cli: &Cli, mut p: Params) -> Result<u8, CliError> {
    let dynamics = p.any_kinetic();
    let kin = if dynamics { Some(p.kinetics()?) } else { None };
    let x = p
        .fugacity()?
        .ok_or_else(|| CliError::Usage("missing required parameter --x (or --phi)".into()))?;
    let m = match &kin {
        Some(k) => p.bound_measure(k, x)?,
        None => {
            let y = p
                .interaction()?
                .ok_or_else(|| CliError::Usage("missing --y (or --J) or kinetic rates".into()))?;
            MeasureParams::new(x, y)?
        }
    };
    p.set("y", m.y);
    let spec = spectrum(&m);
    let lens = p.str("L").unwrap_or("inf").to_string();
    let mut rows = Vec::new();
    let mut partitions = Vec::new();
    for item in lens.split(',').map(str::trim) {
        let (label, corr, j) = if item == "inf" {
            let c = correlations_limit(&spec);
            let j = kin.as_ref().map(|k| current_limit(k, &spec)).transpose()?;
            ("inf".to_string(), c, j)
        } else {
            let len: usize = item
                .parse()
                .map_err(|_| CliError::Usage(format!("L = {item:?} is not a length")))?;
            if len < 3 {
                return Err(CliError::Usage(format!("L = {len}: correlations need L >= 3")));
            }
            let c = correlations_periodic(len, &spec)?;
            let j = match &kin {
                Some(k) if len >= 4 => Some(current_periodic(len, k, &spec)?),
                _ => None,
            };
            let (z, ln_z) = (partition_periodic(len, &spec), ln_partition_periodic(len, &spec));
            eprintln!("L={len} Z={z} lnZ={ln_z}");
            partitions.push(json!({ "L": len, "Z": z, "lnZ": ln_z }));
            (len.to_string(), c, j)
        };
        rows.push(vec![
            label,
            num(corr.density),
            j.map(num).unwrap_or_default(),
            num(corr.density - corr.nn_10),
            num(corr.nnn_110),
            num(corr.nnn_101),
            num(spec.lambda_max),
            num(spec.lambda_min),
        ]);
    }
    let mut out = OutDir::create(&cli.out_dir, "exact")?;
    out.csv(
        "exact.csv",
        &[
            "L",
            "rho",
            "j",
            "corr_nn",
            "corr_110",
            "corr_101",
            "lambda_max",
            "lambda_min",
        ],
        &rows,
    )?;
    out.json("partition.json", &partitions)?;
    out.finish(&p, vec![])?;
    Ok(0)
}

fn verify(cli: &Cli, mut p: Params) -> Result<u8, CliError> {
    let len = p.need_usize("L")?;
    let model = p.model(len)?;
    let kin = *model.kinetics();
    let top = model.topology();
    let x = match top {
        Topology::Periodic => p.fugacity()?.unwrap_or(1.0),
        Topology::Open => p.open_fugacity(&kin)?,
    };
    let m = p.bound_measure(&kin, x)?;
    p.set("x", x);
    p.set("y", m.y);
    let q = build_generator(&model, EXEC)?;
    let mu = ising_measure_vector(len, top, &m, true)?;
    let invariance = relative_invariance_residual(&q, &mu);
    let db = detailed_balance_residual(&q, &mu)?;
    let reversible = db < REVERSIBILITY_TOL;
    let mut failures = Vec::new();
    if invariance >= CERTIFICATE_TOL {
        failures.push(format!("invariance residual {invariance:e}"));
    }
    let mut report = json!({
        "topology": format!("{top:?}").to_lowercase(),
        "L": len,
        "x": x,
        "y": m.y,
        "invariance": { "relative_residual": invariance, "tolerance": CERTIFICATE_TOL, "pass": invariance < CERTIFICATE_TOL },
    });
    let expected_reversible = match top {
        Topology::Periodic => kin.is_symmetric(),
        Topology::Open => {
            let dc = derived_constants(&kin, model.boundary(), &m);
            let cond = invariance_conditions_check(&dc, &m);
            report["conditions"] = json!({
                "c0": dc.c0, "c1": dc.c1, "c2": dc.c2,
                "c1m": dc.c1m, "c2m": dc.c2m, "c1p": dc.c1p, "c2p": dc.c2p,
                "residuals": cond.residuals, "tolerance": cond.tolerance, "satisfied": cond.satisfied,
            });
            let mut variants = serde_json::Map::new();
            for v in [BoundaryVariant::VacuumExtended, BoundaryVariant::AsWritten] {
                let qv = build_generator(&model.with_variant(v), EXEC)?;
                let name = if v == BoundaryVariant::AsWritten {
                    "as_written"
                } else {
                    "vacuum_extended"
                };
                variants.insert(
                    name.into(),
                    json!({ "relative_invariance_residual": relative_invariance_residual(&qv, &mu) }),
                );
            }
            report["variants"] = Value::Object(variants);
            report["variant"] = json!(if model.variant() == BoundaryVariant::AsWritten {
                "as_written"
            } else {
                "vacuum_extended"
            });
            let pi = stationary_distribution(&q)?;
            let diff = pi.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            report["stationary"] =
                json!({ "max_abs_diff": diff, "tolerance": STATIONARY_TOL, "pass": diff < STATIONARY_TOL });
            if diff >= STATIONARY_TOL {
                failures.push(format!("stationary law differs from the Ising measure by {diff:e}"));
            }
            if (5..=12).contains(&len) {
                let l = lemma_identity_residuals(&model, &m)?;
                let pass = l.max() < CERTIFICATE_TOL;
                report["lemma"] = json!({
                    "bulk_sum": l.bulk_sum, "h_minus": l.h_minus, "h_plus": l.h_plus,
                    "b_minus": l.b_minus, "b_plus": l.b_plus, "pass": pass,
                });
                if !pass {
                    failures.push(format!("block identity residual {:e}", l.max()));
                }
            }
            kin.is_symmetric()
                && [dc.c1m, dc.c2m, dc.c1p, dc.c2p]
                    .iter()
                    .all(|c| c.abs() < CERTIFICATE_TOL)
        }
    };
    report["detailed_balance"] = json!({
        "residual": db, "reversible": reversible, "expected": expected_reversible,
        "pass": reversible == expected_reversible,
    });
    if reversible != expected_reversible {
        failures.push(format!("reversibility {reversible} but expected {expected_reversible}"));
    }
    report["pass"] = json!(failures.is_empty());
    let mut out = OutDir::create(&cli.out_dir, "verify")?;
    out.json("verify.json", &report)?;
    out.finish(&p, vec![])?;
    if failures.is_empty() {
        eprintln!("all certificates pass (invariance residual {invariance:e})");
        Ok(0)
    } else {
        let e = CliError::Certificate(failures.join("; "));
        eprintln!("gkls: {e}");
        Ok(e.exit_code())
    }
}

fn initial(p: &Params, top: Topology) -> Result<Initial, CliError> {
    let spec = p.str("initial").unwrap_or(match top {
        Topology::Open => "empty",
        Topology::Periodic => "bernoulli:0.5",
    });
    let bad = || CliError::Usage(format!("cannot parse initial condition {spec:?}"));
    Ok(match spec.split_once(':') {
        None if spec == "empty" => Initial::Empty,
        None if spec == "full" => Initial::Full,
        None => Initial::Explicit(Configuration::parse(spec, top)?),
        Some(("bernoulli", v)) => Initial::Bernoulli(v.parse().map_err(|_| bad())?),
        Some(("fixed", v)) => Initial::FixedNumber(v.parse().map_err(|_| bad())?),
        Some(_) => return Err(bad()),
    })
}

fn observables_json(o: &Observables) -> Value {
    let e = |v: gkls_core::sim::Estimate| json!({ "mean": v.mean, "stderr": v.stderr });
    json!({
        "mean_density": e(o.mean_density),
        "bulk_density": e(o.bulk_density),
        "bulk_current": e(o.bulk_current),
        "nn_10": e(o.nn_10),
        "nnn_101": e(o.nnn_101),
        "nnn_110": e(o.nnn_110),
        "left_reservoir_influx": e(o.reservoir_fluxes[0]),
        "right_reservoir_outflux": e(o.reservoir_fluxes[1]),
        "bulk_window": [o.window.0 + 1, o.window.1],
        "total_events": o.total_events,
        "measured_events": o.measured_events,
        "measured_time": o.measured_time,
        "absorbed": o.absorbed,
    })
}

fn simulate(cli: &Cli, mut p: Params) -> Result<u8, CliError> {
    let len = p.need_usize("L")?;
    let model = p.model(len)?;
    let measure = match (p.u64("events")?, p.f64("time")?) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give --events or --time, not both".into())),
        (None, Some(t)) => Span::Time(t),
        (n, None) => Span::Events(n.unwrap_or(1_000_000)),
    };
    let replicas = p.usize("replicas")?.unwrap_or(1).max(1);
    let seeds = replica_seeds(cli.seed, replicas);
    let init = initial(&p, model.topology())?;
    let mut configs = Vec::with_capacity(replicas);
    for &seed in &seeds {
        let mut c = SimConfig::new(model, measure, seed);
        c.initial = init.clone();
        c.burn_in = p.u64("burn_in")?.map(Span::Events);
        c.n_batches = p.usize("batches")?.unwrap_or(DEFAULT_BATCHES);
        c.state_histogram = p.has("histogram");
        c.validate()?;
        configs.push(c);
    }
    let results = run_many(&configs, EXEC).into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut out = OutDir::create(&cli.out_dir, "simulate")?;
    let mut summary = Vec::new();
    for (i, o) in results.iter().enumerate() {
        let suffix = if replicas == 1 { String::new() } else { format!("_{i}") };
        let profile: Vec<Vec<String>> = o
            .density_profile
            .iter()
            .enumerate()
            .map(|(k, e)| vec![(k + 1).to_string(), num(e.mean), num(e.stderr)])
            .collect();
        out.csv(
            &format!("profile{suffix}.csv"),
            &["site", "density", "stderr"],
            &profile,
        )?;
        let currents: Vec<Vec<String>> = o
            .bond_currents
            .iter()
            .enumerate()
            .map(|(k, e)| vec![(k + 1).to_string(), num(e.mean), num(e.stderr)])
            .collect();
        out.csv(&format!("currents{suffix}.csv"), &["bond", "j", "stderr"], &currents)?;
        if let Some(h) = &o.state_histogram {
            let rows: Vec<Vec<String>> = h
                .iter()
                .enumerate()
                .map(|(s, f)| {
                    let cfg = Configuration::from_index(s, len, model.topology()).expect("length validated");
                    vec![s.to_string(), cfg.to_string(), num(*f)]
                })
                .collect();
            out.csv(
                &format!("histogram{suffix}.csv"),
                &["state", "configuration", "fraction"],
                &rows,
            )?;
        }
        let mut s = observables_json(o);
        s["seed"] = json!(seeds[i]);
        summary.push(s);
        eprintln!(
            "replica {i}: bulk current {:.6} +- {:.6}, bulk density {:.6}, {:.2}s",
            o.bulk_current.mean, o.bulk_current.stderr, o.bulk_density.mean, o.wall_time_secs
        );
    }
    out.json("summary.json", &summary)?;
    out.finish(&p, seeds)?;
    Ok(0)
}

fn curve_summary(c: &CurrentDensityCurve) -> Result<Value, CliError> {
    let ext: Vec<Value> = c
        .extrema()
        .iter()
        .map(|e| json!({ "rho": e.rho, "j": e.j, "kind": if e.kind == ExtremumKind::Max { "max" } else { "min" } }))
        .collect();
    Ok(json!({
        "zero_crossings": c.zero_crossings(),
        "extrema": ext,
        "j_at_half": c.current_at(0.5)?,
        "flat": c.is_flat(),
    }))
}

fn curve_points(p: &Params) -> Result<usize, CliError> {
    Ok(p.usize("points")?.unwrap_or(400))
}

fn phases(cli: &Cli, mut p: Params) -> Result<u8, CliError> {
    let kin = p.kinetics()?;
    let n = p.usize("grid")?.unwrap_or(50);
    if n < 2 {
        return Err(CliError::Usage(format!("--grid {n}: the phase grid needs n >= 2")));
    }
    let points = curve_points(&p)?;
    p.set("points", points);
    p.set("grid", n);
    let curve = build_curve(&kin, points, EXEC)?;
    let mut out = OutDir::create(&cli.out_dir, "phases")?;
    let rows: Vec<Vec<String>> = curve
        .samples()
        .iter()
        .map(|s| vec![num(s.x), num(s.rho), num(s.j)])
        .collect();
    out.csv("curve.csv", &["x", "rho", "j"], &rows)?;
    if curve.is_flat() {
        out.finish(&p, vec![])?;
        return Err(CliError::Degenerate(
            "j vanishes at every density (r = ell, kappa = lambda); the extremal-current principle selects no phase"
                .into(),
        ));
    }
    let grid = phase_grid(&curve, n, EXEC)?;
    let rows: Vec<Vec<String>> = grid
        .cells
        .iter()
        .map(|c| {
            vec![
                num(c.rho_minus),
                num(c.rho_plus),
                c.label.phase.code().to_string(),
                num(c.label.bulk_density),
                num(c.label.bulk_current),
                c.uphill.to_string(),
            ]
        })
        .collect();
    out.csv(
        "grid.csv",
        &["rho_minus", "rho_plus", "phase", "bulk_rho", "bulk_j", "uphill"],
        &rows,
    )?;
    let line = coexistence_line(&curve, &grid)?;
    let rows: Vec<Vec<String>> = line.iter().map(|&(a, b)| vec![num(a), num(b)]).collect();
    out.csv("coexistence.csv", &["rho_minus", "rho_plus"], &rows)?;
    out.json("phases.json", &curve_summary(&curve)?)?;
    out.finish(&p, vec![])?;
    Ok(0)
}

fn sweep(cli: &Cli, mut p: Params) -> Result<u8, CliError> {
    let pairs_text = p.str("pairs").unwrap_or("").trim().to_string();
    if pairs_text.is_empty() {
        return Err(CliError::Usage("--pairs needs at least one r:kappa pair".into()));
    }
    let mut pairs = Vec::new();
    for item in pairs_text.split(',') {
        let (r, k) = item
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("pair {item:?} is not of the form r:kappa")))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad number in pair {item:?}")))
        };
        pairs.push((parse(r)?, parse(k)?));
    }
    let points = curve_points(&p)?;
    p.set("points", points);
    let simulate = p.has("simulate");
    let seeds = replica_seeds(cli.seed, pairs.len());
    let mut out = OutDir::create(&cli.out_dir, "sweep")?;
    let mut summary = Vec::new();
    for (i, &(r, kappa)) in pairs.iter().enumerate() {
        let mut q = p.clone();
        q.set("r", r);
        q.set("kappa", kappa);
        let kin = q.kinetics()?;
        let curve = build_curve(&kin, points, EXEC)?;
        let rows: Vec<Vec<String>> = curve.samples().iter().map(|s| vec![num(s.rho), num(s.j)]).collect();
        out.csv(&format!("curve_{i}.csv"), &["rho", "j"], &rows)?;
        let mut s = curve_summary(&curve)?;
        s["r"] = json!(r);
        s["kappa"] = json!(kappa);
        if simulate {
            let settings = ScanSettings {
                len: p.usize("sim_len")?.unwrap_or(200),
                burn_in: p.u64("burn_in")?.map(Span::Events),
                measure: Span::Events(p.u64("events")?.unwrap_or(1_000_000)),
                n_batches: DEFAULT_BATCHES,
                seed: seeds[i],
            };
            let xs = float_list(&p, "sim_x", "0.25,0.5,1,2,4")?;
            let pts = current_vs_density_scan(&kin, &xs, &settings, EXEC)?;
            let rows: Vec<Vec<String>> = pts
                .iter()
                .map(|t| {
                    vec![
                        num(t.x),
                        t.particles.to_string(),
                        num(t.density),
                        num(t.current.mean),
                        num(t.current.stderr),
                        num(t.exact),
                    ]
                })
                .collect();
            out.csv(
                &format!("sim_{i}.csv"),
                &["x", "particles", "rho", "j", "stderr", "j_exact"],
                &rows,
            )?;
            s["seed"] = json!(seeds[i]);
        }
        summary.push(s);
    }
    out.json("sweep.json", &summary)?;
    out.finish(&p, if simulate { seeds } else { vec![] })?;
    Ok(0)
}
