use std::fs;
use std::path::Path;

use latticediff::diagrams::{
    check_irreducible_bounds, classify, enumerate_pairings, integrate_unconstrained,
    Classification, ExpKernel,
};
use latticediff::*;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{num, Run};
use crate::{
    CliError, DiagramsArgs, DiffusionArgs, PsiArgs, RatesArgs, SimulateArgs, SpectrumArgs,
    ValidateArgs,
};

type Result<T, E = Error> = std::result::Result<T, E>;

/// Spectral work is skipped for KMC warnings above this many states.
const SPECTRAL_STATE_LIMIT: usize = 2048;

fn load(path: &Path) -> Result<(ModelConfig, Vec<u8>), CliError> {
    let bytes = fs::read(path).map_err(Error::from)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = ModelConfig::from_json(text)?;
    Ok((cfg, bytes))
}

fn load_valid(path: &Path) -> Result<(ModelConfig, Vec<u8>, ValidationReport), CliError> {
    let (cfg, bytes) = load(path)?;
    let report = validate_model(&cfg)?;
    Ok((cfg, bytes, report))
}

fn parse_vector(text: &str, dim: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("cannot parse {what} '{text}'")))?;
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        }
        .into());
    }
    Ok(v)
}

fn outcome<T: Serialize>(r: Result<T>) -> Value {
    match r {
        Ok(v) => serde_json::to_value(v).unwrap_or(Value::Null),
        Err(e) => json!({ "error": { "kind": e.kind(), "message": e.to_string() } }),
    }
}

pub fn validate(a: &ValidateArgs, argv: &[String]) -> Result<(), CliError> {
    let (cfg, bytes) = load(&a.config)?;
    let report = validate_model(&cfg)?;
    let mut run = Run::new("validate", argv, Some(&bytes), Some(cfg.rng_seed));
    let body = json!({ "passed": true, "checks": report.checks, "warnings": report.warnings });
    print!("{}", run.json_text(&body)?);
    if let Some(out) = &a.out {
        run.write_json(out, &body)?;
        run.finish(out)?;
    }
    Ok(())
}

pub fn psi(a: &PsiArgs, argv: &[String]) -> Result<(), CliError> {
    let (cfg, bytes, _) = load_valid(&a.config)?;
    let x = parse_vector(&a.x, cfg.dim, "--x")?;
    if !(a.dt > 0.0) || !(a.tmax >= a.tmin) {
        return Err(CliError::Usage("need dt > 0 and tmax >= tmin".into()));
    }
    let corr = CorrelationFunction::with_defaults(cfg.bath_profile()?)?;
    let n = ((a.tmax - a.tmin) / a.dt).round() as usize;
    let rows = (0..=n)
        .into_par_iter()
        .map(|i| {
            let t = a.tmin + a.dt * i as f64;
            let v = corr.psi_xt(&x, t)?;
            Ok(vec![num(t), num(v.re), num(v.im)])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut run = Run::new("psi", argv, Some(&bytes), None);
    run.write_csv(&a.out, &["t".into(), "re".into(), "im".into()], &rows)?;
    if let Some(path) = &a.decay {
        let t_lo = 5.0f64.min(0.5 * a.tmax);
        let report = json!({
            "dim": cfg.dim,
            "tau_max": corr.tau_max(),
            "truncated": corr.is_truncated(),
            "noise_floor": corr.noise_floor(),
            "power_law": outcome(corr.check_power_law(t_lo, a.tmax)),
            "subluminal": outcome(corr.check_subluminal_decay(a.v_star, a.tmax)),
            "integrability": outcome(corr.check_time_integrability(a.tmax)),
        });
        run.write_json(path, &report)?;
    }
    run.finish(&a.out)?;
    Ok(())
}

pub fn rates(a: &RatesArgs, argv: &[String]) -> Result<(), CliError> {
    let (cfg, bytes, _) = load_valid(&a.config)?;
    let gen = Generator::new(&cfg)?;
    let corr = CorrelationFunction::with_defaults(cfg.bath_profile()?)?;
    let lamb = corr.lamb_shift(&cfg.spin)?;
    let nk = gen.grid.len();
    let outflow = gen.kernel_outflow();
    let row_sum_error = outflow
        .iter()
        .enumerate()
        .map(|(i, v)| (v - gen.escape[i / nk]).abs() / gen.escape[i / nk])
        .fold(0.0, f64::max);
    let channels: Vec<Value> = gen
        .table
        .channels
        .iter()
        .map(|c| {
            json!({
                "from": c.from,
                "to": c.to,
                "amplitude": c.amplitude,
                "radius": c.radius,
                "rate": gen.table.channel_rate(c),
            })
        })
        .collect();
    let report = json!({
        "dim": cfg.dim,
        "beta": cfg.beta,
        "levels": gen.table.levels,
        "sphere_area": gen.table.sphere_area(),
        "sphere_nodes": gen.table.sphere.weights.len(),
        "channels": channels,
        "escape_rates": gen.escape,
        "grid_points": nk,
        "row_sum_max_relative_error": row_sum_error,
        "lamb_shift": lamb,
    });
    let mut run = Run::new("rates", argv, Some(&bytes), None);
    run.write_json(&a.out, &report)?;
    if let Some(path) = &a.dump_matrix {
        let m = &gen.m00;
        let mut rows = Vec::new();
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                let v = m[(r, c)];
                if v != 0.0 {
                    rows.push(vec![r.to_string(), c.to_string(), num(v), num(0.0)]);
                }
            }
        }
        rows.sort_by_key(|r| {
            (
                r[0].parse::<usize>().unwrap(),
                r[1].parse::<usize>().unwrap(),
            )
        });
        run.write_csv(
            path,
            &["row".into(), "col".into(), "re".into(), "im".into()],
            &rows,
        )?;
    }
    run.finish(&a.out)?;
    Ok(())
}

pub fn spectrum(a: &SpectrumArgs, argv: &[String]) -> Result<(), CliError> {
    let (cfg, bytes, _) = load_valid(&a.config)?;
    if a.axis >= cfg.dim || a.steps == 0 {
        return Err(CliError::Usage(format!(
            "need --axis < {} and --steps > 0",
            cfg.dim
        )));
    }
    let gen = Generator::new(&cfg)?;
    let solver = SpectralSolver::new(&gen)?;
    let rows = (0..=a.steps)
        .into_par_iter()
        .map(|i| {
            let p = a.pmax * i as f64 / a.steps as f64;
            let mut pv = vec![0.0; cfg.dim];
            pv[a.axis] = p;
            let f = solver.perron_real(&pv)?.value;
            let gap = if a.no_gap {
                String::new()
            } else {
                let s = solver.full_spectrum(&pv)?;
                num(s[0].re - s.get(1).map_or(f64::NEG_INFINITY, |z| z.re))
            };
            Ok(vec![num(p), num(f.re), num(f.im), gap])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut run = Run::new("spectrum", argv, Some(&bytes), None);
    run.write_csv(
        &a.out,
        &["p".into(), "re_f".into(), "im_f".into(), "gap".into()],
        &rows,
    )?;
    run.finish(&a.out)?;
    Ok(())
}

pub fn diffusion(a: &DiffusionArgs, argv: &[String]) -> Result<(), CliError> {
    let (cfg, bytes, _) = load_valid(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.rng_seed);
    let gen = Generator::new(&cfg)?;
    let solver = SpectralSolver::new(&gen)?;
    let hess = diffusion_tensor_hessian(&solver, a.h)?;
    let formula = diffusion_tensor_formula(&solver)?;
    let scale = formula
        .d
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let diff = hess
        .d
        .iter()
        .flatten()
        .zip(formula.d.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let kmc = if a.kmc_traj > 0 {
        let t_final = a.kmc_tfinal.unwrap_or(200.0 / solver.gap_at_zero());
        let engine = KmcEngine::new(&cfg)?;
        let stats = run_ensemble(&engine, &EnsembleConfig::new(a.kmc_traj, t_final, seed))?;
        json!({
            "d": stats.diffusion,
            "d_se": stats.diffusion_se,
            "n_traj": stats.n_traj,
            "t_final": t_final,
            "seed": seed,
        })
    } else {
        Value::Null
    };
    let report = json!({
        "dim": cfg.dim,
        "gap_at_zero": solver.gap_at_zero(),
        "hessian": hess,
        "formula": formula,
        "hessian_formula_relative_difference": if scale > 0.0 { diff / scale } else { diff },
        "kmc": kmc,
    });
    let mut run = Run::new("diffusion", argv, Some(&bytes), Some(seed));
    run.write_json(&a.out, &report)?;
    run.finish(&a.out)?;
    Ok(())
}

pub fn simulate(a: &SimulateArgs, argv: &[String]) -> Result<(), CliError> {
    let (cfg, bytes, _) = load_valid(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.rng_seed);
    let engine = KmcEngine::new(&cfg)?;
    let probes = a
        .probe
        .iter()
        .map(|p| parse_vector(p, cfg.dim, "--probe"))
        .collect::<Result<Vec<_>, _>>()?;
    let ec = EnsembleConfig {
        n_traj: a.traj,
        t_final: a.tfinal,
        checkpoints: a.checkpoint.clone(),
        probes,
        k_bins: a.k_bins,
        seed,
    };
    let mut stats = run_ensemble(&engine, &ec)?;
    let states = cfg.grid.points_per_axis.pow(cfg.dim as u32) * cfg.spin.n_levels();
    if states <= SPECTRAL_STATE_LIMIT {
        let gen = Generator::new(&cfg)?;
        let gap = SpectralSolver::new(&gen)?.gap_at_zero();
        if a.tfinal * gap < 10.0 {
            stats.warnings.push(format!(
                "t_final = {} is short compared with the relaxation time 1/gap = {:.3}",
                a.tfinal,
                1.0 / gap
            ));
        }
    }
    let mut run = Run::new("simulate", argv, Some(&bytes), Some(seed));
    run.write_json(&a.out, &stats)?;
    if let Some(path) = &a.dump_paths {
        let d = cfg.dim;
        let mut header = vec!["traj".to_string(), "event".into(), "t".into()];
        header.extend((0..d).map(|i| format!("x{i}")));
        header.extend((0..d).map(|i| format!("k{i}")));
        header.push("e".into());
        let rows: Vec<Vec<String>> = (0..a.paths_traj.min(a.traj))
            .into_par_iter()
            .map(|i| {
                engine
                    .trajectory(seed, i as u64, a.tfinal, a.paths_events)
                    .into_iter()
                    .enumerate()
                    .map(|(ev, s)| {
                        let mut r = vec![i.to_string(), ev.to_string(), num(s.t)];
                        r.extend(s.x.iter().map(|v| num(*v)));
                        r.extend(s.k.iter().map(|v| num(*v)));
                        r.push(s.e.to_string());
                        r
                    })
                    .collect::<Vec<_>>()
            })
            .flatten()
            .collect();
        run.write_csv(path, &header, &rows)?;
    }
    run.finish(&a.out)?;
    Ok(())
}

fn parse_samples(text: &str) -> Result<usize, CliError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("cannot parse --samples '{text}'")))?;
    if !(v >= 2.0) || v.fract() != 0.0 || v > 1e12 {
        return Err(CliError::Usage(format!(
            "--samples must be an integer >= 2, got '{text}'"
        )));
    }
    Ok(v as usize)
}

pub fn diagrams(a: &DiagramsArgs, argv: &[String]) -> Result<(), CliError> {
    let mut run = Run::new("diagrams", argv, None, Some(a.seed));
    let report = if a.check_bounds {
        let k = ExpKernel::parse(&a.k)?;
        serde_json::to_value(check_irreducible_bounds(
            &k,
            a.a,
            a.n_max,
            parse_samples(&a.samples)?,
            a.seed,
        )?)
        .map_err(Error::from)?
    } else if a.unconstrained {
        let k = ExpKernel::parse(&a.k)?;
        serde_json::to_value(integrate_unconstrained(
            &k,
            a.t,
            a.n_max,
            parse_samples(&a.samples)?,
            a.seed,
        )?)
        .map_err(Error::from)?
    } else {
        let shapes = enumerate_pairings(a.n)?;
        let classes: Vec<Classification> = shapes.iter().map(classify).collect();
        if a.out.is_none() {
            for (s, c) in shapes.iter().zip(&classes) {
                println!("{s} {c}");
            }
            return Ok(());
        }
        let count =
            |want: &dyn Fn(&Classification) -> bool| classes.iter().filter(|c| want(c)).count();
        json!({
            "n": a.n,
            "shapes": shapes.iter().zip(&classes).map(|(s, c)| json!({"shape": s.to_string(), "class": c})).collect::<Vec<_>>(),
            "counts": {
                "total": shapes.len(),
                "irreducible": count(&|c| *c != Classification::Reducible),
                "minimally_irreducible": count(&|c| *c == Classification::MinimallyIrreducible),
            },
        })
    };
    match &a.out {
        Some(out) => {
            run.write_json(out, &report)?;
            run.finish(out)?;
        }
        None => print!("{}", run.json_text(&report)?),
    }
    Ok(())
}
