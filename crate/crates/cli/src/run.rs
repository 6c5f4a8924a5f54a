//! Subcommand runners. Each one builds and validates everything it needs
//! before computing, and hands back the files to write.

use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use fdss_se::bounds::{corrected_bound, papr_upper_gu, papr_upper_qam_approx, papr_upper_u, NfftPolicy};
use fdss_se::channel::SampledProfile;
use fdss_se::metrics::{CcdfEstimate, PaprSimulation};
use fdss_se::optimizer::{tradeoff_report, CapaSearch, PaprSearch, SeMethod, SeSearchResult};
use fdss_se::receiver::{rate_curve, BerPoint, LinkSimulation, RatePoint};
use fdss_se::window::WindowSpec;
use fdss_se::{Constellation, WaveformConfig, Window};

use crate::config::{Axis, ExperimentConfig};
use crate::output::{csv_bytes, json_bytes, Outputs};
use crate::CliError;

/// One point of a `ne`/`L`/ripple sweep.
#[derive(Clone, Debug)]
struct Point {
    cfg: WaveformConfig,
    window_spec: WindowSpec,
    window: Window,
}

impl Point {
    fn ripple_db(&self) -> f64 {
        self.window.ripple_db().unwrap_or(0.0)
    }
}

fn metadata(cfg: &ExperimentConfig, command: &str) -> Value {
    json!({
        "command": command,
        "version": crate::VERSION,
        "seed": cfg.monte_carlo.seed,
        "trials": cfg.monte_carlo.trials,
        "config": cfg,
    })
}

/// Sweep points of `cfg` along `allowed` axes; the base point when there is
/// no sweep. The FFT size is the configured one, before any policy.
fn points(cfg: &ExperimentConfig, allowed: &[Axis]) -> Result<Vec<Point>, CliError> {
    let base = |ne: usize, l: Option<i64>, spec: &WindowSpec| -> Result<Point, CliError> {
        let mut wc = cfg.config_at(ne)?;
        if let Some(l) = l {
            wc = wc.with_shift(l);
        }
        Ok(Point {
            cfg: wc,
            window_spec: spec.clone(),
            window: spec.build(cfg.waveform.nsc)?,
        })
    };
    let Some(sweep) = &cfg.sweep else {
        return Ok(vec![base(cfg.waveform.ne, None, &cfg.window)?]);
    };
    if !allowed.contains(&sweep.axis) {
        return Err(CliError::Config(format!(
            "sweep axis {:?} is not supported by this command",
            sweep.axis
        )));
    }
    sweep
        .values()?
        .into_iter()
        .map(|v| match sweep.axis {
            Axis::Ne => base(v as usize, None, &cfg.window),
            Axis::L => base(cfg.waveform.ne, Some(v as i64), &cfg.window),
            Axis::Ripple => base(cfg.waveform.ne, None, &cfg.window.with_ripple(v)),
        })
        .collect()
}

fn level_column(level: f64) -> String {
    format!("papr_db_at_{level:e}")
}

pub fn papr_ccdf(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let mc = &cfg.monte_carlo;
    let mut pts = points(cfg, &[Axis::Ne, Axis::L, Axis::Ripple])?;
    if cfg.waveform.nfft_policy == NfftPolicy::RoundUp {
        for p in &mut pts {
            p.cfg = NfftPolicy::RoundUp.apply(&p.cfg)?;
        }
    }
    let sims = pts
        .iter()
        .map(|p| {
            PaprSimulation::new(Constellation::new(cfg.constellation), p.cfg, &p.window)?
                .with_metric(mc.metric, mc.symbols)
                .map_err(CliError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut estimates: Vec<CcdfEstimate> = Vec::with_capacity(sims.len());
    for (p, sim) in pts.iter().zip(&sims) {
        info!(
            "papr-ccdf: ne={} L={} ({})",
            p.cfg.ne(),
            p.cfg.shift_l,
            p.window_spec.label()
        );
        estimates.push(
            sim.ccdf(mc.trials, &mc.levels, mc.seed)
                .map_err(CliError::numeric)?,
        );
    }

    let mut header = vec![
        "ne".to_string(),
        "l".into(),
        "nfft".into(),
        "ripple_db".into(),
    ];
    header.extend(mc.levels.iter().map(|&p| level_column(p)));
    header.push("max_db".into());
    let rows = pts.iter().zip(&estimates).map(|(p, e)| {
        let mut row = vec![
            p.cfg.ne().to_string(),
            p.cfg.shift_l.to_string(),
            p.cfg.nfft.to_string(),
            p.ripple_db().to_string(),
        ];
        row.extend(e.readouts.iter().map(|r| r.value_db.to_string()));
        row.push(e.max_db.to_string());
        row
    });
    let levels_csv = csv_bytes(&header, rows)?;

    let curve_rows = pts.iter().zip(&estimates).flat_map(|(p, e)| {
        e.curve
            .thresholds_db
            .iter()
            .zip(&e.curve.ccdf)
            .map(move |(t, c)| {
                vec![
                    p.cfg.ne().to_string(),
                    p.cfg.shift_l.to_string(),
                    p.ripple_db().to_string(),
                    t.to_string(),
                    c.to_string(),
                ]
            })
    });
    let curve_csv = csv_bytes(
        &["ne", "l", "ripple_db", "threshold_db", "ccdf"],
        curve_rows,
    )?;

    let summary = json!({
        "run": metadata(cfg, "papr-ccdf"),
        "points": pts.iter().zip(&estimates).map(|(p, e)| json!({
            "ne": p.cfg.ne(),
            "l": p.cfg.shift_l,
            "nfft": p.cfg.nfft,
            "window": p.window_spec.label(),
            "ripple_db": p.ripple_db(),
            "readouts": e.readouts,
            "max_db": e.max_db,
        })).collect::<Vec<_>>(),
    });
    Ok(Outputs::new()
        .with("papr_levels.csv", levels_csv)
        .with("papr_ccdf.csv", curve_csv)
        .with("summary.json", json_bytes(&summary)?))
}

pub fn bound_sweep(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let policy = cfg.waveform.nfft_policy;
    let raw = match (&cfg.sweep, &cfg.optimizer) {
        // without an explicit sweep the optimizer grid is walked
        (None, Some(_)) => {
            let window: Window = cfg.window.build(cfg.waveform.nsc)?;
            cfg.optimizer_grid()?
                .0
                .into_iter()
                .map(|ne| {
                    Ok(Point {
                        cfg: cfg.config_at(ne)?,
                        window_spec: cfg.window.clone(),
                        window: window.clone(),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
        _ => points(cfg, &[Axis::Ne, Axis::L, Axis::Ripple])?,
    };
    let pts = feasible(raw.into_iter().map(|p| {
        Ok(Point {
            cfg: policy.apply(&p.cfg)?,
            ..p
        })
    }))?;
    let k_db = cfg.optimizer.as_ref().map_or(0.0, |o| o.k_db);
    let c = Constellation::new(cfg.constellation);
    let mut rows = Vec::with_capacity(pts.len());
    let mut summary_points = Vec::with_capacity(pts.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in pts.iter().enumerate() {
        let u = papr_upper_u(&c, &p.cfg, &p.window).map_err(CliError::numeric)?;
        let gu = papr_upper_gu(&c, &p.cfg, &p.window).map_err(CliError::numeric)?;
        let qam = if cfg.constellation.is_qam() {
            Some(
                papr_upper_qam_approx(&c, &p.cfg, &p.window)
                    .map_err(CliError::numeric)?
                    .value_db,
            )
        } else {
            None
        };
        let corrected = corrected_bound(u.value_db, k_db, p.cfg.ne(), p.cfg.nsc);
        rows.push(vec![
            p.cfg.ne().to_string(),
            p.cfg.shift_l.to_string(),
            p.cfg.nfft.to_string(),
            p.ripple_db().to_string(),
            u.value_db.to_string(),
            gu.value_db.to_string(),
            qam.map_or_else(String::new, |v| v.to_string()),
            corrected.to_string(),
            u.argmax_n.to_string(),
        ]);
        summary_points.push(json!({"ne": p.cfg.ne(), "l": p.cfg.shift_l, "u_db": u.value_db}));
        if best.is_none_or(|(_, v)| u.value_db < v) {
            best = Some((i, u.value_db));
        }
    }
    let best = best.map(|(i, _)| summary_points[i].clone());
    let csv = csv_bytes(
        &[
            "ne",
            "l",
            "nfft",
            "ripple_db",
            "u_db",
            "gu_db",
            "qam_approx_db",
            "corrected_db",
            "argmax_n",
        ],
        rows,
    )?;
    let summary = json!({
        "run": metadata(cfg, "bound-sweep"),
        "k_db": k_db,
        "minimum": best,
        "points": summary_points,
    });
    Ok(Outputs::new()
        .with("bounds.csv", csv)
        .with("summary.json", json_bytes(&summary)?))
}

/// Keeps the points whose FFT size suits the bound; none left is an error.
fn feasible(points: impl Iterator<Item = Result<Point, CliError>>) -> Result<Vec<Point>, CliError> {
    let mut kept = Vec::new();
    for p in points {
        match p {
            Ok(p) => kept.push(p),
            Err(CliError::Core(fdss_se::Error::NotDivisible { nfft, ndata })) => {
                info!("bound-sweep: skipping Ndata = {ndata}, Nfft = {nfft} not a multiple");
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(CliError::Core(fdss_se::Error::Empty("feasible SE grid")));
    }
    Ok(kept)
}

#[derive(Serialize)]
struct MethodResult<'a> {
    method: &'a SeMethod,
    ne_opt: usize,
    objective_at_opt: f64,
}

pub fn se_opt(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let (grid, opt) = cfg.optimizer_grid()?;
    let mc = &cfg.monte_carlo;
    let window: Window = cfg.window.build(cfg.waveform.nsc)?;
    let profile = cfg.channel.profile()?;
    // capacity searches need a channel that the prefix covers
    profile.sampled(&cfg.config_at(0)?)?;
    for m in &opt.methods {
        if let SeMethod::MonteCarloCcdf { level } = m {
            if !(*level > 0.0 && *level < 1.0) {
                return Err(CliError::Config(format!(
                    "CCDF level {level} outside (0, 1)"
                )));
            }
        }
    }
    let papr_search = |method: SeMethod| {
        let mut s = PaprSearch::new(
            Constellation::new(cfg.constellation),
            window.clone(),
            cfg.waveform.nfft,
            method,
        );
        s.shift = cfg.waveform.shift;
        s.trials = mc.trials;
        s.seed = mc.seed;
        s.restrict_weak_shaping = opt.restrict_weak_shaping;
        s
    };
    let capa = CapaSearch {
        window: window.clone(),
        profile,
        nfft: cfg.waveform.nfft,
        ncp: cfg.waveform.ncp,
        trials: mc.trials,
        seed: mc.seed,
    };
    let step = if opt.refine { opt.ne_step } else { 1 };

    let mut results: Vec<SeSearchResult> = Vec::new();
    for &method in &opt.methods {
        info!("se-opt: {method:?}");
        let r = match method {
            SeMethod::Capacity { snr_db } => capa.search(snr_db, &grid),
            m => {
                let s = papr_search(m);
                if step > 1 {
                    s.search_refined(&grid, step)
                } else {
                    s.search(&grid)
                }
            }
        }
        .map_err(CliError::numeric)?;
        results.push(r);
    }
    let tradeoff = match opt.tradeoff_snr_db {
        Some(snr) => {
            let papr_method = opt
                .methods
                .iter()
                .copied()
                .find(|m| !matches!(m, SeMethod::Capacity { .. }))
                .unwrap_or(SeMethod::BoundU);
            Some(
                tradeoff_report(&papr_search(papr_method), &capa, snr, &grid)
                    .map_err(CliError::numeric)?,
            )
        }
        None => None,
    };

    let rows = results.iter().flat_map(|r| {
        let label = method_label(&r.method);
        r.curve
            .iter()
            .map(move |(ne, v)| vec![label.clone(), ne.to_string(), v.to_string()])
    });
    let csv = csv_bytes(&["method", "ne", "objective"], rows)?;
    let summary = json!({
        "run": metadata(cfg, "se-opt"),
        "optima": results.iter().map(|r| MethodResult {
            method: &r.method,
            ne_opt: r.ne_opt,
            objective_at_opt: r.objective_at_opt,
        }).collect::<Vec<_>>(),
        "tradeoff": tradeoff.map(|t| json!({
            "report": t,
            "loss_at_zero": t.loss_at_zero(),
            "loss_at_ne_papr": t.loss_at_ne_papr(),
            "loss_at_ne_capa": t.loss_at_ne_capa(),
        })),
    });
    Ok(Outputs::new()
        .with("se_curves.csv", csv)
        .with("summary.json", json_bytes(&summary)?))
}

fn method_label(m: &SeMethod) -> String {
    match m {
        SeMethod::BoundU => "bound_u".into(),
        SeMethod::QamApprox => "qam_approx".into(),
        SeMethod::CorrectedBound { k_db } => format!("corrected_bound(k={k_db})"),
        SeMethod::MonteCarloCcdf { level } => format!("monte_carlo_ccdf({level:e})"),
        SeMethod::Capacity { snr_db } => format!("capacity({snr_db} dB)"),
    }
}

/// `ne` values for rate and BER runs: an `ne` sweep, else the optimizer grid,
/// else the configured `ne`.
fn ne_values(cfg: &ExperimentConfig) -> Result<Vec<usize>, CliError> {
    match (&cfg.sweep, &cfg.optimizer) {
        (Some(s), _) if s.axis == Axis::Ne => {
            Ok(s.values()?.into_iter().map(|v| v as usize).collect())
        }
        (Some(s), _) => Err(CliError::Config(format!(
            "sweep axis {:?} is not supported by this command",
            s.axis
        ))),
        (None, Some(_)) => Ok(cfg.optimizer_grid()?.0),
        (None, None) => Ok(vec![cfg.waveform.ne]),
    }
}

fn sampled(cfg: &ExperimentConfig, wc: &WaveformConfig) -> Result<SampledProfile, CliError> {
    Ok(cfg.channel.profile()?.sampled(wc)?)
}

pub fn rate_sweep(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let snrs = cfg.require_snr()?;
    let grid = ne_values(cfg)?;
    for &ne in &grid {
        cfg.config_at(ne)?;
    }
    let window: Window = cfg.window.build(cfg.waveform.nsc)?;
    let profile = sampled(cfg, &cfg.config_at(0)?)?;
    let mc = &cfg.monte_carlo;

    let mut curves: Vec<(f64, Vec<RatePoint>)> = Vec::new();
    for &snr in snrs {
        info!("rate-sweep: {snr} dB");
        curves.push((
            snr,
            rate_curve(&window, &profile, snr, &grid, mc.trials, mc.seed)
                .map_err(CliError::numeric)?,
        ));
    }
    let rows = curves.iter().flat_map(|(snr, pts)| {
        pts.iter().map(move |p| {
            vec![
                snr.to_string(),
                p.ne.to_string(),
                p.rate_bpcu.to_string(),
                p.sinr_eff_db_mean.to_string(),
                p.g0_mean.to_string(),
            ]
        })
    });
    let csv = csv_bytes(
        &["snr_db", "ne", "rate_bpcu", "sinr_eff_db_mean", "g0_mean"],
        rows,
    )?;
    let optima: Vec<Value> = curves
        .iter()
        .map(|(snr, pts)| {
            let best = pts.iter().fold(
                &pts[0],
                |a, b| if b.rate_bpcu > a.rate_bpcu { b } else { a },
            );
            json!({"snr_db": snr, "ne_capa": best.ne, "rate_bpcu": best.rate_bpcu})
        })
        .collect();
    let summary = json!({
        "run": metadata(cfg, "rate-sweep"),
        "channel": cfg.channel.label(),
        "window": cfg.window.label(),
        "optima": optima,
    });
    Ok(Outputs::new()
        .with("rate.csv", csv)
        .with("summary.json", json_bytes(&summary)?))
}

pub fn ber(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let snrs = cfg.require_snr()?;
    let window: Window = cfg.window.build(cfg.waveform.nsc)?;
    let sims = ne_values(cfg)?
        .into_iter()
        .map(|ne| {
            let wc = cfg.config_at(ne)?;
            Ok(LinkSimulation::new(wc, window.clone(), sampled(cfg, &wc)?)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mc = &cfg.monte_carlo;

    let mut points: Vec<(usize, BerPoint)> = Vec::new();
    for sim in &sims {
        for &snr in snrs {
            let ne = sim.config().ne();
            info!("ber: ne={ne} {snr} dB");
            points.push((
                ne,
                sim.run(snr, mc.trials, mc.seed)
                    .map_err(CliError::numeric)?,
            ));
        }
    }
    let rows = points.iter().map(|(ne, p)| {
        vec![
            ne.to_string(),
            p.snr_db.to_string(),
            p.bits.to_string(),
            p.errors.to_string(),
            p.ber_sim.to_string(),
            p.ber_theory.to_string(),
            p.sigma().to_string(),
        ]
    });
    let csv = csv_bytes(
        &[
            "ne",
            "snr_db",
            "bits",
            "errors",
            "ber_sim",
            "ber_theory",
            "sigma",
        ],
        rows,
    )?;
    let summary = json!({
        "run": metadata(cfg, "ber"),
        "channel": cfg.channel.label(),
        "window": cfg.window.label(),
        "points": points.iter().map(|(ne, p)| json!({
            "ne": ne,
            "point": p,
            "z": if p.sigma() > 0.0 { (p.ber_sim - p.ber_theory) / p.sigma() } else { 0.0 },
        })).collect::<Vec<_>>(),
    });
    Ok(Outputs::new()
        .with("ber.csv", csv)
        .with("summary.json", json_bytes(&summary)?))
}

pub fn window_dump(cfg: &ExperimentConfig) -> Result<Outputs, CliError> {
    let specs: Vec<WindowSpec> = match &cfg.sweep {
        None => vec![cfg.window.clone()],
        Some(s) if s.axis == Axis::Ripple => s
            .values()?
            .into_iter()
            .map(|r| cfg.window.with_ripple(r))
            .collect(),
        Some(s) => {
            return Err(CliError::Config(format!(
                "window-dump sweeps only ripple, got {:?}",
                s.axis
            )))
        }
    };
    let windows = specs
        .iter()
        .map(|s| s.build::<f64>(cfg.waveform.nsc).map_err(CliError::from))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = specs.iter().zip(&windows).flat_map(|(s, w)| {
        let label = s.label();
        w.coeffs()
            .iter()
            .enumerate()
            .map(move |(k, c)| vec![label.clone(), k.to_string(), c.to_string()])
    });
    let csv = csv_bytes(&["window", "k", "w"], rows)?;
    let summary = json!({
        "run": metadata(cfg, "window-dump"),
        "windows": specs.iter().zip(&windows).map(|(s, w)| Ok(json!({
            "window": s.label(),
            "spec": s,
            "ripple_db": w.ripple_db().map_err(CliError::numeric)?,
        }))).collect::<Result<Vec<Value>, CliError>>()?,
    });
    Ok(Outputs::new()
        .with("window.csv", csv)
        .with("summary.json", json_bytes(&summary)?))
}
