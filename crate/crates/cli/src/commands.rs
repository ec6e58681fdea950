//! Subcommands: run an experiment and emit its files.

use anyhow::Context;
use serde_json::json;

use yoctoforce::constants::hertz;
use yoctoforce::model::{force_sensitivity, optimal_cooperativity, sql_sensitivity};

use crate::config::RunConfig;
use crate::output::{ellipse_outline, fit_summary, num, Meta, Output, Plot, Series, Style};
use crate::runs::{
    run_phase, run_spectra, run_sweep, run_validation, theory_table, Check, PhaseRow, SpectrumRow,
    SweepResult,
};

pub fn cmd_theory(cfg: &RunConfig, seed: u64, out: &Output) -> anyhow::Result<()> {
    let meta = Meta::new("theory", seed, cfg);
    let rows = theory_table(cfg, 0.01, 100.0, 201)?;
    let header = [
        "cooperativity",
        "shot_zpm",
        "zero_point_zpm",
        "back_action_zpm",
        "total_zpm",
        "ideal_total_zpm",
        "total_over_sql",
    ];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            [r.cooperativity, r.shot, r.zero_point, r.back_action, r.total, r.ideal_total, r.total_over_sql]
                .map(num)
                .to_vec()
        })
        .collect();
    out.csv("theory.csv", &meta, &header, &table)?;

    let osc = cfg.oscillator()?;
    let eps = cfg.measurement(1.0)?.epsilon_eff();
    let c_opt = optimal_cooperativity(eps);
    let best = rows
        .iter()
        .min_by(|a, b| a.total.total_cmp(&b.total))
        .expect("non-empty table");
    println!("SQL: {:.4e} N²/Hz", sql_sensitivity(&osc));
    println!("optimal cooperativity {c_opt:.4}, minimum {:.4} × SQL", 0.5 * (1.0 / eps.sqrt() + 2.0 * osc.nu + 1.0));
    out.json(
        "report_theory.json",
        &meta,
        json!({
            "config": cfg,
            "theory": {
                "sql": sql_sensitivity(&osc),
                "epsilon_eff": eps,
                "optimal_cooperativity": c_opt,
                "grid_minimum_cooperativity": best.cooperativity,
            },
            "fits": [], "sensitivity": [], "phase_space": [], "validation": [],
        }),
    )?;

    let mut plot = Plot::new("On-resonance force imprecision", "cooperativity", "S_FF / (2Γp_HO²)").log_log();
    let curve = |f: fn(&crate::runs::TheoryRow) -> f64| rows.iter().map(|r| (r.cooperativity, f(r))).collect();
    plot.series.push(Series::new("shot noise", curve(|r| r.shot), Style::Dashed));
    plot.series.push(Series::new("zero point", curve(|r| r.zero_point), Style::Dashed));
    plot.series.push(Series::new("back-action", curve(|r| r.back_action), Style::Dashed));
    plot.series.push(Series::new("total", curve(|r| r.total), Style::Line));
    plot.series.push(Series::new("ideal", curve(|r| r.ideal_total), Style::Line));
    out.svg("theory.svg", &plot)?;
    Ok(())
}

fn sweep_files(cfg: &RunConfig, seed: u64, out: &Output, sweep: &SweepResult) -> anyhow::Result<()> {
    let meta = Meta::new("sweep", seed, cfg);
    let header = [
        "index",
        "cooperativity_set",
        "cooperativity_est",
        "cooperativity_sigma",
        "s_ff_over_sql",
        "s_ff_over_sql_sigma",
        "s_ff_over_sql_stat_sigma",
        "theory_over_sql",
        "pull",
        "s_ff_abs",
        "s_ff_abs_sigma",
        "omega_m_hz",
        "omega_m_sigma_hz",
        "gamma_hz",
        "gamma_sigma_hz",
        "status",
    ];
    let mut table = Vec::new();
    for row in &sweep.rows {
        let mut cells = vec![row.index.to_string(), num(row.cooperativity_set)];
        match (&row.point, &row.fit) {
            (Some(p), Some(fit)) => {
                cells.extend(
                    [
                        p.cooperativity.value,
                        p.cooperativity.sigma,
                        p.s_ff_over_sql.value,
                        p.s_ff_over_sql.sigma,
                        p.s_ff_over_sql_stat,
                        p.theory_over_sql,
                        p.pull(),
                        p.s_ff_abs.value,
                        p.s_ff_abs.sigma,
                        hertz(p.omega_m.value),
                        hertz(p.omega_m.sigma),
                        hertz(p.gamma.value),
                        hertz(p.gamma.sigma),
                    ]
                    .map(num),
                );
                cells.push(format!("{:?}", fit.status).to_lowercase());
            }
            _ => {
                cells.extend(std::iter::repeat_n("nan".to_string(), 13));
                cells.push("failed".into());
            }
        }
        table.push(cells);
    }
    out.csv("sweep.csv", &meta, &header, &table)?;

    let (lo, hi) = (cfg.sweep.c_min.min(0.05), cfg.sweep.c_max.max(40.0));
    let theory = theory_table(cfg, lo, hi, 161)?;
    let overlay: Vec<Vec<String>> = theory
        .iter()
        .map(|r| vec![num(r.cooperativity), num(r.total_over_sql)])
        .collect();
    out.csv("sweep_theory.csv", &meta, &["cooperativity", "s_ff_over_sql"], &overlay)?;

    let fits: Vec<_> = sweep
        .rows
        .iter()
        .filter_map(|r| r.fit.as_ref().map(|f| fit_summary(r.cooperativity_set, r.seed, f)))
        .collect();
    out.json(
        "report_sweep.json",
        &meta,
        json!({
            "config": cfg,
            "fits": fits,
            "sensitivity": sweep.rows,
            "phase_space": [],
            "validation": [],
        }),
    )?;

    let mut plot = Plot::new("Force sensitivity vs cooperativity", "estimated cooperativity", "S_FF(ω_m) / SQL").log_log();
    plot.series.push(Series::new(
        "theory",
        theory.iter().map(|r| (r.cooperativity, r.total_over_sql)).collect(),
        Style::Line,
    ));
    let points: Vec<_> = sweep.rows.iter().filter_map(|r| r.point).collect();
    plot.series.push(
        Series::new(
            "simulated",
            points.iter().map(|p| (p.cooperativity.value, p.s_ff_over_sql.value)).collect(),
            Style::Markers,
        )
        .with_errors(points.iter().map(|p| p.s_ff_over_sql.sigma).collect()),
    );
    out.svg("sweep.svg", &plot)?;
    Ok(())
}

/// Runs the sweep and writes its files; per-point failures are recorded in
/// the result.
pub fn cmd_sweep(cfg: &RunConfig, seed: u64, out: &Output) -> anyhow::Result<SweepResult> {
    let sweep = run_sweep(cfg, seed);
    sweep_files(cfg, seed, out, &sweep)?;
    for row in &sweep.rows {
        match (&row.point, &row.error) {
            (Some(p), _) => println!(
                "C_set {:8.3}  C_est {:8.3} ± {:6.3}  S/SQL {:8.3} ± {:6.3}  theory {:8.3}  pull {:+6.2}",
                row.cooperativity_set,
                p.cooperativity.value,
                p.cooperativity.sigma,
                p.s_ff_over_sql.value,
                p.s_ff_over_sql.sigma,
                p.theory_over_sql,
                p.pull()
            ),
            (None, Some(e)) => println!("C_set {:8.3}  failed: {e}", row.cooperativity_set),
            (None, None) => {}
        }
    }
    if let Some(min) = sweep.minimum() {
        let p = min.point.expect("minimum has a point");
        println!(
            "minimum S/SQL {} at estimated C = {}",
            p.s_ff_over_sql, p.cooperativity
        );
    }
    Ok(sweep)
}

fn phase_files(cfg: &RunConfig, seed: u64, out: &Output, phase: &[PhaseRow], spectra: &[SpectrumRow]) -> anyhow::Result<()> {
    let meta = Meta::new("phase", seed, cfg);
    let mut points = Vec::new();
    let mut summary = Vec::new();
    for row in phase {
        for (i, p) in row.ensemble.points.iter().enumerate() {
            points.push(vec![num(row.cooperativity_set), i.to_string(), num(p[0]), num(p[1])]);
        }
        let e = row.ensemble.ellipse;
        let f = |v: Option<f64>| v.map_or("nan".to_string(), num);
        summary.push(vec![
            num(row.cooperativity_set),
            row.ensemble.points.len().to_string(),
            num(row.ensemble.mean[0]),
            num(row.ensemble.mean[1]),
            f(e.map(|e| e.rms[0])),
            f(e.map(|e| e.rms[1])),
            f(e.map(|e| e.radii[0])),
            f(e.map(|e| e.radii[1])),
            f(e.map(|e| e.orientation)),
            f(e.map(|e| e.product.value)),
            f(e.map(|e| e.product.sigma)),
            num(row.expected_product),
            num(row.bound),
        ]);
    }
    out.csv("phase_points.csv", &meta, &["cooperativity_set", "repetition", "z1", "z2"], &points)?;
    out.csv(
        "phase_summary.csv",
        &meta,
        &[
            "cooperativity_set",
            "n_points",
            "mean_z1",
            "mean_z2",
            "rms_major",
            "rms_minor",
            "radius_major",
            "radius_minor",
            "orientation",
            "product",
            "product_sigma",
            "expected_product",
            "bound",
        ],
        &summary,
    )?;

    let mut spectrum_rows = Vec::new();
    for row in spectra {
        let s = &row.spectrum;
        for i in 0..s.freqs.len() {
            spectrum_rows.push(vec![
                num(row.cooperativity_set),
                num(hertz(s.freqs[i])),
                num(s.values[i]),
                num(s.sigma[i]),
                num(row.theory[i]),
            ]);
        }
    }
    out.csv(
        "spectra.csv",
        &meta,
        &["cooperativity_set", "freq_hz", "s_ff", "s_ff_sigma", "s_ff_theory"],
        &spectrum_rows,
    )?;

    out.json(
        "report_phase.json",
        &meta,
        json!({
            "config": cfg,
            "fits": [],
            "sensitivity": spectra.iter().map(|r| json!({
                "cooperativity_set": r.cooperativity_set,
                "seed": r.seed,
                "omega_m_hz": hertz(r.omega_m),
                "gamma_hz": hertz(r.gamma),
                "freq_hz": r.spectrum.freqs.iter().map(|w| hertz(*w)).collect::<Vec<_>>(),
                "s_ff": r.spectrum.values,
                "s_ff_sigma": r.spectrum.sigma,
                "s_ff_theory": r.theory,
            })).collect::<Vec<_>>(),
            "phase_space": phase,
            "validation": [],
        }),
    )?;

    let mut plot = Plot::new("Phase space, z_HO units", "Z₁", "Z₂");
    plot.equal_aspect = true;
    for row in phase {
        let pts = row.ensemble.points.iter().map(|p| (p[0], p[1])).collect();
        plot.series.push(Series::new(&format!("C = {}", row.cooperativity_set), pts, Style::Markers));
    }
    for row in phase {
        if let Some(e) = row.ensemble.ellipse {
            plot.series.push(Series::new(
                &format!("50% C = {}", row.cooperativity_set),
                ellipse_outline(row.ensemble.mean, e.radii, e.orientation),
                Style::Line,
            ));
        }
    }
    out.svg("phase.svg", &plot)?;

    let mut plot = Plot::new("Force noise spectra", "frequency (kHz)", "S_FF (N²/Hz)");
    plot.log_y = true;
    for row in spectra {
        let s = &row.spectrum;
        let khz = |w: f64| hertz(w) / 1e3;
        plot.series.push(Series::new(
            &format!("C = {}", row.cooperativity_set),
            s.freqs.iter().zip(&s.values).map(|(w, v)| (khz(*w), *v)).collect(),
            Style::Markers,
        ));
        plot.series.push(Series::new(
            &format!("theory {}", row.cooperativity_set),
            s.freqs.iter().zip(&row.theory).map(|(w, v)| (khz(*w), *v)).collect(),
            Style::Line,
        ));
    }
    out.svg("spectra.svg", &plot)?;
    Ok(())
}

pub fn cmd_phase(cfg: &RunConfig, seed: u64, out: &Output) -> anyhow::Result<(Vec<PhaseRow>, Vec<SpectrumRow>)> {
    let phase = run_phase(cfg, seed)?;
    let spectra = run_spectra(cfg, seed)?;
    phase_files(cfg, seed, out, &phase, &spectra)?;
    for row in &phase {
        let mean = row.ensemble.mean;
        match row.ensemble.ellipse {
            Some(e) => println!(
                "C {:6.2}  mean ({:+.3}, {:+.3})  ΔZ₁ΔZ₂ = {}  expected {:.3}  bound {:.3}",
                row.cooperativity_set, mean[0], mean[1], e.product, row.expected_product, row.bound
            ),
            None => println!("C {:6.2}  mean ({:+.3}, {:+.3})  no ellipse", row.cooperativity_set, mean[0], mean[1]),
        }
    }
    for row in &spectra {
        let i = row
            .spectrum
            .freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - row.omega_m).abs().total_cmp(&(b.1 - row.omega_m).abs()))
            .map(|(i, _)| i)
            .context("empty spectrum")?;
        println!(
            "C {:6.2}  S_FF(ω_m) = {:.3e} ± {:.1e} N²/Hz  theory {:.3e}",
            row.cooperativity_set, row.spectrum.values[i], row.spectrum.sigma[i], row.theory[i]
        );
    }
    Ok((phase, spectra))
}

pub fn cmd_validate(cfg: &RunConfig, seed: u64, out: &Output) -> anyhow::Result<Vec<Check>> {
    let meta = Meta::new("validate", seed, cfg);
    let checks = run_validation(cfg, seed);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let table: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![format!("\"{}\"", c.name), c.passed.to_string(), format!("\"{}\"", c.detail.replace('"', "'"))])
        .collect();
    out.csv("validation.csv", &meta, &["check", "passed", "detail"], &table)?;
    let osc = cfg.oscillator()?;
    let meas = cfg.measurement(optimal_cooperativity(cfg.measurement(1.0)?.epsilon_eff()))?;
    out.json(
        "report_validate.json",
        &meta,
        json!({
            "config": cfg,
            "fits": [], "sensitivity": [], "phase_space": [],
            "validation": checks,
            "reference": {
                "sql": sql_sensitivity(&osc),
                "optimal_s_ff": force_sensitivity(&osc, &meas, osc.omega_m)?,
            },
        }),
    )?;
    Ok(checks)
}
