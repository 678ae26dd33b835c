use bubblediag::bubblescale::{average_scaled_bubbles, bubble_stats, rescale_bubble, BubblePreset, ScaledBubble};
use bubblediag::dataset::{Dataset, USERS_FILE};
use bubblediag::lppls::{fit_lppls, fit_power_law, likelihood_ratio_test, profile_ci_tc, FitWindow, LpplsParams};
use bubblediag::metcalfe::{compare_nested_ftest, fit_constrained_metcalfe, fit_generalized_metcalfe, predict_cap, rolling_beta, Sidedness};
use bubblediag::simulate::{lppls_sample, substream};
use bubblediag::timeseries::{date, format_instant, load_series, ColumnSpec, Instant, TimeSeries, SECONDS_PER_DAY};
use bubblediag::usergrowth::{annual_growth_rates, carrying_capacity, fit_user_growth, project_users};
use bubblediag::windowscan::{scan_windows, ScanConfig, ScanError};
use serde_json::{json, Value};

use crate::config::*;
use crate::error::CliError;
use crate::output::{OutDir, Table};

fn stamp(t: Instant) -> Value {
    Value::String(format_instant(t))
}

fn calendar(seconds: f64) -> Value {
    if seconds.is_finite() {
        stamp(seconds.round() as Instant)
    } else {
        Value::Null
    }
}

fn series_table(series: &TimeSeries) -> Table {
    let mut t = Table::new(&["date", "value"]);
    for (ts, v) in series.iter() {
        t.push(vec![stamp(ts), json!(v)]);
    }
    t
}

fn say(common: &Common, line: String) {
    if !common.quiet {
        println!("{line}");
    }
}

fn lppls_series(common: &Common, kind: SeriesKind, support: &str) -> Result<TimeSeries, CliError> {
    let data = Dataset::load(&common.data_dir)?;
    Ok(match kind {
        SeriesKind::Mmv => data.mmv(&support_arg(support)?)?.ratio,
        SeriesKind::Cap => data.cap,
    })
}

pub fn metcalfe(common: &Common, settings: &MetcalfeSettings, out: &mut OutDir) -> Result<(), CliError> {
    let data = Dataset::load(&common.data_dir)?;
    let free = fit_generalized_metcalfe(&data.users, &data.cap)?;
    let fixed = fit_constrained_metcalfe(&data.users, &data.cap, 2.0)?;
    let ftest = compare_nested_ftest(&fixed, &free)?;
    let rolling = rolling_beta(&data.users, &data.cap, settings.rolling_window_days * SECONDS_PER_DAY)?;

    let mut beta = Table::new(&["date", "beta", "se_beta", "n"]);
    for i in 0..rolling.beta.len() {
        beta.push(vec![stamp(rolling.timestamps[i]), json!(rolling.beta[i]), json!(rolling.se_beta[i]), json!(rolling.n[i])]);
    }
    out.table("rolling_beta", &beta)?;
    let mut supports = Vec::new();
    for name in &settings.supports {
        let line = support_arg(name)?;
        out.table(&format!("predicted_cap_{name}"), &series_table(&predict_cap(&line, &data.users)?))?;
        supports.push(json!({ "name": name, "alpha0": line.alpha0, "beta0": line.beta0 }));
    }
    let mmv = data.mmv(&support_arg(&settings.mmv_support)?)?;
    out.table("mmv", &series_table(&mmv.ratio))?;

    out.report(
        "metcalfe",
        &json!({
            "config": { "common": common, "metcalfe": settings },
            "generalized": free,
            "constrained": fixed,
            "f_test": ftest,
            "rolling": {
                "window_days": settings.rolling_window_days,
                "windows": rolling.beta.len(),
                "fraction_below_2": rolling.fraction_below(2.0),
                "fraction_significantly_below_2": rolling.fraction_significantly_below(2.0, 0.05, Sidedness::OneSided),
            },
            "supports": supports,
            "mmv_support": mmv.support,
        }),
    )?;
    say(common, format!("beta {:.4} (se {:.4}), alpha {:.4}, R^2 {:.4}", free.beta, free.se_beta, free.alpha, free.r_squared));
    say(common, format!("beta fixed at 2: alpha {:.4} (se {:.4}); F-test p {:.3e}", fixed.alpha, fixed.se_alpha, ftest.p_value));
    Ok(())
}

pub fn usergrowth(common: &Common, settings: &UserGrowthSettings, out: &mut OutDir) -> Result<(), CliError> {
    let users = load_series(common.data_dir.join(USERS_FILE), &ColumnSpec::default())?;
    let (start, end) = settings.window;
    let fit = fit_user_growth(&users, start, end)?;
    let first_year: i32 = format_instant(end)[..4].parse().expect("four-digit year");
    let dates: Vec<Instant> = (first_year..=settings.project_to).map(|y| date(y, 1, 1)).filter(|&d| d >= start).collect();
    let projection = project_users(&fit, &dates)?;
    let rates = if settings.project_to > first_year { annual_growth_rates(&fit, first_year, settings.project_to)? } else { Vec::new() };
    let capacity = carrying_capacity(&fit);

    let mut table = Table::new(&["date", "value", "relative_se", "extrapolation"]);
    for i in 0..dates.len() {
        let label = if projection.extrapolation[i] { "extrapolation" } else { "" };
        table.push(vec![stamp(dates[i]), json!(projection.users[i]), json!(projection.relative_se[i]), json!(label)]);
    }
    out.table("projections", &table)?;
    let mut growth = Table::new(&["from_year", "to_year", "rate"]);
    for g in &rates {
        growth.push(vec![json!(g.from_year), json!(g.from_year + 1), json!(g.rate)]);
    }
    out.table("growth_rates", &growth)?;
    out.report(
        "usergrowth",
        &json!({
            "config": { "common": common, "usergrowth": settings },
            "fit": fit,
            "carrying_capacity": capacity,
            "growth_rates": rates,
        }),
    )?;
    say(common, format!("(a, b, c, d) = ({:.3}, {:.3}, {:.3}, {:.3}); carrying capacity {:.3e} (relative se {:.2})", fit.a, fit.b, fit.c, fit.d, capacity.value, capacity.relative_se));
    Ok(())
}

pub fn lppls(common: &Common, settings: &LpplsSettings, out: &mut OutDir) -> Result<(), CliError> {
    let series = lppls_series(common, settings.series, &settings.support)?;
    let (t1, t2, peak) = settings.instants;
    let window = FitWindow::new(t1, t2, peak)?;
    let sample = window.sample(&series)?;
    let grid = settings.grid.spec();
    let full = fit_lppls(&sample, &grid)?;
    let pl = fit_power_law(&sample, &grid)?;
    let lr = likelihood_ratio_test(&full, &pl)?;
    let ci = profile_ci_tc(&full, settings.level)?;

    let mut profile = Table::new(&["t_c", "t_c_date", "loglik_lppls", "loglik_power_law"]);
    for (k, &(tc, ll)) in full.profile_tc.iter().enumerate() {
        let pl_ll = pl.profile_tc.get(k).filter(|p| p.0 == tc).map_or(Value::Null, |p| json!(p.1));
        profile.push(vec![json!(tc), calendar(window.unscale(tc)), json!(ll), pl_ll]);
    }
    out.table("profile", &profile)?;
    let mut ci_table = Table::new(&["bubble", "fraction", "t_c", "lower", "upper", "lower_censored", "upper_censored", "m", "omega", "phi", "lr_p_value"]);
    ci_table.push(vec![
        json!(settings.bubble),
        json!(settings.fraction),
        json!(full.params.t_c),
        json!(ci.lower),
        json!(ci.upper),
        json!(ci.lower_censored),
        json!(ci.upper_censored),
        json!(full.params.m),
        json!(full.params.omega),
        json!(full.params.phi),
        json!(lr.p_value),
    ]);
    out.table("ci_table", &ci_table)?;
    out.report(
        "lppls",
        &json!({
            "config": { "common": common, "lppls": settings },
            "lppls": full,
            "power_law": pl,
            "lr_test": lr,
            "t_c_interval": ci,
            "t_c_dates": {
                "estimate": calendar(window.unscale(full.params.t_c)),
                "lower": calendar(window.unscale(ci.lower)),
                "upper": calendar(window.unscale(ci.upper)),
            },
        }),
    )?;
    say(
        common,
        format!(
            "t_c {:.3} ({:.3}, {:.3}), m {:.2}, omega {:?}, LR p {:.2e}",
            full.params.t_c, ci.lower, ci.upper, full.params.m, full.params.omega, lr.p_value
        ),
    );
    Ok(())
}

/// Daily series whose log follows the reference bubble on `[0, 1]` with
/// `t_c = 1.05` and AR(1) noise, and its four candidate window starts.
fn synthetic_scan_data(seed: u64) -> Result<(TimeSeries, Vec<Instant>), CliError> {
    const N: usize = 300;
    let truth = LpplsParams { a: 2.0, b: -1.9, c_cos: 0.06, d_sin: 0.06, m: 0.3, omega: Some(9.0), t_c: 1.05, phi: 0.9 };
    let start = date(2016, 1, 1);
    let ts: Vec<Instant> = (0..N as i64).map(|i| start + i * SECONDS_PER_DAY).collect();
    let s: Vec<f64> = (0..N).map(|i| i as f64 / (N - 1) as f64).collect();
    let sample = lppls_sample(&truth, &s, 0.02, &mut substream(seed, 0))?;
    let series = TimeSeries::new(ts.clone(), sample.values().iter().map(|v| v.exp()).collect())?;
    let candidates = [30, 60, 90, 120].iter().map(|&i| ts[i]).collect();
    Ok((series, candidates))
}

pub fn scan(common: &Common, settings: &ScanSettings, out: &mut OutDir) -> Result<(), CliError> {
    let dates = |v: &Option<Vec<String>>| -> Result<Option<Vec<Instant>>, CliError> {
        v.as_ref().map(|list| list.iter().map(|s| date_arg("t1_candidates", s)).collect()).transpose()
    };
    let one = |field: &str, v: &Option<String>| v.as_ref().map(|s| date_arg(field, s)).transpose();
    let (t0, t2, candidates) = (one("t0", &settings.t0)?, one("t2", &settings.t2)?, dates(&settings.t1_candidates)?);

    let (series, t0, t2, candidates) = if settings.synthetic {
        let (series, preset_candidates) = synthetic_scan_data(common.seed)?;
        let t0 = t0.unwrap_or(series.start() - SECONDS_PER_DAY);
        let t2 = t2.unwrap_or(series.end());
        (Some(series), t0, t2, candidates.unwrap_or(preset_candidates))
    } else {
        let (Some(t0), Some(t2)) = (t0, t2) else {
            return Err(CliError::usage("InvalidConfig", "scan needs t0 and t2 (or --preset fig5)"));
        };
        (None, t0, t2, candidates.unwrap_or_default())
    };
    let mut config = ScanConfig::new(t0, t2, candidates, common.seed);
    if let Some(v) = settings.n_bootstrap {
        config.n_bootstrap = v;
    }
    if let Some(v) = settings.dof_penalty {
        config.dof_penalty = v;
    }
    if let Some(v) = settings.acceptance_level {
        config.acceptance_level = v;
    }
    if let Some(v) = settings.resampling {
        config.resampling = v;
    }
    if let Some(v) = settings.bootstrap {
        config.bootstrap = v;
    }
    config.validate()?;

    let series = match series {
        Some(s) => {
            out.table("scan_series", &series_table(&s))?;
            s
        }
        None => lppls_series(common, settings.series, &settings.support)?,
    };
    let grid = settings.grid.spec();
    let result = match scan_windows(&series, &config, &grid) {
        Ok(r) => r,
        Err(ScanError::NoWindowAccepted(rejection)) => {
            out.report("scan_rejection", &json!({ "config": { "common": common, "scan": config }, "rejection": rejection }))?;
            let windows: Vec<Value> = rejection
                .windows
                .iter()
                .map(|w| json!({ "t1": stamp(w.t1), "n": w.n, "residual_error": w.residual_error, "quantile": w.quantile }))
                .collect();
            let least_rejected = rejection.least_rejected;
            let mut err = CliError::from(ScanError::NoWindowAccepted(rejection));
            err.diagnostics = Some(json!({ "windows": windows, "least_rejected": least_rejected }));
            return Err(err);
        }
        Err(e) => return Err(e.into()),
    };

    let mut profile = Table::new(&["t_c", "t_c_date", "profile"]);
    for &(tc, v) in &result.aggregated_profile {
        profile.push(vec![json!(tc), calendar(config.unscale(tc)), json!(v)]);
    }
    out.table("aggregated_profile", &profile)?;
    let interval_dates = result.aggregated_interval.as_ref().map(|iv| {
        json!({ "lower": calendar(config.unscale(iv.lower)), "upper": calendar(config.unscale(iv.upper)), "estimate": calendar(config.unscale(iv.estimate)) })
    });
    out.report(
        "scan",
        &json!({
            "config": { "common": common, "scan": settings },
            "result": result,
            "selected_t1_date": stamp(result.selected_t1),
            "confident_t_c": result.has_confident_tc(),
            "aggregated_interval_dates": interval_dates,
        }),
    )?;
    let accepted = result.accepted().count();
    say(common, format!("{accepted} of {} windows accepted; selected T1 {}", result.windows.len(), format_instant(result.selected_t1)));
    if let Some(iv) = &result.aggregated_interval {
        say(common, format!("averaged t_c interval ({:.3}, {:.3}), censored {}", iv.lower, iv.upper, iv.is_censored()));
    }
    Ok(())
}

pub fn bubbles(common: &Common, grid: GridChoice, out: &mut OutDir) -> Result<(), CliError> {
    let presets: Vec<BubblePreset> = match &common.preset {
        Some(name) => vec![bubble_preset(name)?],
        None => BubblePreset::all().to_vec(),
    };
    let data = Dataset::load(&common.data_dir)?;
    let mut table = Table::new(&[
        "bubble", "start", "end", "days", "mcap_start", "mcap_peak", "growth_factor", "mean_daily_log_return", "preset_growth", "preset_mean_return",
    ]);
    let mut records = Vec::new();
    let mut scaled: Vec<(String, ScaledBubble)> = Vec::new();
    for p in &presets {
        let r = bubble_stats(&data.cap, p.start, p.end)?;
        table.push(vec![
            json!(p.id),
            stamp(r.start),
            stamp(r.end),
            json!(r.days),
            json!(r.mcap_start),
            json!(r.mcap_peak),
            json!(r.growth_factor),
            json!(r.mean_daily_log_return),
            json!(p.growth),
            json!(p.mean_return),
        ]);
        records.push(json!({ "bubble": p.id, "record": r }));
        scaled.push((format!("bubble{}", p.id), rescale_bubble(&data.cap, p.start, p.end, 200)?));
    }
    out.table("bubble_table", &table)?;

    // the average covers bubbles 1 to 4; bubble 5 sits inside bubble 4
    let average_fit = if common.preset.is_none() {
        let members: Vec<ScaledBubble> = scaled.iter().filter(|(n, _)| n != "bubble5").map(|(_, b)| b.clone()).collect();
        let avg = average_scaled_bubbles(&members)?;
        let fit = fit_lppls(&avg.to_sample()?, &grid.spec())?;
        let ci = profile_ci_tc(&fit, 0.95)?;
        say(common, format!("average of bubbles 1-4: t_c {:.3} ({:.3}, {:.3}), m {:.2}, omega {:?}", fit.params.t_c, ci.lower, ci.upper, fit.params.m, fit.params.omega));
        scaled.push(("average".into(), avg));
        Some(json!({ "fit": fit, "t_c_interval": ci }))
    } else {
        None
    };
    let mut curves = Table::new(&["bubble", "scaled_time", "scaled_log_value"]);
    for (name, b) in &scaled {
        for (t, v) in b.times.iter().zip(&b.values) {
            curves.push(vec![json!(name), json!(t), json!(v)]);
        }
    }
    out.table("scaled_bubbles", &curves)?;
    out.report("bubbles", &json!({ "config": { "common": common, "grid": grid }, "records": records, "average_fit": average_fit }))?;
    say(common, format!("{} bubble windows summarized", presets.len()));
    Ok(())
}
