mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

fn ok(out: &std::process::Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Target driven by two queries plus noise, 60 months from 2010-01.
fn nowcast_inputs(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = Normal::new(0.0, 0.3).unwrap();
    let q1: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..5.0)).collect();
    let q2: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..5.0)).collect();
    let y: Vec<f64> = (0..60).map(|t| 4.0 + 1.5 * q1[t] - 0.5 * q2[t] + e.sample(&mut rng)).collect();
    (
        write_series(dir, "y.csv", ym("2010-01"), &y),
        write_panel(dir, "panel.csv", ym("2010-01"), &["q1", "q2"], &[q1, q2]),
    )
}

#[test]
fn gp_fit_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (y, panel) = nowcast_inputs(dir.path());
    let run = |out: &str| {
        let out_dir = dir.path().join(out);
        let o = vaxmedia(&[
            "fit", "gp", "--y", path_arg(&y), "--panel", path_arg(&panel), "--kernels", "2", "--seed", "7",
            "--out", path_arg(&out_dir),
        ]);
        ok(&o);
        (std::fs::read(out_dir.join("model.json")).unwrap(), std::fs::read(out_dir.join("fitted.csv")).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let doc: serde_json::Value = serde_json::from_slice(&a.0).unwrap();
    assert_eq!(doc["config"]["seed"], 7);
    assert_eq!(doc["config"]["kernels"], 2);
    assert_eq!(doc["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(doc["result"]["model"]["gp"]["model"]["kernels"].as_array().unwrap().len(), 2);
}

#[test]
fn stochastic_fits_require_a_seed() {
    let dir = TempDir::new().unwrap();
    let (y, panel) = nowcast_inputs(dir.path());
    for family in ["gp", "forest"] {
        let o = vaxmedia(&["fit", family, "--y", path_arg(&y), "--panel", path_arg(&panel), "--out", path_arg(dir.path())]);
        assert_eq!(o.status.code(), Some(1), "{family}");
        assert!(stderr(&o).contains("seed"));
    }
}

#[test]
fn seed_can_come_from_the_config_file() {
    let dir = TempDir::new().unwrap();
    let (y, panel) = nowcast_inputs(dir.path());
    let config = write(dir.path(), "run.toml", "seed = 3\n\n[fit.forest]\ntrees = 10\nlags = 1\n");
    let o = vaxmedia(&[
        "--config", path_arg(&config), "fit", "forest", "--y", path_arg(&y), "--panel", path_arg(&panel),
        "--trees", "20", "--out", path_arg(dir.path()),
    ]);
    ok(&o);
    let doc = read_json(&dir.path().join("model.json"));
    assert_eq!(doc["config"]["seed"], 3);
    assert_eq!(doc["config"]["trees"], 20);
    assert_eq!(doc["config"]["lags"], 1);
    assert_eq!(doc["result"]["model"]["forest"]["trees"].as_array().unwrap().len(), 20);
}

#[test]
fn deseason_removes_a_periodic_signal() {
    let dir = TempDir::new().unwrap();
    let v: Vec<f64> = (0..120)
        .map(|t| {
            let w = 2.0 * std::f64::consts::PI * t as f64 / 12.0;
            50.0 + 10.0 * w.sin() + 3.0 * (2.0 * w).cos()
        })
        .collect();
    let input = write_series(dir.path(), "periodic.csv", ym("2005-01"), &v);
    let o = vaxmedia(&["deseason", "--input", path_arg(&input), "--p", "12", "--out", path_arg(dir.path())]);
    ok(&o);
    let residuals = read_csv_column(&dir.path().join("residuals.csv"), 1);
    assert_eq!(residuals.len(), 108);
    assert_eq!(residuals[0].0, "2006-01");
    for (_, r) in residuals {
        assert!(r.abs() < 1e-8, "{r}");
    }
}

#[test]
fn predict_writes_one_row_per_month() {
    let dir = TempDir::new().unwrap();
    let (y, panel) = nowcast_inputs(dir.path());
    let fit_dir = dir.path().join("fit");
    ok(&vaxmedia(&[
        "fit", "ar-exog", "--y", path_arg(&y), "--panel", path_arg(&panel), "--p", "1", "--window",
        "2010-01..2013-12", "--out", path_arg(&fit_dir),
    ]));
    let model = fit_dir.join("model.json");
    let pred_dir = dir.path().join("pred");
    ok(&vaxmedia(&[
        "predict", "--model", path_arg(&model), "--y", path_arg(&y), "--panel", path_arg(&panel), "--window",
        "2014-01..2014-12", "--out", path_arg(&pred_dir),
    ]));
    let text = std::fs::read_to_string(pred_dir.join("predictions.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "month,prediction");
    assert_eq!(lines.len(), 13);
    for (i, l) in lines[1..].iter().enumerate() {
        assert!(l.starts_with(&format!("2014-{:02},", i + 1)));
    }
    let report = read_json(&pred_dir.join("predict.json"));
    assert_eq!(report["result"]["scored"], 12);
    assert!(report["result"]["rmse"].as_f64().unwrap() < 1.0);
}

#[test]
fn saved_models_of_every_family_predict() {
    let dir = TempDir::new().unwrap();
    let (y, panel) = nowcast_inputs(dir.path());
    let fits: [&[&str]; 4] = [
        &["fit", "linear", "--query", "q1", "--trend"],
        &["fit", "ar-exog", "--reg", "lasso", "--lambda", "0.5", "--p", "2", "--queries", "q1,q2"],
        &["fit", "gp", "--lags", "1", "--restarts", "2", "--seed", "1"],
        &["fit", "forest", "--trees", "15", "--lags", "1", "--seed", "1"],
    ];
    for args in fits {
        let fit_dir = dir.path().join(args[1]);
        let mut full = args.to_vec();
        full.extend(["--y", path_arg(&y), "--panel", path_arg(&panel), "--window", "2010-01..2013-12"]);
        full.extend(["--out", path_arg(&fit_dir)]);
        ok(&vaxmedia(&full));
        let fitted = read_csv_column(&fit_dir.join("fitted.csv"), 1);
        assert!(!fitted.is_empty());
        let pred_dir = fit_dir.join("pred");
        ok(&vaxmedia(&[
            "predict", "--model", path_arg(&fit_dir.join("model.json")), "--y", path_arg(&y), "--panel",
            path_arg(&panel), "--window", "2014-01..2014-06", "--out", path_arg(&pred_dir),
        ]));
        let preds = read_csv_column(&pred_dir.join("predictions.csv"), 1);
        assert_eq!(preds.len(), 6, "{}", args[1]);
        assert!(preds.iter().all(|(_, v)| v.is_finite()));
    }
}

#[test]
fn rolling_refit_writes_one_step_forecasts() {
    let dir = TempDir::new().unwrap();
    let (y, panel) = nowcast_inputs(dir.path());
    ok(&vaxmedia(&[
        "fit", "ar-exog", "--y", path_arg(&y), "--panel", path_arg(&panel), "--p", "1", "--rolling-window", "24",
        "--out", path_arg(dir.path()),
    ]));
    let text = std::fs::read_to_string(dir.path().join("rolling.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("month,prediction,actual"));
    // targets 2012-01..2014-12
    assert_eq!(text.lines().count(), 1 + 36);
}

/// 24 months of known counts; 1,000 registry rows in total.
fn demo_fixture(dir: &std::path::Path) -> RegistryFixture {
    let doses: Vec<u64> = (0..24).map(|i| if i < 16 { 42 } else { 41 }).collect();
    assert_eq!(doses.iter().sum::<u64>(), 1000);
    let cohort: Vec<u64> = (0..24).map(|i| 50 + i as u64).collect();
    let articles: Vec<(u64, u64)> = (0..24).map(|i| (10 + i as u64, 4000 + 10 * i as u64)).collect();
    registry_fixture(dir, ym("2012-01"), 14, &doses, &cohort, &articles)
}

#[test]
fn derive_matches_hand_computed_ratios() {
    let dir = TempDir::new().unwrap();
    let fx = demo_fixture(dir.path());
    let out = dir.path().join("out");
    ok(&vaxmedia(&[
        "derive", "--vaccinations", path_arg(&fx.vaccinations), "--cohorts", path_arg(&fx.cohorts), "--articles",
        path_arg(&fx.articles), "--dose", "1", "--target-age", "14", "--window", "2012-01..2013-12", "--out",
        path_arg(&out),
    ]));
    let activity = read_csv_column(&out.join("activity.csv"), 1);
    assert_eq!(activity.len(), 24);
    for (i, (_, v)) in activity.iter().enumerate() {
        let (d, c) = fx.counts[i];
        assert!((v - 100.0 * d as f64 / c as f64).abs() < 1e-12);
    }
    let pct = read_csv_column(&out.join("article_percentage.csv"), 1);
    for (i, (_, v)) in pct.iter().enumerate() {
        let (m, n) = fx.article_counts[i];
        assert!((v - 100.0 * m as f64 / n as f64).abs() < 1e-12);
    }
    let anti = read_csv_column(&out.join("stance_anti.csv"), 1);
    assert_eq!(anti[5].1, (fx.article_counts[5].0 / 3) as f64);
    let neutral = read_csv_column(&out.join("stance_neutral.csv"), 1);
    assert!(neutral.iter().all(|(_, v)| *v == 0.0));

    // every child born 2010-11..2011-12 got the dose; each birth year's
    // cohort total is known
    let uptake = std::fs::read_to_string(out.join("uptake.csv")).unwrap();
    let born_2010: u64 = fx.counts[..2].iter().map(|c| c.0).sum();
    let size_2010: u64 = fx.counts[..2].iter().map(|c| c.1).sum();
    let line = uptake.lines().find(|l| l.starts_with("2010,")).unwrap();
    let v: f64 = line[5..].parse().unwrap();
    assert!((v - 100.0 * born_2010 as f64 / size_2010 as f64).abs() < 1e-12);

    let report = read_json(&out.join("derive.json"));
    assert_eq!(report["result"]["records"], 1000);
    assert_eq!(report["config"]["window"], serde_json::json!({"from": "2012-01", "to": "2013-12"}));
}

#[test]
fn derive_rejects_an_empty_article_file() {
    let dir = TempDir::new().unwrap();
    let fx = demo_fixture(dir.path());
    let empty = write(dir.path(), "empty.csv", "month,matched,normalizer\n");
    let o = vaxmedia(&[
        "derive", "--vaccinations", path_arg(&fx.vaccinations), "--cohorts", path_arg(&fx.cohorts), "--articles",
        path_arg(&empty), "--dose", "1", "--target-age", "14", "--window", "2012-01..2013-12", "--out",
        path_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no data rows"));
}

#[test]
fn derive_names_the_month_of_a_missing_cohort() {
    let dir = TempDir::new().unwrap();
    let fx = demo_fixture(dir.path());
    let text = std::fs::read_to_string(&fx.cohorts).unwrap();
    let pruned: String = text.lines().filter(|l| !l.starts_with("2011-03,")).map(|l| format!("{l}\n")).collect();
    let cohorts = write(dir.path(), "pruned.csv", &pruned);
    let o = vaxmedia(&[
        "derive", "--vaccinations", path_arg(&fx.vaccinations), "--cohorts", path_arg(&cohorts), "--dose", "1",
        "--target-age", "14", "--window", "2012-01..2013-12", "--out", path_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("no cohort data") && msg.contains("2011-03") && msg.contains("2012-05"), "{msg}");
}

#[test]
fn derive_reports_parse_errors_with_line_numbers() {
    let dir = TempDir::new().unwrap();
    let fx = demo_fixture(dir.path());
    let bad = write(dir.path(), "bad.csv", "birth_month,count\n2010-11,50\n2010-12,lots\n");
    let o = vaxmedia(&[
        "derive", "--vaccinations", path_arg(&fx.vaccinations), "--cohorts", path_arg(&bad), "--dose", "1",
        "--target-age", "14", "--window", "2012-01..2013-12", "--out", path_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.csv:3:"), "{}", stderr(&o));
}

fn regime_pair(seed: u64, n: usize, flip: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..n).map(|_| e.sample(&mut rng)).collect();
    let y = x
        .iter()
        .enumerate()
        .map(|(t, v)| if t < flip { 0.9 * v } else { -0.9 * v } + 0.2 * e.sample(&mut rng))
        .collect();
    (x, y)
}

#[test]
fn tipping_finds_a_planted_regime() {
    let dir = TempDir::new().unwrap();
    let (x, y) = regime_pair(4, 72, 36);
    let xp = write_series(dir.path(), "x.csv", ym("2008-01"), &x);
    let yp = write_series(dir.path(), "y.csv", ym("2008-01"), &y);
    ok(&vaxmedia(&["tipping", "--x", path_arg(&xp), "--y", path_arg(&yp), "--out", path_arg(dir.path())]));
    let report = read_json(&dir.path().join("tipping.json"));
    let split: vaxmedia::YearMonth = report["result"]["split"].as_str().unwrap().parse().unwrap();
    assert!(ym("2011-01").months_until(split).abs() <= 2, "{split}");
    assert!(report["result"]["before"]["r"].as_f64().unwrap() > 0.8);
    assert!(report["result"]["after"]["r"].as_f64().unwrap() < -0.8);
    assert_eq!(report["config"]["min-segment"], 12);
    let scan = std::fs::read_to_string(dir.path().join("tipping_scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 1 + 72 - 24 + 1);
}

#[test]
fn tipping_on_identical_series() {
    let dir = TempDir::new().unwrap();
    let (x, _) = regime_pair(9, 48, 24);
    let xp = write_series(dir.path(), "x.csv", ym("2008-01"), &x);
    ok(&vaxmedia(&["tipping", "--x", path_arg(&xp), "--y", path_arg(&xp), "--out", path_arg(dir.path())]));
    let r = &read_json(&dir.path().join("tipping.json"))["result"];
    assert!((r["before"]["r"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((r["after"]["r"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(r["delta"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn tipping_on_a_short_series_exits_2() {
    let dir = TempDir::new().unwrap();
    let (x, y) = regime_pair(1, 20, 10);
    let xp = write_series(dir.path(), "x.csv", ym("2008-01"), &x);
    let yp = write_series(dir.path(), "y.csv", ym("2008-01"), &y);
    let o = vaxmedia(&["tipping", "--x", path_arg(&xp), "--y", path_arg(&yp), "--out", path_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("segment too short"));
}

#[test]
fn ccf_reports_every_lag() {
    let dir = TempDir::new().unwrap();
    let (x, _) = regime_pair(2, 80, 0);
    // y follows x by three months
    let y: Vec<f64> = (0..80).map(|t| if t >= 3 { x[t - 3] } else { 0.0 }).collect();
    let xp = write_series(dir.path(), "x.csv", ym("2008-01"), &x);
    let yp = write_series(dir.path(), "y.csv", ym("2008-01"), &y);
    ok(&vaxmedia(&["ccf", "--x", path_arg(&xp), "--y", path_arg(&yp), "--max-lag", "6", "--out", path_arg(dir.path())]));
    let text = std::fs::read_to_string(dir.path().join("ccf.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("lag,r,p,significant99"));
    let rows: Vec<Vec<String>> = text.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows.len(), 13);
    let best = rows.iter().max_by(|a, b| a[1].parse::<f64>().unwrap().total_cmp(&b[1].parse().unwrap())).unwrap();
    assert_eq!(best[0], "3");
    assert_eq!(best[3], "true");
}

#[test]
fn select_queries_through_the_binary() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let e = Normal::new(0.0, 1.0).unwrap();
    let y: Vec<f64> = (0..72).map(|_| e.sample(&mut rng)).collect();
    let good: Vec<f64> = y.iter().map(|v| 3.0 * v + 0.1 * e.sample(&mut rng)).collect();
    let junk: Vec<f64> = (0..72).map(|_| e.sample(&mut rng)).collect();
    let yp = write_series(dir.path(), "y.csv", ym("2010-01"), &y);
    let pp = write_panel(dir.path(), "p.csv", ym("2010-01"), &["junk", "good"], &[junk, good]);
    ok(&vaxmedia(&[
        "select-queries", "--y", path_arg(&yp), "--panel", path_arg(&pp), "--window", "2010-01..2013-12",
        "--validate", "2014-01..2015-12", "--out", path_arg(dir.path()),
    ]));
    let r = read_json(&dir.path().join("selection.json"));
    assert_eq!(r["result"]["chosen"], serde_json::json!(["good"]));
    assert_eq!(r["config"]["mode"], "aggregate");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(vaxmedia(&["tipping", "--bogus"]).status.code(), Some(1));
    assert_eq!(vaxmedia(&["deseason"]).status.code(), Some(1));
    assert_eq!(vaxmedia(&["--window", "2010-13..2011-01", "deseason"]).status.code(), Some(1));
    assert_eq!(vaxmedia(&["deseason", "--input", "/nonexistent/file.csv"]).status.code(), Some(1));
    assert_eq!(vaxmedia(&["--help"]).status.code(), Some(0));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let config = write(dir.path(), "run.toml", "[deseason]\norder = 12\n");
    let o = vaxmedia(&["--config", path_arg(&config), "deseason", "--input", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("order"));
}
