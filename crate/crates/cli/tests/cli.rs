use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use deselboost::io::read_dataset_file;
use deselboost::BoostFit64;

/// Runs the binary on a whitespace separated argument line.
fn run(line: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deselboost")).args(line.split_whitespace()).output().expect("binary runs")
}

fn ok(line: &str) {
    let out = run(line);
    assert!(out.status.success(), "`{line}` failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn assert_failed_cleanly(out: &Output, code: i32, dir: &Path) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(!out.stderr.is_empty());
    assert!(!dir.exists() || fs::read_dir(dir).unwrap().next().is_none(), "outputs left in {}", dir.display());
}

/// Deterministic pseudo-random values in (-1, 1).
fn noise(i: usize, k: usize) -> f64 {
    ((i as f64 * 12.9898 + k as f64 * 78.233).sin() * 43758.5453).fract()
}

/// `y = 2 x0 - x1 + noise` with `p` covariates.
fn write_linear(path: &Path, n: usize, p: usize) {
    let mut text = (0..p).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",") + ",y\n";
    for i in 0..n {
        let x: Vec<f64> = (0..p).map(|j| noise(i, j) * 2.0).collect();
        let y = 2.0 * x[0] - x[1] + 0.3 * noise(i, 99);
        let row: Vec<String> = x.iter().chain([&y]).map(|v| v.to_string()).collect();
        text += &(row.join(",") + "\n");
    }
    fs::write(path, text).unwrap();
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    std::iter::once(header).chain(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect())).collect()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn zero_iterations_gives_the_mean() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    fs::write(&data, "x,y\n1,2\n2,4\n3,9\n").unwrap();
    let out = dir.path().join("out");
    ok(&format!("fit --data {} --response y --family l2 --mstop 0 --out {}", data.display(), out.display()));
    let fit = BoostFit64::read_json(out.join("model.json")).unwrap();
    assert_eq!(fit.offsets, vec![5.0]);
    assert!(fit.trace.is_empty());
    for name in ["risk_path.csv", "coef_paths.csv", "resolved_config.txt"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn saved_model_reproduces_training_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_linear(&data, 80, 5);
    let out = dir.path().join("out");
    ok(&format!("fit --data {} --response y --family l2 --mstop 60 --out {}", data.display(), out.display()));
    let fit = BoostFit64::read_json(out.join("model.json")).unwrap();
    let ds = read_dataset_file(&data, "y", &[]).unwrap().dataset;
    let predicted = fit.predict_dataset(&ds, None).unwrap();
    let replayed = fit.replay(&ds).unwrap();
    for (a, b) in predicted.link[0].iter().zip(&replayed.state.eta[0]) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    let path = read_csv(&out.join("risk_path.csv"));
    assert_eq!(path.len(), 1 + 61);
    let last: f64 = path[61][1].parse().unwrap();
    let rss: f64 = predicted.link[0].iter().zip(ds.response()).map(|(e, y)| 0.5 * (y - e).powi(2)).sum();
    assert!((last - rss).abs() <= 1e-9 * rss);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_linear(&data, 60, 4);
    let run_into = |name: &str, threads: usize| {
        let out = dir.path().join(name);
        ok(&format!(
            "fit --data {} --response y --family l2 --cv 5 --mmax 80 --seed 9 --threads {threads} --out {}",
            data.display(),
            out.display()
        ));
        files(&out).into_iter().filter(|(n, _)| n != "resolved_config.txt").collect::<Vec<_>>()
    };
    let a = run_into("a", 1);
    assert!(a.iter().any(|(n, _)| n == "cv_curve.csv"));
    assert_eq!(a, run_into("b", 3));
}

#[test]
fn resolved_config_reruns_the_same_job() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_linear(&data, 50, 4);
    let first = dir.path().join("first");
    ok(&format!(
        "tune --data {} --response y --family l2 --folds 4 --mmax 60 --rule ose --out {}",
        data.display(),
        first.display()
    ));
    let again = dir.path().join("again");
    ok(&format!("tune --config {} --out {}", first.join("resolved_config.txt").display(), again.display()));
    for name in ["mstop.json", "cv_curve.csv"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_linear(&data, 30, 3);
    let cfg = dir.path().join("run.txt");
    fs::write(&cfg, format!("# toy\ndata = {}\nresponse=y\nfamily=l2\nmstop=5\n", data.display())).unwrap();
    let out = dir.path().join("out");
    ok(&format!("fit --config {} --mstop 12 --out {}", cfg.display(), out.display()));
    let fit = BoostFit64::read_json(out.join("model.json")).unwrap();
    assert_eq!(fit.m_stop(), 12);
    let echoed = fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(echoed.lines().any(|l| l == "mstop=12"));
    assert!(echoed.lines().any(|l| l == "family=l2"));
}

#[test]
fn bad_inputs_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let fit = |data: &Path, family: &str| {
        run(&format!("fit --data {} --response y --family {family} --mstop 3 --out {}", data.display(), out.display()))
    };
    assert_failed_cleanly(&fit(&dir.path().join("missing.csv"), "l2"), 2, &out);

    let text = dir.path().join("text.csv");
    fs::write(&text, "x,y\n1,2\nabc,3\n").unwrap();
    assert_failed_cleanly(&fit(&text, "l2"), 2, &out);

    let holes = dir.path().join("holes.csv");
    fs::write(&holes, "x,y\n1,2\n,3\n").unwrap();
    assert_failed_cleanly(&fit(&holes, "l2"), 2, &out);

    assert_failed_cleanly(&fit(&holes, "poisson"), 1, &out);

    let binary = dir.path().join("binary.csv");
    fs::write(&binary, "x,y\n1,0\n2,2\n3,1\n").unwrap();
    assert_failed_cleanly(&fit(&binary, "logistic"), 2, &out);
}

#[test]
fn malformed_config_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("bad.txt");
    let line = format!("simulate --config {} --out {}", cfg.display(), out.display());
    for text in [
        "scenario=A\nreplications two\n",
        "scenario=A\nsurprise=1\n",
        "scenario=A\nn=50\np=5\nrho=0.5\nreplications=x\n",
        "scenario=E\nn=50\np=5\nrho=0.5\nreplications=1\n",
    ] {
        fs::write(&cfg, text).unwrap();
        assert_failed_cleanly(&run(&line), 1, &out);
    }
}

#[test]
fn robustc_tuning() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_linear(&data, 100, 6);
    let tune = |rule: &str, extra: &str| {
        let out = dir.path().join(rule);
        ok(&format!(
            "tune --data {} --response y --family l2 --folds 5 --mmax 300 --rule {rule} {extra} --out {}",
            data.display(),
            out.display()
        ));
        (read_json(&out.join("mstop.json")), out)
    };
    let (robust, out) = tune("robustc", "--c 1.05");
    let (opt, _) = tune("opt", "");
    assert_eq!(robust["rule"], "robustc");
    assert_eq!(robust["c"], 1.05);
    let m = robust["mstop"].as_u64().unwrap() as usize;
    assert!(m as u64 <= opt["mstop"].as_u64().unwrap());
    // the chosen iteration is the first within the tolerance on the written curve
    let curve = read_csv(&out.join("cv_curve.csv"));
    let mean: Vec<f64> = curve[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    let min = mean.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(mean[m] <= 1.05 * min);
    assert!(mean[..m].iter().all(|&v| v > 1.05 * min));
}

#[test]
fn probing_rule() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_linear(&data, 60, 4);
    let out = dir.path().join("out");
    ok(&format!("tune --data {} --response y --family l2 --rule probing --out {}", data.display(), out.display()));
    let v = read_json(&out.join("mstop.json"));
    assert_eq!(v["capped"], false);
    assert!(v["mstop"].as_u64().unwrap() > 0);
    assert!(!out.join("cv_curve.csv").exists());
}

#[test]
fn strong_single_signal_keeps_one_component() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("a,b,c,d,y\n");
    for i in 0..100 {
        let x: Vec<f64> = (0..4).map(|j| noise(i, j)).collect();
        let y = 10.0 * x[2] + 0.01 * noise(i, 50);
        text += &format!("{},{},{},{},{}\n", x[0], x[1], x[2], x[3], y);
    }
    fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    ok(&format!(
        "deselect --data {} --response y --family l2 --tau 0.999 --mstop 200 --out {}",
        data.display(),
        out.display()
    ));
    let report = read_csv(&out.join("deselection_report.csv"));
    assert_eq!(report[0], ["parameter", "component", "R", "share", "kept"]);
    let kept: Vec<&str> = report[1..].iter().filter(|r| r[4] == "true").map(|r| r[1].as_str()).collect();
    assert_eq!(kept, ["c"]);
    let fin = BoostFit64::read_json(out.join("final_model.json")).unwrap();
    assert_eq!(fin.selected_columns(0).into_iter().collect::<Vec<_>>(), [2]);
    assert!(out.join("initial_model.json").exists());
}

#[test]
fn cumulative_deselection_with_retuning() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_linear(&data, 80, 6);
    let out = dir.path().join("out");
    ok(&format!(
        "deselect --data {} --response y --family l2 --method cumulative --retune --folds 4 --mmax 150 --out {}",
        data.display(),
        out.display()
    ));
    let names: Vec<String> = files(&out).into_iter().map(|(n, _)| n).collect();
    for n in ["initial_cv_curve.csv", "final_cv_curve.csv", "deselection_report.json", "final_model.json"] {
        assert!(names.iter().any(|x| x == n), "{n} missing");
    }
    assert_eq!(read_json(&out.join("deselection_report.json"))["method"], "cumulative");
    let echoed = fs::read_to_string(out.join("resolved_config.txt")).unwrap();
    assert!(echoed.lines().any(|l| l == "retune=true"));
}

#[test]
fn categorical_columns_are_grouped() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("g,x,y\n");
    for i in 0..60 {
        let g = ["red", "green", "blue"][i % 3];
        let x = noise(i, 1);
        let y = if g == "red" { 3.0 } else { 0.0 } + x + 0.1 * noise(i, 2);
        text += &format!("{g},{x},{y}\n");
    }
    fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    ok(&format!(
        "fit --data {} --response y --family l2 --categorical g --mstop 50 --out {}",
        data.display(),
        out.display()
    ));
    let fit = BoostFit64::read_json(out.join("model.json")).unwrap();
    assert!(fit.selected_columns(0).contains(&0));
    let coefs = read_csv(&out.join("coef_paths.csv"));
    assert_eq!(coefs[0], ["iteration", "mu:g", "mu:x"]);
}

#[test]
fn lss_fit_writes_both_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let mut text = String::from("x1,x2,y\n");
    for i in 0..150 {
        let (a, b) = (noise(i, 1), noise(i, 2));
        let y = a + (0.8 * b).exp() * noise(i, 3);
        text += &format!("{a},{b},{y}\n");
    }
    fs::write(&data, text).unwrap();
    let out = dir.path().join("out");
    ok(&format!(
        "fit --data {} --response y --family gaussian-lss --learner pspline --mstop 100 --out {}",
        data.display(),
        out.display()
    ));
    let header = &read_csv(&out.join("coef_paths.csv"))[0];
    assert!(header.iter().any(|h| h.starts_with("sigma:")), "{header:?}");
}

#[test]
fn simulate_writes_one_row_per_replication_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&format!(
        "simulate --scenario A --n 60 --p 10 --rho 0.5 --replications 2 --methods classical,deselect \
         --folds 3 --mmax 100 --n-test 100 --out {}",
        out.display()
    ));
    let rows = read_csv(&out.join("results.csv"));
    assert_eq!(rows.len(), 1 + 4);
    let header = "replication,scenario,n,p,rho,snr,method,tau,mstop_used,tp,fp,tp_mu,fp_mu,tp_sigma,fp_sigma,\
                  metric_name,metric_value";
    assert_eq!(rows[0].join(","), header);
    let methods: Vec<&str> = rows[1..].iter().map(|r| r[6].as_str()).collect();
    assert_eq!(methods, ["classical", "deselect", "classical", "deselect"]);
    assert!(!out.join("failures.csv").exists());
}

fn result_row(rep: usize, method: &str, tp: usize, fp: usize, msep: f64) -> String {
    format!("{rep},A,100,20,0.5,,{method},,50,{tp},{fp},,,,,msep,{msep}\n")
}

#[test]
fn report_means_match_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results.csv");
    let mut text = String::from(
        "replication,scenario,n,p,rho,snr,method,tau,mstop_used,tp,fp,tp_mu,fp_mu,tp_sigma,fp_sigma,\
         metric_name,metric_value\n",
    );
    text += &result_row(0, "classical", 6, 4, 1.5);
    text += &result_row(0, "deselect", 6, 1, 1.25);
    text += &result_row(1, "classical", 5, 2, 2.5);
    text += &result_row(1, "deselect", 4, 0, 2.0);
    fs::write(&results, text).unwrap();
    let out = dir.path().join("out");
    ok(&format!("report --results {} --out {}", results.display(), out.display()));
    let summary = read_csv(&out.join("summary.csv"));
    let col = |name: &str| summary[0].iter().position(|h| h == name).unwrap();
    let (method, measure, mean, count) = (col("method"), col("measure"), col("mean"), col("count"));
    let lookup = |m: &str, what: &str| -> f64 {
        let row = summary[1..].iter().find(|r| r[method] == m && r[measure] == what).unwrap();
        assert_eq!(row[count], "2");
        row[mean].parse().unwrap()
    };
    assert_eq!(lookup("classical", "fp"), 3.0);
    assert_eq!(lookup("deselect", "fp"), 0.5);
    assert_eq!(lookup("classical", "tp"), 5.5);
    assert_eq!(lookup("deselect", "tp"), 5.0);
    assert_eq!(lookup("classical", "msep"), 2.0);
    assert_eq!(lookup("deselect", "msep"), 1.625);
    let long = read_csv(&out.join("long.csv"));
    assert_eq!(long[0].join(","), "replication,scenario,n,p,rho,snr,method,tau,measure,value");
    // tp, fp, mstop_used and the metric for each of the four rows
    assert_eq!(long.len() - 1, 4 * 4);
}

#[test]
fn report_on_missing_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let res = run(&format!("report --results {} --out {}", dir.path().join("none.csv").display(), out.display()));
    assert_failed_cleanly(&res, 2, &out);
}

#[test]
fn help_and_usage_errors() {
    let out = run("--help");
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["fit", "tune", "deselect", "simulate", "report"] {
        assert!(text.contains(sub));
    }
    assert_eq!(run("").status.code(), Some(1));
    assert_eq!(run("fit --response y").status.code(), Some(1));
}
