use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rectiscope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rectiscope")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["generate", "--out", path_str(&path)];
    args.extend_from_slice(extra);
    let out = rectiscope(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_schema(which: &str, instance: &Value) {
    let text = rectiscope(&["schema", which]).stdout;
    let schema: Value = serde_json::from_slice(&text).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "{which}: {errors:?}");
}

/// Numeric rows of a plot file as `(x, y)`.
fn rows(path: &Path) -> Vec<(f64, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect()
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[test]
fn affine_plane_passes_everywhere_and_report_validates() {
    let dir = TempDir::new().unwrap();
    let cloud = generate(&dir, "plane.json", &["--kind", "affine-plane", "--count", "2000"]);
    assert_schema("cloud", &read_json(&cloud));
    let report = dir.path().join("report.json");
    let out = rectiscope(&[
        "classify", "--input", path_str(&cloud), "--out", path_str(&report), "--r0", "0.2", "--scales", "5", "--stride",
        "13",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let value = read_json(&report);
    assert_schema("classify", &value);
    let aggregate = &value["aggregate"];
    for key in ["fixed_paraboloid", "rotating_cylinder", "jones_finite", "ghinassi_finite"] {
        assert_eq!(aggregate[key]["pass_fraction"], 1.0, "{key}");
    }
    assert_eq!(value["constants"]["k"], 1);
    assert_eq!(value["params"]["grid"]["J"], 5);
}

#[test]
fn cantor_mostly_fails_the_rotating_criterion() {
    let dir = TempDir::new().unwrap();
    let cloud = generate(&dir, "cantor.json", &["--kind", "cantor", "--depth", "5"]);
    let report = dir.path().join("report.json");
    let out = rectiscope(&[
        "classify", "--input", path_str(&cloud), "--out", path_str(&report), "--r0", "0.25", "--scales", "4", "--stride",
        "7",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let fraction = read_json(&report)["aggregate"]["rotating_cylinder"]["pass_fraction"].as_f64().unwrap();
    assert!(fraction <= 0.1, "{fraction}");
}

#[test]
fn corrupt_input_exits_one_with_its_row() {
    let dir = TempDir::new().unwrap();
    let cloud = generate(&dir, "circle.json", &["--kind", "circle", "--count", "500"]);
    let text = std::fs::read_to_string(&cloud).unwrap();
    let truncated = dir.path().join("truncated.json");
    std::fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    let out = rectiscope(&["classify", "--input", path_str(&truncated)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("row 1"), "{}", stderr(&out));

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "x1,x2\n0,0\n1,oops\n").unwrap();
    let out = rectiscope(&["classify", "--input", path_str(&csv), "--k", "1"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("row 3"), "{}", stderr(&out));

    let out = rectiscope(&["classify", "--input", path_str(&dir.path().join("absent.json"))]);
    assert_eq!(code(&out), 1);
}

#[test]
fn invalid_parameters_exit_two() {
    let dir = TempDir::new().unwrap();
    let cloud = generate(&dir, "circle.json", &["--kind", "circle", "--count", "2000"]);
    let input = path_str(&cloud);
    let good = ["--scales", "4", "--stride", "500"];
    let out = rectiscope(&[&["classify", "--input", input][..], &good].concat());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for (extra, grid) in [
        (&["--alpha", "1.5"][..], true),
        (&["--rho", "1.2"], true),
        (&["--delta", "5", "--M", "1"], true),
        (&["--tail", "0"], true),
        (&["--quantile-esssup", "1"], true),
        (&["--p", "0.5"], true),
        (&["--out", input], true),
        // Finest radius below the resolution floor.
        (&["--scales", "12"], false),
    ] {
        let mut args = vec!["classify", "--input", input];
        args.extend_from_slice(extra);
        if grid {
            args.extend_from_slice(&good);
        }
        let out = rectiscope(&args);
        assert_eq!(code(&out), 2, "{extra:?}: {}", stderr(&out));
    }
    let csv = generate(&dir, "circle.csv", &["--kind", "circle", "--count", "2000"]);
    assert_eq!(code(&rectiscope(&["classify", "--input", path_str(&csv)])), 2);
    let out = rectiscope(&["classify", "--input", path_str(&csv), "--k", "1", "--scales", "4", "--stride", "500"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn no_valid_scale_exits_three() {
    let dir = TempDir::new().unwrap();
    let cloud = generate(&dir, "plane.json", &["--kind", "affine-plane", "--count", "500"]);
    // Every radius exceeds the largest distance to the boundary (1/2).
    let out = rectiscope(&["classify", "--input", path_str(&cloud), "--r0", "0.8", "--rho", "0.9", "--scales", "1"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cloud = generate(&dir, "graph.json", &["--kind", "c1alpha", "--count", "4096", "--seed", "9"]);
    let again = generate(&dir, "graph2.json", &["--kind", "c1alpha", "--count", "4096", "--seed", "9"]);
    assert_eq!(std::fs::read(&cloud).unwrap(), std::fs::read(&again).unwrap());
    let run = |name: &str| {
        let report = dir.path().join(name);
        let args = ["--input", path_str(&cloud), "--out", path_str(&report), "--r0", "0.125", "--scales", "4"];
        let out = rectiscope(&[&["analyze"][..], &args, &["--stride", "97", "--p", "1", "--p", "inf"]].concat());
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        std::fs::read(report).unwrap()
    };
    let first = run("a.json");
    assert_eq!(first, run("b.json"));
    assert_schema("analyze", &serde_json::from_slice(&first).unwrap());
}

#[test]
fn verify_passes_and_names_a_sabotaged_check() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("verify.json");
    let out = rectiscope(&["verify", "--out", path_str(&report)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().count() >= 13 && stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    assert_schema("verify", &read_json(&report));

    let out = rectiscope(&["verify", "--sabotage", "growth"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("check growth failed"), "{}", stderr(&out));
}

#[test]
fn verify_outcomes_do_not_depend_on_the_seed() {
    let outcomes = |seed: u64| -> Vec<String> {
        let out = rectiscope(&["verify", "--seed", &seed.to_string()]);
        assert_eq!(code(&out), 0, "seed {seed}: {}", stderr(&out));
        String::from_utf8(out.stdout).unwrap().lines().map(|l| l.split_whitespace().take(2).collect()).collect()
    };
    let base = outcomes(0);
    for seed in 1..10 {
        assert_eq!(outcomes(seed), base, "seed {seed}");
    }
}

#[test]
fn plot_files_follow_the_oracles() {
    let dir = TempDir::new().unwrap();
    let analyze = |cloud: &Path, name: &str, extra: &[&str]| -> PathBuf {
        let report = dir.path().join(name);
        let mut args = vec!["analyze", "--input", path_str(cloud), "--out", path_str(&report)];
        args.extend_from_slice(extra);
        let out = rectiscope(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let plots = dir.path().join(format!("{name}.plots"));
        let out = rectiscope(&["report", "--input", path_str(&report), "--out", path_str(&plots)]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        plots
    };

    // Graph of a lacunary series with 1/2-Hölder derivative: consecutive
    // planes turn by about r^(1/2).
    let graph = generate(&dir, "graph.json", &["--kind", "c1alpha", "--alpha", "0.5", "--count", "8192"]);
    let plots = analyze(&graph, "graph", &["--alpha", "0.5", "--r0", "0.125", "--scales", "5", "--stride", "64"]);
    let s = slope(&rows(&plots.join("theta_median.tsv")));
    assert!((0.35..=0.65).contains(&s), "theta slope {s}");

    // Balls centered on a uniformly sampled circle are symmetric about the
    // normal through x, so consecutive planes agree to rounding: all gaps.
    let circle = generate(&dir, "circle.json", &["--kind", "circle", "--count", "10000"]);
    let plots = analyze(&circle, "circle", &["--r0", "0.25", "--scales", "5", "--stride", "1000"]);
    assert!(rows(&plots.join("theta.tsv")).is_empty());
    let betas = rows(&plots.join("beta_p2.tsv"));
    assert!(!betas.is_empty());
    // beta_2 of an arc grows like r.
    assert!((slope(&rows(&plots.join("beta_p2_median.tsv"))) - 1.0).abs() < 0.05);

    // A flat segment has beta = 0 at every scale: gaps, not -inf.
    let plane = generate(&dir, "plane.json", &["--kind", "affine-plane", "--count", "2000"]);
    let plots = analyze(&plane, "plane", &["--r0", "0.2", "--scales", "5", "--stride", "13"]);
    for name in ["beta_p2.tsv", "beta_pinf.tsv", "beta_pinf_median.tsv"] {
        let text = std::fs::read_to_string(plots.join(name)).unwrap();
        assert!(rows(&plots.join(name)).is_empty(), "{name}");
        assert!(!text.contains("inf\t") && !text.contains("NaN"));
    }
    assert!(!rows(&plots.join("excess_cylinder.tsv")).is_empty());
}

#[test]
fn report_without_input_exits_one() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    let out = rectiscope(&["report", "--input", path_str(&missing), "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 1);
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{\"per_point\": 3}").unwrap();
    let out = rectiscope(&["report", "--input", path_str(&garbage), "--out", path_str(dir.path())]);
    assert_eq!(code(&out), 1);
}
