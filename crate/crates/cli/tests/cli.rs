use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hjm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hjm")).args(args).output().expect("binary runs")
}

fn demo(file: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo").join(file).to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "command failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().map(|l| l.split(',').map(String::from).collect()).collect()
}

fn column(table: &[Vec<String>], name: &str) -> usize {
    table[0].iter().position(|c| c == name).unwrap_or_else(|| panic!("no column {name} in {:?}", table[0]))
}

/// Zero-volatility model and an affine initial curve (exact on every grid).
fn zero_vol_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    let model = dir.join("zero.toml");
    std::fs::write(
        &model,
        "alpha = [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]\nbeta = 0.15\nc = [40.0, 10.0, 2.0]\n\
         t = [0.5, 2.0, 10.0]\nou_alpha = 1.0\ngamma = [0.1, 0.1, 0.1]\n",
    )
    .unwrap();
    let curve = dir.join("affine.csv");
    let mut text = String::from("maturity_years,rate\n");
    for k in 0..=40 {
        let x = k as f64 * 0.5;
        text.push_str(&format!("{x},{}\n", 0.02 + 0.001 * x));
    }
    std::fs::write(&curve, text).unwrap();
    (model, curve)
}

#[test]
fn budget_for_second_order_scheme() {
    let out = stdout(&hjm(&["budget", "--epsilon", "1e-2", "--order", "2", "--c-disc", "1", "--c-int", "1"]));
    let t = rows(&out);
    assert_eq!(t.len(), 2);
    assert_eq!(t[1][column(&t, "n")], "15");
    assert_eq!(t[1][column(&t, "K")], "200");
}

#[test]
fn demo_swaption_prices_one_row() {
    let out = stdout(&hjm(&["price", "--config", &demo("swaption.toml")]));
    let t = rows(&out);
    assert_eq!(t[0], ["payoff", "estimate", "K", "n", "scheme", "wall_seconds"]);
    assert_eq!(t.len(), 2);
    let estimate: f64 = t[1][1].parse().unwrap();
    assert!(estimate > 0.0 && estimate < 0.1);
    assert!(t[1][0].starts_with("payer_swaption:T=5:delta=0.25:I=12:K=0.04"));
    assert_eq!(t[1][5], "", "timing is empty without --timing");
    let timed = rows(&stdout(&hjm(&["price", "--config", &demo("swaption.toml"), "--timing"])));
    assert!(timed[1][5].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn zero_vol_martingale_gap_vanishes() {
    let out = stdout(&hjm(&["martingale", "--zero-vol", "--paths", "256"]));
    let t = rows(&out);
    assert_eq!(t.len(), 2);
    assert_eq!(t[1][0], "zero_vol");
    let gap: f64 = t[1][column(&t, "rel_gap")].parse().unwrap();
    assert!(gap < 1e-12, "{gap}");
}

#[test]
fn martingale_controls_emit_three_rows() {
    let t = rows(&stdout(&hjm(&["martingale", "--config", &demo("run.toml"), "--controls", "--paths", "256"])));
    let cases: Vec<&str> = t[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(cases, ["model", "zero_vol", "reversed_drift"]);
}

#[test]
fn zero_vol_convergence_table_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let (model, curve) = zero_vol_inputs(dir.path());
    let out = stdout(&hjm(&[
        "converge",
        "--model",
        model.to_str().unwrap(),
        "--curve",
        curve.to_str().unwrap(),
        "--paths",
        "64",
        "--payoff",
        "zcb:T=1:delta=1",
        "--ladder",
        "4,8,16",
        "--reference-steps",
        "32",
    ]));
    let t = rows(&out);
    assert_eq!(t[0], ["scheme", "n", "paths", "estimate", "reference", "abs_error", "slope", "seconds"]);
    assert_eq!(t.len(), 1 + 5 * 3);
    for r in &t[1..] {
        let e: f64 = r[5].parse().unwrap();
        assert!(e < 1e-13, "{r:?}");
    }
}

#[test]
fn convergence_rows_carry_fitted_slopes() {
    let t = rows(&stdout(&hjm(&[
        "converge",
        "--paths",
        "256",
        "--schemes",
        "LT_FWD,SWSS",
        "--ladder",
        "4,8",
        "--reference-steps",
        "16",
        "--richardson",
    ])));
    let schemes: Vec<&str> = t[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(schemes, ["LT_FWD", "LT_FWD", "LT_FWD+RE", "SWSS", "SWSS", "SWSS+RE"]);
    let slope = column(&t, "slope");
    assert!(t[1][slope].parse::<f64>().is_ok());
    assert_eq!(t[1][slope], t[2][slope]);
    assert_eq!(t[3][slope], "", "a single extrapolated row has no slope");
}

#[test]
fn simulate_observes_yearly() {
    let t = rows(&stdout(&hjm(&["simulate", "--paths", "3", "--horizon", "2", "--scheme", "NV"])));
    assert_eq!(t[0][..4], ["path", "branch", "weight", "time"]);
    // NV has one branch per path; two yearly observations each.
    assert_eq!(t.len(), 1 + 3 * 2);
    assert_eq!(t[2][3], "2.0");
    let swss = rows(&stdout(&hjm(&["simulate", "--paths", "3", "--every", "6"])));
    assert_eq!(swss.len(), 1 + 3 * 2 * 2);
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("out.csv");
    let args = ["price", "--payoff", "caplet:T=1:delta=0.25:K=atm", "--paths", "128"];
    let direct = stdout(&hjm(&args));
    let mut with_file = args.to_vec();
    with_file.extend(["--output", file.to_str().unwrap()]);
    assert_eq!(stdout(&hjm(&with_file)), "");
    assert_eq!(std::fs::read_to_string(&file).unwrap(), direct);
}

#[test]
fn calibrate_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let settings = dir.path().join("cal.toml");
    std::fs::write(&settings, "[simulation]\npaths = 128\n[ga]\ngenerations = 0\n[lm]\nmax_iterations = 1\n").unwrap();
    let surface = dir.path().join("surface.csv");
    stdout(&hjm(&[
        "surface",
        "--settings",
        settings.to_str().unwrap(),
        "--maturities",
        "1,2",
        "--moneyness",
        "0.9,1,1.1",
        "--output",
        surface.to_str().unwrap(),
    ]));
    let fitted = dir.path().join("fitted.toml");
    let o = hjm(&[
        "calibrate",
        "--surface",
        surface.to_str().unwrap(),
        "--settings",
        settings.to_str().unwrap(),
        "--fitted",
        fitted.to_str().unwrap(),
    ]);
    let t = rows(&stdout(&o));
    assert_eq!(t[0], ["cell_id", "maturity_years", "strike", "market", "model", "residual", "flagged"]);
    assert_eq!(t.len(), 7);
    // The surface was generated by the starting model itself.
    for r in &t[1..] {
        assert_eq!(r[5].parse::<f64>().unwrap(), 0.0);
    }
    let summary = String::from_utf8(o.stderr).unwrap();
    assert!(summary.starts_with("rmse=0e0"), "{summary}");
    assert!(!summary.contains("wall_seconds"));
    assert!(std::fs::read_to_string(fitted).unwrap().contains("beta = 0.15"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "scheme = [oops\n").unwrap();
    assert_eq!(hjm(&["price", "--config", bad.to_str().unwrap(), "--payoff", "zcb:T=1:delta=1"]).status.code(), Some(2));
    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "shceme = \"NV\"\n").unwrap();
    assert_eq!(hjm(&["price", "--config", unknown.to_str().unwrap(), "--payoff", "zcb:T=1:delta=1"]).status.code(), Some(2));
    assert_eq!(hjm(&["price", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(hjm(&["price", "--scheme", "RK4", "--payoff", "zcb:T=1:delta=1"]).status.code(), Some(2));
    assert_eq!(hjm(&["price", "--model", "/nonexistent/model.toml", "--payoff", "zcb:T=1:delta=1"]).status.code(), Some(2));
    assert_eq!(hjm(&["price", "--payoff", "zcb:T=1.03:delta=1"]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_1() {
    let o = hjm(&["budget", "--epsilon=-1"]);
    assert_eq!(o.status.code(), Some(1));
    let msg = String::from_utf8(o.stderr).unwrap();
    assert_eq!(msg.lines().count(), 1);
    assert!(msg.contains("epsilon=-1"));
    assert_eq!(hjm(&["price", "--payoff", "caplet:T=1:delta=0.25:K=nan"]).status.code(), Some(1));
}

#[test]
fn help_documents_flags() {
    let top = stdout(&hjm(&["--help"]));
    for cmd in ["simulate", "converge", "price", "martingale", "calibrate", "budget"] {
        assert!(top.contains(cmd), "{cmd} missing from --help");
    }
    let price = stdout(&hjm(&["price", "--help"]));
    for flag in ["--config", "--model", "--curve", "--scheme", "--steps-per-year", "--paths", "--points", "--seed", "--skip", "--output", "--threads", "--timing"] {
        assert!(price.contains(flag), "{flag} missing from price --help");
    }
}
