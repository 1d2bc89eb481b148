use std::fs;
use std::path::{Path, PathBuf};

use spin_echo::cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use spin_echo::io::{parse_series_csv, SERIES_HEADER, SWEEP_HEADER};
use spin_echo::Method;

const XYZ: &str = "5
small complex, V=O along z
V 0.0 0.0 0.0
H 4.2 0.0 3.1
H 4.9 1.5 3.1
H 5.6 0.0 3.1
O 0.0 0.0 1.6
";

const HYPERFINE: &str = "index,isotope,azz,azz_unit
1,1H,0.52,MHz
2,1H,0.31,MHz
3,1H,2.1e6,rad_s
";

fn spin_echo(args: &[&str]) -> i32 {
    let mut full = vec!["spin-echo"];
    full.extend_from_slice(args);
    run(full)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn echo_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let xyz = write(dir.path(), "m.xyz", XYZ);
    let hf = write(dir.path(), "a.csv", HYPERFINE);
    let out = dir.path().join("e.csv");
    let code = spin_echo(&[
        "echo", "--order", "tcl2", "--geometry", s(&xyz), "--hyperfine", s(&hf),
        "--horizon-us", "20", "--points", "512", "--out", s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some(SERIES_HEADER));
    assert_eq!(text.lines().count(), 513);
    assert!(text.ends_with('\n'));

    let series = parse_series_csv(&out).unwrap();
    assert_eq!(series.len(), 1);
    assert_eq!(series[0].method, Method::Tcl2);
    assert_eq!(series[0].values[0], 1.0);
    assert!(series[0].values.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn echo_both_orders_and_hetero() {
    let dir = tempfile::tempdir().unwrap();
    let xyz = write(dir.path(), "m.xyz", XYZ);
    let hf = write(
        dir.path(),
        "a.csv",
        &format!("{HYPERFINE}0,51V,-400.0,MHz\n"),
    );
    let plain = dir.path().join("plain.csv");
    let hetero = dir.path().join("hetero.csv");
    let base = ["echo", "--order", "both", "--geometry", s(&xyz), "--hyperfine", s(&hf), "--points", "64"];
    let mut a = base.to_vec();
    a.extend(["--out", s(&plain)]);
    assert_eq!(spin_echo(&a), EXIT_OK);
    let mut b = base.to_vec();
    b.extend(["--include-hetero", "--out", s(&hetero)]);
    assert_eq!(spin_echo(&b), EXIT_OK);

    let plain = parse_series_csv(&plain).unwrap();
    let hetero = parse_series_csv(&hetero).unwrap();
    assert_eq!(plain.len(), 2);
    for (p, h) in plain.iter().zip(&hetero) {
        for (vp, vh) in p.values.iter().zip(&h.values) {
            assert!(vh <= vp);
            assert!(vp - vh < 1e-6);
        }
    }
}

#[test]
fn exact_matches_echo_for_isolated_pair() {
    let dir = tempfile::tempdir().unwrap();
    let spins = write(
        dir.path(),
        "s.csv",
        "id,isotope,x,y,z,azz_rad_s\n1,1H,0.0,0.0,3.0,2.0e5\n2,1H,0.0,1.8,3.0,1.2e5\n",
    );
    let exact = dir.path().join("x.csv");
    let tcl = dir.path().join("t.csv");
    let grid = ["--horizon-us", "30", "--points", "40"];
    let mut a = vec!["exact", "--spins", s(&spins), "--out", s(&exact)];
    a.extend(grid);
    assert_eq!(spin_echo(&a), EXIT_OK);
    let mut b = vec!["echo", "--order", "tcl2", "--spins", s(&spins), "--out", s(&tcl)];
    b.extend(grid);
    assert_eq!(spin_echo(&b), EXIT_OK);

    let exact = &parse_series_csv(&exact).unwrap()[0];
    let tcl = &parse_series_csv(&tcl).unwrap()[0];
    assert_eq!(exact.method, Method::Exact);
    // TCL2 is e^{−W}, exact is 1 − W for a single pair
    for (x, t) in exact.values.iter().zip(&tcl.values) {
        let w = -t.ln();
        assert!((x - (1.0 - w)).abs() < 1e-8, "{x} vs {}", 1.0 - w);
    }
}

#[test]
fn fidelity_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    assert_eq!(spin_echo(&["fidelity-sweep", "--grid", "25", "--branch", "both", "--out", s(&out)]), EXIT_OK);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some(SWEEP_HEADER));
    assert_eq!(text.lines().count(), 1 + 2 * 25);
    assert_eq!(text.lines().filter(|l| l.starts_with("weak,")).count(), 25);
}

#[test]
fn bath_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for p in [&a, &b] {
        assert_eq!(spin_echo(&["bath", "--seed", "42", "--edge", "40", "--out", s(p)]), EXIT_OK);
    }
    assert_eq!(spin_echo(&["bath", "--seed", "43", "--edge", "40", "--out", s(&c)]), EXIT_OK);
    let (a, b, c) = (fs::read(a).unwrap(), fs::read(b).unwrap(), fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 65);
}

#[test]
fn bath_feeds_echo() {
    let dir = tempfile::tempdir().unwrap();
    let xyz = write(dir.path(), "m.xyz", XYZ);
    let hf = write(dir.path(), "a.csv", HYPERFINE);
    let bath = dir.path().join("bath.csv");
    let bare = dir.path().join("bare.csv");
    let full = dir.path().join("full.csv");
    assert_eq!(spin_echo(&["bath", "--seed", "1", "--out", s(&bath)]), EXIT_OK);
    let inputs = ["echo", "--geometry", s(&xyz), "--hyperfine", s(&hf), "--points", "32"];
    let mut a = inputs.to_vec();
    a.extend(["--out", s(&bare)]);
    let mut b = inputs.to_vec();
    b.extend(["--bath", s(&bath), "--out", s(&full)]);
    assert_eq!(spin_echo(&a), EXIT_OK);
    assert_eq!(spin_echo(&b), EXIT_OK);
    let bare = &parse_series_csv(&bare).unwrap()[0];
    let full = &parse_series_csv(&full).unwrap()[0];
    assert!(full.values.iter().zip(&bare.values).all(|(f, b)| f <= b));
    assert!(full.values.last() < bare.values.last());
}

#[test]
fn fit_and_hetero_and_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("e.csv");
    let mut text = format!("{SERIES_HEADER}\n");
    for i in 0..100 {
        let t_us = 0.4 * i as f64;
        text.push_str(&format!("{t_us},{:?},TCL2\n", (-(t_us / 10.0f64).powf(1.3)).exp()));
    }
    fs::write(&series, text).unwrap();
    let fit = dir.path().join("fit.txt");
    assert_eq!(spin_echo(&["fit", "--input", s(&series), "--out", s(&fit)]), EXIT_OK);
    let fit = fs::read_to_string(&fit).unwrap();
    let value = |key: &str| -> f64 {
        fit.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((value("T2_us") - 10.0).abs() < 0.1);
    assert!((value("beta") - 1.3).abs() < 0.013);

    let table = dir.path().join("t1.csv");
    assert_eq!(spin_echo(&["hetero", "--out", s(&table)]), EXIT_OK);
    assert_eq!(fs::read_to_string(&table).unwrap().lines().count(), 5);

    let xyz = write(dir.path(), "m.xyz", XYZ);
    let hf = write(dir.path(), "a.csv", HYPERFINE);
    let pairs = dir.path().join("p.csv");
    assert_eq!(
        spin_echo(&["pairs", "--geometry", s(&xyz), "--hyperfine", s(&hf), "--out", s(&pairs)]),
        EXIT_OK
    );
    assert_eq!(fs::read_to_string(&pairs).unwrap().lines().count(), 4);
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "m.xyz", XYZ);
    write(dir.path(), "a.csv", HYPERFINE);
    let cfg = write(
        dir.path(),
        "run.toml",
        "method = \"tcl4\"\noutput = \"cfg.csv\"\n[protocol]\nhorizon_us = 10.0\npoints = 16\n[inputs]\ngeometry = \"m.xyz\"\nhyperfine = \"a.csv\"\n",
    );
    assert_eq!(spin_echo(&["echo", "--config", s(&cfg)]), EXIT_OK);
    let series = parse_series_csv(&dir.path().join("cfg.csv")).unwrap();
    assert_eq!(series[0].method, Method::Tcl4);
    assert_eq!(series[0].len(), 16);

    let out = dir.path().join("flag.csv");
    assert_eq!(
        spin_echo(&["echo", "--config", s(&cfg), "--points", "8", "--order", "tcl2", "--out", s(&out)]),
        EXIT_OK
    );
    let series = parse_series_csv(&out).unwrap();
    assert_eq!(series[0].method, Method::Tcl2);
    assert_eq!(series[0].len(), 8);
}

#[test]
fn exit_codes() {
    assert_eq!(spin_echo(&["teleport"]), EXIT_USAGE);
    assert_eq!(spin_echo(&["echo", "--no-such-flag"]), EXIT_USAGE);
    assert_eq!(spin_echo(&["fidelity-sweep", "--branch", "sideways"]), EXIT_USAGE);
    assert_eq!(spin_echo(&[]), EXIT_USAGE);
    assert_eq!(spin_echo(&["--help"]), EXIT_OK);

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.xyz");
    assert_eq!(
        spin_echo(&["echo", "--geometry", s(&missing), "--hyperfine", s(&missing)]),
        EXIT_DATA
    );
    let bad = write(dir.path(), "bad.xyz", "3\ncomment\nH 0 0 0\nH 1 1 1\n");
    let hf = write(dir.path(), "a.csv", "index,isotope,azz,azz_unit\n0,1H,1.0,MHz\n");
    let out = dir.path().join("never.csv");
    assert_eq!(
        spin_echo(&["echo", "--geometry", s(&bad), "--hyperfine", s(&hf), "--out", s(&out)]),
        EXIT_DATA
    );
    assert!(!out.exists());
    assert_eq!(spin_echo(&["echo", "--horizon-us=-3"]), EXIT_DATA);
    assert_eq!(spin_echo(&["bath", "--exclusion", "50"]), EXIT_DATA);
}
