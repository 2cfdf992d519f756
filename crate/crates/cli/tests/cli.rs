use std::fs;
use std::process::{Command, Output};

fn ihdg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ihdg"))
        .args(args)
        .env_remove("IHDG_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn zero_problem_gives_zero_errors_and_blank_orders() {
    let o = ihdg(&["convergence", "--problem", "zero", "--k", "1", "--levels", "2,4", "--final-time", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "k,mesh,err_q,order_q,err_u,order_u\n1,16,0.00e0,,0.00e0,\n1,64,0.00e0,,0.00e0,\n"
    );
}

#[test]
fn csv_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = ihdg(&[
            "convergence", "--k", "0", "--levels", "2,4", "--final-time", "0.25",
            "--out", p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,16,") && rows[1].ends_with(','));
    let cols: Vec<&str> = rows[2].split(',').collect();
    assert_eq!(cols.len(), 6);
    assert!(cols[3].parse::<f64>().is_ok() && cols[5].parse::<f64>().is_ok());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\nproblem = zero\nk = 0\nlevels = 1,2\nfinal_time = 0.5\n").unwrap();
    let o = ihdg(&["convergence", "--config", cfg.to_str().unwrap(), "--k", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().skip(1).all(|l| l.starts_with("2,")), "{out}");
    assert!(out.contains("2,4,") && out.contains("2,16,"));
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "colour = blue\n").unwrap();
    let o = ihdg(&["convergence", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key"));
}

#[test]
fn large_meshes_need_big() {
    let o = ihdg(&["convergence", "--levels", "8,128"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--big"));
    let o = ihdg(&["convergence", "--dim", "3", "--levels", "4,16"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn standard_method_rejects_gradient_terms() {
    let o = ihdg(&["convergence", "--problem", "burgers", "--method", "standard", "--levels", "1,2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("depends on the gradient"), "{}", stderr(&o));
}

#[test]
fn trace_prints_steps() {
    let o = ihdg(&["convergence", "--k", "0", "--levels", "1,2", "--final-time", "1", "--trace"]);
    assert!(o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("mesh_n,step,time,iterations,residual"));
    // one line per step: 1 + 2 steps plus the header
    assert_eq!(err.lines().count(), 4, "{err}");
}

#[test]
fn compare_writes_both_methods() {
    let o = ihdg(&["compare", "--k", "0", "--levels", "2", "--final-time", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("mesh,method,step,iteration,residual,nonlinear_s,jacobian_s,solve_s\n"));
    assert!(out.contains(",interpolatory,") && out.contains(",standard,"));
    let summary = stderr(&o);
    let gap: f64 = summary
        .split("max coefficient gap ")
        .nth(1)
        .and_then(|s| s.split(',').next())
        .and_then(|s| s.trim().parse().ok())
        .expect("gap in summary");
    assert!(gap <= 1e-10);
}

#[test]
fn compare_rejects_gradient_terms() {
    let o = ihdg(&["compare", "--problem", "grad_squared", "--levels", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn checks_pass_and_catch_the_mutation() {
    let o = ihdg(&["checks"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 failed"));
    let o = ihdg(&["checks", "--seed", "7", "--flip-gradient"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL condensed matches full"));
}

#[test]
fn mesh_dump() {
    let o = ihdg(&["mesh", "--dim", "2", "--n", "1"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("# dim 2 vertices 5 elements 4 faces 8"));
}
