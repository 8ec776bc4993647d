//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any fails.
//!
//!     cargo test -p sepdet-cli --test acceptance -- --nocapture

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use sepdet::grid::{Grid, Interval};
use sepdet::matcore::{c, real, rel_dev, HermMatrix, SpectralParam};
use sepdet::nystrom;
use sepdet::par::Exec;
use sepdet::random_kernels::{pure_volterra, suite_dims};
use sepdet::schrodinger::{large_z_decay, square_barrier_jost, MatrixPotential, Numerics, PotentialSpec, Shape};
use sepdet::susy_index::{self as susy, AProfile, XiStep};
use sepdet::Error;
use sepdet_cli::{run_job, Command as Job, Status, Table};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn lib<T>(r: sepdet::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn job(cmd: Job, spec: &str) -> Result<Table, String> {
    run_job(cmd, spec).map_err(|e| e.to_string())
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.rows.iter().map(|r| r.get_f64(name).unwrap_or(f64::NAN)).collect()
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

fn herm(rows: &[&[f64]]) -> HermMatrix {
    let m = sepdet::matcore::from_real_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
    HermMatrix::new(m).unwrap()
}

fn scalar(v: f64) -> HermMatrix {
    HermMatrix::from_real_diag(&[v])
}

fn susy_num() -> Numerics {
    Numerics { radius: 12.0, panels: 48, q: 8 }
}

fn tanh() -> AProfile {
    AProfile::tanh_step(scalar(-1.0), scalar(1.0), &susy_num()).unwrap()
}

fn barrier(panels: usize) -> MatrixPotential {
    PotentialSpec::Scalar(Shape::Square { height: 2.0, lo: 0.0, hi: 1.0 })
        .build(&Numerics { radius: 1.0, panels, q: 8 })
        .unwrap()
}

/// The randomized smooth suite, run once through the CLI path and shared by criteria 1, 2, 4.
fn random_suite() -> Result<(Table, f64), String> {
    let seeds: Vec<String> = (0..20).map(|s| s.to_string()).collect();
    let spec = format!("[numerics]\npanels = 16\nq = 8\n[kernel]\nseeds = [{}]\nmax_panels = 64\n", seeds.join(", "));
    let start = Instant::now();
    let t = job(Job::VerifyReduction, &spec)?;
    Ok((t, start.elapsed().as_secs_f64()))
}

fn c1(suite: &(Table, f64)) -> Outcome {
    let (t, secs) = suite;
    ensure!(t.rows.len() == 20, "expected 20 kernels");
    for r in &t.rows {
        ensure!(r.status != Status::Error, "seed {:?}: {}", r.get_f64("seed"), r.message);
    }
    let dims: std::collections::BTreeSet<(usize, usize, usize)> = (0..20).map(suite_dims).collect();
    ensure!(dims.len() == 20, "dims not varied");
    let rel = max(&col(t, "rel_err"));
    let shift = max(&col(t, "oracle_shift"));
    ensure!(rel <= 1e-6, "max rel err {rel:.3e}");
    ensure!(shift < 1e-8, "oracle not self-converged: shift {shift:.3e}");
    ensure!(*secs <= 60.0, "took {secs:.1} s");
    Ok(format!("20 kernels, max rel err {rel:.2e}, max oracle shift {shift:.2e}, {secs:.1} s"))
}

fn c2(suite: &(Table, f64)) -> Outcome {
    let dev = max(&col(&suite.0, "four_way_dev"));
    ensure!(dev <= 1e-7, "max pairwise deviation {dev:.3e}");
    ensure!(suite.0.rows.iter().all(|r| r.get_f64("four_way_dev").is_some()), "missing values");
    Ok(format!("max pairwise deviation of d_H1, d_H2, d_Ua, d_Ub {dev:.2e}"))
}

fn c3() -> Outcome {
    let alphas = [real(1.0), real(-1.0), real(5.0), real(-5.0), real(10.0), real(-10.0), c(0.0, 5.0), c(0.0, -5.0)];
    let grid = Grid::uniform(Interval::finite(0.0, 1.0).unwrap(), 16, 8).unwrap();
    let (mut worst_det, mut worst_tr) = (0.0f64, 0.0f64);
    for seed in 0..6u64 {
        let dims = (1 + seed as usize % 3, 2 + seed as usize % 2);
        let k = lib(pure_volterra(grid.clone(), dims, seed, 1.0))?;
        let tr = k.kernel_trace();
        let d = lib(nystrom::discretize_split_nodes(Exec::Serial, |i, j| k.lower_node(i, j), |i, j| k.upper_node(i, j), &grid, dims.0))?;
        worst_tr = worst_tr.max(tr.via_g1f1.norm()).max(tr.via_g2f2.norm()).max(nystrom::oracle_trace(&d).norm());
        for &a in &alphas {
            let r = lib(k.reduced_det(a))?;
            let vals = [Some(r.d_h1), Some(r.d_h2), r.d_ua, r.d_ub];
            for v in vals.iter().flatten() {
                worst_det = worst_det.max((v.value - 1.0).norm());
            }
        }
    }
    ensure!(worst_det <= 1e-7, "max |det − 1| = {worst_det:.3e}");
    ensure!(worst_tr <= 1e-9, "max |tr| = {worst_tr:.3e}");
    Ok(format!("6 kernels × 8 α: max |det − 1| {worst_det:.2e}, max |tr| {worst_tr:.2e}"))
}

fn c4(suite: &(Table, f64)) -> Outcome {
    let dev = max(&col(&suite.0, "trace_dev"));
    ensure!(dev <= 1e-8, "max trace deviation {dev:.3e}");
    Ok(format!("tr via G₁F₁, G₂F₂ and Nyström: max deviation {dev:.2e}"))
}

fn c5() -> Outcome {
    let spec = std::fs::read_to_string(golden("jost_barrier.toml")).map_err(|e| e.to_string())?;
    let t = job(Job::Jost, &spec)?;
    ensure!(t.rows.len() == 3 && t.all_ok(), "{}", t.summary());
    let rel = max(&col(&t, "rel_err"));
    let cf = max(&col(&t, "closed_form_err"));
    ensure!(rel <= 1e-6, "identity rel err {rel:.3e}");
    ensure!(cf <= 1e-8, "closed form err {cf:.3e}");
    // the independent transfer-matrix value, rechecked here against the library's Jost solver
    let v = barrier(16);
    for z in [real(-1.0), real(-4.0), c(-1.0, 1.0)] {
        let f = lib(v.jost(lib(SpectralParam::new(z))?))?.det_f().value;
        ensure!(rel_dev(f, square_barrier_jost(2.0, z)) <= 1e-8, "det F at {z}");
    }
    let zero = lib(MatrixPotential::zero(1, Interval::finite(0.0, 1.0).unwrap(), &Numerics { radius: 1.0, panels: 16, q: 8 }))?;
    let mut free = 0.0f64;
    for z in [real(-1.0), real(-4.0), c(-1.0, 1.0)] {
        let r = lib(zero.verify_jost_identity(lib(SpectralParam::new(z))?, Exec::default()))?;
        free = free.max((r.lhs_reduced - 1.0).norm()).max((r.lhs_oracle - 1.0).norm()).max((r.rhs - 1.0).norm());
    }
    ensure!(free <= 1e-12, "V = 0 gives {free:.3e}");
    Ok(format!("barrier: identity {rel:.2e}, transfer-matrix {cf:.2e}; V = 0: {free:.1e}"))
}

fn c6() -> Outcome {
    let ys = [10.0, 40.0, 160.0];
    let (devs, slope) = lib(large_z_decay(&barrier(16), &ys))?;
    ensure!(devs.windows(2).all(|w| w[1] < w[0]), "not decreasing: {devs:?}");
    ensure!((-0.7..=-0.3).contains(&slope), "rate {slope:.3}");
    Ok(format!("|det − 1| = {:.3e}, {:.3e}, {:.3e}; rate {slope:.3}", devs[0], devs[1], devs[2]))
}

fn c7() -> Outcome {
    let spec = std::fs::read_to_string(golden("det_formula_tanh.toml")).map_err(|e| e.to_string())?;
    let t = job(Job::DetFormula, &spec)?;
    let r = &t.rows[0];
    ensure!(r.status == Status::Ok, "{}", r.message);
    let expect = (1.0 + 2f64.sqrt()).powi(2);
    let (lhs, oracle, rhs) = (r.get_f64("lhs_re").unwrap(), r.get_f64("oracle_re").unwrap(), r.get_f64("rhs_re").unwrap());
    let rel = r.get_f64("rel_err").unwrap();
    ensure!(rel <= 1e-5, "rel err {rel:.3e}");
    ensure!((rhs.abs() - expect).abs() <= 1e-12, "|rhs| = {rhs}");
    // The sign is not taken from hand algebra: both the reduction and the
    // brute-force oracle give a positive determinant here.
    ensure!(lhs > 0.0 && oracle > 0.0 && rhs > 0.0, "sign mismatch: lhs {lhs}, oracle {oracle}, rhs {rhs}");
    let mut flat = 0.0f64;
    for a in [scalar(0.7), herm(&[&[-1.0, 0.3], &[0.3, 2.0]])] {
        let p = lib(AProfile::constant(a, &susy_num()))?;
        for z in [real(-1.0), c(-0.5, 0.3)] {
            let d = lib(susy::det_formula(&p, lib(SpectralParam::new(z))?, Exec::default()))?;
            flat = flat.max((d.lhs_reduced - 1.0).norm()).max((d.lhs_oracle - 1.0).norm()).max((d.rhs - 1.0).norm());
        }
    }
    ensure!(flat <= 1e-8, "constant path: {flat:.3e}");
    Ok(format!(
        "lhs {lhs:.8}, oracle {oracle:.8}, rhs {rhs:.8} = +(1+√2)² (oracle-fixed sign), rel err {rel:.2e}; constant path {flat:.1e}"
    ))
}

fn c8() -> Outcome {
    let z = lib(SpectralParam::new(real(-1.0)))?;
    let t = lib(susy::trace_formula(&tanh(), z))?;
    ensure!((t.rhs - real(-0.5f64.sqrt())).norm() <= 1e-12, "rhs {}", t.rhs);
    ensure!(t.rel_err <= 1e-4, "tanh mutual deviation {:.3e}", t.rel_err);
    let p = lib(AProfile::new(
        herm(&[&[-1.0, 0.0], &[0.0, 2.0]]),
        vec![(susy::StepShape::Tanh { center: 0.0, width: 1.0 }, herm(&[&[2.0, 0.5], &[0.5, -0.5]]))],
        &susy_num(),
    ))?;
    let m = lib(susy::trace_formula(&p, z))?;
    ensure!(m.rel_err <= 1e-4, "2×2 mutual deviation {:.3e}", m.rel_err);
    Ok(format!("tanh: rhs {:.10}, mutual deviation {:.2e}; 2×2: {:.2e}", t.rhs.re, t.rel_err, m.rel_err))
}

fn c9() -> Outcome {
    let random = lib(susy::random_profile(2, 3, &susy_num()))?;
    let mut gz = 0.0f64;
    for p in [&tanh(), &random] {
        for z in [real(-1.0), c(-1.0, 1.0), c(2.0, 0.5)] {
            let r = lib(susy::gz_trace(p, lib(SpectralParam::new(z))?))?;
            gz = gz.max((r.direct - r.via_xi).norm());
        }
    }
    ensure!(gz <= 1e-8, "g_z trace {gz:.3e}");
    let p = tanh();
    let lambdas = [0.3, 0.6, 1.3, 1.7, 2.0, 2.5, 3.0, 4.0, 6.0, 9.0];
    let abel = susy::xi_h_via_abel(&lib(XiStep::from_profile(&p))?, &lambdas);
    let bdry = lib(susy::xi_h_via_boundary(&p, &lambdas, 1e-4, Exec::default()))?;
    let dev = abel.iter().zip(&bdry).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(dev <= 1e-3, "Abel vs boundary {dev:.3e}");
    let mut res = 0.0f64;
    for z in [c(0.3, 0.7), c(-2.0, 0.5), c(1.5, -1.0)] {
        let (l, r) = lib(susy::xi_a_resolvent_check(&random, z))?;
        res = res.max((l - r).norm());
        let (l, r) = lib(susy::xi_a_resolvent_check(&p, z))?;
        res = res.max((l - r).norm());
    }
    ensure!(res <= 1e-6, "ξ_A derivative check {res:.3e}");
    Ok(format!("g_z trace {gz:.1e}; ξ_H Abel vs boundary {dev:.2e} at 10 λ; ξ_A derivative {res:.1e}"))
}

fn c10() -> Outcome {
    let num = susy_num();
    let cases: [(&str, AProfile, i64); 4] = [
        ("tanh", tanh(), 1),
        ("reversed tanh", lib(AProfile::tanh_step(scalar(1.0), scalar(-1.0), &num))?, -1),
        (
            "diag(−1,2) → diag(1,2)",
            lib(AProfile::tanh_step(herm(&[&[-1.0, 0.0], &[0.0, 2.0]]), herm(&[&[1.0, 0.0], &[0.0, 2.0]]), &num))?,
            1,
        ),
        ("constant", lib(AProfile::constant(scalar(0.7), &num))?, 0),
    ];
    let mut seen = vec![];
    for (name, p, want) in &cases {
        let r = lib(susy::fredholm_index(p))?;
        let via = r.via;
        ensure!(
            r.index == *want && via.xi_a0 == *want && via.xi_h0plus == *want && via.winding == *want,
            "{name}: {r:?}"
        );
        ensure!((r.raw.0 - *want as f64).abs() <= 1e-6 && (r.raw.1 - *want as f64).abs() <= 1e-6, "{name}: raw {:?}", r.raw);
        let (ker, coker) = lib(susy::kernel_dims(p))?;
        ensure!(ker as i64 - coker as i64 == *want, "{name}: kernel dims ({ker}, {coker})");
        seen.push(format!("{name} {want}"));
    }
    let bad = lib(AProfile::tanh_step(scalar(-1.0), scalar(0.0), &num))?;
    ensure!(matches!(susy::fredholm_index(&bad), Err(Error::NotFredholm(_))), "0 ∈ σ(A₊) not rejected");
    Ok(format!("{}; 0 ∈ σ(A₊) → not Fredholm", seen.join(", ")))
}

fn c11() -> Outcome {
    let z = lib(SpectralParam::new(c(-1.0, 0.5)))?;
    let t = lib(susy::identity_suite(&tanh(), z))?;
    // the matrix profile needs the finer grid for 1e-7 residuals
    let random = lib(susy::random_profile(2, 3, &Numerics { radius: 12.0, panels: 96, q: 8 }))?;
    let m = lib(susy::identity_suite(&random, z))?;
    ensure!(t.max() <= 1e-7, "tanh {t:?}");
    ensure!(m.max() <= 1e-7, "random 2×2 {m:?}");
    Ok(format!("max residual: tanh {:.2e}, random 2×2 {:.2e}", t.max(), m.max()))
}

fn golden(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn c12() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = [
        ("jost_barrier", "jost"),
        ("det_formula_tanh", "det-formula"),
        ("index_tanh", "index"),
        ("index_reversed", "index"),
        ("index_diag", "index"),
        ("index_constant", "index"),
        ("index_not_fredholm", "index"),
    ];
    for (name, cmd) in cases {
        let mut outs = vec![];
        for k in 0..2 {
            let out = tmp.path().join(format!("{name}.{k}.csv"));
            Command::new(env!("CARGO_BIN_EXE_sepdet"))
                .args([cmd, "--spec"])
                .arg(golden(&format!("{name}.toml")))
                .arg("--out")
                .arg(&out)
                .stderr(Stdio::null())
                .status()
                .map_err(|e| e.to_string())?;
            outs.push(std::fs::read(&out).map_err(|e| format!("{name}: {e}"))?);
        }
        ensure!(outs[0] == outs[1], "{name}: repeated runs differ");
        let want = std::fs::read(golden(&format!("{name}.csv"))).map_err(|e| format!("{name}: {e}"))?;
        ensure!(outs[0] == want, "{name}: output differs from the golden file");
    }
    Ok(format!("{} specs byte-identical across runs and equal to golden files", cases.len()))
}

// Runs without the libtest harness so the per-criterion lines are never captured.
fn main() {
    // honour `cargo test <filter>` the way a single #[test] named `acceptance` would
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let suite = random_suite();
    let shared = |f: fn(&(Table, f64)) -> Outcome| -> Outcome { suite.as_ref().map_err(|e| e.clone()).and_then(f) };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("reduction equivalence", Box::new(|| shared(c1))),
        ("four-way agreement", Box::new(|| shared(c2))),
        ("quasi-nilpotency", Box::new(c3)),
        ("trace identities", Box::new(|| shared(c4))),
        ("Jost identity", Box::new(c5)),
        ("large-|z| decay", Box::new(c6)),
        ("determinant formula", Box::new(c7)),
        ("trace formula", Box::new(c8)),
        ("spectral shift identities", Box::new(c9)),
        ("index", Box::new(c10)),
        ("supersymmetric identities", Box::new(c11)),
        ("CLI determinism", Box::new(c12)),
    ];
    let mut failed = vec![];
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1} s]", k + 1),
            Err(why) => {
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.1} s]", k + 1);
                failed.push(k + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria PASS", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
