//! One function per command: each maps a job to a table of rows, one row per
//! input point, in input order. Numerical failures become `error` rows.

use std::sync::Arc;

use sepdet::grid::{Grid, Interval};
use sepdet::matcore::{rel_dev, SpectralParam, C64};
use sepdet::nystrom;
use sepdet::par::{self, Exec};
use sepdet::random_kernels;
use sepdet::schrodinger::{square_barrier_jost, unwind, MatrixPotential, Numerics};
use sepdet::semisep::SemiSepKernel;
use sepdet::susy_index::{self, AProfile, XiStep};

use crate::spec::{Command, JobSpec, KernelToml, PotentialToml};
use crate::table::{Row, Status, Table};
use crate::CliError;

/// Tolerances applied when the spec gives none.
pub fn default_tol(cmd: Command) -> f64 {
    match cmd {
        Command::VerifyReduction | Command::Jost | Command::Det => 1e-6,
        Command::DetFormula => 1e-5,
        Command::TraceFormula => 1e-4,
        Command::Ssf => 1e-3,
        Command::Index => 1e-6,
    }
}

const DEFAULT_EPS: f64 = 1e-4;

pub fn run(cmd: Command, job: &JobSpec, exec: Exec) -> Result<Table, CliError> {
    let num = job.numerics.validate()?;
    let tol = job.numerics.tol.unwrap_or_else(|| default_tol(cmd));
    let mut table = match cmd {
        Command::VerifyReduction => verify_reduction(job, &num, tol, exec)?,
        Command::Jost => jost(job, &num, tol, exec)?,
        Command::Det => det(job, &num, tol, exec)?,
        Command::TraceFormula => trace_formula(job, &num, tol, exec)?,
        Command::DetFormula => det_formula(job, &num, tol, exec)?,
        Command::Ssf => ssf(job, &num, tol, exec)?,
        Command::Index => index(job, &num)?,
    };
    for row in &mut table.rows {
        row.set("radius", num.radius).set("panels", num.panels).set("q", num.q).set("tol", tol);
    }
    Ok(table)
}

fn numerics_cols(mut cols: Vec<&'static str>) -> Vec<&'static str> {
    let mut out = vec!["radius", "panels", "q", "tol"];
    out.append(&mut cols);
    out
}

fn potential<'a>(job: &'a JobSpec, num: &Numerics) -> Result<(MatrixPotential, &'a PotentialToml), CliError> {
    let p = job.potential.as_ref().ok_or_else(|| CliError::Spec("this command needs a [potential] table".into()))?;
    Ok((p.to_spec()?.build(num)?, p))
}

fn profile(job: &JobSpec, num: &Numerics) -> Result<AProfile, CliError> {
    job.profile
        .as_ref()
        .ok_or_else(|| CliError::Spec("this command needs a [profile] table".into()))?
        .build(num)
}

fn z_points(job: &JobSpec) -> Vec<C64> {
    job.z_points.iter().map(|z| z.value()).collect()
}

/// Runs `f` per point (in parallel when enabled) and keeps input order.
fn rows<T: Sync>(exec: Exec, items: &[T], f: impl Fn(&T, &mut Row) -> sepdet::Result<()> + Sync + Send) -> Vec<Row> {
    par::map_slice(exec, items, |item| {
        let mut row = Row::new();
        if let Err(e) = f(item, &mut row) {
            row.error(e);
        }
        row
    })
}

fn verify_reduction(job: &JobSpec, num: &Numerics, tol: f64, exec: Exec) -> Result<Table, CliError> {
    let k = job.kernel.as_ref().ok_or_else(|| CliError::Spec("verify-reduction needs a [kernel] table".into()))?;
    let volterra = match k.kind.as_str() {
        "continuous" => false,
        "volterra" => true,
        other => return Err(CliError::Spec(format!("kernel: unknown kind {other:?} (continuous | volterra)"))),
    };
    if let Some([n, n1, n2]) = k.dims {
        if n == 0 || n1 == 0 || (!volterra && n2 == 0) || (volterra && n1 < 2) {
            return Err(CliError::Spec("kernel: dims must be positive (volterra needs n1 ≥ 2)".into()));
        }
    }
    let interval = Interval::finite(k.interval[0], k.interval[1])?;
    let grid = Grid::uniform(interval, num.panels, num.q)?;
    let alpha = k.alpha.value();
    let mut table = Table::new(numerics_cols(vec![
        "kind", "seed", "n", "n1", "n2", "a", "b", "alpha_re", "alpha_im", "det_re", "det_im", "oracle_re", "oracle_im",
        "oracle_panels", "oracle_shift", "rel_err", "four_way_dev", "agree", "trace_g1f1_re", "trace_g1f1_im",
        "trace_g2f2_re", "trace_g2f2_im", "oracle_trace_re", "oracle_trace_im", "trace_dev",
    ]));
    let items: Vec<(usize, u64)> = k.seeds.iter().copied().enumerate().collect();
    let out = rows(exec, &items, |&(idx, seed), row| {
        let dims = kernel_dims(k, volterra, idx);
        row.set("kind", k.kind.as_str()).set("seed", seed).set("n", dims.0).set("n1", dims.1).set("n2", dims.2);
        row.set("a", k.interval[0]).set("b", k.interval[1]).complex("alpha", alpha);
        let build = |g: &Arc<Grid>| -> sepdet::Result<SemiSepKernel> {
            if volterra {
                random_kernels::pure_volterra(g.clone(), (dims.0, dims.1), seed, k.scale)
            } else {
                random_kernels::continuous_diagonal(g.clone(), dims, seed, k.scale)
            }
        };
        let kernel = build(&grid)?;
        let red = kernel.reduced_det(alpha)?;
        row.complex("det", red.value()).set("four_way_dev", red.max_dev).set("agree", red.agree);
        let conv = nystrom::converged_det(&grid, k.max_panels, 1e-8, |g| {
            let kg = build(g)?;
            let d = nystrom::discretize_split_nodes(Exec::Serial, |i, j| kg.lower_node(i, j), |i, j| kg.upper_node(i, j), g, kg.dims().0)?;
            nystrom::oracle_det(&d, alpha)
        })?;
        let rel = rel_dev(red.value(), conv.value.value);
        row.complex("oracle", conv.value.value).set("oracle_panels", conv.panels).set("oracle_shift", conv.shift);
        row.set("rel_err", rel);
        let tr = kernel.kernel_trace();
        let d = nystrom::discretize_split_nodes(Exec::Serial, |i, j| kernel.lower_node(i, j), |i, j| kernel.upper_node(i, j), &grid, dims.0)?;
        let otr = nystrom::oracle_trace(&d);
        let trace_dev = [(tr.via_g1f1 - tr.via_g2f2).norm(), (tr.via_g1f1 - otr).norm(), (tr.via_g2f2 - otr).norm()]
            .into_iter()
            .fold(0.0, f64::max);
        row.complex("trace_g1f1", tr.via_g1f1).complex("trace_g2f2", tr.via_g2f2).complex("oracle_trace", otr);
        row.set("trace_dev", trace_dev);
        row.check("rel_err", rel, tol).check("oracle_shift", conv.shift, 1e-8).check("four_way_dev", red.max_dev, 1e-7);
        row.check("trace_dev", trace_dev, 1e-8);
        Ok(())
    });
    out.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

fn kernel_dims(k: &KernelToml, volterra: bool, idx: usize) -> (usize, usize, usize) {
    match (k.dims, volterra) {
        (Some([n, n1, _]), true) => (n, n1, 0),
        (Some([n, n1, n2]), false) => (n, n1, n2),
        (None, true) => (1 + idx % 3, 2 + idx % 2, 0),
        (None, false) => random_kernels::suite_dims(idx),
    }
}

/// Closed-form Jost function when the potential is a scalar barrier on [0, 1].
fn closed_form(p: &PotentialToml, z: C64) -> Option<C64> {
    match *p {
        PotentialToml::Square { height, lo, hi } if lo == 0.0 && hi == 1.0 => Some(square_barrier_jost(height, z)),
        PotentialToml::Zero { .. } => Some(C64::new(1.0, 0.0)),
        _ => None,
    }
}

fn jost(job: &JobSpec, num: &Numerics, tol: f64, exec: Exec) -> Result<Table, CliError> {
    let (v, ptoml) = potential(job, num)?;
    let mut table = Table::new(numerics_cols(vec![
        "z_re", "z_im", "det_re", "det_im", "oracle_re", "oracle_im", "jost_det_re", "jost_det_im", "closed_form_re",
        "closed_form_im", "rel_err", "closed_form_err", "oracle_shift", "jost_consistency", "four_way_dev", "agree",
    ]));
    let zs = z_points(job);
    let out = rows(exec, &zs, |&z, row| {
        row.complex("z", z);
        let r = v.verify_jost_identity(SpectralParam::new(z)?.off_cut(1e-12)?, Exec::Serial)?;
        row.complex("det", r.lhs_reduced).complex("oracle", r.lhs_oracle).complex("jost_det", r.rhs);
        row.set("rel_err", r.rel_err).set("oracle_shift", r.oracle_shift).set("jost_consistency", r.jost_consistency);
        row.set("four_way_dev", r.reduced.max_dev).set("agree", r.reduced.agree);
        row.check("rel_err", r.rel_err, tol);
        if let Some(cf) = closed_form(ptoml, z) {
            let err = rel_dev(r.rhs, cf);
            row.complex("closed_form", cf).set("closed_form_err", err).check("closed_form_err", err, 1e-8);
        }
        Ok(())
    });
    out.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

/// det F along the z-path (or along λ + iε for each ε), phase unwound in path order.
fn det(job: &JobSpec, num: &Numerics, tol: f64, exec: Exec) -> Result<Table, CliError> {
    let (v, _) = potential(job, num)?;
    let mut table = Table::new(numerics_cols(vec![
        "sweep", "index", "eps", "z_re", "z_im", "det_re", "det_im", "ln_abs", "arg", "reduced_re", "reduced_im", "rel_err",
    ]));
    let mut sweeps: Vec<(Option<f64>, Vec<C64>)> = vec![];
    if !job.z_points.is_empty() || job.lambda_points.is_empty() {
        sweeps.push((None, z_points(job)));
    }
    if !job.lambda_points.is_empty() {
        let eps = if job.numerics.eps.is_empty() { vec![DEFAULT_EPS] } else { job.numerics.eps.clone() };
        for e in eps {
            sweeps.push((Some(e), job.lambda_points.iter().map(|&l| C64::new(l, e)).collect()));
        }
    }
    for (s, (eps, zs)) in sweeps.into_iter().enumerate() {
        let computed = par::map_slice(exec, &zs, |&z| -> sepdet::Result<_> {
            let zp = SpectralParam::new(z)?.off_cut(1e-12)?;
            let f = v.jost(zp)?.det_f();
            let red = v.bs_kernel(zp)?.reduced_det(C64::new(1.0, 0.0))?;
            Ok((f, red.value()))
        });
        // the phase is unwound across the successful points only
        let ok: Vec<(C64, sepdet::matcore::DetValue)> =
            zs.iter().zip(&computed).filter_map(|(z, c)| c.as_ref().ok().map(|(f, _)| (*z, *f))).collect();
        let (okz, okd): (Vec<_>, Vec<_>) = ok.into_iter().unzip();
        let mut unwound = unwind(&okz, &okd).into_iter();
        for (i, (z, c)) in zs.iter().zip(computed).enumerate() {
            let mut row = Row::new();
            row.set("sweep", s).set("index", i).set("eps", eps).complex("z", *z);
            match c {
                Ok((_, reduced)) => {
                    let p = unwound.next().expect("one unwound point per success");
                    let err = rel_dev(reduced, p.det);
                    row.complex("det", p.det).set("ln_abs", p.ln_abs).set("arg", p.arg).complex("reduced", reduced);
                    row.set("rel_err", err).check("rel_err", err, tol);
                }
                Err(e) => {
                    row.error(e);
                }
            }
            table.push(row);
        }
    }
    Ok(table)
}

fn trace_formula(job: &JobSpec, num: &Numerics, tol: f64, exec: Exec) -> Result<Table, CliError> {
    let p = profile(job, num)?;
    let mut table = Table::new(numerics_cols(vec![
        "z_re", "z_im", "green_diag_re", "green_diag_im", "log_deriv_re", "log_deriv_im", "rhs_re", "rhs_im", "rel_err",
    ]));
    let zs = z_points(job);
    let out = rows(exec, &zs, |&z, row| {
        row.complex("z", z);
        let t = susy_index::trace_formula(&p, SpectralParam::new(z)?.off_cut(1e-12)?)?;
        row.complex("green_diag", t.green_diag).complex("log_deriv", t.log_deriv).complex("rhs", t.rhs);
        row.set("rel_err", t.rel_err).check("rel_err", t.rel_err, tol);
        Ok(())
    });
    out.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

fn det_formula(job: &JobSpec, num: &Numerics, tol: f64, exec: Exec) -> Result<Table, CliError> {
    let p = profile(job, num)?;
    let mut table = Table::new(numerics_cols(vec![
        "z_re", "z_im", "lhs_re", "lhs_im", "oracle_re", "oracle_im", "rhs_re", "rhs_im", "rel_err", "oracle_shift",
        "four_way_dev", "agree",
    ]));
    let zs = z_points(job);
    let out = rows(exec, &zs, |&z, row| {
        row.complex("z", z);
        let r = susy_index::det_formula(&p, SpectralParam::new(z)?.off_cut(1e-12)?, Exec::Serial)?;
        row.complex("lhs", r.lhs_reduced).complex("oracle", r.lhs_oracle).complex("rhs", r.rhs);
        row.set("rel_err", r.rel_err).set("oracle_shift", r.oracle_shift);
        row.set("four_way_dev", r.reduced.max_dev).set("agree", r.reduced.agree);
        row.check("rel_err", r.rel_err, tol);
        Ok(())
    });
    out.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

/// ξ_A by counting and by boundary values; ξ_H by the Abel transform and by
/// boundary values of ln det(I − K), one row per (ε, λ).
fn ssf(job: &JobSpec, num: &Numerics, tol: f64, exec: Exec) -> Result<Table, CliError> {
    let p = profile(job, num)?;
    let step = XiStep::from_profile(&p)?;
    let mut table = Table::new(numerics_cols(vec![
        "eps", "lambda", "xi_a_counting", "xi_a_boundary", "xi_h_abel", "xi_h_boundary", "abel_dev",
    ]));
    let lambdas = &job.lambda_points;
    let xa = susy_index::xi_a(&p, lambdas)?;
    let abel = susy_index::xi_h_via_abel(&step, lambdas);
    let eps = if job.numerics.eps.is_empty() { vec![DEFAULT_EPS] } else { job.numerics.eps.clone() };
    let items: Vec<(f64, usize)> = eps.iter().flat_map(|&e| (0..lambdas.len()).map(move |k| (e, k))).collect();
    let out = rows(exec, &items, |&(e, k), row| {
        row.set("eps", e).set("lambda", lambdas[k]).set("xi_a_counting", xa.counting[k]);
        row.set("xi_a_boundary", xa.boundary[k]).set("xi_h_abel", abel[k]);
        let b = susy_index::xi_h_via_boundary(&p, &[lambdas[k]], e, Exec::Serial)?[0];
        let dev = (b - abel[k]).abs();
        row.set("xi_h_boundary", b).set("abel_dev", dev).check("abel_dev", dev, tol);
        let count_dev = (xa.boundary[k] - xa.counting[k] as f64).abs();
        row.check("xi_a boundary vs counting", count_dev, 1e-5);
        Ok(())
    });
    out.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

fn index(job: &JobSpec, num: &Numerics) -> Result<Table, CliError> {
    let p = profile(job, num)?;
    let mut table = Table::new(numerics_cols(vec![
        "dim", "min_abs_eig", "index", "xi_a0", "xi_h0plus", "winding", "xi_h0plus_raw", "winding_raw", "ker_dim",
        "coker_dim", "kernel_index",
    ]));
    let mut row = Row::new();
    row.set("dim", p.dim());
    let computed = (|| -> sepdet::Result<()> {
        row.set("min_abs_eig", p.min_abs_asymptotic_eig()?);
        let r = susy_index::fredholm_index(&p)?;
        row.set("index", r.index).set("xi_a0", r.via.xi_a0).set("xi_h0plus", r.via.xi_h0plus).set("winding", r.via.winding);
        row.set("xi_h0plus_raw", r.raw.0).set("winding_raw", r.raw.1);
        let (ker, coker) = susy_index::kernel_dims(&p)?;
        let ki = ker as i64 - coker as i64;
        row.set("ker_dim", ker).set("coker_dim", coker).set("kernel_index", ki);
        if ki != r.index {
            row.fail(format!("kernel dimensions give {ki}, the index routes give {}", r.index));
        }
        Ok(())
    })();
    if let Err(e) = computed {
        row.error(e);
    }
    debug_assert!(row.status != Status::Ok || row.get("index").is_some());
    table.push(row);
    Ok(table)
}
