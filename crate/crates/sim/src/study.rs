//! Single runs, Monte Carlo ensembles and refinement studies.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use sllg_core::diagnostics::{
    builtin_test_fields, interpolant_errors, reconstruct_magnetization, run_recorded, weak_residual,
};
use sllg_core::scheme::{run, run_with, RunOutput, StepDiagnostics};
use sllg_core::vtk::write_vtk;
use sllg_core::{par, NodalField3, P1Space, WienerPath};

use crate::config::{SimulationConfig, StudyMode};
use crate::error::SimError;
use crate::report::{mean_stderr, run_quantities, ReportRow, RowType, StudyReport};

pub const NORM_TOL: f64 = 1e-12;
pub const TANGENCY_TOL: f64 = 1e-9;
pub const ORTHOGONALITY_TOL: f64 = 1e-12;
pub const ENERGY_TOL: f64 = 1e-9;

const INCOMPLETE: &str = "INCOMPLETE";

/// Invariant suite on one run. With `deterministic`, the energy must also be
/// nonincreasing step by step.
pub fn check_invariants(out: &RunOutput, deterministic: bool) -> Vec<String> {
    let mut failures = Vec::new();
    let mut check = |name: &str, value: f64, tol: f64| {
        if !(value <= tol) {
            failures.push(format!("{name} = {value:e} exceeds {tol:e}"));
        }
    };
    check("max ||m(x_n)| - 1|", out.max_norm_defect(), NORM_TOL);
    check("max |v(x_n).m(x_n)|", out.max_tangency(), TANGENCY_TOL);
    check(
        "max |Z^T Z - I|_F",
        out.max_orthogonality(),
        ORTHOGONALITY_TOL,
    );
    check(
        "energy inequality defect",
        out.max_energy_defect(),
        ENERGY_TOL,
    );
    if deterministic {
        if let Some(d) = out
            .diagnostics
            .iter()
            .find(|d| d.energy_next > d.energy * (1.0 + 1e-14))
        {
            failures.push(format!(
                "energy increased at step {}: {:e} -> {:e}",
                d.j, d.energy, d.energy_next
            ));
        }
    }
    failures
}

/// Run the study selected by `cfg.mode`, writing all artifacts under the
/// output directory. A marker file `INCOMPLETE` exists while the study runs
/// and is left behind, holding the error, if it fails.
pub fn run_study(cfg: &SimulationConfig) -> Result<StudyReport, SimError> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(INCOMPLETE), "study in progress\n")?;
    fs::write(dir.join("config.resolved.toml"), cfg.echo())?;
    let result = match cfg.mode {
        StudyMode::Single => run_single(cfg),
        StudyMode::MonteCarlo => run_monte_carlo(cfg),
        StudyMode::Refinement => run_refinement_study(cfg),
    };
    match &result {
        Ok(report) => {
            report.write_csv(BufWriter::new(File::create(dir.join("report.csv"))?))?;
            fs::remove_file(dir.join(INCOMPLETE))?;
        }
        Err(e) => fs::write(dir.join(INCOMPLETE), format!("{e}\n"))?,
    }
    result
}

fn run_rows(
    report: &mut StudyReport,
    space: &P1Space,
    cfg: &SimulationConfig,
    k: f64,
    sample: usize,
    qs: &[(&str, f64)],
) {
    for (q, v) in qs {
        report.rows.push(ReportRow {
            row_type: RowType::Run,
            h: space.mesh_size(),
            k,
            theta: cfg.theta,
            seed: cfg.seed,
            sample: Some(sample),
            quantity: (*q).to_owned(),
            value: *v,
        });
    }
}

fn write_snapshot(
    dir: &Path,
    space: &P1Space,
    j: usize,
    m: &NodalField3,
    big_m: &NodalField3,
) -> sllg_core::Result<()> {
    let f = BufWriter::new(File::create(dir.join(format!("snapshot_{j:06}.vtk")))?);
    write_vtk(
        f,
        space.mesh(),
        &format!("step {j}"),
        &[("m", m), ("M", big_m)],
    )?;
    Ok(())
}

/// One trajectory on stream 0 of the configured seed. Writes the per-step
/// diagnostics CSV and, with a nonzero snapshot stride, VTK snapshots of the
/// transformed m and the physical M = Z m.
pub fn run_single(cfg: &SimulationConfig) -> Result<StudyReport, SimError> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let space = P1Space::new(cfg.build_mesh(0)?)?;
    let params = cfg.scheme_params(0)?;
    let coeffs = cfg.noise.coefficients();
    let path = WienerPath::sample(cfg.seed, coeffs.q(), params.steps(), params.horizon())?;
    if cfg.output.path_dump {
        path.write_csv(BufWriter::new(File::create(dir.join("path.csv"))?))?;
    }
    let m0 = cfg.initial.interpolate(&space)?;
    let mut csv = if cfg.output.diagnostics {
        let mut w = BufWriter::new(File::create(dir.join("diagnostics.csv"))?);
        writeln!(w, "{}", StepDiagnostics::CSV_HEADER)?;
        Some(w)
    } else {
        None
    };
    let stride = cfg.output.snapshot_stride;
    let out = run_with(&space, &params, &coeffs, &path, &m0, |ev| {
        let j = ev.diagnostics.j;
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{}", ev.diagnostics.csv_row())?;
        }
        if stride > 0 && j % stride == 0 {
            let big_m = reconstruct_magnetization(&ev.old.m, ev.rotation, j)?;
            write_snapshot(dir, &space, j, &ev.old.m, &big_m)?;
        }
        Ok(())
    })
    .map_err(|source| SimError::Run {
        seed: cfg.seed,
        sample: 0,
        source,
    })?;
    if let Some(mut w) = csv {
        w.flush()?;
    }
    let last = params.steps();
    if stride > 0 && last % stride == 0 {
        let big_m = reconstruct_magnetization(&out.final_state.m, &out.final_rotation, last)?;
        write_snapshot(dir, &space, last, &out.final_state.m, &big_m)?;
    }
    if cfg.output.z_dump {
        out.final_rotation
            .write_node_csv(BufWriter::new(File::create(
                dir.join("rotation_final.csv"),
            )?))?;
    }

    let deterministic = cfg.noise.is_zero();
    let mut report = StudyReport {
        failures: check_invariants(&out, deterministic),
        ..Default::default()
    };
    if deterministic {
        // the trajectory must not depend on the path when g = 0
        let other = WienerPath::sample(
            cfg.seed.wrapping_add(1),
            coeffs.q(),
            params.steps(),
            params.horizon(),
        )?;
        let again = run(&space, &params, &coeffs, &other, &m0)?;
        if again.final_state != out.final_state {
            report
                .failures
                .push("g = 0 trajectory differs between seeds".to_owned());
        }
    }
    let mut qs = run_quantities(&out, params.dt());
    qs.push((
        "invariants_passed",
        if report.failures.is_empty() { 1.0 } else { 0.0 },
    ));
    run_rows(&mut report, &space, cfg, params.dt(), 0, &qs);
    Ok(report)
}

/// `cfg.samples` independent trajectories on streams 0..samples of the seed,
/// run in parallel. Aggregate rows hold the sample mean (`mean:<quantity>`)
/// and standard error (`stderr:<quantity>`) of every per-run quantity.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<StudyReport, SimError> {
    if cfg.samples < 2 {
        return Err(SimError::Config(format!(
            "run.samples: monte-carlo needs at least 2, got {}",
            cfg.samples
        )));
    }
    let space = P1Space::new(cfg.build_mesh(0)?)?;
    let params = cfg.scheme_params(0)?;
    params.check_regime(space.mesh_size())?;
    let coeffs = cfg.noise.coefficients();
    let deterministic = cfg.noise.is_zero();
    let m0 = cfg.initial.interpolate(&space)?;
    let runs = par::try_map_range(cfg.samples, |s| {
        let path = WienerPath::sample_stream(
            cfg.seed,
            s as u64,
            coeffs.q(),
            params.steps(),
            params.horizon(),
        )
        .map_err(|source| SimError::Run {
            seed: cfg.seed,
            sample: s,
            source,
        })?;
        let out = run(&space, &params, &coeffs, &path, &m0).map_err(|source| SimError::Run {
            seed: cfg.seed,
            sample: s,
            source,
        })?;
        let failures = check_invariants(&out, deterministic);
        Ok::<_, SimError>((run_quantities(&out, params.dt()), failures))
    })?;
    let mut report = StudyReport::default();
    for (s, (qs, failures)) in runs.iter().enumerate() {
        run_rows(&mut report, &space, cfg, params.dt(), s, qs);
        report
            .failures
            .extend(failures.iter().map(|f| format!("sample {s}: {f}")));
    }
    let per_run: Vec<&[(&str, f64)]> = runs.iter().map(|(qs, _)| qs.as_slice()).collect();
    aggregate_rows(&mut report, cfg, space.mesh_size(), params.dt(), &per_run);
    Ok(report)
}

fn aggregate_rows(
    report: &mut StudyReport,
    cfg: &SimulationConfig,
    h: f64,
    k: f64,
    per_run: &[&[(&str, f64)]],
) {
    let Some(first) = per_run.first() else { return };
    for (i, (name, _)) in first.iter().enumerate() {
        let values: Vec<f64> = per_run.iter().map(|qs| qs[i].1).collect();
        let (mean, se) = mean_stderr(&values);
        for (prefix, v) in [("mean", mean), ("stderr", se)] {
            report.rows.push(ReportRow {
                row_type: RowType::Aggregate,
                h,
                k,
                theta: cfg.theta,
                seed: cfg.seed,
                sample: None,
                quantity: format!("{prefix}:{name}"),
                value: v,
            });
        }
    }
}

/// Named per-run quantities and invariant failures of one refinement run.
type RunRecord = (Vec<(String, f64)>, Vec<String>);

/// Quantities whose observed orders a refinement study reports.
pub const REFINEMENT_QUANTITIES: [&str; 4] = ["unit_defect", "m_minus_gap", "v_gap", "residual"];

/// Common-path refinement: the path of the finest level is sampled once per
/// sample and coarsened for the others; mesh divisions and step counts double
/// per level. Per run it records the interpolant errors
/// `unit_defect` = ‖|m_{h,k}| − 1‖_{L²(D_T)}, `m_minus_gap` = ‖m_{h,k} − m⁻_{h,k}‖_{L²(D_T)},
/// `v_gap` = ‖v_{h,k} − ∂_t m_{h,k}‖_{L¹(D_T)}, the weak residual of each
/// built-in test field (`residual_<i>`) and `residual`, the mean of their
/// absolute values. Order rows hold log₂ of the ratio of sample means between
/// consecutive levels.
pub fn run_refinement_study(cfg: &SimulationConfig) -> Result<StudyReport, SimError> {
    let levels = cfg.level_count();
    if levels < 3 || cfg.mode != StudyMode::Refinement {
        return Err(SimError::Config(format!(
            "run.levels: refinement needs at least 3 levels, got {levels}"
        )));
    }
    let spaces = (0..levels)
        .map(|l| Ok(P1Space::new(cfg.build_mesh(l)?)?))
        .collect::<Result<Vec<_>, SimError>>()?;
    let params = (0..levels)
        .map(|l| cfg.scheme_params(l))
        .collect::<Result<Vec<_>, _>>()?;
    for (s, p) in spaces.iter().zip(&params) {
        p.check_regime(s.mesh_size())?;
    }
    let coeffs = cfg.noise.coefficients();
    let deterministic = cfg.noise.is_zero();
    let fields = builtin_test_fields(cfg.horizon);
    let fine = &params[levels - 1];
    let paths = par::try_map_range(cfg.samples, |s| {
        WienerPath::sample_stream(cfg.seed, s as u64, coeffs.q(), fine.steps(), fine.horizon())
    })?;
    let n_runs = cfg.samples * levels;
    let runs = par::try_map_range(n_runs, |r| {
        let (s, l) = (r / levels, r % levels);
        let err = |source| SimError::Run {
            seed: cfg.seed,
            sample: s,
            source,
        };
        let path = paths[s].coarsen(1 << (levels - 1 - l)).map_err(err)?;
        let (space, p) = (&spaces[l], &params[l]);
        let m0 = cfg.initial.interpolate(space).map_err(err)?;
        let (out, traj) = run_recorded(space, p, &coeffs, &path, &m0).map_err(err)?;
        let ie = interpolant_errors(&traj, space);
        let mut qs: Vec<(String, f64)> = run_quantities(&out, p.dt())
            .into_iter()
            .map(|(n, v)| (n.to_owned(), v))
            .collect();
        qs.push(("unit_defect".into(), ie.unit_defect2.sqrt()));
        qs.push(("m_minus_gap".into(), ie.m_minus_gap2.sqrt()));
        qs.push(("v_gap".into(), ie.v_gap));
        let mut total = 0.0;
        for (i, psi) in fields.iter().enumerate() {
            let res = weak_residual(&traj, space, &coeffs, &path, p, psi).map_err(err)?;
            total += res.value.abs();
            qs.push((format!("residual_{i}"), res.value));
        }
        qs.push(("residual".into(), total / fields.len() as f64));
        Ok::<_, SimError>((qs, check_invariants(&out, deterministic)))
    })?;

    let mut report = StudyReport::default();
    let mut means: Vec<Vec<f64>> = vec![Vec::new(); levels];
    for l in 0..levels {
        let (space, k) = (&spaces[l], params[l].dt());
        let level_runs: Vec<&RunRecord> = (0..cfg.samples).map(|s| &runs[s * levels + l]).collect();
        for (s, (qs, failures)) in level_runs.iter().enumerate() {
            let borrowed: Vec<(&str, f64)> = qs.iter().map(|(n, v)| (n.as_str(), *v)).collect();
            run_rows(&mut report, space, cfg, k, s, &borrowed);
            report.failures.extend(
                failures
                    .iter()
                    .map(|f| format!("level {l}, sample {s}: {f}")),
            );
        }
        let names: Vec<(&str, f64)> = level_runs[0]
            .0
            .iter()
            .map(|(n, v)| (n.as_str(), *v))
            .collect();
        let all: Vec<Vec<(&str, f64)>> = level_runs
            .iter()
            .map(|(qs, _)| qs.iter().map(|(n, v)| (n.as_str(), *v)).collect())
            .collect();
        let refs: Vec<&[(&str, f64)]> = all.iter().map(|v| v.as_slice()).collect();
        aggregate_rows(&mut report, cfg, space.mesh_size(), k, &refs);
        for q in REFINEMENT_QUANTITIES {
            let i = names
                .iter()
                .position(|(n, _)| *n == q)
                .expect("quantity recorded");
            means[l].push(mean_stderr(&refs.iter().map(|r| r[i].1).collect::<Vec<_>>()).0);
        }
    }
    for l in 1..levels {
        for (qi, q) in REFINEMENT_QUANTITIES.iter().enumerate() {
            report.rows.push(ReportRow {
                row_type: RowType::Order,
                h: spaces[l].mesh_size(),
                k: params[l].dt(),
                theta: cfg.theta,
                seed: cfg.seed,
                sample: None,
                quantity: (*q).to_owned(),
                value: (means[l - 1][qi] / means[l][qi]).log2(),
            });
        }
    }
    Ok(report)
}
