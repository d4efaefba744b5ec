use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hankel_sysid::eval::loss::{hankel_losses, realization_loss, HankelLosses, RealizationLoss};
use hankel_sysid::eval::{adjoint_identity_check, inequality_checks};
use hankel_sysid::lti::markov_params;
use hankel_sysid::pipeline::{certify, detect_order, plan, run_algorithm1, Certificate, PipelineResult};
use hankel_sysid::realize::{balanced_realization, estimate_order, ho_kalman, Realization};
use hankel_sysid::simulate::{simulate, SimOptions, Trajectory};
use hankel_sysid::solver::SolverReport;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::run_bench;
use crate::config::{
    load, BenchConfig, CheckConfig, EstimateConfig, MatrixJson, RealizeConfig, SimulateConfig, SystemJson,
};
use crate::error::{code, CliError, CliResult};
use crate::manifest::{manifest_path, RunManifest};

/// What a command prints and the exit status it asks for. Commands that
/// finish with a soft failure (non-convergence, failed checks) still return
/// their output here.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub json: Value,
    pub text: String,
    pub exit: i32,
}

impl Outcome {
    fn ok(json: Value, text: String) -> Self {
        Self { json, text, exit: code::OK }
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("missing required flag --{flag}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_trajectory(path: &Path) -> CliResult<Trajectory> {
    let file =
        File::open(path).map_err(|e| CliError::Config(format!("{}: cannot open trajectory: {e}", path.display())))?;
    Trajectory::read_csv(BufReader::new(file)).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn cmd_simulate(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<Outcome> {
    let (cfg, raw): (SimulateConfig, _) = load(config)?;
    cfg.noise.validate().map_err(|e| CliError::Config(format!("noise: {e}")))?;
    let sys = cfg.system.to_state_space()?;
    let seed = seed.unwrap_or(cfg.seed);
    let clock = Instant::now();
    let opts = SimOptions { kind: cfg.input, ..SimOptions::default() };
    let traj = simulate(&sys, &cfg.noise, cfg.samples, seed, opts)?;
    traj.write_csv(std::io::BufWriter::new(File::create(out)?))?;

    let mut manifest = RunManifest::new("simulate").with_config(config, &raw);
    manifest.seeds.push(seed);
    manifest.timings.insert("simulate".into(), clock.elapsed().as_secs_f64());
    manifest.output(out);
    manifest.write(&manifest_path(out))?;
    Ok(Outcome::ok(
        json!({"out": out.display().to_string(), "samples": traj.len(), "inputs": traj.r(), "outputs": traj.p(), "seed": seed}),
        format!("wrote {} samples (r = {}, p = {}) to {}", traj.len(), traj.r(), traj.p(), out.display()),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationJson {
    pub order: usize,
    pub a: MatrixJson,
    pub b: MatrixJson,
    pub c: MatrixJson,
    pub hankel_singular_values: Vec<f64>,
    pub s_d_oplus: f64,
}

impl From<&Realization> for RealizationJson {
    fn from(r: &Realization) -> Self {
        Self {
            order: r.d_hat,
            a: (&r.a).into(),
            b: (&r.b).into(),
            c: (&r.c).into(),
            hankel_singular_values: r.source_singulars.clone(),
            s_d_oplus: r.s_d_oplus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverJson {
    pub stage: String,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub kkt_residual: f64,
    pub dual_norm: f64,
    pub rho: f64,
}

impl SolverJson {
    fn new(stage: &str, lambda: f64, r: &SolverReport) -> Self {
        Self {
            stage: stage.to_string(),
            lambda,
            iterations: r.iterations,
            converged: r.converged,
            objective: r.objective,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            kkt_residual: r.kkt_residual,
            dual_norm: r.dual_norm,
            rho: r.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthReport {
    /// Stage-one Hankel losses at `T0`.
    pub hankel: HankelLosses,
    /// Aligned realization loss at `T1`; absent when the order was missed.
    pub realization: Option<RealizationLoss>,
    pub certificate: Option<Certificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub samples: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub d_check: usize,
    pub t0: usize,
    pub t1: usize,
    pub xi: f64,
    pub singular_values: Vec<f64>,
    pub realization: RealizationJson,
    pub hankel_stage1: MatrixJson,
    pub hankel_stage3: Option<MatrixJson>,
    pub solver: Vec<SolverJson>,
    pub converged: bool,
    pub truth: Option<TruthReport>,
    pub notes: Vec<String>,
}

fn truth_report(res: &PipelineResult, truth: &SystemJson, t0: usize) -> CliResult<TruthReport> {
    let sys = truth.to_state_space()?;
    let g0 = markov_params(&sys, 2 * t0 - 1)?;
    let hankel = hankel_losses(&res.report1.g_hat, &g0, t0)?;
    let realization = if res.d_check == sys.d() {
        Some(realization_loss(&res.realization, &balanced_realization(&sys, res.t1)?)?)
    } else {
        None
    };
    Ok(TruthReport { hankel, realization, certificate: certify(res, &sys)? })
}

fn check_dims(cfg: &EstimateConfig, traj: &Trajectory) -> CliResult<()> {
    let (r, p) = (traj.r(), traj.p());
    if let Some(want) = cfg.inputs.filter(|&w| w != r) {
        return Err(CliError::Dimension(format!("config expects {want} inputs, trajectory has {r}")));
    }
    if let Some(want) = cfg.outputs.filter(|&w| w != p) {
        return Err(CliError::Dimension(format!("config expects {want} outputs, trajectory has {p}")));
    }
    if let Some(t) = &cfg.truth {
        let sys = t.to_state_space()?;
        if sys.r() != r || sys.p() != p {
            return Err(CliError::Dimension(format!(
                "truth system has r = {}, p = {}; trajectory has r = {r}, p = {p}",
                sys.r(),
                sys.p()
            )));
        }
    }
    Ok(())
}

pub fn cmd_estimate(config: &Path, trajectory: &Path, out: Option<&Path>, dry_run: bool) -> CliResult<Outcome> {
    let (cfg, raw): (EstimateConfig, _) = load(config)?;
    let traj = read_trajectory(trajectory)?;
    check_dims(&cfg, &traj)?;
    let est = &cfg.estimation;

    if dry_run {
        let plan = plan(est, traj.len(), traj.r(), traj.p(), est.t0 - 1)?;
        let lines: Vec<String> = std::iter::once(format!(
            "N = {}, T0 = {}, N_bar = {}, lambda0 = {:.6e}, xi = {}",
            traj.len(),
            est.t0,
            plan.n_bar0,
            plan.lambda0,
            plan.xi
        ))
        .chain(plan.candidates.iter().map(|(d, t1, l)| format!("  if d = {d}: T1 = {t1}, lambda1 = {l:.6e}")))
        .collect();
        return Ok(Outcome::ok(serde_json::to_value(&plan)?, lines.join("\n")));
    }

    let out = require(&out.map(Path::to_path_buf), "out")?.to_path_buf();
    let clock = Instant::now();
    let res = run_algorithm1(&traj, est, &cfg.solver)?;
    let elapsed = clock.elapsed().as_secs_f64();
    let truth = cfg.truth.as_ref().map(|t| truth_report(&res, t, est.t0)).transpose()?;

    let mut solver = vec![SolverJson::new("stage1", res.lambda0, &res.report1)];
    if let (Some(r3), Some(l1)) = (&res.report3, res.lambda1) {
        solver.push(SolverJson::new("stage3", l1, r3));
    }
    let report = EstimateReport {
        samples: traj.len(),
        inputs: traj.r(),
        outputs: traj.p(),
        d_check: res.d_check,
        t0: est.t0,
        t1: res.t1,
        xi: res.order.xi,
        singular_values: res.order.singular_values.clone(),
        realization: (&res.realization).into(),
        hankel_stage1: (&res.h_stage1).into(),
        hankel_stage3: res.h_stage3.as_ref().map(Into::into),
        solver,
        converged: res.converged(),
        truth,
        notes: res.notes.clone(),
    };
    write_json(&out, &report)?;

    let mut manifest = RunManifest::new("estimate").with_config(config, &raw);
    manifest.timings.insert("stage1".into(), res.timings.stage1.as_secs_f64());
    manifest.timings.insert("stage3".into(), res.timings.stage3.as_secs_f64());
    manifest.timings.insert("realization".into(), res.timings.realization.as_secs_f64());
    manifest.timings.insert("total".into(), elapsed);
    manifest.output(&out);
    manifest.write(&manifest_path(&out))?;

    let text = format!(
        "detected order {} (T1 = {}), {} in {:.2}s; wrote {}",
        res.d_check,
        res.t1,
        if report.converged { "converged" } else { "NOT converged" },
        elapsed,
        out.display()
    );
    let exit = if report.converged { code::OK } else { code::NOT_CONVERGED };
    Ok(Outcome { json: serde_json::to_value(&report)?, text, exit })
}

pub fn cmd_order(config: &Path, trajectory: &Path, out: Option<&Path>) -> CliResult<Outcome> {
    let (cfg, raw): (EstimateConfig, _) = load(config)?;
    let traj = read_trajectory(trajectory)?;
    check_dims(&cfg, &traj)?;
    let stage = detect_order(&traj, &cfg.estimation, &cfg.solver)?;
    let json = json!({
        "d_check": stage.order.d_check,
        "xi": stage.order.xi,
        "singular_values": stage.order.singular_values,
        "lambda0": stage.lambda0,
        "converged": stage.report.converged,
        "iterations": stage.report.iterations,
    });
    if let Some(out) = out {
        write_json(out, &json)?;
        let mut manifest = RunManifest::new("order").with_config(config, &raw);
        manifest.output(out);
        manifest.write(&manifest_path(out))?;
    }
    let text = format!(
        "detected order {} at xi = {} (threshold {}); singular values {:?}",
        stage.order.d_check,
        stage.order.xi,
        2.0 * stage.order.xi,
        stage.order.singular_values
    );
    let exit = if stage.report.converged { code::OK } else { code::NOT_CONVERGED };
    Ok(Outcome { json, text, exit })
}

pub fn cmd_realize(config: &Path, out: Option<&Path>) -> CliResult<Outcome> {
    let (cfg, raw): (RealizeConfig, _) = load(config)?;
    let h = cfg.hankel.to_matrix()?;
    let t = cfg.t;
    if t == 0 || h.nrows() % t != 0 || h.ncols() % t != 0 {
        return Err(CliError::Dimension(format!("a {}x{} matrix is not {t}x{t} blocks", h.nrows(), h.ncols())));
    }
    let d = match (cfg.order, cfg.xi) {
        (Some(d), _) => d,
        (None, Some(xi)) => estimate_order(&h, xi)?.d_check,
        (None, None) => return Err(CliError::Config("realize config needs `order` or `xi`".into())),
    };
    let real = ho_kalman(&h, d, t)?;
    let json = serde_json::to_value(RealizationJson::from(&real))?;
    if let Some(out) = out {
        write_json(out, &json)?;
        let mut manifest = RunManifest::new("realize").with_config(config, &raw);
        manifest.output(out);
        manifest.write(&manifest_path(out))?;
    }
    Ok(Outcome::ok(json, format!("order-{} realization from a {}x{} Hankel matrix", real.d_hat, h.nrows(), h.ncols())))
}

pub fn cmd_check(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> CliResult<Outcome> {
    let (cfg, raw) = match config {
        Some(p) => {
            let (c, v): (CheckConfig, _) = load(p)?;
            (c, Some(v))
        }
        None => (CheckConfig::default(), None),
    };
    let seed = seed.unwrap_or(cfg.seed);
    let adjoint = adjoint_identity_check(cfg.adjoint_pairs, seed)?;
    let ineq = inequality_checks(cfg.samples, seed)?;
    let passed = adjoint.passed() && ineq.passed();
    let json = json!({"adjoint_identity": adjoint, "rank_one": ineq.rank_one, "toeplitz_section": ineq.toeplitz, "passed": passed});
    if let Some(out) = out {
        write_json(out, &json)?;
        let mut manifest = RunManifest::new("check");
        if let (Some(p), Some(v)) = (config, &raw) {
            manifest = manifest.with_config(p, v);
        }
        manifest.seeds.push(seed);
        manifest.output(out);
        manifest.write(&manifest_path(out))?;
    }
    let text = format!(
        "adjoint identity: {}/{} within {:.0e} (worst {:.2e})\nrank-one inequality: {} violations in {}\nToeplitz section inequality: {} violations in {}",
        adjoint.cases - adjoint.failures,
        adjoint.cases,
        adjoint.tolerance,
        adjoint.worst,
        ineq.rank_one.violations,
        ineq.rank_one.samples,
        ineq.toeplitz.violations,
        ineq.toeplitz.samples
    );
    Ok(Outcome { json, text, exit: if passed { code::OK } else { code::FAILURE } })
}

/// Runs the configured suites and writes one CSV per suite, `summary.json`
/// and `manifest.json` into `out`. CSVs and the summary depend only on the
/// config and seed offset; timings go to the manifest alone.
pub fn cmd_bench(config: &Path, out: &Path, seed: Option<u64>, jobs: Option<usize>) -> CliResult<Outcome> {
    let (cfg, raw): (BenchConfig, _) = load(config)?;
    let offset = seed.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    let result = pool.install(|| run_bench(&cfg, offset))?;
    std::fs::create_dir_all(out)?;

    let mut manifest = RunManifest::new("bench").with_config(config, &raw);
    manifest.seeds = result.seeds.clone();
    manifest.timings = result.timings.clone();
    for t in &result.tables {
        let path = out.join(&t.file);
        std::fs::write(&path, &t.bytes)?;
        manifest.output(&path);
    }
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &result.summary)?;
    manifest.output(&summary_path);
    manifest.write(&out.join("manifest.json"))?;

    let lines: Vec<String> = result.summary.criteria.iter().map(|c| c.line()).collect();
    let text = format!(
        "c = {}{}\n{}",
        result.summary.c,
        if result.summary.c_calibrated { " (calibrated)" } else { "" },
        lines.join("\n")
    );
    let exit = if result.summary.passed { code::OK } else { code::FAILURE };
    Ok(Outcome { json: serde_json::to_value(&result.summary)?, text, exit })
}
