//! Benchmark suites behind `bench`: each runs one experiment, returns its
//! criterion verdict and the rows written to CSV.

use std::collections::BTreeMap;

use hankel_sysid::eval::concentration::{covariance_concentration, noise_term_concentration, InputProcess, NoiseTerm};
use hankel_sysid::eval::inequalities::InequalityReport;
use hankel_sysid::eval::rates::{fit_rate, EnvelopeFit, RateFit};
use hankel_sysid::eval::robustness::{robustness_trials, PerturbationTrial};
use hankel_sysid::eval::suites::{calibrate_c, recovery_rate, run_trials, Bench, CalibrationRow, TrialRecord};
use hankel_sysid::eval::{
    adjoint_identity_check, ho_kalman_exactness_check, inequality_checks, solver_agreement_check, CheckSummary,
};
use hankel_sysid::simulate::NoiseKind;
use serde::Serialize;

use crate::config::{
    BenchConfig, CovarianceConfig, IdentitiesConfig, InequalityConfig, NoiseTermsConfig, RatesConfig, RecoveryConfig,
    RobustnessConfig,
};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u32, name: &str, passed: bool, detail: String) -> Self {
        Self { id, name: name.to_string(), passed, detail }
    }

    /// One line: `[PASS] 4 rank_recovery: ...`.
    pub fn line(&self) -> String {
        format!("[{}] {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub bytes: Vec<u8>,
}

fn table<S: Serialize>(file: &str, rows: &[S]) -> CliResult<Table> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(format!("csv: {e}")))?;
    Ok(Table { file: file.to_string(), bytes })
}

fn sysid<T>(r: hankel_sysid::Result<T>) -> CliResult<T> {
    r.map_err(CliError::from)
}

pub fn identities(cfg: &IdentitiesConfig) -> CliResult<(Vec<CheckSummary>, Vec<CriterionResult>)> {
    let adjoint = sysid(adjoint_identity_check(cfg.adjoint_pairs, cfg.seed))?;
    let (markov, eig) = sysid(ho_kalman_exactness_check(cfg.ho_kalman_systems, cfg.seed))?;
    let (objective, solution) = sysid(solver_agreement_check(cfg.solver_instances, cfg.seed))?;
    let criteria = vec![
        CriterionResult::new(
            1,
            "adjoint_identity",
            adjoint.passed(),
            format!(
                "{} pairs, worst relative error {:.2e} (tol {:.0e})",
                adjoint.cases, adjoint.worst, adjoint.tolerance
            ),
        ),
        CriterionResult::new(
            2,
            "ho_kalman_exactness",
            markov.passed() && eig.passed(),
            format!(
                "{} systems, worst Markov error {:.2e} (tol {:.0e}), worst eigenvalue error {:.2e} (tol {:.0e})",
                markov.cases, markov.worst, markov.tolerance, eig.worst, eig.tolerance
            ),
        ),
        CriterionResult::new(
            3,
            "solver_vs_reference",
            objective.passed() && solution.passed(),
            format!(
                "{} instances, worst objective gap {:.2e} (tol {:.0e}), worst solution distance {:.2e} (tol {:.0e})",
                objective.cases, objective.worst, objective.tolerance, solution.worst, solution.tolerance
            ),
        ),
    ];
    Ok((vec![adjoint, markov, eig, objective, solution], criteria))
}

pub fn recovery(
    bench: &Bench,
    cfg: &RecoveryConfig,
    offset: u64,
) -> CliResult<(Vec<TrialRecord>, f64, CriterionResult)> {
    let seeds = cfg.seeds.seeds(offset);
    let trials = run_trials(bench, cfg.n, &seeds);
    let rate = recovery_rate(&trials);
    let errors = trials.iter().filter(|t| t.is_err()).count();
    let records: Vec<TrialRecord> = trials.into_iter().filter_map(|t| t.ok()).collect();
    let hits = records.iter().filter(|r| r.recovered).count();
    let crit = CriterionResult::new(
        4,
        "rank_recovery",
        rate >= cfg.min_rate,
        format!(
            "{hits}/{} seeds recover d0 = {} at N = {} ({errors} errors, need >= {:.0}%)",
            seeds.len(),
            bench.sys.d(),
            cfg.n,
            100.0 * cfg.min_rate
        ),
    );
    Ok((records, rate, crit))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub median_l2: f64,
    pub count: usize,
}

pub fn rates(
    bench: &Bench,
    cfg: &RatesConfig,
    offset: u64,
) -> CliResult<(Vec<TrialRecord>, RateFit, Vec<CriterionResult>)> {
    let seeds = cfg.seeds.seeds(offset);
    let mut records = Vec::new();
    let mut samples = Vec::new();
    let mut failures = 0;
    for &n in &cfg.n_grid {
        let mut l2 = Vec::new();
        for t in run_trials(bench, n, &seeds) {
            match t {
                Ok(r) => {
                    l2.push(r.l2);
                    records.push(r);
                }
                Err(e) => {
                    log::warn!("trial at N = {n} failed: {e}");
                    failures += 1;
                }
            }
        }
        samples.push(l2);
    }
    let boot_seed = seeds.first().copied().unwrap_or(0);
    let fit = sysid(fit_rate(&cfg.n_grid, &samples, failures, boot_seed))?;
    let (lo, hi) = cfg.slope_range;
    let slope_ok = fit.slope >= lo && fit.slope <= hi;

    let d0 = bench.sys.d() as f64;
    let factor = 6.0 * (2.0 * d0).sqrt();
    let recovered: Vec<&TrialRecord> = records.iter().filter(|r| r.recovered).collect();
    let violations = recovered.iter().filter(|r| r.l1 > factor * r.l2).count();
    let worst = recovered.iter().map(|r| r.l1 / r.l2).fold(0.0, f64::max);
    let crits = vec![
        CriterionResult::new(
            5,
            "spectral_loss_rate",
            slope_ok,
            format!(
                "slope {:.3} (bootstrap band [{:.3}, {:.3}]) over N = {:?}, accepted [{lo}, {hi}]",
                fit.slope, fit.band.0, fit.band.1, cfg.n_grid
            ),
        ),
        CriterionResult::new(
            6,
            "nuclear_vs_frobenius_loss",
            violations == 0 && !recovered.is_empty(),
            format!(
                "{violations} of {} recovered runs exceed L1 <= {factor:.3} L2; largest L1/L2 = {worst:.3}",
                recovered.len()
            ),
        ),
    ];
    Ok((records, fit, crits))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub series: String,
    pub n_bar: usize,
    pub measured: f64,
    pub envelope: f64,
    pub ratio: f64,
}

fn envelope_rows(series: &str, fit: &EnvelopeFit) -> Vec<EnvelopeRow> {
    (0..fit.n_bar.len())
        .map(|i| EnvelopeRow {
            series: series.to_string(),
            n_bar: fit.n_bar[i],
            measured: fit.measured[i],
            envelope: fit.envelope[i],
            ratio: fit.ratio[i],
        })
        .collect()
}

pub fn covariance(cfg: &CovarianceConfig, offset: u64) -> CliResult<(EnvelopeFit, CriterionResult)> {
    let fit = sysid(covariance_concentration(
        cfg.trials,
        &cfg.n_bar_grid,
        cfg.t,
        cfg.r,
        1.0,
        cfg.seed.wrapping_add(offset),
        InputProcess::Iid(NoiseKind::Gaussian),
    ))?;
    let crit = CriterionResult::new(
        7,
        "covariance_concentration",
        fit.within(cfg.max_spread, cfg.max_trend),
        format!(
            "ratio spread {:.3} (max {}), trend {:+.3} (max |{}|) over N = {}..{}",
            fit.spread,
            cfg.max_spread,
            fit.trend,
            cfg.max_trend,
            cfg.n_bar_grid.first().unwrap_or(&0),
            cfg.n_bar_grid.last().unwrap_or(&0)
        ),
    );
    Ok((fit, crit))
}

pub fn noise_terms(
    bench: &Bench,
    cfg: &NoiseTermsConfig,
    offset: u64,
) -> CliResult<(BTreeMap<String, EnvelopeFit>, CriterionResult)> {
    let seeds = cfg.seeds.seeds(offset);
    let mut fits = BTreeMap::new();
    let mut parts = Vec::new();
    let mut ok = true;
    for term in NoiseTerm::ALL {
        let fit = sysid(noise_term_concentration(&bench.sys, &bench.noise, &cfg.n_bar_grid, cfg.t, &seeds, term))?;
        ok &= fit.within(cfg.max_spread, cfg.max_trend);
        parts.push(format!("{} spread {:.3} trend {:+.3}", term.name(), fit.spread, fit.trend));
        fits.insert(term.name().to_string(), fit);
    }
    let crit = CriterionResult::new(
        8,
        "noise_term_envelopes",
        ok,
        format!("{} (max spread {}, max |trend| {})", parts.join("; "), cfg.max_spread, cfg.max_trend),
    );
    Ok((fits, crit))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessSummary {
    pub trials: usize,
    pub applicable: usize,
    pub violations: usize,
    pub a_term_violations: usize,
    pub worst_ratio: f64,
}

pub fn robustness(
    cfg: &RobustnessConfig,
    offset: u64,
) -> CliResult<(Vec<PerturbationTrial>, RobustnessSummary, CriterionResult)> {
    let rep = sysid(robustness_trials(cfg.trials, cfg.seed.wrapping_add(offset)))?;
    let summary = RobustnessSummary {
        trials: rep.trials.len(),
        applicable: rep.applicable,
        violations: rep.violations,
        a_term_violations: rep.a_term_violations,
        worst_ratio: rep.worst_ratio,
    };
    let crit = CriterionResult::new(
        9,
        "realization_error_bound",
        rep.passed(),
        format!(
            "{} of {} perturbations inside the margin; {} exceed the bound; largest loss/bound = {:.3}",
            rep.applicable,
            rep.trials.len(),
            rep.violations,
            rep.worst_ratio
        ),
    );
    Ok((rep.trials, summary, crit))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityRow {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    pub worst_slack: f64,
    pub first_violation: Option<usize>,
}

pub fn inequalities(
    cfg: &InequalityConfig,
    offset: u64,
) -> CliResult<(InequalityReport, Vec<InequalityRow>, CriterionResult)> {
    let rep = sysid(inequality_checks(cfg.samples, cfg.seed.wrapping_add(offset)))?;
    let rows = [("rank_one_perturbation", &rep.rank_one), ("toeplitz_section", &rep.toeplitz)]
        .iter()
        .map(|(name, o)| InequalityRow {
            name: name.to_string(),
            samples: o.samples,
            violations: o.violations,
            worst_slack: o.worst_slack,
            first_violation: o.first_violation,
        })
        .collect();
    let crit = CriterionResult::new(
        10,
        "inequality_checks",
        rep.passed(),
        format!(
            "rank-one: {} violations in {}; Toeplitz section: {} violations in {}",
            rep.rank_one.violations, rep.rank_one.samples, rep.toeplitz.violations, rep.toeplitz.samples
        ),
    );
    Ok((rep, rows, crit))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub c: f64,
    pub c_calibrated: bool,
    pub xi: f64,
    pub phi: f64,
    pub rank_recovery_rate: Option<f64>,
    pub rate_fit: Option<RateFit>,
    pub covariance: Option<EnvelopeFit>,
    pub noise_terms: BTreeMap<String, EnvelopeFit>,
    pub robustness: Option<RobustnessSummary>,
    pub checks: Vec<CheckSummary>,
    pub inequalities: Option<InequalityReport>,
    pub criteria: Vec<CriterionResult>,
    pub passed: bool,
}

pub struct BenchOutput {
    pub summary: BenchSummary,
    pub tables: Vec<Table>,
    pub seeds: Vec<u64>,
    pub timings: BTreeMap<String, f64>,
}

/// Runs every configured suite. `offset` is added to all seeds.
pub fn run_bench(cfg: &BenchConfig, offset: u64) -> CliResult<BenchOutput> {
    let sys = cfg.system.to_state_space()?;
    cfg.noise.validate().map_err(|e| CliError::Config(format!("noise: {e}")))?;
    let mut tables = Vec::new();
    let mut timings = BTreeMap::new();
    let mut seeds = Vec::new();
    let mut criteria = Vec::new();
    let mut clock = std::time::Instant::now();
    let mut lap = |name: &str, timings: &mut BTreeMap<String, f64>| {
        timings.insert(name.to_string(), clock.elapsed().as_secs_f64());
        clock = std::time::Instant::now();
    };

    let (c, c_calibrated) = match (cfg.c, &cfg.calibration) {
        (Some(c), _) => (c, false),
        (None, Some(cal)) => {
            let base = sysid(Bench::with_oracles(sys.clone(), cfg.noise, cfg.t0, cfg.delta, 1.0))?;
            let base = Bench { solver: cfg.solver, ..base };
            let s = cal.seeds.seeds(offset);
            seeds.extend(&s);
            let cal = sysid(calibrate_c(&base, cal.n, &s, &cal.candidates))?;
            tables.push(table::<CalibrationRow>("calibration.csv", &cal.rows)?);
            lap("calibration", &mut timings);
            (cal.c, true)
        }
        (None, None) => return Err(CliError::Config("bench config needs either `c` or `calibration`".into())),
    };
    let bench = Bench { solver: cfg.solver, ..sysid(Bench::with_oracles(sys, cfg.noise, cfg.t0, cfg.delta, c))? };

    let mut checks = Vec::new();
    if let Some(ic) = &cfg.identities {
        let (summaries, crits) = identities(&IdentitiesConfig { seed: ic.seed.wrapping_add(offset), ..ic.clone() })?;
        seeds.push(ic.seed.wrapping_add(offset));
        tables.push(table("identities.csv", &summaries)?);
        checks = summaries;
        criteria.extend(crits);
        lap("identities", &mut timings);
    }
    let mut rank_recovery_rate = None;
    if let Some(rc) = &cfg.recovery {
        let (records, rate, crit) = recovery(&bench, rc, offset)?;
        seeds.extend(rc.seeds.seeds(offset));
        tables.push(table("recovery_trials.csv", &records)?);
        rank_recovery_rate = Some(rate);
        criteria.push(crit);
        lap("recovery", &mut timings);
    }
    let mut rate_fit = None;
    if let Some(rc) = &cfg.rates {
        let (records, fit, crits) = rates(&bench, rc, offset)?;
        seeds.extend(rc.seeds.seeds(offset));
        tables.push(table("rate_trials.csv", &records)?);
        let rows: Vec<RateRow> = (0..fit.n_grid.len())
            .map(|i| RateRow { n: fit.n_grid[i], median_l2: fit.medians[i], count: fit.counts[i] })
            .collect();
        tables.push(table("rate_fit.csv", &rows)?);
        rate_fit = Some(fit);
        criteria.extend(crits);
        lap("rates", &mut timings);
    }
    let mut cov = None;
    if let Some(cc) = &cfg.covariance {
        let (fit, crit) = covariance(cc, offset)?;
        seeds.push(cc.seed.wrapping_add(offset));
        tables.push(table("covariance.csv", &envelope_rows("covariance", &fit))?);
        cov = Some(fit);
        criteria.push(crit);
        lap("covariance", &mut timings);
    }
    let mut noise_fits = BTreeMap::new();
    if let Some(nc) = &cfg.noise_terms {
        let (fits, crit) = noise_terms(&bench, nc, offset)?;
        seeds.extend(nc.seeds.seeds(offset));
        let rows: Vec<EnvelopeRow> = fits.iter().flat_map(|(name, f)| envelope_rows(name, f)).collect();
        tables.push(table("noise_terms.csv", &rows)?);
        noise_fits = fits;
        criteria.push(crit);
        lap("noise_terms", &mut timings);
    }
    let mut robust = None;
    if let Some(rc) = &cfg.robustness {
        let (trials, summary, crit) = robustness(rc, offset)?;
        seeds.push(rc.seed.wrapping_add(offset));
        tables.push(table("robustness.csv", &trials)?);
        robust = Some(summary);
        criteria.push(crit);
        lap("robustness", &mut timings);
    }
    let mut ineq = None;
    if let Some(ic) = &cfg.inequalities {
        let (rep, rows, crit) = inequalities(ic, offset)?;
        seeds.push(ic.seed.wrapping_add(offset));
        tables.push(table("inequalities.csv", &rows)?);
        ineq = Some(rep);
        criteria.push(crit);
        lap("inequalities", &mut timings);
    }

    seeds.sort_unstable();
    seeds.dedup();
    let passed = criteria.iter().all(|c| c.passed);
    Ok(BenchOutput {
        summary: BenchSummary {
            c,
            c_calibrated,
            xi: bench.cfg.xi,
            phi: bench.cfg.phi,
            rank_recovery_rate,
            rate_fit,
            covariance: cov,
            noise_terms: noise_fits,
            robustness: robust,
            checks,
            inequalities: ineq,
            criteria,
            passed,
        },
        tables,
        seeds,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_have_headers() {
        let rows = vec![RateRow { n: 10, median_l2: 0.5, count: 3 }];
        let t = table("x.csv", &rows).unwrap();
        assert_eq!(String::from_utf8(t.bytes).unwrap(), "n,median_l2,count\n10,0.5,3\n");
    }

    #[test]
    fn criterion_line_format() {
        let c = CriterionResult::new(4, "rank_recovery", true, "ok".into());
        assert_eq!(c.line(), "[PASS]  4 rank_recovery: ok");
    }
}
