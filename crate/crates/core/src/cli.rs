//! The `diatomic-dp` command-line front end.
//!
//! Every solver command writes `trace.csv` (one row per iteration) and
//! `result.json` into `--out`. Exit codes: 0 success, 1 input or I/O error,
//! 2 violated precondition (e.g. an unbalanced MDP for `safe`/`risky`),
//! 3 failed internal property check.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::control::{optimality_certificate, run_svi, Mode};
use crate::dbo::{avar_tables, dbo_iterate_with, Compression, DistFunction, FissionOptions, Rounding};
use crate::diatomic::{is_alpha_coherent, run_spe};
use crate::dist::{check_level, DiscreteDist};
use crate::lp::{build_risky_dual, build_risky_primal, duality_gap_check};
use crate::mdp::{bellman_policy_op, state_values, Mdp, Policy, QTable, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::robust::{bavar_vs_avar_gap, star_kernel, worst_best_case};
use crate::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "DIATOMIC_DP_THREADS";
/// Largest number of deterministic policies `robust-verify` enumerates.
pub const POLICY_CAP: usize = 4096;
/// Tolerance of `robust-verify` on `|oracle − SPE|`.
pub const ORACLE_TOL: f64 = 1e-7;

#[derive(Debug, Parser)]
#[command(
    name = "diatomic-dp",
    version,
    about = "Diatomic distributional dynamic programming on tabular MDPs"
)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// MDP JSON file.
    pub mdp: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Replaces the discount of the MDP file.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classic policy evaluation.
    Eval {
        #[command(flatten)]
        common: Common,
        /// `uniform`, `always:<action>` or a JSON table `[[π(a|x1), ...], ...]`.
        #[arg(long, default_value = "uniform")]
        policy: String,
    },
    /// Sorted policy evaluation (BAVaR pair of a policy).
    Spe {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "uniform")]
        policy: String,
    },
    /// Exact or compressed atomic fission of the return distributions.
    Dbo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "uniform")]
        policy: String,
        /// Number of operator applications.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Compression grid size, 0 for exact fission.
        #[arg(long, default_value_t = 0)]
        bins: usize,
    },
    /// Safe sorted value iteration.
    Safe {
        #[command(flatten)]
        common: Common,
        /// Certify the result against every deterministic policy and this
        /// many random policies drawn with `--seed`.
        #[arg(long)]
        certify: Option<usize>,
    },
    /// Risky sorted value iteration.
    Risky {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        certify: Option<usize>,
    },
    /// Brute-force worst/best case over permutation kernels against SPE.
    RobustVerify {
        #[command(flatten)]
        common: Common,
        /// Defaults to every deterministic policy.
        #[arg(long)]
        policy: Option<String>,
        /// Also bracket the BAVaRs with the AVaRs of `k`-step returns.
        #[arg(long, default_value_t = 0)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        bins: usize,
    },
    /// Primal and dual risky-control LPs.
    RiskyLp {
        #[command(flatten)]
        common: Common,
        /// Comma-separated initial weights, or `uniform`.
        #[arg(long, default_value = "uniform")]
        nu0: String,
        /// Write `primal.lp` and `dual.lp` into the output directory.
        #[arg(long)]
        dump_lp: bool,
    },
    /// Left and right AVaR of a distribution file `[{"value": v, "prob": p}, ...]`.
    Avar {
        dist: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Maps an error onto the exit-code contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } | Error::Io(_) | Error::Dimension(_) | Error::Domain(_) | Error::Resource(_) => 1,
        Error::Precondition(_) | Error::NotBalanced { .. } => 2,
        Error::PropertyFailure(_) | Error::Solver { .. } | Error::Convergence { .. } => 3,
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main_entry() -> i32 {
    let config = match RunConfig::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&config) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Solver { pivot_log, .. } = &e {
                for line in pivot_log {
                    eprintln!("  {line}");
                }
            }
            exit_code(&e)
        }
    }
}

/// Runs one command, writing its artifacts, and returns the text for stdout.
pub fn run(config: &RunConfig) -> Result<String> {
    configure_threads()?;
    match &config.command {
        Command::Eval { common, policy } => run_eval(common, policy),
        Command::Spe { common, policy } => run_spe_cmd(common, policy),
        Command::Dbo {
            common,
            policy,
            k,
            bins,
        } => run_dbo(common, policy, *k, *bins),
        Command::Safe { common, certify } => run_control(common, Mode::Safe, *certify),
        Command::Risky { common, certify } => run_control(common, Mode::Risky, *certify),
        Command::RobustVerify {
            common,
            policy,
            k,
            bins,
        } => run_robust(common, policy.as_deref(), *k, *bins),
        Command::RiskyLp { common, nu0, dump_lp } => run_risky_lp(common, nu0, *dump_lp),
        Command::Avar { dist, alpha, out } => run_avar(dist, *alpha, out),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::Domain(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    if n == 0 {
        return Err(Error::Domain(format!("{THREADS_ENV} must be positive")));
    }
    // a pool built earlier in the same process stays in place
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_mdp(common: &Common) -> Result<Mdp> {
    if !(common.tol > 0.0) {
        return Err(Error::Domain(format!("--tol must be positive, got {}", common.tol)));
    }
    let mdp = Mdp::from_json_str(&read_file(&common.mdp)?)?;
    match common.gamma {
        Some(g) => mdp.with_gamma(g),
        None => Ok(mdp),
    }
}

fn action_index(mdp: &Mdp, token: &str) -> Result<usize> {
    if let Some(a) = mdp.action_names().iter().position(|n| n == token) {
        return Ok(a);
    }
    token
        .parse::<usize>()
        .ok()
        .filter(|&a| a < mdp.n_actions())
        .ok_or_else(|| Error::Domain(format!("unknown action {token:?}")))
}

/// Parses `uniform`, `always:<action>` (name or 0-based index) or a JSON table.
pub fn parse_policy(mdp: &Mdp, spec: &str) -> Result<Policy> {
    let spec = spec.trim();
    if spec == "uniform" {
        return Ok(Policy::uniform(mdp));
    }
    if let Some(action) = spec.strip_prefix("always:") {
        let a = action_index(mdp, action.trim())?;
        return Policy::deterministic(mdp, &vec![a; mdp.n_states()]);
    }
    let table: Vec<Vec<f64>> = serde_json::from_str(spec)?;
    if table.len() != mdp.n_states() || table.iter().any(|r| r.len() != mdp.n_actions()) {
        return Err(Error::Dimension(format!(
            "policy table must be {} x {}",
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let policy = Policy::new(mdp.n_states(), mdp.n_actions(), table.concat())?;
    policy.check_compatible(mdp)?;
    Ok(policy)
}

fn parse_nu0(spec: &str, n: usize) -> Result<Vec<f64>> {
    if spec.trim() == "uniform" {
        return Ok(vec![1.0 / n as f64; n]);
    }
    let weights = spec
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Domain(format!("bad weight {t:?} in --nu0")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if weights.len() != n {
        return Err(Error::Dimension(format!(
            "--nu0 needs {n} weights, got {}",
            weights.len()
        )));
    }
    Ok(weights)
}

fn pair_columns(mdp: &Mdp, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for x in mdp.state_names() {
        for a in mdp.action_names() {
            out.push(format!("{prefix}_{x}_{a}"));
        }
    }
    out
}

fn push_values(line: &mut String, values: &[f64]) {
    for v in values {
        let _ = write!(line, ",{v}");
    }
}

fn table_json(mdp: &Mdp, q: &QTable) -> Value {
    let mut outer = Map::new();
    for (x, xn) in mdp.state_names().iter().enumerate() {
        let mut inner = Map::new();
        for &a in mdp.actions(x) {
            inner.insert(mdp.action_names()[a].clone(), json!(q.get(x, a)));
        }
        outer.insert(xn.clone(), Value::Object(inner));
    }
    Value::Object(outer)
}

fn states_json(mdp: &Mdp, v: &[f64]) -> Value {
    Value::Object(
        mdp.state_names()
            .iter()
            .cloned()
            .zip(v.iter().map(|x| json!(x)))
            .collect(),
    )
}

fn action_sets_json(mdp: &Mdp, sets: &[Vec<usize>]) -> Value {
    Value::Object(
        mdp.state_names()
            .iter()
            .cloned()
            .zip(
                sets.iter()
                    .map(|s| json!(s.iter().map(|&a| mdp.action_names()[a].clone()).collect::<Vec<_>>())),
            )
            .collect(),
    )
}

fn write_artifacts(out: &Path, trace: Option<&str>, result: &Value) -> Result<()> {
    fs::create_dir_all(out)?;
    if let Some(trace) = trace {
        fs::write(out.join("trace.csv"), trace)?;
    }
    let mut text = serde_json::to_string_pretty(result)?;
    text.push('\n');
    fs::write(out.join("result.json"), text)?;
    Ok(())
}

fn run_eval(common: &Common, policy: &str) -> Result<String> {
    let mdp = load_mdp(common)?;
    let pi = parse_policy(&mdp, policy)?;
    let mut trace = format!("iteration,residual,{}\n", pair_columns(&mdp, "q").join(","));
    let mut q = QTable::for_mdp(&mdp);
    let (mut iterations, mut residual) = (0, f64::INFINITY);
    while iterations < common.max_iter && residual > common.tol {
        let next = bellman_policy_op(&mdp, &pi, &q)?;
        residual = next.sup_distance(&q);
        q = next;
        iterations += 1;
        let mut line = format!("{iterations},{residual}");
        push_values(&mut line, q.as_slice());
        trace.push_str(&line);
        trace.push('\n');
    }
    let converged = residual <= common.tol;
    let v = state_values(&mdp, &pi, &q);
    let result = json!({
        "command": "eval",
        "q": table_json(&mdp, &q),
        "v": states_json(&mdp, &v),
        "iterations": iterations,
        "residual": residual,
        "converged": converged,
    });
    write_artifacts(&common.out, Some(&trace), &result)?;
    let mut text = format!("iterations {iterations}, residual {residual:e}, converged {converged}\n");
    for (x, name) in mdp.state_names().iter().enumerate() {
        let _ = writeln!(text, "V({name}) = {}", v[x]);
    }
    Ok(text)
}

fn run_spe_cmd(common: &Common, policy: &str) -> Result<String> {
    let mdp = load_mdp(common)?;
    let pi = parse_policy(&mdp, policy)?;
    check_level(common.alpha)?;
    let mut trace = format!(
        "iteration,residual,{},{}\n",
        pair_columns(&mdp, "q1").join(","),
        pair_columns(&mdp, "q2").join(",")
    );
    let fp = run_spe(
        &mdp,
        &pi,
        common.alpha,
        common.tol,
        common.max_iter,
        |iter, dq, residual| {
            let mut line = format!("{iter},{residual}");
            push_values(&mut line, dq.q1_table().as_slice());
            push_values(&mut line, dq.q2_table().as_slice());
            trace.push_str(&line);
            trace.push('\n');
        },
    )?;
    let dq = &fp.value;
    let (v1, v2) = dq.state_values(&pi);
    let coherent = is_alpha_coherent(&mdp, &pi, dq, 1e-8);
    let result = json!({
        "command": "spe",
        "alpha": common.alpha,
        "q1": table_json(&mdp, dq.q1_table()),
        "q2": table_json(&mdp, dq.q2_table()),
        "v1": states_json(&mdp, &v1),
        "v2": states_json(&mdp, &v2),
        "alpha_coherent": coherent,
        "iterations": fp.iterations,
        "residual": fp.residual,
        "converged": fp.converged,
    });
    write_artifacts(&common.out, Some(&trace), &result)?;
    let mut text = format!(
        "iterations {}, residual {:e}, converged {}\n",
        fp.iterations, fp.residual, fp.converged
    );
    for (x, name) in mdp.state_names().iter().enumerate() {
        for &a in mdp.actions(x) {
            let _ = writeln!(
                text,
                "({name}, {}): Q1 = {}, Q2 = {}",
                mdp.action_names()[a],
                dq.q1(x, a),
                dq.q2(x, a)
            );
        }
    }
    Ok(text)
}

fn run_dbo(common: &Common, policy: &str, k: usize, bins: usize) -> Result<String> {
    let mdp = load_mdp(common)?;
    let pi = parse_policy(&mdp, policy)?;
    check_level(common.alpha)?;
    let opts = FissionOptions {
        compression: (bins > 0).then_some(Compression {
            bins,
            exact_limit: 4 * bins,
            rounding: Rounding::Mean,
        }),
        ..FissionOptions::default()
    };
    let mu0 = DistFunction::constant(&mdp, DiscreteDist::dirac(0.0));
    let mut trace = format!(
        "step,total_atoms,{},{},{}\n",
        pair_columns(&mdp, "mean").join(","),
        pair_columns(&mdp, "left").join(","),
        pair_columns(&mdp, "right").join(",")
    );
    let mut failure = None;
    let mu = dbo_iterate_with(&mdp, &pi, &mu0, k, &opts, |step, mu| {
        let mut line = format!("{step},{}", mu.total_atoms());
        push_values(&mut line, mu.expectations().as_slice());
        match avar_tables(mu, common.alpha) {
            Ok((left, right)) => {
                push_values(&mut line, left.as_slice());
                push_values(&mut line, right.as_slice());
            }
            Err(e) => failure = Some(e),
        }
        trace.push_str(&line);
        trace.push('\n');
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (left, right) = avar_tables(&mu, common.alpha)?;
    let tail_bound = mdp.gamma().powi(k as i32) * mdp.max_abs_reward() / (1.0 - mdp.gamma());
    let result = json!({
        "command": "dbo",
        "alpha": common.alpha,
        "k": k,
        "bins": bins,
        "total_atoms": mu.total_atoms(),
        "mean": table_json(&mdp, &mu.expectations()),
        "avar_left": table_json(&mdp, &left),
        "avar_right": table_json(&mdp, &right),
        "tail_bound": tail_bound,
    });
    write_artifacts(&common.out, Some(&trace), &result)?;
    let mut atoms = String::from("x,a,value,prob\n");
    for row in mu.to_csv_rows() {
        atoms.push_str(&row);
        atoms.push('\n');
    }
    fs::write(common.out.join("atoms.csv"), atoms)?;
    Ok(format!(
        "{k} steps, {} atoms in total, truncation bound {tail_bound:e}\n",
        mu.total_atoms()
    ))
}

fn run_control(common: &Common, mode: Mode, certify: Option<usize>) -> Result<String> {
    let mdp = load_mdp(common)?;
    let mut trace = format!("iteration,residual,{}\n", pair_columns(&mdp, "q1").join(","));
    let fp = run_svi(
        &mdp,
        mode,
        common.alpha,
        common.tol,
        common.max_iter,
        |iter, q1, residual| {
            let mut line = format!("{iter},{residual}");
            push_values(&mut line, q1.as_slice());
            trace.push_str(&line);
            trace.push('\n');
        },
    )?;
    let r = &fp.value;
    let certificate = match certify {
        Some(n) => Some(optimality_certificate(&mdp, r, n, common.seed)?),
        None => None,
    };
    let result = json!({
        "command": mode.name(),
        "alpha": common.alpha,
        "q1": table_json(&mdp, &r.q1),
        "q2": table_json(&mdp, &r.q2),
        "v_star": states_json(&mdp, &r.v_star),
        "action_sets": action_sets_json(&mdp, &r.action_sets),
        "certificate": certificate,
        "iterations": fp.iterations,
        "residual": fp.residual,
        "converged": fp.converged,
    });
    write_artifacts(&common.out, Some(&trace), &result)?;
    let mut text = format!(
        "{} SVI: iterations {}, residual {:e}, converged {}\n",
        mode.name(),
        fp.iterations,
        fp.residual,
        fp.converged
    );
    for (x, name) in mdp.state_names().iter().enumerate() {
        let names: Vec<&str> = r.action_sets[x]
            .iter()
            .map(|&a| mdp.action_names()[a].as_str())
            .collect();
        let _ = writeln!(text, "{name}: {{{}}}", names.join(", "));
    }
    Ok(text)
}

fn run_robust(common: &Common, policy: Option<&str>, k: usize, bins: usize) -> Result<String> {
    let mdp = load_mdp(common)?;
    check_level(common.alpha)?;
    let policies = match policy {
        Some(spec) => vec![parse_policy(&mdp, spec)?],
        None => Policy::enumerate_deterministic(&mdp, POLICY_CAP)
            .ok_or_else(|| Error::Resource(format!("more than {POLICY_CAP} deterministic policies")))?,
    };
    let mut trace = String::from("policy,max_deviation,optimal_kernels,candidates\n");
    let mut reports = Vec::new();
    let mut worst_dev = 0.0f64;
    let mut text = String::new();
    for (i, pi) in policies.iter().enumerate() {
        let wb = worst_best_case(&mdp, pi, common.alpha)?;
        worst_dev = worst_dev.max(wb.max_deviation);
        let _ = writeln!(
            trace,
            "{i},{},{},{}",
            wb.max_deviation, wb.optimal_kernels, wb.candidates
        );
        let fixed = crate::diatomic::spe(&mdp, pi, common.alpha, 1e-13, 100_000)?.value;
        let star = star_kernel(&mdp, pi, &fixed)?;
        let mut entry = json!({
            "policy": pi.probs(),
            "worst": states_json(&mdp, &wb.worst),
            "best": states_json(&mdp, &wb.best),
            "v1": states_json(&mdp, &wb.spe_v1),
            "v2": states_json(&mdp, &wb.spe_v2),
            "max_deviation": wb.max_deviation,
            "candidates": wb.candidates,
            "optimal_kernels": wb.optimal_kernels,
            "ties": wb.has_ties(),
            "star_kernel": star.entries().iter().map(|&(s, a, t, p)| json!([s, a, t, p])).collect::<Vec<_>>(),
        });
        let _ = writeln!(
            text,
            "policy {i}: max |oracle − SPE| = {:e} over {} candidate kernels ({} optimal)",
            wb.max_deviation, wb.candidates, wb.optimal_kernels
        );
        if k > 0 {
            let gap = bavar_vs_avar_gap(&mdp, pi, common.alpha, k, bins)?;
            entry["avar_gap"] = serde_json::to_value(&gap)?;
        }
        reports.push(entry);
    }
    let result = json!({
        "command": "robust-verify",
        "alpha": common.alpha,
        "policies": reports,
        "max_deviation": worst_dev,
    });
    write_artifacts(&common.out, Some(&trace), &result)?;
    if worst_dev > ORACLE_TOL {
        return Err(Error::PropertyFailure(format!(
            "brute-force values deviate from SPE by {worst_dev:e}"
        )));
    }
    Ok(text)
}

fn run_risky_lp(common: &Common, nu0: &str, dump_lp: bool) -> Result<String> {
    let mdp = load_mdp(common)?;
    let nu0 = parse_nu0(nu0, mdp.n_states())?;
    let report = duality_gap_check(&mdp, common.alpha, &nu0)?;
    if dump_lp {
        fs::create_dir_all(&common.out)?;
        let primal = build_risky_primal(&mdp, common.alpha, &nu0, &report.v_star)?;
        let dual = build_risky_dual(&mdp, common.alpha, &nu0, &report.v_star)?;
        fs::write(common.out.join("primal.lp"), primal.problem.to_text())?;
        fs::write(common.out.join("dual.lp"), dual.problem.to_text())?;
    }
    let mut result = serde_json::to_value(&report)?;
    result["command"] = json!("risky-lp");
    write_artifacts(&common.out, None, &result)?;
    let mut text = format!(
        "primal {}\ndual {}\ngap {:e}\n",
        report.primal_objective, report.dual_objective, report.gap
    );
    for (x, name) in mdp.state_names().iter().enumerate() {
        let _ = writeln!(text, "V1({name}) = {}", report.v1[x]);
    }
    Ok(text)
}

fn run_avar(path: &Path, alpha: f64, out: &Path) -> Result<String> {
    let d = DiscreteDist::from_json_str(&read_file(path)?)?;
    let left = d.avar_left(alpha)?;
    let right = d.avar_right(1.0 - alpha)?;
    let (_, weights) = d.avar_left_dual(alpha)?;
    let result = json!({
        "command": "avar",
        "alpha": alpha,
        "avar_left": left,
        "avar_right": right,
        "expectation": d.expectation(),
        "dual_weights": weights,
    });
    write_artifacts(out, None, &result)?;
    Ok(format!("({left}, {right})\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn policy_specs() {
        let mdp = corpus::fig1();
        assert_eq!(parse_policy(&mdp, "uniform").unwrap(), Policy::uniform(&mdp));
        let a2 = Policy::deterministic(&mdp, &[1, 1]).unwrap();
        assert_eq!(parse_policy(&mdp, "always:a2").unwrap(), a2);
        assert_eq!(parse_policy(&mdp, "always:1").unwrap(), a2);
        assert_eq!(parse_policy(&mdp, "[[0,1],[0,1]]").unwrap(), a2);
        assert!(parse_policy(&mdp, "always:a9").is_err());
        assert!(parse_policy(&mdp, "[[1]]").is_err());
        assert!(matches!(parse_policy(&mdp, "[[0.5,"), Err(Error::Parse { .. })));
    }

    #[test]
    fn nu0_specs() {
        assert_eq!(parse_nu0("uniform", 4).unwrap(), vec![0.25; 4]);
        assert_eq!(parse_nu0("0.3, 0.7", 2).unwrap(), vec![0.3, 0.7]);
        assert!(parse_nu0("0.3", 2).is_err());
        assert!(parse_nu0("a,b", 2).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Domain(String::new())), 1);
        assert_eq!(exit_code(&Error::Precondition(String::new())), 2);
        assert_eq!(
            exit_code(&Error::NotBalanced {
                state: 0,
                action_a: 0,
                action_b: 1,
                gap: 1.0
            }),
            2
        );
        assert_eq!(exit_code(&Error::PropertyFailure(String::new())), 3);
    }

    #[test]
    fn parses_subcommands() {
        let c =
            RunConfig::try_parse_from(["diatomic-dp", "spe", "m.json", "--alpha", "0.3", "--max-iter", "20"]).unwrap();
        match c.command {
            Command::Spe { common, policy } => {
                assert_eq!(common.alpha, 0.3);
                assert_eq!(common.max_iter, 20);
                assert_eq!(policy, "uniform");
            }
            other => panic!("{other:?}"),
        }
        let c =
            RunConfig::try_parse_from(["diatomic-dp", "risky-lp", "m.json", "--nu0", "0.5,0.5", "--dump-lp"]).unwrap();
        assert!(matches!(c.command, Command::RiskyLp { dump_lp: true, .. }));
        assert!(RunConfig::try_parse_from(["diatomic-dp", "robust-verify", "m.json", "--k", "30"]).is_ok());
    }
}
