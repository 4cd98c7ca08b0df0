//! `rootpool`: pool expert priors from a JSON panel file.
//!
//! Exit codes: 0 success, 2 input validation, 3 numeric failure,
//! 4 verification failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::SymmetricEigen;
use rootpool::io::{curve_csv, ConditionReport, PanelFile, Report};
use rootpool::kernels::{a_quadrature, b_quadrature, write_dump, GramKind};
use rootpool::numfmt::g17;
use rootpool::pooling::pool_with_gram;
use rootpool::{
    fisher_direct, gram, pool, search_alpha, search_alpha_nonneg, Error, Panel, PooledPrior,
    Provenance, QuadratureConfig, SearchConfig, DEFAULT_RANK_TOL,
};

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_VERIFY: u8 = 4;

/// Cross-check tolerances used by `verify`.
const FISHER_REL_TOL: f64 = 1e-6;
const SEARCH_BEAT_TOL: f64 = 1e-9;
const SEARCH_REACH_REL_TOL: f64 = 1e-6;
const NORMALIZATION_TOL: f64 = 1e-6;
const CLOSED_B_TOL: f64 = 1e-8;
const CLOSED_A_REL_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "rootpool",
    version,
    about = "Minimum-information pooling of expert priors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Panel file (JSON).
    panel: PathBuf,
    /// Condition to use; all conditions when omitted (pool, verify).
    #[arg(long)]
    condition: Option<String>,
    /// Relative eigenvalue cutoff for the rank of B.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Pool each condition and write a JSON report.
    Pool {
        #[command(flatten)]
        common: Common,
        /// Report path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the pooled and expert densities on a grid and write CSV.
    Curve {
        #[command(flatten)]
        common: Common,
        /// Grid start; defaults to the panel's effective range.
        #[arg(long, allow_hyphen_values = true)]
        lo: Option<f64>,
        /// Grid end; defaults to the panel's effective range.
        #[arg(long, allow_hyphen_values = true)]
        hi: Option<f64>,
        #[arg(long, default_value_t = 1001)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write a gnuplot script that plots the CSV.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
    /// Write the Gram matrices as text dumps and print their eigenvalues.
    Gram {
        #[command(flatten)]
        common: Common,
        /// Output prefix; writes <prefix>.A.txt and <prefix>.B.txt.
        #[arg(long)]
        out: String,
    },
    /// Cross-check the solver against direct integration and random search.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// Halve A before solving (negative control for the checks).
        #[arg(long, hide = true)]
        corrupt_gram: bool,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERIC,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::validation(e.to_string())
        } else {
            Failure::numeric(e.to_string())
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Command) -> CliResult<u8> {
    match cmd {
        Command::Pool { common, out } => cmd_pool(&common, out.as_deref()),
        Command::Curve {
            common,
            lo,
            hi,
            n,
            out,
            gnuplot,
        } => cmd_curve(&common, lo, hi, n, &out, gnuplot.as_deref()),
        Command::Gram { common, out } => cmd_gram(&common, &out),
        Command::Verify {
            common,
            seed,
            corrupt_gram,
        } => cmd_verify(&common, seed, corrupt_gram),
    }
}

fn read_panel_file(path: &Path) -> CliResult<PanelFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    Ok(PanelFile::parse(&text)?)
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::numeric(format!("cannot write {}: {e}", path.display())))
}

fn check_rank_tol(r: f64) -> CliResult<()> {
    if r.is_finite() && r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Failure::validation(format!(
            "--rank-tol must lie in (0, 1), got {r}"
        )))
    }
}

/// Selected conditions in file order.
fn selected_panels(file: &PanelFile, condition: Option<&str>) -> CliResult<Vec<(String, Panel)>> {
    match condition {
        Some(name) => Ok(vec![(name.to_string(), file.panel_for(Some(name))?)]),
        None => Ok(file.panels()?),
    }
}

/// Exactly one panel, for commands that produce a single artefact.
fn single_panel(file: &PanelFile, condition: Option<&str>) -> CliResult<Panel> {
    let mut panels = selected_panels(file, condition)?;
    if panels.len() != 1 {
        return Err(Failure::validation(format!(
            "file defines {} conditions; choose one with --condition ({})",
            panels.len(),
            file.condition_names().join(", ")
        )));
    }
    Ok(panels.remove(0).1)
}

/// Pools every panel on its own thread; results come back in input order.
fn pool_all(panels: &[(String, Panel)], rank_tol: f64) -> CliResult<Vec<PooledPrior>> {
    let cfg = QuadratureConfig::default();
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = panels
            .iter()
            .map(|(_, p)| s.spawn(|| pool(p, &cfg, rank_tol)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("pooling thread panicked"))
            .collect()
    });
    results
        .into_iter()
        .zip(panels)
        .map(|(r, (name, _))| {
            r.map_err(|e| {
                let f = Failure::from(e);
                Failure {
                    code: f.code,
                    message: format!("condition {name}: {}", f.message),
                }
            })
        })
        .collect()
}

fn cmd_pool(common: &Common, out: Option<&Path>) -> CliResult<u8> {
    check_rank_tol(common.rank_tol)?;
    let file = read_panel_file(&common.panel)?;
    let panels = selected_panels(&file, common.condition.as_deref())?;
    let pooled = pool_all(&panels, common.rank_tol)?;
    let conditions: Vec<ConditionReport> = panels
        .iter()
        .zip(&pooled)
        .map(|((name, _), pp)| ConditionReport::from_pooled(name, pp))
        .collect();
    for c in &conditions {
        for w in &c.warnings {
            eprintln!("warning: condition {}: {w}", c.name);
        }
    }
    let report = Report { conditions };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    match out {
        Some(path) => write_file(path, &json)?,
        None => print!("{json}"),
    }
    Ok(0)
}

fn cmd_curve(
    common: &Common,
    lo: Option<f64>,
    hi: Option<f64>,
    n: usize,
    out: &Path,
    gnuplot: Option<&Path>,
) -> CliResult<u8> {
    check_rank_tol(common.rank_tol)?;
    if let (Some(l), Some(h)) = (lo, hi) {
        if !(l < h) {
            return Err(Failure::validation(format!(
                "--lo ({l}) must be below --hi ({h})"
            )));
        }
    }
    if n < 2 {
        return Err(Failure::validation(format!(
            "--n must be at least 2, got {n}"
        )));
    }
    let file = read_panel_file(&common.panel)?;
    let panel = single_panel(&file, common.condition.as_deref())?;
    let pp = pool(&panel, &QuadratureConfig::default(), common.rank_tol)?;
    let range = pp.export_range();
    let (lo, hi) = (lo.unwrap_or(range.lo), hi.unwrap_or(range.hi));
    let points = pp.sample_curve(lo, hi, n)?;
    write_file(out, &curve_csv(&points, panel.labels()))?;
    if let Some(script) = gnuplot {
        write_file(script, &gnuplot_script(out, panel.labels()))?;
    }
    Ok(0)
}

fn gnuplot_script(csv: &Path, labels: &[String]) -> String {
    let csv = csv.display().to_string().replace('\'', "''");
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key outside right noenhanced\n");
    s.push_str("set xlabel 'x'\nset ylabel 'density'\n");
    let _ = write!(s, "plot '{csv}' using 1:2 with lines lw 3 title 'pooled'");
    for (k, l) in labels.iter().enumerate() {
        let title = l.replace('\'', "''");
        let _ = write!(
            s,
            ", \\\n     '' using 1:{} with lines dt 2 title '{title}'",
            k + 3
        );
    }
    s.push('\n');
    s
}

fn ascending_eigenvalues(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn cmd_gram(common: &Common, prefix: &str) -> CliResult<u8> {
    let file = read_panel_file(&common.panel)?;
    let panel = single_panel(&file, common.condition.as_deref())?;
    let g = gram(&panel, &QuadratureConfig::default())?;
    write_file(
        Path::new(&format!("{prefix}.A.txt")),
        &write_dump(&g.a, GramKind::A),
    )?;
    write_file(
        Path::new(&format!("{prefix}.B.txt")),
        &write_dump(&g.b, GramKind::B),
    )?;
    for (name, m) in [("A", &g.a), ("B", &g.b)] {
        let ev: Vec<String> = ascending_eigenvalues(m).into_iter().map(g17).collect();
        println!("eigenvalues {name}: {}", ev.join(" "));
    }
    if !g.psd.is_psd() {
        eprintln!(
            "warning: Gram matrices not positive semidefinite within tolerance (min eig A {:.3e}, B {:.3e})",
            g.psd.a_min, g.psd.b_min
        );
    }
    Ok(0)
}

struct Check {
    condition: String,
    name: String,
    detail: String,
    pass: bool,
}

fn rel_err(x: f64, reference: f64) -> f64 {
    (x - reference).abs() / reference.abs().max(f64::MIN_POSITIVE)
}

fn verify_condition(
    name: &str,
    panel: &Panel,
    seed: u64,
    rank_tol: f64,
    corrupt: bool,
) -> CliResult<Vec<Check>> {
    let cfg = QuadratureConfig::default();
    let mut g = gram(panel, &cfg)?;
    let m = panel.len();
    let mut checks = Vec::new();
    let mut add = |check: &str, detail: String, pass: bool| {
        checks.push(Check {
            condition: name.to_string(),
            name: check.to_string(),
            detail,
            pass,
        })
    };

    // closed forms against quadrature, before any corruption
    let mut worst_b: f64 = 0.0;
    let mut worst_a: f64 = 0.0;
    let mut closed = 0usize;
    for i in 0..m {
        for j in i..m {
            if g.provenance(i, j) != Provenance::ClosedForm {
                continue;
            }
            closed += 1;
            let (di, dj) = (panel.expert(i), panel.expert(j));
            worst_b = worst_b.max((b_quadrature(di, dj, &cfg)? - g.b[(i, j)]).abs());
            worst_a = worst_a.max(rel_err(a_quadrature(di, dj, &cfg)?, g.a[(i, j)]));
        }
    }
    if closed > 0 {
        add(
            "closed-form B",
            format!(
                "{closed} entries, max abs diff {:.3e} (tol {CLOSED_B_TOL:e})",
                worst_b
            ),
            worst_b <= CLOSED_B_TOL,
        );
        add(
            "closed-form A",
            format!(
                "{closed} entries, max rel diff {:.3e} (tol {CLOSED_A_REL_TOL:e})",
                worst_a
            ),
            worst_a <= CLOSED_A_REL_TOL,
        );
    }

    if corrupt {
        g.a *= 0.5;
    }
    let pp = pool_with_gram(panel, g, rank_tol)?;
    let info = pp.information;

    let direct = fisher_direct(panel, &pp.alpha, &cfg)?;
    let e = rel_err(direct, info);
    add(
        "direct Fisher",
        format!(
            "solver {} direct {} rel {:.3e} (tol {FISHER_REL_TOL:e})",
            g17(info),
            g17(direct),
            e
        ),
        e <= FISHER_REL_TOL,
    );

    let norm = pp.normalization(&cfg)?;
    let e = (norm - 1.0).abs();
    add(
        "normalization",
        format!(
            "mass {} err {:.3e} (tol {NORMALIZATION_TOL:e})",
            g17(norm),
            e
        ),
        e <= NORMALIZATION_TOL,
    );

    let sc = SearchConfig::with_seed(seed);
    let found = search_alpha(&pp.gram, &sc)?;
    let beat = info - found.value;
    let gap = rel_err(found.value, info);
    add(
        "random search",
        format!(
            "best {} solver {} rel gap {:.3e} (tol {SEARCH_REACH_REL_TOL:e})",
            g17(found.value),
            g17(info),
            gap
        ),
        beat <= SEARCH_BEAT_TOL * info.abs().max(1.0) && gap <= SEARCH_REACH_REL_TOL,
    );

    let nonneg = search_alpha_nonneg(&pp.gram, &sc)?;
    let beat = info - nonneg.value;
    add(
        "nonnegative search",
        format!("best {} (never below solver)", g17(nonneg.value)),
        beat <= SEARCH_BEAT_TOL * info.abs().max(1.0),
    );
    Ok(checks)
}

fn cmd_verify(common: &Common, seed: u64, corrupt: bool) -> CliResult<u8> {
    check_rank_tol(common.rank_tol)?;
    let file = read_panel_file(&common.panel)?;
    let panels = selected_panels(&file, common.condition.as_deref())?;
    let mut checks = Vec::new();
    for (name, panel) in &panels {
        checks.extend(verify_condition(
            name,
            panel,
            seed,
            common.rank_tol,
            corrupt,
        )?);
    }
    let wc = checks
        .iter()
        .map(|c| c.condition.len())
        .max()
        .unwrap_or(0)
        .max(9);
    let wn = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    println!("{:<wc$}  {:<wn$}  result  detail", "condition", "check");
    for c in &checks {
        println!(
            "{:<wc$}  {:<wn$}  {:<6}  {}",
            c.condition,
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed == 0 {
        println!("all {} checks passed", checks.len());
        Ok(0)
    } else {
        println!("{failed} of {} checks failed", checks.len());
        Ok(EXIT_VERIFY)
    }
}
