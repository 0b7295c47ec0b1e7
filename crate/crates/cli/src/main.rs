mod config;
mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparsebag::experiment::{best_over, run_sweep, ExperimentSpec};
use sparsebag::linalg::normalize_columns;
use sparsebag::theory::{
    bagging_bound_exact_sparse, bagging_bound_general, c0, c1, null_space, nsp_check_nullity1, nsp_check_sampled,
    rip_constant_bruteforce, validate_theorem3_mc, verify_tail_bound_mc, Verdict,
};
use sparsebag::{DenseMatrix, RngStream};

const EXIT_USAGE: u8 = 1;
const EXIT_ASSERTION: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(name = "sparsebag", version, about = "Bagging for l1-regularized sparse recovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (m, L/m, K, lambda) sweep and write records, best-of and plot CSVs.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `experiment.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the sweep and write only the best-over summary table.
    Table {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Evaluate the Bagging error bounds and the constants C0, C1.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the Monte-Carlo validators listed in the config.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Exact RIP constant of a CSV matrix.
    Rip {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        s: usize,
        /// Normalize columns before the computation.
        #[arg(long)]
        normalize: bool,
    },
    /// Null space property of a CSV matrix.
    Nsp {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        s: usize,
        /// Random null-space directions tried when the nullity exceeds 1.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// A failure and its exit status.
struct Failure(u8, String);

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure(EXIT_USAGE, msg.into())
    }
}

impl From<sparsebag::Error> for Failure {
    fn from(e: sparsebag::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Sweep { config, out, seed, jobs } => sweep(&config, &out, seed, jobs, false),
        Command::Table { config, out, seed, jobs } => sweep(&config, &out, seed, jobs, true),
        Command::Bounds { config } => bounds(&config),
        Command::Verify { config, report, jobs } => verify(&config, report.as_deref(), jobs),
        Command::Rip { matrix, s, normalize } => rip(&matrix, s, normalize),
        Command::Nsp { matrix, s, samples, seed } => nsp(&matrix, s, samples, seed),
    }
}

fn set_jobs(jobs: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Failure::usage("--jobs must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn experiment_spec(path: &Path, seed: Option<u64>) -> Result<ExperimentSpec, Failure> {
    let cfg = config::load(path).map_err(Failure::usage)?;
    let mut spec = cfg
        .experiment
        .ok_or_else(|| Failure::usage(format!("{}: missing [experiment] section", path.display())))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn sweep(config: &Path, out: &Path, seed: Option<u64>, jobs: Option<usize>, table_only: bool) -> Result<(), Failure> {
    let spec = experiment_spec(config, seed)?;
    set_jobs(jobs)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    let result = run_sweep(&spec)?;
    let best = best_over(&result.records);
    let mut files: Vec<(String, Vec<u8>)> = vec![("table.csv".into(), output::table_csv(&best))];
    if !table_only {
        files.push(("records.csv".into(), output::records_csv(&result.records)));
        files.push(("best.csv".into(), output::best_csv(&best)));
        for &m in &spec.m_values {
            files.push((format!("fig_m{m}.csv"), output::figure_csv(&result, m)));
        }
    }
    for (name, bytes) in &files {
        output::write_atomic(out, name, bytes).map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    }
    let flagged = result.records.iter().filter(|r| r.flagged()).count();
    println!(
        "wrote {} files to {}; {} records ({} flagged), Jensen checks {} violations {}",
        files.len(),
        out.display(),
        result.records.len(),
        flagged,
        result.jensen.checks,
        result.jensen.violations
    );
    if result.jensen.violations > 0 {
        return Err(Failure(EXIT_ASSERTION, "Jensen-step inequality violated".into()));
    }
    Ok(())
}

fn bounds(path: &Path) -> Result<(), Failure> {
    let cfg = config::load(path).map_err(Failure::usage)?;
    let inp = cfg
        .bounds
        .ok_or_else(|| Failure::usage(format!("{}: missing [bounds] section", path.display())))?;
    inp.validate()?;
    let mut text = String::new();
    writeln!(text, "c0 = {}", c0(inp.delta)?).unwrap();
    writeln!(text, "c1 = {}", c1(inp.delta)?).unwrap();
    if inp.e_l1 == 0.0 {
        let r = bagging_bound_exact_sparse(&inp)?;
        writeln!(text, "\n[exact_sparse]\nradius = {}\nprob_lower = {}", r.radius, r.prob_lower).unwrap();
    }
    let r = bagging_bound_general(&inp)?;
    writeln!(text, "\n[general]\nradius = {}\nprob_lower = {}", r.radius, r.prob_lower).unwrap();
    print!("{text}");
    Ok(())
}

fn verify(path: &Path, report: Option<&Path>, jobs: Option<usize>) -> Result<(), Failure> {
    let cfg = config::load(path).map_err(Failure::usage)?;
    if cfg.tail.is_empty() && cfg.theorem3.is_empty() {
        return Err(Failure::usage(format!("{}: no [[tail]] or [[theorem3]] entries", path.display())));
    }
    set_jobs(jobs)?;
    let (mut failed, mut inconclusive) = (0, 0);
    let mut text = String::new();
    for (i, case) in cfg.tail.iter().enumerate() {
        let r = verify_tail_bound_mc(&case.sampler, case.n, case.xi, case.trials, &RngStream::from_seed(case.seed))?;
        let bound = r.bound * case.bound_scale;
        let passed = r.empirical <= bound + 3.0 * r.std_error;
        failed += usize::from(!passed);
        writeln!(
            text,
            "[[tail]] # {i}\nempirical = {}\nbound = {}\nstd_error = {}\ntrials = {}\npassed = {passed}\n",
            r.empirical, bound, r.std_error, r.trials
        )
        .unwrap();
    }
    for (i, case) in cfg.theorem3.iter().enumerate() {
        let r = validate_theorem3_mc(&case.config(), &RngStream::from_seed(case.seed))?;
        match r.verdict {
            Verdict::Pass => {}
            Verdict::Fail => failed += 1,
            Verdict::Inconclusive => inconclusive += 1,
        }
        writeln!(
            text,
            "[[theorem3]] # {i}\nempirical_prob = {}\nprob_lower = {}\nstd_error = {}\nkept = {}\ndiscarded = {}\nverdict = \"{}\"\n",
            r.empirical_prob,
            r.prob_lower,
            r.std_error,
            r.kept,
            r.discarded,
            match r.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
                Verdict::Inconclusive => "inconclusive",
            }
        )
        .unwrap();
    }
    print!("{text}");
    if let Some(p) = report {
        let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let name = p
            .file_name()
            .ok_or_else(|| Failure::usage(format!("{}: not a file path", p.display())))?;
        output::write_atomic(dir, &name.to_string_lossy(), text.as_bytes())
            .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
    }
    if failed > 0 {
        Err(Failure(EXIT_ASSERTION, format!("{failed} check(s) failed")))
    } else if inconclusive > 0 {
        Err(Failure(
            EXIT_INCONCLUSIVE,
            format!("{inconclusive} theorem check(s) inconclusive: every trial violated the RIP hypothesis"),
        ))
    } else {
        Ok(())
    }
}

fn read_matrix(path: &Path) -> Result<DenseMatrix, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, v)| {
                v.parse::<f64>()
                    .map_err(|e| Failure::usage(format!("{}: row {}, column {}: {e}", path.display(), i + 1, j + 1)))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Failure::usage(format!("{}: empty matrix", path.display())));
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

fn rip(path: &Path, s: usize, normalize: bool) -> Result<(), Failure> {
    let mut a = read_matrix(path)?;
    if normalize {
        a = normalize_columns(&a)?;
    }
    let delta = rip_constant_bruteforce(&a, s)?;
    println!("s = {s}\ndelta = {delta}\nbelow_sqrt2_minus_1 = {}", delta < std::f64::consts::SQRT_2 - 1.0);
    Ok(())
}

fn nsp(path: &Path, s: usize, samples: usize, seed: u64) -> Result<(), Failure> {
    let a = read_matrix(path)?;
    let nullity = null_space(&a).len();
    let (holds, method) = match nullity {
        0 => return Err(Failure::usage("null space is trivial; the property holds vacuously")),
        1 => (nsp_check_nullity1(&a, s)?, "exact"),
        _ => (nsp_check_sampled(&a, s, samples, &RngStream::from_seed(seed))?, "sampled"),
    };
    println!("s = {s}\nnullity = {nullity}\nmethod = \"{method}\"\nnsp = {holds}");
    Ok(())
}
