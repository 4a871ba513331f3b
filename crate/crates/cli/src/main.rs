use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsr_core::bundle::{parse_controllers, parse_task, render_controllers, write_files, BundleError, Instance};
use fsr_core::oracles::{cross_validate, load_manifest, random_corpus, Construction, CorpusItem, CrossOptions, OracleError};
use fsr_core::problems::{
    default_step_budget, design_controllers_ls, design_team_homogeneous, design_team_ls, verify_team_env, DesignOutcome,
    DesignReport, ProblemError, SearchOptions, TeamEnvVerInstance,
};
use fsr_core::reductions::{
    add_holding_area, extend_with_state_ladder, parse_dimacs_cnf, parse_graph, reduce_3sat_to_teamdesls,
    reduce_3sat_to_teamenvver, reduce_domset_to_contdesls, ReductionCertificate, ReductionError,
};
use fsr_core::sim::{self, render_trace, Configuration, FailureReason, Outcome, RunOptions, SimError, Team};
use fsr_core::{Environment, Position};
use thiserror::Error;

/// Process exit codes.
mod code {
    pub const OK: u8 = 0;
    /// `verify` said no, `design` returned bot, or cross-validation disagreed.
    pub const NEGATIVE: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const CAP: u8 = 3;
    pub const SELF_CHECK: u8 = 4;
    pub const DETERMINISM: u8 = 10;
    pub const COLLISION: u8 = 11;
    pub const OBSTACLE: u8 = 12;
    pub const MODIFICATION_CONFLICT: u8 = 13;
    pub const EC_BUDGET: u8 = 14;
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Cap(String),
    #[error("self-check failed: {0}")]
    SelfCheck(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => code::INPUT,
            CliError::Cap(_) => code::CAP,
            CliError::SelfCheck(_) => code::SELF_CHECK,
        }
    }
}

fn input(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{context}: {e}"))
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        match e {
            ProblemError::CapExceeded { .. } => CliError::Cap(e.to_string()),
            ProblemError::SelfCheck(m) => CliError::SelfCheck(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::CapExceeded { .. } => CliError::Cap(e.to_string()),
            OracleError::Problem(p) => p.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

macro_rules! input_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}
input_from!(SimError, BundleError, ReductionError);

fn failure_code(r: &FailureReason) -> u8 {
    match r {
        FailureReason::DeterminismViolation { .. } => code::DETERMINISM,
        FailureReason::Collision { .. } => code::COLLISION,
        FailureReason::ObstacleEntry { .. } => code::OBSTACLE,
        FailureReason::ModificationConflict { .. } => code::MODIFICATION_CONFLICT,
        FailureReason::EcBudgetExceeded { .. } => code::EC_BUDGET,
    }
}

#[derive(Parser)]
#[command(name = "fsr", version, about = "Finite-state robot teams: simulate, verify, design, reduce, cross-validate")]
struct Cli {
    /// Worker threads for searches and corpora (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Bound {
    /// Step budget; defaults to c1 * (|E| + |Q|)^c2.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, default_value_t = 10)]
    c1: u64,
    #[arg(long, default_value_t = 3)]
    c2: u32,
}

impl Bound {
    fn budget(&self, env: &Environment, team: &Team) -> Result<u64, CliError> {
        match self.steps {
            Some(s) => Ok(s),
            None => Ok(default_step_budget(env, team, self.c1, self.c2)?),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a team from files and write its trace.
    Simulate {
        #[arg(long)]
        env: PathBuf,
        /// Controller blocks separated by `---` lines.
        #[arg(long)]
        team: PathBuf,
        /// One `<controller-index> <col> <row>` line per robot.
        #[arg(long)]
        placement: PathBuf,
        /// Stop early once this target configuration holds.
        #[arg(long)]
        task: Option<PathBuf>,
        #[command(flatten)]
        bound: Bound,
        /// Budget of environment modifications.
        #[arg(long, default_value_t = u64::MAX)]
        ec: u64,
        /// Stop when a configuration repeats.
        #[arg(long)]
        cycles: bool,
        /// Trace file; the trace goes to stdout when omitted.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Decide a TeamEnvVer bundle.
    Verify {
        bundle: PathBuf,
        #[command(flatten)]
        bound: Bound,
        /// Override the bundle's modification budget.
        #[arg(long)]
        ec: Option<u64>,
        #[arg(long)]
        no_cycles: bool,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Search a design bundle for a team or controllers.
    Design {
        bundle: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Output directory for the solution bundle.
        #[arg(long)]
        out: PathBuf,
        /// Largest search space (candidates or search nodes) to explore.
        #[arg(long, default_value_t = 5_000_000)]
        cap: u64,
        /// Require exactly h distinct controllers.
        #[arg(long)]
        exact_types: bool,
        /// Also try every placement of robots on the initial region.
        #[arg(long)]
        permute_region: bool,
    },
    /// Build a problem instance from a CNF or graph.
    Reduce {
        #[arg(value_enum)]
        kind: Kind,
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dominating-set size (ds-cdls only).
        #[arg(long)]
        k: Option<usize>,
        /// Prepend a state ladder forcing this many states (ds-cdls only).
        #[arg(long)]
        ladder: Option<usize>,
        /// Pad the team to this many controller types with a holding area.
        #[arg(long)]
        holding: Option<usize>,
        /// States per holding-area controller.
        #[arg(long, default_value_t = 1)]
        states: usize,
    },
    /// Check a reduction against brute-force oracles on a corpus.
    Crossvalidate {
        #[arg(value_enum)]
        kind: Kind,
        /// Corpus manifest; see the README for its entries.
        manifest: Option<PathBuf>,
        /// Generate this many random inputs (needs --seed and --dims).
        #[arg(long, requires_all = ["seed", "dims"])]
        random: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Maximum variables,clauses (CNF) or vertices,k (graphs).
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        holding: Option<usize>,
        #[arg(long, default_value_t = 1)]
        states: usize,
        #[arg(long, default_value_t = 10)]
        c1: u64,
        #[arg(long, default_value_t = 3)]
        c2: u32,
        #[arg(long, default_value_t = 5_000_000)]
        cap: u64,
        /// Also write the report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Team,
    Controllers,
    Homogeneous,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    #[value(name = "3sat-tev")]
    ThreeSatTev,
    #[value(name = "ds-cdls")]
    DsCdls,
    #[value(name = "3sat-tdls")]
    ThreeSatTdls,
}

impl Kind {
    fn construction(self) -> Construction {
        match self {
            Kind::ThreeSatTev => Construction::ThreeSatTeamEnvVer,
            Kind::DsCdls => Construction::DomSetContDesLs,
            Kind::ThreeSatTdls => Construction::ThreeSatTeamDesLs,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| input(path.display(), e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| input(path.display(), e))
}

fn read_bundle(path: &Path) -> Result<Instance, CliError> {
    Instance::read_dir(path).map_err(|e| input(path.display(), e))
}

/// Parses `<controller-index> <col> <row>` lines.
fn parse_placement(text: &str, file: &Path) -> Result<(Vec<usize>, Vec<Position>), CliError> {
    let mut members = Vec::new();
    let mut placement = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let nums: Result<Vec<u32>, _> = l.split_whitespace().map(str::parse).collect();
        match nums.as_deref() {
            Ok([c, col, row]) => {
                members.push(*c as usize);
                placement.push(Position::new(*col, *row));
            }
            _ => {
                return Err(input(
                    format!("{}:{}", file.display(), i + 1),
                    "expected `<controller-index> <col> <row>`",
                ))
            }
        }
    }
    Ok((members, placement))
}

fn emit_trace(trace: &str, to: Option<&Path>) -> Result<(), CliError> {
    match to {
        Some(p) => write(p, trace),
        None => {
            print!("{trace}");
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    env: &Path,
    team: &Path,
    placement: &Path,
    task: Option<&Path>,
    bound: Bound,
    ec: u64,
    cycles: bool,
    trace: Option<&Path>,
) -> Result<u8, CliError> {
    let environment = Environment::parse(&read(env)?).map_err(|e| input(env.display(), e))?;
    let controllers = parse_controllers(&read(team)?, &team.display().to_string())?;
    let (members, positions) = parse_placement(&read(placement)?, placement)?;
    let team = Team::new(controllers, members)?;
    let budget = bound.budget(&environment, &team)?;
    let c0 = Configuration::initial(environment, &team, positions)?;
    let opts = RunOptions {
        step_budget: budget,
        ec_budget: ec,
        detect_cycles: cycles,
        record_trace: true,
    };
    let result = match task {
        Some(path) => {
            let tgt = parse_task(&read(path)?).map_err(|e| input(path.display(), e))?;
            sim::run(&c0, &team, &tgt, &opts)?
        }
        None => sim::simulate(&c0, &team, &opts)?,
    };
    emit_trace(&render_trace(&result.trace), trace)?;
    println!("outcome {}", result.outcome);
    Ok(match &result.outcome {
        Outcome::Failure(r) => failure_code(r),
        _ => code::OK,
    })
}

fn cmd_verify(bundle: &Path, bound: Bound, ec: Option<u64>, no_cycles: bool, trace: Option<&Path>) -> Result<u8, CliError> {
    let Instance::TeamEnvVer(mut inst) = read_bundle(bundle)? else {
        return Err(CliError::Input(format!("{}: verify needs a teamenvver bundle", bundle.display())));
    };
    if let Some(ec) = ec {
        inst.ec_budget = ec;
    }
    let budget = bound.budget(&inst.env, &inst.team)?;
    let v = verify_team_env(&inst, budget, !no_cycles)?;
    if let Some(path) = trace {
        write(path, &render_trace(&v.run.trace))?;
    }
    match v.run.outcome {
        Outcome::Success { t } => {
            println!("yes t={t}");
            Ok(code::OK)
        }
        Outcome::Failure(r) => {
            println!("no reason={r}");
            Ok(code::NEGATIVE)
        }
        Outcome::StepBudgetExhausted => {
            println!("no reason=budget-exhausted steps={budget}");
            Ok(code::NEGATIVE)
        }
        Outcome::CycleDetected { t, first } => {
            println!("no reason=cycle t={t} first={first}");
            Ok(code::NEGATIVE)
        }
    }
}

fn cmd_design(bundle: &Path, mode: Mode, out: &Path, opts: SearchOptions) -> Result<u8, CliError> {
    let inst = read_bundle(bundle)?;
    let wrong = |need: &str| CliError::Input(format!("{}: mode needs a {need} bundle, found {}", bundle.display(), inst.kind()));
    let (report, env, task, ec_budget): (DesignReport, _, _, _) = match (mode, &inst) {
        (Mode::Team, Instance::TeamDesLs(i)) => (design_team_ls(i, &opts)?, &i.env, &i.task, i.ec_budget),
        (Mode::Homogeneous, Instance::TeamDesLs(i)) => (design_team_homogeneous(i)?, &i.env, &i.task, i.ec_budget),
        (Mode::Controllers, Instance::ContDesLs(i)) => (design_controllers_ls(i, &opts)?, &i.env, &i.task, i.ec_budget),
        (Mode::Controllers, _) => return Err(wrong("contdesls")),
        _ => return Err(wrong("teamdesls")),
    };
    let design = match report.outcome {
        DesignOutcome::Bot => {
            println!("bot candidates={}", report.stats.candidates);
            return Ok(code::NEGATIVE);
        }
        DesignOutcome::Found(d) => d,
    };
    let solution = Instance::TeamEnvVer(TeamEnvVerInstance {
        env: env.clone(),
        team: design.team.clone(),
        placement: design.placement.clone(),
        ec_budget,
        task: task.clone(),
    });
    let mut files: BTreeMap<String, String> = solution.to_files();
    files.insert("controllers.txt".into(), render_controllers(design.team.controllers()));
    let assignment: String = design
        .assignment
        .iter()
        .zip(&design.placement)
        .enumerate()
        .map(|(robot, (a, p))| format!("{robot} {a} {} {}\n", p.col, p.row))
        .collect();
    files.insert("assignment.txt".into(), assignment);
    files.insert("trace.txt".into(), render_trace(&design.run.trace));
    write_files(out, &files)?;

    // Reload what was written and run it again.
    let Instance::TeamEnvVer(reloaded) = read_bundle(out)? else {
        return Err(CliError::SelfCheck("solution bundle is not a teamenvver bundle".into()));
    };
    let v = verify_team_env(&reloaded, design.step_budget, true)?;
    let Outcome::Success { t } = v.run.outcome else {
        return Err(CliError::SelfCheck(format!("written solution gives {}", v.run.outcome)));
    };
    println!("found t={t} candidates={}", report.stats.candidates);
    Ok(code::OK)
}

fn cmd_reduce(
    kind: Kind,
    source: &Path,
    out: &Path,
    k: Option<usize>,
    ladder: Option<usize>,
    holding: Option<usize>,
    states: usize,
) -> Result<u8, CliError> {
    let text = read(source)?;
    let parse_err = |e: ReductionError| input(source.display(), e);
    if ladder.is_some() && !matches!(kind, Kind::DsCdls) {
        return Err(CliError::Input("--ladder applies to ds-cdls only".into()));
    }
    let (mut inst, mut cert): (Instance, ReductionCertificate) = match kind {
        Kind::ThreeSatTev => {
            let (i, c) = reduce_3sat_to_teamenvver(&parse_dimacs_cnf(&text).map_err(parse_err)?).map_err(parse_err)?;
            (Instance::TeamEnvVer(i), c)
        }
        Kind::ThreeSatTdls => {
            let (i, c) = reduce_3sat_to_teamdesls(&parse_dimacs_cnf(&text).map_err(parse_err)?).map_err(parse_err)?;
            (Instance::TeamDesLs(i), c)
        }
        Kind::DsCdls => {
            let k = k.ok_or_else(|| CliError::Input("ds-cdls needs --k".into()))?;
            let (mut i, mut c) = reduce_domset_to_contdesls(&parse_graph(&text).map_err(parse_err)?, k)?;
            if let Some(q) = ladder {
                i = extend_with_state_ladder(&i, q, k)?;
                c = c.reissue(
                    &Instance::ContDesLs(i.clone()),
                    &[("ladder", q.to_string()), ("Q", q.to_string()), ("d", (k + 3).to_string())],
                );
            }
            (Instance::ContDesLs(i), c)
        }
    };
    if let Some(h) = holding {
        let extra = h.saturating_sub(1);
        inst = add_holding_area(&inst, extra, states)?;
        cert = cert.reissue(&inst, &[("holding", extra.to_string()), ("holding_states", states.to_string())]);
    }
    let mut files = inst.to_files();
    files.insert("certificate.txt".into(), cert.render());
    write_files(out, &files)?;
    println!("{} {}", inst.kind(), cert.instance_digest);
    Ok(code::OK)
}

#[allow(clippy::too_many_arguments)]
fn cmd_crossvalidate(
    kind: Kind,
    manifest: Option<&Path>,
    random: Option<u64>,
    seed: Option<u64>,
    dims: Option<&[usize]>,
    opts: CrossOptions,
    report_path: Option<&Path>,
) -> Result<u8, CliError> {
    let construction = kind.construction();
    let mut corpus: Vec<CorpusItem> = Vec::new();
    if let Some(path) = manifest {
        let base = path.parent().unwrap_or(Path::new("."));
        corpus.extend(load_manifest(&read(path)?, base, construction).map_err(|e| input(path.display(), e))?);
    }
    if let (Some(count), Some(seed), Some(dims)) = (random, seed, dims) {
        let &[a, b] = dims else {
            return Err(CliError::Input("--dims takes two values, e.g. `--dims 4,3`".into()));
        };
        corpus.extend(random_corpus(construction, seed, count, a, b));
    }
    if manifest.is_none() && random.is_none() {
        return Err(CliError::Input("give a manifest or --random/--seed/--dims".into()));
    }
    let report = cross_validate(construction, &corpus, &opts)?;
    let text = report.render();
    print!("{text}");
    if let Some(path) = report_path {
        write(path, &text)?;
    }
    Ok(if report.ok() { code::OK } else { code::NEGATIVE })
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Input(format!("--jobs: {e}")))?;
    }
    match cli.command {
        Command::Simulate { env, team, placement, task, bound, ec, cycles, trace } => {
            cmd_simulate(&env, &team, &placement, task.as_deref(), bound, ec, cycles, trace.as_deref())
        }
        Command::Verify { bundle, bound, ec, no_cycles, trace } => cmd_verify(&bundle, bound, ec, no_cycles, trace.as_deref()),
        Command::Design { bundle, mode, out, cap, exact_types, permute_region } => {
            cmd_design(&bundle, mode, &out, SearchOptions { cap, exact_types, permute_region })
        }
        Command::Reduce { kind, input, out, k, ladder, holding, states } => cmd_reduce(kind, &input, &out, k, ladder, holding, states),
        Command::Crossvalidate { kind, manifest, random, seed, dims, holding, states, c1, c2, cap, report } => {
            let opts = CrossOptions {
                search: SearchOptions { cap, ..Default::default() },
                c1,
                c2,
                holding: holding.map(|h| (h.saturating_sub(1), states)),
            };
            cmd_crossvalidate(kind, manifest.as_deref(), random, seed, dims.as_deref(), opts, report.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(c) => ExitCode::from(c),
        Err(e) => {
            eprintln!("fsr: {e}");
            ExitCode::from(e.code())
        }
    }
}
