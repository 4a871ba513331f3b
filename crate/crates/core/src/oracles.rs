//! Brute-force deciders, seeded instance generators and the
//! cross-validation harness that checks reductions against them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bundle::{sha256_hex, Instance};
use crate::controller::{Controller, Direction, Formula, Modification, Transition, TransitionTemplate, Trigger};
use crate::grid::{Environment, Legend, Position, ROBOT_TYPE};
use crate::problems::{
    default_step_budget, design_controllers_ls, design_team_ls, verify_team_env, ContDesLsInstance, ProblemError,
    SearchOptions, TeamDesLsInstance,
};
use crate::reductions::{
    add_holding_area, neighborhood, parse_dimacs_cnf, parse_graph, reduce_3sat_to_teamdesls,
    reduce_3sat_to_teamenvver, reduce_domset_to_contdesls, Cnf, Graph, ReductionError,
};
use crate::sim::{self, Configuration, RunOptions, Selector, SimError, TargetConfiguration, Team};

pub const SAT_GUARD: usize = 25;
pub const DOMSET_GUARD: usize = 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{what} = {size} exceeds the oracle guard {limit}")]
    Guard { what: &'static str, size: usize, limit: usize },
    #[error("search space of {size} candidates exceeds the cap {cap}")]
    CapExceeded { size: u128, cap: u64 },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Exhaustive over all `2^|U|` assignments.
pub fn sat_oracle(cnf: &Cnf) -> Result<bool, OracleError> {
    let n = cnf.num_vars;
    if n > SAT_GUARD {
        return Err(OracleError::Guard { what: "|U|", size: n, limit: SAT_GUARD });
    }
    Ok((0u64..1 << n).any(|bits| {
        cnf.clauses.iter().all(|c| {
            c.iter().any(|&l| {
                let v = l.unsigned_abs() as usize - 1;
                (bits >> v & 1 == 1) == (l > 0)
            })
        })
    }))
}

/// True iff some set of exactly `k` vertices dominates `g`. Supersets of a
/// dominating set dominate, so this equals "a dominating set of size at
/// most `k` exists" whenever `k <= |V|`.
pub fn domset_oracle(g: &Graph, k: usize) -> Result<bool, OracleError> {
    let n = g.num_vertices;
    if n > DOMSET_GUARD {
        return Err(OracleError::Guard { what: "|V|", size: n, limit: DOMSET_GUARD });
    }
    if k > n {
        return Ok(false);
    }
    let cover: Vec<u32> = (1..=n)
        .map(|v| neighborhood(g, v).iter().fold(0u32, |m, &u| m | 1 << (u - 1)))
        .collect();
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    Ok((0u32..=all)
        .filter(|s| s.count_ones() as usize == k)
        .any(|s| (0..n).filter(|v| s >> v & 1 == 1).fold(0u32, |m, v| m | cover[v]) == all))
}

fn runs_to_success(env: &Environment, team: &Team, placement: &[Position], task: &TargetConfiguration, budget: u64, ec: u64) -> Result<bool, SimError> {
    let c0 = Configuration::initial(env.clone(), team, placement.to_vec())?;
    let opts = RunOptions::new(budget, ec);
    Ok(sim::run(&c0, team, task, &opts)?.outcome.is_success())
}

/// Tries every map from robots to library controllers that uses at most
/// `h` distinct controllers; robot `i` starts on the `i`-th region square
/// in (row, col) order.
pub fn design_team_oracle(inst: &TeamDesLsInstance, cap: u64) -> Result<bool, OracleError> {
    let l = inst.library.len();
    let t = inst.team_size;
    if l == 0 || t == 0 {
        return Ok(false);
    }
    let size = (l as u128).checked_pow(t as u32).unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(OracleError::CapExceeded { size, cap });
    }
    let mut region = inst.region.clone();
    region.sort_by_key(|p| (p.row, p.col));
    let mut choice = vec![0usize; t];
    loop {
        let distinct: BTreeSet<usize> = choice.iter().copied().collect();
        if distinct.len() <= inst.max_types {
            let robots = choice.iter().map(|&c| inst.library[c].clone()).collect();
            let team = Team::from_robots(robots)?;
            let budget = default_step_budget(&inst.env, &team, inst.c1, inst.c2)?;
            if runs_to_success(&inst.env, &team, &region, &inst.task, budget, inst.ec_budget)? {
                return Ok(true);
            }
        }
        if !odometer(&mut choice, l) {
            return Ok(false);
        }
    }
}

/// Advances a base-`radix` counter; false once it wraps to zero.
fn odometer(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

/// Every controller with exactly `max_states` states (`s0` initial) whose
/// transitions instantiate library templates with at most `d` per state.
fn all_controllers(inst: &ContDesLsInstance) -> Result<Vec<Controller>, OracleError> {
    let legend = inst.env.legend();
    let usable: Vec<&TransitionTemplate> = inst
        .library
        .iter()
        .filter(|t| {
            Controller::with_canonical_states(1, inst.radius, vec![t.instantiate(0, 0)])
                .and_then(|c| c.compile(legend))
                .is_ok()
        })
        .collect();
    let q = inst.max_states;
    let slots = q * usable.len();
    // Each (state, template) slot is absent or leads to one of the q states.
    let mut choice = vec![0usize; slots];
    let mut out = Vec::new();
    loop {
        let degree_ok = (0..q).all(|s| choice[s * usable.len()..(s + 1) * usable.len()].iter().filter(|&&c| c > 0).count() <= inst.max_out_degree);
        if degree_ok {
            let transitions: Vec<Transition> = choice
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| usable[i % usable.len()].instantiate(i / usable.len(), c - 1))
                .collect();
            out.push(Controller::with_canonical_states(q, inst.radius, transitions).map_err(SimError::from)?);
        }
        if !odometer(&mut choice, q + 1) {
            return Ok(out);
        }
    }
}

/// Tries every team of at most `h` distinct controllers drawn from
/// [`all_controllers`], over every map from robots to those controllers.
pub fn design_controllers_oracle(inst: &ContDesLsInstance, cap: u64) -> Result<bool, OracleError> {
    let q = inst.max_states;
    let per_controller = ((q + 1) as u128)
        .checked_pow((q * inst.library.len()) as u32)
        .unwrap_or(u128::MAX);
    let per_team = per_controller.checked_pow(inst.team_size as u32).unwrap_or(u128::MAX);
    if per_controller > cap as u128 || per_team > cap as u128 {
        return Err(OracleError::CapExceeded { size: per_team, cap });
    }
    let controllers = all_controllers(inst)?;
    if controllers.is_empty() || inst.team_size == 0 {
        return Ok(false);
    }
    let budget = inst.step_budget()?;
    let mut choice = vec![0usize; inst.team_size];
    loop {
        let distinct: BTreeSet<usize> = choice.iter().copied().collect();
        if distinct.len() <= inst.max_types {
            let team = Team::from_robots(choice.iter().map(|&c| controllers[c].clone()).collect())?;
            if runs_to_success(&inst.env, &team, &inst.placement, &inst.task, budget, inst.ec_budget)? {
                return Ok(true);
            }
        }
        if !odometer(&mut choice, controllers.len()) {
            return Ok(false);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Construction {
    ThreeSatTeamEnvVer,
    DomSetContDesLs,
    ThreeSatTeamDesLs,
}

impl Construction {
    pub fn name(self) -> &'static str {
        match self {
            Construction::ThreeSatTeamEnvVer => "3sat-tev",
            Construction::DomSetContDesLs => "ds-cdls",
            Construction::ThreeSatTeamDesLs => "3sat-tdls",
        }
    }

    pub fn from_name(s: &str) -> Option<Construction> {
        [
            Construction::ThreeSatTeamEnvVer,
            Construction::DomSetContDesLs,
            Construction::ThreeSatTeamDesLs,
        ]
        .into_iter()
        .find(|c| c.name() == s)
    }

    pub fn takes_graphs(self) -> bool {
        self == Construction::DomSetContDesLs
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Cnf(Cnf),
    Graph(Graph, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusItem {
    pub label: String,
    pub source: Source,
}

impl Source {
    fn render(&self) -> String {
        match self {
            Source::Cnf(c) => c.to_dimacs(),
            Source::Graph(g, k) => format!("{}k {k}\n", g.to_edge_list()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrossOptions {
    pub search: SearchOptions,
    pub c1: u64,
    pub c2: u32,
    /// Extra robots and states per robot for an added holding area.
    pub holding: Option<(usize, usize)>,
}

impl Default for CrossOptions {
    fn default() -> Self {
        CrossOptions {
            search: SearchOptions::default(),
            c1: 10,
            c2: 3,
            holding: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disagreement {
    pub index: usize,
    pub label: String,
    pub source: String,
    pub oracle: bool,
    pub solver: bool,
    pub trace_digest: String,
}

#[derive(Debug, Clone)]
pub struct CrossValidationReport {
    pub construction: String,
    pub instances: usize,
    pub agreements: usize,
    pub disagreements: Vec<Disagreement>,
    pub wall_time: Duration,
}

impl CrossValidationReport {
    pub fn ok(&self) -> bool {
        self.disagreements.is_empty()
    }

    /// One line per disagreement, then a summary line. Wall time is left
    /// out so the text (and its digest) is stable across runs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for d in &self.disagreements {
            let _ = writeln!(
                out,
                "disagree index={} label={} source={} oracle={} solver={} trace={}",
                d.index,
                d.label,
                sha256_hex(d.source.as_bytes()),
                d.oracle,
                d.solver,
                d.trace_digest
            );
        }
        let _ = writeln!(
            out,
            "summary construction={} instances={} agreements={} disagreements={}",
            self.construction,
            self.instances,
            self.agreements,
            self.disagreements.len()
        );
        out
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.render().as_bytes())
    }
}

struct Verdict {
    oracle: bool,
    solver: bool,
    trace: String,
}

fn generate(construction: Construction, source: &Source, opts: &CrossOptions) -> Result<Instance, OracleError> {
    let inst = match (construction, source) {
        (Construction::ThreeSatTeamEnvVer, Source::Cnf(c)) => Instance::TeamEnvVer(reduce_3sat_to_teamenvver(c)?.0),
        (Construction::ThreeSatTeamDesLs, Source::Cnf(c)) => Instance::TeamDesLs(reduce_3sat_to_teamdesls(c)?.0),
        (Construction::DomSetContDesLs, Source::Graph(g, k)) => Instance::ContDesLs(reduce_domset_to_contdesls(g, *k)?.0),
        _ => {
            return Err(OracleError::Manifest {
                line: 0,
                message: format!("{} does not take this kind of input", construction.name()),
            })
        }
    };
    Ok(match opts.holding {
        Some((extra, states)) => add_holding_area(&inst, extra, states)?,
        None => inst,
    })
}

/// Oracle verdict on the source problem and solver verdict on its image.
pub fn judge(construction: Construction, source: &Source, opts: &CrossOptions) -> Result<(bool, bool), OracleError> {
    let v = judge_item(construction, source, opts)?;
    Ok((v.oracle, v.solver))
}

fn judge_item(construction: Construction, source: &Source, opts: &CrossOptions) -> Result<Verdict, OracleError> {
    let oracle = match source {
        Source::Cnf(c) => sat_oracle(c)?,
        Source::Graph(g, k) => domset_oracle(g, *k)?,
    };
    let (solver, trace) = match generate(construction, source, opts)? {
        Instance::TeamEnvVer(inst) => {
            let budget = default_step_budget(&inst.env, &inst.team, opts.c1, opts.c2)?;
            let v = verify_team_env(&inst, budget, true)?;
            (v.yes, sim::render_trace(&v.run.trace))
        }
        Instance::TeamDesLs(inst) => {
            let r = design_team_ls(&inst, &opts.search)?;
            let trace = r.outcome.design().map(|d| sim::render_trace(&d.run.trace)).unwrap_or_default();
            (r.outcome.is_found(), trace)
        }
        Instance::ContDesLs(inst) => {
            let r = design_controllers_ls(&inst, &opts.search)?;
            let trace = r.outcome.design().map(|d| sim::render_trace(&d.run.trace)).unwrap_or_default();
            (r.outcome.is_found(), trace)
        }
    };
    Ok(Verdict {
        oracle,
        solver,
        trace: sha256_hex(trace.as_bytes()),
    })
}

/// Runs generator, solver and oracle on each corpus item in parallel; the
/// report is ordered by corpus index.
pub fn cross_validate(construction: Construction, corpus: &[CorpusItem], opts: &CrossOptions) -> Result<CrossValidationReport, OracleError> {
    let start = Instant::now();
    let verdicts: Vec<Result<Verdict, OracleError>> = corpus
        .par_iter()
        .map(|item| judge_item(construction, &item.source, opts))
        .collect();
    let mut report = CrossValidationReport {
        construction: construction.name().to_string(),
        instances: corpus.len(),
        agreements: 0,
        disagreements: Vec::new(),
        wall_time: Duration::ZERO,
    };
    for (index, (item, v)) in corpus.iter().zip(verdicts).enumerate() {
        let v = v?;
        if v.oracle == v.solver {
            report.agreements += 1;
        } else {
            report.disagreements.push(Disagreement {
                index,
                label: item.label.clone(),
                source: item.source.render(),
                oracle: v.oracle,
                solver: v.solver,
                trace_digest: v.trace,
            });
        }
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Every 3-CNF over exactly `vars` variables with `1..=max_clauses`
/// distinct clauses, each clause a set of 1 to 3 literals padded to three
/// by repeating its last literal.
pub fn all_3cnfs(vars: usize, max_clauses: usize) -> Vec<Cnf> {
    let lits: Vec<i32> = (1..=vars as i32).flat_map(|v| [v, -v]).collect();
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    for a in 0..lits.len() {
        clauses.push(vec![lits[a]; 3]);
        for b in a + 1..lits.len() {
            clauses.push(vec![lits[a], lits[b], lits[b]]);
            for c in b + 1..lits.len() {
                clauses.push(vec![lits[a], lits[b], lits[c]]);
            }
        }
    }
    let mut out = Vec::new();
    let mut pick = Vec::new();
    fn subsets(clauses: &[Vec<i32>], from: usize, left: usize, pick: &mut Vec<usize>, vars: usize, out: &mut Vec<Cnf>) {
        if !pick.is_empty() {
            out.push(Cnf::new(vars, pick.iter().map(|&i| clauses[i].clone()).collect()));
        }
        if left == 0 {
            return;
        }
        for i in from..clauses.len() {
            pick.push(i);
            subsets(clauses, i + 1, left - 1, pick, vars, out);
            pick.pop();
        }
    }
    subsets(&clauses, 0, max_clauses, &mut pick, vars, &mut out);
    out
}

/// Every simple graph on `n` labelled vertices.
pub fn all_graphs(n: usize) -> Vec<Graph> {
    let pairs: Vec<(usize, usize)> = (1..=n).flat_map(|u| (u + 1..=n).map(move |v| (u, v))).collect();
    (0u64..1 << pairs.len())
        .map(|mask| Graph::new(n, pairs.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &e)| e)))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_3cnf(rng: &mut impl Rng, max_vars: usize, max_clauses: usize) -> Cnf {
    let vars = rng.gen_range(1..=max_vars);
    let count = rng.gen_range(1..=max_clauses);
    let clauses = (0..count)
        .map(|_| {
            (0..3)
                .map(|_| {
                    let v = rng.gen_range(1..=vars as i32);
                    if rng.gen_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect()
        })
        .collect();
    Cnf::new(vars, clauses)
}

pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> Graph {
    let edges: Vec<(usize, usize)> = (1..=n)
        .flat_map(|u| (u + 1..=n).map(move |v| (u, v)))
        .filter(|_| rng.gen_bool(p))
        .collect();
    Graph::new(n, edges)
}

const FREE_TYPES: [&str; 3] = ["a", "b", "c"];

/// Grid over free types `a`, `b`, `c` and obstacle type `w`.
pub fn random_environment(rng: &mut impl Rng, width: u32, height: u32, wall_p: f64) -> Environment {
    let mut legend = Legend::new();
    legend.add("w", true).expect("fresh legend");
    for t in FREE_TYPES {
        legend.add(t, false).expect("fresh legend");
    }
    let mut env = Environment::filled(width, height, legend, "a").expect("valid size");
    for p in env.positions().collect::<Vec<_>>() {
        let ty = if rng.gen_bool(wall_p) { "w" } else { FREE_TYPES[rng.gen_range(0..3)] };
        env.paint(p, ty).expect("known type");
    }
    env
}

fn random_formula(rng: &mut impl Rng, radius: u32, depth: u32) -> Formula {
    if depth == 0 || rng.gen_bool(0.5) {
        let r = radius as i32;
        let dx = rng.gen_range(-r..=r);
        let rest = r - dx.abs();
        let dy = rng.gen_range(-rest..=rest);
        let ty = if rng.gen_bool(0.25) { ROBOT_TYPE } else { FREE_TYPES[rng.gen_range(0..3)] };
        let f = Formula::pred(ty, dx, dy);
        return if rng.gen_bool(0.25) { f.negate() } else { f };
    }
    let a = random_formula(rng, radius, depth - 1);
    let b = random_formula(rng, radius, depth - 1);
    if rng.gen_bool(0.5) {
        a.and(b)
    } else {
        a.or(b)
    }
}

const DIRECTIONS: [Direction; 5] = [Direction::North, Direction::South, Direction::East, Direction::West, Direction::Stay];

pub fn random_template(rng: &mut impl Rng, radius: u32, modify_p: f64) -> TransitionTemplate {
    let trigger = if rng.gen_bool(0.2) { Trigger::Star } else { Trigger::Formula(random_formula(rng, radius, 2)) };
    let modification = if rng.gen_bool(modify_p) {
        let (dx, dy) = *[(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)].choose(rng).expect("non-empty");
        Modification::Set {
            ty: FREE_TYPES[rng.gen_range(0..3)].to_string(),
            dx,
            dy,
        }
    } else {
        Modification::Star
    };
    TransitionTemplate::new(trigger, modification, *DIRECTIONS.choose(rng).expect("non-empty"))
}

pub fn random_controller(rng: &mut impl Rng, max_states: usize, max_transitions: usize, modify_p: f64) -> Controller {
    let states = rng.gen_range(1..=max_states);
    let radius = rng.gen_range(0..=1);
    let transitions = (0..rng.gen_range(1..=max_transitions))
        .map(|_| random_template(rng, radius, modify_p).instantiate(rng.gen_range(0..states), rng.gen_range(0..states)))
        .collect();
    Controller::with_canonical_states(states, radius, transitions).expect("offsets within radius")
}

fn free_squares(env: &Environment) -> Vec<Position> {
    env.positions().filter(|p| env.is_free(*p)).collect()
}

fn random_task(rng: &mut impl Rng, free: &[Position]) -> TargetConfiguration {
    let mut task = TargetConfiguration {
        positions: vec![(Selector::Any, *free.choose(rng).expect("free square"))],
        ..Default::default()
    };
    if rng.gen_bool(0.3) {
        let p = *free.choose(rng).expect("free square");
        task.squares.push((p, FREE_TYPES[rng.gen_range(0..3)].to_string()));
    }
    task
}

/// A homogeneous team-design instance with `|L| <= 4` and `|E| <= 100`.
pub fn random_homogeneous_instance(rng: &mut impl Rng) -> TeamDesLsInstance {
    loop {
        let (w, h) = (rng.gen_range(2..=10), rng.gen_range(1..=10));
        let env = random_environment(rng, w, h, 0.15);
        let free = free_squares(&env);
        let team_size = rng.gen_range(1..=3);
        if free.len() < team_size + 1 {
            continue;
        }
        let region: Vec<Position> = free.choose_multiple(rng, team_size).copied().collect();
        let library = (0..rng.gen_range(1..=4)).map(|_| random_controller(rng, 2, 4, 0.15)).collect();
        return TeamDesLsInstance {
            task: random_task(rng, &free),
            env,
            team_size,
            library,
            region,
            max_types: 1,
            ec_budget: rng.gen_range(0..=3),
            c1: 1,
            c2: 2,
        };
    }
}

/// A small heterogeneous team-design instance.
pub fn random_team_instance(rng: &mut impl Rng) -> TeamDesLsInstance {
    let mut inst = random_homogeneous_instance(rng);
    inst.max_types = rng.gen_range(1..=inst.team_size);
    inst
}

/// A controller-design instance small enough for exhaustive enumeration.
pub fn random_controller_instance(rng: &mut impl Rng) -> ContDesLsInstance {
    loop {
        let (w, h) = (rng.gen_range(2..=5), rng.gen_range(1..=4));
        let env = random_environment(rng, w, h, 0.15);
        let free = free_squares(&env);
        let team_size = rng.gen_range(1..=2);
        if free.len() < team_size + 1 {
            continue;
        }
        let radius = rng.gen_range(0..=1);
        let max_states = rng.gen_range(1..=2);
        let library_len = if max_states == 1 { rng.gen_range(1..=4) } else { rng.gen_range(1..=3) };
        let library = (0..library_len).map(|_| random_template(rng, radius, 0.15)).collect();
        let placement = free.choose_multiple(rng, team_size).copied().collect();
        return ContDesLsInstance {
            task: random_task(rng, &free),
            env,
            team_size,
            placement,
            library,
            radius,
            max_states,
            max_out_degree: rng.gen_range(1..=3),
            max_types: rng.gen_range(1..=team_size),
            ec_budget: rng.gen_range(0..=2),
            c1: 1,
            c2: 2,
        };
    }
}

/// A random environment, team and start placement for simulation.
pub fn random_system(rng: &mut impl Rng, max_side: u32, max_robots: usize) -> (Environment, Team, Vec<Position>) {
    loop {
        let (w, h) = (rng.gen_range(2..=max_side), rng.gen_range(2..=max_side));
        let env = random_environment(rng, w, h, 0.1);
        let free = free_squares(&env);
        let n = rng.gen_range(1..=max_robots);
        if free.len() < n {
            continue;
        }
        let controllers: Vec<Controller> = (0..rng.gen_range(1..=n.min(3))).map(|_| random_controller(rng, 3, 6, 0.3)).collect();
        let members = (0..n).map(|_| rng.gen_range(0..controllers.len())).collect();
        let team = Team::new(controllers, members).expect("valid members");
        let placement = free.choose_multiple(rng, n).copied().collect();
        return (env, team, placement);
    }
}

/// `count` random inputs: 3-CNFs with at most `a` variables and `b`
/// clauses, or graphs with `b..=a` vertices paired with `k = b`.
pub fn random_corpus(construction: Construction, seed: u64, count: u64, a: usize, b: usize) -> Vec<CorpusItem> {
    let mut r = rng(seed);
    (0..count)
        .map(|j| {
            let source = if construction.takes_graphs() {
                let k = b.max(1);
                let n = r.gen_range(k..=a.max(k));
                Source::Graph(random_graph(&mut r, n, 0.5), k)
            } else {
                Source::Cnf(random_3cnf(&mut r, a.max(1), b.max(1)))
            };
            CorpusItem { label: format!("seed{seed}-{j}"), source }
        })
        .collect()
}

/// Reads a corpus manifest. Each non-comment line is one of
///
/// - `<path>`: a DIMACS file (3SAT constructions)
/// - `<path> <k>`: an edge-list file with its `k` (dominating set)
/// - `all <vars> <clauses>` / `all <vertices> <k>`: exhaustive corpus
/// - `random <seed> <count> <vars> <clauses>` / `random <seed> <count> <vertices> <k>`
///
/// Relative paths resolve against `base`.
pub fn load_manifest(text: &str, base: &Path, construction: Construction) -> Result<Vec<CorpusItem>, OracleError> {
    let graphs = construction.takes_graphs();
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let bad = |message: String| OracleError::Manifest { line, message };
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("expected a number, got `{s}`")));
        let fields: Vec<&str> = l.split_whitespace().collect();
        match fields.as_slice() {
            ["all", a, b] => {
                let (a, b) = (num(a)? as usize, num(b)? as usize);
                if graphs {
                    for (j, g) in all_graphs(a).into_iter().enumerate() {
                        items.push(CorpusItem { label: format!("all-{a}-{j}-k{b}"), source: Source::Graph(g, b) });
                    }
                } else {
                    for (j, c) in all_3cnfs(a, b).into_iter().enumerate() {
                        items.push(CorpusItem { label: format!("all-{a}-{j}"), source: Source::Cnf(c) });
                    }
                }
            }
            ["random", seed, count, a, b] => {
                items.extend(random_corpus(construction, num(seed)?, num(count)?, num(a)? as usize, num(b)? as usize));
            }
            [path, rest @ ..] if rest.len() <= 1 => {
                let full = base.join(path);
                let body = std::fs::read_to_string(&full).map_err(|e| OracleError::Io {
                    path: full.display().to_string(),
                    message: e.to_string(),
                })?;
                let source = match (graphs, rest) {
                    (true, [k]) => Source::Graph(parse_graph(&body)?, num(k)? as usize),
                    (true, []) => return Err(bad("graph entries need `<path> <k>`".into())),
                    (false, []) => Source::Cnf(parse_dimacs_cnf(&body)?),
                    (false, _) => return Err(bad("CNF entries take only a path".into())),
                    _ => unreachable!(),
                };
                items.push(CorpusItem { label: path.to_string(), source });
            }
            _ => return Err(bad(format!("unrecognised entry `{l}`"))),
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sat_examples() {
        assert!(sat_oracle(&Cnf::new(1, vec![vec![1, 1, 1]])).unwrap());
        assert!(!sat_oracle(&Cnf::new(1, vec![vec![1, 1, 1], vec![-1, -1, -1]])).unwrap());
        assert!(matches!(sat_oracle(&Cnf::new(26, vec![])), Err(OracleError::Guard { .. })));
    }

    #[test]
    fn domset_examples() {
        assert!(domset_oracle(&Graph::complete(3), 1).unwrap());
        assert!(!domset_oracle(&Graph::edgeless(3), 1).unwrap());
        assert!(domset_oracle(&Graph::path(3), 1).unwrap());
        assert!(domset_oracle(&Graph::path(3), 3).unwrap());
        assert!(!domset_oracle(&Graph::path(2), 3).unwrap());
        assert!(matches!(domset_oracle(&Graph::edgeless(21), 1), Err(OracleError::Guard { .. })));
    }

    #[test]
    fn corpus_sizes() {
        assert_eq!(all_graphs(4).len(), 64);
        // Six literals give 6 + 15 + 20 literal sets.
        assert_eq!(all_3cnfs(2, 1).len(), 4 + 6 + 4);
        assert_eq!(all_3cnfs(3, 1).len(), 41);
    }

    #[test]
    fn empty_corpus() {
        let r = cross_validate(Construction::ThreeSatTeamEnvVer, &[], &CrossOptions::default()).unwrap();
        assert!(r.ok());
        assert_eq!(r.instances, 0);
    }

    #[test]
    fn odometer_visits_all() {
        let mut d = vec![0; 3];
        let mut n = 1;
        while odometer(&mut d, 3) {
            n += 1;
        }
        assert_eq!(n, 27);
    }
}
