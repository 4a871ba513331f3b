//! Verification and design problems over robot teams.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::controller::{CompiledFormula, Controller, Direction, TransitionTemplate, Trigger};
use crate::grid::{Environment, Position, TypeId};
use crate::sim::{self, Action, CompiledTarget, Configuration, Engine, RunOptions, RunResult, SimError, TargetConfiguration, Team};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProblemError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("search space of {size} candidates exceeds the cap of {cap}")]
    CapExceeded { size: u128, cap: u64 },
    #[error("homogeneous design needs h = 1, got h = {0}")]
    NotHomogeneous(usize),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("found design failed re-verification: {0}")]
    SelfCheck(String),
}

#[derive(Debug, Clone)]
pub struct TeamEnvVerInstance {
    pub env: Environment,
    pub team: Team,
    pub placement: Vec<Position>,
    pub ec_budget: u64,
    pub task: TargetConfiguration,
}

#[derive(Debug, Clone)]
pub struct TeamDesLsInstance {
    pub env: Environment,
    pub team_size: usize,
    pub library: Vec<Controller>,
    /// Initial region; robot `i` starts on the `i`-th square in row-major order.
    pub region: Vec<Position>,
    pub max_types: usize,
    pub ec_budget: u64,
    pub task: TargetConfiguration,
    pub c1: u64,
    pub c2: u32,
}

#[derive(Debug, Clone)]
pub struct ContDesLsInstance {
    pub env: Environment,
    pub team_size: usize,
    pub placement: Vec<Position>,
    pub library: Vec<TransitionTemplate>,
    pub radius: u32,
    pub max_states: usize,
    pub max_out_degree: usize,
    pub max_types: usize,
    pub ec_budget: u64,
    pub task: TargetConfiguration,
    pub c1: u64,
    pub c2: u32,
}

impl ContDesLsInstance {
    pub fn step_budget(&self) -> Result<u64, SimError> {
        sim::steps_bound(self.c1, self.c2, self.env.size() as u64, self.max_states as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    /// Largest number of candidates (or search nodes) explored before
    /// giving up with [`ProblemError::CapExceeded`].
    pub cap: u64,
    /// Require exactly `h` distinct controllers instead of at most `h`.
    pub exact_types: bool,
    /// Also try every assignment of robots to region squares.
    pub permute_region: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            cap: 5_000_000,
            exact_types: false,
            permute_region: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    pub team: Team,
    /// Per robot: library index (team design) or controller index (controller design).
    pub assignment: Vec<usize>,
    pub placement: Vec<Position>,
    pub step_budget: u64,
    pub run: RunResult,
}

#[derive(Debug, Clone)]
pub enum DesignOutcome {
    Found(Box<Design>),
    Bot,
}

impl DesignOutcome {
    pub fn is_found(&self) -> bool {
        matches!(self, DesignOutcome::Found(_))
    }

    pub fn design(&self) -> Option<&Design> {
        match self {
            DesignOutcome::Found(d) => Some(d),
            DesignOutcome::Bot => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub candidates: u64,
    /// Most steps simulated for any single candidate.
    pub max_steps: u64,
    /// Largest step budget handed to any candidate.
    pub max_budget: u64,
}

#[derive(Debug, Clone)]
pub struct DesignReport {
    pub outcome: DesignOutcome,
    pub stats: SearchStats,
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub yes: bool,
    pub run: RunResult,
}

/// `steps_bound(c1, c2, |E|, max |Q|)` for a concrete team.
pub fn default_step_budget(env: &Environment, team: &Team, c1: u64, c2: u32) -> Result<u64, SimError> {
    sim::steps_bound(c1, c2, env.size() as u64, team.max_states() as u64)
}

pub fn verify_team_env(inst: &TeamEnvVerInstance, step_budget: u64, detect_cycles: bool) -> Result<Verification, ProblemError> {
    let c0 = Configuration::initial(inst.env.clone(), &inst.team, inst.placement.clone())?;
    let opts = RunOptions {
        step_budget,
        ec_budget: inst.ec_budget,
        detect_cycles,
        record_trace: true,
    };
    let run = sim::run(&c0, &inst.team, &inst.task, &opts)?;
    Ok(Verification {
        yes: run.outcome.is_success(),
        run,
    })
}

/// Region squares sorted row-major: row 1 first, west to east.
pub fn canonical_region(region: &[Position]) -> Vec<Position> {
    let mut r = region.to_vec();
    r.sort_by_key(|p| (p.row, p.col));
    r
}

fn check_region(inst: &TeamDesLsInstance) -> Result<(), ProblemError> {
    if inst.region.len() != inst.team_size {
        return Err(ProblemError::Invalid(format!(
            "initial region has {} squares for a team of {}",
            inst.region.len(),
            inst.team_size
        )));
    }
    if inst.team_size == 0 || inst.max_types == 0 {
        return Err(ProblemError::Invalid("team size and h must be at least 1".into()));
    }
    Ok(())
}

struct Attempt {
    run: RunResult,
    budget: u64,
}

fn attempt(inst: &TeamDesLsInstance, team: &Team, placement: &[Position], record_trace: bool) -> Result<Attempt, ProblemError> {
    let budget = default_step_budget(&inst.env, team, inst.c1, inst.c2)?;
    let c0 = Configuration::initial(inst.env.clone(), team, placement.to_vec())?;
    let opts = RunOptions {
        step_budget: budget,
        ec_budget: inst.ec_budget,
        detect_cycles: true,
        record_trace,
    };
    Ok(Attempt {
        run: sim::run(&c0, team, &inst.task, &opts)?,
        budget,
    })
}

fn team_from_assignment(library: &[Controller], assignment: &[usize]) -> Result<Team, SimError> {
    let mut used: Vec<usize> = Vec::new();
    let members = assignment
        .iter()
        .map(|&a| match used.iter().position(|&u| u == a) {
            Some(i) => i,
            None => {
                used.push(a);
                used.len() - 1
            }
        })
        .collect();
    Team::new(used.iter().map(|&u| library[u].clone()).collect(), members)
}

/// Re-runs a candidate with a trace and packages it.
fn finish(inst: &TeamDesLsInstance, assignment: Vec<usize>, placement: Vec<Position>) -> Result<Design, ProblemError> {
    let team = team_from_assignment(&inst.library, &assignment)?;
    let a = attempt(inst, &team, &placement, true)?;
    if !a.run.outcome.is_success() {
        return Err(ProblemError::SelfCheck(a.run.outcome.to_string()));
    }
    Ok(Design {
        team,
        assignment,
        placement,
        step_budget: a.budget,
        run: a.run,
    })
}

fn steps_used(run: &RunResult) -> u64 {
    run.final_config.t
}

/// Tries the all-`c` team for each library controller in order.
pub fn design_team_homogeneous(inst: &TeamDesLsInstance) -> Result<DesignReport, ProblemError> {
    if inst.max_types != 1 {
        return Err(ProblemError::NotHomogeneous(inst.max_types));
    }
    check_region(inst)?;
    let placement = canonical_region(&inst.region);
    let results: Vec<Result<(bool, u64, u64), ProblemError>> = inst
        .library
        .par_iter()
        .map(|c| {
            let team = Team::homogeneous(c.clone(), inst.team_size)?;
            let a = attempt(inst, &team, &placement, false)?;
            Ok((a.run.outcome.is_success(), steps_used(&a.run), a.budget))
        })
        .collect();
    let mut stats = SearchStats::default();
    for (i, r) in results.into_iter().enumerate() {
        let (ok, steps, budget) = r?;
        stats.candidates += 1;
        stats.max_steps = stats.max_steps.max(steps);
        stats.max_budget = stats.max_budget.max(budget);
        if ok {
            let design = finish(inst, vec![i; inst.team_size], placement)?;
            return Ok(DesignReport {
                outcome: DesignOutcome::Found(Box::new(design)),
                stats,
            });
        }
    }
    Ok(DesignReport {
        outcome: DesignOutcome::Bot,
        stats,
    })
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Number of maps from `slots` onto exactly `j` labelled values.
fn surjections(slots: u32, j: u32) -> u128 {
    // Inclusion-exclusion: sum (-1)^i C(j,i) (j-i)^slots.
    let mut total: i128 = 0;
    for i in 0..=j {
        let term = binomial(j as u128, i as u128) as i128 * ((j - i) as i128).saturating_pow(slots);
        if i % 2 == 0 {
            total = total.saturating_add(term);
        } else {
            total = total.saturating_sub(term);
        }
    }
    total.max(0) as u128
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).fold(1u128, |a, b| a.saturating_mul(b))
}

/// Controller index vectors of length `slots` over `0..library`, with at
/// most (or exactly) `h` distinct values, in lexicographic order.
struct Assignments {
    library: usize,
    h: usize,
    exact: bool,
    next: Option<Vec<usize>>,
}

impl Assignments {
    fn new(library: usize, slots: usize, h: usize, exact: bool) -> Assignments {
        let next = (library > 0).then(|| vec![0; slots]);
        let mut a = Assignments { library, h, exact, next };
        a.skip_invalid();
        a
    }

    fn valid(&self, v: &[usize]) -> bool {
        let mut seen: Vec<usize> = Vec::new();
        for &x in v {
            if !seen.contains(&x) {
                seen.push(x);
            }
        }
        if self.exact {
            seen.len() == self.h
        } else {
            seen.len() <= self.h
        }
    }

    fn advance(&mut self) {
        let Some(v) = self.next.as_mut() else { return };
        for i in (0..v.len()).rev() {
            v[i] += 1;
            if v[i] < self.library {
                return;
            }
            v[i] = 0;
        }
        self.next = None;
    }

    fn skip_invalid(&mut self) {
        while let Some(v) = &self.next {
            if self.valid(v) {
                return;
            }
            self.advance();
        }
    }
}

impl Iterator for Assignments {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.clone()?;
        self.advance();
        self.skip_invalid();
        Some(current)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        out.push(p.clone());
        // Next lexicographic permutation.
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else { break };
        let j = (i..n).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
    out
}

/// Lexicographic search over library assignments with at most `h`
/// distinct controllers. Candidates run in parallel batches; the first
/// success in enumeration order wins.
pub fn design_team_ls(inst: &TeamDesLsInstance, opts: &SearchOptions) -> Result<DesignReport, ProblemError> {
    check_region(inst)?;
    let slots = inst.team_size;
    let l = inst.library.len() as u128;
    let h = inst.max_types.min(slots);
    let lo = if opts.exact_types { h } else { 1 };
    let mut size: u128 = (lo..=h)
        .map(|j| binomial(l, j as u128).saturating_mul(surjections(slots as u32, j as u32)))
        .fold(0u128, |a, b| a.saturating_add(b));
    if opts.exact_types && inst.max_types > slots {
        size = 0;
    }
    let perms = if opts.permute_region {
        permutations(slots)
    } else {
        vec![(0..slots).collect()]
    };
    size = size.saturating_mul(if opts.permute_region { factorial(slots) } else { 1 });
    if size > opts.cap as u128 {
        return Err(ProblemError::CapExceeded { size, cap: opts.cap });
    }
    let region = canonical_region(&inst.region);
    let mut stats = SearchStats::default();
    if size == 0 {
        return Ok(DesignReport {
            outcome: DesignOutcome::Bot,
            stats,
        });
    }
    let candidates = Assignments::new(inst.library.len(), slots, h, opts.exact_types)
        .flat_map(|a| perms.iter().map(move |p| (a.clone(), p.clone())));
    const BATCH: usize = 256;
    let mut batch: Vec<(Vec<usize>, Vec<usize>)> = Vec::with_capacity(BATCH);
    let mut candidates = candidates.peekable();
    while candidates.peek().is_some() {
        batch.clear();
        batch.extend(candidates.by_ref().take(BATCH));
        let results: Vec<Result<(bool, u64, u64), ProblemError>> = batch
            .par_iter()
            .map(|(assignment, perm)| {
                let team = team_from_assignment(&inst.library, assignment)?;
                let placement: Vec<Position> = perm.iter().map(|&i| region[i]).collect();
                let a = attempt(inst, &team, &placement, false)?;
                Ok((a.run.outcome.is_success(), steps_used(&a.run), a.budget))
            })
            .collect();
        for (k, r) in results.into_iter().enumerate() {
            let (ok, steps, budget) = r?;
            stats.candidates += 1;
            stats.max_steps = stats.max_steps.max(steps);
            stats.max_budget = stats.max_budget.max(budget);
            if ok {
                let (assignment, perm) = batch[k].clone();
                let placement = perm.iter().map(|&i| region[i]).collect();
                let design = finish(inst, assignment, placement)?;
                return Ok(DesignReport {
                    outcome: DesignOutcome::Found(Box::new(design)),
                    stats,
                });
            }
        }
    }
    Ok(DesignReport {
        outcome: DesignOutcome::Bot,
        stats,
    })
}

/// Restricted-growth strings of length `n` with at most (or exactly) `h`
/// blocks: slot `i` runs controller `pattern[i]`, numbered by first use.
pub(crate) fn slot_patterns(n: usize, h: usize, exact: bool) -> Vec<Vec<usize>> {
    fn grow(cur: &mut Vec<usize>, blocks: usize, n: usize, h: usize, exact: bool, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            if !exact || blocks == h {
                out.push(cur.clone());
            }
            return;
        }
        for v in 0..=blocks.min(h.saturating_sub(1)) {
            cur.push(v);
            grow(cur, blocks.max(v + 1), n, h, exact, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 && h > 0 {
        grow(&mut Vec::with_capacity(n), 0, n, h, exact, &mut out);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Open,
    Excluded,
    Included(usize),
}

#[derive(Debug, Clone)]
struct PartialSpec {
    states: Vec<usize>,
    decisions: Vec<Vec<Decision>>,
    degree: Vec<Vec<usize>>,
}

struct UsableTemplate {
    index: usize,
    trigger: Option<CompiledFormula>,
    modification: Option<(TypeId, i32, i32)>,
    direction: Direction,
}

enum Pick {
    Act(Action),
    Open(usize, usize, usize),
    Violation,
}

/// Depth-first search that fixes a transition only when the simulation
/// first needs it: at each step, every template whose trigger holds for a
/// robot's (controller, state, percept) must be decided before the robot
/// can act. Default templates are decided only when no included guarded
/// template fires. Configuration repeats on the current path are dead ends.
struct LazySearch<'a> {
    inst: &'a ContDesLsInstance,
    templates: &'a [UsableTemplate],
    pattern: &'a [usize],
    target: CompiledTarget,
    budget: u64,
    nodes: &'a mut u64,
    cap: u64,
    path: Vec<(Vec<TypeId>, Vec<usize>, Vec<usize>)>,
    seen: HashMap<u64, Vec<usize>>,
    path_digests: Vec<u64>,
    max_steps: u64,
}

impl LazySearch<'_> {
    fn decision(&self, spec: &PartialSpec, c: usize, q: usize, j: usize) -> Decision {
        spec.decisions[c][q * self.templates.len() + j]
    }

    fn pick(&self, world: &Engine, spec: &PartialSpec, robot: usize) -> Pick {
        let c = self.pattern[robot];
        let q = world.states[robot];
        let view = world.view(robot);
        let mut chosen: Option<Action> = None;
        for default in [false, true] {
            for (j, t) in self.templates.iter().enumerate() {
                let fires = match &t.trigger {
                    Some(f) => !default && f.eval(&view),
                    None => default,
                };
                if !fires {
                    continue;
                }
                match self.decision(spec, c, q, j) {
                    Decision::Open => return Pick::Open(c, q, j),
                    Decision::Excluded => {}
                    Decision::Included(to) => {
                        let a = Action {
                            modification: t.modification,
                            direction: t.direction,
                            to,
                        };
                        match chosen {
                            Some(prev) if prev != a => return Pick::Violation,
                            _ => chosen = Some(a),
                        }
                    }
                }
            }
            if chosen.is_some() {
                break;
            }
        }
        Pick::Act(chosen.unwrap_or(Action::idle(q)))
    }

    /// Records the current configuration; false if it already occurred on
    /// this path.
    fn visit(&mut self, world: &Engine) -> bool {
        let digest = world.digest();
        if let Some(hits) = self.seen.get(&digest) {
            for &i in hits {
                let (cells, pos, states) = &self.path[i];
                if cells.as_slice() == world.env.cells() && *pos == world.pos && *states == world.states {
                    return false;
                }
            }
        }
        self.seen.entry(digest).or_default().push(self.path.len());
        self.path_digests.push(digest);
        self.path
            .push((world.env.cells().to_vec(), world.pos.clone(), world.states.clone()));
        true
    }

    fn truncate(&mut self, mark: usize) {
        while self.path.len() > mark {
            self.path.pop();
            let digest = self.path_digests.pop().expect("parallel stacks");
            if let Some(hits) = self.seen.get_mut(&digest) {
                hits.pop();
                if hits.is_empty() {
                    self.seen.remove(&digest);
                }
            }
        }
    }

    fn explore(&mut self, world: Engine, spec: PartialSpec) -> Result<Option<PartialSpec>, ProblemError> {
        let mark = self.path.len();
        let found = self.walk(world, spec);
        self.truncate(mark);
        found
    }

    fn walk(&mut self, mut world: Engine, spec: PartialSpec) -> Result<Option<PartialSpec>, ProblemError> {
        let robots = self.pattern.len();
        let mut actions = Vec::with_capacity(robots);
        loop {
            if self.target.holds(&world) {
                return Ok(Some(spec));
            }
            if world.t >= self.budget {
                return Ok(None);
            }
            actions.clear();
            for robot in 0..robots {
                match self.pick(&world, &spec, robot) {
                    Pick::Act(a) => actions.push(a),
                    Pick::Violation => return Ok(None),
                    Pick::Open(c, q, j) => return self.branch(world, spec, c, q, j),
                }
            }
            if world.apply(&actions, None).is_err() || world.ec > self.inst.ec_budget {
                return Ok(None);
            }
            self.max_steps = self.max_steps.max(world.t);
            if !self.visit(&world) {
                return Ok(None);
            }
        }
    }

    /// Options in order: each existing target state, one fresh state,
    /// then exclusion.
    fn branch(&mut self, world: Engine, spec: PartialSpec, c: usize, q: usize, j: usize) -> Result<Option<PartialSpec>, ProblemError> {
        let mut options: Vec<Option<usize>> = Vec::new();
        if spec.degree[c][q] < self.inst.max_out_degree {
            let n = spec.states[c];
            options.extend((0..n).map(Some));
            if n < self.inst.max_states {
                options.push(Some(n));
            }
        }
        options.push(None);
        let m = self.templates.len();
        for option in options {
            *self.nodes += 1;
            if *self.nodes > self.cap {
                return Err(ProblemError::CapExceeded {
                    size: *self.nodes as u128,
                    cap: self.cap,
                });
            }
            let mut next = spec.clone();
            match option {
                Some(to) => {
                    next.decisions[c][q * m + j] = Decision::Included(to);
                    next.degree[c][q] += 1;
                    if to == next.states[c] {
                        next.states[c] += 1;
                    }
                }
                None => next.decisions[c][q * m + j] = Decision::Excluded,
            }
            if let Some(found) = self.explore(world.clone(), next)? {
                return Ok(Some(found));
            }
        }
        Ok(None)
    }
}

fn usable_templates(inst: &ContDesLsInstance) -> Vec<UsableTemplate> {
    let legend = inst.env.legend();
    inst.library
        .iter()
        .enumerate()
        .filter(|(_, t)| t.reach() <= inst.radius)
        .filter_map(|(index, t)| {
            let modification = match &t.modification {
                crate::controller::Modification::Star => None,
                crate::controller::Modification::Set { ty, dx, dy } => {
                    let id = legend.lookup(ty).filter(|id| !legend.entry(*id).obstacle)?;
                    Some((id, *dx, *dy))
                }
            };
            let trigger = match &t.trigger {
                Trigger::Star => None,
                Trigger::Formula(f) => Some(CompiledFormula::compile(f, legend)),
            };
            Some(UsableTemplate {
                index,
                trigger,
                modification,
                direction: t.direction,
            })
        })
        .collect()
}

fn controllers_from_spec(inst: &ContDesLsInstance, templates: &[UsableTemplate], spec: &PartialSpec) -> Result<Vec<Controller>, ProblemError> {
    let m = templates.len();
    (0..spec.states.len())
        .map(|c| {
            let mut transitions = Vec::new();
            for q in 0..spec.states[c] {
                for (j, t) in templates.iter().enumerate() {
                    if let Decision::Included(to) = spec.decisions[c][q * m + j] {
                        transitions.push(inst.library[t.index].instantiate(q, to));
                    }
                }
            }
            Controller::with_canonical_states(spec.states[c], inst.radius, transitions)
                .map_err(|e| ProblemError::Sim(SimError::Controller(e)))
        })
        .collect()
}

fn check_cont_instance(inst: &ContDesLsInstance) -> Result<(), ProblemError> {
    if inst.max_states == 0 || inst.max_out_degree == 0 || inst.max_types == 0 || inst.team_size == 0 {
        return Err(ProblemError::Invalid("|T|, |Q|, d and h must all be at least 1".into()));
    }
    if inst.placement.len() != inst.team_size {
        return Err(ProblemError::Invalid(format!(
            "{} start positions for a team of {}",
            inst.placement.len(),
            inst.team_size
        )));
    }
    Ok(())
}

/// Searches controller sets built from the template library. Each
/// controller has states `s0..` (initial `s0`, numbered by first use) and
/// at most `d` transitions per state; each of the at most `h` controllers
/// runs on at least one robot.
pub fn design_controllers_ls(inst: &ContDesLsInstance, opts: &SearchOptions) -> Result<DesignReport, ProblemError> {
    check_cont_instance(inst)?;
    let budget = inst.step_budget()?;
    let templates = usable_templates(inst);
    let m = templates.len();
    let mut nodes = 0u64;
    let mut stats = SearchStats {
        max_budget: budget,
        ..Default::default()
    };
    let c0 = Configuration {
        env: inst.env.clone(),
        positions: inst.placement.clone(),
        states: vec![0; inst.team_size],
        t: 0,
        ec: 0,
    };
    let probe = Team::homogeneous(Controller::with_canonical_states(1, inst.radius, Vec::new()).map_err(SimError::from)?, inst.team_size)?;
    c0.validate(&probe)?;
    let canonical = |_: usize, q: &str| q.strip_prefix('s').and_then(|n| n.parse::<usize>().ok()).filter(|&n| n < inst.max_states && q == format!("s{n}"));
    for pattern in slot_patterns(inst.team_size, inst.max_types, opts.exact_types) {
        let k = pattern.iter().max().map_or(0, |&x| x + 1);
        let target = CompiledTarget::with_states(&inst.task, &c0, inst.team_size, canonical)?;
        let mut search = LazySearch {
            inst,
            templates: &templates,
            pattern: &pattern,
            target,
            budget,
            nodes: &mut nodes,
            cap: opts.cap,
            path: Vec::new(),
            seen: HashMap::new(),
            path_digests: Vec::new(),
            max_steps: 0,
        };
        let spec = PartialSpec {
            states: vec![1; k],
            decisions: vec![vec![Decision::Open; inst.max_states * m]; k],
            degree: vec![vec![0; inst.max_states]; k],
        };
        let world = Engine::bare(&c0);
        search.visit(&world);
        let found = search.explore(world, spec)?;
        stats.max_steps = stats.max_steps.max(search.max_steps);
        stats.candidates = *search.nodes;
        if let Some(spec) = found {
            let controllers = controllers_from_spec(inst, &templates, &spec)?;
            let team = Team::new(controllers, pattern.clone())?;
            let c0 = Configuration::initial(inst.env.clone(), &team, inst.placement.clone())?;
            let run = sim::run(&c0, &team, &inst.task, &RunOptions::new(budget, inst.ec_budget))?;
            if !run.outcome.is_success() {
                return Err(ProblemError::SelfCheck(run.outcome.to_string()));
            }
            return Ok(DesignReport {
                outcome: DesignOutcome::Found(Box::new(Design {
                    team,
                    assignment: pattern,
                    placement: inst.placement.clone(),
                    step_budget: budget,
                    run,
                })),
                stats,
            });
        }
    }
    stats.candidates = nodes;
    Ok(DesignReport {
        outcome: DesignOutcome::Bot,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Selector;

    fn corridor(w: u32) -> Environment {
        Environment::parse(&format!("legend . floor\n\n{}\n", ".".repeat(w as usize))).unwrap()
    }

    fn east_task(w: u32) -> TargetConfiguration {
        TargetConfiguration {
            positions: vec![(Selector::Any, Position::new(w, 1))],
            ..Default::default()
        }
    }

    fn ctrl(text: &str) -> Controller {
        Controller::parse(text).unwrap()
    }

    fn team_instance(library: Vec<Controller>) -> TeamDesLsInstance {
        TeamDesLsInstance {
            env: corridor(5),
            team_size: 1,
            library,
            region: vec![Position::new(1, 1)],
            max_types: 1,
            ec_budget: 0,
            task: east_task(5),
            c1: 10,
            c2: 3,
        }
    }

    #[test]
    fn homogeneous_east_walker() {
        let walker = ctrl("radius 0\ninitial s0\ns0: * / * / goEast -> s0\n");
        let report = design_team_homogeneous(&team_instance(vec![walker.clone()])).unwrap();
        let design = report.outcome.design().unwrap();
        assert_eq!(design.team.member(0), &walker);
        assert_eq!(design.run.outcome, sim::Outcome::Success { t: 4 });
        assert_eq!(design.step_budget, sim::steps_bound(10, 3, 5, 1).unwrap());
    }

    #[test]
    fn homogeneous_stay_robot_is_bot() {
        let stay = ctrl("radius 0\ninitial s0\ns0: * / * / stay -> s0\n");
        let report = design_team_homogeneous(&team_instance(vec![stay])).unwrap();
        assert!(!report.outcome.is_found());
        assert!(report.stats.max_steps <= report.stats.max_budget);
    }

    #[test]
    fn homogeneous_requires_h_one() {
        let mut inst = team_instance(vec![]);
        inst.max_types = 2;
        assert_eq!(design_team_homogeneous(&inst).unwrap_err(), ProblemError::NotHomogeneous(2));
    }

    #[test]
    fn team_ls_cap_is_an_error() {
        let stay = ctrl("radius 0\ninitial s0\n");
        let mut inst = team_instance(vec![stay; 3]);
        inst.team_size = 2;
        inst.max_types = 2;
        inst.region = vec![Position::new(1, 1), Position::new(2, 1)];
        let opts = SearchOptions {
            cap: 3,
            ..Default::default()
        };
        assert!(matches!(design_team_ls(&inst, &opts), Err(ProblemError::CapExceeded { size: 9, cap: 3 })));
    }

    #[test]
    fn assignment_order_and_counts() {
        let all: Vec<Vec<usize>> = Assignments::new(3, 2, 1, false).collect();
        assert_eq!(all, vec![vec![0, 0], vec![1, 1], vec![2, 2]]);
        let all: Vec<Vec<usize>> = Assignments::new(3, 3, 2, false).collect();
        assert_eq!(all.len(), 3 + 3 * 6);
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(surjections(3, 2), 6);
        assert_eq!(Assignments::new(3, 3, 2, true).count(), 18);
    }

    #[test]
    fn slot_patterns_are_restricted_growth() {
        assert_eq!(slot_patterns(3, 2, false), vec![vec![0, 0, 0], vec![0, 0, 1], vec![0, 1, 0], vec![0, 1, 1]]);
        assert_eq!(slot_patterns(3, 3, false).len(), 5);
        assert_eq!(slot_patterns(3, 2, true).len(), 3);
    }

    #[test]
    fn permutations_are_lexicographic() {
        assert_eq!(permutations(3), vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]]);
    }

    fn cont_instance(library: &str) -> ContDesLsInstance {
        ContDesLsInstance {
            env: corridor(4),
            team_size: 1,
            placement: vec![Position::new(1, 1)],
            library: crate::controller::parse_templates(library).unwrap(),
            radius: 1,
            max_states: 1,
            max_out_degree: 1,
            max_types: 1,
            ec_budget: 0,
            task: east_task(4),
            c1: 10,
            c2: 3,
        }
    }

    #[test]
    fn stay_library_is_bot() {
        let report = design_controllers_ls(&cont_instance("* / * / stay\n"), &SearchOptions::default()).unwrap();
        assert!(!report.outcome.is_found());
    }

    #[test]
    fn east_library_is_found() {
        let report = design_controllers_ls(&cont_instance("* / * / stay\n* / * / goEast\n"), &SearchOptions::default()).unwrap();
        let design = report.outcome.design().unwrap();
        assert_eq!(design.run.outcome, sim::Outcome::Success { t: 3 });
        assert_eq!(design.team.member(0).transitions().len(), 1);
    }

    #[test]
    fn states_are_needed_to_count() {
        // Walk east twice, then stop: needs three states with guarded moves
        // sensing the free square ahead.
        let mut inst = cont_instance("* / * / goEast\n* / * / stay\n");
        inst.env = corridor(6);
        inst.task = TargetConfiguration {
            positions: vec![(Selector::Robot(0), Position::new(3, 1))],
            states: vec![(Selector::Robot(0), "s2".into())],
            ..Default::default()
        };
        inst.max_states = 2;
        let report = design_controllers_ls(&inst, &SearchOptions::default()).unwrap();
        assert!(!report.outcome.is_found());
        inst.max_states = 3;
        let report = design_controllers_ls(&inst, &SearchOptions::default()).unwrap();
        assert!(report.outcome.is_found());
    }
}
