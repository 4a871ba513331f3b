//! Synchronous lock-step execution of a robot team.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::controller::{Atom, AtomSense, CompiledController, CompiledTransition, Controller, ControllerError, Direction};
use crate::grid::{Environment, Position, TypeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("team has no robots")]
    EmptyTeam,
    #[error("team has {team} robots but {positions} positions were given")]
    SizeMismatch { team: usize, positions: usize },
    #[error("robot {robot} is placed at {position}, which is not a free square")]
    BadPlacement { robot: usize, position: Position },
    #[error("robots {first} and {second} share square {position}")]
    SharedSquare {
        first: usize,
        second: usize,
        position: Position,
    },
    #[error("robot {robot} has state {state}, beyond its controller")]
    BadState { robot: usize, state: usize },
    #[error("member {member} refers to controller {controller}, which does not exist")]
    BadMember { member: usize, controller: usize },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error("target requirement names square {0}, which is outside the environment")]
    TargetOutOfBounds(Position),
    #[error("target names robot {0}, which is not in the team")]
    TargetRobot(usize),
    #[error("steps bound needs c1 >= 1 and c2 >= 1")]
    BoundArguments,
    #[error("steps bound {c1}*({env_size}+{max_q})^{c2} overflows 64 bits")]
    BoundOverflow {
        c1: u64,
        c2: u32,
        env_size: u64,
        max_q: u64,
    },
}

/// An ordered team. Members index into a list of controllers, so several
/// robots can share one controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Team {
    controllers: Vec<Controller>,
    members: Vec<usize>,
}

impl Team {
    pub fn new(controllers: Vec<Controller>, members: Vec<usize>) -> Result<Team, SimError> {
        if members.is_empty() {
            return Err(SimError::EmptyTeam);
        }
        for (member, &controller) in members.iter().enumerate() {
            if controller >= controllers.len() {
                return Err(SimError::BadMember { member, controller });
            }
        }
        Ok(Team { controllers, members })
    }

    /// `size` robots all running `c`.
    pub fn homogeneous(c: Controller, size: usize) -> Result<Team, SimError> {
        Team::new(vec![c], vec![0; size])
    }

    /// One controller per robot, sharing equal controllers.
    pub fn from_robots(robots: Vec<Controller>) -> Result<Team, SimError> {
        let mut controllers: Vec<Controller> = Vec::new();
        let mut members = Vec::with_capacity(robots.len());
        for c in robots {
            let idx = match controllers.iter().position(|d| *d == c) {
                Some(i) => i,
                None => {
                    controllers.push(c);
                    controllers.len() - 1
                }
            };
            members.push(idx);
        }
        Team::new(controllers, members)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn controllers(&self) -> &[Controller] {
        &self.controllers
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn member(&self, i: usize) -> &Controller {
        &self.controllers[self.members[i]]
    }

    /// Number of distinct controllers actually used.
    pub fn h(&self) -> usize {
        let mut used: Vec<&Controller> = Vec::new();
        for &m in &self.members {
            let c = &self.controllers[m];
            if !used.contains(&c) {
                used.push(c);
            }
        }
        used.len()
    }

    /// Largest state count over the controllers in use.
    pub fn max_states(&self) -> usize {
        self.members
            .iter()
            .map(|&m| self.controllers[m].num_states())
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub env: Environment,
    pub positions: Vec<Position>,
    pub states: Vec<usize>,
    pub t: u64,
    pub ec: u64,
}

impl Configuration {
    /// Every robot in its controller's initial state at `t = 0`.
    pub fn initial(env: Environment, team: &Team, positions: Vec<Position>) -> Result<Configuration, SimError> {
        let states = (0..team.len()).map(|i| team.member(i).initial()).collect();
        let c = Configuration {
            env,
            positions,
            states,
            t: 0,
            ec: 0,
        };
        c.validate(team)?;
        Ok(c)
    }

    pub fn validate(&self, team: &Team) -> Result<(), SimError> {
        if team.is_empty() {
            return Err(SimError::EmptyTeam);
        }
        if self.positions.len() != team.len() || self.states.len() != team.len() {
            return Err(SimError::SizeMismatch {
                team: team.len(),
                positions: self.positions.len(),
            });
        }
        let mut seen: HashMap<Position, usize> = HashMap::new();
        for (robot, &p) in self.positions.iter().enumerate() {
            if !self.env.is_free(p) {
                return Err(SimError::BadPlacement { robot, position: p });
            }
            if let Some(first) = seen.insert(p, robot) {
                return Err(SimError::SharedSquare {
                    first,
                    second: robot,
                    position: p,
                });
            }
            if self.states[robot] >= team.member(robot).num_states() {
                return Err(SimError::BadState {
                    robot,
                    state: self.states[robot],
                });
            }
        }
        Ok(())
    }

    pub fn state_name<'a>(&self, team: &'a Team, robot: usize) -> &'a str {
        &team.member(robot).states()[self.states[robot]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selector {
    Robot(usize),
    Any,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Robot(i) => write!(f, "{i}"),
            Selector::Any => f.write_str("any"),
        }
    }
}

/// A conjunction of square, position and state requirements.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TargetConfiguration {
    pub squares: Vec<(Position, String)>,
    pub positions: Vec<(Selector, Position)>,
    pub states: Vec<(Selector, String)>,
}

impl TargetConfiguration {
    pub fn is_empty(&self) -> bool {
        self.squares.is_empty() && self.positions.is_empty() && self.states.is_empty()
    }
}

pub fn check_target(c: &Configuration, team: &Team, tgt: &TargetConfiguration) -> bool {
    for (p, ty) in &tgt.squares {
        if c.env.square_at(*p).map_or(true, |s| s != ty) {
            return false;
        }
    }
    let at = |robot: usize, p: &Position| c.positions.get(robot) == Some(p);
    let in_state = |robot: usize, q: &String| robot < c.states.len() && c.state_name(team, robot) == q;
    requirements_hold(&tgt.positions, c.positions.len(), at) && requirements_hold(&tgt.states, c.states.len(), in_state)
}

/// Specific selectors are checked directly; `Any` selectors need an
/// injective assignment to robots, found by augmenting paths.
fn requirements_hold<T>(reqs: &[(Selector, T)], robots: usize, holds: impl Fn(usize, &T) -> bool) -> bool {
    let mut any: Vec<&T> = Vec::new();
    for (sel, v) in reqs {
        match sel {
            Selector::Robot(i) => {
                if !holds(*i, v) {
                    return false;
                }
            }
            Selector::Any => any.push(v),
        }
    }
    if any.is_empty() {
        return true;
    }
    if any.len() > robots {
        return false;
    }
    let adj: Vec<Vec<usize>> = any
        .iter()
        .map(|v| (0..robots).filter(|&r| holds(r, v)).collect())
        .collect();
    max_matching(&adj, robots) == any.len()
}

/// Size of a maximum matching between left vertices and `0..right`.
pub(crate) fn max_matching(adj: &[Vec<usize>], right: usize) -> usize {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right];
    let mut size = 0;
    for u in 0..adj.len() {
        let mut seen = vec![false; right];
        if augment(u, adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureReason {
    /// Co-enabled transitions disagree on modification, direction or next state.
    DeterminismViolation { robot: usize, t: u64 },
    Collision { square: Position, t: u64 },
    /// A move or modification aimed at an obstacle or off the grid.
    ObstacleEntry { robot: usize, t: u64 },
    ModificationConflict { square: Position, t: u64 },
    EcBudgetExceeded { t: u64 },
}

impl FailureReason {
    /// Stable short name used by the command line and bundles.
    pub fn code(&self) -> &'static str {
        match self {
            FailureReason::DeterminismViolation { .. } => "determinism",
            FailureReason::Collision { .. } => "collision",
            FailureReason::ObstacleEntry { .. } => "obstacle",
            FailureReason::ModificationConflict { .. } => "modification-conflict",
            FailureReason::EcBudgetExceeded { .. } => "ec-budget",
        }
    }

    pub fn t(&self) -> u64 {
        match *self {
            FailureReason::DeterminismViolation { t, .. }
            | FailureReason::Collision { t, .. }
            | FailureReason::ObstacleEntry { t, .. }
            | FailureReason::ModificationConflict { t, .. }
            | FailureReason::EcBudgetExceeded { t } => t,
        }
    }
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::DeterminismViolation { robot, t } => write!(f, "determinism robot={robot} t={t}"),
            FailureReason::Collision { square, t } => write!(f, "collision square={square} t={t}"),
            FailureReason::ObstacleEntry { robot, t } => write!(f, "obstacle robot={robot} t={t}"),
            FailureReason::ModificationConflict { square, t } => {
                write!(f, "modification-conflict square={square} t={t}")
            }
            FailureReason::EcBudgetExceeded { t } => write!(f, "ec-budget t={t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success { t: u64 },
    Failure(FailureReason),
    StepBudgetExhausted,
    /// The configuration at `t` equals the one at `first`.
    CycleDetected { t: u64, first: u64 },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success { .. })
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Success { t } => write!(f, "success t={t}"),
            Outcome::Failure(r) => write!(f, "failure {r}"),
            Outcome::StepBudgetExhausted => f.write_str("budget-exhausted"),
            Outcome::CycleDetected { t, first } => write!(f, "cycle t={t} first={first}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub t: u64,
    pub positions: Vec<Position>,
    pub states: Vec<String>,
    pub mods: Vec<(Position, String)>,
    pub ec: u64,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} pos=", self.t)?;
        join(f, self.positions.iter().enumerate().map(|(i, p)| format!("{i}:{p}")))?;
        f.write_str(" state=")?;
        join(f, self.states.iter().enumerate().map(|(i, q)| format!("{i}:{q}")))?;
        f.write_str(" mods=")?;
        join(f, self.mods.iter().map(|(p, ty)| format!("{p}:{ty}")))?;
        write!(f, " ec={}", self.ec)
    }
}

fn join(f: &mut fmt::Formatter<'_>, items: impl Iterator<Item = String>) -> fmt::Result {
    for (k, item) in items.enumerate() {
        if k > 0 {
            f.write_str(" ")?;
        }
        f.write_str(&item)?;
    }
    Ok(())
}

pub fn render_trace(trace: &[TraceRecord]) -> String {
    trace.iter().map(|r| format!("{r}\n")).collect()
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: Outcome,
    pub trace: Vec<TraceRecord>,
    pub final_config: Configuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub step_budget: u64,
    pub ec_budget: u64,
    pub detect_cycles: bool,
    pub record_trace: bool,
}

impl RunOptions {
    pub fn new(step_budget: u64, ec_budget: u64) -> RunOptions {
        RunOptions {
            step_budget,
            ec_budget,
            detect_cycles: true,
            record_trace: true,
        }
    }
}

/// `c1 * (env_size + max_q)^c2`.
pub fn steps_bound(c1: u64, c2: u32, env_size: u64, max_q: u64) -> Result<u64, SimError> {
    if c1 == 0 || c2 == 0 {
        return Err(SimError::BoundArguments);
    }
    env_size
        .checked_add(max_q)
        .and_then(|b| b.checked_pow(c2))
        .and_then(|p| p.checked_mul(c1))
        .ok_or(SimError::BoundOverflow { c1, c2, env_size, max_q })
}

/// Advances `c` by one lock-step. The outer error reports a malformed
/// setup; the inner one a failed execution.
pub fn step(c: &Configuration, team: &Team) -> Result<Result<Configuration, FailureReason>, SimError> {
    let mut engine = Engine::new(c, team)?;
    Ok(match engine.step(None) {
        Ok(()) => Ok(engine.snapshot()),
        Err(r) => Err(r),
    })
}

pub fn run(c0: &Configuration, team: &Team, tgt: &TargetConfiguration, opts: &RunOptions) -> Result<RunResult, SimError> {
    let target = CompiledTarget::new(tgt, c0, team)?;
    drive(c0, team, Some(&target), opts)
}

/// Runs without a task: stops only on failure, a detected cycle or the
/// step budget.
pub fn simulate(c0: &Configuration, team: &Team, opts: &RunOptions) -> Result<RunResult, SimError> {
    drive(c0, team, None, opts)
}

fn drive(c0: &Configuration, team: &Team, target: Option<&CompiledTarget>, opts: &RunOptions) -> Result<RunResult, SimError> {
    let mut engine = Engine::new(c0, team)?;
    let holds = |e: &Engine| target.is_some_and(|t| t.holds(e));
    let mut trace = Vec::new();
    let mut mods = Vec::new();
    let finish = |engine: &Engine, outcome, trace| {
        Ok(RunResult {
            outcome,
            trace,
            final_config: engine.snapshot(),
        })
    };
    if holds(&engine) {
        return finish(&engine, Outcome::Success { t: engine.t }, trace);
    }
    let mut seen: HashMap<u64, Vec<u64>> = HashMap::new();
    if opts.detect_cycles {
        seen.insert(engine.digest(), vec![engine.t]);
    }
    for _ in 0..opts.step_budget {
        let log = opts.record_trace.then_some(&mut mods);
        if let Err(reason) = engine.step(log) {
            return finish(&engine, Outcome::Failure(reason), trace);
        }
        if opts.record_trace {
            trace.push(engine.record(team, std::mem::take(&mut mods)));
        }
        if engine.ec > opts.ec_budget {
            let outcome = Outcome::Failure(FailureReason::EcBudgetExceeded { t: engine.t });
            return finish(&engine, outcome, trace);
        }
        if holds(&engine) {
            return finish(&engine, Outcome::Success { t: engine.t }, trace);
        }
        if opts.detect_cycles {
            let digest = engine.digest();
            let earlier = seen.entry(digest).or_default();
            for &first in earlier.iter() {
                if engine.same_as_replay(c0, team, first)? {
                    let outcome = Outcome::CycleDetected { t: engine.t, first };
                    return finish(&engine, outcome, trace);
                }
            }
            earlier.push(engine.t);
        }
    }
    finish(&engine, Outcome::StepBudgetExhausted, trace)
}

pub(crate) struct CompiledTarget {
    squares: Vec<(usize, Option<TypeId>)>,
    positions: Vec<(Selector, usize)>,
    /// Per requirement, the matching state index in each robot's controller.
    states: Vec<(Selector, Vec<Option<usize>>)>,
}

impl CompiledTarget {
    pub fn new(tgt: &TargetConfiguration, c: &Configuration, team: &Team) -> Result<CompiledTarget, SimError> {
        CompiledTarget::with_states(tgt, c, team.len(), |robot, q| team.member(robot).state_index(q))
    }

    /// `state_index(robot, name)` resolves a state name for one robot.
    pub fn with_states(
        tgt: &TargetConfiguration,
        c: &Configuration,
        robots: usize,
        state_index: impl Fn(usize, &str) -> Option<usize>,
    ) -> Result<CompiledTarget, SimError> {
        let env = &c.env;
        let index = |p: Position| env.index(p).ok_or(SimError::TargetOutOfBounds(p));
        let robot = |sel: &Selector| match sel {
            Selector::Robot(i) if *i >= robots => Err(SimError::TargetRobot(*i)),
            _ => Ok(()),
        };
        let mut squares = Vec::new();
        for (p, ty) in &tgt.squares {
            squares.push((index(*p)?, env.legend().lookup(ty)));
        }
        let mut positions = Vec::new();
        for (sel, p) in &tgt.positions {
            robot(sel)?;
            positions.push((sel.clone(), index(*p)?));
        }
        let mut states = Vec::new();
        for (sel, q) in &tgt.states {
            robot(sel)?;
            let per_robot = (0..robots).map(|i| state_index(i, q)).collect();
            states.push((sel.clone(), per_robot));
        }
        Ok(CompiledTarget {
            squares,
            positions,
            states,
        })
    }

    pub fn holds(&self, e: &Engine) -> bool {
        let cells = e.env.cells();
        if !self
            .squares
            .iter()
            .all(|&(idx, ty)| ty.is_some_and(|ty| cells[idx] == ty))
        {
            return false;
        }
        let robots = e.pos.len();
        let at = |r: usize, idx: &usize| e.pos[r] == *idx;
        let in_state = |r: usize, q: &Vec<Option<usize>>| q[r] == Some(e.states[r]);
        requirements_hold(&self.positions, robots, at) && requirements_hold(&self.states, robots, in_state)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Action {
    pub modification: Option<(TypeId, i32, i32)>,
    pub direction: Direction,
    pub to: usize,
}

impl Action {
    pub fn idle(state: usize) -> Action {
        Action {
            modification: None,
            direction: Direction::Stay,
            to: state,
        }
    }

    pub fn of(t: &CompiledTransition) -> Action {
        Action {
            modification: t.modification,
            direction: t.direction,
            to: t.to,
        }
    }
}

fn agree(chosen: &mut Option<Action>, t: &CompiledTransition) -> bool {
    let a = Action::of(t);
    match chosen {
        Some(c) => *c == a,
        None => {
            *chosen = Some(a);
            true
        }
    }
}

const NO_ROBOT: u32 = u32::MAX;

pub(crate) struct View<'a> {
    cells: &'a [TypeId],
    occ: &'a [u32],
    width: i64,
    height: i64,
    col: i64,
    row: i64,
}

impl View<'_> {
    fn index(&self, dx: i32, dy: i32) -> Option<usize> {
        let c = self.col + dx as i64;
        let r = self.row + dy as i64;
        (c >= 1 && r >= 1 && c <= self.width && r <= self.height).then(|| ((r - 1) * self.width + (c - 1)) as usize)
    }
}

impl AtomSense for View<'_> {
    fn atom(&self, atom: Atom, dx: i32, dy: i32) -> bool {
        let Some(idx) = self.index(dx, dy) else { return false };
        if dx == 0 && dy == 0 {
            return matches!(atom, Atom::Type(t) if self.cells[idx] == t);
        }
        match atom {
            Atom::Robot => self.occ[idx] != NO_ROBOT,
            Atom::Type(t) => self.occ[idx] == NO_ROBOT && self.cells[idx] == t,
            Atom::Never => false,
        }
    }
}

/// Mutable simulation state over dense indices.
#[derive(Clone)]
pub(crate) struct Engine {
    pub env: Environment,
    obstacle: Vec<bool>,
    compiled: Vec<CompiledController>,
    members: Vec<usize>,
    pub pos: Vec<usize>,
    pub states: Vec<usize>,
    occ: Vec<u32>,
    pub t: u64,
    pub ec: u64,
    env_hash: u64,
    // Per-step scratch space.
    actions: Vec<Action>,
    dest: Vec<Option<usize>>,
    claim: Vec<u64>,
    mod_claim: Vec<u64>,
    mod_owner: Vec<u32>,
    epoch: u64,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn cell_hash(idx: usize, ty: TypeId) -> u64 {
    mix(((idx as u64) << 16) | ty.0 as u64)
}

impl Engine {
    fn new(c: &Configuration, team: &Team) -> Result<Engine, SimError> {
        c.validate(team)?;
        let legend = c.env.legend();
        let compiled = team
            .controllers()
            .iter()
            .map(|ctrl| ctrl.compile(legend))
            .collect::<Result<Vec<_>, _>>()?;
        let mut engine = Engine::bare(c);
        engine.compiled = compiled;
        engine.members = team.members().to_vec();
        Ok(engine)
    }

    /// An engine without controllers, driven through [`Engine::apply`].
    /// `c` must already be valid.
    pub fn bare(c: &Configuration) -> Engine {
        let obstacle = c.env.legend().iter().map(|(_, e)| e.obstacle).collect();
        let mut occ = vec![NO_ROBOT; c.env.size()];
        let pos: Vec<usize> = c
            .positions
            .iter()
            .map(|p| c.env.index(*p).expect("validated"))
            .collect();
        for (i, &p) in pos.iter().enumerate() {
            occ[p] = i as u32;
        }
        let env_hash = c
            .env
            .cells()
            .iter()
            .enumerate()
            .fold(0, |h, (i, &ty)| h ^ cell_hash(i, ty));
        let n = c.positions.len();
        let size = c.env.size();
        Engine {
            env: c.env.clone(),
            obstacle,
            compiled: Vec::new(),
            members: Vec::new(),
            pos,
            states: c.states.clone(),
            occ,
            t: c.t,
            ec: c.ec,
            env_hash,
            actions: Vec::with_capacity(n),
            dest: Vec::with_capacity(n),
            claim: vec![0; size],
            mod_claim: vec![0; size],
            mod_owner: vec![0; size],
            epoch: 0,
        }
    }

    pub fn snapshot(&self) -> Configuration {
        Configuration {
            env: self.env.clone(),
            positions: self.pos.iter().map(|&i| self.env.position_of(i)).collect(),
            states: self.states.clone(),
            t: self.t,
            ec: self.ec,
        }
    }

    fn record(&self, team: &Team, mods: Vec<(Position, String)>) -> TraceRecord {
        TraceRecord {
            t: self.t,
            positions: self.pos.iter().map(|&i| self.env.position_of(i)).collect(),
            states: (0..self.pos.len())
                .map(|r| team.member(r).states()[self.states[r]].clone())
                .collect(),
            mods,
            ec: self.ec,
        }
    }

    /// Digest of environment, positions and states; `t` and `ec` excluded.
    pub fn digest(&self) -> u64 {
        let mut h = self.env_hash;
        for (i, (&p, &q)) in self.pos.iter().zip(&self.states).enumerate() {
            h ^= mix((i as u64) << 48 ^ (p as u64) << 16 ^ q as u64 ^ 0x5bd1_e995);
        }
        h
    }

    /// Replays from `c0` up to timestep `t` and compares full contents.
    fn same_as_replay(&self, c0: &Configuration, team: &Team, t: u64) -> Result<bool, SimError> {
        let mut other = Engine::new(c0, team)?;
        while other.t < t {
            if other.step(None).is_err() {
                return Ok(false);
            }
        }
        Ok(other.env.cells() == self.env.cells() && other.pos == self.pos && other.states == self.states)
    }

    pub fn view(&self, robot: usize) -> View<'_> {
        let p = self.pos[robot];
        let w = self.env.width() as usize;
        View {
            cells: self.env.cells(),
            occ: &self.occ,
            width: w as i64,
            height: self.env.height() as i64,
            col: (p % w) as i64 + 1,
            row: (p / w) as i64 + 1,
        }
    }

    fn select(&self, robot: usize) -> Result<Option<Action>, FailureReason> {
        let cc = &self.compiled[self.members[robot]];
        let view = self.view(robot);
        let outgoing = &cc.by_state[self.states[robot]];
        let mut chosen: Option<Action> = None;
        let violation = FailureReason::DeterminismViolation { robot, t: self.t };
        for t in outgoing {
            if let Some(f) = &t.trigger {
                if f.eval(&view) && !agree(&mut chosen, t) {
                    return Err(violation);
                }
            }
        }
        if chosen.is_none() {
            for t in outgoing.iter().filter(|t| t.trigger.is_none()) {
                if !agree(&mut chosen, t) {
                    return Err(violation);
                }
            }
        }
        Ok(chosen)
    }

    fn offset(&self, from: usize, dx: i32, dy: i32) -> Option<usize> {
        let w = self.env.width() as i64;
        let c = (from as i64 % w) + 1 + dx as i64;
        let r = (from as i64 / w) + 1 + dy as i64;
        (c >= 1 && r >= 1 && c <= w && r <= self.env.height() as i64).then(|| ((r - 1) * w + (c - 1)) as usize)
    }

    fn is_obstacle(&self, idx: usize) -> bool {
        self.obstacle[self.env.cells()[idx].0 as usize]
    }

    fn step(&mut self, log: Option<&mut Vec<(Position, String)>>) -> Result<(), FailureReason> {
        let mut actions = std::mem::take(&mut self.actions);
        actions.clear();
        for robot in 0..self.pos.len() {
            match self.select(robot) {
                Ok(a) => actions.push(a.unwrap_or(Action::idle(self.states[robot]))),
                Err(r) => {
                    self.actions = actions;
                    return Err(r);
                }
            }
        }
        let result = self.apply(&actions, log);
        self.actions = actions;
        result
    }

    /// Validates and executes one joint action, one entry per robot.
    pub fn apply(&mut self, actions: &[Action], log: Option<&mut Vec<(Position, String)>>) -> Result<(), FailureReason> {
        let n = self.pos.len();
        let t = self.t;
        self.epoch += 1;
        let epoch = self.epoch;
        let mut dest = std::mem::take(&mut self.dest);
        dest.clear();
        for (robot, action) in actions.iter().enumerate().take(n) {
            let (dx, dy) = action.direction.delta();
            let d = self.offset(self.pos[robot], dx, dy);
            if let Some(idx) = d {
                if self.claim[idx] == epoch {
                    self.dest = dest;
                    return Err(FailureReason::Collision {
                        square: self.env.position_of(idx),
                        t,
                    });
                }
                self.claim[idx] = epoch;
            }
            dest.push(d);
        }
        let result = self.validate_and_apply(actions, &dest, log, epoch, t);
        self.dest = dest;
        result
    }

    fn validate_and_apply(
        &mut self,
        actions: &[Action],
        dest: &[Option<usize>],
        log: Option<&mut Vec<(Position, String)>>,
        epoch: u64,
        t: u64,
    ) -> Result<(), FailureReason> {
        let n = actions.len();
        for (robot, d) in dest.iter().enumerate().take(n) {
            match *d {
                Some(idx) if !self.is_obstacle(idx) => {}
                _ => return Err(FailureReason::ObstacleEntry { robot, t }),
            }
        }
        for (robot, a) in actions.iter().enumerate() {
            if let Some((_, dx, dy)) = a.modification {
                match self.offset(self.pos[robot], dx, dy) {
                    Some(idx) if !self.is_obstacle(idx) => {}
                    _ => return Err(FailureReason::ObstacleEntry { robot, t }),
                }
            }
        }
        for (robot, a) in actions.iter().enumerate() {
            if let Some((_, dx, dy)) = a.modification {
                let idx = self.offset(self.pos[robot], dx, dy).expect("checked above");
                if self.mod_claim[idx] == epoch {
                    return Err(FailureReason::ModificationConflict {
                        square: self.env.position_of(idx),
                        t,
                    });
                }
                self.mod_claim[idx] = epoch;
                self.mod_owner[idx] = robot as u32;
            }
        }
        for (robot, a) in actions.iter().enumerate() {
            if a.direction == Direction::Stay {
                continue;
            }
            let idx = dest[robot].expect("checked above");
            if self.mod_claim[idx] == epoch && self.mod_owner[idx] != robot as u32 {
                return Err(FailureReason::ModificationConflict {
                    square: self.env.position_of(idx),
                    t,
                });
            }
        }

        let mut log = log;
        for (robot, a) in actions.iter().enumerate() {
            if let Some((ty, dx, dy)) = a.modification {
                let idx = self.offset(self.pos[robot], dx, dy).expect("checked above");
                let old = self.env.cells()[idx];
                self.env_hash ^= cell_hash(idx, old) ^ cell_hash(idx, ty);
                self.env.cells_mut()[idx] = ty;
                self.ec += 1;
                if let Some(log) = log.as_deref_mut() {
                    log.push((self.env.position_of(idx), self.env.legend().name(ty).to_string()));
                }
            }
        }
        for (robot, a) in actions.iter().enumerate() {
            if a.direction != Direction::Stay {
                self.occ[self.pos[robot]] = NO_ROBOT;
            }
        }
        for robot in 0..n {
            let a = actions[robot];
            if a.direction != Direction::Stay {
                let idx = dest[robot].expect("checked above");
                debug_assert_eq!(self.occ[idx], NO_ROBOT);
                self.occ[idx] = robot as u32;
                self.pos[robot] = idx;
            }
            self.states[robot] = a.to;
        }
        self.t += 1;
        Ok(())
    }
}
