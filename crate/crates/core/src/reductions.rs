//! Generators that turn 3SAT and Dominating Set instances into robot-team
//! problem instances.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::bundle::{sha256_hex, Instance};
use crate::controller::{Controller, ControllerError, Direction, Formula, Modification, TransitionTemplate, Trigger};
use crate::grid::{Environment, GridError, Legend, Position, ROBOT_TYPE};
use crate::problems::{ContDesLsInstance, TeamDesLsInstance, TeamEnvVerInstance};
use crate::sim::{Selector, SimError, TargetConfiguration, Team};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReductionError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("clause {clause} has {len} literals; 3SAT needs exactly 3")]
    NotThreeCnf { clause: usize, len: usize },
    #[error("formula has no variables")]
    NoVariables,
    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("graph has no vertices")]
    EmptyGraph,
    #[error("state ladder needs maxQ >= 2, got {0}")]
    LadderStates(usize),
    #[error("state ladder needs a single-robot instance starting at (1,1)")]
    LadderShape,
    #[error("holding area needs at least one state per robot")]
    HoldingStates,
    #[error("type `{0}` already exists in the environment")]
    TypeClash(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A CNF formula over variables `1..=num_vars`; literals are signed indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cnf {
    pub num_vars: usize,
    pub clauses: Vec<Vec<i32>>,
}

impl Cnf {
    pub fn new(num_vars: usize, clauses: Vec<Vec<i32>>) -> Cnf {
        Cnf { num_vars, clauses }
    }

    pub fn check_3cnf(&self) -> Result<(), ReductionError> {
        if self.num_vars == 0 {
            return Err(ReductionError::NoVariables);
        }
        for (i, c) in self.clauses.iter().enumerate() {
            if c.len() != 3 {
                return Err(ReductionError::NotThreeCnf { clause: i + 1, len: c.len() });
            }
        }
        Ok(())
    }

    /// Truth value under `assignment[v - 1]`.
    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.clauses
            .iter()
            .all(|c| c.iter().any(|&l| assignment[l.unsigned_abs() as usize - 1] == (l > 0)))
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for c in &self.clauses {
            for l in c {
                let _ = write!(out, "{l} ");
            }
            out.push_str("0\n");
        }
        out
    }
}

pub fn parse_dimacs_cnf(text: &str) -> Result<Cnf, ReductionError> {
    let err = |line: usize, message: String| ReductionError::Parse { line, message };
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last = line;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('c') || l.starts_with('%') {
            continue;
        }
        if l.starts_with('p') {
            let f: Vec<&str> = l.split_whitespace().collect();
            match f.as_slice() {
                ["p", "cnf", v, c] => {
                    let v = v.parse().map_err(|_| err(line, format!("bad variable count `{v}`")))?;
                    let c = c.parse().map_err(|_| err(line, format!("bad clause count `{c}`")))?;
                    header = Some((v, c));
                }
                _ => return Err(err(line, "expected `p cnf <vars> <clauses>`".into())),
            }
            continue;
        }
        let (vars, _) = header.ok_or_else(|| err(line, "clause before `p cnf` header".into()))?;
        for tok in l.split_whitespace() {
            let lit: i32 = tok.parse().map_err(|_| err(line, format!("bad literal `{tok}`")))?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else if lit.unsigned_abs() as usize > vars {
                return Err(err(line, format!("literal {lit} exceeds {vars} variables")));
            } else {
                current.push(lit);
            }
        }
    }
    let (vars, count) = header.ok_or_else(|| err(last.max(1), "missing `p cnf` header".into()))?;
    if !current.is_empty() {
        return Err(err(last, "last clause is not terminated by 0".into()));
    }
    if clauses.len() != count {
        return Err(err(last.max(1), format!("header declares {count} clauses, found {}", clauses.len())));
    }
    Ok(Cnf::new(vars, clauses))
}

/// Undirected simple graph on vertices `1..=num_vertices`; edges stored
/// as `(u, v)` with `u < v`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    pub num_vertices: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    pub fn new(num_vertices: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Graph {
        Graph {
            num_vertices,
            edges: edges.into_iter().map(|(u, v)| (u.min(v), u.max(v))).collect(),
        }
    }

    pub fn path(n: usize) -> Graph {
        Graph::new(n, (1..n).map(|i| (i, i + 1)))
    }

    pub fn complete(n: usize) -> Graph {
        Graph::new(n, (1..=n).flat_map(|u| (u + 1..=n).map(move |v| (u, v))))
    }

    pub fn edgeless(n: usize) -> Graph {
        Graph::new(n, [])
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = format!("p edge {} {}\n", self.num_vertices, self.edges.len());
        for (u, v) in &self.edges {
            let _ = writeln!(out, "e {u} {v}");
        }
        out
    }
}

pub fn parse_graph(text: &str) -> Result<Graph, ReductionError> {
    let err = |line: usize, message: String| ReductionError::Parse { line, message };
    let mut header: Option<(usize, usize)> = None;
    let mut edges = Vec::new();
    let mut last = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        last = line;
        let f: Vec<&str> = raw.split_whitespace().collect();
        match f.as_slice() {
            [] => {}
            ["c", ..] => {}
            ["p", "edge", n, m] => {
                let n = n.parse().map_err(|_| err(line, format!("bad vertex count `{n}`")))?;
                let m = m.parse().map_err(|_| err(line, format!("bad edge count `{m}`")))?;
                header = Some((n, m));
            }
            ["e", u, v] => {
                let (n, _) = header.ok_or_else(|| err(line, "edge before `p edge` header".into()))?;
                let u: usize = u.parse().map_err(|_| err(line, format!("bad vertex `{u}`")))?;
                let v: usize = v.parse().map_err(|_| err(line, format!("bad vertex `{v}`")))?;
                if u == 0 || v == 0 || u > n || v > n {
                    return Err(err(line, format!("edge ({u},{v}) leaves 1..={n}")));
                }
                if u == v {
                    return Err(err(line, format!("self-loop on vertex {u}")));
                }
                edges.push((u, v));
            }
            _ => return Err(err(line, "expected `p edge n m`, `e u v` or a `c` comment".into())),
        }
    }
    let (n, m) = header.ok_or_else(|| err(last.max(1), "missing `p edge` header".into()))?;
    if edges.len() != m {
        return Err(err(last.max(1), format!("header declares {m} edges, found {}", edges.len())));
    }
    Ok(Graph::new(n, edges))
}

/// `{v}` together with every vertex adjacent to `v`.
pub fn neighborhood(g: &Graph, v: usize) -> BTreeSet<usize> {
    (1..=g.num_vertices).filter(|&u| u == v || g.adjacent(u, v)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionCertificate {
    pub construction: String,
    pub source_digest: String,
    pub instance_digest: String,
    pub params: Vec<(String, String)>,
}

impl ReductionCertificate {
    fn new(construction: &str, source: &str, instance: &Instance, params: &[(&str, String)]) -> Self {
        ReductionCertificate {
            construction: construction.to_string(),
            source_digest: sha256_hex(source.as_bytes()),
            instance_digest: instance.digest(),
            params: params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    /// Re-points the certificate at a derived instance and records the
    /// extra parameters that produced it.
    pub fn reissue(mut self, instance: &Instance, params: &[(&str, String)]) -> Self {
        self.instance_digest = instance.digest();
        for (k, v) in params {
            match self.params.iter_mut().find(|(key, _)| key == k) {
                Some(entry) => entry.1 = v.clone(),
                None => self.params.push((k.to_string(), v.clone())),
            }
        }
        self
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "construction={}\nsource={}\ninstance={}\n",
            self.construction, self.source_digest, self.instance_digest
        );
        for (k, v) in &self.params {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

const WALL: &str = "e_wall";
const FILL: &str = "e_N";
const PAD: &str = "e_pad";

fn vertex_type(v: usize) -> String {
    format!("e_v{v}")
}

fn template(trigger: Option<Formula>, direction: Direction) -> TransitionTemplate {
    TransitionTemplate::new(trigger.map_or(Trigger::Star, Trigger::Formula), Modification::Star, direction)
}

fn on(ty: &str) -> Formula {
    Formula::pred(ty, 0, 0)
}

/// Vertex-neighbourhood grid: column `j` holds the types of `N_C(v_j)`
/// in a block of `|V|` rows; a robot climbs each column and can only
/// step east out of a block on a vertex type it has an east transition
/// for, so crossing every block needs a dominating set.
pub fn reduce_domset_to_contdesls(g: &Graph, k: usize) -> Result<(ContDesLsInstance, ReductionCertificate), ReductionError> {
    let n = g.num_vertices;
    if n == 0 {
        return Err(ReductionError::EmptyGraph);
    }
    if k == 0 || k > n {
        return Err(ReductionError::KOutOfRange { k, n });
    }
    let mut legend = Legend::new();
    legend.add(WALL, true)?;
    legend.add(FILL, false)?;
    legend.add(PAD, false)?;
    for v in 1..=n {
        legend.add(&vertex_type(v), false)?;
    }
    let block = n as u32;
    let width = n as u32 + 1;
    let height = block * n as u32 + 1;
    let mut env = Environment::filled(width, height, legend, WALL)?;
    let block_rows = |j: u32| (j - 1) * block + 2..=j * block + 1;
    for j in 1..=n as u32 {
        if j == 1 {
            env.paint(Position::new(1, 1), FILL)?;
        } else {
            for row in block_rows(j - 1) {
                env.paint(Position::new(j, row), FILL)?;
            }
        }
        let members: Vec<usize> = neighborhood(g, j as usize).into_iter().collect();
        for (offset, row) in block_rows(j).enumerate() {
            let ty = members.get(offset).map_or(PAD.to_string(), |&v| vertex_type(v));
            env.paint(Position::new(j, row), &ty)?;
        }
    }
    for row in block_rows(n as u32) {
        env.paint(Position::new(width, row), FILL)?;
    }
    let mut library: Vec<TransitionTemplate> = (1..=n).map(|v| template(Some(on(&vertex_type(v))), Direction::East)).collect();
    library.push(template(None, Direction::North));
    let inst = ContDesLsInstance {
        env,
        team_size: 1,
        placement: vec![Position::new(1, 1)],
        library,
        radius: 0,
        max_states: 1,
        max_out_degree: k + 1,
        max_types: 1,
        ec_budget: 0,
        task: TargetConfiguration {
            positions: vec![(Selector::Any, Position::new(width, height))],
            ..Default::default()
        },
        c1: 1,
        c2: 1,
    };
    let cert = ReductionCertificate::new(
        "ds-cdls",
        &format!("{}k {k}\n", g.to_edge_list()),
        &Instance::ContDesLs(inst.clone()),
        &[
            ("k", k.to_string()),
            ("h", "1".into()),
            ("Q", "1".into()),
            ("d", (k + 1).to_string()),
            ("r", "0".into()),
            ("ec", "0".into()),
        ],
    );
    Ok((inst, cert))
}

/// Vertices whose east template appears in a designed controller.
pub fn decode_dominating_set(controller: &Controller) -> BTreeSet<usize> {
    controller
        .transitions()
        .iter()
        .filter(|t| t.direction == Direction::East)
        .filter_map(|t| match &t.trigger {
            Trigger::Formula(Formula::Pred { ty, .. }) => ty.strip_prefix("e_v")?.parse().ok(),
            _ => None,
        })
        .collect()
}

const EAST_TOLL: &str = "e_E";
const FINAL_TOLL: &str = "e_F";

/// Prepends a subgrid that forces `max_q` distinct states.
///
/// Column 1 is a shaft of `max_q - 1` squares; the robot starts at its top
/// and, sensing only its own square, must count its way down and step east
/// at the bottom, using a different state per square. A bridge and two
/// toll squares then force the one remaining state, which is also the
/// only state that can climb the vertex grid, to carry three fixed
/// transitions besides its vertex transitions. The out-degree limit is
/// raised to `k + 3`.
pub fn extend_with_state_ladder(inst: &ContDesLsInstance, max_q: usize, k: usize) -> Result<ContDesLsInstance, ReductionError> {
    if max_q < 2 {
        return Err(ReductionError::LadderStates(max_q));
    }
    if inst.team_size != 1 || inst.placement != [Position::new(1, 1)] {
        return Err(ReductionError::LadderShape);
    }
    let shaft = max_q as u32 - 1;
    let (dx, dy) = (4u32, 3u32);
    let old = &inst.env;
    let mut legend = old.legend().clone();
    for (name, obstacle) in [(WALL, true), (FILL, false), (EAST_TOLL, false), (FINAL_TOLL, false)] {
        if legend.lookup(name).is_none() {
            legend.add(name, obstacle)?;
        }
    }
    let width = old.width() + dx;
    let height = (old.height() + dy).max(shaft);
    let mut env = Environment::filled(width, height, legend, WALL)?;
    for p in old.positions() {
        let ty = old.square_at(p)?;
        env.paint(Position::new(p.col + dx, p.row + dy), ty)?;
    }
    for row in 1..=shaft {
        env.paint(Position::new(1, row), FILL)?;
    }
    env.paint(Position::new(2, 1), EAST_TOLL)?;
    env.paint(Position::new(3, 1), FILL)?;
    env.paint(Position::new(3, 2), FILL)?;
    env.paint(Position::new(3, 3), EAST_TOLL)?;
    env.paint(Position::new(4, 3), FILL)?;
    env.paint(Position::new(4, 4), FINAL_TOLL)?;
    let mut library = inst.library.clone();
    library.push(template(Some(on(FILL)), Direction::South));
    library.push(template(Some(on(FILL)), Direction::East));
    library.push(template(Some(on(EAST_TOLL)), Direction::East));
    library.push(template(Some(on(FINAL_TOLL)), Direction::East));
    let shift = |p: &Position| Position::new(p.col + dx, p.row + dy);
    let task = TargetConfiguration {
        squares: inst.task.squares.iter().map(|(p, t)| (shift(p), t.clone())).collect(),
        positions: inst.task.positions.iter().map(|(s, p)| (s.clone(), shift(p))).collect(),
        states: inst.task.states.clone(),
    };
    Ok(ContDesLsInstance {
        env,
        placement: vec![Position::new(1, shaft)],
        library,
        max_states: max_q,
        max_out_degree: k + 3,
        task,
        ..inst.clone()
    })
}

fn lane_type(i: usize) -> String {
    format!("lane_{i}")
}

/// A binary counter of variable robots plus an evaluating robot.
///
/// Variable `i` owns lane row `i`: square (2,i) means false, (3,i) true,
/// and (1,i) is an obstacle marking the lane. Every robot runs the same
/// single-state controller. Lane `i` flips when every lower lane is true,
/// so the lanes count through all assignments. The evaluating robot at
/// (5,1) senses all lanes and steps west onto (4,1) when the formula
/// holds; the task is a robot on (4,1).
pub fn reduce_3sat_to_teamenvver(cnf: &Cnf) -> Result<(TeamEnvVerInstance, ReductionCertificate), ReductionError> {
    cnf.check_3cnf()?;
    let n = cnf.num_vars;
    let mut legend = Legend::new();
    legend.add(WALL, true)?;
    legend.add("e_Var", false)?;
    legend.add("e_Evl", false)?;
    legend.add("e_Goal", false)?;
    for i in 1..=n {
        legend.add(&lane_type(i), true)?;
    }
    let mut env = Environment::filled(5, n as u32, legend, WALL)?;
    for i in 1..=n as u32 {
        env.paint(Position::new(1, i), &lane_type(i as usize))?;
        env.paint(Position::new(2, i), "e_Var")?;
        env.paint(Position::new(3, i), "e_Var")?;
    }
    env.paint(Position::new(4, 1), "e_Goal")?;
    env.paint(Position::new(5, 1), "e_Evl")?;

    let mut transitions = Vec::new();
    let lower_true = |i: usize, dx: i32| (1..i).map(move |j| Formula::pred(ROBOT_TYPE, dx, j as i32 - i as i32));
    for i in 1..=n {
        let to_true = Formula::all([on("e_Var"), Formula::pred(&lane_type(i), -1, 0)].into_iter().chain(lower_true(i, 1)))
            .expect("non-empty");
        let to_false = Formula::all([on("e_Var"), Formula::pred(&lane_type(i), -2, 0)].into_iter().chain(lower_true(i, 0)))
            .expect("non-empty");
        transitions.push(template(Some(to_true), Direction::East).instantiate(0, 0));
        transitions.push(template(Some(to_false), Direction::West).instantiate(0, 0));
    }
    let literal = |l: i32| {
        let row = l.unsigned_abs() as i32 - 1;
        Formula::pred(ROBOT_TYPE, if l > 0 { -2 } else { -3 }, row)
    };
    let formula = cnf
        .clauses
        .iter()
        .map(|c| Formula::any(c.iter().map(|&l| literal(l))).expect("three literals"));
    let evaluate = Formula::all(std::iter::once(on("e_Evl")).chain(formula)).expect("non-empty");
    transitions.push(template(Some(evaluate), Direction::West).instantiate(0, 0));
    let radius = n as u32 + 2;
    let controller = Controller::with_canonical_states(1, radius, transitions)?;
    let mut placement: Vec<Position> = (1..=n as u32).map(|i| Position::new(2, i)).collect();
    placement.push(Position::new(5, 1));
    let inst = TeamEnvVerInstance {
        env,
        team: Team::homogeneous(controller, n + 1)?,
        placement,
        ec_budget: 0,
        task: TargetConfiguration {
            positions: vec![(Selector::Any, Position::new(4, 1))],
            ..Default::default()
        },
    };
    let cert = ReductionCertificate::new(
        "3sat-tev",
        &cnf.to_dimacs(),
        &Instance::TeamEnvVer(inst.clone()),
        &[
            ("h", "1".into()),
            ("Q", "1".into()),
            ("ec", "0".into()),
            ("r", radius.to_string()),
        ],
    );
    Ok((inst, cert))
}

/// Clause-row grid for team design.
///
/// One column per variable between two obstacle columns; row `j` encodes
/// clause `j` (`e_P` where the variable occurs positively, `e_Nn`
/// negatively, `e_Both` for both, `e_0` otherwise) and the top row is
/// `e_B`. Controller `c_T` climbs on `e_P`/`e_Both`, `c_F` on
/// `e_Nn`/`e_Both`, and both climb when a robot is diagonally ahead in a
/// neighbouring column, so a row can only be left once some robot's
/// literal satisfies it. Padding clauses force both controllers to be
/// used. The task is a robot on every central square of the top row.
pub fn reduce_3sat_to_teamdesls(cnf: &Cnf) -> Result<(TeamDesLsInstance, ReductionCertificate), ReductionError> {
    cnf.check_3cnf()?;
    let u_t = cnf.num_vars as i32 + 1;
    let u_f = cnf.num_vars as i32 + 2;
    let mut clauses = cnf.clauses.clone();
    clauses.push(vec![u_t; 3]);
    clauses.push(vec![-u_f; 3]);
    let vars = cnf.num_vars + 2;
    let rows = clauses.len() as u32 + 1;
    let width = vars as u32 + 2;
    let mut legend = Legend::new();
    legend.add(WALL, true)?;
    for ty in ["e_P", "e_Nn", "e_Both", "e_0", "e_B"] {
        legend.add(ty, false)?;
    }
    let mut env = Environment::filled(width, rows, legend, WALL)?;
    for (j, clause) in clauses.iter().enumerate() {
        for v in 1..=vars as i32 {
            let pos = clause.contains(&v);
            let neg = clause.contains(&-v);
            let ty = match (pos, neg) {
                (true, true) => "e_Both",
                (true, false) => "e_P",
                (false, true) => "e_Nn",
                (false, false) => "e_0",
            };
            env.paint(Position::new(v as u32 + 1, j as u32 + 1), ty)?;
        }
    }
    for col in 2..=vars as u32 + 1 {
        env.paint(Position::new(col, rows), "e_B")?;
    }
    let wave = Formula::pred(ROBOT_TYPE, 1, 1).or(Formula::pred(ROBOT_TYPE, -1, 1));
    let literal_controller = |own: &str| {
        let transitions = vec![
            template(Some(on(own)), Direction::North).instantiate(0, 0),
            template(Some(on("e_Both")), Direction::North).instantiate(0, 0),
            template(Some(wave.clone()), Direction::North).instantiate(0, 0),
            template(Some(on("e_B")), Direction::Stay).instantiate(0, 0),
        ];
        Controller::with_canonical_states(1, 2, transitions)
    };
    let library = vec![literal_controller("e_P")?, literal_controller("e_Nn")?];
    let region: Vec<Position> = (2..=vars as u32 + 1).map(|c| Position::new(c, 1)).collect();
    let task = TargetConfiguration {
        positions: (2..=vars as u32 + 1).map(|c| (Selector::Any, Position::new(c, rows))).collect(),
        ..Default::default()
    };
    let inst = TeamDesLsInstance {
        env,
        team_size: vars,
        library,
        region,
        max_types: 2,
        ec_budget: 0,
        task,
        c1: 1,
        c2: 1,
    };
    let cert = ReductionCertificate::new(
        "3sat-tdls",
        &cnf.to_dimacs(),
        &Instance::TeamDesLs(inst.clone()),
        &[
            ("h", "2".into()),
            ("Q", "1".into()),
            ("ec", "0".into()),
            ("r", "2".into()),
            ("library", "2".into()),
            ("T", vars.to_string()),
        ],
    );
    Ok((inst, cert))
}

/// Truth assignment encoded by a team design: variable `i` is true iff
/// robot `i` runs the first library controller.
pub fn decode_assignment(assignment: &[usize], num_vars: usize) -> Vec<bool> {
    assignment.iter().take(num_vars).map(|&c| c == 0).collect()
}

const HOLD_WALL: &str = "e_hwall";

fn hold_type(i: usize) -> String {
    format!("e_hold{i}")
}

/// Idles on its own holding square, cycling through `states` states.
pub fn holding_controller(i: usize, states: usize) -> Result<Controller, ControllerError> {
    let transitions = (0..states)
        .map(|q| template(Some(on(&hold_type(i))), Direction::Stay).instantiate(q, (q + 1) % states))
        .collect();
    Controller::with_canonical_states(states, 0, transitions)
}

/// Adds `extra` robots, each locked in its own obstacle-enclosed square
/// north of the grid and running its own idle controller with `states`
/// states. All new squares use fresh types, and the enclosure sits more
/// than the largest sensing radius away from the original grid, so no
/// original robot can tell the difference.
pub fn add_holding_area(inst: &Instance, extra: usize, states: usize) -> Result<Instance, ReductionError> {
    if extra == 0 {
        return Ok(inst.clone());
    }
    if states == 0 {
        return Err(ReductionError::HoldingStates);
    }
    let radius = match inst {
        Instance::TeamEnvVer(i) => i.team.controllers().iter().map(Controller::radius).max().unwrap_or(0),
        Instance::ContDesLs(i) => i.radius,
        Instance::TeamDesLs(i) => i.library.iter().map(Controller::radius).max().unwrap_or(0),
    };
    let old = inst.env();
    let mut legend = old.legend().clone();
    let mut fresh = vec![(HOLD_WALL.to_string(), true)];
    fresh.extend((1..=extra).map(|i| (hold_type(i), false)));
    for (name, obstacle) in &fresh {
        if legend.lookup(name).is_some() {
            return Err(ReductionError::TypeClash(name.clone()));
        }
        legend.add(name, *obstacle)?;
    }
    let cell_row = old.height() + radius + 2;
    let width = old.width().max(extra as u32 + 2);
    let mut env = Environment::filled(width, cell_row + 1, legend, HOLD_WALL)?;
    for p in old.positions() {
        env.paint(p, old.square_at(p)?)?;
    }
    let cells: Vec<Position> = (1..=extra).map(|i| Position::new(i as u32 + 1, cell_row)).collect();
    for (i, p) in cells.iter().enumerate() {
        env.paint(*p, &hold_type(i + 1))?;
    }
    let holders = (1..=extra)
        .map(|i| holding_controller(i, states))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match inst {
        Instance::TeamEnvVer(i) => {
            let mut controllers = i.team.controllers().to_vec();
            let mut members = i.team.members().to_vec();
            for c in holders {
                members.push(controllers.len());
                controllers.push(c);
            }
            let mut placement = i.placement.clone();
            placement.extend(&cells);
            Instance::TeamEnvVer(TeamEnvVerInstance {
                env,
                team: Team::new(controllers, members)?,
                placement,
                ..i.clone()
            })
        }
        Instance::ContDesLs(i) => {
            let mut placement = i.placement.clone();
            placement.extend(&cells);
            Instance::ContDesLs(ContDesLsInstance {
                env,
                team_size: i.team_size + extra,
                placement,
                max_types: i.max_types + extra,
                max_states: i.max_states.max(states),
                ..i.clone()
            })
        }
        Instance::TeamDesLs(i) => {
            let mut library = i.library.clone();
            library.extend(holders);
            let mut region = i.region.clone();
            region.extend(&cells);
            Instance::TeamDesLs(TeamDesLsInstance {
                env,
                team_size: i.team_size + extra,
                library,
                region,
                max_types: i.max_types + extra,
                ..i.clone()
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighborhood_examples() {
        assert_eq!(neighborhood(&Graph::complete(3), 1), BTreeSet::from([1, 2, 3]));
        assert_eq!(neighborhood(&Graph::edgeless(3), 1), BTreeSet::from([1]));
        assert_eq!(neighborhood(&Graph::path(3), 2), BTreeSet::from([1, 2, 3]));
    }

    #[test]
    fn dimacs_examples() {
        let cnf = parse_dimacs_cnf("p cnf 1 1\n1 1 1 0\n").unwrap();
        assert_eq!(cnf, Cnf::new(1, vec![vec![1, 1, 1]]));
        let two = parse_dimacs_cnf("c two literals\np cnf 2 1\n1 -2 0\n").unwrap();
        assert_eq!(two.check_3cnf(), Err(ReductionError::NotThreeCnf { clause: 1, len: 2 }));
        assert!(matches!(parse_dimacs_cnf("p cnf 1 1\n1 2 1 0\n"), Err(ReductionError::Parse { line: 2, .. })));
        assert!(matches!(parse_dimacs_cnf("1 1 1 0\n"), Err(ReductionError::Parse { line: 1, .. })));
        let round = parse_dimacs_cnf(&cnf.to_dimacs()).unwrap();
        assert_eq!(round, cnf);
    }

    #[test]
    fn graph_examples() {
        let k3 = parse_graph("p edge 3 3\ne 1 2\ne 2 3\ne 1 3\n").unwrap();
        assert_eq!(k3.edges.len(), 3);
        assert_eq!(k3, Graph::complete(3));
        assert!(matches!(parse_graph("p edge 2 1\ne 1 1\n"), Err(ReductionError::Parse { line: 2, .. })));
        assert_eq!(parse_graph(&k3.to_edge_list()).unwrap(), k3);
    }

    #[test]
    fn domset_instance_shape() {
        let (inst, cert) = reduce_domset_to_contdesls(&Graph::path(3), 1).unwrap();
        assert_eq!((inst.env.width(), inst.env.height()), (4, 10));
        assert_eq!(inst.max_out_degree, 2);
        assert_eq!((inst.max_states, inst.max_types, inst.team_size, inst.radius, inst.ec_budget), (1, 1, 1, 0, 0));
        assert_eq!(inst.library.len(), 4);
        assert_eq!(inst.task.positions, vec![(Selector::Any, Position::new(4, 10))]);
        assert!(cert.render().contains("d=2"));
        // Column 2 lists N_C(v2) = {v1, v2, v3} in its block.
        for (row, v) in [(5, 1), (6, 2), (7, 3)] {
            assert_eq!(inst.env.square_at(Position::new(2, row)).unwrap(), vertex_type(v));
        }
        assert!(matches!(reduce_domset_to_contdesls(&Graph::path(3), 0), Err(ReductionError::KOutOfRange { .. })));
    }

    #[test]
    fn generators_are_deterministic() {
        let cnf = Cnf::new(2, vec![vec![1, -2, 2], vec![-1, -1, 2]]);
        assert_eq!(reduce_3sat_to_teamenvver(&cnf).unwrap().1, reduce_3sat_to_teamenvver(&cnf).unwrap().1);
        assert_eq!(reduce_3sat_to_teamdesls(&cnf).unwrap().1, reduce_3sat_to_teamdesls(&cnf).unwrap().1);
    }

    #[test]
    fn teamdesls_profile() {
        let cnf = Cnf::new(2, vec![vec![1, 2, 2], vec![-1, 2, 2]]);
        let (inst, _) = reduce_3sat_to_teamdesls(&cnf).unwrap();
        assert_eq!(inst.library.len(), 2);
        assert_eq!(inst.team_size, 4);
        assert!(inst.library.iter().all(|c| c.num_states() == 1 && !c.modifies()));
    }

    #[test]
    fn holding_area_shape() {
        let cnf = Cnf::new(1, vec![vec![1, 1, 1]]);
        let (inst, _) = reduce_3sat_to_teamenvver(&cnf).unwrap();
        let base = Instance::TeamEnvVer(inst);
        assert_eq!(add_holding_area(&base, 0, 3).unwrap().digest(), base.digest());
        let held = add_holding_area(&base, 2, 3).unwrap();
        let env = held.env();
        let free_new = env
            .positions()
            .filter(|p| env.is_free(*p) && env.square_at(*p).unwrap().starts_with("e_hold"))
            .count();
        assert_eq!(free_new, 2);
        let Instance::TeamEnvVer(held) = held else { unreachable!() };
        assert_eq!(held.team.h(), 3);
        assert_eq!(held.team.max_states(), 3);
    }
}
