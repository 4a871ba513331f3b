//! Finite-state robot controllers.
//!
//! A controller is a set of states linked by guarded transitions
//! `(from, trigger, modification, direction, to)`. Triggers are
//! propositional formulas over `enval(type, dx, dy)` atoms or the default
//! trigger `*`, which fires only when no other transition out of the
//! current state is enabled.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::grid::{Environment, Legend, Position, TypeId, ROBOT_TYPE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControllerError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: offset ({dx},{dy}) is beyond sensing radius {radius}")]
    OffsetBeyondRadius {
        line: usize,
        dx: i32,
        dy: i32,
        radius: u32,
    },
    #[error("line {line}: modification offset ({dx},{dy}) must be within distance 1")]
    ModificationOffset { line: usize, dx: i32, dy: i32 },
    #[error("line {line}: unknown state `{state}`")]
    UnknownState { line: usize, state: String },
    #[error("the default trigger `*` has no truth value on its own")]
    StarEvaluated,
    #[error("modification writes `{0}`, which is not a writable type of the environment")]
    UnwritableType(String),
    #[error("controller must have at least one state")]
    NoStates,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    /// `enval(ty, dx, dy)`; `ty` may be [`ROBOT_TYPE`].
    Pred { ty: String, dx: i32, dy: i32 },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn pred(ty: &str, dx: i32, dy: i32) -> Formula {
        Formula::Pred {
            ty: ty.to_string(),
            dx,
            dy,
        }
    }

    pub fn negate(self) -> Formula {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, other: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Formula {
        Formula::Or(Box::new(self), Box::new(other))
    }

    /// Left-nested conjunction; `None` for an empty list.
    pub fn all(items: impl IntoIterator<Item = Formula>) -> Option<Formula> {
        items.into_iter().reduce(Formula::and)
    }

    /// Left-nested disjunction; `None` for an empty list.
    pub fn any(items: impl IntoIterator<Item = Formula>) -> Option<Formula> {
        items.into_iter().reduce(Formula::or)
    }

    /// Largest Manhattan norm of any atom offset.
    pub fn reach(&self) -> u32 {
        match self {
            Formula::Pred { dx, dy, .. } => dx.unsigned_abs() + dy.unsigned_abs(),
            Formula::Not(f) => f.reach(),
            Formula::And(a, b) | Formula::Or(a, b) => a.reach().max(b.reach()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Formula::Pred { .. } => 1,
            Formula::Not(f) => 1 + f.size(),
            Formula::And(a, b) | Formula::Or(a, b) => 1 + a.size() + b.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Formula::Or(..) => 1,
            Formula::And(..) => 2,
            Formula::Not(_) => 3,
            Formula::Pred { .. } => 4,
        }
    }

    fn write_child(&self, child: &Formula, right: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precedence();
        let cp = child.precedence();
        // Binary operators parse left-associatively, so a right child of
        // equal precedence needs parentheses to round-trip.
        if cp < p || (right && cp == p && cp < 3) {
            write!(f, "({child})")
        } else {
            write!(f, "{child}")
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Pred { ty, dx, dy } => write!(f, "enval({ty},{dx},{dy})"),
            Formula::Not(inner) => {
                f.write_str("!")?;
                if inner.precedence() < 3 {
                    write!(f, "({inner})")
                } else {
                    write!(f, "{inner}")
                }
            }
            Formula::And(a, b) => {
                self.write_child(a, false, f)?;
                f.write_str(" & ")?;
                self.write_child(b, true, f)
            }
            Formula::Or(a, b) => {
                self.write_child(a, false, f)?;
                f.write_str(" | ")?;
                self.write_child(b, true, f)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Trigger {
    Star,
    Formula(Formula),
}

impl Trigger {
    pub fn is_star(&self) -> bool {
        matches!(self, Trigger::Star)
    }
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Star => f.write_str("*"),
            Trigger::Formula(formula) => write!(f, "{formula}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modification {
    Star,
    Set { ty: String, dx: i32, dy: i32 },
}

impl fmt::Display for Modification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Modification::Star => f.write_str("*"),
            Modification::Set { ty, dx, dy } => write!(f, "enmod({ty},{dx},{dy})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    North,
    South,
    East,
    West,
    Stay,
}

impl Direction {
    pub const ALL: [Direction; 5] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
        Direction::Stay,
    ];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::North => (0, 1),
            Direction::South => (0, -1),
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::Stay => (0, 0),
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Direction::North => "goNorth",
            Direction::South => "goSouth",
            Direction::East => "goEast",
            Direction::West => "goWest",
            Direction::Stay => "stay",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.keyword() == s)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionTemplate {
    pub trigger: Trigger,
    pub modification: Modification,
    pub direction: Direction,
}

impl TransitionTemplate {
    pub fn new(trigger: Trigger, modification: Modification, direction: Direction) -> Self {
        TransitionTemplate {
            trigger,
            modification,
            direction,
        }
    }

    /// Binds the template between two states (which may coincide).
    pub fn instantiate(&self, from: usize, to: usize) -> Transition {
        Transition {
            from,
            trigger: self.trigger.clone(),
            modification: self.modification.clone(),
            direction: self.direction,
            to,
        }
    }

    pub fn parse_line(line: &str, line_no: usize) -> Result<TransitionTemplate, ControllerError> {
        let parts: Vec<&str> = line.split('/').collect();
        if parts.len() != 3 {
            return Err(syntax(line_no, "expected `<formula> / <mod> / <dir>`"));
        }
        let trigger = parse_trigger(parts[0].trim(), line_no)?;
        let modification = parse_modification(parts[1].trim(), line_no)?;
        let direction = Direction::from_keyword(parts[2].trim())
            .ok_or_else(|| syntax(line_no, &format!("unknown direction `{}`", parts[2].trim())))?;
        if let Modification::Set { dx, dy, .. } = &modification {
            if dx.unsigned_abs() + dy.unsigned_abs() > 1 {
                return Err(ControllerError::ModificationOffset {
                    line: line_no,
                    dx: *dx,
                    dy: *dy,
                });
            }
        }
        Ok(TransitionTemplate::new(trigger, modification, direction))
    }

    pub fn reach(&self) -> u32 {
        match &self.trigger {
            Trigger::Star => 0,
            Trigger::Formula(f) => f.reach(),
        }
    }
}

impl fmt::Display for TransitionTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {} / {}", self.trigger, self.modification, self.direction)
    }
}

/// Parses a template library: one template per line; blank lines and
/// `#` comments are skipped.
pub fn parse_templates(text: &str) -> Result<Vec<TransitionTemplate>, ControllerError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| TransitionTemplate::parse_line(l.trim(), i + 1))
        .collect()
}

pub fn render_templates(templates: &[TransitionTemplate]) -> String {
    templates.iter().map(|t| format!("{t}\n")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Transition {
    pub from: usize,
    pub trigger: Trigger,
    pub modification: Modification,
    pub direction: Direction,
    pub to: usize,
}

impl Transition {
    pub fn template(&self) -> TransitionTemplate {
        TransitionTemplate::new(self.trigger.clone(), self.modification.clone(), self.direction)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Controller {
    states: Vec<String>,
    initial: usize,
    radius: u32,
    transitions: Vec<Transition>,
}

impl Controller {
    pub fn new(
        states: Vec<String>,
        initial: usize,
        radius: u32,
        transitions: Vec<Transition>,
    ) -> Result<Controller, ControllerError> {
        if states.is_empty() {
            return Err(ControllerError::NoStates);
        }
        if initial >= states.len() {
            return Err(ControllerError::UnknownState {
                line: 0,
                state: format!("#{initial}"),
            });
        }
        for (i, s) in states.iter().enumerate() {
            if !valid_state_name(s) {
                return Err(syntax(0, &format!("bad state name `{s}`")));
            }
            if states[..i].contains(s) {
                return Err(syntax(0, &format!("duplicate state `{s}`")));
            }
        }
        for t in &transitions {
            for s in [t.from, t.to] {
                if s >= states.len() {
                    return Err(ControllerError::UnknownState {
                        line: 0,
                        state: format!("#{s}"),
                    });
                }
            }
            check_transition_offsets(t, radius, 0)?;
        }
        Ok(Controller {
            states,
            initial,
            radius,
            transitions,
        })
    }

    /// States named `s0..s{n-1}`, initial `s0`.
    pub fn with_canonical_states(
        n: usize,
        radius: u32,
        transitions: Vec<Transition>,
    ) -> Result<Controller, ControllerError> {
        Controller::new((0..n).map(|i| format!("s{i}")).collect(), 0, radius, transitions)
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    pub fn out_degree(&self, state: usize) -> usize {
        self.transitions.iter().filter(|t| t.from == state).count()
    }

    /// Whether any transition writes to the environment.
    pub fn modifies(&self) -> bool {
        self.transitions
            .iter()
            .any(|t| !matches!(t.modification, Modification::Star))
    }

    /// Transitions out of `state` enabled under `percept`: every non-default
    /// transition whose trigger holds, or, when there are none, every
    /// default transition. Declaration order is preserved.
    pub fn enabled_transitions<S: Sense>(&self, state: usize, percept: &S) -> Vec<&Transition> {
        let outgoing = || self.transitions.iter().filter(move |t| t.from == state);
        let fired: Vec<&Transition> = outgoing()
            .filter(|t| match &t.trigger {
                Trigger::Star => false,
                Trigger::Formula(f) => eval_formula(f, percept),
            })
            .collect();
        if !fired.is_empty() {
            return fired;
        }
        outgoing().filter(|t| t.trigger.is_star()).collect()
    }

    pub fn parse(text: &str) -> Result<Controller, ControllerError> {
        parse_controller_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("radius {}\n", self.radius));
        out.push_str(&format!("initial {}\n", self.states[self.initial]));
        out.push_str(&format!("states {}\n", self.states.join(" ")));
        for t in &self.transitions {
            out.push_str(&format!(
                "{}: {} / {} / {} -> {}\n",
                self.states[t.from], t.trigger, t.modification, t.direction, self.states[t.to]
            ));
        }
        out
    }

    /// Resolves type names against `legend` for fast evaluation.
    pub fn compile(&self, legend: &Legend) -> Result<CompiledController, ControllerError> {
        let mut by_state: Vec<Vec<CompiledTransition>> = vec![Vec::new(); self.states.len()];
        for (index, t) in self.transitions.iter().enumerate() {
            let trigger = match &t.trigger {
                Trigger::Star => None,
                Trigger::Formula(f) => Some(CompiledFormula::compile(f, legend)),
            };
            let modification = match &t.modification {
                Modification::Star => None,
                Modification::Set { ty, dx, dy } => {
                    let id = legend
                        .lookup(ty)
                        .filter(|id| !legend.entry(*id).obstacle)
                        .ok_or_else(|| ControllerError::UnwritableType(ty.clone()))?;
                    Some((id, *dx, *dy))
                }
            };
            by_state[t.from].push(CompiledTransition {
                index,
                trigger,
                modification,
                direction: t.direction,
                to: t.to,
            });
        }
        Ok(CompiledController {
            initial: self.initial,
            by_state,
        })
    }
}

fn valid_state_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_')
}

fn check_transition_offsets(t: &Transition, radius: u32, line: usize) -> Result<(), ControllerError> {
    if let Trigger::Formula(f) = &t.trigger {
        if let Some((dx, dy)) = first_offset_beyond(f, radius) {
            return Err(ControllerError::OffsetBeyondRadius { line, dx, dy, radius });
        }
    }
    if let Modification::Set { dx, dy, .. } = &t.modification {
        if dx.unsigned_abs() + dy.unsigned_abs() > 1 {
            return Err(ControllerError::ModificationOffset { line, dx: *dx, dy: *dy });
        }
    }
    Ok(())
}

fn first_offset_beyond(f: &Formula, radius: u32) -> Option<(i32, i32)> {
    match f {
        Formula::Pred { dx, dy, .. } => (dx.unsigned_abs() + dy.unsigned_abs() > radius).then_some((*dx, *dy)),
        Formula::Not(g) => first_offset_beyond(g, radius),
        Formula::And(a, b) | Formula::Or(a, b) => {
            first_offset_beyond(a, radius).or_else(|| first_offset_beyond(b, radius))
        }
    }
}

/// Parses one controller from numbered lines. Shared with the team and
/// library file readers, which split on `---` separators.
pub(crate) fn parse_controller_lines<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
) -> Result<Controller, ControllerError> {
    let mut radius: Option<u32> = None;
    let mut initial: Option<(usize, String)> = None;
    let mut declared: Option<Vec<String>> = None;
    let mut raw: Vec<(usize, String, TransitionTemplate, String)> = Vec::new();
    let mut last_line = 0;
    for (n, line) in lines {
        last_line = n;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("radius ") {
            let r = rest
                .trim()
                .parse::<u32>()
                .map_err(|_| syntax(n, "radius must be a non-negative integer"))?;
            radius = Some(r);
        } else if let Some(rest) = line.strip_prefix("initial ") {
            initial = Some((n, rest.trim().to_string()));
        } else if let Some(rest) = line.strip_prefix("states ") {
            let names: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            for s in &names {
                if !valid_state_name(s) {
                    return Err(syntax(n, &format!("bad state name `{s}`")));
                }
            }
            declared = Some(names);
        } else {
            let (from, rest) = line
                .split_once(':')
                .ok_or_else(|| syntax(n, "expected `<from>: <formula> / <mod> / <dir> -> <to>`"))?;
            let (body, to) = rest
                .rsplit_once("->")
                .ok_or_else(|| syntax(n, "missing `-> <to>`"))?;
            let from = from.trim();
            let to = to.trim();
            for s in [from, to] {
                if !valid_state_name(s) {
                    return Err(syntax(n, &format!("bad state name `{s}`")));
                }
            }
            let template = TransitionTemplate::parse_line(body.trim(), n)?;
            raw.push((n, from.to_string(), template, to.to_string()));
        }
    }
    let radius = radius.ok_or_else(|| syntax(last_line.max(1), "missing `radius` header"))?;
    let (init_line, initial) = initial.ok_or_else(|| syntax(last_line.max(1), "missing `initial` header"))?;
    let states = match declared {
        Some(states) => {
            let mut seen = Vec::new();
            for s in &states {
                if seen.contains(s) {
                    return Err(syntax(init_line, &format!("duplicate state `{s}`")));
                }
                seen.push(s.clone());
            }
            states
        }
        None => {
            let mut states = vec![initial.clone()];
            for (_, from, _, to) in &raw {
                for s in [from, to] {
                    if !states.contains(s) {
                        states.push(s.clone());
                    }
                }
            }
            states
        }
    };
    let index_of = |name: &str, line: usize| {
        states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| ControllerError::UnknownState {
                line,
                state: name.to_string(),
            })
    };
    let initial = index_of(&initial, init_line)?;
    let mut transitions = Vec::with_capacity(raw.len());
    for (n, from, template, to) in raw {
        let t = template.instantiate(index_of(&from, n)?, index_of(&to, n)?);
        check_transition_offsets(&t, radius, n)?;
        transitions.push(t);
    }
    Ok(Controller {
        states,
        initial,
        radius,
        transitions,
    })
}

fn syntax(line: usize, message: &str) -> ControllerError {
    ControllerError::Syntax {
        line,
        message: message.to_string(),
    }
}

fn parse_trigger(s: &str, line: usize) -> Result<Trigger, ControllerError> {
    if s == "*" {
        return Ok(Trigger::Star);
    }
    let mut p = FormulaParser {
        src: s.as_bytes(),
        pos: 0,
        line,
    };
    let f = p.parse_or()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(syntax(line, &format!("unexpected input at column {}", p.pos + 1)));
    }
    Ok(Trigger::Formula(f))
}

fn parse_modification(s: &str, line: usize) -> Result<Modification, ControllerError> {
    if s == "*" {
        return Ok(Modification::Star);
    }
    let (name, args) = parse_call(s, line)?;
    if name != "enmod" {
        return Err(syntax(line, "modification must be `*` or `enmod(type,dx,dy)`"));
    }
    if args.0 == ROBOT_TYPE {
        return Err(syntax(line, "cannot write `e_robot` into a square"));
    }
    Ok(Modification::Set {
        ty: args.0,
        dx: args.1,
        dy: args.2,
    })
}

fn parse_call(s: &str, line: usize) -> Result<(String, (String, i32, i32)), ControllerError> {
    let (name, rest) = s
        .split_once('(')
        .ok_or_else(|| syntax(line, &format!("expected a call, found `{s}`")))?;
    let inner = rest
        .strip_suffix(')')
        .ok_or_else(|| syntax(line, "missing `)`"))?;
    let args: Vec<&str> = inner.split(',').map(str::trim).collect();
    if args.len() != 3 {
        return Err(syntax(line, "expected three arguments `(type,dx,dy)`"));
    }
    let num = |a: &str| a.parse::<i32>().map_err(|_| syntax(line, &format!("bad offset `{a}`")));
    if args[0].is_empty() {
        return Err(syntax(line, "missing square type"));
    }
    Ok((
        name.trim().to_string(),
        (args[0].to_string(), num(args[1])?, num(args[2])?),
    ))
}

struct FormulaParser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
}

impl FormulaParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_or(&mut self) -> Result<Formula, ControllerError> {
        let mut f = self.parse_and()?;
        while self.eat(b'|') {
            f = f.or(self.parse_and()?);
        }
        Ok(f)
    }

    fn parse_and(&mut self) -> Result<Formula, ControllerError> {
        let mut f = self.parse_unary()?;
        while self.eat(b'&') {
            f = f.and(self.parse_unary()?);
        }
        Ok(f)
    }

    fn parse_unary(&mut self) -> Result<Formula, ControllerError> {
        if self.eat(b'!') {
            return Ok(self.parse_unary()?.negate());
        }
        if self.eat(b'(') {
            let f = self.parse_or()?;
            if !self.eat(b')') {
                return Err(syntax(self.line, "missing `)` in formula"));
            }
            return Ok(f);
        }
        self.skip_ws();
        if self.src.get(self.pos) == Some(&b'*') {
            return Err(syntax(self.line, "`*` may only appear as a whole trigger"));
        }
        let start = self.pos;
        let close = self.src[start..]
            .iter()
            .position(|&c| c == b')')
            .ok_or_else(|| syntax(self.line, "expected `enval(type,dx,dy)`"))?;
        let text = std::str::from_utf8(&self.src[start..=start + close])
            .map_err(|_| syntax(self.line, "invalid UTF-8"))?;
        let (name, (ty, dx, dy)) = parse_call(text, self.line)?;
        if name != "enval" {
            return Err(syntax(self.line, &format!("unknown predicate `{name}`")));
        }
        self.pos = start + close + 1;
        Ok(Formula::Pred { ty, dx, dy })
    }
}

/// What a robot can sense about one square relative to its own position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub ty: String,
    pub obstacle: bool,
    pub robot: bool,
}

/// Access to a robot's surroundings by relative offset.
pub trait Sense {
    /// `enval(ty, dx, dy)`.
    fn holds(&self, ty: &str, dx: i32, dy: i32) -> bool;
}

/// Everything a robot senses: in-bounds squares within its radius. The
/// sensing robot itself is not reported, so offset `(0,0)` always shows
/// the type of the square it stands on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Percept {
    pub radius: u32,
    pub cells: BTreeMap<(i32, i32), Cell>,
}

impl Percept {
    pub fn of(env: &Environment, robots: &[Position], at: Position, radius: u32) -> Percept {
        let r = radius as i32;
        let mut cells = BTreeMap::new();
        for dy in -r..=r {
            let span = r - dy.abs();
            for dx in -span..=span {
                let Some(p) = at.offset(dx, dy) else { continue };
                let Ok(id) = env.type_id_at(p) else { continue };
                let entry = env.legend().entry(id);
                cells.insert(
                    (dx, dy),
                    Cell {
                        ty: entry.name.clone(),
                        obstacle: entry.obstacle,
                        robot: (dx, dy) != (0, 0) && robots.contains(&p),
                    },
                );
            }
        }
        Percept { radius, cells }
    }
}

impl Sense for Percept {
    fn holds(&self, ty: &str, dx: i32, dy: i32) -> bool {
        match self.cells.get(&(dx, dy)) {
            None => false,
            Some(cell) if ty == ROBOT_TYPE => cell.robot,
            // A robot on a square hides its type from the sensor.
            Some(cell) => !cell.robot && cell.ty == ty,
        }
    }
}

pub fn percept_of(env: &Environment, robots: &[Position], at: Position, radius: u32) -> Percept {
    Percept::of(env, robots, at, radius)
}

pub fn eval_formula<S: Sense + ?Sized>(f: &Formula, percept: &S) -> bool {
    match f {
        Formula::Pred { ty, dx, dy } => percept.holds(ty, *dx, *dy),
        Formula::Not(g) => !eval_formula(g, percept),
        Formula::And(a, b) => eval_formula(a, percept) && eval_formula(b, percept),
        Formula::Or(a, b) => eval_formula(a, percept) || eval_formula(b, percept),
    }
}

pub fn eval_trigger<S: Sense + ?Sized>(t: &Trigger, percept: &S) -> Result<bool, ControllerError> {
    match t {
        Trigger::Star => Err(ControllerError::StarEvaluated),
        Trigger::Formula(f) => Ok(eval_formula(f, percept)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    Robot,
    Type(TypeId),
    /// A type absent from the environment; never sensed.
    Never,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompiledFormula {
    Pred { atom: Atom, dx: i32, dy: i32 },
    Not(Box<CompiledFormula>),
    And(Box<CompiledFormula>, Box<CompiledFormula>),
    Or(Box<CompiledFormula>, Box<CompiledFormula>),
}

impl CompiledFormula {
    pub fn compile(f: &Formula, legend: &Legend) -> CompiledFormula {
        match f {
            Formula::Pred { ty, dx, dy } => {
                let atom = if ty == ROBOT_TYPE {
                    Atom::Robot
                } else {
                    legend.lookup(ty).map_or(Atom::Never, Atom::Type)
                };
                CompiledFormula::Pred { atom, dx: *dx, dy: *dy }
            }
            Formula::Not(g) => CompiledFormula::Not(Box::new(Self::compile(g, legend))),
            Formula::And(a, b) => {
                CompiledFormula::And(Box::new(Self::compile(a, legend)), Box::new(Self::compile(b, legend)))
            }
            Formula::Or(a, b) => {
                CompiledFormula::Or(Box::new(Self::compile(a, legend)), Box::new(Self::compile(b, legend)))
            }
        }
    }

    pub fn eval<S: AtomSense + ?Sized>(&self, s: &S) -> bool {
        match self {
            CompiledFormula::Pred { atom, dx, dy } => s.atom(*atom, *dx, *dy),
            CompiledFormula::Not(g) => !g.eval(s),
            CompiledFormula::And(a, b) => a.eval(s) && b.eval(s),
            CompiledFormula::Or(a, b) => a.eval(s) || b.eval(s),
        }
    }
}

/// Id-level sensing used by the simulator.
pub trait AtomSense {
    fn atom(&self, atom: Atom, dx: i32, dy: i32) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledTransition {
    /// Index into [`Controller::transitions`].
    pub index: usize,
    pub trigger: Option<CompiledFormula>,
    pub modification: Option<(TypeId, i32, i32)>,
    pub direction: Direction,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledController {
    pub initial: usize,
    pub by_state: Vec<Vec<CompiledTransition>>,
}

impl CompiledController {
    /// Same rule as [`Controller::enabled_transitions`], on compiled data.
    pub fn enabled<'a, S: AtomSense + ?Sized>(&'a self, state: usize, s: &S, out: &mut Vec<&'a CompiledTransition>) {
        out.clear();
        let outgoing = &self.by_state[state];
        out.extend(
            outgoing
                .iter()
                .filter(|t| t.trigger.as_ref().is_some_and(|f| f.eval(s))),
        );
        if out.is_empty() {
            out.extend(outgoing.iter().filter(|t| t.trigger.is_none()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env(text: &str) -> Environment {
        Environment::parse(text).unwrap()
    }

    #[test]
    fn single_line_controller() {
        let c = Controller::parse("radius 0\ninitial s0\ns0: enval(grass,0,0) / * / goEast -> s0\n").unwrap();
        assert_eq!(c.num_states(), 1);
        assert_eq!(c.transitions().len(), 1);
        assert_eq!(c.transitions()[0].direction, Direction::East);
    }

    #[test]
    fn offset_beyond_radius_is_rejected() {
        let err = Controller::parse("radius 1\ninitial s0\ns0: enval(grass,2,0) / * / stay -> s0\n").unwrap_err();
        assert_eq!(
            err,
            ControllerError::OffsetBeyondRadius {
                line: 3,
                dx: 2,
                dy: 0,
                radius: 1
            }
        );
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = Controller::parse("radius 0\ninitial s0\ns0 enval(a,0,0) / * / stay -> s0\n").unwrap_err();
        assert!(matches!(err, ControllerError::Syntax { line: 3, .. }));
        let err = Controller::parse("radius 0\ninitial s0\ns0: enval(a,0,0) / * / fly -> s0\n").unwrap_err();
        assert!(matches!(err, ControllerError::Syntax { line: 3, .. }));
        let err = Controller::parse("radius 1\ninitial s0\ns0: enval(a,0,0) / enmod(b,1,1) / stay -> s0\n").unwrap_err();
        assert!(matches!(err, ControllerError::ModificationOffset { line: 3, .. }));
        let err = Controller::parse("radius 0\ninitial s0\ns0: enval(a,0,0) & * / * / stay -> s0\n").unwrap_err();
        assert!(matches!(err, ControllerError::Syntax { line: 3, .. }));
    }

    #[test]
    fn unknown_state_with_declared_states() {
        let err = Controller::parse("radius 0\ninitial s0\nstates s0\ns0: * / * / stay -> s1\n").unwrap_err();
        assert_eq!(
            err,
            ControllerError::UnknownState {
                line: 4,
                state: "s1".into()
            }
        );
    }

    #[test]
    fn percept_radius_zero() {
        let e = env("legend . grass\n\n..\n");
        let p = Percept::of(&e, &[Position::new(1, 1)], Position::new(1, 1), 0);
        assert_eq!(p.cells.len(), 1);
        let cell = &p.cells[&(0, 0)];
        assert_eq!(cell.ty, "grass");
        assert!(!cell.robot);
    }

    #[test]
    fn percept_sees_teammate_and_clips_at_edge() {
        let e = env("legend . grass\n\n...\n");
        let robots = [Position::new(1, 1), Position::new(2, 1)];
        let p = Percept::of(&e, &robots, Position::new(1, 1), 1);
        assert!(p.cells[&(1, 0)].robot);
        assert!(!p.cells.contains_key(&(-1, 0)));
        assert!(!p.cells.contains_key(&(0, 1)));
    }

    #[test]
    fn eval_trigger_examples() {
        let e = env("legend . grass\n\n..\n");
        let alone = Percept::of(&e, &[Position::new(1, 1)], Position::new(1, 1), 1);
        let own = Trigger::Formula(Formula::pred("grass", 0, 0));
        assert!(eval_trigger(&own, &alone).unwrap());
        let itself = Trigger::Formula(Formula::pred(ROBOT_TYPE, 0, 0));
        assert!(!eval_trigger(&itself, &alone).unwrap());
        let east_free = Trigger::Formula(Formula::pred(ROBOT_TYPE, 1, 0).negate());
        assert!(eval_trigger(&east_free, &alone).unwrap());
        let east_grass = Trigger::Formula(Formula::pred("grass", 1, 0));
        assert!(eval_trigger(&east_grass, &alone).unwrap());
        let west = Trigger::Formula(Formula::pred("grass", -1, 0));
        assert!(!eval_trigger(&west, &alone).unwrap());
        assert_eq!(eval_trigger(&Trigger::Star, &alone), Err(ControllerError::StarEvaluated));
    }

    #[test]
    fn enabled_prefers_non_default() {
        let c = Controller::parse(
            "radius 1\ninitial s0\n\
             s0: enval(grass,1,0) / * / goEast -> s0\n\
             s0: * / * / stay -> s0\n\
             s0: enval(grass,0,0) / * / goNorth -> s0\n",
        )
        .unwrap();
        let e = env("legend . grass\n\n..\n");
        let p = Percept::of(&e, &[Position::new(1, 1)], Position::new(1, 1), 1);
        let enabled = c.enabled_transitions(0, &p);
        assert_eq!(enabled.len(), 2);
        assert!(enabled.iter().all(|t| !t.trigger.is_star()));
        assert_eq!(enabled[0].direction, Direction::East);
        assert_eq!(enabled[1].direction, Direction::North);

        let stay_only = Controller::parse("radius 0\ninitial s0\ns0: enval(lava,0,0) / * / goEast -> s0\ns0: * / * / stay -> s0\n").unwrap();
        let enabled = stay_only.enabled_transitions(0, &p);
        assert_eq!(enabled.len(), 1);
        assert!(enabled[0].trigger.is_star());

        let none = Controller::parse("radius 0\ninitial s0\nstates s0 s1\ns1: * / * / stay -> s1\n").unwrap();
        assert!(none.enabled_transitions(0, &p).is_empty());
    }

    #[test]
    fn instantiate_template() {
        let t = TransitionTemplate::new(
            Trigger::Formula(Formula::pred("e1", 0, 0)),
            Modification::Star,
            Direction::East,
        );
        let looped = t.instantiate(0, 0);
        assert_eq!(looped.from, looped.to);
        let cross = t.instantiate(0, 1);
        assert_eq!((cross.from, cross.to), (0, 1));
        let n = 3;
        let mut all = std::collections::HashSet::new();
        for q in 0..n {
            for q2 in 0..n {
                all.insert(t.instantiate(q, q2));
            }
        }
        assert_eq!(all.len(), n * n);
    }

    #[test]
    fn template_lines_round_trip() {
        let text = "enval(e1,0,0) / * / goEast\n* / * / goNorth\n";
        let lib = parse_templates(text).unwrap();
        assert_eq!(lib.len(), 2);
        assert_eq!(render_templates(&lib), text);
    }

    fn arb_formula(radius: i32) -> impl Strategy<Value = Formula> {
        let leaf = (0usize..4, -radius..=radius, -radius..=radius).prop_filter_map("in radius", move |(t, dx, dy)| {
            (dx.abs() + dy.abs() <= radius).then(|| {
                let ty = ["grass", "gravel", "wall", ROBOT_TYPE][t];
                Formula::pred(ty, dx, dy)
            })
        });
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Formula::negate),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a.and(b)),
                (inner.clone(), inner).prop_map(|(a, b)| a.or(b)),
            ]
        })
    }

    fn arb_controller() -> impl Strategy<Value = Controller> {
        (1usize..4, 0u32..3).prop_flat_map(|(n, r)| {
            let trigger = prop_oneof![Just(Trigger::Star), arb_formula(r as i32).prop_map(Trigger::Formula)];
            let modification = prop_oneof![
                Just(Modification::Star),
                (0usize..2, 0usize..5).prop_map(|(t, o)| {
                    let (dx, dy) = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)][o];
                    Modification::Set { ty: ["grass", "gravel"][t].to_string(), dx, dy }
                }),
            ];
            let transition = (0..n, trigger, modification, 0usize..5, 0..n).prop_map(|(from, trigger, modification, d, to)| Transition {
                from,
                trigger,
                modification,
                direction: Direction::ALL[d],
                to,
            });
            (Just(n), Just(r), 0..n, prop::collection::vec(transition, 0..6))
        })
        .prop_map(|(n, r, initial, transitions)| {
            Controller::new((0..n).map(|i| format!("q{i}")).collect(), initial, r, transitions).unwrap()
        })
    }

    /// Independent evaluator over the raw environment, used as an oracle.
    fn naive_eval(f: &Formula, env: &Environment, robots: &[Position], at: Position) -> bool {
        match f {
            Formula::Pred { ty, dx, dy } => {
                let Some(p) = at.offset(*dx, *dy) else { return false };
                if !env.contains(p) {
                    return false;
                }
                let occupied = (*dx, *dy) != (0, 0) && robots.contains(&p);
                if ty == ROBOT_TYPE {
                    occupied
                } else {
                    !occupied && env.square_at(p).unwrap() == ty
                }
            }
            Formula::Not(g) => !naive_eval(g, env, robots, at),
            Formula::And(a, b) => naive_eval(a, env, robots, at) && naive_eval(b, env, robots, at),
            Formula::Or(a, b) => naive_eval(a, env, robots, at) || naive_eval(b, env, robots, at),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn controller_round_trip(c in arb_controller()) {
            let text = c.render();
            prop_assert_eq!(Controller::parse(&text).unwrap(), c);
        }

        #[test]
        fn eval_agrees_with_naive(f in arb_formula(2), cells in prop::collection::vec(0usize..3, 16), robots in prop::collection::vec((1u32..5, 1u32..5), 0..4), at in (1u32..5, 1u32..5)) {
            let mut legend = Legend::new();
            legend.add("grass", false).unwrap();
            legend.add("gravel", false).unwrap();
            legend.add("wall", true).unwrap();
            let mut e = Environment::filled(4, 4, legend, "grass").unwrap();
            for (i, t) in cells.iter().enumerate() {
                let p = e.position_of(i);
                e.paint(p, ["grass", "gravel", "wall"][*t]).unwrap();
            }
            let robots: Vec<Position> = robots.into_iter().map(|(c, r)| Position::new(c, r)).collect();
            let at = Position::new(at.0, at.1);
            let percept = Percept::of(&e, &robots, at, 2);
            prop_assert_eq!(eval_formula(&f, &percept), naive_eval(&f, &e, &robots, at));
        }

        #[test]
        fn enabled_never_mixes_default_and_guarded(c in arb_controller(), robots in prop::collection::vec((1u32..4, 1u32..4), 1..3)) {
            let mut legend = Legend::new();
            legend.add("grass", false).unwrap();
            legend.add("gravel", false).unwrap();
            let e = Environment::filled(3, 3, legend, "grass").unwrap();
            let robots: Vec<Position> = robots.into_iter().map(|(c, r)| Position::new(c, r)).collect();
            let percept = Percept::of(&e, &robots, robots[0], c.radius());
            for q in 0..c.num_states() {
                let enabled = c.enabled_transitions(q, &percept);
                let stars = enabled.iter().filter(|t| t.trigger.is_star()).count();
                prop_assert!(stars == 0 || stars == enabled.len());
            }
        }
    }
}
