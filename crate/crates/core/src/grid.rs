//! Bounded square-grid environments.
//!
//! Squares are addressed by 1-based `(col, row)` with `(1, 1)` in the
//! southwest corner. Every square carries a type from the environment's
//! legend; a legend entry also says whether squares of that type are
//! obstacles. Anything outside the grid behaves like an obstacle.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Sensing result for an occupied square. Never stored in a grid.
pub const ROBOT_TYPE: &str = "e_robot";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("position {0} is outside the grid")]
    OutOfBounds(Position),
    #[error("square type `{0}` is not in the legend")]
    UnknownType(String),
    #[error("square {0} is an obstacle and cannot be modified")]
    ObstacleModification(Position),
    #[error("type `{0}` is an obstacle type and cannot be written onto freespace")]
    ObstacleType(String),
    #[error("invalid legend: {0}")]
    Legend(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("grid dimensions must be positive, got {width}x{height}")]
    EmptyGrid { width: u32, height: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Position {
    pub col: u32,
    pub row: u32,
}

impl Position {
    pub const fn new(col: u32, row: u32) -> Self {
        Position { col, row }
    }

    /// Shifts by `(dx, dy)`; `None` when the result falls below column or row 1.
    pub fn offset(self, dx: i32, dy: i32) -> Option<Position> {
        let col = i64::from(self.col) + i64::from(dx);
        let row = i64::from(self.row) + i64::from(dy);
        if col < 1 || row < 1 || col > i64::from(u32::MAX) || row > i64::from(u32::MAX) {
            return None;
        }
        Some(Position::new(col as u32, row as u32))
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

pub fn manhattan_distance(a: Position, b: Position) -> u32 {
    a.col.abs_diff(b.col) + a.row.abs_diff(b.row)
}

/// Index of a legend entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeId(pub u16);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LegendEntry {
    pub name: String,
    pub symbol: char,
    pub obstacle: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Legend {
    entries: Vec<LegendEntry>,
}

fn valid_type_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
}

impl Legend {
    pub fn new() -> Self {
        Legend::default()
    }

    pub fn insert(&mut self, name: &str, symbol: char, obstacle: bool) -> Result<TypeId, GridError> {
        if name == ROBOT_TYPE {
            return Err(GridError::Legend(format!("`{ROBOT_TYPE}` is reserved")));
        }
        if !valid_type_name(name) {
            return Err(GridError::Legend(format!("bad type name `{name}`")));
        }
        if symbol.is_whitespace() || symbol.is_control() {
            return Err(GridError::Legend(format!("bad symbol {symbol:?}")));
        }
        if self.lookup(name).is_some() {
            return Err(GridError::Legend(format!("duplicate type `{name}`")));
        }
        if self.by_symbol(symbol).is_some() {
            return Err(GridError::Legend(format!("duplicate symbol `{symbol}`")));
        }
        if self.entries.len() >= usize::from(u16::MAX) {
            return Err(GridError::Legend("too many types".into()));
        }
        self.entries.push(LegendEntry {
            name: name.to_string(),
            symbol,
            obstacle,
        });
        Ok(TypeId((self.entries.len() - 1) as u16))
    }

    /// Inserts with the first unused symbol from a fixed pool.
    pub fn add(&mut self, name: &str, obstacle: bool) -> Result<TypeId, GridError> {
        let symbol = symbol_pool()
            .find(|c| self.by_symbol(*c).is_none())
            .ok_or_else(|| GridError::Legend("symbol pool exhausted".into()))?;
        self.insert(name, symbol, obstacle)
    }

    pub fn lookup(&self, name: &str) -> Option<TypeId> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .map(|i| TypeId(i as u16))
    }

    pub fn by_symbol(&self, symbol: char) -> Option<TypeId> {
        self.entries
            .iter()
            .position(|e| e.symbol == symbol)
            .map(|i| TypeId(i as u16))
    }

    pub fn entry(&self, id: TypeId) -> &LegendEntry {
        &self.entries[usize::from(id.0)]
    }

    pub fn name(&self, id: TypeId) -> &str {
        &self.entry(id).name
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TypeId, &LegendEntry)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (TypeId(i as u16), e))
    }
}

fn symbol_pool() -> impl Iterator<Item = char> {
    let ascii = ".#"
        .chars()
        .chain('a'..='z')
        .chain('A'..='Z')
        .chain('0'..='9')
        .chain("+*=%@&$~^:;!?<>/|-_,'\"`[]{}()".chars());
    // Latin-1 supplement and beyond, all single printable code points.
    let extended = (0x00C0u32..0x2000).filter_map(char::from_u32).filter(|c| c.is_alphabetic());
    ascii.chain(extended)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Environment {
    width: u32,
    height: u32,
    legend: Legend,
    cells: Vec<TypeId>,
}

impl Environment {
    /// A `width` x `height` grid with every square set to `fill`.
    pub fn filled(width: u32, height: u32, legend: Legend, fill: &str) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::EmptyGrid { width, height });
        }
        let fill = legend
            .lookup(fill)
            .ok_or_else(|| GridError::UnknownType(fill.to_string()))?;
        Ok(Environment {
            width,
            height,
            legend,
            cells: vec![fill; width as usize * height as usize],
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// `|E|`, the number of squares.
    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn legend(&self) -> &Legend {
        &self.legend
    }

    pub fn cells(&self) -> &[TypeId] {
        &self.cells
    }

    pub(crate) fn cells_mut(&mut self) -> &mut [TypeId] {
        &mut self.cells
    }

    pub fn contains(&self, p: Position) -> bool {
        p.col >= 1 && p.row >= 1 && p.col <= self.width && p.row <= self.height
    }

    /// Dense row-major index, row 1 first.
    pub fn index(&self, p: Position) -> Option<usize> {
        self.contains(p)
            .then(|| (p.row as usize - 1) * self.width as usize + (p.col as usize - 1))
    }

    pub fn position_of(&self, index: usize) -> Position {
        let w = self.width as usize;
        Position::new((index % w) as u32 + 1, (index / w) as u32 + 1)
    }

    pub fn type_id_at(&self, p: Position) -> Result<TypeId, GridError> {
        self.index(p)
            .map(|i| self.cells[i])
            .ok_or(GridError::OutOfBounds(p))
    }

    pub fn square_at(&self, p: Position) -> Result<&str, GridError> {
        self.type_id_at(p).map(|id| self.legend.name(id))
    }

    pub fn is_obstacle(&self, p: Position) -> Result<bool, GridError> {
        self.type_id_at(p).map(|id| self.legend.entry(id).obstacle)
    }

    /// True for in-bounds freespace squares.
    pub fn is_free(&self, p: Position) -> bool {
        matches!(self.is_obstacle(p), Ok(false))
    }

    pub fn set_square(&mut self, p: Position, ty: &str) -> Result<(), GridError> {
        let id = self
            .legend
            .lookup(ty)
            .ok_or_else(|| GridError::UnknownType(ty.to_string()))?;
        self.set_type_id(p, id)
    }

    pub fn set_type_id(&mut self, p: Position, id: TypeId) -> Result<(), GridError> {
        let idx = self.index(p).ok_or(GridError::OutOfBounds(p))?;
        if self.legend.entry(self.cells[idx]).obstacle {
            return Err(GridError::ObstacleModification(p));
        }
        let entry = self.legend.entry(id);
        if entry.obstacle {
            return Err(GridError::ObstacleType(entry.name.clone()));
        }
        self.cells[idx] = id;
        Ok(())
    }

    /// Unchecked write used by builders: may place obstacle types.
    pub fn paint(&mut self, p: Position, ty: &str) -> Result<(), GridError> {
        let id = self
            .legend
            .lookup(ty)
            .ok_or_else(|| GridError::UnknownType(ty.to_string()))?;
        let idx = self.index(p).ok_or(GridError::OutOfBounds(p))?;
        self.cells[idx] = id;
        Ok(())
    }

    /// Functional form of [`Environment::set_square`].
    pub fn with_square(&self, p: Position, ty: &str) -> Result<Environment, GridError> {
        let mut next = self.clone();
        next.set_square(p, ty)?;
        Ok(next)
    }

    /// All positions, row 1 first, west to east within a row.
    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        (0..self.cells.len()).map(|i| self.position_of(i))
    }

    pub fn parse(text: &str) -> Result<Environment, GridError> {
        let mut legend = Legend::new();
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut saw_blank = false;
        for (n, line) in lines.by_ref() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                saw_blank = true;
                break;
            }
            let mut parts = line.split_whitespace();
            if parts.next() != Some("legend") {
                return Err(parse_err(n, "expected `legend <symbol> <type> [obstacle]`"));
            }
            let symbol = parts.next().ok_or_else(|| parse_err(n, "missing symbol"))?;
            let mut sym_chars = symbol.chars();
            let sym = sym_chars.next().ok_or_else(|| parse_err(n, "missing symbol"))?;
            if sym_chars.next().is_some() {
                return Err(parse_err(n, "symbol must be a single character"));
            }
            let name = parts.next().ok_or_else(|| parse_err(n, "missing type name"))?;
            let obstacle = match parts.next() {
                None => false,
                Some("obstacle") => true,
                Some(other) => return Err(parse_err(n, &format!("unexpected `{other}`"))),
            };
            if parts.next().is_some() {
                return Err(parse_err(n, "trailing tokens after legend entry"));
            }
            legend
                .insert(name, sym, obstacle)
                .map_err(|e| parse_err(n, &e.to_string()))?;
        }
        if legend.is_empty() {
            return Err(parse_err(1, "missing legend header"));
        }
        if !saw_blank {
            return Err(parse_err(text.lines().count().max(1), "missing blank line before grid"));
        }
        let mut rows: Vec<(usize, Vec<TypeId>)> = Vec::new();
        for (n, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(line.len());
            for ch in line.chars() {
                let id = legend
                    .by_symbol(ch)
                    .ok_or_else(|| parse_err(n, &format!("unknown legend symbol `{ch}`")))?;
                row.push(id);
            }
            if let Some((_, first)) = rows.first() {
                if first.len() != row.len() {
                    return Err(parse_err(
                        n,
                        &format!("ragged row: expected {} squares, found {}", first.len(), row.len()),
                    ));
                }
            }
            rows.push((n, row));
        }
        if rows.is_empty() {
            return Err(parse_err(text.lines().count().max(1), "empty grid body"));
        }
        let height = rows.len() as u32;
        let width = rows[0].1.len() as u32;
        let mut cells = Vec::with_capacity((width * height) as usize);
        // File lists the northmost row first.
        for (_, row) in rows.iter().rev() {
            cells.extend_from_slice(row);
        }
        Ok(Environment {
            width,
            height,
            legend,
            cells,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (_, e) in self.legend.iter() {
            out.push_str("legend ");
            out.push(e.symbol);
            out.push(' ');
            out.push_str(&e.name);
            if e.obstacle {
                out.push_str(" obstacle");
            }
            out.push('\n');
        }
        out.push('\n');
        for row in (1..=self.height).rev() {
            for col in 1..=self.width {
                let id = self.cells[self.index(Position::new(col, row)).unwrap()];
                out.push(self.legend.entry(id).symbol);
            }
            out.push('\n');
        }
        out
    }

    /// Type name to id map, handy for builders.
    pub fn type_ids(&self) -> HashMap<&str, TypeId> {
        self.legend.iter().map(|(id, e)| (e.name.as_str(), id)).collect()
    }
}

fn parse_err(line: usize, message: &str) -> GridError {
    GridError::Parse {
        line,
        message: message.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_by_one() -> Environment {
        Environment::parse("legend . freespace\nlegend # wall obstacle\n\n.#\n").unwrap()
    }

    #[test]
    fn parse_transcribes_squares() {
        let env = two_by_one();
        assert_eq!(env.width(), 2);
        assert_eq!(env.height(), 1);
        assert_eq!(env.square_at(Position::new(1, 1)).unwrap(), "freespace");
        assert!(!env.is_obstacle(Position::new(1, 1)).unwrap());
        assert!(env.is_obstacle(Position::new(2, 1)).unwrap());
    }

    #[test]
    fn first_file_line_is_northmost_row() {
        let env = Environment::parse("legend a top\nlegend b bottom\n\naa\nbb\n").unwrap();
        assert_eq!(env.square_at(Position::new(1, 2)).unwrap(), "top");
        assert_eq!(env.square_at(Position::new(2, 1)).unwrap(), "bottom");
    }

    #[test]
    fn empty_body_is_rejected() {
        let err = Environment::parse("legend . grass\n\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { .. }), "{err}");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = Environment::parse("legend . grass\n\n..\n.x\n").unwrap_err();
        assert_eq!(
            err,
            GridError::Parse {
                line: 4,
                message: "unknown legend symbol `x`".into()
            }
        );
        let err = Environment::parse("legend . grass\n\n..\n...\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { line: 4, .. }));
        let err = Environment::parse("legnd . grass\n\n.\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { line: 1, .. }));
        let err = Environment::parse("legend r e_robot\n\nr\n").unwrap_err();
        assert!(matches!(err, GridError::Parse { line: 1, .. }));
    }

    #[test]
    fn square_at_is_one_based() {
        let env = Environment::parse("legend . grass\n\n.\n").unwrap();
        assert_eq!(env.square_at(Position::new(1, 1)).unwrap(), "grass");
        assert_eq!(
            env.square_at(Position::new(0, 1)),
            Err(GridError::OutOfBounds(Position::new(0, 1)))
        );
        assert!(env.square_at(Position::new(2, 1)).is_err());
    }

    #[test]
    fn set_square_read_your_write() {
        let env = Environment::parse("legend . grass\nlegend g gravel\n\n.\n").unwrap();
        let p = Position::new(1, 1);
        let next = env.with_square(p, "gravel").unwrap();
        assert_eq!(next.square_at(p).unwrap(), "gravel");
        assert_eq!(env.with_square(p, "grass").unwrap(), env);
    }

    #[test]
    fn set_square_errors() {
        let mut env = two_by_one();
        assert_eq!(
            env.set_square(Position::new(2, 1), "freespace"),
            Err(GridError::ObstacleModification(Position::new(2, 1)))
        );
        assert_eq!(
            env.set_square(Position::new(1, 1), "lava"),
            Err(GridError::UnknownType("lava".into()))
        );
        assert!(matches!(
            env.set_square(Position::new(1, 1), "wall"),
            Err(GridError::ObstacleType(_))
        ));
    }

    #[test]
    fn manhattan_examples() {
        let a = Position::new(1, 1);
        assert_eq!(manhattan_distance(a, a), 0);
        assert_eq!(manhattan_distance(a, Position::new(3, 4)), 5);
    }

    #[test]
    fn auto_symbols_are_unique() {
        let mut legend = Legend::new();
        for i in 0..300 {
            legend.add(&format!("t{i}"), i % 7 == 0).unwrap();
        }
        let mut symbols: Vec<char> = legend.iter().map(|(_, e)| e.symbol).collect();
        symbols.sort_unstable();
        symbols.dedup();
        assert_eq!(symbols.len(), 300);
    }

    fn arb_env() -> impl Strategy<Value = Environment> {
        (1u32..8, 1u32..8, 1usize..6, any::<u64>()).prop_map(|(w, h, ntypes, seed)| {
            let mut legend = Legend::new();
            for i in 0..ntypes {
                legend.add(&format!("t{i}"), i % 3 == 2).unwrap();
            }
            let mut env = Environment::filled(w, h, legend, "t0").unwrap();
            let mut s = seed;
            for p in env.positions().collect::<Vec<_>>() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let ty = format!("t{}", (s >> 33) as usize % ntypes);
                env.paint(p, &ty).unwrap();
            }
            env
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn parse_render_round_trip(env in arb_env()) {
            let text = env.render();
            prop_assert_eq!(Environment::parse(&text).unwrap(), env);
        }

        #[test]
        fn set_square_frame(env in arb_env(), col in 1u32..8, row in 1u32..8) {
            let p = Position::new(col, row);
            prop_assume!(env.is_free(p));
            let next = env.with_square(p, "t0").unwrap();
            for q in env.positions() {
                if q == p {
                    prop_assert_eq!(next.square_at(q).unwrap(), "t0");
                } else {
                    prop_assert_eq!(next.type_id_at(q).unwrap(), env.type_id_at(q).unwrap());
                }
                prop_assert_eq!(next.is_obstacle(q).unwrap(), env.is_obstacle(q).unwrap());
            }
        }

        #[test]
        fn manhattan_is_a_metric(a in (1u32..50, 1u32..50), b in (1u32..50, 1u32..50), c in (1u32..50, 1u32..50)) {
            let (a, b, c) = (Position::new(a.0, a.1), Position::new(b.0, b.1), Position::new(c.0, c.1));
            prop_assert_eq!(manhattan_distance(a, b), manhattan_distance(b, a));
            prop_assert_eq!(manhattan_distance(a, b) == 0, a == b);
            prop_assert!(manhattan_distance(a, c) <= manhattan_distance(a, b) + manhattan_distance(b, c));
        }
    }
}
