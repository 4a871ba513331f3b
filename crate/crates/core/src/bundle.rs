//! Instance bundles: a directory of small text files per problem instance.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::controller::{parse_controller_lines, parse_templates, render_templates, Controller, ControllerError};
use crate::grid::{Environment, GridError, Position};
use crate::problems::{ContDesLsInstance, TeamDesLsInstance, TeamEnvVerInstance};
use crate::sim::{Selector, SimError, TargetConfiguration, Team};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },
    #[error("{file}: {source}")]
    Grid { file: String, source: GridError },
    #[error("{file}: {source}")]
    Controller { file: String, source: ControllerError },
    #[error("missing file `{0}`")]
    Missing(String),
    #[error("limits.txt: missing key `{0}`")]
    MissingKey(String),
    #[error("unknown problem kind `{0}`")]
    UnknownProblem(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub enum Instance {
    TeamEnvVer(TeamEnvVerInstance),
    ContDesLs(ContDesLsInstance),
    TeamDesLs(TeamDesLsInstance),
}

impl Instance {
    pub fn kind(&self) -> &'static str {
        match self {
            Instance::TeamEnvVer(_) => "teamenvver",
            Instance::ContDesLs(_) => "contdesls",
            Instance::TeamDesLs(_) => "teamdesls",
        }
    }

    pub fn env(&self) -> &Environment {
        match self {
            Instance::TeamEnvVer(i) => &i.env,
            Instance::ContDesLs(i) => &i.env,
            Instance::TeamDesLs(i) => &i.env,
        }
    }

    /// Bundle file name to contents.
    pub fn to_files(&self) -> BTreeMap<String, String> {
        let mut files = BTreeMap::new();
        files.insert("env.txt".to_string(), self.env().render());
        let mut limits = vec![("problem".to_string(), self.kind().to_string())];
        match self {
            Instance::TeamEnvVer(i) => {
                files.insert("team.txt".into(), render_controllers(i.team.controllers()));
                let mut placement = String::new();
                for (robot, p) in i.placement.iter().enumerate() {
                    let _ = writeln!(placement, "{} {} {}", i.team.members()[robot], p.col, p.row);
                }
                files.insert("placement.txt".into(), placement);
                files.insert("task.txt".into(), render_task(&i.task));
                limits.push(("ec".into(), i.ec_budget.to_string()));
                limits.push(("h".into(), i.team.h().to_string()));
                limits.push(("Q".into(), i.team.max_states().to_string()));
                let r = i.team.controllers().iter().map(Controller::radius).max().unwrap_or(0);
                limits.push(("r".into(), r.to_string()));
            }
            Instance::ContDesLs(i) => {
                files.insert("library.txt".into(), render_templates(&i.library));
                files.insert("placement.txt".into(), render_positions(&i.placement));
                files.insert("task.txt".into(), render_task(&i.task));
                for (k, v) in [
                    ("T", i.team_size.to_string()),
                    ("h", i.max_types.to_string()),
                    ("Q", i.max_states.to_string()),
                    ("d", i.max_out_degree.to_string()),
                    ("r", i.radius.to_string()),
                    ("ec", i.ec_budget.to_string()),
                    ("c1", i.c1.to_string()),
                    ("c2", i.c2.to_string()),
                ] {
                    limits.push((k.into(), v));
                }
            }
            Instance::TeamDesLs(i) => {
                files.insert("library.txt".into(), render_controllers(&i.library));
                files.insert("region.txt".into(), render_positions(&i.region));
                files.insert("task.txt".into(), render_task(&i.task));
                let q = i.library.iter().map(Controller::num_states).max().unwrap_or(0);
                let r = i.library.iter().map(Controller::radius).max().unwrap_or(0);
                for (k, v) in [
                    ("T", i.team_size.to_string()),
                    ("h", i.max_types.to_string()),
                    ("Q", q.to_string()),
                    ("r", r.to_string()),
                    ("ec", i.ec_budget.to_string()),
                    ("c1", i.c1.to_string()),
                    ("c2", i.c2.to_string()),
                ] {
                    limits.push((k.into(), v));
                }
            }
        }
        let limits: String = limits.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        files.insert("limits.txt".into(), limits);
        files
    }

    pub fn from_files(files: &BTreeMap<String, String>) -> Result<Instance, BundleError> {
        let get = |name: &str| files.get(name).ok_or_else(|| BundleError::Missing(name.to_string()));
        let limits = parse_limits(get("limits.txt")?)?;
        let env = Environment::parse(get("env.txt")?).map_err(|source| BundleError::Grid {
            file: "env.txt".into(),
            source,
        })?;
        let task = parse_task(get("task.txt")?)?;
        let problem = limits.get("problem").ok_or_else(|| BundleError::MissingKey("problem".into()))?;
        match problem.as_str() {
            "teamenvver" => {
                let controllers = parse_controllers(get("team.txt")?, "team.txt")?;
                let mut members = Vec::new();
                let mut placement = Vec::new();
                for (line, fields) in numbered_fields(get("placement.txt")?) {
                    let [c, col, row] = numbers::<3>(&fields, "placement.txt", line)?;
                    members.push(c as usize);
                    placement.push(Position::new(col as u32, row as u32));
                }
                Ok(Instance::TeamEnvVer(TeamEnvVerInstance {
                    env,
                    team: Team::new(controllers, members)?,
                    placement,
                    ec_budget: limit(&limits, "ec")?,
                    task,
                }))
            }
            "contdesls" => Ok(Instance::ContDesLs(ContDesLsInstance {
                env,
                team_size: limit(&limits, "T")?,
                placement: parse_positions(get("placement.txt")?, "placement.txt")?,
                library: parse_templates(get("library.txt")?).map_err(|source| BundleError::Controller {
                    file: "library.txt".into(),
                    source,
                })?,
                radius: limit(&limits, "r")?,
                max_states: limit(&limits, "Q")?,
                max_out_degree: limit(&limits, "d")?,
                max_types: limit(&limits, "h")?,
                ec_budget: limit(&limits, "ec")?,
                task,
                c1: limit(&limits, "c1")?,
                c2: limit(&limits, "c2")?,
            })),
            "teamdesls" => Ok(Instance::TeamDesLs(TeamDesLsInstance {
                env,
                team_size: limit(&limits, "T")?,
                library: parse_controllers(get("library.txt")?, "library.txt")?,
                region: parse_positions(get("region.txt")?, "region.txt")?,
                max_types: limit(&limits, "h")?,
                ec_budget: limit(&limits, "ec")?,
                task,
                c1: limit(&limits, "c1")?,
                c2: limit(&limits, "c2")?,
            })),
            other => Err(BundleError::UnknownProblem(other.to_string())),
        }
    }

    /// SHA-256 over the canonical bundle rendering.
    pub fn digest(&self) -> String {
        files_digest(&self.to_files())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), BundleError> {
        write_files(dir, &self.to_files())
    }

    pub fn read_dir(dir: &Path) -> Result<Instance, BundleError> {
        Instance::from_files(&read_files(dir)?)
    }
}

pub fn write_files(dir: &Path, files: &BTreeMap<String, String>) -> Result<(), BundleError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| BundleError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(io(&path))?;
    }
    Ok(())
}

/// Reads every regular `.txt` file in `dir`.
pub fn read_files(dir: &Path) -> Result<BTreeMap<String, String>, BundleError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| BundleError::Io { path, source }
    };
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            let name = path.file_name().expect("file").to_string_lossy().into_owned();
            files.insert(name, std::fs::read_to_string(&path).map_err(io(&path))?);
        }
    }
    Ok(files)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn files_digest(files: &BTreeMap<String, String>) -> String {
    let mut canonical = String::new();
    for (name, content) in files {
        let _ = write!(canonical, "== {name} ==\n{content}");
    }
    sha256_hex(canonical.as_bytes())
}

pub fn render_controllers(controllers: &[Controller]) -> String {
    controllers
        .iter()
        .map(Controller::render)
        .collect::<Vec<_>>()
        .join("---\n")
}

/// Controller blocks separated by `---` lines.
pub fn parse_controllers(text: &str, file: &str) -> Result<Vec<Controller>, BundleError> {
    let mut blocks: Vec<Vec<(usize, &str)>> = vec![Vec::new()];
    for (i, line) in text.lines().enumerate() {
        if line.trim() == "---" {
            blocks.push(Vec::new());
        } else {
            blocks.last_mut().expect("non-empty").push((i + 1, line));
        }
    }
    blocks
        .into_iter()
        .filter(|b| b.iter().any(|(_, l)| !l.trim().is_empty()))
        .map(|b| {
            parse_controller_lines(b.into_iter()).map_err(|source| BundleError::Controller {
                file: file.to_string(),
                source,
            })
        })
        .collect()
}

pub fn render_positions(positions: &[Position]) -> String {
    positions.iter().map(|p| format!("{} {}\n", p.col, p.row)).collect()
}

pub fn parse_positions(text: &str, file: &str) -> Result<Vec<Position>, BundleError> {
    numbered_fields(text)
        .map(|(line, fields)| {
            let [col, row] = numbers::<2>(&fields, file, line)?;
            Ok(Position::new(col as u32, row as u32))
        })
        .collect()
}

pub fn render_task(task: &TargetConfiguration) -> String {
    let mut out = String::new();
    for (p, ty) in &task.squares {
        let _ = writeln!(out, "square {} {} {ty}", p.col, p.row);
    }
    for (sel, p) in &task.positions {
        let _ = writeln!(out, "pos {sel} {} {}", p.col, p.row);
    }
    for (sel, q) in &task.states {
        let _ = writeln!(out, "state {sel} {q}");
    }
    out
}

pub fn parse_task(text: &str) -> Result<TargetConfiguration, BundleError> {
    let file = "task.txt";
    let err = |line: usize, message: &str| BundleError::Parse {
        file: file.into(),
        line,
        message: message.into(),
    };
    let selector = |s: &str, line: usize| -> Result<Selector, BundleError> {
        if s == "any" {
            Ok(Selector::Any)
        } else {
            s.parse().map(Selector::Robot).map_err(|_| err(line, "selector must be `any` or a robot index"))
        }
    };
    let mut task = TargetConfiguration::default();
    for (line, fields) in numbered_fields(text) {
        match fields.as_slice() {
            ["square", c, r, ty] => {
                let [c, r] = numbers::<2>(&[c, r], file, line)?;
                task.squares.push((Position::new(c as u32, r as u32), ty.to_string()));
            }
            ["pos", sel, c, r] => {
                let [c, r] = numbers::<2>(&[c, r], file, line)?;
                task.positions.push((selector(sel, line)?, Position::new(c as u32, r as u32)));
            }
            ["state", sel, q] => task.states.push((selector(sel, line)?, q.to_string())),
            _ => return Err(err(line, "expected `square c r type`, `pos any|i c r` or `state any|i q`")),
        }
    }
    Ok(task)
}

fn parse_limits(text: &str) -> Result<BTreeMap<String, String>, BundleError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| BundleError::Parse {
            file: "limits.txt".into(),
            line: i + 1,
            message: "expected key=value".into(),
        })?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn limit<T: std::str::FromStr>(limits: &BTreeMap<String, String>, key: &str) -> Result<T, BundleError> {
    let v = limits.get(key).ok_or_else(|| BundleError::MissingKey(key.to_string()))?;
    v.parse().map_err(|_| BundleError::Parse {
        file: "limits.txt".into(),
        line: 0,
        message: format!("bad value `{v}` for `{key}`"),
    })
}

fn numbered_fields(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn numbers<const N: usize>(fields: &[&str], file: &str, line: usize) -> Result<[u64; N], BundleError> {
    let err = |message: String| BundleError::Parse {
        file: file.into(),
        line,
        message,
    };
    if fields.len() != N {
        return Err(err(format!("expected {N} numbers")));
    }
    let mut out = [0u64; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f.parse().map_err(|_| err(format!("bad number `{f}`")))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_round_trip() {
        let text = "square 1 2 grass\npos any 3 4\npos 0 1 1\nstate any s1\nstate 2 s0\n";
        let task = parse_task(text).unwrap();
        assert_eq!(task.positions[1], (Selector::Robot(0), Position::new(1, 1)));
        assert_eq!(render_task(&task), text);
    }

    #[test]
    fn task_errors_name_the_line() {
        let err = parse_task("pos any 1 1\npos some 1 1\n").unwrap_err();
        assert!(err.to_string().starts_with("task.txt:2:"), "{err}");
    }

    #[test]
    fn controller_blocks() {
        let text = "radius 0\ninitial s0\n---\nradius 1\ninitial a\nstates a b\na: * / * / stay -> b\n";
        let cs = parse_controllers(text, "team.txt").unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[1].num_states(), 2);
        assert_eq!(parse_controllers(&render_controllers(&cs), "team.txt").unwrap(), cs);
        let err = parse_controllers("radius 0\ninitial s0\n---\nradius 0\ninitial s0\ns0: fly\n", "team.txt").unwrap_err();
        assert!(err.to_string().starts_with("team.txt: line 6"), "{err}");
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
