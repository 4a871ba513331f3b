//! Browser demo: each operation takes text inputs and returns a JSON
//! document with a verdict and animation frames for the page's canvas.

use fsr_core::bundle::parse_controllers;
use fsr_core::oracles::{domset_oracle, sat_oracle};
use fsr_core::problems::{default_step_budget, design_controllers_ls, verify_team_env, SearchOptions};
use fsr_core::reductions::{decode_dominating_set, parse_dimacs_cnf, parse_graph, reduce_3sat_to_teamenvver, reduce_domset_to_contdesls};
use fsr_core::sim::{self, Configuration, RunOptions, RunResult, Team};
use fsr_core::{Environment, Position};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Longest run the page will animate.
pub const MAX_STEPS: u64 = 5_000;

fn pos(p: &Position) -> Value {
    json!([p.col, p.row])
}

/// Grid, legend and one frame per recorded step, starting with `placement`.
fn animation(env: &Environment, placement: &[Position], run: &RunResult) -> Value {
    let legend: Vec<Value> = env
        .legend()
        .iter()
        .map(|(_, e)| json!({ "name": e.name, "obstacle": e.obstacle }))
        .collect();
    let cells: Vec<usize> = env.cells().iter().map(|id| id.0 as usize).collect();
    let mut frames = vec![json!({ "t": 0, "positions": placement.iter().map(pos).collect::<Vec<_>>(), "states": [], "mods": [] })];
    frames.extend(run.trace.iter().map(|r| {
        json!({
            "t": r.t,
            "positions": r.positions.iter().map(pos).collect::<Vec<_>>(),
            "states": r.states,
            "mods": r.mods.iter().map(|(p, ty)| json!([p.col, p.row, ty])).collect::<Vec<_>>(),
        })
    }));
    json!({
        "width": env.width(),
        "height": env.height(),
        "legend": legend,
        "cells": cells,
        "frames": frames,
        "outcome": run.outcome.to_string(),
    })
}

fn parse_placement(text: &str) -> Result<(Vec<usize>, Vec<Position>), String> {
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
            _ => return Err(format!("placement line {}: expected `<controller> <col> <row>`", i + 1)),
        }
    }
    Ok((members, placement))
}

/// Runs a team for up to `steps` steps (capped at [`MAX_STEPS`]).
pub fn simulate_json(env: &str, team: &str, placement: &str, steps: u64) -> Result<String, String> {
    let env = Environment::parse(env).map_err(|e| format!("environment: {e}"))?;
    let controllers = parse_controllers(team, "team").map_err(|e| e.to_string())?;
    let (members, placement) = parse_placement(placement)?;
    let team = Team::new(controllers, members).map_err(|e| e.to_string())?;
    let c0 = Configuration::initial(env.clone(), &team, placement.clone()).map_err(|e| e.to_string())?;
    let opts = RunOptions {
        step_budget: steps.min(MAX_STEPS),
        ec_budget: u64::MAX,
        detect_cycles: false,
        record_trace: true,
    };
    let run = sim::simulate(&c0, &team, &opts).map_err(|e| e.to_string())?;
    Ok(animation(&env, &placement, &run).to_string())
}

/// Reduces a graph to controller design, solves it and decodes the set.
pub fn domset_json(graph: &str, k: usize) -> Result<String, String> {
    let g = parse_graph(graph).map_err(|e| e.to_string())?;
    if g.num_vertices > 6 {
        return Err("the demo handles at most 6 vertices".into());
    }
    let oracle = domset_oracle(&g, k).map_err(|e| e.to_string())?;
    let (inst, _) = reduce_domset_to_contdesls(&g, k).map_err(|e| e.to_string())?;
    let report = design_controllers_ls(&inst, &SearchOptions::default()).map_err(|e| e.to_string())?;
    let mut out = json!({ "oracle": oracle, "found": report.outcome.is_found(), "candidates": report.stats.candidates });
    if let Some(d) = report.outcome.design() {
        let set: Vec<usize> = decode_dominating_set(&d.team.controllers()[0]).into_iter().collect();
        out["set"] = json!(set);
        out["controller"] = json!(d.team.controllers()[0].render());
        out["animation"] = animation(&inst.env, &inst.placement, &d.run);
    }
    Ok(out.to_string())
}

/// Reduces a 3-CNF to team verification and runs the verifier.
pub fn verify_cnf_json(cnf: &str) -> Result<String, String> {
    let cnf = parse_dimacs_cnf(cnf).map_err(|e| e.to_string())?;
    if cnf.num_vars > 8 {
        return Err("the demo handles at most 8 variables".into());
    }
    let oracle = sat_oracle(&cnf).map_err(|e| e.to_string())?;
    let (inst, _) = reduce_3sat_to_teamenvver(&cnf).map_err(|e| e.to_string())?;
    let budget = default_step_budget(&inst.env, &inst.team, 10, 3).map_err(|e| e.to_string())?;
    let v = verify_team_env(&inst, budget, true).map_err(|e| e.to_string())?;
    Ok(json!({
        "oracle": oracle,
        "yes": v.yes,
        "animation": animation(&inst.env, &inst.placement, &v.run),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn simulate(env: &str, team: &str, placement: &str, steps: u32) -> Result<String, JsValue> {
    simulate_json(env, team, placement, steps as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn dominating_set(graph: &str, k: u32) -> Result<String, JsValue> {
    domset_json(graph, k as usize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn verify_cnf(cnf: &str) -> Result<String, JsValue> {
    verify_cnf_json(cnf).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn simulate_walker() {
        let out = simulate_json(
            "legend . floor\n\n....\n",
            "radius 0\ninitial s0\nstates s0\ns0: * / * / goEast -> s0\n",
            "0 1 1\n",
            10,
        )
        .unwrap();
        let v = parse(&out);
        assert_eq!(v["width"], 4);
        assert_eq!(v["frames"][3]["positions"][0], json!([4, 1]));
        assert!(v["outcome"].as_str().unwrap().starts_with("failure obstacle"));
    }

    #[test]
    fn domset_p3() {
        let v = parse(&domset_json("p edge 3 2\ne 1 2\ne 2 3\n", 1).unwrap());
        assert_eq!((v["oracle"].as_bool(), v["found"].as_bool()), (Some(true), Some(true)));
        assert_eq!(v["set"], json!([2]));
    }

    #[test]
    fn cnf_verdicts() {
        let v = parse(&verify_cnf_json("p cnf 1 2\n1 1 1 0\n-1 -1 -1 0\n").unwrap());
        assert_eq!((v["oracle"].as_bool(), v["yes"].as_bool()), (Some(false), Some(false)));
        assert!(verify_cnf_json("p cnf 1 1\n1 0\n").is_err());
    }

    #[test]
    fn page_defaults_run() {
        let env = "legend . floor\nlegend # wall obstacle\n\n#######\n#.....#\n#.#.#.#\n#.....#\n#######\n";
        let team = "radius 1\ninitial e\nstates e w\ne: enval(floor,1,0) / * / goEast -> e\ne: * / * / stay -> w\nw: enval(floor,-1,0) / * / goWest -> w\nw: * / * / stay -> e\n";
        let v = parse(&simulate_json(env, team, "0 2 2\n0 6 4\n", 40).unwrap());
        assert_eq!(v["frames"].as_array().unwrap().len(), 41);
        let d = parse(&domset_json("p edge 4 3\ne 1 2\ne 2 3\ne 3 4\n", 2).unwrap());
        assert_eq!(d["found"], d["oracle"]);
        let c = parse(&verify_cnf_json("p cnf 3 3\n1 2 -3 0\n-1 2 3 0\n-2 -2 3 0\n").unwrap());
        assert_eq!(c["yes"], c["oracle"]);
    }
}
