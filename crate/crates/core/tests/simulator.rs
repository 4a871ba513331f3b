use fsr_core::grid::Position;
use fsr_core::oracles::{random_system, rng};
use fsr_core::sim::{render_trace, run, step, Configuration, Outcome, RunOptions, Selector, TargetConfiguration, Team};
use fsr_core::{Controller, Environment};
use proptest::prelude::*;

/// Robot 0 on two squares at once.
fn unreachable_task() -> TargetConfiguration {
    TargetConfiguration {
        positions: vec![(Selector::Robot(0), Position::new(1, 1)), (Selector::Robot(0), Position::new(2, 1))],
        ..Default::default()
    }
}

fn start(seed: u64) -> (Configuration, Team) {
    let mut r = rng(seed);
    let (env, team, placement) = random_system(&mut r, 7, 4);
    (Configuration::initial(env, &team, placement).unwrap(), team)
}

fn check_positions(c: &Configuration) {
    let mut seen = std::collections::HashSet::new();
    for p in &c.positions {
        assert!(seen.insert(*p), "two robots on {p}");
        assert!(c.env.is_free(*p), "robot on obstacle {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn step_invariants(seed in any::<u64>()) {
        let (mut c, team) = start(seed);
        check_positions(&c);
        for _ in 0..60 {
            let next = match step(&c, &team).unwrap() {
                Ok(n) => n,
                Err(_) => break,
            };
            check_positions(&next);
            prop_assert_eq!(next.t, c.t + 1);
            prop_assert!(next.ec >= c.ec);
            for (a, b) in c.positions.iter().zip(&next.positions) {
                prop_assert!(a.col.abs_diff(b.col) + a.row.abs_diff(b.row) <= 1);
            }
            // Changed squares sit next to (or under) a robot's starting square.
            let changed = c.env.positions().filter(|p| c.env.square_at(*p).unwrap() != next.env.square_at(*p).unwrap());
            for p in changed {
                prop_assert!(c.positions.iter().any(|r| r.col.abs_diff(p.col) + r.row.abs_diff(p.row) <= 1));
            }
            c = next;
        }
    }

    #[test]
    fn trace_invariants(seed in any::<u64>()) {
        let (c0, team) = start(seed);
        let task = unreachable_task();
        let opts = RunOptions::new(200, u64::MAX);
        let a = run(&c0, &team, &task, &opts).unwrap();
        let b = run(&c0, &team, &task, &opts).unwrap();
        prop_assert_eq!(render_trace(&a.trace), render_trace(&b.trace));
        prop_assert_eq!(&a.outcome, &b.outcome);
        let mut env = c0.env.clone();
        let mut ec = 0;
        for rec in &a.trace {
            for (p, ty) in &rec.mods {
                env.paint(*p, ty).unwrap();
            }
            prop_assert_eq!(rec.ec, ec + rec.mods.len() as u64);
            ec = rec.ec;
        }
        // Frame: replaying only the logged modifications reproduces the final grid.
        prop_assert_eq!(env, a.final_config.env.clone());
        if let Outcome::CycleDetected { .. } = a.outcome {
            let longer = RunOptions { detect_cycles: false, record_trace: false, ..RunOptions::new(2000, u64::MAX) };
            prop_assert!(!run(&c0, &team, &task, &longer).unwrap().outcome.is_success());
        }
    }

    #[test]
    fn success_is_budget_monotone(seed in any::<u64>(), extra in 0u64..50) {
        let (c0, team) = start(seed);
        let task = TargetConfiguration { positions: vec![(Selector::Any, c0.env.positions().find(|p| c0.env.is_free(*p)).unwrap())], ..Default::default() };
        let base = run(&c0, &team, &task, &RunOptions::new(100, u64::MAX)).unwrap();
        if let Outcome::Success { t } = base.outcome {
            let more = run(&c0, &team, &task, &RunOptions::new(t + extra, u64::MAX)).unwrap();
            prop_assert_eq!(more.outcome, Outcome::Success { t });
            prop_assert_eq!(more.trace, base.trace);
        }
    }
}

fn corridor(w: usize) -> Environment {
    Environment::parse(&format!("legend . floor\n\n{}\n", ".".repeat(w))).unwrap()
}

#[test]
fn stay_robot_idles() {
    let c = Controller::parse("radius 0\ninitial s0\nstates s0\ns0: * / * / stay -> s0\n").unwrap();
    let team = Team::homogeneous(c, 1).unwrap();
    let c0 = Configuration::initial(corridor(3), &team, vec![Position::new(2, 1)]).unwrap();
    let next = step(&c0, &team).unwrap().unwrap();
    assert_eq!((next.t, next.ec, &next.positions, &next.env), (1, 0, &c0.positions, &c0.env));
}

#[test]
fn oscillation_is_a_cycle() {
    let c = Controller::parse("radius 0\ninitial a\nstates a b\na: * / * / goEast -> b\nb: * / * / goWest -> a\n").unwrap();
    let team = Team::homogeneous(c, 1).unwrap();
    let c0 = Configuration::initial(corridor(3), &team, vec![Position::new(1, 1)]).unwrap();
    let task = TargetConfiguration { positions: vec![(Selector::Any, Position::new(3, 1))], ..Default::default() };
    let r = run(&c0, &team, &task, &RunOptions::new(100, 0)).unwrap();
    assert_eq!(r.outcome, Outcome::CycleDetected { t: 2, first: 0 });
}
