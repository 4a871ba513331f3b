use fsr_core::bundle::Instance;
use fsr_core::problems::{
    default_step_budget, design_controllers_ls, design_team_ls, verify_team_env, SearchOptions,
};
use fsr_core::reductions::*;
use fsr_core::sim::Outcome;

fn sat() -> Cnf {
    Cnf::new(2, vec![vec![1, 2, 2], vec![-1, 2, 2]])
}

fn unsat() -> Cnf {
    Cnf::new(1, vec![vec![1, 1, 1], vec![-1, -1, -1]])
}

#[test]
fn teamenvver_tracks_satisfiability() {
    for (cnf, expect) in [(sat(), true), (unsat(), false), (Cnf::new(1, vec![vec![1, 1, 1]]), true)] {
        let (inst, _) = reduce_3sat_to_teamenvver(&cnf).unwrap();
        let budget = default_step_budget(&inst.env, &inst.team, 10, 3).unwrap();
        let v = verify_team_env(&inst, budget, true).unwrap();
        assert_eq!(v.yes, expect, "{:?}", v.run.outcome);
        if !expect {
            assert!(matches!(v.run.outcome, Outcome::CycleDetected { .. }));
        }
    }
}

#[test]
fn teamdesls_tracks_satisfiability() {
    let cnf = sat();
    let (inst, _) = reduce_3sat_to_teamdesls(&cnf).unwrap();
    let report = design_team_ls(&inst, &SearchOptions::default()).unwrap();
    let design = report.outcome.design().expect("satisfiable");
    let assignment = decode_assignment(&design.assignment, cnf.num_vars);
    assert!(cnf.eval(&assignment));

    let (inst, _) = reduce_3sat_to_teamdesls(&unsat()).unwrap();
    let report = design_team_ls(&inst, &SearchOptions::default()).unwrap();
    assert!(!report.outcome.is_found());
}

#[test]
fn domset_verdicts() {
    for (g, k, expect) in [
        (Graph::path(3), 1, true),
        (Graph::complete(3), 1, true),
        (Graph::edgeless(3), 2, false),
        (Graph::edgeless(3), 3, true),
        (Graph::path(4), 1, false),
        (Graph::path(4), 2, true),
    ] {
        let (inst, _) = reduce_domset_to_contdesls(&g, k).unwrap();
        let report = design_controllers_ls(&inst, &SearchOptions::default()).unwrap();
        assert_eq!(report.outcome.is_found(), expect, "{g:?} k={k}");
        if let Some(d) = report.outcome.design() {
            let set = decode_dominating_set(&d.team.controllers()[0]);
            assert!(set.len() <= k);
            for v in 1..=g.num_vertices {
                assert!(neighborhood(&g, v).iter().any(|u| set.contains(u)));
            }
        }
    }
}

#[test]
fn ladder_forces_state_count() {
    let (base, _) = reduce_domset_to_contdesls(&Graph::path(3), 1).unwrap();
    let ladder = extend_with_state_ladder(&base, 3, 1).unwrap();
    let found = design_controllers_ls(&ladder, &SearchOptions::default()).unwrap();
    assert!(found.outcome.is_found());
    let fewer = fsr_core::problems::ContDesLsInstance { max_states: 2, ..ladder.clone() };
    assert!(!design_controllers_ls(&fewer, &SearchOptions::default()).unwrap().outcome.is_found());

    let (base, _) = reduce_domset_to_contdesls(&Graph::edgeless(3), 2).unwrap();
    let ladder = extend_with_state_ladder(&base, 3, 2).unwrap();
    assert!(!design_controllers_ls(&ladder, &SearchOptions::default()).unwrap().outcome.is_found());
}

#[test]
fn holding_area_keeps_verdicts() {
    for (cnf, expect) in [(sat(), true), (unsat(), false)] {
        let (inst, _) = reduce_3sat_to_teamenvver(&cnf).unwrap();
        let Instance::TeamEnvVer(held) = add_holding_area(&Instance::TeamEnvVer(inst), 2, 3).unwrap() else {
            unreachable!()
        };
        let budget = default_step_budget(&held.env, &held.team, 10, 3).unwrap();
        assert_eq!(verify_team_env(&held, budget, true).unwrap().yes, expect);

        let (inst, _) = reduce_3sat_to_teamdesls(&cnf).unwrap();
        let Instance::TeamDesLs(held) = add_holding_area(&Instance::TeamDesLs(inst), 1, 2).unwrap() else {
            unreachable!()
        };
        assert_eq!(design_team_ls(&held, &SearchOptions::default()).unwrap().outcome.is_found(), expect);
    }
    let (inst, _) = reduce_domset_to_contdesls(&Graph::path(3), 1).unwrap();
    let Instance::ContDesLs(held) = add_holding_area(&Instance::ContDesLs(inst), 2, 1).unwrap() else {
        unreachable!()
    };
    assert!(design_controllers_ls(&held, &SearchOptions::default()).unwrap().outcome.is_found());
}

mod properties {
    use fsr_core::oracles::*;
    use fsr_core::problems::{design_controllers_ls, SearchOptions};
    use fsr_core::reductions::*;

    fn cnf_corpus(seed: u64, count: usize) -> Vec<CorpusItem> {
        let mut r = rng(seed);
        (0..count)
            .map(|i| CorpusItem { label: i.to_string(), source: Source::Cnf(random_3cnf(&mut r, 4, 4)) })
            .collect()
    }

    #[test]
    fn random_cnfs_agree_for_both_constructions() {
        let corpus = cnf_corpus(99, 120);
        for c in [Construction::ThreeSatTeamEnvVer, Construction::ThreeSatTeamDesLs] {
            let report = cross_validate(c, &corpus, &CrossOptions::default()).unwrap();
            assert!(report.ok(), "{}", report.render());
        }
    }

    #[test]
    fn five_vertex_graphs_agree() {
        let corpus: Vec<CorpusItem> = all_graphs(5)
            .into_iter()
            .flat_map(|g| [1, 2].map(|k| CorpusItem { label: format!("k{k}"), source: Source::Graph(g.clone(), k) }))
            .collect();
        let report = cross_validate(Construction::DomSetContDesLs, &corpus, &CrossOptions::default()).unwrap();
        assert!(report.ok(), "{}", report.render());
    }

    #[test]
    fn parameter_profiles_and_sizes() {
        let mut r = rng(4);
        for _ in 0..30 {
            let cnf = random_3cnf(&mut r, 4, 4);
            let (n, m) = (cnf.num_vars, cnf.clauses.len());
            let (tev, _) = reduce_3sat_to_teamenvver(&cnf).unwrap();
            assert_eq!(tev.team.h(), 1);
            assert_eq!(tev.team.max_states(), 1);
            assert_eq!(tev.ec_budget, 0);
            assert!(tev.team.controllers().iter().all(|c| !c.modifies()));
            assert_eq!(tev.env.size(), 5 * n);

            let (tdls, _) = reduce_3sat_to_teamdesls(&cnf).unwrap();
            assert_eq!((tdls.library.len(), tdls.max_types, tdls.ec_budget), (2, 2, 0));
            assert!(tdls.library.iter().all(|c| c.num_states() == 1 && !c.modifies()));
            assert_eq!(tdls.env.size(), (n + 4) * (m + 3));
        }
        for n in 1..=5 {
            let g = random_graph(&mut r, n, 0.4);
            let (cdls, _) = reduce_domset_to_contdesls(&g, 1).unwrap();
            assert_eq!((cdls.max_states, cdls.max_types, cdls.ec_budget, cdls.radius, cdls.max_out_degree), (1, 1, 0, 0, 2));
            assert_eq!(cdls.env.size(), (n + 1) * (n * n + 1));
            let ladder = extend_with_state_ladder(&cdls, 3, 1).unwrap();
            assert_eq!((ladder.max_states, ladder.max_out_degree), (3, 4));
            assert!(ladder.env.size() <= (n + 5) * (n * n + 4 + 3));
        }
    }

    #[test]
    fn witnesses_modify_nothing_and_fit_the_manhattan_bound() {
        for g in all_graphs(4) {
            let (inst, _) = reduce_domset_to_contdesls(&g, 2).unwrap();
            if let Some(d) = design_controllers_ls(&inst, &SearchOptions::default()).unwrap().outcome.design() {
                assert!(d.run.trace.iter().all(|r| r.ec == 0 && r.mods.is_empty()));
                assert!(d.run.trace.len() <= (4 + 1) + (16 + 1));
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let g = Graph::path(4);
        let a = reduce_domset_to_contdesls(&g, 2).unwrap().1;
        let b = reduce_domset_to_contdesls(&g, 2).unwrap().1;
        assert_eq!(a.instance_digest, b.instance_digest);
    }
}
