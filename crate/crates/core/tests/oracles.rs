use fsr_core::oracles::*;
use fsr_core::problems::{design_controllers_ls, design_team_homogeneous, design_team_ls, SearchOptions};

/// Unit propagation with branching; shares nothing with the enumerating oracle.
fn dpll(clauses: &[Vec<i32>], assigned: &mut Vec<i32>) -> bool {
    let value = |l: i32, a: &[i32]| {
        if a.contains(&l) {
            Some(true)
        } else if a.contains(&-l) {
            Some(false)
        } else {
            None
        }
    };
    loop {
        let mut unit = None;
        for c in clauses {
            if c.iter().any(|&l| value(l, assigned) == Some(true)) {
                continue;
            }
            let open: Vec<i32> = c.iter().copied().filter(|&l| value(l, assigned).is_none()).collect();
            match open.as_slice() {
                [] => return false,
                [l] => {
                    unit = Some(*l);
                    break;
                }
                _ => {}
            }
        }
        match unit {
            Some(l) => assigned.push(l),
            None => break,
        }
    }
    let free = clauses
        .iter()
        .flatten()
        .copied()
        .find(|&l| value(l, assigned).is_none());
    match free {
        None => true,
        Some(l) => [l, -l].into_iter().any(|choice| {
            let mut a = assigned.clone();
            a.push(choice);
            dpll(clauses, &mut a)
        }),
    }
}

#[test]
fn sat_oracle_matches_unit_propagation() {
    let mut r = rng(7);
    for _ in 0..100 {
        let mut cnf = random_3cnf(&mut r, 4, 12);
        cnf.num_vars = 4;
        assert_eq!(sat_oracle(&cnf).unwrap(), dpll(&cnf.clauses, &mut Vec::new()), "{cnf:?}");
    }
}

#[test]
fn domset_oracle_is_monotone_in_k() {
    let mut r = rng(11);
    for _ in 0..60 {
        let g = random_graph(&mut r, 6, 0.3);
        for k in 1..g.num_vertices {
            if domset_oracle(&g, k).unwrap() {
                assert!(domset_oracle(&g, k + 1).unwrap());
            }
        }
    }
}

#[test]
fn team_oracle_examples() {
    let mut r = rng(3);
    let mut inst = random_homogeneous_instance(&mut r);
    inst.library.clear();
    assert!(!design_team_oracle(&inst, 1000).unwrap());
}

#[test]
fn team_oracle_agrees_with_solvers() {
    let mut r = rng(21);
    let mut found = 0;
    for _ in 0..50 {
        let inst = random_team_instance(&mut r);
        let oracle = design_team_oracle(&inst, 100_000).unwrap();
        let solver = design_team_ls(&inst, &SearchOptions::default()).unwrap().outcome.is_found();
        assert_eq!(oracle, solver);
        found += oracle as usize;
        if inst.max_types == 1 {
            assert_eq!(design_team_homogeneous(&inst).unwrap().outcome.is_found(), oracle);
        }
    }
    assert!(found > 0 && found < 50, "corpus should mix yes and no ({found})");
}

#[test]
fn controller_oracle_agrees_with_lazy_search() {
    let mut r = rng(5);
    let mut found = 0;
    for i in 0..60 {
        let inst = random_controller_instance(&mut r);
        let oracle = design_controllers_oracle(&inst, 5_000_000).unwrap();
        let solver = design_controllers_ls(&inst, &SearchOptions::default()).unwrap().outcome.is_found();
        assert_eq!(oracle, solver, "instance {i}: {inst:?}");
        found += oracle as usize;
    }
    assert!(found > 0 && found < 60, "corpus should mix yes and no ({found})");
}

#[test]
fn cross_validation_two_variable_corpus() {
    let corpus: Vec<CorpusItem> = all_3cnfs(2, 2)
        .into_iter()
        .enumerate()
        .map(|(i, c)| CorpusItem { label: i.to_string(), source: Source::Cnf(c) })
        .collect();
    let report = cross_validate(Construction::ThreeSatTeamEnvVer, &corpus, &CrossOptions::default()).unwrap();
    assert!(report.ok(), "{}", report.render());
    assert_eq!(report.agreements, corpus.len());
    let again = cross_validate(Construction::ThreeSatTeamEnvVer, &corpus, &CrossOptions::default()).unwrap();
    assert_eq!(report.digest(), again.digest());
}

#[test]
fn cross_validation_four_vertex_graphs() {
    let corpus: Vec<CorpusItem> = all_graphs(4)
        .into_iter()
        .flat_map(|g| [1, 2].map(|k| CorpusItem { label: format!("k{k}"), source: Source::Graph(g.clone(), k) }))
        .collect();
    let report = cross_validate(Construction::DomSetContDesLs, &corpus, &CrossOptions::default()).unwrap();
    assert!(report.ok(), "{}", report.render());
}

#[test]
fn manifest_entries() {
    let dir = std::env::temp_dir();
    let items = load_manifest("# c\nall 1 1\nrandom 4 3 2 2\n", &dir, Construction::ThreeSatTeamDesLs).unwrap();
    assert_eq!(items.len(), 3 + 3);
    let graphs = load_manifest("all 2 1\n", &dir, Construction::DomSetContDesLs).unwrap();
    assert_eq!(graphs.len(), 2);
    assert!(matches!(
        load_manifest("x y z\n", &dir, Construction::DomSetContDesLs),
        Err(OracleError::Manifest { line: 1, .. })
    ));
}
