//! End-to-end HTTP contract: a local stub wrapping the symbolic policy must
//! agree with the in-process backend to within 1e-9.

use std::collections::BTreeSet;

use tom_core::domain::{Action, ObjectClass, PlannerConfig, Predicate};
use tom_core::oracle::{
    ActionOracle, OracleBackend, OracleConfig, PolicyQuery, RemoteOracle, StubServer,
    SymbolicOracle,
};
use tom_core::planner::StateAbstraction;
use tom_core::world::k2_fixture;

fn queries() -> Vec<PolicyQuery> {
    let summaries: Vec<BTreeSet<Predicate>> = vec![
        BTreeSet::from([
            Predicate::AgentInRoom("kitchen".into()),
            Predicate::CloseTo("fridge".into()),
            Predicate::IsClosed("fridge".into()),
            Predicate::IsClosed("cabinet".into()),
        ]),
        BTreeSet::from([
            Predicate::AgentInRoom("livingroom".into()),
            Predicate::IsClosed("fridge".into()),
            Predicate::IsClosed("cabinet".into()),
        ]),
        BTreeSet::from([
            Predicate::AgentInRoom("kitchen".into()),
            Predicate::CloseTo("fridge".into()),
            Predicate::IsOpen("fridge".into()),
            Predicate::IsClosed("cabinet".into()),
            Predicate::In("apple_1".parse().unwrap(), "fridge".into()),
        ]),
    ];
    let beliefs = vec![
        vec!["in(fridge)".parse().unwrap()],
        vec![
            "in(fridge)".parse().unwrap(),
            "in(cabinet)".parse().unwrap(),
            "on(kitchentable)".parse().unwrap(),
        ],
    ];
    let mut out = Vec::new();
    for summary in &summaries {
        for belief in &beliefs {
            out.push(PolicyQuery {
                state_summary: summary.clone(),
                belief_locations: belief.clone(),
                goal: ObjectClass::new("apple"),
                action: Action::Idle, // replaced per applicable action below
            });
        }
    }
    out
}

#[test]
fn stub_backend_matches_symbolic_within_1e9() {
    let file = k2_fixture();
    let planner = PlannerConfig {
        beta: 50.0,
        ..Default::default()
    };
    let symbolic = SymbolicOracle::new(&file.layout, planner.clone());
    let stub = StubServer::spawn(file.layout.clone(), planner.clone()).unwrap();
    let remote = RemoteOracle::new(
        &file.layout,
        OracleConfig {
            backend: OracleBackend::Remote,
            endpoint_url: Some(stub.url().to_owned()),
            ..Default::default()
        },
    )
    .unwrap();

    let mut compared = 0;
    for template in queries() {
        let abs =
            StateAbstraction::from_predicates(&file.layout, &template.state_summary).unwrap();
        for action in symbolic.engine().applicable_actions(&abs).unwrap() {
            let query = PolicyQuery {
                action,
                ..template.clone()
            };
            let local = symbolic.action_likelihood(&query).unwrap();
            let over_http = remote.action_likelihood(&query).unwrap();
            assert!(
                (local.probability - over_http.probability).abs() < 1e-9,
                "{:?}: {} vs {}",
                query.action,
                local.probability,
                over_http.probability
            );
            compared += 1;
        }
    }
    assert!(compared >= 15, "exercised {compared} likelihoods");
}

#[test]
fn missing_endpoint_is_rejected_up_front() {
    let file = k2_fixture();
    std::env::remove_var(tom_core::oracle::ORACLE_URL_ENV);
    let err = RemoteOracle::new(
        &file.layout,
        OracleConfig {
            backend: OracleBackend::Remote,
            endpoint_url: None,
            ..Default::default()
        },
    )
    .err()
    .expect("endpoint required");
    assert!(err.to_string().contains("endpoint"));
}

#[test]
fn unreachable_endpoint_reports_attempts() {
    let file = k2_fixture();
    let remote = RemoteOracle::new(
        &file.layout,
        OracleConfig {
            backend: OracleBackend::Remote,
            endpoint_url: Some("http://127.0.0.1:1".into()),
            timeout_ms: 200,
            retry_count: 1,
            ..Default::default()
        },
    )
    .unwrap();
    let query = PolicyQuery {
        state_summary: BTreeSet::from([
            Predicate::AgentInRoom("kitchen".into()),
            Predicate::CloseTo("fridge".into()),
            Predicate::IsClosed("fridge".into()),
        ]),
        belief_locations: vec!["in(fridge)".parse().unwrap()],
        goal: ObjectClass::new("apple"),
        action: Action::Open("fridge".into()),
    };
    let err = remote.action_likelihood(&query).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("unreachable after 2 attempts"), "{text}");
}
