//! Integrity checks over the shipped task files: they parse, their
//! environments build, and the three-agent team machine really is the
//! parallel composition of the per-agent machines it documents.

use std::fs;
use std::path::PathBuf;

use causal_dqprm::compose::{bisimilar, parallel_compose_all};
use causal_dqprm::envs::load_task;
use causal_dqprm::rm::parse_rm;

fn tasks_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../tasks")
}

#[test]
fn every_shipped_task_loads_and_builds_its_environment() {
    for name in ["generator.toml", "laboratory.toml", "buttons.toml"] {
        let task = load_task(&tasks_dir().join(name)).unwrap();
        let env = task.team_env().unwrap();
        assert_eq!(env.num_agents(), task.agents.len(), "{name}");
        assert!(task.team.terminals_absorbing(), "{name}");
        // Modes that rely on causal knowledge must find a team diagram.
        assert!(task.team_tlcd.is_some(), "{name} lacks a team diagram");
    }
}

#[test]
fn buttons_team_machine_is_the_composition_of_its_agents() {
    let dir = tasks_dir();
    let read = |name: &str| {
        let text = fs::read_to_string(dir.join(name)).unwrap();
        parse_rm(&text).unwrap()
    };
    let team = read("buttons.rm");
    let locals = [
        read("buttons_agent1.rm"),
        read("buttons_agent2.rm"),
        read("buttons_agent3.rm"),
    ];
    let composed = parallel_compose_all(&locals).unwrap();
    let verdict = bisimilar(&team, &composed).unwrap();
    assert!(
        verdict.is_bisimilar(),
        "shipped team machine disagrees with the composition: {:?}",
        verdict.counterexample()
    );
}

#[test]
fn task_alphabets_match_their_agent_files() {
    let task = load_task(&tasks_dir().join("buttons.toml")).unwrap();
    let expected: [&[&str]; 3] = [
        &["B", "B3", "G", "S"],
        &["B", "B1", "B2", "A2B3", "A2nB3"],
        &["B1", "B2", "A3B3", "A3nB3", "B3"],
    ];
    for (agent, names) in task.agents.iter().zip(expected) {
        assert_eq!(agent.alphabet.len(), names.len());
        for n in names {
            assert!(
                agent.alphabet.contains(&causal_dqprm::event::Event::new(n)),
                "missing event {n}"
            );
        }
    }
}
