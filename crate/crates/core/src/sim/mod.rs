//! Deterministic scenario simulation and topology analysis.

mod runner;
mod scenario;
mod topology;

pub use runner::{run_scenario, SimError, SimErrorKind, Simulation};
pub use scenario::{
    load_scenario, Footprint, MutationKind, MutationSpec, NodeSpec, Scenario, ScenarioError, ScenarioEvent,
};
pub use topology::{detect_data_islands, IslandFinding, IslandReport, TopologySnapshot};

pub struct BuiltinScenario {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
}

pub const BUILTIN_SCENARIOS: &[BuiltinScenario] = &[
    BuiltinScenario {
        name: "aircraft",
        summary: "maintenance crew example; narrowed checklist view for David",
        source: include_str!("../../scenarios/aircraft.json"),
    },
    BuiltinScenario {
        name: "n1n2n3",
        summary: "narrow relay breaks atomicity between two wide peers",
        source: include_str!("../../scenarios/n1n2n3.json"),
    },
    BuiltinScenario {
        name: "fig1-islands",
        summary: "two disconnected groups with overlapping interests",
        source: include_str!("../../scenarios/fig1-islands.json"),
    },
];

/// Parses a built-in scenario by name.
pub fn builtin_scenario(name: &str) -> Option<Scenario> {
    BUILTIN_SCENARIOS
        .iter()
        .find(|b| b.name == name)
        .map(|b| load_scenario(b.source).expect("built-in scenarios are valid"))
}
