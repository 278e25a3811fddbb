use crate::error::{LabError, Result};

use super::config::ScenarioConfig;

const SOURCES: [(&str, &str); 4] = [
    (
        "diag_cyclic",
        include_str!("../../scenarios/diag_cyclic.json"),
    ),
    (
        "random_dense",
        include_str!("../../scenarios/random_dense.json"),
    ),
    ("shift_e1", include_str!("../../scenarios/shift_e1.json")),
    (
        "weighted_shift",
        include_str!("../../scenarios/weighted_shift.json"),
    ),
];

pub fn bundled_names() -> Vec<&'static str> {
    SOURCES.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_scenario(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = SOURCES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| LabError::Config(format!("no bundled scenario named {name:?}")))?;
    ScenarioConfig::from_json(text)
}

pub fn bundled_scenarios() -> Vec<ScenarioConfig> {
    SOURCES
        .iter()
        .map(|(_, text)| ScenarioConfig::from_json(text).expect("bundled scenario parses"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_are_valid() {
        for (cfg, name) in bundled_scenarios().iter().zip(bundled_names()) {
            assert_eq!(cfg.name, name);
            cfg.validate().unwrap();
            assert!(cfg.expected_verdict.is_some());
        }
        assert!(bundled_scenario("nope").is_err());
    }
}
