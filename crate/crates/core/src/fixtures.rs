//! Bundled polytopes, one per family, in the polytope JSON format.

use crate::io::parse_polytope;
use crate::polytope::PuncturedPolytope;
use crate::{Error, Result};

const FIXTURES: [(&str, &str); 4] = [
    (
        "cp2-minus-edge",
        include_str!("../fixtures/cp2-minus-edge.json"),
    ),
    (
        "h1-minus-edge-a",
        include_str!("../fixtures/h1-minus-edge-a.json"),
    ),
    (
        "h1-minus-edge-b",
        include_str!("../fixtures/h1-minus-edge-b.json"),
    ),
    (
        "pentagon-minus-edge",
        include_str!("../fixtures/pentagon-minus-edge.json"),
    ),
];

/// A triangle whose vertex between facets 0 and 2 has `|det| = 2`.
pub const NON_DELZANT: &str = include_str!("../fixtures/non-delzant.json");

pub fn fixture_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(name, _)| *name)
}

pub fn fixture_json(name: &str) -> Result<&'static str> {
    FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| *json)
        .ok_or_else(|| Error::UnknownFixture(name.to_string()))
}

pub fn load_fixture(name: &str) -> Result<PuncturedPolytope> {
    parse_polytope(fixture_json(name)?)
}

pub fn all_fixtures() -> Vec<(&'static str, PuncturedPolytope)> {
    FIXTURES
        .iter()
        .map(|(name, json)| (*name, parse_polytope(json).expect("bundled fixture parses")))
        .collect()
}
