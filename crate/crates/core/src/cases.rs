//! Standard test cases shipped with the crate.

use crate::caseio::{parse_matpower, to_network, CaseError};
use crate::netmodel::Network;

const CASES: &[(&str, &str)] = &[
    ("case5", include_str!("../data/case5.m")),
    ("case9", include_str!("../data/case9.m")),
    ("case39", include_str!("../data/case39.m")),
    ("case118", include_str!("../data/case118.m")),
    ("case118_rated", include_str!("../data/case118_rated.m")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    CASES.iter().map(|(name, _)| *name)
}

/// Raw MATPOWER text of a bundled case.
pub fn text(name: &str) -> Option<&'static str> {
    CASES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load(name: &str) -> Result<Network, CaseError> {
    let text = text(name).ok_or_else(|| CaseError::Invalid(format!("no bundled case named {name}")))?;
    to_network(&parse_matpower(text)?)
}
