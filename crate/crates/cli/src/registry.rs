//! Built-in scenarios, selectable with `--scenario NAME`.

use crate::config::RawScenario;
use crate::error::{CliError, CliResult};

const S_A: &str = r#"
label = "S-A"

[system]
dim = 2
observable = [[1, 0], [0, 0], [0, 0], [-1, 0]]
pre_state = [[0.7071067811865476, 0], [0.7071067811865476, 0]]
post_state = [[0.7071067811865476, 0], [0, 0.7071067811865476]]

[pointer.family]
kind = "chirped"
sigma = 1.0
c = 0.25

[constants]
gamma = 0.1

[run]
gammas = [0.2, 0.1, 0.05, 0.025]
observables = ["q", "p", "q^2"]
"#;

const S_B: &str = r#"
label = "S-B"

[system]
dim = 2
observable = [[1, 0], [0, 0], [0, 0], [-1, 0]]
pre_state = [[0.7071067811865476, 0], [0.7071067811865476, 0]]
post_state = [[0.7071067811865476, 0], [0, -0.7071067811865476]]

[pointer.family]
kind = "cubic"
sigma = 1.0
b = 0.05

[constants]
gamma = 0.1

[run]
gammas = [0.2, 0.1, 0.05, 0.025]
observables = ["q", "q^2"]
"#;

const S_C: &str = r#"
label = "S-C"

[system]
dim = 2
observable = [[1, 0], [0, 0], [0, 0], [-1, 0]]
pre_state = [[0.7071067811865476, 0], [0.7071067811865476, 0]]
post_state = [[0.7071067811865476, 0], [0, -0.7071067811865476]]

[pointer.family]
kind = "momentum_skewed"
s = 1.0
lambda = 0.5

[constants]
gamma = 0.1

[run]
gammas = [0.2, 0.1, 0.05, 0.025]
observables = ["p", "p^2"]
"#;

/// One-dimensional system: the pointer is translated by `gamma a`.
const D1: &str = r#"
label = "D1"

[system]
dim = 1
observable = [[2, 0]]
pre_state = [[1, 0]]
post_state = [[1, 0]]

[pointer.family]
kind = "gaussian"
sigma = 1.0

[constants]
gamma = 0.1

[run]
gammas = [0.2, 0.1, 0.05, 0.025]
"#;

/// Real weak value 1/7.
const REAL: &str = r#"
label = "REAL"

[system]
dim = 2
observable = [[1, 0], [0, 0], [0, 0], [-1, 0]]
pre_state = [[0.7071067811865476, 0], [0.7071067811865476, 0]]
post_state = [[0.8, 0], [0.6, 0]]

[pointer.family]
kind = "chirped"
sigma = 1.0
c = 0.25

[constants]
gamma = 0.1

[run]
gammas = [0.2, 0.1, 0.05, 0.025]
"#;

/// Sign of the position control term follows the cubic phase.
const CUBIC_SWEEP: &str = r#"
label = "CUBIC-SWEEP"

[system]
dim = 2
observable = [[1, 0], [0, 0], [0, 0], [-1, 0]]
pre_state = [[0.7071067811865476, 0], [0.7071067811865476, 0]]
post_state = [[0.7071067811865476, 0], [0, -0.7071067811865476]]

[pointer.family]
kind = "cubic"
sigma = 1.0
b = 0.05

[constants]
gamma = 0.1

[run.sweep]
parameter = "pointer.family.b"
values = [-0.05, 0.0, 0.05]
"#;

pub const SCENARIOS: [(&str, &str); 6] =
    [("S-A", S_A), ("S-B", S_B), ("S-C", S_C), ("D1", D1), ("REAL", REAL), ("CUBIC-SWEEP", CUBIC_SWEEP)];

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, s)| *s)
}

pub fn scenario(name: &str) -> CliResult<RawScenario> {
    let text = source(name).ok_or_else(|| {
        CliError::config("--scenario", format!("unknown scenario {name:?}; known: {}", names().collect::<Vec<_>>().join(", ")))
    })?;
    RawScenario::parse(text, name, ".")
}
