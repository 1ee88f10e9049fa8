//! Goals the agent can be given: establish or destroy a support relation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Goal {
    /// Make `object` supported by `target`.
    Support { object: String, target: String },
    /// Take away whatever currently supports `object`.
    Unsupport { object: String },
}

impl Goal {
    pub fn object(&self) -> &str {
        match self {
            Goal::Support { object, .. } | Goal::Unsupport { object } => object,
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::Support { object, target } => write!(f, "support:{object}:{target}"),
            Goal::Unsupport { object } => write!(f, "unsupport:{object}"),
        }
    }
}

impl FromStr for Goal {
    type Err = String;

    /// `support:<object>:<target>` or `unsupport:<object>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["support", o, t] if !o.is_empty() && !t.is_empty() => Ok(Goal::Support {
                object: o.to_string(),
                target: t.to_string(),
            }),
            ["unsupport", o] if !o.is_empty() => Ok(Goal::Unsupport {
                object: o.to_string(),
            }),
            _ => Err(format!(
                "bad goal `{s}`; expected support:<object>:<target> or unsupport:<object>"
            )),
        }
    }
}

impl TryFrom<String> for Goal {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Goal> for String {
    fn from(g: Goal) -> Self {
        g.to_string()
    }
}

/// Whether placement search constrains the whole object or a learned part.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    #[default]
    Whole,
    Part,
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanMode::Whole => "whole",
            PlanMode::Part => "part",
        })
    }
}

impl FromStr for PlanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whole" => Ok(PlanMode::Whole),
            "part" => Ok(PlanMode::Part),
            other => Err(format!("unknown plan mode `{other}`")),
        }
    }
}

/// A goal handed to the agent at a given tick.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledGoal {
    pub tick: u64,
    pub goal: Goal,
    #[serde(default)]
    pub mode: PlanMode,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_text() {
        for s in ["support:mug1:hook1", "unsupport:mug1"] {
            assert_eq!(s.parse::<Goal>().unwrap().to_string(), s);
        }
        for bad in ["support:mug1", "lift:mug1", "unsupport:", ""] {
            assert!(bad.parse::<Goal>().is_err(), "{bad}");
        }
    }
}
