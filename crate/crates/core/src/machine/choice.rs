//! Adversary outcome classes for undetermined comparisons.
//!
//! Rather than free valuations of four status bits, the adversary picks a
//! signed ordering class (lt, eq or gt) and, when the unsigned predicate is
//! also needed, an unsigned class (ls or hi) constrained by eq implying ls.
//! Classes projecting onto identical assignments of the needed predicates
//! are merged, so a comparison that only feeds `le` has two choices.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::isa::Pred;

use super::Preds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignedOutcome {
    Lt,
    Eq,
    Gt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnsignedOutcome {
    Ls,
    Hi,
}

/// One adversary move: outcome classes for the parts of the comparison the
/// downstream conditionals actually consume. Serializes as its compact
/// name, e.g. `"gt"` or `"lt+hi"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutcomeClass {
    pub signed: Option<SignedOutcome>,
    pub unsigned: Option<UnsignedOutcome>,
}

impl Serialize for OutcomeClass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for OutcomeClass {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl OutcomeClass {
    pub fn pred_value(&self, p: Pred) -> bool {
        match p {
            Pred::Eq => self.signed == Some(SignedOutcome::Eq),
            Pred::Lt => self.signed == Some(SignedOutcome::Lt),
            Pred::Le => matches!(self.signed, Some(SignedOutcome::Lt) | Some(SignedOutcome::Eq)),
            Pred::Ls => self.unsigned == Some(UnsignedOutcome::Ls),
        }
    }

    pub fn apply(&self, preds: &mut Preds, flags: &[Pred]) {
        for &p in flags {
            preds.set(p, self.pred_value(p));
        }
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<&str> = Vec::new();
        match self.signed {
            Some(SignedOutcome::Lt) => parts.push("lt"),
            Some(SignedOutcome::Eq) => parts.push("eq"),
            Some(SignedOutcome::Gt) => parts.push("gt"),
            None => {}
        }
        match self.unsigned {
            Some(UnsignedOutcome::Ls) => parts.push("ls"),
            Some(UnsignedOutcome::Hi) => parts.push("hi"),
            None => {}
        }
        if parts.is_empty() {
            parts.push("any");
        }
        write!(f, "{}", parts.join("+"))
    }
}

impl FromStr for OutcomeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = OutcomeClass { signed: None, unsigned: None };
        for part in s.split('+') {
            match part.trim() {
                "lt" => out.signed = Some(SignedOutcome::Lt),
                "eq" => out.signed = Some(SignedOutcome::Eq),
                "gt" => out.signed = Some(SignedOutcome::Gt),
                "ls" => out.unsigned = Some(UnsignedOutcome::Ls),
                "hi" => out.unsigned = Some(UnsignedOutcome::Hi),
                "any" => {}
                other => return Err(format!("unknown outcome `{other}`")),
            }
        }
        Ok(out)
    }
}

/// True when `class` could describe the same comparison result as `other`
/// on the predicates both constrain. Used for constraint-file matching.
pub fn outcome_compatible(class: &OutcomeClass, allowed: &OutcomeClass) -> bool {
    if let Some(s) = allowed.signed {
        if class.signed != Some(s) {
            return false;
        }
    }
    if let Some(u) = allowed.unsigned {
        if class.unsigned != Some(u) {
            return false;
        }
    }
    true
}

/// Enumerates the consistent adversary moves over `flags`, in canonical
/// order (lt < eq < gt, ls < hi), merging classes whose projections onto
/// `flags` coincide.
pub fn consistent_outcomes(flags: &BTreeSet<Pred>) -> Vec<OutcomeClass> {
    let need_signed = flags.iter().any(|p| matches!(p, Pred::Eq | Pred::Lt | Pred::Le));
    let need_unsigned = flags.contains(&Pred::Ls);

    let signed_opts: Vec<Option<SignedOutcome>> = if need_signed {
        vec![
            Some(SignedOutcome::Lt),
            Some(SignedOutcome::Eq),
            Some(SignedOutcome::Gt),
        ]
    } else {
        vec![None]
    };
    let unsigned_opts: Vec<Option<UnsignedOutcome>> = if need_unsigned {
        vec![Some(UnsignedOutcome::Ls), Some(UnsignedOutcome::Hi)]
    } else {
        vec![None]
    };

    let mut seen: Vec<Vec<(Pred, bool)>> = Vec::new();
    let mut out = Vec::new();
    for &s in &signed_opts {
        for &u in &unsigned_opts {
            // Equal values are never "higher": eq forces ls.
            if s == Some(SignedOutcome::Eq) && u == Some(UnsignedOutcome::Hi) {
                continue;
            }
            let class = OutcomeClass { signed: s, unsigned: u };
            let projection: Vec<(Pred, bool)> =
                flags.iter().map(|&p| (p, class.pred_value(p))).collect();
            if seen.contains(&projection) {
                continue;
            }
            seen.push(projection);
            out.push(class);
        }
    }
    out
}
