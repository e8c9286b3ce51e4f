//! Deterministic transition semantics over `(page, signature)` states.
//!
//! A step checks the action's preconditions against the current signature;
//! when they fail the state is returned unchanged and the step is flagged
//! invalid. Otherwise the effects are applied to a copy of the signature and,
//! for navigation actions, the result is merged into the target page's
//! defaults: every target field that also exists (by top-level name) in the
//! post-effect signature takes the carried value.
//!
//! Navigation effects run on the source signature extended with the target's
//! top-level default fields it lacks, so an action may store e.g. a selected
//! item id that only the target page declares.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::digest::digest64;
use crate::spec::{ActionSpec, CmpOp, Condition, Effect, EffectOp, FsmSpec, PageId, PageSpec};
use crate::value::{
    embedded_placeholders, placeholder_name, Literal, Number, PathError, SigPath, SignatureValue,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("action `{action}` starts on page `{expected}` but the state is on `{actual}`")]
    WrongPage {
        action: String,
        expected: String,
        actual: String,
    },
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("path `{0}` does not resolve in the signature")]
    PathNotFound(String),
    #[error("`{op}` on `{path}` expects {expected}, found {found}")]
    TypeMismatch {
        path: String,
        op: &'static str,
        expected: &'static str,
        found: &'static str,
    },
    #[error("placeholder `<{0}>` is not bound")]
    Unbound(String),
    #[error("value {value} for `{path}` is outside the declared options")]
    NotInDomain { path: String, value: String },
    #[error("arithmetic on `{0}` left the finite range")]
    NonFinite(String),
    #[error("unknown page `{0}`")]
    UnknownPage(String),
}

/// Semantic state: page id plus that page's signature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub page: PageId,
    pub signature: SignatureValue,
}

/// Deduplication key: page id plus a 64-bit digest of the canonical
/// signature bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub page: PageId,
    #[serde(with = "hex_u64")]
    pub sig_hash: u64,
}

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{:016x}", self.page, self.sig_hash)
    }
}

mod hex_u64 {
    use super::*;
    use alloc::format;

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

/// Values for an action's placeholders, keyed by placeholder name (without
/// the angle brackets).
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamBinding(pub BTreeMap<String, Literal>);

impl ParamBinding {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: Literal) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Literal> {
        self.0.get(name)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Replaces a whole-string placeholder leaf with its bound literal.
    /// Non-placeholder values pass through unchanged.
    pub fn resolve(&self, value: &SignatureValue) -> Result<SignatureValue, EngineError> {
        match value {
            SignatureValue::Literal(Literal::Str(s)) => match placeholder_name(s) {
                Some(name) => self
                    .get(name)
                    .cloned()
                    .map(SignatureValue::Literal)
                    .ok_or_else(|| EngineError::Unbound(name.to_string())),
                None => Ok(value.clone()),
            },
            other => Ok(other.clone()),
        }
    }

    /// Resolves a selector that may be a whole-string placeholder.
    pub fn resolve_selector(&self, selector: &str) -> Result<String, EngineError> {
        match placeholder_name(selector) {
            Some(name) => match self.get(name) {
                Some(Literal::Str(s)) => Ok(s.clone()),
                Some(other) => Ok(other.to_string()),
                None => Err(EngineError::Unbound(name.to_string())),
            },
            None => Ok(selector.to_string()),
        }
    }

    /// Substitutes every embedded `<NAME>` token in free text.
    pub fn substitute_text(&self, text: &str) -> Result<String, EngineError> {
        let mut out = text.to_string();
        for name in embedded_placeholders(text) {
            let v = self
                .get(name)
                .ok_or_else(|| EngineError::Unbound(name.to_string()))?;
            let token = alloc::format!("<{name}>");
            out = out.replacen(&token, &v.to_string(), 1);
        }
        Ok(out)
    }
}

/// Result of one transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: State,
    /// False when the preconditions did not hold and the step was a no-op.
    pub valid: bool,
}

fn compare(
    path: &str,
    op: CmpOp,
    actual: &SignatureValue,
    expected: &SignatureValue,
) -> Result<Ordering, EngineError> {
    use SignatureValue::Literal as L;
    match (actual, expected) {
        (L(Literal::Number(a)), L(Literal::Number(b))) => Ok(a.cmp(b)),
        (L(Literal::Str(a)), L(Literal::Str(b))) => Ok(a.cmp(b)),
        _ => Err(EngineError::TypeMismatch {
            path: path.to_string(),
            op: op.as_str(),
            expected: "matching numbers or strings",
            found: actual.kind(),
        }),
    }
}

/// Evaluates one condition against a signature.
pub fn eval_condition(signature: &SignatureValue, cond: &Condition) -> Result<bool, EngineError> {
    let path = SigPath::parse(&cond.path)?;
    let actual = signature
        .get(&path)
        .ok_or_else(|| EngineError::PathNotFound(cond.path.clone()))?;
    let mismatch = |expected, found| EngineError::TypeMismatch {
        path: cond.path.clone(),
        op: cond.op.as_str(),
        expected,
        found,
    };
    Ok(match cond.op {
        CmpOp::Eq => actual == &cond.value,
        CmpOp::Ne => actual != &cond.value,
        CmpOp::Lt => compare(&cond.path, cond.op, actual, &cond.value)? == Ordering::Less,
        CmpOp::Le => compare(&cond.path, cond.op, actual, &cond.value)? != Ordering::Greater,
        CmpOp::Gt => compare(&cond.path, cond.op, actual, &cond.value)? == Ordering::Greater,
        CmpOp::Ge => compare(&cond.path, cond.op, actual, &cond.value)? != Ordering::Less,
        CmpOp::In => match (&cond.value, actual) {
            (SignatureValue::Set(options), SignatureValue::Literal(l)) => options.contains(l),
            (SignatureValue::Set(_), other) => return Err(mismatch("a scalar", other.kind())),
            (other, _) => return Err(mismatch("a set operand", other.kind())),
        },
        CmpOp::Contains => match (actual, &cond.value) {
            (SignatureValue::Set(members), SignatureValue::Literal(l)) => members.contains(l),
            (
                SignatureValue::Literal(Literal::Str(hay)),
                SignatureValue::Literal(Literal::Str(needle)),
            ) => hay.contains(needle.as_str()),
            (other, _) => return Err(mismatch("a set or string", other.kind())),
        },
    })
}

/// Conjunction of the action's preconditions; an empty list holds.
///
/// Every condition is evaluated so that a resolution error is never hidden
/// behind an earlier false condition.
pub fn eval_preconditions(state: &State, action: &ActionSpec) -> Result<bool, EngineError> {
    if action.from != state.page {
        return Err(EngineError::WrongPage {
            action: action.name.clone(),
            expected: action.from.clone(),
            actual: state.page.clone(),
        });
    }
    eval_all(&state.signature, &action.preconditions)
}

pub(crate) fn eval_all(
    signature: &SignatureValue,
    conds: &[Condition],
) -> Result<bool, EngineError> {
    let mut all = true;
    for c in conds {
        all &= eval_condition(signature, c)?;
    }
    Ok(all)
}

/// Applies `effects` to a copy of `signature`.
pub fn apply_effects(
    signature: &SignatureValue,
    effects: &[Effect],
    binding: &ParamBinding,
) -> Result<SignatureValue, EngineError> {
    apply_effects_in_domain(signature, effects, binding, &[])
}

/// As [`apply_effects`], additionally enforcing `enum_switch` membership in
/// `enum_domain` when it is non-empty.
pub fn apply_effects_in_domain(
    signature: &SignatureValue,
    effects: &[Effect],
    binding: &ParamBinding,
    enum_domain: &[Literal],
) -> Result<SignatureValue, EngineError> {
    let mut out = signature.clone();
    for eff in effects {
        apply_one(&mut out, eff, binding, enum_domain)?;
    }
    Ok(out)
}

fn apply_one(
    sig: &mut SignatureValue,
    eff: &Effect,
    binding: &ParamBinding,
    enum_domain: &[Literal],
) -> Result<(), EngineError> {
    let path = SigPath::parse(&eff.path)?;
    let value = match &eff.value {
        Some(v) => Some(binding.resolve(v)?),
        None => None,
    };
    let slot = sig
        .get_mut(&path)
        .ok_or_else(|| EngineError::PathNotFound(eff.path.clone()))?;
    let mismatch = |op: &'static str, expected: &'static str, found: &SignatureValue| {
        EngineError::TypeMismatch {
            path: eff.path.clone(),
            op,
            expected,
            found: found.kind(),
        }
    };
    let literal_value = |op: &'static str| -> Result<Literal, EngineError> {
        match &value {
            Some(SignatureValue::Literal(l)) => Ok(l.clone()),
            Some(other) => Err(EngineError::TypeMismatch {
                path: eff.path.clone(),
                op,
                expected: "a scalar value",
                found: other.kind(),
            }),
            None => Err(EngineError::TypeMismatch {
                path: eff.path.clone(),
                op,
                expected: "a value",
                found: "nothing",
            }),
        }
    };
    match eff.op {
        EffectOp::Assign => {
            *slot = value.ok_or_else(|| mismatch("assign", "a value", &SignatureValue::null()))?;
        }
        EffectOp::EnumSwitch => {
            let lit = literal_value("enum_switch")?;
            if !enum_domain.is_empty() && !enum_domain.contains(&lit) {
                return Err(EngineError::NotInDomain {
                    path: eff.path.clone(),
                    value: lit.to_string(),
                });
            }
            *slot = SignatureValue::Literal(lit);
        }
        EffectOp::Increment | EffectOp::Decrement => {
            let name = if eff.op == EffectOp::Increment {
                "increment"
            } else {
                "decrement"
            };
            match slot {
                SignatureValue::Literal(Literal::Number(n)) => {
                    let delta = if eff.op == EffectOp::Increment {
                        1.0
                    } else {
                        -1.0
                    };
                    *n = Number::new(n.get() + delta)
                        .ok_or_else(|| EngineError::NonFinite(eff.path.clone()))?;
                }
                other => return Err(mismatch(name, "a number", other)),
            }
        }
        EffectOp::Toggle => match slot {
            SignatureValue::Literal(Literal::Bool(b)) => *b = !*b,
            other => return Err(mismatch("toggle", "a boolean", other)),
        },
        EffectOp::SetInsert | EffectOp::SetDelete => {
            let name = if eff.op == EffectOp::SetInsert {
                "set_insert"
            } else {
                "set_delete"
            };
            let lit = literal_value(name)?;
            match slot {
                SignatureValue::Set(members) => {
                    if eff.op == EffectOp::SetInsert {
                        members.insert(lit);
                    } else {
                        members.remove(&lit);
                    }
                }
                other => return Err(mismatch(name, "a set", other)),
            }
        }
    }
    Ok(())
}

/// Default signature of `page`.
pub fn init_signature(page: &PageSpec) -> SignatureValue {
    page.signature.clone()
}

/// Target defaults overridden by same-named top-level source fields.
pub fn carry_merge(target_defaults: &SignatureValue, source: &SignatureValue) -> SignatureValue {
    match (target_defaults, source) {
        (SignatureValue::Record(target), SignatureValue::Record(src)) => SignatureValue::Record(
            target
                .iter()
                .map(|(k, v)| (k.clone(), src.get(k).unwrap_or(v).clone()))
                .collect(),
        ),
        _ => target_defaults.clone(),
    }
}

/// Signature that a navigation action's effects operate on: the source
/// signature plus any top-level target defaults it does not already carry.
pub fn navigation_effect_base(
    source: &SignatureValue,
    target_defaults: &SignatureValue,
) -> SignatureValue {
    match (source, target_defaults) {
        (SignatureValue::Record(src), SignatureValue::Record(target)) => {
            let mut out = src.clone();
            for (k, v) in target {
                out.entry(k.clone()).or_insert_with(|| v.clone());
            }
            SignatureValue::Record(out)
        }
        _ => source.clone(),
    }
}

/// The transition function.
pub fn step(
    spec: &FsmSpec,
    state: &State,
    action: &ActionSpec,
    binding: &ParamBinding,
) -> Result<StepOutcome, EngineError> {
    if !eval_preconditions(state, action)? {
        return Ok(StepOutcome {
            state: state.clone(),
            valid: false,
        });
    }
    let domain = action.option_domain();
    let next = if action.is_navigation {
        let target_id = action.target();
        let target = spec
            .page(target_id)
            .ok_or_else(|| EngineError::UnknownPage(target_id.to_string()))?;
        let defaults = init_signature(target);
        let base = navigation_effect_base(&state.signature, &defaults);
        let post = apply_effects_in_domain(&base, &action.effects, binding, &domain)?;
        State {
            page: target_id.to_string(),
            signature: carry_merge(&defaults, &post),
        }
    } else {
        State {
            page: state.page.clone(),
            signature: apply_effects_in_domain(
                &state.signature,
                &action.effects,
                binding,
                &domain,
            )?,
        }
    };
    Ok(StepOutcome {
        state: next,
        valid: true,
    })
}

/// Canonical bytes of a signature. Numbers are finite by construction, so
/// this cannot fail.
pub fn canonical_serialize(signature: &SignatureValue) -> Vec<u8> {
    signature.canonical_bytes()
}

pub fn state_key(state: &State) -> StateKey {
    StateKey {
        page: state.page.clone(),
        sig_hash: digest64(&canonical_serialize(&state.signature)),
    }
}

/// `(meta.initial_page_id, defaults of that page)`.
pub fn initial_state(spec: &FsmSpec) -> Result<State, EngineError> {
    let page_id = &spec.meta.initial_page_id;
    let page = spec
        .page(page_id)
        .ok_or_else(|| EngineError::UnknownPage(page_id.clone()))?;
    Ok(State {
        page: page_id.clone(),
        signature: init_signature(page),
    })
}
