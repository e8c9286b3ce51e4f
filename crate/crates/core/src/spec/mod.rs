//! The `fsm.json` environment document: types, parsing, validation and the
//! structured item catalog.

mod catalog;
mod parse;
mod slots;
mod validate;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::value::{Literal, SignatureValue};

pub use catalog::{load_catalog, CatalogError, DataCatalog, Item};
pub use parse::{parse_spec, SpecError};
pub use slots::{ActionSlots, OptionSlot, ParamSlot};
pub use validate::{
    derive_nav_skeleton, skeleton_findings, validate_spec, CheckId, Finding, Severity,
    ValidationReport, MAX_REPEAT,
};

pub type PageId = String;
pub type ActionId = String;

/// Parsed fsm.json document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FsmSpec {
    pub meta: Meta,
    pub pages: BTreeMap<PageId, PageSpec>,
    pub actions: BTreeMap<ActionId, ActionSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nav_skeleton: Option<NavSkeleton>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub initial_page_id: PageId,
    pub terminal_pages: Vec<PageId>,
    /// Carried through untouched; never consulted by the engine.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complexity_profile: Option<Json>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PageSpec {
    pub page_name: String,
    /// Default signature; its field set is the page's signature schema.
    pub signature: SignatureValue,
    pub actions: Vec<ActionId>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionSpec {
    pub name: String,
    pub from: PageId,
    pub to: PageId,
    pub is_navigation: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub to_page_id: Option<PageId>,
    pub params: BTreeMap<String, Json>,
    pub preconditions: Vec<Condition>,
    pub effects: Vec<Effect>,
    pub gui_procedure: Vec<GuiStep>,
    /// Explicit marker for result-set-changing actions beyond the
    /// search/filter/sort names.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resets_results: Option<bool>,
    /// Where each placeholder-valued param draws its values from.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub param_sources: BTreeMap<String, ParamSource>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Json>,
}

impl ActionSpec {
    /// Target page of the transition (the page itself for in-page actions).
    pub fn target(&self) -> &str {
        if self.is_navigation {
            self.to_page_id.as_deref().unwrap_or(&self.to)
        } else {
            &self.from
        }
    }

    pub fn changes_result_set(&self) -> bool {
        matches!(self.name.as_str(), "search" | "filter" | "sort")
            || self.resets_results == Some(true)
    }

    /// Option values declared by `ui_elements` blocks in this action's
    /// procedure. Empty when the procedure declares none.
    pub fn option_domain(&self) -> Vec<Literal> {
        let mut out = Vec::new();
        for step in &self.gui_procedure {
            if let Some(ui) = &step.ui_elements {
                for opt in &ui.options {
                    let lit = Literal::Str(opt.value.clone());
                    if !out.contains(&lit) {
                        out.push(lit);
                    }
                }
            }
        }
        out
    }
}

/// Value domain for a placeholder parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSource {
    Values { values: Vec<Literal> },
    Catalog { collection: String, field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "in")]
    In,
    #[serde(rename = "contains")]
    Contains,
}

impl CmpOp {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "==" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            "in" => CmpOp::In,
            "contains" => CmpOp::Contains,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::In => "in",
            CmpOp::Contains => "contains",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub path: String,
    pub op: CmpOp,
    pub value: SignatureValue,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = String::from_utf8_lossy(&self.value.canonical_bytes()).into_owned();
        write!(f, "{} {} {}", self.path, self.op.as_str(), v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectOp {
    Assign,
    Increment,
    Decrement,
    Toggle,
    EnumSwitch,
    SetInsert,
    SetDelete,
}

impl EffectOp {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "assign" => EffectOp::Assign,
            "increment" => EffectOp::Increment,
            "decrement" => EffectOp::Decrement,
            "toggle" => EffectOp::Toggle,
            "enum_switch" => EffectOp::EnumSwitch,
            "set_insert" => EffectOp::SetInsert,
            "set_delete" => EffectOp::SetDelete,
            _ => return None,
        })
    }

    pub fn needs_value(self) -> bool {
        !matches!(
            self,
            EffectOp::Increment | EffectOp::Decrement | EffectOp::Toggle
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub path: String,
    pub op: EffectOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<SignatureValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuiOp {
    Click,
    Hover,
    Drag,
    TypeText,
    PressEnter,
    Scroll,
    ScrollUntilVisible,
    Hotkey,
    Wait,
}

impl GuiOp {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "click" => GuiOp::Click,
            "hover" => GuiOp::Hover,
            "drag" => GuiOp::Drag,
            "type_text" => GuiOp::TypeText,
            "press_enter" => GuiOp::PressEnter,
            "scroll" => GuiOp::Scroll,
            "scroll_until_visible" => GuiOp::ScrollUntilVisible,
            "hotkey" => GuiOp::Hotkey,
            "wait" => GuiOp::Wait,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GuiOp::Click => "click",
            GuiOp::Hover => "hover",
            GuiOp::Drag => "drag",
            GuiOp::TypeText => "type_text",
            GuiOp::PressEnter => "press_enter",
            GuiOp::Scroll => "scroll",
            GuiOp::ScrollUntilVisible => "scroll_until_visible",
            GuiOp::Hotkey => "hotkey",
            GuiOp::Wait => "wait",
        }
    }

    pub fn requires_selector(self) -> bool {
        matches!(
            self,
            GuiOp::Click | GuiOp::Hover | GuiOp::ScrollUntilVisible
        )
    }

    pub fn is_pointer(self) -> bool {
        matches!(self, GuiOp::Click | GuiOp::Hover)
    }
}

/// One atomic operation of an action's `gui_procedure`. Field order matches
/// the `bfs.json` layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuiStep {
    pub op: GuiOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ui_elements: Option<UiElements>,
    /// Drop target for `drag`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_selector: Option<String>,
    /// Bounded repeat count (page-next loops); absent means once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<Json>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Json>,
}

impl GuiStep {
    /// Effective repeat count, `None` when the declared value is not a
    /// bounded positive integer.
    pub fn repeat_count(&self) -> Option<u32> {
        match &self.repeat {
            None => Some(1),
            Some(v) => v
                .as_u64()
                .filter(|n| (1..=MAX_REPEAT as u64).contains(n))
                .map(|n| n as u32),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiElements {
    pub container: String,
    pub options: Vec<UiOption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiOption {
    pub value: String,
    pub selector: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavSkeleton {
    pub nodes: Vec<PageId>,
    pub edges: Vec<NavEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NavEdge {
    pub from: PageId,
    pub to: PageId,
    pub via: ActionId,
}

impl FsmSpec {
    pub fn page(&self, id: &str) -> Option<&PageSpec> {
        self.pages.get(id)
    }

    pub fn action(&self, id: &str) -> Option<&ActionSpec> {
        self.actions.get(id)
    }

    /// Actions available on `page`, in page-declared order.
    pub fn page_actions<'a>(
        &'a self,
        page: &str,
    ) -> impl Iterator<Item = (&'a str, &'a ActionSpec)> {
        self.pages
            .get(page)
            .into_iter()
            .flat_map(|p| p.actions.iter())
            .filter_map(move |id| self.actions.get(id).map(|a| (id.as_str(), a)))
    }

    /// Re-serializes to an `fsm.json` document.
    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).expect("spec serializes")
    }

    /// SHA-256 of the canonical re-serialization, used to stamp artifacts.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(&self.to_json()).expect("json serializes");
        crate::digest::sha256_hex(&bytes)
    }
}
