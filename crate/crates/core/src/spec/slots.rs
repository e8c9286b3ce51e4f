use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{ActionSpec, UiOption};
use crate::value::{embedded_placeholders, placeholder_name, Literal, SignatureValue};

/// Placeholder declared through `params`, e.g. `"query": "<QUERY_PLACEHOLDER>"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSlot {
    pub param: String,
    pub placeholder: String,
}

/// Placeholder chosen through a `ui_elements` option list: the step's
/// selector is a placeholder, and one effect placeholder takes the option's
/// value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionSlot {
    pub value_placeholder: String,
    pub selector_placeholder: String,
    pub options: Vec<UiOption>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionSlots {
    pub params: Vec<ParamSlot>,
    pub options: Vec<OptionSlot>,
}

impl ActionSlots {
    pub fn is_bound(&self, name: &str) -> bool {
        self.params.iter().any(|p| p.placeholder == name)
            || self
                .options
                .iter()
                .any(|o| o.value_placeholder == name || o.selector_placeholder == name)
    }
}

impl ActionSpec {
    /// Analyses which placeholders of this action can be bound and where
    /// their values come from.
    pub fn slots(&self) -> ActionSlots {
        let mut slots = ActionSlots::default();
        for (param, v) in &self.params {
            if let Some(name) = v.as_str().and_then(placeholder_name) {
                slots.params.push(ParamSlot {
                    param: param.clone(),
                    placeholder: name.to_string(),
                });
            }
        }
        let mut free = Vec::new();
        for eff in &self.effects {
            if let Some(SignatureValue::Literal(Literal::Str(s))) = &eff.value {
                if let Some(name) = placeholder_name(s) {
                    if !slots.params.iter().any(|p| p.placeholder == name)
                        && !free.iter().any(|f: &String| f == name)
                    {
                        free.push(name.to_string());
                    }
                }
            }
        }
        let option_steps = self.gui_procedure.iter().filter_map(|s| {
            let ui = s.ui_elements.as_ref()?;
            let sel = placeholder_name(s.selector.as_deref()?)?;
            Some((sel.to_string(), ui.options.clone()))
        });
        for (value_placeholder, (selector_placeholder, options)) in
            free.into_iter().zip(option_steps)
        {
            slots.options.push(OptionSlot {
                value_placeholder,
                selector_placeholder,
                options,
            });
        }
        slots
    }

    /// Every placeholder name used by effects or the GUI procedure.
    pub fn used_placeholders(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |n: &str| {
            if !out.iter().any(|o| o == n) {
                out.push(n.to_string());
            }
        };
        for eff in &self.effects {
            if let Some(SignatureValue::Literal(Literal::Str(s))) = &eff.value {
                if let Some(n) = placeholder_name(s) {
                    push(n);
                }
            }
        }
        for step in &self.gui_procedure {
            for sel in [&step.selector, &step.to_selector].into_iter().flatten() {
                if let Some(n) = placeholder_name(sel) {
                    push(n);
                }
            }
            if let Some(t) = &step.text {
                for n in embedded_placeholders(t) {
                    push(n);
                }
            }
        }
        out
    }
}
