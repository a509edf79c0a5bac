use crate::kg::Entity;

/// The prompt used to request a predictive description of the missing entity.
pub const DEFAULT_TEMPLATE: &str = "I have an entity called \"{h_name}\" with description \"{h_desp}\", and a relation called \"{r_name}\". Below are their descriptions:\nYou task is to find an entity such that the relationship between \"{h_name}\" and the entity is \"{r_name}\". Generate a description of the entity. Your response should be limited in 50 words.";

const SLOTS: [&str; 3] = ["{h_name}", "{h_desp}", "{r_name}"];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("prompt template has no {0} slot")]
    MissingSlot(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: DEFAULT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    /// Every slot must appear at least once; the default template uses
    /// `{h_name}` and `{r_name}` twice each.
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        for slot in SLOTS {
            if !text.contains(slot) {
                return Err(TemplateError::MissingSlot(slot));
            }
        }
        Ok(Self { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes the source entity and relation name in a single pass, so
    /// slot markers inside substituted values are left alone.
    pub fn render(&self, source: &Entity, relation_name: &str) -> String {
        self.render_values(&source.name, &source.description, relation_name)
    }

    pub fn render_values(&self, h_name: &str, h_desp: &str, r_name: &str) -> String {
        let mut out = String::with_capacity(self.text.len() + h_desp.len() + 64);
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let tail = &rest[start..];
            let value = match SLOTS.iter().position(|s| tail.starts_with(s)) {
                Some(0) => Some((h_name, SLOTS[0].len())),
                Some(1) => Some((h_desp, SLOTS[1].len())),
                Some(2) => Some((r_name, SLOTS[2].len())),
                _ => None,
            };
            match value {
                Some((v, len)) => {
                    out.push_str(v);
                    rest = &tail[len..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_slot_is_rejected() {
        let text = DEFAULT_TEMPLATE.replace("{h_name}", "");
        assert_eq!(
            PromptTemplate::new(text),
            Err(TemplateError::MissingSlot("{h_name}"))
        );
    }

    #[test]
    fn empty_values_leave_the_bare_template() {
        let tpl = PromptTemplate::default();
        let mut expected = DEFAULT_TEMPLATE.to_string();
        for slot in SLOTS {
            expected = expected.replace(slot, "");
        }
        assert_eq!(tpl.render_values("", "", ""), expected);
        assert!(tpl.render_values("x", "", "y").contains("with description \"\","));
    }

    #[test]
    fn substituted_values_are_not_rescanned() {
        let tpl = PromptTemplate::default();
        let out = tpl.render_values("{r_name}", "{h_desp}", "rel");
        assert!(out.starts_with("I have an entity called \"{r_name}\" with description \"{h_desp}\""));
    }
}
