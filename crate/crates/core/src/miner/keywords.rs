use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MineError, VulnCategory};

/// Ordered `(pattern, category)` pairs; earlier entries win.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeywordTable {
    entries: Vec<(String, VulnCategory)>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    pattern: String,
    category: VulnCategory,
}

impl Default for KeywordTable {
    fn default() -> Self {
        use VulnCategory::*;
        let entries: &[(&str, VulnCategory)] = &[
            ("sql injection", SqlInjection),
            ("sqli", SqlInjection),
            ("command injection", CommandInjection),
            ("shell injection", CommandInjection),
            ("xss", Xss),
            ("cross site scripting", Xss),
            ("cross-site scripting", Xss),
            ("csrf", Xsrf),
            ("xsrf", Xsrf),
            ("cross site request forgery", Xsrf),
            ("cross-site request forgery", Xsrf),
            ("remote code execution", RemoteCodeExecution),
            ("rce", RemoteCodeExecution),
            ("code execution", RemoteCodeExecution),
            ("path disclosure", PathDisclosure),
            ("path traversal", PathDisclosure),
            ("directory traversal", PathDisclosure),
        ];
        KeywordTable {
            entries: entries.iter().map(|(p, c)| (p.to_string(), *c)).collect(),
        }
    }
}

impl KeywordTable {
    /// Patterns must be non-empty and lowercase.
    pub fn new(entries: Vec<(String, VulnCategory)>) -> Result<Self, MineError> {
        if entries.is_empty() {
            return Err(MineError::KeywordTable("table is empty".into()));
        }
        for (pattern, _) in &entries {
            if pattern.is_empty() || *pattern != pattern.to_lowercase() {
                return Err(MineError::KeywordTable(format!(
                    "pattern {pattern:?} must be non-empty lowercase"
                )));
            }
        }
        Ok(KeywordTable { entries })
    }

    /// Reads a JSON array of `{"pattern": ..., "category": ...}` objects.
    pub fn from_json(text: &str) -> Result<Self, MineError> {
        let rows: Vec<Entry> =
            serde_json::from_str(text).map_err(|e| MineError::KeywordTable(e.to_string()))?;
        KeywordTable::new(rows.into_iter().map(|e| (e.pattern, e.category)).collect())
    }

    pub fn load(path: &Path) -> Result<Self, MineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MineError::KeywordTable(format!("{}: {e}", path.display())))?;
        KeywordTable::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Entry> = self
            .entries
            .iter()
            .map(|(p, c)| Entry { pattern: p.clone(), category: *c })
            .collect();
        serde_json::to_string_pretty(&rows).expect("keyword table serializes")
    }

    pub fn entries(&self) -> &[(String, VulnCategory)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeywordMatch {
    /// Every pattern found in the message, in table order.
    pub keywords: Vec<String>,
    /// Category of the first matching entry.
    pub category: VulnCategory,
}

/// Case-insensitive substring match of every table pattern against `message`.
pub fn match_keywords(message: &str, table: &KeywordTable) -> Option<KeywordMatch> {
    let lowered = message.to_lowercase();
    let mut keywords: Vec<String> = Vec::new();
    let mut category = None;
    for (pattern, cat) in &table.entries {
        if lowered.contains(pattern.as_str()) {
            category.get_or_insert(*cat);
            if !keywords.contains(pattern) {
                keywords.push(pattern.clone());
            }
        }
    }
    category.map(|category| KeywordMatch { keywords, category })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let t = KeywordTable::default();
        assert_eq!(
            match_keywords("Fix SQL injection in login handler", &t),
            Some(KeywordMatch { keywords: vec!["sql injection".into()], category: VulnCategory::SqlInjection })
        );
        assert_eq!(match_keywords("update readme", &t), None);
        assert_eq!(
            match_keywords("prevent XSS and CSRF in form view", &t),
            Some(KeywordMatch { keywords: vec!["xss".into(), "csrf".into()], category: VulnCategory::Xss })
        );
    }

    #[test]
    fn table_json_round_trip_and_validation() {
        let t = KeywordTable::default();
        assert_eq!(KeywordTable::from_json(&t.to_json()).unwrap(), t);
        assert!(KeywordTable::from_json("[]").is_err());
        assert!(KeywordTable::from_json(r#"[{"pattern":"XSS","category":"Xss"}]"#).is_err());
        assert!(KeywordTable::from_json(r#"[{"pattern":"x","category":"Nope"}]"#).is_err());
    }

    proptest! {
        #[test]
        fn case_insensitive(m in "\\PC{0,40}|[A-Za-z ]{0,12}(XsS|Sql Injection|RCE)[A-Za-z ]{0,12}") {
            let t = KeywordTable::default();
            prop_assert_eq!(match_keywords(&m, &t), match_keywords(&m.to_lowercase(), &t));
        }
    }
}
