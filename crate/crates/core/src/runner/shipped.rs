//! Model files shipped with the crate.

use crate::error::Result;
use crate::model::Model;

/// `(file stem, JSON text)` for every shipped model.
pub const MODELS: [(&str, &str); 7] = [
    ("lf-single", include_str!("../../models/lf-single.json")),
    (
        "mixed-two-type",
        include_str!("../../models/mixed-two-type.json"),
    ),
    (
        "table-two-type",
        include_str!("../../models/table-two-type.json"),
    ),
    (
        "table-three-type",
        include_str!("../../models/table-three-type.json"),
    ),
    (
        "two-point-env",
        include_str!("../../models/two-point-env.json"),
    ),
    (
        "two-point-env-wide",
        include_str!("../../models/two-point-env-wide.json"),
    ),
    (
        "two-point-env-single",
        include_str!("../../models/two-point-env-single.json"),
    ),
];

/// Constant-environment example models.
pub const CONSTANT_EXAMPLES: [&str; 4] = [
    "lf-single",
    "mixed-two-type",
    "table-two-type",
    "table-three-type",
];

/// Models given by explicit finite tables.
pub const TABLE_EXAMPLES: [&str; 2] = ["table-two-type", "table-three-type"];

/// Loads a shipped model by file stem.
pub fn load(name: &str) -> Result<Model> {
    let (_, text) = MODELS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| crate::Error::Config(format!("no shipped model `{name}`")))?;
    Model::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_shipped_models_validate() {
        for (name, _) in MODELS {
            let m = load(name).unwrap();
            assert_eq!(m.id, name);
            let r = m.validate();
            assert!(r.passed(), "{name}:\n{r}");
        }
    }
}
