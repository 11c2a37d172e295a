//! Bundled experiment configurations for one-command reproduction.

use crate::RunError;

pub const PRESETS: [(&str, &str); 6] = [
    ("fig3", include_str!("../presets/fig3.json")),
    ("fig4", include_str!("../presets/fig4.json")),
    ("fig5", include_str!("../presets/fig5.json")),
    ("fig6", include_str!("../presets/fig6.json")),
    ("fig7", include_str!("../presets/fig7.json")),
    ("table2", include_str!("../presets/table2.json")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Resolves a `--config` argument: a bundled preset name, or a file path.
pub fn load_config_text(arg: &str) -> Result<String, RunError> {
    if let Some(text) = preset_text(arg) {
        return Ok(text.to_string());
    }
    std::fs::read_to_string(arg).map_err(|e| {
        RunError::Config(format!(
            "config `{arg}`: {e} (presets: {})",
            PRESETS.map(|(n, _)| n).join(", ")
        ))
    })
}
