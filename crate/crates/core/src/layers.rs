//! Default Inception-V3 layer selection.
//!
//! The first layer is listed as `Conv2d_1a_3x`, which is almost certainly a
//! truncation of `Conv2d_1a_3x3`. The printed name is the default and the
//! full name is accepted as an alias when locating tensor files.

pub const DEFAULT_LAYERS: [&str; 7] = [
    "Conv2d_1a_3x",
    "Conv2d_2b_3x3",
    "Conv2d_3b_1x1",
    "Mixed_5d",
    "Mixed_6e",
    "Mixed_7c",
    "FC",
];

const ALIASES: &[(&str, &str)] = &[("Conv2d_1a_3x", "Conv2d_1a_3x3")];

pub fn default_layers() -> Vec<String> {
    DEFAULT_LAYERS.iter().map(|s| s.to_string()).collect()
}

/// Alternative file names for a layer, excluding the name itself.
pub fn layer_aliases(name: &str) -> Vec<&'static str> {
    ALIASES
        .iter()
        .filter_map(|&(a, b)| {
            if a == name {
                Some(b)
            } else if b == name {
                Some(a)
            } else {
                None
            }
        })
        .collect()
}

/// Parse a comma separated layer list, rejecting empty names.
pub fn parse_layer_list(s: &str) -> Option<Vec<String>> {
    let layers: Vec<String> = s.split(',').map(|l| l.trim().to_string()).collect();
    if layers.iter().any(|l| l.is_empty()) {
        None
    } else {
        Some(layers)
    }
}
