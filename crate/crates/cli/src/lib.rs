//! `trajedit`: one-shot adaptation, batch evaluation, SVG rendering and the
//! review service.

pub mod api;
pub mod cli;
pub mod render;

/// Default fixture key for an ad-hoc instruction: lowercase ASCII
/// alphanumerics joined by single underscores.
///
/// ```
/// assert_eq!(trajedit::fixture_slug("Go left by 20!"), "go_left_by_20");
/// ```
pub fn fixture_slug(instruction: &str) -> String {
    let mut out = String::new();
    for c in instruction.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}
