use super::RawItem;

const NOT_AVAILABLE: &str = "N/A";

/// Fills the semantic-profile request template for one item. Empty fields
/// render as `N/A`.
pub fn build_enrichment_prompt(item: &RawItem) -> String {
    let description = item
        .description
        .as_deref()
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .unwrap_or(NOT_AVAILABLE);
    let metadata = if item.genres.is_empty() {
        NOT_AVAILABLE.to_string()
    } else {
        item.genres.join(", ")
    };
    format!(
        "Analyze this item and provide comprehensive semantic profile:\n\
         Title: {title}\n\
         Description: {description}\n\
         Metadata: {metadata}\n\
         \n\
         Provide:\n\
         1. Key entities and concepts with descriptions\n\
         2. Entity relationships\n\
         3. Complexity level (1-5) with justification\n\
         4. Required background knowledge\n\
         5. Target audience characteristics\n\
         6. Learning style alignment (V/A/R/K)\n",
        title = item.title.trim(),
    )
}
