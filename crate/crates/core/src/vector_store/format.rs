use std::fmt::Write;

use super::RetrievalHit;

pub const RAG_CONTEXT_HEADER: &str =
    "Similar foods from the reference database with verified nutritional information:";

/// Renders retrieval hits as a prompt context block, one two-line group per
/// hit in hit order. Output depends only on the hits.
pub fn format_rag_context(hits: &[RetrievalHit]) -> String {
    let mut out = String::from(RAG_CONTEXT_HEADER);
    for (rank, hit) in hits.iter().enumerate() {
        let _ = write!(
            out,
            "\n{}. {} (similarity {:.4})\n   {}",
            rank + 1,
            hit.food_label,
            hit.similarity,
            hit.nutrition.to_context_line()
        );
    }
    out
}
