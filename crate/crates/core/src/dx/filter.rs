//! Model-assisted reduction of billed codes to the stay's clinical foci.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ccsr::canonical_code;
use crate::corpus::BillingCode;
use crate::llm::{ChatRequest, Gateway, LlmError, Sampling};

pub const FILTER_TEMPLATE: &str = include_str!("../../templates/dx_filter.txt");
const SUMMARY_SLOT: &str = "[DISCHARGE SUMMARY]";
const CODES_SLOT: &str = "[CODES]";

static CODE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:[-*•]|\d+[.)])?\s*([A-Za-z]\d[0-9A-Za-z]{1,2}(?:\.?[0-9A-Za-z]{1,4})?)\b").unwrap());

pub fn render_filter_prompt(codes: &[BillingCode], discharge_summary: &str) -> String {
    let listing: String = codes.iter().map(|c| format!("- {}: {}\n", c.code, c.description)).collect();
    FILTER_TEMPLATE.replacen(SUMMARY_SLOT, discharge_summary.trim(), 1).replacen(CODES_SLOT, listing.trim_end(), 1)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<BillingCode>,
    /// Codes the model returned that were not billed.
    pub dropped_unknown: Vec<String>,
    pub unparseable: bool,
}

/// Keeps only billed codes named in the response, in billing order.
pub fn parse_filter_response(codes: &[BillingCode], response: &str) -> FilterOutcome {
    let billed: BTreeSet<String> = codes.iter().map(|c| canonical_code(&c.code)).collect();
    let mut named = BTreeSet::new();
    let mut dropped_unknown = Vec::new();
    let mut any = false;
    for line in response.lines() {
        let Some(c) = CODE_LINE.captures(line) else { continue };
        any = true;
        let code = canonical_code(&c[1]);
        if billed.contains(&code) {
            named.insert(code);
        } else {
            log::warn!("filter returned unbilled code {code}; dropped");
            dropped_unknown.push(code);
        }
    }
    let none = response.trim().trim_matches('"').eq_ignore_ascii_case("none");
    let unparseable = !any && !none;
    let kept = codes.iter().filter(|c| named.contains(&canonical_code(&c.code))).cloned().collect();
    FilterOutcome { kept, dropped_unknown, unparseable }
}

pub fn filter_billing_codes(
    codes: &[BillingCode],
    discharge_summary: &str,
    gateway: &Gateway,
    provider_id: &str,
    model_id: &str,
) -> Result<FilterOutcome, LlmError> {
    let prompt = render_filter_prompt(codes, discharge_summary);
    let resp = gateway.complete(&ChatRequest::new(provider_id, model_id, prompt, Sampling::default()))?;
    Ok(parse_filter_response(codes, &resp.text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FnProvider, ProviderLimits, ProviderReply, ResponseCache};
    use std::sync::Arc;

    fn codes() -> Vec<BillingCode> {
        [("R65.21", "Severe sepsis with septic shock"), ("N17.9", "Acute kidney failure"), ("Z87.891", "History of nicotine dependence")]
            .iter()
            .map(|(c, d)| BillingCode { code: c.to_string(), description: d.to_string() })
            .collect()
    }

    fn gateway(reply: &'static str) -> Gateway {
        let mut g = Gateway::new(ResponseCache::in_memory());
        g.register(Arc::new(FnProvider::new("m", move |_| Ok(ProviderReply::text(reply)))), ProviderLimits::default());
        g
    }

    #[test]
    fn echo_all_keeps_all() {
        let echo = "- R65.21: Severe sepsis with septic shock\n- N17.9: Acute kidney failure\n- Z87.891: History of nicotine dependence";
        let out = filter_billing_codes(&codes(), "summary", &gateway(echo), "m", "x").unwrap();
        assert_eq!(out.kept, codes());
    }

    #[test]
    fn hallucinated_dropped_and_history_removed() {
        let out = filter_billing_codes(&codes(), "summary", &gateway("- R65.21: shock\n- J18.9: Pneumonia\n- N17.9: AKI"), "m", "x").unwrap();
        assert_eq!(out.kept.iter().map(|c| c.code.as_str()).collect::<Vec<_>>(), ["R65.21", "N17.9"]);
        assert_eq!(out.dropped_unknown, ["J189"]);
    }

    #[test]
    fn unparseable_and_none() {
        let out = parse_filter_response(&codes(), "I cannot help with that.");
        assert!(out.unparseable && out.kept.is_empty());
        let out = parse_filter_response(&codes(), "NONE");
        assert!(!out.unparseable && out.kept.is_empty());
    }

    #[test]
    fn prompt_lists_codes() {
        let p = render_filter_prompt(&codes(), "Admitted with septic shock.");
        assert!(p.contains("- Z87.891: History of nicotine dependence"));
        assert!(p.contains("Admitted with septic shock."));
        assert!(!p.contains(CODES_SLOT) && !p.contains(SUMMARY_SLOT));
    }
}
