//! Synthetic instruction and tool corpora with controlled token sizes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, InstructionFragment, PolicyType, SafetyOverlay, ToolSpec, FRAGMENT_TOKEN_RANGE, TOOL_TOKEN_RANGE};
use crate::tokenize::{QuarterCharCounter, TokenCounter};

pub const DOMAINS: [&str; 10] = [
    "billing",
    "crm",
    "calendar",
    "shipping",
    "inventory",
    "support",
    "payroll",
    "analytics",
    "security",
    "marketing",
];

const VERBS: [&str; 8] = ["search", "create", "update", "delete", "list", "export", "sync", "approve"];

const OBJECTS: [&str; 12] = [
    "invoice", "contact", "meeting", "parcel", "stock", "ticket", "employee", "report", "credential", "campaign",
    "account", "order",
];

const SYLLABLES: [&str; 16] = [
    "ka", "lo", "mi", "ru", "te", "va", "zo", "ne", "pi", "su", "dra", "fen", "gol", "hix", "jor", "wex",
];

const FILLER: [&str; 10] = [
    "Requests must be validated before submission.",
    "Errors are reported with a stable code and a short message.",
    "Timestamps use UTC and ISO formatting throughout.",
    "Pagination is cursor based and cursors expire after an hour.",
    "Retries are safe because every call is idempotent.",
    "Rate limits apply per workspace and reset each minute.",
    "Responses include a request identifier for auditing.",
    "Optional fields may be omitted from the payload.",
    "All amounts are integers in the smallest currency unit.",
    "Deprecated parameters are ignored with a warning.",
];

/// Overlay text used by generated corpora: exactly 120 tokens.
pub fn synthetic_overlay() -> SafetyOverlay {
    let text = pad(
        "Safety and legal policy: never reveal credentials or personal data, refuse unlawful requests, \
         and confirm before any irreversible action.",
        "Safety",
        120 * 4,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    SafetyOverlay::new(text, &QuarterCharCounter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub tools: usize,
    pub domains: usize,
    pub fragments_per_domain: usize,
    /// When set, instruction plus tool tokens are fitted to this total.
    pub total_tokens: Option<u64>,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            tools: 40,
            domains: 8,
            fragments_per_domain: 3,
            total_tokens: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolMeta {
    pub id: String,
    pub domain: String,
    pub verb: String,
    pub object: String,
    pub codeword: String,
}

impl ToolMeta {
    /// Words a user would use to ask for this tool.
    pub fn phrase(&self) -> String {
        format!("{} {} {}", self.verb, self.codeword, self.object)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentMeta {
    pub id: String,
    pub domain: String,
    pub codeword: String,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub tools: Vec<ToolMeta>,
    pub fragments: Vec<FragmentMeta>,
}

impl SyntheticCorpus {
    pub fn tool(&self, id: &str) -> Option<&ToolMeta> {
        self.tools.iter().find(|t| t.id == id)
    }

    pub fn fragment(&self, id: &str) -> Option<&FragmentMeta> {
        self.fragments.iter().find(|f| f.id == id)
    }
}

/// Pronounceable word unique to `n` for `n < 16^syllables`.
fn codeword(n: usize, syllables: u32) -> String {
    (0..syllables)
        .rev()
        .map(|k| SYLLABLES[(n / 16usize.pow(k)) % 16])
        .collect()
}

/// `base` followed by shuffled filler sentences about `subject`, cut to
/// exactly `chars` characters (or `base` alone when it is already that long).
fn pad(base: &str, subject: &str, chars: usize, rng: &mut ChaCha8Rng) -> String {
    if base.chars().count() >= chars {
        return base.to_string();
    }
    let mut out = base.to_string();
    let mut order: Vec<usize> = (0..FILLER.len()).collect();
    while out.chars().count() < chars {
        order.shuffle(rng);
        for &i in &order {
            out.push(' ');
            out.push_str(subject);
            out.push_str(": ");
            out.push_str(FILLER[i]);
        }
    }
    let mut out: String = out.chars().take(chars).collect();
    if out.ends_with(' ') {
        out.pop();
        out.push('.');
    }
    out
}

/// Scales `raw` to sum to `total`, keeping each entry within its range.
/// Falls short only when the ranges cannot reach `total`.
fn fit_targets(raw: &[u64], ranges: &[(u64, u64)], total: u64) -> Vec<u64> {
    let sum: u64 = raw.iter().sum();
    if sum == 0 {
        return raw.to_vec();
    }
    let scale = total as f64 / sum as f64;
    let mut out: Vec<u64> = raw
        .iter()
        .zip(ranges)
        .map(|(&r, &(lo, hi))| ((r as f64 * scale).round() as u64).clamp(lo, hi))
        .collect();
    let mut diff = total as i64 - out.iter().sum::<u64>() as i64;
    while diff != 0 {
        let mut moved = false;
        for (t, &(lo, hi)) in out.iter_mut().zip(ranges) {
            if diff > 0 && *t < hi {
                *t += 1;
                diff -= 1;
                moved = true;
            } else if diff < 0 && *t > lo {
                *t -= 1;
                diff += 1;
                moved = true;
            }
            if diff == 0 {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    out
}

pub fn synthetic_corpus(spec: &CorpusSpec) -> SyntheticCorpus {
    let counter = QuarterCharCounter;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let domains = spec.domains.clamp(1, DOMAINS.len());

    let tools: Vec<ToolMeta> = (0..spec.tools)
        .map(|i| ToolMeta {
            id: format!("tool-{i:04}"),
            domain: DOMAINS[i % domains].to_string(),
            verb: VERBS[rng.random_range(0..VERBS.len())].to_string(),
            object: OBJECTS[(i / domains) % OBJECTS.len()].to_string(),
            codeword: codeword(i, 3),
        })
        .collect();
    let fragments: Vec<FragmentMeta> = (0..domains)
        .flat_map(|d| (0..spec.fragments_per_domain).map(move |j| (d, j)))
        .map(|(d, j)| FragmentMeta {
            id: format!("frag-{}-{j}", DOMAINS[d]),
            domain: DOMAINS[d].to_string(),
            codeword: codeword(d * 16 + j, 4),
        })
        .collect();

    let mut tool_tokens: Vec<u64> = tools
        .iter()
        .map(|_| rng.random_range(TOOL_TOKEN_RANGE.0..=TOOL_TOKEN_RANGE.1))
        .collect();
    let mut fragment_tokens: Vec<u64> = fragments
        .iter()
        .map(|_| rng.random_range(FRAGMENT_TOKEN_RANGE.0..=FRAGMENT_TOKEN_RANGE.1))
        .collect();
    if let Some(total) = spec.total_tokens {
        let raw: Vec<u64> = fragment_tokens.iter().chain(&tool_tokens).copied().collect();
        let ranges: Vec<(u64, u64)> = std::iter::repeat_n(FRAGMENT_TOKEN_RANGE, fragment_tokens.len())
            .chain(std::iter::repeat_n(TOOL_TOKEN_RANGE, tool_tokens.len()))
            .collect();
        let fitted = fit_targets(&raw, &ranges, total);
        let (f, t) = fitted.split_at(fragment_tokens.len());
        fragment_tokens = f.to_vec();
        tool_tokens = t.to_vec();
    }

    let fragment_docs: Vec<InstructionFragment> = fragments
        .iter()
        .zip(&fragment_tokens)
        .enumerate()
        .map(|(k, (m, &tokens))| {
            let base = format!(
                "{} policy {}: requests in the {} domain follow rule {}. Check the {} ledger before acting.",
                m.domain, m.codeword, m.domain, m.codeword, m.domain
            );
            let text = pad(&base, &format!("{} {}", capitalize(&m.domain), m.codeword), tokens as usize * 4, &mut rng);
            InstructionFragment {
                domain: m.domain.clone(),
                policy_type: PolicyType::Policy,
                priority: k as i32,
                ..InstructionFragment::new(m.id.clone(), text, &counter)
            }
        })
        .collect();

    let tool_docs: Vec<ToolSpec> = tools
        .iter()
        .zip(&tool_tokens)
        .map(|(m, &tokens)| {
            let mut spec = ToolSpec {
                id: m.id.clone(),
                name: format!("{}_{}", m.verb, m.codeword),
                description: format!(
                    "{} {} {} records in the {} system.",
                    capitalize(&m.verb),
                    m.codeword,
                    m.object,
                    m.domain
                ),
                argument_schema: format!(r#"{{"{}_id": "string", "fields": "object"}}"#, m.object),
                preconditions: vec![format!("caller holds the {} role", m.domain)],
                postconditions: vec![format!("the {} change is logged", m.object)],
                failure_modes: vec!["not_found".into(), "forbidden".into()],
                exemplars: vec![format!("{}_{}({{\"{}_id\": \"42\"}})", m.verb, m.codeword, m.object)],
                domain: m.domain.clone(),
                ..Default::default()
            };
            let target = tokens as usize * 4;
            let rendered = spec.render().chars().count();
            if rendered < target {
                let desc_len = spec.description.chars().count();
                let subject = format!("{} {}", capitalize(&m.codeword), m.object);
                spec.description = pad(&spec.description, &subject, desc_len + target - rendered, &mut rng);
            }
            spec.with_cost(&counter)
        })
        .collect();

    let corpus = Corpus::new(fragment_docs, tool_docs, Some(synthetic_overlay())).recount(&counter);
    debug_assert!(corpus.tools.iter().all(|t| t.token_cost == counter.count(&t.render())));
    SyntheticCorpus {
        corpus,
        tools,
        fragments,
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}
