//! Rule-generator exchange: request/response text, the offline cache, and
//! the HTTP transport for an external generator.
//!
//! A request is the canonical facts text preceded by a comment header:
//!
//! ```text
//! % frame_id: scn-0103/t8
//! % nav: straight
//! ego(6.9, 0.0, straight).
//! object(3, pedestrian, 4.5, 1.2, 1.57, front, crossing, 0.89).
//! ```
//!
//! Because the header is made of `%` comments the whole request is itself a
//! valid facts document. A response is plain `suggestion(a, s, t).` lines.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::predicate::{parse_facts, parse_suggestions_lenient, serialize_facts, SceneFacts, Suggestion};

use super::{GeneratorError, GeneratorOutput, RuleGenerator};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RequestMeta {
    pub frame_id: String,
    pub nav: String,
}

pub fn format_request(facts: &SceneFacts) -> String {
    format!(
        "% frame_id: {}\n% nav: {}\n{}",
        facts.frame_id.replace('\n', " "),
        facts.ego.nav,
        serialize_facts(facts)
    )
}

/// Server side of the exchange: split a request into header fields and
/// facts.
pub fn parse_request(text: &str) -> Result<(RequestMeta, SceneFacts), GeneratorError> {
    let mut meta = RequestMeta::default();
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('%') else {
            break;
        };
        if let Some((key, value)) = rest.trim().split_once(':') {
            match key.trim() {
                "frame_id" => meta.frame_id = value.trim().to_string(),
                "nav" => meta.nav = value.trim().to_string(),
                _ => {}
            }
        }
    }
    let facts = parse_facts(text)?;
    Ok((meta, facts))
}

/// Answer a request with `generator`, producing response text.
pub fn respond(generator: &dyn RuleGenerator, request: &str) -> Result<String, GeneratorError> {
    let (_, facts) = parse_request(request)?;
    let out = generator.generate(&facts)?;
    Ok(suggestions_text(&out.suggestions))
}

fn suggestions_text(suggestions: &[Suggestion]) -> String {
    suggestions.iter().map(|s| s.to_predicate() + "\n").collect()
}

/// Validate a response, discarding bad suggestions one at a time.
fn accept_response(text: &str, source: &str) -> Result<GeneratorOutput, GeneratorError> {
    let (suggestions, dropped) = parse_suggestions_lenient(text, source)?;
    if suggestions.is_empty() {
        return Err(GeneratorError::Empty);
    }
    Ok(GeneratorOutput {
        suggestions,
        rejected: dropped.iter().map(|e| e.to_string()).collect(),
    })
}

fn file_stem(frame_id: &str) -> String {
    frame_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Where the cached response for `frame_id` lives under `dir`.
pub fn cache_path(dir: &Path, frame_id: &str) -> PathBuf {
    dir.join(format!("{}.lp", file_stem(frame_id)))
}

pub fn write_cache_entry(dir: &Path, frame_id: &str, suggestions: &[Suggestion]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = cache_path(dir, frame_id);
    fs::write(&path, suggestions_text(suggestions))?;
    Ok(path)
}

/// Reads pre-computed responses indexed by frame id.
#[derive(Debug, Clone)]
pub struct CachedGenerator {
    dir: PathBuf,
}

impl CachedGenerator {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CachedGenerator { dir: dir.into() }
    }
}

impl RuleGenerator for CachedGenerator {
    fn id(&self) -> String {
        format!("cache:{}", self.dir.display())
    }

    fn generate(&self, facts: &SceneFacts) -> Result<GeneratorOutput, GeneratorError> {
        let path = cache_path(&self.dir, &facts.frame_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(GeneratorError::CacheMiss {
                    frame_id: facts.frame_id.clone(),
                    path: path.display().to_string(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        accept_response(&text, &self.id())
    }
}

/// POSTs the request as `text/plain` and validates the reply.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    url: String,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        HttpGenerator {
            url: url.into(),
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

impl RuleGenerator for HttpGenerator {
    fn id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn generate(&self, facts: &SceneFacts) -> Result<GeneratorOutput, GeneratorError> {
        let body = self
            .agent
            .post(&self.url)
            .header("Content-Type", "text/plain")
            .send(format_request(facts))
            .and_then(|mut resp| resp.body_mut().read_to_string())
            .map_err(|e| GeneratorError::Transport(e.to_string()))?;
        accept_response(&body, &self.id())
    }
}
