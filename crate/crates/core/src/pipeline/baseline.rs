//! Fixed-token-window chunking: the conventional preprocessing the pipeline
//! is compared against.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Document, TopicLabel};
use crate::text::tokenize;

use super::majority_topic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineChunking {
    pub window_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for BaselineChunking {
    fn default() -> Self {
        BaselineChunking {
            window_tokens: 512,
            overlap_tokens: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineChunk {
    /// Window tokens joined by single spaces.
    pub text: String,
    /// Majority topic of the window's tokens, when the document is labeled.
    pub topic: Option<TopicLabel>,
    /// Token range `[start, end)` over the whole document.
    pub start: usize,
    pub end: usize,
}

/// Slides a window of `window_tokens` over the document's tokens with a
/// stride of `window_tokens - overlap_tokens`, ignoring segment boundaries.
/// The last window ends at the final token.
pub fn baseline_chunks(doc: &Document, cfg: &BaselineChunking) -> Result<Vec<BaselineChunk>> {
    if cfg.window_tokens == 0 || cfg.overlap_tokens >= cfg.window_tokens {
        return Err(Error::InvalidConfig(format!(
            "baseline window {} with overlap {} leaves no stride",
            cfg.window_tokens, cfg.overlap_tokens
        )));
    }
    let labeled = doc.topics();
    let mut tokens: Vec<(String, Option<&TopicLabel>)> = Vec::new();
    for (i, seg) in doc.segments.iter().enumerate() {
        let topic = labeled.as_ref().map(|t| &t[i]);
        tokens.extend(tokenize(&seg.text).into_iter().map(|t| (t, topic)));
    }
    let stride = cfg.window_tokens - cfg.overlap_tokens;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let end = (start + cfg.window_tokens).min(tokens.len());
        let window = &tokens[start..end];
        let topic = if labeled.is_some() {
            let topics: Vec<TopicLabel> = window.iter().filter_map(|(_, t)| t.cloned()).collect();
            majority_topic(&topics)
        } else {
            None
        };
        chunks.push(BaselineChunk {
            text: window.iter().map(|(t, _)| t.as_str()).collect::<Vec<_>>().join(" "),
            topic,
            start,
            end,
        });
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DocType;

    #[test]
    fn windows_overlap_and_cover() {
        let doc = Document::from_segments(
            "d",
            "",
            DocType::Reference,
            [("a b c d", Some("x")), ("e f g", Some("y"))],
        );
        let cfg = BaselineChunking {
            window_tokens: 4,
            overlap_tokens: 1,
        };
        let chunks = baseline_chunks(&doc, &cfg).unwrap();
        let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, ["a b c d", "d e f g"]);
        assert_eq!(chunks[0].topic, Some("x".into()));
        assert_eq!(chunks[1].topic, Some("y".into()));
    }

    #[test]
    fn short_document_is_one_chunk() {
        let doc = Document::from_segments("d", "", DocType::Reference, [("a b", None)]);
        let chunks = baseline_chunks(&doc, &BaselineChunking::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].topic, None);
    }

    #[test]
    fn zero_stride_rejected() {
        let doc = Document::from_segments("d", "", DocType::Reference, [("a", None)]);
        let cfg = BaselineChunking {
            window_tokens: 2,
            overlap_tokens: 2,
        };
        assert!(baseline_chunks(&doc, &cfg).is_err());
    }
}
