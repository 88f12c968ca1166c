use serde::{Deserialize, Serialize};

use super::tokenizer::Tokenizer;
use crate::corpus::{ClinicalNote, NoteType, Timestamp};

pub const DEFAULT_WINDOW: usize = 128;
pub const DEFAULT_STRIDE: usize = 20;

/// Window and stride of the sliding chunker, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkParams {
    pub window: usize,
    pub stride: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, stride: DEFAULT_STRIDE }
    }
}

impl ChunkParams {
    pub fn new(window: usize, stride: usize) -> Result<Self, String> {
        if window == 0 {
            return Err("window must be at least 1 token".into());
        }
        if stride == 0 || stride > window {
            return Err(format!("stride must be in 1..={window}, got {stride}"));
        }
        Ok(Self { window, stride })
    }

    /// Reads the second number as the overlap between neighbours instead of
    /// the step, i.e. window 128 / overlap 20 steps by 108 tokens.
    pub fn from_overlap(window: usize, overlap: usize) -> Result<Self, String> {
        if overlap >= window {
            return Err(format!("overlap {overlap} must be smaller than window {window}"));
        }
        Self::new(window, window - overlap)
    }

    /// Number of chunks emitted for a note of `tokens` tokens.
    pub fn chunk_count(&self, tokens: usize) -> usize {
        match tokens {
            0 => 0,
            t if t <= self.window => 1,
            t => (t - self.window).div_ceil(self.stride) + 1,
        }
    }

    /// Token spans `[start, end)` of every chunk of a note of `tokens` tokens.
    pub fn spans(&self, tokens: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.chunk_count(tokens)).map(move |i| {
            let start = i * self.stride;
            (start, (start + self.window).min(tokens))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub encounter_id: String,
    pub note_id: String,
    #[serde(with = "crate::corpus::rfc3339")]
    pub note_timestamp: Timestamp,
    pub note_type: NoteType,
    pub note_type_label: String,
    pub token_span: (usize, usize),
    pub text: String,
}

/// Splits one note into overlapping token windows. Windows never cross note
/// boundaries; the last window ends at the note's final token.
pub fn chunk_note(
    encounter_id: &str,
    note: &ClinicalNote,
    tokenizer: &dyn Tokenizer,
    params: ChunkParams,
) -> Vec<Chunk> {
    let tokens = tokenizer.tokenize(&note.text);
    params
        .spans(tokens.len())
        .map(|(start, end)| {
            let bytes = tokens[start].start..tokens[end - 1].end;
            Chunk {
                chunk_id: format!("{}:{}:{}", note.note_id, start, end),
                encounter_id: encounter_id.to_string(),
                note_id: note.note_id.clone(),
                note_timestamp: note.timestamp,
                note_type: note.note_type,
                note_type_label: note.type_label().to_string(),
                token_span: (start, end),
                text: note.text[bytes].to_string(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_timestamp;
    use crate::indexer::tokenizer::RuleTokenizer;
    use proptest::prelude::*;

    fn note_of(tokens: usize) -> ClinicalNote {
        ClinicalNote {
            note_id: "n".into(),
            timestamp: parse_timestamp("2024-01-01T00:00:00Z").unwrap(),
            note_type: NoteType::Progress,
            raw_type: None,
            author_service: None,
            text: (0..tokens).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "),
        }
    }

    fn spans(tokens: usize, p: ChunkParams) -> Vec<(usize, usize)> {
        chunk_note("E", &note_of(tokens), &RuleTokenizer, p).into_iter().map(|c| c.token_span).collect()
    }

    #[test]
    fn exact_fit_is_one_chunk() {
        assert_eq!(spans(128, ChunkParams::default()), [(0, 128)]);
    }

    #[test]
    fn one_sixty_eight_tokens() {
        assert_eq!(spans(168, ChunkParams::default()), [(0, 128), (20, 148), (40, 168)]);
    }

    #[test]
    fn short_note_and_empty_note() {
        assert_eq!(spans(50, ChunkParams::default()), [(0, 50)]);
        assert!(spans(0, ChunkParams::default()).is_empty());
    }

    #[test]
    fn overlap_reading() {
        let p = ChunkParams::from_overlap(128, 20).unwrap();
        assert_eq!(p.stride, 108);
        assert_eq!(spans(300, p), [(0, 128), (108, 236), (216, 300)]);
    }

    #[test]
    fn invalid_params() {
        assert!(ChunkParams::new(0, 1).is_err());
        assert!(ChunkParams::new(10, 0).is_err());
        assert!(ChunkParams::new(10, 11).is_err());
    }

    #[test]
    fn chunk_text_is_note_substring() {
        let mut n = note_of(0);
        n.text = "Pt febrile.  CXR 1/16: RLL opacity; started cefepime.\nVancomycin: 1/16-present".into();
        let p = ChunkParams::new(5, 2).unwrap();
        for c in chunk_note("E", &n, &RuleTokenizer, p) {
            assert!(n.text.contains(&c.text), "{:?}", c.text);
            assert!(!c.text.starts_with(char::is_whitespace));
        }
    }

    proptest! {
        #[test]
        fn count_and_coverage(t in 0usize..700, window in 1usize..200, stride_frac in 0.0f64..1.0) {
            let stride = 1 + ((window - 1) as f64 * stride_frac) as usize;
            let p = ChunkParams::new(window, stride).unwrap();
            let s: Vec<_> = p.spans(t).collect();
            let mut covered = vec![false; t];
            for (i, &(a, b)) in s.iter().enumerate() {
                prop_assert!(b - a <= window && a < b);
                if i > 0 { prop_assert_eq!(a - s[i - 1].0, stride); }
                covered[a..b].iter_mut().for_each(|c| *c = true);
            }
            prop_assert!(covered.iter().all(|&c| c));
            if t > 0 { prop_assert_eq!(s.last().unwrap().1, t); }
        }
    }
}
