//! Lexicon-based part-of-speech tagging and the relation/modified split.
//!
//! Queries are partitioned into a relation phrase (nouns and main verbs, the
//! consistent content words) and a modified phrase (everything else:
//! determiners, auxiliaries, adjectives, adverbs, pronouns, adpositions).
//! Auxiliaries are tagged separately from verbs so copulas like "is" land on
//! the modified side.

use crate::error::Error;
use std::collections::HashMap;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosTag {
    Noun,
    Verb,
    Aux,
    Adj,
    Adv,
    Det,
    Pron,
    Adp,
    Num,
    Other,
}

impl PosTag {
    pub fn parse(s: &str) -> Result<PosTag, Error> {
        match s {
            "NOUN" => Ok(PosTag::Noun),
            "VERB" => Ok(PosTag::Verb),
            "AUX" => Ok(PosTag::Aux),
            "ADJ" => Ok(PosTag::Adj),
            "ADV" => Ok(PosTag::Adv),
            "DET" => Ok(PosTag::Det),
            "PRON" => Ok(PosTag::Pron),
            "ADP" => Ok(PosTag::Adp),
            "NUM" => Ok(PosTag::Num),
            "OTHER" => Ok(PosTag::Other),
            other => Err(Error::Invalid(format!("unknown PoS tag `{other}`"))),
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Aux => "AUX",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Det => "DET",
            PosTag::Pron => "PRON",
            PosTag::Adp => "ADP",
            PosTag::Num => "NUM",
            PosTag::Other => "OTHER",
        };
        f.write_str(s)
    }
}

/// Word -> tag mapping with a total lookup via a default tag for unknowns.
#[derive(Debug, Clone)]
pub struct TagLexicon {
    map: HashMap<String, PosTag>,
    default: PosTag,
}

const DET: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "each", "every", "no",
    "another", "both",
];

const AUX: &[&str] = &[
    "is", "are", "was", "were", "am", "be", "been", "being", "do", "does", "did", "has", "have",
    "had", "will", "would", "can", "could", "shall", "should", "may", "might", "must",
];

const PRON: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "my", "your",
    "his", "its", "our", "their", "mine", "yours", "hers", "ours", "theirs", "himself", "herself",
    "itself", "themselves", "someone", "something", "anyone", "anything", "who", "whom", "whose",
    "which", "what",
];

const ADP: &[&str] = &[
    "in", "on", "at", "by", "with", "from", "to", "of", "for", "about", "into", "onto", "over",
    "under", "above", "below", "near", "behind", "beside", "between", "through", "during",
    "before", "after", "against", "across", "around", "off", "out", "up", "down", "inside",
    "outside", "toward", "towards", "within", "without", "along", "upon",
];

const ADV: &[&str] = &[
    "quickly", "slowly", "carefully", "gently", "quietly", "loudly", "suddenly", "again", "then",
    "now", "here", "there", "very", "really", "almost", "always", "never", "often", "sometimes",
    "twice", "once", "away", "back", "still", "just", "already", "soon", "later", "briefly",
    "repeatedly", "firmly", "softly", "calmly", "eagerly", "happily",
];

const ADJ: &[&str] = &[
    "red", "blue", "green", "black", "white", "brown", "yellow", "small", "large", "big",
    "little", "old", "young", "new", "tall", "short", "long", "wooden", "empty", "full", "dirty",
    "warm", "cold", "bright", "dark", "heavy", "tired", "busy", "quiet", "messy",
];

const NUM: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "first",
    "second", "third",
];

const NOUN: &[&str] = &[
    "person", "man", "woman", "boy", "girl", "child", "dog", "cat", "hands", "hair", "face",
    "door", "window", "sink", "table", "chair", "couch", "bed", "floor", "wall", "shelf", "box",
    "bag", "cup", "glass", "plate", "bowl", "book", "phone", "laptop", "camera", "picture",
    "mirror", "towel", "blanket", "pillow", "clothes", "shirt", "shoes", "broom", "vacuum",
    "dish", "dishes", "food", "sandwich", "coffee", "tea", "water", "bottle", "ball", "toy",
    "light", "lamp", "kitchen", "room", "bathroom", "doorway", "closet", "refrigerator", "stove",
    "microwave", "cabinet", "drawer", "stairs", "sofa", "desk", "paper", "pen", "pencil", "keys",
    "wallet", "jacket", "coat", "hat", "groceries", "laundry", "trash", "garbage", "vase",
    "plant", "flower", "medicine", "snack", "homework", "television", "video", "game", "guitar",
    "piano",
];

const VERB: &[&str] = &[
    "washing", "washes", "opening", "opens", "closing", "closes", "reading", "reads", "throwing",
    "throws", "holding", "holds", "eating", "eats", "drinking", "drinks", "cooking", "cooks",
    "cleaning", "cleans", "running", "runs", "walking", "walks", "sitting", "sits", "standing",
    "stands", "lying", "jumping", "jumps", "playing", "plays", "watching", "watches", "taking",
    "takes", "putting", "puts", "picking", "picks", "grabbing", "grabs", "fixing", "fixes",
    "pouring", "pours", "folding", "folds", "sweeping", "sweeps", "wiping", "wipes", "tidying",
    "smiling", "smiles", "laughing", "laughs", "sneezing", "dropping", "drops", "turning",
    "turns", "looking", "looks", "talking", "talks", "dressing", "carrying", "carries",
    "lifting", "lifts", "pushing", "pushes", "pulling", "pulls", "moving", "moves", "entering",
    "enters", "leaving", "leaves", "placing", "places", "removing", "removes", "wearing",
    "wears", "using", "uses", "making", "makes", "writing", "writes", "typing", "types",
    "pointing", "points", "waving", "waves", "stretching", "kicking", "kicks", "catching",
    "catches", "bouncing", "bounces",
];

impl TagLexicon {
    /// The built-in English lexicon covering the synthetic vocabulary and the
    /// common function words around it. Unknown words default to NOUN:
    /// content words carry the discriminative information, so routing an
    /// unknown word to the relation side is the safer error.
    pub fn builtin_english() -> Self {
        let mut map = HashMap::new();
        let groups: [(&[&str], PosTag); 9] = [
            (DET, PosTag::Det),
            (AUX, PosTag::Aux),
            (PRON, PosTag::Pron),
            (ADP, PosTag::Adp),
            (ADV, PosTag::Adv),
            (ADJ, PosTag::Adj),
            (NUM, PosTag::Num),
            (NOUN, PosTag::Noun),
            (VERB, PosTag::Verb),
        ];
        for (words, tag) in groups {
            for w in words {
                map.insert((*w).to_string(), tag);
            }
        }
        TagLexicon {
            map,
            default: PosTag::Noun,
        }
    }

    /// Load a lexicon from a UTF-8 file with one `word<TAB>TAG` pair per
    /// line. Blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut map = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (word, tag) = match (parts.next(), parts.next()) {
                (Some(w), Some(t)) => (w, t),
                _ => {
                    return Err(Error::parse(
                        path.display().to_string(),
                        format!("line {}: expected `word<TAB>TAG`", lineno + 1),
                    ))
                }
            };
            map.insert(word.to_lowercase(), PosTag::parse(tag)?);
        }
        Ok(TagLexicon {
            map,
            default: PosTag::Noun,
        })
    }

    pub fn lookup(&self, word: &str) -> PosTag {
        *self.map.get(word).unwrap_or(&self.default)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.map.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// One tag per token; fails on an empty token list.
pub fn tag_words(tokens: &[String], lexicon: &TagLexicon) -> Result<Vec<PosTag>, Error> {
    if tokens.is_empty() {
        return Err(Error::EmptyQuery);
    }
    Ok(tokens.iter().map(|t| lexicon.lookup(t)).collect())
}

/// Split token indices into (relation, modified). Nouns and verbs form the
/// relation phrase; everything else is modified. If no token is a noun or
/// verb, every index becomes relation so the pooled relation feature is never
/// an average over nothing.
pub fn partition(tags: &[PosTag]) -> (Vec<usize>, Vec<usize>) {
    let mut relation = Vec::new();
    let mut modified = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            PosTag::Noun | PosTag::Verb => relation.push(i),
            _ => modified.push(i),
        }
    }
    if relation.is_empty() {
        relation = (0..tags.len()).collect();
        modified.clear();
    }
    (relation, modified)
}

/// A tokenized, tagged, partitioned query.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub tokens: Vec<String>,
    pub tags: Vec<PosTag>,
    pub relation_indices: Vec<usize>,
    pub modified_indices: Vec<usize>,
}

impl Query {
    pub fn from_tokens(tokens: Vec<String>, lexicon: &TagLexicon) -> Result<Query, Error> {
        let tags = tag_words(&tokens, lexicon)?;
        Ok(Query::from_tagged(tokens, tags))
    }

    pub fn from_tagged(tokens: Vec<String>, tags: Vec<PosTag>) -> Query {
        assert_eq!(tokens.len(), tags.len());
        let (relation_indices, modified_indices) = partition(&tags);
        Query {
            tokens,
            tags,
            relation_indices,
            modified_indices,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn relation_tokens(&self) -> Vec<&str> {
        self.relation_indices
            .iter()
            .map(|&i| self.tokens[i].as_str())
            .collect()
    }
}

/// Parse an externally produced tag file: one line per query, tab-separated
/// alternating `token<TAB>TAG` pairs.
pub fn load_tag_file(path: &Path) -> Result<Vec<Vec<(String, PosTag)>>, Error> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() % 2 != 0 {
            return Err(Error::parse(
                path.display().to_string(),
                format!(
                    "line {}: expected alternating token<TAB>TAG pairs",
                    lineno + 1
                ),
            ));
        }
        let mut pairs = Vec::with_capacity(fields.len() / 2);
        for chunk in fields.chunks(2) {
            pairs.push((chunk[0].to_lowercase(), PosTag::parse(chunk[1])?));
        }
        out.push(pairs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn tag_words_examples() {
        let lex = TagLexicon::builtin_english();
        assert_eq!(
            tag_words(&toks(&["person", "washing"]), &lex).unwrap(),
            vec![PosTag::Noun, PosTag::Verb]
        );
        assert_eq!(
            tag_words(&toks(&["a", "is", "their"]), &lex).unwrap(),
            vec![PosTag::Det, PosTag::Aux, PosTag::Pron]
        );
        // unknown words take the default tag
        assert_eq!(
            tag_words(&toks(&["zxqv"]), &lex).unwrap(),
            vec![PosTag::Noun]
        );
    }

    #[test]
    fn tag_words_rejects_empty() {
        let lex = TagLexicon::builtin_english();
        assert!(matches!(tag_words(&[], &lex), Err(Error::EmptyQuery)));
    }

    #[test]
    fn partition_worked_sentence() {
        let lex = TagLexicon::builtin_english();
        let q = Query::from_tokens(
            toks(&[
                "a", "person", "is", "washing", "their", "hands", "in", "the", "sink",
            ]),
            &lex,
        )
        .unwrap();
        assert_eq!(
            q.relation_tokens(),
            vec!["person", "washing", "hands", "sink"]
        );
        assert_eq!(q.modified_indices, vec![0, 2, 4, 6, 7]);
    }

    #[test]
    fn partition_all_content_words() {
        let lex = TagLexicon::builtin_english();
        let q = Query::from_tokens(toks(&["person", "washing"]), &lex).unwrap();
        assert_eq!(q.relation_indices, vec![0, 1]);
        assert!(q.modified_indices.is_empty());
    }

    #[test]
    fn partition_empty_relation_fallback() {
        let lex = TagLexicon::builtin_english();
        let q = Query::from_tokens(toks(&["the", "the", "the"]), &lex).unwrap();
        assert_eq!(q.relation_indices, vec![0, 1, 2]);
        assert!(q.modified_indices.is_empty());
    }

    #[test]
    fn partition_is_disjoint_and_exhaustive() {
        let lex = TagLexicon::builtin_english();
        let sentences: &[&[&str]] = &[
            &["a", "person", "is", "washing", "their", "hands"],
            &["the", "dog", "quickly", "catches", "one", "red", "ball"],
            &["she", "was", "very", "happy"],
        ];
        for s in sentences {
            let q = Query::from_tokens(toks(s), &lex).unwrap();
            let mut all: Vec<usize> = q
                .relation_indices
                .iter()
                .chain(q.modified_indices.iter())
                .cloned()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..s.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn auxiliaries_never_in_relation_set() {
        let lex = TagLexicon::builtin_english();
        for aux in ["is", "are", "was"] {
            let q = Query::from_tokens(toks(&["person", aux, "washing"]), &lex).unwrap();
            assert_eq!(q.tags[1], PosTag::Aux);
            assert!(!q.relation_indices.contains(&1));
        }
    }

    #[test]
    fn lexicon_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.tsv");
        std::fs::write(&path, "# comment\nfoo\tVERB\nbar\tADJ\n").unwrap();
        let lex = TagLexicon::from_file(&path).unwrap();
        assert_eq!(lex.lookup("foo"), PosTag::Verb);
        assert_eq!(lex.lookup("bar"), PosTag::Adj);
        assert_eq!(lex.lookup("unseen"), PosTag::Noun);
    }

    #[test]
    fn tag_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tags.tsv");
        std::fs::write(&path, "person\tNOUN\twashing\tVERB\nthe\tDET\n").unwrap();
        let lines = load_tag_file(&path).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0][1], ("washing".to_string(), PosTag::Verb));
        assert_eq!(lines[1][0], ("the".to_string(), PosTag::Det));
    }

    #[test]
    fn builtin_lexicon_is_substantial() {
        let lex = TagLexicon::builtin_english();
        assert!(lex.len() >= 200, "lexicon has {} entries", lex.len());
    }
}
