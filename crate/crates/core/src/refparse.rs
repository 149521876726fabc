//! Rule-based bibliography parsing.
//!
//! A reference block is first split into individual entries by trying a fixed
//! list of separators until one yields a plausible split. Each entry is then
//! reduced to its leading author zone, the name delimiter is inferred from the
//! zone itself, and only the last word of every name is kept.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Separator {
    BracketIndex,
    DotEndOfLine,
    YearPattern,
    SemicolonBlock,
}

impl Separator {
    /// Priority order in which separators are tried.
    pub const ORDER: [Separator; 4] = [
        Separator::BracketIndex,
        Separator::DotEndOfLine,
        Separator::YearPattern,
        Separator::SemicolonBlock,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub separator_used: Separator,
    pub n_refs: usize,
    pub plausible: bool,
}

/// Thresholds deciding whether a split is trusted.
#[derive(Debug, Clone, PartialEq)]
pub struct Plausibility {
    pub min_refs: usize,
    pub min_median_len: usize,
    pub max_median_len: usize,
    /// Minimum share of entries that must yield at least one surname.
    pub min_parsed_fraction: f64,
}

impl Default for Plausibility {
    fn default() -> Self {
        Self {
            min_refs: 3,
            min_median_len: 40,
            max_median_len: 2000,
            min_parsed_fraction: 0.5,
        }
    }
}

impl Plausibility {
    pub fn accepts(&self, entries: &[String]) -> bool {
        if entries.len() < self.min_refs {
            return false;
        }
        let mut lens: Vec<usize> = entries.iter().map(|e| e.chars().count()).collect();
        lens.sort_unstable();
        let median = lens[lens.len() / 2];
        (self.min_median_len..=self.max_median_len).contains(&median)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedReference {
    pub raw: String,
    /// Lower-cased surnames in citation order, consecutive duplicates removed.
    pub surnames: Vec<String>,
}

impl CitedReference {
    pub fn from_surnames(surnames: Vec<String>) -> Self {
        Self {
            raw: String::new(),
            surnames,
        }
    }
}

macro_rules! static_regex {
    ($name:ident, $re:expr) => {
        fn $name() -> &'static Regex {
            static RE: OnceLock<Regex> = OnceLock::new();
            RE.get_or_init(|| Regex::new($re).expect("static regex"))
        }
    };
}

static_regex!(bracket_line, r"^\s*\[\d+\]");
static_regex!(year, r"\b(?:19|20)\d\d[a-z]?\b");
static_regex!(leading_index, r"^\s*(?:\[\d+\]|\d+\.|\(\d+\)|[a-z]\))\s*");
static_regex!(trailing_year, r"^\(?(?:19|20)\d\d[a-z]?\)?\.?$");
static_regex!(et_al, r"(?i)\bet\.?\s*al\b\.?|\band\s+others\b");
static_regex!(conjunction, r"(?i)(?:^|\s)(?:and|&)(?:\s|$)|&");

/// Tokens that end with a dot at the end of a line without closing a reference.
const LINE_END_ABBREVIATIONS: [&str; 22] = [
    "al.", "Proc.", "vol.", "Vol.", "pp.", "no.", "No.", "Int.", "Conf.", "ed.", "Ed.", "eds.",
    "Eds.", "Jr.", "Sr.", "Rev.", "Lett.", "Phys.", "Chem.", "Soc.", "Am.", "Trans.",
];

fn join_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> String {
    lines
        .into_iter()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn split_bracket(block: &str) -> Vec<String> {
    let mut entries = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in block.lines() {
        if bracket_line().is_match(line) {
            if let Some(lines) = current.take() {
                entries.push(join_lines(lines));
            }
            current = Some(vec![line]);
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    if let Some(lines) = current {
        entries.push(join_lines(lines));
    }
    entries
}

fn ends_reference_line(line: &str) -> bool {
    let line = line.trim_end();
    if !line.ends_with('.') {
        return false;
    }
    let last = line.split_whitespace().last().unwrap_or("");
    let stem = last.trim_end_matches('.');
    let is_initial = stem.chars().count() == 1 && stem.chars().all(char::is_alphabetic);
    !is_initial && !LINE_END_ABBREVIATIONS.contains(&last)
}

fn indent(line: &str) -> usize {
    line.chars().take_while(|c| c.is_whitespace()).count()
}

/// Hanging indentation is trusted when some line after the first sits at the
/// minimum indent and some other line sits deeper.
fn hanging_base(lines: &[&str]) -> Option<usize> {
    let base = lines.iter().map(|l| indent(l)).min()?;
    let deeper = lines.iter().any(|l| indent(l) > base);
    let restarts = lines.iter().skip(1).any(|l| indent(l) == base);
    (deeper && restarts).then_some(base)
}

/// Fragments opening with a quote, a lowercase word, a bracket or a bare year
/// cannot start a reference.
fn continues_reference(fragment: &str) -> bool {
    let Some(first) = fragment.chars().next() else {
        return false;
    };
    let first_word = fragment.split_whitespace().next().unwrap_or("");
    if first.is_lowercase() && is_particle(first_word) {
        return false;
    }
    if first_word == "In" {
        return true;
    }
    if first.is_lowercase() || matches!(first, '"' | '\u{201C}' | '\u{201D}' | '(' | '`' | ',' | ':' | ';') {
        return true;
    }
    let digits = fragment.chars().take_while(char::is_ascii_digit).count();
    digits == 4 && year().find(fragment).is_some_and(|m| m.start() == 0)
}

fn split_dot_end(block: &str) -> Vec<String> {
    let lines: Vec<&str> = block.lines().filter(|l| !l.trim().is_empty()).collect();
    let base = hanging_base(&lines);
    let mut fragments: Vec<String> = Vec::new();
    let mut current = Vec::new();
    for (i, &line) in lines.iter().enumerate() {
        current.push(line);
        let next_continues = match (base, lines.get(i + 1)) {
            (Some(b), Some(next)) => indent(next) > b,
            _ => false,
        };
        if ends_reference_line(line) && !next_continues {
            fragments.push(join_lines(current.drain(..)));
        }
    }
    if !current.is_empty() {
        fragments.push(join_lines(current));
    }
    if base.is_some() {
        return fragments;
    }
    let mut glued: Vec<String> = Vec::new();
    let mut open = false;
    for fragment in fragments {
        let continuation = open
            || continues_reference(&fragment)
            || extract_surnames(&fragment).surnames.is_empty();
        match glued.last_mut() {
            Some(prev) if continuation => {
                prev.push(' ');
                prev.push_str(&fragment);
                open = false;
            }
            _ => {
                open = names_then_year(&fragment);
                glued.push(fragment);
            }
        }
    }
    merge_yearless(glued)
}

/// A fragment holding nothing but an author list and its year, as when a
/// line break follows "Surname, A. (2013)." The title comes next.
fn names_then_year(fragment: &str) -> bool {
    let zone = author_zone(fragment);
    let rest = fragment[zone.len()..].trim_start_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ':'));
    let words_are_names = zone.split_whitespace().all(|t| {
        let t = t.trim_matches(|c: char| !c.is_alphanumeric());
        !t.chars().next().is_some_and(char::is_lowercase) || is_particle(t) || matches!(t, "and" | "et" | "al")
    });
    words_are_names && trailing_year().is_match(rest) && !extract_surnames(fragment).surnames.is_empty()
}

/// Wrapped lines can end with a sentence dot inside a reference. Entries of
/// one bibliography carry their year consistently either early or late, so a
/// fragment without a year is glued to the neighbour on the side where its
/// year should be.
fn merge_yearless(fragments: Vec<String>) -> Vec<String> {
    let positions: Vec<Option<f64>> = fragments
        .iter()
        .map(|f| {
            year()
                .find(f)
                .map(|m| m.start() as f64 / f.len().max(1) as f64)
        })
        .collect();
    let dated: Vec<f64> = positions.iter().flatten().copied().collect();
    // Most fragments must carry a year for the heuristic to be trusted.
    if dated.len() * 10 < fragments.len() * 8 || dated.len() == fragments.len() {
        return fragments;
    }
    let early = dated.iter().filter(|&&p| p < 0.5).count() * 2 > dated.len();

    let mut merged: Vec<String> = Vec::new();
    let mut pending: Option<String> = None;
    for (fragment, pos) in fragments.into_iter().zip(positions) {
        let fragment = match pending.take() {
            Some(p) => format!("{p} {fragment}"),
            None => fragment,
        };
        match (pos, early) {
            (Some(_), _) => merged.push(fragment),
            (None, true) => match merged.last_mut() {
                Some(prev) => {
                    prev.push(' ');
                    prev.push_str(&fragment);
                }
                None => merged.push(fragment),
            },
            (None, false) => pending = Some(fragment),
        }
    }
    if let Some(p) = pending {
        match merged.last_mut() {
            Some(prev) => {
                prev.push(' ');
                prev.push_str(&p);
            }
            None => merged.push(p),
        }
    }
    merged
}

fn split_year_lines(block: &str) -> Vec<String> {
    let mut entries = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut has_year = false;
    for line in block.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let starts_upper = trimmed.chars().next().is_some_and(char::is_uppercase);
        if starts_upper && has_year && !current.is_empty() {
            entries.push(join_lines(current.drain(..)));
            has_year = false;
        }
        has_year |= year().is_match(trimmed);
        current.push(line);
    }
    if !current.is_empty() {
        entries.push(join_lines(current));
    }
    entries
}

fn split_semicolons(block: &str) -> Vec<String> {
    join_lines(block.lines())
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Splits a reference block with the first separator whose output is
/// plausible.
pub fn split_references(block: &str) -> Result<(Vec<String>, SplitReport)> {
    split_references_with(block, &Plausibility::default())
}

pub fn split_references_with(
    block: &str,
    plausibility: &Plausibility,
) -> Result<(Vec<String>, SplitReport)> {
    if block.trim().is_empty() {
        return Err(Error::fail_fast(Stage::References, "empty reference block"));
    }
    for separator in Separator::ORDER {
        let entries = match separator {
            Separator::BracketIndex => split_bracket(block),
            Separator::DotEndOfLine => split_dot_end(block),
            Separator::YearPattern => split_year_lines(block),
            Separator::SemicolonBlock => split_semicolons(block),
        };
        if plausibility.accepts(&entries) {
            let report = SplitReport {
                separator_used: separator,
                n_refs: entries.len(),
                plausible: true,
            };
            return Ok((entries, report));
        }
    }
    Err(Error::fail_fast(
        Stage::References,
        "no separator produced a plausible split",
    ))
}

/// Given-name tokens made of single letters: `J.`, `J.-P.`, `A`.
fn is_initials(token: &str) -> bool {
    let mut saw_letter = false;
    for part in token.split(['.', '-', '\u{2010}']) {
        if part.is_empty() {
            continue;
        }
        let mut chars = part.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_alphabetic() => saw_letter = true,
            _ => return false,
        }
    }
    saw_letter
}

fn is_suffix(token: &str) -> bool {
    matches!(
        token.trim_end_matches([',', '.']),
        "Jr" | "Sr" | "II" | "III" | "IV"
    )
}

/// Cuts the reference at the first quote, opening bracket, year, or sentence
/// dot following a full word.
fn author_zone(entry: &str) -> &str {
    let mut cut = entry.len();
    if let Some(i) = entry.find(['"', '\u{201C}', '\u{201D}', '(', '[', '\u{00AB}']) {
        cut = cut.min(i);
    }
    if let Some(i) = entry.find("``") {
        cut = cut.min(i);
    }
    if let Some(m) = year().find(entry) {
        cut = cut.min(m.start());
    }
    // ". " after a word of three or more letters ends the name list
    let bytes = entry.as_bytes();
    for (i, _) in entry.match_indices(". ") {
        if i >= cut {
            break;
        }
        let word_start = entry[..i]
            .rfind(|c: char| c.is_whitespace() || c == ',' || c == ';')
            .map(|p| p + 1)
            .unwrap_or(0);
        let word = &entry[word_start..i];
        // "J. Org. Chem." style journal abbreviations keep going
        let next = entry[i + 2..].split_whitespace().next().unwrap_or("");
        let abbreviation_chain = next.ends_with('.') && next.chars().filter(|c| c.is_alphabetic()).count() > 1;
        if word.chars().count() >= 3
            && word.chars().all(char::is_alphabetic)
            && !is_suffix(word)
            && !abbreviation_chain
            && bytes.get(i + 2).is_some()
        {
            cut = cut.min(i);
            break;
        }
    }
    &entry[..cut]
}

/// Most frequent non-alphanumeric, non-whitespace character of the zone.
/// Dots (initials, abbreviations), intra-word hyphens and apostrophes and the
/// ampersand conjunction are not candidates.
fn infer_delimiter(zone: &str) -> Option<char> {
    let chars: Vec<char> = zone.chars().collect();
    let mut counts: Vec<(char, usize)> = Vec::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() || c.is_whitespace() || matches!(c, '.' | '&') {
            continue;
        }
        if matches!(c, '-' | '\'' | '\u{2019}' | '\u{2010}') {
            let before = i > 0 && chars[i - 1].is_alphabetic();
            let after = chars.get(i + 1).is_some_and(|n| n.is_alphabetic());
            if before && after {
                continue;
            }
        }
        match counts.iter_mut().find(|(k, _)| *k == c) {
            Some((_, n)) => *n += 1,
            None => counts.push((c, 1)),
        }
    }
    let preference = |c: char| match c {
        ',' => 0,
        ';' => 1,
        _ => 2,
    };
    counts
        .into_iter()
        .max_by(|(a, na), (b, nb)| {
            na.cmp(nb)
                .then(preference(*b).cmp(&preference(*a)))
                .then(b.cmp(a))
        })
        .map(|(c, _)| c)
}

#[derive(Debug)]
struct Piece<'a> {
    tokens: Vec<&'a str>,
    after_conjunction: bool,
}

fn normalize_surname(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

const PARTICLES: [&str; 20] = [
    "van", "von", "der", "den", "de", "del", "della", "di", "da", "du", "dos", "das", "la", "le",
    "ten", "ter", "bin", "al", "el", "zu",
];

fn is_particle(token: &str) -> bool {
    PARTICLES.contains(&token)
}

fn is_capitalized_word(token: &str) -> bool {
    token.chars().next().is_some_and(char::is_uppercase)
}

fn pieces_of(zone: &str) -> Vec<Piece<'_>> {
    let parts: Vec<&str> = match infer_delimiter(zone) {
        Some(d) => zone.split(d).collect(),
        None => vec![zone],
    };
    let mut pieces = Vec::new();
    for part in parts {
        let mut last = 0;
        let mut after_conjunction = false;
        for m in conjunction().find_iter(part) {
            let head = &part[last..m.start()];
            push_piece(&mut pieces, head, after_conjunction);
            after_conjunction = true;
            last = m.end();
        }
        push_piece(&mut pieces, &part[last..], after_conjunction);
    }
    pieces
}

fn push_piece<'a>(pieces: &mut Vec<Piece<'a>>, text: &'a str, after_conjunction: bool) {
    let tokens: Vec<&str> = text
        .split_whitespace()
        .filter(|t| !is_suffix(t))
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect();
    if !tokens.is_empty() {
        pieces.push(Piece {
            tokens,
            after_conjunction,
        });
    }
}

/// Reduces one piece to its surname, if it looks like a name at all.
fn surname_of(piece: &Piece<'_>) -> Option<String> {
    let names: Vec<&str> = piece
        .tokens
        .iter()
        .copied()
        .filter(|t| !is_initials(t))
        .collect();
    // A full word ending with a dot marks a journal abbreviation; a lowercase
    // word other than a particle marks a title.
    if names
        .iter()
        .any(|t| t.ends_with('.') || (t.chars().next().is_some_and(char::is_lowercase) && !is_particle(t)))
    {
        return None;
    }
    let last = *names.last()?;
    if !is_capitalized_word(last) || !last.chars().any(char::is_alphabetic) {
        return None;
    }
    let surname = normalize_surname(last);
    (!surname.is_empty()).then_some(surname)
}

/// Extracts the ordered surnames of the cited authors of one reference.
pub fn extract_surnames(reference: &str) -> CitedReference {
    let raw = reference.trim().to_string();
    let mut entry = raw.as_str();
    while let Some(m) = leading_index().find(entry) {
        if m.end() == 0 {
            break;
        }
        entry = &entry[m.end()..];
    }
    let zone = et_al().replace_all(author_zone(entry), " ");
    let zone = zone.trim().trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':') || c.is_whitespace());

    let pieces = pieces_of(zone);
    let multi_token = pieces.iter().filter(|p| p.tokens.len() > 1).count();
    let mut surnames: Vec<String> = Vec::new();
    let mut i = 0;
    while i < pieces.len() {
        let piece = &pieces[i];
        let single = piece.tokens.len() == 1 && !is_initials(piece.tokens[0]);
        // "García Márquez, Maria" opens an inverted list with a compound surname.
        let compound_inverted = i == 0
            && piece.tokens.len() > 1
            && !piece.tokens.iter().any(|t| is_initials(t))
            && pieces.get(1).is_some_and(|next| {
                !next.after_conjunction
                    && next.tokens.iter().filter(|t| !is_initials(t)).count() == 1
                    && next.tokens.iter().all(|t| is_initials(t) || (is_capitalized_word(t) && !t.ends_with('.')))
            });
        if compound_inverted {
            if let Some(s) = surname_of(piece) {
                surnames.push(s);
            }
            i += 2;
            continue;
        }
        if single {
            // Inverted "Surname, Given" pairs.
            if let Some(next) = pieces.get(i + 1) {
                let given_like = !next.after_conjunction
                    && next.tokens.len() <= 2
                    && next
                        .tokens
                        .iter()
                        .all(|t| is_initials(t) || (is_capitalized_word(t) && !t.ends_with('.')));
                if given_like {
                    if let Some(s) = surname_of(piece) {
                        surnames.push(s);
                    }
                    i += 2;
                    continue;
                }
            }
            // A trailing bare word after "Given Surname" names is a journal.
            let trailing = i + 1 == pieces.len() && i > 0 && !piece.after_conjunction;
            if trailing && multi_token * 2 >= pieces.len() - 1 && multi_token > 0 {
                i += 1;
                continue;
            }
        }
        if let Some(s) = surname_of(piece) {
            surnames.push(s);
        }
        i += 1;
    }
    surnames.dedup();
    CitedReference { raw, surnames }
}

/// Splits a block and extracts surnames from every entry.
pub fn parse_block(block: &str) -> Result<Vec<CitedReference>> {
    parse_block_with(block, &Plausibility::default())
}

pub fn parse_block_with(block: &str, plausibility: &Plausibility) -> Result<Vec<CitedReference>> {
    let (entries, _) = split_references_with(block, plausibility)?;
    let refs: Vec<CitedReference> = entries.iter().map(|e| extract_surnames(e)).collect();
    let parsed = refs.iter().filter(|r| !r.surnames.is_empty()).count();
    if (parsed as f64) < plausibility.min_parsed_fraction * refs.len() as f64 {
        return Err(Error::fail_fast(
            Stage::References,
            format!("only {parsed} of {} references yielded author names", refs.len()),
        ));
    }
    Ok(refs)
}
