//! Synthetic manuscripts with planted authorship signal, used for smoke runs
//! and for calibrating the disambiguation parameters.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::disambig::CalibrationAuthor;
use crate::encoder::TextEncoder;
use crate::error::Result;
use crate::ingest::Manuscript;

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const CODAS: [&str; 6] = ["", "n", "r", "s", "l", "m"];

/// Deterministic pronounceable words of at least four letters, all distinct.
fn word_pool(rng: &mut ChaCha8Rng, n: usize, syllables: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let k = rng.gen_range(syllables.clone());
        let mut w = String::new();
        for _ in 0..k {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        w.push_str(CODAS.choose(rng).unwrap());
        if w.len() >= 4 && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmokeConfig {
    pub seed: u64,
    pub authors: usize,
    pub papers_per_author: usize,
    /// Names shared by two unrelated people, to be caught by disambiguation.
    pub ambiguous_names: usize,
    /// Chance that a paper also lists a second main author.
    pub coauthor_rate: f64,
    /// Share of body words drawn from the author's topic vocabulary.
    pub topic_rate: f64,
    /// Size of each author's topic vocabulary.
    pub topic_size: usize,
    /// Topic words each author shares with another author.
    pub topic_overlap: usize,
    /// Share of abstract words drawn from the topic vocabulary.
    pub abstract_topic_rate: f64,
    /// Chance that a reference is led by the paper's own author.
    pub self_citation_rate: f64,
    /// Chance that a cited author comes from the author's citation community.
    pub community_rate: f64,
    pub abstract_words: (usize, usize),
    pub body_words: (usize, usize),
    pub references: (usize, usize),
    /// Chance of an embedded block of equations in the body.
    pub equation_rate: f64,
    /// Manuscripts that cannot be segmented or whose bibliography cannot be
    /// parsed.
    pub malformed: usize,
    /// Manuscripts whose author list gives only initials.
    pub initials_only: usize,
}

impl Default for SmokeConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            authors: 7,
            papers_per_author: 100,
            ambiguous_names: 1,
            coauthor_rate: 0.08,
            topic_rate: 0.06,
            topic_size: 30,
            topic_overlap: 12,
            abstract_topic_rate: 0.25,
            self_citation_rate: 0.15,
            community_rate: 0.3,
            abstract_words: (150, 250),
            body_words: (700, 1900),
            references: (8, 20),
            equation_rate: 0.25,
            malformed: 12,
            initials_only: 6,
        }
    }
}

/// One simulated researcher.
#[derive(Debug, Clone)]
struct Person {
    given: String,
    surname: String,
    topic: Vec<String>,
    community: Vec<String>,
}

impl Person {
    fn name(&self) -> String {
        format!("{} {}", self.given, self.surname)
    }
}

struct World {
    rng: ChaCha8Rng,
    filler: Vec<String>,
    /// Zipf-like frequencies for the filler vocabulary.
    filler_rank: WeightedIndex<f64>,
    surnames: Vec<String>,
    givens: Vec<String>,
    venues: Vec<String>,
}

impl World {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = word_pool(&mut rng, 2600, 2..=3);
        let filler: Vec<String> = pool.drain(..1200).collect();
        let filler_rank = WeightedIndex::new((0..filler.len()).map(|r| 1.0 / (r as f64 + 2.7))).unwrap();
        let surnames = pool.drain(..700).map(|w| capitalize(&w)).collect();
        let givens = pool.drain(..300).map(|w| capitalize(&w)).collect();
        let venues = pool.drain(..40).map(|w| capitalize(&w)).collect();
        Self {
            rng,
            filler,
            filler_rank,
            surnames,
            givens,
            venues,
        }
    }

    /// Three-syllable words that never occur as filler.
    fn topic_words(&mut self, n: usize) -> Vec<String> {
        let filler: std::collections::BTreeSet<String> = self.filler.iter().cloned().collect();
        let mut out = word_pool(&mut self.rng, n + 400, 3..=3);
        out.retain(|w| !filler.contains(w));
        assert!(out.len() >= n, "topic vocabulary exhausted");
        out.truncate(n);
        out
    }

    /// Neighbours on the surname ring share part of their citation community;
    /// each person also borrows `overlap` topic words from the person three
    /// places on, so the two modalities confuse different pairs.
    fn people(&mut self, n: usize, topic_pool: &mut Vec<String>, size: usize, overlap: usize) -> Vec<Person> {
        let mut surname_ids: Vec<usize> = (0..self.surnames.len()).collect();
        surname_ids.shuffle(&mut self.rng);
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let topic: Vec<String> = topic_pool.drain(..size).collect();
            let community = (0..25)
                .map(|k| self.surnames[surname_ids[n + (i * 17 + k) % (self.surnames.len() - n)]].clone())
                .collect();
            out.push(Person {
                given: self.givens.choose(&mut self.rng).unwrap().clone(),
                surname: self.surnames[surname_ids[i]].clone(),
                topic,
                community,
            });
        }
        let own: Vec<Vec<String>> = out.iter().map(|p| p.topic.clone()).collect();
        for (i, p) in out.iter_mut().enumerate() {
            let lender = &own[(i + 3) % n];
            p.topic.truncate(size - overlap.min(size));
            p.topic.extend(lender.iter().take(overlap).cloned());
        }
        out
    }

    fn word(&mut self, topics: &[&Person], rate: f64) -> String {
        if !topics.is_empty() && self.rng.gen_bool(rate) {
            let p = topics.choose(&mut self.rng).unwrap();
            p.topic.choose(&mut self.rng).unwrap().clone()
        } else {
            self.filler[self.filler_rank.sample(&mut self.rng)].clone()
        }
    }

    /// Sentences wrapped to lines of roughly twelve words.
    fn prose(&mut self, words: usize, topics: &[&Person], rate: f64) -> String {
        let mut out = String::new();
        let mut line_len = 0;
        let mut written = 0;
        while written < words {
            let n = self.rng.gen_range(8..=18).min(words - written).max(1);
            for k in 0..n {
                let mut w = self.word(topics, rate);
                if k == 0 {
                    w = capitalize(&w);
                }
                if k + 1 == n {
                    w.push('.');
                } else if self.rng.gen_bool(0.08) {
                    w.push(',');
                }
                if line_len > 0 {
                    out.push(' ');
                }
                out.push_str(&w);
                line_len += 1;
                if line_len >= 12 {
                    out.push('\n');
                    line_len = 0;
                }
            }
            written += n;
        }
        out.trim_end().to_string()
    }

    fn equations(&mut self, tokens: usize) -> String {
        const SYM: [&str; 12] = ["x", "=", "y", "+", "(", ")", "2", "-", "a", "b", "k", "/"];
        let mut out = String::new();
        for i in 0..tokens {
            out.push_str(SYM.choose(&mut self.rng).unwrap());
            out.push(if i % 16 == 15 { '\n' } else { ' ' });
        }
        out.trim_end().to_string()
    }

    fn cited_name(&mut self, person: &Person, community_rate: f64) -> String {
        if self.rng.gen_bool(community_rate) {
            person.community.choose(&mut self.rng).unwrap().clone()
        } else {
            self.surnames.choose(&mut self.rng).unwrap().clone()
        }
    }

    fn initial(&mut self) -> char {
        self.givens.choose(&mut self.rng).unwrap().chars().next().unwrap()
    }

    fn title(&mut self, topics: &[&Person]) -> String {
        let n = self.rng.gen_range(4..=8);
        let words: Vec<String> = (0..n).map(|_| self.word(topics, 0.3)).collect();
        capitalize(&words.join(" "))
    }

    fn bibliography(&mut self, authors: &[&Person], cfg: &SmokeConfig, ieee: bool) -> String {
        let n = self.rng.gen_range(cfg.references.0..=cfg.references.1);
        let mut lines = Vec::with_capacity(n);
        for k in 0..n {
            let lead = authors[k % authors.len()];
            let n_names = self.rng.gen_range(1..=3);
            let mut names: Vec<String> = (0..n_names)
                .map(|_| {
                    let p = *authors.choose(&mut self.rng).unwrap();
                    self.cited_name(p, cfg.community_rate)
                })
                .collect();
            if self.rng.gen_bool(cfg.self_citation_rate) {
                names[0] = lead.surname.clone();
            }
            let year = self.rng.gen_range(1985..=2020);
            let title = self.title(authors);
            let venue = self.venues.choose(&mut self.rng).unwrap().clone();
            let line = if ieee {
                let list: Vec<String> = names.iter().map(|s| format!("{}. {s}", self.initial())).collect();
                let list = match list.len() {
                    1 => list[0].clone(),
                    2 => format!("{} and {}", list[0], list[1]),
                    _ => format!("{}, and {}", list[..list.len() - 1].join(", "), list[list.len() - 1]),
                };
                format!("[{}] {list}, \"{title},\" in Proc. {venue}, {year}.", k + 1)
            } else {
                let list: Vec<String> = names.iter().map(|s| format!("{s}, {}.", self.initial())).collect();
                let list = match list.len() {
                    1 => list[0].clone(),
                    _ => format!("{}, & {}", list[..list.len() - 1].join(", "), list[list.len() - 1]),
                };
                let vol = self.rng.gen_range(1..60);
                let page = self.rng.gen_range(1..900);
                format!("{list} ({year}). {title}. {venue}, {vol}, {page}-{}.", page + 12)
            };
            lines.push(line);
        }
        lines.join("\n")
    }

    fn manuscript(&mut self, id: String, authors: &[&Person], extra: &[String], cfg: &SmokeConfig) -> Manuscript {
        let title = self.title(authors);
        let abstract_len = self.rng.gen_range(cfg.abstract_words.0..=cfg.abstract_words.1);
        let abstract_text = self.prose(abstract_len, authors, cfg.abstract_topic_rate).replace('\n', " ");
        let mut names: Vec<String> = authors.iter().map(|p| p.name()).collect();
        names.extend(extra.iter().cloned());

        let body_len = self.rng.gen_range(cfg.body_words.0..=cfg.body_words.1);
        let mut body = self.prose(body_len, authors, cfg.topic_rate);
        if self.rng.gen_bool(cfg.equation_rate) {
            let eq = self.equations(600);
            let tail = self.prose(200, authors, cfg.topic_rate);
            body = format!("{body}\n{eq}\n{tail}");
        }
        let ieee = self.rng.gen_bool(0.7);
        let refs = self.bibliography(authors, cfg, ieee);
        let email = format!("{}@institute.example.org", authors[0].surname.to_lowercase());
        let mut raw = format!(
            "{title}\n{}\nDepartment of {}, University of {}\n{email}\nAbstract\n{}\n1 Introduction\n{body}\nReferences\n{refs}\n",
            names.join(", "),
            self.venues.choose(&mut self.rng).unwrap(),
            self.venues.choose(&mut self.rng).unwrap(),
            abstract_text,
        );
        if self.rng.gen_bool(0.3) {
            let appendix = self.prose(150, authors, cfg.topic_rate);
            raw.push_str(&format!("Appendix\n{appendix}\n"));
        }
        raw.push_str("17\n");
        Manuscript {
            id,
            title,
            abstract_text,
            authors: names,
            raw_text: raw,
        }
    }

    fn minor_coauthors(&mut self) -> Vec<String> {
        let n = self.rng.gen_range(0..=2);
        (0..n)
            .map(|_| {
                format!(
                    "{} {}",
                    self.givens.choose(&mut self.rng).unwrap(),
                    self.surnames.choose(&mut self.rng).unwrap()
                )
            })
            .collect()
    }
}

fn paper_id(k: usize) -> String {
    format!("{:02}{:02}.{:05}", 10 + k % 12, 1 + (k / 12) % 12, k)
}

/// A corpus of `authors` prolific researchers plus noise: minor co-authors,
/// ambiguous names, malformed and initials-only manuscripts.
pub fn smoke_corpus(cfg: &SmokeConfig) -> Vec<Manuscript> {
    let mut world = World::new(cfg.seed);
    let mut topic_pool = world.topic_words(cfg.topic_size * (cfg.authors + 2 * cfg.ambiguous_names));
    let main = world.people(cfg.authors + 2 * cfg.ambiguous_names, &mut topic_pool, cfg.topic_size, cfg.topic_overlap);
    let (main, twins) = main.split_at(cfg.authors);
    let mut twins = twins.to_vec();
    for pair in twins.chunks_mut(2) {
        let (given, surname) = (pair[0].given.clone(), pair[0].surname.clone());
        pair[1].given = given;
        pair[1].surname = surname;
    }

    let mut out = Vec::new();
    let mut k = 0;
    for (i, person) in main.iter().enumerate() {
        for _ in 0..cfg.papers_per_author {
            let mut authors = vec![person];
            if world.rng.gen_bool(cfg.coauthor_rate) {
                let other = (i + world.rng.gen_range(1..cfg.authors.max(2))) % cfg.authors;
                if other != i {
                    authors.push(&main[other]);
                }
            }
            let extra = world.minor_coauthors();
            out.push(world.manuscript(paper_id(k), &authors, &extra, cfg));
            k += 1;
        }
    }
    for twin in &twins {
        for _ in 0..cfg.papers_per_author / 2 {
            let extra = world.minor_coauthors();
            out.push(world.manuscript(paper_id(k), &[twin], &extra, cfg));
            k += 1;
        }
    }
    for m in 0..cfg.malformed {
        let person = &main[m % main.len()];
        let mut ms = world.manuscript(paper_id(k), &[person], &[], cfg);
        ms.raw_text = match m % 3 {
            0 => ms.raw_text.replace("Abstract\n", "Summary\n").replace("1 Introduction\n", "1 Overview\n"),
            1 => ms.raw_text.replace("References\n", "Bibliography\n").replace("[1] ", "(1) "),
            _ => {
                let start = ms.raw_text.find("References\n").unwrap() + "References\n".len();
                let mut text = ms.raw_text[..start].to_string();
                text.push_str(&world.prose(400, &[person], 0.0).replace(['\n', '.', ','], " "));
                text.push('\n');
                text
            }
        };
        out.push(ms);
        k += 1;
    }
    for m in 0..cfg.initials_only {
        let person = &main[m % main.len()];
        let mut ms = world.manuscript(paper_id(k), &[person], &[], cfg);
        ms.authors[0] = format!("{}. {}", &person.given[..1], person.surname);
        out.push(ms);
        k += 1;
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Forty labelled names: the first `unique` belong to one person each, the
/// rest to two unrelated people sharing the name. Abstracts are embedded with
/// `encoder`.
pub fn calibration_set(cfg: &SmokeConfig, unique: usize, ambiguous: usize, encoder: &dyn TextEncoder) -> Result<Vec<CalibrationAuthor>> {
    let mut world = World::new(cfg.seed ^ 0xca11b);
    let n_people = unique + 2 * ambiguous;
    let mut topic_pool = world.topic_words(cfg.topic_size * n_people);
    let people = world.people(n_people, &mut topic_pool, cfg.topic_size, cfg.topic_overlap);
    let mut out = Vec::with_capacity(unique + ambiguous);
    for i in 0..unique + ambiguous {
        let persons: Vec<&Person> = if i < unique {
            vec![&people[i]]
        } else {
            let j = unique + 2 * (i - unique);
            vec![&people[j], &people[j + 1]]
        };
        let n = world.rng.gen_range(12..=120);
        let mut abstracts = Vec::with_capacity(n);
        for a in 0..n {
            let p = persons[a % persons.len()];
            let len = world.rng.gen_range(cfg.abstract_words.0..=cfg.abstract_words.1);
            let text = world.prose(len, &[p], cfg.abstract_topic_rate);
            abstracts.push(encoder.encode(&text)?);
        }
        out.push(CalibrationAuthor {
            name: persons[0].name(),
            abstracts,
            unique_person: i < unique,
        });
    }
    Ok(out)
}
