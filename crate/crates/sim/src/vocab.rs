use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::types::{ActionCommand, Color, EnvKind, EnvSpec, ObjectKind, ObjectRef, Relation, Verb};

/// Reserved word for an absent slot.
pub const NONE: &str = "none";

/// Which command field a clause reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseRole {
    Verb,
    Relation,
    SubjectKind,
    SubjectColor,
    ReferenceKind,
    ReferenceColor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub role: ClauseRole,
    pub words: Vec<String>,
    /// Global word id of each local word. Words added after construction take
    /// the next free id, so existing ids never move.
    pub ids: Vec<usize>,
}

impl Clause {
    fn new(name: &str, role: ClauseRole, words: Vec<String>, first_id: usize) -> Self {
        let ids = (first_id..first_id + words.len()).collect();
        Self {
            name: name.to_string(),
            role,
            words,
            ids,
        }
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }
}

/// Per-clause local word indices of one command.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClauseEncoding {
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub env: EnvKind,
    pub clauses: Vec<Clause>,
}

fn with_none<I: IntoIterator<Item = S>, S: ToString>(words: I) -> Vec<String> {
    std::iter::once(NONE.to_string())
        .chain(words.into_iter().map(|w| w.to_string()))
        .collect()
}

impl Vocabulary {
    pub fn for_env(kind: EnvKind) -> Self {
        Self::for_spec(&EnvSpec::default_for(kind))
    }

    pub fn for_spec(spec: &EnvSpec) -> Self {
        let colors: Vec<&str> = spec.colors.iter().map(|c| c.word()).collect();
        let (verbs, relations, subjects, references): (
            Vec<Verb>,
            Vec<Relation>,
            Vec<ObjectKind>,
            Vec<ObjectKind>,
        ) = match spec.kind {
            EnvKind::Blocks => (
                vec![Verb::Noop, Verb::Pick, Verb::PickRotate, Verb::Put],
                vec![
                    Relation::OnTop,
                    Relation::LeftOf,
                    Relation::RightOf,
                    Relation::Front,
                    Relation::Behind,
                ],
                spec.movable.clone(),
                spec.movable.clone(),
            ),
            EnvKind::Kitchen => (
                vec![Verb::Noop, Verb::Take, Verb::Put, Verb::Open, Verb::Close],
                vec![Relation::On, Relation::In],
                spec.all_kinds().collect(),
                spec.openable.clone(),
            ),
        };
        let (rel_name, subj_name, ref_name) = match spec.kind {
            EnvKind::Blocks => ("relation", "subject_shape", "reference_shape"),
            EnvKind::Kitchen => ("preposition", "subject_category", "reference_category"),
        };
        let layout = [
            (
                "verb",
                ClauseRole::Verb,
                with_none(verbs.iter().map(|v| v.word())),
            ),
            (
                subj_name,
                ClauseRole::SubjectKind,
                with_none(subjects.iter().map(|k| k.word())),
            ),
            (
                "subject_color",
                ClauseRole::SubjectColor,
                with_none(colors.iter()),
            ),
            (
                rel_name,
                ClauseRole::Relation,
                with_none(relations.iter().map(|r| r.word())),
            ),
            (
                ref_name,
                ClauseRole::ReferenceKind,
                with_none(references.iter().map(|k| k.word())),
            ),
            (
                "reference_color",
                ClauseRole::ReferenceColor,
                with_none(colors.iter()),
            ),
        ];
        let mut next = 0;
        let clauses = layout
            .into_iter()
            .map(|(name, role, words)| {
                let c = Clause::new(name, role, words, next);
                next += c.words.len();
                c
            })
            .collect();
        Self {
            env: spec.kind,
            clauses,
        }
    }

    pub fn clause_count(&self) -> usize {
        self.clauses.len()
    }

    /// Total word count N across all clauses.
    pub fn total_words(&self) -> usize {
        self.clauses.iter().map(|c| c.words.len()).sum()
    }

    pub fn clause(&self, name: &str) -> Result<&Clause> {
        self.clauses
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| SimError::UnknownClause(name.to_string()))
    }

    /// Words in global id order.
    pub fn words_by_id(&self) -> Vec<(String, String)> {
        let mut out = vec![(String::new(), String::new()); self.total_words()];
        for c in &self.clauses {
            for (w, &id) in c.words.iter().zip(&c.ids) {
                out[id] = (c.name.clone(), w.clone());
            }
        }
        out
    }

    fn lookup(&self, clause: &Clause, word: &str) -> Result<usize> {
        clause.index_of(word).ok_or_else(|| SimError::Vocabulary {
            clause: clause.name.clone(),
            word: word.to_string(),
        })
    }

    pub fn encode(&self, cmd: &ActionCommand) -> Result<ClauseEncoding> {
        let indices = self
            .clauses
            .iter()
            .map(|c| {
                let word = match c.role {
                    ClauseRole::Verb => Some(cmd.verb.word()),
                    ClauseRole::Relation => cmd.relation.map(|r| r.word()),
                    ClauseRole::SubjectKind => cmd.subject.map(|s| s.kind.word()),
                    ClauseRole::SubjectColor => cmd.subject.map(|s| s.color.word()),
                    ClauseRole::ReferenceKind => cmd.reference.map(|s| s.kind.word()),
                    ClauseRole::ReferenceColor => cmd.reference.map(|s| s.color.word()),
                };
                self.lookup(c, word.unwrap_or(NONE))
            })
            .collect::<Result<_>>()?;
        Ok(ClauseEncoding { indices })
    }

    pub fn decode(&self, enc: &ClauseEncoding) -> Result<ActionCommand> {
        if enc.indices.len() != self.clauses.len() {
            return Err(SimError::Encoding(format!(
                "expected {} clauses, got {}",
                self.clauses.len(),
                enc.indices.len()
            )));
        }
        let mut verb = None;
        let mut relation = None;
        let (mut sk, mut sc, mut rk, mut rc) = (None, None, None, None);
        for (c, &i) in self.clauses.iter().zip(&enc.indices) {
            let word = c.words.get(i).ok_or_else(|| {
                SimError::Encoding(format!("index {i} out of range for `{}`", c.name))
            })?;
            if word == NONE {
                continue;
            }
            let bad =
                || SimError::Encoding(format!("word `{word}` has no meaning in `{}`", c.name));
            match c.role {
                ClauseRole::Verb => verb = Some(Verb::from_word(word).ok_or_else(bad)?),
                ClauseRole::Relation => relation = Some(Relation::from_word(word).ok_or_else(bad)?),
                ClauseRole::SubjectKind => sk = Some(ObjectKind::from_word(word).ok_or_else(bad)?),
                ClauseRole::SubjectColor => sc = Some(Color::from_word(word).ok_or_else(bad)?),
                ClauseRole::ReferenceKind => {
                    rk = Some(ObjectKind::from_word(word).ok_or_else(bad)?)
                }
                ClauseRole::ReferenceColor => rc = Some(Color::from_word(word).ok_or_else(bad)?),
            }
        }
        let pair = |k: Option<ObjectKind>, c: Option<Color>, what: &str| match (k, c) {
            (Some(k), Some(c)) => Ok(Some(ObjectRef::new(k, c))),
            (None, None) => Ok(None),
            _ => Err(SimError::Encoding(format!(
                "{what} needs both kind and color"
            ))),
        };
        Ok(ActionCommand {
            verb: verb.ok_or_else(|| SimError::Encoding("verb is none".into()))?,
            subject: pair(sk, sc, "subject")?,
            relation,
            reference: pair(rk, rc, "reference")?,
        })
    }

    /// Global word ids selected by `enc`, one per clause.
    pub fn global_ids(&self, enc: &ClauseEncoding) -> Result<Vec<usize>> {
        self.clauses
            .iter()
            .zip(&enc.indices)
            .map(|(c, &i)| {
                c.ids.get(i).copied().ok_or_else(|| {
                    SimError::Encoding(format!("index {i} out of range for `{}`", c.name))
                })
            })
            .collect()
    }

    /// One one-hot vector per clause over that clause's local dictionary.
    pub fn one_hots(&self, enc: &ClauseEncoding) -> Vec<Vec<f32>> {
        self.clauses
            .iter()
            .zip(&enc.indices)
            .map(|(c, &i)| {
                let mut v = vec![0.0; c.words.len()];
                v[i] = 1.0;
                v
            })
            .collect()
    }

    /// Appends words to the named clauses. Returns the new global ids in the
    /// order they were assigned.
    pub fn extend(&mut self, new_words: &BTreeMap<String, Vec<String>>) -> Result<Vec<usize>> {
        for (clause, words) in new_words {
            let c = self.clause(clause)?;
            for (i, w) in words.iter().enumerate() {
                if c.index_of(w).is_some() || words[..i].contains(w) {
                    return Err(SimError::DuplicateWord {
                        clause: clause.clone(),
                        word: w.clone(),
                    });
                }
            }
        }
        let mut next = self.total_words();
        let mut added = Vec::new();
        // Clause order, not map order, fixes the id assignment.
        for c in &mut self.clauses {
            if let Some(words) = new_words.get(&c.name) {
                for w in words {
                    c.words.push(w.clone());
                    c.ids.push(next);
                    added.push(next);
                    next += 1;
                }
            }
        }
        Ok(added)
    }

    /// New words needed so that every object kind of `spec` is nameable.
    pub fn missing_words(&self, spec: &EnvSpec) -> BTreeMap<String, Vec<String>> {
        let target = Vocabulary::for_spec(spec);
        let mut out = BTreeMap::new();
        for (mine, theirs) in self.clauses.iter().zip(&target.clauses) {
            let missing: Vec<String> = theirs
                .words
                .iter()
                .filter(|w| mine.index_of(w).is_none())
                .cloned()
                .collect();
            if !missing.is_empty() {
                out.insert(mine.name.clone(), missing);
            }
        }
        out
    }
}
