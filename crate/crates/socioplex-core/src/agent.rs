//! Agent records: the profile data model, file ingestion and validation.
//!
//! An agent is one researcher: where they work, where they got their PhD,
//! up to three declared field codes, and id-sets of collaborators and
//! citations. Records are loaded from CSV or JSON, kept in file order, and
//! never mutated after load.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum number of declared field codes per agent.
pub const MAX_FIELDS: usize = 3;

const CSV_HEADER: [&str; 9] = [
    "id",
    "name",
    "institution",
    "phd_institution",
    "field1",
    "field2",
    "field3",
    "collaborators",
    "citations",
];

/// One researcher's profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: String,
    pub name: String,
    pub institution: String,
    pub phd_institution: String,
    /// Declared field codes, 1 to 3 entries.
    pub fields: Vec<String>,
    /// Ids of past collaborators (one direction is enough; links are
    /// symmetrized when distances are computed).
    pub collaborators: BTreeSet<String>,
    /// Ids of agents cited by or citing this one.
    pub citations: BTreeSet<String>,
}

/// An ordered collection of agents with a stable id-to-position index.
///
/// Positions are 0-based and match the row/column order of every
/// distance matrix derived from the set.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSet {
    records: Vec<AgentRecord>,
    index: HashMap<String, usize>,
}

/// File formats understood by [`load_agents`] and [`save_agents`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Json,
}

impl FileFormat {
    /// Guess the format from a file extension, defaulting to CSV.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => FileFormat::Json,
            _ => FileFormat::Csv,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate agent id {0:?}")]
    DuplicateId(String),
}

impl AgentSet {
    /// Build a set from records, erroring on duplicate or empty ids.
    pub fn new(records: Vec<AgentRecord>) -> Result<AgentSet, AgentError> {
        let mut index = HashMap::with_capacity(records.len());
        for (pos, record) in records.iter().enumerate() {
            if record.id.is_empty() {
                return Err(AgentError::Parse {
                    line: pos + 1,
                    message: "empty agent id".into(),
                });
            }
            if index.insert(record.id.clone(), pos).is_some() {
                return Err(AgentError::DuplicateId(record.id.clone()));
            }
        }
        Ok(AgentSet { records, index })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, pos: usize) -> &AgentRecord {
        &self.records[pos]
    }

    pub fn by_id(&self, id: &str) -> Option<&AgentRecord> {
        self.index.get(id).map(|&pos| &self.records[pos])
    }

    /// Position of `id` in the set, if present.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, AgentRecord> {
        self.records.iter()
    }

    /// Agent ids in set order.
    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }
}

impl<'a> IntoIterator for &'a AgentSet {
    type Item = &'a AgentRecord;
    type IntoIter = std::slice::Iter<'a, AgentRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}

/// Load agent records from `path`, preserving file row order.
///
/// Hard failures are malformed input and duplicate ids. Softer problems
/// (empty field lists, self-references, ids that point outside the set)
/// load fine and are reported by [`validate`].
pub fn load_agents(path: &Path, format: FileFormat) -> Result<AgentSet, AgentError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    match format {
        FileFormat::Csv => load_csv(reader),
        FileFormat::Json => load_json(reader),
    }
}

fn load_csv<R: std::io::Read>(reader: R) -> Result<AgentSet, AgentError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != CSV_HEADER {
        return Err(AgentError::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                CSV_HEADER.join(","),
                found.join(",")
            ),
        });
    }
    let mut records = Vec::new();
    for (row, result) in rdr.records().enumerate() {
        let line = row + 2; // 1-based, after the header
        let record = result.map_err(csv_error)?;
        if record.len() != CSV_HEADER.len() {
            return Err(AgentError::Parse {
                line,
                message: format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()),
            });
        }
        let fields = [&record[4], &record[5], &record[6]]
            .iter()
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect();
        records.push(AgentRecord {
            id: record[0].trim().to_owned(),
            name: record[1].to_owned(),
            institution: record[2].to_owned(),
            phd_institution: record[3].to_owned(),
            fields,
            collaborators: split_id_list(&record[7]),
            citations: split_id_list(&record[8]),
        });
        if records.last().map(|r| r.id.is_empty()).unwrap_or(false) {
            return Err(AgentError::Parse {
                line,
                message: "empty agent id".into(),
            });
        }
    }
    AgentSet::new(records)
}

fn csv_error(err: csv::Error) -> AgentError {
    let line = err
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(0);
    AgentError::Parse {
        line,
        message: err.to_string(),
    }
}

fn load_json<R: std::io::Read>(reader: R) -> Result<AgentSet, AgentError> {
    let records: Vec<AgentRecord> =
        serde_json::from_reader(reader).map_err(|err| AgentError::Parse {
            line: err.line(),
            message: err.to_string(),
        })?;
    AgentSet::new(records)
}

fn split_id_list(raw: &str) -> BTreeSet<String> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Write the set back out; `load_agents` on the result reproduces the set
/// field by field.
pub fn save_agents(agents: &AgentSet, path: &Path, format: FileFormat) -> Result<(), AgentError> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    match format {
        FileFormat::Csv => save_csv(agents, &mut writer)?,
        FileFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, &agents.records).map_err(|err| {
                AgentError::Parse {
                    line: 0,
                    message: err.to_string(),
                }
            })?;
            writer.write_all(b"\n")?;
        }
    }
    writer.flush()?;
    Ok(())
}

fn save_csv<W: std::io::Write>(agents: &AgentSet, writer: W) -> Result<(), AgentError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(CSV_HEADER).map_err(csv_error)?;
    for record in agents.iter() {
        let mut fields = record.fields.clone();
        fields.resize(MAX_FIELDS, String::new());
        let collaborators = join_id_list(&record.collaborators);
        let citations = join_id_list(&record.citations);
        wtr.write_record([
            record.id.as_str(),
            record.name.as_str(),
            record.institution.as_str(),
            record.phd_institution.as_str(),
            fields[0].as_str(),
            fields[1].as_str(),
            fields[2].as_str(),
            collaborators.as_str(),
            citations.as_str(),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush()?;
    Ok(())
}

fn join_id_list(ids: &BTreeSet<String>) -> String {
    ids.iter().cloned().collect::<Vec<_>>().join(";")
}

/// How severe a validation problem is.
///
/// `Error` problems break a record invariant; `Warning` problems (dangling
/// references) may just mean the referenced agent is outside the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    EmptyFields,
    TooManyFields,
    BlankField,
    DuplicateField,
    SelfReference,
    DanglingReference,
}

/// One validation finding, tied to the offending agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub agent_id: String,
    pub kind: ProblemKind,
    pub severity: Severity,
    pub detail: String,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{tag} {}: {}", self.agent_id, self.detail)
    }
}

/// Every invariant violation found in a set; empty iff the set is clean.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub problems: Vec<Problem>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    /// True if any problem is error-severity (dangling ids are warnings).
    pub fn has_errors(&self) -> bool {
        self.problems.iter().any(|p| p.severity == Severity::Error)
    }
}

/// Check every record invariant: field list shape, self-references, and
/// collaborator/citation ids that do not resolve within the set.
pub fn validate(agents: &AgentSet) -> ValidationReport {
    let mut problems = Vec::new();
    for record in agents.iter() {
        let mut push = |kind, severity, detail: String| {
            problems.push(Problem {
                agent_id: record.id.clone(),
                kind,
                severity,
                detail,
            });
        };
        if record.fields.is_empty() {
            push(ProblemKind::EmptyFields, Severity::Error, "fields empty".into());
        }
        if record.fields.len() > MAX_FIELDS {
            push(
                ProblemKind::TooManyFields,
                Severity::Error,
                format!("{} field codes declared, at most {MAX_FIELDS} allowed", record.fields.len()),
            );
        }
        let mut seen = BTreeSet::new();
        for field in &record.fields {
            if field.trim().is_empty() {
                push(ProblemKind::BlankField, Severity::Error, "blank field code".into());
            } else if !seen.insert(field.trim().to_lowercase()) {
                push(
                    ProblemKind::DuplicateField,
                    Severity::Error,
                    format!("duplicate field code {field:?}"),
                );
            }
        }
        for (label, ids) in [("collaborator", &record.collaborators), ("citation", &record.citations)] {
            for id in ids {
                if id == &record.id {
                    push(
                        ProblemKind::SelfReference,
                        Severity::Error,
                        format!("self-reference in {label} list"),
                    );
                } else if !agents.contains(id) {
                    push(
                        ProblemKind::DanglingReference,
                        Severity::Warning,
                        format!("{label} id {id:?} not in the dataset"),
                    );
                }
            }
        }
    }
    ValidationReport { problems }
}
