//! CSV ingestion: column mapping, score range policy, group-label
//! interning, and per-run ingestion reports.

use std::path::Path;

use debias_core::{compute_rho, Cohort, ScoredExample};

use crate::errors::{CliError, CliResult};

/// Column mapping from CSV headers to the cohort fields.
#[derive(Debug, Clone)]
pub struct Schema {
    pub score: String,
    pub group: String,
    pub sensitive: String,
    pub label: String,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            score: "score".into(),
            group: "group".into(),
            sensitive: "sensitive".into(),
            label: "label".into(),
        }
    }
}

/// What to do with scores outside `[-1, 1]`: clamp and count, or reject
/// the row. Non-finite scores are rejected either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClampPolicy {
    Clamp,
    Strict,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub rows: usize,
    pub clamped: usize,
    pub group_labels: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub rho: Vec<f64>,
    pub has_sensitive: bool,
    pub has_label: bool,
}

impl IngestReport {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "rows = {}\nclamped = {}\ngroup_count = {}\n",
            self.rows,
            self.clamped,
            self.group_labels.len()
        );
        for (k, label) in self.group_labels.iter().enumerate() {
            out.push_str(&format!(
                "group_{k} = {label} (size {}, rho {:?})\n",
                self.group_sizes[k], self.rho[k]
            ));
        }
        out
    }
}

/// A parsed cohort plus everything needed to echo the original rows back
/// out (for `apply`).
#[derive(Debug, Clone)]
pub struct Ingested {
    pub cohort: Cohort,
    pub report: IngestReport,
    pub headers: csv::StringRecord,
    pub raw_rows: Vec<csv::StringRecord>,
}

pub fn parse_bool(field: &str) -> Option<bool> {
    match field.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Reads a scored CSV into a validated cohort.
///
/// Group labels are interned to dense ids in first-appearance order, so
/// the same file always produces the same cohort. When `known_groups` is
/// given (applying a persisted model) labels must resolve against it and
/// anything unknown is a data error. A missing sensitive column is an
/// error when `sensitive_required`, otherwise the flag defaults to false.
pub fn ingest(
    path: &Path,
    schema: &Schema,
    policy: ClampPolicy,
    sensitive_required: bool,
    known_groups: Option<&[String]>,
) -> CliResult<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);

    let score_col = column(&schema.score).ok_or_else(|| {
        CliError::data(format!("missing score column '{}'", schema.score))
    })?;
    let group_col = column(&schema.group).ok_or_else(|| {
        CliError::data(format!("missing group column '{}'", schema.group))
    })?;
    let sensitive_col = column(&schema.sensitive);
    if sensitive_required && sensitive_col.is_none() {
        return Err(CliError::data(format!(
            "missing sensitive column '{}' (required under conditional statistical parity)",
            schema.sensitive
        )));
    }
    let label_col = column(&schema.label);

    let mut labels: Vec<String> = known_groups.map(|g| g.to_vec()).unwrap_or_default();
    let fixed_groups = known_groups.is_some();
    let mut examples = Vec::new();
    let mut raw_rows = Vec::new();
    let mut clamped = 0usize;

    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record?;
        let field = |col: usize| record.get(col).unwrap_or("").trim();

        let raw_score: f64 = field(score_col).parse().map_err(|_| {
            CliError::data(format!(
                "row {row}: non-numeric score '{}'",
                field(score_col)
            ))
        })?;
        if !raw_score.is_finite() {
            return Err(CliError::data(format!("row {row}: score is not finite")));
        }
        let score = if (-1.0..=1.0).contains(&raw_score) {
            raw_score
        } else {
            match policy {
                ClampPolicy::Clamp => {
                    clamped += 1;
                    raw_score.clamp(-1.0, 1.0)
                }
                ClampPolicy::Strict => {
                    return Err(CliError::data(format!(
                        "row {row}: score {raw_score} outside [-1, 1] (strict mode)"
                    )))
                }
            }
        };

        let group_label = field(group_col).to_string();
        let group_id = match labels.iter().position(|l| l == &group_label) {
            Some(id) => id,
            None if fixed_groups => {
                return Err(CliError::data(format!(
                    "row {row}: group '{group_label}' is not part of the model's group universe"
                )))
            }
            None => {
                labels.push(group_label);
                labels.len() - 1
            }
        };

        let sensitive = match sensitive_col {
            Some(col) => parse_bool(field(col)).ok_or_else(|| {
                CliError::data(format!(
                    "row {row}: unknown boolean encoding '{}' in column '{}'",
                    field(col),
                    schema.sensitive
                ))
            })?,
            None => false,
        };

        let label = match label_col {
            Some(col) if !field(col).is_empty() => Some(parse_bool(field(col)).ok_or_else(
                || {
                    CliError::data(format!(
                        "row {row}: unknown boolean encoding '{}' in column '{}'",
                        field(col),
                        schema.label
                    ))
                },
            )?),
            _ => None,
        };

        examples.push(ScoredExample::new(score, group_id, sensitive, label));
        raw_rows.push(record);
    }

    if examples.is_empty() {
        return Err(CliError::data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    let cohort = Cohort::new(examples, labels.len())
        .map_err(|e| CliError::data(e.to_string()))?;
    let rho = compute_rho(&cohort).map_err(|e| CliError::data(e.to_string()))?;
    let report = IngestReport {
        rows: cohort.len(),
        clamped,
        group_labels: labels,
        group_sizes: cohort.group_sizes().to_vec(),
        rho,
        has_sensitive: sensitive_col.is_some(),
        has_label: label_col.is_some(),
    };
    Ok(Ingested {
        cohort,
        report,
        headers,
        raw_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn four_rows_two_groups() {
        let file = write_temp(
            "score,group,sensitive,label\n0.5,A,1,1\n-0.5,A,0,0\n0.25,B,yes,true\n-0.25,B,no,false\n",
        );
        let out = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Clamp,
            true,
            None,
        )
        .unwrap();
        assert_eq!(out.cohort.group_count(), 2);
        assert_eq!(out.report.group_labels, vec!["A", "B"]);
        assert_eq!(out.report.rho, vec![0.5, 0.5]);
        assert_eq!(out.report.clamped, 0);
        assert_eq!(out.cohort.examples()[2].label, Some(true));
    }

    #[test]
    fn clamp_mode_counts_and_strict_mode_rejects() {
        let file = write_temp("score,group,sensitive\n1.5,A,1\n-0.5,A,0\n");
        let out = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Clamp,
            true,
            None,
        )
        .unwrap();
        assert_eq!(out.report.clamped, 1);
        assert_eq!(out.cohort.examples()[0].score, 1.0);

        let err = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Strict,
            true,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, CliError::Data(_)));
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn missing_sensitive_column_is_an_error_when_required() {
        let file = write_temp("score,group\n0.5,A\n");
        let err = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Clamp,
            true,
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("sensitive"));
        assert_eq!(err.exit_code(), 2);

        // Not required: flag defaults to false.
        let out = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Clamp,
            false,
            None,
        )
        .unwrap();
        assert!(!out.cohort.examples()[0].sensitive);
        assert!(!out.report.has_sensitive);
    }

    #[test]
    fn unknown_boolean_is_a_row_addressed_error() {
        let file = write_temp("score,group,sensitive\n0.5,A,maybe\n");
        let err = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Clamp,
            true,
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("row 2"));
        assert!(err.to_string().contains("maybe"));
    }

    #[test]
    fn unknown_group_against_fixed_universe() {
        let file = write_temp("score,group,sensitive\n0.5,C,1\n");
        let known = vec!["A".to_string(), "B".to_string()];
        let err = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Clamp,
            true,
            Some(&known),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("'C'"));
    }

    #[test]
    fn same_file_same_ids() {
        let file = write_temp(
            "score,group,sensitive\n0.1,X,1\n0.2,Y,0\n0.3,X,1\n-0.9,Z,0\n",
        );
        let a = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Clamp,
            true,
            None,
        )
        .unwrap();
        let b = ingest(
            file.path(),
            &Schema::default(),
            ClampPolicy::Clamp,
            true,
            None,
        )
        .unwrap();
        assert_eq!(a.cohort, b.cohort);
        assert_eq!(a.report.group_labels, vec!["X", "Y", "Z"]);
    }
}
