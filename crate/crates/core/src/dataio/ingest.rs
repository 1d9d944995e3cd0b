//! Comparison-table ingestion.
//!
//! Input is comma-delimited text with a required header row. Column names
//! are bound through an explicit [`ColumnSchema`] so vote dumps with other
//! headings or outcome vocabularies can be ingested without preprocessing.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{Category, ComparisonRecord, DataError, Label};

/// Binds the logical columns of a vote table to concrete header names and
/// maps outcome tokens onto labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnSchema {
    pub left_column: String,
    pub right_column: String,
    pub category_column: String,
    pub outcome_column: String,
    /// Outcome token -> label mapping, compared case-insensitively.
    pub outcome_tokens: BTreeMap<String, Label>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        let mut outcome_tokens = BTreeMap::new();
        outcome_tokens.insert("left".to_string(), Label::Left);
        outcome_tokens.insert("right".to_string(), Label::Right);
        outcome_tokens.insert("equal".to_string(), Label::Equal);
        Self {
            left_column: "left_id".to_string(),
            right_column: "right_id".to_string(),
            category_column: "category".to_string(),
            outcome_column: "choice".to_string(),
            outcome_tokens,
        }
    }
}

/// One row that failed validation, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Result of an ingestion pass: aggregated records plus the rejects report.
#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub records: Vec<ComparisonRecord>,
    pub rejects: Vec<RejectedRow>,
}

impl IngestOutcome {
    /// Renders the rejects report, one `<line_no>: <reason>` line per row.
    pub fn rejects_report(&self) -> String {
        let mut out = String::new();
        for reject in &self.rejects {
            out.push_str(&format!("{}: {}\n", reject.line, reject.reason));
        }
        out
    }
}

/// Parses a comparison vote table and aggregates votes per ordered
/// (left, right, category) key.
///
/// Every well-formed row contributes one vote; the aggregated record carries
/// the majority label, the total vote count, and the majority agreement
/// fraction. Malformed rows are collected in the rejects report rather than
/// silently dropped. A zero-byte stream is treated as an empty table.
pub fn parse_comparisons<R: Read>(
    input: R,
    schema: &ColumnSchema,
) -> Result<IngestOutcome, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);

    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(DataError::Ingestion(format!("unreadable stream: {e}"))),
    };
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        // Zero-byte input: vacuous table.
        return Ok(IngestOutcome {
            records: Vec::new(),
            rejects: Vec::new(),
        });
    }

    let column_index = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::Ingestion(format!("missing required column '{name}'")))
    };
    let left_idx = column_index(&schema.left_column)?;
    let right_idx = column_index(&schema.right_column)?;
    let category_idx = column_index(&schema.category_column)?;
    let outcome_idx = column_index(&schema.outcome_column)?;

    // Votes per ordered pair, keyed for deterministic output order.
    let mut votes: BTreeMap<(String, String, Category), [u32; 3]> = BTreeMap::new();
    let mut first_seen: BTreeMap<(String, String, Category), u64> = BTreeMap::new();
    let mut rejects = Vec::new();

    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e
                    .position()
                    .map(|p| p.line())
                    .unwrap_or_default();
                rejects.push(RejectedRow {
                    line,
                    reason: format!("unparseable row: {e}"),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or_default();
        let field = |idx: usize, name: &str| -> Result<String, String> {
            record
                .get(idx)
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| format!("missing value for column '{name}'"))
        };

        let row = (|| -> Result<(String, String, Category, Label), String> {
            let left = field(left_idx, &schema.left_column)?;
            let right = field(right_idx, &schema.right_column)?;
            if left == right {
                return Err(format!("left and right ids are identical ('{left}')"));
            }
            let category: Category = field(category_idx, &schema.category_column)?
                .parse()
                .map_err(|e: String| e)?;
            let token = field(outcome_idx, &schema.outcome_column)?;
            let label = schema
                .outcome_tokens
                .iter()
                .find(|(t, _)| t.eq_ignore_ascii_case(&token))
                .map(|(_, l)| *l)
                .ok_or_else(|| format!("unknown outcome token '{token}'"))?;
            Ok((left, right, category, label))
        })();

        match row {
            Ok((left, right, category, label)) => {
                let key = (left, right, category);
                first_seen.entry(key.clone()).or_insert(line);
                let counts = votes.entry(key).or_insert([0u32; 3]);
                counts[label as usize] += 1;
            }
            Err(reason) => rejects.push(RejectedRow { line, reason }),
        }
    }

    let mut records: Vec<ComparisonRecord> = votes
        .into_iter()
        .map(|((left_id, right_id, category), counts)| {
            let total: u32 = counts.iter().sum();
            // Majority label; exact ties break towards the earliest variant
            // (left < right < equal). Tied records cannot pass a strict
            // majority filter anyway.
            let (majority_idx, majority_count) = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("three outcome counters");
            let label = match majority_idx {
                0 => Label::Left,
                1 => Label::Right,
                _ => Label::Equal,
            };
            ComparisonRecord {
                left_id,
                right_id,
                category,
                label,
                vote_count: total,
                agreement: f64::from(*majority_count) / f64::from(total),
            }
        })
        .collect();

    // Deterministic output order regardless of input row order.
    records.sort_by(|a, b| {
        (&a.left_id, &a.right_id, a.category).cmp(&(&b.left_id, &b.right_id, b.category))
    });
    Ok(IngestOutcome { records, rejects })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> IngestOutcome {
        parse_comparisons(text.as_bytes(), &ColumnSchema::default()).unwrap()
    }

    #[test]
    fn empty_stream_yields_empty_list() {
        let outcome = parse("");
        assert!(outcome.records.is_empty());
        assert!(outcome.rejects.is_empty());
    }

    #[test]
    fn three_votes_aggregate_to_majority() {
        let outcome = parse(
            "left_id,right_id,category,choice\n\
             a,b,wealthy,left\n\
             a,b,wealthy,left\n\
             a,b,wealthy,right\n",
        );
        assert_eq!(outcome.records.len(), 1);
        let record = &outcome.records[0];
        assert_eq!(record.vote_count, 3);
        assert_eq!(record.label, Label::Left);
        assert!((record.agreement - 2.0 / 3.0).abs() < 1e-12);
        assert!(outcome.rejects.is_empty());
    }

    #[test]
    fn schema_maps_tie_token_to_equal() {
        let mut schema = ColumnSchema::default();
        schema
            .outcome_tokens
            .insert("tie".to_string(), Label::Equal);
        let outcome = parse_comparisons(
            "left_id,right_id,category,choice\na,b,safety,tie\n".as_bytes(),
            &schema,
        )
        .unwrap();
        assert_eq!(outcome.records[0].label, Label::Equal);
    }

    #[test]
    fn unknown_category_is_rejected_with_line_number() {
        let outcome = parse(
            "left_id,right_id,category,choice\n\
             a,b,wealthy,left\n\
             a,b,mystery,left\n",
        );
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.rejects.len(), 1);
        assert_eq!(outcome.rejects[0].line, 3);
        assert!(outcome.rejects[0].reason.contains("mystery"));
        assert_eq!(outcome.rejects_report(), format!("3: {}\n", outcome.rejects[0].reason));
    }

    #[test]
    fn self_pair_is_rejected() {
        let outcome = parse("left_id,right_id,category,choice\na,a,wealthy,left\n");
        assert!(outcome.records.is_empty());
        assert_eq!(outcome.rejects.len(), 1);
    }

    #[test]
    fn missing_header_column_is_fatal() {
        let err = parse_comparisons(
            "left_id,right_id,category\na,b,wealthy\n".as_bytes(),
            &ColumnSchema::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("choice"));
    }

    #[test]
    fn reversed_duplicates_stay_separate() {
        let outcome = parse(
            "left_id,right_id,category,choice\n\
             a,b,wealthy,left\n\
             b,a,wealthy,left\n",
        );
        assert_eq!(outcome.records.len(), 2);
    }

    proptest! {
        /// Permuting input rows yields the same set of aggregated records.
        #[test]
        fn aggregation_is_order_invariant(permutation_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let rows = vec![
                "a,b,wealthy,left",
                "a,b,wealthy,right",
                "a,b,wealthy,left",
                "c,d,safety,equal",
                "c,d,safety,equal",
                "e,f,boring,right",
            ];
            let mut shuffled = rows.clone();
            let mut rng = crate::seed::derive_rng(permutation_seed, "test.permute", &[]);
            shuffled.shuffle(&mut rng);
            let base = parse(&format!("left_id,right_id,category,choice\n{}\n", rows.join("\n")));
            let permuted = parse(&format!(
                "left_id,right_id,category,choice\n{}\n",
                shuffled.join("\n")
            ));
            prop_assert_eq!(base.records, permuted.records);
        }
    }
}
