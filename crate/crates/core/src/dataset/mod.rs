//! Dictionary-encoded, immutable columnar relation.

mod binning;
mod schema;

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use binning::BinningRule;
pub use schema::{AttrKind, Schema};

use crate::error::DatasetError;

/// Ordinal position of a column in the relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttrId(pub u32);

impl AttrId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for AttrId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Dictionary code of a value within one column.
pub type Code = u32;

/// Reserved code for nulls. Nulls are ordinary selectable values.
pub const NULL_CODE: Code = Code::MAX;

#[derive(Debug, Clone)]
pub struct Attribute {
    pub id: AttrId,
    pub name: String,
    pub kind: AttrKind,
    /// Text T(A) used for embeddings and display.
    pub label: String,
    /// Number of distinct non-null codes present in the column.
    pub distinct_count: usize,
    pub has_null: bool,
    /// Present when the column codes are bins of a numeric column.
    pub binning: Option<BinningRule>,
    values: Vec<String>,
    value_labels: Vec<String>,
    null_label: String,
}

impl Attribute {
    /// Size of the code space (codes are `0..code_space()`, plus [`NULL_CODE`]).
    pub fn code_space(&self) -> usize {
        self.values.len()
    }

    /// Number of distinct codes present, the null code included.
    pub fn cardinality(&self) -> usize {
        self.distinct_count + usize::from(self.has_null)
    }

    /// The stored (raw or binned) text of a code; `None` for null.
    pub fn decode(&self, code: Code) -> Option<&str> {
        if code == NULL_CODE {
            None
        } else {
            self.values.get(code as usize).map(String::as_str)
        }
    }

    /// Text T(v) for a code.
    pub fn value_label(&self, code: Code) -> &str {
        if code == NULL_CODE {
            &self.null_label
        } else {
            &self.value_labels[code as usize]
        }
    }

    /// Looks a code up by its stored text or its label; the null label
    /// resolves to [`NULL_CODE`].
    pub fn code_of(&self, text: &str) -> Option<Code> {
        self.values
            .iter()
            .position(|v| v == text)
            .or_else(|| self.value_labels.iter().position(|v| v == text))
            .map(|i| i as Code)
            .or_else(|| (text == self.null_label && self.has_null).then_some(NULL_CODE))
    }

    /// Every code present in the column, in code order, null last.
    pub fn present_codes(&self, column: &[Code]) -> Vec<Code> {
        let mut seen = vec![false; self.values.len()];
        let mut null = false;
        for &c in column {
            if c == NULL_CODE {
                null = true;
            } else {
                seen[c as usize] = true;
            }
        }
        let mut codes: Vec<Code> = (0..self.values.len() as Code)
            .filter(|&c| seen[c as usize])
            .collect();
        if null {
            codes.push(NULL_CODE);
        }
        codes
    }
}

/// Group assignment of a row subset under an attribute combination.
#[derive(Debug, Clone)]
pub struct Grouping {
    /// Dense group id for each row of the input, in input order.
    pub row_groups: Vec<u32>,
    /// Code tuple of each group, indexed by group id (first-appearance order).
    pub keys: Vec<Vec<Code>>,
}

impl Grouping {
    pub fn group_count(&self) -> usize {
        self.keys.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.keys.len()];
        for &g in &self.row_groups {
            sizes[g as usize] += 1;
        }
        sizes
    }
}

/// Largest dense lookup table used for composite keys before falling back
/// to hashing.
const DENSE_KEY_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone)]
pub struct Dataset {
    attributes: Vec<Attribute>,
    columns: Vec<Vec<Code>>,
    numeric: Vec<Option<Vec<f64>>>,
    agg_values: Vec<f64>,
    row_count: usize,
    group_by: AttrId,
    agg_attr: AttrId,
    split_attributes: Vec<AttrId>,
    fingerprint: String,
}

impl Dataset {
    /// Reads a CSV file with a header row and encodes it under `schema`.
    pub fn ingest_csv(path: &Path, schema: &Schema) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_csv_reader(std::io::BufReader::new(file), schema)
    }

    pub fn from_csv_reader<R: Read>(reader: R, schema: &Schema) -> Result<Self, DatasetError> {
        let delimiter = u8::try_from(schema.delimiter)
            .map_err(|_| DatasetError::Schema("delimiter must be a single byte".into()))?;
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| DatasetError::MalformedRow {
                row: 0,
                message: e.to_string(),
            })?
            .iter()
            .map(|h| h.trim().to_owned())
            .collect();

        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            // Row numbers are 1-based data rows (the header is row 0).
            let rec = rec.map_err(|e| DatasetError::MalformedRow {
                row: i + 1,
                message: e.to_string(),
            })?;
            if rec.len() != header.len() {
                return Err(DatasetError::MalformedRow {
                    row: i + 1,
                    message: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            records.push(rec.iter().map(str::to_owned).collect::<Vec<_>>());
        }
        Self::from_records(&header, &records, schema)
    }

    /// Encodes already-split string records. Useful for synthetic data.
    pub fn from_records<S: AsRef<str>>(
        header: &[S],
        records: &[Vec<String>],
        schema: &Schema,
    ) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::EmptyRelation);
        }
        let header: Vec<&str> = header.iter().map(AsRef::as_ref).collect();
        let position = |name: &str| {
            header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| DatasetError::UnknownAttribute(name.to_owned()))
        };
        for name in schema
            .kinds
            .keys()
            .chain(schema.labels.keys())
            .chain(schema.value_labels.keys())
        {
            position(name)?;
        }
        let agg_attr = AttrId(position(&schema.aggregate)? as u32);
        let group_by = AttrId(position(&schema.group_by)? as u32);
        if agg_attr == group_by {
            return Err(DatasetError::Schema(
                "aggregate and group-by attribute must differ".into(),
            ));
        }
        let mut split_attributes = Vec::with_capacity(schema.split_attributes.len());
        for name in &schema.split_attributes {
            let id = AttrId(position(name)? as u32);
            if id == agg_attr || id == group_by {
                return Err(DatasetError::Schema(format!(
                    "split attribute `{name}` is the aggregate or group-by attribute"
                )));
            }
            if !split_attributes.contains(&id) {
                split_attributes.push(id);
            }
        }
        split_attributes.sort();

        let mut attributes = Vec::with_capacity(header.len());
        let mut columns = Vec::with_capacity(header.len());
        let mut numeric = Vec::with_capacity(header.len());
        for (col, name) in header.iter().enumerate() {
            let id = AttrId(col as u32);
            let kind = schema.kind_of(name);
            let cells: Vec<Option<&str>> = records
                .iter()
                .map(|r| clean_cell(&r[col], schema))
                .collect();

            let values = if kind.is_numeric() {
                let mut parsed = Vec::with_capacity(cells.len());
                for (row, cell) in cells.iter().enumerate() {
                    parsed.push(match cell {
                        None => f64::NAN,
                        Some(text) => text.parse::<f64>().map_err(|_| DatasetError::NotNumeric {
                            column: name.to_string(),
                            row: row + 1,
                            value: text.to_string(),
                        })?,
                    });
                }
                Some(parsed)
            } else {
                None
            };

            // Split attributes of binned kind and the aggregate attribute are
            // encoded as bins; the aggregate keeps its raw values separately.
            let bin = kind.is_numeric()
                && ((kind == AttrKind::NumericBinned && split_attributes.contains(&id))
                    || id == agg_attr);
            let binning = if bin {
                let parsed = values.as_deref().unwrap_or_default();
                Some(
                    BinningRule::from_values(parsed)
                        .ok_or_else(|| DatasetError::AllNull(name.to_string()))?,
                )
            } else {
                None
            };

            let texts: Vec<Option<String>> = match (&binning, &values) {
                (Some(rule), Some(parsed)) => parsed
                    .iter()
                    .map(|v| (!v.is_nan()).then(|| rule.label_of(*v)))
                    .collect(),
                _ => cells.iter().map(|c| c.map(str::to_owned)).collect(),
            };

            let (codes, dictionary) = dictionary_encode(&texts);
            let labels_for = schema.value_labels.get(*name);
            let value_labels = dictionary
                .iter()
                .map(|v| {
                    labels_for
                        .and_then(|m| m.get(v))
                        .cloned()
                        .unwrap_or_else(|| v.clone())
                })
                .collect();
            let has_null = codes.contains(&NULL_CODE);
            attributes.push(Attribute {
                id,
                name: name.to_string(),
                kind,
                label: schema
                    .labels
                    .get(*name)
                    .cloned()
                    .unwrap_or_else(|| name.to_string()),
                distinct_count: dictionary.len(),
                has_null,
                binning,
                values: dictionary,
                value_labels,
                null_label: schema.null_label.clone(),
            });
            columns.push(codes);
            numeric.push(values);
        }

        let agg_values = numeric[agg_attr.index()]
            .clone()
            .unwrap_or_else(|| vec![f64::NAN; records.len()]);
        let mut ds = Self {
            attributes,
            columns,
            numeric,
            agg_values,
            row_count: records.len(),
            group_by,
            agg_attr,
            split_attributes,
            fingerprint: String::new(),
        };
        ds.fingerprint = ds.compute_fingerprint();
        Ok(ds)
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, id: AttrId) -> &Attribute {
        &self.attributes[id.index()]
    }

    pub fn attribute_by_name(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn column(&self, id: AttrId) -> &[Code] {
        &self.columns[id.index()]
    }

    /// Parsed values of a numeric column (`NaN` for nulls).
    pub fn numeric_column(&self, id: AttrId) -> Option<&[f64]> {
        self.numeric[id.index()].as_deref()
    }

    /// Un-binned aggregate values; `NaN` marks null or non-numeric cells.
    pub fn agg_values(&self) -> &[f64] {
        &self.agg_values
    }

    pub fn agg_attr(&self) -> AttrId {
        self.agg_attr
    }

    pub fn group_by(&self) -> AttrId {
        self.group_by
    }

    /// SAtt(D): candidate attributes for refinement predicates, ascending.
    pub fn split_attributes(&self) -> &[AttrId] {
        &self.split_attributes
    }

    /// Content hash over names, kinds, codes and aggregate values.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Stored text of `code` in attribute `id`, or `None` for null.
    pub fn decode(&self, id: AttrId, code: Code) -> Option<&str> {
        self.attribute(id).decode(code)
    }

    /// Exact group-by counts over all rows (nulls form their own group).
    pub fn group_sizes(&self, combo: &[AttrId]) -> HashMap<Vec<Code>, usize> {
        let grouping = self.group_rows(combo, None);
        grouping
            .sizes()
            .into_iter()
            .enumerate()
            .map(|(g, n)| (grouping.keys[g].clone(), n))
            .collect()
    }

    /// Assigns each row (all rows, or the listed subset) a dense group id
    /// under the combination.
    pub fn group_rows(&self, combo: &[AttrId], rows: Option<&[u32]>) -> Grouping {
        let columns: Vec<&[Code]> = combo.iter().map(|&a| self.column(a)).collect();
        let radices: Vec<u64> = combo
            .iter()
            .map(|&a| self.attribute(a).code_space() as u64 + 1)
            .collect();
        let spaces: Vec<Code> = combo
            .iter()
            .map(|&a| self.attribute(a).code_space() as Code)
            .collect();
        let total = radices
            .iter()
            .try_fold(1u64, |acc, &r| acc.checked_mul(r));

        let n = rows.map_or(self.row_count, <[u32]>::len);
        let row_at = |i: usize| rows.map_or(i, |r| r[i] as usize);
        let key_of = |row: usize| -> u64 {
            let mut key = 0u64;
            for (c, (&radix, &space)) in columns.iter().zip(radices.iter().zip(&spaces)) {
                let code = c[row];
                let slot = if code == NULL_CODE { space } else { code };
                key = key * radix + slot as u64;
            }
            key
        };
        let tuple_of = |row: usize| -> Vec<Code> { columns.iter().map(|c| c[row]).collect() };

        let mut row_groups = Vec::with_capacity(n);
        let mut keys = Vec::new();
        if let ([column], [space]) = (columns.as_slice(), spaces.as_slice()) {
            // One attribute: the code itself indexes the table.
            let mut table = vec![u32::MAX; *space as usize + 1];
            let mut visit = |code: Code| {
                let slot = &mut table[if code == NULL_CODE { *space as usize } else { code as usize }];
                if *slot == u32::MAX {
                    *slot = keys.len() as u32;
                    keys.push(vec![code]);
                }
                row_groups.push(*slot);
            };
            match rows {
                Some(rows) => rows.iter().for_each(|&r| visit(column[r as usize])),
                None => column.iter().for_each(|&c| visit(c)),
            }
            return Grouping { row_groups, keys };
        }
        match total {
            Some(total) if total <= DENSE_KEY_LIMIT => {
                let mut table = vec![u32::MAX; total as usize];
                for i in 0..n {
                    let row = row_at(i);
                    let slot = &mut table[key_of(row) as usize];
                    if *slot == u32::MAX {
                        *slot = keys.len() as u32;
                        keys.push(tuple_of(row));
                    }
                    row_groups.push(*slot);
                }
            }
            Some(_) => {
                let mut table: HashMap<u64, u32> = HashMap::new();
                for i in 0..n {
                    let row = row_at(i);
                    let next = keys.len() as u32;
                    let g = *table.entry(key_of(row)).or_insert_with(|| {
                        keys.push(tuple_of(row));
                        next
                    });
                    row_groups.push(g);
                }
            }
            None => {
                let mut table: HashMap<Vec<Code>, u32> = HashMap::new();
                for i in 0..n {
                    let row = row_at(i);
                    let tuple = tuple_of(row);
                    let next = keys.len() as u32;
                    let g = *table.entry(tuple.clone()).or_insert_with(|| {
                        keys.push(tuple);
                        next
                    });
                    row_groups.push(g);
                }
            }
        }
        Grouping { row_groups, keys }
    }

    /// A new dataset holding only `rows`, sharing this dataset's code space so
    /// predicates transfer between the two. Per-attribute counts describe the
    /// subset.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let columns: Vec<Vec<Code>> = self
            .columns
            .iter()
            .map(|c| rows.iter().map(|&r| c[r]).collect())
            .collect();
        let numeric = self
            .numeric
            .iter()
            .map(|c| c.as_ref().map(|v| rows.iter().map(|&r| v[r]).collect()))
            .collect();
        let agg_values = rows.iter().map(|&r| self.agg_values[r]).collect();
        let attributes = self
            .attributes
            .iter()
            .zip(&columns)
            .map(|(a, col)| {
                let present = a.present_codes(col);
                let has_null = present.last() == Some(&NULL_CODE);
                Attribute {
                    distinct_count: present.len() - usize::from(has_null),
                    has_null,
                    ..a.clone()
                }
            })
            .collect();
        let mut ds = Dataset {
            attributes,
            columns,
            numeric,
            agg_values,
            row_count: rows.len(),
            group_by: self.group_by,
            agg_attr: self.agg_attr,
            split_attributes: self.split_attributes.clone(),
            fingerprint: String::new(),
        };
        ds.fingerprint = ds.compute_fingerprint();
        ds
    }

    fn compute_fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.row_count as u64).to_le_bytes());
        for (attr, column) in self.attributes.iter().zip(&self.columns) {
            hasher.update(attr.name.as_bytes());
            hasher.update([0u8, attr.kind as u8]);
            for v in &attr.values {
                hasher.update(v.as_bytes());
                hasher.update([0u8]);
            }
            for &c in column {
                hasher.update(c.to_le_bytes());
            }
        }
        for v in &self.agg_values {
            hasher.update(v.to_bits().to_le_bytes());
        }
        for a in &self.split_attributes {
            hasher.update(a.0.to_le_bytes());
        }
        hasher.update(self.group_by.0.to_le_bytes());
        hasher.update(self.agg_attr.0.to_le_bytes());
        hex::encode(hasher.finalize())
    }
}

fn clean_cell<'a>(cell: &'a str, schema: &Schema) -> Option<&'a str> {
    let mut text = cell.trim();
    if let Some(sep) = schema.multi_value_delimiter.as_deref() {
        if let Some((first, _)) = text.split_once(sep) {
            text = first.trim();
        }
    }
    if schema.null_tokens.iter().any(|t| t == text) {
        None
    } else {
        Some(text)
    }
}

/// Codes assigned in first-appearance order; `None` maps to [`NULL_CODE`].
fn dictionary_encode(texts: &[Option<String>]) -> (Vec<Code>, Vec<String>) {
    let mut lookup: HashMap<&str, Code> = HashMap::new();
    let mut dictionary: Vec<String> = Vec::new();
    let mut codes = Vec::with_capacity(texts.len());
    for text in texts {
        let code = match text {
            None => NULL_CODE,
            Some(t) => *lookup.entry(t.as_str()).or_insert_with(|| {
                dictionary.push(t.clone());
                (dictionary.len() - 1) as Code
            }),
        };
        codes.push(code);
    }
    (codes, dictionary)
}
