//! Loading categorical survey data and turning raw questionnaire codes into
//! analysis categories.
//!
//! A [`RawTable`] holds the integer codes exactly as they appear in the
//! input file. A [`CodingScheme`] maps each raw code of an item either to an
//! analysis category or to the missing marker, and [`apply_coding`] produces
//! the [`ResponseMatrix`] every downstream module consumes.
//!
//! Coding scheme files are JSON objects keyed by item id:
//!
//! ```json
//! {
//!   "Q40a": { "map": { "1": 1, "2": 4, "3": 2, "4": 3 }, "missing": [9] },
//!   "ATTEND": { "map": { "1": 6, "2": 5, "3": 4, "4": 3, "5": 2, "6": 1 }, "missing": [9] }
//! }
//! ```
//!
//! `map` sends raw code to recoded category, `missing` lists the raw codes
//! that become missing. Every raw code found in the data must appear in one
//! of the two.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which columns of an input file play which role.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColumnSpec {
    pub items: Vec<String>,
    pub weight: Option<String>,
    pub groups: Vec<String>,
    /// Person identifier column; row numbers are used when absent.
    pub id: Option<String>,
}

/// A named column of group labels; `None` marks a blank cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupColumn {
    pub name: String,
    pub labels: Vec<Option<String>>,
}

/// Survey records as read from disk, before recoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub item_ids: Vec<String>,
    pub person_ids: Vec<String>,
    /// One row per person, one entry per item in `item_ids` order.
    pub codes: Vec<Vec<Option<i64>>>,
    pub weights: Option<Vec<f64>>,
    pub groups: Vec<GroupColumn>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.codes.len()
    }

    pub fn item_position(&self, item: &str) -> Option<usize> {
        self.item_ids.iter().position(|id| id == item)
    }
}

/// Reads a comma separated file with a header row.
///
/// Lines starting with `#` are treated as comments, so files written by the
/// command line tool (which carry a provenance block) can be read back.
pub fn load_csv(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<RawTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, spec)
}

/// Same as [`load_csv`] for any reader.
pub fn read_csv<R: std::io::Read>(reader: R, spec: &ColumnSpec) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_owned()))
    };

    let item_cols = spec.items.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let weight_col = spec.weight.as_deref().map(find).transpose()?;
    let group_cols = spec.groups.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let id_col = spec.id.as_deref().map(find).transpose()?;

    let mut table = RawTable {
        item_ids: spec.items.clone(),
        person_ids: Vec::new(),
        codes: Vec::new(),
        weights: weight_col.map(|_| Vec::new()),
        groups: spec
            .groups
            .iter()
            .map(|name| GroupColumn {
                name: name.clone(),
                labels: Vec::new(),
            })
            .collect(),
    };

    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx + 1;
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                row,
                expected: headers.len(),
                found: record.len(),
            });
        }

        let mut codes = Vec::with_capacity(item_cols.len());
        for (&col, name) in item_cols.iter().zip(&spec.items) {
            let cell = &record[col];
            if cell.is_empty() {
                codes.push(None);
                continue;
            }
            let code = cell.parse::<i64>().map_err(|_| Error::NonIntegerCode {
                row,
                column: name.clone(),
                value: cell.to_owned(),
            })?;
            codes.push(Some(code));
        }
        table.codes.push(codes);

        if let (Some(col), Some(weights)) = (weight_col, table.weights.as_mut()) {
            let cell = &record[col];
            let w = cell
                .parse::<f64>()
                .ok()
                .filter(|w| w.is_finite() && *w > 0.0)
                .ok_or_else(|| Error::InvalidWeight {
                    row,
                    column: spec.weight.clone().unwrap_or_default(),
                    value: cell.to_owned(),
                })?;
            weights.push(w);
        }

        for (&col, group) in group_cols.iter().zip(table.groups.iter_mut()) {
            let cell = &record[col];
            group
                .labels
                .push((!cell.is_empty()).then(|| cell.to_owned()));
        }

        table.person_ids.push(match id_col {
            Some(col) => record[col].to_owned(),
            None => row.to_string(),
        });
    }

    Ok(table)
}

/// Recoding rules for a single item.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCoding {
    pub map: BTreeMap<i64, i64>,
    #[serde(default)]
    pub missing: BTreeSet<i64>,
}

/// Outcome of recoding one raw cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recoded {
    Category(i64),
    Missing,
}

impl ItemCoding {
    pub fn validate(&self, item: &str) -> Result<()> {
        let invalid = |reason: String| Error::InvalidScheme {
            item: item.to_owned(),
            reason,
        };
        if self.map.is_empty() {
            return Err(invalid("no category mappings".into()));
        }
        let mut targets = BTreeSet::new();
        for (&raw, &target) in &self.map {
            if target < 0 {
                return Err(invalid(format!("raw code {raw} maps to negative category {target}")));
            }
            if !targets.insert(target) {
                return Err(invalid(format!("duplicate recode target {target}")));
            }
            if self.missing.contains(&raw) {
                return Err(invalid(format!("raw code {raw} is both mapped and missing")));
            }
        }
        if let Some(code) = self.missing.iter().find(|c| targets.contains(c)) {
            return Err(invalid(format!("missing code {code} is also a recode target")));
        }
        Ok(())
    }

    pub fn recode(&self, raw: i64) -> Option<Recoded> {
        if self.missing.contains(&raw) {
            Some(Recoded::Missing)
        } else {
            self.map.get(&raw).map(|&c| Recoded::Category(c))
        }
    }

    /// Recoded categories in ascending order.
    pub fn categories(&self) -> Vec<i64> {
        self.map.values().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// The raw code that maps onto `target`, when there is exactly one.
    pub fn raw_code(&self, target: i64) -> Option<i64> {
        let mut hits = self.map.iter().filter(|(_, &t)| t == target);
        match (hits.next(), hits.next()) {
            (Some((&raw, _)), None) => Some(raw),
            _ => None,
        }
    }
}

/// Per-item recoding rules, keyed by item id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CodingScheme {
    pub items: BTreeMap<String, ItemCoding>,
}

impl CodingScheme {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let scheme: CodingScheme = serde_json::from_str(s)?;
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.items
            .iter()
            .try_for_each(|(item, coding)| coding.validate(item))
    }

    pub fn item(&self, id: &str) -> Option<&ItemCoding> {
        self.items.get(id)
    }

    /// Scheme that keeps every category of `m` as is. Used to describe an
    /// already recoded file so that its category layout survives a write and
    /// re-read even for categories nobody chose.
    pub fn identity(m: &ResponseMatrix) -> Self {
        let items = m
            .items()
            .iter()
            .map(|item| {
                let map = item.categories.iter().map(|&c| (c, c)).collect();
                (item.id.clone(), ItemCoding { map, missing: BTreeSet::new() })
            })
            .collect();
        CodingScheme { items }
    }
}

/// An item of the response matrix with its ordered category list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemLayout {
    pub id: String,
    pub categories: Vec<i64>,
}

impl ItemLayout {
    pub fn index_of(&self, code: i64) -> Option<usize> {
        self.categories.binary_search(&code).ok()
    }
}

/// Persons × items recoded responses. `None` is the missing marker.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    items: Vec<ItemLayout>,
    person_ids: Vec<String>,
    codes: Vec<Option<i64>>,
    weights: Vec<f64>,
    groups: Vec<GroupColumn>,
}

impl ResponseMatrix {
    /// Builds a matrix from person rows, checking every invariant.
    pub fn new(
        items: Vec<ItemLayout>,
        person_ids: Vec<String>,
        rows: Vec<Vec<Option<i64>>>,
        weights: Option<Vec<f64>>,
        groups: Vec<GroupColumn>,
    ) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidInput("response matrix has no persons".into()));
        }
        if person_ids.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} person ids for {n} rows",
                person_ids.len()
            )));
        }
        for item in &items {
            if item.categories.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidScheme {
                    item: item.id.clone(),
                    reason: "category list must be strictly ascending".into(),
                });
            }
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(Error::InvalidInput(format!("{} weights for {n} rows", weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInput(format!("weight {w} is not positive")));
        }
        for g in &groups {
            if g.labels.len() != n {
                return Err(Error::InvalidInput(format!(
                    "group column {} has {} labels for {n} rows",
                    g.name,
                    g.labels.len()
                )));
            }
        }

        let mut codes = Vec::with_capacity(n * items.len());
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != items.len() {
                return Err(Error::MalformedRow {
                    row: r + 1,
                    expected: items.len(),
                    found: row.len(),
                });
            }
            for (item, code) in items.iter().zip(&row) {
                if let Some(c) = code {
                    if item.index_of(*c).is_none() {
                        return Err(Error::CodeNotInLayout {
                            item: item.id.clone(),
                            code: *c,
                        });
                    }
                }
            }
            codes.extend(row);
        }

        Ok(ResponseMatrix {
            items,
            person_ids,
            codes,
            weights,
            groups,
        })
    }

    pub fn n_persons(&self) -> usize {
        self.person_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[ItemLayout] {
        &self.items
    }

    pub fn item_position(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    pub fn person_ids(&self) -> &[String] {
        &self.person_ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn groups(&self) -> &[GroupColumn] {
        &self.groups
    }

    pub fn group(&self, name: &str) -> Option<&GroupColumn> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn code(&self, person: usize, item: usize) -> Option<i64> {
        self.codes[person * self.items.len() + item]
    }

    /// Recoded codes of one person, in item order.
    pub fn row(&self, person: usize) -> &[Option<i64>] {
        let i = self.items.len();
        &self.codes[person * i..(person + 1) * i]
    }

    /// Zero-based position of the response within the item's category list.
    pub fn category_index(&self, person: usize, item: usize) -> Option<usize> {
        self.code(person, item)
            .map(|c| self.items[item].index_of(c).expect("validated on construction"))
    }

    pub fn row_indices(&self, person: usize) -> Vec<Option<usize>> {
        (0..self.items.len())
            .map(|i| self.category_index(person, i))
            .collect()
    }

    /// Restricts the matrix to the given persons, in the given order.
    pub fn select_persons(&self, persons: &[usize]) -> Result<Self> {
        let rows = persons.iter().map(|&p| self.row(p).to_vec()).collect();
        let ids = persons.iter().map(|&p| self.person_ids[p].clone()).collect();
        let weights = persons.iter().map(|&p| self.weights[p]).collect();
        let groups = self
            .groups
            .iter()
            .map(|g| GroupColumn {
                name: g.name.clone(),
                labels: persons.iter().map(|&p| g.labels[p].clone()).collect(),
            })
            .collect();
        Self::new(self.items.clone(), ids, rows, Some(weights), groups)
    }

    /// Restricts the matrix to the named items, in the given order.
    pub fn select_items(&self, ids: &[String]) -> Result<Self> {
        let positions = ids
            .iter()
            .map(|id| self.item_position(id).ok_or_else(|| Error::UnknownColumn(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        let items = positions.iter().map(|&i| self.items[i].clone()).collect();
        let rows = (0..self.n_persons())
            .map(|p| positions.iter().map(|&i| self.code(p, i)).collect())
            .collect();
        Self::new(
            items,
            self.person_ids.clone(),
            rows,
            Some(self.weights.clone()),
            self.groups.clone(),
        )
    }

    /// Observed-response counts per category for one item.
    pub fn category_counts(&self, item: usize) -> Vec<usize> {
        let mut counts = vec![0; self.items[item].categories.len()];
        for p in 0..self.n_persons() {
            if let Some(k) = self.category_index(p, item) {
                counts[k] += 1;
            }
        }
        counts
    }

    /// Writes `id`, the item columns, an optional weight column and the
    /// group columns. Missing responses and labels are blank cells.
    pub fn write_csv<W: std::io::Write>(&self, out: W, id_column: &str, weight_column: Option<&str>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![id_column.to_string()];
        header.extend(self.items.iter().map(|it| it.id.clone()));
        header.extend(weight_column.map(str::to_string));
        header.extend(self.groups.iter().map(|g| g.name.clone()));
        w.write_record(&header)?;
        for p in 0..self.n_persons() {
            let mut rec = vec![self.person_ids[p].clone()];
            rec.extend(self.row(p).iter().map(|c| c.map(|c| c.to_string()).unwrap_or_default()));
            if weight_column.is_some() {
                rec.push(self.weights[p].to_string());
            }
            rec.extend(self.groups.iter().map(|g| g.labels[p].clone().unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<responses>", e))?;
        Ok(())
    }
}

/// Recodes the item columns of `raw` with `scheme`.
///
/// Category lists come from the scheme targets, not from the data, so a
/// category nobody picked still has a slot.
pub fn apply_coding(raw: &RawTable, scheme: &CodingScheme) -> Result<ResponseMatrix> {
    scheme.validate()?;
    let codings = raw
        .item_ids
        .iter()
        .map(|id| {
            scheme.item(id).ok_or_else(|| Error::InvalidScheme {
                item: id.clone(),
                reason: "item has no entry in the coding scheme".into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let items = raw
        .item_ids
        .iter()
        .zip(&codings)
        .map(|(id, coding)| ItemLayout {
            id: id.clone(),
            categories: coding.categories(),
        })
        .collect();

    let rows = raw
        .codes
        .iter()
        .enumerate()
        .map(|(r, row)| {
            row.iter()
                .zip(&codings)
                .zip(&raw.item_ids)
                .map(|((cell, coding), id)| match cell {
                    None => Ok(None),
                    Some(code) => match coding.recode(*code) {
                        Some(Recoded::Category(c)) => Ok(Some(c)),
                        Some(Recoded::Missing) => Ok(None),
                        None => Err(Error::UnmappedCode {
                            item: id.clone(),
                            row: r + 1,
                            code: *code,
                        }),
                    },
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    ResponseMatrix::new(
        items,
        raw.person_ids.clone(),
        rows,
        raw.weights.clone(),
        raw.groups.clone(),
    )
}

/// Persons whose responses are missing on every one of `required_items`.
pub fn all_missing_persons(m: &ResponseMatrix, required_items: &[String]) -> Result<Vec<usize>> {
    let positions = required_items
        .iter()
        .map(|id| m.item_position(id).ok_or_else(|| Error::UnknownColumn(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..m.n_persons())
        .filter(|&p| positions.iter().all(|&i| m.code(p, i).is_none()))
        .collect())
}

/// Drops persons with no observed response on any required item. Partial
/// missingness is kept.
pub fn exclude_all_missing(m: &ResponseMatrix, required_items: &[String]) -> Result<ResponseMatrix> {
    let dropped: BTreeSet<usize> = all_missing_persons(m, required_items)?.into_iter().collect();
    if dropped.is_empty() {
        return Ok(m.clone());
    }
    let kept: Vec<usize> = (0..m.n_persons()).filter(|p| !dropped.contains(p)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult);
    }
    m.select_persons(&kept)
}
