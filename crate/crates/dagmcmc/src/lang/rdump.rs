//! Reader for R dump style data files:
//!
//! ```text
//! list(N = 21, r = c(10, 23, NA), m = structure(.Data = c(1, 2, 3, 4), .Dim = c(2, 2)))
//! ```
//!
//! Scalars, flat vectors and `structure(.Data, .Dim)` arrays are supported.
//! Arrays are stored column major, the R convention. `NA` marks a missing
//! value; a stochastic node bound to `NA` stays unobserved.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum DataError {
    #[error("data parse error at line {line}, column {col}: {message}")]
    Parse { message: String, line: u32, col: u32 },
    #[error("`{0}` appears more than once in the data")]
    Duplicate(String),
    #[error("`{name}`: .Data has {data_len} values but .Dim implies {expected}")]
    DimMismatch { name: String, data_len: usize, expected: usize },
}

/// Why an element lookup failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexError {
    RankMismatch { expected: usize, got: usize },
    OutOfBounds { axis: usize, index: i64, extent: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataValue {
    Scalar(Option<f64>),
    /// Column-major array; a flat vector has a one-element `dim`.
    Array { data: Vec<Option<f64>>, dim: Vec<usize> },
}

impl DataValue {
    pub fn rank(&self) -> usize {
        match self {
            DataValue::Scalar(_) => 0,
            DataValue::Array { dim, .. } => dim.len(),
        }
    }

    /// Total number of values (1 for a scalar).
    pub fn len(&self) -> usize {
        match self {
            DataValue::Scalar(_) => 1,
            DataValue::Array { data, .. } => data.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Looks up an element with 1-based indices. `Ok(None)` means the value
    /// is present but `NA`.
    pub fn element(&self, indices: &[i64]) -> Result<Option<f64>, IndexError> {
        match self {
            DataValue::Scalar(v) => {
                if indices.is_empty() {
                    Ok(*v)
                } else {
                    Err(IndexError::RankMismatch { expected: 0, got: indices.len() })
                }
            }
            DataValue::Array { data, dim } => {
                if indices.len() != dim.len() {
                    return Err(IndexError::RankMismatch { expected: dim.len(), got: indices.len() });
                }
                let mut offset = 0usize;
                let mut stride = 1usize;
                for (axis, (&ix, &extent)) in indices.iter().zip(dim).enumerate() {
                    if ix < 1 || ix > extent as i64 {
                        return Err(IndexError::OutOfBounds { axis: axis + 1, index: ix, extent });
                    }
                    offset += (ix as usize - 1) * stride;
                    stride *= extent;
                }
                Ok(data[offset])
            }
        }
    }
}

/// Named data values from one or more data files.
#[derive(Debug, Clone, Default)]
pub struct DataEnvironment {
    entries: BTreeMap<String, DataValue>,
}

impl DataEnvironment {
    pub fn new() -> DataEnvironment {
        DataEnvironment::default()
    }

    pub fn get(&self, name: &str) -> Option<&DataValue> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, name: String, value: DataValue) -> Result<(), DataError> {
        match self.entries.entry(name) {
            Entry::Vacant(slot) => {
                slot.insert(value);
                Ok(())
            }
            Entry::Occupied(slot) => Err(DataError::Duplicate(slot.key().clone())),
        }
    }

    /// Folds another environment in; a name defined in both is an error.
    pub fn merge(&mut self, other: DataEnvironment) -> Result<(), DataError> {
        for (name, value) in other.entries {
            self.insert(name, value)?;
        }
        Ok(())
    }

    /// Flattens every entry into `(element name, value)` pairs, skipping `NA`
    /// slots. Array elements are named `base[i]` / `base[i,j]` with 1-based
    /// indices enumerated in column-major order, matching the names the
    /// compiler gives graph nodes.
    pub fn named_scalars(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for (name, value) in &self.entries {
            match value {
                DataValue::Scalar(Some(v)) => out.push((name.clone(), *v)),
                DataValue::Scalar(None) => {}
                DataValue::Array { data, dim } => {
                    let mut index: Vec<usize> = vec![1; dim.len()];
                    for slot in data {
                        if let Some(v) = slot {
                            let list: Vec<String> =
                                index.iter().map(usize::to_string).collect();
                            out.push((format!("{}[{}]", name, list.join(",")), *v));
                        }
                        for (pos, extent) in index.iter_mut().zip(dim) {
                            if *pos < *extent {
                                *pos += 1;
                                break;
                            }
                            *pos = 1;
                        }
                    }
                }
            }
        }
        out
    }
}

struct Scan<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Scan<'a> {
    fn new(src: &'a str) -> Scan<'a> {
        Scan { src: src.as_bytes(), pos: 0, line: 1, col: 1 }
    }

    fn error(&self, message: String) -> DataError {
        DataError::Parse { message, line: self.line, col: self.col }
    }

    fn peek(&self) -> Option<char> {
        self.src.get(self.pos).map(|&b| b as char)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() {
                self.bump();
            } else if c == '#' {
                while self.peek().is_some_and(|c| c != '\n') {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, c: char) -> Result<(), DataError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            let found = self.peek().map_or("end of input".to_string(), |f| format!("`{f}`"));
            Err(self.error(format!("expected `{c}`, found {found}")))
        }
    }

    fn at(&mut self, c: char) -> bool {
        self.skip_ws();
        self.peek() == Some(c)
    }

    /// Name of a list entry. Leading dots allow `.Data` and `.Dim`.
    fn name(&mut self) -> Result<String, DataError> {
        self.skip_ws();
        let quote = matches!(self.peek(), Some('"') | Some('\''));
        let quote_char = self.peek();
        if quote {
            self.bump();
        }
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_')
        {
            self.bump();
        }
        if self.pos == start {
            let found = self.peek().map_or("end of input".to_string(), |f| format!("`{f}`"));
            return Err(self.error(format!("expected a name, found {found}")));
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string();
        if quote {
            if self.peek() != quote_char {
                return Err(self.error(format!("unterminated quoted name `{name}`")));
            }
            self.bump();
        }
        Ok(name)
    }

    /// A number or `NA`.
    fn scalar(&mut self) -> Result<Option<f64>, DataError> {
        self.skip_ws();
        if self.peek().is_some_and(|c| c == 'N') {
            let rest = &self.src[self.pos..];
            if rest.starts_with(b"NA") {
                self.bump();
                self.bump();
                return Ok(None);
            }
            return Err(self.error("expected a number or NA".into()));
        }
        let start = self.pos;
        if matches!(self.peek(), Some('-') | Some('+')) {
            self.bump();
        }
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        if self.peek() == Some('.') {
            self.bump();
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            self.bump();
            if matches!(self.peek(), Some('-') | Some('+')) {
                self.bump();
            }
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(format!("expected a number or NA, found `{text}`")))?;
        Ok(Some(value))
    }

    /// `c(a, b, ...)`
    fn vector(&mut self) -> Result<Vec<Option<f64>>, DataError> {
        self.skip_ws();
        let kw = self.name()?;
        if kw != "c" {
            return Err(self.error(format!("expected `c(...)`, found `{kw}`")));
        }
        self.eat('(')?;
        let mut items = Vec::new();
        if !self.at(')') {
            loop {
                items.push(self.scalar()?);
                if self.at(',') {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.eat(')')?;
        Ok(items)
    }

    fn value(&mut self, entry: &str) -> Result<DataValue, DataError> {
        self.skip_ws();
        match self.peek() {
            Some('c') => Ok(DataValue::Array {
                dim: Vec::new(), // filled below
                data: self.vector()?,
            }
            .with_flat_dim()),
            Some('s') => {
                let kw = self.name()?;
                if kw != "structure" {
                    return Err(self.error(format!("expected `structure(...)`, found `{kw}`")));
                }
                self.eat('(')?;
                let mut data: Option<Vec<Option<f64>>> = None;
                let mut dim: Option<Vec<Option<f64>>> = None;
                loop {
                    let field = self.name()?;
                    self.eat('=')?;
                    match field.as_str() {
                        ".Data" => data = Some(self.vector()?),
                        ".Dim" => dim = Some(self.vector()?),
                        other => {
                            return Err(self.error(format!(
                                "unknown structure field `{other}` (expected .Data or .Dim)"
                            )))
                        }
                    }
                    if self.at(',') {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.eat(')')?;
                let data = data.ok_or_else(|| self.error(format!("`{entry}`: structure without .Data")))?;
                let dim = dim.ok_or_else(|| self.error(format!("`{entry}`: structure without .Dim")))?;
                let mut extents = Vec::with_capacity(dim.len());
                for d in dim {
                    match d {
                        Some(v) if v > 0.0 && v.fract() == 0.0 => extents.push(v as usize),
                        _ => {
                            return Err(self.error(format!(
                                "`{entry}`: .Dim entries must be positive integers"
                            )))
                        }
                    }
                }
                let expected: usize = extents.iter().product();
                if expected != data.len() {
                    return Err(DataError::DimMismatch {
                        name: entry.to_string(),
                        data_len: data.len(),
                        expected,
                    });
                }
                Ok(DataValue::Array { data, dim: extents })
            }
            _ => Ok(DataValue::Scalar(self.scalar()?)),
        }
    }
}

impl DataValue {
    fn with_flat_dim(self) -> DataValue {
        match self {
            DataValue::Array { data, .. } => {
                let n = data.len();
                DataValue::Array { data, dim: vec![n] }
            }
            other => other,
        }
    }
}

/// Parses one `list(...)` data file.
pub fn parse_data(src: &str) -> Result<DataEnvironment, DataError> {
    let mut sc = Scan::new(src);
    sc.skip_ws();
    let kw = sc.name()?;
    if kw != "list" {
        return Err(sc.error(format!("data files start with `list(`, found `{kw}`")));
    }
    sc.eat('(')?;
    let mut env = DataEnvironment::new();
    if !sc.at(')') {
        loop {
            let name = sc.name()?;
            sc.eat('=')?;
            let value = sc.value(&name)?;
            env.insert(name, value)?;
            if sc.at(',') {
                sc.bump();
            } else {
                break;
            }
        }
    }
    sc.eat(')')?;
    sc.skip_ws();
    if sc.peek().is_some() {
        return Err(sc.error("unexpected trailing input after the data list".into()));
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scalars_vectors_and_na() {
        let env = parse_data("list(N = 21, x = c(1.5, -2, NA, 4e2), flag = NA)").unwrap();
        assert_eq!(env.get("N"), Some(&DataValue::Scalar(Some(21.0))));
        let x = env.get("x").unwrap();
        assert_eq!(x.rank(), 1);
        assert_eq!(x.element(&[1]), Ok(Some(1.5)));
        assert_eq!(x.element(&[2]), Ok(Some(-2.0)));
        assert_eq!(x.element(&[3]), Ok(None));
        assert_eq!(x.element(&[4]), Ok(Some(400.0)));
        assert_eq!(env.get("flag"), Some(&DataValue::Scalar(None)));
    }

    #[test]
    fn arrays_are_column_major() {
        // 2 x 3 matrix laid out by columns: m[i, j] = data[(j-1)*2 + (i-1)]
        let env =
            parse_data("list(m = structure(.Data = c(1, 2, 3, 4, 5, 6), .Dim = c(2, 3)))").unwrap();
        let m = env.get("m").unwrap();
        assert_eq!(m.element(&[1, 1]), Ok(Some(1.0)));
        assert_eq!(m.element(&[2, 1]), Ok(Some(2.0)));
        assert_eq!(m.element(&[1, 2]), Ok(Some(3.0)));
        assert_eq!(m.element(&[2, 3]), Ok(Some(6.0)));
    }

    #[test]
    fn named_scalars_use_canonical_element_names() {
        let env = parse_data(
            "list(tau = 2.5, v = c(7, NA, 9), \
             m = structure(.Data = c(1, 2, 3, 4), .Dim = c(2, 2)))",
        )
        .unwrap();
        assert_eq!(
            env.named_scalars(),
            vec![
                ("m[1,1]".to_string(), 1.0),
                ("m[2,1]".to_string(), 2.0),
                ("m[1,2]".to_string(), 3.0),
                ("m[2,2]".to_string(), 4.0),
                ("tau".to_string(), 2.5),
                ("v[1]".to_string(), 7.0),
                ("v[3]".to_string(), 9.0),
            ]
        );
    }

    #[test]
    fn structure_accepts_swapped_field_order() {
        let env =
            parse_data("list(m = structure(.Dim = c(2, 2), .Data = c(1, 2, 3, 4)))").unwrap();
        assert_eq!(env.get("m").unwrap().element(&[2, 2]), Ok(Some(4.0)));
    }

    #[test]
    fn index_errors_name_the_axis() {
        let env = parse_data("list(m = structure(.Data = c(1, 2), .Dim = c(2, 1)))").unwrap();
        let m = env.get("m").unwrap();
        assert_eq!(
            m.element(&[3, 1]),
            Err(IndexError::OutOfBounds { axis: 1, index: 3, extent: 2 })
        );
        assert_eq!(m.element(&[1]), Err(IndexError::RankMismatch { expected: 2, got: 1 }));
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let err =
            parse_data("list(m = structure(.Data = c(1, 2, 3), .Dim = c(2, 2)))").unwrap_err();
        assert!(matches!(err, DataError::DimMismatch { .. }));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        assert!(matches!(
            parse_data("list(a = 1, a = 2)"),
            Err(DataError::Duplicate(_))
        ));
    }

    #[test]
    fn merge_rejects_overlap() {
        let mut a = parse_data("list(x = 1)").unwrap();
        let b = parse_data("list(x = 2)").unwrap();
        assert!(matches!(a.merge(b), Err(DataError::Duplicate(_))));
        let c = parse_data("list(y = 3)").unwrap();
        let mut a2 = parse_data("list(x = 1)").unwrap();
        a2.merge(c).unwrap();
        assert_eq!(a2.len(), 2);
    }

    #[test]
    fn errors_carry_positions() {
        let err = parse_data("list(a = )").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 1"), "{text}");
    }
}
