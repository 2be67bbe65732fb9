//! Parameter files made of nested `subsection <name>` ... `end` blocks and
//! `set <key> = <value>` lines. `#` starts a comment. Keys are
//! case-sensitive and may contain spaces.
//!
//! ```
//! use intergrid::prm::parse_prm;
//! let tree = parse_prm("subsection Restart\n  set Restart timestep index = 1000\nend\n").unwrap();
//! assert_eq!(tree.get_int(&["Restart", "Restart timestep index"]).unwrap(), 1000);
//! ```

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PrmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("parameter '{path}' not found")]
    Lookup { path: String },
    #[error("parameter '{path}': expected {expected}, got '{raw}'")]
    Type {
        path: String,
        expected: &'static str,
        raw: String,
    },
}

pub type Result<T, E = PrmError> = std::result::Result<T, E>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamTree {
    entries: IndexMap<String, String>,
    subsections: IndexMap<String, ParamTree>,
}

fn join(path: &[&str]) -> String {
    path.join(".")
}

impl ParamTree {
    pub fn new() -> Self {
        ParamTree::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.subsections.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn subsections(&self) -> impl Iterator<Item = (&str, &ParamTree)> {
        self.subsections.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn subsection(&self, name: &str) -> Option<&ParamTree> {
        self.subsections.get(name)
    }

    /// Subsection `name`, created empty if missing.
    pub fn subsection_mut(&mut self, name: &str) -> &mut ParamTree {
        self.subsections.entry(name.to_string()).or_default()
    }

    /// Sets `key` in the subsection reached by `path`, creating sections as
    /// needed; returns the previous value.
    pub fn set(&mut self, path: &[&str], key: &str, value: &str) -> Option<String> {
        let mut node = self;
        for name in path {
            node = node.subsections.entry(name.to_string()).or_default();
        }
        node.entries.insert(key.to_string(), value.to_string())
    }

    /// Raw value at `path`, whose last element is the key.
    pub fn lookup(&self, path: &[&str]) -> Option<&str> {
        let (key, sections) = path.split_last()?;
        let mut node = self;
        for name in sections {
            node = node.subsections.get(*name)?;
        }
        node.entries.get(*key).map(String::as_str)
    }

    pub fn contains(&self, path: &[&str]) -> bool {
        self.lookup(path).is_some()
    }

    pub fn get_string(&self, path: &[&str]) -> Result<&str> {
        self.lookup(path).ok_or_else(|| PrmError::Lookup { path: join(path) })
    }

    fn get_parsed<T>(&self, path: &[&str], expected: &'static str, parse: impl Fn(&str) -> Option<T>) -> Result<T> {
        let raw = self.get_string(path)?;
        parse(raw).ok_or_else(|| PrmError::Type {
            path: join(path),
            expected,
            raw: raw.to_string(),
        })
    }

    pub fn get_bool(&self, path: &[&str]) -> Result<bool> {
        self.get_parsed(path, "true or false", |s| match s {
            "true" => Some(true),
            "false" => Some(false),
            _ => None,
        })
    }

    pub fn get_int(&self, path: &[&str]) -> Result<i64> {
        self.get_parsed(path, "an integer", |s| i64::from_str(s).ok())
    }

    pub fn get_real(&self, path: &[&str]) -> Result<f64> {
        self.get_parsed(path, "a finite real number", |s| {
            f64::from_str(s).ok().filter(|v| v.is_finite())
        })
    }

    /// Like the plain getters, but a missing key yields `default`. A present
    /// key with a malformed value is still an error.
    pub fn get_string_or<'a>(&'a self, path: &[&str], default: &'a str) -> &'a str {
        self.lookup(path).unwrap_or(default)
    }

    pub fn get_bool_or(&self, path: &[&str], default: bool) -> Result<bool> {
        if self.contains(path) {
            self.get_bool(path)
        } else {
            Ok(default)
        }
    }

    pub fn get_int_or(&self, path: &[&str], default: i64) -> Result<i64> {
        if self.contains(path) {
            self.get_int(path)
        } else {
            Ok(default)
        }
    }

    pub fn get_real_or(&self, path: &[&str], default: f64) -> Result<f64> {
        if self.contains(path) {
            self.get_real(path)
        } else {
            Ok(default)
        }
    }

    fn write_indented(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        for (k, v) in &self.entries {
            if v.is_empty() {
                writeln!(f, "{pad}set {k} =")?;
            } else {
                writeln!(f, "{pad}set {k} = {v}")?;
            }
        }
        for (name, sub) in &self.subsections {
            writeln!(f, "{pad}subsection {name}")?;
            sub.write_indented(f, depth + 1)?;
            writeln!(f, "{pad}end")?;
        }
        Ok(())
    }
}

/// Canonical form: entries before subsections, two-space indentation.
impl fmt::Display for ParamTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_indented(f, 0)
    }
}

impl FromStr for ParamTree {
    type Err = PrmError;
    fn from_str(s: &str) -> Result<Self> {
        parse_prm(s)
    }
}

fn keyword<'a>(line: &'a str, word: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(word)?;
    if rest.is_empty() {
        Some(rest)
    } else if rest.starts_with(char::is_whitespace) {
        Some(rest.trim())
    } else {
        None
    }
}

fn node_at<'a>(root: &'a mut ParamTree, path: &[(String, usize)]) -> &'a mut ParamTree {
    let mut node = root;
    for (name, _) in path {
        node = node.subsections.entry(name.clone()).or_default();
    }
    node
}

pub fn parse_prm(text: &str) -> Result<ParamTree> {
    let mut root = ParamTree::new();
    // Open sections with the line that opened them. Re-opening a section
    // continues it in place.
    let mut open: Vec<(String, usize)> = Vec::new();
    let err = |line: usize, message: String| PrmError::Parse { line, message };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = keyword(line, "set") {
            let (key, value) = rest
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected 'set <key> = <value>', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(err(line_no, "empty key".into()));
            }
            let node = node_at(&mut root, &open);
            if node.entries.contains_key(key) {
                return Err(err(line_no, format!("duplicate key '{key}'")));
            }
            node.entries.insert(key.to_string(), value.to_string());
        } else if let Some(name) = keyword(line, "subsection") {
            if name.is_empty() {
                return Err(err(line_no, "subsection without a name".into()));
            }
            open.push((name.to_string(), line_no));
            node_at(&mut root, &open);
        } else if line == "end" {
            if open.pop().is_none() {
                return Err(err(line_no, "'end' without an open subsection".into()));
            }
        } else {
            return Err(err(line_no, format!("unrecognized line '{line}'")));
        }
    }
    if let Some((name, opened)) = open.pop() {
        return Err(err(
            text.lines().count().max(1),
            format!("end of file inside subsection '{name}' opened on line {opened}"),
        ));
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_comments() {
        assert!(parse_prm("").unwrap().is_empty());
        assert!(parse_prm("# only a comment\n\n   \n").unwrap().is_empty());
        let t = parse_prm("set a = 1 # trailing\n").unwrap();
        assert_eq!(t.get_int(&["a"]).unwrap(), 1);
    }

    #[test]
    fn keys_with_spaces_and_values_with_equals() {
        let t = parse_prm("set Output file name = a=b.vtk\nset Empty =\n").unwrap();
        assert_eq!(t.get_string(&["Output file name"]).unwrap(), "a=b.vtk");
        assert_eq!(t.get_string(&["Empty"]).unwrap(), "");
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(
            parse_prm("subsection A\n  set x = 1\n").unwrap_err(),
            PrmError::Parse {
                line: 2,
                message: "end of file inside subsection 'A' opened on line 1".into()
            }
        );
        assert!(matches!(parse_prm("set x = 1\nend\n"), Err(PrmError::Parse { line: 2, .. })));
        assert!(matches!(
            parse_prm("set x = 1\nset x = 2\n"),
            Err(PrmError::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_prm("sett x = 1\n"), Err(PrmError::Parse { line: 1, .. })));
        assert!(matches!(parse_prm("set x 1\n"), Err(PrmError::Parse { line: 1, .. })));
        assert!(matches!(parse_prm("set  = 1\n"), Err(PrmError::Parse { line: 1, .. })));
    }

    #[test]
    fn reopened_subsection_merges() {
        let t = parse_prm("subsection A\nset x = 1\nend\nsubsection A\nset y = 2\nend\n").unwrap();
        assert_eq!(t.get_int(&["A", "x"]).unwrap(), 1);
        assert_eq!(t.get_int(&["A", "y"]).unwrap(), 2);
        let t = parse_prm("subsection A\nend\nsubsection B\nend\nsubsection A\nset x = 1\nend\n").unwrap();
        let names: Vec<&str> = t.subsections().map(|s| s.0).collect();
        assert_eq!(names, ["A", "B"]);
        let dup = parse_prm("subsection A\nset x = 1\nend\nsubsection A\nset x = 2\nend\n");
        assert!(matches!(dup, Err(PrmError::Parse { line: 5, .. })));
    }

    #[test]
    fn typed_getters() {
        let t = parse_prm(
            "subsection S\n set b = false\n set i = -42\n set r = 2.5e-3\n set s = restart\n set inf = inf\n set f = 1.5\nend\n",
        )
        .unwrap();
        assert!(!t.get_bool(&["S", "b"]).unwrap());
        assert_eq!(t.get_int(&["S", "i"]).unwrap(), -42);
        assert_eq!(t.get_real(&["S", "r"]).unwrap(), 2.5e-3);
        assert_eq!(t.get_real(&["S", "i"]).unwrap(), -42.0);
        assert_eq!(
            t.get_int(&["S", "s"]).unwrap_err(),
            PrmError::Type {
                path: "S.s".into(),
                expected: "an integer",
                raw: "restart".into()
            }
        );
        assert!(t.get_int(&["S", "f"]).is_err());
        assert!(t.get_real(&["S", "inf"]).is_err());
        assert!(t.get_bool(&["S", "i"]).is_err());
        assert_eq!(
            t.get_string(&["S", "missing"]).unwrap_err(),
            PrmError::Lookup { path: "S.missing".into() }
        );
        assert!(t.get_string(&["T", "b"]).is_err());
        assert_eq!(t.get_int_or(&["S", "nope"], 7).unwrap(), 7);
        assert!(t.get_int_or(&["S", "s"], 7).is_err());
    }

    #[test]
    fn keys_are_case_sensitive() {
        let t = parse_prm("set Enable = true\nset enable = false\n").unwrap();
        assert!(t.get_bool(&["Enable"]).unwrap());
        assert!(!t.get_bool(&["enable"]).unwrap());
    }

    #[test]
    fn canonical_form_round_trips() {
        let mut t = ParamTree::new();
        t.set(&[], "top", "1");
        t.set(&["A", "B"], "deep key", "x y");
        t.set(&["A"], "k", "");
        let text = t.to_string();
        assert_eq!(text, "set top = 1\nsubsection A\n  set k =\n  subsection B\n    set deep key = x y\n  end\nend\n");
        assert_eq!(parse_prm(&text).unwrap(), t);
    }
}
