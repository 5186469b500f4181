//! Job Description Language: a ClassAd-style list of `Attribute = value;`
//! statements, optionally wrapped in `[ ]`.
//!
//! Values are double-quoted strings, integers, `true`/`false`, `{ }` lists,
//! nested `[ ]` ads (collection nodes) or verbatim expressions, which are
//! kept unevaluated. Attribute names are case-insensitive; their original
//! spelling and order are preserved.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum JdlValue {
    Str(String),
    Int(i64),
    Bool(bool),
    List(Vec<JdlValue>),
    Ad(Attributes),
    Expr(String),
}

impl JdlValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            JdlValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            JdlValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Strings of a list value, or the single string of a scalar.
    pub fn strings(&self) -> Vec<&str> {
        match self {
            JdlValue::Str(s) => vec![s.as_str()],
            JdlValue::List(items) => items.iter().filter_map(JdlValue::as_str).collect(),
            _ => Vec::new(),
        }
    }

    /// Replaces `needle` in every string, recursing into lists.
    pub fn substitute(&self, needle: &str, with: &str) -> JdlValue {
        match self {
            JdlValue::Str(s) => JdlValue::Str(s.replace(needle, with)),
            JdlValue::List(items) => {
                JdlValue::List(items.iter().map(|v| v.substitute(needle, with)).collect())
            }
            other => other.clone(),
        }
    }
}

impl fmt::Display for JdlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JdlValue::Str(s) => {
                f.write_str("\"")?;
                for c in s.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\t' => f.write_str("\\t")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            JdlValue::Int(v) => write!(f, "{v}"),
            JdlValue::Bool(b) => write!(f, "{b}"),
            JdlValue::List(items) => {
                f.write_str("{")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("}")
            }
            JdlValue::Ad(attrs) => {
                f.write_str("[ ")?;
                for (name, value) in attrs.iter() {
                    write!(f, "{name} = {value}; ")?;
                }
                f.write_str("]")
            }
            JdlValue::Expr(raw) => f.write_str(raw),
        }
    }
}

/// Ordered attribute list with case-insensitive lookup.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Attributes(Vec<(String, JdlValue)>);

impl Attributes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&JdlValue> {
        self.0
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v)
    }

    pub fn get_str(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(JdlValue::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Sets `name`, keeping the position and spelling of an existing entry.
    pub fn set(&mut self, name: &str, value: JdlValue) {
        match self
            .0
            .iter_mut()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
        {
            Some(entry) => entry.1 = value,
            None => self.0.push((name.to_owned(), value)),
        }
    }

    pub fn remove(&mut self, name: &str) -> Option<JdlValue> {
        let index = self
            .0
            .iter()
            .position(|(n, _)| n.eq_ignore_ascii_case(name))?;
        Some(self.0.remove(index).1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &JdlValue)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v))
    }
}

impl FromIterator<(String, JdlValue)> for Attributes {
    fn from_iter<I: IntoIterator<Item = (String, JdlValue)>>(iter: I) -> Self {
        let mut attrs = Attributes::new();
        for (name, value) in iter {
            attrs.set(&name, value);
        }
        attrs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobKind {
    Normal,
    Parametric,
    Collection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParameterSpec {
    /// Values `start, start + step, ...` strictly below `bound`.
    Range {
        start: i64,
        step: i64,
        bound: i64,
    },
    Values(Vec<JdlValue>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobDescriptor {
    pub kind: JobKind,
    pub attributes: Attributes,
    /// Collection members, in declaration order.
    pub nodes: Vec<JobDescriptor>,
    pub parameters: Option<ParameterSpec>,
}

impl JobDescriptor {
    pub fn executable(&self) -> Option<&str> {
        self.attributes.get_str("Executable")
    }

    pub fn arguments(&self) -> Option<&str> {
        self.attributes.get_str("Arguments")
    }

    pub fn std_output(&self) -> Option<&str> {
        self.attributes.get_str("StdOutput")
    }

    pub fn std_error(&self) -> Option<&str> {
        self.attributes.get_str("StdError")
    }

    pub fn output_sandbox(&self) -> Vec<&str> {
        self.attributes
            .get("OutputSandbox")
            .map(JdlValue::strings)
            .unwrap_or_default()
    }

    pub fn input_sandbox(&self) -> Vec<&str> {
        self.attributes
            .get("InputSandbox")
            .map(JdlValue::strings)
            .unwrap_or_default()
    }
}

impl fmt::Display for JobDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[\n")?;
        for (name, value) in self.attributes.iter() {
            writeln!(f, "  {name} = {value};")?;
        }
        if self.kind == JobKind::Collection {
            f.write_str("  Nodes = {\n")?;
            for (i, node) in self.nodes.iter().enumerate() {
                let sep = if i + 1 < self.nodes.len() { "," } else { "" };
                let body: Attributes = node_attributes(node);
                writeln!(f, "    {}{sep}", JdlValue::Ad(body))?;
            }
            f.write_str("  };\n")?;
        }
        f.write_str("]\n")
    }
}

fn node_attributes(node: &JobDescriptor) -> Attributes {
    let mut attrs = node.attributes.clone();
    if node.kind == JobKind::Collection {
        let nodes = node
            .nodes
            .iter()
            .map(|n| JdlValue::Ad(node_attributes(n)))
            .collect();
        attrs.set("Nodes", JdlValue::List(nodes));
    }
    attrs
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JdlError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing mandatory attribute Executable")]
    MissingExecutable,
    #[error("parametric job without a Parameters specification")]
    MissingParameters,
    #[error("invalid descriptor: {0}")]
    Invalid(String),
}

/// Parses a descriptor and checks the per-kind mandatory attributes.
pub fn parse_jdl(text: &str) -> Result<JobDescriptor, JdlError> {
    let mut parser = Parser::new(text);
    parser.skip_trivia();
    if parser.at_end() {
        return Err(parser.error("empty descriptor"));
    }
    let attrs = if parser.peek() == Some('[') {
        parser.bump();
        let attrs = parser.statements(true)?;
        parser.expect(']')?;
        parser.skip_trivia();
        if !parser.at_end() {
            return Err(parser.error("unexpected text after closing ']'"));
        }
        attrs
    } else {
        parser.statements(false)?
    };
    build(attrs)
}

fn build(mut attributes: Attributes) -> Result<JobDescriptor, JdlError> {
    let type_attr = attributes.get_str("Type").map(str::to_ascii_lowercase);
    let job_type = attributes.get_str("JobType").map(str::to_ascii_lowercase);
    let kind = match (type_attr.as_deref(), job_type.as_deref()) {
        (Some("collection"), _) | (_, Some("collection")) => JobKind::Collection,
        (None | Some("job"), None | Some("normal")) => JobKind::Normal,
        (None | Some("job"), Some("parametric")) => JobKind::Parametric,
        (Some(other), _) if other != "job" => {
            return Err(JdlError::Invalid(format!("unsupported Type \"{other}\"")))
        }
        (_, Some(other)) => {
            return Err(JdlError::Invalid(format!(
                "unsupported JobType \"{other}\""
            )))
        }
        _ => unreachable!("all Type/JobType combinations covered"),
    };

    let mut nodes = Vec::new();
    let mut parameters = None;
    match kind {
        JobKind::Normal => require_executable(&attributes)?,
        JobKind::Parametric => {
            require_executable(&attributes)?;
            let int = |name: &str, default: i64| match attributes.get(name) {
                None => Ok(default),
                Some(JdlValue::Int(v)) => Ok(*v),
                Some(other) => Err(JdlError::Invalid(format!(
                    "{name} must be an integer, got {other}"
                ))),
            };
            parameters = Some(match attributes.get("Parameters") {
                None => return Err(JdlError::MissingParameters),
                Some(JdlValue::Int(bound)) => ParameterSpec::Range {
                    start: int("ParameterStart", 0)?,
                    step: int("ParameterStep", 1)?,
                    bound: *bound,
                },
                Some(JdlValue::List(values)) => ParameterSpec::Values(values.clone()),
                Some(other) => {
                    return Err(JdlError::Invalid(format!(
                        "Parameters must be an integer or a list, got {other}"
                    )))
                }
            });
        }
        JobKind::Collection => {
            if attributes.contains("Executable") {
                return Err(JdlError::Invalid(
                    "a collection cannot have an Executable".into(),
                ));
            }
            match attributes.remove("Nodes") {
                Some(JdlValue::List(items)) => {
                    for item in items {
                        match item {
                            JdlValue::Ad(node) => nodes.push(build(node)?),
                            other => {
                                return Err(JdlError::Invalid(format!(
                                    "collection node must be an ad, got {other}"
                                )))
                            }
                        }
                    }
                }
                Some(other) => {
                    return Err(JdlError::Invalid(format!(
                        "Nodes must be a list of ads, got {other}"
                    )))
                }
                None => return Err(JdlError::Invalid("collection without Nodes".into())),
            }
        }
    }
    Ok(JobDescriptor {
        kind,
        attributes,
        nodes,
        parameters,
    })
}

fn require_executable(attrs: &Attributes) -> Result<(), JdlError> {
    match attrs.get("Executable") {
        Some(JdlValue::Str(s)) if !s.is_empty() => Ok(()),
        Some(JdlValue::Str(_)) | None => Err(JdlError::MissingExecutable),
        Some(other) => Err(JdlError::Invalid(format!(
            "Executable must be a string, got {other}"
        ))),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Context {
    Statement { nested: bool },
    List,
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    column: usize,
}

impl Parser {
    fn new(text: &str) -> Self {
        Parser {
            chars: text.chars().collect(),
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, offset: usize) -> Option<char> {
        self.chars.get(self.pos + offset).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn mark(&self) -> (usize, usize, usize) {
        (self.pos, self.line, self.column)
    }

    fn reset(&mut self, mark: (usize, usize, usize)) {
        (self.pos, self.line, self.column) = mark;
    }

    fn error(&self, message: impl Into<String>) -> JdlError {
        JdlError::Syntax {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn error_at(mark: (usize, usize, usize), message: impl Into<String>) -> JdlError {
        JdlError::Syntax {
            line: mark.1,
            column: mark.2,
            message: message.into(),
        }
    }

    fn at_comment(&self) -> bool {
        self.peek() == Some('#')
            || (self.peek() == Some('/') && matches!(self.peek_at(1), Some('/' | '*')))
    }

    fn skip_comment(&mut self) {
        if self.peek() == Some('/') && self.peek_at(1) == Some('*') {
            self.bump();
            self.bump();
            while !self.at_end() && !(self.peek() == Some('*') && self.peek_at(1) == Some('/')) {
                self.bump();
            }
            self.bump();
            self.bump();
        } else {
            while let Some(c) = self.peek() {
                if c == '\n' {
                    break;
                }
                self.bump();
            }
        }
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some(_) if self.at_comment() => self.skip_comment(),
                _ => break,
            }
        }
    }

    fn expect(&mut self, want: char) -> Result<(), JdlError> {
        self.skip_trivia();
        match self.peek() {
            Some(c) if c == want => {
                self.bump();
                Ok(())
            }
            Some(c) => Err(self.error(format!("expected '{want}', found '{c}'"))),
            None => Err(self.error(format!("expected '{want}', found end of input"))),
        }
    }

    fn statements(&mut self, nested: bool) -> Result<Attributes, JdlError> {
        let mut attrs = Attributes::new();
        loop {
            self.skip_trivia();
            match self.peek() {
                None => break,
                Some(']') if nested => break,
                _ => {}
            }
            let name_mark = self.mark();
            let name = self.identifier()?;
            if attrs.contains(&name) {
                return Err(Self::error_at(
                    name_mark,
                    format!("duplicate attribute {name}"),
                ));
            }
            self.expect('=')?;
            let value = self.value(Context::Statement { nested })?;
            attrs.set(&name, value);
            self.skip_trivia();
            match self.peek() {
                Some(';') => {
                    self.bump();
                }
                None => break,
                Some(']') if nested => break,
                Some(c) => {
                    return Err(
                        self.error(format!("expected ';' after value of {name}, found '{c}'"))
                    )
                }
            }
        }
        Ok(attrs)
    }

    fn identifier(&mut self) -> Result<String, JdlError> {
        let mut name = String::new();
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            Some(c) => return Err(self.error(format!("expected attribute name, found '{c}'"))),
            None => return Err(self.error("expected attribute name")),
        }
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                name.push(c);
                self.bump();
            } else {
                break;
            }
        }
        Ok(name)
    }

    fn at_terminator(&self, ctx: Context) -> bool {
        matches!(
            (self.peek(), ctx),
            (None | Some(';'), Context::Statement { .. })
                | (Some(']'), Context::Statement { nested: true })
                | (Some(',' | '}'), Context::List)
        )
    }

    fn value(&mut self, ctx: Context) -> Result<JdlValue, JdlError> {
        self.skip_trivia();
        let start = self.mark();
        let structured = match self.peek() {
            Some('"') => Some(self.string().map(JdlValue::Str)),
            Some('{') => Some(self.list()),
            Some('[') => Some(self.ad()),
            _ => None,
        };
        if let Some(result) = structured {
            let value = result?;
            self.skip_trivia();
            if self.at_terminator(ctx) {
                return Ok(value);
            }
            if matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_' || c == '"') {
                return Err(self.error("expected ';' after value"));
            }
            // Something like `"a" + x`: keep the whole text as an expression.
            self.reset(start);
        }
        let raw = self.raw_expression(ctx)?;
        if raw.is_empty() {
            return Err(Self::error_at(start, "empty value"));
        }
        if let Ok(v) = raw.parse::<i64>() {
            return Ok(JdlValue::Int(v));
        }
        if raw.eq_ignore_ascii_case("true") {
            return Ok(JdlValue::Bool(true));
        }
        if raw.eq_ignore_ascii_case("false") {
            return Ok(JdlValue::Bool(false));
        }
        Ok(JdlValue::Expr(raw))
    }

    fn string(&mut self) -> Result<String, JdlError> {
        let start = self.mark();
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(Self::error_at(start, "unterminated string")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c) => out.push(c),
                    None => return Err(Self::error_at(start, "unterminated string")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn list(&mut self) -> Result<JdlValue, JdlError> {
        self.bump();
        let mut items = Vec::new();
        self.skip_trivia();
        if self.peek() == Some('}') {
            self.bump();
            return Ok(JdlValue::List(items));
        }
        loop {
            items.push(self.value(Context::List)?);
            self.skip_trivia();
            match self.bump() {
                Some(',') => continue,
                Some('}') => return Ok(JdlValue::List(items)),
                _ => return Err(self.error("expected ',' or '}' in list")),
            }
        }
    }

    fn ad(&mut self) -> Result<JdlValue, JdlError> {
        self.bump();
        let attrs = self.statements(true)?;
        self.expect(']')?;
        Ok(JdlValue::Ad(attrs))
    }

    /// Text up to the next terminator at nesting depth zero, outside
    /// strings, with comments removed.
    fn raw_expression(&mut self, ctx: Context) -> Result<String, JdlError> {
        let mut raw = String::new();
        let mut depth = 0usize;
        loop {
            if depth == 0 && self.at_terminator(ctx) {
                break;
            }
            if self.at_comment() {
                self.skip_comment();
                raw.push(' ');
                continue;
            }
            let Some(c) = self.peek() else {
                return Err(self.error("unexpected end of input in expression"));
            };
            match c {
                '"' => {
                    let s = self.string()?;
                    raw.push_str(&JdlValue::Str(s).to_string());
                    continue;
                }
                '(' | '[' | '{' => depth += 1,
                ')' | ']' | '}' => {
                    if depth == 0 {
                        return Err(self.error(format!("unbalanced '{c}'")));
                    }
                    depth -= 1;
                }
                _ => {}
            }
            raw.push(c);
            self.bump();
        }
        Ok(raw.split_whitespace().collect::<Vec<_>>().join(" "))
    }
}
