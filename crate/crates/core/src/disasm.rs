//! Line-oriented Dalvik-style disassembly (`.dsm`) parsing.
//!
//! A file holds exactly one class:
//!
//! ```text
//! .class com.example.Foo
//! .super android.app.Activity
//! .field private adUrl Ljava/lang/String;
//! .method public load ()V
//!     invoke android.net.ConnectivityManager.getActiveNetworkInfo() v0
//!     move-result-object v1
//! .end method
//! .end class
//! ```
//!
//! Lines starting with `#` and blank lines are ignored anywhere. Register
//! operands are kept verbatim; only invocations are interpreted.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message} (expected {expected})")]
    Syntax {
        line: usize,
        message: String,
        expected: &'static str,
    },
    #[error("line {line}: duplicate field `{name} {descriptor}`")]
    DuplicateField {
        line: usize,
        name: String,
        descriptor: String,
    },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. } | ParseError::DuplicateField { line, .. } => *line,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid API signature {0:?}")]
pub struct InvalidSignature(pub String);

/// A framework method reference, `<dotted.Class>.<method>(<params>)`.
///
/// The class part has at least two segments. Whitespace inside the parameter
/// list is dropped so that equal references compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ApiSignature(String);

impl ApiSignature {
    pub fn parse(text: &str) -> Result<Self, InvalidSignature> {
        let bad = || InvalidSignature(text.to_string());
        let open = text.find('(').ok_or_else(bad)?;
        let (path, params) = text.split_at(open);
        if !params.ends_with(')') || params[1..params.len() - 1].contains(['(', ')']) {
            return Err(bad());
        }
        let segments: Vec<&str> = path.split('.').collect();
        if segments.len() < 3 || !segments.iter().all(|s| is_java_ident(s)) {
            return Err(bad());
        }
        let params: String = params.chars().filter(|c| !c.is_whitespace()).collect();
        Ok(ApiSignature(format!("{path}{params}")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Dotted declaring class, e.g. `android.net.ConnectivityManager`.
    pub fn class_name(&self) -> &str {
        let path = &self.0[..self.0.find('(').unwrap()];
        &path[..path.rfind('.').unwrap()]
    }

    pub fn method_name(&self) -> &str {
        let path = &self.0[..self.0.find('(').unwrap()];
        &path[path.rfind('.').unwrap() + 1..]
    }

    /// `Class.method` without the parameter list.
    pub fn member_path(&self) -> &str {
        &self.0[..self.0.find('(').unwrap()]
    }

    pub fn params(&self) -> &str {
        let open = self.0.find('(').unwrap();
        &self.0[open + 1..self.0.len() - 1]
    }
}

impl fmt::Display for ApiSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ApiSignature {
    type Err = InvalidSignature;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ApiSignature::parse(s)
    }
}

impl TryFrom<String> for ApiSignature {
    type Error = InvalidSignature;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        ApiSignature::parse(&s)
    }
}

impl From<ApiSignature> for String {
    fn from(s: ApiSignature) -> String {
        s.0
    }
}

fn is_java_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' || c == '$' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
}

fn is_dotted_name(s: &str) -> bool {
    !s.is_empty() && s.split('.').all(is_java_ident)
}

/// Whether `token` is a virtual register (`v12`) or parameter register (`p0`).
pub fn is_register(token: &str) -> bool {
    let mut chars = token.chars();
    matches!(chars.next(), Some('v' | 'p'))
        && token.len() > 1
        && chars.all(|c| c.is_ascii_digit())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Register(String),
    Api(ApiSignature),
    Literal(String),
}

impl Operand {
    fn classify(token: String) -> Operand {
        if is_register(&token) {
            Operand::Register(token)
        } else if let Ok(api) = ApiSignature::parse(&token) {
            Operand::Api(api)
        } else {
            Operand::Literal(token)
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            Operand::Register(s) | Operand::Literal(s) => s,
            Operand::Api(a) => a.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub opcode: String,
    pub operands: Vec<Operand>,
}

impl Instruction {
    /// `invoke` and the `invoke-*` family.
    pub fn is_invoke(&self) -> bool {
        is_invoke_opcode(&self.opcode)
    }

    /// The invoked method, for invoke instructions.
    pub fn invoked_api(&self) -> Option<&ApiSignature> {
        if !self.is_invoke() {
            return None;
        }
        self.operands.iter().find_map(|op| match op {
            Operand::Api(api) => Some(api),
            _ => None,
        })
    }
}

fn is_invoke_opcode(op: &str) -> bool {
    op == "invoke" || op.starts_with("invoke-")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FieldDecl {
    pub flags: Vec<String>,
    pub name: String,
    pub descriptor: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethodDecl {
    pub flags: Vec<String>,
    pub name: String,
    pub descriptor: String,
    pub body: Vec<Instruction>,
}

/// One disassembled class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassUnit {
    pub class_name: String,
    pub super_name: Option<String>,
    pub fields: Vec<FieldDecl>,
    pub methods: Vec<MethodDecl>,
}

impl ClassUnit {
    pub fn new(class_name: impl Into<String>) -> Self {
        ClassUnit {
            class_name: class_name.into(),
            super_name: None,
            fields: Vec::new(),
            methods: Vec::new(),
        }
    }

    /// Renders back to `.dsm` text. Parsing the result yields an equal unit.
    pub fn to_dsm(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ClassUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, ".class {}", self.class_name)?;
        if let Some(sup) = &self.super_name {
            writeln!(f, ".super {sup}")?;
        }
        for field in &self.fields {
            f.write_str(".field")?;
            for flag in &field.flags {
                write!(f, " {flag}")?;
            }
            writeln!(f, " {} {}", field.name, field.descriptor)?;
        }
        for method in &self.methods {
            f.write_str(".method")?;
            for flag in &method.flags {
                write!(f, " {flag}")?;
            }
            writeln!(f, " {} {}", method.name, method.descriptor)?;
            for instr in &method.body {
                write!(f, "    {}", instr.opcode)?;
                for op in &instr.operands {
                    write!(f, " {}", op.as_str())?;
                }
                writeln!(f)?;
            }
            writeln!(f, ".end method")?;
        }
        writeln!(f, ".end class")
    }
}

fn syntax(line: usize, message: impl Into<String>, expected: &'static str) -> ParseError {
    ParseError::Syntax {
        line,
        message: message.into(),
        expected,
    }
}

// Splits a line into whitespace-separated tokens. A parenthesised group may
// contain whitespace, which is dropped from the token.
fn tokenize(text: &str, line: usize) -> Result<Vec<String>, ParseError> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut in_parens = false;
    for c in text.chars() {
        if c.is_control() && !c.is_whitespace() {
            return Err(syntax(line, format!("control character {c:?}"), "printable text"));
        }
        if in_parens {
            if !c.is_whitespace() {
                current.push(c);
            }
            if c == ')' {
                in_parens = false;
            }
        } else if c.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else {
            if c == '(' {
                in_parens = true;
            }
            current.push(c);
        }
    }
    if in_parens {
        return Err(syntax(line, "unterminated `(`", "`)`"));
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    Ok(tokens)
}

// Splits `FLAGS? NAME DESCRIPTOR` operands of `.field` / `.method`.
fn split_decl(
    mut tokens: Vec<String>,
    line: usize,
    directive: &str,
) -> Result<(Vec<String>, String, String), ParseError> {
    if tokens.len() < 2 {
        return Err(syntax(
            line,
            format!("`{directive}` needs a name and a descriptor"),
            "NAME DESCRIPTOR",
        ));
    }
    let descriptor = tokens.pop().unwrap();
    let name = tokens.pop().unwrap();
    if name.contains(['(', ')']) {
        return Err(syntax(line, format!("bad member name {name:?}"), "NAME"));
    }
    if let Some(flag) = tokens.iter().find(|t| t.contains(['(', ')'])) {
        return Err(syntax(line, format!("bad flag {flag:?}"), "FLAGS"));
    }
    Ok((tokens, name, descriptor))
}

/// Parses one `.dsm` file.
pub fn parse_class_file(text: &str) -> Result<ClassUnit, ParseError> {
    enum State {
        Header,
        Body,
        Method(MethodDecl),
        Done,
    }

    let mut unit = ClassUnit::new("");
    let mut state = State::Header;
    let mut seen_fields: HashSet<(String, String)> = HashSet::new();
    let mut last_line = 0;

    for (idx, raw) in text.split('\n').enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        last_line = line;
        let mut tokens = tokenize(trimmed, line)?;
        let head = tokens.remove(0);

        state = match state {
            State::Header => {
                if head != ".class" {
                    return Err(syntax(line, format!("unexpected {head:?}"), "`.class NAME`"));
                }
                match tokens.as_slice() {
                    [name] if is_dotted_name(name) => unit.class_name = name.clone(),
                    _ => return Err(syntax(line, "bad class name", "`.class NAME`")),
                }
                State::Body
            }
            State::Body => match head.as_str() {
                ".super" => {
                    if unit.super_name.is_some() || !unit.fields.is_empty() || !unit.methods.is_empty() {
                        return Err(syntax(
                            line,
                            "`.super` must directly follow `.class`",
                            "`.field`, `.method` or `.end class`",
                        ));
                    }
                    match tokens.as_slice() {
                        [name] if is_dotted_name(name) => unit.super_name = Some(name.clone()),
                        _ => return Err(syntax(line, "bad super class name", "`.super NAME`")),
                    }
                    State::Body
                }
                ".field" => {
                    let (flags, name, descriptor) = split_decl(tokens, line, ".field")?;
                    if descriptor.contains(['(', ')']) {
                        return Err(syntax(
                            line,
                            format!("field descriptor {descriptor:?} looks like a method"),
                            "type descriptor",
                        ));
                    }
                    if !seen_fields.insert((name.clone(), descriptor.clone())) {
                        return Err(ParseError::DuplicateField {
                            line,
                            name,
                            descriptor,
                        });
                    }
                    unit.fields.push(FieldDecl {
                        flags,
                        name,
                        descriptor,
                    });
                    State::Body
                }
                ".method" => {
                    let (flags, name, descriptor) = split_decl(tokens, line, ".method")?;
                    if !descriptor.starts_with('(') {
                        return Err(syntax(
                            line,
                            format!("method descriptor {descriptor:?}"),
                            "`(params)return`",
                        ));
                    }
                    State::Method(MethodDecl {
                        flags,
                        name,
                        descriptor,
                        body: Vec::new(),
                    })
                }
                ".end" if tokens == ["class"] => State::Done,
                _ => {
                    return Err(syntax(
                        line,
                        format!("unexpected {head:?}"),
                        "`.field`, `.method` or `.end class`",
                    ))
                }
            },
            State::Method(mut method) => {
                if head == ".end" && tokens == ["method"] {
                    unit.methods.push(method);
                    State::Body
                } else {
                    method.body.push(parse_instruction(head, tokens, line)?);
                    State::Method(method)
                }
            }
            State::Done => {
                return Err(syntax(line, "content after `.end class`", "end of file"));
            }
        };
    }

    match state {
        State::Done => Ok(unit),
        State::Header => Err(syntax(last_line + 1, "empty input", "`.class NAME`")),
        State::Body => Err(syntax(last_line + 1, "unexpected end of file", "`.end class`")),
        State::Method(_) => Err(syntax(last_line + 1, "unexpected end of file", "`.end method`")),
    }
}

fn parse_instruction(opcode: String, tokens: Vec<String>, line: usize) -> Result<Instruction, ParseError> {
    if opcode.starts_with('.') || opcode.contains(['(', ')']) || is_register(&opcode) {
        return Err(syntax(
            line,
            format!("unexpected {opcode:?} in method body"),
            "OPCODE or `.end method`",
        ));
    }
    let invoke = is_invoke_opcode(&opcode);
    let mut operands = Vec::with_capacity(tokens.len());
    let mut apis = 0;
    for token in tokens {
        if token.contains('(') && ApiSignature::parse(&token).is_err() && invoke {
            return Err(syntax(line, format!("malformed method reference {token:?}"), "API signature"));
        }
        let op = Operand::classify(token);
        if matches!(op, Operand::Api(_)) {
            apis += 1;
        }
        operands.push(op);
    }
    if invoke && apis != 1 {
        return Err(syntax(
            line,
            format!("`{opcode}` carries {apis} method references"),
            "exactly one API signature",
        ));
    }
    Ok(Instruction { opcode, operands })
}

/// Deduplicated set of framework methods invoked anywhere in `unit`.
pub fn extract_api_invocations(unit: &ClassUnit) -> BTreeSet<ApiSignature> {
    unit.methods
        .iter()
        .flat_map(|m| &m.body)
        .filter_map(Instruction::invoked_api)
        .cloned()
        .collect()
}
