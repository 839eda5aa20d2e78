//! Deterministic stand-in runtime: a tiny Python-flavoured interpreter with
//! variables, arithmetic, strings, lists, `print` and `figure`. It keeps the
//! sandbox contract (state, stdout, errors, images) testable without any
//! interpreter installed.

use std::collections::HashMap;
use std::fmt;

use super::{ExecOutput, Runtime, SandboxBackend, SandboxError, SandboxProcess};
use std::path::Path;
use std::time::Duration;

/// Backend whose processes are [`StubInterpreter`]s, one per session.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

impl SandboxBackend for StubBackend {
    fn start(
        &self,
        _runtime: Runtime,
        _workdir: &Path,
    ) -> Result<Box<dyn SandboxProcess>, SandboxError> {
        Ok(Box::new(StubInterpreter::default()))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    fn type_name(&self) -> &'static str {
        match self {
            Value::None => "NoneType",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
        }
    }

    fn repr(&self) -> String {
        match self {
            Value::Str(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
            other => other.to_string(),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Bool(b) => Some(*b as i64 as f64),
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Bool(b) => Some(*b as i64),
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::None => f.write_str("None"),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) if x.is_finite() && x.fract() == 0.0 && x.abs() < 1e16 => {
                write!(f, "{x:.1}")
            }
            Value::Float(x) if x.is_nan() => f.write_str("nan"),
            Value::Float(x) if x.is_infinite() => {
                f.write_str(if *x > 0.0 { "inf" } else { "-inf" })
            }
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => f.write_str(s),
            Value::List(items) => {
                let parts: Vec<String> = items.iter().map(Value::repr).collect();
                write!(f, "[{}]", parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(String),
    Str(String),
    Ident(String),
    Op(&'static str),
}

const OPS: [&str; 22] = [
    "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "<-", "+", "-", "*", "/", "%", "<",
    ">", "=", "(", ")", ",",
];

fn syntax(msg: impl Into<String>) -> String {
    format!("SyntaxError: {}", msg.into())
}

fn tokenize(line: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == '_')
            {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            out.push(Tok::Num(
                chars[start..i].iter().filter(|c| **c != '_').collect(),
            ));
        } else if c == '"' || c == '\'' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None => return Err(syntax("unterminated string literal")),
                    Some('\\') => {
                        let esc = chars.get(i + 1).copied().unwrap_or('\\');
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        i += 2;
                    }
                    Some(&ch) if ch == quote => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Tok::Str(s));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.')
            {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else {
            let rest: String = chars[i..].iter().take(2).collect();
            let op = OPS
                .iter()
                .find(|op| rest.starts_with(**op))
                .ok_or_else(|| syntax(format!("invalid character '{c}'")))?;
            out.push(Tok::Op(op));
            i += op.chars().count();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Expr {
    Lit(Value),
    Var(String),
    Neg(Box<Expr>),
    Bin(&'static str, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    List(Vec<Expr>),
}

#[derive(Debug, Clone)]
enum Stmt {
    Nop,
    Assign(String, Option<&'static str>, Expr),
    Expr(Expr),
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

fn precedence(op: &str) -> Option<u8> {
    Some(match op {
        "==" | "!=" | "<" | ">" | "<=" | ">=" => 1,
        "+" | "-" => 2,
        "*" | "/" | "//" | "%" => 3,
        "**" => 5,
        _ => return None,
    })
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(o)) if *o == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(op)) = self.peek() {
            let op = *op;
            let Some(prec) = precedence(op) else { break };
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            // `**` is right-associative
            let next_min = if op == "**" { prec } else { prec + 1 };
            let rhs = self.expr(next_min)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.expr(4)?)));
        }
        if self.eat("+") {
            return self.expr(4);
        }
        self.atom()
    }

    fn args(&mut self, close: &str) -> Result<Vec<Expr>, String> {
        let mut args = Vec::new();
        if self.eat(close) {
            return Ok(args);
        }
        loop {
            // keyword arguments are accepted and passed positionally
            if let (Some(Tok::Ident(_)), Some(Tok::Op("="))) =
                (self.toks.get(self.pos), self.toks.get(self.pos + 1))
            {
                self.pos += 2;
            }
            args.push(self.expr(0)?);
            if self.eat(close) {
                return Ok(args);
            }
            if !self.eat(",") {
                return Err(syntax("invalid syntax"));
            }
            if self.eat(close) {
                return Ok(args);
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Tok::Num(n)) => {
                if let Ok(i) = n.parse::<i64>() {
                    Ok(Expr::Lit(Value::Int(i)))
                } else {
                    n.parse::<f64>()
                        .map(|f| Expr::Lit(Value::Float(f)))
                        .map_err(|_| syntax("invalid decimal literal"))
                }
            }
            Some(Tok::Str(s)) => Ok(Expr::Lit(Value::Str(s))),
            Some(Tok::Ident(name)) => match name.as_str() {
                "True" | "TRUE" => Ok(Expr::Lit(Value::Bool(true))),
                "False" | "FALSE" => Ok(Expr::Lit(Value::Bool(false))),
                "None" | "NULL" => Ok(Expr::Lit(Value::None)),
                _ if self.eat("(") => Ok(Expr::Call(name, self.args(")")?)),
                _ => Ok(Expr::Var(name)),
            },
            Some(Tok::Op("(")) => {
                let e = self.expr(0)?;
                if !self.eat(")") {
                    return Err(syntax("'(' was never closed"));
                }
                Ok(e)
            }
            Some(Tok::Op("[")) => Ok(Expr::List(self.args("]")?)),
            _ => Err(syntax("invalid syntax")),
        }
    }
}

fn parse_line(line: &str) -> Result<Stmt, String> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(Stmt::Nop);
    }
    if trimmed.starts_with("import ")
        || (trimmed.starts_with("from ") && trimmed.contains(" import "))
    {
        return Ok(Stmt::Nop);
    }
    // list brackets are tokenised here so the operator table stays small
    let mut toks = Vec::new();
    for piece in split_brackets(trimmed) {
        match piece {
            Ok(text) => toks.extend(tokenize(&text)?),
            Err(op) => toks.push(Tok::Op(op)),
        }
    }
    let mut p = Parser { toks, pos: 0 };
    let stmt = match (p.toks.first(), p.toks.get(1)) {
        (Some(Tok::Ident(name)), Some(Tok::Op(op)))
            if matches!(*op, "=" | "<-" | "+=" | "-=" | "*=" | "/=") =>
        {
            let name = name.clone();
            let aug = match *op {
                "+=" => Some("+"),
                "-=" => Some("-"),
                "*=" => Some("*"),
                "/=" => Some("/"),
                _ => None,
            };
            p.pos = 2;
            Stmt::Assign(name, aug, p.expr(0)?)
        }
        _ => Stmt::Expr(p.expr(0)?),
    };
    if p.pos != p.toks.len() {
        return Err(syntax("invalid syntax"));
    }
    Ok(stmt)
}

/// Splits out `[` and `]` outside string literals.
fn split_brackets(s: &str) -> Vec<Result<String, &'static str>> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    for c in s.chars() {
        match (quote, c) {
            (None, '[' | ']') => {
                out.push(Ok(std::mem::take(&mut cur)));
                out.push(Err(if c == '[' { "[" } else { "]" }));
            }
            (None, '"' | '\'') => {
                quote = Some(c);
                cur.push(c);
            }
            (Some(q), _) if c == q => {
                quote = None;
                cur.push(c);
            }
            _ => cur.push(c),
        }
    }
    out.push(Ok(cur));
    out
}

/// Interpreter state for one sandbox session.
#[derive(Debug, Default)]
pub struct StubInterpreter {
    vars: HashMap<String, Value>,
}

struct Effects {
    stdout: String,
    images: Vec<Vec<u8>>,
}

fn type_error(op: &str, a: &Value, b: &Value) -> String {
    format!(
        "TypeError: unsupported operand type(s) for {op}: '{}' and '{}'",
        a.type_name(),
        b.type_name()
    )
}

fn binary(op: &str, a: Value, b: Value) -> Result<Value, String> {
    use Value::*;
    match (op, &a, &b) {
        ("+", Str(x), Str(y)) => return Ok(Str(format!("{x}{y}"))),
        ("+", List(x), List(y)) => return Ok(List(x.iter().chain(y).cloned().collect())),
        ("*", Str(s), n) | ("*", n, Str(s)) if n.as_i64().is_some() => {
            return Ok(Str(s.repeat(n.as_i64().unwrap().max(0) as usize)))
        }
        ("==", _, _) => {
            return Ok(Bool(
                a == b || (a.as_f64().is_some() && a.as_f64() == b.as_f64()),
            ))
        }
        ("!=", _, _) => {
            return Ok(Bool(
                !(a == b || (a.as_f64().is_some() && a.as_f64() == b.as_f64())),
            ))
        }
        ("<" | ">" | "<=" | ">=", Str(x), Str(y)) => {
            return Ok(Bool(match op {
                "<" => x < y,
                ">" => x > y,
                "<=" => x <= y,
                _ => x >= y,
            }))
        }
        _ => {}
    }
    if let (Some(x), Some(y)) = (a.as_i64(), b.as_i64()) {
        return Ok(match op {
            "+" => Int(x.wrapping_add(y)),
            "-" => Int(x.wrapping_sub(y)),
            "*" => Int(x.wrapping_mul(y)),
            "/" if y == 0 => return Err("ZeroDivisionError: division by zero".into()),
            "/" => Float(x as f64 / y as f64),
            "//" | "%" if y == 0 => {
                return Err("ZeroDivisionError: integer division or modulo by zero".into())
            }
            "//" => Int(x.div_euclid(y) - if y < 0 && x.rem_euclid(y) != 0 { 1 } else { 0 }),
            "%" => Int(((x % y) + y) % y),
            "**" if y >= 0 => Int(x.wrapping_pow(y.min(u32::MAX as i64) as u32)),
            "**" => Float((x as f64).powf(y as f64)),
            "<" => Bool(x < y),
            ">" => Bool(x > y),
            "<=" => Bool(x <= y),
            ">=" => Bool(x >= y),
            _ => return Err(type_error(op, &a, &b)),
        });
    }
    if let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) {
        return Ok(match op {
            "+" => Float(x + y),
            "-" => Float(x - y),
            "*" => Float(x * y),
            "/" | "//" | "%" if y == 0.0 => {
                return Err("ZeroDivisionError: float division by zero".into())
            }
            "/" => Float(x / y),
            "//" => Float((x / y).floor()),
            "%" => Float(x - y * (x / y).floor()),
            "**" => Float(x.powf(y)),
            "<" => Bool(x < y),
            ">" => Bool(x > y),
            "<=" => Bool(x <= y),
            ">=" => Bool(x >= y),
            _ => return Err(type_error(op, &a, &b)),
        });
    }
    Err(type_error(op, &a, &b))
}

impl StubInterpreter {
    fn eval(&self, e: &Expr, fx: &mut Effects) -> Result<Value, String> {
        match e {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Var(name) => self
                .vars
                .get(name)
                .cloned()
                .ok_or_else(|| format!("NameError: name '{name}' is not defined")),
            Expr::Neg(inner) => match self.eval(inner, fx)? {
                Value::Int(i) => Ok(Value::Int(-i)),
                Value::Float(f) => Ok(Value::Float(-f)),
                Value::Bool(b) => Ok(Value::Int(-(b as i64))),
                other => Err(format!(
                    "TypeError: bad operand type for unary -: '{}'",
                    other.type_name()
                )),
            },
            Expr::Bin(op, a, b) => {
                let a = self.eval(a, fx)?;
                let b = self.eval(b, fx)?;
                binary(op, a, b)
            }
            Expr::List(items) => Ok(Value::List(
                items
                    .iter()
                    .map(|i| self.eval(i, fx))
                    .collect::<Result<_, _>>()?,
            )),
            Expr::Call(name, args) => {
                let args: Vec<Value> = args
                    .iter()
                    .map(|a| self.eval(a, fx))
                    .collect::<Result<_, _>>()?;
                self.call(name, args, fx)
            }
        }
    }

    fn call(&self, name: &str, args: Vec<Value>, fx: &mut Effects) -> Result<Value, String> {
        let one = |args: &[Value]| -> Result<Value, String> {
            match args {
                [v] => Ok(v.clone()),
                _ => Err(format!(
                    "TypeError: {name}() takes exactly one argument ({} given)",
                    args.len()
                )),
            }
        };
        match name {
            "print" | "cat" => {
                let parts: Vec<String> = args.iter().map(Value::to_string).collect();
                fx.stdout.push_str(&parts.join(" "));
                fx.stdout.push('\n');
                Ok(Value::None)
            }
            "figure" | "plt.figure" | "plt.show" | "plt.plot" => {
                let title = args.first().map(Value::to_string).unwrap_or_default();
                fx.images.push(tiny_png(title.as_bytes()));
                Ok(Value::None)
            }
            "len" | "length" => match one(&args)? {
                Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                Value::List(l) => Ok(Value::Int(l.len() as i64)),
                v => Err(format!(
                    "TypeError: object of type '{}' has no len()",
                    v.type_name()
                )),
            },
            "str" => Ok(Value::Str(one(&args)?.to_string())),
            "repr" => Ok(Value::Str(one(&args)?.repr())),
            "int" => match one(&args)? {
                Value::Str(s) => s.trim().parse::<i64>().map(Value::Int).map_err(|_| {
                    format!("ValueError: invalid literal for int() with base 10: '{s}'")
                }),
                Value::Float(f) => Ok(Value::Int(f.trunc() as i64)),
                v => v.as_i64().map(Value::Int).ok_or_else(|| {
                    format!(
                        "TypeError: int() argument must be a string or a number, not '{}'",
                        v.type_name()
                    )
                }),
            },
            "float" => {
                match one(&args)? {
                    Value::Str(s) => s.trim().parse::<f64>().map(Value::Float).map_err(|_| {
                        format!("ValueError: could not convert string to float: '{s}'")
                    }),
                    v => v.as_f64().map(Value::Float).ok_or_else(|| {
                        format!(
                            "TypeError: float() argument must be a string or a number, not '{}'",
                            v.type_name()
                        )
                    }),
                }
            }
            "abs" => match one(&args)? {
                Value::Int(i) => Ok(Value::Int(i.abs())),
                v => v.as_f64().map(|f| Value::Float(f.abs())).ok_or_else(|| {
                    format!("TypeError: bad operand type for abs(): '{}'", v.type_name())
                }),
            },
            "round" => {
                let digits = args.get(1).and_then(Value::as_i64);
                let x = args
                    .first()
                    .and_then(Value::as_f64)
                    .ok_or_else(|| "TypeError: round() expects a number".to_string())?;
                Ok(match digits {
                    None => Value::Int(x.round() as i64),
                    Some(d) => {
                        let m = 10f64.powi(d as i32);
                        Value::Float((x * m).round() / m)
                    }
                })
            }
            "sum" | "min" | "max" | "mean" => {
                let items = match args.as_slice() {
                    [Value::List(l)] => l.clone(),
                    _ => args.clone(),
                };
                if items.is_empty() && name != "sum" {
                    return Err(format!("ValueError: {name}() arg is an empty sequence"));
                }
                let mut acc = match name {
                    "sum" | "mean" => Value::Int(0),
                    _ => items[0].clone(),
                };
                for v in &items {
                    acc = match name {
                        "sum" | "mean" => binary("+", acc, v.clone())?,
                        "min" if binary("<", v.clone(), acc.clone())? == Value::Bool(true) => {
                            v.clone()
                        }
                        "max" if binary(">", v.clone(), acc.clone())? == Value::Bool(true) => {
                            v.clone()
                        }
                        _ => acc,
                    };
                }
                if name == "mean" {
                    acc = binary("/", acc, Value::Int(items.len() as i64))?;
                }
                Ok(acc)
            }
            _ => Err(format!("NameError: name '{name}' is not defined")),
        }
    }

    /// Runs one cell. The whole cell is parsed first, so a syntax error
    /// executes nothing; a runtime error keeps earlier side effects.
    pub fn run(&mut self, code: &str) -> ExecOutput {
        let mut stmts = Vec::new();
        for line in code.lines().flat_map(split_statements) {
            match parse_line(&line) {
                Ok(s) => stmts.push(s),
                Err(e) => {
                    return ExecOutput {
                        error: Some(e),
                        ..ExecOutput::default()
                    }
                }
            }
        }
        let mut fx = Effects {
            stdout: String::new(),
            images: Vec::new(),
        };
        let last = stmts.iter().rposition(|s| !matches!(s, Stmt::Nop));
        let mut error = None;
        for (i, stmt) in stmts.iter().enumerate() {
            let result = match stmt {
                Stmt::Nop => Ok(()),
                Stmt::Assign(name, aug, e) => self.eval(e, &mut fx).and_then(|v| {
                    let v = match aug {
                        Some(op) => {
                            let cur = self.vars.get(name).cloned().ok_or_else(|| {
                                format!("NameError: name '{name}' is not defined")
                            })?;
                            binary(op, cur, v)?
                        }
                        None => v,
                    };
                    self.vars.insert(name.clone(), v);
                    Ok(())
                }),
                Stmt::Expr(e) => self.eval(e, &mut fx).map(|v| {
                    // a trailing bare expression is echoed, as in a notebook cell
                    if Some(i) == last && v != Value::None {
                        fx.stdout.push_str(&v.repr());
                        fx.stdout.push('\n');
                    }
                }),
            };
            if let Err(e) = result {
                error = Some(e);
                break;
            }
        }
        ExecOutput {
            stdout: fx.stdout,
            stderr: String::new(),
            error,
            images: fx.images,
        }
    }
}

fn split_statements(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    for c in line.chars() {
        match (quote, c) {
            (None, ';') => out.push(std::mem::take(&mut cur)),
            (None, '#') => break,
            (None, '"' | '\'') => {
                quote = Some(c);
                cur.push(c);
            }
            (Some(q), _) if c == q => {
                quote = None;
                cur.push(c);
            }
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

impl SandboxProcess for StubInterpreter {
    fn exec(&mut self, code: &str, _timeout: Duration) -> Result<ExecOutput, SandboxError> {
        Ok(self.run(code))
    }
}

fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ 0xEDB8_8320
            } else {
                crc >> 1
            };
        }
    }
    !crc
}

fn png_chunk(out: &mut Vec<u8>, kind: &[u8; 4], data: &[u8]) {
    out.extend_from_slice(&(data.len() as u32).to_be_bytes());
    let start = out.len();
    out.extend_from_slice(kind);
    out.extend_from_slice(data);
    let crc = crc32(&out[start..]);
    out.extend_from_slice(&crc.to_be_bytes());
}

/// A valid 16x16 grayscale PNG whose pixels derive from `seed`.
fn tiny_png(seed: &[u8]) -> Vec<u8> {
    const SIZE: usize = 16;
    let mut h: u32 = 0x811c_9dc5;
    let mut raw = Vec::with_capacity(SIZE * (SIZE + 1));
    for y in 0..SIZE {
        raw.push(0); // filter: none
        for x in 0..SIZE {
            for &b in seed.iter().chain([x as u8, y as u8].iter()) {
                h = (h ^ b as u32).wrapping_mul(0x0100_0193);
            }
            raw.push((h >> 24) as u8);
        }
    }
    // zlib stream with a single stored block
    let mut z = vec![0x78, 0x01, 0x01];
    z.extend_from_slice(&(raw.len() as u16).to_le_bytes());
    z.extend_from_slice(&(!(raw.len() as u16)).to_le_bytes());
    z.extend_from_slice(&raw);
    let (mut a, mut b) = (1u32, 0u32);
    for &byte in &raw {
        a = (a + byte as u32) % 65521;
        b = (b + a) % 65521;
    }
    z.extend_from_slice(&((b << 16) | a).to_be_bytes());

    let mut png = b"\x89PNG\r\n\x1a\n".to_vec();
    let mut ihdr = Vec::new();
    ihdr.extend_from_slice(&(SIZE as u32).to_be_bytes());
    ihdr.extend_from_slice(&(SIZE as u32).to_be_bytes());
    ihdr.extend_from_slice(&[8, 0, 0, 0, 0]);
    png_chunk(&mut png, b"IHDR", &ihdr);
    png_chunk(&mut png, b"IDAT", &z);
    png_chunk(&mut png, b"IEND", &[]);
    png
}
