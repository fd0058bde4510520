//! In-process stand-in for the interpreter kernel.
//!
//! Speaks the same NDJSON protocol as the real kernel and interprets a small,
//! flat subset of Python: literals, names, arithmetic, lists, dicts, strings,
//! imports as inert placeholders, `del`, augmented assignment, and a handful
//! of builtins and methods. Compound statements are rejected. It exists so the
//! episode loop can be exercised end to end without starting a subprocess.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use indexmap::IndexMap;

use super::client::{KernelTransport, TransportError};
use super::protocol::{
    ErrorKind, Handshake, KernelOp, KernelRequest, KernelResponse, WireError, WireVar,
};

/// Code containing this marker never answers, which the client sees as a timeout.
pub const HANG_MARKER: &str = "__fake_kernel_hang__";

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Dict(Vec<(Value, Value)>),
    /// An imported name; inert.
    Opaque(String),
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
            Value::Dict(_) => "dict",
            Value::Opaque(_) => "module",
        }
    }

    pub fn repr(&self) -> String {
        match self {
            Value::None => "None".into(),
            Value::Bool(true) => "True".into(),
            Value::Bool(false) => "False".into(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => float_repr(*f),
            Value::Str(s) => str_repr(s),
            Value::List(items) => {
                let inner: Vec<String> = items.iter().map(Value::repr).collect();
                format!("[{}]", inner.join(", "))
            }
            Value::Dict(items) => {
                let inner: Vec<String> = items
                    .iter()
                    .map(|(k, v)| format!("{}: {}", k.repr(), v.repr()))
                    .collect();
                format!("{{{}}}", inner.join(", "))
            }
            Value::Opaque(name) => format!("<module '{name}'>"),
        }
    }

    fn display(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.repr(),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            Value::Bool(b) => Some(*b as i64 as f64),
            _ => None,
        }
    }
}

fn float_repr(f: f64) -> String {
    if f.is_infinite() {
        return if f > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{f:?}")
}

fn str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::new();
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Value),
    Str(String),
    Name(String),
    Op(&'static str),
}

const OPS: &[&str] = &[
    "//=", "+=", "-=", "*=", "/=", "//", "==", "(", ")", "[", "]", "{", "}", ",", ":", ".", "=", "+", "-", "*", "/", "%",
];

fn lex(line: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '#' {
            break;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.' || chars[i] == '_') {
                i += 1;
            }
            let text: String = chars[start..i].iter().filter(|&&c| c != '_').collect();
            let value = if text.contains('.') {
                Value::Float(text.parse().map_err(|_| format!("SyntaxError: invalid number '{text}'"))?)
            } else {
                Value::Int(text.parse().map_err(|_| format!("SyntaxError: invalid number '{text}'"))?)
            };
            toks.push(Tok::Num(value));
        } else if c == '"' || c == '\'' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else {
                    return Err("SyntaxError: unterminated string literal".into());
                };
                i += 1;
                if ch == quote {
                    break;
                }
                if ch == '\\' {
                    let esc = chars.get(i).copied().unwrap_or('\\');
                    i += 1;
                    s.push(match esc {
                        'n' => '\n',
                        't' => '\t',
                        'r' => '\r',
                        other => other,
                    });
                } else {
                    s.push(ch);
                }
            }
            toks.push(Tok::Str(s));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Name(chars[start..i].iter().collect()));
        } else {
            let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
            let op = OPS
                .iter()
                .find(|op| rest.starts_with(*op))
                .ok_or_else(|| format!("SyntaxError: invalid syntax at '{c}'"))?;
            toks.push(Tok::Op(op));
            i += op.chars().count();
        }
    }
    Ok(toks)
}

#[derive(Debug, Clone)]
enum Expr {
    Lit(Value),
    Name(String),
    Neg(Box<Expr>),
    Bin(&'static str, Box<Expr>, Box<Expr>),
    List(Vec<Expr>),
    Dict(Vec<(Expr, Expr)>),
    Call(Box<Expr>, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Attr(Box<Expr>, String),
}

struct ExprParser<'a> {
    toks: &'a [Tok],
    pos: usize,
}

impl<'a> ExprParser<'a> {
    fn peek_op(&self) -> Option<&'static str> {
        match self.toks.get(self.pos) {
            Some(Tok::Op(op)) => Some(op),
            _ => None,
        }
    }

    fn expect(&mut self, op: &str) -> Result<(), String> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("SyntaxError: expected '{op}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        while let Some(op @ ("+" | "-")) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        while let Some(op @ ("*" | "/" | "//" | "%")) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.peek_op() == Some("-") {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, String> {
        let mut e = self.atom()?;
        loop {
            match self.peek_op() {
                Some("(") => {
                    self.pos += 1;
                    let args = self.sequence(")")?;
                    e = Expr::Call(Box::new(e), args);
                }
                Some("[") => {
                    self.pos += 1;
                    let idx = self.expr()?;
                    self.expect("]")?;
                    e = Expr::Index(Box::new(e), Box::new(idx));
                }
                Some(".") => {
                    self.pos += 1;
                    match self.toks.get(self.pos) {
                        Some(Tok::Name(n)) => {
                            self.pos += 1;
                            e = Expr::Attr(Box::new(e), n.clone());
                        }
                        _ => return Err("SyntaxError: expected attribute name".into()),
                    }
                }
                _ => return Ok(e),
            }
        }
    }

    fn sequence(&mut self, close: &str) -> Result<Vec<Expr>, String> {
        let mut items = Vec::new();
        while self.peek_op() != Some(close) {
            items.push(self.expr()?);
            if self.peek_op() == Some(",") {
                self.pos += 1;
            } else {
                break;
            }
        }
        self.expect(close)?;
        Ok(items)
    }

    fn atom(&mut self) -> Result<Expr, String> {
        let tok = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| "SyntaxError: unexpected end of line".to_string())?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Lit(v)),
            Tok::Str(s) => Ok(Expr::Lit(Value::Str(s))),
            Tok::Name(n) => Ok(match n.as_str() {
                "None" => Expr::Lit(Value::None),
                "True" => Expr::Lit(Value::Bool(true)),
                "False" => Expr::Lit(Value::Bool(false)),
                _ => Expr::Name(n),
            }),
            Tok::Op("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Op("[") => Ok(Expr::List(self.sequence("]")?)),
            Tok::Op("{") => {
                let mut items = Vec::new();
                while self.peek_op() != Some("}") {
                    let k = self.expr()?;
                    self.expect(":")?;
                    let v = self.expr()?;
                    items.push((k, v));
                    if self.peek_op() == Some(",") {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                self.expect("}")?;
                Ok(Expr::Dict(items))
            }
            Tok::Op(op) => Err(format!("SyntaxError: invalid syntax at '{op}'")),
        }
    }
}

fn parse_expr(toks: &[Tok]) -> Result<Expr, String> {
    let mut p = ExprParser { toks, pos: 0 };
    let e = p.expr()?;
    if p.pos != toks.len() {
        return Err("SyntaxError: invalid syntax".into());
    }
    Ok(e)
}

/// The interpreter state: one persistent global namespace.
#[derive(Debug, Default, Clone)]
pub struct FakeInterpreter {
    globals: IndexMap<String, Value>,
    stdout: String,
}

/// Outcome of running one code block.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub stdout: String,
    /// (line, message) of the first failing statement.
    pub error: Option<(usize, String)>,
}

impl FakeInterpreter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.globals.clear();
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.globals.get(name)
    }

    pub fn reprs(&self) -> IndexMap<String, String> {
        self.globals.iter().map(|(k, v)| (k.clone(), v.repr())).collect()
    }

    pub fn run(&mut self, code: &str) -> RunOutcome {
        self.stdout.clear();
        let mut error = None;
        for (i, line) in code.lines().enumerate() {
            if let Err(msg) = self.statement(line) {
                error = Some((i + 1, msg));
                break;
            }
        }
        RunOutcome {
            stdout: std::mem::take(&mut self.stdout),
            error,
        }
    }

    fn statement(&mut self, line: &str) -> Result<(), String> {
        let toks = lex(line)?;
        if toks.is_empty() {
            return Ok(());
        }
        if line.starts_with(char::is_whitespace) {
            return Err("IndentationError: unexpected indent".into());
        }
        if toks.last() == Some(&Tok::Op(":")) {
            return Err("SyntaxError: compound statements are not supported by the in-process kernel".into());
        }
        match &toks[0] {
            Tok::Name(kw) if kw == "pass" && toks.len() == 1 => return Ok(()),
            Tok::Name(kw) if kw == "import" => return self.import(&toks[1..]),
            Tok::Name(kw) if kw == "from" => return self.import_from(&toks[1..]),
            Tok::Name(kw) if kw == "del" => {
                for t in &toks[1..] {
                    match t {
                        Tok::Name(n) => {
                            if self.globals.shift_remove(n).is_none() {
                                return Err(format!("NameError: name '{n}' is not defined"));
                            }
                        }
                        Tok::Op(",") => {}
                        _ => return Err("SyntaxError: invalid del target".into()),
                    }
                }
                return Ok(());
            }
            _ => {}
        }
        if let Some(pos) = toks.iter().position(|t| matches!(t, Tok::Op("=" | "+=" | "-=" | "*=" | "/=" | "//="))) {
            let Tok::Op(op) = toks[pos] else { unreachable!() };
            let target = match &toks[..pos] {
                [Tok::Name(n)] => n.clone(),
                _ => return Err("SyntaxError: only simple names can be assigned".into()),
            };
            let rhs = self.eval(&parse_expr(&toks[pos + 1..])?)?;
            let value = if op == "=" {
                rhs
            } else {
                let current = self
                    .globals
                    .get(&target)
                    .cloned()
                    .ok_or_else(|| format!("NameError: name '{target}' is not defined"))?;
                binary(op.trim_end_matches('='), current, rhs)?
            };
            self.globals.insert(target, value);
            return Ok(());
        }
        let expr = parse_expr(&toks)?;
        self.eval(&expr)?;
        Ok(())
    }

    fn import(&mut self, toks: &[Tok]) -> Result<(), String> {
        for (dotted, alias) in import_items(toks)? {
            let bind = alias.unwrap_or_else(|| dotted.split('.').next().unwrap().to_string());
            self.globals.insert(bind, Value::Opaque(dotted));
        }
        Ok(())
    }

    fn import_from(&mut self, toks: &[Tok]) -> Result<(), String> {
        let split = toks
            .iter()
            .position(|t| matches!(t, Tok::Name(n) if n == "import"))
            .ok_or("SyntaxError: expected 'import'")?;
        let module = dotted_name(&toks[..split])?;
        for (name, alias) in import_items(&toks[split + 1..])? {
            let bind = alias.unwrap_or_else(|| name.clone());
            self.globals.insert(bind, Value::Opaque(format!("{module}.{name}")));
        }
        Ok(())
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, String> {
        match e {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Name(n) => self
                .globals
                .get(n)
                .cloned()
                .ok_or_else(|| format!("NameError: name '{n}' is not defined")),
            Expr::Neg(inner) => match self.eval(inner)? {
                Value::Int(i) => Ok(Value::Int(-i)),
                Value::Float(f) => Ok(Value::Float(-f)),
                v => Err(format!("TypeError: bad operand type for unary -: '{}'", v.type_name())),
            },
            Expr::Bin(op, a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                binary(op, a, b)
            }
            Expr::List(items) => Ok(Value::List(
                items.iter().map(|i| self.eval(i)).collect::<Result<_, _>>()?,
            )),
            Expr::Dict(items) => {
                let mut out: Vec<(Value, Value)> = Vec::new();
                for (k, v) in items {
                    let k = self.eval(k)?;
                    let v = self.eval(v)?;
                    match out.iter_mut().find(|(ek, _)| *ek == k) {
                        Some(slot) => slot.1 = v,
                        None => out.push((k, v)),
                    }
                }
                Ok(Value::Dict(out))
            }
            Expr::Index(target, idx) => {
                let target = self.eval(target)?;
                let idx = self.eval(idx)?;
                index(&target, &idx)
            }
            Expr::Attr(_, name) => Err(format!(
                "AttributeError: attribute access `.{name}` is only supported for method calls"
            )),
            Expr::Call(callee, args) => {
                let args: Vec<Value> = args.iter().map(|a| self.eval(a)).collect::<Result<_, _>>()?;
                match callee.as_ref() {
                    Expr::Name(n) if !self.globals.contains_key(n) => self.builtin(n, args),
                    Expr::Name(n) => Err(format!(
                        "TypeError: '{}' object is not callable",
                        self.globals[n].type_name()
                    )),
                    Expr::Attr(obj, method) => {
                        if let Expr::Name(var) = obj.as_ref() {
                            let slot = self
                                .globals
                                .get_mut(var)
                                .ok_or_else(|| format!("NameError: name '{var}' is not defined"))?;
                            call_method(slot, method, args)
                        } else {
                            let mut tmp = self.eval(obj)?;
                            call_method(&mut tmp, method, args)
                        }
                    }
                    _ => Err("TypeError: object is not callable".into()),
                }
            }
        }
    }

    fn builtin(&mut self, name: &str, args: Vec<Value>) -> Result<Value, String> {
        let one = |args: &[Value]| -> Result<Value, String> {
            match args {
                [v] => Ok(v.clone()),
                _ => Err(format!("TypeError: {name}() takes exactly one argument ({} given)", args.len())),
            }
        };
        match name {
            "print" => {
                let parts: Vec<String> = args.iter().map(Value::display).collect();
                let _ = writeln!(self.stdout, "{}", parts.join(" "));
                Ok(Value::None)
            }
            "len" => match one(&args)? {
                Value::Str(s) => Ok(Value::Int(s.chars().count() as i64)),
                Value::List(l) => Ok(Value::Int(l.len() as i64)),
                Value::Dict(d) => Ok(Value::Int(d.len() as i64)),
                v => Err(format!("TypeError: object of type '{}' has no len()", v.type_name())),
            },
            "str" => Ok(Value::Str(one(&args)?.display())),
            "repr" => Ok(Value::Str(one(&args)?.repr())),
            "int" => match one(&args)? {
                Value::Int(i) => Ok(Value::Int(i)),
                Value::Float(f) => Ok(Value::Int(f.trunc() as i64)),
                Value::Bool(b) => Ok(Value::Int(b as i64)),
                Value::Str(s) => s
                    .trim()
                    .parse()
                    .map(Value::Int)
                    .map_err(|_| format!("ValueError: invalid literal for int() with base 10: {}", str_repr(&s))),
                v => Err(format!("TypeError: int() argument must be a string or a number, not '{}'", v.type_name())),
            },
            "float" => match one(&args)? {
                Value::Str(s) => s
                    .trim()
                    .parse()
                    .map(Value::Float)
                    .map_err(|_| format!("ValueError: could not convert string to float: {}", str_repr(&s))),
                v => v
                    .as_f64()
                    .map(Value::Float)
                    .ok_or_else(|| format!("TypeError: float() argument must be a string or a number, not '{}'", v.type_name())),
            },
            "abs" => match one(&args)? {
                Value::Int(i) => Ok(Value::Int(i.abs())),
                Value::Float(f) => Ok(Value::Float(f.abs())),
                v => Err(format!("TypeError: bad operand type for abs(): '{}'", v.type_name())),
            },
            "sum" => match one(&args)? {
                Value::List(items) => items.into_iter().try_fold(Value::Int(0), |acc, v| binary("+", acc, v)),
                v => Err(format!("TypeError: '{}' object is not iterable", v.type_name())),
            },
            "min" | "max" => {
                let items = match args.as_slice() {
                    [Value::List(items)] => items.clone(),
                    _ => args,
                };
                let mut best: Option<Value> = None;
                for v in items {
                    let x = v.as_f64().ok_or_else(|| format!("TypeError: {name}() needs numbers"))?;
                    let better = match &best {
                        None => true,
                        Some(b) => {
                            let y = b.as_f64().unwrap();
                            if name == "min" { x < y } else { x > y }
                        }
                    };
                    if better {
                        best = Some(v);
                    }
                }
                best.ok_or_else(|| format!("ValueError: {name}() arg is an empty sequence"))
            }
            "range" => {
                let ints: Vec<i64> = args
                    .iter()
                    .map(|a| match a {
                        Value::Int(i) => Ok(*i),
                        v => Err(format!("TypeError: '{}' object cannot be interpreted as an integer", v.type_name())),
                    })
                    .collect::<Result<_, _>>()?;
                let (start, stop) = match ints.as_slice() {
                    [stop] => (0, *stop),
                    [start, stop] => (*start, *stop),
                    _ => return Err("TypeError: range() takes one or two arguments here".into()),
                };
                Ok(Value::List((start..stop.max(start)).map(Value::Int).collect()))
            }
            "sorted" => match one(&args)? {
                Value::List(mut items) => {
                    if items.iter().all(|v| v.as_f64().is_some()) {
                        items.sort_by(|a, b| a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap()));
                    } else if items.iter().all(|v| matches!(v, Value::Str(_))) {
                        items.sort_by_key(Value::display);
                    } else {
                        return Err("TypeError: '<' not supported between these instances".into());
                    }
                    Ok(Value::List(items))
                }
                v => Err(format!("TypeError: '{}' object is not iterable", v.type_name())),
            },
            _ => Err(format!("NameError: name '{name}' is not defined")),
        }
    }
}

fn dotted_name(toks: &[Tok]) -> Result<String, String> {
    let mut out = String::new();
    for t in toks {
        match t {
            Tok::Name(n) => out.push_str(n),
            Tok::Op(".") => out.push('.'),
            _ => return Err("SyntaxError: invalid module name".into()),
        }
    }
    if out.is_empty() {
        return Err("SyntaxError: missing module name".into());
    }
    Ok(out)
}

fn import_items(toks: &[Tok]) -> Result<Vec<(String, Option<String>)>, String> {
    let mut items = Vec::new();
    for chunk in toks.split(|t| *t == Tok::Op(",")) {
        let chunk: Vec<Tok> = chunk
            .iter()
            .filter(|t| !matches!(t, Tok::Op("(" | ")")))
            .cloned()
            .collect();
        let as_pos = chunk.iter().position(|t| matches!(t, Tok::Name(n) if n == "as"));
        let (name_toks, alias) = match as_pos {
            Some(p) => match &chunk[p + 1..] {
                [Tok::Name(a)] => (&chunk[..p], Some(a.clone())),
                _ => return Err("SyntaxError: invalid alias".into()),
            },
            None => (&chunk[..], None),
        };
        items.push((dotted_name(name_toks)?, alias));
    }
    Ok(items)
}

fn binary(op: &str, a: Value, b: Value) -> Result<Value, String> {
    use Value::*;
    let unsupported = |a: &Value, b: &Value| {
        format!(
            "TypeError: unsupported operand type(s) for {op}: '{}' and '{}'",
            a.type_name(),
            b.type_name()
        )
    };
    match (op, &a, &b) {
        ("+", Int(x), Int(y)) => x.checked_add(*y).map(Int).ok_or_else(|| "OverflowError: integer overflow".into()),
        ("-", Int(x), Int(y)) => x.checked_sub(*y).map(Int).ok_or_else(|| "OverflowError: integer overflow".into()),
        ("*", Int(x), Int(y)) => x.checked_mul(*y).map(Int).ok_or_else(|| "OverflowError: integer overflow".into()),
        ("//", Int(_), Int(0)) | ("%", Int(_), Int(0)) => Err("ZeroDivisionError: integer division or modulo by zero".into()),
        ("//", Int(x), Int(y)) => Ok(Int(x.div_euclid(*y) - if (x.rem_euclid(*y) != 0) && (*y < 0) { 1 } else { 0 })),
        ("%", Int(x), Int(y)) => Ok(Int(((x % y) + y) % y)),
        ("+", Str(x), Str(y)) => Ok(Str(format!("{x}{y}"))),
        ("+", List(x), List(y)) => Ok(List(x.iter().chain(y).cloned().collect())),
        ("*", Str(s), Int(n)) | ("*", Int(n), Str(s)) => Ok(Str(s.repeat((*n).max(0) as usize))),
        ("*", List(l), Int(n)) | ("*", Int(n), List(l)) => {
            Ok(List(std::iter::repeat_n(l.clone(), (*n).max(0) as usize).flatten().collect()))
        }
        _ => {
            let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
                return Err(unsupported(&a, &b));
            };
            match op {
                "+" => Ok(Float(x + y)),
                "-" => Ok(Float(x - y)),
                "*" => Ok(Float(x * y)),
                "/" if y == 0.0 => Err("ZeroDivisionError: division by zero".into()),
                "/" => Ok(Float(x / y)),
                "//" | "%" if y == 0.0 => Err("ZeroDivisionError: float division by zero".into()),
                "//" => Ok(Float((x / y).floor())),
                "%" => Ok(Float(x - y * (x / y).floor())),
                _ => Err(unsupported(&a, &b)),
            }
        }
    }
}

fn index(target: &Value, idx: &Value) -> Result<Value, String> {
    match (target, idx) {
        (Value::List(items), Value::Int(i)) => {
            let n = items.len() as i64;
            let j = if *i < 0 { n + i } else { *i };
            items
                .get(usize::try_from(j).map_err(|_| "IndexError: list index out of range".to_string())?)
                .cloned()
                .ok_or_else(|| "IndexError: list index out of range".into())
        }
        (Value::Dict(items), key) => items
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| format!("KeyError: {}", key.repr())),
        (Value::Str(s), Value::Int(i)) => {
            let chars: Vec<char> = s.chars().collect();
            let n = chars.len() as i64;
            let j = if *i < 0 { n + i } else { *i };
            usize::try_from(j)
                .ok()
                .and_then(|j| chars.get(j))
                .map(|c| Value::Str(c.to_string()))
                .ok_or_else(|| "IndexError: string index out of range".into())
        }
        (t, _) => Err(format!("TypeError: '{}' object is not subscriptable", t.type_name())),
    }
}

fn call_method(target: &mut Value, method: &str, args: Vec<Value>) -> Result<Value, String> {
    match (target, method, args.as_slice()) {
        (Value::List(items), "append", [v]) => {
            items.push(v.clone());
            Ok(Value::None)
        }
        (Value::List(items), "extend", [Value::List(more)]) => {
            items.extend(more.iter().cloned());
            Ok(Value::None)
        }
        (Value::List(items), "pop", []) => items.pop().ok_or_else(|| "IndexError: pop from empty list".into()),
        (Value::Dict(items), "get", [k]) | (Value::Dict(items), "get", [k, _]) => Ok(items
            .iter()
            .find(|(ek, _)| ek == k)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| args.get(1).cloned().unwrap_or(Value::None))),
        (Value::Dict(items), "keys", []) => Ok(Value::List(items.iter().map(|(k, _)| k.clone()).collect())),
        (Value::Dict(items), "values", []) => Ok(Value::List(items.iter().map(|(_, v)| v.clone()).collect())),
        (Value::Str(s), "upper", []) => Ok(Value::Str(s.to_uppercase())),
        (Value::Str(s), "lower", []) => Ok(Value::Str(s.to_lowercase())),
        (Value::Str(s), "strip", []) => Ok(Value::Str(s.trim().to_string())),
        (Value::Str(s), "split", []) => Ok(Value::List(s.split_whitespace().map(|p| Value::Str(p.into())).collect())),
        (Value::Str(s), "split", [Value::Str(sep)]) => {
            Ok(Value::List(s.split(sep.as_str()).map(|p| Value::Str(p.into())).collect()))
        }
        (Value::Str(sep), "join", [Value::List(parts)]) => {
            let strs: Result<Vec<String>, String> = parts
                .iter()
                .map(|p| match p {
                    Value::Str(s) => Ok(s.clone()),
                    v => Err(format!("TypeError: sequence item: expected str instance, {} found", v.type_name())),
                })
                .collect();
            Ok(Value::Str(strs?.join(sep)))
        }
        (Value::Opaque(module), m, _) => Err(format!(
            "NotImplementedError: the in-process kernel cannot call `{module}.{m}`"
        )),
        (t, m, _) => Err(format!("AttributeError: '{}' object has no attribute '{m}'", t.type_name())),
    }
}

#[derive(Debug, Default)]
struct KernelState {
    interp: FakeInterpreter,
    outbox: VecDeque<String>,
    started: bool,
    requests_seen: usize,
    /// Reply lines to send verbatim instead of executing, keyed by request number (1-based).
    injected: HashMap<usize, String>,
}

/// NDJSON transport backed by a [`FakeInterpreter`].
///
/// Clones share one kernel, so a test can keep a handle after giving the
/// transport away.
#[derive(Debug, Default, Clone)]
pub struct FakeKernel {
    state: Arc<Mutex<KernelState>>,
}

impl FakeKernel {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, KernelState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Current user variables and their reprs.
    pub fn variables(&self) -> IndexMap<String, String> {
        self.lock().interp.reprs()
    }

    pub fn requests_seen(&self) -> usize {
        self.lock().requests_seen
    }

    /// Answer request number `n` with `line` instead of a real reply.
    pub fn inject_reply(&mut self, n: usize, line: impl Into<String>) {
        self.lock().injected.insert(n, line.into());
    }
}

impl KernelState {
    fn handle(&mut self, req: KernelRequest) -> Option<KernelResponse> {
        match req.op {
            KernelOp::Reset => {
                self.interp.reset();
                Some(KernelResponse::ok(req.id))
            }
            KernelOp::Shutdown => {
                self.started = false;
                Some(KernelResponse::ok(req.id))
            }
            KernelOp::Exec => {
                let code = req.code.unwrap_or_default();
                if code.contains(HANG_MARKER) {
                    return None;
                }
                let before = self.interp.reprs();
                let outcome = self.interp.run(&code);
                let after = self.interp.reprs();
                let max = req.options.max_var_chars.max(1);
                let updated_vars = after
                    .iter()
                    .filter(|(name, repr)| !name.starts_with("__") && before.get(*name) != Some(*repr))
                    .map(|(name, repr)| {
                        let truncated = repr.chars().count() > max;
                        WireVar {
                            name: name.clone(),
                            repr: if truncated { repr.chars().take(max).collect() } else { repr.clone() },
                            truncated,
                        }
                    })
                    .collect();
                let deleted_vars = before
                    .keys()
                    .filter(|name| !after.contains_key(*name))
                    .cloned()
                    .collect();
                let error = outcome.error.map(|(line, message)| WireError {
                    kind: ErrorKind::Execution,
                    message,
                    line: Some(line),
                });
                Some(KernelResponse {
                    id: req.id,
                    ok: error.is_none(),
                    stdout: outcome.stdout,
                    updated_vars,
                    deleted_vars,
                    error,
                    duration_s: 0.0,
                })
            }
        }
    }
}

impl KernelTransport for FakeKernel {
    fn start(&mut self) -> Result<(), TransportError> {
        let mut st = self.lock();
        st.interp.reset();
        st.outbox.clear();
        st.started = true;
        st.outbox
            .push_back(serde_json::to_string(&Handshake::current()).expect("handshake serializes"));
        Ok(())
    }

    fn send_line(&mut self, line: &str) -> Result<(), TransportError> {
        let mut st = self.lock();
        if !st.started {
            return Err(TransportError::Closed);
        }
        st.requests_seen += 1;
        let n = st.requests_seen;
        if let Some(reply) = st.injected.remove(&n) {
            st.outbox.push_back(reply);
            return Ok(());
        }
        let reply = match serde_json::from_str::<KernelRequest>(line) {
            Ok(req) => st.handle(req),
            Err(e) => Some(KernelResponse::protocol_error("unknown", format!("malformed request: {e}"))),
        };
        if let Some(reply) = reply {
            st.outbox
                .push_back(serde_json::to_string(&reply).expect("responses serialize"));
        }
        Ok(())
    }

    fn recv_line(&mut self, _timeout: Duration) -> Result<String, TransportError> {
        self.lock().outbox.pop_front().ok_or(TransportError::Timeout)
    }

    fn kill(&mut self) {
        let mut st = self.lock();
        st.started = false;
        st.outbox.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(interp: &mut FakeInterpreter, code: &str) -> RunOutcome {
        interp.run(code)
    }

    #[test]
    fn reprs_match_python() {
        let mut i = FakeInterpreter::new();
        run(&mut i, "a = [1, 'x', None, True, 2.5, {'k': [1]}]\nb = \"it's\"\nc = 3 / 2\nd = 4 / 2");
        assert_eq!(i.get("a").unwrap().repr(), "[1, 'x', None, True, 2.5, {'k': [1]}]");
        assert_eq!(i.get("b").unwrap().repr(), "\"it's\"");
        assert_eq!(i.get("c").unwrap().repr(), "1.5");
        assert_eq!(i.get("d").unwrap().repr(), "2.0");
    }

    #[test]
    fn arithmetic_follows_python() {
        let mut i = FakeInterpreter::new();
        run(&mut i, "a = -7 // 2\nb = -7 % 3\nc = 2 + 3 * 4\nd = (2 + 3) * 4\ne = 'ab' * 2");
        let reprs = i.reprs();
        assert_eq!(reprs["a"], "-4");
        assert_eq!(reprs["b"], "2");
        assert_eq!(reprs["c"], "14");
        assert_eq!(reprs["d"], "20");
        assert_eq!(reprs["e"], "'abab'");
    }

    #[test]
    fn errors_report_failing_line_and_keep_prior_state() {
        let mut i = FakeInterpreter::new();
        let out = run(&mut i, "x = 1\nprint('a')\ny = x / 0\nz = 2\nw = 3");
        assert_eq!(out.stdout, "a\n");
        assert_eq!(out.error, Some((3, "ZeroDivisionError: division by zero".into())));
        assert!(i.get("x").is_some());
        assert!(i.get("z").is_none());
    }

    #[test]
    fn blocks_and_module_calls_are_rejected() {
        let mut i = FakeInterpreter::new();
        assert!(run(&mut i, "for k in x:\n    pass").error.unwrap().1.starts_with("SyntaxError"));
        let out = run(&mut i, "import numpy as np\nnp.zeros(3)");
        assert_eq!(out.error.unwrap().0, 2);
        assert_eq!(i.get("np").unwrap().repr(), "<module 'numpy'>");
    }

    #[test]
    fn methods_mutate_in_place() {
        let mut i = FakeInterpreter::new();
        let out = run(&mut i, "y = [1, 2, 3]\ny.append(4)\nprint(len(y), y[-1], ', '.join(['a', 'b']))");
        assert_eq!(out.error, None);
        assert_eq!(out.stdout, "4 4 a, b\n");
        assert_eq!(i.get("y").unwrap().repr(), "[1, 2, 3, 4]");
    }
}
