//! Seeded generator of small, syntactically valid programs in several
//! languages. Used for fixture corpora, acceptance checks and benchmarks.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::rng::StreamRng;
use crate::syntax::{LanguageId, SourceDocument};

/// Languages the generator can print.
pub const SYNTH_LANGUAGES: &[&str] = &["python", "rust", "javascript", "typescript", "go", "java", "cpp", "ruby"];

#[derive(Debug, Clone)]
enum Expr {
    Var(String),
    Int(i64),
    Bin(Box<Expr>, &'static str, Box<Expr>),
    Call(String, Vec<Expr>),
}

#[derive(Debug, Clone)]
enum Stmt {
    Let(String, Expr),
    Assign(String, Expr),
    If(Expr, Vec<Stmt>, Option<Vec<Stmt>>),
    While(Expr, Vec<Stmt>),
    Call(String, Vec<Expr>),
    Comment(String),
    Return(Expr),
}

#[derive(Debug, Clone)]
struct Func {
    name: String,
    params: Vec<String>,
    body: Vec<Stmt>,
}

const WORDS: &[&str] = &[
    "total", "count", "index", "value", "limit", "offset", "size", "acc", "delta", "step", "width", "height",
    "score", "left", "right", "depth", "head", "tail", "item", "node",
];

struct Gen<'r> {
    rng: &'r mut StreamRng,
    funcs: Vec<(String, usize)>,
    fresh: usize,
}

impl Gen<'_> {
    fn name(&mut self) -> String {
        self.fresh += 1;
        format!("{}{}", WORDS.choose(self.rng).expect("non-empty"), self.fresh)
    }

    fn expr(&mut self, scope: &[String], depth: u32) -> Expr {
        let roll = self.rng.random_range(0..10);
        if depth == 0 || roll < 4 {
            if !scope.is_empty() && self.rng.random_bool(0.6) {
                return Expr::Var(scope.choose(self.rng).expect("non-empty").clone());
            }
            return Expr::Int(self.rng.random_range(0..1000));
        }
        if roll < 8 || self.funcs.is_empty() {
            let op = *["+", "-", "*", "+"].choose(self.rng).expect("non-empty");
            return Expr::Bin(Box::new(self.expr(scope, depth - 1)), op, Box::new(self.expr(scope, depth - 1)));
        }
        let (f, arity) = self.funcs.choose(self.rng).expect("non-empty").clone();
        let args = (0..arity).map(|_| self.expr(scope, depth - 1)).collect();
        Expr::Call(f, args)
    }

    fn cond(&mut self, scope: &[String]) -> Expr {
        let op = *["<", ">", "=="].choose(self.rng).expect("non-empty");
        Expr::Bin(Box::new(self.expr(scope, 1)), op, Box::new(self.expr(scope, 1)))
    }

    fn block(&mut self, scope: &mut Vec<String>, depth: u32, len: usize) -> Vec<Stmt> {
        let mark = scope.len();
        let mut out = Vec::new();
        for _ in 0..len {
            let roll = self.rng.random_range(0..12);
            let s = match roll {
                0..=2 => {
                    let n = self.name();
                    let e = self.expr(scope, 2);
                    scope.push(n.clone());
                    Stmt::Let(n, e)
                }
                3..=4 if !scope.is_empty() => {
                    let v = scope.choose(self.rng).expect("non-empty").clone();
                    Stmt::Assign(v, self.expr(scope, 2))
                }
                5..=6 if depth > 0 => {
                    let c = self.cond(scope);
                    let n = self.rng.random_range(1..4);
                    let then = self.block(scope, depth - 1, n);
                    let other = self.rng.random_bool(0.4).then(|| {
                        let n = self.rng.random_range(1..3);
                        self.block(scope, depth - 1, n)
                    });
                    Stmt::If(c, then, other)
                }
                7 if depth > 0 => {
                    let c = self.cond(scope);
                    let n = self.rng.random_range(1..4);
                    Stmt::While(c, self.block(scope, depth - 1, n))
                }
                8 if !self.funcs.is_empty() => {
                    let (f, arity) = self.funcs.choose(self.rng).expect("non-empty").clone();
                    Stmt::Call(f, (0..arity).map(|_| self.expr(scope, 1)).collect())
                }
                9 => Stmt::Comment(format!("{} {}", WORDS.choose(self.rng).unwrap(), WORDS.choose(self.rng).unwrap())),
                _ => {
                    let n = self.name();
                    let e = self.expr(scope, 1);
                    scope.push(n.clone());
                    Stmt::Let(n, e)
                }
            };
            out.push(s);
        }
        scope.truncate(mark);
        out
    }

    fn func(&mut self) -> Func {
        let name = format!("fn_{}", self.name());
        let arity = self.rng.random_range(0..4);
        let mut scope: Vec<String> = (0..arity).map(|_| self.name()).collect();
        let params = scope.clone();
        let len = self.rng.random_range(2..8);
        let mut body = self.block(&mut scope, 3, len);
        body.push(Stmt::Return(self.expr(&scope, 2)));
        self.funcs.push((name.clone(), arity));
        Func { name, params, body }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Style {
    Python,
    Ruby,
    Rust,
    JavaScript,
    TypeScript,
    Go,
    Java,
    Cpp,
}

impl Style {
    fn of(lang: &str) -> Option<Style> {
        Some(match lang {
            "python" => Style::Python,
            "ruby" => Style::Ruby,
            "rust" => Style::Rust,
            "javascript" => Style::JavaScript,
            "typescript" => Style::TypeScript,
            "go" => Style::Go,
            "java" => Style::Java,
            "cpp" => Style::Cpp,
            _ => return None,
        })
    }

    fn braces(self) -> bool {
        !matches!(self, Style::Python | Style::Ruby)
    }

    fn ext(self) -> &'static str {
        match self {
            Style::Python => "py",
            Style::Ruby => "rb",
            Style::Rust => "rs",
            Style::JavaScript => "js",
            Style::TypeScript => "ts",
            Style::Go => "go",
            Style::Java => "java",
            Style::Cpp => "cpp",
        }
    }
}

struct Printer {
    style: Style,
    out: String,
}

impl Printer {
    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Var(v) => v.clone(),
            Expr::Int(i) => i.to_string(),
            Expr::Bin(a, op, b) => format!("({} {} {})", self.expr(a), op, self.expr(b)),
            Expr::Call(f, args) => format!("{}({})", f, args.iter().map(|a| self.expr(a)).collect::<Vec<_>>().join(", ")),
        }
    }

    fn cond(&self, e: &Expr) -> String {
        // Rust and Go reject redundant parentheses only stylistically; keep
        // the outer pair off so the output looks idiomatic.
        let s = self.expr(e);
        match self.style {
            Style::Rust | Style::Go | Style::Python | Style::Ruby => s[1..s.len() - 1].to_string(),
            _ => s,
        }
    }

    fn stmts(&mut self, body: &[Stmt], indent: usize) {
        for s in body {
            self.stmt(s, indent);
        }
    }

    fn stmt(&mut self, s: &Stmt, ind: usize) {
        let st = self.style;
        let semi = if matches!(st, Style::Python | Style::Ruby | Style::Go) { "" } else { ";" };
        match s {
            Stmt::Let(n, e) => {
                let e = self.expr(e);
                let text = match st {
                    Style::Python | Style::Ruby => format!("{n} = {e}"),
                    Style::Rust => format!("let mut {n} = {e};"),
                    Style::JavaScript => format!("let {n} = {e};"),
                    Style::TypeScript => format!("let {n}: number = {e};"),
                    Style::Go => format!("{n} := {e}"),
                    Style::Java | Style::Cpp => format!("long {n} = {e};"),
                };
                self.line(ind, &text);
            }
            Stmt::Assign(n, e) => {
                let e = self.expr(e);
                self.line(ind, &format!("{n} = {e}{semi}"));
            }
            Stmt::Call(f, args) => {
                let e = self.expr(&Expr::Call(f.clone(), args.clone()));
                self.line(ind, &format!("{e}{semi}"));
            }
            Stmt::Comment(c) => {
                let mark = if matches!(st, Style::Python | Style::Ruby) { "#" } else { "//" };
                self.line(ind, &format!("{mark} {c}"));
            }
            Stmt::Return(e) => {
                let e = self.expr(e);
                self.line(ind, &format!("return {e}{semi}"));
            }
            Stmt::If(c, then, other) => {
                let c = self.cond(c);
                match st {
                    Style::Python => {
                        self.line(ind, &format!("if {c}:"));
                        self.stmts(then, ind + 1);
                        if let Some(o) = other {
                            self.line(ind, "else:");
                            self.stmts(o, ind + 1);
                        }
                    }
                    Style::Ruby => {
                        self.line(ind, &format!("if {c}"));
                        self.stmts(then, ind + 1);
                        if let Some(o) = other {
                            self.line(ind, "else");
                            self.stmts(o, ind + 1);
                        }
                        self.line(ind, "end");
                    }
                    _ => {
                        self.line(ind, &format!("if {c} {{"));
                        self.stmts(then, ind + 1);
                        if let Some(o) = other {
                            self.line(ind, "} else {");
                            self.stmts(o, ind + 1);
                        }
                        self.line(ind, "}");
                    }
                }
            }
            Stmt::While(c, body) => {
                let c = self.cond(c);
                match st {
                    Style::Python => {
                        self.line(ind, &format!("while {c}:"));
                        self.stmts(body, ind + 1);
                    }
                    Style::Ruby => {
                        self.line(ind, &format!("while {c}"));
                        self.stmts(body, ind + 1);
                        self.line(ind, "end");
                    }
                    Style::Go => {
                        self.line(ind, &format!("for {c} {{"));
                        self.stmts(body, ind + 1);
                        self.line(ind, "}");
                    }
                    _ => {
                        self.line(ind, &format!("while {c} {{"));
                        self.stmts(body, ind + 1);
                        self.line(ind, "}");
                    }
                }
            }
        }
    }

    fn func(&mut self, f: &Func, ind: usize) {
        let st = self.style;
        let p = &f.params;
        let typed = |ty: &str, sep: &str| p.iter().map(|x| format!("{x}{sep}{ty}")).collect::<Vec<_>>().join(", ");
        let header = match st {
            Style::Python => format!("def {}({}):", f.name, p.join(", ")),
            Style::Ruby => format!("def {}({})", f.name, p.join(", ")),
            Style::Rust => format!("fn {}({}) -> i64 {{", f.name, typed("i64", ": ")),
            Style::JavaScript => format!("function {}({}) {{", f.name, p.join(", ")),
            Style::TypeScript => format!("function {}({}): number {{", f.name, typed("number", ": ")),
            Style::Go => format!("func {}({}) int {{", f.name, typed("int", " ")),
            Style::Java => format!(
                "static long {}({}) {{",
                f.name,
                p.iter().map(|x| format!("long {x}")).collect::<Vec<_>>().join(", ")
            ),
            Style::Cpp => format!(
                "long {}({}) {{",
                f.name,
                p.iter().map(|x| format!("long {x}")).collect::<Vec<_>>().join(", ")
            ),
        };
        self.line(ind, &header);
        self.stmts(&f.body, ind + 1);
        if st.braces() {
            self.line(ind, "}");
        } else if st == Style::Ruby {
            self.line(ind, "end");
        }
    }
}

/// Generates one program with `n_funcs` functions. Returns `None` for
/// languages the generator does not print.
pub fn program(lang: &str, n_funcs: usize, rng: &mut StreamRng) -> Option<String> {
    let style = Style::of(lang)?;
    let mut g = Gen { rng, funcs: Vec::new(), fresh: 0 };
    let funcs: Vec<Func> = (0..n_funcs).map(|_| g.func()).collect();
    let mut p = Printer { style, out: String::new() };
    let ind = match style {
        Style::Go => {
            p.line(0, "package main");
            p.line(0, "");
            0
        }
        Style::Java => {
            p.line(0, "public class Generated {");
            1
        }
        Style::Cpp => {
            p.line(0, "#include <cstdio>");
            p.line(0, "");
            0
        }
        _ => 0,
    };
    for (i, f) in funcs.iter().enumerate() {
        if i > 0 {
            p.line(0, "");
        }
        p.func(f, ind);
    }
    if style == Style::Java {
        p.line(0, "}");
    }
    Some(p.out)
}

/// A deterministic corpus of `n` documents cycling through `langs`.
pub fn corpus(n: usize, langs: &[&str], seed: u64) -> Vec<SourceDocument> {
    (0..n)
        .map(|i| {
            let lang = langs[i % langs.len()];
            let style = Style::of(lang).unwrap_or_else(|| panic!("synth cannot print {lang}"));
            let path = format!("gen/{lang}/f{i:06}.{}", style.ext());
            let mut rng = StreamRng::new(seed, &path);
            let n_funcs = rng.random_range(1..6);
            let src = program(lang, n_funcs, &mut rng).expect("supported language");
            SourceDocument::new(path, LanguageId::new(lang), src)
        })
        .collect()
}

/// Truncates `src` part-way through and appends unbalanced brackets, which
/// every supported grammar reports as an error.
pub fn break_source(src: &str, rng: &mut StreamRng) -> String {
    let cut = if src.is_empty() { 0 } else { rng.random_range(src.len() / 3..src.len().max(1)) };
    let mut cut = cut.min(src.len());
    while !src.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}\n)) ]] (( {{{{ @@\n", &src[..cut])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    #[test]
    fn generated_programs_parse_cleanly() {
        for doc in corpus(160, SYNTH_LANGUAGES, 3) {
            let tree = parse(&doc).unwrap();
            assert!(!tree.has_error(), "{} failed to parse:\n{}", doc.path, doc.content);
        }
    }

    #[test]
    fn broken_programs_have_errors() {
        let mut rng = StreamRng::new(5, "break");
        for doc in corpus(80, SYNTH_LANGUAGES, 4) {
            let broken = SourceDocument::new(doc.path.clone(), doc.lang.clone(), break_source(&doc.content, &mut rng));
            assert!(parse(&broken).unwrap().has_error(), "{}", broken.content);
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(corpus(10, &["python"], 1), corpus(10, &["python"], 1));
    }
}
