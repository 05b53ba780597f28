//! Single-pass parser for the propositional STRIPS subset of PDDL written
//! by [`crate::ama1::emit_pddl`]. See `docs/pddl-subset.md`.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};

use super::{BitsetState, ParsedTask, TaskAction};

const SUPPORTED_REQUIREMENTS: [&str; 2] = [":strips", ":negative-preconditions"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

/// Lazy tokenizer, so large generated domains are never held as a token list.
struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn token(&mut self) -> Token {
        loop {
            let (line, column) = (self.line, self.column);
            let Some(&c) = self.chars.peek() else {
                return Token {
                    tok: Tok::Eof,
                    line,
                    column,
                };
            };
            match c {
                '(' | ')' => {
                    self.bump();
                    let tok = if c == '(' { Tok::Open } else { Tok::Close };
                    return Token { tok, line, column };
                }
                ';' => {
                    while self.chars.peek().is_some_and(|&c| c != '\n') {
                        self.bump();
                    }
                }
                c if c.is_whitespace() => {
                    self.bump();
                }
                _ => {
                    let mut atom = String::new();
                    while let Some(&c) = self.chars.peek() {
                        if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                            break;
                        }
                        atom.push(c.to_ascii_lowercase());
                        self.bump();
                    }
                    return Token {
                        tok: Tok::Atom(atom),
                        line,
                        column,
                    };
                }
            }
        }
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    ahead: VecDeque<Token>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser {
            lexer: Lexer::new(text),
            ahead: VecDeque::with_capacity(2),
        }
    }

    fn peek_nth(&mut self, n: usize) -> &Token {
        while self.ahead.len() <= n {
            let t = self.lexer.token();
            self.ahead.push_back(t);
        }
        &self.ahead[n]
    }

    fn peek(&mut self) -> &Token {
        self.peek_nth(0)
    }

    fn next(&mut self) -> Token {
        self.peek();
        let t = self.ahead.pop_front().expect("filled by peek");
        if t.tok == Tok::Eof {
            self.ahead.push_front(t.clone());
        }
        t
    }

    fn error_at(t: &Token, message: impl Into<String>) -> Error {
        let mut message = message.into();
        if t.tok == Tok::Eof {
            message.push_str(" (found end of input)");
        }
        Error::Syntax {
            line: t.line,
            column: t.column,
            message,
        }
    }

    fn open(&mut self) -> Result<()> {
        let t = self.next();
        match t.tok {
            Tok::Open => Ok(()),
            _ => Err(Self::error_at(&t, "expected `(`")),
        }
    }

    fn close(&mut self) -> Result<()> {
        let t = self.next();
        match t.tok {
            Tok::Close => Ok(()),
            _ => Err(Self::error_at(&t, "expected `)`")),
        }
    }

    fn atom(&mut self, what: &str) -> Result<(String, Token)> {
        let t = self.next();
        match &t.tok {
            Tok::Atom(a) => Ok((a.clone(), t)),
            _ => Err(Self::error_at(&t, format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        let t = self.next();
        match &t.tok {
            Tok::Atom(a) if a == kw => Ok(()),
            _ => Err(Self::error_at(&t, format!("expected `{kw}`"))),
        }
    }

    fn peek_is_close(&mut self) -> bool {
        self.peek().tok == Tok::Close
    }

    fn end(&mut self) -> Result<()> {
        let t = self.next();
        match t.tok {
            Tok::Eof => Ok(()),
            _ => Err(Self::error_at(&t, "unexpected input after the closing `)`")),
        }
    }

    /// `(define (<kind> <name>)`
    fn header(&mut self, kind: &str) -> Result<String> {
        self.open()?;
        self.keyword("define")?;
        self.open()?;
        self.keyword(kind)?;
        let (name, _) = self.atom(&format!("{kind} name"))?;
        self.close()?;
        Ok(name)
    }

    /// `(<name>)` after the opening paren has been consumed.
    fn atom_body(&mut self, index: &HashMap<String, usize>) -> Result<usize> {
        let (name, t) = self.atom("a proposition name")?;
        if name.starts_with('?') {
            return Err(Self::error_at(&t, "parameters are not supported"));
        }
        let i = *index
            .get(&name)
            .ok_or_else(|| Self::error_at(&t, format!("unknown predicate `{name}`")))?;
        if !self.peek_is_close() {
            return Err(Self::error_at(self.peek(), "predicates take no arguments"));
        }
        self.close()?;
        Ok(i)
    }

    /// `(p)` or `(not (p))`; sets the bit in `pos` or `neg`.
    fn literal(&mut self, index: &HashMap<String, usize>, pos: &mut BitsetState, neg: &mut BitsetState) -> Result<()> {
        let start = self.peek().clone();
        self.open()?;
        let negated = matches!(&self.peek().tok, Tok::Atom(a) if a == "not");
        let i = if negated {
            self.next();
            self.open()?;
            let i = self.atom_body(index)?;
            self.close()?;
            i
        } else {
            self.atom_body(index)?
        };
        let (set, other) = if negated { (neg, pos) } else { (pos, neg) };
        if other.get(i) {
            return Err(Self::error_at(&start, format!("proposition `{i}` required both true and false")));
        }
        set.set(i, true);
        Ok(())
    }

    /// `(and <literal>*)` or a single literal.
    fn conjunction(&mut self, index: &HashMap<String, usize>, pos: &mut BitsetState, neg: &mut BitsetState) -> Result<()> {
        let is_and = self.peek().tok == Tok::Open
            && matches!(&self.peek_nth(1).tok, Tok::Atom(a) if a == "and");
        if !is_and {
            return self.literal(index, pos, neg);
        }
        self.open()?;
        self.next();
        while !self.peek_is_close() {
            self.literal(index, pos, neg)?;
        }
        self.close()
    }
}

struct Domain {
    name: String,
    propositions: Vec<String>,
    index: HashMap<String, usize>,
    actions: Vec<TaskAction>,
}

fn parse_domain(text: &str) -> Result<Domain> {
    let mut p = Parser::new(text);
    let name = p.header("domain")?;
    let mut propositions: Option<Vec<String>> = None;
    let mut index = HashMap::new();
    let mut actions: Vec<TaskAction> = Vec::new();
    let mut action_names = HashSet::new();
    while !p.peek_is_close() {
        p.open()?;
        let (section, t) = p.atom("a section keyword")?;
        match section.as_str() {
            ":requirements" => {
                while !p.peek_is_close() {
                    let (req, t) = p.atom("a requirement")?;
                    if !SUPPORTED_REQUIREMENTS.contains(&req.as_str()) {
                        return Err(Parser::error_at(&t, format!("unsupported requirement `{req}`")));
                    }
                }
            }
            ":predicates" => {
                if propositions.is_some() {
                    return Err(Parser::error_at(&t, "duplicate `:predicates` section"));
                }
                let mut names = Vec::new();
                while !p.peek_is_close() {
                    p.open()?;
                    let (name, t) = p.atom("a predicate name")?;
                    if !p.peek_is_close() {
                        return Err(Parser::error_at(p.peek(), "predicates take no arguments"));
                    }
                    p.close()?;
                    if index.insert(name.clone(), names.len()).is_some() {
                        return Err(Parser::error_at(&t, format!("duplicate predicate `{name}`")));
                    }
                    names.push(name);
                }
                propositions = Some(names);
            }
            ":action" => {
                let n = propositions
                    .as_ref()
                    .ok_or_else(|| Parser::error_at(&t, "`:action` before `:predicates`"))?
                    .len();
                let (name, t) = p.atom("an action name")?;
                if !action_names.insert(name.clone()) {
                    return Err(Parser::error_at(&t, format!("duplicate action `{name}`")));
                }
                let mut a = TaskAction {
                    name,
                    pos_pre: BitsetState::zeros(n),
                    neg_pre: BitsetState::zeros(n),
                    add: BitsetState::zeros(n),
                    del: BitsetState::zeros(n),
                };
                let mut seen = HashSet::new();
                while !p.peek_is_close() {
                    let (kw, t) = p.atom("`:parameters`, `:precondition` or `:effect`")?;
                    if !seen.insert(kw.clone()) {
                        return Err(Parser::error_at(&t, format!("duplicate `{kw}`")));
                    }
                    match kw.as_str() {
                        ":parameters" => {
                            p.open()?;
                            if !p.peek_is_close() {
                                return Err(Parser::error_at(p.peek(), "parameters are not supported"));
                            }
                            p.close()?;
                        }
                        ":precondition" => p.conjunction(&index, &mut a.pos_pre, &mut a.neg_pre)?,
                        ":effect" => p.conjunction(&index, &mut a.add, &mut a.del)?,
                        _ => return Err(Parser::error_at(&t, format!("unsupported action field `{kw}`"))),
                    }
                }
                actions.push(a);
            }
            _ => return Err(Parser::error_at(&t, format!("unsupported construct `{section}`"))),
        }
        p.close()?;
    }
    p.close()?;
    p.end()?;
    Ok(Domain {
        name,
        propositions: propositions.unwrap_or_default(),
        index,
        actions,
    })
}

/// Parses a domain and a problem into a task.
pub fn parse_pddl(domain_text: &str, problem_text: &str) -> Result<ParsedTask> {
    let domain = parse_domain(domain_text)?;
    let n = domain.propositions.len();
    let mut p = Parser::new(problem_text);
    let problem_name = p.header("problem")?;
    let mut init = BitsetState::zeros(n);
    let mut goal_pos = BitsetState::zeros(n);
    let mut goal_neg = BitsetState::zeros(n);
    let mut seen = HashSet::new();
    while !p.peek_is_close() {
        p.open()?;
        let (section, t) = p.atom("a section keyword")?;
        if !seen.insert(section.clone()) {
            return Err(Parser::error_at(&t, format!("duplicate `{section}`")));
        }
        match section.as_str() {
            ":domain" => {
                let (name, t) = p.atom("a domain name")?;
                if name != domain.name {
                    return Err(Parser::error_at(
                        &t,
                        format!("problem refers to domain `{name}`, expected `{}`", domain.name),
                    ));
                }
            }
            ":init" => {
                while !p.peek_is_close() {
                    p.open()?;
                    if matches!(&p.peek().tok, Tok::Atom(a) if a == "not") {
                        return Err(Parser::error_at(p.peek(), "negative literals are not allowed in `:init`"));
                    }
                    let i = p.atom_body(&domain.index)?;
                    init.set(i, true);
                }
            }
            ":goal" => p.conjunction(&domain.index, &mut goal_pos, &mut goal_neg)?,
            _ => return Err(Parser::error_at(&t, format!("unsupported construct `{section}`"))),
        }
        p.close()?;
    }
    p.close()?;
    p.end()?;
    if !seen.contains(":domain") {
        return Err(Parser::error_at(p.peek(), "problem lacks `:domain`"));
    }
    ParsedTask::new(
        &domain.name,
        &problem_name,
        domain.propositions,
        domain.actions,
        init,
        goal_pos,
        goal_neg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOMAIN: &str = "(define (domain d)\n  (:requirements :strips :negative-preconditions)\n  (:predicates (p) (q))\n  (:action go\n    :parameters ()\n    :precondition (and (p) (not (q)))\n    :effect (and (q) (not (p)))))\n";
    const PROBLEM: &str = "(define (problem x) (:domain d) (:init (p)) (:goal (and (q) (not (p)))))";

    fn syntax(e: Error) -> (usize, usize, String) {
        match e {
            Error::Syntax { line, column, message } => (line, column, message),
            other => panic!("expected a syntax error, got {other}"),
        }
    }

    #[test]
    fn parses_a_small_task() {
        let t = parse_pddl(DOMAIN, PROBLEM).unwrap();
        assert_eq!(t.propositions, ["p", "q"]);
        let a = &t.actions[0];
        assert_eq!((a.pos_pre.to_string(), a.neg_pre.to_string()), ("10".into(), "01".into()));
        assert_eq!((a.add.to_string(), a.del.to_string()), ("01".into(), "10".into()));
        assert_eq!(t.init.to_string(), "10");
        assert!(t.is_goal(&a.apply(&t.init)));
    }

    #[test]
    fn truncated_input_fails_at_end() {
        let (line, column, message) = syntax(parse_pddl("(define (domain", PROBLEM).unwrap_err());
        assert_eq!((line, column), (1, 16));
        assert!(message.contains("end of input"), "{message}");
    }

    #[test]
    fn rejections_carry_positions() {
        let unknown_req = DOMAIN.replace(":negative-preconditions", ":adl");
        let (line, column, msg) = syntax(parse_pddl(&unknown_req, PROBLEM).unwrap_err());
        assert_eq!((line, column), (2, 26));
        assert!(msg.contains(":adl"));

        let unknown_pred = DOMAIN.replace("(not (q)))", "(not (r)))");
        let (line, _, msg) = syntax(parse_pddl(&unknown_pred, PROBLEM).unwrap_err());
        assert_eq!(line, 6);
        assert!(msg.contains("unknown predicate `r`"));

        let dup = format!("{}\n  (:action go :effect (p)))\n", DOMAIN.strip_suffix(")\n").unwrap());
        let (line, column, msg) = syntax(parse_pddl(&dup, PROBLEM).unwrap_err());
        assert_eq!((line, column), (8, 12));
        assert!(msg.contains("duplicate action"));

        let lifted = DOMAIN.replace("(p) (q))", "(p ?x) (q))");
        assert!(syntax(parse_pddl(&lifted, PROBLEM).unwrap_err()).2.contains("no arguments"));

        let neg_init = PROBLEM.replace("(:init (p))", "(:init (not (p)))");
        assert!(syntax(parse_pddl(DOMAIN, &neg_init).unwrap_err()).2.contains("negative"));

        let wrong_domain = PROBLEM.replace("(:domain d)", "(:domain e)");
        assert!(syntax(parse_pddl(DOMAIN, &wrong_domain).unwrap_err()).2.contains("`e`"));

        let trailing = format!("{DOMAIN} (");
        assert!(syntax(parse_pddl(&trailing, PROBLEM).unwrap_err()).2.contains("after"));
    }

    #[test]
    fn comments_and_case_are_ignored() {
        let d = format!("; header\n{}", DOMAIN.replace("(p) (q)", "(P) ; first\n (q)"));
        assert_eq!(parse_pddl(&d, PROBLEM).unwrap(), parse_pddl(DOMAIN, PROBLEM).unwrap());
    }

    #[test]
    fn contradictory_literals_are_rejected() {
        let bad = DOMAIN.replace("(and (p) (not (q)))", "(and (p) (not (p)))");
        assert!(syntax(parse_pddl(&bad, PROBLEM).unwrap_err()).2.contains("both"));
    }
}
