use std::collections::HashSet;
use std::fmt;

use super::ast::{Argument, ControlFlow, PCodePlan, PlanEntity, PlanStep};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    EmptyInput,
    MalformedStep(String),
    DuplicateStepId(u32),
    UnresolvedEntityRef(String),
    DanglingElse,
}

/// Parse failure with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.column)?;
        match &self.kind {
            ParseErrorKind::EmptyInput => write!(f, "empty plan"),
            ParseErrorKind::MalformedStep(reason) => write!(f, "malformed step: {reason}"),
            ParseErrorKind::DuplicateStepId(id) => write!(f, "duplicate step id {id}"),
            ParseErrorKind::UnresolvedEntityRef(name) => {
                write!(f, "unresolved entity reference ${name}")
            }
            ParseErrorKind::DanglingElse => write!(f, "else without a preceding if step"),
        }
    }
}

/// Parse plan source text.
///
/// One step per line (`Step N: ...`), an optional trailing `Entities:` line,
/// `#` comments and blank lines ignored.
pub fn parse_plan(text: &str) -> Result<PCodePlan, ParseError> {
    let (steps, entities) = parse_lines(text)?;
    check_structure(&steps, &entities)?;
    Ok(PCodePlan {
        steps: steps.into_iter().map(|(_, s)| s).collect(),
        entities,
    })
}

/// Syntax-only parse: duplicate ids, dangling `else` and unresolved `$refs`
/// are left for [`validate_plan`](super::validate_plan) to report.
pub fn parse_plan_lenient(text: &str) -> Result<PCodePlan, ParseError> {
    let (steps, entities) = parse_lines(text)?;
    Ok(PCodePlan {
        steps: steps.into_iter().map(|(_, s)| s).collect(),
        entities,
    })
}

type Lines = (Vec<(usize, PlanStep)>, Vec<PlanEntity>);

fn parse_lines(text: &str) -> Result<Lines, ParseError> {
    let mut steps: Vec<(usize, PlanStep)> = Vec::new();
    let mut entities: Option<(usize, Vec<PlanEntity>)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let stripped = strip_comment(raw);
        let content = stripped.trim_end();
        if content.trim().is_empty() {
            continue;
        }
        let mut cur = Cursor::new(content, line_no);
        cur.skip_ws();
        if cur.rest().starts_with("Entities:") {
            if entities.is_some() {
                return Err(cur.malformed("duplicate Entities block"));
            }
            cur.advance_by("Entities:".len());
            entities = Some((line_no, parse_entities(&mut cur)?));
        } else if cur.rest().starts_with("Step") {
            if entities.is_some() {
                return Err(cur.malformed("step after Entities block"));
            }
            let step = parse_step(&mut cur)?;
            steps.push((line_no, step));
        } else {
            return Err(cur.malformed("expected `Step` or `Entities:`"));
        }
    }

    if steps.is_empty() && entities.is_none() {
        return Err(ParseError {
            line: 1,
            column: 1,
            kind: ParseErrorKind::EmptyInput,
        });
    }
    if steps.is_empty() {
        let line = entities.as_ref().map_or(1, |(l, _)| *l);
        return Err(ParseError {
            line,
            column: 1,
            kind: ParseErrorKind::MalformedStep("plan has no steps".into()),
        });
    }

    Ok((steps, entities.map(|(_, e)| e).unwrap_or_default()))
}

fn check_structure(steps: &[(usize, PlanStep)], entities: &[PlanEntity]) -> Result<(), ParseError> {
    let mut seen_ids = HashSet::new();
    let mut resolvable: HashSet<&str> = entities.iter().map(|e| e.name.as_str()).collect();
    let mut prev_is_if = false;
    for (line, step) in steps {
        if !seen_ids.insert(step.id) {
            return Err(ParseError {
                line: *line,
                column: 1,
                kind: ParseErrorKind::DuplicateStepId(step.id),
            });
        }
        if step.control_flow == ControlFlow::Else && !prev_is_if {
            return Err(ParseError {
                line: *line,
                column: 1,
                kind: ParseErrorKind::DanglingElse,
            });
        }
        for arg in &step.parameters {
            if let Argument::EntityRef(name) = arg {
                if !resolvable.contains(name.as_str()) {
                    return Err(ParseError {
                        line: *line,
                        column: 1,
                        kind: ParseErrorKind::UnresolvedEntityRef(name.clone()),
                    });
                }
            }
        }
        resolvable.extend(step.return_values.iter().map(String::as_str));
        prev_is_if = matches!(step.control_flow, ControlFlow::If(_));
    }
    Ok(())
}

/// Drops a `#` comment, ignoring `#` inside string literals.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
        } else if c == '"' {
            in_str = true;
        } else if c == '#' {
            return &line[..i];
        }
    }
    line
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str, line: usize) -> Self {
        Cursor { src, pos: 0, line }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn column(&self) -> usize {
        self.src[..self.pos].chars().count() + 1
    }

    fn malformed(&self, reason: &str) -> ParseError {
        ParseError {
            line: self.line,
            column: self.column(),
            kind: ParseErrorKind::MalformedStep(reason.to_string()),
        }
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn advance_by(&mut self, bytes: usize) {
        self.pos += bytes;
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.bump();
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.malformed(&format!("expected `{c}`")))
        }
    }

    fn peek_ident(&self) -> Option<&'a str> {
        let rest = self.rest().trim_start();
        let mut end = 0;
        for (i, c) in rest.char_indices() {
            let ok = if i == 0 {
                c.is_ascii_alphabetic() || c == '_'
            } else {
                c.is_ascii_alphanumeric() || c == '_'
            };
            if !ok {
                break;
            }
            end = i + c.len_utf8();
        }
        (end > 0).then(|| &rest[..end])
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        match self.peek_ident() {
            Some(id) => {
                self.advance_by(id.len());
                Ok(id.to_string())
            }
            None => Err(self.malformed("expected identifier")),
        }
    }

    fn integer(&mut self) -> Result<u32, ParseError> {
        self.skip_ws();
        let digits: String = self.rest().chars().take_while(char::is_ascii_digit).collect();
        if digits.is_empty() {
            return Err(self.malformed("expected step number"));
        }
        let value = digits
            .parse::<u32>()
            .map_err(|_| self.malformed("step number out of range"))?;
        if value == 0 {
            return Err(self.malformed("step number must be positive"));
        }
        self.advance_by(digits.len());
        Ok(value)
    }

    fn string(&mut self) -> Result<String, ParseError> {
        self.skip_ws();
        if self.peek() != Some('"') {
            return Err(self.malformed("expected string literal"));
        }
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.malformed("unterminated string literal")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c @ ('"' | '\\')) => out.push(c),
                    _ => return Err(self.malformed("invalid escape in string literal")),
                },
                Some(c) => out.push(c),
            }
        }
    }

    /// Raw condition text up to the next `:`.
    fn condition(&mut self) -> Result<String, ParseError> {
        let rest = self.rest();
        let Some(end) = rest.find(':') else {
            return Err(self.malformed("condition must end with `:`"));
        };
        let cond = rest[..end].trim().to_string();
        if cond.is_empty() {
            return Err(self.malformed("empty condition"));
        }
        self.advance_by(end + 1);
        Ok(cond)
    }

    fn keyword(&mut self, kw: &str) -> bool {
        if self.peek_ident() == Some(kw) {
            self.skip_ws();
            self.advance_by(kw.len());
            true
        } else {
            false
        }
    }
}

fn parse_step(cur: &mut Cursor<'_>) -> Result<PlanStep, ParseError> {
    if !cur.keyword("Step") {
        return Err(cur.malformed("expected `Step`"));
    }
    let id = cur.integer()?;
    cur.expect(':')?;

    let control_flow = if cur.keyword("if") {
        ControlFlow::If(cur.condition()?)
    } else if cur.keyword("else") {
        cur.expect(':')?;
        ControlFlow::Else
    } else if cur.keyword("for") {
        let var = cur.ident()?;
        if !cur.keyword("in") {
            return Err(cur.malformed("expected `in` in for loop"));
        }
        let iterable = cur.ident()?;
        cur.expect(':')?;
        ControlFlow::For { var, iterable }
    } else if cur.keyword("while") {
        ControlFlow::While(cur.condition()?)
    } else {
        ControlFlow::None
    };

    let first = cur.ident()?;
    cur.skip_ws();
    let (return_values, name) = if cur.peek() == Some('(') {
        (Vec::new(), first)
    } else {
        let mut rets = vec![first];
        while cur.eat(',') {
            rets.push(cur.ident()?);
        }
        cur.expect('=')?;
        (rets, cur.ident()?)
    };

    cur.expect('(')?;
    let mut parameters = Vec::new();
    if !cur.eat(')') {
        loop {
            parameters.push(parse_arg(cur)?);
            if cur.eat(')') {
                break;
            }
            cur.expect(',')?;
        }
    }
    cur.skip_ws();
    if !cur.at_end() {
        return Err(cur.malformed("unexpected text after step call"));
    }
    Ok(PlanStep {
        id,
        name,
        parameters,
        return_values,
        control_flow,
    })
}

fn parse_arg(cur: &mut Cursor<'_>) -> Result<Argument, ParseError> {
    cur.skip_ws();
    match cur.peek() {
        Some('"') => Ok(Argument::Literal(cur.string()?)),
        Some('$') => {
            cur.bump();
            if cur.peek().is_some_and(char::is_whitespace) {
                return Err(cur.malformed("whitespace after `$`"));
            }
            Ok(Argument::EntityRef(cur.ident()?))
        }
        _ => Ok(Argument::Identifier(cur.ident()?)),
    }
}

fn parse_entities(cur: &mut Cursor<'_>) -> Result<Vec<PlanEntity>, ParseError> {
    let mut out = Vec::new();
    loop {
        let name = cur.ident()?;
        cur.expect('=')?;
        let value = cur.string()?;
        out.push(PlanEntity { name, value });
        if !cur.eat(',') {
            break;
        }
    }
    cur.skip_ws();
    if !cur.at_end() {
        return Err(cur.malformed("unexpected text in Entities block"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE_PLAN: &str = "Step 1: locations = find_receptacles()\n\
        Step 2: for loc in locations: obj = look_for(loc, $target)\n\
        Step 3: examine_with(obj, $tool)\n\
        Entities: target = \"book\", tool = \"desklamp\"";

    #[test]
    fn parses_loop_plan_with_entities() {
        let plan = parse_plan(FIGURE_PLAN).unwrap();
        assert_eq!(plan.steps.len(), 3);
        assert_eq!(plan.entities.len(), 2);
        assert_eq!(
            plan.steps[1].control_flow,
            ControlFlow::For {
                var: "loc".into(),
                iterable: "locations".into()
            }
        );
        assert_eq!(plan.steps[1].return_values, vec!["obj"]);
        assert_eq!(
            plan.steps[1].parameters,
            vec![
                Argument::Identifier("loc".into()),
                Argument::EntityRef("target".into())
            ]
        );
        assert_eq!(plan.entity("tool").unwrap().value, "desklamp");
    }

    #[test]
    fn lenient_keeps_structural_violations() {
        let plan = parse_plan_lenient("Step 1: a($x)\nStep 1: else: b()").unwrap();
        assert_eq!(plan.steps.len(), 2);
        assert!(parse_plan_lenient("Step 1 a()").is_err());
    }

    #[test]
    fn empty_input() {
        for text in ["", "   \n\n", "# only a comment\n"] {
            let err = parse_plan(text).unwrap_err();
            assert_eq!(err.kind, ParseErrorKind::EmptyInput, "{text:?}");
        }
    }

    #[test]
    fn duplicate_ids() {
        let err = parse_plan("Step 1: a()\nStep 1: b()").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateStepId(1));
        assert_eq!(err.line, 2);
    }

    #[test]
    fn dangling_else() {
        let err = parse_plan("Step 1: a()\nStep 2: else: b()").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DanglingElse);
        assert_eq!(err.line, 2);
        assert!(parse_plan("Step 1: if door is open: a()\nStep 2: else: b()").is_ok());
    }

    #[test]
    fn unresolved_ref() {
        let err = parse_plan("Step 1: take($thing)").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnresolvedEntityRef("thing".into()));
        // prior return values resolve too
        assert!(parse_plan("Step 1: x = find()\nStep 2: take($x)").is_ok());
        // but not later ones
        let err = parse_plan("Step 1: take($x)\nStep 2: x = find()").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnresolvedEntityRef("x".into()));
    }

    #[test]
    fn malformed_reports_position() {
        let err = parse_plan("Step 1: go_home()\nStep 2 go()").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MalformedStep(_)));
        assert_eq!(err.line, 2);
        assert_eq!(err.column, 8);

        let err = parse_plan("Step 1: a(\"open").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MalformedStep(_)));
        assert!(parse_plan("Step 0: a()").is_err());
        assert!(parse_plan("Do this: a()").is_err());
        assert!(parse_plan("Step 1: a() trailing").is_err());
        assert!(parse_plan("Entities: a = \"b\"").is_err());
        assert!(parse_plan("Step 1: a()\nEntities: a = \"b\"\nStep 2: c()").is_err());
    }

    #[test]
    fn comments_and_strings() {
        let plan = parse_plan(
            "# header\n\nStep 1: say(\"a # not comment\", \"q\\\"uote\")  # trailing\n",
        )
        .unwrap();
        assert_eq!(
            plan.steps[0].parameters,
            vec![
                Argument::Literal("a # not comment".into()),
                Argument::Literal("q\"uote".into())
            ]
        );
    }

    #[test]
    fn multiple_returns_and_conditions() {
        let plan = parse_plan("Step 1: while not found: a, b = scan(room)\nStep 2: if a is empty: stop()")
            .unwrap();
        assert_eq!(plan.steps[0].return_values, vec!["a", "b"]);
        assert_eq!(plan.steps[0].control_flow, ControlFlow::While("not found".into()));
        assert_eq!(plan.steps[1].control_flow, ControlFlow::If("a is empty".into()));
    }

    #[test]
    fn keyword_prefixed_names_are_calls() {
        let plan = parse_plan("Step 1: if_ready()\nStep 2: format(x)").unwrap();
        assert_eq!(plan.steps[0].name, "if_ready");
        assert_eq!(plan.steps[0].control_flow, ControlFlow::None);
        assert_eq!(plan.steps[1].name, "format");
    }
}
