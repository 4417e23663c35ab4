//! Recursive-descent parser producing the unresolved AST.

use crate::ast::*;
use crate::error::ParseError;
use crate::lexer::{Token, TokenKind};

type PResult<T> = Result<T, ParseError>;

pub fn parse_program(tokens: &[Token]) -> PResult<Program> {
    let mut p = Parser { tokens, pos: 0 };
    let mut contracts = Vec::new();
    while !p.at_end() {
        contracts.push(p.contract()?);
    }
    Ok(Program { contracts })
}

/// Parses a standalone formula such as `? and x >= 0 and acc(Count)`.
pub fn parse_formula(tokens: &[Token]) -> PResult<Formula> {
    let mut p = Parser { tokens, pos: 0 };
    let f = p.formula()?;
    if !p.at_end() {
        return Err(p.error("end of formula"));
    }
    Ok(f)
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'t Token> {
        self.tokens.get(self.pos + n)
    }

    fn loc(&self) -> SourceLoc {
        self.peek()
            .map(|t| t.loc)
            .or_else(|| self.tokens.last().map(|t| t.loc))
            .unwrap_or_default()
    }

    fn error(&self, expected: &str) -> ParseError {
        let found = match self.peek() {
            None => "end of input".to_string(),
            Some(t) => match t.kind {
                TokenKind::Indent => "indentation".to_string(),
                TokenKind::Dedent => "end of block".to_string(),
                _ => format!("`{}`", t.lexeme),
            },
        };
        ParseError {
            loc: self.loc(),
            message: format!("expected {expected}, found {found}"),
        }
    }

    fn check(&self, kind: TokenKind, lexeme: &str) -> bool {
        self.peek().is_some_and(|t| t.is(kind, lexeme))
    }

    fn check_kind(&self, kind: TokenKind) -> bool {
        self.peek().is_some_and(|t| t.kind == kind)
    }

    fn eat(&mut self, kind: TokenKind, lexeme: &str) -> bool {
        if self.check(kind, lexeme) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sym(&mut self, s: &str) -> PResult<()> {
        if self.eat(TokenKind::Symbol, s) {
            Ok(())
        } else {
            Err(self.error(&format!("`{s}`")))
        }
    }

    fn kw(&mut self, k: &str) -> PResult<()> {
        if self.eat(TokenKind::Keyword, k) {
            Ok(())
        } else {
            Err(self.error(&format!("`{k}`")))
        }
    }

    fn expect_kind(&mut self, kind: TokenKind, what: &str) -> PResult<&'t Token> {
        match self.peek() {
            Some(t) if t.kind == kind => {
                self.pos += 1;
                Ok(t)
            }
            _ => Err(self.error(what)),
        }
    }

    fn ident(&mut self) -> PResult<String> {
        Ok(self.expect_kind(TokenKind::Ident, "identifier")?.lexeme.clone())
    }

    fn contract(&mut self) -> PResult<Contract> {
        let loc = self.loc();
        let is_extern = self.eat(TokenKind::Keyword, "extern");
        self.kw("contract")?;
        let name = self.ident()?;
        self.sym(":")?;
        self.expect_kind(TokenKind::Indent, "indented contract body")?;
        let mut c = Contract {
            name,
            is_extern,
            globals: Vec::new(),
            predicates: Vec::new(),
            methods: Vec::new(),
            loc,
        };
        loop {
            if self.check_kind(TokenKind::Dedent) {
                self.pos += 1;
                break;
            }
            if self.at_end() {
                break;
            }
            if self.check_kind(TokenKind::Spec) {
                let item_loc = self.loc();
                self.pos += 1;
                if self.eat(TokenKind::Keyword, "global") {
                    c.globals.push(self.ident()?);
                    self.sym(";")?;
                } else if self.eat(TokenKind::Keyword, "predicate") {
                    c.predicates.push(self.predicate(item_loc)?);
                } else {
                    return Err(self.error("`global` or `predicate`"));
                }
            } else if self.check(TokenKind::Keyword, "method") {
                c.methods.push(self.method()?);
            } else {
                return Err(self.error("`#@ global`, `#@ predicate` or `method`"));
            }
        }
        Ok(c)
    }

    fn predicate(&mut self, loc: SourceLoc) -> PResult<Predicate> {
        let name = self.ident()?;
        self.sym("(")?;
        let mut params = Vec::new();
        if !self.check(TokenKind::Symbol, ")") {
            loop {
                params.push(self.ident()?);
                if self.eat(TokenKind::Symbol, ":") {
                    self.kw("uint64")?;
                }
                if !self.eat(TokenKind::Symbol, ",") {
                    break;
                }
            }
        }
        self.sym(")")?;
        self.sym("=")?;
        let body = self.bool_or()?;
        self.sym(";")?;
        Ok(Predicate {
            name,
            params,
            body,
            loc,
        })
    }

    fn method(&mut self) -> PResult<Method> {
        let loc = self.loc();
        self.kw("method")?;
        let name = self.ident()?;
        self.sym("(")?;
        let mut params = Vec::new();
        if !self.check(TokenKind::Symbol, ")") {
            loop {
                params.push(self.ident()?);
                self.sym(":")?;
                self.kw("uint64")?;
                if !self.eat(TokenKind::Symbol, ",") {
                    break;
                }
            }
        }
        self.sym(")")?;
        let returns = if self.eat(TokenKind::Symbol, "->") {
            self.kw("uint64")?;
            true
        } else {
            false
        };
        self.sym(":")?;
        self.expect_kind(TokenKind::Indent, "indented method body")?;

        let mut requires: Option<Clause> = None;
        let mut ensures: Option<Clause> = None;
        while self.check_kind(TokenKind::Spec)
            && self.peek_at(1).is_some_and(|t| {
                t.is(TokenKind::Keyword, "requires") || t.is(TokenKind::Keyword, "ensures")
            })
        {
            self.pos += 1;
            let clause_loc = self.loc();
            let is_requires = self.eat(TokenKind::Keyword, "requires");
            if !is_requires {
                self.kw("ensures")?;
            }
            let f = self.formula()?;
            self.sym(";")?;
            let slot = if is_requires {
                &mut requires
            } else {
                &mut ensures
            };
            match slot {
                Some(existing) => existing.formula.conjuncts.extend(f.conjuncts),
                None => {
                    *slot = Some(Clause {
                        formula: f,
                        loc: clause_loc,
                        explicit: true,
                    })
                }
            }
        }

        let mut exit_checks = Vec::new();
        while self.check_kind(TokenKind::Weave)
            && self
                .peek_at(1)
                .is_some_and(|t| t.is(TokenKind::Keyword, "check_exit"))
        {
            self.pos += 2;
            exit_checks.push(self.check_tail()?);
        }

        let body = if self.eat(TokenKind::Keyword, "opaque") {
            self.sym(";")?;
            self.expect_kind(TokenKind::Dedent, "end of method after `opaque;`")?;
            MethodBody::Opaque
        } else {
            let stmts = self.stmts_until_dedent()?;
            if stmts.is_empty() {
                return Err(self.error("at least one statement or `opaque;`"));
            }
            MethodBody::Stmts(stmts)
        };

        Ok(Method {
            name,
            params,
            returns,
            requires: requires.unwrap_or_else(|| Clause::implicit(loc)),
            ensures: ensures.unwrap_or_else(|| Clause::implicit(loc)),
            body,
            exit_checks,
            loc,
        })
    }

    fn check_tail(&mut self) -> PResult<Check> {
        let payload = self.atom()?;
        self.sym("@")?;
        let id = self.ident()?;
        self.sym(";")?;
        Ok(Check { id, payload })
    }

    fn stmts_until_dedent(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        loop {
            if self.at_end() {
                break;
            }
            if self.check_kind(TokenKind::Dedent) {
                self.pos += 1;
                break;
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_kind(TokenKind::Indent, "indented block")?;
        let body = self.stmts_until_dedent()?;
        if body.is_empty() {
            return Err(self.error("statement"));
        }
        Ok(body)
    }

    fn call_tail(&mut self) -> PResult<(String, String, Vec<Expr>)> {
        let contract = self.ident()?;
        self.sym(".")?;
        let method = self.ident()?;
        let args = self.args()?;
        Ok((contract, method, args))
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.sym("(")?;
        let mut args = Vec::new();
        if !self.check(TokenKind::Symbol, ")") {
            loop {
                args.push(self.expr()?);
                if !self.eat(TokenKind::Symbol, ",") {
                    break;
                }
            }
        }
        self.sym(")")?;
        Ok(args)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        let Some(tok) = self.peek() else {
            return Err(self.error("statement"));
        };
        let kind = match (tok.kind, tok.lexeme.as_str()) {
            (TokenKind::Ident, _) => {
                let target = self.ident()?;
                self.sym(":=")?;
                if self.eat(TokenKind::Keyword, "call") {
                    let (contract, method, args) = self.call_tail()?;
                    self.sym(";")?;
                    StmtKind::Call {
                        target: Some(target),
                        contract,
                        method,
                        args,
                    }
                } else {
                    let value = self.expr()?;
                    self.sym(";")?;
                    StmtKind::Assign { target, value }
                }
            }
            (TokenKind::Keyword, "call") => {
                self.pos += 1;
                let (contract, method, args) = self.call_tail()?;
                self.sym(";")?;
                StmtKind::Call {
                    target: None,
                    contract,
                    method,
                    args,
                }
            }
            (TokenKind::Keyword, "if") => {
                self.pos += 1;
                let cond = self.bool_or()?;
                self.sym(":")?;
                let then_body = self.block()?;
                let else_body = if self.eat(TokenKind::Keyword, "else") {
                    self.sym(":")?;
                    self.block()?
                } else {
                    Vec::new()
                };
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                }
            }
            (TokenKind::Keyword, "while") => {
                self.pos += 1;
                let cond = self.bool_or()?;
                self.sym(":")?;
                self.expect_kind(TokenKind::Indent, "indented loop body")?;
                let mut invariant: Option<Formula> = None;
                while self.check_kind(TokenKind::Spec)
                    && self
                        .peek_at(1)
                        .is_some_and(|t| t.is(TokenKind::Keyword, "invariant"))
                {
                    self.pos += 2;
                    let f = self.formula()?;
                    self.sym(";")?;
                    match &mut invariant {
                        Some(inv) => inv.conjuncts.extend(f.conjuncts),
                        None => invariant = Some(f),
                    }
                }
                let body = self.stmts_until_dedent()?;
                if body.is_empty() {
                    return Err(self.error("loop body statement"));
                }
                StmtKind::While {
                    cond,
                    invariant: invariant.unwrap_or_else(Formula::imprecise_true),
                    body,
                }
            }
            (TokenKind::Keyword, "return") => {
                self.pos += 1;
                let e = self.expr()?;
                self.sym(";")?;
                StmtKind::Return(e)
            }
            (TokenKind::Spec, _) => {
                self.pos += 1;
                self.kw("assert")?;
                let f = self.formula()?;
                self.sym(";")?;
                StmtKind::Assert(f)
            }
            (TokenKind::Weave, _) => {
                self.pos += 1;
                self.kw("check")?;
                StmtKind::Check(self.check_tail()?)
            }
            _ => return Err(self.error("statement")),
        };
        Ok(Stmt { kind, loc })
    }

    fn formula(&mut self) -> PResult<Formula> {
        let mut conjuncts = Vec::new();
        loop {
            if self.eat(TokenKind::Symbol, "?") {
                conjuncts.push(Conjunct::Unknown);
            } else if self.eat(TokenKind::Keyword, "true") {
            } else {
                conjuncts.push(Conjunct::Atom(self.atom()?));
            }
            if !self.eat(TokenKind::Keyword, "and") {
                break;
            }
        }
        Ok(Formula { conjuncts })
    }

    fn atom(&mut self) -> PResult<Atom> {
        if self.eat(TokenKind::Keyword, "acc") {
            self.sym("(")?;
            let g = self.ident()?;
            self.sym(")")?;
            return Ok(Atom::Acc(g));
        }
        if self.check_kind(TokenKind::Ident) && self.peek_at(1).is_some_and(|t| t.is(TokenKind::Symbol, "(")) {
            let name = self.ident()?;
            let args = self.args()?;
            return Ok(Atom::Pred(name, args));
        }
        let lhs = self.expr()?;
        let op = self.relop()?;
        let rhs = self.expr()?;
        Ok(Atom::Cmp(lhs, op, rhs))
    }

    fn relop(&mut self) -> PResult<RelOp> {
        let op = match self.peek().map(|t| (t.kind, t.lexeme.as_str())) {
            Some((TokenKind::Symbol, "==")) => RelOp::Eq,
            Some((TokenKind::Symbol, "!=")) => RelOp::Ne,
            Some((TokenKind::Symbol, "<=")) => RelOp::Le,
            Some((TokenKind::Symbol, "<")) => RelOp::Lt,
            Some((TokenKind::Symbol, ">=")) => RelOp::Ge,
            Some((TokenKind::Symbol, ">")) => RelOp::Gt,
            _ => return Err(self.error("comparison operator")),
        };
        self.pos += 1;
        Ok(op)
    }

    fn bool_or(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.bool_and()?;
        while self.eat(TokenKind::Keyword, "or") {
            let rhs = self.bool_and()?;
            lhs = BoolExpr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn bool_and(&mut self) -> PResult<BoolExpr> {
        let mut lhs = self.bool_not()?;
        while self.eat(TokenKind::Keyword, "and") {
            let rhs = self.bool_not()?;
            lhs = BoolExpr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn bool_not(&mut self) -> PResult<BoolExpr> {
        if self.eat(TokenKind::Keyword, "not") {
            return Ok(BoolExpr::Not(Box::new(self.bool_not()?)));
        }
        self.bool_primary()
    }

    fn bool_primary(&mut self) -> PResult<BoolExpr> {
        if self.eat(TokenKind::Symbol, "?") {
            return Ok(BoolExpr::Unknown);
        }
        if self.eat(TokenKind::Keyword, "acc") {
            self.sym("(")?;
            let g = self.ident()?;
            self.sym(")")?;
            return Ok(BoolExpr::Acc(g));
        }
        if self.check_kind(TokenKind::Ident) && self.peek_at(1).is_some_and(|t| t.is(TokenKind::Symbol, "(")) {
            let name = self.ident()?;
            let args = self.args()?;
            return Ok(BoolExpr::Pred(name, args));
        }
        let save = self.pos;
        let attempt = (|| {
            let lhs = self.expr()?;
            let op = self.relop()?;
            let rhs = self.expr()?;
            Ok::<_, ParseError>(BoolExpr::Cmp(lhs, op, rhs))
        })();
        match attempt {
            Ok(b) => Ok(b),
            Err(cmp_err) => {
                self.pos = save;
                if self.eat(TokenKind::Symbol, "(") {
                    let inner = self.bool_or()?;
                    self.sym(")")?;
                    return Ok(inner);
                }
                let e = self.expr().map_err(|_| cmp_err.clone())?;
                if self.check(TokenKind::Symbol, ":")
                    || self.check(TokenKind::Symbol, ";")
                    || self.check(TokenKind::Symbol, ")")
                    || self.check(TokenKind::Keyword, "and")
                    || self.check(TokenKind::Keyword, "or")
                {
                    Ok(BoolExpr::Truthy(e))
                } else {
                    Err(cmp_err)
                }
            }
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(TokenKind::Symbol, "+") {
                BinOp::Add
            } else if self.eat(TokenKind::Symbol, "-") {
                BinOp::Sub
            } else {
                break;
            };
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.primary()?;
        loop {
            let op = if self.eat(TokenKind::Symbol, "*") {
                BinOp::Mul
            } else if self.eat(TokenKind::Symbol, "/") {
                BinOp::Div
            } else if self.eat(TokenKind::Symbol, "%") {
                BinOp::Mod
            } else {
                break;
            };
            let rhs = self.primary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek() else {
            return Err(self.error("expression"));
        };
        match (tok.kind, tok.lexeme.as_str()) {
            (TokenKind::Int, lex) => {
                self.pos += 1;
                Ok(Expr::Int(lex.parse().expect("lexer validated literal")))
            }
            (TokenKind::Ident, _) => Ok(Expr::Name(self.ident()?)),
            (TokenKind::Keyword, "result") => {
                self.pos += 1;
                Ok(Expr::Result)
            }
            (TokenKind::Keyword, "old") => {
                self.pos += 1;
                self.sym("(")?;
                let g = self.ident()?;
                self.sym(")")?;
                Ok(Expr::Old(g))
            }
            (TokenKind::Symbol, "(") => {
                self.pos += 1;
                let e = self.expr()?;
                self.sym(")")?;
                Ok(e)
            }
            _ => Err(self.error("expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexer::lex;

    const SELL: &str = "contract Counter:
  #@ global Count;
  method sell(quantity: uint64):
    #@ requires ? and quantity >= 0 and acc(Count);
    #@ ensures Count >= 0;
    scratch := Count;
    Count := scratch - quantity;
";

    fn parse(src: &str) -> PResult<Program> {
        parse_program(&lex(src).unwrap())
    }

    #[test]
    fn sell_structure() {
        let p = parse(SELL).unwrap();
        assert_eq!(p.contracts.len(), 1);
        let c = &p.contracts[0];
        assert_eq!(c.globals, vec!["Count".to_string()]);
        assert_eq!(c.methods.len(), 1);
        let m = &c.methods[0];
        assert!(m.requires.explicit && m.ensures.explicit);
        assert_eq!(m.stmts().len(), 2);
        assert!(m.requires.formula.is_imprecise());
        assert!(!m.ensures.formula.is_imprecise());
    }

    #[test]
    fn empty_contract_body_is_a_syntax_error() {
        let err = parse("contract A:\n").unwrap_err();
        assert!(err.message.contains("expected indented contract body"));
    }

    #[test]
    fn imprecise_requires_with_one_comparison() {
        let src = "contract A:\n  method m(x: uint64):\n    #@ requires ? and x >= 0;\n    y := x;\n";
        let p = parse(src).unwrap();
        let f = &p.contracts[0].methods[0].requires.formula;
        assert!(f.is_imprecise());
        let atoms: Vec<_> = f.atoms().collect();
        assert_eq!(atoms.len(), 1);
        assert!(matches!(atoms[0], Atom::Cmp(_, RelOp::Ge, _)));
    }

    #[test]
    fn conditions_with_groups_and_arithmetic_parens() {
        let src = "contract A:\n  #@ predicate even(n) = n == 0 or (n >= 2 and even(n - 2));\n  method m(x: uint64):\n    if (x + 1) * 2 > 3 and not x == 4:\n      y := 1;\n    else:\n      y := 2;\n";
        let p = parse(src).unwrap();
        let pred = &p.contracts[0].predicates[0];
        assert_eq!(pred.body.to_string(), "n == 0 or n >= 2 and even(n - 2)");
        let StmtKind::If { cond, else_body, .. } = &p.contracts[0].methods[0].stmts()[0].kind else {
            panic!("expected if");
        };
        assert_eq!(cond.to_string(), "(x + 1) * 2 > 3 and not x == 4");
        assert_eq!(else_body.len(), 1);
    }

    #[test]
    fn while_without_invariant_defaults_to_unknown() {
        let src = "contract A:\n  method m(x: uint64):\n    i := 0;\n    while i < x:\n      i := i + 1;\n";
        let p = parse(src).unwrap();
        let StmtKind::While { invariant, .. } = &p.contracts[0].methods[0].stmts()[1].kind else {
            panic!("expected while");
        };
        assert!(invariant.is_bare_unknown());
    }

    #[test]
    fn opaque_extern_method_gets_default_specs() {
        let src = "extern contract O:\n  method ping(v: uint64):\n    opaque;\n";
        let p = parse(src).unwrap();
        let m = &p.contracts[0].methods[0];
        assert_eq!(m.body, MethodBody::Opaque);
        assert!(m.requires.formula.is_bare_unknown() && !m.requires.explicit);
    }

    #[test]
    fn truthy_condition_parses_for_inference_to_reject() {
        let src = "contract A:\n  method m():\n    x := 1;\n    if x:\n      x := 2;\n";
        let p = parse(src).unwrap();
        let StmtKind::If { cond, .. } = &p.contracts[0].methods[0].stmts()[1].kind else {
            panic!();
        };
        assert!(matches!(cond, BoolExpr::Truthy(_)));
    }

    #[test]
    fn woven_checks_parse() {
        let src = "contract A:\n  #@ global G;\n  method m(x: uint64):\n    #! check_exit G >= x @c1;\n    #! check acc(G) @c0;\n    G := x;\n";
        let p = parse(src).unwrap();
        let m = &p.contracts[0].methods[0];
        assert_eq!(m.exit_checks.len(), 1);
        assert!(matches!(&m.stmts()[0].kind, StmtKind::Check(c) if c.id == "c0"));
    }
}
