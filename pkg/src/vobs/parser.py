"""Lexer and recursive-descent parser for machine files and expressions.

The grammar is context-free: duplicate declarations and unknown identifiers
are deliberately left to well_formed so the parser never needs a symbol
table.  `#` starts a line comment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .lang import (
    Binary, BoolType, Card, ConstDecl, EnumType, Event, Expr, Header, IntRange,
    Lit, Machine, Name, Param, SetDecl, SetLit, SetType, TypeExpr, Unary,
    VarDecl, VobsError,
)


class ParseError(VobsError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.message = message


KEYWORDS = {
    "machine", "refines", "views", "instantiates", "with", "set", "of",
    "const", "var", "init", "invariant", "event", "when", "then", "end",
    "not", "and", "or", "div", "mod", "card", "BOOL", "true", "false",
}

# Longest match first.
SYMBOLS = [
    "..", ":=", "<=", ">=", "/=", "=>", "\\/", "/\\",
    "=", "<", ">", "+", "-", "*", "(", ")", "{", "}", ",", ";", ":", "\\", "&",
]


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, INT, keyword, or symbol text
    text: str
    line: int
    column: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i = 0
    n = len(source)
    while i < n:
        ch = source[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            word = source[start:i]
            kind = word if word in KEYWORDS else "IDENT"
            tokens.append(Token(kind, word, line, col))
            col += i - start
            continue
        if ch.isdigit():
            start = i
            while i < n and source[i].isdigit():
                i += 1
            tokens.append(Token("INT", source[start:i], line, col))
            col += i - start
            continue
        for sym in SYMBOLS:
            if source.startswith(sym, i):
                tokens.append(Token(sym, sym, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(line, col, f"unexpected character {ch!r}")
    tokens.append(Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def at(self, *kinds: str) -> bool:
        return self.cur.kind in kinds

    def advance(self) -> Token:
        tok = self.cur
        self.pos += 1
        return tok

    def accept(self, kind: str) -> Optional[Token]:
        if self.cur.kind == kind:
            return self.advance()
        return None

    def expect(self, kind: str, what: str = "") -> Token:
        if self.cur.kind != kind:
            found = self.cur.text or "end of input"
            wanted = what or kind
            raise ParseError(self.cur.line, self.cur.column,
                             f"expected {wanted}, found {found!r}")
        return self.advance()

    def error(self, message: str) -> ParseError:
        return ParseError(self.cur.line, self.cur.column, message)

    # -- machine ------------------------------------------------------------

    def machine(self) -> Machine:
        self.expect("machine")
        name = self.expect("IDENT", "machine name").text
        header = self.header()
        sets = []
        while self.at("set"):
            sets.append(self.set_decl())
        consts = []
        while self.at("const"):
            consts.append(self.const_decl())
        vars_ = []
        while self.at("var"):
            vars_.append(self.var_decl())
        invariants: list[Expr] = []
        if self.accept("invariant"):
            invariants.append(self.expr())
            while self.accept(";"):
                invariants.append(self.expr())
        events = []
        while self.at("event"):
            events.append(self.event())
        self.expect("end", "'end' closing the machine")
        self.expect("EOF", "end of file after machine")
        return Machine(name, header, tuple(sets), tuple(consts), tuple(vars_),
                       tuple(invariants), tuple(events))

    def header(self) -> Optional[Header]:
        for kind in ("refines", "views"):
            if self.accept(kind):
                return Header(kind, self.expect("IDENT", "machine name").text, ())
        if self.accept("instantiates"):
            target = self.expect("IDENT", "machine name").text
            self.expect("with")
            bindings = [self.binding()]
            while self.accept(","):
                bindings.append(self.binding())
            return Header("instantiates", target, tuple(bindings))
        return None

    def binding(self) -> tuple[str, Expr]:
        name = self.expect("IDENT", "constant name").text
        self.expect("=")
        return name, self.literal()

    def set_decl(self) -> SetDecl:
        self.expect("set")
        name = self.expect("IDENT", "set name").text
        self.expect("=")
        self.expect("{")
        members = [self.expect("IDENT", "set member").text]
        while self.accept(","):
            members.append(self.expect("IDENT", "set member").text)
        self.expect("}")
        return SetDecl(name, tuple(members))

    def const_decl(self) -> ConstDecl:
        self.expect("const")
        name = self.expect("IDENT", "constant name").text
        self.expect(":")
        ty = self.type_expr()
        value = self.literal() if self.accept("=") else None
        return ConstDecl(name, ty, value)

    def var_decl(self) -> VarDecl:
        self.expect("var")
        name = self.expect("IDENT", "variable name").text
        self.expect(":")
        ty = self.type_expr()
        self.expect("init")
        return VarDecl(name, ty, self.expr())

    def type_expr(self) -> TypeExpr:
        if self.accept("BOOL"):
            return BoolType()
        if self.at("set"):
            self.advance()
            self.expect("of")
            return SetType(self.expect("IDENT", "set name").text)
        if self.at("INT", "-"):
            lo = self.int_literal()
            self.expect("..")
            return IntRange(lo, self.int_literal())
        if self.at("IDENT"):
            return EnumType(self.advance().text)
        raise self.error("expected a type")

    def int_literal(self) -> int:
        sign = -1 if self.accept("-") else 1
        return sign * int(self.expect("INT", "integer").text)

    def event(self) -> Event:
        self.expect("event")
        name = self.expect("IDENT", "event name").text
        params = []
        if self.accept("("):
            params.append(self.param())
            while self.accept(","):
                params.append(self.param())
            self.expect(")")
        guard: list[Expr] = []
        if self.accept("when"):
            guard.append(self.expr())
            while self.accept("&"):
                guard.append(self.expr())
        self.expect("then", "'when' or 'then'")
        actions = [self.action()]
        while self.accept(";"):
            actions.append(self.action())
        self.expect("end", "'end' closing the event")
        return Event(name, tuple(params), tuple(guard), tuple(actions))

    def param(self) -> Param:
        name = self.expect("IDENT", "parameter name").text
        self.expect(":")
        return Param(name, self.type_expr())

    def action(self) -> tuple[str, Expr]:
        target = self.expect("IDENT", "variable name").text
        self.expect(":=")
        return target, self.expr()

    # -- expressions ----------------------------------------------------------
    # precedence: => < or < and < not < comparisons < (+ - \/ \) < (* div mod /\)
    # < unary minus < atoms

    def expr(self) -> Expr:
        left = self.or_expr()
        if self.accept("=>"):
            return Binary("=>", left, self.expr())  # right associative
        return left

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.accept("or"):
            left = Binary("or", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.accept("and"):
            left = Binary("and", left, self.not_expr())
        return left

    def not_expr(self) -> Expr:
        if self.accept("not"):
            return Unary("not", self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        for op in ("=", "/=", "<", "<=", ">", ">=", ":"):
            if self.accept(op):
                return Binary(op, left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while True:
            for op in ("+", "-", "\\/", "\\"):
                if self.accept(op):
                    left = Binary(op, left, self.multiplicative())
                    break
            else:
                return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while True:
            for op in ("*", "div", "mod", "/\\"):
                if self.accept(op):
                    left = Binary(op, left, self.unary())
                    break
            else:
                return left

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("-", self.unary())
        return self.atom()

    def atom(self) -> Expr:
        if self.at("INT"):
            return Lit(int(self.advance().text))
        if self.accept("true"):
            return Lit(True)
        if self.accept("false"):
            return Lit(False)
        if self.at("IDENT"):
            return Name(self.advance().text)
        if self.accept("card"):
            self.expect("(")
            inner = self.expr()
            self.expect(")")
            return Card(inner)
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        if self.accept("{"):
            members: list[Expr] = []
            if not self.at("}"):
                members.append(self.expr())
                while self.accept(","):
                    members.append(self.expr())
            self.expect("}")
            return SetLit(tuple(members))
        raise self.error(f"expected an expression, found {self.cur.text!r}")

    def literal(self) -> Expr:
        if self.accept("-"):
            return Lit(-int(self.expect("INT", "integer").text))
        if self.at("INT"):
            return Lit(int(self.advance().text))
        if self.accept("true"):
            return Lit(True)
        if self.accept("false"):
            return Lit(False)
        if self.at("IDENT"):
            return Name(self.advance().text)
        if self.accept("{"):
            members: list[Expr] = []
            if not self.at("}"):
                members.append(self.literal())
                while self.accept(","):
                    members.append(self.literal())
            self.expect("}")
            return SetLit(tuple(members))
        raise self.error(f"expected a literal, found {self.cur.text!r}")


def parse_machine(source: str) -> Machine:
    """Parse a `.vob` machine file.  Raises ParseError with 1-based position."""
    return _Parser(tokenize(source)).machine()


def parse_expr(source: str) -> Expr:
    """Parse a standalone expression (glue maps, LTL atoms, assertions)."""
    p = _Parser(tokenize(source))
    e = p.expr()
    p.expect("EOF", "end of expression")
    return e


def parse_literal(source: str) -> Expr:
    """Parse a ground literal (trace parameter values, project bindings)."""
    p = _Parser(tokenize(source))
    e = p.literal()
    p.expect("EOF", "end of literal")
    return e
