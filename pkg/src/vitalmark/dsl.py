"""Textual rule DSL: tokenizer, recursive-descent parser, canonical renderer.

Grammar (keywords case-insensitive, parameter ids case-sensitive):

    expr   := term ("or" term)*
    term   := factor ("and" factor)*
    factor := "not" factor | "(" expr ")" | atom
    atom   := ID cmp NUMBER
            | ID ("=="|"!=") ID
            | ID ("in"|"not in") "{" ID ("," ID)* "}"
            | ID "is" ("missing"|"present")
    cmp    := "<" | "<=" | ">" | ">=" | "==" | "!="

``==``/``!=`` against a bare ID is categorical equality (a singleton set);
against a NUMBER the parser reports a kind mismatch, since equality on
numeric parameters is not part of the rule vocabulary.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .dataset import ParameterDictionary
from .rules import Relation, Rule, Ruleset

KEYWORDS = {"and", "or", "not", "in", "is", "missing", "present"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+\.\d*|\.\d+|\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|==|!=|<|>)
  | (?P<punct>[(){},])
    """,
    re.VERBOSE,
)

CMP_OPS = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge", "==": "eq", "!=": "ne"}


class DslError(ValueError):
    """Parse or validation error with source position."""

    def __init__(self, message: str, line: int, col: int, code: str = "syntax"):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col
        self.code = code


@dataclass(frozen=True)
class Token:
    kind: str  # "number", "id", "op", "punct", "keyword", "eof"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DslError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind != "ws":
            if kind == "id" and value.lower() in KEYWORDS:
                tokens.append(Token("keyword", value.lower(), line, col))
            else:
                tokens.append(Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            col = len(value) - value.rfind("\n")
        else:
            col += len(value)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token], dictionary: ParameterDictionary):
        self.tokens = tokens
        self.pos = 0
        self.dictionary = dictionary
        self.nodes: dict[str, Rule | Relation] = {}
        self.n_rules = 0
        self.n_relations = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            raise DslError(f"expected {want!r}, found {tok.text or 'end of input'!r}",
                           tok.line, tok.col)
        return self.next()

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "keyword" and tok.text == word

    def add_rule(self, parameter: str, op: str, operand, tok: Token) -> str:
        self.n_rules += 1
        rid = f"r{self.n_rules}"
        param = self.dictionary.by_id.get(parameter)
        if param is None:
            raise DslError(f"unknown parameter {parameter!r}", tok.line, tok.col,
                           code="unknown_parameter")
        if op in ("lt", "le", "gt", "ge") and not param.is_numeric:
            raise DslError(f"{param.id!r} is categorical; comparison needs a numeric parameter",
                           tok.line, tok.col, code="kind_mismatch")
        if op in ("eq", "ne", "in", "not_in"):
            if param.is_numeric:
                raise DslError(f"{param.id!r} is numeric; category operators need a "
                               "categorical parameter", tok.line, tok.col, code="kind_mismatch")
            bad = set(operand) - set(param.categories)
            if bad:
                raise DslError(f"{sorted(bad)[0]!r} is not a category of {param.id!r}",
                               tok.line, tok.col, code="kind_mismatch")
        self.nodes[rid] = Rule(rid, parameter, op, operand)
        return rid

    def add_relation(self, op: str, children: list[str]) -> str:
        self.n_relations += 1
        nid = f"n{self.n_relations}"
        self.nodes[nid] = Relation(nid, op, tuple(children))
        return nid

    def parse(self) -> Ruleset:
        root = self.expr()
        tok = self.peek()
        if tok.kind != "eof":
            raise DslError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return Ruleset(nodes=self.nodes, root=root)

    def expr(self) -> str:
        children = [self.term()]
        while self.at_keyword("or"):
            self.next()
            children.append(self.term())
        if len(children) == 1:
            return children[0]
        return self.add_relation("or", children)

    def term(self) -> str:
        children = [self.factor()]
        while self.at_keyword("and"):
            self.next()
            children.append(self.factor())
        if len(children) == 1:
            return children[0]
        return self.add_relation("and", children)

    def factor(self) -> str:
        if self.at_keyword("not"):
            self.next()
            return self.add_relation("not", [self.factor()])
        if self.peek().kind == "punct" and self.peek().text == "(":
            self.next()
            inner = self.expr()
            self.expect("punct", ")")
            return inner
        return self.atom()

    def atom(self) -> str:
        tok = self.expect("id")
        parameter = tok.text
        nxt = self.peek()
        if nxt.kind == "op":
            self.next()
            op = CMP_OPS[nxt.text]
            val = self.peek()
            if val.kind == "number":
                self.next()
                if op in ("eq", "ne"):
                    raise DslError("== and != apply to categories; use <= / >= for numerics",
                                   val.line, val.col, code="kind_mismatch")
                return self.add_rule(parameter, op, float(val.text), tok)
            if val.kind == "id" and op in ("eq", "ne"):
                self.next()
                return self.add_rule(parameter, op, (val.text,), tok)
            raise DslError(f"expected a number after {nxt.text!r}", val.line, val.col)
        if self.at_keyword("in"):
            self.next()
            return self.add_rule(parameter, "in", self.category_set(), tok)
        if self.at_keyword("not"):
            self.next()
            self.expect("keyword", "in")
            return self.add_rule(parameter, "not_in", self.category_set(), tok)
        if self.at_keyword("is"):
            self.next()
            kw = self.peek()
            if kw.kind == "keyword" and kw.text in ("missing", "present"):
                self.next()
                return self.add_rule(parameter, f"is_{kw.text}", None, tok)
            raise DslError("expected 'missing' or 'present' after 'is'", kw.line, kw.col)
        raise DslError(f"expected an operator after {parameter!r}", nxt.line, nxt.col)

    def category_set(self) -> tuple[str, ...]:
        self.expect("punct", "{")
        items = [self.category_item()]
        while self.peek().kind == "punct" and self.peek().text == ",":
            self.next()
            items.append(self.category_item())
        self.expect("punct", "}")
        return tuple(items)

    def category_item(self) -> str:
        tok = self.peek()
        if tok.kind in ("id", "keyword"):
            self.next()
            return tok.text
        raise DslError(f"expected a category name, found {tok.text or 'end of input'!r}",
                       tok.line, tok.col)


def parse_ruleset(text: str, dictionary: ParameterDictionary) -> Ruleset:
    """Parse DSL text into a validated Ruleset."""
    if not text.strip():
        raise DslError("empty ruleset text", 1, 1)
    return _Parser(tokenize(text), dictionary).parse()


# ---------------------------------------------------------------------------
# Canonical rendering
# ---------------------------------------------------------------------------

_CMP_TEXT = {"lt": "<", "le": "<=", "gt": ">", "ge": ">=", "eq": "==", "ne": "!="}


def _number(value: float) -> str:
    f = float(value)
    return str(int(f)) if f.is_integer() else repr(f)


def to_dsl(ruleset: Ruleset) -> str:
    """Render a ruleset as canonical DSL text; parse(to_dsl(rs)) is
    structurally identical to rs (shared nodes are duplicated in text)."""

    def render(nid: str) -> str:
        node = ruleset.nodes[nid]
        if isinstance(node, Rule):
            if node.op in _CMP_TEXT:
                operand = node.operand
                if isinstance(operand, tuple):
                    return f"{node.parameter} {_CMP_TEXT[node.op]} {operand[0]}"
                return f"{node.parameter} {_CMP_TEXT[node.op]} {_number(operand)}"
            if node.op in ("in", "not_in"):
                kw = "in" if node.op == "in" else "not in"
                return f"{node.parameter} {kw} {{{', '.join(node.operand)}}}"
            return f"{node.parameter} is {node.op.removeprefix('is_')}"
        if node.op == "not":
            inner = render(node.children[0])
            child = ruleset.nodes[node.children[0]]
            if isinstance(child, Relation) and child.op != "not":
                inner = f"({inner})"
            return f"not {inner}"
        parts = []
        for c in node.children:
            text = render(c)
            child = ruleset.nodes[c]
            # parenthesise everything the parser would not rebuild as-is;
            # AND binds tighter than OR, so AND-under-OR stays bare
            needs_parens = isinstance(child, Relation) and child.op != "not" and not (
                node.op == "or" and child.op == "and"
            )
            parts.append(f"({text})" if needs_parens else text)
        return f" {node.op} ".join(parts)

    return render(ruleset.root)
