"""Scene-specification DSL: parser, formatter, validator, interpreter.

The language is closed and sandboxed: retrieval declarations, numeric lets,
placement statements, and bounded repetition. No conditionals, no
data-dependent loops, no host-code escape. Evaluation is a pure function of
(resolved program, seed): every random expression draws from a substream
keyed by the master seed and the statement's position, so editing one
statement never reshuffles the samples of another.

Grammar (EBNF)::

    program    := stmt*
    stmt       := assetDecl | letDecl | place | repeat
    assetDecl  := "asset" IDENT "=" "retrieve" "(" STRING ["," "k" "=" INT] ")" ";"
    letDecl    := "let" IDENT "=" expr ";"
    place      := "place" IDENT REL IDENT ["with" "(" paramList ")"] ";"
    repeat     := "repeat" INT "{" stmt* "}"
    REL        := "on" | "in" | "adjacent_to" | "aligned_with" | "stacked_on"
    expr       := NUMBER | "uniform" "(" NUMBER "," NUMBER ")"
                | "choice" "(" NUMBER ("," NUMBER)* ")" | IDENT
    paramList  := IDENT "=" (expr | STRING) ("," IDENT "=" (expr | STRING))*

Comments run from ``#`` to end of line. Source is UTF-8. Numbers are double
precision; a leading ``-`` is part of the literal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assets import DEFAULT_TOP_K, SIMILARITY_FLOOR, Catalog, RetrievalResult, query_topk
from .errors import DslSyntaxError, ProgramValidationError
from .rng import substream

RELATION_KEYWORDS = ("on", "in", "adjacent_to", "aligned_with", "stacked_on")
#: DSL relation keyword -> scene-graph relation name
RELATION_MAP = {
    "on": "on",
    "in": "in",
    "adjacent_to": "adjacent",
    "aligned_with": "aligned",
    "stacked_on": "stacked",
}
SUPPORT_RELATIONS = ("on", "in", "stacked_on")
#: Reserved reference for the implicit ground region.
WORKSPACE_NAME = "workspace"

_KEYWORDS = {"asset", "let", "place", "repeat", "retrieve", "uniform", "choice", "with"}


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class NumberLiteral:
    value: float


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float


@dataclass(frozen=True)
class Choice:
    options: tuple[float, ...]


@dataclass(frozen=True)
class Reference:
    name: str


Expr = NumberLiteral | Uniform | Choice | Reference


@dataclass(frozen=True)
class Param:
    name: str
    value: Expr | str


@dataclass(frozen=True)
class AssetDecl:
    name: str
    query: str
    k: int | None = None
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Let:
    name: str
    expr: Expr
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Place:
    subject: str
    relation: str
    reference: str
    params: tuple[Param, ...] = ()
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


@dataclass(frozen=True)
class Repeat:
    count: int
    body: tuple["Stmt", ...]
    pos: tuple[int, int] = field(default=(0, 0), compare=False)


Stmt = AssetDecl | Let | Place | Repeat


@dataclass(frozen=True)
class Program:
    statements: tuple[Stmt, ...]


# --- Lexer -------------------------------------------------------------------

_PUNCT = {"(": "LPAREN", ")": "RPAREN", "{": "LBRACE", "}": "RBRACE",
          ",": "COMMA", ";": "SEMI", "=": "EQUALS"}

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}
_ESCAPE_OUT = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\t": "\\t", "\r": "\\r"}


@dataclass(frozen=True)
class Token:
    kind: str
    value: object
    line: int
    col: int


def _is_ident_start(c: str) -> bool:
    return c.isalpha() or c == "_"


def _is_ident(c: str) -> bool:
    return c.isalnum() or c == "_"


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    n = len(source)

    def err(msg: str, at_line: int, at_col: int):
        raise DslSyntaxError(msg, at_line, at_col)

    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and source[i] != "\n":
                i += 1
            continue
        if c in _PUNCT:
            tokens.append(Token(_PUNCT[c], c, line, col))
            i += 1
            col += 1
            continue
        if c == '"':
            start_line, start_col = line, col
            i += 1
            col += 1
            chars: list[str] = []
            while True:
                if i >= n or source[i] == "\n":
                    err("unterminated string literal", start_line, start_col)
                ch = source[i]
                if ch == '"':
                    i += 1
                    col += 1
                    break
                if ch == "\\":
                    if i + 1 >= n or source[i + 1] not in _ESCAPES:
                        err(f"unsupported escape sequence", line, col)
                    chars.append(_ESCAPES[source[i + 1]])
                    i += 2
                    col += 2
                    continue
                if ord(ch) < 0x20:
                    err("raw control character in string literal", line, col)
                chars.append(ch)
                i += 1
                col += 1
            tokens.append(Token("STRING", "".join(chars), start_line, start_col))
            continue
        if c.isdigit() or (c == "-" and i + 1 < n and (source[i + 1].isdigit() or source[i + 1] == ".")) \
                or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            start_line, start_col = line, col
            j = i
            if source[j] == "-":
                j += 1
            while j < n and source[j].isdigit():
                j += 1
            if j < n and source[j] == ".":
                j += 1
                while j < n and source[j].isdigit():
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k].isdigit():
                    j = k
                    while j < n and source[j].isdigit():
                        j += 1
            text = source[i:j]
            try:
                value = float(text)
            except ValueError:
                err(f"malformed number {text!r}", start_line, start_col)
            if not math.isfinite(value):
                err(f"number {text!r} overflows double precision", start_line, start_col)
            tokens.append(Token("NUMBER", value, start_line, start_col))
            col += j - i
            i = j
            continue
        if _is_ident_start(c):
            j = i
            while j < n and _is_ident(source[j]):
                j += 1
            tokens.append(Token("IDENT", source[i:j], line, col))
            col += j - i
            i = j
            continue
        err(f"unexpected character {c!r}", line, col)
    tokens.append(Token("EOF", None, line, col))
    return tokens


# --- Parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.cur
        self.i += 1
        return tok

    def expect(self, kind: str, value: object = None, expected: tuple[str, ...] = ()) -> Token:
        tok = self.cur
        if tok.kind != kind or (value is not None and tok.value != value):
            want = expected or ((str(value),) if value is not None else (kind,))
            raise DslSyntaxError(
                f"unexpected token {tok.value!r}", tok.line, tok.col, expected=want
            )
        return self.advance()

    def expect_keyword(self, word: str) -> Token:
        tok = self.cur
        if tok.kind != "IDENT" or tok.value != word:
            raise DslSyntaxError(
                f"unexpected token {tok.value!r}", tok.line, tok.col, expected=(word,)
            )
        return self.advance()

    def ident(self, role: str) -> str:
        tok = self.cur
        if tok.kind != "IDENT" or tok.value in _KEYWORDS:
            raise DslSyntaxError(
                f"expected {role}, found {tok.value!r}", tok.line, tok.col, expected=("IDENT",)
            )
        return self.advance().value  # type: ignore[return-value]

    def integer(self, role: str) -> int:
        tok = self.expect("NUMBER", expected=("INT",))
        value = tok.value
        if not float(value).is_integer():
            raise DslSyntaxError(f"{role} must be an integer", tok.line, tok.col, expected=("INT",))
        return int(value)

    def parse_program(self) -> Program:
        statements = []
        while self.cur.kind != "EOF":
            statements.append(self.parse_stmt())
        return Program(tuple(statements))

    def parse_stmt(self) -> Stmt:
        tok = self.cur
        if tok.kind == "IDENT" and tok.value == "asset":
            return self.parse_asset_decl()
        if tok.kind == "IDENT" and tok.value == "let":
            return self.parse_let()
        if tok.kind == "IDENT" and tok.value == "place":
            return self.parse_place()
        if tok.kind == "IDENT" and tok.value == "repeat":
            return self.parse_repeat()
        raise DslSyntaxError(
            f"unexpected token {tok.value!r}", tok.line, tok.col,
            expected=("asset", "let", "place", "repeat"),
        )

    def parse_asset_decl(self) -> AssetDecl:
        start = self.advance()
        name = self.ident("asset name")
        self.expect("EQUALS")
        self.expect_keyword("retrieve")
        self.expect("LPAREN")
        query = self.expect("STRING", expected=("STRING",)).value
        k = None
        if self.cur.kind == "COMMA":
            self.advance()
            self.expect_keyword("k")
            self.expect("EQUALS")
            k = self.integer("k")
            if k < 1:
                raise DslSyntaxError("k must be >= 1", start.line, start.col)
        self.expect("RPAREN")
        self.expect("SEMI")
        return AssetDecl(name=name, query=query, k=k, pos=(start.line, start.col))

    def parse_let(self) -> Let:
        start = self.advance()
        name = self.ident("let name")
        self.expect("EQUALS")
        expr = self.parse_expr()
        self.expect("SEMI")
        return Let(name=name, expr=expr, pos=(start.line, start.col))

    def parse_place(self) -> Place:
        start = self.advance()
        subject = self.ident("subject name")
        rel_tok = self.cur
        if rel_tok.kind != "IDENT" or rel_tok.value not in RELATION_KEYWORDS:
            raise DslSyntaxError(
                f"unknown relation {rel_tok.value!r}", rel_tok.line, rel_tok.col,
                expected=RELATION_KEYWORDS,
            )
        relation = self.advance().value
        reference = self.ident("reference name")
        params: list[Param] = []
        if self.cur.kind == "IDENT" and self.cur.value == "with":
            self.advance()
            self.expect("LPAREN")
            while True:
                pname = self.ident("parameter name")
                self.expect("EQUALS")
                if self.cur.kind == "STRING":
                    pvalue: Expr | str = self.advance().value  # type: ignore[assignment]
                else:
                    pvalue = self.parse_expr()
                params.append(Param(pname, pvalue))
                if self.cur.kind == "COMMA":
                    self.advance()
                    continue
                break
            self.expect("RPAREN")
        self.expect("SEMI")
        return Place(subject=subject, relation=relation, reference=reference,
                     params=tuple(params), pos=(start.line, start.col))

    def parse_repeat(self) -> Repeat:
        start = self.advance()
        count = self.integer("repeat count")
        if count < 1:
            raise DslSyntaxError("repeat count must be >= 1", start.line, start.col)
        self.expect("LBRACE")
        body = []
        while self.cur.kind != "RBRACE":
            if self.cur.kind == "EOF":
                raise DslSyntaxError("unterminated repeat block", start.line, start.col,
                                     expected=("}",))
            body.append(self.parse_stmt())
        self.expect("RBRACE")
        return Repeat(count=count, body=tuple(body), pos=(start.line, start.col))

    def parse_expr(self) -> Expr:
        tok = self.cur
        if tok.kind == "NUMBER":
            self.advance()
            return NumberLiteral(float(tok.value))
        if tok.kind == "IDENT" and tok.value == "uniform":
            self.advance()
            self.expect("LPAREN")
            lo = float(self.expect("NUMBER", expected=("NUMBER",)).value)
            self.expect("COMMA")
            hi = float(self.expect("NUMBER", expected=("NUMBER",)).value)
            self.expect("RPAREN")
            if lo > hi:
                raise DslSyntaxError("uniform requires lo <= hi", tok.line, tok.col)
            return Uniform(lo, hi)
        if tok.kind == "IDENT" and tok.value == "choice":
            self.advance()
            self.expect("LPAREN")
            options = [float(self.expect("NUMBER", expected=("NUMBER",)).value)]
            while self.cur.kind == "COMMA":
                self.advance()
                options.append(float(self.expect("NUMBER", expected=("NUMBER",)).value))
            self.expect("RPAREN")
            return Choice(tuple(options))
        if tok.kind == "IDENT" and tok.value not in _KEYWORDS:
            self.advance()
            return Reference(tok.value)
        raise DslSyntaxError(
            f"unexpected token {tok.value!r}", tok.line, tok.col,
            expected=("NUMBER", "uniform", "choice", "IDENT"),
        )


def parse_program(source: str) -> Program:
    """Parse DSL source into an AST. Raises DslSyntaxError with line/column."""
    return _Parser(tokenize(source)).parse_program()


# --- Formatter ---------------------------------------------------------------

def _format_number(value: float) -> str:
    return repr(float(value))


def _format_expr(expr: Expr) -> str:
    if isinstance(expr, NumberLiteral):
        return _format_number(expr.value)
    if isinstance(expr, Uniform):
        return f"uniform({_format_number(expr.lo)}, {_format_number(expr.hi)})"
    if isinstance(expr, Choice):
        return f"choice({', '.join(_format_number(o) for o in expr.options)})"
    return expr.name


def _format_string(text: str) -> str:
    out = []
    for ch in text:
        out.append(_ESCAPE_OUT.get(ch, ch))
    return '"' + "".join(out) + '"'


def _format_stmt(stmt: Stmt, indent: int) -> list[str]:
    pad = "    " * indent
    if isinstance(stmt, AssetDecl):
        k = f", k={stmt.k}" if stmt.k is not None else ""
        return [f"{pad}asset {stmt.name} = retrieve({_format_string(stmt.query)}{k});"]
    if isinstance(stmt, Let):
        return [f"{pad}let {stmt.name} = {_format_expr(stmt.expr)};"]
    if isinstance(stmt, Place):
        text = f"{pad}place {stmt.subject} {stmt.relation} {stmt.reference}"
        if stmt.params:
            rendered = ", ".join(
                f"{p.name}={_format_string(p.value) if isinstance(p.value, str) else _format_expr(p.value)}"
                for p in stmt.params
            )
            text += f" with ({rendered})"
        return [text + ";"]
    lines = [f"{pad}repeat {stmt.count} {{"]
    for inner in stmt.body:
        lines.extend(_format_stmt(inner, indent + 1))
    lines.append(f"{pad}}}")
    return lines


def format_program(program: Program) -> str:
    """Canonical source text. parse(format(parse(s))) == parse(s)."""
    lines: list[str] = []
    for stmt in program.statements:
        lines.extend(_format_stmt(stmt, 0))
    return "\n".join(lines) + ("\n" if lines else "")


# --- Unrolling and validation -------------------------------------------------

@dataclass(frozen=True)
class UnrolledStmt:
    """One concrete statement instance after repeat expansion."""

    stmt: Stmt            # AssetDecl/Let/Place with instance-level names
    index: int            # position in the unrolled sequence


def _rename(stmt: Stmt, mapping: dict[str, str]) -> Stmt:
    if isinstance(stmt, AssetDecl):
        return AssetDecl(mapping.get(stmt.name, stmt.name), stmt.query, stmt.k, stmt.pos)
    if isinstance(stmt, Let):
        expr = stmt.expr
        if isinstance(expr, Reference):
            expr = Reference(mapping.get(expr.name, expr.name))
        return Let(mapping.get(stmt.name, stmt.name), expr, stmt.pos)
    if isinstance(stmt, Place):
        params = tuple(
            Param(p.name, Reference(mapping.get(p.value.name, p.value.name)))
            if isinstance(p.value, Reference) else p
            for p in stmt.params
        )
        return Place(mapping.get(stmt.subject, stmt.subject), stmt.relation,
                     mapping.get(stmt.reference, stmt.reference), params, stmt.pos)
    return Repeat(stmt.count, tuple(_rename(s, mapping) for s in stmt.body), stmt.pos)


def _local_names(body: tuple[Stmt, ...]) -> set[str]:
    names = set()
    for stmt in body:
        if isinstance(stmt, (AssetDecl, Let)):
            names.add(stmt.name)
        elif isinstance(stmt, Repeat):
            names |= _local_names(stmt.body)
    return names


def _unroll(statements: tuple[Stmt, ...], out: list[Stmt]) -> None:
    for stmt in statements:
        if isinstance(stmt, Repeat):
            local = _local_names(stmt.body)
            for iteration in range(stmt.count):
                mapping = {name: f"{name}__{iteration}" for name in local}
                _unroll(tuple(_rename(s, mapping) for s in stmt.body), out)
        else:
            out.append(stmt)


def unroll_program(program: Program) -> list[UnrolledStmt]:
    flat: list[Stmt] = []
    _unroll(program.statements, flat)
    return [UnrolledStmt(stmt, i) for i, stmt in enumerate(flat)]


@dataclass
class ResolvedProgram:
    """A validated program with retrieval candidates cached per declaration.

    Candidates are keyed by (query, effective k): renamed repeat instances of
    one declaration share a single cached retrieval.
    """

    program: Program
    unrolled: list[UnrolledStmt]
    candidates: dict[tuple[str, int], list[RetrievalResult]]
    instruction: str = ""


def _candidate_key(decl: AssetDecl) -> tuple[str, int]:
    return (decl.query, decl.k if decl.k is not None else DEFAULT_TOP_K)


def _original_decls(statements: tuple[Stmt, ...]) -> list[AssetDecl]:
    decls = []
    for stmt in statements:
        if isinstance(stmt, AssetDecl):
            decls.append(stmt)
        elif isinstance(stmt, Repeat):
            decls.extend(_original_decls(stmt.body))
    return decls


def validate_program(program: Program, catalog: Catalog) -> ResolvedProgram:
    """Resolve retrieval queries and check names and support acyclicity."""
    unrolled = unroll_program(program)

    kinds: dict[str, str] = {WORKSPACE_NAME: "asset"}
    support_parent: dict[str, str] = {}
    support_edges: list[tuple[str, str]] = []
    for u in unrolled:
        stmt = u.stmt
        if isinstance(stmt, (AssetDecl, Let)):
            if stmt.name in kinds:
                raise ProgramValidationError(f"name {stmt.name!r} declared twice")
            if isinstance(stmt, Let) and isinstance(stmt.expr, Reference):
                if kinds.get(stmt.expr.name) != "value":
                    raise ProgramValidationError(
                        f"let {stmt.name!r} references undefined value {stmt.expr.name!r}"
                    )
            kinds[stmt.name] = "asset" if isinstance(stmt, AssetDecl) else "value"
        elif isinstance(stmt, Place):
            for endpoint in (stmt.subject, stmt.reference):
                if kinds.get(endpoint) != "asset":
                    raise ProgramValidationError(
                        f"place references undeclared asset {endpoint!r}"
                    )
            if stmt.subject == stmt.reference:
                raise ProgramValidationError(
                    f"cannot place {stmt.subject!r} relative to itself"
                )
            for p in stmt.params:
                if isinstance(p.value, Reference) and kinds.get(p.value.name) != "value":
                    raise ProgramValidationError(
                        f"parameter {p.name!r} references undefined value {p.value.name!r}"
                    )
            if stmt.relation in SUPPORT_RELATIONS:
                if stmt.subject in support_parent:
                    raise ProgramValidationError(
                        f"{stmt.subject!r} has more than one support placement"
                    )
                support_parent[stmt.subject] = stmt.reference
                support_edges.append((stmt.subject, stmt.reference))

    cycle = _find_cycle(support_edges)
    if cycle:
        raise ProgramValidationError(
            f"support relations form a cycle: {' -> '.join(cycle)}", cycle=tuple(cycle)
        )

    candidates: dict[tuple[str, int], list[RetrievalResult]] = {}
    unresolved: list[str] = []
    for decl in _original_decls(program.statements):
        key = _candidate_key(decl)
        if key in candidates:
            continue
        results = query_topk(decl.query, key[1], catalog)
        if not results or results[0].similarity < SIMILARITY_FLOOR:
            unresolved.append(decl.query)
            continue
        candidates[key] = results
    if unresolved:
        raise ProgramValidationError(
            "unresolvable retrieval queries: " + ", ".join(repr(q) for q in unresolved),
            queries=tuple(unresolved),
        )
    return ResolvedProgram(program=program, unrolled=unrolled, candidates=candidates)


def _find_cycle(edges: list[tuple[str, str]]) -> list[str]:
    graph: dict[str, list[str]] = {}
    for src, dst in edges:
        graph.setdefault(src, []).append(dst)
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {}
    stack_path: list[str] = []

    def visit(node: str) -> list[str]:
        color[node] = GRAY
        stack_path.append(node)
        for nxt in graph.get(node, []):
            if color.get(nxt, WHITE) == GRAY:
                return stack_path[stack_path.index(nxt):] + [nxt]
            if color.get(nxt, WHITE) == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack_path.pop()
        color[node] = BLACK
        return []

    for node in list(graph):
        if color.get(node, WHITE) == WHITE:
            found = visit(node)
            if found:
                return found
    return []


# --- Evaluation --------------------------------------------------------------

def eval_expr(expr: Expr, rng: np.random.Generator, env: dict[str, float]) -> float:
    if isinstance(expr, NumberLiteral):
        return float(expr.value)
    if isinstance(expr, Uniform):
        return float(rng.uniform(expr.lo, expr.hi))
    if isinstance(expr, Choice):
        return float(expr.options[int(rng.integers(len(expr.options)))])
    value = env.get(expr.name)
    if value is None:
        raise ProgramValidationError(f"reference to undefined value {expr.name!r}")
    return float(value)


def evaluate_program(rp: ResolvedProgram, seed: int, catalog: Catalog):
    """Instantiate a validated program into a concrete, solved scene graph."""
    from .scenegraph import PlacementDirective, SceneEdge, SceneNode, solve_placement

    env: dict[str, float] = {}
    nodes: list[SceneNode] = []
    edges: list[SceneEdge] = []
    directives: dict[str, PlacementDirective] = {}
    node_stmt_index: dict[str, int] = {}
    declared: set[str] = set()
    supported: set[str] = set()

    for u in rp.unrolled:
        stmt = u.stmt
        rng = substream(seed, "stmt", u.index)
        if isinstance(stmt, Let):
            env[stmt.name] = eval_expr(stmt.expr, rng, env)
        elif isinstance(stmt, AssetDecl):
            options = rp.candidates[_candidate_key(stmt)]
            if stmt.k == 1 or len(options) == 1:
                choice = options[0]
            else:
                choice = options[int(rng.integers(len(options)))]
            record = catalog.get(choice.asset_id)
            nodes.append(SceneNode(
                node_id=stmt.name,
                asset_id=record.asset_id,
                semantic=stmt.query,
                size=record.aabb_extents.copy(),
                pose=None,
            ))
            node_stmt_index[stmt.name] = u.index
            declared.add(stmt.name)
        elif isinstance(stmt, Place):
            directive = directives.setdefault(stmt.subject, PlacementDirective())
            params: dict[str, float] = {}
            axis = None
            tolerance = None
            for p in stmt.params:
                if p.name == "axis":
                    if not isinstance(p.value, str) or p.value not in ("x", "y"):
                        raise ProgramValidationError("axis parameter must be \"x\" or \"y\"")
                    axis = p.value
                elif p.name == "tag":
                    if not isinstance(p.value, str):
                        raise ProgramValidationError("tag parameter must be a string")
                    directive.tag = p.value
                elif p.name == "ref_tag":
                    if not isinstance(p.value, str):
                        raise ProgramValidationError("ref_tag parameter must be a string")
                    ref_directive = directives.setdefault(stmt.reference, PlacementDirective())
                    ref_directive.tag = p.value
                elif p.name in ("offset_x", "offset_y", "yaw_deg", "tolerance"):
                    if isinstance(p.value, str):
                        raise ProgramValidationError(f"parameter {p.name!r} must be numeric")
                    params[p.name] = eval_expr(p.value, rng, env)
                else:
                    raise ProgramValidationError(f"unknown placement parameter {p.name!r}")
            if "tolerance" in params:
                tolerance = params["tolerance"]
            if stmt.relation in SUPPORT_RELATIONS:
                directive.offset_x = params.get("offset_x", directive.offset_x)
                directive.offset_y = params.get("offset_y", directive.offset_y)
                directive.yaw = (math.radians(params["yaw_deg"])
                                 if "yaw_deg" in params else directive.yaw)
                supported.add(stmt.subject)
            edge_params = {}
            if axis is not None:
                edge_params["axis"] = axis
            if tolerance is not None:
                edge_params["tolerance"] = tolerance
            edges.append(SceneEdge(
                relation=RELATION_MAP[stmt.relation],
                src=stmt.subject,
                dst=stmt.reference,
                params=edge_params,
            ))

    # Assets never placed anywhere rest on the implicit ground region.
    for name in sorted(declared - supported):
        edges.append(SceneEdge(relation="on", src=name, dst=WORKSPACE_NAME, params={}))

    def node_stream(node_id: str) -> np.random.Generator:
        return substream(seed, "solve", node_stmt_index.get(node_id, -1))

    metadata = {"generator": "sceneforge-0.1"}
    if rp.instruction:
        metadata["instruction"] = rp.instruction
    return solve_placement(
        nodes=nodes,
        edges=edges,
        seed=seed,
        stream_for_node=node_stream,
        directives=directives,
        metadata=metadata,
    )
