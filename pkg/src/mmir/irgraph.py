"""IR-subset parser and program multi-graph construction.

The parser accepts the documented subset of textual LLVM IR (docs/grammar.md):
define/declare, labels, %-values, @-globals, literal constants, and the core
opcode set. Unknown opcodes inside a function body are parsed generically by
sigil scanning and flagged rather than rejected.

The multi-graph has instruction / variable / constant nodes and control /
data / call edges. Node features are the tokenizer encoding of each node's
text, so a graph carries the second modality plus per-node slices of the
first.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .ircorpus import normalize_statement, strip_comment
from .irtok import PAD_ID, SEQ_LEN, TokenSeq, Vocab, encode_statement

SCHEMA_VERSION = 1
EDGE_TYPES = ("control", "data", "call")
NODE_KINDS = ("instruction", "variable", "constant")

KNOWN_OPCODES = {
    "add", "sub", "mul", "fadd", "fsub", "fmul", "load", "store", "alloca",
    "icmp", "fcmp", "br", "switch", "phi", "call", "ret", "getelementptr",
    "zext", "sext", "trunc", "bitcast",
}
TERMINATORS = {"br", "switch", "ret", "unreachable"}
_CALL_PREFIXES = {"tail", "musttail", "notail"}
_FLAG_WORDS = {
    "nuw", "nsw", "exact", "inbounds", "fast", "nnan", "ninf", "nsz", "arcp",
    "contract", "afn", "reassoc", "volatile",
}
_LITERAL_KEYWORDS = {"true", "false", "null", "undef", "poison", "zeroinitializer", "none"}
_INT_RE = re.compile(r"^-?\d+$")
_FLOAT_RE = re.compile(r"^-?\d+\.\d+(e[+-]?\d+)?$|^0x[0-9a-f]+$")
_NAME = r"[\w.$\-]+"
_LABEL_RE = re.compile(rf"^({_NAME}):$")
_DEF_RE = re.compile(rf"^(%{_NAME}) = (.+)$")
_DEFINE_RE = re.compile(rf"^define .*?@({_NAME})\((.*)\)(.*)$")
_DECLARE_RE = re.compile(rf"^declare .*?@({_NAME})\(")
_GLOBAL_RE = re.compile(rf"^(@{_NAME}) = .*\b(global|constant)\b")
_CALLEE_RE = re.compile(rf"([%@]{_NAME})\(")
_SIGIL_RE = re.compile(rf"[%@]{_NAME}")


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class GraphError(ValueError):
    pass


@dataclass
class IRInstr:
    text: str
    opcode: str
    line: int
    defined_value: str | None = None
    operand_values: list[str] = field(default_factory=list)
    operand_constants: list[str] = field(default_factory=list)
    callee: str | None = None
    successors: list[str] = field(default_factory=list)
    phi_blocks: list[str] = field(default_factory=list)
    flagged: bool = False

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS


@dataclass
class IRBlock:
    label: str
    instructions: list[IRInstr] = field(default_factory=list)


@dataclass
class IRFunction:
    name: str
    params: list[str] = field(default_factory=list)
    blocks: list[IRBlock] = field(default_factory=list)

    def defined_names(self) -> set[str]:
        names = set(self.params)
        for block in self.blocks:
            for instr in block.instructions:
                if instr.defined_value:
                    names.add(instr.defined_value)
        return names


@dataclass
class IRModule:
    functions: list[IRFunction] = field(default_factory=list)
    globals: list[str] = field(default_factory=list)
    declares: dict[str, str] = field(default_factory=dict)
    skipped_lines: list[int] = field(default_factory=list)


def _split_top_commas(text: str) -> list[str]:
    """Split on commas not nested inside (), [], {} or <>."""
    parts, depth, buf = [], 0, ""
    for ch in text:
        if ch in "([{<":
            depth += 1
        elif ch in ")]}>":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append(buf.strip())
            buf = ""
        else:
            buf += ch
    if buf.strip():
        parts.append(buf.strip())
    return parts


def _is_literal(token: str) -> bool:
    return bool(_INT_RE.match(token) or _FLOAT_RE.match(token)) or token in _LITERAL_KEYWORDS


def _classify(token: str, instr: IRInstr) -> None:
    if token.startswith(("%", "@")):
        instr.operand_values.append(token)
    elif _is_literal(token):
        instr.operand_constants.append(token)


def _classify_pieces(pieces: list[str], instr: IRInstr) -> None:
    for piece in pieces:
        tokens = piece.split()
        if not tokens or tokens[0] == "align" or tokens[0].startswith("!"):
            continue
        _classify(tokens[-1], instr)


def _strip_flags(tokens: list[str]) -> list[str]:
    i = 0
    while i < len(tokens) and tokens[i] in _FLAG_WORDS:
        i += 1
    return tokens[i:]


def _parse_call(rhs: str, instr: IRInstr, line: int) -> None:
    m = _CALLEE_RE.search(rhs)
    if not m:
        raise ParseError("call without a callable target", line)
    target = m.group(1)
    if target.startswith("@"):
        instr.callee = target[1:]
    else:
        instr.operand_values.append(target)
    open_paren = m.end() - 1
    depth = 0
    close = -1
    for i in range(open_paren, len(rhs)):
        if rhs[i] == "(":
            depth += 1
        elif rhs[i] == ")":
            depth -= 1
            if depth == 0:
                close = i
                break
    if close < 0:
        raise ParseError("unbalanced parentheses in call", line)
    args = rhs[open_paren + 1 : close].strip()
    if args:
        _classify_pieces(_split_top_commas(args), instr)


_BR_UNCOND_RE = re.compile(rf"^br label %({_NAME})$")
_BR_COND_RE = re.compile(rf"^br i1 (\S+), label %({_NAME}), label %({_NAME})$")
_SWITCH_RE = re.compile(rf"^switch .+? (\S+), label %({_NAME}) \[(.*)\]$")
_PHI_ARM_RE = re.compile(rf"^\[(.+), %({_NAME})\]$")
_CONVERT_RE = re.compile(r"^(zext|sext|trunc|bitcast) .* (\S+) to .+$")


def _parse_instruction(stmt: str, line: int) -> IRInstr:
    defined = None
    rhs = stmt
    m = _DEF_RE.match(stmt)
    if m:
        defined, rhs = m.group(1), m.group(2)

    tokens = rhs.split()
    if tokens and tokens[0] in _CALL_PREFIXES:
        tokens = tokens[1:]
        rhs = " ".join(tokens)
    opcode = tokens[0] if tokens else ""
    instr = IRInstr(text=stmt, opcode=opcode, line=line, defined_value=defined)

    if opcode == "br":
        m = _BR_UNCOND_RE.match(rhs)
        if m:
            instr.successors = [m.group(1)]
            return instr
        m = _BR_COND_RE.match(rhs)
        if not m:
            raise ParseError(f"unsupported br form: {rhs!r}", line)
        _classify(m.group(1).rstrip(","), instr)
        instr.successors = [m.group(2), m.group(3)]
        return instr

    if opcode == "switch":
        m = _SWITCH_RE.match(rhs)
        if not m:
            raise ParseError(f"unsupported switch form: {rhs!r}", line)
        _classify(m.group(1), instr)
        instr.successors = [m.group(2)]
        for case in _split_top_commas(m.group(3)):
            ctokens = case.split()
            if len(ctokens) >= 2 and ctokens[-2] == "label" and ctokens[-1].startswith("%"):
                instr.successors.append(ctokens[-1][1:])
            elif ctokens:
                _classify(ctokens[-1], instr)
        return instr

    if opcode == "phi":
        arm_text = rhs.split(None, 2)[2] if len(rhs.split(None, 2)) > 2 else ""
        for arm in _split_top_commas(arm_text):
            m = _PHI_ARM_RE.match(arm)
            if not m:
                raise ParseError(f"unsupported phi arm: {arm!r}", line)
            _classify(m.group(1).strip(), instr)
            instr.phi_blocks.append(m.group(2))
        return instr

    if opcode == "call":
        _parse_call(rhs, instr, line)
        return instr

    if opcode in ("zext", "sext", "trunc", "bitcast"):
        m = _CONVERT_RE.match(rhs)
        if not m:
            raise ParseError(f"unsupported conversion form: {rhs!r}", line)
        _classify(m.group(2), instr)
        return instr

    if opcode == "ret":
        if rhs != "ret void":
            _classify(rhs.split()[-1], instr)
        return instr

    if opcode in ("unreachable",):
        return instr

    if opcode in ("add", "sub", "mul", "fadd", "fsub", "fmul"):
        rest = " ".join(_strip_flags(tokens[1:]))
        _classify_pieces(_split_top_commas(rest), instr)
        return instr

    if opcode in ("icmp", "fcmp"):
        rest = " ".join(tokens[2:])  # drop the predicate
        _classify_pieces(_split_top_commas(rest), instr)
        return instr

    if opcode in ("load", "store", "alloca", "getelementptr"):
        rest = " ".join(_strip_flags(tokens[1:]))
        _classify_pieces(_split_top_commas(rest), instr)
        return instr

    # unknown opcode: generic sigil scan, flagged
    instr.flagged = True
    for token in _SIGIL_RE.findall(rhs):
        if token not in instr.operand_values:
            instr.operand_values.append(token)
    return instr


def parse_ir(text: str) -> IRModule:
    """Parse subset IR text into an IRModule; see module docstring."""
    module = IRModule()
    func: IRFunction | None = None
    block: IRBlock | None = None

    for line_no, raw in enumerate(text.splitlines(), 1):
        stmt = normalize_statement(strip_comment(raw))
        if not stmt:
            continue

        if func is None:
            if stmt.startswith("define "):
                m = _DEFINE_RE.match(stmt)
                if not m or not m.group(3).rstrip().endswith("{"):
                    raise ParseError(f"malformed define: {stmt!r}", line_no)
                func = IRFunction(name=m.group(1))
                block = None
                for piece in _split_top_commas(m.group(2)):
                    ptokens = piece.split()
                    if ptokens and ptokens[-1].startswith("%"):
                        func.params.append(ptokens[-1])
                continue
            if stmt.startswith("declare "):
                m = _DECLARE_RE.match(stmt)
                if m:
                    module.declares[m.group(1)] = stmt
                else:
                    module.skipped_lines.append(line_no)
                continue
            m = _GLOBAL_RE.match(stmt)
            if m:
                module.globals.append(m.group(1))
                continue
            if stmt == "}":
                raise ParseError("unmatched '}'", line_no)
            module.skipped_lines.append(line_no)
            continue

        if stmt == "}":
            _validate_function(func, line_no)
            module.functions.append(func)
            func, block = None, None
            continue
        if stmt.startswith("define "):
            raise ParseError(f"unclosed function @{func.name}", line_no)
        m = _LABEL_RE.match(stmt)
        if m:
            if any(b.label == m.group(1) for b in func.blocks):
                raise ParseError(f"duplicate label {m.group(1)!r}", line_no)
            block = IRBlock(label=m.group(1))
            func.blocks.append(block)
            continue
        if block is None:
            block = IRBlock(label="entry")
            func.blocks.append(block)
        block.instructions.append(_parse_instruction(stmt, line_no))

    if func is not None:
        raise ParseError(f"unclosed function @{func.name} at end of input", len(text.splitlines()))
    return module


def _validate_function(func: IRFunction, closing_line: int) -> None:
    labels = {b.label for b in func.blocks}
    for block in func.blocks:
        for instr in block.instructions:
            for target in instr.successors:
                if target not in labels:
                    raise ParseError(
                        f"branch target %{target} not defined in @{func.name}", instr.line
                    )
            for blk in instr.phi_blocks:
                if blk not in labels:
                    raise ParseError(
                        f"phi incoming block %{blk} not defined in @{func.name}", instr.line
                    )


@dataclass
class Node:
    index: int
    kind: str
    text: str
    feature: TokenSeq


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    etype: str


@dataclass
class ProGraph:
    nodes: list[Node]
    edges: list[Edge]

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def edges_of(self, etype: str) -> list[Edge]:
        if etype not in EDGE_TYPES:
            raise ValueError(f"unknown edge type {etype!r}")
        return [e for e in self.edges if e.etype == etype]


@dataclass
class SubGraph:
    parent: ProGraph
    etype: str
    edges: list[Edge]

    @property
    def num_nodes(self) -> int:
        return self.parent.num_nodes


_EDGE_RANK = {t: i for i, t in enumerate(EDGE_TYPES)}


def build_multigraph(module: IRModule, vocab: Vocab, seq_len: int = SEQ_LEN) -> ProGraph:
    """Construct the typed multi-graph for a parsed module.

    Canonical node order: instruction nodes in program order, then synthetic
    external-callee nodes (by name), then variable nodes (module globals in
    file order, then per-function params and defs in program order), then
    constant nodes (per function, first-use order, deduplicated per
    function). Raises GraphError for an operand that resolves to nothing.
    """
    defined_funcs = {f.name: f for f in module.functions}
    instr_index: dict[tuple[int, int, int], int] = {}
    texts: list[tuple[str, str]] = []  # (kind, text) in final node order

    for fi, func in enumerate(module.functions):
        for bi, blk in enumerate(func.blocks):
            for ii, instr in enumerate(blk.instructions):
                instr_index[(fi, bi, ii)] = len(texts)
                texts.append(("instruction", instr.text))

    external_callees = sorted(
        {
            instr.callee
            for func in module.functions
            for blk in func.blocks
            for instr in blk.instructions
            if instr.callee and instr.callee not in defined_funcs
        }
    )
    ext_index = {}
    for name in external_callees:
        ext_index[name] = len(texts)
        texts.append(("instruction", module.declares.get(name, f"declare @{name}")))

    var_index: dict[tuple, int] = {}
    for g in module.globals:
        var_index[("g", g)] = len(texts)
        texts.append(("variable", g))
    for fi, func in enumerate(module.functions):
        for name in func.params:
            var_index[(fi, name)] = len(texts)
            texts.append(("variable", name))
        for blk in func.blocks:
            for instr in blk.instructions:
                if instr.defined_value and (fi, instr.defined_value) not in var_index:
                    var_index[(fi, instr.defined_value)] = len(texts)
                    texts.append(("variable", instr.defined_value))

    const_index: dict[tuple, int] = {}
    for fi, func in enumerate(module.functions):
        for blk in func.blocks:
            for instr in blk.instructions:
                for lit in instr.operand_constants:
                    if (fi, lit) not in const_index:
                        const_index[(fi, lit)] = len(texts)
                        texts.append(("constant", lit))

    edges: set[Edge] = set()

    def add_edge(src: int, dst: int, etype: str) -> None:
        edges.add(Edge(src, dst, etype))

    func_pos = {f.name: i for i, f in enumerate(module.functions)}

    for fi, func in enumerate(module.functions):
        first_instr = {
            blk.label: instr_index[(fi, bi, 0)]
            for bi, blk in enumerate(func.blocks)
            if blk.instructions
        }
        for bi, blk in enumerate(func.blocks):
            for ii, instr in enumerate(blk.instructions):
                node = instr_index[(fi, bi, ii)]

                if not instr.is_terminator and ii + 1 < len(blk.instructions):
                    add_edge(node, instr_index[(fi, bi, ii + 1)], "control")
                for target in instr.successors:
                    if target in first_instr:
                        add_edge(node, first_instr[target], "control")

                if instr.defined_value:
                    add_edge(node, var_index[(fi, instr.defined_value)], "data")
                for name in instr.operand_values:
                    if (fi, name) in var_index:
                        add_edge(var_index[(fi, name)], node, "data")
                    elif ("g", name) in var_index:
                        add_edge(var_index[("g", name)], node, "data")
                    elif name.startswith("@") and (
                        name[1:] in defined_funcs or name[1:] in module.declares
                    ):
                        key = ("g", name)
                        if key not in var_index:
                            var_index[key] = len(texts)
                            texts.append(("variable", name))
                        add_edge(var_index[key], node, "data")
                    else:
                        raise GraphError(
                            f"operand {name} in @{func.name} does not resolve to a definition"
                        )
                for lit in instr.operand_constants:
                    add_edge(const_index[(fi, lit)], node, "data")

                if instr.callee:
                    if instr.callee in defined_funcs:
                        callee_fi = func_pos[instr.callee]
                        callee = defined_funcs[instr.callee]
                        if callee.blocks and callee.blocks[0].instructions:
                            add_edge(node, instr_index[(callee_fi, 0, 0)], "call")
                        for cbi, cblk in enumerate(callee.blocks):
                            for cii, cinstr in enumerate(cblk.instructions):
                                if cinstr.opcode == "ret":
                                    add_edge(instr_index[(callee_fi, cbi, cii)], node, "call")
                    else:
                        add_edge(node, ext_index[instr.callee], "call")

    nodes = [
        Node(index=i, kind=kind, text=text, feature=encode_statement(vocab, text, seq_len))
        for i, (kind, text) in enumerate(texts)
    ]
    ordered = sorted(edges, key=lambda e: (_EDGE_RANK[e.etype], e.src, e.dst))
    return ProGraph(nodes=nodes, edges=ordered)


def extract_subgraph(graph: ProGraph, etype: str) -> SubGraph:
    if etype not in EDGE_TYPES:
        raise ValueError(f"unknown edge type {etype!r}")
    return SubGraph(parent=graph, etype=etype, edges=graph.edges_of(etype))


def check_graph(graph: ProGraph) -> None:
    """Assert the edge-endpoint typing invariants; raises GraphError."""
    kinds = [n.kind for n in graph.nodes]
    seen = set()
    for e in graph.edges:
        key = (e.src, e.dst, e.etype)
        if key in seen:
            raise GraphError(f"duplicate edge {key}")
        seen.add(key)
        src_kind, dst_kind = kinds[e.src], kinds[e.dst]
        if e.etype in ("control", "call"):
            if src_kind != "instruction" or dst_kind != "instruction":
                raise GraphError(f"{e.etype} edge endpoints must be instructions: {e}")
        elif e.etype == "data":
            if src_kind == "instruction" and dst_kind == "instruction":
                raise GraphError(f"data edge between two instructions: {e}")
            if src_kind != "instruction" and dst_kind != "instruction":
                raise GraphError(f"data edge must touch an instruction: {e}")
        else:
            raise GraphError(f"unknown edge type {e.etype!r}")


def serialize_graph(graph: ProGraph) -> bytes:
    payload = {
        "schema": SCHEMA_VERSION,
        "nodes": [
            {"i": n.index, "kind": n.kind, "text": n.text, "ids": n.feature.ids.tolist()}
            for n in graph.nodes
        ],
        "edges": [{"s": e.src, "d": e.dst, "t": e.etype} for e in graph.edges],
    }
    return json.dumps(payload, separators=(",", ":")).encode("utf-8")


def deserialize_graph(data: bytes) -> ProGraph:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise GraphError(f"unreadable graph payload: {exc}") from exc
    if payload.get("schema") != SCHEMA_VERSION:
        raise GraphError(f"unsupported graph schema {payload.get('schema')!r}")
    nodes = []
    for obj in payload["nodes"]:
        ids = np.asarray(obj["ids"], dtype=np.int64)
        mask = (ids != PAD_ID).astype(np.int64)
        nodes.append(
            Node(index=obj["i"], kind=obj["kind"], text=obj["text"],
                 feature=TokenSeq(ids=ids, attention_mask=mask))
        )
    edges = [Edge(obj["s"], obj["d"], obj["t"]) for obj in payload["edges"]]
    return ProGraph(nodes=nodes, edges=edges)


def graph_from_text(text: str, vocab: Vocab, seq_len: int = SEQ_LEN) -> ProGraph:
    """Parse and build in one step."""
    return build_multigraph(parse_ir(text), vocab, seq_len)
