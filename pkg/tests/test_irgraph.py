import numpy as np
import pytest

from mmir.irgraph import (
    EDGE_TYPES,
    Edge,
    GraphError,
    ParseError,
    build_multigraph,
    check_graph,
    deserialize_graph,
    extract_subgraph,
    graph_from_text,
    parse_ir,
    serialize_graph,
)

ADD = """\
define i32 @add(i32 %a, i32 %b) {
entry:
  %c = add i32 %a, %b
  ret i32 %c
}
"""


def kinds(graph):
    out = {"instruction": 0, "variable": 0, "constant": 0}
    for n in graph.nodes:
        out[n.kind] += 1
    return out


def etype_counts(graph):
    return {t: len(graph.edges_of(t)) for t in EDGE_TYPES}


# ------------------------------------------------------------------- parsing

def test_parse_basic_structure():
    mod = parse_ir(ADD)
    assert [f.name for f in mod.functions] == ["add"]
    f = mod.functions[0]
    assert f.params == ["%a", "%b"]
    assert [b.label for b in f.blocks] == ["entry"]
    ops = [(i.opcode, i.defined_value, i.operand_values) for i in f.blocks[0].instructions]
    assert ops == [("add", "%c", ["%a", "%b"]), ("ret", None, ["%c"])]


def test_parse_normalizes_case_and_comments():
    mod = parse_ir("define void @F() {\nENTRY:\n  RET void ; bye\n}\n")
    assert mod.functions[0].name == "f"
    assert mod.functions[0].blocks[0].label == "entry"
    assert mod.functions[0].blocks[0].instructions[0].text == "ret void"


def test_parse_implicit_entry_block():
    mod = parse_ir("define void @f() {\n  ret void\n}\n")
    assert mod.functions[0].blocks[0].label == "entry"


def test_parse_skips_unknown_toplevel():
    mod = parse_ir('target datalayout = "e-m:e"\n' + ADD)
    assert mod.skipped_lines == [1]
    assert len(mod.functions) == 1


def test_parse_declare_and_global():
    mod = parse_ir("declare i32 @puts(i8*)\n@count = global i32 0\n")
    assert mod.declares == {"puts": "declare i32 @puts(i8*)"}
    assert mod.globals == ["@count"]


def test_parse_unknown_opcode_flagged():
    mod = parse_ir(
        "define i32 @f(i1 %c, i32 %a, i32 %b) {\nentry:\n"
        "  %r = select i1 %c, i32 %a, i32 %b\n  ret i32 %r\n}\n"
    )
    sel = mod.functions[0].blocks[0].instructions[0]
    assert sel.flagged
    assert sel.opcode == "select"
    assert sel.operand_values == ["%c", "%a", "%b"]


def test_parse_switch_form():
    mod = parse_ir(
        "define void @f(i32 %k) {\nentry:\n"
        "  switch i32 %k, label %d [i32 0, label %a, i32 1, label %b]\n"
        "a:\n  br label %d\nb:\n  br label %d\nd:\n  ret void\n}\n"
    )
    sw = mod.functions[0].blocks[0].instructions[0]
    assert sw.successors == ["d", "a", "b"]
    assert sw.operand_values == ["%k"]
    assert sw.operand_constants == ["0", "1"]


@pytest.mark.parametrize(
    "bad",
    [
        "define i32 @f(i32 %a)\n{\nret i32 %a\n}\n",  # brace not on define line
        "define void @f() {\nentry:\n  ret void\n",  # unclosed at EOF
        "}\n",  # unmatched close
        "define void @f() {\nentry:\n  ret void\nentry:\n  ret void\n}\n",  # dup label
        "define void @f() {\nentry:\n  br label %ghost\n}\n",  # missing target
        "define i32 @f(i32 %a) {\ne:\n  br label %m\nm:\n  %p = phi i32 [%a, %ghost]\n  ret i32 %p\n}\n",
        "define void @f() {\nentry:\n  br i32 %x\n}\n",  # bad br form
        "define void @g() {\ndefine void @h() {\n}\n",  # define inside body
        "define void @f() {\nentry:\n  call void\n  ret void\n}\n",  # call, no target
    ],
)
def test_parse_errors(bad):
    with pytest.raises(ParseError):
        parse_ir(bad)


def test_parse_error_carries_line():
    with pytest.raises(ParseError) as exc:
        parse_ir("define void @f() {\nentry:\n  br label %ghost\n}\n")
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


# ------------------------------------------------------- golden multi-graphs

def test_golden_add(vocab):
    g = graph_from_text(ADD, vocab)
    assert kinds(g) == {"instruction": 2, "variable": 3, "constant": 0}
    texts = [n.text for n in g.nodes]
    assert texts == ["%c = add i32 %a, %b", "ret i32 %c", "%a", "%b", "%c"]
    assert g.edges == [
        Edge(0, 1, "control"),
        Edge(0, 4, "data"),  # def of %c
        Edge(2, 0, "data"),  # use of %a
        Edge(3, 0, "data"),  # use of %b
        Edge(4, 1, "data"),  # ret uses %c
    ]
    check_graph(g)


def test_golden_single_instruction(vocab, kernel_paths):
    path = {p.name: p for p in kernel_paths}["retvoid.ll"]
    g = graph_from_text(path.read_text(), vocab)
    assert kinds(g) == {"instruction": 1, "variable": 0, "constant": 0}
    assert g.edges == []


def test_golden_two_function_call(vocab, kernel_paths):
    path = {p.name: p for p in kernel_paths}["callpair.ll"]
    g = graph_from_text(path.read_text(), vocab)
    assert kinds(g) == {"instruction": 4, "variable": 4, "constant": 0}
    assert etype_counts(g) == {"control": 2, "data": 6, "call": 2}
    # call site is node 2; callee entry is node 0, callee ret is node 1
    assert Edge(2, 0, "call") in g.edges
    assert Edge(1, 2, "call") in g.edges
    check_graph(g)


def test_golden_diamond_phi(vocab, kernel_paths):
    path = {p.name: p for p in kernel_paths}["maxphi.ll"]
    g = graph_from_text(path.read_text(), vocab)
    assert kinds(g) == {"instruction": 6, "variable": 4, "constant": 0}
    assert etype_counts(g) == {"control": 6, "data": 8, "call": 0}
    control = {(e.src, e.dst) for e in g.edges_of("control")}
    assert control == {(0, 1), (1, 2), (1, 3), (2, 4), (3, 4), (4, 5)}
    check_graph(g)


def test_golden_constants_dedup(vocab, kernel_paths):
    path = {p.name: p for p in kernel_paths}["conststore.ll"]
    g = graph_from_text(path.read_text(), vocab)
    assert kinds(g) == {"instruction": 4, "variable": 2, "constant": 2}
    assert etype_counts(g) == {"control": 3, "data": 7, "call": 0}
    const_texts = sorted(n.text for n in g.nodes if n.kind == "constant")
    assert const_texts == ["1", "7"]
    # the literal 7 feeds both stores from one shared node
    seven = next(n.index for n in g.nodes if n.text == "7")
    uses = [e.dst for e in g.edges_of("data") if e.src == seven]
    assert len(uses) == 2
    check_graph(g)


def test_golden_external_call(vocab, kernel_paths):
    path = {p.name: p for p in kernel_paths}["traporbump.ll"]
    g = graph_from_text(path.read_text(), vocab)
    assert kinds(g) == {"instruction": 7, "variable": 4, "constant": 1}
    ext = [n for n in g.nodes if n.text.startswith("declare")]
    assert len(ext) == 1 and ext[0].kind == "instruction"
    calls = g.edges_of("call")
    assert calls == [Edge(2, ext[0].index, "call")]  # no return edge back
    check_graph(g)


def test_graph_error_on_unresolved_operand(vocab):
    text = "define i32 @f() {\nentry:\n  ret i32 %ghost\n}\n"
    parse_ir(text)  # parses fine; resolution happens at build time
    with pytest.raises(GraphError):
        graph_from_text(text, vocab)


def test_node_features_match_text_encoding(vocab):
    from mmir.irtok import encode_statement

    g = graph_from_text(ADD, vocab)
    for n in g.nodes:
        ref = encode_statement(vocab, n.text)
        assert np.array_equal(n.feature.ids, ref.ids)
        assert np.array_equal(n.feature.attention_mask, ref.attention_mask)


def test_edges_canonically_ordered(vocab, kernel_paths):
    for p in kernel_paths:
        g = graph_from_text(p.read_text(), vocab)
        rank = {t: i for i, t in enumerate(EDGE_TYPES)}
        keys = [(rank[e.etype], e.src, e.dst) for e in g.edges]
        assert keys == sorted(keys), p.name
        assert len(set(g.edges)) == len(g.edges), p.name


def test_whole_corpus_parses_and_validates(vocab, kernel_paths):
    for p in kernel_paths:
        g = graph_from_text(p.read_text(), vocab)
        assert any(n.kind == "instruction" for n in g.nodes), p.name
        check_graph(g)


# ---------------------------------------------------------------- subgraphs

def test_extract_subgraph_filters(vocab, kernel_paths):
    path = {p.name: p for p in kernel_paths}["maxphi.ll"]
    g = graph_from_text(path.read_text(), vocab)
    sub = extract_subgraph(g, "data")
    assert all(e.etype == "data" for e in sub.edges)
    assert len(sub.edges) == 8
    assert sub.num_nodes == g.num_nodes
    assert sub.parent is g
    with pytest.raises(ValueError):
        extract_subgraph(g, "dataflow")


# ------------------------------------------------------------- serialization

def test_serialize_roundtrip(vocab, kernel_paths):
    for p in kernel_paths:
        g = graph_from_text(p.read_text(), vocab)
        blob = serialize_graph(g)
        h = deserialize_graph(blob)
        assert [(n.index, n.kind, n.text) for n in h.nodes] == [
            (n.index, n.kind, n.text) for n in g.nodes
        ]
        assert h.edges == g.edges
        for a, b in zip(g.nodes, h.nodes):
            assert np.array_equal(a.feature.ids, b.feature.ids)
            assert np.array_equal(a.feature.attention_mask, b.feature.attention_mask)


def test_serialize_deterministic(vocab):
    a = serialize_graph(graph_from_text(ADD, vocab))
    b = serialize_graph(graph_from_text(ADD, vocab))
    assert a == b
    payload = a.decode("utf-8")
    assert payload.startswith('{"schema":1,')


def test_deserialize_rejects_garbage():
    with pytest.raises(GraphError):
        deserialize_graph(b"not json")
    with pytest.raises(GraphError):
        deserialize_graph(b'{"schema":2,"nodes":[],"edges":[]}')
