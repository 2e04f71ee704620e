"""Solver-format emission: structure, determinism, and witness satisfaction.

Without bundling a solver, the strongest in-tree check for the Unsafe
corpus entries is that the enumeration witness, translated to an SMT
assignment, satisfies every clause of the emitted formula.
"""

import re

import pytest

from axcat import (
    SpecConfig,
    base_relations,
    check_isolation,
    corpus_dir,
    emit_smt,
    evaluate,
    load_model,
    parse_cat,
    parse_program,
)
from axcat import catlang
from axcat.catlang import CatError
from smt_eval import Script

_KEYWORDS = {
    "and", "or", "not", "=>", "=", "distinct", "ite", "_", "true", "false",
    "bvadd", "bvsub", "bvmul", "bvand", "bvor", "bvxor", "bvshl", "bvlshr",
    "bvult", "bvule", "bvugt", "bvuge", "bvneg", "bvnot",
}


def corpus_cases():
    cases = []
    for path in sorted(corpus_dir().glob("*.litmus")):
        program = parse_program(path.read_text())
        for exp in program.expectations:
            over = dict(exp.overrides)
            model = load_model(exp.model)
            cfg = SpecConfig(
                mode=exp.mode or "speculative",
                window=over.get("w", 8),
                buffer=over.get("buffer", 2),
                psf="srf" in model.base_names(),
            )
            cases.append(
                (path.stem, program, model, cfg, over.get("k", 2),
                 over.get("bits", 3), exp.outcome)
            )
    return cases


def _symbols(node, out):
    if isinstance(node, str):
        if re.match(r"^[A-Za-z_][A-Za-z0-9_'.-]*$", node) and node not in _KEYWORDS:
            out.add(node)
        return
    if node and node[0] == "_":
        return  # bitvector literal
    for child in node:
        _symbols(child, out)


@pytest.mark.parametrize(
    "case", corpus_cases(), ids=lambda c: f"{c[0]}-{c[2].name}-{c[3].mode}"
)
def test_emission_well_formed_and_deterministic(case):
    name, program, model, cfg, k, bits, _ = case
    text = emit_smt(program, model, cfg, k, bits, name)
    assert text == emit_smt(program, model, cfg, k, bits, name)
    assert text.splitlines()[-2:] == ["(check-sat)", "(exit)"]
    assert "(set-logic QF_BV)" in text
    script = Script(text)  # parses: balanced and token-clean
    declared = set(script.widths)
    used: set = set()
    for form in script.asserts:
        _symbols(form, used)
    assert used <= declared, used - declared


def _event_name(e):
    if e.is_init():
        return f"init_{e.addr}"
    return f"t{e.thread}_l{e.label}"


def witness_assignment(x, model, cfg, bits, script: Script):
    vw = bits + 1
    asg = {}
    for e in x.init_events():
        asg[f"val_init_{e.addr}"] = (e.val, vw)
    by_site = {(e.thread, e.label): e for e in x.instruction_events()}
    for tid, thread in enumerate(x.program.threads):
        for ins in thread:
            nm = f"t{tid}_l{ins.label}"
            e = by_site.get((tid, ins.label))
            asg[f"exec_{nm}"] = e is not None
            if cfg.mode == "speculative":
                asg[f"com_{nm}"] = e is not None and e.id in x.committed
                asg[f"trans_{nm}"] = e is not None and e.id in x.transient
                if f"cp_{nm}" in script.widths:
                    asg[f"cp_{nm}"] = bool(e.cp) if e is not None else True
            if e is not None and e.addr is not None and f"addr_{nm}" in script.widths:
                asg[f"addr_{nm}"] = (e.addr, vw)
            if e is not None and e.val is not None and f"val_{nm}" in script.widths:
                asg[f"val_{nm}"] = (e.val, vw)

    chosen = x.srf if cfg.psf else x.rf
    chosen_names = {(_event_name(x.event(w)), _event_name(x.event(r))) for w, r in chosen}
    for name, width in script.widths.items():
        if name.startswith("rf_"):
            w_part, r_part = name[3:].split("_t", 1)
            asg[name] = (w_part, "t" + r_part) in chosen_names
        elif name.startswith("corank_"):
            store = name[len("corank_"):]
            pos = 0
            for i, sid in enumerate(x.co_order):
                if _event_name(x.event(sid)) == store:
                    pos = i + 1
            asg[name] = (pos, width)

    # order variables for acyclicity assertions: topological positions of
    # each assertion's relation over the candidate's events
    bindings = evaluate(model, base_relations(x), cfg)
    rels = {n: bindings[n] for n in catlang.BASE_RELATIONS}
    sets = {n: bindings[n] for n in ("E", "M", "W", "R")}
    env = {n: v for n, v in bindings.items() if n not in rels and n not in sets}
    for ai, (kind, term, _src) in enumerate(model.assertions):
        if kind != "acyclic":
            continue
        rel = catlang._eval_term(term, rels, sets, env, cfg)
        ids = sorted(e.id for e in x.events)
        succs = {i: [] for i in ids}
        indeg = {i: 0 for i in ids}
        for a, b in rel:
            succs[a].append(b)
            indeg[b] += 1
        ready = sorted(i for i in ids if indeg[i] == 0)
        topo = []
        while ready:
            node = ready.pop(0)
            topo.append(node)
            for nxt in sorted(succs[node]):
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
        position = {eid: n for n, eid in enumerate(topo)}
        for e in x.events:
            name = f"ord{ai}_{_event_name(e)}"
            if name in script.widths:
                asg[name] = (position.get(e.id, 0), script.widths[name])
        for name, width in script.widths.items():
            if name.startswith(f"ord{ai}_") and name not in asg:
                asg[name] = (0, width)
    return asg


@pytest.mark.parametrize(
    "case",
    [c for c in corpus_cases() if c[6] == "unsafe"],
    ids=lambda c: f"{c[0]}-{c[2].name}-{c[3].mode}",
)
def test_witness_satisfies_emitted_formula(case):
    name, program, model, cfg, k, bits, _ = case
    verdict = check_isolation(program, model, cfg, k, bits)
    assert verdict.outcome == "unsafe"
    text = emit_smt(program, model, cfg, k, bits, name)
    script = Script(text)
    asg = witness_assignment(verdict.witness, model, cfg, bits, script)
    ok, failures = script.check(asg)
    assert ok, failures


def test_witness_satisfaction_with_cond_assign_and_jump():
    src = (
        "layout A[1]@0 secret@1 input in0@2 B[1]@3\nthread 0:\n"
        "1: load r0, in0\n2: r0 <-(r0 < 1?) 3\n3: jmp 4\n4: load r1, A + (r0 & 1)\n"
    )
    program = parse_program(src)
    model = load_model("inorder")
    cfg = SpecConfig(mode="traditional")
    verdict = check_isolation(program, model, cfg, 1, 2)
    assert verdict.outcome == "unsafe"
    text = emit_smt(program, model, cfg, 1, 2, "cond")
    script = Script(text)
    asg = witness_assignment(verdict.witness, model, cfg, 2, script)
    ok, failures = script.check(asg)
    assert ok, failures


def test_rejected_candidate_refutes_the_tighter_formula():
    # the w=8 witness run needs four transient events; the same assignment
    # must violate the window clause of the w=4 formula
    program = parse_program((corpus_dir() / "pht-01.litmus").read_text())
    model = load_model("inorder")
    wide = SpecConfig(mode="speculative", window=8)
    verdict = check_isolation(program, model, wide, 2, 3)
    assert verdict.outcome == "unsafe"

    tight = SpecConfig(mode="speculative", window=4)
    text = emit_smt(program, model, tight, 2, 3, "pht-01")
    script = Script(text)
    asg = witness_assignment(verdict.witness, model, tight, 3, script)
    ok, failures = script.check(asg)
    assert not ok
    assert any("trl_" in str(f) for f in failures)


def test_goal_trivially_false_without_loads():
    src = "layout X@0 secret@1\nthread 0:\n1: store X, 1\n2: skip\n"
    text = emit_smt(parse_program(src), load_model("inorder"),
                    SpecConfig(mode="traditional"), 1, 1, "noloads")
    assert "(assert false)" in text.splitlines()[-3]


def test_srf_model_requires_psf():
    p = parse_program((corpus_dir() / "psf-01.litmus").read_text())
    with pytest.raises(ValueError, match="srf"):
        emit_smt(p, load_model("psf"), SpecConfig(mode="speculative"), 2, 3)


def test_recursive_model_emits_rank_clauses():
    src = "layout A[2]@0 secret@2 input idx@3\nthread 0:\n1: load r0, A\n2: store A, 1\n"
    model = parse_cat("t = po | (t;po)\nacyclic t | rf\n", "rec")
    text = emit_smt(parse_program(src), model, SpecConfig(mode="traditional"), 1, 2)
    assert "drk_t_" in text
    Script(text)


def test_closure_inside_recursion_rejected_by_export():
    src = "layout A[2]@0 secret@2 input idx@3\nthread 0:\n1: load r0, A\n"
    model = parse_cat("t = po | (t;po)^+\nacyclic t\n", "recplus")
    with pytest.raises(CatError, match="closure"):
        emit_smt(parse_program(src), model, SpecConfig(mode="traditional"), 1, 2)


def test_closure_operator_emits_outside_recursion():
    src = "layout A[2]@0 secret@2 input idx@3\nthread 0:\n1: load r0, A\n2: store A, 1\n"
    model = parse_cat("t = po^+ | rf^*\nacyclic t \\ (E * E)\nempty t \\ t\n", "plus")
    text = emit_smt(parse_program(src), model, SpecConfig(mode="traditional"), 1, 2)
    Script(text)
