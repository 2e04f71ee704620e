"""Witness rendering as DOT graphs.

Nodes are events labeled with their statement text; transient events are
drawn dashed.  Edges show immediate program order, the reads-from choice
(rfe for cross-thread pairs, srf under alias prediction), immediate
coherence, and one dashed fence edge around each executed fence.  Init
events appear only when an edge touches them.  Output is byte-stable for
identical witnesses.
"""

from __future__ import annotations

from .events import SECRET_INIT, CandidateExecution, Event
from .masm import stmt_to_text


def _node_name(e: Event) -> str:
    return f"n{e.id}"


def _node_label(x: CandidateExecution, e: Event) -> str:
    if e.kind == SECRET_INIT:
        return f"e_s: secret @{e.addr}"
    if e.is_init():
        return f"e_0: init @{e.addr}={e.val}"
    tag = f"e{e.id}"
    if len(x.program.threads) > 1:
        tag += f" (t{e.thread})"
    return f"{tag}: {stmt_to_text(e.stmt)}"


def emit_witness_dot(x: CandidateExecution) -> str:
    events = {e.id: e for e in x.events}
    edges: list[tuple[int, int, str, str]] = []  # (src, dst, label, style)

    by_thread: dict[int, list[Event]] = {}
    for e in x.instruction_events():
        by_thread.setdefault(e.thread, []).append(e)
    for evs in by_thread.values():
        evs.sort(key=lambda e: e.label)
        for a, b in zip(evs, evs[1:]):
            edges.append((a.id, b.id, "po", "solid"))
        for i, f in enumerate(evs):
            if f.kind == "fence" and 0 < i < len(evs) - 1:
                edges.append((evs[i - 1].id, evs[i + 1].id, "fence", "dashed"))

    chosen = x.srf if x.psf else x.rf
    base_label = "srf" if x.psf else "rf"
    if chosen is not None:
        for w, r in chosen:
            we, re_ = events[w], events[r]
            label = base_label
            if (
                not we.is_init()
                and base_label == "rf"
                and we.thread != re_.thread
            ):
                label = "rfe"
            edges.append((w, r, label, "solid"))

    if x.co is not None:
        # immediate coherence edges only: per address, successive stores
        by_addr: dict[int, list[int]] = {}
        for a, b in x.co:
            by_addr.setdefault(events[a].addr, []).extend([a, b])
        for addr in sorted(by_addr):
            chain = sorted(set(by_addr[addr]), key=lambda i: sum(
                1 for (p, q) in x.co if q == i and events[p].addr == addr
            ))
            for a, b in zip(chain, chain[1:]):
                edges.append((a, b, "co", "solid"))

    used = {e.id for e in x.instruction_events()}
    for a, b, _, _ in edges:
        used.add(a)
        used.add(b)

    lines = ["digraph witness {", "  rankdir=TB;", '  node [shape=box, fontname="monospace"];']
    for eid in sorted(used):
        e = events[eid]
        attrs = [f'label="{_node_label(x, e)}"']
        if e.id in x.transient:
            attrs.append('style="dashed"')
        if e.kind == SECRET_INIT:
            attrs.append('color="red"')
        lines.append(f"  {_node_name(e)} [{', '.join(attrs)}];")
    for a, b, label, style in sorted(edges):
        lines.append(
            f'  n{a} -> n{b} [label="{label}", style="{style}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"
