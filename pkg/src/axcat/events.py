"""Candidate executions: events, base relations, and value propagation.

A candidate execution is the event set of one control-flow unfolding of a
loop-free program (committed prefix per thread plus at most one transient
continuation opened by a mispredicted branch), together with a reads-from
choice per load, a coherence order over committed stores, and the initial
values of attacker-controlled locations.  Whether a candidate represents a
behavior the hardware model allows is decided elsewhere; this module only
builds candidates and computes the relations and the valuation they induce.

Conventions baked in here:

  * one init event per declared address; the one at the secret address is
    the secret init and carries an out-of-band sentinel value (2^bits),
    distinct from every expressible store value;
  * registers start at 0 and follow program order within a thread;
  * transient stores never enter the coherence order and can feed only
    program-order-later transient loads of the same thread;
  * under predictive store forwarding the per-load source choice is the
    speculative reads-from (srf): a source with a different address is
    legal only for a program store earlier in the same thread (store-buffer
    forwarding); init events must match the load address exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .masm import (
    Assign,
    Beqz,
    CondAssign,
    Fence,
    Instruction,
    Jmp,
    Load,
    Program,
    Skip,
    Store,
    Stmt,
    eval_expr,
    expr_registers,
    stmt_target_reg,
)

INIT = "init"
SECRET_INIT = "secret-init"
KIND_BY_STMT = {
    Load: "load",
    Store: "store",
    Assign: "local",
    CondAssign: "cond-local",
    Jmp: "jump",
    Beqz: "cond-jump",
    Fence: "fence",
    Skip: "skip",
}

WRITE_KINDS = frozenset({"store", INIT, SECRET_INIT})
MEMORY_KINDS = frozenset({"load", "store", INIT, SECRET_INIT})


# ---------------------------------------------------------------------------
# Relations


@dataclass(frozen=True)
class Relation:
    """A finite set of ordered event-id pairs with the usual set algebra."""

    pairs: frozenset

    @classmethod
    def of(cls, pairs) -> "Relation":
        return cls(frozenset((a, b) for a, b in pairs))

    @classmethod
    def empty(cls) -> "Relation":
        return cls(frozenset())

    @classmethod
    def identity(cls, ids) -> "Relation":
        return cls(frozenset((e, e) for e in ids))

    @classmethod
    def cartesian(cls, left, right) -> "Relation":
        return cls(frozenset((a, b) for a in left for b in right))

    def __or__(self, other: "Relation") -> "Relation":
        return Relation(self.pairs | other.pairs)

    def __and__(self, other: "Relation") -> "Relation":
        return Relation(self.pairs & other.pairs)

    def __sub__(self, other: "Relation") -> "Relation":
        return Relation(self.pairs - other.pairs)

    def inverse(self) -> "Relation":
        return Relation(frozenset((b, a) for a, b in self.pairs))

    def compose(self, other: "Relation") -> "Relation":
        by_src: dict[int, set] = {}
        for a, b in other.pairs:
            by_src.setdefault(a, set()).add(b)
        out = set()
        for a, b in self.pairs:
            for c in by_src.get(b, ()):
                out.add((a, c))
        return Relation(frozenset(out))

    def closure(self) -> "Relation":
        """Transitive closure."""
        succ: dict[int, set] = {}
        for a, b in self.pairs:
            succ.setdefault(a, set()).add(b)
        out = set()
        for start in succ:
            stack = list(succ[start])
            seen = set()
            while stack:
                node = stack.pop()
                if node in seen:
                    continue
                seen.add(node)
                out.add((start, node))
                stack.extend(succ.get(node, ()))
        return Relation(frozenset(out))

    def rstar(self, universe) -> "Relation":
        """Reflexive-transitive closure over the given event universe."""
        return self.closure() | Relation.identity(universe)

    def is_irreflexive(self) -> bool:
        return all(a != b for a, b in self.pairs)

    def is_empty(self) -> bool:
        return not self.pairs

    def is_acyclic(self) -> bool:
        succ: dict[int, list] = {}
        for a, b in self.pairs:
            succ.setdefault(a, []).append(b)
        WHITE, GRAY, BLACK = 0, 1, 2
        color: dict[int, int] = {}
        for root in sorted(succ):
            if color.get(root, WHITE) != WHITE:
                continue
            stack = [(root, iter(sorted(succ.get(root, ()))))]
            color[root] = GRAY
            while stack:
                node, it = stack[-1]
                advanced = False
                for nxt in it:
                    c = color.get(nxt, WHITE)
                    if c == GRAY:
                        return False
                    if c == WHITE:
                        color[nxt] = GRAY
                        stack.append((nxt, iter(sorted(succ.get(nxt, ())))))
                        advanced = True
                        break
                if not advanced:
                    color[node] = BLACK
                    stack.pop()
        return True

    def __contains__(self, pair) -> bool:
        return pair in self.pairs

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(sorted(self.pairs))

    def __bool__(self) -> bool:
        return bool(self.pairs)


# ---------------------------------------------------------------------------
# Events


@dataclass
class Event:
    id: int
    kind: str
    origin: tuple[int, int, int] | None = None  # (label, iteration, thread)
    stmt: Stmt | None = None
    addr: int | None = None
    val: int | None = None
    cp: bool | None = None

    @property
    def label(self) -> int:
        return self.origin[0]

    @property
    def thread(self) -> int:
        return self.origin[2]

    def is_init(self) -> bool:
        return self.kind in (INIT, SECRET_INIT)


class Inconsistent:
    """Marker result of value propagation: the candidate contradicts itself."""

    def __init__(self, reason: str):
        self.reason = reason

    def __repr__(self):
        return f"Inconsistent({self.reason!r})"


class MissingOutcome(LookupError):
    """A control-flow walk reached a branch with no outcome assigned."""

    def __init__(self, site):
        super().__init__(site)
        self.site = site  # (thread, label)


@dataclass
class CandidateExecution:
    program: Program
    events: list[Event]
    committed: frozenset
    transient: frozenset
    psf: bool = False
    # per-load source choice: "init" or the id of a program store event
    rf_choice: dict = field(default_factory=dict)
    co_order: tuple = ()  # committed store ids, coherence positions
    init_vals: dict = field(default_factory=dict)
    rf: Relation | None = None
    co: Relation | None = None
    srf: Relation | None = None
    valuation: dict | None = None
    inconsistency: str | None = None
    # choice-vector metadata, for reproducibility and witness reports
    choices: dict = field(default_factory=dict)

    def event(self, eid: int) -> Event:
        return self.events[eid]

    def executed(self) -> frozenset:
        return self.committed | self.transient

    def instruction_events(self) -> list[Event]:
        return [e for e in self.events if not e.is_init()]

    def init_events(self) -> list[Event]:
        return [e for e in self.events if e.is_init()]

    def secret_init(self) -> Event:
        for e in self.events:
            if e.kind == SECRET_INIT:
                return e
        raise LookupError("no secret init event")

    def loads(self) -> list[Event]:
        return [e for e in self.events if e.kind == "load"]

    def stores(self) -> list[Event]:
        return [e for e in self.events if e.kind == "store"]

    def event_sets(self) -> dict:
        """The event-class sets used by model files: E, M, W, R."""
        all_ids = frozenset(e.id for e in self.events)
        mem = frozenset(e.id for e in self.events if e.kind in MEMORY_KINDS)
        writes = frozenset(e.id for e in self.events if e.kind in WRITE_KINDS)
        reads = frozenset(e.id for e in self.events if e.kind == "load")
        return {"E": all_ids, "M": mem, "W": writes, "R": reads}


# ---------------------------------------------------------------------------
# Building the event skeleton


def _fall_label(ins: Instruction, labels: frozenset) -> int | None:
    if isinstance(ins.stmt, Jmp) or not ins.falls_through:
        return None
    return ins.label + 1 if ins.label + 1 in labels else None


def _walk_thread(program: Program, tid: int, outcomes, cps, speculative: bool):
    """One control-flow unfolding of a thread.

    Returns (committed labels, transient labels).  The committed walk stops
    at a mispredicted branch; the transient continuation then follows the
    wrong direction until a fence, a correctly predicted branch, a cut jump
    edge, or the end of the path.
    """
    if not program.threads[tid]:
        return [], []
    instrs = {i.label: i for i in program.threads[tid]}
    labels = frozenset(instrs)
    first = program.threads[tid][0].label

    committed: list[int] = []
    transient: list[int] = []

    label: int | None = first
    transient_from: int | None = None
    while label is not None:
        ins = instrs[label]
        committed.append(label)
        s = ins.stmt
        if isinstance(s, Beqz):
            key = (tid, label)
            if key not in outcomes:
                raise MissingOutcome(key)
            taken = outcomes[key]
            correct = True if not speculative else cps.get(key, True)
            if correct:
                label = s.target if taken else _fall_label(ins, labels)
            else:
                transient_from = _fall_label(ins, labels) if taken else s.target
                label = None
        elif isinstance(s, Jmp):
            label = s.target
        else:
            label = _fall_label(ins, labels)

    label = transient_from
    while label is not None:
        ins = instrs[label]
        s = ins.stmt
        if isinstance(s, Fence):
            break  # fences stall speculation and never execute transiently
        transient.append(label)
        if isinstance(s, Beqz):
            key = (tid, label)
            if key not in outcomes:
                raise MissingOutcome(key)
            taken = outcomes[key]
            if cps.get(key, True):
                break  # no transient continuation after a correct prediction
            label = _fall_label(ins, labels) if taken else s.target
        elif isinstance(s, Jmp):
            label = s.target
        else:
            label = _fall_label(ins, labels)

    return committed, transient


def build_events(
    program: Program,
    branch_outcomes: dict,
    cp_assign: dict,
    partition_choice=None,
    speculative: bool = True,
    psf: bool = False,
) -> CandidateExecution:
    """Materialize the event skeleton for one choice of branch outcomes and
    prediction correctness.

    `branch_outcomes` maps (thread, label) of a reached conditional jump to
    True when the jump is taken; `cp_assign` maps the same keys to True when
    the direction was predicted correctly (ignored in traditional mode).
    The committed/transient partition is fully determined by these choices;
    a `partition_choice` pair (committed, transient) of label-set tuples may
    be passed to cross-check an externally supplied partition.
    """
    events: list[Event] = []
    for a in program.declared_addresses():
        kind = SECRET_INIT if a == program.secret_addr else INIT
        events.append(Event(id=len(events), kind=kind, addr=a))

    committed_ids = set(e.id for e in events)  # init events count as committed
    transient_ids: set[int] = set()

    for tid in range(len(program.threads)):
        com_labels, tr_labels = _walk_thread(
            program, tid, branch_outcomes, cp_assign, speculative
        )
        if partition_choice is not None:
            want_com, want_tr = partition_choice
            if tuple(com_labels) != tuple(want_com[tid]) or tuple(tr_labels) != tuple(
                want_tr[tid]
            ):
                raise ValueError(
                    f"partition guess for thread {tid} does not match the "
                    f"control-flow choices"
                )
        instrs = {i.label: i for i in program.threads[tid]}
        for label in com_labels + tr_labels:
            ins = instrs[label]
            kind = KIND_BY_STMT[type(ins.stmt)]
            it = ins.provenance[1] if ins.provenance else 1
            ev = Event(
                id=len(events),
                kind=kind,
                origin=(label, it, tid),
                stmt=ins.stmt,
            )
            if kind == "cond-jump":
                ev.cp = (
                    True
                    if not speculative
                    else cp_assign.get((tid, label), True)
                )
            events.append(ev)
            if label in tr_labels:
                transient_ids.add(ev.id)
            else:
                committed_ids.add(ev.id)

    return CandidateExecution(
        program=program,
        events=events,
        committed=frozenset(committed_ids),
        transient=frozenset(transient_ids),
        psf=psf,
        choices={
            "outcomes": dict(sorted(branch_outcomes.items())),
            "cp": dict(sorted(cp_assign.items())),
        },
    )


# ---------------------------------------------------------------------------
# Value propagation


def secret_sentinel(bits: int) -> int:
    return 1 << bits


def propagate_values(x: CandidateExecution, init_vals: dict, bits: int):
    """Resolve addresses and values, or report an inconsistency.

    `init_vals` gives the initial value of every declared address (the
    engine fixes non-input locations at 0 and the secret at its sentinel).
    Returns the valuation dict {event id: (addr, val)} on success, else an
    `Inconsistent` with the first reason found.  The result is written back
    into the events and the rf/srf/co relations are materialized.
    """
    mask = (1 << bits) - 1
    program = x.program
    init_by_addr = {e.addr: e for e in x.events if e.is_init()}

    for e in x.events:
        if e.is_init():
            if e.addr not in init_vals:
                return _fail(x, f"no initial value for address {e.addr}")
            e.val = init_vals[e.addr]
        else:
            e.addr = None
            e.val = None

    by_thread: dict[int, list[Event]] = {}
    for e in x.instruction_events():
        by_thread.setdefault(e.thread, []).append(e)
    for evs in by_thread.values():
        evs.sort(key=lambda e: e.label)

    def resolve_source(load: Event, addr=None):
        choice = x.rf_choice.get(load.id)
        if choice is None:
            return None
        if choice == "init":
            addr = load.addr if addr is None else addr
            if addr is None:
                return None
            return init_by_addr.get(addr)
        return x.event(choice)

    for _ in range(len(x.events) + 2):
        changed = False
        for tid in sorted(by_thread):
            regs: dict[str, int | None] = {}
            for e in by_thread[tid]:
                s = e.stmt
                addr = val = None
                if isinstance(s, Assign):
                    val = eval_expr(s.expr, regs, program.secret_addr, mask)
                    regs[s.reg] = val
                elif isinstance(s, CondAssign):
                    guard = eval_expr(s.guard, regs, program.secret_addr, mask)
                    if guard is None:
                        val = None
                        regs[s.reg] = None
                    elif guard != 0:
                        val = eval_expr(s.expr, regs, program.secret_addr, mask)
                        regs[s.reg] = val
                    else:
                        val = regs.get(s.reg, 0)
                elif isinstance(s, Load):
                    addr = eval_expr(s.addr, regs, program.secret_addr, mask)
                    src = resolve_source(e, addr)
                    val = src.val if src is not None else None
                    regs[s.reg] = val
                elif isinstance(s, Store):
                    addr = eval_expr(s.addr, regs, program.secret_addr, mask)
                    val = eval_expr(s.value, regs, program.secret_addr, mask)
                elif isinstance(s, Beqz):
                    val = regs.get(s.reg, 0)
                if e.addr != addr or e.val != val:
                    e.addr, e.val = addr, val
                    changed = True
        if not changed:
            break
    else:
        return _fail(x, "value propagation did not stabilize")

    for e in x.instruction_events():
        if e.kind in ("load", "store") and e.addr is None:
            return _fail(x, f"unresolved address at e{e.id}")
        if e.kind in ("load", "store", "cond-jump", "local", "cond-local") and e.val is None:
            return _fail(x, f"unresolved value at e{e.id} (cyclic dataflow)")

    for e in x.stores():
        if e.addr not in init_by_addr:
            return _fail(x, f"store e{e.id} hits undeclared address {e.addr}")

    # Materialize the reads-from choice and check its legality.
    pairs = []
    for load in x.loads():
        src = resolve_source(load)
        if src is None:
            if x.rf_choice.get(load.id) == "init":
                return _fail(
                    x, f"load e{load.id} reads undeclared address {load.addr}"
                )
            return _fail(x, f"load e{load.id} has no reads-from source")
        if src.val != load.val:
            return _fail(x, f"value mismatch on reads-from (e{src.id}, e{load.id})")
        if src.addr != load.addr:
            if not x.psf:
                return _fail(
                    x, f"reads-from (e{src.id}, e{load.id}) joins different addresses"
                )
            # Alias-predicted forwarding: only a program store earlier in
            # the same thread can supply a different address.
            if src.is_init() or src.thread != load.thread or src.label >= load.label:
                return _fail(
                    x,
                    f"alias forwarding (e{src.id}, e{load.id}) is not a "
                    f"store-buffer pair",
                )
        if src.id in x.transient:
            if (
                load.id not in x.transient
                or src.thread != load.thread
                or src.label >= load.label
            ):
                return _fail(
                    x,
                    f"transient store e{src.id} can only feed a later transient "
                    f"load of its thread",
                )
        pairs.append((src.id, load.id))

    chosen = Relation.of(pairs)
    if x.psf:
        x.srf = chosen
        x.rf = Relation.of(
            (w, r) for w, r in pairs if x.event(w).addr == x.event(r).addr
        )
    else:
        x.rf = chosen
        x.srf = Relation.empty()

    # Coherence: per address, init first, then committed stores in the
    # globally chosen sequence.  Transient stores never hit memory.
    position = {sid: n for n, sid in enumerate(x.co_order)}
    co_pairs = []
    by_addr: dict[int, list[int]] = {}
    for sid in x.co_order:
        e = x.event(sid)
        if e.id in x.transient:
            return _fail(x, f"transient store e{sid} in the coherence order")
        by_addr.setdefault(e.addr, []).append(sid)
    for addr, sids in sorted(by_addr.items()):
        sids.sort(key=position.__getitem__)
        init = init_by_addr[addr]
        for i, sid in enumerate(sids):
            co_pairs.append((init.id, sid))
            for later in sids[i + 1:]:
                co_pairs.append((sid, later))
    x.co = Relation.of(co_pairs)

    x.valuation = {e.id: (e.addr, e.val) for e in x.events}
    x.inconsistency = None
    return x.valuation


def _fail(x: CandidateExecution, reason: str):
    x.inconsistency = reason
    x.valuation = None
    return Inconsistent(reason)


# ---------------------------------------------------------------------------
# Base relations


def base_relations(x: CandidateExecution) -> dict:
    """The named relations a model file may reference, plus the event sets."""
    if x.valuation is None:
        raise ValueError("base relations need a completed valuation")

    by_thread: dict[int, list[Event]] = {}
    for e in x.instruction_events():
        by_thread.setdefault(e.thread, []).append(e)
    for evs in by_thread.values():
        evs.sort(key=lambda e: e.label)

    po_pairs = []
    fence_pairs = []
    for evs in by_thread.values():
        fence_labels = [e.label for e in evs if e.kind == "fence"]
        for i, a in enumerate(evs):
            for b in evs[i + 1:]:
                po_pairs.append((a.id, b.id))
                if any(a.label < fl < b.label for fl in fence_labels):
                    fence_pairs.append((a.id, b.id))

    # Address dependency: a load feeds the address of a later memory access
    # through a register that no instruction in between (textually) rewrites.
    addr_pairs = []
    for tid, evs in by_thread.items():
        instrs = {i.label: i for i in x.program.threads[tid]}
        for a in evs:
            if a.kind != "load":
                continue
            reg = a.stmt.reg
            for b in evs:
                if b.label <= a.label or b.kind not in ("load", "store"):
                    continue
                if reg not in expr_registers(b.stmt.addr):
                    continue
                clobbered = any(
                    stmt_target_reg(instrs[l].stmt) == reg
                    for l in range(a.label + 1, b.label)
                    if l in instrs
                )
                if not clobbered:
                    addr_pairs.append((a.id, b.id))

    mem = [e for e in x.events if e.kind in MEMORY_KINDS]
    by_addr: dict[int, list[int]] = {}
    for e in mem:
        by_addr.setdefault(e.addr, []).append(e.id)
    loc_pairs = []
    for ids in by_addr.values():
        for a in ids:
            for b in ids:
                loc_pairs.append((a, b))

    rfe_pairs = [
        (w, r)
        for w, r in (x.rf.pairs if x.rf else ())
        if not x.event(w).is_init() and x.event(w).thread != x.event(r).thread
    ]

    rels = {
        "po": Relation.of(po_pairs),
        "fence": Relation.of(fence_pairs),
        "addr": Relation.of(addr_pairs),
        "loc": Relation.of(loc_pairs),
        "rf": x.rf or Relation.empty(),
        "co": x.co or Relation.empty(),
        "rfe": Relation.of(rfe_pairs),
        "srf": x.srf or Relation.empty(),
    }
    rels.update(x.event_sets())
    return rels
