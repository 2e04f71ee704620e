"""Control-flow constraint checks for candidate executions.

Committed events must follow the architecturally correct path, with every
conditional jump on the way predicted correctly; transient events must be
reachable from a mispredicted conditional jump along the direction the
branch did *not* take.  The speculation window bounds how many consecutive
transient events a single misprediction may cover, and fences may never
execute transiently.  All checks are pure predicates over a candidate with
a completed valuation; they are used both as the engine's filters and to
re-validate externally supplied witnesses.
"""

from __future__ import annotations

from dataclasses import dataclass

from .events import CandidateExecution, Event
from .masm import Beqz, pred


@dataclass(frozen=True)
class SpecConfig:
    mode: str = "speculative"  # "traditional" | "speculative"
    window: int = 8  # w: branch speculation window
    buffer: int = 2  # w': store-buffer size, >= 1
    always_mispredict: bool = True  # explore both prediction outcomes
    psf: bool = False  # enable predictive store forwarding (srf)

    def __post_init__(self):
        if self.mode not in ("traditional", "speculative"):
            raise ValueError(f"bad mode {self.mode!r}")
        if self.buffer < 1:
            raise ValueError("store buffer size must be >= 1")
        if self.window < 1:
            raise ValueError("speculation window must be >= 1")


def _events_by_site(x: CandidateExecution) -> dict:
    return {(e.thread, e.label): e for e in x.instruction_events()}


def _rval(e: Event) -> int:
    if e.val is None:
        raise ValueError(f"branch event e{e.id} has no resolved value")
    return e.val


def _is_entry(x: CandidateExecution, e: Event) -> bool:
    return e.label == x.program.threads[e.thread][0].label


def check_traditional_cf(x: CandidateExecution) -> bool:
    """Every executed event sits on the one path the branch values dictate."""
    if x.transient:
        return False
    by_site = _events_by_site(x)

    def executed(tid, label):
        return (tid, label) in by_site

    for e in x.instruction_events():
        if _is_entry(x, e):
            continue
        tid, label = e.thread, e.label
        ok = False
        for lp in pred(x.program, label, tid):
            if not executed(tid, lp):
                continue
            p = x.program.instruction(tid, lp)
            pe = by_site[(tid, lp)]
            if isinstance(p.stmt, Beqz):
                if lp + 1 == label and p.stmt.target != label and _rval(pe) != 0:
                    ok = True
                if p.stmt.target == label and _rval(pe) == 0:
                    ok = True
                if (
                    p.stmt.target == label
                    and lp + 1 == label
                ):  # branch to its own fall-through: either value works
                    ok = True
            else:
                ok = True  # plain fall-through or a direct jump here
            if ok:
                break
        if not ok:
            return False
    return True


def check_speculative_cf(x: CandidateExecution, cfg: SpecConfig) -> bool:
    """Committed events need correctly predicted branches on their path;
    transient events need a misprediction contradicted by the branch value."""
    if cfg.mode != "speculative":
        raise ValueError("speculative control flow check needs speculative mode")
    by_site = _events_by_site(x)

    def status(tid, label):
        e = by_site.get((tid, label))
        if e is None:
            return None
        return "transient" if e.id in x.transient else "committed"

    for e in x.instruction_events():
        if _is_entry(x, e):
            if e.id in x.transient:
                return False  # nothing upstream could have mispredicted
            continue
        tid, label = e.thread, e.label
        transient = e.id in x.transient
        ok = False
        for lp in pred(x.program, label, tid):
            st = status(tid, lp)
            if st is None:
                continue
            p = x.program.instruction(tid, lp)
            pe = by_site[(tid, lp)]
            if not transient:
                if isinstance(p.stmt, Beqz):
                    if st != "committed" or not pe.cp:
                        continue
                    if lp + 1 == label and p.stmt.target != label and _rval(pe) != 0:
                        ok = True
                    if p.stmt.target == label and _rval(pe) == 0:
                        ok = True
                    if p.stmt.target == label and lp + 1 == label:
                        ok = True
                elif st == "committed":
                    ok = True
            else:
                if isinstance(p.stmt, Beqz):
                    # any execution of the branch, wrong prediction, and a
                    # branch value contradicting the direction taken here
                    if pe.cp:
                        continue
                    if lp + 1 == label and p.stmt.target != label and _rval(pe) == 0:
                        ok = True
                    if p.stmt.target == label and _rval(pe) != 0:
                        ok = True
                    if p.stmt.target == label and lp + 1 == label:
                        ok = True
                elif st == "transient":
                    ok = True  # transient flow through non-branch or jmp
            if ok:
                break
        if not ok:
            return False
    return True


def check_window(x: CandidateExecution, w: int) -> bool:
    """No w consecutive executed events of a thread are all transient."""
    if w < 1:
        raise ValueError("speculation window must be >= 1")
    by_thread: dict[int, list[Event]] = {}
    for e in x.instruction_events():
        by_thread.setdefault(e.thread, []).append(e)
    for evs in by_thread.values():
        evs.sort(key=lambda e: e.label)
        run = 0
        for e in evs:
            run = run + 1 if e.id in x.transient else 0
            if run >= w:
                return False
    return True


def check_fences(x: CandidateExecution) -> bool:
    """Fences never execute transiently."""
    return all(
        e.id not in x.transient for e in x.instruction_events() if e.kind == "fence"
    )
