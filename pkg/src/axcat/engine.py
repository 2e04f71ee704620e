"""Isolation checking by exhaustive candidate enumeration.

A program is *unsafe* when some consistent candidate execution contains a
load whose (speculative) reads-from source is the secret init event; the
attacker observes load addresses, so such a load is exactly a read of the
secret.  The engine enumerates every candidate of the bounded program in a
fixed lexicographic order over the choice vector

    control-flow choices (branch outcome and prediction per reached branch)
    x reads-from source per load  x  coherence order  x  input values

and filters through value propagation, the control-flow/window/fence
constraints, and the model's assertions.  The first surviving candidate
that reads the secret becomes the witness.  When no violation exists the
verdict is Safe, or Unknown if loops could not be fully unrolled.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import catlang
from .catlang import CatModel
from .events import (
    SECRET_INIT,
    CandidateExecution,
    MissingOutcome,
    _walk_thread,
    base_relations,
    build_events,
    propagate_values,
    secret_sentinel,
)
from .masm import Program, unroll
from .speculation import (
    SpecConfig,
    check_fences,
    check_speculative_cf,
    check_traditional_cf,
    check_window,
)


class EngineError(ValueError):
    pass


@dataclass
class Verdict:
    outcome: str  # "safe" | "unsafe" | "unknown"
    witness: CandidateExecution | None
    bound: int
    generated: int
    filtered: int

    @property
    def stats(self) -> dict:
        return {"generated": self.generated, "filtered": self.filtered}


def _check_domain(program: Program, domain_bits: int):
    limit = 1 << domain_bits
    worst = program.max_address()
    if worst >= limit:
        raise EngineError(
            f"domain of {domain_bits} bits cannot address {worst} "
            f"(layout and secret need {worst + 1} addresses)"
        )


def _thread_vectors(program: Program, tid: int, cfg: SpecConfig):
    """All (outcomes, cp) assignments for the branches this thread reaches."""
    speculative = cfg.mode == "speculative"
    cp_values = (True, False) if speculative and cfg.always_mispredict else (True,)

    def extend(outcomes, cps):
        try:
            _walk_thread(program, tid, outcomes, cps, speculative)
        except MissingOutcome as miss:
            for taken in (False, True):
                for cp in cp_values:
                    yield from extend(
                        {**outcomes, miss.site: taken}, {**cps, miss.site: cp}
                    )
            return
        yield outcomes, cps

    yield from extend({}, {})


def _control_vectors(program: Program, cfg: SpecConfig):
    per_thread = [
        list(_thread_vectors(program, tid, cfg))
        for tid in range(len(program.threads))
    ]
    for combo in itertools.product(*per_thread):
        outcomes: dict = {}
        cps: dict = {}
        for o, c in combo:
            outcomes.update(o)
            cps.update(c)
        yield outcomes, cps


def enumerate_candidates(program: Program, cfg: SpecConfig, k: int, domain_bits: int):
    """Yield every candidate execution of the k-unrolled program, value
    propagation already attempted, in deterministic lexicographic order."""
    _check_domain(program, domain_bits)
    unrolled = unroll(program, k)
    speculative = cfg.mode == "speculative"
    domain = range(1 << domain_bits)
    inputs = sorted(program.input_locations)

    base_init = {a: 0 for a in program.declared_addresses()}
    base_init[program.secret_addr] = secret_sentinel(domain_bits)

    for outcomes, cps in _control_vectors(unrolled, cfg):
        proto = build_events(
            unrolled, outcomes, cps, speculative=speculative, psf=cfg.psf
        )
        load_ids = [e.id for e in proto.loads()]
        store_ids = [e.id for e in proto.stores()]
        committed_stores = [s for s in store_ids if s in proto.committed]
        source_options = ["init"] + store_ids

        for rf_vector in itertools.product(source_options, repeat=len(load_ids)):
            for co_order in itertools.permutations(committed_stores):
                for input_vector in itertools.product(domain, repeat=len(inputs)):
                    x = build_events(
                        unrolled, outcomes, cps,
                        speculative=speculative, psf=cfg.psf,
                    )
                    x.rf_choice = dict(zip(load_ids, rf_vector))
                    x.co_order = co_order
                    x.init_vals = dict(base_init)
                    x.init_vals.update(zip(inputs, input_vector))
                    x.choices["rf"] = dict(zip(load_ids, rf_vector))
                    x.choices["co"] = co_order
                    x.choices["inputs"] = dict(zip(inputs, input_vector))
                    propagate_values(x, x.init_vals, domain_bits)
                    yield x


def candidate_consistent(x: CandidateExecution, model: CatModel, cfg: SpecConfig):
    """Run the full filter pipeline on a propagated candidate.

    Returns (consistent, reason): reason names the first failed filter.
    """
    if x.valuation is None:
        return False, f"values: {x.inconsistency}"
    if cfg.mode == "traditional":
        if not check_traditional_cf(x):
            return False, "control flow"
    else:
        if not check_speculative_cf(x, cfg):
            return False, "speculative control flow"
    if not check_window(x, cfg.window):
        return False, "speculation window"
    if not check_fences(x):
        return False, "transient fence"
    if cfg.psf and not catlang.check_srf_fence(x):
        return False, "srf across fence"
    bindings = catlang.evaluate(model, base_relations(x), cfg)
    ok, violated = catlang.check_assertions(model, bindings, cfg)
    if not ok:
        return False, f"assertion {violated[0]} {violated[1]}"
    return True, None


def violating_load(x: CandidateExecution) -> int | None:
    """Id of the first load reading the secret init event, if any."""
    chosen = x.srf if x.psf else x.rf
    if chosen is None:
        return None
    for w, r in chosen:
        if x.event(w).kind == SECRET_INIT:
            return r
    return None


def check_isolation(
    program: Program,
    model: CatModel,
    cfg: SpecConfig,
    k: int = 2,
    domain_bits: int = 3,
) -> Verdict:
    """Decide software isolation for the k-unrolled program under `model`."""
    if k < 1:
        raise EngineError("unroll bound must be >= 1")
    if "srf" in model.base_names() and not cfg.psf:
        raise EngineError(
            f"model {model.name!r} references srf but predictive store "
            f"forwarding is disabled"
        )
    unrolled = unroll(program, k)
    generated = 0
    filtered = 0
    for x in enumerate_candidates(program, cfg, k, domain_bits):
        generated += 1
        ok, _ = candidate_consistent(x, model, cfg)
        if not ok:
            filtered += 1
            continue
        if violating_load(x) is not None:
            return Verdict(
                outcome="unsafe",
                witness=x,
                bound=k,
                generated=generated,
                filtered=filtered,
            )
    outcome = "unknown" if unrolled.unroll_incomplete else "safe"
    return Verdict(
        outcome=outcome, witness=None, bound=k, generated=generated, filtered=filtered
    )
