"""Engine vs. unpruned brute-force reference on randomized programs."""

import random

import pytest

from axcat import SpecConfig, check_isolation, load_model, parse_program, unroll
from generator import random_program_source
from reference import brute_force_isolation

ROTATION = (
    ("inorder", "traditional"),
    ("inorder", "speculative"),
    ("stl", "traditional"),
    ("stl", "speculative"),
    ("tso", "traditional"),
    ("tso-mcu", "traditional"),
    ("psf", "traditional"),
    ("psf", "speculative"),
    ("tso-mcu", "speculative"),
    ("tso", "speculative"),
)

_MODELS = {name: load_model(name) for name in ("inorder", "stl", "psf", "tso", "tso-mcu")}


def agree_on(seed: int) -> tuple[str, str]:
    rng = random.Random(seed)
    src = random_program_source(rng)
    program = parse_program(src)
    model_name, mode = ROTATION[seed % len(ROTATION)]
    model = _MODELS[model_name]
    w = rng.choice((2, 3, 8))
    buffer = rng.choice((1, 2))
    psf = "srf" in model.base_names()
    cfg = SpecConfig(mode=mode, window=w, buffer=buffer, psf=psf)

    got = check_isolation(program, model, cfg, k=1, domain_bits=2).outcome
    want = brute_force_isolation(
        unroll(program, 1), model, mode, w, buffer, bits=2, psf=psf
    )
    return got, want


def run_agreement(seeds, base=0):
    mismatches = []
    for i in range(seeds):
        got, want = agree_on(base + i)
        if got != want:
            rng = random.Random(base + i)
            mismatches.append((base + i, got, want, random_program_source(rng)))
    assert not mismatches, "\n".join(
        f"seed {s}: engine={g} reference={w}\n{src}" for s, g, w, src in mismatches
    )


def test_engine_matches_reference_smoke():
    run_agreement(40, base=1000)


def test_reference_detects_direct_secret_read():
    src = "layout A[1]@0 secret@1 input in0@2 B[1]@3\nthread 0:\n1: load r0, secret\n"
    program = parse_program(src)
    model = _MODELS["inorder"]
    assert brute_force_isolation(unroll(program, 1), model, "traditional", 8, 2, 2) == "unsafe"
    cfg = SpecConfig(mode="traditional")
    assert check_isolation(program, model, cfg, 1, 2).outcome == "unsafe"


@pytest.mark.parametrize(
    "src,model_name,mode,psf,expected",
    [
        # future read attempt: the only store is after the load
        (
            "layout A[1]@0 secret@1 input in0@2 B[1]@3\nthread 0:\n"
            "1: load r0, A\n2: store A, 1\n",
            "inorder", "traditional", False, "safe",
        ),
        # cross-thread message passing without ordering constraints
        (
            "layout A[1]@0 secret@1 input in0@2 B[1]@3\nthread 0:\n"
            "1: load r0, B\n2: load r1, A + r0\nthread 1:\n1: store B, 1\n",
            "tso", "traditional", False, "unsafe",
        ),
        # conditional assignment guards the index
        (
            "layout A[1]@0 secret@1 input in0@2 B[1]@3\nthread 0:\n"
            "1: load r0, in0\n2: r0 <-(r0 < 1?) 0\n3: load r1, A + (r0 & 1)\n",
            "inorder", "traditional", False, "unsafe",
        ),
        # transient store feeding a transient load
        (
            "layout A[1]@0 secret@1 input in0@2 B[1]@3\nthread 0:\n"
            "1: load r0, in0\n2: beqz r0, 5\n3: store B, 3\n4: load r1, B\n5: skip\n",
            "inorder", "speculative", False, "safe",
        ),
        # alias forwarding reaches the secret only without the fence
        (
            "layout A[1]@0 secret@1 input in0@2 B[1]@3\nthread 0:\n"
            "1: store B, 1\n2: load r0, in0\n3: load r1, A + r0\n",
            "psf", "traditional", True, "unsafe",
        ),
    ],
)
def test_reference_edge_cases_agree(src, model_name, mode, psf, expected):
    program = parse_program(src)
    model = _MODELS[model_name]
    cfg = SpecConfig(mode=mode, window=8, buffer=2, psf=psf)
    got = check_isolation(program, model, cfg, 1, 2).outcome
    want = brute_force_isolation(unroll(program, 1), model, mode, 8, 2, 2, psf=psf)
    assert got == want == expected
