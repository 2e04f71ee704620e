"""
Litmus programs and bounded unrolling
=====================================

Parse a small program, inspect its static structure, and unroll a loop.
"""

from axcat import parse_program, pred, unroll
from axcat.masm import stmt_to_text

# The bounds-check-bypass gadget: an attacker-controlled index is compared
# against the array size before the access.
SOURCE = """\
layout A[4]@0 secret@4 input idx@5 B[2]@6
thread 0:
1: load r1, idx
2: r2 <- r1 < A.size
3: beqz r2, 7
4: load r3, A + r1
5: load r4, B + r3
6: r6 <- r6 & r4
7: skip
"""

program = parse_program(SOURCE)
print("layout:", program.layout, "secret at", program.secret_addr)
for ins in program.threads[0]:
    print(f"  {ins.label}: {stmt_to_text(ins.stmt)}")

# Static predecessors: label 7 is reachable by falling out of 6 and by the
# taken branch at 3; label 4 only by falling through the branch.
print("pred(7) =", sorted(pred(program, 7)))
print("pred(4) =", sorted(pred(program, 4)))
print("pred(1) =", sorted(pred(program, 1)))

# A counted loop: unrolling clones the body per iteration and cuts the
# final back edge, flagging the result as potentially incomplete.
LOOP = """\
layout A[4]@0 secret@4 input idx@5 B[1]@6 temp@7
thread 0:
1: load r1, idx
2: r2 <- r1 < A.size
3: beqz r2, 7
4: load r3, A + r1
5: r1 <- r1 + 1
6: jmp 2
7: skip
"""

unrolled = unroll(parse_program(LOOP), 2)
print("\nunrolled with k=2 (label, source label, iteration):")
for ins in unrolled.threads[0]:
    print(f"  {ins.label}: {stmt_to_text(ins.stmt):28s} from {ins.provenance}")
print("potentially incomplete:", unrolled.unroll_incomplete)
