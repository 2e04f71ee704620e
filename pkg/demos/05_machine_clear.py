"""
Concurrency and the memory-ordering machine clear
=================================================

A message-passing pattern is safe under total store order, but the window
opened by a memory-ordering machine clear lets the two reader loads swap
transiently, exposing the out-of-bounds index r0*(r0-r1) = 1.
"""

from axcat import SpecConfig, check_isolation, corpus_dir, emit_witness_dot, load_model, parse_program

program = parse_program((corpus_dir() / "mcu-01.litmus").read_text())
cfg = SpecConfig(mode="traditional")

v_tso = check_isolation(program, load_model("tso"), cfg, k=2, domain_bits=3)
print("tso:     ", v_tso.outcome)

v_mcu = check_isolation(program, load_model("tso-mcu"), cfg, k=2, domain_bits=3)
print("tso-mcu: ", v_mcu.outcome)

# In the witness, the reader sees the second store but not the first: the
# cross-thread reads-from edge and the stale init read together encode the
# reordering that the plain tso model forbids as a cycle.
print("\nwitness:")
print(emit_witness_dot(v_mcu.witness))
