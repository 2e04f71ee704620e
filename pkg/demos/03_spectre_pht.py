"""
Branch speculation end to end
=============================

The same gadget is safe under traditional control flow, leaks under branch
speculation, needs a wide enough window, and is fixed by a fence.
"""

from axcat import SpecConfig, check_isolation, corpus_dir, emit_witness_dot, load_model, parse_program

inorder = load_model("inorder")
gadget = parse_program((corpus_dir() / "pht-01.litmus").read_text())
fenced = parse_program((corpus_dir() / "pht-01-fence.litmus").read_text())

# Without speculation the bounds check is airtight.
v = check_isolation(gadget, inorder, SpecConfig(mode="traditional"), k=2, domain_bits=3)
print("traditional:", v.outcome)

# Branch speculation opens the window and the out-of-bounds load reads the
# secret's initial value.
v = check_isolation(gadget, inorder, SpecConfig(mode="speculative", window=8), 2, 3)
print("speculative w=8:", v.outcome)

# The transient run needs four instructions, so a window of four is too
# small and five is enough.
for w in (4, 5):
    v_w = check_isolation(gadget, inorder, SpecConfig(mode="speculative", window=w), 2, 3)
    print(f"speculative w={w}:", v_w.outcome)

# A fence after the branch stalls speculation before the load.
print("fenced:", check_isolation(
    fenced, inorder, SpecConfig(mode="speculative", window=8), 2, 3).outcome)

# The unsafe run comes with a replayable witness graph.
print("\nwitness graph:")
print(emit_witness_dot(v.witness))
