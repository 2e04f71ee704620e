"""
Store-to-load and predictive store forwarding
=============================================

Index masking through memory is sound in order, bypassable when loads may
pass pending stores, ordered again by filling the store buffer or adding a
fence, and attackable in the opposite direction by alias prediction.
"""

from axcat import SpecConfig, check_isolation, corpus_dir, load_model, parse_program


def verdict(name, model_name, mode="traditional", buffer=2):
    program = parse_program((corpus_dir() / f"{name}.litmus").read_text())
    model = load_model(model_name)
    cfg = SpecConfig(mode=mode, window=8, buffer=buffer,
                     psf="srf" in model.base_names())
    return check_isolation(program, model, cfg, k=2, domain_bits=3).outcome


# The masking store must be visible to the reload for the bound to hold.
print("masking, in-order:      ", verdict("stl-01", "inorder"))
print("masking, store bypass:  ", verdict("stl-01", "stl"))
print("masking, fence between: ", verdict("stl-01-fence", "stl"))
print("masking in a register:  ", verdict("stl-02", "stl"))

# The store buffer is finite: two stores between the pair force the
# masking store to retire first (buffer size two), one store does not.
print("two stores in between:  ", verdict("stl-03", "stl", buffer=2))
print("one store in between:   ", verdict("stl-04", "stl", buffer=2))

# Predictive store forwarding: the load is served a value from a store
# whose address merely might alias; only an interposed fence forces the
# addresses to agree.
print("alias prediction:       ", verdict("psf-01", "psf", mode="speculative"))
print("alias prediction, fence:", verdict("psf-01-fence", "psf", mode="speculative"))
