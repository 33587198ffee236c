# %% [markdown]
# # Candidate-beam selection strategies
#
# Tracking mode probes only a small candidate subset around the previous
# optimum.  Three layouts are available: a symmetric window (even), a window
# shifted into the movement direction with a small reserve behind (uneven),
# and a stride-2 variant of the same split (interleaved).

# %%
from beamalign import (
    Direction,
    estimate_direction,
    even_coverage,
    interleaved_coverage,
    to_global,
    to_local,
    uneven_coverage,
)

Q = 64
q_prev = 32

print("previous optimum:", q_prev)
for name, cs in [
    ("even       ", even_coverage(q_prev, 11, Q)),
    ("uneven     ", uneven_coverage(q_prev, 11, Q, 2, Direction.INCREASING)),
    ("interleaved", interleaved_coverage(q_prev, 11, Q, 2, Direction.INCREASING)),
]:
    print(f"{name} -> {cs.global_indices}")

# %% [markdown]
# The movement direction comes from the last two recorded stage optima; the
# difference is circular, so a step across the index wrap still reads
# correctly.

# %%
for window in ([30, 33], [33, 30], [63, 2], [2, 63], [10, 10]):
    print(f"optima {window} -> {estimate_direction(window, Q).value}")

# %% [markdown]
# Wrapping is modular everywhere: a window near the ring edge folds around,
# and local indices (positions inside the set) map back and forth to global
# codebook indices.

# %%
cs = uneven_coverage(63, 7, Q, 2, Direction.INCREASING)
print("wrapped set:", cs.global_indices)
for local in range(1, cs.size + 1):
    g = to_global(local, cs)
    assert to_local(g, cs) == local
    print(f"  local {local} <-> global {g}")
