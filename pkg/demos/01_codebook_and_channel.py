# %% [markdown]
# # Codebook and channel basics
#
# A base station with an M-antenna uniform linear array points beams with a
# Q-codeword DFT codebook.  This walkthrough builds the codebook, shows what
# each codeword's gain pattern looks like over angle, and demonstrates the
# optimal-beam rule on a sparse multipath channel.

# %%
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from beamalign import (
    ArrayConfig,
    ChannelSnapshot,
    Path,
    beam_gains,
    best_beam,
    build_codebook,
    channel_vector,
    normalized_gain,
    steering_vector,
)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

array = ArrayConfig(num_antennas=16, codebook_size=64)
codebook = build_codebook(array)
print(f"array: M={array.num_antennas}, Q={array.codebook_size}, "
      f"d/lambda={array.element_spacing_over_wavelength}")

# %% [markdown]
# Every steering vector and codeword has unit norm; when Q == M the codebook
# would be orthonormal.  Here Q = 4M, so beams oversample the angle axis.

# %%
angles = np.linspace(-np.pi / 2, np.pi / 2, 721)
responses = np.stack([steering_vector(a, array) for a in angles])

fig, ax = plt.subplots(figsize=(8, 4))
for q in range(8, 65, 16):
    pattern = np.abs(responses @ codebook.codeword(q)) ** 2
    ax.plot(np.degrees(angles), pattern, label=f"beam {q}")
ax.set_xlabel("angle of departure [deg]")
ax.set_ylabel("|a(phi)^T f_q|^2")
ax.set_title("DFT codeword gain patterns")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(OUT, "beam_patterns.png"), dpi=120)
print("wrote output/beam_patterns.png")

# %% [markdown]
# A two-path channel: a strong line-of-sight path plus a weaker reflection.
# The optimal-beam rule picks the codeword maximizing |h^T f|^2; the
# normalized gain of any other beam is measured against that optimum.

# %%
snapshot = ChannelSnapshot(
    time_s=0.0,
    paths=(
        Path(gain=1.0, aod_radians=np.radians(18.0)),
        Path(gain=0.3j, aod_radians=np.radians(-35.0)),
    ),
)
h = channel_vector(snapshot, array)
q_star = best_beam(h, codebook)
print(f"optimal beam index: {q_star}")

gains = beam_gains(h, codebook)
fig, ax = plt.subplots(figsize=(8, 3))
ax.bar(np.arange(1, 65), gains / gains.max())
ax.axvline(q_star, color="crimson", lw=1, label=f"best beam {q_star}")
ax.set_xlabel("beam index")
ax.set_ylabel("normalized gain")
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(OUT, "gain_profile.png"), dpi=120)
print("wrote output/gain_profile.png")

# %%
for q in (q_star, q_star - 1, q_star + 4):
    print(f"beam {q:2d}: normalized gain {normalized_gain(h, q, codebook):.4f}")
