# %% [markdown]
# # Trajectories and channel traces
#
# The scene generator replaces ray-traced data with a 2-D geometric stand-in:
# a user walks through the array's broadside sector at constant speed while
# the line-of-sight departure angle (and with it the optimal beam) drifts.
# Traces persist to a small versioned binary format.

# %%
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from beamalign import (
    ArrayConfig,
    MobilityConfig,
    SceneConfig,
    best_beam,
    build_codebook,
    channel_trace,
    channel_vector,
    gen_trajectory,
    load_trace,
    save_trace,
)

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

array = ArrayConfig(num_antennas=16, codebook_size=64)
codebook = build_codebook(array)
rng = np.random.default_rng(7)

mobility = MobilityConfig(
    speed_mps=10.0,
    duration_s=4.0,
    turn_event_rate_hz=1.0,
    heading_change_std_radians=0.7,
    start_radius_bounds_m=(20.0, 60.0),
)
trajectory = gen_trajectory(mobility, rng)
trace = channel_trace(trajectory, SceneConfig(num_paths=3), array, rng)
print(f"{len(trace.snapshots)} snapshots over {trace.duration_s:.1f}s")

# %% [markdown]
# The walk stays inside the sector (headings reflect off the boundary) and
# every step has length exactly v * dt.

# %%
fig, ax = plt.subplots(figsize=(5, 5))
ax.plot(trajectory.positions_m[:, 0], trajectory.positions_m[:, 1], lw=1)
ax.plot(0, 0, "r^", markersize=10, label="BS")
ax.set_xlabel("x [m]")
ax.set_ylabel("y [m]")
ax.set_title("UE trajectory (turn events enabled)")
ax.legend()
ax.set_aspect("equal")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "trajectory.png"), dpi=120)
print("wrote output/trajectory.png")

# %%
los_aod = np.array([s.paths[0].aod_radians for s in trace.snapshots])
optimal = [
    best_beam(channel_vector(s, array), codebook) for s in trace.snapshots[::20]
]
fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
ax1.plot(trace.times, np.degrees(los_aod))
ax1.set_ylabel("LOS AoD [deg]")
ax2.step(trace.times[::20], optimal, where="post")
ax2.set_ylabel("optimal beam")
ax2.set_xlabel("time [s]")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "beam_drift.png"), dpi=120)
print("wrote output/beam_drift.png")

# %% [markdown]
# Round-tripping through the binary format is bit-exact on all numeric fields.

# %%
path = os.path.join(OUT, "demo_trace.btrc")
save_trace(trace, path)
restored = load_trace(path)
assert restored.snapshots == trace.snapshots
assert restored.array == trace.array
print(f"round trip OK: {os.path.getsize(path)} bytes")
