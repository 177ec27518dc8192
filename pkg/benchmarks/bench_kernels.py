"""Time the hot kernels with numba and with the numpy fallback.

Each mode runs in its own interpreter because the backend is chosen at
import time from CRANSCHED_DISABLE_NUMBA.

    python3 benchmarks/bench_kernels.py [--frames N]
"""
import argparse
import json
import os
import subprocess
import sys
import time

CHILD = r"""
import json, sys, time
import numpy as np
from cransched import _jit
from cransched.channel import compatibility_matrix, e1_scaled_array, realized_rates, sample_fading
from cransched.engine import ExperimentConfig, SimState, step_frame
from cransched.geometry import SystemParams, generate_drop
from cransched.matching import hungarian_max
from cransched.scheduler import build_utility_matrix, group_kernel, initial_history, schedule_frame, split_groups, _groups_from_kernel
from cransched.traffic import PacketBuffers

frames = int(sys.argv[1])
p = SystemParams()
rng = np.random.default_rng(0)
topo = generate_drop(p, rng)
C = compatibility_matrix(topo, p)
b = PacketBuffers(topo.n_users, p.target_delay, capacity=64)
for t in range(10):
    b.push_all(rng.integers(0, 20, topo.n_users), t)
h = initial_history(topo, p)
z = sample_fading(topo, p.n_channels, rng)
u = rng.uniform(0, 3, topo.n_users)
groups = split_groups(_groups_from_kernel(*group_kernel(u, C)), u, p.n_channels)
W = rng.uniform(0, 5, (5, 5))
x = np.geomspace(1e-3, 1e3, 225).reshape(15, 15)

def timeit(fn, n):
    fn()  # compile / warm caches
    t0 = time.perf_counter()
    for _ in range(n):
        fn()
    return (time.perf_counter() - t0) / n * 1e6

out = {
    "e1_scaled 15x15": timeit(lambda: e1_scaled_array(x), 300),
    "group_users": timeit(lambda: group_kernel(u, C), 300),
    "utility_matrix": timeit(lambda: build_utility_matrix(groups, 5, z, b, topo, p, 10), 300),
    "hungarian 5x5": timeit(lambda: hungarian_max(W), 300),
    "schedule_frame": timeit(lambda: schedule_frame(b, h, z, topo, p, 10, C), 200),
}
cfg = ExperimentConfig(n_frames=frames, warmup=0)
state = SimState(cfg, 1)
step_frame(state)
t0 = time.perf_counter()
for _ in range(frames):
    step_frame(state)
out["full frame"] = (time.perf_counter() - t0) / frames * 1e6
print(json.dumps({"numba": _jit.USE_NUMBA, "us": out}))
"""


def run(disable, frames):
    env = dict(os.environ, CRANSCHED_DISABLE_NUMBA="1" if disable else "0")
    t0 = time.perf_counter()
    res = subprocess.run([sys.executable, "-c", CHILD, str(frames)], env=env,
                         capture_output=True, text=True, check=True)
    data = json.loads(res.stdout.strip().splitlines()[-1])
    data["wall"] = time.perf_counter() - t0
    return data


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=500)
    args = ap.parse_args()
    fast = run(False, args.frames)
    slow = run(True, args.frames)
    if not fast["numba"]:
        print("numba unavailable; both columns use the numpy path")
    print(f"{'kernel':<18}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
    for k in fast["us"]:
        a, b = fast["us"][k], slow["us"][k]
        print(f"{k:<18}{a:>12.2f}{b:>12.2f}{b / a:>9.1f}x")
    print(f"child wall time: numba {fast['wall']:.1f} s (incl. JIT load), numpy {slow['wall']:.1f} s")


if __name__ == "__main__":
    main()
