"""Events per second of the numba engine against the uncompiled kernels.

    python benchmarks/bench_engine.py --L 32 --events 20000

The pure-Python leg runs in a child process with ``LOZENGE_NO_NUMBA=1`` so
that no kernel is compiled.  Both legs consume the same pre-drawn uniforms,
so their final configurations must be identical; the script checks that.
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

from lozenge.dynamics import DynamicsKind, Engine
from lozenge.tiling import new_torus


def timed_run(L, events, kind, seed):
    eng = Engine(new_torus(L, (1 / 3, 1 / 3)), kind, seed=seed)
    eng.run_events(10)  # triggers compilation when numba is active
    eng = Engine(new_torus(L, (1 / 3, 1 / 3)), kind, seed=seed)
    start = time.perf_counter()
    eng.run_events(events)
    elapsed = time.perf_counter() - start
    return {"seconds": elapsed, "digest": hashlib.sha256(eng.state.pos.tobytes()).hexdigest()}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--L", type=int, default=32)
    ap.add_argument("--events", type=int, default=20000)
    ap.add_argument("--kind", default="DynII")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    kind = DynamicsKind.parse(args.kind)
    if args.child:
        print(json.dumps(timed_run(args.L, args.events, kind, args.seed)))
        return

    fast = timed_run(args.L, args.events, kind, args.seed)
    env = dict(os.environ, LOZENGE_NO_NUMBA="1")
    cmd = [sys.executable, __file__, "--child", "--L", str(args.L), "--events", str(args.events),
           "--kind", args.kind, "--seed", str(args.seed)]
    slow = json.loads(subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout)
    if fast["digest"] != slow["digest"]:
        raise SystemExit("backends diverged")
    print(f"{'backend':<8} {'seconds':>9} {'events/s':>12}")
    for name, r in (("numba", fast), ("python", slow)):
        print(f"{name:<8} {r['seconds']:9.3f} {args.events / r['seconds']:12.0f}")
    print(f"speedup  {slow['seconds'] / fast['seconds']:9.1f}x   (identical final state)")


if __name__ == "__main__":
    main()
