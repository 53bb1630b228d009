"""Run every config in ``configs/`` and print a one-line status per run.

Usage: ``python3 scripts/run_all.py [config ...]``. Exit status is the
largest exit status of the individual runs.
"""
import glob
import os
import subprocess
import sys
import time

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main(argv):
    configs = argv or sorted(glob.glob(os.path.join(ROOT, "configs", "*.json")))
    env = dict(os.environ, PYTHONPATH=os.path.join(ROOT, "src") + os.pathsep + os.environ.get("PYTHONPATH", ""))
    worst = 0
    for cfg in configs:
        t0 = time.perf_counter()
        proc = subprocess.run([sys.executable, "-m", "transport_spde", "run", cfg], env=env,
                              capture_output=True, text=True)
        status = {0: "passed", 1: "gates failed", 2: "usage error", 3: "solver error"}.get(proc.returncode, "error")
        print(f"{os.path.basename(cfg):35s} {status:13s} {time.perf_counter() - t0:7.1f}s")
        if proc.returncode not in (0, 1):
            sys.stderr.write(proc.stderr)
        worst = max(worst, proc.returncode)
    return worst


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
