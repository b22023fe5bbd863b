"""Build the bundled synthetic suite, run both method families, write reports.

    python scripts/run_demo_suite.py --seed 20200 --out demo-out
"""

import argparse
import time
from dataclasses import asdict, dataclass

import numpy as np

from routevv.harness import UNDEFINED, AnalysisSettings, run_suite
from routevv.netroute import generate_test_suite
from routevv.synth import demo_suite


@dataclass
class DemoConfig:
    seed: int = 20200
    n_origins: int = 100
    out: str = "demo-out"
    spacing_factor: float = 20.0
    subsample: int = 4


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, default in asdict(DemoConfig()).items():
        ap.add_argument(f"--{name.replace('_', '-')}", type=type(default), default=default)
    cfg = DemoConfig(**vars(ap.parse_args()))

    t0 = time.perf_counter()
    demo = demo_suite(cfg.seed, cfg.n_origins)
    pairs = generate_test_suite(demo.network, demo.origins, demo.destination)
    report = run_suite([c for c, _ in pairs], demo.grid, demo.network,
                       settings=AnalysisSettings(cfg.spacing_factor, cfg.subsample))
    report.write(cfg.out, cfg.seed, asdict(cfg))
    elapsed = time.perf_counter() - t0

    print(f"{len(pairs)} cases, {len(report.failures)} route failures, {len(report.errors)} errors, {elapsed:.1f} s")
    for metric in sorted({r.metric for r in report.records}):
        pds = np.array([r.pct_diff for r in report.records if r.metric == metric and r.gate != UNDEFINED])
        if pds.size == 0:
            continue
        q = np.percentile(np.abs(pds), [50, 90, 100])
        print(f"  {metric:<20} n={pds.size:<4} |pd| median {q[0]:.3f}%  p90 {q[1]:.3f}%  max {q[2]:.3f}%  "
              f"within 1%: {np.mean(np.abs(pds) <= 1):.1%}")
    print(f"verdict {report.verdict} (pass share {report.pass_share:.1%}); reports in {cfg.out}/")


if __name__ == "__main__":
    main()
