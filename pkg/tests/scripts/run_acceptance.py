#!/usr/bin/env python3
"""
Acceptance run over every registered scenario.

Usage: python tests/scripts/run_acceptance.py [NAME ...]

Full-resolution LPs go through HiGHS; set STEFAN_LAB_SOLVER=pdhg to run
them on the first-order backend instead.
"""

import os
import sys
import time
from pathlib import Path

# Add src to path
sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "src"))

from stefan_lab.core.primal_dual import SolverOptions
from stefan_lab.core.scenarios import SCENARIOS, ScenarioConfig, run_scenario


def run_one(name, cfg):
    """Run one scenario and print its criteria."""
    print(f"🧪 Running {name}: {SCENARIOS[name].description}")
    report = run_scenario(name, cfg)
    for criterion in report.criteria:
        if criterion.informational:
            mark = "ℹ️ "
        else:
            mark = "✅" if criterion.passed else "❌"
        proxy = " (proxy)" if criterion.proxy else ""
        print(f"   {mark} {criterion.name}{proxy}: measured {criterion.measured}, expected {criterion.expected}")
    status = "✅ passed" if report.passed else "❌ failed"
    print(f"{status} in {report.elapsed:.1f}s\n")
    return report.passed


def main():
    """Run the selected scenarios and return the process exit code."""
    names = sys.argv[1:] or sorted(SCENARIOS)

    print("🔬 Running scenario acceptance")
    print("=" * 50)

    start = time.time()
    failures = []
    try:
        for name in names:
            if name not in SCENARIOS:
                print(f"❌ Unknown scenario: {name}")
                return 1
            solver = SolverOptions(backend=os.environ.get("STEFAN_LAB_SOLVER", "highs"))
            cfg = ScenarioConfig(threads=4, quiet=True, solver=solver)
            if not run_one(name, cfg):
                failures.append(name)
    except Exception as e:
        print(f"❌ Acceptance run crashed: {str(e)}")
        import traceback
        traceback.print_exc()
        return 1

    print("=" * 50)
    if failures:
        print(f"❌ {len(failures)} scenario(s) failed: {', '.join(failures)}")
        return 1
    print(f"🎉 All {len(names)} scenarios passed in {time.time() - start:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
