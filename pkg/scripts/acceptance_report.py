"""Run the acceptance suite and print only the per-criterion summary.

    python3 scripts/acceptance_report.py

The exit status is pytest's: nonzero while any criterion fails.
"""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider"],
        cwd=ROOT, capture_output=True, text=True, check=False,
    )
    lines = proc.stdout.splitlines()
    start = next((i for i, ln in enumerate(lines) if "acceptance criteria" in ln), None)
    if start is None:
        sys.stdout.write(proc.stdout + proc.stderr)
        return proc.returncode
    for ln in lines[start + 1:]:
        if not ln.startswith("criterion"):
            break
        print(ln)
    return proc.returncode


if __name__ == "__main__":
    sys.exit(main())
