"""
Working from a problem file
===========================

The command-line tool reads a YAML description: how many indices, which
cost block houses each index, and which linear block constrains them. This
script writes one such file, then drives the same commands a shell user
would run.
"""

import tempfile
from pathlib import Path

from consopt.cli import main

PROBLEM = """\
# two quadratics whose sum is boxed into [0, 0.5]
n: 3
cr:
  - kind: quadratic
    indices: [0]
    params: {q: 2.0, lin: -4.0}
  - kind: quadratic
    indices: [1]
    params: {q: 2.0, lin: 2.0}
  - kind: box
    indices: [2]
    params: {lo: 0.0, hi: 0.5}
li:
  - kind: general
    inputs: [0, 1]
    outputs: [2]
    matrix: [[1.0, 1.0]]
"""

work = Path(tempfile.mkdtemp())
path = work / "budget.yaml"
path.write_text(PROBLEM)

# %%
print("$ consopt validate budget.yaml")
main(["validate", str(path)])

print("\n$ consopt derive budget.yaml")
main(["derive", str(path)])

# %%
# Solve asynchronously and keep a per-tick trace for plotting elsewhere.
print("\n$ consopt solve budget.yaml --mode async --p 0.5 --seed 1 --trace trace.csv --out sol.yaml")
rc = main(["solve", str(path), "--mode", "async", "--p", "0.5", "--seed", "1",
           "--trace", str(work / "trace.csv"), "--out", str(work / "sol.yaml")])
print(f"exit code {rc}")
print((work / "sol.yaml").read_text())
rows = (work / "trace.csv").read_text().splitlines()
print(f"trace: {len(rows) - 1} rows, header {rows[0]!r}")

# %%
# Check the saved state on its own, then compare with the brute-force grid.
print("\n$ consopt verify budget.yaml --state sol.yaml")
main(["verify", str(path), "--state", str(work / "sol.yaml")])
print("\n$ consopt compare budget.yaml")
main(["compare", str(path)])
