"""Sim-vs-real consistency statistics on the published benchmark table.

Fits simulated success rates against real-world success rates over the 16
matched (task, setup) pairs, reports both regression conventions, checks the
scaling trend (the 1500-episode synthetic-data setup wins every task in both
environments), and writes the report bundle.
"""

import tempfile
from pathlib import Path

from sceneforge.analysis import (
    export_report,
    fit_sim_real,
    load_table_csv,
    scaling_trend_holds,
)
from sceneforge.cli import fixture_path

table = load_table_csv(fixture_path("table1.csv"))
print(f"{len(table.rows)} rows: {len(table.tasks)} tasks x "
      f"{len(table.setups)} setups x 2 envs")

print("\nsuccess rates (sim / real):")
for task in table.tasks:
    cells = "  ".join(
        f"{table.rate(task, setup, 'sim'):.2f}/{table.rate(task, setup, 'real'):.2f}"
        for setup in table.setups
    )
    print(f"  {task:<18} {cells}")
print(f"  setups: {table.setups}")

primary, reverse = fit_sim_real(table)
print(f"\nprimary fit  ({primary.convention}): slope={primary.slope:.4f} "
      f"intercept={primary.intercept:.4f} R^2={primary.r_squared:.4f} "
      f"n={primary.n_points}")
print(f"reverse fit  ({reverse.convention}): slope={reverse.slope:.4f} "
      f"R^2={reverse.r_squared:.4f}  (R^2 is convention-invariant)")

print(f"\nbest setup everywhere is '1500 eps sim': "
      f"{scaling_trend_holds(table, '1500 eps sim')}")

with tempfile.TemporaryDirectory() as tmp:
    export_report(table, (primary, reverse), tmp)
    files = sorted(p.name for p in Path(tmp).iterdir())
    print(f"\nreport bundle: {files}")
    print((Path(tmp) / "summary.txt").read_text())
