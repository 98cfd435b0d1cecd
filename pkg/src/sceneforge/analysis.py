"""Success-rate aggregation and sim-vs-real consistency statistics.

The core statistic is an ordinary least squares fit of simulated success
rates against real-world success rates over matched (task, setup) pairs.
The primary convention regresses sim on real; the reverse fit is always
reported alongside for transparency. R squared is identical under both
conventions, the slope is not.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import PreconditionError


@dataclass(frozen=True)
class ExperimentRow:
    task: str
    setup: str
    env: str               # "sim" | "real"
    success_rate: float
    trials: int = 0

    def __post_init__(self):
        if self.env not in ("sim", "real"):
            raise PreconditionError(f"env must be sim or real, got {self.env!r}")
        if not 0.0 <= self.success_rate <= 1.0:
            raise PreconditionError(
                f"success_rate {self.success_rate} out of [0, 1] "
                f"({self.task}/{self.setup}/{self.env})"
            )


@dataclass
class ExperimentTable:
    rows: list[ExperimentRow] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            key = (row.task, row.setup, row.env)
            if key in seen:
                raise PreconditionError(f"duplicate table key {key}")
            seen.add(key)

    @property
    def tasks(self) -> list[str]:
        out: list[str] = []
        for row in self.rows:
            if row.task not in out:
                out.append(row.task)
        return out

    @property
    def setups(self) -> list[str]:
        out: list[str] = []
        for row in self.rows:
            if row.setup not in out:
                out.append(row.setup)
        return out

    def rate(self, task: str, setup: str, env: str) -> float | None:
        for row in self.rows:
            if (row.task, row.setup, row.env) == (task, setup, env):
                return row.success_rate
        return None

    def matched_pairs(self) -> list[tuple[str, str, float, float]]:
        """(task, setup, real_rate, sim_rate) for keys present in both envs."""
        pairs = []
        for task in self.tasks:
            for setup in self.setups:
                real = self.rate(task, setup, "real")
                sim = self.rate(task, setup, "sim")
                if real is not None and sim is not None:
                    pairs.append((task, setup, real, sim))
        return pairs


def load_table_csv(path: str | Path) -> ExperimentTable:
    """CSV columns: task,setup,env,success_rate[,trials]; '#' lines ignored."""
    rows = []
    text = Path(path).read_text(encoding="utf-8")
    data_lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(data_lines)))
    for entry in reader:
        rows.append(ExperimentRow(
            task=entry["task"].strip(),
            setup=entry["setup"].strip(),
            env=entry["env"].strip(),
            success_rate=float(entry["success_rate"]),
            trials=int(entry.get("trials") or 0),
        ))
    return ExperimentTable(rows)


def aggregate_success(records, grouping) -> tuple[ExperimentTable, dict]:
    """Success rates per group from episode records.

    ``grouping`` maps record metadata to (task, setup, env); policy_error
    episodes never count as trials and are tallied separately.
    """
    records = list(records)
    if not records:
        raise PreconditionError("no records to aggregate")
    groups: dict[tuple[str, str, str], list] = {}
    errors: dict[tuple[str, str, str], int] = {}
    for record in records:
        key = grouping(record)
        if key is None:
            continue
        if record.status == "policy_error":
            errors[key] = errors.get(key, 0) + 1
            continue
        groups.setdefault(key, []).append(record)
    if not groups and not errors:
        raise PreconditionError("grouping produced no groups")
    rows = []
    for key in sorted(set(groups) | set(errors)):
        episodes = groups.get(key, [])
        trials = len(episodes)
        successes = sum(1 for r in episodes if r.status == "success")
        rows.append(ExperimentRow(
            task=key[0], setup=key[1], env=key[2],
            success_rate=successes / trials if trials else 0.0,
            trials=trials,
        ))
    return ExperimentTable(rows), {" / ".join(k): v for k, v in sorted(errors.items())}


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    convention: str

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "n_points": self.n_points,
                "convention": self.convention}


def _ols(x: np.ndarray, y: np.ndarray, convention: str) -> FitResult:
    design = np.column_stack([x, np.ones_like(x)])
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    slope, intercept = float(coeffs[0]), float(coeffs[1])
    predicted = design @ coeffs
    sse = float(np.sum((y - predicted) ** 2))
    sst = float(np.sum((y - np.mean(y)) ** 2))
    r_squared = 1.0 - sse / sst if sst > 0 else 1.0
    return FitResult(slope=slope, intercept=intercept, r_squared=r_squared,
                     n_points=len(x), convention=convention)


def fit_sim_real(table: ExperimentTable) -> tuple[FitResult, FitResult]:
    """(primary, reverse) OLS fits over matched pairs.

    Primary regresses sim rate on real rate; reverse swaps the axes.
    """
    pairs = table.matched_pairs()
    if len(pairs) < 2:
        raise PreconditionError(
            f"need at least 2 matched (task, setup) pairs, found {len(pairs)}"
        )
    real = np.array([p[2] for p in pairs], dtype=float)
    sim = np.array([p[3] for p in pairs], dtype=float)
    primary = _ols(real, sim, "sim_on_real")
    reverse = _ols(sim, real, "real_on_sim")
    return primary, reverse


def scaling_trend_holds(table: ExperimentTable, best_setup: str) -> bool:
    """Does ``best_setup`` attain the max rate for every task in both envs."""
    for task in table.tasks:
        for env in ("sim", "real"):
            rates = {setup: table.rate(task, setup, env) for setup in table.setups}
            rates = {k: v for k, v in rates.items() if v is not None}
            if not rates or best_setup not in rates:
                return False
            if rates[best_setup] < max(rates.values()):
                return False
    return True


# --- Report export ---------------------------------------------------------------

def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def export_report(table: ExperimentTable, fits: tuple[FitResult, FitResult] | None,
                  out_dir: str | Path) -> dict:
    """Write table/scatter/heatmap CSVs plus a text summary; byte-stable."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    _write_csv(out / "table.csv",
               ["task", "setup", "env", "success_rate", "trials"],
               [[r.task, r.setup, r.env, repr(r.success_rate), r.trials]
                for r in table.rows])

    pairs = table.matched_pairs()
    _write_csv(out / "scatter.csv",
               ["task", "setup", "real", "sim"],
               [[t, s, repr(real), repr(sim)] for t, s, real, sim in pairs])

    tasks, setups = table.tasks, table.setups
    for env in ("sim", "real"):
        rows = []
        for task in tasks:
            rows.append([task] + [
                "" if table.rate(task, setup, env) is None
                else repr(table.rate(task, setup, env))
                for setup in setups
            ])
        _write_csv(out / f"heatmap_{env}.csv", ["task"] + setups, rows)

    lines = [
        f"rows: {len(table.rows)}",
        f"tasks: {', '.join(tasks)}",
        f"setups: {', '.join(setups)}",
        f"matched pairs: {len(pairs)}",
    ]
    summary: dict = {"rows": len(table.rows), "matched_pairs": len(pairs)}
    if fits is not None:
        primary, reverse = fits
        lines += [
            f"fit [{primary.convention}]: slope={primary.slope:.6f} "
            f"intercept={primary.intercept:.6f} r_squared={primary.r_squared:.6f} "
            f"n={primary.n_points}",
            f"fit [{reverse.convention}]: slope={reverse.slope:.6f} "
            f"intercept={reverse.intercept:.6f} r_squared={reverse.r_squared:.6f} "
            f"n={reverse.n_points}",
        ]
        summary["fit"] = primary.to_dict()
        summary["fit_reverse"] = reverse.to_dict()
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
