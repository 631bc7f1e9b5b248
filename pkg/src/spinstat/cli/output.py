"""Result tables, run summaries and flat-text matrix files."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from ..quasilocal import Lattice, Region
from ..states import DensityState

COLUMNS = ("index", "experiment", "identity", "case", "value", "reference", "residual", "tolerance", "passed")


def fmt(x) -> str:
    """Deterministic text for a cell: 17 significant digits for floats."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


@dataclass
class Row:
    identity: str
    case: str
    value: float | None = None
    reference: float | None = None
    residual: float | None = None
    tolerance: float | None = None
    passed: bool | None = None  # None marks a reported-only row


class ResultTable:
    def __init__(self, experiment: str):
        self.experiment = experiment
        self.rows: list[Row] = []

    def add(self, identity: str, case: str, **kw) -> Row:
        row = Row(identity, case, **kw)
        self.rows.append(row)
        return row

    def check(self, identity: str, case: str, residual: float, tolerance: float, **kw) -> Row:
        """Row asserting ``residual <= tolerance``."""
        ok = bool(residual <= tolerance)
        return self.add(identity, case, residual=residual, tolerance=tolerance, passed=ok, **kw)

    def bound(self, identity: str, case: str, value: float, bound: float, **kw) -> Row:
        """Row asserting ``value <= bound``; the residual is the excess over the bound."""
        excess = max(0.0, value - bound)
        return self.add(
            identity, case, value=value, reference=bound, residual=excess,
            tolerance=1e-12 * abs(bound), passed=bool(excess <= 1e-12 * abs(bound)), **kw
        )

    def report(self, identity: str, case: str, **kw) -> Row:
        return self.add(identity, case, passed=None, **kw)

    @property
    def passed(self) -> int:
        return sum(1 for r in self.rows if r.passed is True)

    @property
    def failed(self) -> int:
        return sum(1 for r in self.rows if r.passed is False)

    @property
    def max_residual(self) -> float:
        values = [r.residual for r in self.rows if r.residual is not None and r.passed is not None]
        return float(max(values)) if values else 0.0

    def failures(self) -> list[Row]:
        return [r for r in self.rows if r.passed is False]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for k, r in enumerate(self.rows):
            passed = "n/a" if r.passed is None else fmt(r.passed)
            w.writerow(
                [k, self.experiment, r.identity, r.case]
                + [fmt(v) for v in (r.value, r.reference, r.residual, r.tolerance)]
                + [passed]
            )
        return buf.getvalue()

    def summary(self, elapsed: float) -> dict:
        return {
            "experiment": self.experiment,
            "pass_count": self.passed,
            "fail_count": self.failed,
            "max_residual": self.max_residual,
            "elapsed_seconds": elapsed,
        }

    def write(self, out_dir: str, elapsed: float) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "results.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(self.summary(elapsed), fh, indent=2)
            fh.write("\n")


# flat matrix files: a header line "matrix <rows> <cols>" followed by one line
# per row holding interleaved real and imaginary parts


def dumps_matrix(m) -> str:
    m = np.asarray(m, dtype=complex)
    lines = [f"matrix {m.shape[0]} {m.shape[1]}"]
    for row in m:
        lines.append(" ".join(f"{fmt(z.real)} {fmt(z.imag)}" for z in row))
    return "\n".join(lines) + "\n"


def loads_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty matrix file")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "matrix":
        raise ValueError("matrix files start with 'matrix <rows> <cols>'")
    n, m = int(head[1]), int(head[2])
    body = lines[1:]
    if len(body) != n:
        raise ValueError(f"expected {n} rows, found {len(body)}")
    out = np.zeros((n, m), dtype=complex)
    for i, ln in enumerate(body):
        vals = [float(v) for v in ln.split()]
        if len(vals) != 2 * m:
            raise ValueError(f"row {i} has {len(vals)} numbers, expected {2 * m}")
        out[i] = np.array(vals[0::2]) + 1j * np.array(vals[1::2])
    return out


def dumps_state(state: DensityState) -> str:
    sites = " ".join(str(s) for s in state.region)
    dims = " ".join(str(d) for d in state.lattice.dims(state.region))
    return f"# sites {sites}\n# dims {dims}\n" + dumps_matrix(state.matrix)


def loads_state(text: str, lattice: Lattice | None = None) -> DensityState:
    sites = dims = None
    for ln in text.splitlines():
        if ln.startswith("# sites"):
            sites = [int(s) for s in ln.split()[2:]]
        elif ln.startswith("# dims"):
            dims = [int(d) for d in ln.split()[2:]]
    if sites is None or dims is None:
        raise ValueError("state files need '# sites' and '# dims' header lines")
    if lattice is None:
        lattice = Lattice(tuple(sites), tuple(dims))
    return DensityState(lattice, Region(sites), loads_matrix(text))


def dump_matrix(path: str, m) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_matrix(m))


def load_matrix(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return loads_matrix(fh.read())


def dump_state(path: str, state: DensityState) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_state(state))


def load_state(path: str, lattice: Lattice | None = None) -> DensityState:
    with open(path, encoding="utf-8") as fh:
        return loads_state(fh.read(), lattice)
