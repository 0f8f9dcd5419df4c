"""Free-format MPS export and plain-text solution import.

Solution files hold one ``column_name value`` pair per line.  Lines starting
with ``#`` are comments, except that ``# status <word>`` and ``# bound <x>``
are read as metadata from the solver that produced the file::

    # status optimal
    # bound 2757.06
    QBAR_I1_T00 1523
    U_J1_S1_T00 1

Columns that are not listed are taken as zero.
"""

from __future__ import annotations

import time
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .bnb import MilpSolution, relative_gap

_SENSE_CODE = {"<": "L", ">": "G", "=": "E"}


class SolutionImportError(ValueError):
    """A solution file that cannot be bound to the model."""


def _fmt(v: float) -> str:
    return repr(float(v))


def export_mps(model, destination: str | Path | IO[str], name: str = "LINKWAVE") -> None:
    """Write ``model`` as free-format MPS (maximization, binaries in INTORG markers)."""
    if hasattr(destination, "write"):
        _write_mps(model, destination, name)
        return
    with open(destination, "w", encoding="ascii") as fh:
        _write_mps(model, fh, name)


def _write_mps(model, fh: IO[str], name: str) -> None:
    cols = model.column_names()
    rows = model.row_names
    A = model.A.tocsc()
    w = fh.write
    w(f"NAME {name}\n")
    w("OBJSENSE\n    MAX\n")
    w("ROWS\n N  OBJ\n")
    for r, s in zip(rows, model.sense):
        w(f" {_SENSE_CODE[s]}  {r}\n")
    w("COLUMNS\n")
    in_int = False
    marker = 0
    for j, cname in enumerate(cols):
        if bool(model.binary[j]) != in_int:
            tag = "INTORG" if not in_int else "INTEND"
            w(f"    MARKER{marker:04d} 'MARKER' '{tag}'\n")
            marker += 1
            in_int = not in_int
        entries = []
        if model.c[j] != 0.0:
            entries.append(("OBJ", model.c[j]))
        lo, hi = A.indptr[j], A.indptr[j + 1]
        entries.extend((rows[i], v) for i, v in zip(A.indices[lo:hi], A.data[lo:hi]))
        if not entries:
            # keep every column visible to readers that infer columns from this section
            entries.append(("OBJ", 0.0))
        for rname, v in entries:
            w(f"    {cname} {rname} {_fmt(v)}\n")
    if in_int:
        w(f"    MARKER{marker:04d} 'MARKER' 'INTEND'\n")
    w("RHS\n")
    for r, v in zip(rows, model.rhs):
        if v != 0.0:
            w(f"    RHS {r} {_fmt(v)}\n")
    w("RANGES\n")
    w("BOUNDS\n")
    for j, cname in enumerate(cols):
        lo, hi = float(model.lo[j]), float(model.hi[j])
        if model.binary[j] and lo == 0.0 and hi == 1.0:
            w(f" BV BND {cname}\n")
        elif lo == hi:
            w(f" FX BND {cname} {_fmt(lo)}\n")
        elif lo == -np.inf and hi == np.inf:
            w(f" FR BND {cname}\n")
        else:
            if lo == -np.inf:
                w(f" MI BND {cname}\n")
            elif lo != 0.0 or model.binary[j]:
                w(f" LO BND {cname} {_fmt(lo)}\n")
            if hi != np.inf:
                w(f" UP BND {cname} {_fmt(hi)}\n")
            elif model.binary[j]:
                w(f" PL BND {cname}\n")
    w("ENDATA\n")


def read_solution_file(source: str | Path | Iterable[str]) -> tuple[dict[str, float], dict[str, str]]:
    """Parse ``name value`` lines; returns the values and ``# key value`` metadata."""
    lines = Path(source).read_text().splitlines() if isinstance(source, (str, Path)) else list(source)
    values: dict[str, float] = {}
    meta: dict[str, str] = {}
    for num, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] in ("status", "bound"):
                meta[parts[0]] = parts[1]
            continue
        parts = line.replace("=", " ").split()
        if len(parts) != 2:
            raise SolutionImportError(f"line {num}: expected 'column_name value', got {raw!r}")
        try:
            values[parts[0]] = float(parts[1])
        except ValueError as exc:
            raise SolutionImportError(f"line {num}: bad value {parts[1]!r}") from exc
    return values, meta


def write_solution_file(path: str | Path, names: list[str], x: np.ndarray, status: str | None = None,
                        bound: float | None = None) -> None:
    with open(path, "w") as fh:
        fh.write("# linkwave-solution v1\n")
        if status:
            fh.write(f"# status {status}\n")
        if bound is not None and np.isfinite(bound):
            fh.write(f"# bound {bound:.17g}\n")
        for n, v in zip(names, x):
            if v != 0.0:
                fh.write(f"{n} {float(v):.17g}\n")


def import_solution(model, source, feas_tol: float = 1e-7, int_tol: float = 1e-6) -> MilpSolution:
    """Bind an external solution to ``model`` after re-checking every row.

    Row violations are measured relative to the largest term in the row, the
    same yardstick the embedded solver uses for its incumbents.
    """
    t0 = time.perf_counter()
    values, meta = read_solution_file(source)
    names = model.column_names()
    index = {n: i for i, n in enumerate(names)}
    unknown = sorted(set(values) - set(index))
    if unknown:
        more = f" (and {len(unknown) - 5} more)" if len(unknown) > 5 else ""
        raise SolutionImportError(f"unknown column names: {', '.join(unknown[:5])}{more}")
    x = np.zeros(model.n_cols)
    for n, v in values.items():
        x[index[n]] = v

    bviol = model.bound_violations(x)
    if bviol.max(initial=0.0) > feas_tol:
        j = int(np.argmax(bviol))
        raise SolutionImportError(f"column {names[j]} = {x[j]:g} violates its bounds by {bviol[j]:.3g}")
    bins = np.flatnonzero(model.binary)
    frac = np.abs(x[bins] - np.round(x[bins]))
    if frac.max(initial=0.0) > int_tol:
        j = int(bins[np.argmax(frac)])
        raise SolutionImportError(f"binary column {names[j]} = {x[j]:g} is not integral")
    rel = model.row_violations(x) / model.row_scale(x)
    if rel.max(initial=0.0) > feas_tol:
        r = int(np.argmax(rel))
        raise SolutionImportError(
            f"row {model.row_names[r]} violated by {model.row_violations(x)[r]:.6g} (relative {rel[r]:.3g})"
        )
    obj = model.objective(x)
    bound = float(meta["bound"]) if "bound" in meta else np.nan
    gap = relative_gap(obj, bound) if np.isfinite(bound) else np.nan
    status = meta.get("status", "feasible")
    if status not in ("optimal", "feasible", "time_limit"):
        status = "feasible"
    return MilpSolution(status, x, obj, bound, gap, 0, time.perf_counter() - t0, source="imported")
