"""Reading and writing panels as long-format CSV.

One row per (individual, period) with columns ``id, t, y, x1, ..., xK``.  An
empty field marks the cell as missing.  Periods are integers and may have
gaps; the dataset grid runs from the smallest to the largest period seen.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .model import ModelSpec, PanelDataset

log = logging.getLogger(__name__)


class PanelFormatError(ValueError):
    """The CSV does not follow the panel layout."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass
class PanelRead:
    dataset: PanelDataset
    skipped: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_panel_csv(dataset: PanelDataset, target) -> int:
    """Write observed cells only to a path or text stream; returns the number of data rows."""
    if hasattr(target, "write"):
        return _write_rows(dataset, target)
    with open(target, "w", newline="", encoding="utf-8") as fh:
        return _write_rows(dataset, fh)


def _write_rows(dataset: PanelDataset, fh) -> int:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["id", "t", "y"] + [f"x{k}" for k in range(1, dataset.spec.K + 1)])
    rows = 0
    for i, ident in enumerate(dataset.ids):
        for j, period in enumerate(dataset.periods):
            if dataset.observed[i, j]:
                writer.writerow([ident, int(period), int(dataset.outcomes[i, j])] + [_fmt(v) for v in dataset.regressors[i, j]])
                rows += 1
    return rows


def _header(names: List[str]) -> int:
    names = [n.strip() for n in names]
    if names[:3] != ["id", "t", "y"]:
        raise PanelFormatError("header must start with id,t,y", 1)
    xs = names[3:]
    expected = [f"x{k}" for k in range(1, len(xs) + 1)]
    if xs != expected:
        raise PanelFormatError(f"regressor columns must be {','.join(expected) or 'x1..xK'} in order, got {','.join(xs)}", 1)
    return len(xs)


def _int(text: str, what: str, line: int) -> int:
    if not re.fullmatch(r"[+-]?\d+", text):
        raise PanelFormatError(f"{what} must be an integer, got {text!r}", line)
    return int(text)


def read_panel_csv(path, p: int) -> PanelRead:
    """Parse a panel CSV for a model with ``p`` lags.

    Individuals with fewer than ``p + 1`` complete cells cannot enter any
    moment and are skipped with a warning.
    """
    cells: Dict[str, Dict[int, Tuple[int, np.ndarray, bool]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            K = _header(next(reader))
        except StopIteration:
            raise PanelFormatError("file is empty", 1) from None
        for row in reader:
            line = reader.line_num
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != K + 3:
                raise PanelFormatError(f"expected {K + 3} fields, got {len(row)}", line)
            row = [f.strip() for f in row]
            ident = row[0]
            if not ident:
                raise PanelFormatError("empty id", line)
            t = _int(row[1], "t", line)
            complete = all(row[2:])
            y = 0
            if row[2]:
                if row[2] not in ("0", "1"):
                    raise PanelFormatError(f"y must be 0 or 1, got {row[2]!r}", line)
                y = int(row[2])
            x = np.zeros(K)
            for k, text in enumerate(row[3:]):
                if text:
                    try:
                        x[k] = float(text)
                    except ValueError:
                        raise PanelFormatError(f"x{k + 1} is not a number: {text!r}", line) from None
                    if not math.isfinite(x[k]):
                        raise PanelFormatError(f"x{k + 1} is not finite", line)
            person = cells.setdefault(ident, {})
            if t in person:
                raise PanelFormatError(f"duplicate period {t} for id {ident!r}", line)
            person[t] = (y, x, complete)
    if not cells:
        raise PanelFormatError("no data rows")

    warnings, skipped, keep = [], [], []
    for ident, person in cells.items():
        if sum(c[2] for c in person.values()) < p + 1:
            skipped.append(ident)
            msg = f"individual {ident!r} has fewer than {p + 1} complete periods and is skipped"
            warnings.append(msg)
            log.warning(msg)
        else:
            keep.append(ident)
    if not keep:
        raise PanelFormatError(f"no individual has at least {p + 1} complete periods")

    lo = min(min(cells[i]) for i in keep)
    hi = max(max(cells[i]) for i in keep)
    periods = np.arange(lo, hi + 1)
    if periods.size < p + 1:
        raise PanelFormatError(f"need at least {p + 1} periods for a model with {p} lags")
    n, T_obs = len(keep), periods.size
    outcomes = np.zeros((n, T_obs), dtype=np.int8)
    regressors = np.zeros((n, T_obs, K))
    observed = np.zeros((n, T_obs), dtype=bool)
    for i, ident in enumerate(keep):
        for t, (y, x, complete) in cells[ident].items():
            if complete:
                outcomes[i, t - lo] = y
                regressors[i, t - lo] = x
                observed[i, t - lo] = True
    spec = ModelSpec(p, T_obs - p, K)
    data = PanelDataset(outcomes, regressors, observed, spec, ids=keep, periods=periods)
    return PanelRead(data, skipped, warnings)
