"""Numerical search for valid moment functions.

A moment vector ``m`` over all outcome paths is valid when it is orthogonal to
the probability vector for every value of the fixed effect.  Stacking the
probability vectors of a finite grid of effects gives a matrix whose
nullspace contains every valid moment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import mpmath
import numpy as np
import scipy.linalg

from .model import ModelSpec, Parameters, all_outcomes, probability_table, single_index_path
from .moments_ar1 import triplet_candidates

NULL_RTOL = 1e-9
AMBIGUOUS_GAP = 1e3
DEFAULT_DIGITS = 60


class AmbiguousSpectrumError(RuntimeError):
    """The singular values show no clear gap at the rank cut."""


def default_alpha_grid(T: int, kind: str = "spread") -> np.ndarray:
    """Effect values used to stack probability vectors.

    ``"spread"``: ``2**T + 2`` evenly spaced points on ``[-5, 5]``.
    ``"integer"``: ``1, ..., 2**T`` plus ``-10`` and ``10``.
    """
    if kind == "spread":
        return np.linspace(-5.0, 5.0, 2**T + 2)
    if kind == "integer":
        return np.unique(np.concatenate([np.arange(1, 2**T + 1, dtype=float), [-10.0, 10.0]]))
    raise ValueError(f"unknown grid kind {kind!r}")


def moment_count_formula(p: int, T: int) -> int:
    """Generic number of valid moments per initial condition, ``2**T - (T + 1 - p) 2**p``."""
    return max(2**T - (T + 1 - p) * 2**p, 0)


def _grid(spec: ModelSpec, grid) -> np.ndarray:
    if grid is None:
        grid = default_alpha_grid(spec.T)
    elif isinstance(grid, str):
        grid = default_alpha_grid(spec.T, grid)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("alpha grid must be strictly increasing")
    return grid


def build_probability_matrix(spec: ModelSpec, params: Parameters, y0, x, grid=None, digits: Optional[int] = None):
    """Rows are probability vectors at each effect in ``grid``.

    With ``digits`` the matrix is an ``mpmath`` matrix evaluated at that
    working precision; otherwise a float array.
    """
    params.check(spec)
    grid = _grid(spec, grid)
    x = np.asarray(x, dtype=float).reshape(spec.T, spec.K)
    y0 = np.asarray(y0).reshape(spec.p)
    if digits is None:
        return probability_table(y0, x, params.beta, params.gamma, grid, spec.T)
    with mpmath.workdps(digits):
        ys = all_outcomes(spec.T)
        z = single_index_path(y0.astype(float), ys, x, params.beta, params.gamma)
        zmp = [[mpmath.mpf(float(v)) for v in row] for row in z]
        rows = []
        for a in grid:
            a = mpmath.mpf(float(a))
            row = []
            for y, zy in zip(ys, zmp):
                logp = mpmath.mpf(0)
                for yt, zt in zip(y, zy):
                    # log of 1 / (1 + exp((1 - 2 y_t)(z_t + a)))
                    logp -= mpmath.log1p(mpmath.exp((zt + a) if yt == 0 else -(zt + a)))
                row.append(mpmath.exp(logp))
            rows.append(row)
        return mpmath.matrix(rows)


@dataclass
class NullspaceBasis:
    vectors: np.ndarray  # (dim, 2**T), orthonormal rows
    singular_values: np.ndarray
    tolerance: float
    gap_ratio: float
    ambiguous: bool = False

    @property
    def dimension(self) -> int:
        return self.vectors.shape[0]


def _cut(spectrum: np.ndarray, tol: float, strict: bool):
    n_cols = spectrum.size
    rank = int((spectrum > tol).sum())
    kept = spectrum[rank - 1] if rank > 0 else np.inf
    dropped = spectrum[rank] if rank < n_cols else 0.0
    gap = np.inf if dropped == 0 else kept / dropped
    ambiguous = bool(gap < AMBIGUOUS_GAP)
    if ambiguous and strict:
        raise AmbiguousSpectrumError(f"no clear spectral gap at rank {rank} (ratio {gap:.3g})")
    return rank, float(gap), ambiguous


def nullspace(
    L, rtol: Optional[float] = None, normalize_rows: bool = True, strict: bool = True, digits: int = DEFAULT_DIGITS
) -> NullspaceBasis:
    """SVD nullspace of ``L`` (float array or ``mpmath`` matrix).

    Rows may be rescaled to unit maximum first, which leaves the nullspace
    unchanged.  Singular values below ``rtol`` times the largest count as null;
    the default is ``1e-9`` in double precision and ``10**(-digits/2)`` for an
    ``mpmath`` matrix.  When the smallest kept value is less than
    ``AMBIGUOUS_GAP`` times the largest dropped one the cut is ambiguous and
    ``strict`` raises.
    """
    if isinstance(L, mpmath.matrix):
        return _nullspace_mp(L, rtol, normalize_rows, strict, digits)
    L = np.asarray(L, dtype=float)
    if normalize_rows:
        L = L / np.abs(L).max(axis=1, keepdims=True)
    _, s, vt = np.linalg.svd(L, full_matrices=True)
    spectrum = np.zeros(L.shape[1])
    spectrum[: s.size] = s
    tol = (NULL_RTOL if rtol is None else rtol) * spectrum[0]
    rank, gap, ambiguous = _cut(spectrum, tol, strict)
    return NullspaceBasis(vt[rank:], spectrum, tol, gap, ambiguous)


def _nullspace_mp(L, rtol, normalize_rows, strict, digits):
    with mpmath.workdps(digits):
        rows, cols = L.rows, L.cols
        if normalize_rows:
            L = L.copy()
            for i in range(rows):
                m = max(abs(L[i, j]) for j in range(cols))
                for j in range(cols):
                    L[i, j] /= m
        if rows < cols:
            pad = mpmath.zeros(cols - rows, cols)
            L = mpmath.matrix([[L[i, j] for j in range(cols)] for i in range(rows)]
                              + [[pad[i, j] for j in range(cols)] for i in range(cols - rows)])
        _, s, v = mpmath.svd_r(L, full_matrices=True)
        spectrum = np.array([float(s[i]) for i in range(min(L.rows, cols))] + [0.0] * max(0, cols - L.rows))
        order = np.argsort(-spectrum, kind="stable")
        top = spectrum[order[0]]
        tol = (10.0 ** (-digits / 2) if rtol is None else rtol) * top
        rank, gap, ambiguous = _cut(spectrum[order], tol, strict)
        vt = np.array([[float(v[i, j]) for j in range(cols)] for i in range(cols)])
    return NullspaceBasis(vt[order[rank:]], spectrum[order], tol, gap, ambiguous)


def nullspace_dimension(L, rtol: Optional[float] = None, strict: bool = True, digits: int = DEFAULT_DIGITS) -> int:
    return nullspace(L, rtol=rtol, strict=strict, digits=digits).dimension


def measured_moment_count(p: int, T: int, params: Parameters, y0, x, grid=None, digits: int = DEFAULT_DIGITS, **kw) -> int:
    """Nullspace dimension at ``digits`` working precision."""
    spec = ModelSpec(p, T, params.K)
    L = build_probability_matrix(spec, params, y0, x, grid, digits=digits)
    return nullspace_dimension(L, digits=digits, **kw)


def solve_constrained_moment(L, constraints: Sequence[Tuple[np.ndarray, float]], digits: int = DEFAULT_DIGITS) -> np.ndarray:
    """Solve ``L m = 0`` together with linear side constraints ``c' m = b``.

    The stacked system must be square.  Rows are equilibrated and one step of
    iterative refinement is applied, since unit rows and tiny probability rows
    are mixed.  An ``mpmath`` matrix ``L`` is solved at ``digits`` precision.
    """
    high = isinstance(L, mpmath.matrix)
    with mpmath.workdps(digits if high else mpmath.mp.dps):
        if high:
            Lrows = [[L[i, j] for j in range(L.cols)] for i in range(L.rows)]
        else:
            Lrows = np.atleast_2d(np.asarray(L, dtype=float)).tolist()
        rows = [list(np.asarray(c, dtype=float)) for c, _ in constraints] + Lrows
        rhs = [float(b) for _, b in constraints] + [0.0] * len(Lrows)
        n = len(rows[0])
        if len(rows) != n:
            raise ValueError(f"stacked system is {len(rows)} x {n}, not square")
        conv = mpmath.mpf if high else float
        A = [[conv(v) for v in r] for r in rows]
        scale = [max(abs(v) for v in r) for r in A]
        if any(sc == 0 for sc in scale):
            raise np.linalg.LinAlgError("stacked system has an all-zero row")
        A = [[v / sc for v in r] for r, sc in zip(A, scale)]
        b = [conv(v) / sc for v, sc in zip(rhs, scale)]
        if high:
            Am, bm = mpmath.matrix(A), mpmath.matrix(b)
            try:
                m = mpmath.lu_solve(Am, bm)
            except ZeroDivisionError as exc:
                raise np.linalg.LinAlgError("stacked system is singular") from exc
            m = m + mpmath.lu_solve(Am, bm - Am * m)
            return np.array([float(v) for v in m])
        As, bs = np.array(A), np.array(b)
        lu = scipy.linalg.lu_factor(As)
        piv = np.abs(np.diag(lu[0]))
        if piv.min() < 1e-14 * piv.max():
            raise np.linalg.LinAlgError("stacked system is singular")
        m = scipy.linalg.lu_solve(lu, bs)
        return m + scipy.linalg.lu_solve(lu, bs - As @ m)


def unit(n: int, k: int) -> np.ndarray:
    """Unit vector ``e_k`` (1-based) of length ``n``."""
    v = np.zeros(n)
    v[k - 1] = 1.0
    return v


def system_ar1_t3(variant: str, spec: ModelSpec, params: Parameters, y0, x, alphas=(1.0, 2.0, 3.0, 4.0), digits=DEFAULT_DIGITS):
    """Probability rows and side constraints whose solution is the T=3 moment ``variant``."""
    L = build_probability_matrix(spec, params, y0, x, np.asarray(alphas, dtype=float), digits=digits)
    if variant.upper() == "A":
        cons = [(unit(8, 1), 0.0), (unit(8, 8), 0.0), (unit(8, 2), 0.0), (unit(8, 5), -1.0)]
    else:
        cons = [(unit(8, 1), 0.0), (unit(8, 8), 0.0), (unit(8, 7), 0.0), (unit(8, 4), -1.0)]
    return L, cons


def system_p2_t4_a(spec: ModelSpec, params: Parameters, y0, x, alphas=(1.0, 2.0, 3.0, 4.0, 5.0), digits=DEFAULT_DIGITS):
    """Support pattern of the first second-order four-period moment.

    Unknowns sit at 0010, 0011, 100x (shared), 1010 and 1011; the 01xx paths are
    fixed at -1 and every other path at 0.
    """
    L = build_probability_matrix(spec, params, y0, x, np.asarray(alphas, dtype=float), digits=digits)
    idx = lambda bits: int(bits, 2) + 1  # noqa: E731
    cons = [(unit(16, idx(b)), 0.0) for b in ("0000", "0001", "1100", "1101", "1110", "1111")]
    cons += [(unit(16, idx(b)), -1.0) for b in ("0100", "0101", "0110", "0111")]
    cons += [(unit(16, idx("1000")) - unit(16, idx("1001")), 0.0)]
    return L, cons


@dataclass
class BasisReport:
    dimension_match: bool
    coefficient_uniqueness: bool
    candidate_count: int
    candidate_rank: int
    nullspace_dim: int
    expected: int
    consecutive_rank: int
    details: dict = field(default_factory=dict)


def basis_conjecture_check(T: int, y0, x, params: Parameters, grid=None, seed: int = 0) -> BasisReport:
    """Compare triplet moments ending in period ``T`` with the numerical nullspace."""
    if params.p != 1 or T < 3:
        raise ValueError("basis check is for the first-order model with T >= 3")
    if params.gamma[0] == 0:
        raise ValueError("basis check assumes gamma != 0")
    spec = ModelSpec(1, T, params.K)
    basis = nullspace(build_probability_matrix(spec, params, [y0], x, grid, digits=DEFAULT_DIGITS))
    L = build_probability_matrix(spec, params, [y0], x, grid)
    cands, _ = triplet_candidates(T, y0, x, params, last_only=True)
    full, _ = triplet_candidates(T, y0, x, params, last_only=False)
    consec, _ = triplet_candidates(T, y0, x, params, last_only=False, consecutive=True)
    rank = np.linalg.matrix_rank(cands, tol=1e-9 * np.abs(cands).max())
    rank_full = np.linalg.matrix_rank(full, tol=1e-9 * np.abs(full).max())
    rank_consec = np.linalg.matrix_rank(consec, tol=1e-9 * np.abs(consec).max())
    expected = 2**T - 2 * T
    annihilates = float(np.abs(L @ cands.T).max())
    rng = np.random.default_rng(seed)
    target = rng.standard_normal(basis.dimension) @ basis.vectors
    coef, *_ = np.linalg.lstsq(cands.T, target, rcond=None)
    resid = float(np.abs(cands.T @ coef - target).max())
    unique = bool(rank == cands.shape[0] and resid < 1e-8)
    match = bool(rank == expected == basis.dimension and annihilates < 1e-9)
    return BasisReport(
        match,
        unique,
        cands.shape[0],
        int(rank),
        basis.dimension,
        expected,
        int(rank_consec),
        {"full_family_count": full.shape[0], "full_family_rank": int(rank_full), "max_residual": annihilates,
         "representation_residual": resid},
    )


def discover_special_case(
    spec: ModelSpec, params: Parameters, y0, x, grid=None, strict: bool = True, digits: int = DEFAULT_DIGITS
) -> NullspaceBasis:
    """Nullspace at user-chosen (possibly degenerate) parameter or regressor values."""
    L = build_probability_matrix(spec, params, y0, x, grid, digits=digits)
    return nullspace(L, strict=strict, digits=digits)
