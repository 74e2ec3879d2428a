"""Vectorised adaptive Gauss-Legendre panel quadrature."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class QuadResult:
    value: float
    err: float
    converged: bool
    n_panels: int
    panel_values: tuple = ()


def _apply(f, a, b, n):
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(nodes.ravel()), dtype=float).reshape(nodes.shape)
    return half * (vals @ w), half * (np.abs(vals) @ w)


def integrate_panels(f, edges, rtol: float = 1e-11, atol: float = 1e-15, n: int = 20,
                     max_rounds: int = 50, per_panel: bool = False,
                     max_active: int = 200_000) -> QuadResult:
    """Integrate ``f`` over the union of panels given by sorted ``edges``.

    Each panel is compared against the sum over its two halves; panels
    whose discrepancy exceeds their share of the tolerance are bisected.
    The tolerance is relative to the integral of |f| estimated on the way,
    so oscillating integrands with heavy cancellation are not over-refined.
    With ``per_panel`` the integral over each input panel is also returned.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2:
        return QuadResult(0.0, 0.0, True, 0)
    a = edges[:-1].copy()
    b = edges[1:].copy()
    keep = b > a
    a, b = a[keep], b[keep]
    owner = np.nonzero(keep)[0]
    n_in = edges.size - 1
    span = float(np.sum(b - a)) or 1.0

    whole, _ = _apply(f, a, b, n)
    done_pos, done_val, done_err, done_own = [], [], [], []
    abs_scale = 0.0
    done_mass = 0.0
    converged = True
    for rnd in range(max_rounds):
        m = 0.5 * (a + b)
        left, left_abs = _apply(f, a, m, n)
        right, right_abs = _apply(f, m, b, n)
        halves = left + right
        mass = left_abs + right_abs
        err = np.abs(halves - whole)
        abs_scale = max(abs_scale, float(np.sum(mass)) + done_mass)
        tol = max(atol, rtol * abs_scale) * (b - a) / span
        # discrepancies at the rounding level of the panel cannot be refined away
        tol = np.maximum(tol, 64 * np.finfo(float).eps * mass)
        ok = (err <= tol) | ((b - a) <= 1e-13 * np.maximum(1.0, np.abs(a)))
        if rnd == max_rounds - 1 or np.count_nonzero(~ok) > max_active:
            if not np.all(ok):
                converged = False
            ok[:] = True
        done_pos.extend(a[ok].tolist())
        done_val.extend(halves[ok].tolist())
        done_err.extend(err[ok].tolist())
        done_mass += float(np.sum(mass[ok]))
        done_own.extend(owner[ok].tolist())
        if np.all(ok):
            break
        bad = ~ok
        a_bad, m_bad, b_bad = a[bad], m[bad], b[bad]
        a = np.concatenate([a_bad, m_bad])
        b = np.concatenate([m_bad, b_bad])
        owner = np.concatenate([owner[bad], owner[bad]])
        whole = np.concatenate([left[bad], right[bad]])
    order = np.argsort(done_pos, kind="stable")
    vals = [done_val[i] for i in order]
    errs = [done_err[i] for i in order]
    panels = ()
    if per_panel:
        buckets = [[] for _ in range(n_in)]
        for i in order:
            buckets[done_own[i]].append(done_val[i])
        panels = tuple(math.fsum(v) for v in buckets)
    return QuadResult(math.fsum(vals), math.fsum(errs), converged, len(vals), panels)
