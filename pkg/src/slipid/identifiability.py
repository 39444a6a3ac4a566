"""Numerical identifiability diagnostics for the walker.

Three complementary checks:

* trajectory-level scale invariance, ``(m, k) -> (c m, c k)``;
* finite-difference sensitivity Jacobians of the sampled CoM path in log
  parameter space, and the singular spectrum of those Jacobians;
* a Monte-Carlo ceiling on the R^2 any estimator can reach for ``m`` or ``k``
  when the data only carry ``rho = k / m``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .dataset import SamplingRanges
from .dynamics import GaitParams
from .simulator import (
    DEFAULT_DURATION,
    DEFAULT_INTERNAL_H,
    DEFAULT_OUTPUT_DT,
    GaitFailure,
    InitialConditions,
    simulate,
)

FULL = "mass-stiffness-length"
REDUCED = "ratio-length"
PARAMETERIZATIONS = {FULL: ("log_m", "log_k", "log_l0"), REDUCED: ("log_rho", "log_l0")}
RANK_THRESHOLD = 1e-6


class SensitivityError(RuntimeError):
    pass


def scale_invariance_check(p: GaitParams, ic: InitialConditions, c: float, **sim_kw) -> float:
    """Largest ``|dx|`` or ``|dy|`` between the gait of ``p`` and of ``(c m, c k)``."""
    if not c > 0:
        raise ValueError(f"scale factor must be positive, got {c!r}")
    a = simulate(p, ic, **sim_kw)
    b = simulate(p.scaled(c), ic, **sim_kw)
    return float(max(np.max(np.abs(a.xs - b.xs)), np.max(np.abs(a.ys - b.ys))))


def _perturbed(p: GaitParams, parameterization: str, j: int, factor: float) -> GaitParams:
    if parameterization == FULL:
        field = ("m", "k", "l0")[j]
    elif parameterization == REDUCED:
        # rho moves through k with m held, so only the ratio changes
        field = ("k", "l0")[j]
    else:
        raise ValueError(f"unknown parameterization {parameterization!r}")
    return replace(p, **{field: getattr(p, field) * factor})


def _log_coordinate(p: GaitParams, parameterization: str, j: int) -> float:
    if parameterization == FULL:
        return math.log((p.m, p.k, p.l0)[j])
    return math.log((p.rho, p.l0)[j])


def sensitivity_jacobian(
    p: GaitParams,
    ic: InitialConditions,
    parameterization: str = FULL,
    rel_step: float = 1e-4,
    duration: float = DEFAULT_DURATION,
    output_dt: float = DEFAULT_OUTPUT_DT,
    internal_h: float = DEFAULT_INTERNAL_H,
) -> np.ndarray:
    """Central-difference Jacobian of ``[x..., y...]`` w.r.t. log parameters.

    Column ``j`` divides by the log-difference actually realized between the
    two perturbed parameter sets, not the nominal ``2 * rel_step``.
    """
    names = PARAMETERIZATIONS[parameterization]
    cols = []
    for j, name in enumerate(names):
        ends = []
        for sign in (1.0, -1.0):
            q = _perturbed(p, parameterization, j, math.exp(sign * rel_step))
            try:
                traj = simulate(q, ic, duration, output_dt, internal_h)
            except GaitFailure as exc:
                raise SensitivityError(
                    f"perturbation {'+' if sign > 0 else '-'}{rel_step:g} of {name} fails: {exc}"
                ) from exc
            ends.append((np.concatenate([traj.xs, traj.ys]), _log_coordinate(q, parameterization, j)))
        (f_hi, u_hi), (f_lo, u_lo) = ends
        cols.append((f_hi - f_lo) / (u_hi - u_lo))
    return np.column_stack(cols)


def jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns,
    unsorted.  Sweeps stop once the off-diagonal Frobenius norm falls below
    ``tol`` times the norm of the whole matrix.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0))):
        raise ValueError("jacobi_eigh needs a square symmetric matrix")
    v = np.eye(n)
    scale = math.sqrt(float(np.sum(a * a)))
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum((a - np.diag(np.diag(a))) ** 2)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
                v = v @ rot
    else:
        raise RuntimeError("Jacobi eigensolver did not converge")
    return np.diag(a).copy(), v


@dataclass
class SensitivityReport:
    names: tuple[str, ...]
    jacobian_shape: tuple[int, int]
    singular_values: np.ndarray  # descending
    directions: np.ndarray  # columns: right singular vectors, same order
    rank_ratio: float
    threshold: float = RANK_THRESHOLD

    @property
    def null_direction(self) -> np.ndarray:
        return self.directions[:, -1]

    @property
    def verdicts(self) -> list[tuple[str, str]]:
        """One ``(combination, verdict)`` entry per singular direction."""
        out = []
        top = self.singular_values[0]
        for i, sigma in enumerate(self.singular_values):
            combo = _format_combination(self.names, self.directions[:, i])
            ok = top > 0 and sigma / top >= self.threshold
            out.append((combo, "identifiable" if ok else "unidentifiable combination"))
        return out

    @property
    def identifiable(self) -> bool:
        return self.rank_ratio >= self.threshold


def _format_combination(names, vec) -> str:
    terms = [f"{c:+.4f}*{n}" for c, n in zip(vec, names) if abs(c) >= 5e-5]
    return " ".join(terms) if terms else "0"


def _orient(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))
    return vec if vec[i] >= 0 else -vec


def singular_spectrum(j: np.ndarray, names=None, threshold: float = RANK_THRESHOLD) -> SensitivityReport:
    """Singular values of ``J`` from the Jacobi eigensolve of ``J^T J``."""
    j = np.asarray(j, dtype=float)
    if not np.all(np.isfinite(j)):
        raise ValueError("Jacobian contains non-finite entries")
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(j.shape[1]))
    evals, evecs = jacobi_eigh(j.T @ j)
    order = np.argsort(evals)[::-1]
    sigma = np.sqrt(np.maximum(evals[order], 0.0))
    dirs = np.column_stack([_orient(evecs[:, i] / np.linalg.norm(evecs[:, i])) for i in order])
    ratio = float(sigma[-1] / sigma[0]) if sigma[0] > 0 else 0.0
    return SensitivityReport(names, j.shape, sigma, dirs, ratio, threshold)


def angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Angle between the lines spanned by ``a`` and ``b`` (sign ignored)."""
    a = np.asarray(a, dtype=float) / np.linalg.norm(a)
    b = np.asarray(b, dtype=float) / np.linalg.norm(b)
    along = abs(float(np.dot(a, b)))
    # atan2 keeps resolution for nearly parallel lines, where acos does not
    across = float(np.linalg.norm(b - np.dot(a, b) * a))
    return math.degrees(math.atan2(across, along))


@dataclass
class R2Bound:
    bound: float | None
    stderr: float | None
    degenerate: bool = False


def conditional_r2(rho: np.ndarray, target: np.ndarray, n_bins: int | None = None) -> float | None:
    """``1 - E[Var(target | rho)] / Var(target)`` with quantile bins of ``rho``.

    Within-bin variances use ``ddof=1``.  Returns None when either variable
    is constant.
    """
    rho = np.asarray(rho, dtype=float)
    target = np.asarray(target, dtype=float)
    n = len(rho)
    total = target.var(ddof=1)
    if n < 4 or total <= 0 or rho.std() <= 1e-12 * abs(rho.mean()):
        return None
    n_bins = n_bins or int(math.isqrt(n))
    order = np.argsort(rho, kind="stable")
    t = target[order]
    edges = np.linspace(0, n, n_bins + 1).astype(int)
    within = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a >= 2:
            within += t[a:b].var(ddof=1) * (b - a)
    return 1.0 - (within / n) / total


def conditional_r2_bound(
    ranges: SamplingRanges,
    target: str,
    n_mc: int = 200_000,
    seed: int = 0,
    n_batches: int = 10,
) -> R2Bound:
    """Best R^2 for ``target`` in ``{"m", "k"}`` from an oracle that knows ``rho`` exactly.

    The standard error comes from ``n_batches`` independent sub-samples.
    """
    if n_mc < 100_000:
        raise ValueError(f"n_mc must be at least 1e5, got {n_mc}")
    if target not in ("m", "k"):
        raise ValueError(f"target must be 'm' or 'k', got {target!r}")
    rng = np.random.default_rng(seed)
    m = rng.uniform(*ranges.m_range, n_mc)
    k = rng.uniform(*ranges.k_range, n_mc)
    return r2_bound_from_samples(k / m, m if target == "m" else k, n_batches)


def r2_bound_from_samples(rho: np.ndarray, target: np.ndarray, n_batches: int = 10) -> R2Bound:
    bound = conditional_r2(rho, target)
    if bound is None:
        return R2Bound(None, None, degenerate=True)
    parts = [conditional_r2(r, t) for r, t in zip(np.array_split(rho, n_batches), np.array_split(target, n_batches))]
    parts = [b for b in parts if b is not None]
    stderr = float(np.std(parts, ddof=1) / math.sqrt(len(parts))) if len(parts) > 1 else None
    return R2Bound(float(bound), stderr)


def analyze(p: GaitParams, ic: InitialConditions, rel_step: float = 1e-4, **sim_kw) -> dict[str, SensitivityReport]:
    """Spectra for both parameterizations at one parameter point."""
    return {
        name: singular_spectrum(sensitivity_jacobian(p, ic, name, rel_step, **sim_kw), PARAMETERIZATIONS[name])
        for name in (FULL, REDUCED)
    }


def write_report_csv(reports: dict[str, SensitivityReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameterization", "quantity", "label", "value"])
        for pname, rep in reports.items():
            for i, s in enumerate(rep.singular_values):
                w.writerow([pname, "singular_value", i + 1, repr(float(s))])
            for name, c in zip(rep.names, rep.null_direction):
                w.writerow([pname, "null_direction", name, repr(float(c))])
            w.writerow([pname, "rank_ratio", "", repr(rep.rank_ratio)])
            for combo, verdict in rep.verdicts:
                w.writerow([pname, "verdict", combo, verdict])


def format_summary(reports: dict[str, SensitivityReport], bounds: dict[str, R2Bound] | None = None) -> str:
    lines = []
    for pname, rep in reports.items():
        lines.append(f"[{pname}] Jacobian {rep.jacobian_shape[0]}x{rep.jacobian_shape[1]}")
        lines.append("  singular values: " + ", ".join(f"{s:.6g}" for s in rep.singular_values))
        lines.append(f"  sigma_min/sigma_max = {rep.rank_ratio:.3e} (threshold {rep.threshold:g})")
        lines.append("  weakest direction: " + _format_combination(rep.names, rep.null_direction))
        for combo, verdict in rep.verdicts:
            lines.append(f"    {verdict:<28s} {combo}")
    for target, b in (bounds or {}).items():
        if b.degenerate:
            lines.append(f"R^2 ceiling for {target} given rho: degenerate")
        else:
            lines.append(f"R^2 ceiling for {target} given rho: {b.bound:.4f} +/- {b.stderr:.4f}")
    return "\n".join(lines)
