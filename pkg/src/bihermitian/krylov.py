"""Preconditioned Krylov solvers with per-iteration logs.

Both solvers record ``(iter, relres, ritz_min)``: for CG the smallest
eigenvalue of the Lanczos matrix, for GCROT(m,k) the smallest modulus among
the harmonic Ritz values of the recycled subspace.  A small ``ritz_min`` together with
a stalled residual flags a near-kernel.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    def __init__(self, msg, stats=None):
        super().__init__(msg)
        self.stats = stats or {}


@dataclass
class SolverConfig:
    rel_tol: float = 1e-10
    max_iter: int = 5000
    preconditioner: str = "diagonal"  # or "none"
    log_path: str | None = None
    restart: int = 40  # inner steps per GCROT cycle

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.preconditioner not in ("diagonal", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class SolveStats:
    method: str = ""
    iterations: int = 0
    rel_residual: float = np.inf
    ritz_min: float = np.nan
    ritz_max: float = np.nan
    history: list = field(default_factory=list)

    def to_dict(self):
        return {
            "method": self.method,
            "iterations": self.iterations,
            "rel_residual": float(self.rel_residual),
            "ritz_min": float(self.ritz_min),
            "ritz_max": float(self.ritz_max),
        }


class _Log:
    def __init__(self, path):
        self.fh = open(path, "w", newline="") if path else None
        self.writer = csv.writer(self.fh) if self.fh else None
        if self.writer:
            self.writer.writerow(["iter", "relres", "ritz_min"])

    def row(self, it, rel, ritz):
        if self.writer:
            self.writer.writerow([it, f"{rel:.6e}", f"{ritz:.6e}"])

    def close(self):
        if self.fh:
            self.fh.close()


def _finish(stats, cfg, what):
    if not stats.rel_residual <= cfg.rel_tol * 10:
        raise SolverError(
            f"{what} did not reach rel_tol {cfg.rel_tol:.1e}: residual {stats.rel_residual:.3e} "
            f"after {stats.iterations} iterations, smallest Ritz value {stats.ritz_min:.3e}",
            stats.to_dict(),
        )


# ---------------------------------------------------------------- CG


def lanczos_ritz(alphas, betas):
    """Extreme eigenvalues of the Lanczos matrix built from CG coefficients."""
    a = np.asarray(alphas)
    b = np.asarray(betas)
    diag = 1.0 / a
    diag[1:] += b[:-1] / a[:-1]
    if len(a) == 1:
        return float(diag[0]), float(diag[0])
    off = np.sqrt(np.maximum(b[:-1], 0)) / a[:-1]
    ev = scipy.linalg.eigvalsh_tridiagonal(diag, off)
    return float(ev[0]), float(ev[-1])


def cg(apply, b, diag, cfg: SolverConfig, ritz_every=50):
    """Preconditioned CG for a Hermitian positive (semi-)definite operator."""
    stats = SolveStats(method="cg")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        stats.rel_residual = 0.0
        return np.zeros_like(b), stats
    Minv = 1.0 / diag if cfg.preconditioner == "diagonal" else np.ones(b.shape)
    x = np.zeros_like(b)
    r = b.copy()
    z = Minv * r
    p = z.copy()
    rz = np.vdot(r, z).real
    alphas, betas = [], []
    log = _Log(cfg.log_path)
    it = 0
    try:
        for it in range(1, cfg.max_iter + 1):
            Kp = apply(p)
            a = rz / np.vdot(p, Kp).real
            x += a * p
            r -= a * Kp
            rel = np.linalg.norm(r) / bnorm
            z = Minv * r
            rz_new = np.vdot(r, z).real
            beta = rz_new / rz
            alphas.append(a)
            betas.append(beta)
            rz = rz_new
            p = z + beta * p
            ritz = np.nan
            if log.writer is not None or it % ritz_every == 0 or rel <= cfg.rel_tol:
                ritz = lanczos_ritz(alphas, betas)[0]
            stats.history.append((it, rel, ritz))
            log.row(it, rel, ritz)
            if rel <= cfg.rel_tol:
                break
    finally:
        log.close()
    stats.iterations = it
    stats.rel_residual = float(np.linalg.norm(b - apply(x)) / bnorm)
    stats.ritz_min, stats.ritz_max = lanczos_ritz(alphas, betas)
    _finish(stats, cfg, "CG")
    return x, stats


# ---------------------------------------------------------------- GCROT(m,k)


def harmonic_ritz(CU):
    """Harmonic Ritz values from a recycled pair set ``C = A U`` (orthonormal C): ``1 / eig(C^H U)``."""
    pairs = [(c, u) for c, u in CU if c is not None]
    if not pairs:
        return np.array([np.nan])
    C = np.stack([c for c, _ in pairs], axis=1)
    U = np.stack([u for _, u in pairs], axis=1)
    mu = np.linalg.eigvals(C.conj().T @ U)
    mu = mu[np.abs(mu) > 0]
    return 1.0 / mu if mu.size else np.array([np.nan])


def gcrot(apply, b, diag, cfg: SolverConfig, k=20):
    """GCROT(m,k) (scipy) with diagonal preconditioning, for non-Hermitian operators.

    One log row per outer cycle of ``m = cfg.restart`` inner steps; ``iterations``
    counts outer cycles and ``max_iter`` bounds the total inner steps.
    """
    stats = SolveStats(method="gcrotmk")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        stats.rel_residual = 0.0
        return np.zeros_like(b), stats
    n = b.size
    A = spla.LinearOperator((n, n), matvec=apply, dtype=complex)
    M = None
    if cfg.preconditioner == "diagonal":
        M = spla.LinearOperator((n, n), matvec=lambda v: v / diag, dtype=complex)
    CU = []
    log = _Log(cfg.log_path)
    state = {"it": 0, "ritz": (np.nan, np.nan)}

    def callback(xk):
        state["it"] += 1
        rel = float(np.linalg.norm(b - apply(xk)) / bnorm)
        ev = np.abs(harmonic_ritz(CU))
        state["ritz"] = (float(np.min(ev)), float(np.max(ev)))
        stats.history.append((state["it"], rel, state["ritz"][0]))
        log.row(state["it"], rel, state["ritz"][0])

    try:
        x, _ = spla.gcrotmk(A, b.astype(complex), rtol=cfg.rel_tol, atol=0.0,
                            maxiter=max(1, cfg.max_iter // cfg.restart), M=M, callback=callback,
                            m=cfg.restart, k=k, CU=CU, truncate="smallest")
    finally:
        log.close()
    stats.iterations = state["it"]
    stats.rel_residual = float(np.linalg.norm(b - apply(x)) / bnorm)
    stats.ritz_min, stats.ritz_max = state["ritz"]
    _finish(stats, cfg, "GCROT")
    return x, stats
