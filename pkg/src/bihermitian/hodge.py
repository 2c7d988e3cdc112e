"""Twisted Dolbeault operator on L*-valued (0,q)-forms and its Green operator.

Forms are written in the constant ambient frames ``dzbar1, dzbar2`` and
``dzbar1 ^ dzbar2``: a (0,1)-form is a pair of complex grid arrays
``(b1, b2)``, a (0,2)-form a single array ``u``.  The L*-twist is carried by
the multiplier ``mu_star`` (``gamma^* u = mu_star u``); the fiber metric is
``mu_star**(-2 s)``, constant in the untwisted trivialisation.

The discrete dbar is a sparse matrix; its adjoint is a weighted conjugate
transpose (see ``DolbeaultComplex`` for the two variants).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import krylov
from .grid import STENCILS, ConfigError, EquivariantField, FlatBundle, FundamentalGrid
from .krylov import SolverConfig, SolverError, SolveStats  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

# complex covectors dz_k and dzbar_k in the real basis (x1, y1, x2, y2)
DZ = np.array([[1, 1j, 0, 0], [0, 0, 1, 1j]])
DZBAR = DZ.conj()


@dataclass
class Twisted02Scalar:
    """Coefficient u of ``u dzbar1 ^ dzbar2`` with values in L*."""

    values: np.ndarray
    mu_star: float
    bundle: FlatBundle | None = None

    def __add__(self, other):
        return Twisted02Scalar(self.values + other.values, self.mu_star, self.bundle)

    def __mul__(self, c):
        return Twisted02Scalar(c * self.values, self.mu_star, self.bundle)

    __rmul__ = __mul__


def _wirtinger_rows(grid: FundamentalGrid, kappa: float, stencil: str, bar: bool, k: int,
                    pole_sign: float = 1.0):
    """Sparse matrix of d/dzbar_k (or d/dz_k) acting on a scalar field with component factor kappa.

    ``pole_sign`` multiplies the eta couplings that pass through a pole
    (reflection ghosts); -1 gives the matrix whose transpose is the
    consistent weighted adjoint there.
    """
    offsets, coef = STENCILS[stencil]
    sign = 1j if bar else -1j
    rows, cols, data = [], [], []
    ar = np.arange(grid.N)
    ij = grid.invjac.reshape(grid.N, 4, 4)
    for axis in range(4):
        mix = 0.5 * (ij[:, axis, 2 * k] + sign * ij[:, axis, 2 * k + 1]) / grid.h[axis]
        for o, c in zip(offsets, coef):
            src, wraps = grid.neighbor(axis, o)
            mult = float(kappa) ** wraps if axis == 0 else 1.0
            if axis == 1 and pole_sign != 1.0:
                je = np.indices(grid.shape)[1].ravel() + o
                mult = np.where((je < 0) | (je >= grid.shape[1]), pole_sign, 1.0)
            rows.append(ar)
            cols.append(src)
            data.append(c * mix * mult)
    m = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.N, grid.N)
    )
    return m.tocsr()


ADJOINT_MODES = ("pole-corrected", "transpose")


def _antisymmetric(stencil: str) -> bool:
    offsets, coef = STENCILS[stencil]
    pairs = dict(zip(offsets, coef))
    return all(-o in pairs and np.isclose(pairs[-o], -c) for o, c in pairs.items())


class DolbeaultComplex:
    """dbar on L*-valued (0,1)-forms, its adjoint, and the Laplacian on (0,2)-forms.

    ``metric`` is the Hermitian metric of the base (map form, honest).

    ``adjoint`` selects the discrete adjoint ``A = W1^-1 Dt^H W2``:

    * ``"transpose"``: ``Dt = D``, the exact weighted transpose.  The Laplacian
      is Hermitian and solved by CG, but the adjoint loses consistency on the
      rings next to the poles, where the reflection ghost flips orientation.
    * ``"pole-corrected"``: ``Dt`` is ``D`` with the pole-crossing eta
      couplings negated.  For an antisymmetric stencil this is consistent up
      to the poles; the Laplacian is no longer Hermitian and is solved by
      GCROT(m,k).
    """

    def __init__(self, grid: FundamentalGrid, metric: EquivariantField, mu_star: float,
                 stencil: str = "centered", bundle: FlatBundle | None = None,
                 adjoint: str = "pole-corrected"):
        if stencil not in STENCILS:
            raise ConfigError(f"unknown stencil {stencil!r}")
        if adjoint not in ADJOINT_MODES:
            raise ConfigError(f"unknown adjoint mode {adjoint!r}")
        if adjoint == "pole-corrected" and not _antisymmetric(stencil):
            raise ConfigError("the pole-corrected adjoint needs an antisymmetric stencil")
        self.grid = grid
        self.mu_star = float(mu_star)
        self.bundle = bundle
        self.stencil = stencil
        self.adjoint = adjoint
        lam = grid.lam
        self.kappa_u = self.mu_star / lam**2
        self.kappa_b = self.mu_star / lam

        def build(pole_sign):
            dzb1 = _wirtinger_rows(grid, self.kappa_b, stencil, True, 0, pole_sign)
            dzb2 = _wirtinger_rows(grid, self.kappa_b, stencil, True, 1, pole_sign)
            # u = d b2 / dzbar1 - d b1 / dzbar2
            return sp.hstack([-dzb2, dzb1]).tocsr()

        self.D = build(1.0)
        # Dt = D - C, where C holds only the pole-crossing couplings
        self._C = None
        if adjoint != "transpose":
            C = (self.D - build(-1.0)).tocsr()
            C.eliminate_zeros()
            self._C = C

        G = metric.values.reshape(grid.N, 4, 4)
        Ginv = np.linalg.inv(G)
        vol = np.sqrt(np.linalg.det(G))
        s = grid.mesh[0].ravel()
        fiber = self.mu_star ** (-2.0 * s)
        w = grid.smooth_weights.ravel() * vol * fiber
        B = np.einsum("ka,nab,lb->nkl", DZBAR.conj(), Ginv, DZBAR)  # <dzbar_k, dzbar_l>
        self.W1 = w[:, None, None] * B
        self.W1inv = np.linalg.inv(self.W1)
        self.W2 = w * np.real(np.linalg.det(B))
        self._diag = None

    @property
    def Dt(self):
        return self.D if self._C is None else (self.D - self._C).tocsr()

    def _DtH(self, y):
        """``Dt^H y`` without storing the conjugate transpose."""
        out = (self.D.T @ y.conj()).conj()
        if self._C is not None:
            out -= (self._C.T @ y.conj()).conj()
        return out

    @property
    def hermitian(self) -> bool:
        return self.adjoint == "transpose"

    # ------------------------------------------------------------ operators

    def _split(self, flat):
        N = self.grid.N
        return flat[:N].reshape(self.grid.shape), flat[N:].reshape(self.grid.shape)

    @staticmethod
    def _join(beta):
        return np.concatenate([beta[0].ravel(), beta[1].ravel()])

    def _apply_block(self, W, flat):
        N = self.grid.N
        v = np.stack([flat[:N], flat[N:]], axis=-1)
        out = np.einsum("nkl,nl->nk", W, v)
        return np.concatenate([out[:, 0], out[:, 1]])

    def dbar(self, beta):
        """``(b1, b2) -> u`` on grid arrays."""
        return (self.D @ self._join(beta)).reshape(self.grid.shape)

    def dbar_dual(self, beta):
        """The operator whose weighted transpose is ``dbar_adjoint`` (``dbar`` itself in transpose mode)."""
        return (self.Dt @ self._join(beta)).reshape(self.grid.shape)

    def dbar_adjoint(self, u):
        """``W1^-1 Dt^H W2 u``."""
        return self._split(self._apply_block(self.W1inv, self._DtH(self.W2 * u.ravel())))

    def inner01(self, beta, gamma):
        return np.vdot(self._join(beta), self._apply_block(self.W1, self._join(gamma)))

    def inner02(self, u, v):
        return np.vdot(u.ravel(), self.W2 * v.ravel())

    def _K(self, y):
        return self.D @ self._apply_block(self.W1inv, self._DtH(y))

    def laplacian_apply(self, u: Twisted02Scalar) -> Twisted02Scalar:
        """``dbar dbar^*`` on (0,2)-forms (the other term vanishes in top degree)."""
        self._check(u)
        out = self._K(self.W2 * u.values.ravel())
        return Twisted02Scalar(out.reshape(self.grid.shape), self.mu_star, u.bundle)

    def _check(self, u):
        if u.values.shape != self.grid.shape:
            raise ValueError("field does not live on this grid")
        if not np.isclose(u.mu_star, self.mu_star):
            raise ValueError("bundle mismatch between field and operator")

    def _diagonal(self):
        """Diagonal of ``K = D W1^-1 Dt^H``."""
        if self._diag is None:
            N = self.grid.N
            Dt = self.Dt
            blocks = [self.D[:, :N], self.D[:, N:]]
            tblocks = [Dt[:, :N].conj(), Dt[:, N:].conj()]
            d = np.zeros(N, dtype=complex)
            for k in range(2):
                for l in range(2):
                    d += blocks[k].multiply(tblocks[l]) @ self.W1inv[:, k, l]
            self._diag = d.real if self.hermitian else d
        return self._diag

    # ------------------------------------------------------------ Green operator

    def green(self, alpha: Twisted02Scalar, cfg: SolverConfig | None = None):
        """Solve ``Box x = alpha``; returns ``(x, stats)``.

        The unknown is ``y = W2 x`` with ``K y = alpha``; CG in transpose mode,
        GCROT(m,k) otherwise.
        """
        cfg = cfg or SolverConfig()
        self._check(alpha)
        b = alpha.values.ravel().astype(complex)
        solver = krylov.cg if self.hermitian else krylov.gcrot
        y, stats = solver(self._K, b, self._diagonal(), cfg)
        x = (y / self.W2).reshape(self.grid.shape)
        return Twisted02Scalar(x, self.mu_star, alpha.bundle), stats

    # ------------------------------------------------------------ recursion pieces

    def beta_of(self, omega02: Twisted02Scalar, cfg: SolverConfig | None = None):
        """``beta = dbar^* G(omega02)``; returns ``((b1, b2), stats)``."""
        x, stats = self.green(omega02, cfg)
        return self.dbar_adjoint(x.values), stats

    def del_beta(self, beta):
        """Components ``C[..., j, k]`` of ``del beta = sum d_j b_k dz_j ^ dzbar_k``."""
        grid = self.grid
        out = np.zeros(grid.shape + (2, 2), dtype=complex)
        for k, b in enumerate(beta):
            d = grid.ambient_partials(b, self.kappa_b, self.stencil)
            for j in range(2):
                out[..., j, k] = 0.5 * (d[..., 2 * j] - 1j * d[..., 2 * j + 1])
        return out


def two_form_from_dz_dzbar(C):
    """Complex component matrix of ``sum C_jk dz_j ^ dzbar_k``."""
    A = np.einsum("...jk,ja,kb->...ab", C, DZ, DZBAR)
    return A - np.swapaxes(A, -1, -2)


def assemble_omega11(C):
    """Real (1,1)-form ``del beta + conj`` as a component array."""
    return 2.0 * np.real(two_form_from_dz_dzbar(C))


def omega02_component(omega_comp):
    """``u`` with ``omega^{0,2} = u dzbar1 ^ dzbar2`` from a real 2-form's components."""
    v1 = 0.5 * np.array([1, 1j, 0, 0])
    v2 = 0.5 * np.array([0, 0, 1, 1j])
    return np.einsum("a,...ab,b->...", v1, omega_comp, v2)


def anti_form_from_02(u):
    """Real 2-form components ``u dzbar1^dzbar2 + conj``."""
    e = np.outer(DZBAR[0], DZBAR[1]) - np.outer(DZBAR[1], DZBAR[0])
    return 2.0 * np.real(u[..., None, None] * e)
