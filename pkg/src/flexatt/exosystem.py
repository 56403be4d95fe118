"""Internal-model synthesis.

Builds companion-form exosystems for the per-axis disturbance, picks a
Hurwitz/controllable pair ``(M, N)``, solves ``T Phi - M T = N Psi`` and fits
the frequency parameterization

    Psi T^{-1}(sigma) = E0 + sum_j E^j Omega_j(sigma)

by least squares over a sigma grid. Also hosts the regressor ``rho`` and the
internal-model / compensator right-hand sides used by the controller.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .errors import BasisInadequateError, FrequencyError, InvalidInputError, SynthesisError
from .plant import DisturbanceModel, F_terms, InertiaParameterization, split_L

SYLVESTER_TOL = 1e-10
SINGULAR_TOL = 1e-9
FIT_TOL = 1e-8
SCHEMA_VERSION = 1


# --------------------------------------------------------------------------
# exosystem
# --------------------------------------------------------------------------

def _poly_from_freqs(freqs, has_bias: bool) -> np.ndarray:
    """Monic characteristic polynomial, highest power first."""
    p = np.array([1.0, 0.0]) if has_bias else np.array([1.0])
    for b in freqs:
        p = np.polymul(p, [1.0, 0.0, float(b) ** 2])
    return p


def companion(last_row) -> np.ndarray:
    """Companion matrix with ones on the superdiagonal and ``last_row`` at the bottom."""
    a = np.asarray(last_row, dtype=float).reshape(-1)
    r = a.size
    out = np.eye(r, k=1)
    out[-1] = a
    return out


def exosystem_matrices(freqs, has_bias: bool):
    """``(Phi_i, Psi_i)`` for one axis; no validation of the frequencies."""
    p = _poly_from_freqs(freqs, has_bias)
    r = p.size - 1
    if r == 0:
        raise InvalidInputError("an axis exosystem needs at least a bias or one tone")
    # P(lambda) = lambda^r - a_1 - a_2 lambda - ... - a_r lambda^{r-1}
    a = -p[1:][::-1]
    Psi = np.zeros((1, r))
    Psi[0, 0] = 1.0
    return companion(a), Psi


def _observable(Phi, Psi) -> bool:
    r = Phi.shape[0]
    obs = np.vstack([Psi @ np.linalg.matrix_power(Phi, k) for k in range(r)])
    return np.linalg.matrix_rank(obs) == r


def _controllable(M, N) -> bool:
    r = M.shape[0]
    ctr = np.hstack([np.linalg.matrix_power(M, k) @ N for k in range(r)])
    return np.linalg.matrix_rank(ctr) == r


@dataclass(frozen=True)
class ExosystemDesign:
    """Per-axis companion exosystems and their block-diagonal aggregates."""

    Phi_blocks: tuple
    Psi_blocks: tuple
    freqs: tuple
    has_bias: tuple

    @property
    def r_blocks(self) -> tuple:
        return tuple(P.shape[0] for P in self.Phi_blocks)

    @property
    def r(self) -> int:
        return sum(self.r_blocks)

    @property
    def Phi(self) -> np.ndarray:
        return block_diag(*self.Phi_blocks)

    @property
    def Psi(self) -> np.ndarray:
        return block_diag(*self.Psi_blocks)


def build_exosystem(freqs_per_axis, has_bias_per_axis) -> ExosystemDesign:
    """Companion exosystem per axis with ``r_i = 2 N_i + bias``.

    Raises
    ------
    InvalidInputError
        On non-positive or duplicate frequencies, or an empty axis.
    """
    if len(freqs_per_axis) != 3 or len(has_bias_per_axis) != 3:
        raise InvalidInputError("need frequency lists and bias flags for exactly three axes")
    Phis, Psis = [], []
    for axis, (freqs, bias) in enumerate(zip(freqs_per_axis, has_bias_per_axis)):
        freqs = [float(b) for b in freqs]
        if any(not b > 0.0 for b in freqs):
            raise FrequencyError(f"axis {axis + 1}: frequencies must be positive, got {freqs}")
        if len(set(freqs)) != len(freqs):
            raise FrequencyError(f"axis {axis + 1}: duplicate frequency in {freqs}")
        Phi, Psi = exosystem_matrices(freqs, bool(bias))
        lam = np.linalg.eigvals(Phi)
        if np.abs(lam.real).max() > 1e-9:
            raise InvalidInputError(f"axis {axis + 1}: exosystem eigenvalues off the imaginary axis")
        if lam.size > 1:
            gaps = np.abs(lam[:, None] - lam[None, :])[np.triu_indices(lam.size, 1)]
            if gaps.min() <= 1e-9:
                raise InvalidInputError(f"axis {axis + 1}: exosystem eigenvalues are not distinct")
        if not _observable(Phi, Psi):
            raise SynthesisError(f"axis {axis + 1}: (Phi, Psi) not observable")
        Phis.append(Phi)
        Psis.append(Psi)
    return ExosystemDesign(tuple(Phis), tuple(Psis),
                           tuple(tuple(float(b) for b in f) for f in freqs_per_axis),
                           tuple(bool(b) for b in has_bias_per_axis))


def axis_has_bias(model: DisturbanceModel) -> tuple:
    """Default bias flags: model the bias when present or when an axis has no tones."""
    return tuple(ax.bias != 0.0 or not ax.tones for ax in model.axes)


def exosystem_state(model: DisturbanceModel, t: float, has_bias=None) -> np.ndarray:
    """Stacked ``[d_i, d_i', ..., d_i^(r_i - 1)]`` for the three axes."""
    if has_bias is None:
        has_bias = axis_has_bias(model)
    parts = []
    for ax, bias in zip(model.axes, has_bias):
        r = 2 * len(ax.tones) + int(bool(bias))
        rho = np.zeros(r)
        rho[0] = ax.bias
        for tone in ax.tones:
            arg = tone.frequency * t + tone.phase
            for k in range(r):
                rho[k] += tone.amplitude * tone.frequency ** k * np.sin(arg + 0.5 * k * np.pi)
        parts.append(rho)
    return np.concatenate(parts)


# --------------------------------------------------------------------------
# (M, N) and Sylvester
# --------------------------------------------------------------------------

#: lambda^2 + 2 lambda + 3, extended by real poles at -2 for larger r
DEFAULT_PAIR_POLY = (1.0, 2.0, 3.0)
DEFAULT_REAL_POLE = -2.0


def default_charpoly(r: int) -> np.ndarray:
    if r == 1:
        return np.array([1.0, -DEFAULT_REAL_POLE])
    p = np.array(DEFAULT_PAIR_POLY)
    for _ in range(r - 2):
        p = np.polymul(p, [1.0, -DEFAULT_REAL_POLE])
    return p


def choose_MN(r: int, poles=None):
    """Companion-form Hurwitz ``M`` and ``N = e_r``.

    Without ``poles`` the characteristic polynomial is
    ``(lambda^2 + 2 lambda + 3)(lambda + 2)^(r - 2)`` (``lambda + 2`` for r = 1).
    Complex poles must come in conjugate pairs.
    """
    if r < 1:
        raise InvalidInputError(f"r must be >= 1, got {r}")
    if poles is None:
        coeffs = default_charpoly(r)
    else:
        poles = [complex(p) for p in poles]
        if len(poles) != r:
            raise InvalidInputError(f"need {r} poles, got {len(poles)}")
        if any(p.real >= 0.0 for p in poles):
            raise InvalidInputError(f"poles must have negative real part, got {poles}")
        coeffs = np.poly(poles)
        if np.abs(np.imag(coeffs)).max() > 1e-9:
            raise InvalidInputError("complex poles must come in conjugate pairs")
        coeffs = np.real(coeffs)
    M = companion(-coeffs[1:][::-1])
    N = np.zeros((r, 1))
    N[-1, 0] = 1.0
    if not _controllable(M, N):
        raise SynthesisError("(M, N) is not controllable")
    return M, N


def solve_sylvester(Phi, M, N, Psi) -> np.ndarray:
    """Solve ``T Phi - M T = N Psi`` by a dense vectorized linear solve.

    Raises
    ------
    SynthesisError
        If the Frobenius residual exceeds 1e-10 or ``T`` is numerically singular.
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rhs = np.asarray(N, dtype=float).reshape(M.shape[0], -1) @ np.atleast_2d(np.asarray(Psi, dtype=float))
    r, s = M.shape[0], Phi.shape[0]
    # column-major vec: vec(T Phi) = (Phi^T kron I) vec T, vec(M T) = (I kron M) vec T
    op = np.kron(Phi.T, np.eye(r)) - np.kron(np.eye(s), M)
    try:
        vecT = np.linalg.solve(op, rhs.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise SynthesisError(f"Sylvester operator is singular: {exc}") from exc
    T = vecT.reshape((r, s), order="F")
    res = np.linalg.norm(T @ Phi - M @ T - rhs)
    if not res <= SYLVESTER_TOL:
        raise SynthesisError(f"Sylvester residual {res:.3e} exceeds {SYLVESTER_TOL:g}")
    if T.shape[0] == T.shape[1]:
        smin = np.linalg.svd(T, compute_uv=False).min()
        if not smin > SINGULAR_TOL:
            raise SynthesisError(f"Sylvester solution T is numerically singular (sigma_min={smin:.3e})")
    return T


# --------------------------------------------------------------------------
# frequency parameterization
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Monomial:
    """``prod_k sigma_k ** exponents[k]``."""

    exponents: tuple

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))

    def __call__(self, sigma) -> float:
        sigma = np.asarray(sigma, dtype=float).reshape(-1)
        return float(np.prod([s ** e for s, e in zip(sigma, self.exponents)]))

    @property
    def tag(self) -> str:
        terms = [f"s{k}^{e}" for k, e in enumerate(self.exponents) if e]
        return "*".join(terms) or "1"

    def variables(self) -> list:
        return [k for k, e in enumerate(self.exponents) if e]


def squared_frequency_basis(n_sigma: int) -> list:
    """Default basis: one ``sigma_k ** 2`` per unknown frequency."""
    return [Monomial(tuple(2 if j == k else 0 for j in range(n_sigma))) for k in range(n_sigma)]


def _psi_tinv_blocks(M_blocks, N_blocks, exo_pairs) -> list:
    out = []
    for M, N, (Phi, Psi) in zip(M_blocks, N_blocks, exo_pairs):
        T = solve_sylvester(Phi, M, N, Psi)
        out.append(Psi @ np.linalg.inv(T))
    return out


def fit_parameterization(M_blocks, N_blocks, exo_builder, basis, sigma_grid,
                         sigma_axes=None, validation_grid=None, tol=FIT_TOL):
    """Least-squares fit of ``Psi T^{-1}(sigma)`` against ``[1, Omega(sigma)]``.

    Parameters
    ----------
    M_blocks, N_blocks : sequence of arrays
        Per-axis internal-model pair.
    exo_builder : callable
        ``sigma -> [(Phi_i, Psi_i) for each axis]``.
    basis : sequence of Monomial
        The functions ``Omega_j``.
    sigma_grid : (K, n_sigma) array_like
        Training points.
    sigma_axes : sequence of int, optional
        Axis index of each sigma component. A basis function only enters the
        rows of axes whose frequencies it depends on; axes without unknown
        frequencies end up in ``E0`` with exactly zero ``E`` rows. When
        omitted, every basis function is fitted on every axis.
    validation_grid : (K', n_sigma) array_like, optional
        Held-out points for the residual; defaults to midpoints of the sorted
        training grid.

    Returns
    -------
    E0 : (3, r) ndarray
    E_blocks : list of (3, r) ndarray
    fit_residual : float
        Max entrywise error on the validation grid.
    """
    grid = np.asarray(sigma_grid, dtype=float)
    if grid.ndim == 1:
        grid = grid.reshape(-1, 1)
    n_sigma = grid.shape[1]
    ell = len(basis)
    if grid.shape[0] < 2 * (ell + 1):
        raise InvalidInputError(f"sigma grid has {grid.shape[0]} points; need at least {2 * (ell + 1)}")
    if validation_grid is None:
        validation_grid = 0.5 * (grid[:-1] + grid[1:])
    vgrid = np.atleast_2d(np.asarray(validation_grid, dtype=float)).reshape(-1, n_sigma)
    if sigma_axes is None:
        touched = [list(range(ell))] * 3
    else:
        touched = [[j for j, f in enumerate(basis) if any(sigma_axes[k] == i for k in f.variables())]
                   for i in range(3)]

    r_blocks = [M.shape[0] for M in M_blocks]
    offsets = np.concatenate([[0], np.cumsum(r_blocks)])
    r = int(offsets[-1])

    def sample(points):
        return [_psi_tinv_blocks(M_blocks, N_blocks, exo_builder(s)) for s in points]

    train = sample(grid)
    E0 = np.zeros((3, r))
    E_blocks = [np.zeros((3, r)) for _ in range(ell)]
    for i in range(3):
        cols = slice(offsets[i], offsets[i + 1])
        feats = np.column_stack([np.ones(len(grid))] + [[basis[j](s) for s in grid] for j in touched[i]])
        if np.linalg.matrix_rank(feats) < feats.shape[1]:
            raise InvalidInputError(f"axis {i + 1}: basis functions are linearly dependent on the sigma grid")
        target = np.vstack([blk[i].reshape(-1) for blk in train])
        coef, *_ = np.linalg.lstsq(feats, target, rcond=None)
        E0[i, cols] = coef[0]
        for row, j in enumerate(touched[i], start=1):
            E_blocks[j][i, cols] = coef[row]

    worst, worst_at = 0.0, None
    for s, blocks in zip(vgrid, sample(vgrid)):
        truth = block_diag(*blocks)
        model = E0 + sum(E * f(s) for E, f in zip(E_blocks, basis))
        err = np.abs(model - truth).max()
        if err > worst:
            worst, worst_at = err, s
    if not worst <= tol:
        raise BasisInadequateError(
            f"parameterization residual {worst:.3e} exceeds {tol:g}; worst at sigma={worst_at.tolist()}",
            worst_sigma=worst_at, residual=worst)
    return E0, E_blocks, float(worst)


def block_row_product(E_blocks, B) -> np.ndarray:
    """``[E^1 B, ..., E^l B]`` so that ``(E o B)(Omega kron c) == E (Omega kron I) B c``."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if not E_blocks:
        return np.zeros((3, 0))
    for E in E_blocks:
        if E.shape[1] != B.shape[0]:
            raise InvalidInputError(f"inner dimension mismatch: E is {E.shape}, B is {B.shape}")
    return np.hstack([E @ B for E in E_blocks])


# --------------------------------------------------------------------------
# design record
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InternalModelDesign:
    """Everything the controller synthesizer produces.

    ``freqs`` holds the per-axis frequency template with unknown entries at
    their nominal values; ``unknown`` lists the ``(axis, tone)`` position of
    each sigma component.
    """

    M_blocks: tuple
    N_blocks: tuple
    E0: np.ndarray
    E_blocks: tuple
    basis: tuple
    freqs: tuple
    has_bias: tuple
    unknown: tuple
    nominal_sigma: np.ndarray
    fit_residual: float = 0.0
    sylvester_residual: float = 0.0
    M: np.ndarray = field(init=False, repr=False)
    N: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "M_blocks", tuple(np.asarray(m, dtype=float) for m in self.M_blocks))
        object.__setattr__(self, "N_blocks", tuple(np.asarray(n, dtype=float).reshape(-1, 1) for n in self.N_blocks))
        object.__setattr__(self, "E0", np.asarray(self.E0, dtype=float))
        object.__setattr__(self, "E_blocks", tuple(np.asarray(e, dtype=float) for e in self.E_blocks))
        object.__setattr__(self, "basis", tuple(b if isinstance(b, Monomial) else Monomial(b) for b in self.basis))
        object.__setattr__(self, "nominal_sigma", np.asarray(self.nominal_sigma, dtype=float).reshape(-1))
        object.__setattr__(self, "unknown", tuple(tuple(int(i) for i in u) for u in self.unknown))
        object.__setattr__(self, "M", block_diag(*self.M_blocks))
        object.__setattr__(self, "N", block_diag(*self.N_blocks))
        r = self.M.shape[0]
        if self.E0.shape != (3, r) or any(E.shape != (3, r) for E in self.E_blocks):
            raise InvalidInputError(f"E0/E blocks must be 3 x {r}")
        if len(self.E_blocks) != len(self.basis):
            raise InvalidInputError("number of E blocks must match the basis size")
        if np.linalg.eigvals(self.M).real.max() >= 0.0:
            raise SynthesisError("M is not Hurwitz")

    @property
    def r(self) -> int:
        return self.M.shape[0]

    @property
    def r_blocks(self) -> tuple:
        return tuple(m.shape[0] for m in self.M_blocks)

    @property
    def ell(self) -> int:
        return len(self.basis)

    @property
    def n_sigma(self) -> int:
        return len(self.unknown)

    @property
    def sigma_axes(self) -> tuple:
        return tuple(a for a, _ in self.unknown)

    def Omega(self, sigma) -> np.ndarray:
        return np.array([f(sigma) for f in self.basis])

    def frequencies_at(self, sigma) -> tuple:
        sigma = np.asarray(sigma, dtype=float).reshape(-1)
        freqs = [list(f) for f in self.freqs]
        for (axis, tone), s in zip(self.unknown, sigma):
            freqs[axis][tone] = float(s)
        return tuple(tuple(f) for f in freqs)

    def exo_pairs(self, sigma) -> list:
        return [exosystem_matrices(f, b) for f, b in zip(self.frequencies_at(sigma), self.has_bias)]

    def Psi(self) -> np.ndarray:
        return block_diag(*[p for _, p in self.exo_pairs(self.nominal_sigma)])

    def Phi_at(self, sigma) -> np.ndarray:
        return block_diag(*[p for p, _ in self.exo_pairs(sigma)])

    def T_at(self, sigma) -> np.ndarray:
        return block_diag(*[solve_sylvester(Phi, M, N, Psi)
                            for M, N, (Phi, Psi) in zip(self.M_blocks, self.N_blocks, self.exo_pairs(sigma))])

    def psi_tinv_at(self, sigma) -> np.ndarray:
        """``Psi T^{-1}(sigma)`` from the Sylvester solution (no fitted model)."""
        return block_diag(*_psi_tinv_blocks(self.M_blocks, self.N_blocks, self.exo_pairs(sigma)))

    def psi_tinv_model(self, sigma) -> np.ndarray:
        """``E0 + E (Omega(sigma) kron I_r)``."""
        return self.E0 + sum(E * w for E, w in zip(self.E_blocks, self.Omega(sigma)))

    # -- JSON export ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "internal_model_design",
            "r_blocks": list(self.r_blocks),
            "M_blocks": [m.tolist() for m in self.M_blocks],
            "N_blocks": [n.reshape(-1).tolist() for n in self.N_blocks],
            "M": self.M.tolist(),
            "N": self.N.tolist(),
            "T_nominal": self.T_at(self.nominal_sigma).tolist(),
            "E0": self.E0.tolist(),
            "E_blocks": [e.tolist() for e in self.E_blocks],
            "basis": [{"exponents": list(b.exponents), "tag": b.tag} for b in self.basis],
            "freqs": [list(f) for f in self.freqs],
            "has_bias": list(self.has_bias),
            "unknown": [list(u) for u in self.unknown],
            "nominal_sigma": self.nominal_sigma.tolist(),
            "residuals": {"fit": self.fit_residual, "sylvester": self.sylvester_residual},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "InternalModelDesign":
        if doc.get("schema_version") != SCHEMA_VERSION or doc.get("kind") != "internal_model_design":
            raise InvalidInputError("not an internal-model design document (schema_version/kind mismatch)")
        try:
            return cls(
                M_blocks=[np.array(m, dtype=float) for m in doc["M_blocks"]],
                N_blocks=[np.array(n, dtype=float) for n in doc["N_blocks"]],
                E0=doc["E0"],
                E_blocks=[np.array(e, dtype=float) for e in doc["E_blocks"]],
                basis=[Monomial(b["exponents"]) for b in doc["basis"]],
                freqs=tuple(tuple(float(x) for x in f) for f in doc["freqs"]),
                has_bias=tuple(bool(b) for b in doc["has_bias"]),
                unknown=doc["unknown"],
                nominal_sigma=doc["nominal_sigma"],
                fit_residual=float(doc["residuals"]["fit"]),
                sylvester_residual=float(doc["residuals"]["sylvester"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed design document: {exc}") from exc


def sigma_grid(nominal, half_width=1.5, points=None, n_basis=1) -> np.ndarray:
    """Tensor grid over ``[max(0, s - half_width), s + half_width]`` per unknown."""
    nominal = np.asarray(nominal, dtype=float).reshape(-1)
    if points is None:
        points = 4 * (n_basis + 1) + 1
    axes = [np.linspace(max(0.0, s - half_width), s + half_width, points) for s in nominal]
    return np.array(list(itertools.product(*axes))).reshape(-1, nominal.size)


def synthesize(model: DisturbanceModel, unknown=(), nominal_sigma=None, has_bias=None,
               poles=None, basis=None, half_width=1.5, grid_points=None) -> InternalModelDesign:
    """Run the whole synthesis chain for a disturbance model.

    ``unknown`` lists ``(axis, tone)`` pairs whose frequencies are treated as
    unknown; their values in ``model`` are ignored in favor of
    ``nominal_sigma``. ``poles`` optionally gives a pole list per axis.
    """
    unknown = tuple(tuple(int(i) for i in u) for u in unknown)
    n_sigma = len(unknown)
    nominal = np.zeros(n_sigma) if nominal_sigma is None else np.asarray(nominal_sigma, dtype=float).reshape(-1)
    if nominal.size != n_sigma:
        raise InvalidInputError(f"nominal_sigma has {nominal.size} entries for {n_sigma} unknown frequencies")
    if has_bias is None:
        has_bias = axis_has_bias(model)
    freqs = [list(ax.frequencies) for ax in model.axes]
    for axis, tone in unknown:
        if not (0 <= axis < 3 and 0 <= tone < len(freqs[axis])):
            raise InvalidInputError(f"unknown frequency reference (axis={axis}, tone={tone}) does not exist")
    # validates distinctness/positivity with the true frequencies
    exo = build_exosystem(freqs, has_bias)
    for (axis, tone), s in zip(unknown, nominal):
        freqs[axis][tone] = float(s)
    poles = [None] * 3 if poles is None else list(poles)
    pairs = [choose_MN(r, p) for r, p in zip(exo.r_blocks, poles)]
    M_blocks = [m for m, _ in pairs]
    N_blocks = [n for _, n in pairs]
    basis = squared_frequency_basis(n_sigma) if basis is None else [
        b if isinstance(b, Monomial) else Monomial(b) for b in basis]
    for b in basis:
        if len(b.exponents) != n_sigma:
            raise InvalidInputError(f"basis function {b.tag} has {len(b.exponents)} exponents for {n_sigma} unknowns")

    tmpl = InternalModelDesign(M_blocks, N_blocks, np.zeros((3, exo.r)), [np.zeros((3, exo.r))] * len(basis),
                               basis, tuple(tuple(f) for f in freqs), tuple(has_bias), unknown, nominal)
    syl = 0.0
    for M, N, (Phi, Psi) in zip(M_blocks, N_blocks, tmpl.exo_pairs(nominal)):
        T = solve_sylvester(Phi, M, N, Psi)
        syl = max(syl, float(np.linalg.norm(T @ Phi - M @ T - N @ Psi)))
    if n_sigma == 0:
        E0 = tmpl.psi_tinv_at(nominal)
        return InternalModelDesign(M_blocks, N_blocks, E0, [], [], tmpl.freqs, tmpl.has_bias, (), nominal,
                                   0.0, syl)
    grid = sigma_grid(nominal, half_width, grid_points, len(basis))
    E0, E_blocks, res = fit_parameterization(M_blocks, N_blocks, tmpl.exo_pairs, basis, grid,
                                             sigma_axes=tmpl.sigma_axes)
    return InternalModelDesign(M_blocks, N_blocks, E0, E_blocks, basis, tmpl.freqs, tmpl.has_bias,
                               unknown, nominal, res, syl)


# --------------------------------------------------------------------------
# controller-side signals
# --------------------------------------------------------------------------

@dataclass
class ControllerState:
    """Internal model ``v``, compensator ``zeta`` and parameter estimate ``R_hat``."""

    v: np.ndarray
    zeta: np.ndarray
    R_hat: np.ndarray

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float).reshape(-1)
        self.zeta = np.asarray(self.zeta, dtype=float).reshape(self.v.size, -1)
        self.R_hat = np.asarray(self.R_hat, dtype=float).reshape(-1)

    @classmethod
    def zeros(cls, design: InternalModelDesign, n_mu: int) -> "ControllerState":
        return cls(np.zeros(design.r), np.zeros((design.r, n_mu)), np.zeros(R_size(design, n_mu)))

    def check(self, design: InternalModelDesign, n_mu: int) -> None:
        if self.v.size != design.r or self.zeta.shape != (design.r, n_mu) or self.R_hat.size != R_size(design, n_mu):
            raise InvalidInputError(
                f"controller state dims (v={self.v.size}, zeta={self.zeta.shape}, R_hat={self.R_hat.size}) "
                f"do not match design (r={design.r}, n_mu={n_mu}, ell={design.ell})")


def R_size(design: InternalModelDesign, n_mu: int) -> int:
    return n_mu + design.ell * n_mu + design.ell


def true_R(sigma, mu, basis) -> np.ndarray:
    """``[mu; Omega(sigma) kron mu; Omega(sigma)]``."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    omega = np.array([f(sigma) for f in basis])
    return np.concatenate([mu, np.kron(omega, mu), omega])


def regressor_rho(omega_e, zeta, v, design: InternalModelDesign, par: InertiaParameterization) -> np.ndarray:
    """``rho = [rho1, rho2, rho3]`` multiplying the unknown vector ``R(sigma, mu)``."""
    n_mu = par.n_mu
    zeta = np.asarray(zeta, dtype=float).reshape(design.r, n_mu)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != design.r:
        raise InvalidInputError(f"v has {v.size} entries; design has r={design.r}")
    L1, L0 = split_L(omega_e, par)
    F1, _ = F_terms(omega_e, par)
    NL1 = design.N @ L1
    rho1 = F1 + design.E0 @ (NL1 + zeta)
    rho2 = block_row_product(design.E_blocks, zeta + NL1)
    rho3 = block_row_product(design.E_blocks, design.N @ L0 - v)
    return np.hstack([rho1, rho2, rho3])


def internal_model_rhs(v, u, omega_e, design: InternalModelDesign, par: InertiaParameterization) -> np.ndarray:
    _, L0 = split_L(omega_e, par)
    _, F0 = F_terms(omega_e, par)
    N, M = design.N, design.M
    return M @ np.asarray(v, dtype=float) + N @ (np.asarray(u, dtype=float) + F0) - M @ (N @ L0)


def compensator_rhs(zeta, omega_e, design: InternalModelDesign, par: InertiaParameterization) -> np.ndarray:
    L1, _ = split_L(omega_e, par)
    F1, _ = F_terms(omega_e, par)
    M, N = design.M, design.N
    zeta = np.asarray(zeta, dtype=float).reshape(design.r, par.n_mu)
    return M @ zeta + (M @ (N @ L1) - N @ F1)
