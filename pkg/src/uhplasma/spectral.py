"""Eigenstructure of the linearized derivative system and stabilization regimes.

The derivative triple ``(q1, q2, s)`` obeys a matrix Riccati equation whose
linearization is ``Y' = M Y`` with the 4x4 matrix built by :func:`build_matrix`.
``M`` always has the eigenvalue 0; the other three are the roots of

    lambda**3 + 2 nu lambda**2 + (1 + b0**2 + nu**2) lambda + nu = 0.

The regime discriminant ``K`` is a quarter of the negated discriminant of
that cubic: ``K > 0`` means a complex pair (oscillatory decay), ``K < 0``
three real roots (monotone decay).
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Params",
    "InvalidParams",
    "Regime",
    "EigenStructure",
    "RegimeInvariants",
    "build_matrix",
    "cubic_coefficients",
    "cubic_roots",
    "eigenvalues",
    "regime_discriminant",
    "regime",
    "regime_boundary",
    "closed_form_roots",
    "closed_form_eigenvector",
    "asymptotic_lambda",
    "B0_BAR",
    "ILL_CONDITIONED",
]

#: |B0| above which the motion is oscillatory for every nu.
B0_BAR = math.sqrt(2.0) / 4.0

#: Condition number of the eigenvector matrix beyond which the basis is flagged.
ILL_CONDITIONED = 1e12


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class Params:
    """Collision frequency ``nu`` (>= 0) and magnetic parameter ``b0``."""

    nu: float
    b0: float

    def __post_init__(self):
        nu, b0 = float(self.nu), float(self.b0)
        if not (math.isfinite(nu) and math.isfinite(b0)):
            raise InvalidParams(f"parameters must be finite, got nu={nu!r}, b0={b0!r}")
        if nu < 0:
            raise InvalidParams(f"nu must be non-negative, got {nu!r}")
        # normalise -0.0 so that mirrored sweeps hash and print identically
        object.__setattr__(self, "nu", nu + 0.0)
        object.__setattr__(self, "b0", b0 + 0.0)


class Regime(str, enum.Enum):
    OSCILLATORY = "oscillatory"
    MONOTONE = "monotone"
    BOUNDARY = "boundary"


def build_matrix(params: Params) -> np.ndarray:
    """Assemble ``M = [[M11, M12], [M21, M22]]`` for ``Y = (Q, P)``.

    ``M11 = (0)``, ``M12 = (1 0 0)``, ``M21 = 0`` and
    ``M22 = [[-nu, -b0, -1], [b0, -nu, 0], [1, 0, 0]]``.
    """
    nu, b0 = params.nu, params.b0
    return np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, -nu, -b0, -1.0],
            [0.0, b0, -nu, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ]
    )


def _block22(params: Params) -> np.ndarray:
    return build_matrix(params)[1:, 1:]


def cubic_coefficients(params: Params) -> tuple[float, float, float]:
    """Coefficients ``(a, b, c)`` of the monic cubic ``l^3 + a l^2 + b l + c``."""
    nu, b0 = params.nu, params.b0
    return 2.0 * nu, 1.0 + b0 * b0 + nu * nu, nu


def _polish(root, a, b, c):
    # one Newton step in extended precision; kept only if the residual shrinks
    if root.imag == 0.0:
        x = np.longdouble(root.real)
        A, B, C = np.longdouble(a), np.longdouble(b), np.longdouble(c)
    else:
        x = np.clongdouble(root)
        A, B, C = np.clongdouble(a), np.clongdouble(b), np.clongdouble(c)
    p = ((x + A) * x + B) * x + C
    dp = (3 * x + 2 * A) * x + B
    if dp == 0:
        return root
    y = x - p / dp
    py = ((y + A) * y + B) * y + C
    if abs(py) < abs(p):
        return complex(y) if root.imag != 0.0 else complex(float(y), 0.0)
    return root


def cubic_roots(params: Params) -> np.ndarray:
    """The three roots of the eigenvalue cubic, polished and ordered.

    Ordering: ``roots[0]`` has the smallest ``|Im|``; a nonreal pair is
    returned as ``(z, conj(z))`` with ``Im z > 0``.  Three real roots are
    returned in decreasing order.
    """
    a, b, c = cubic_coefficients(params)
    if c == 0.0:
        # nu == 0: l (l^2 + 1 + b0^2)
        w = math.sqrt(b)
        return np.array([0.0, 1j * w, -1j * w], dtype=complex)
    raw = np.linalg.eigvals(
        np.array([[-a, -b, -c], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    ).astype(complex)
    if np.all(raw.imag == 0.0):
        polished = sorted((_polish(complex(r), a, b, c).real for r in raw), reverse=True)
        return np.array(polished, dtype=complex)
    # LAPACK returns nonreal eigenvalues of a real matrix as exact pairs
    i_real = int(np.argmin(np.abs(raw.imag)))
    real = _polish(complex(raw[i_real].real, 0.0), a, b, c)
    z = next(r for r in raw if r.imag > 0)
    z = _polish(complex(z), a, b, c)
    if z.imag < 0:
        z = z.conjugate()
    return np.array([real, z, z.conjugate()], dtype=complex)


def _null_vector(A: np.ndarray) -> np.ndarray:
    _, _, vh = np.linalg.svd(A)
    return vh[-1].conj()


def _normalize(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    j = int(np.argmax(np.abs(v)))
    return v * (abs(v[j]) / v[j])


@dataclass(frozen=True)
class EigenStructure:
    """Eigenvalues and eigenvectors of ``M``.

    ``vectors[:, k]`` is the eigenvector for ``lam[k]``; ``lam[0] == 0`` and
    ``vectors[:, 0] == (1, 0, 0, 0)`` exactly.
    """

    params: Params
    lam: np.ndarray
    vectors: np.ndarray
    condition: float
    ill_conditioned: bool = field(default=False)

    @property
    def max_real(self) -> float:
        return float(np.max(self.lam[1:].real))

    @property
    def max_imag(self) -> float:
        return float(np.max(np.abs(self.lam[1:].imag)))

    def residuals(self) -> np.ndarray:
        """``||M v_k - lam_k v_k|| / ||v_k||`` for each k."""
        M = build_matrix(self.params)
        r = M @ self.vectors - self.vectors * self.lam
        return np.linalg.norm(r, axis=0) / np.linalg.norm(self.vectors, axis=0)

    def to_dict(self) -> dict:
        return {
            "nu": self.params.nu,
            "b0": self.params.b0,
            "lambda_re": [float(x) for x in self.lam.real],
            "lambda_im": [float(x) for x in self.lam.imag],
            "condition": float(self.condition),
            "fallback": bool(self.ill_conditioned),
        }


def eigenvalues(params: Params) -> EigenStructure:
    """Eigenvalues of ``M`` with nullspace-computed eigenvectors.

    For a root ``l`` of the cubic and a null vector ``u`` of ``M22 - l I``,
    ``(u[2], u[0], u[1], u[2])`` is an eigenvector of ``M``; this form stays
    valid as ``l -> 0``.  A near-defective basis (close to ``K = 0``) is
    reported through ``condition`` and ``ill_conditioned`` rather than raised.
    """
    roots = cubic_roots(params)
    lam = np.concatenate([[0.0 + 0.0j], roots])
    M22 = _block22(params).astype(complex)
    V = np.zeros((4, 4), dtype=complex)
    V[0, 0] = 1.0
    eye = np.eye(3)
    for k in (1, 2):
        u = _null_vector(M22 - roots[k - 1] * eye)
        V[:, k] = _normalize(np.array([u[2], u[0], u[1], u[2]]))
    if roots[2] == roots[1].conjugate() and roots[1].imag != 0.0:
        V[:, 3] = V[:, 2].conj()
    else:
        u = _null_vector(M22 - roots[2] * eye)
        V[:, 3] = _normalize(np.array([u[2], u[0], u[1], u[2]]))
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(V))
    if not math.isfinite(cond):
        cond = math.inf
    return EigenStructure(params, lam, V, cond, cond > ILL_CONDITIONED)


# ---------------------------------------------------------------------------
# regime classification


def regime_discriminant(params: Params, printed: bool = False) -> float:
    """Regime invariant ``K = -disc/4`` of the eigenvalue cubic.

    ``printed=True`` returns the variant with constant term ``1 - 3/4 nu^2``
    instead of ``1 - 1/4 nu^2``; it is kept only for comparison and is not
    the discriminant.
    """
    nu2, x = params.nu ** 2, params.b0 ** 2
    const = 0.75 if printed else 0.25
    return x ** 3 + (2 * nu2 + 3) * x ** 2 + (nu2 * nu2 - 5 * nu2 + 3) * x + (1 - const * nu2)


def _eps_k(params: Params) -> float:
    return 1e-12 * max(1.0, params.nu ** 4, params.b0 ** 6)


@dataclass(frozen=True)
class RegimeInvariants:
    K: float
    K1: complex
    K2: float
    regime: Regime
    eps: float

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "K1_re": self.K1.real,
            "K1_im": self.K1.imag,
            "K2": self.K2,
            "regime": self.regime.value,
            "eps_K": self.eps,
        }


def _k1_principal(params: Params, K: float) -> complex:
    nu, x = params.nu, params.b0 ** 2
    A = 8 * nu ** 3 + 36 * (2 * x - 1) * nu
    if K >= 0:
        return complex(np.cbrt(A + 24 * math.sqrt(3 * K)), 0.0)
    return (A + 24j * math.sqrt(-3 * K)) ** (1.0 / 3.0)


def regime(params: Params) -> RegimeInvariants:
    K = regime_discriminant(params)
    K2 = (3 + 3 * params.b0 ** 2 - params.nu ** 2) / 9
    eps = _eps_k(params)
    if K > eps:
        r = Regime.OSCILLATORY
    elif K < -eps:
        r = Regime.MONOTONE
    else:
        r = Regime.BOUNDARY
    return RegimeInvariants(K, _k1_principal(params, K), K2, r, eps)


def regime_boundary(b0: float):
    """Collision thresholds ``(nu_minus, nu_plus)`` bounding the monotone lens.

    Returns ``None`` for ``|b0| > sqrt(2)/4`` and ``(2.0, inf)`` at ``b0 == 0``.
    """
    b0 = float(b0)
    if not math.isfinite(b0):
        raise ValueError("b0 must be finite")
    if b0 == 0.0:
        return 2.0, math.inf
    x = b0 * b0
    t = 1.0 - 8.0 * x
    if t < -1e-12:
        return None
    t = max(t, 0.0)
    # inner radicand 1 - 24x + 192x^2 - 512x^3 == t**3
    r = 2.0 * t * math.sqrt(t)
    base = 2.0 + 40.0 * x - 16.0 * x * x
    nu_plus = math.sqrt(base + r) / (4.0 * abs(b0))
    # rationalized form of the minus branch, free of cancellation as b0 -> 0
    nu_minus = 4.0 * (1.0 + x) ** 1.5 / math.sqrt(base + r)
    return min(nu_minus, nu_plus), nu_plus


# ---------------------------------------------------------------------------
# closed forms (cross-checks only)


def closed_form_roots(params: Params, printed: bool = False) -> np.ndarray:
    """Cardano closed forms for the three cubic roots.

    The cube root in ``K1`` is multivalued; the branch whose reconstructed
    roots best satisfy the Vieta relations is used.
    """
    nu = params.nu
    K = regime_discriminant(params, printed=printed)
    K2 = (3 + 3 * params.b0 ** 2 - nu ** 2) / 9
    a, b, c = cubic_coefficients(params)
    K1p = _k1_principal(params, K)
    best, best_err = None, math.inf
    for j in range(3):
        K1 = K1p * cmath.exp(2j * math.pi * j / 3)
        if K1 == 0:
            continue
        r = 6 * K2 / K1
        l2 = K1 / 6 - r - 2 * nu / 3
        re = -K1 / 12 + r / 2 - 2 * nu / 3
        im = 1j * math.sqrt(3) / 2 * (K1 / 6 + r)
        roots = np.array([l2, re + im, re - im])
        err = (
            abs(roots.sum() + a)
            + abs(roots[0] * roots[1] + roots[0] * roots[2] + roots[1] * roots[2] - b)
            + abs(roots.prod() + c)
        )
        if err < best_err:
            best, best_err = roots, err
    return best


def closed_form_eigenvector(params: Params, lam: complex) -> np.ndarray:
    """Eigenvector of ``M`` for a nonzero cubic root, normalized to last entry 1.

    Divides by ``b0`` and ``lam``; undefined when either vanishes.
    """
    nu, b0 = params.nu, params.b0
    d = (lam + nu) ** 2 + 1 + b0 * b0
    return np.array(
        [
            -nu / (d * lam),
            -nu / d,
            -(lam * lam + lam * nu + 1 + b0 * b0) / (b0 * d),
            1.0,
        ],
        dtype=complex,
    )


def asymptotic_lambda(params: Params, order: str) -> np.ndarray:
    """Truncated expansions of ``(lam2, lam3, lam4)``.

    ``order="large_nu"``: ``lam3,4 = -nu +- i b0`` and ``lam2 = -nu/(nu^2+b0^2)``.
    ``order="small_nu"``: ``lam2 = -nu/(1+b0^2)`` and
    ``lam3,4 = +- i sqrt(1+b0^2) - nu (2 b0^2 + 1) / (2 (b0^2 + 1))``.
    """
    nu, x = params.nu, params.b0 ** 2
    if order == "large_nu":
        if nu == 0.0:
            raise ValueError("large_nu expansion needs nu > 0")
        pair = complex(-nu, abs(params.b0))
        return np.array([-nu / (nu * nu + x), pair, pair.conjugate()])
    if order == "small_nu":
        pair = complex(-0.5 * (2 * x + 1) / (x + 1) * nu, math.sqrt(1 + x))
        return np.array([-nu / (x + 1), pair, pair.conjugate()])
    raise ValueError(f"unknown expansion order {order!r}")
