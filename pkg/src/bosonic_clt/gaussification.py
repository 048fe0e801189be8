"""Gaussification of a channel: moment extraction, (X, Y), Gaussian states in Fock space."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .channels import KrausChannel, apply, is_centered
from .fock import (
    OMEGA,
    FockOperator,
    FockSpaceConfig,
    _as_config,
    _displacement_matrix,
    fock_state,
    ladder_expectations,
    matrix_unit,
    moments_from_ladder,
    state_moments,
)

LAMBDA = np.array([[-1j, 1j], [-1.0, -1.0]]) / np.sqrt(2)

CENTER_WARN = 1e-6
CENTER_ERROR = 1e-3


class NotCenteredError(ValueError):
    pass


class UnphysicalCovariance(ValueError):
    pass


@dataclass(frozen=True)
class GaussianChannelParams:
    X: np.ndarray
    Y: np.ndarray
    centered_defect: float = 0.0

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.Y, self.Y.T, atol=1e-9))


@dataclass(frozen=True)
class MomentData:
    t: complex
    s: complex
    G: complex
    H: float
    V: np.ndarray
    mean_defect: np.ndarray


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def coherent(cls, alpha: complex) -> "GaussianState":
        return cls(np.sqrt(2) * np.array([alpha.real, alpha.imag]), np.eye(2))

    @classmethod
    def thermal(cls, nbar: float) -> "GaussianState":
        return cls(np.zeros(2), (2 * nbar + 1) * np.eye(2))

    @property
    def symplectic_eigenvalue(self) -> float:
        return float(np.sqrt(max(np.linalg.det(self.cov), 0.0)))


def _trace_with(T: np.ndarray, which: str) -> complex:
    ea, ea2, en = ladder_expectations(T)
    return {"a": ea, "a2": ea2, "n": en}[which]


def extract_moments(channel: KrausChannel) -> MomentData:
    cfg = channel.config
    out00 = apply(channel, fock_state(0, cfg)).matrix
    out10 = apply(channel, matrix_unit(1, 0, cfg)).matrix
    out01 = apply(channel, matrix_unit(0, 1, cfg)).matrix
    ea, ea2, en = ladder_expectations(out00)
    tr = float(np.trace(out00).real)
    mean, V = moments_from_ladder(ea, ea2, en, tr)
    return MomentData(
        t=_trace_with(out10, "a"),
        s=_trace_with(out01, "a"),
        G=np.conj(ea2),
        H=2 * en + tr,
        V=0.5 * (V + V.T),
        mean_defect=mean,
    )


def _quadrature_traces(T: np.ndarray) -> np.ndarray:
    """``(Tr[x T], Tr[p T])`` for a (not necessarily Hermitian) operator ``T``."""
    d = T.shape[0]
    s = np.sqrt(np.arange(1, d))
    ea = np.sum(s * np.diagonal(T, offset=-1))  # Tr[T a]
    ead = np.sum(s * np.diagonal(T, offset=1))  # Tr[T a^dag]
    return np.array([(ea + ead) / np.sqrt(2), (ea - ead) / (1j * np.sqrt(2))])


def extract_xy(channel: KrausChannel, require_centered: bool = True) -> GaussianChannelParams:
    """``X`` from the quadrature response to ``|0><1| +- |1><0|`` and ``Y = V - X X^T``."""
    defect = is_centered(channel)
    if require_centered:
        if defect > CENTER_ERROR:
            raise NotCenteredError(f"channel not centered (defect {defect:.3e})")
        if defect > CENTER_WARN:
            warnings.warn(f"channel centering defect {defect:.3e} exceeds {CENTER_WARN:g}")
    cfg = channel.config
    e01 = matrix_unit(0, 1, cfg).matrix
    e10 = matrix_unit(1, 0, cfg).matrix
    T1 = apply(channel, FockOperator(e01 + e10, cfg)).matrix
    T2 = apply(channel, FockOperator(-1j * e01 + 1j * e10, cfg)).matrix
    X = np.column_stack([_quadrature_traces(T1), _quadrature_traces(T2)]) / np.sqrt(2)
    if np.max(np.abs(X.imag)) > 1e-8:
        warnings.warn(f"X has imaginary part {np.max(np.abs(X.imag)):.2e}; channel may not be Hermiticity preserving")
    X = X.real
    V = extract_moments(channel).V
    Y = V - X @ X.T
    return GaussianChannelParams(X, 0.5 * (Y + Y.T), defect)


def uncertainty_certificate(params: GaussianChannelParams, tol: float = 1e-8) -> tuple[float, bool]:
    """Smallest eigenvalue of ``Y + i Omega - i X Omega X^T`` and whether it clears ``-tol``."""
    X, Y = params.X, params.Y
    M = Y + 1j * OMEGA - 1j * X @ OMEGA @ X.T
    ev = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    return float(ev[0]), bool(ev[0] >= -tol)


def gaussian_apply(params: GaussianChannelParams, g: GaussianState) -> GaussianState:
    return GaussianState(params.X @ g.mean, params.X @ g.cov @ params.X.T + params.Y)


def gaussian_char(g: GaussianState, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    zhat = np.stack([z, z.conj()], axis=-1)
    lz = zhat @ LAMBDA.T
    quad = np.einsum("...i,ij,...j->...", lz.conj(), g.cov, lz)
    lin = lz @ g.mean
    return np.exp(-0.25 * quad + 1j * lin)


def limit_char(md: MomentData, alpha: complex, z) -> np.ndarray:
    """Closed-form limit of ``chi_{N^{boxplus n}(|alpha><alpha|)}(z)`` from the moment data."""
    z = np.asarray(z, dtype=complex)
    zc = z.conj()
    t, s, G, H = md.t, md.s, md.G, md.H
    a, ac = alpha, np.conj(alpha)
    return np.exp(
        (z**2 * G - np.abs(z) ** 2 * H + zc**2 * np.conj(G)) / 2
        + z * (ac * np.conj(t) + a * np.conj(s))
        - zc * (a * t + ac * s)
    )


def pure_loss_params(lam: float) -> GaussianChannelParams:
    return GaussianChannelParams(np.sqrt(lam) * np.eye(2), (1 - lam) * np.eye(2))


def williamson(cov: np.ndarray) -> tuple[float, float, float]:
    """``(nu, r, phi)`` with ``cov = nu R(phi) diag(e^{2r}, e^{-2r}) R(phi)^T``."""
    cov = 0.5 * (cov + cov.T)
    ev, vec = np.linalg.eigh(cov)
    nu = float(np.sqrt(max(ev[0] * ev[1], 0.0)))
    r = 0.25 * float(np.log(ev[1] / ev[0])) if ev[0] > 0 else np.inf
    v = vec[:, 1]
    phi = float(np.arctan2(v[1], v[0]))
    return nu, r, phi


def _padded_dim(d: int, nu: float, r: float, mean: np.ndarray) -> int:
    energy = nu * np.cosh(2 * r) / 2 + 0.5 * float(mean @ mean)
    return int(max(2 * d, d + 40, 6 * energy + 60))


def gaussian_state_to_fock(g: GaussianState, config, check: bool = True) -> FockOperator:
    """Fock matrix of a one-mode Gaussian state, synthesised in a padded space and truncated.

    Thermal state with the symplectic eigenvalue, then squeezing and rotation
    through matrix exponentials of the quadratic generators, then displacement.
    """
    config = _as_config(config)
    cov = 0.5 * (np.asarray(g.cov, float) + np.asarray(g.cov, float).T)
    M = cov + 1j * OMEGA
    if np.linalg.eigvalsh(M)[0] < -1e-8:
        raise UnphysicalCovariance("cov + i Omega is not positive semidefinite")
    nu, r, phi = williamson(cov)
    if nu < 1 - 1e-8:
        raise UnphysicalCovariance(f"symplectic eigenvalue {nu} < 1")
    nu = max(nu, 1.0)
    mean = np.asarray(g.mean, float)
    d = config.cutoff
    D = _padded_dim(d, nu, r, mean)
    n = np.arange(D)
    nbar = (nu - 1) / 2
    probs = (nbar / (nbar + 1)) ** n / (nbar + 1) if nbar > 0 else (n == 0).astype(float)
    rho = np.diag(probs).astype(complex)
    a = np.diag(np.sqrt(np.arange(1, D)), 1).astype(complex)
    ad = a.conj().T
    if r > 0:
        Sq = scipy.linalg.expm(0.5 * r * (ad @ ad - a @ a))  # x anti-squeezed
        rot = np.diag(np.exp(1j * phi * n))
        W = rot @ Sq
        rho = W @ rho @ W.conj().T
    alpha = (mean[0] + 1j * mean[1]) / np.sqrt(2)
    if alpha != 0:
        Dz = _displacement_matrix(alpha, D)
        rho = Dz @ rho @ Dz.conj().T
    # keep away from the padded edge where the generators are truncated
    rho = rho[:d, :d]
    tail = 1 - float(np.trace(rho).real)
    rho = rho / np.trace(rho)
    out = FockOperator(0.5 * (rho + rho.conj().T), config, tail_mass=max(tail, 0.0))
    if check and tail < 1e-10:
        mom = state_moments(out)
        err = max(np.max(np.abs(mom.mean - mean)), np.max(np.abs(mom.cov - cov)))
        if err > 1e-6:
            warnings.warn(f"Gaussian synthesis round-trip defect {err:.2e}")
    return out


def gaussification(channel: KrausChannel) -> GaussianChannelParams:
    return extract_xy(channel)


def gaussification_output(channel: KrausChannel, alpha: complex, config=None,
                          params: GaussianChannelParams | None = None) -> FockOperator:
    """``N_G(|alpha><alpha|)`` as a Fock matrix."""
    config = channel.config if config is None else _as_config(config)
    params = extract_xy(channel) if params is None else params
    return gaussian_state_to_fock(gaussian_apply(params, GaussianState.coherent(complex(alpha))), config)
