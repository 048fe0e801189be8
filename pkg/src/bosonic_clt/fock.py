"""Dense numerics on truncated one- and two-mode Fock spaces.

Conventions used throughout the package:

* quadratures ``x = (a + a^dag)/sqrt(2)``, ``p = (a - a^dag)/(i sqrt(2))``;
* covariance ``gamma = Tr[rho {R - d, R^T - d^T}]`` so the vacuum has
  ``gamma = I`` (not ``I/2``);
* two-mode operators are ordered ``|n1, n2> -> n1 * d + n2`` (``np.kron``);
* entropies are in bits unless ``log_base=np.e`` is requested.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse

OMEGA = np.array([[0.0, 1.0], [-1.0, 0.0]])

DEFAULT_CUTOFF = 20


class DimensionMismatch(ValueError):
    pass


class NotAStateError(ValueError):
    pass


@dataclass(frozen=True)
class FockSpaceConfig:
    cutoff: int = DEFAULT_CUTOFF
    modes: int = 1

    def __post_init__(self):
        if self.cutoff < 2:
            raise ValueError(f"cutoff must be >= 2, got {self.cutoff}")
        if self.modes not in (1, 2):
            raise ValueError(f"modes must be 1 or 2, got {self.modes}")

    @property
    def dim(self) -> int:
        return self.cutoff**self.modes

    def single(self) -> "FockSpaceConfig":
        return FockSpaceConfig(self.cutoff, 1)

    def double(self) -> "FockSpaceConfig":
        return FockSpaceConfig(self.cutoff, 2)


def _as_config(config) -> FockSpaceConfig:
    if isinstance(config, FockSpaceConfig):
        return config
    return FockSpaceConfig(int(config), 1)


@dataclass(frozen=True, eq=False)
class FockOperator:
    """A dense complex matrix tagged with the Fock space it acts on.

    ``tail_mass`` is the probability that was cut off by the truncation when
    the operator was built from an infinite-dimensional state (0 otherwise).
    """

    matrix: np.ndarray
    config: FockSpaceConfig
    tail_mass: float = field(default=0.0, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.config.dim
        if m.shape != (n, n):
            raise DimensionMismatch(f"matrix shape {m.shape} does not match {self.config}")
        object.__setattr__(self, "matrix", m)

    def _check(self, other: "FockOperator"):
        if self.config != other.config:
            raise DimensionMismatch(f"{self.config} != {other.config}")

    def __add__(self, other):
        self._check(other)
        return FockOperator(self.matrix + other.matrix, self.config)

    def __sub__(self, other):
        self._check(other)
        return FockOperator(self.matrix - other.matrix, self.config)

    def __mul__(self, scalar):
        return FockOperator(self.matrix * scalar, self.config)

    __rmul__ = __mul__

    def __neg__(self):
        return FockOperator(-self.matrix, self.config)

    def __matmul__(self, other):
        self._check(other)
        return FockOperator(self.matrix @ other.matrix, self.config)

    def dag(self) -> "FockOperator":
        return FockOperator(self.matrix.conj().T, self.config)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def expect(self, op: "FockOperator") -> complex:
        """``Tr[self @ op]``."""
        self._check(op)
        return complex(np.einsum("ij,ji->", self.matrix, op.matrix))

    @property
    def cutoff(self) -> int:
        return self.config.cutoff

    def kron(self, other: "FockOperator") -> "FockOperator":
        if self.config.modes != 1 or other.config != self.config:
            raise DimensionMismatch("kron needs two single-mode operators on the same cutoff")
        return FockOperator(np.kron(self.matrix, other.matrix), self.config.double())


@dataclass(frozen=True)
class QuadratureSet:
    a: FockOperator
    a_dagger: FockOperator
    x: FockOperator
    p: FockOperator
    n_op: FockOperator


@dataclass(frozen=True)
class StateMoments:
    mean: np.ndarray
    cov: np.ndarray
    photon_mean: float


def ket(n: int, config) -> np.ndarray:
    config = _as_config(config)
    v = np.zeros(config.cutoff, dtype=complex)
    v[n] = 1.0
    return v


def fock_state(n: int, config) -> FockOperator:
    v = ket(n, config)
    return FockOperator(np.outer(v, v.conj()), _as_config(config))


def matrix_unit(n: int, m: int, config) -> FockOperator:
    """``|n><m|``."""
    config = _as_config(config)
    e = np.zeros((config.cutoff, config.cutoff), dtype=complex)
    e[n, m] = 1.0
    return FockOperator(e, config)


def identity(config) -> FockOperator:
    config = _as_config(config) if not isinstance(config, FockSpaceConfig) else config
    return FockOperator(np.eye(config.dim, dtype=complex), config)


@lru_cache(maxsize=64)
def _annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1).astype(complex)


def ladder_operators(config) -> QuadratureSet:
    config = _as_config(config)
    if config.modes != 1:
        raise ValueError("ladder_operators needs a single-mode config")
    a = _annihilation(config.cutoff).copy()
    ad = a.conj().T
    x = (a + ad) / np.sqrt(2)
    p = (a - ad) / (1j * np.sqrt(2))
    n = ad @ a
    wrap = lambda m: FockOperator(m, config)
    return QuadratureSet(wrap(a), wrap(ad), wrap(x), wrap(p), wrap(n))


def coherent_vector(alpha: complex, d: int) -> tuple[np.ndarray, float]:
    """Normalised truncated coherent ket and the probability mass cut off."""
    n = np.arange(d)
    log_mag = -0.5 * abs(alpha) ** 2 - 0.5 * np.array([math.lgamma(k + 1) for k in n])
    if alpha == 0:
        c = np.zeros(d, dtype=complex)
        c[0] = 1.0
        return c, 0.0
    c = np.exp(log_mag + n * np.log(abs(alpha))) * np.exp(1j * n * np.angle(alpha))
    kept = float(np.sum(np.abs(c) ** 2))
    tail = max(0.0, 1.0 - kept)
    return c / np.sqrt(kept), tail


def coherent_state(alpha: complex, config) -> FockOperator:
    config = _as_config(config)
    c, tail = coherent_vector(complex(alpha), config.cutoff)
    return FockOperator(np.outer(c, c.conj()), config, tail_mass=tail)


def thermal_state(nbar: float, config) -> FockOperator:
    """Geometric photon distribution with mean ``nbar``, renormalised at the cutoff."""
    config = _as_config(config)
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    n = np.arange(config.cutoff)
    if nbar == 0:
        probs = (n == 0).astype(float)
    else:
        q = nbar / (nbar + 1.0)
        probs = q**n / (nbar + 1.0)
    kept = probs.sum()
    return FockOperator(np.diag(probs / kept).astype(complex), config, tail_mass=float(1 - kept))


def displacement(z: complex, config) -> FockOperator:
    """Truncated ``D_z = exp(z a^dag - conj(z) a)`` from exact matrix elements.

    Uses the recurrences ``<m|D|0> = z/sqrt(m) <m-1|D|0>`` and
    ``sqrt(n+1) <m|D|n+1> = sqrt(m) <m-1|D|n> - conj(z) <m|D|n>``,
    equivalent to the associated-Laguerre closed form but stable.
    """
    config = _as_config(config)
    if config.modes != 1:
        raise ValueError("displacement is single-mode")
    return FockOperator(_displacement_matrix(complex(z), config.cutoff), config)


def _displacement_matrix(z: complex, d: int) -> np.ndarray:
    D = np.zeros((d, d), dtype=complex)
    D[0, 0] = np.exp(-0.5 * abs(z) ** 2)
    for m in range(1, d):
        D[m, 0] = z / np.sqrt(m) * D[m - 1, 0]
    sq = np.sqrt(np.arange(d))
    zc = np.conj(z)
    for n in range(d - 1):
        col = -zc * D[:, n]
        col[1:] += sq[1:] * D[:-1, n]
        D[:, n + 1] = col / sq[n + 1]
    return D


# ---------------------------------------------------------------------------
# 50:50 beamsplitter
# ---------------------------------------------------------------------------


def _sector_states(N: int, d: int) -> list[int]:
    """First-mode occupations n1 of the kept states |n1, N - n1>."""
    return [n1 for n1 in range(max(0, N - d + 1), min(N, d - 1) + 1)]


def _bs_amplitude(p: int, n1: int, n2: int) -> float:
    """<p, N-p| U |n1, n2> for U a1^dag U^dag = (a1^dag + a2^dag)/sqrt 2,
    U a2^dag U^dag = (a1^dag - a2^dag)/sqrt 2."""
    N = n1 + n2
    s = 0
    for j in range(max(0, p - n2), min(n1, p) + 1):
        s += math.comb(n1, j) * math.comb(n2, p - j) * (-1) ** (n2 - p + j)
    if s == 0:
        return 0.0
    log_pref = 0.5 * (math.lgamma(p + 1) + math.lgamma(N - p + 1) - math.lgamma(n1 + 1) - math.lgamma(n2 + 1))
    return float(s) * math.exp(log_pref - 0.5 * N * math.log(2.0))


def _bs_generator_block(N: int, d: int) -> np.ndarray:
    """Truncated ``a1^dag a2 - a1 a2^dag`` restricted to the kept part of sector N."""
    states = _sector_states(N, d)
    k = len(states)
    G = np.zeros((k, k))
    for i, n1 in enumerate(states):
        n2 = N - n1
        # a1^dag a2 |n1, n2> = sqrt((n1+1) n2) |n1+1, n2-1>
        if i + 1 < k and n2 > 0:
            G[i + 1, i] = math.sqrt((n1 + 1) * n2)
            G[i, i + 1] = -G[i + 1, i]
    return G


@lru_cache(maxsize=16)
def beamsplitter_blocks(d: int) -> tuple[tuple[np.ndarray, np.ndarray], ...]:
    """Per-sector ``(flat indices, unitary block)`` pairs of the 50:50 beamsplitter.

    Complete sectors (N <= d - 1) use closed-form binomial amplitudes. Sectors
    cut by the per-mode cutoff have no exact finite representation; there we
    use the exponential of the truncated generator composed with the parity on
    mode two, which agrees with the closed form on complete sectors and keeps
    the full matrix exactly unitary.
    """
    blocks = []
    for N in range(2 * d - 1):
        states = _sector_states(N, d)
        idx = np.array([n1 * d + (N - n1) for n1 in states])
        if N <= d - 1:
            B = np.array([[_bs_amplitude(p, n1, N - n1) for n1 in states] for p in states])
        else:
            parity = np.diag([(-1.0) ** (N - n1) for n1 in states])
            B = parity @ scipy.linalg.expm(np.pi / 4 * _bs_generator_block(N, d))
        blocks.append((idx, B.astype(complex)))
    return tuple(blocks)


@lru_cache(maxsize=16)
def _beamsplitter_sparse(d: int) -> scipy.sparse.csr_matrix:
    rows, cols, vals = [], [], []
    for idx, B in beamsplitter_blocks(d):
        r, c = np.meshgrid(idx, idx, indexing="ij")
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(B.ravel())
    U = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(d * d, d * d)
    )
    return U.tocsr()


def beamsplitter_50_50(config) -> FockOperator:
    """Two-mode unitary with ``U |alpha, beta> = |(alpha+beta)/sqrt2, (alpha-beta)/sqrt2>``."""
    config = _as_config(config) if not isinstance(config, FockSpaceConfig) else config
    if config.modes != 2:
        config = config.double()
    return FockOperator(_beamsplitter_sparse(config.cutoff).toarray(), config)


def conjugate_by_beamsplitter(rho12: np.ndarray, d: int, inverse: bool = False) -> np.ndarray:
    """``U rho U^dag`` (or ``U^dag rho U``) for a dense d^2 x d^2 array."""
    U = _beamsplitter_sparse(d)
    if inverse:
        U = U.conj().T.tocsr()
    tmp = U @ rho12
    return (U @ tmp.conj().T).conj().T


# ---------------------------------------------------------------------------
# traces, distances, entropies
# ---------------------------------------------------------------------------


def partial_trace(op: FockOperator, keep: int) -> FockOperator:
    if op.config.modes != 2:
        raise DimensionMismatch("partial_trace needs a two-mode operator")
    d = op.config.cutoff
    t = op.matrix.reshape(d, d, d, d)
    if keep == 0:
        m = np.einsum("ijkj->ik", t)
    elif keep == 1:
        m = np.einsum("ijil->jl", t)
    else:
        raise ValueError("keep must be 0 or 1")
    return FockOperator(m, op.config.single())


def _hermitian_part_check(m: np.ndarray, what: str, tol: float = 1e-8) -> bool:
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol * max(1.0, np.max(np.abs(m), initial=0.0)))


def trace_distance(A: FockOperator, B: FockOperator) -> float:
    A._check(B)
    diff = A.matrix - B.matrix
    if _hermitian_part_check(diff, "difference"):
        ev = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
        return 0.5 * float(np.sum(np.abs(ev)))
    warnings.warn("trace_distance: difference is not Hermitian, using singular values")
    return 0.5 * float(np.sum(np.linalg.svd(diff, compute_uv=False)))


def _log(x: np.ndarray, base) -> np.ndarray:
    return np.log(x) / np.log(base)


def spectrum_entropy(evals: np.ndarray, log_base: float = 2.0, clamp: float = 1e-10, error: float = 1e-8) -> float:
    """Shannon entropy of an eigenvalue list with truncation-noise clamping."""
    evals = np.asarray(evals, dtype=float)
    if evals.size and evals.min() < -error:
        raise NotAStateError(f"eigenvalue {evals.min():.3e} below -{error:g}")
    pos = evals[evals > 0]
    if pos.size == 0:
        return 0.0
    return float(-np.sum(pos * _log(pos, log_base)))


def von_neumann_entropy(rho: FockOperator, log_base: float = 2.0) -> float:
    m = rho.matrix
    if abs(np.trace(m) - 1) > 1e-8:
        raise NotAStateError(f"trace {np.trace(m).real:.10f} is not 1")
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return spectrum_entropy(ev, log_base)


def g_entropy(nbar: float) -> float:
    """Entropy in bits of the thermal state with mean photon number ``nbar``."""
    if nbar <= 0:
        return 0.0
    return float((nbar + 1) * np.log2(nbar + 1) - nbar * np.log2(nbar))


# ---------------------------------------------------------------------------
# characteristic function and moments
# ---------------------------------------------------------------------------


def char_function(T: FockOperator, z: complex) -> complex:
    if T.config.modes != 1:
        raise ValueError("char_function is single-mode")
    D = _displacement_matrix(complex(z), T.cutoff)
    return complex(np.einsum("ij,ji->", T.matrix, D))


def char_grid(T: FockOperator, zs) -> np.ndarray:
    zs = np.asarray(zs, dtype=complex)
    return np.array([char_function(T, z) for z in zs.ravel()]).reshape(zs.shape)


def ladder_expectations(rho: np.ndarray) -> tuple[complex, complex, float]:
    """``Tr[rho a]``, ``Tr[rho a^2]`` and ``Tr[rho a^dag a]`` from the dense matrix."""
    d = rho.shape[0]
    s = np.sqrt(np.arange(1, d))
    ea = np.sum(s * np.diagonal(rho, offset=-1))
    s2 = np.sqrt(np.arange(1, d - 1) * np.arange(2, d))
    ea2 = np.sum(s2 * np.diagonal(rho, offset=-2)) if d > 2 else 0.0
    en = float(np.real(np.sum(np.arange(d) * np.diagonal(rho))))
    return complex(ea), complex(ea2), en


def moments_from_ladder(ea: complex, ea2: complex, en: float, tr: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance from ``<a>``, ``<a^2>``, ``<a^dag a>``.

    ``<a a^dag>`` is taken as ``<a^dag a> + Tr`` (the untruncated commutator),
    so the top Fock level does not bias the second moments.
    """
    mean = np.sqrt(2) * np.array([ea.real, ea.imag])
    xx = (2 * ea2.real + 2 * en + tr) / 2
    pp = (-2 * ea2.real + 2 * en + tr) / 2
    xp_sym = 2 * ea2.imag  # <{x, p}> = <a^2 - a^dag^2>/i
    cov = np.array([[2 * xx, xp_sym], [xp_sym, 2 * pp]]) - 2 * np.outer(mean, mean) / max(tr, 1e-300)
    return mean, cov


def state_moments(rho: FockOperator) -> StateMoments:
    if rho.config.modes != 1:
        raise ValueError("state_moments is single-mode")
    tr = rho.trace()
    if abs(tr - 1) > 1e-8:
        raise NotAStateError(f"trace {tr.real:.10f} is not 1")
    ea, ea2, en = ladder_expectations(rho.matrix)
    mean, cov = moments_from_ladder(ea, ea2, en)
    return StateMoments(mean, 0.5 * (cov + cov.T), en)


def random_state(config, rank: int = 2, rng=None, max_level: int | None = None) -> FockOperator:
    """Random low-rank density matrix supported on the first ``max_level`` basis states."""
    config = _as_config(config)
    rng = np.random.default_rng(rng)
    d = config.dim
    k = d if max_level is None else min(max_level, d)
    g = np.zeros((d, rank), dtype=complex)
    g[:k] = rng.normal(size=(k, rank)) + 1j * rng.normal(size=(k, rank))
    rho = g @ g.conj().T
    return FockOperator(rho / np.trace(rho), config)
