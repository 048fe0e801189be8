"""Kraus-operator channels on a truncated single-mode Fock space."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, partial
from pathlib import Path

import numpy as np
import scipy.special

from .fock import (
    DimensionMismatch,
    FockOperator,
    FockSpaceConfig,
    NotAStateError,
    _as_config,
    _displacement_matrix,
    coherent_state,
    fock_state,
    ladder_expectations,
    moments_from_ladder,
    thermal_state,
)


class ChannelSpecError(ValueError):
    """Raised for malformed channel specifications or invalid channel parameters."""


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """``rho -> sum_i K_i rho K_i^dag`` with Kraus operators stacked as ``(r, d, d)``.

    ``tol`` is the completeness tolerance checked on the interior block
    ``|0..d-headroom>``; truncation inevitably breaks completeness near the
    cutoff for channels that raise photon number.
    """

    kraus: np.ndarray
    config: FockSpaceConfig
    label: str = "channel"
    tol: float = 1e-8
    headroom: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        k = np.asarray(self.kraus, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        d = self.config.cutoff
        if k.ndim != 3 or k.shape[1:] != (d, d) or k.shape[0] == 0:
            raise DimensionMismatch(f"Kraus stack of shape {k.shape} does not fit cutoff {d}")
        object.__setattr__(self, "kraus", k)

    @property
    def rank(self) -> int:
        return self.kraus.shape[0]

    @property
    def operators(self) -> list[FockOperator]:
        return [FockOperator(k, self.config) for k in self.kraus]

    @cached_property
    def superop(self) -> np.ndarray:
        """``S[c, e, a, b]`` with ``N(rho)[c, e] = sum S[c, e, a, b] rho[a, b]``."""
        return np.einsum("rca,reb->ceab", self.kraus, self.kraus.conj(), optimize=True)

    def __call__(self, rho: FockOperator) -> FockOperator:
        return apply(self, rho)


def rebuild(channel: KrausChannel, cutoff: int) -> KrausChannel | None:
    """The same builtin channel at another cutoff, or ``None`` for channels given only by Kraus data."""
    builder = channel.meta.get("builder")
    return None if builder is None else builder(FockSpaceConfig(cutoff))


def apply_on_mode(kraus: np.ndarray, R: np.ndarray, mode: int) -> np.ndarray:
    """Apply a single-mode Kraus set to one mode of ``R[a1, a2, b1, b2]``.

    Small Kraus sets loop over operators (``r D^5``); large ones contract the
    single-mode superoperator (``D^6``). Memory stays at ``O(D^4)`` either way.
    """
    r, D, _ = kraus.shape
    # move the acted-on mode to the front as (a, b, rest)
    perm = (0, 2, 1, 3) if mode == 0 else (1, 3, 0, 2)
    Rm = R.transpose(perm).reshape(D, D, D * D)
    if r <= D // 2:
        out = np.zeros_like(Rm)
        for K in kraus:
            T = np.tensordot(K, Rm, axes=(1, 0))  # (x, b, rest)
            out += np.einsum("xbm,yb->xym", T, K.conj(), optimize=True)
    else:
        S = np.einsum("rca,reb->ceab", kraus, kraus.conj(), optimize=True)
        out = np.tensordot(S, Rm, axes=((2, 3), (0, 1)))
    inv = np.argsort(perm)
    return out.reshape(D, D, D, D).transpose(inv)


def completeness_defect(channel: KrausChannel, headroom: int | None = None) -> float:
    """Spectral norm of ``sum K^dag K - I`` on the interior block."""
    d = channel.config.cutoff
    h = headroom if headroom is not None else (channel.headroom if channel.headroom is not None else d // 4)
    k = max(1, d - h)
    M = np.einsum("rab,rac->bc", channel.kraus.conj(), channel.kraus)[:k, :k] - np.eye(k)
    return float(np.linalg.norm(M, 2))


def apply(channel: KrausChannel, rho: FockOperator) -> FockOperator:
    if rho.config != channel.config:
        raise DimensionMismatch(f"{rho.config} != {channel.config}")
    K = channel.kraus
    out = np.einsum("rca,ab,reb->ce", K, rho.matrix, K.conj(), optimize=True)
    return FockOperator(out, channel.config)


def apply_superop(S: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.tensordot(S, rho, axes=([2, 3], [0, 1]))


def apply_pairwise(channel: KrausChannel, rho12: FockOperator) -> FockOperator:
    """``(N (x) N)(rho12)``, contracted mode by mode through the superoperator."""
    if rho12.config != channel.config.double():
        raise DimensionMismatch(f"{rho12.config} is not the two-mode space of {channel.config}")
    d = channel.config.cutoff
    out = _pairwise(channel.superop, channel.superop, rho12.matrix.reshape(d, d, d, d))
    return FockOperator(out.reshape(d * d, d * d), rho12.config)


def _pairwise(S1: np.ndarray, S2: np.ndarray, R: np.ndarray) -> np.ndarray:
    # R indices (a1, a2, b1, b2)
    Y = np.tensordot(S1, R, axes=([2, 3], [0, 2]))  # (c1, e1, a2, b2)
    Y = np.tensordot(S2, Y, axes=([2, 3], [2, 3]))  # (c2, e2, c1, e1)
    return Y.transpose(2, 0, 3, 1)


# ---------------------------------------------------------------------------
# builtin channels
# ---------------------------------------------------------------------------


def identity_channel(config) -> KrausChannel:
    config = _as_config(config)
    return KrausChannel(np.eye(config.cutoff), config, label="identity", meta={"builder": identity_channel})


def _check_state(sigma: FockOperator, what: str = "sigma"):
    m = sigma.matrix
    if np.max(np.abs(m - m.conj().T)) > 1e-8:
        raise NotAStateError(f"{what} is not Hermitian")
    if abs(np.trace(m) - 1) > 1e-8:
        raise NotAStateError(f"{what} does not have unit trace")
    ev, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    if ev.min() < -1e-8:
        raise NotAStateError(f"{what} has eigenvalue {ev.min():.3e}")
    return np.clip(ev, 0, None), vecs


def replacement_channel(sigma: FockOperator) -> KrausChannel:
    """``T -> Tr[T] sigma`` with Kraus ``sqrt(l_k) |e_k><l|``."""
    ev, vecs = _check_state(sigma)
    d = sigma.cutoff
    keep = ev > 1e-14
    kraus = []
    for lam, v in zip(ev[keep], vecs[:, keep].T):
        for l in range(d):
            K = np.zeros((d, d), dtype=complex)
            K[:, l] = np.sqrt(lam) * v
            kraus.append(K)
    return KrausChannel(np.array(kraus), sigma.config, label="replacement",
                        meta={"builder": partial(_padded_replacement, sigma.matrix)})


def _padded_replacement(sigma: np.ndarray, config) -> KrausChannel:
    config = _as_config(config)
    d, D = sigma.shape[0], config.cutoff
    if D < d:
        raise DimensionMismatch("replacement state cannot be shrunk")
    big = np.zeros((D, D), dtype=complex)
    big[:d, :d] = sigma
    return replacement_channel(FockOperator(big, config))


def pure_loss(lam: float, config) -> KrausChannel:
    """Attenuator of transmissivity ``lam``; exact on the truncated space."""
    if not 0.0 <= lam <= 1.0:
        raise ChannelSpecError(f"transmissivity must be in [0, 1], got {lam}")
    config = _as_config(config)
    d = config.cutoff
    kraus = np.zeros((d, d, d))
    for m in range(d):
        for n in range(m, d):
            kraus[m, n - m, n] = math.sqrt(math.comb(n, m)) * _pow(lam, (n - m) / 2) * _pow(1 - lam, m / 2)
    keep = np.linalg.norm(kraus, axis=(1, 2)) > 0
    return KrausChannel(kraus[keep], config, label=f"pure_loss({lam:g})", meta={"builder": partial(pure_loss, lam)})


def _pow(base: float, e: float) -> float:
    return 1.0 if e == 0 else base**e


def amplifier(gain: float, config) -> KrausChannel:
    """Quantum-limited amplifier with gain ``gain >= 1``."""
    if gain < 1.0:
        raise ChannelSpecError(f"gain must be >= 1, got {gain}")
    config = _as_config(config)
    d = config.cutoff
    kraus = np.zeros((d, d, d))
    for k in range(d):
        for n in range(d - k):
            kraus[k, n + k, n] = math.sqrt(math.comb(n + k, k) * _pow(gain - 1, k) / gain ** (n + k + 1))
    keep = np.linalg.norm(kraus, axis=(1, 2)) > 0
    return KrausChannel(kraus[keep], config, label=f"amplifier({gain:g})", headroom=d // 2,
                        meta={"builder": partial(amplifier, gain)})


@dataclass(frozen=True)
class NoiseDistribution:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=complex))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if pts.shape != w.shape:
            raise ChannelSpecError("points and weights must have the same length")
        if np.any(w < 0):
            raise ChannelSpecError("noise weights must be non-negative")
        if abs(w.sum() - 1) > 1e-12:
            raise ChannelSpecError(f"noise weights sum to {w.sum():.15f}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def mean(self) -> complex:
        return complex(np.sum(self.weights * self.points))

    def char(self, z) -> np.ndarray:
        """Symplectic characteristic function ``sum_j w_j exp(z conj(w_j) - conj(z) w_j)``."""
        z = np.asarray(z, dtype=complex)
        ph = np.multiply.outer(z, self.points.conj()) - np.multiply.outer(z.conj(), self.points)
        return np.sum(self.weights * np.exp(ph), axis=-1)

    def y_matrix(self) -> np.ndarray:
        """Added covariance ``4 Cov(Re w, Im w)`` in the vacuum-is-identity convention."""
        v = np.stack([self.points.real, self.points.imag])
        m = v @ self.weights
        c = (v * self.weights) @ v.T - np.outer(m, m)
        return 4 * c


def two_point_noise(c: complex) -> NoiseDistribution:
    return NoiseDistribution([c, -c], [0.5, 0.5])


def gaussian_noise(y_matrix, order: int = 12) -> NoiseDistribution:
    """Gauss-Hermite atoms for a centred complex Gaussian with added covariance ``Y``."""
    y = np.asarray(y_matrix, dtype=float)
    cov = y / 4
    ev, vec = np.linalg.eigh(cov)
    ev = np.clip(ev, 0, None)
    nodes, wts = np.polynomial.hermite_e.hermegauss(order)
    wts = wts / wts.sum()
    pts, ws = [], []
    for i, u in enumerate(nodes):
        for j, v in enumerate(nodes):
            xy = vec @ (np.sqrt(ev) * np.array([u, v]))
            pts.append(xy[0] + 1j * xy[1])
            ws.append(wts[i] * wts[j])
    ws = np.array(ws)
    return NoiseDistribution(np.array(pts), ws / ws.sum())


def additive_noise_channel(dist: NoiseDistribution, config) -> KrausChannel:
    config = _as_config(config)
    d = config.cutoff
    kraus = np.array([np.sqrt(w) * _displacement_matrix(p, d) for p, w in zip(dist.points, dist.weights) if w > 0])
    return KrausChannel(kraus, config, label="additive_noise",
                        meta={"noise": dist, "builder": partial(additive_noise_channel, dist)})


@dataclass(frozen=True)
class AngularDistribution:
    """Density ``p(theta)`` sampled at midpoints of a uniform grid on [0, 2 pi)."""

    density: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.density, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ChannelSpecError("density must be a 1-D array")
        if np.any(p < 0):
            raise ChannelSpecError("density has negative values")
        object.__setattr__(self, "density", p)
        if abs(self.integral() - 1) > 1e-8:
            raise ChannelSpecError(f"density integrates to {self.integral():.10f}, not 1")

    @property
    def size(self) -> int:
        return self.density.size

    @property
    def grid(self) -> np.ndarray:
        M = self.size
        return 2 * np.pi * (np.arange(M) + 0.5) / M

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 2 * np.pi / self.size)

    def integral(self) -> float:
        return float(np.sum(self.weights * self.density))

    def phase_factor(self, k) -> np.ndarray:
        """``Phi(k) = int exp(i theta k) p(theta) dtheta`` by the midpoint rule."""
        k = np.asarray(k)
        return np.sum(self.weights * self.density * np.exp(1j * np.multiply.outer(k, self.grid)), axis=-1)

    def differential_entropy(self) -> float:
        """``-int p ln p`` in nats (``0 ln 0 = 0``)."""
        p = self.density
        pos = p > 0
        return float(-np.sum(self.weights[pos] * p[pos] * np.log(p[pos])))

    @classmethod
    def from_function(cls, fn, M: int = 256) -> "AngularDistribution":
        theta = 2 * np.pi * (np.arange(M) + 0.5) / M
        vals = np.asarray(fn(theta), dtype=float)
        return cls(vals / (np.sum(vals) * 2 * np.pi / M))


def von_mises(kappa: float, M: int = 256, mu: float = 0.0) -> AngularDistribution:
    # exp-scaled Bessel keeps large kappa finite
    p = lambda t: np.exp(kappa * (np.cos(t - mu) - 1)) / (2 * np.pi * scipy.special.i0e(kappa))
    theta = 2 * np.pi * (np.arange(M) + 0.5) / M
    vals = p(theta)
    return AngularDistribution(vals / (np.sum(vals) * 2 * np.pi / M))


def uniform_phase(M: int = 256) -> AngularDistribution:
    return AngularDistribution(np.full(M, 1 / (2 * np.pi)))


def dephasing_factors(dist: AngularDistribution, d: int) -> np.ndarray:
    n = np.arange(d)
    phi = dist.phase_factor(np.subtract.outer(n, n))
    # Phi(0) = 1 by normalisation; pin it so Fock-diagonal states are exact fixed points
    np.fill_diagonal(phi, 1.0)
    return phi


def dephase(dist: AngularDistribution, rho: FockOperator) -> FockOperator:
    """Elementwise action ``rho_nm -> Phi(n - m) rho_nm``."""
    return FockOperator(dephasing_factors(dist, rho.cutoff) * rho.matrix, rho.config)


def dephasing_channel(dist: AngularDistribution, config) -> KrausChannel:
    config = _as_config(config)
    n = np.arange(config.cutoff)
    amp = np.sqrt(dist.weights * dist.density)
    kraus = np.array([a * np.diag(np.exp(1j * t * n)) for a, t in zip(amp, dist.grid) if a > 0])
    return KrausChannel(kraus, config, label="dephasing",
                        meta={"angular": dist, "builder": partial(dephasing_channel, dist)})


def choi_matrix(channel: KrausChannel) -> FockOperator:
    """Normalised Choi state ``(id (x) N)(|Phi><Phi|)``; mode 0 is the input."""
    d = channel.config.cutoff
    S = channel.superop  # (c, e, a, b)
    J = S.transpose(2, 0, 3, 1).reshape(d * d, d * d) / d
    return FockOperator(J, channel.config.double())


def from_choi(choi: FockOperator, psd_tol: float = 1e-8, tp_tol: float = 1e-6, prune: float = 1e-12) -> KrausChannel:
    if choi.config.modes != 2:
        raise DimensionMismatch("Choi matrix must be two-mode")
    d = choi.cutoff
    J = choi.matrix
    if np.max(np.abs(J - J.conj().T)) > psd_tol:
        raise ChannelSpecError("Choi matrix is not Hermitian")
    ev, vecs = np.linalg.eigh(0.5 * (J + J.conj().T))
    if ev.min() < -psd_tol:
        raise ChannelSpecError(f"Choi matrix is not PSD (min eigenvalue {ev.min():.3e})")
    red = np.einsum("acbc->ab", J.reshape(d, d, d, d))
    if np.max(np.abs(red - np.eye(d) / d)) > tp_tol:
        raise ChannelSpecError("Choi matrix is not trace preserving")
    keep = ev > prune * ev[ev > 0].sum()
    kraus = np.sqrt(d * ev[keep])[:, None, None] * vecs[:, keep].T.reshape(-1, d, d).transpose(0, 2, 1)
    return KrausChannel(kraus, choi.config.single(), label="from_choi")


def kraus_from_superop(S: np.ndarray, config: FockSpaceConfig, label: str, prune: float = 1e-12) -> KrausChannel:
    """Canonical (Choi-eigenvector) Kraus set of a superoperator ``S[c, e, a, b]``."""
    d = config.cutoff
    J = S.transpose(2, 0, 3, 1).reshape(d * d, d * d)
    ev, vecs = np.linalg.eigh(0.5 * (J + J.conj().T))
    total = ev[ev > 0].sum()
    keep = ev > prune * total
    kraus = np.sqrt(ev[keep])[:, None, None] * vecs[:, keep].T.reshape(-1, d, d).transpose(0, 2, 1)
    ch = KrausChannel(kraus, config, label=label)
    ch.meta["dropped_weight"] = float(np.sum(np.abs(ev[~keep])))
    return ch


def random_cptp_channel(config, rank: int = 3, rng=None, centered: bool = True) -> KrausChannel:
    """Random channel from a Haar-like isometry; optionally parity-twirled to be centred.

    Twirling with the parity ``(-1)^N`` leaves the first-order response (and
    hence ``X``) unchanged while removing the output mean of the vacuum.
    """
    config = _as_config(config)
    rng = np.random.default_rng(rng)
    d = config.cutoff
    g = rng.normal(size=(rank * d, d)) + 1j * rng.normal(size=(rank * d, d))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    kraus = q.reshape(rank, d, d)
    if centered:
        P = np.diag((-1.0) ** np.arange(d))
        kraus = np.concatenate([kraus, P @ kraus @ P]) / np.sqrt(2)
    return KrausChannel(kraus, config, label="random_cptp")


def is_centered(channel: KrausChannel) -> float:
    """``|| Tr[N(|0><0|) R] ||_2``."""
    out = apply(channel, fock_state(0, channel.config))
    ea, ea2, en = ladder_expectations(out.matrix)
    return float(np.sqrt(2) * abs(ea))


# ---------------------------------------------------------------------------
# JSON channel specs
# ---------------------------------------------------------------------------

CHANNEL_TYPES = ("identity", "pure_loss", "amplifier", "replacement", "dephasing", "additive_noise", "choi_file")


def parse_state(text: str, config) -> FockOperator:
    """``vacuum``, ``fock:n``, ``coherent:re[,im]`` or ``thermal:nbar``."""
    config = _as_config(config)
    kind, _, arg = str(text).partition(":")
    try:
        if kind == "vacuum":
            return fock_state(0, config)
        if kind == "fock":
            return fock_state(int(arg), config)
        if kind == "coherent":
            parts = [float(v) for v in arg.split(",")]
            return coherent_state(complex(parts[0], parts[1] if len(parts) > 1 else 0.0), config)
        if kind == "thermal":
            return thermal_state(float(arg), config)
    except (ValueError, IndexError) as exc:
        raise ChannelSpecError(f"bad state {text!r}: {exc}") from exc
    raise ChannelSpecError(f"unknown state {text!r}")


def _angular_from_spec(spec: dict) -> AngularDistribution:
    M = int(spec.get("grid", 256))
    if "von_mises" in spec:
        return von_mises(float(spec["von_mises"]["kappa"]), M)
    if "uniform" in spec:
        return uniform_phase(M)
    if "samples" in spec:
        vals = np.asarray(spec["samples"], dtype=float)
        if np.any(vals < 0):
            raise ChannelSpecError("dephasing samples must be non-negative")
        return AngularDistribution(vals / (vals.sum() * 2 * np.pi / vals.size))
    raise ChannelSpecError("dephasing spec needs 'von_mises', 'uniform' or 'samples'")


_ALLOWED_KEYS = {
    "identity": set(),
    "pure_loss": {"lambda"},
    "amplifier": {"gain"},
    "replacement": {"state"},
    "dephasing": {"von_mises", "uniform", "samples", "grid"},
    "additive_noise": {"points", "weights"},
    "choi_file": {"path"},
}


def channel_from_spec(spec: dict, cutoff: int | None = None, base_dir: Path | None = None) -> KrausChannel:
    """Build a channel from the JSON schema documented in ``docs/channel-spec.md``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ChannelSpecError("channel spec must be an object with a 'type'")
    kind = spec["type"]
    if kind not in CHANNEL_TYPES:
        raise ChannelSpecError(f"unknown channel type {kind!r}")
    unknown = set(spec) - {"type", "cutoff"} - _ALLOWED_KEYS[kind]
    if unknown:
        raise ChannelSpecError(f"unknown keys for {kind}: {sorted(unknown)}")
    d = int(cutoff if cutoff is not None else spec.get("cutoff", 20))
    config = FockSpaceConfig(d)
    try:
        if kind == "identity":
            return identity_channel(config)
        if kind == "pure_loss":
            return pure_loss(float(spec["lambda"]), config)
        if kind == "amplifier":
            return amplifier(float(spec["gain"]), config)
        if kind == "replacement":
            return replacement_channel(parse_state(spec["state"], config))
        if kind == "dephasing":
            return dephasing_channel(_angular_from_spec(spec), config)
        if kind == "additive_noise":
            pts = [complex(p[0], p[1]) if isinstance(p, (list, tuple)) else complex(p) for p in spec["points"]]
            w = spec.get("weights", [1 / len(pts)] * len(pts))
            return additive_noise_channel(NoiseDistribution(pts, w), config)
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        arr = np.load(path) if path.suffix == ".npy" else np.array(_load_complex_json(path))
        return from_choi(FockOperator(arr, config.double()))
    except KeyError as exc:
        raise ChannelSpecError(f"{kind} spec is missing {exc}") from exc
    except NotAStateError as exc:
        raise ChannelSpecError(str(exc)) from exc


def _load_complex_json(path: Path):
    data = json.loads(Path(path).read_text())
    return np.asarray(data["real"], dtype=float) + 1j * np.asarray(data.get("imag", 0.0), dtype=float)
