"""Symmetric convolution of states and channels through the 50:50 beamsplitter."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .channels import (
    KrausChannel,
    apply_on_mode,
    apply,
    apply_superop,
    completeness_defect,
    kraus_from_superop,
    rebuild,
)
from .fock import (
    DimensionMismatch,
    FockOperator,
    _beamsplitter_sparse,
    coherent_state,
    conjugate_by_beamsplitter,
    fock_state,
    partial_trace,
    spectrum_entropy,
    trace_distance,
    von_neumann_entropy,
)

MAX_KRAUS = 4096


class KrausExplosion(RuntimeError):
    pass


def state_convolve2(rho: FockOperator, sigma: FockOperator) -> FockOperator:
    """``Tr_2[U (rho (x) sigma) U^dag]``."""
    rho._check(sigma)
    if rho.config.modes != 1:
        raise DimensionMismatch("state_convolve2 takes single-mode states")
    d = rho.cutoff
    joint = conjugate_by_beamsplitter(np.kron(rho.matrix, sigma.matrix), d)
    return FockOperator(np.einsum("ijkj->ik", joint.reshape(d, d, d, d)), rho.config)


def state_convolve_pow2(rho: FockOperator, k: int) -> FockOperator:
    """``rho^{boxplus 2^k}`` by repeated self-convolution."""
    for _ in range(k):
        rho = state_convolve2(rho, rho)
    return rho


@lru_cache(maxsize=16)
def _input_embedding(d: int) -> tuple[np.ndarray, ...]:
    """Amplitudes of ``U^dag |a, 0>`` on ``|a - j, j>``, one array per ``a``."""
    Ud = _beamsplitter_sparse(d).conj().T.tocsc()
    cols = Ud[:, [a * d for a in range(d)]].toarray()
    out = []
    for a in range(d):
        j = np.arange(a + 1)
        out.append(cols[(a - j) * d + j, a].copy())
    return tuple(out)


def convolve_superop(S: np.ndarray) -> np.ndarray:
    """Superoperator of ``N^{boxplus 2}`` from the superoperator ``S[c, e, a, b]`` of ``N``.

    For each matrix unit ``|a><b|`` the two-mode input ``U^dag(|a><b| (x) |0><0|)U``
    is the outer product of two sector-``a`` and sector-``b`` vectors, so
    ``(N (x) N)`` of it only touches ``(a+1)(b+1)`` input pairs per mode.
    """
    d = S.shape[0]
    U = _beamsplitter_sparse(d)
    Uh = U.conj().T.tocsr()
    emb = _input_embedding(d)
    F = np.zeros((d, d, d, d), dtype=complex)
    for a in range(d):
        ia = np.arange(a + 1)
        for b in range(a, d):
            ib = np.arange(b + 1)
            coef = np.outer(emb[a], emb[b].conj())
            M1 = S[:, :, (a - ia)[:, None], (b - ib)[None, :]] * coef
            M2 = S[:, :, : a + 1, : b + 1]
            Y = M1.reshape(d * d, -1) @ M2.reshape(d * d, -1).T
            Y = Y.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
            Z = (U @ (U @ Y).conj().T).conj().T
            out = np.einsum("ijkj->ik", Z.reshape(d, d, d, d))
            F[:, :, a, b] = out
            if a != b:
                F[:, :, b, a] = out.conj().T
    return F


def kraus_convolve2_direct(channel: KrausChannel) -> np.ndarray:
    """Literal ``A_ijl = (I (x) <l|) U (K_i (x) K_j) U^dag (I (x) |0>)`` stack.

    Costs ``r^2 d`` Kraus operators; kept as an independent reference for small ``r``.
    """
    d = channel.config.cutoff
    U = _beamsplitter_sparse(d).toarray()
    Win = U.conj().T[:, [a * d for a in range(d)]]  # (d^2, d)
    out = []
    for Ki in channel.kraus:
        for Kj in channel.kraus:
            M = U @ (np.kron(Ki, Kj) @ Win)  # (d^2, d), rows (x, l)
            M = M.reshape(d, d, d)
            for l in range(d):
                out.append(M[:, l, :])
    return np.array(out)


@dataclass
class ConvolutionPlan:
    """Iteration scheme for ``N^{boxplus 2^k}``."""

    base_channel: KrausChannel
    iterations: int = 1
    prune_tolerance: float = 1e-12
    max_kraus: int = MAX_KRAUS
    headroom: int | None = None
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")

    @property
    def n(self) -> int:
        return 2**self.iterations

    def run(self) -> KrausChannel:
        ch = self.base_channel
        self.history = [self._record(0, ch, 0.0)]
        for k in range(1, self.iterations + 1):
            t0 = time.perf_counter()
            ch = channel_convolve2(ch, self.prune_tolerance, self.max_kraus)
            self.history.append(self._record(k, ch, time.perf_counter() - t0))
        return ch

    def _record(self, k, ch, dt):
        return {
            "k": k,
            "kraus_count": ch.rank,
            "completeness_defect": completeness_defect(ch, self.headroom),
            "dropped_weight": ch.meta.get("dropped_weight", 0.0),
            "seconds": dt,
        }


def channel_convolve2(channel: KrausChannel, prune_tolerance: float = 1e-12, max_kraus: int = MAX_KRAUS) -> KrausChannel:
    """``N^{boxplus 2}`` as a canonical Kraus set (Choi eigenvectors, pruned)."""
    F = convolve_superop(channel.superop)
    out = kraus_from_superop(F, channel.config, f"{channel.label}^[2]", prune=prune_tolerance)
    if out.rank > max_kraus:
        raise KrausExplosion(f"{out.rank} Kraus operators exceed {max_kraus}; raise prune_tolerance")
    out.meta["parent_label"] = channel.label
    return out


def channel_convolve_pow2(channel: KrausChannel, k: int, prune_tolerance: float = 1e-12,
                          max_kraus: int = MAX_KRAUS) -> KrausChannel:
    if not 0 <= k <= 10:
        raise ValueError("k must be in [0, 10]")
    plan = ConvolutionPlan(channel, k, prune_tolerance, max_kraus)
    out = plan.run()
    if k > 0:
        out.meta["history"] = plan.history
    return out


class ExtendedConvolution:
    """Two-mode channel ``rho12 -> U (N (x) N)(U^dag rho12 U) U^dag``.

    With ``padding > 0`` and a builtin channel, the computation runs at cutoff
    ``d + padding`` and the result is cut back to ``d``: the beamsplitter is then
    exact on every sector reachable from the embedded input, and the only
    residual error is channel leakage past the padded edge.
    """

    def __init__(self, channel: KrausChannel, padding: int | None = None):
        self.channel = channel
        self.config = channel.config.double()
        d = channel.config.cutoff
        if padding is None:
            padding = d - 1 if channel.meta.get("builder") is not None else 0
        big = rebuild(channel, d + padding) if padding > 0 else None
        self.padding = padding if big is not None else 0
        self._work = channel if big is None else big

    def _padded_output(self, rho12: FockOperator) -> np.ndarray:
        if rho12.config != self.config:
            raise DimensionMismatch(f"{rho12.config} != {self.config}")
        d = self.channel.config.cutoff
        D = self._work.config.cutoff
        R = rho12.matrix.reshape(d, d, d, d)
        if D > d:
            big = np.zeros((D, D, D, D), dtype=complex)
            big[:d, :d, :d, :d] = R
            R = big
        X = conjugate_by_beamsplitter(R.reshape(D * D, D * D), D, inverse=True).reshape(D, D, D, D)
        K = self._work.kraus
        X = apply_on_mode(K, apply_on_mode(K, X, 0), 1)
        return conjugate_by_beamsplitter(X.reshape(D * D, D * D), D).reshape(D, D, D, D)

    def __call__(self, rho12: FockOperator) -> FockOperator:
        d = self.channel.config.cutoff
        Y = self._padded_output(rho12)
        return FockOperator(Y[:d, :d, :d, :d].reshape(d * d, d * d), self.config)

    def marginal(self, rho1: FockOperator, rho2: FockOperator, keep: int = 0) -> FockOperator:
        """Reduced output on mode ``keep``; the other mode is traced over the full padded space."""
        d = self.channel.config.cutoff
        Y = self._padded_output(rho1.kron(rho2))
        red = np.einsum("ajbj->ab", Y) if keep == 0 else np.einsum("jajb->ab", Y)
        return FockOperator(red[:d, :d], self.channel.config)


def extended_convolution2(channel: KrausChannel) -> ExtendedConvolution:
    return ExtendedConvolution(channel)


def no_signalling_defect(channel: KrausChannel, probes, signal: FockOperator | None = None) -> float:
    """Largest trace distance between mode-1 outputs as the mode-2 input varies over ``probes``."""
    ext = ExtendedConvolution(channel)
    if signal is None:
        signal = coherent_state(0.5, channel.config)
    outs = [ext.marginal(signal, p, keep=0) for p in probes]
    return max((trace_distance(x, y) for i, x in enumerate(outs) for y in outs[i + 1:]), default=0.0)


def marginal_symmetry_defect(channel: KrausChannel, probes) -> float:
    """Largest distance between the ``A2 -> B2`` marginal channel and ``N^{boxplus 2}``.

    Both sides come from the same extended channel: ``N^{boxplus 2}`` is its
    ``A1 -> B1`` marginal with vacuum on ``A2``, so truncation treats them alike.
    """
    ext = ExtendedConvolution(channel)
    vac = fock_state(0, channel.config)
    worst = 0.0
    for p in probes:
        via_a2 = ext.marginal(vac, p, keep=1)
        via_a1 = ext.marginal(p, vac, keep=0)
        worst = max(worst, trace_distance(via_a2, via_a1))
    return worst


def mutual_information(rho12: FockOperator, log_base: float = 2.0) -> float:
    """``S(B1) + S(B2) - S(B1 B2)``."""
    m = rho12.matrix
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    s12 = spectrum_entropy(ev, log_base)
    return von_neumann_entropy(partial_trace(rho12, 0), log_base) + von_neumann_entropy(
        partial_trace(rho12, 1), log_base
    ) - s12


def product_preservation_defect(channel: KrausChannel, rho: FockOperator, sigma: FockOperator) -> float:
    """Mutual information between the two outputs of the extended convolution on ``rho (x) sigma``."""
    return mutual_information(ExtendedConvolution(channel)(rho.kron(sigma)))


def coherent_identity_check(channel: KrausChannel, alpha: complex, convolved: KrausChannel | None = None) -> float:
    """Distance between ``N^{boxplus 2}(|a><a|)`` and ``N(|a/sqrt2><.|)^{boxplus 2}``."""
    cfg = channel.config
    if convolved is None:
        lhs = FockOperator(apply_superop(convolve_superop(channel.superop), coherent_state(alpha, cfg).matrix), cfg)
    else:
        lhs = apply(convolved, coherent_state(alpha, cfg))
    half = apply(channel, coherent_state(alpha / np.sqrt(2), cfg))
    return trace_distance(lhs, state_convolve2(half, half))
