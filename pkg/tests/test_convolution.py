import numpy as np
import pytest

import oracles
from bosonic_clt.channels import (
    KrausChannel,
    additive_noise_channel,
    apply,
    apply_superop,
    completeness_defect,
    dephasing_channel,
    identity_channel,
    pure_loss,
    random_cptp_channel,
    replacement_channel,
    two_point_noise,
    von_mises,
)
from bosonic_clt.convolution import (
    ConvolutionPlan,
    ExtendedConvolution,
    KrausExplosion,
    channel_convolve2,
    channel_convolve_pow2,
    coherent_identity_check,
    convolve_superop,
    kraus_convolve2_direct,
    marginal_symmetry_defect,
    mutual_information,
    no_signalling_defect,
    product_preservation_defect,
    state_convolve2,
    state_convolve_pow2,
)
from bosonic_clt.fock import (
    DimensionMismatch,
    FockOperator,
    FockSpaceConfig,
    coherent_state,
    fock_state,
    random_state,
    thermal_state,
    trace_distance,
)


def test_vacuum_is_fixed():
    vac = fock_state(0, 8)
    assert trace_distance(state_convolve2(vac, vac), vac) < 1e-14


def test_thermal_fixed_point():
    sigma = thermal_state(1.0, 20)
    assert trace_distance(state_convolve2(sigma, sigma), sigma) < 1e-7


def test_single_photon_pair():
    out = state_convolve2(fock_state(1, 6), fock_state(1, 6))
    ref = np.zeros((6, 6))
    ref[0, 0] = ref[2, 2] = 0.5
    assert np.allclose(out.matrix, ref, atol=1e-14)


def test_coherent_pair_convolves_to_coherent():
    a, b = 0.5 + 0.2j, -0.3
    out = state_convolve2(coherent_state(a, 24), coherent_state(b, 24))
    assert trace_distance(out, coherent_state((a + b) / np.sqrt(2), 24)) < 1e-9


def test_state_convolution_checks_configs():
    with pytest.raises(DimensionMismatch):
        state_convolve2(fock_state(0, 4), fock_state(0, 5))


def test_state_power_iterates():
    rho = coherent_state(0.4, 12)
    twice = state_convolve2(state_convolve2(rho, rho), state_convolve2(rho, rho))
    assert np.allclose(state_convolve_pow2(rho, 2).matrix, twice.matrix)


@pytest.mark.parametrize(
    "make",
    [
        lambda c: pure_loss(0.6, c),
        lambda c: dephasing_channel(von_mises(1.5, M=64), c),
    ],
    ids=["pure_loss", "dephasing"],
)
def test_superop_matches_literal_kraus_oracle(make, rng):
    # photon-number non-increasing channels only meet complete beamsplitter sectors
    d = 6
    cfg = FockSpaceConfig(d)
    ch = make(cfg)
    U = oracles.beamsplitter_expm(d, d)
    ops = oracles.literal_convolved_kraus(ch.kraus, U)
    F = convolve_superop(ch.superop)
    for _ in range(4):
        rho = random_state(cfg, rng=rng).matrix
        ref = sum(A @ rho @ A.conj().T for A in ops)
        assert np.max(np.abs(apply_superop(F, rho) - ref)) < 1e-12


def test_superop_matches_library_literal_path(rng):
    cfg = FockSpaceConfig(5)
    ch = random_cptp_channel(cfg, rank=1, rng=rng)
    direct = KrausChannel(kraus_convolve2_direct(ch), cfg)
    F = convolve_superop(ch.superop)
    assert np.max(np.abs(direct.superop - F)) < 1e-12


def test_identity_is_fixed():
    cfg = FockSpaceConfig(10)
    out = channel_convolve2(identity_channel(cfg))
    assert np.max(np.abs(out.superop - identity_channel(cfg).superop)) < 1e-10
    assert out.rank == 1


def test_replacement_convolves_to_replacement(rng):
    cfg = FockSpaceConfig(10)
    rho = random_state(cfg, rng=rng, max_level=4)
    conv = channel_convolve2(replacement_channel(rho))
    target = state_convolve2(rho, rho)
    for _ in range(5):
        assert trace_distance(apply(conv, random_state(cfg, rng=rng)), target) < 1e-8


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0j, -0.7 + 0.7j])
def test_pure_loss_is_fixed(alpha):
    cfg = FockSpaceConfig(20)
    ch = pure_loss(0.6, cfg)
    conv = channel_convolve2(ch)
    rho = coherent_state(alpha, cfg)
    assert trace_distance(apply(conv, rho), apply(ch, rho)) < 1e-7


def test_kraus_count_and_completeness():
    cfg = FockSpaceConfig(10)
    conv = channel_convolve2(dephasing_channel(von_mises(2.0), cfg))
    assert conv.rank <= 100
    assert completeness_defect(conv) < 1e-10
    assert conv.meta["parent_label"] == "dephasing"


def test_kraus_explosion_is_reported():
    with pytest.raises(KrausExplosion, match="prune"):
        channel_convolve2(dephasing_channel(von_mises(2.0), 8), max_kraus=3)


def test_power_of_two_bookkeeping():
    cfg = FockSpaceConfig(8)
    ch = dephasing_channel(von_mises(2.0), cfg)
    assert channel_convolve_pow2(ch, 0) is ch
    two = channel_convolve_pow2(ch, 2)
    again = channel_convolve2(channel_convolve2(ch))
    assert np.max(np.abs(two.superop - again.superop)) < 1e-13
    hist = two.meta["history"]
    assert [h["k"] for h in hist] == [0, 1, 2]
    assert all(h["completeness_defect"] < 1e-10 for h in hist)
    with pytest.raises(ValueError):
        channel_convolve_pow2(ch, 11)
    with pytest.raises(ValueError):
        ConvolutionPlan(ch, -1)


def test_power_matches_coherent_shortcut():
    cfg = FockSpaceConfig(12)
    ch = dephasing_channel(von_mises(2.0), cfg)
    four = channel_convolve_pow2(ch, 2)
    alpha = 0.8
    short = state_convolve_pow2(apply(ch, coherent_state(alpha / 2, cfg)), 2)
    assert trace_distance(apply(four, coherent_state(alpha, cfg)), short) < 1e-7


def test_extended_marginal_with_vacuum_is_convolution(rng):
    cfg = FockSpaceConfig(8)
    ch = dephasing_channel(von_mises(2.0), cfg)
    ext = ExtendedConvolution(ch, padding=0)
    conv = channel_convolve2(ch)
    vac = fock_state(0, cfg)
    for _ in range(3):
        rho = random_state(cfg, rng=rng, max_level=5)
        assert trace_distance(ext.marginal(rho, vac, 0), apply(conv, rho)) < 1e-9


def test_extended_convolution_checks_config():
    ext = ExtendedConvolution(identity_channel(4))
    with pytest.raises(DimensionMismatch):
        ext(fock_state(0, FockSpaceConfig(5).double()))


def test_padding_only_for_rebuildable_channels(rng):
    assert ExtendedConvolution(pure_loss(0.5, 6)).padding == 5
    assert ExtendedConvolution(random_cptp_channel(6, rank=1, rng=rng)).padding == 0


def test_no_signalling():
    cfg = FockSpaceConfig(12)
    probes = [fock_state(0, cfg), coherent_state(0.7, cfg), thermal_state(0.5, cfg)]
    assert no_signalling_defect(identity_channel(cfg), probes) < 1e-10
    assert no_signalling_defect(additive_noise_channel(two_point_noise(0.5), cfg), probes) < 1e-8
    deph = no_signalling_defect(dephasing_channel(von_mises(2.0), cfg), probes)
    assert deph > 1e-3


def test_marginal_symmetry_for_even_noise():
    cfg = FockSpaceConfig(12)
    probes = [fock_state(0, cfg), coherent_state(0.7, cfg), thermal_state(0.5, cfg)]
    assert marginal_symmetry_defect(additive_noise_channel(two_point_noise(0.5), cfg), probes) < 1e-8


def test_product_preservation():
    cfg = FockSpaceConfig(12)
    r, s = coherent_state(0.8, cfg), fock_state(0, cfg)
    assert product_preservation_defect(identity_channel(cfg), fock_state(1, cfg), thermal_state(0.3, cfg)) < 1e-8
    assert product_preservation_defect(pure_loss(0.5, cfg), r, s) < 1e-7
    assert product_preservation_defect(dephasing_channel(von_mises(2.0), cfg), coherent_state(1.0, cfg), s) > 1e-3


def test_mutual_information_of_product_is_zero(rng):
    cfg = FockSpaceConfig(5)
    joint = random_state(cfg, rng=rng).kron(random_state(cfg, rng=rng))
    assert mutual_information(joint) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_coherent_identity(alpha):
    cfg = FockSpaceConfig(16)
    for ch in (dephasing_channel(von_mises(2.0), cfg), additive_noise_channel(two_point_noise(0.5), cfg)):
        assert coherent_identity_check(ch, alpha) < 1e-7


def test_outputs_stay_positive():
    cfg = FockSpaceConfig(12)
    conv = channel_convolve_pow2(dephasing_channel(von_mises(2.0), cfg), 2)
    out = apply(conv, coherent_state(1.0, cfg))
    assert np.linalg.eigvalsh(out.matrix)[0] > -1e-8
    assert abs(out.trace() - 1) < 1e-6


def test_marginal_symmetry_flags_odd_scaling_function():
    from bosonic_clt.channels import NoiseDistribution

    cfg = FockSpaceConfig(10)
    probes = [fock_state(0, cfg), coherent_state(0.7, cfg), thermal_state(0.5, cfg)]
    skewed = NoiseDistribution([0.5, -0.25, -0.25 + 0.3j, -0.3j], [0.25] * 4)
    assert marginal_symmetry_defect(additive_noise_channel(skewed, cfg), probes) > 1e-3
