import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_density
from diqkd.numkernel import DensityOperator
from diqkd.photonics import (
    ModeRegister,
    PhotonicState,
    SourceParams,
    attenuation_kraus,
    click_weights,
    fock_transform,
    loss_channel,
    pair_register,
    sector_weights,
    spdc_state,
    threshold_detect,
    to_circular_basis,
    to_linear_basis,
)

seeds = st.integers(0, 2**32 - 1)
etas = st.floats(0.0, 1.0)


def creation(cutoff):
    return np.diag(np.sqrt(np.arange(1, cutoff + 1)), -1)


def pair_operator_source(p, order, cutoff):
    """Oracle: build K^dag from explicit creation matrices on four modes."""
    ad = creation(cutoff)
    eye = np.eye(cutoff + 1)

    def on(k):
        ops = [eye] * 4
        ops[k] = ad
        out = ops[0]
        for o in ops[1:]:
            out = np.kron(out, o)
        return out

    k_dag = (on(0) @ on(2) + on(1) @ on(3)) / np.sqrt(2)
    vac = np.zeros((cutoff + 1) ** 4)
    vac[0] = 1.0
    psi = sum(p ** (n / 2) * np.linalg.matrix_power(k_dag, n) @ vac for n in range(order + 1))
    return psi / np.linalg.norm(psi)


def single_photon(loc="A", pol="R", cutoff=1):
    """One photon in (loc, pol), vacuum in the partner polarisation mode."""
    other = {"R": "L", "L": "R", "H": "V", "V": "H"}[pol]
    d = cutoff + 1
    ket = np.zeros(d * d)
    ket[1 * d + 0] = 1.0
    return DensityOperator.from_ket(ket, [(loc, pol), (loc, other)], [d, d])


def test_source_off_is_vacuum():
    state = spdc_state(SourceParams(0.0))
    assert state.weight(0) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("p", [1e-6, 1e-3, 0.01, 0.2, 0.5])
def test_single_pair_to_vacuum_ratio_is_p(p):
    state = spdc_state(SourceParams(p, order=2))
    assert state.weight(2) / state.weight(0) == pytest.approx(p, rel=1e-12)


def test_two_pair_weight_carries_bosonic_factor():
    p = 0.01
    state = spdc_state(SourceParams(p, order=2))
    # K^2|vac> = |2020> + |1111> + |0202>, squared norm 3
    assert state.weight(4) / state.weight(2) == pytest.approx(3 * p, rel=1e-12)


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("p", [0.0, 0.003, 0.2])
def test_source_matches_creation_operator_oracle(order, p):
    state = spdc_state(SourceParams(p, order=order), pair_register(order=2))
    np.testing.assert_allclose(state.ket(), pair_operator_source(p, order, 2), atol=1e-14)


def test_single_pair_is_phi_plus():
    state = spdc_state(SourceParams(0.5, order=1), pair_register(order=1))
    amps = {k: v for k, v in state.amplitudes.items() if abs(v) > 0 and sum(k) == 2}
    norm = np.sqrt(sum(abs(v) ** 2 for v in amps.values()))
    assert set(amps) == {(1, 0, 1, 0), (0, 1, 0, 1)}
    for v in amps.values():
        assert v / norm == pytest.approx(1 / np.sqrt(2))


def test_sector_weights_sum_to_one():
    w = sector_weights(0.1, 2)
    assert w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(w / w[0], [1, 0.1, 3 * 0.01])


def test_register_validation():
    with pytest.raises(ValueError):
        ModeRegister((("A", "R"), ("A", "R")))
    with pytest.raises(ValueError):
        ModeRegister((("A", "X"),))
    with pytest.raises(ValueError):
        spdc_state(SourceParams(0.1), ModeRegister((("A", "R"), ("A", "L"))))
    with pytest.raises(ValueError):
        SourceParams(0.6)
    with pytest.raises(ValueError):
        SourceParams(0.1, order=3)


def test_state_norm_bound():
    reg = ModeRegister((("A", "R"),), truncation=1, cutoff=1)
    with pytest.raises(ValueError):
        PhotonicState(reg, {(1,): 1.1})


def test_loss_identity_and_full_loss():
    rho = single_photon()
    assert np.allclose(loss_channel(rho, [("A", "R")], 1.0).data, rho.data)
    out = loss_channel(rho, [("A", "R")], 0.0)
    assert out.data[0, 0].real == pytest.approx(1.0)


@given(etas)
def test_single_photon_survival(eta):
    out = loss_channel(single_photon(), [("A", "R")], eta).partial_trace([("A", "R")])
    np.testing.assert_allclose(np.diag(out.data).real, [1 - eta, eta], atol=1e-14)


def test_loss_rejects_bad_eta():
    with pytest.raises(ValueError):
        loss_channel(single_photon(), [("A", "R")], 1.5)


def test_attenuation_kraus_complete():
    for eta in (0.0, 0.3, 1.0):
        ks = attenuation_kraus(eta, 3)
        np.testing.assert_allclose(sum(k.conj().T @ k for k in ks), np.eye(4), atol=1e-14)


@given(seeds, etas)
def test_loss_trace_preserving_and_positive(seed, eta):
    rng = np.random.default_rng(seed)
    modes = [("A", "R"), ("A", "L")]
    rho = random_density(rng, modes, [3, 3])
    out = loss_channel(rho, modes, eta)
    assert abs(out.trace() - 1) < 1e-12
    assert out.min_eigenvalue() >= -1e-10


@given(seeds, etas, etas)
def test_loss_composes_multiplicatively(seed, e1, e2):
    rng = np.random.default_rng(seed)
    modes = [("A", "R"), ("B", "R")]
    rho = random_density(rng, modes, [3, 3])
    twice = loss_channel(loss_channel(rho, modes, e1), modes, e2)
    np.testing.assert_allclose(twice.data, loss_channel(rho, modes, e1 * e2).data, atol=1e-10)


def test_right_circular_in_linear_basis():
    out = to_linear_basis(single_photon("A", "R"), [("A", "R"), ("A", "L")])
    assert out.labels == (("A", "H"), ("A", "V"))
    d = 2
    ket_h, ket_v = 1 * d + 0, 0 * d + 1
    # |R> = (|H> + i|V>)/sqrt 2
    expected = np.zeros(4, dtype=complex)
    expected[ket_h], expected[ket_v] = 1 / np.sqrt(2), 1j / np.sqrt(2)
    np.testing.assert_allclose(out.data, np.outer(expected, expected.conj()), atol=1e-15)


def test_two_photons_bunch_in_linear_basis():
    # a_R^dag a_L^dag |0> = (a_H^dag^2 + a_V^dag^2)/2 |0>
    ket = np.zeros(9)
    ket[1 * 3 + 1] = 1.0
    rho = DensityOperator.from_ket(ket, [("A", "R"), ("A", "L")], [3, 3])
    out = to_linear_basis(rho, [("A", "R"), ("A", "L")])
    expected = np.zeros(9)
    expected[2 * 3 + 0] = expected[0 * 3 + 2] = 1 / np.sqrt(2)
    np.testing.assert_allclose(out.data, np.outer(expected, expected), atol=1e-14)


def test_vacuum_unchanged_by_basis_change():
    ket = np.zeros(9)
    ket[0] = 1
    rho = DensityOperator.from_ket(ket, [("A", "R"), ("A", "L")], [3, 3])
    out = to_linear_basis(rho, [("A", "R"), ("A", "L")])
    np.testing.assert_allclose(out.data, rho.data, atol=1e-15)


def test_linear_photon_round_trip():
    h = single_photon("A", "H")
    back = to_linear_basis(to_circular_basis(h, [("A", "H"), ("A", "V")]), [("A", "R"), ("A", "L")])
    np.testing.assert_allclose(back.data, h.data, atol=1e-12)


def test_basis_change_needs_a_pair():
    rho = DensityOperator(np.eye(9) / 9, [("A", "R"), ("B", "L")], [3, 3])
    with pytest.raises(ValueError):
        to_linear_basis(rho, [("A", "R"), ("B", "L")])


def test_basis_change_rejects_population_above_cutoff():
    ket = np.zeros(4)
    ket[3] = 1  # |1,1> with per-mode cutoff 1
    rho = DensityOperator.from_ket(ket, [("A", "R"), ("A", "L")], [2, 2])
    with pytest.raises(ValueError):
        to_linear_basis(rho, [("A", "R"), ("A", "L")])


@given(seeds)
def test_fock_transform_unitary_on_representable_block(seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    u, _ = np.linalg.qr(z)
    f = fock_transform(u, 2)
    np.testing.assert_allclose(f.conj().T @ f, np.eye(9), atol=1e-12)
    # composition: F(u v) = F(u) F(v) on the block with <= 2 photons
    v, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    np.testing.assert_allclose(fock_transform(u @ v, 2), f @ fock_transform(v, 2), atol=1e-12)


def test_click_weights_examples():
    np.testing.assert_allclose(click_weights(0.855, 2), [0.0, 0.855, 0.978975], atol=1e-15)


def test_threshold_detect_examples():
    vac = np.zeros(4)
    vac[0] = 1
    rho = DensityOperator.from_ket(vac, [("A", "H"), ("A", "V")], [2, 2])
    assert threshold_detect(rho, ("A", "H"), 0.7)["click"][0] == 0
    res = threshold_detect(single_photon("A", "H"), ("A", "H"), 0.7)
    assert res["click"][0] == pytest.approx(0.7)
    assert res["click"][1].labels == (("A", "V"),)

    ket = np.zeros(9)
    ket[2 * 3] = 1
    two = DensityOperator.from_ket(ket, [("A", "H"), ("A", "V")], [3, 3])
    assert threshold_detect(two, ("A", "H"), 0.855)["click"][0] == pytest.approx(0.978975, abs=1e-15)


@given(seeds, etas)
def test_threshold_probabilities_sum_to_one(seed, eta):
    rng = np.random.default_rng(seed)
    rho = random_density(rng, [("A", "H"), ("A", "V")], [3, 3])
    res = threshold_detect(rho, ("A", "H"), eta)
    assert abs(res["click"][0] + res["noclick"][0] - 1) < 1e-12
    for prob, state in res.values():
        if state is not None:
            assert abs(state.trace() - 1) < 1e-12


@given(seeds)
def test_detection_unaffected_by_basis_change_elsewhere(seed):
    rng = np.random.default_rng(seed)
    modes = [("A", "H"), ("A", "V"), ("B", "R"), ("B", "L")]
    rho = random_density(rng, modes, [2, 2, 2, 2], rank=2)
    # keep B within the representable (<= 1 photon) block
    proj = np.diag([1, 1, 1, 0]).astype(complex)
    rho = rho.apply(proj, [("B", "R"), ("B", "L")]).normalized()
    before = threshold_detect(rho, ("A", "H"), 0.6)["click"][0]
    after = threshold_detect(to_linear_basis(rho, modes[2:]), ("A", "H"), 0.6)["click"][0]
    assert abs(before - after) < 1e-12
