"""Label algebra against dense-matrix ground truth."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamlearn import gf2, pauli

from conftest import dense_commute


def labels(n):
    return st.integers(min_value=0, max_value=4 ** n - 1)


def test_letter_layout():
    a, n = pauli.from_string("XZIX")
    assert n == 4
    assert [pauli.letter_code(a, i) for i in range(4)] == [1, 3, 0, 1]
    assert pauli.to_string(a, n) == "XZIX"
    assert pauli.to_bitstring(a, n) == "01110001"
    assert pauli.from_bitstring("01110001") == (a, n)


def test_symplectic_examples():
    x, _ = pauli.from_string("X")
    z, _ = pauli.from_string("Z")
    assert pauli.symplectic_product(x, z) == 1
    assert pauli.symplectic_product(z, z) == 0
    a, _ = pauli.from_string("XZIX")
    b, _ = pauli.from_string("ZIII")
    assert pauli.symplectic_product(a, b) == 1


def test_label_add_examples():
    x, _ = pauli.from_string("X")
    z, _ = pauli.from_string("Z")
    y, _ = pauli.from_string("Y")
    assert pauli.label_add(x, z) == y
    assert pauli.label_add(x, x) == 0
    a, _ = pauli.from_string("XZIX")
    b, _ = pauli.from_string("IZIX")
    assert pauli.to_string(pauli.label_add(a, b), 4) == "XIII"


@pytest.mark.parametrize("n", [1, 2, 3])
def test_commutation_matches_dense(n):
    # exhaustive: symplectic product is 0 exactly when matrices commute
    for a in range(4 ** n):
        for b in range(4 ** n):
            assert (pauli.symplectic_product(a, b) == 0) == dense_commute(a, b, n)


@given(st.integers(1, 6).flatmap(
    lambda n: st.tuples(labels(n), labels(n), labels(n))))
def test_symplectic_bilinear_symmetric(abc):
    a, b, c = abc
    assert pauli.symplectic_product(a, b) == pauli.symplectic_product(b, a)
    assert pauli.symplectic_product(a, a) == 0
    lhs = pauli.symplectic_product(pauli.label_add(a, b), c)
    assert lhs == pauli.symplectic_product(a, c) ^ pauli.symplectic_product(b, c)


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(st.just(n), labels(n))))
def test_string_roundtrip(na):
    n, a = na
    text = pauli.to_string(a, n)
    assert len(text) == n
    assert pauli.from_string(text) == (a, n)
    bits = pauli.to_bitstring(a, n)
    assert pauli.from_bitstring(bits) == (a, n)


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(labels(n), labels(n))))
def test_bit_swap_involution_and_duality(ab):
    # <J(u), v>_p equals the plain binary dot product of u and v
    u, v = ab
    assert pauli.bit_swap(pauli.bit_swap(u)) == u
    assert pauli.symplectic_product(pauli.bit_swap(u), v) == gf2.dot(u, v)
    assert pauli.binary_product(u, v) == gf2.dot(u, v)


def test_weight():
    a, n = pauli.from_string("XZIX")
    assert pauli.weight(a, n) == 3
    assert pauli.weight(0, 5) == 0


def test_syndrome_decompose_examples():
    z, _ = pauli.from_string("Z")
    g1 = pauli.StabilizerGroup([z], 1)
    x, _ = pauli.from_string("X")
    assert pauli.syndrome_decompose(x, g1) == 1
    assert pauli.syndrome_decompose(z, g1) == 0

    zi, _ = pauli.from_string("ZI")
    iz, _ = pauli.from_string("IZ")
    g2 = pauli.StabilizerGroup([zi, iz], 2)
    xz, _ = pauli.from_string("XZ")
    # bit k of the syndrome is the product against generator k
    assert pauli.syndrome_decompose(xz, g2) == 0b01
    for member in g2.elements():
        assert pauli.syndrome_decompose(int(member), g2) == 0


def test_stabilizer_group_validation():
    zi, _ = pauli.from_string("ZI")
    zz, _ = pauli.from_string("ZZ")
    xi, _ = pauli.from_string("XI")
    with pytest.raises(ValueError):
        pauli.StabilizerGroup([zi, xi], 2)        # anticommuting pair
    with pytest.raises(ValueError):
        pauli.StabilizerGroup([zi, zi], 2)        # dependent generators
    g = pauli.StabilizerGroup([zi, zz], 2)
    assert len(set(int(e) for e in g.elements())) == 4


@pytest.mark.parametrize("text,gens", [
    ("ZZ", ["ZI", "IZ"]),
    ("IX", ["XI", "IX"]),
    ("YIZ", ["YII", "IXI", "IIZ"]),
])
def test_covering_group(text, gens):
    x, n = pauli.from_string(text)
    g = pauli.covering_group(x, n)
    assert [pauli.to_string(v, n) for v in g.generators] == gens
    assert x in set(int(e) for e in g.elements())
    assert pauli.syndrome_decompose(x, g) == 0


@given(st.integers(1, 5).flatmap(lambda n: st.tuples(st.just(n), labels(n))))
def test_covering_group_contains_x(nx):
    n, x = nx
    g = pauli.covering_group(x, n)
    assert len(g.generators) == n
    assert x in set(int(e) for e in g.elements())


def test_wht_examples():
    vec = np.zeros(4)
    vec[0] = 0.9
    vec[1] = 0.1                                 # X error rate
    f = pauli.wht_forward(vec)
    assert np.allclose(f, [1.0, 1.0, 0.8, 0.8])

    delta = np.zeros(16)
    delta[0] = 1.0
    assert np.allclose(pauli.wht_forward(delta), np.ones(16))


def test_wht_roundtrip(rng):
    for n in range(1, 5):
        p = rng.normal(size=4 ** n)
        assert np.max(np.abs(pauli.wht_inverse(pauli.wht_forward(p)) - p)) < 1e-12


def test_wht_tp_channel_f0(rng):
    # trace preservation: rates sum to 1 so the identity fidelity is exact
    for n in range(1, 4):
        p = rng.random(4 ** n)
        p /= p.sum()
        assert pauli.wht_forward(p)[0] == pytest.approx(1.0, abs=1e-14)


def test_wht_capacity_cap():
    with pytest.raises(ValueError):
        pauli.wht_forward(np.zeros(4 ** 9))


def test_validate_label():
    with pytest.raises(ValueError):
        pauli.validate_label(-1, 2)
    with pytest.raises(ValueError):
        pauli.validate_label(16, 2)
    pauli.validate_label(15, 2)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 31 - 1))
def test_random_full_rank_is_full_rank(seed):
    rng = np.random.default_rng(seed)
    cols = gf2.random_full_rank(rng, dim=8, count=4)
    assert gf2.rank(cols) == 4
