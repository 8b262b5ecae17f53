import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2, kstest

from mnac import capacity as cap
from mnac import codec


def test_signature_length_reference_point():
    p = cap.SystemParams(100, 10_000, 0.0025, 2.0)
    theta = cap.theta(p)
    raw = (1 + 0.2 / math.log(51)) * theta * 100
    assert raw == pytest.approx(93.414, abs=1e-3)
    assert codec.signature_length(p, 0.2, theta, vanishing=False) == 94
    assert codec.signature_length(p, 0.2, theta, vanishing=True) == 20


def test_signature_length_infeasible():
    p = cap.SystemParams(100, 10_000, 0.0025, 2.0)
    with pytest.raises(codec.InfeasibleError):
        codec.signature_length(p, 0.9, cap.theta(p), vanishing=False)
    with pytest.raises(ValueError):
        codec.signature_length(p, 0.0, 0.1, vanishing=True)


def test_codeword_count_reference_points():
    p = cap.SystemParams(100, 10_000, 0.0025, 2.0)
    # C = 0.87344, backoff eps * n / k = 0.8: log M = 0.07344
    assert codec.codeword_count(p, 0.2, vanishing=False) == 2
    q = cap.SystemParams(100, 100, 0.25, 2.0)
    assert codec.codeword_count(q, 0.5, vanishing=True) == 17
    with pytest.raises(codec.InfeasibleError):
        codec.codeword_count(p, 0.5, vanishing=False)


def test_generate_shapes_and_keyed_streams():
    cb = codec.generate(32, 8, 5, 4, 2.0, 1.9, seed=11)
    assert cb.signatures.shape == (4, 8)
    assert cb.message_parts.shape == (4, 24, 5)
    again = codec.generate(32, 8, 5, 4, 2.0, 1.9, seed=11)
    assert cb.same_as(again)
    # user u's codebook does not depend on how many users exist
    more = codec.generate(32, 8, 5, 6, 2.0, 1.9, seed=11)
    np.testing.assert_array_equal(more.signatures[:4], cb.signatures)
    np.testing.assert_array_equal(more.message_parts[:4], cb.message_parts)
    other = codec.generate(32, 8, 5, 4, 2.0, 1.9, seed=12)
    assert not cb.same_as(other)
    with pytest.raises(ValueError):
        cb.signatures[0, 0] = 1.0


def test_codeword_layout():
    cb = codec.generate(16, 4, 3, 2, 2.0, 1.9, seed=1)
    w = cb.codeword(1, 2)
    np.testing.assert_array_equal(w[:4], cb.signatures[1])
    np.testing.assert_array_equal(w[4:], cb.message_parts[1, :, 1])
    assert not cb.codeword(0, 0).any()
    with pytest.raises(ValueError):
        cb.codeword(0, 4)


def test_encode_and_superpose():
    cb = codec.generate(16, 4, 3, 3, 2.0, 1.9, seed=2)
    x = codec.encode(cb, [0, 3, 1])
    assert not x[0].any()
    np.testing.assert_array_equal(x[1], cb.codeword(1, 3))
    np.testing.assert_allclose(codec.superpose(cb, [0, 3, 1]), x.sum(axis=0))
    with pytest.raises(ValueError):
        codec.encode(cb, [0, 4, 1])
    with pytest.raises(ValueError):
        codec.encode(cb, [0, 1])


def test_codeword_entries_are_gaussian_at_p_prime():
    cb = codec.generate(64, 16, 64, 8, 2.0, 1.9, seed=3)
    vals = np.concatenate([cb.signatures.ravel(), cb.message_parts.ravel()]) / math.sqrt(1.9)
    assert kstest(vals, "norm").pvalue > 1e-3


def test_violation_rate_matches_chi_square():
    n, power, p_prime, m = 64, 2.0, 1.9, 16
    exact = codec.power_violation_probability(n, p_prime, power)
    assert exact == pytest.approx(chi2.sf(n / 0.95, n))
    hits, total = 0, 0
    for s in range(40):
        cb = codec.generate(n, 8, m, 8, power, p_prime, seed=s)
        hits += int(cb.violations.sum())
        total += cb.violations.size
    rate = hits / total
    sd = math.sqrt(exact * (1 - exact) / total)
    assert abs(rate - exact) < 5 * sd
    # with P' = 0.95 P most 16-word codebooks hold at least one violator
    assert codec.power_violation_probability(n, p_prime, power, codewords=m) > 0.99
    # a 5% per-user rate at M = 16 needs P' below about 0.6456 P
    assert codec.power_violation_probability(n, 0.645 * power, power, codewords=m) < 0.05
    assert codec.power_violation_probability(n, 0.647 * power, power, codewords=m) > 0.05


def test_resample_policy_complies_and_keeps_the_conditional_law():
    n, n0, m, power, p_prime = 32, 8, 8, 2.0, 1.9
    n_b = n - n0
    u_all, redrawn = [], 0
    for s in range(300):
        plain = codec.generate(n, n0, m, 4, power, p_prime, seed=s)
        cb = codec.generate(n, n0, m, 4, power, p_prime, seed=s, policy=codec.RESAMPLE)
        assert not cb.violations.any()
        assert (cb.codeword_power() <= power * (1 + 1e-12)).all()
        for u in np.flatnonzero(plain.violations.any(axis=1)):
            # given the signature, each message column's energy is chi2 truncated at the room left
            room = n * power - float(cb.signatures[u] @ cb.signatures[u])
            e = (cb.message_parts[u] ** 2).sum(axis=0) / p_prime
            u_all.append(chi2.cdf(e, n_b) / chi2.cdf(room / p_prime, n_b))
            redrawn += 1
    assert redrawn > 50
    assert kstest(np.concatenate(u_all), "uniform").pvalue > 1e-3


def test_resample_leaves_compliant_codewords_untouched():
    a = codec.generate(32, 8, 8, 6, 2.0, 1.9, seed=5)
    b = codec.generate(32, 8, 8, 6, 2.0, 1.9, seed=5, policy=codec.RESAMPLE)
    ok = ~a.violations
    for u in range(6):
        if not a.violations[u].any() or a.signatures[u] @ a.signatures[u] <= 32 * 2.0:
            np.testing.assert_array_equal(a.message_parts[u][:, ok[u]], b.message_parts[u][:, ok[u]])


def test_dump_load_roundtrip(tmp_path):
    cb = codec.generate(24, 6, 4, 3, 2.0, 1.9, seed=2**63 + 5)
    path = tmp_path / "cb.bin"
    codec.dump(cb, path)
    raw = path.read_bytes()
    assert raw[:4] == b"MNAC"
    assert len(raw) == 32 + 16 + 8 * (3 * 6 + 3 * 18 * 4)
    back = codec.load(path)
    assert back.same_as(cb)
    assert back.power == 2.0 and back.p_prime == 1.9
    np.testing.assert_array_equal(back.violations, cb.violations)


def test_load_rejects_corrupt_files(tmp_path):
    cb = codec.generate(24, 6, 4, 3, 2.0, 1.9, seed=1)
    path = tmp_path / "cb.bin"
    codec.dump(cb, path)
    raw = path.read_bytes()
    (tmp_path / "short.bin").write_bytes(raw[:10])
    (tmp_path / "magic.bin").write_bytes(b"XXXX" + raw[4:])
    (tmp_path / "trunc.bin").write_bytes(raw[:-8])
    for name in ("short.bin", "magic.bin", "trunc.bin"):
        with pytest.raises(ValueError):
            codec.load(tmp_path / name)


def test_generate_validation():
    with pytest.raises(ValueError):
        codec.generate(8, 8, 2, 2, 2.0, 1.9, seed=0)
    with pytest.raises(ValueError):
        codec.generate(8, 2, 2, 2, 2.0, 2.5, seed=0)
    with pytest.raises(ValueError):
        codec.generate(8, 2, 2, 2, 2.0, 1.9, seed=0, policy="ignore")


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 40), m=st.integers(1, 6), ell=st.integers(1, 5), seed=st.integers(0, 2**64 - 1),
       margin=st.floats(0.01, 0.9), data=st.data())
def test_resample_always_meets_power(n, m, ell, seed, margin, data):
    n0 = data.draw(st.integers(0, n - 1))
    cb = codec.generate(n, n0, m, ell, 1.0, 1.0 - margin, seed, policy=codec.RESAMPLE)
    assert (cb.codeword_power() <= 1.0 + 1e-12).all()


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 30), m=st.integers(1, 5), ell=st.integers(1, 5), seed=st.integers(0, 2**64 - 1),
       data=st.data())
def test_roundtrip_property(tmp_path_factory, n, m, ell, seed, data):
    n0 = data.draw(st.integers(0, n - 1))
    cb = codec.generate(n, n0, m, ell, 1.0, 0.9, seed)
    path = tmp_path_factory.mktemp("cb") / "x.bin"
    codec.dump(cb, path)
    assert codec.load(path).same_as(cb)
