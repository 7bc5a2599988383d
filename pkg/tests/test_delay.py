import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puflab.delay import (
    InvalidInput,
    NoiseSpec,
    delay_difference,
    parity_vector,
    random_challenges,
    respond,
    respond_noisy,
    sample_apuf_weights,
)

bits = st.lists(st.integers(0, 1), min_size=1, max_size=40)


def test_parity_all_zero():
    assert parity_vector([0, 0, 0, 0]).tolist() == [1, 1, 1, 1, 1]


def test_parity_hand_example():
    assert parity_vector([1, 0, 1]).tolist() == [1, -1, -1, 1]


def test_parity_rejects_empty_and_non_binary():
    with pytest.raises(InvalidInput):
        parity_vector([])
    with pytest.raises(InvalidInput):
        parity_vector([0, 2, 1])


@given(bits)
def test_parity_entries_are_signs(c):
    phi = parity_vector(c)
    assert phi.shape == (len(c) + 1,)
    assert set(np.unique(phi)) <= {-1.0, 1.0}
    assert phi[-1] == 1.0


@given(bits)
def test_flipping_first_bit_negates_only_first_entry(c):
    flipped = list(c)
    flipped[0] ^= 1
    a, b = parity_vector(c), parity_vector(flipped)
    assert b[0] == -a[0]
    assert np.array_equal(a[1:], b[1:])


@pytest.mark.parametrize("n", range(1, 9))
def test_flip_negates_prefix_exhaustive(n):
    for c in itertools.product((0, 1), repeat=n):
        phi = parity_vector(c)
        for j in range(n):
            other = list(c)
            other[j] ^= 1
            psi = parity_vector(other)
            assert np.array_equal(psi[: j + 1], -phi[: j + 1])
            assert np.array_equal(psi[j + 1:], phi[j + 1:])


@pytest.mark.parametrize("n", [1, 5, 12])
def test_parity_injective(n):
    allc = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)
    phi = parity_vector(allc)
    assert len({row.tobytes() for row in phi}) == len(allc)


def test_batch_matches_rows():
    c = random_challenges(16, 50, np.random.default_rng(3))
    batch = parity_vector(c)
    for i in range(50):
        assert np.array_equal(batch[i], parity_vector(c[i]))


def test_weights_deterministic_and_validated():
    a = sample_apuf_weights(128, 0, 1, np.random.default_rng(9))
    b = sample_apuf_weights(128, 0, 1, np.random.default_rng(9))
    assert a.shape == (129,) and np.array_equal(a, b)
    with pytest.raises(InvalidInput):
        sample_apuf_weights(4, 0, 0, np.random.default_rng(0))
    with pytest.raises(InvalidInput):
        sample_apuf_weights(0, 0, 1, np.random.default_rng(0))


def test_weights_pooled_mean_near_zero():
    rng = np.random.default_rng(12)
    pooled = np.concatenate([sample_apuf_weights(128, 0, 1, rng) for _ in range(7752)])
    assert pooled.size >= 1_000_000
    assert abs(pooled.mean()) < 0.01


def test_delay_difference_cases():
    phi = parity_vector([1, 0, 1])
    assert delay_difference(np.zeros(4), phi) == 0
    assert delay_difference(phi, phi) == 4
    assert delay_difference([1, 2, 3, 4], phi) == 0
    with pytest.raises(InvalidInput):
        delay_difference([1, 2, 3], phi)


@given(bits)
def test_constant_weight_forces_response(c):
    w = np.zeros(len(c) + 1)
    w[-1] = -1
    assert respond(w, c) == 1
    w[-1] = 1
    assert respond(w, c) == 0


def test_tie_maps_to_zero():
    assert respond([1, 2, 3, 4], [1, 0, 1]) == 0


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_negated_weights_flip_response(seed):
    rng = np.random.default_rng(seed)
    w = sample_apuf_weights(20, 0, 1, rng)
    c = random_challenges(20, 64, rng)
    delta = parity_vector(c) @ w
    keep = delta != 0
    assert np.array_equal(respond(-w, c)[keep], 1 - respond(w, c)[keep])


def test_zero_noise_is_noise_free():
    rng = np.random.default_rng(0)
    w = sample_apuf_weights(32, 0, 1, rng)
    c = random_challenges(32, 500, rng)
    assert np.array_equal(respond_noisy(w, c, NoiseSpec(0, 0), rng), respond(w, c))


def test_noisy_reproducible():
    w = sample_apuf_weights(32, 0, 1, np.random.default_rng(1))
    c = random_challenges(32, 200, np.random.default_rng(2))
    a = respond_noisy(w, c, NoiseSpec(0, 0.5), np.random.default_rng(7))
    b = respond_noisy(w, c, NoiseSpec(0, 0.5), np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_flip_probability_matches_analytic_value():
    # Per query the flip chance is P(|N(0, s^2 (n+1))| > |delta|) with delta ~ N(0, n+1);
    # averaged over challenges that is arctan(s) / pi.
    rng = np.random.default_rng(5)
    w = sample_apuf_weights(128, 0, 1, rng)
    c = random_challenges(128, 10_000, rng)
    ref = respond(w, c)
    flips = np.mean([np.mean(respond_noisy(w, c, NoiseSpec(0, 0.05), rng) != ref) for _ in range(20)])
    assert abs(flips - np.arctan(0.05) / np.pi) < 0.004


def test_large_margin_never_flips():
    rng = np.random.default_rng(8)
    n, s = 64, 0.05
    w = sample_apuf_weights(n, 0, 1, rng)
    w[-1] = 10 * s * np.sqrt(n + 1) + np.abs(w[:-1]).sum() + 1.0
    c = random_challenges(n, 50, rng)
    assert np.all(respond(w, c) == 0)
    for _ in range(100):
        assert np.all(respond_noisy(w, c, NoiseSpec(0, s), rng) == 0)


def test_noise_spec_validation():
    with pytest.raises(InvalidInput):
        NoiseSpec(0, -0.1)
    with pytest.raises(InvalidInput):
        NoiseSpec(float("nan"), 0.1)
    assert NoiseSpec().is_null
