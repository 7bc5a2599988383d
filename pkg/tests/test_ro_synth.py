import itertools

import numpy as np
import pytest

from puflab.delay import InvalidInput, random_challenges, respond
from puflab.ro_synth import (
    RoTableError,
    load_table,
    make_synthetic_table,
    random_assignment,
    reference_response,
    reliability_from_repeats,
    repeated_responses,
    ro_dataset,
    ro_unreliability,
    stage_delays,
    synthesize_weights,
    table_from_rows,
    weights_from_delays,
    write_table,
)

from oracles import telescoping_response

HEADER = "device,ro,temp_c,rep,freq_hz\n"


def test_load_three_rows(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(HEADER + "d0,0,25,1,2.0e8\nd0,1,25,1,2.1e8\nd0,2,55,1,1.9e8\n")
    table = load_table(p)
    assert len(table) == 3
    assert table.frequency("d0", 1, 25, 1) == 2.1e8
    assert table.devices() == ["d0"]


@pytest.mark.parametrize("body, match", [
    ("d0,0,25,1,0\n", "positive"),
    ("d0,0,25,1,-3\n", "positive"),
    ("d0,0,25,1,1e8\nd0,0,25.0,1,2e8\n", "duplicate"),
    ("d0,0,25,1\n", ":2:"),
    ("d0,x,25,1,1e8\n", ":2:"),
])
def test_load_rejects(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(HEADER + body)
    with pytest.raises(RoTableError, match=match):
        load_table(p)


def test_load_rejects_bad_header(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("ro,device,temp_c,rep,freq_hz\n")
    with pytest.raises(RoTableError, match=":1:"):
        load_table(p)


def test_write_load_round_trip(tmp_path):
    table = make_synthetic_table(ros=16, reps=2, seed=3)
    write_table(table, tmp_path / "t.csv")
    assert load_table(tmp_path / "t.csv").entries == table.entries


def test_equal_delays_give_zero_weights():
    t = np.repeat(np.array([[3.0], [5.0], [7.0]]), 4, axis=1)
    assert np.array_equal(weights_from_delays(t), np.zeros(4))


def test_hand_example():
    w = weights_from_delays([[4, 3, 1, 2], [4, 3, 1, 2]])
    assert w.tolist() == [0.0, 2.0, 2.0]


def test_delays_are_reciprocals_and_length():
    rows = [("d", r, 25, 1, 1.0 / t) for r, t in enumerate([4, 3, 1, 2, 4, 3, 1, 2])]
    table = table_from_rows(rows)
    d = stage_delays(table, "d", 25, 1, range(8))
    assert np.allclose(d, [[4, 3, 1, 2]] * 2, rtol=1e-15)
    w = synthesize_weights(table, "d", 25, 1, range(8))
    assert len(w) == 3 and np.allclose(w, [0, 2, 2])
    with pytest.raises(InvalidInput):
        stage_delays(table, "d", 25, 1, range(6))
    with pytest.raises(RoTableError):
        synthesize_weights(table, "d", 55, 1, range(8))


def test_frequency_scaling_invariance():
    table = make_synthetic_table(ros=64, reps=1, seed=1)
    scaled = table_from_rows([(*k, f * 3.0) for k, f in table.entries.items()])
    assign = random_assignment(table, "dev0", 16, seed=2)
    w = synthesize_weights(table, "dev0", 25, 1, assign)
    ws = synthesize_weights(scaled, "dev0", 25, 1, assign)
    assert np.allclose(ws, w / 3.0, rtol=1e-12, atol=0)
    c = random_challenges(16, 2000, np.random.default_rng(0))
    assert np.array_equal(respond(w, c), respond(ws, c))


@pytest.mark.parametrize("n", range(1, 9))
def test_telescoping_oracle_exhaustive(n):
    delays = 1.0 / np.random.default_rng(n).uniform(1.9e8, 2.1e8, size=(n, 4))
    w = weights_from_delays(delays)
    allc = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.uint8)
    assert respond(w, allc).tolist() == [telescoping_response(delays, c) for c in allc]


def test_synthesis_deterministic():
    table = make_synthetic_table(ros=64, reps=2, seed=4)
    a = random_assignment(table, "dev0", 16, seed=9, temps=(25, 55))
    assert np.array_equal(a, random_assignment(table, "dev0", 16, seed=9, temps=(25, 55)))
    assert len(set(a.tolist())) == 64
    c = random_challenges(16, 100, np.random.default_rng(1))
    w1 = synthesize_weights(table, "dev0", 55, 2, a)
    assert np.array_equal(respond(w1, c), respond(synthesize_weights(table, "dev0", 55, 2, a), c))
    with pytest.raises(RoTableError):
        random_assignment(table, "dev0", 17, seed=0)


def test_same_temperature_identical_repeats():
    base = make_synthetic_table(ros=32, reps=1, temps=(25.0,), seed=5)
    rows = [(d, r, t, rep, f) for (d, r, t, _), f in base.entries.items() for rep in range(1, 11)]
    table = table_from_rows(rows)
    a = random_assignment(table, "dev0", 8, seed=0)
    c = random_challenges(8, 256, np.random.default_rng(2))
    counts = reliability_from_repeats(table, "dev0", 25, 25, a, c, 10)
    assert set(np.unique(counts)) <= {0, 10}
    assert np.array_equal(counts, 10 * reference_response(table, "dev0", 25, a, c))


def test_counts_in_range_and_missing_reps():
    table = make_synthetic_table(ros=64, reps=10, seed=6)
    a = random_assignment(table, "dev0", 16, seed=1, temps=(25, 55))
    c = random_challenges(16, 500, np.random.default_rng(3))
    counts = reliability_from_repeats(table, "dev0", 25, 55, a, c, 10)
    assert counts.min() >= 0 and counts.max() <= 10
    assert isinstance(reliability_from_repeats(table, "dev0", 25, 55, a, c[0], 10), int)
    with pytest.raises(RoTableError):
        repeated_responses(table, "dev0", 55, a, c, 11)
    with pytest.raises(RoTableError):
        reliability_from_repeats(table, "dev0", 40, 55, a, c, 10)


def test_synthetic_unreliability_is_small():
    table = make_synthetic_table(seed=0)
    a = random_assignment(table, "dev0", 128, seed=0, temps=(25, 55))
    c = random_challenges(128, 10_000, np.random.default_rng(0))
    u = ro_unreliability(table, "dev0", 25, 55, a, c, 10)
    assert 0 < u < 0.065


def test_ro_dataset_layout():
    table = make_synthetic_table(ros=64, seed=2)
    ds = ro_dataset(table, "dev0", 16, 300, seed=1)
    assert ds.challenges.shape == (300, 16)
    assert np.array_equal(ds.power, ds.response)
    assert ds.rel_count.max() <= 10 and ds.meta.L == 1
    assert len(ds.meta.extra["assignment"]) == 64
