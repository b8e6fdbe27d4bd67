import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbvoc import durian
from mbvoc.errors import ParseError, ValidationError

from . import oracles


def test_parse_example():
    seq = durian.parse_symbols(["j", "in", "#S", "t", "ian", "#1"])
    assert len(seq) == 6
    assert seq.num_phonemes == 4
    assert seq.tokens() == ["j", "in", "#S", "t", "ian", "#1"]


def test_parse_single_phoneme():
    seq = durian.parse_symbols(["a"])
    assert (len(seq), seq.num_phonemes) == (1, 1)


def test_adjacent_same_level_rejected():
    with pytest.raises(ParseError) as info:
        durian.parse_symbols(["#S", "#S"])
    assert info.value.position == 1


def test_adjacent_different_levels_allowed():
    assert durian.parse_symbols(["a", "#S", "#1", "b"]).num_phonemes == 2


@pytest.mark.parametrize("tokens,pos", [(["a", "#4"], 1), (["#", "a"], 0), (["a", "b", "#s"], 2), ([], 0)])
def test_unknown_boundary_position(tokens, pos):
    with pytest.raises(ParseError) as info:
        durian.parse_symbols(tokens)
    assert info.value.position == pos


def test_skip_filter_example():
    seq = durian.parse_symbols(["a", "b", "#S", "c", "#1"])
    states = np.arange(5.0)[:, None] * [1, 10]
    out = durian.skip_filter(states, seq)
    np.testing.assert_array_equal(out, states[[0, 1, 3]])


def test_skip_filter_identity_and_empty():
    seq = durian.parse_symbols(["a", "b"])
    s = np.eye(2)
    np.testing.assert_array_equal(durian.skip_filter(s, seq), s)
    only = durian.parse_symbols(["#S", "#1", "#S"])
    empty = durian.skip_filter(np.ones((3, 2)), only)
    assert empty.shape == (0, 2)
    with pytest.raises(ValidationError):
        durian.state_expand(empty, [])


def test_skip_filter_length_mismatch():
    with pytest.raises(ValidationError):
        durian.skip_filter(np.ones((2, 3)), durian.parse_symbols(["a"]))


def test_expand_example():
    a, b = [1.0, 2.0], [3.0, 4.0]
    out = durian.state_expand([a, b], [2, 1])
    np.testing.assert_array_equal(out, [[1, 2, 0.5], [1, 2, 1.0], [3, 4, 1.0]])


def test_expand_all_ones_is_identity():
    s = np.random.default_rng(0).standard_normal((5, 3))
    out = durian.state_expand(s, [1] * 5)
    np.testing.assert_array_equal(out[:, :3], s)
    assert np.all(out[:, 3] == 1.0)


def test_zero_durations_skip_phonemes():
    out = durian.state_expand([[1.0], [2.0], [3.0]], [2, 0, 1])
    np.testing.assert_array_equal(out, [[1, 0.5], [1, 1.0], [3, 1.0]])


@pytest.mark.parametrize("d", [[-1, 2], [0, 0], [1.5, 1]])
def test_expand_rejects_bad_durations(d):
    with pytest.raises(ValidationError):
        durian.state_expand([[1.0], [2.0]], d)


def test_expand_length_mismatch():
    with pytest.raises(ValidationError):
        durian.state_expand([[1.0]], [1, 2])


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n_ph = int(rng.integers(1, 12))
    tokens = []
    for i in range(n_ph):
        tokens.append(f"p{i}")
        if rng.random() < 0.5:
            level = str(rng.choice(["S", "1", "2", "3"]))
            tokens.append("#" + level)
            if rng.random() < 0.3:
                other = [lv for lv in "S123" if lv != level]
                tokens.append("#" + str(rng.choice(other)))
    if rng.random() < 0.5:
        tokens.insert(0, "#3")
    durations = rng.integers(0, 6, n_ph)
    if durations.sum() == 0:
        durations[rng.integers(0, n_ph)] = 1
    dim = int(rng.integers(1, 4))
    states = rng.standard_normal((len(tokens), dim))
    return tokens, states, durations


@pytest.mark.parametrize("block", range(10))
def test_alignment_invariants_random(block):
    for seed in range(100 * block, 100 * block + 100):
        tokens, states, durations = random_instance(seed)
        seq = durian.parse_symbols(tokens)
        kept = durian.skip_filter(states, seq)
        assert kept.shape[0] == seq.num_phonemes == len(durations)
        ph = [i for i, t in enumerate(tokens) if not t.startswith("#")]
        np.testing.assert_array_equal(kept, states[ph])
        out = durian.state_expand(kept, durations)
        assert out.shape == (durations.sum(), states.shape[1] + 1)
        pos = out[:, -1]
        assert np.all((pos > 0) & (pos <= 1))
        # runs: positions strictly increase and end at exactly 1.0
        start = 0
        for i, d in enumerate(durations):
            run = out[start:start + d]
            np.testing.assert_array_equal(run[:, :-1], np.repeat(kept[i:i + 1], d, axis=0))
            assert np.all(np.diff(run[:, -1]) > 0)
            if d:
                assert run[-1, -1] == 1.0
                np.testing.assert_allclose(run[:, -1], np.arange(1, d + 1) / d, rtol=0, atol=0)
            start += d
        # run-length round trip on the state column recovers the nonzero durations
        runs = oracles.run_length([tuple(r) for r in out[:, :-1]])
        nonzero = [int(d) for d in durations if d]
        # equal neighbouring states would merge runs; random normals never coincide
        assert [n for _, n in runs] == nonzero


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "#S", "#1", "#2", "#3"]), min_size=1, max_size=30))
def test_skip_filter_removes_exactly_the_boundaries(tokens):
    try:
        seq = durian.parse_symbols(tokens)
    except ParseError:
        assert any(tokens[i] == tokens[i - 1] and tokens[i].startswith("#") for i in range(1, len(tokens)))
        return
    states = np.arange(len(tokens), dtype=float)[:, None]
    kept = durian.skip_filter(states, seq)
    assert kept[:, 0].tolist() == [i for i, t in enumerate(tokens) if not t.startswith("#")]


def test_style_code_examples():
    e = np.array([0.3, -1.2, 2.0])
    np.testing.assert_array_equal(durian.style_code(e, 1.0).code, e)
    assert not durian.style_code(e, 0.0).code.any()
    for s in (0.1, 2.5, 100.0):
        c = durian.style_code(e, s).code
        cos = c @ e / (np.linalg.norm(c) * np.linalg.norm(e))
        assert cos == pytest.approx(1.0, abs=1e-12)


def test_style_code_composes():
    e = np.random.default_rng(0).standard_normal(16)
    a, b = 1.7, 0.3
    np.testing.assert_allclose(durian.style_code(e, a * b).code,
                               durian.style_code(durian.style_code(e, a).code, b).code, rtol=1e-15)


def test_style_code_validation():
    with pytest.raises(ValidationError):
        durian.style_code([1.0], -0.1)
    with pytest.raises(ValidationError):
        durian.style_code([[1.0]], 1.0)
    with pytest.raises(ValidationError):
        durian.style_code([np.nan], 1.0)


def test_loss_examples(rng):
    y = rng.standard_normal((3, 4))
    assert durian.durian_loss(y, y, np.zeros_like(y)) == 0.0
    y_pre = rng.standard_normal((3, 4))
    assert durian.durian_loss(y, y_pre, np.zeros_like(y)) == 2 * np.abs(y - y_pre).sum()


def test_loss_matches_scalar_oracle():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        y, y_pre, r = (rng.standard_normal((3, 4)) for _ in range(3))
        ref = oracles.l1_loss(y.tolist(), y_pre.tolist(), r.tolist())
        assert durian.durian_loss(y, y_pre, r) == pytest.approx(ref, abs=1e-12)


def test_loss_positive_unless_perfect(rng):
    y = rng.standard_normal((2, 2))
    assert durian.durian_loss(y, y, np.full((2, 2), 1e-9)) > 0
    assert durian.durian_loss(y, y + 1e-9, np.zeros((2, 2))) > 0
    with pytest.raises(ValidationError):
        durian.durian_loss(y, y, np.zeros((2, 3)))


def test_file_readers(tmp_path):
    (tmp_path / "s.txt").write_text("j in #S\nt ian #1\n", encoding="utf-8")
    (tmp_path / "d.txt").write_text("2\n1\n\n0\n3\n")
    seq = durian.read_symbols(tmp_path / "s.txt")
    d = durian.read_durations(tmp_path / "d.txt")
    assert seq.num_phonemes == 4 and d.tolist() == [2, 1, 0, 3]
    (tmp_path / "bad.txt").write_text("2\nx\n")
    with pytest.raises(ValidationError, match=":2:"):
        durian.read_durations(tmp_path / "bad.txt")


def test_csv_export():
    text = durian.expanded_csv(durian.state_expand([[1.0, 2.0]], [2]))
    assert text.splitlines() == ["h0,h1,position", "1.0,2.0,0.5", "1.0,2.0,1.0"]
