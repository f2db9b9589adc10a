import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gain_arrays import ArrayRole, GainArray, col_sums, permute, rga, rnga, transpose
from loop_pairing import NoViablePairing, UnsupportedShape, eliminate_inputs, recommend
from plant_model import normalized_gain, steady_state_gain


def relative(data, role=ArrayRole.RNGA):
    return GainArray(role, data)


def brute_force(matrix, retained):
    """Best (cost, pairs) by plain enumeration of every assignment."""
    best = None
    rows = matrix.shape[0]
    for cols in itertools.product(retained, repeat=rows):
        if len(set(cols)) != rows:
            continue
        values = [matrix[i, j] for i, j in enumerate(cols)]
        if min(values) <= 0:
            continue
        candidate = (sum(abs(v - 1.0) for v in values), tuple(enumerate(cols)))
        if best is None or candidate < best:
            best = candidate
    return best


def test_radiator_rnga_pairing(radiator):
    plan = recommend(rnga(normalized_gain(radiator)))
    assert plan.basis is ArrayRole.RNGA
    assert plan.label == "Y1-U1/Y2-U2"
    assert plan.retained_inputs == (0, 1)
    assert [j for j, _ in plan.eliminated_inputs] == [2, 3]
    assert plan.pairs[0].value == pytest.approx(0.7166, abs=1e-3)
    assert plan.pairs[1].value == pytest.approx(0.6350, abs=1e-3)
    assert plan.warnings == ()


def test_radiator_rga_pairing(radiator):
    plan = recommend(rga(steady_state_gain(radiator)))
    assert plan.label == "Y1-U3/Y2-U4"
    assert plan.retained_inputs == (2, 3)
    assert [j for j, _ in plan.eliminated_inputs] == [0, 1]
    assert [p.value for p in plan.pairs] == pytest.approx([0.5664, 0.6770], abs=1e-3)


def test_eliminate_inputs_from_radiator_sums(radiator):
    lam = rnga(normalized_gain(radiator))
    retained, eliminated = eliminate_inputs(lam, col_sums(lam))
    assert retained == [0, 1]
    assert [round(c, 3) for _, c in eliminated] == [0.326, 0.408]


def test_square_keeps_everything():
    plan = recommend(relative(np.eye(3), ArrayRole.RGA))
    assert plan.eliminated_inputs == ()
    assert plan.label == "Y1-U1/Y2-U2/Y3-U3"
    assert plan.total_deviation == 0.0


def test_column_sum_tie_goes_to_lower_index():
    lam = relative([[0.5, 0.25, 0.25]])
    plan = recommend(lam)
    assert plan.retained_inputs == (0,)
    lam = relative([[0.2, 0.4, 0.4]])
    plan = recommend(lam)
    assert plan.retained_inputs == (1,)
    assert any("tie" in w for w in plan.warnings)


def test_low_element_warning():
    plan = recommend(relative([[0.45, 0.3, 0.25]]))
    assert plan.label == "Y1-U1"
    assert any("below 0.5" in w for w in plan.warnings)


def test_near_tie_warning():
    plan = recommend(relative([[0.51, 0.49], [0.49, 0.51]]))
    assert plan.label == "Y1-U1/Y2-U2"
    assert plan.total_deviation == pytest.approx(0.98)
    assert any("alternative pairing Y1-U2/Y2-U1" in w for w in plan.warnings)
    assert not any("below" in w for w in plan.warnings)


def test_no_viable_pairing():
    with pytest.raises(NoViablePairing, match="non-positive"):
        recommend(relative([[-0.5, 1.5], [-0.5, 1.5]]))


def test_tall_and_oversized_rejected(radiator):
    with pytest.raises(UnsupportedShape, match="analysis only"):
        recommend(rnga(transpose(normalized_gain(radiator))))
    with pytest.raises(UnsupportedShape, match="exhaustive search"):
        recommend(relative(np.eye(3)), max_rows=2)


def test_needs_relative_array(radiator):
    with pytest.raises(ValueError):
        recommend(normalized_gain(radiator))


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 4), st.integers(0, 3), st.integers(0, 2 ** 32 - 1))
def test_matches_brute_force(rows, extra, seed):
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.5, 1.5, size=(rows, rows + extra))
    lam = relative(matrix)
    retained, _ = eliminate_inputs(lam, col_sums(lam))
    expected = brute_force(matrix, retained)
    if expected is None:
        with pytest.raises(NoViablePairing):
            recommend(lam)
        return
    plan = recommend(lam)
    assert plan.total_deviation == pytest.approx(expected[0], abs=1e-12)
    assert tuple((p.output, p.input) for p in plan.pairs) == expected[1]


def test_pairing_follows_permutations(radiator):
    gains = normalized_gain(radiator)
    pr, ps = [1, 0], [2, 3, 1, 0]
    plan = recommend(rnga(permute(gains, pr, ps)))
    assert {p.label for p in plan.pairs} == {"Y1-U1", "Y2-U2"}
