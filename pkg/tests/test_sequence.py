"""Test the sequence dynamic program, its loss and label correction."""

# Import built-in modules
import json

# Import third-party modules
from hypothesis import given
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
import numpy as np
import pytest

# Import local modules
from spinefuse.errors import AnchorInfeasibleError
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.ident import ProbMap
from spinefuse.sequence import DpParams
from spinefuse.sequence import correct_labels
from spinefuse.sequence import dp_result_to_dict
from spinefuse.sequence import dp_table
from spinefuse.sequence import sequence_loss


ALPHA, BETA = 0.1, 0.8


def chain_scores(p, alpha=ALPHA, beta=BETA):
    """Score every diagonal chain ending in the last row by walking it back to its start."""
    n, c = p.shape

    def reward(i, j):
        left = alpha * p[i, j - 1]
        right = alpha * p[i, j + 1] if j + 1 < c else 0.0
        return max(left, beta * p[i, j], right)

    scores = []
    for end in range(c):
        i, j, total = n - 1, end, 0.0
        while i > 0 and j > 0:
            total += reward(i, j)
            i, j = i - 1, j - 1
        scores.append(total + p[i, j])
    return np.array(scores)


matrices = hnp.arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 8)),
    elements=st.floats(0.0, 1.0, allow_nan=False),
)


def test_hand_executed_table():
    """Test the two-row example against its hand-executed table."""
    result = dp_table(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    np.testing.assert_allclose(result.opt[1], [0.0, 1.8, 0.1])
    assert result.best_score == pytest.approx(1.8)
    assert result.best_label == 2
    assert result.seq_loss == pytest.approx(-0.125)


def test_all_zero_map():
    """Test that an all-zero map has zero score and loss 1."""
    result = dp_table(np.zeros((4, 5)))
    assert not np.any(result.opt)
    assert result.best_score == 0.0
    assert result.seq_loss == 1.0


def test_single_row_is_base_case():
    """Test that n = 1 copies the map."""
    p = np.array([[0.2, 0.5, 0.3]])
    result = dp_table(p)
    np.testing.assert_array_equal(result.opt, p)
    assert correct_labels(p) == [2]


def test_uniform_map_loss():
    """Test the closed form for a constant map."""
    c = 26
    p = ProbMap(rows=np.full((3, c), 1.0 / c))
    expected = 1.0 - (1.0 / c) * (1.0 + 2 * BETA) / (BETA * 3)
    assert sequence_loss(p) == pytest.approx(expected, abs=1e-12)


def test_one_hot_diagonal():
    """Test the perfect ascending diagonal."""
    n, c, j0 = 5, 26, 14
    p = np.zeros((n, c))
    p[np.arange(n), j0 + np.arange(n)] = 1.0
    result = dp_table(p)
    assert result.best_score == pytest.approx(1.0 + (n - 1) * BETA, abs=1e-12)
    assert result.seq_loss == pytest.approx(-0.25 / n, abs=1e-12)
    assert correct_labels(p) == list(range(j0 + 1, j0 + n + 1))


def test_outlier_row_is_corrected():
    """Test that one off-diagonal row does not move the chain."""
    n, c, j0 = 6, 26, 10
    p = np.zeros((n, c))
    p[np.arange(n), j0 + np.arange(n)] = 1.0
    p[2] = 0.0
    p[2, j0 + 6] = 1.0
    assert correct_labels(p) == list(range(j0 + 1, j0 + n + 1))


def test_anchor_infeasible():
    """Test that a chain running below label 1 raises."""
    p = np.zeros((3, 5))
    p[:, 0] = 1.0
    with pytest.raises(AnchorInfeasibleError) as excinfo:
        correct_labels(p)
    assert excinfo.value.n == 3


def test_last_row_ties_go_to_smaller_label():
    """Test deterministic tie breaking in the last row."""
    p = np.full((1, 4), 0.25)
    assert dp_table(p).best_last_col == 0


def test_params_validation():
    """Test the 0 <= alpha <= beta <= 1, beta > 0 invariant."""
    with pytest.raises(ConfigError):
        DpParams(alpha=0.9, beta=0.8)
    with pytest.raises(ConfigError):
        DpParams(alpha=0.0, beta=0.0)
    with pytest.raises(ConfigError):
        DpParams(alpha=0.1, beta=1.2)


def test_empty_map_rejected():
    """Test the non-empty precondition."""
    with pytest.raises(DataError):
        dp_table(np.zeros((0, 3)))


def test_dp_result_to_dict():
    """Test the --dump-dp JSON form."""
    payload = dp_result_to_dict(dp_table(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])))
    assert json.loads(json.dumps(payload))["best_label"] == 2
    assert set(payload) == {"table", "best_score", "best_label", "seq_loss"}


@settings(max_examples=1000, deadline=None)
@given(matrices)
def test_dp_matches_chain_enumeration(p):
    """Test the vectorized table against per-chain enumeration."""
    result = dp_table(p)
    np.testing.assert_allclose(result.opt[-1], chain_scores(p), rtol=0, atol=1e-12)
    assert result.best_score == result.opt[-1].max()


@settings(max_examples=200, deadline=None)
@given(matrices, st.data())
def test_monotone_in_entries(p, data):
    """Test that raising one entry never lowers the best score."""
    i = data.draw(st.integers(0, p.shape[0] - 1))
    j = data.draw(st.integers(0, p.shape[1] - 1))
    bumped = p.copy()
    bumped[i, j] += data.draw(st.floats(0.0, 1.0))
    assert dp_table(bumped).best_score >= dp_table(p).best_score - 1e-12


@settings(max_examples=200, deadline=None)
@given(matrices, st.floats(0.0, 10.0))
def test_scale_covariance(p, t):
    """Test dp_table(t P) = t dp_table(P)."""
    np.testing.assert_allclose(dp_table(t * p).opt, t * dp_table(p).opt, rtol=1e-12, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(matrices)
def test_corrected_labels_are_consecutive(p):
    """Test that corrected labels always form an ascending run."""
    try:
        labels = correct_labels(p)
    except AnchorInfeasibleError:
        return
    assert labels == list(range(labels[0], labels[0] + len(labels)))
    assert labels[0] >= 1
    assert labels[-1] <= p.shape[1]
