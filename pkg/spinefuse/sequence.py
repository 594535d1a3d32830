"""Sequence dynamic program over per-view probability maps.

``OPT[i, j]`` accumulates the best ascending diagonal chain ending at row
``i``, label ``j``::

    OPT[i, j] = P[i, j]                                 if i = 1 or j = 1
    OPT[i, j] = OPT[i-1, j-1] + max(αP[i, j-1], βP[i, j], αP[i, j+1])

with ``P[i, c+1] = 0``. The sequence loss is ``1 - max(OPT[n, :]) / (βn)``.
"""

# Import built-in modules
from dataclasses import dataclass
import logging
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Union

# Import third-party modules
import numpy as np

# Import local modules
from spinefuse.errors import AnchorInfeasibleError
from spinefuse.errors import ConfigError
from spinefuse.errors import DataError
from spinefuse.ident import ProbMap


logger = logging.getLogger(__name__)

MatrixLike = Union[ProbMap, np.ndarray]


@dataclass(frozen=True)
class DpParams:
    """Neighbour (α) and on-diagonal (β) reward weights."""

    alpha: float = 0.1
    beta: float = 0.8

    def __post_init__(self):
        if not (0 <= self.alpha <= self.beta <= 1 and self.beta > 0):
            raise ConfigError(f"DP weights need 0 <= alpha <= beta <= 1 and beta > 0, got {self.alpha}, {self.beta}")


@dataclass(frozen=True, eq=False)
class DpResult:
    """Filled OPT table and the quantities read from its last row."""

    opt: np.ndarray
    best_score: float
    best_last_col: int
    seq_loss: float

    @property
    def best_label(self) -> int:
        """1-based label of the last-row argmax."""
        return self.best_last_col + 1


def _matrix(p: MatrixLike) -> np.ndarray:
    rows = p.rows if isinstance(p, ProbMap) else np.asarray(p, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise DataError(f"DP needs a non-empty (n, c) matrix, got shape {rows.shape}")
    return rows


def dp_table(p: MatrixLike, params: Optional[DpParams] = None) -> DpResult:
    """Fill the OPT table.

    Args:
        p: Probability map or a plain ``(n, c)`` non-negative matrix.
        params: Reward weights.

    Raises:
        DataError: If ``p`` is empty.
    """
    params = params or DpParams()
    rows = _matrix(p)
    n, c = rows.shape
    opt = np.empty_like(rows)
    opt[0] = rows[0]
    if n > 1:
        right = np.zeros_like(rows)
        right[:, :-1] = rows[:, 1:]
        # D for columns 2..c of every row
        reward = np.maximum(np.maximum(params.alpha * rows[:, :-1], params.beta * rows[:, 1:]),
                            params.alpha * right[:, 1:])
        for i in range(1, n):
            opt[i, 0] = rows[i, 0]
            opt[i, 1:] = opt[i - 1, :-1] + reward[i]

    # argmax returns the first maximum, i.e. the smaller label
    best_last_col = int(np.argmax(opt[-1]))
    best_score = float(opt[-1, best_last_col])
    seq_loss = 1.0 - best_score / (params.beta * n)
    return DpResult(opt=opt, best_score=best_score, best_last_col=best_last_col, seq_loss=seq_loss)


def sequence_loss(p: MatrixLike, params: Optional[DpParams] = None) -> float:
    """``1 - max(OPT[n, :]) / (βn)``; unclamped, negative for confident chains."""
    return dp_table(p, params).seq_loss


def correct_labels(p: MatrixLike, params: Optional[DpParams] = None) -> List[int]:
    """Consecutive ascending labels anchored at the last row's DP argmax.

    Returns:
        List[int]: ``[j* - n + 1, ..., j*]`` as 1-based labels.

    Raises:
        AnchorInfeasibleError: If the chain would run below label 1.
    """
    result = dp_table(p, params)
    n = result.opt.shape[0]
    anchor = result.best_label
    first = anchor - n + 1
    if first < 1:
        raise AnchorInfeasibleError(
            f"anchor label {anchor} cannot close a chain of {n} vertebrae", anchor=anchor, n=n
        )
    return list(range(first, anchor + 1))


def dp_result_to_dict(result: DpResult) -> Dict[str, Any]:
    return {
        "table": result.opt.tolist(),
        "best_score": result.best_score,
        "best_label": result.best_label,
        "seq_loss": result.seq_loss,
    }
