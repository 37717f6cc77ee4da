"""Position-aware confidence recalibration plus the classical NMS baselines.

Candidate boxes of one frame are linked into an adjacency graph (edge when
IoU exceeds the neighbor threshold theta). Each box's score is then corrected
in a single simultaneous pass over the original scores:

    enhancement  E = Q/(Q+1) * (1 - P(a_i)) * max_{a_j in L} P(a_j)
    suppression  S = P(a_i) * IoU(a_i, a_j*),  a_j* = argmax_{a_j in H} P(a_j)
    corrected    P^ = P(a_i) + E - S

where L (low neighbors) are neighbors with IoU > delta and strictly lower
score, H (high neighbors) the strictly-higher counterpart, and Q = |L|.
Boxes tied in score belong to neither set. E is 0 when L is empty, S is 0
when H is empty, and P^ always stays in [0, 1].

Final selection runs classical greedy NMS on the corrected scores.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Box, pairwise_iou_matrix


@dataclass(frozen=True)
class PacParams:
    theta: float = 0.5
    delta: float = 0.8
    nms_iou: float = 0.65

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.nms_iou < 1.0:
            raise ValueError(f"nms_iou must lie in (0, 1), got {self.nms_iou}")
        if self.delta <= self.theta:
            raise ValueError(
                f"delta must exceed the neighbor threshold theta, got delta={self.delta} theta={self.theta}"
            )


@dataclass
class AdjacencyGraph:
    """IoU-thresholded neighbor structure over one frame's candidate boxes.

    Edges are unordered index pairs (i < j) present exactly when the pair's
    IoU is strictly greater than theta; each edge caches that IoU.
    """

    nodes: list[Box]
    theta: float
    edges: dict[tuple[int, int], float] = field(default_factory=dict)

    def neighbors(self, i: int) -> list[int]:
        if not 0 <= i < len(self.nodes):
            raise IndexError(f"node index {i} out of range for {len(self.nodes)} nodes")
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def edge_iou(self, i: int, j: int) -> float:
        return self.edges[(min(i, j), max(i, j))]


def build_graph(boxes: list[Box], theta: float) -> AdjacencyGraph:
    """O(n^2) pairwise construction; empty input yields an empty graph."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"theta must lie in (0, 1), got {theta}")
    g = AdjacencyGraph(nodes=list(boxes), theta=theta)
    mat = pairwise_iou_matrix(g.nodes)
    ii, jj = np.nonzero(np.triu(mat > theta, k=1))
    for i, j in zip(ii.tolist(), jj.tolist()):
        g.edges[(i, j)] = float(mat[i, j])
    return g


def connected_components(g: AdjacencyGraph) -> list[set[int]]:
    """Partition of node indices; isolated boxes come out as singletons."""
    n = len(g.nodes)
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in g.edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri
    groups: dict[int, set[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), set()).add(i)
    return sorted(groups.values(), key=min)


def low_high_neighbors(g: AdjacencyGraph, i: int, delta: float) -> tuple[set[int], set[int]]:
    """Neighbor indices with IoU > delta split by strict score comparison.

    Ties in score join neither set, so L and H are disjoint subsets of the
    neighbor set.
    """
    if delta < g.theta:
        raise ValueError(f"delta {delta} must be >= graph theta {g.theta}")
    p_i = g.nodes[i].score
    low: set[int] = set()
    high: set[int] = set()
    for j in g.neighbors(i):
        if g.edge_iou(i, j) <= delta:
            continue
        p_j = g.nodes[j].score
        if p_j < p_i:
            low.add(j)
        elif p_j > p_i:
            high.add(j)
    return low, high


def enhancement(g: AdjacencyGraph, i: int, delta: float) -> float:
    """Positive evidence from low neighbors; 0 when there are none."""
    low, _ = low_high_neighbors(g, i, delta)
    if not low:
        return 0.0
    q = len(low)
    p_i = g.nodes[i].score
    return q / (q + 1) * (1.0 - p_i) * max(g.nodes[j].score for j in low)


def suppression(g: AdjacencyGraph, i: int, delta: float) -> float:
    """Penalty from the best high neighbor; 0 when there is none."""
    _, high = low_high_neighbors(g, i, delta)
    if not high:
        return 0.0
    # Highest-score high neighbor; ties broken toward the lower index.
    j_star = min(high, key=lambda j: (-g.nodes[j].score, j))
    return g.nodes[i].score * g.edge_iou(i, j_star)


def _corrected_scores(mat: np.ndarray, p: np.ndarray, delta: float) -> np.ndarray:
    """P + E - S over the whole set at once, from the original scores.

    Ties in score contribute to neither neighbor set. Typical frames have few
    pairs above delta, so an edge list beats full-matrix masks; heavily
    overlapping sets fall back to the dense path where scatter ops lose.
    """
    n = len(p)
    linked = mat > delta
    ii, jj = np.nonzero(linked)
    if len(ii) > n * n // 4:
        return _corrected_scores_dense(mat, p, linked)

    low = p[jj] < p[ii]
    q = np.zeros(n)
    np.add.at(q, ii[low], 1.0)
    max_low = np.zeros(n)  # 0 is safe: scores are >= 0
    np.maximum.at(max_low, ii[low], p[jj[low]])
    e = q / (q + 1.0) * (1.0 - p) * max_low

    high = p[jj] > p[ii]
    best_high = np.full(n, -1.0)
    np.maximum.at(best_high, ii[high], p[jj[high]])
    # Among equally-scored best high neighbors, the lowest index suppresses.
    tied = high & (p[jj] == best_high[ii])
    j_star = np.full(n, n, dtype=np.int64)
    np.minimum.at(j_star, ii[tied], jj[tied])
    s = np.zeros(n)
    has_high = j_star < n
    s[has_high] = p[has_high] * mat[np.nonzero(has_high)[0], j_star[has_high]]

    return p + e - s


def _corrected_scores_dense(mat: np.ndarray, p: np.ndarray, linked: np.ndarray) -> np.ndarray:
    n = len(p)
    lower = linked & (p[None, :] < p[:, None])
    higher = linked & (p[None, :] > p[:, None])

    q = lower.sum(axis=1)
    max_low = np.where(lower, p[None, :], 0.0).max(axis=1)
    e = q / (q + 1.0) * (1.0 - p) * max_low

    j_star = np.where(higher, p[None, :], -np.inf).argmax(axis=1)
    s = np.where(higher.any(axis=1), p * mat[np.arange(n), j_star], 0.0)

    return p + e - s


def pac_rescore(boxes: list[Box], params: PacParams) -> list[Box]:
    """Correct every score in one simultaneous pass over the original scores.

    Geometry and ordering are unchanged; a box with no neighbor above delta
    keeps its score exactly.
    """
    if not boxes:
        return []
    mat = pairwise_iou_matrix(boxes)
    p = np.array([b.score for b in boxes])
    corrected = _corrected_scores(mat, p, params.delta)
    return [b.with_score(float(c)) for b, c in zip(boxes, corrected)]


def _nms_kept_indices(mat: np.ndarray, scores: np.ndarray, iou_thresh: float) -> list[int]:
    order = np.argsort(-scores, kind="stable")
    suppressed = np.zeros(len(scores), dtype=bool)
    kept: list[int] = []
    for idx in order:
        if suppressed[idx]:
            continue
        kept.append(int(idx))
        suppressed |= mat[idx] > iou_thresh
    return kept


def classical_nms(boxes: list[Box], iou_thresh: float) -> list[Box]:
    """Greedy score-descending suppression; score ties keep the lower index.

    Kept boxes have pairwise IoU <= iou_thresh against every previously kept
    box.
    """
    if not 0.0 < iou_thresh < 1.0:
        raise ValueError(f"iou_thresh must lie in (0, 1), got {iou_thresh}")
    if not boxes:
        return []
    mat = pairwise_iou_matrix(boxes)
    scores = np.array([b.score for b in boxes])
    return [boxes[i] for i in _nms_kept_indices(mat, scores, iou_thresh)]


def soft_nms(
    boxes: list[Box],
    iou_thresh: float,
    mode: str = "linear",
    sigma: float = 0.5,
) -> list[Box]:
    """Return every box with its score decayed by overlap with stronger boxes.

    linear:   s <- s * (1 - IoU)          when IoU > iou_thresh
    gaussian: s <- s * exp(-IoU^2 / sigma) for any overlap

    Geometry and input order are unchanged; scores never increase.
    """
    if mode not in ("linear", "gaussian"):
        raise ValueError(f"mode must be 'linear' or 'gaussian', got {mode!r}")
    if sigma <= 0.0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    n = len(boxes)
    if n == 0:
        return []
    mat = pairwise_iou_matrix(boxes)
    scores = np.array([b.score for b in boxes])
    frozen = np.zeros(n, dtype=bool)
    for _ in range(n):
        live = np.where(~frozen)[0]
        idx = live[np.argmax(scores[live])]  # argmax takes the lowest index on ties
        frozen[idx] = True
        rest = ~frozen
        overlap = mat[idx]
        if mode == "linear":
            decay = np.where(overlap > iou_thresh, 1.0 - overlap, 1.0)
        else:
            decay = np.exp(-(overlap ** 2) / sigma)
        scores[rest] *= decay[rest]
    return [b.with_score(float(s)) for b, s in zip(boxes, scores)]


def pac_select(boxes: list[Box], params: PacParams) -> list[Box]:
    """Full post-processing: rescore, then greedy NMS on corrected scores.

    Geometry is shared between the two stages, so the pairwise IoU matrix is
    computed once.
    """
    if not boxes:
        return []
    mat = pairwise_iou_matrix(boxes)
    p = np.array([b.score for b in boxes])
    corrected = _corrected_scores(mat, p, params.delta)
    return [
        boxes[i].with_score(float(corrected[i]))
        for i in _nms_kept_indices(mat, corrected, params.nms_iou)
    ]
