"""Single regression tree grown on gradient/hessian pairs.

Split candidates are per-feature empirical quantiles of the training
values (order statistics, so routing is invariant under strictly monotone
feature transformations).  Growth is best-first: the leaf whose best
candidate split has the highest positive gain is split until the leaf cap
is reached or no split improves the objective.  Rows with a missing value
in the split feature follow a learned default direction.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError


def leaf_weight(g_sum: float, h_sum: float, lambda_reg: float) -> float:
    """Optimal leaf score -G / (H + lambda)."""
    denom = h_sum + lambda_reg
    if denom <= 0.0:
        raise NumericalError(f"degenerate leaf denominator {denom:g}")
    return -g_sum / denom


def split_gain(g_left, h_left, g_right, h_right, lambda_reg, eta):
    """Objective reduction of a split: half the gain of separating the
    children minus the per-leaf penalty eta."""
    parent_g = g_left + g_right
    parent_h = h_left + h_right
    return 0.5 * (
        g_left * g_left / (h_left + lambda_reg)
        + g_right * g_right / (h_right + lambda_reg)
        - parent_g * parent_g / (parent_h + lambda_reg)
    ) - eta


@dataclass
class TreeNode:
    """Either a branch (feature/threshold/children) or a leaf (weight).

    ``cover`` is the sum of hessians over the node's training instances;
    ``gain`` is the objective reduction of the node's split (branches only).
    Routing sends x[feature] <= threshold to ``left``; missing values follow
    ``default_left``.
    """

    id: int
    feature: int | None = None
    threshold: float | None = None
    default_left: bool | None = None
    left: int | None = None
    right: int | None = None
    gain: float | None = None
    weight: float | None = None
    cover: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_doc(self) -> dict:
        doc = {"id": self.id, "cover": self.cover}
        if self.is_leaf:
            doc["weight"] = self.weight
        else:
            doc.update(
                feature=self.feature,
                threshold=self.threshold,
                default_left=self.default_left,
                left=self.left,
                right=self.right,
                gain=self.gain,
            )
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "TreeNode":
        known = {"id", "feature", "threshold", "default_left", "left", "right",
                 "gain", "weight", "cover"}
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"unknown tree node fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class Tree:
    nodes: list[TreeNode] = field(default_factory=list)

    @property
    def n_leaves(self) -> int:
        return sum(1 for n in self.nodes if n.is_leaf)

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Leaf weight of the region each row falls into."""
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            nid, rows = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out[rows] = node.weight
                continue
            x = X[rows, node.feature]
            missing = np.isnan(x)
            go_left = (x <= node.threshold) | (missing & node.default_left)
            stack.append((node.left, rows[go_left]))
            stack.append((node.right, rows[~go_left]))
        return out

    def to_doc(self) -> dict:
        return {"nodes": [n.to_doc() for n in self.nodes]}

    @classmethod
    def from_doc(cls, doc: dict) -> "Tree":
        nodes = [TreeNode.from_doc(d) for d in doc["nodes"]]
        if [n.id for n in nodes] != list(range(len(nodes))):
            raise DataError("tree node ids must be 0..n-1 in order")
        return cls(nodes)


def predict_tree(tree: Tree, x) -> float:
    """Single-row convenience wrapper around Tree.predict."""
    return float(tree.predict(np.atleast_2d(np.asarray(x, dtype=float)))[0])


def quantile_candidates(x: np.ndarray, n_bins: int) -> np.ndarray:
    """Candidate thresholds: order-statistic quantiles of the non-missing
    feature values, excluding the maximum (which cannot separate rows)."""
    x = x[~np.isnan(x)]
    if x.size == 0:
        return np.empty(0)
    levels = np.arange(1, n_bins) / n_bins
    cand = np.unique(np.quantile(x, levels, method="lower"))
    return cand[cand < x.max()]


@dataclass
class _Split:
    gain: float
    feature: int
    threshold: float
    default_left: bool


def _best_split_for_node(X, g, h, rows, features, candidates, lambda_reg, eta):
    """Scan the sampled features with histogram prefix sums; return the
    best _Split or None.  Ties break on lowest feature index then lowest
    threshold (then default_left=True)."""
    g_total = g[rows].sum()
    h_total = h[rows].sum()
    best = None
    for j in features:
        cand = candidates[j]
        if cand.size == 0:
            continue
        x = X[rows, j]
        missing = np.isnan(x)
        obs = ~missing
        if not obs.any():
            continue
        bucket = np.searchsorted(cand, x[obs], side="left")
        n_slots = cand.size + 1
        g_left = np.cumsum(np.bincount(bucket, weights=g[rows][obs], minlength=n_slots))[:-1]
        h_left = np.cumsum(np.bincount(bucket, weights=h[rows][obs], minlength=n_slots))[:-1]
        n_left = np.cumsum(np.bincount(bucket, minlength=n_slots))[:-1]
        g_miss = g[rows][missing].sum()
        h_miss = h[rows][missing].sum()
        n_miss = int(missing.sum())
        # try routing missing rows left, then right
        for default_left in (True, False):
            gl = g_left + g_miss if default_left else g_left
            hl = h_left + h_miss if default_left else h_left
            nl = n_left + n_miss if default_left else n_left
            valid = (nl > 0) & (nl < rows.size)
            if not valid.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gains = split_gain(gl, hl, g_total - gl, h_total - hl, lambda_reg, eta)
            gains = np.where(valid, gains, -np.inf)
            t = int(np.argmax(gains))
            if np.isfinite(gains[t]) and (best is None or gains[t] > best.gain):
                best = _Split(float(gains[t]), int(j), float(cand[t]), default_left)
    return best


def grow(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    max_leaves: int,
    lambda_reg: float = 1.0,
    eta: float = 0.0,
    n_quantile_bins: int = 32,
    feature_subset: np.ndarray | None = None,
) -> Tree:
    """Grow one tree best-first on the given gradient pairs.

    ``feature_subset`` restricts candidate features (the booster draws it
    per iteration); None means all features.  Growth stops when the best
    candidate gain is <= 0 or the leaf count reaches ``max_leaves``.
    """
    X = np.asarray(X, dtype=float)
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    n, p = X.shape
    if n == 0:
        raise DataError("cannot grow a tree on an empty dataset")
    if g.shape != (n,) or h.shape != (n,):
        raise DataError("gradient/hessian length must match row count")
    if max_leaves < 2:
        raise DataError("max_leaves must be >= 2")
    features = np.arange(p) if feature_subset is None else np.sort(np.asarray(feature_subset))

    candidates = {int(j): quantile_candidates(X[:, j], n_quantile_bins) for j in features}

    tree = Tree()
    root_rows = np.arange(n)
    tree.nodes.append(TreeNode(
        id=0,
        weight=leaf_weight(g.sum(), h.sum(), lambda_reg),
        cover=float(h.sum()),
    ))
    node_rows = {0: root_rows}

    heap: list[tuple[float, int]] = []
    pending: dict[int, _Split] = {}

    def consider(nid: int):
        split = _best_split_for_node(
            X, g, h, node_rows[nid], features, candidates, lambda_reg, eta
        )
        if split is not None:
            pending[nid] = split
            heapq.heappush(heap, (-split.gain, nid))

    consider(0)
    n_leaves = 1
    while n_leaves < max_leaves and heap:
        neg_gain, nid = heapq.heappop(heap)
        if -neg_gain <= 0.0:
            break
        split = pending.pop(nid)
        rows = node_rows.pop(nid)
        x = X[rows, split.feature]
        missing = np.isnan(x)
        go_left = (x <= split.threshold) | (missing & split.default_left)
        left_rows, right_rows = rows[go_left], rows[~go_left]

        node = tree.nodes[nid]
        node.feature = split.feature
        node.threshold = split.threshold
        node.default_left = split.default_left
        node.gain = split.gain
        node.weight = None
        for child_rows in (left_rows, right_rows):
            cid = len(tree.nodes)
            tree.nodes.append(TreeNode(
                id=cid,
                weight=leaf_weight(g[child_rows].sum(), h[child_rows].sum(), lambda_reg),
                cover=float(h[child_rows].sum()),
            ))
            node_rows[cid] = child_rows
        node.left = tree.nodes[-2].id
        node.right = tree.nodes[-1].id
        n_leaves += 1
        if n_leaves < max_leaves:
            consider(node.left)
            consider(node.right)
    return tree
