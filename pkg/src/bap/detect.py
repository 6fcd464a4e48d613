"""Decision-tree induction/inference and threshold silence detection.

Trees are induced top-down on (index_name, band) features by maximizing
information gain ratio, with deterministic tie-breaking, and can be
persisted to a line-oriented rule file so learned rules ship with the
package and stay user-replaceable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .audio import AudioClip
from .errors import (DegenerateData, MalformedRules, MissingFeature,
                     WrongLength)
from .spectral import INDEX_NAMES, snr_index

Feature = tuple[str, str]  # (index_name, band)


@dataclass(frozen=True)
class Split:
    feature: Feature
    threshold: float
    left: int   # feature value <= threshold
    right: int  # feature value > threshold


@dataclass(frozen=True)
class Leaf:
    label: str
    confidence: float


@dataclass(frozen=True)
class DecisionTree:
    nodes: tuple
    root: int = 0
    degenerate: bool = False

    def __post_init__(self):
        _validate_structure(self.nodes, self.root)


@dataclass(frozen=True)
class SilenceConfig:
    snr_threshold: float = 0.2
    chunk_length_s: float = 5.0

    def __post_init__(self):
        if not 0 < self.snr_threshold < 1:
            raise ValueError("snr_threshold must be in (0, 1)")
        if self.chunk_length_s <= 0:
            raise ValueError("chunk_length_s must be positive")


def _validate_structure(nodes, root) -> None:
    if not 0 <= root < len(nodes):
        raise MalformedRules(f"root {root} out of range")
    referenced: dict[int, int] = {}
    stack = [root]
    seen = set()
    while stack:
        i = stack.pop()
        if i in seen:
            raise MalformedRules(f"node {i} reachable twice (cycle or DAG)")
        seen.add(i)
        node = nodes[i]
        if isinstance(node, Split):
            for child in (node.left, node.right):
                if not 0 <= child < len(nodes):
                    raise MalformedRules(f"node {i} references missing {child}")
                referenced[child] = referenced.get(child, 0) + 1
                stack.append(child)
    for child, count in referenced.items():
        if count != 1 or child == root:
            raise MalformedRules(f"node {child} referenced {count} times")
    if len(seen) != len(nodes):
        raise MalformedRules("unreachable nodes present")


# ---------------------------------------------------------------------------
# Training


def _entropy_of_counts(counts: dict[str, int]) -> float:
    total = sum(counts.values())
    h = 0.0
    for c in counts.values():
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def _label_counts(rows) -> dict[str, int]:
    counts: dict[str, int] = {}
    for _, label in rows:
        counts[label] = counts.get(label, 0) + 1
    return counts


def _majority(counts: dict[str, int]) -> tuple[str, float]:
    label = max(sorted(counts), key=lambda k: counts[k])
    return label, counts[label] / sum(counts.values())


def _best_split(rows, features, min_leaf):
    """Highest gain-ratio (feature, threshold); ties resolved by feature
    order then smaller threshold."""
    base = _entropy_of_counts(_label_counts(rows))
    n = len(rows)
    best = None  # (gain_ratio, feature, threshold)
    for feat in features:
        pairs = sorted((fv[feat], label) for fv, label in rows)
        values = [v for v, _ in pairs]
        left_counts: dict[str, int] = {}
        right_counts = _label_counts(rows)
        i = 0
        for v, nxt in zip(values, values[1:] + [None]):
            label = pairs[i][1]
            left_counts[label] = left_counts.get(label, 0) + 1
            right_counts[label] -= 1
            i += 1
            if nxt is None or nxt == v:
                continue
            if i < min_leaf or n - i < min_leaf:
                continue
            threshold = (v + nxt) / 2
            h = (i / n) * _entropy_of_counts(left_counts) + \
                ((n - i) / n) * _entropy_of_counts(right_counts)
            gain = base - h
            if gain <= 1e-12:
                continue
            p = i / n
            split_info = -(p * math.log2(p) + (1 - p) * math.log2(1 - p))
            ratio = gain / split_info
            if best is None or ratio > best[0] + 1e-12:
                best = (ratio, feat, threshold)
    return best


def train_tree(data, max_depth: int = 6, min_leaf: int = 1) -> DecisionTree:
    """Induce a tree from rows of (feature_vector, label)."""
    if len(data) < 2:
        raise DegenerateData("need at least 2 rows")
    if max_depth < 1 or min_leaf < 1:
        raise ValueError("max_depth and min_leaf must be >= 1")
    labels = _label_counts(data)
    features = sorted(data[0][0].keys())
    nodes: list = []

    def build(rows, depth) -> int:
        counts = _label_counts(rows)
        label, conf = _majority(counts)
        if len(counts) == 1 or depth >= max_depth or len(rows) < 2 * min_leaf:
            nodes.append(Leaf(label, conf))
            return len(nodes) - 1
        best = _best_split(rows, features, min_leaf)
        if best is None:
            nodes.append(Leaf(label, conf))
            return len(nodes) - 1
        _, feat, threshold = best
        left_rows = [r for r in rows if r[0][feat] <= threshold]
        right_rows = [r for r in rows if r[0][feat] > threshold]
        idx = len(nodes)
        nodes.append(None)  # placeholder, children appended next
        left = build(left_rows, depth + 1)
        right = build(right_rows, depth + 1)
        nodes[idx] = Split(feat, threshold, left, right)
        return idx

    root = build(list(data), 0)
    return DecisionTree(tuple(nodes), root, degenerate=len(labels) == 1)


# ---------------------------------------------------------------------------
# Inference


def classify(tree: DecisionTree, fv: dict) -> tuple[str, float, list[int]]:
    path = []
    i = tree.root
    while True:
        path.append(i)
        node = tree.nodes[i]
        if isinstance(node, Leaf):
            return node.label, node.confidence, path
        if node.feature not in fv:
            raise MissingFeature(f"feature {node.feature} not in vector")
        i = node.left if fv[node.feature] <= node.threshold else node.right


def is_silent(clip: AudioClip, snr_threshold: float) -> bool:
    """Length-agnostic silence predicate (shared with the pipeline)."""
    return snr_index(clip) < snr_threshold


def detect_silence(clip: AudioClip, cfg: SilenceConfig) -> bool:
    if abs(clip.duration_s - cfg.chunk_length_s) > 0.2 * cfg.chunk_length_s:
        raise WrongLength(
            f"clip is {clip.duration_s:.2f} s, expected about "
            f"{cfg.chunk_length_s:.2f} s")
    return is_silent(clip, cfg.snr_threshold)


# ---------------------------------------------------------------------------
# Rule files


def save_rules(tree: DecisionTree, path) -> None:
    lines = [f"root {tree.root}"]
    for i, node in enumerate(tree.nodes):
        if isinstance(node, Split):
            lines.append(f"node {i} split {node.feature[0]} {node.feature[1]} "
                         f"{node.threshold!r} {node.left} {node.right}")
        else:
            lines.append(f"node {i} leaf {node.label} {node.confidence!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def parse_rules(text: str) -> DecisionTree:
    root = None
    entries: dict[int, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "root" and len(parts) == 2:
                root = int(parts[1])
            elif parts[0] == "node" and parts[2] == "split" and len(parts) == 8:
                idx = int(parts[1])
                index_name, band = parts[3], parts[4]
                if index_name not in INDEX_NAMES:
                    raise MalformedRules(
                        f"line {lineno}: unknown feature {index_name!r}")
                entries[idx] = Split((index_name, band), float(parts[5]),
                                     int(parts[6]), int(parts[7]))
            elif parts[0] == "node" and parts[2] == "leaf" and len(parts) == 5:
                conf = float(parts[4])
                if not 0 <= conf <= 1:
                    raise MalformedRules(f"line {lineno}: bad confidence")
                entries[int(parts[1])] = Leaf(parts[3], conf)
            else:
                raise MalformedRules(f"line {lineno}: unrecognized line")
        except (ValueError, IndexError) as e:
            raise MalformedRules(f"line {lineno}: {e}") from e
    if root is None or not entries:
        raise MalformedRules("missing root or nodes")
    if sorted(entries) != list(range(len(entries))):
        raise MalformedRules("node ids must be dense from 0")
    nodes = tuple(entries[i] for i in range(len(entries)))
    return DecisionTree(nodes, root)


def load_rules(path) -> DecisionTree:
    with open(path, "r", encoding="utf-8") as f:
        return parse_rules(f.read())
