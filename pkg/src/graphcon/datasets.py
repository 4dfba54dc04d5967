"""Node-level datasets: file formats and synthetic generators.

On disk a dataset is a directory of tab-separated files keyed by node id:

* ``edges.tsv``: ``u<TAB>v`` per undirected edge; a line with a single id
  declares an isolated node
* ``features.tsv``: ``id<TAB>f_1<TAB>...<TAB>f_m``
* ``labels.tsv`` (optional): ``id<TAB>label`` (integer class or float target)
* ``splits.json`` (optional): ``{"train": [ids], "val": [ids], "test": [ids]}``

Ids may be arbitrary tokens; they are remapped to ``0..v-1`` in sorted order
(numeric when every id is an integer) and the mapping is kept in
``Dataset.node_ids``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .graph import Graph, GraphError, from_edge_list, grid_graph
from .rng import Rng, derive_seed
from .training import SplitSpec, random_split


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray | None = None
    targets: np.ndarray | None = None
    splits: SplitSpec | None = None
    node_ids: list | None = None

    def __post_init__(self):
        v = self.graph.num_nodes
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2 or self.features.shape[0] != v:
            raise DatasetError(f"features have {self.features.shape[0]} rows but the graph has {v} nodes")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (v,):
                raise DatasetError(f"{self.labels.shape[0]} labels for {v} nodes")
            if self.labels.size and self.labels.min() < 0:
                raise DatasetError("labels must be non-negative")
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=np.float64).reshape(v, -1)
        if self.splits is not None:
            self.splits.validate(v)
        if self.node_ids is None:
            self.node_ids = list(range(v))

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1


def _tokens(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if s and not s.startswith("#"):
                yield lineno, s.split("\t")


def _sort_ids(ids):
    try:
        return sorted(ids, key=int)
    except ValueError:
        return sorted(ids)


def _rows_by_id(path, index, kind):
    rows = {}
    for lineno, parts in _tokens(path):
        if parts[0] not in index:
            raise DatasetError(f"{path}:{lineno}: unknown node id {parts[0]!r} in {kind}")
        if parts[0] in rows:
            raise DatasetError(f"{path}:{lineno}: duplicate node id {parts[0]!r} in {kind}")
        rows[parts[0]] = (lineno, parts[1:])
    return rows


def load_dataset(edge_path, feature_path, label_path=None, split_path=None,
                 task: str = "classification") -> Dataset:
    pairs, seen = [], []
    for lineno, parts in _tokens(edge_path):
        if len(parts) == 1:
            seen.append(parts[0])
        elif len(parts) == 2:
            pairs.append((parts[0], parts[1], lineno))
            seen.extend(parts)
        else:
            raise DatasetError(f"{edge_path}:{lineno}: expected 1 or 2 fields, got {len(parts)}")
    node_ids = _sort_ids(set(seen))
    index = {k: i for i, k in enumerate(node_ids)}
    v = len(node_ids)
    try:
        g = from_edge_list([(index[a], index[b]) for a, b, _ in pairs], v)
    except GraphError as e:
        raise DatasetError(f"{edge_path}: {e}") from None

    feats = _rows_by_id(feature_path, index, "features")
    if len(feats) != v:
        raise DatasetError(f"{feature_path}: feature file has {len(feats)} rows but the graph has {v} nodes")
    width = None
    x = None
    for key, (lineno, vals) in feats.items():
        if width is None:
            width = len(vals)
            x = np.zeros((v, width))
        if len(vals) != width:
            raise DatasetError(f"{feature_path}:{lineno}: expected {width} features, got {len(vals)}")
        try:
            x[index[key]] = [float(t) for t in vals]
        except ValueError:
            raise DatasetError(f"{feature_path}:{lineno}: non-numeric feature") from None

    labels = targets = None
    if label_path is not None:
        rows = _rows_by_id(label_path, index, "labels")
        if len(rows) != v:
            raise DatasetError(f"{label_path}: label file has {len(rows)} rows but the graph has {v} nodes")
        vals = np.zeros(v)
        for key, (lineno, rest) in rows.items():
            if len(rest) != 1:
                raise DatasetError(f"{label_path}:{lineno}: expected 'id<TAB>label'")
            try:
                vals[index[key]] = int(rest[0]) if task == "classification" else float(rest[0])
            except ValueError:
                raise DatasetError(f"{label_path}:{lineno}: bad label {rest[0]!r}") from None
        if task == "classification":
            labels = vals.astype(np.int64)
        else:
            targets = vals[:, None]

    splits = None
    if split_path is not None:
        with open(split_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            splits = SplitSpec(*[[index[str(k)] for k in doc[name]] for name in ("train", "val", "test")])
        except KeyError as e:
            raise DatasetError(f"{split_path}: missing split or unknown node id {e}") from None
    return Dataset(g, x, labels, targets, splits, node_ids)


def _json_id(token: str):
    # canonical integer tokens stay numbers in JSON; "007" must stay a string
    try:
        return int(token) if str(int(token)) == token else token
    except ValueError:
        return token


def save_dataset(ds: Dataset, directory) -> dict:
    """Write the four files; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    ids = [str(k) for k in ds.node_ids]
    paths = {"edges": os.path.join(directory, "edges.tsv"),
             "features": os.path.join(directory, "features.tsv")}
    with open(paths["edges"], "w", encoding="utf-8") as fh:
        deg = np.diff(ds.graph.row_offsets)
        for i in np.flatnonzero(deg == 0):
            fh.write(f"{ids[i]}\n")
        for i, j in ds.graph.edge_list():
            fh.write(f"{ids[i]}\t{ids[j]}\n")
    with open(paths["features"], "w", encoding="utf-8") as fh:
        for i, row in enumerate(ds.features):
            fh.write("\t".join([ids[i]] + [repr(float(t)) for t in row]) + "\n")
    if ds.labels is not None or ds.targets is not None:
        paths["labels"] = os.path.join(directory, "labels.tsv")
        with open(paths["labels"], "w", encoding="utf-8") as fh:
            for i in range(ds.graph.num_nodes):
                val = str(int(ds.labels[i])) if ds.labels is not None else repr(float(ds.targets[i, 0]))
                fh.write(f"{ids[i]}\t{val}\n")
    if ds.splits is not None:
        paths["splits"] = os.path.join(directory, "splits.json")
        with open(paths["splits"], "w", encoding="utf-8") as fh:
            json.dump({name: [_json_id(ids[i]) for i in getattr(ds.splits, name).tolist()]
                       for name in ("train", "val", "test")}, fh)
    return paths


def load_dataset_dir(directory, task: str = "classification") -> Dataset:
    p = lambda name: os.path.join(directory, name)
    label = p("labels.tsv") if os.path.exists(p("labels.tsv")) else None
    split = p("splits.json") if os.path.exists(p("splits.json")) else None
    return load_dataset(p("edges.tsv"), p("features.tsv"), label, split, task)


FEATURE_NOISE = 0.5


def gen_sbm(num_nodes: int, num_communities: int, p_in: float, p_out: float, seed: int,
            fractions=(0.6, 0.2, 0.2)) -> Dataset:
    """Stochastic block model with contiguous equal-size communities.

    Each pair ``i < j`` is an edge with probability ``p_in`` (same community)
    or ``p_out``. Features are the one-hot community indicator plus
    ``N(0, 0.5^2)`` noise; splits are a seeded random partition.
    """
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"{name}={p} is not a probability")
    if num_communities < 1 or num_nodes < num_communities:
        raise ValueError("need 1 <= num_communities <= num_nodes")
    r = Rng(seed)
    v, k = num_nodes, num_communities
    labels = (np.arange(v) * k) // v
    iu, ju = np.triu_indices(v, 1)
    u = r.uniform(size=iu.size)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = u < prob
    g = from_edge_list(np.column_stack([iu[keep], ju[keep]]), v)
    x = np.eye(k)[labels] + r.normal(0.0, FEATURE_NOISE, size=(v, k))
    splits = random_split(v, fractions, derive_seed(seed, "split"))
    return Dataset(g, x, labels=labels, splits=splits)


def gen_grid(width: int, height: int, feature_width: int, seed: int) -> Dataset:
    """Grid graph with ``U(0, 1)`` features."""
    g = grid_graph(width, height)
    x = Rng(seed).uniform(0.0, 1.0, size=(g.num_nodes, feature_width))
    return Dataset(g, x)
