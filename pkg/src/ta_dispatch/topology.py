"""Network topologies, link profiles and hierarchical smoothing.

Trees use the nested-list notation: an integer ``n`` is a leaf group of ``n``
devices hanging off one switch, a list is a switch joining its children.
``[2, 2]`` is two nodes of two devices, ``[[2, 2], [2]]`` a three-node tree
whose third node sits alone under its own switch.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

DEFAULT_SELF_BETA_FLOOR = 0.1  # us/MB


class TopologyKind(str, Enum):
    HOMOGENEOUS = "homogeneous"
    RING = "ring"
    SYMMETRIC_TREE = "symmetric_tree"
    ASYMMETRIC_TREE = "asymmetric_tree"


class TopologyError(ValueError):
    """Raised for malformed or inconsistent topology descriptions."""


def _freeze(node):
    if isinstance(node, bool):
        raise TopologyError(f"invalid tree element {node!r}")
    if isinstance(node, int):
        if node < 1:
            raise TopologyError(f"leaf group must hold at least one device, got {node}")
        return node
    if isinstance(node, (list, tuple)):
        if not node:
            raise TopologyError("empty group in tree structure")
        return tuple(_freeze(child) for child in node)
    raise TopologyError(f"invalid tree element {node!r}")


def _thaw(node):
    if isinstance(node, int):
        return node
    return [_thaw(child) for child in node]


def _count(node) -> int:
    if isinstance(node, int):
        return node
    return sum(_count(child) for child in node)


def _depth(node) -> int:
    if isinstance(node, int):
        return 0
    return 1 + max(_depth(child) for child in node)


def _collapse(node):
    """Drop switches with a single child; they add no distinct group."""
    if isinstance(node, int):
        return node
    children = tuple(_collapse(child) for child in node)
    if len(children) == 1:
        return children[0]
    return children


def _signature(node):
    """Branching signature of a uniform subtree, or None if non-uniform."""
    if isinstance(node, int):
        return (node,)
    sigs = [_signature(child) for child in node]
    if any(s is None for s in sigs) or any(s != sigs[0] for s in sigs):
        return None
    return (len(node),) + sigs[0]


def _levels(node) -> tuple[int, ...] | None:
    """Branching per level (root first, leaf-group size last) of a uniform tree."""
    sig = _signature(_collapse(node))
    return None if sig is None else sig


@dataclass(frozen=True)
class Topology:
    kind: TopologyKind
    structure: tuple
    device_count: int
    names: tuple[str, ...] | None = None
    edge_beta: tuple[float, ...] | None = None
    edge_alpha: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.device_count < 1:
            raise TopologyError("device_count must be positive")
        if self.names is not None and len(self.names) != self.device_count:
            raise TopologyError("names must list one entry per device")
        if self.kind in (TopologyKind.SYMMETRIC_TREE, TopologyKind.ASYMMETRIC_TREE):
            if _count(self.structure) != self.device_count:
                raise TopologyError("device_count does not match the tree leaves")
            symmetric = _levels(self.structure) is not None
            if symmetric != (self.kind is TopologyKind.SYMMETRIC_TREE):
                raise TopologyError(
                    f"kind {self.kind.value} does not match structure {_thaw(self.structure)}"
                )
        else:
            if len(self.structure) != self.device_count:
                raise TopologyError("device_count does not match the device list")
            if sorted(self.structure) != list(range(self.device_count)):
                raise TopologyError("device list must be a permutation of 0..P-1")
            if self.kind is TopologyKind.RING:
                if self.device_count < 3:
                    raise TopologyError("a ring needs at least 3 devices")
                for edges in (self.edge_beta, self.edge_alpha):
                    if edges is not None and len(edges) != self.device_count:
                        raise TopologyError("a ring of P devices has exactly P edges")

    @property
    def is_tree(self) -> bool:
        return self.kind in (TopologyKind.SYMMETRIC_TREE, TopologyKind.ASYMMETRIC_TREE)

    @property
    def levels(self) -> tuple[int, ...]:
        """Branching per level, root first; product equals ``device_count``."""
        if self.kind is TopologyKind.HOMOGENEOUS:
            return (self.device_count,)
        if self.kind is not TopologyKind.SYMMETRIC_TREE:
            raise TopologyError(f"{self.kind.value} topology has no uniform levels")
        return _levels(self.structure)

    def structure_as_list(self):
        if self.is_tree:
            return _thaw(self.structure)
        return list(self.structure)

    def to_dict(self) -> dict:
        doc = {"kind": self.kind.value, "structure": self.structure_as_list()}
        if self.names is not None:
            doc["names"] = list(self.names)
        if self.edge_beta is not None:
            doc["edge_beta"] = list(self.edge_beta)
        if self.edge_alpha is not None:
            doc["edge_alpha"] = list(self.edge_alpha)
        return doc

    @classmethod
    def tree(cls, structure, names=None) -> "Topology":
        frozen = _freeze(structure)
        if isinstance(frozen, int):
            frozen = (frozen,)
        kind = (
            TopologyKind.SYMMETRIC_TREE
            if _levels(frozen) is not None
            else TopologyKind.ASYMMETRIC_TREE
        )
        return cls(kind, frozen, _count(frozen), names=_names(names))

    @classmethod
    def from_levels(cls, levels: Sequence[int], names=None) -> "Topology":
        """Build a symmetric tree from per-level branching, root first."""
        if not levels or any(int(n) < 1 for n in levels):
            raise TopologyError(f"invalid levels {levels!r}")
        node = int(levels[-1])
        for branching in reversed(levels[:-1]):
            node = (node,) * int(branching)
        if isinstance(node, int):
            node = (node,)
        return cls.tree(node, names=names)

    @classmethod
    def ring(cls, order: Sequence[int], edge_beta=None, edge_alpha=None, names=None) -> "Topology":
        order = tuple(int(v) for v in order)
        return cls(
            TopologyKind.RING,
            order,
            len(order),
            names=_names(names),
            edge_beta=None if edge_beta is None else tuple(float(v) for v in edge_beta),
            edge_alpha=None if edge_alpha is None else tuple(float(v) for v in edge_alpha),
        )

    @classmethod
    def homogeneous(cls, device_count: int, names=None) -> "Topology":
        return cls(
            TopologyKind.HOMOGENEOUS,
            tuple(range(device_count)),
            device_count,
            names=_names(names),
        )


def _names(names):
    return None if names is None else tuple(str(n) for n in names)


def parse_topology(text: str) -> Topology:
    """Parse a JSON topology document or a bare nested list such as ``[[2,2],[2]]``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"topology is not valid JSON: {exc}") from exc
    if isinstance(doc, (list, int)):
        return Topology.tree(doc)
    if not isinstance(doc, dict):
        raise TopologyError("topology document must be an object or a nested list")

    unknown = set(doc) - {"kind", "structure", "levels", "names", "edge_beta", "edge_alpha"}
    if unknown:
        raise TopologyError(f"unknown topology fields: {sorted(unknown)}")
    kind = doc.get("kind")
    names = doc.get("names")
    if kind is not None and kind not in {k.value for k in TopologyKind} | {"tree"}:
        raise TopologyError(f"unknown topology kind {kind!r}")

    if "levels" in doc:
        if kind not in (None, "tree", "symmetric_tree"):
            raise TopologyError("levels are only valid for symmetric trees")
        return Topology.from_levels(doc["levels"], names=names)
    if "structure" not in doc:
        raise TopologyError("topology document needs a structure")
    structure = doc["structure"]

    if kind == "ring":
        if isinstance(structure, int):
            structure = list(range(structure))
        if not isinstance(structure, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in structure
        ):
            raise TopologyError("ring structure must be a flat ordered device list")
        return Topology.ring(
            structure, doc.get("edge_beta"), doc.get("edge_alpha"), names=names
        )
    if kind == "homogeneous":
        if isinstance(structure, list) and all(isinstance(v, int) for v in structure):
            if len(structure) == 1:
                count = structure[0]
            else:
                return Topology(
                    TopologyKind.HOMOGENEOUS,
                    tuple(structure),
                    len(structure),
                    names=_names(names),
                )
        elif isinstance(structure, int):
            count = structure
        else:
            raise TopologyError("homogeneous structure must be a device count or list")
        return Topology.homogeneous(count, names=names)
    if "edge_beta" in doc or "edge_alpha" in doc:
        raise TopologyError("edge parameters are only valid for rings")

    topo = Topology.tree(structure, names=names)
    if kind == "symmetric_tree" and topo.kind is not TopologyKind.SYMMETRIC_TREE:
        raise TopologyError(f"structure {structure} is not a symmetric tree")
    if kind == "asymmetric_tree" and topo.kind is not TopologyKind.ASYMMETRIC_TREE:
        raise TopologyError(f"structure {structure} is symmetric, not asymmetric")
    return topo


def load_topology(path) -> Topology:
    with open(path) as fh:
        return parse_topology(fh.read())


def _leaf_paths(node) -> list[tuple[int, ...]]:
    """Ancestor branching counts per device, innermost switch first.

    Each device gets its leaf-group size followed by the child counts of the
    switches above it, ordered from the leaf group's parent upwards.
    """
    paths: list[tuple[int, ...]] = []
    ids: list[tuple[int, ...]] = []

    def walk(n, chain, idchain):
        if isinstance(n, int):
            for _ in range(n):
                paths.append((n,) + chain)
                ids.append(idchain)
            return
        for pos, child in enumerate(n):
            walk(child, (len(n),) + chain, (pos,) + idchain)

    walk(node, (), ())
    return list(zip(paths, ids))


def _pair_level(node_info_i, node_info_j) -> int:
    (chain_i, ids_i), (chain_j, ids_j) = node_info_i, node_info_j
    # ids run innermost first; the root-side suffix is shared down to the LCA
    root_i, root_j = ids_i[::-1], ids_j[::-1]
    shared = 0
    while shared < min(len(root_i), len(root_j)) and root_i[shared] == root_j[shared]:
        shared += 1
    if shared == len(root_i) and shared == len(root_j):
        return 0
    # branching switches from i's leaf group up to the LCA; the first one is
    # i's own group, single-child switches (one-device leaf groups too) collapse
    hops = len(root_i) - shared
    branching = chain_i[:hops + 1]
    return sum(1 for b in branching if b > 1) - 1


def _require_tree(topo: Topology):
    if topo.kind is TopologyKind.HOMOGENEOUS:
        return (topo.device_count,)
    if not topo.is_tree:
        raise TopologyError(f"{topo.kind.value} topology has no switch groups")
    return topo.structure


def level_matrix(topo: Topology) -> np.ndarray:
    """P x P integer matrix: group index of ``j`` as seen from ``i``."""
    info = _leaf_paths(_require_tree(topo))
    P = len(info)
    out = np.zeros((P, P), dtype=np.int64)
    for i in range(P):
        for j in range(P):
            if i != j:
                out[i, j] = _pair_level(info[i], info[j])
    return out


def group_of(topo: Topology, i: int) -> list[frozenset[int]]:
    """Devices grouped by how many switch levels separate them from ``i``.

    ``groups[0]`` is the own leaf group and contains ``i`` itself.
    """
    P = topo.device_count
    if not 0 <= i < P:
        raise IndexError(f"device {i} outside 0..{P - 1}")
    row = level_matrix(topo)[i]
    n_levels = int(row.max()) + 1
    return [frozenset(int(j) for j in np.flatnonzero(row == lvl)) for lvl in range(n_levels)]


def _validate_square(name, mat, P):
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {mat.shape}")
    if P is not None and mat.shape[0] != P:
        raise ValueError(f"{name} has side {mat.shape[0]}, topology has {P} devices")


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LinkProfile:
    """Pairwise latency (us) and inverse bandwidth (us/MB) between devices."""

    alpha: np.ndarray
    beta: np.ndarray
    self_beta_floor: float = DEFAULT_SELF_BETA_FLOOR
    origin: str = "measured"

    def __post_init__(self):
        alpha, beta = _readonly(self.alpha), _readonly(self.beta)
        _validate_square("alpha", alpha, None)
        _validate_square("beta", beta, alpha.shape[0])
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValueError("profile entries must be finite")
        if np.any(alpha < 0) or np.any(beta < 0):
            raise ValueError("profile entries must be non-negative")
        if self.self_beta_floor <= 0:
            raise ValueError("self_beta_floor must be positive")
        if np.any(np.diag(beta) < self.self_beta_floor):
            raise ValueError("diagonal beta below self_beta_floor")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def size(self) -> int:
        return self.alpha.shape[0]

    def is_homogeneous(self, rtol: float = 1e-6) -> bool:
        off = ~np.eye(self.size, dtype=bool)
        if self.size < 2:
            return True
        b = self.beta[off]
        return bool(np.all(np.abs(b - b[0]) <= rtol * abs(b[0])))


@dataclass(frozen=True)
class HierarchicalProfile(LinkProfile):
    """Smoothed profile, constant within each switch-level group."""

    level_alpha: tuple[float, ...] = ()
    level_beta: tuple[float, ...] = ()
    groups: dict = field(default_factory=dict, compare=False)
    topology: Topology | None = field(default=None, compare=False)


def _mean(values: Sequence[float]) -> float:
    # exact on constant input, which makes smoothing idempotent
    lo, hi = min(values), max(values)
    if lo == hi:
        return float(lo)
    return math.fsum(values) / len(values)


def smooth_profile(topo: Topology, raw: LinkProfile) -> HierarchicalProfile:
    """Average the raw profile per switch level into a hierarchical profile."""
    if topo.kind is TopologyKind.ASYMMETRIC_TREE:
        raise TopologyError("asymmetric trees must go through merge_asymmetric first")
    _require_tree(topo)
    P = topo.device_count
    if raw.size != P:
        raise ValueError(f"profile has side {raw.size}, topology has {P} devices")
    levels = level_matrix(topo)
    n_levels = int(levels.max()) + 1 if P > 1 else 1
    off = ~np.eye(P, dtype=bool)

    level_alpha, level_beta = [], []
    for lvl in range(n_levels):
        mask = (levels == lvl) & off
        if not mask.any():
            if lvl > 0:
                raise TopologyError(f"switch level {lvl} has no device pairs")
            # singleton leaf groups: level 0 carries only self links
            level_alpha.append(float("nan"))
            level_beta.append(float("nan"))
            continue
        level_alpha.append(_mean(raw.alpha[mask].tolist()))
        level_beta.append(_mean(raw.beta[mask].tolist()))

    alpha_hat = np.empty((P, P))
    beta_hat = np.empty((P, P))
    for lvl in range(n_levels):
        mask = (levels == lvl) & off
        alpha_hat[mask] = level_alpha[lvl]
        beta_hat[mask] = level_beta[lvl]
    diag_alpha = _mean(np.diag(raw.alpha).tolist())
    diag_beta = max(_mean(np.diag(raw.beta).tolist()), raw.self_beta_floor)
    np.fill_diagonal(alpha_hat, diag_alpha)
    np.fill_diagonal(beta_hat, diag_beta)

    groups = {}
    for i in range(P):
        for lvl in range(n_levels):
            groups[(i, lvl)] = frozenset(int(j) for j in np.flatnonzero(levels[i] == lvl))
        groups[(i, 0)] = groups[(i, 0)] | {i}

    return HierarchicalProfile(
        alpha=alpha_hat,
        beta=beta_hat,
        self_beta_floor=raw.self_beta_floor,
        origin="hierarchical",
        level_alpha=tuple(level_alpha),
        level_beta=tuple(level_beta),
        groups=groups,
        topology=topo,
    )


def _ring_paths(P: int, i: int, j: int):
    """Edge indices of the clockwise and counter-clockwise routes from position i to j."""
    cw = [(i + h) % P for h in range((j - i) % P)]
    ccw = [(i - h - 1) % P for h in range((i - j) % P)]
    return cw, ccw


def ring_effective_profile(
    topo: Topology,
    edge_beta: Sequence[float] | None = None,
    edge_alpha: Sequence[float] | None = None,
    self_beta: float | None = None,
    self_beta_floor: float = DEFAULT_SELF_BETA_FLOOR,
) -> LinkProfile:
    """End-to-end profile of a ring: bandwidth of the slowest hop, latency summed.

    Edge ``e`` joins ring positions ``e`` and ``e + 1``. Of the two directions
    the one with the smaller bottleneck beta wins, then smaller total alpha,
    then clockwise.
    """
    if topo.kind is not TopologyKind.RING:
        raise TopologyError(f"{topo.kind.value} topology is not a ring")
    P = topo.device_count
    edge_beta = topo.edge_beta if edge_beta is None else edge_beta
    edge_alpha = topo.edge_alpha if edge_alpha is None else edge_alpha
    if edge_beta is None:
        raise ValueError("ring profile needs per-edge beta values")
    eb = np.asarray(edge_beta, dtype=np.float64)
    ea = np.zeros(P) if edge_alpha is None else np.asarray(edge_alpha, dtype=np.float64)
    if eb.shape != (P,) or ea.shape != (P,):
        raise TopologyError("a ring of P devices has exactly P edges")
    if np.any(eb <= 0) or np.any(ea < 0):
        raise ValueError("ring edge beta must be positive and edge alpha non-negative")

    pos = {dev: p for p, dev in enumerate(topo.structure)}
    alpha = np.zeros((P, P))
    beta = np.zeros((P, P))
    for di in range(P):
        for dj in range(P):
            if di == dj:
                continue
            candidates = []
            for rank, path in enumerate(_ring_paths(P, pos[di], pos[dj])):
                candidates.append((float(eb[path].max()), float(ea[path].sum()), rank))
            bottleneck, latency, _ = min(candidates)
            beta[di, dj] = bottleneck
            alpha[di, dj] = latency
    if self_beta is None:
        self_beta = eb.min() / 10.0
    np.fill_diagonal(beta, max(float(self_beta), self_beta_floor))
    return LinkProfile(alpha, beta, self_beta_floor=self_beta_floor, origin="ring")


def merge_asymmetric(topo: Topology) -> Topology:
    """Fold an asymmetric tree into a symmetric one with the same devices.

    Within every switch, the shallowest (then smallest, then leftmost) child
    that breaks uniformity is flattened into its nearest sibling, preferring
    the left neighbour, until all children share one shape.
    """
    if topo.kind is TopologyKind.SYMMETRIC_TREE:
        return topo
    if topo.kind is not TopologyKind.ASYMMETRIC_TREE:
        raise TopologyError(f"cannot merge a {topo.kind.value} topology")
    merged = _merge_node(topo.structure)
    if isinstance(merged, int):
        merged = (merged,)
    return Topology.tree(_thaw(merged), names=topo.names)


def _merge_node(node):
    if isinstance(node, int):
        return node
    children = [_merge_node(child) for child in node]
    while len(children) > 1 and len({_signature(_collapse(c)) for c in children}) > 1:
        victim = min(
            range(len(children)),
            key=lambda idx: (_depth(_collapse(children[idx])), _count(children[idx]), idx),
        )
        target = victim - 1 if victim > 0 else victim + 1
        joined = _absorb(children[target], children[victim], victim < target)
        children[target] = _merge_node(joined)
        del children[victim]
    return tuple(children)


def _absorb(target, victim, prepend: bool):
    target, victim = _collapse(target), _collapse(victim)
    if isinstance(target, int) and isinstance(victim, int):
        return target + victim
    if isinstance(target, int):
        # victim is never deeper than target
        raise AssertionError("deeper subtree chosen for flattening")
    extra = (victim,) if isinstance(victim, int) else tuple(victim)
    return extra + tuple(target) if prepend else tuple(target) + extra


# --- profile ingestion -------------------------------------------------------

PROFILE_HEADER = ("src", "dst", "alpha_us", "beta_us_per_mb")


def complete_profile(
    alpha: np.ndarray,
    beta: np.ndarray,
    topo: Topology | None = None,
    self_beta_floor: float = DEFAULT_SELF_BETA_FLOOR,
) -> LinkProfile:
    """Fill NaN entries: mirror pair first, then level average, then diagonal default.

    A missing self-copy beta takes the mean of the measured ones, or a tenth
    of the fastest link when none was measured; missing self alpha is zero.
    """
    alpha = np.array(alpha, dtype=np.float64)
    beta = np.array(beta, dtype=np.float64)
    P = alpha.shape[0]
    off = ~np.eye(P, dtype=bool)
    for mat in (alpha, beta):
        hole = np.isnan(mat) & off
        mat[hole] = mat.T[hole]

    if (np.isnan(alpha) | np.isnan(beta))[off].any():
        if topo is None or not (topo.is_tree or topo.kind is TopologyKind.HOMOGENEOUS):
            raise ValueError("profile has missing pairs and no tree topology to fill them")
        levels = level_matrix(topo)
        for mat in (alpha, beta):
            for lvl in np.unique(levels[off]):
                mask = (levels == lvl) & off
                known = mat[mask & ~np.isnan(mat)]
                if known.size == 0:
                    raise ValueError(f"no measured pairs at switch level {lvl}")
                mat[mask & np.isnan(mat)] = known.mean()

    diag = np.diag(beta).copy()
    if np.isnan(diag).any():
        if not np.isnan(diag).all():
            default = np.nanmean(diag)
        else:
            default = beta[off].min() / 10.0 if P > 1 else self_beta_floor
        diag[np.isnan(diag)] = default
    np.fill_diagonal(beta, np.maximum(diag, self_beta_floor))
    adiag = np.diag(alpha).copy()
    adiag[np.isnan(adiag)] = np.nanmean(adiag) if not np.isnan(adiag).all() else 0.0
    np.fill_diagonal(alpha, adiag)
    return LinkProfile(alpha, beta, self_beta_floor=self_beta_floor)


def read_profile_csv(
    text: str,
    topo: Topology | None = None,
    self_beta_floor: float = DEFAULT_SELF_BETA_FLOOR,
) -> LinkProfile:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != PROFILE_HEADER:
        raise ValueError(f"profile CSV header must be {','.join(PROFILE_HEADER)}")
    rows = [
        (int(r["src"]), int(r["dst"]), float(r["alpha_us"]), float(r["beta_us_per_mb"]))
        for r in reader
    ]
    if not rows:
        raise ValueError("profile CSV has no rows")
    P = topo.device_count if topo is not None else 1 + max(max(s, d) for s, d, _, _ in rows)
    alpha = np.full((P, P), np.nan)
    beta = np.full((P, P), np.nan)
    for src, dst, a, b in rows:
        if not (0 <= src < P and 0 <= dst < P):
            raise ValueError(f"pair ({src}, {dst}) outside 0..{P - 1}")
        alpha[src, dst] = a
        beta[src, dst] = b
    return complete_profile(alpha, beta, topo, self_beta_floor)


def load_profile(path, topo: Topology | None = None, **kwargs) -> LinkProfile:
    with open(path) as fh:
        return read_profile_csv(fh.read(), topo, **kwargs)


def profile_to_csv(profile: LinkProfile) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(PROFILE_HEADER)
    for i in range(profile.size):
        for j in range(profile.size):
            writer.writerow([i, j, repr(float(profile.alpha[i, j])), repr(float(profile.beta[i, j]))])
    return out.getvalue()


def hierarchical_from_levels(
    topo: Topology,
    level_beta: Iterable[float],
    self_beta: float,
    level_alpha: Iterable[float] | None = None,
    self_alpha: float = 0.0,
) -> HierarchicalProfile:
    """Synthesize a level-constant profile for a symmetric tree (testing, demos)."""
    levels = level_matrix(topo)
    lb = list(level_beta)
    la = [0.0] * len(lb) if level_alpha is None else list(level_alpha)
    beta = np.asarray(lb, dtype=np.float64)[levels]
    alpha = np.asarray(la, dtype=np.float64)[levels]
    np.fill_diagonal(beta, self_beta)
    np.fill_diagonal(alpha, self_alpha)
    floor = min(DEFAULT_SELF_BETA_FLOOR, self_beta)
    return smooth_profile(topo, LinkProfile(alpha, beta, self_beta_floor=floor))
