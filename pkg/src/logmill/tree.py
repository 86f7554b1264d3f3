"""Fixed-depth prefix tree routing token sequences to candidate clusters.

Nodes are keyed by syntax-template entries (a literal token, ``<*>``, or a
mixed pattern like ``blk_<*>``).  Traversal follows the child whose key equals
the current token plus every child whose key contains a placeholder, so mixed
keys act as universal matchers during routing; precision is recovered by the
loose/strict checks applied to the shortlisted clusters afterwards.

Templates longer than the depth cap share the node at the cap.  The tree is an
index only: it is never serialized, and an equivalent tree can be rebuilt from
the cluster store at any time.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence

from .model import PLACEHOLDER, SyntaxTemplate, loose_match, strict_match

DEFAULT_DEPTH_CAP = 16


class MatchKind(enum.Enum):
    NONE = "none"
    LOOSE = "loose"
    STRICT = "strict"


@dataclass
class MatchResult:
    """Outcome of one tree search.

    ``strict_cluster`` is set only for STRICT (search stops at the first
    strict hit).  ``loose_candidates`` is ordered by descending cluster size,
    ties broken by lower cluster id, and is empty for NONE.
    """

    kind: MatchKind
    strict_cluster: int | None = None
    loose_candidates: list[int] = field(default_factory=list)


class SearchableCluster(Protocol):
    """What search() needs from a cluster store entry."""

    size: int

    @property
    def syntax_variants(self) -> Mapping[int, Sequence[SyntaxTemplate]]: ...


class _Node:
    __slots__ = ("key", "children", "wild_children", "cluster_refs")

    def __init__(self, key: str):
        self.key = key
        self.children: dict[str, _Node] = {}
        # Children whose key contains <*>, cached so traversal does not scan
        # every sibling at wide nodes.
        self.wild_children: list[_Node] = []
        self.cluster_refs: set[int] = set()


class ParseTree:
    def __init__(self, depth_cap: int = DEFAULT_DEPTH_CAP):
        if depth_cap < 1:
            raise ValueError(f"depth cap must be >= 1, got {depth_cap}")
        self.depth_cap = depth_cap
        self._root = _Node("")

    # ---- maintenance ----

    def insert(self, template: SyntaxTemplate, cluster_id: int) -> None:
        """Add a routing path for one syntax variant.  Idempotent."""
        node = self._root
        for depth, entry in enumerate(template.entries):
            if depth == self.depth_cap:
                break
            child = node.children.get(entry)
            if child is None:
                child = _Node(entry)
                node.children[entry] = child
                if PLACEHOLDER in entry:
                    node.wild_children.append(child)
            node = child
        node.cluster_refs.add(cluster_id)

    def prune_stale(self, clusters: Mapping[int, SearchableCluster]) -> int:
        """Drop refs whose cluster is gone or no longer has a variant of a
        depth-compatible token count, then delete emptied subtrees.

        Returns the number of refs removed.
        """
        removed = 0

        def compatible(cluster: SearchableCluster, depth: int) -> bool:
            counts = cluster.syntax_variants.keys()
            if depth < self.depth_cap:
                return depth in counts
            return any(count >= self.depth_cap for count in counts)

        def walk(node: _Node, depth: int) -> None:
            nonlocal removed
            if node.cluster_refs:
                keep = {
                    cid
                    for cid in node.cluster_refs
                    if cid in clusters and compatible(clusters[cid], depth)
                }
                removed += len(node.cluster_refs) - len(keep)
                node.cluster_refs = keep
            dead = []
            for key, child in node.children.items():
                walk(child, depth + 1)
                if not child.children and not child.cluster_refs:
                    dead.append(key)
            for key in dead:
                del node.children[key]
            node.wild_children = [
                child for child in node.children.values() if PLACEHOLDER in child.key
            ]

        walk(self._root, 0)
        return removed

    @classmethod
    def rebuild(
        cls,
        clusters: Mapping[int, SearchableCluster],
        depth_cap: int = DEFAULT_DEPTH_CAP,
    ) -> "ParseTree":
        """Fresh tree holding exactly the variants the cluster store owns."""
        tree = cls(depth_cap=depth_cap)
        for cid in sorted(clusters):
            variants = clusters[cid].syntax_variants
            for count in sorted(variants):
                for variant in variants[count]:
                    tree.insert(variant, cid)
        return tree

    # ---- search ----

    def candidate_ids(self, tokens: Sequence[str]) -> set[int]:
        """Union of cluster refs on every node the traversal visits."""
        refs: set[int] = set()
        frontier: list[_Node] = [self._root]
        for depth, token in enumerate(tokens):
            if depth == self.depth_cap:
                break
            advanced: list[_Node] = []
            for node in frontier:
                exact = node.children.get(token)
                if exact is not None:
                    advanced.append(exact)
                for child in node.wild_children:
                    if child is not exact:
                        advanced.append(child)
            if not advanced:
                break
            for node in advanced:
                refs |= node.cluster_refs
            frontier = advanced
        return refs

    def search(
        self, tokens: Sequence[str], clusters: Mapping[int, SearchableCluster]
    ) -> MatchResult:
        """Route tokens to the shortlist, then loose/strict-check candidates.

        Candidates are checked in canonical order (descending size, then lower
        id); the first strict hit wins.  Refs to clusters that vanished or
        that lack a variant of this token count are skipped.
        """
        return _match_candidates(self.candidate_ids(tokens), tokens, clusters)


def _match_candidates(
    candidate_ids: Iterable[int],
    tokens: Sequence[str],
    clusters: Mapping[int, SearchableCluster],
) -> MatchResult:
    count = len(tokens)
    ranked = []
    for cid in candidate_ids:
        cluster = clusters.get(cid)
        if cluster is not None and count in cluster.syntax_variants:
            ranked.append((-cluster.size, cid))
    ranked.sort()

    loose_ids: list[int] = []
    for _, cid in ranked:
        cluster = clusters[cid]
        saw_loose = False
        for variant in cluster.syntax_variants[count]:
            if not loose_match(variant, tokens):
                continue
            saw_loose = True
            if strict_match(variant, tokens):
                return MatchResult(MatchKind.STRICT, strict_cluster=cid)
        if saw_loose:
            loose_ids.append(cid)
    if loose_ids:
        return MatchResult(MatchKind.LOOSE, loose_candidates=loose_ids)
    return MatchResult(MatchKind.NONE)


def linear_scan(
    tokens: Sequence[str], clusters: Mapping[int, SearchableCluster]
) -> MatchResult:
    """Tree-free reference search over every cluster; same ordering rules.

    Exists so tree routing can be checked for search-equivalence (the tree
    must shortlist every cluster the scan would match).
    """
    return _match_candidates(list(clusters), tokens, clusters)
