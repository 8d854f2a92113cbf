"""SQL completion: infer missing FROM/JOIN tables and join keys from the schema graph.

Mentioned tables are treated as terminals; the connector is the smallest
table set whose induced table-link subgraph is connected.  Small graphs are
solved exactly by subset enumeration, larger ones by greedy pairwise merging
of closest components.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Iterable, Sequence

from structsql.schema import ColumnRef, DatabaseSchema, SchemaGraph
from structsql.sql_ast import SqlQuery, _iter_refs

logger = logging.getLogger(__name__)

EXACT_TABLE_LIMIT = 10


class Disconnected(ValueError):
    """No join path exists between two required tables."""

    def __init__(self, a: str, b: str):
        super().__init__(f"no join path between {a!r} and {b!r}")
        self.pair = (a, b)


class MissingJoinKey(RuntimeError):
    """A table-link edge has no foreign key pair (impossible by construction)."""


@dataclass(frozen=True)
class CompletionPlan:
    """Record of what completion added and why."""

    added_tables: tuple[str, ...] = ()
    join_conditions: tuple[tuple[ColumnRef, ColumnRef], ...] = ()
    rationale: tuple[str, ...] = ()

    @property
    def changed(self) -> bool:
        return bool(self.added_tables or self.join_conditions)


def connect_terminals(
    graph: SchemaGraph, terminals: Iterable[str], method: str = "auto"
) -> list[str]:
    """Minimal table set containing the terminals whose induced table-link
    subgraph is connected, in schema declaration order.

    ``method`` is "exact" (subset enumeration), "greedy" (pairwise component
    merge along shortest paths), or "auto" (exact up to 10 tables).  Ties are
    broken toward smaller declaration indices, so results are deterministic.
    """
    term_indices = sorted({graph.table_index(t) for t in terminals})
    if not term_indices:
        raise ValueError("at least one terminal table is required")
    if method not in ("auto", "exact", "greedy"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        method = "exact" if len(graph.tables) <= EXACT_TABLE_LIMIT else "greedy"
    if method == "exact":
        indices = _connect_exact(graph, term_indices)
    else:
        indices = _connect_greedy(graph, term_indices)
    return [graph.tables[i] for i in sorted(indices)]


def _adjacency_masks(graph: SchemaGraph) -> list[int]:
    masks = [0] * len(graph.tables)
    for i, name in enumerate(graph.tables):
        for neighbor in graph.neighbors(name):
            masks[i] |= 1 << graph.table_index(neighbor)
    return masks


def _mask_connected(mask: int, adj: list[int]) -> bool:
    seed = mask & -mask
    reach = seed
    while True:
        grown = reach
        probe = reach
        while probe:
            low = probe & -probe
            grown |= adj[low.bit_length() - 1] & mask
            probe ^= low
        if grown == reach:
            break
        reach = grown
    return reach == mask


def _connect_exact(graph: SchemaGraph, term_indices: list[int]) -> list[int]:
    adj = _adjacency_masks(graph)
    term_mask = 0
    for i in term_indices:
        term_mask |= 1 << i
    others = [i for i in range(len(graph.tables)) if not term_mask >> i & 1]
    for size in range(len(others) + 1):
        for combo in combinations(others, size):
            mask = term_mask
            for i in combo:
                mask |= 1 << i
            if _mask_connected(mask, adj):
                return [i for i in range(len(graph.tables)) if mask >> i & 1]
    a, b = _first_disconnected_pair(graph, term_indices)
    raise Disconnected(a, b)


def _first_disconnected_pair(graph: SchemaGraph, term_indices: list[int]) -> tuple[str, str]:
    for i, j in combinations(term_indices, 2):
        if not graph.connected(graph.tables[i], graph.tables[j]):
            return graph.tables[i], graph.tables[j]
    return graph.tables[term_indices[0]], graph.tables[term_indices[-1]]


def _connect_greedy(graph: SchemaGraph, term_indices: list[int]) -> list[int]:
    components: list[set[int]] = [{i} for i in term_indices]
    while len(components) > 1:
        best: tuple | None = None
        for a, b in combinations(range(len(components)), 2):
            path = _component_path(graph, components[a], components[b])
            if path is None:
                continue
            key = (len(path), tuple(path), a, b)
            if best is None or key < best[0]:
                best = (key, a, b, path)
        if best is None:
            a = graph.tables[min(components[0])]
            b = graph.tables[min(components[1])]
            raise Disconnected(a, b)
        _, a, b, path = best
        merged = components[a] | components[b] | set(path)
        components = [
            c for k, c in enumerate(components) if k not in (a, b)
        ] + [merged]
    return sorted(components[0])


def _component_path(
    graph: SchemaGraph, src: set[int], dst: set[int]
) -> list[int] | None:
    """Shortest path between two index sets, lexicographic-min tie-break."""
    from heapq import heappop, heappush

    heap: list[tuple[int, tuple[int, ...], int]] = []
    for i in sorted(src):
        heappush(heap, (0, (i,), i))
    best: dict[int, tuple[int, tuple[int, ...]]] = {}
    while heap:
        dist, path, node = heappop(heap)
        if node in dst:
            return list(path)
        known = best.get(node)
        if known is not None and known <= (dist, path):
            continue
        best[node] = (dist, path)
        for name in graph.neighbors(graph.tables[node]):
            nxt = graph.table_index(name)
            if nxt not in path:
                heappush(heap, (dist + 1, path + (nxt,), nxt))
    return None


def _scope_tables(q: SqlQuery, graph: SchemaGraph) -> list[str]:
    """Tables mentioned by this query level (its own clauses, not subqueries)."""
    seen: dict[str, None] = {}
    for t in q.from_tables:
        seen.setdefault(graph.canonical(t), None)
    for ref in _iter_refs(q):
        if ref.table:
            seen.setdefault(graph.canonical(ref.table), None)
    return list(seen)


def _conditions_span(from_tables: Sequence[str], conditions) -> bool:
    if len(from_tables) <= 1:
        return True
    index = {t.lower(): i for i, t in enumerate(from_tables)}
    parent = list(range(len(from_tables)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in conditions:
        ia, ib = index.get((a.table or "").lower()), index.get((b.table or "").lower())
        if ia is None or ib is None:
            continue
        parent[find(ia)] = find(ib)
    return len({find(i) for i in range(len(from_tables))}) == 1


def _first_fk(graph: SchemaGraph, a: str, b: str) -> tuple[ColumnRef, ColumnRef]:
    fks = graph.foreign_keys_between(a, b)
    if not fks:
        raise MissingJoinKey(f"table link {a!r}-{b!r} lost its foreign key")
    if len(fks) > 1:
        logger.info(
            "tables %r and %r share %d foreign keys; using the first declared",
            a, b, len(fks),
        )
    return fks[0]


def _join_order(
    graph: SchemaGraph, connector: list[str], root: str
) -> tuple[list[str], list[tuple[ColumnRef, ColumnRef]], dict[str, str]]:
    """BFS over the connector's induced subgraph: join order, FK conditions,
    and each table's tree parent."""
    in_connector = {t.lower() for t in connector}
    order = [root]
    conditions: list[tuple[ColumnRef, ColumnRef]] = []
    parents: dict[str, str] = {}
    visited = {root.lower()}
    frontier = [root]
    while frontier:
        current = frontier.pop(0)
        for neighbor in graph.neighbors(current):
            low = neighbor.lower()
            if low in in_connector and low not in visited:
                visited.add(low)
                order.append(neighbor)
                parents[neighbor] = current
                conditions.append(_first_fk(graph, current, neighbor))
                frontier.append(neighbor)
    return order, conditions, parents


def _rationale(graph: SchemaGraph, added: list[str], terminals: list[str]) -> list[str]:
    notes = []
    for table in added:
        note = f"{table}: required to connect the join graph"
        for a, b in combinations(terminals, 2):
            path = graph.shortest_path(a, b)
            if path and table in path[1:-1]:
                note = f"{table}: on the join path between {a} and {b}"
                break
        notes.append(note)
    return notes


def complete_sql(
    q: SqlQuery, schema: DatabaseSchema, graph: SchemaGraph
) -> tuple[SqlQuery, CompletionPlan]:
    """Rewrite the FROM clause so every mentioned table is join-connected.

    Already-connected queries come back unchanged with an empty plan.  Added
    join conditions always take the first-declared foreign key of each edge,
    rendered child-key = parent-key.  Clauses other than FROM are untouched;
    subqueries hanging off a set operation are completed recursively.
    """
    completed = q
    plan = CompletionPlan()
    terminals = _scope_tables(q, graph)
    if terminals:
        connector = connect_terminals(graph, terminals)
        from_set = {t.lower() for t in q.from_tables}
        fixed_point = (
            {t.lower() for t in connector} <= from_set
            and _conditions_span(q.from_tables, q.join_conditions)
        )
        if not fixed_point:
            # Every FROM table is itself a terminal, so the connector covers it.
            root = graph.canonical(q.from_tables[0]) if q.from_tables else connector[0]
            order, conditions, _ = _join_order(graph, connector, root)
            added = tuple(t for t in order if t.lower() not in from_set)
            plan = CompletionPlan(
                added_tables=added,
                join_conditions=tuple(conditions),
                rationale=tuple(_rationale(graph, list(added), terminals)),
            )
            completed = replace(
                q,
                from_tables=tuple(order),
                join_conditions=tuple(conditions),
            )

    if completed.set_op is not None:
        rhs, rhs_plan = complete_sql(completed.set_op[1], schema, graph)
        if rhs_plan.changed:
            completed = replace(completed, set_op=(completed.set_op[0], rhs))
            plan = CompletionPlan(
                added_tables=plan.added_tables + rhs_plan.added_tables,
                join_conditions=plan.join_conditions + rhs_plan.join_conditions,
                rationale=plan.rationale + rhs_plan.rationale,
            )
    return completed, plan
