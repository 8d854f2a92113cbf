"""Independent oracles used by the test suite.

Deliberately implemented apart from the package code paths they check:
subset enumeration with union-find instead of bitmask BFS, an NFA over
surface strings instead of the trie, plain transitive closure instead of
graph search.
"""

from __future__ import annotations

import re
from itertools import combinations

_SPLIT = re.compile(r"\d+\.\d+|\d+|\w+|<=|>=|!=|<>|[^\w\s]", re.UNICODE)

FREE = "free"
LITERAL = "literal"


def split_pieces(text: str) -> tuple[str, ...]:
    return tuple(_SPLIT.findall(text))


def identifier_run_violations(
    surface_tokens: list[str],
    schema_forms: set[str],
    keywords: set[str],
    literal_words: set[str],
) -> int:
    """Count positions where the token stream cannot be explained as keywords,
    literals, quoted spans, or complete schema surface forms.

    Simulates a set of possible parses (NFA); a dead transition counts one
    violation and resets to the free state.  Trailing incomplete runs are not
    violations.
    """
    forms = [split_pieces(f) for f in schema_forms]
    states: set = {FREE}
    violations = 0
    for token in surface_tokens:
        next_states: set = set()
        for state in states:
            if state == LITERAL:
                next_states.add(FREE if token == "'" else LITERAL)
                continue
            if state == FREE:
                if token == "'":
                    next_states.add(LITERAL)
                    continue
                if token in keywords or token in literal_words or re.fullmatch(r"\d+(\.\d+)?", token):
                    next_states.add(FREE)
                for fi, form in enumerate(forms):
                    if form and form[0] == token:
                        if len(form) == 1:
                            next_states.add(FREE)
                        else:
                            next_states.add((fi, 1))
                continue
            fi, pos = state
            form = forms[fi]
            if form[pos] == token:
                if pos + 1 == len(form):
                    next_states.add(FREE)
                else:
                    next_states.add((fi, pos + 1))
        if not next_states:
            violations += 1
            next_states = {FREE}
        states = next_states
    return violations


def sequence_explained(
    surface_tokens: list[str],
    schema_forms: set[str],
    keywords: set[str],
    literal_words: set[str],
) -> bool:
    """True when the full stream parses with every identifier run complete."""
    if identifier_run_violations(surface_tokens, schema_forms, keywords, literal_words):
        return False
    # Re-run and require a FREE end state (no dangling run or open literal).
    forms = [split_pieces(f) for f in schema_forms]
    states: set = {FREE}
    for token in surface_tokens:
        nxt: set = set()
        for state in states:
            if state == LITERAL:
                nxt.add(FREE if token == "'" else LITERAL)
            elif state == FREE:
                if token == "'":
                    nxt.add(LITERAL)
                    continue
                if token in keywords or token in literal_words or re.fullmatch(r"\d+(\.\d+)?", token):
                    nxt.add(FREE)
                for fi, form in enumerate(forms):
                    if form and form[0] == token:
                        nxt.add(FREE if len(form) == 1 else (fi, 1))
            else:
                fi, pos = state
                if forms[fi][pos] == token:
                    nxt.add(FREE if pos + 1 == len(forms[fi]) else (fi, pos + 1))
        states = nxt
        if not states:
            return False
    return FREE in states


def brute_force_connector(
    n_tables: int, edges: list[tuple[int, int]], terminals: set[int]
) -> set[int] | None:
    """Exhaustive minimal connector: smallest superset of the terminals whose
    induced subgraph is connected; ties broken by smallest sorted index tuple.
    Returns None when no connector exists."""

    def connected(nodes: set[int]) -> bool:
        if len(nodes) <= 1:
            return True
        parent = {v: v for v in nodes}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for a, b in edges:
            if a in nodes and b in nodes:
                parent[find(a)] = find(b)
        return len({find(v) for v in nodes}) == 1

    others = sorted(set(range(n_tables)) - terminals)
    for size in range(len(others) + 1):
        for combo in combinations(others, size):
            candidate = terminals | set(combo)
            if connected(candidate):
                return candidate
    return None


def transitive_closure_connected(
    n_tables: int, edges: list[tuple[int, int]], a: int, b: int
) -> bool:
    """Connectivity by repeated squaring of the reachability relation."""
    reach = [[i == j for j in range(n_tables)] for i in range(n_tables)]
    for i, j in edges:
        reach[i][j] = reach[j][i] = True
    for _ in range(n_tables):
        for i in range(n_tables):
            for j in range(n_tables):
                if not reach[i][j]:
                    reach[i][j] = any(reach[i][k] and reach[k][j] for k in range(n_tables))
    return reach[a][b]
