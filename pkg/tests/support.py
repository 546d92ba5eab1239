"""Shared test helpers, including the brute-force d-separation oracle.

The oracle works on plain label/edge sets and enumerates simple paths
itself, so it shares no code with the production reachability
procedure it audits.
"""

from __future__ import annotations

import random


def skeleton_adjacency(nodes, edges):
    adj = {v: set() for v in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return adj


def all_simple_paths(nodes, edges, x, y):
    adj = skeleton_adjacency(nodes, edges)
    paths = []
    stack = [(x, [x])]
    while stack:
        v, trail = stack.pop()
        for nxt in adj[v]:
            if nxt == y:
                paths.append(trail + [y])
            elif nxt not in trail:
                stack.append((nxt, trail + [nxt]))
    return paths


def descendants_of(edges, v):
    children = {}
    for a, b in edges:
        children.setdefault(a, set()).add(b)
    seen = set()
    stack = list(children.get(v, ()))
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        stack.extend(children.get(u, ()))
    return seen


def path_is_blocked(path, edges, zs):
    for i in range(1, len(path) - 1):
        prev_in = (path[i - 1], path[i]) in edges
        next_in = (path[i + 1], path[i]) in edges
        if prev_in and next_in:  # collider
            if path[i] not in zs and not (descendants_of(edges, path[i]) & set(zs)):
                return True
        elif path[i] in zs:
            return True
    return False


def brute_d_separated(nodes, edges, xs, ys, zs):
    """Path-by-path blocking check over an explicit path enumeration."""
    for x in xs:
        for y in ys:
            for path in all_simple_paths(nodes, edges, x, y):
                if not path_is_blocked(path, edges, zs):
                    return False
    return True


def random_dag_elements(rand: random.Random, max_nodes: int = 7):
    """Random labelled DAG as (label list, edge set over ordered labels)."""
    n = rand.randint(2, max_nodes)
    labels = [chr(ord("A") + i) for i in range(n)]
    edges = set()
    p = rand.uniform(0.2, 0.6)
    for i in range(n):
        for j in range(i + 1, n):
            if rand.random() < p:
                edges.add((labels[i], labels[j]))
    return labels, edges
