"""Random relations and graphs for audits and demos.

The factor construction gives every tuple a multiplicity equal to a product
of pairwise edge factors, so the frequency distribution factorises over the
graph and every separation is an exact independence.
"""
from __future__ import annotations

import itertools
import random
import string
from typing import Sequence

from .relcore import Relation
from .ugm import UndirectedGraph, verify_map


def value(attr: str, i: int) -> str:
    return f"{attr.lower()}{i}"


def random_relation(rng: random.Random, attrs: Sequence[str], domain: int = 3,
                    max_rows: int = 40, name: str = "R") -> Relation:
    n = rng.randint(1, max_rows)
    rows = [tuple(value(a, rng.randrange(domain)) for a in attrs) for _ in range(n)]
    return Relation(attrs, rows, name)


def random_connected_graph(rng: random.Random, vertices: Sequence[str],
                           extra_edge_prob: float = 0.3) -> UndirectedGraph:
    """Random spanning tree plus a few extra edges."""
    vs = list(vertices)
    order = vs[:]
    rng.shuffle(order)
    edges = {frozenset((order[i], order[rng.randrange(i)])) for i in range(1, len(order))}
    for a, b in itertools.combinations(vs, 2):
        if frozenset((a, b)) not in edges and rng.random() < extra_edge_prob:
            edges.add(frozenset((a, b)))
    return UndirectedGraph(vs, edges)


def factor_relation(rng: random.Random, g: UndirectedGraph, domain: int = 2,
                    low: int = 1, high: int = 5, name: str = "R") -> Relation:
    """Multiplicity of a tuple = product over edges of a random integer factor."""
    names = sorted(g.vertices)
    edges = g.sorted_edges()
    factors = {e: {(i, j): rng.randint(low, high) for i in range(domain) for j in range(domain)}
               for e in edges}
    pos = {a: k for k, a in enumerate(names)}
    counts = {}
    for combo in itertools.product(range(domain), repeat=len(names)):
        m = 1
        for a, b in edges:
            m *= factors[(a, b)][combo[pos[a]], combo[pos[b]]]
        counts[tuple(value(a, combo[pos[a]]) for a in names)] = m
    return Relation(names, counts, name)


def perfect_factor_relation(rng: random.Random, g: UndirectedGraph, domain: int = 2,
                            name: str = "R", tries: int = 200) -> Relation:
    """Resample factor draws until ``g`` is a perfect map of the result."""
    for _ in range(tries):
        r = factor_relation(rng, g, domain, name=name)
        if verify_map(g, r, "p_map").holds:
            return r
    raise RuntimeError(f"no perfect draw for {g.sorted_edges()} after {tries} tries")


def attribute_names(n: int, start: int = 0) -> list[str]:
    return list(string.ascii_uppercase[start:start + n])
