"""Canonical labels N.i.g.n for subgroups of GL2(Z/NZ).

Groups sharing level, index and genus are totally ordered by
(parent list, orbit signature, class signature, minimal conjugate);
the ordinal n is the 1-based rank in that order.  The invariants are
computed lazily in that sequence since each is more expensive than the
one before.
"""

from functools import lru_cache
from math import gcd

from .modmat import GL2Element, gl2_order
from .gl2group import (SubgroupRep, invariants, is_conjugate, _mul, _inv,
                       _close_incremental, IDENT)


class Label:
    __slots__ = ("level", "index", "genus", "ordinal", "det_index", "det_ordinal")

    def __init__(self, level, index, genus, ordinal, det_index=1, det_ordinal=1):
        self.level = level
        self.index = index
        self.genus = genus
        self.ordinal = ordinal
        self.det_index = det_index
        self.det_ordinal = det_ordinal

    def render(self):
        base = "%d.%d.%d.%d" % (self.level, self.index, self.genus, self.ordinal)
        if self.det_index != 1 or self.det_ordinal != 1:
            return "%d.%d.%d-%s" % (self.level, self.det_index,
                                    self.det_ordinal, base)
        return base

    @classmethod
    def parse(cls, text):
        text = text.strip()
        det_index = det_ordinal = 1
        if "-" in text:
            head, text = text.split("-", 1)
            hp = head.split(".")
            if len(hp) != 3:
                raise ValueError("bad extended label %r" % text)
            _, det_index, det_ordinal = (int(x) for x in hp)
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError("bad label %r" % text)
        lv, i, g, n = (int(x) for x in parts)
        if n < 1:
            raise ValueError("label ordinal must be >= 1")
        return cls(lv, i, g, n, det_index, det_ordinal)

    def key(self):
        return (self.level, self.index, self.genus, self.ordinal,
                self.det_index, self.det_ordinal)

    def __eq__(self, other):
        return isinstance(other, Label) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return "Label(%s)" % self.render()


def _vector_order(v, N):
    return N // gcd(N, gcd(v[0], v[1]))


def _cached(H, key, fn):
    cache = getattr(H, "_label_cache", None)
    if cache is None:
        cache = {}
        H._label_cache = cache
    if key not in cache:
        cache[key] = fn()
    return cache[key]


def orbit_signature(H):
    """Orbits of (Z/N)^2 under left multiplication, as (e, s, m) triples."""
    return _cached(H, "orbit", lambda: _orbit_signature(H))


def _orbit_signature(H):
    N = H.modulus
    gens = H.generators_tuples()
    if H.is_full:
        gens = [(0, N - 1, 1, 0), (1, 1, 0, 1)] + [
            (u, 0, 0, 1) for u in range(2, N) if gcd(u, N) == 1][:2]
    seen = [False] * (N * N)
    sizes = {}
    for start in range(N * N):
        if seen[start]:
            continue
        v0 = (start // N, start % N)
        orbit = [v0]
        seen[start] = True
        i = 0
        while i < len(orbit):
            x, y = orbit[i]
            i += 1
            for g in gens:
                w = ((g[0] * x + g[1] * y) % N, (g[2] * x + g[3] * y) % N)
                idx = w[0] * N + w[1]
                if not seen[idx]:
                    seen[idx] = True
                    orbit.append(w)
        e = _vector_order(v0, N)
        key = (e, len(orbit))
        sizes[key] = sizes.get(key, 0) + 1
    return tuple(sorted((e, s, m) for (e, s), m in sizes.items()))


def class_signature(H):
    """H-conjugacy classes tallied as (order, det, trace, size, mult)."""
    return _cached(H, "class", lambda: _class_signature(H))


def _class_signature(H):
    N = H.modulus
    elems = set(H.element_set())
    gens = H.generators_tuples()
    gens = gens + [_inv(g, N) for g in gens]
    tally = {}
    while elems:
        x = elems.pop()
        cls = {x}
        frontier = [x]
        while frontier:
            nxt = []
            for y in frontier:
                for g in gens:
                    z = _mul(_mul(g, y, N), _inv(g, N), N)
                    if z not in cls:
                        cls.add(z)
                        nxt.append(z)
            frontier = nxt
        elems -= cls
        m = GL2Element.from_tuple(x, N)
        key = (m.order(), m.det(), m.trace(), len(cls))
        tally[key] = tally.get(key, 0) + 1
    return tuple(sorted(k + (m,) for k, m in tally.items()))


def _sorted_tuples(elements):
    return tuple(sorted(elements))


def minimal_conjugate(H, budget=20_000_000):
    """The conjugate of H whose sorted element list is lexicographically least."""
    N = H.modulus
    if H.is_full:
        return H
    elems = list(H.element_set())
    if gl2_order(N) * len(elems) > budget:
        raise RuntimeError("minimal_conjugate budget exceeded")
    best = None
    for a in range(N):
        for b in range(N):
            for c in range(N):
                for d in range(N):
                    if gcd((a * d - b * c) % N, N) != 1:
                        continue
                    g = (a, b, c, d)
                    gi = _inv(g, N)
                    conj = _sorted_tuples(_mul(_mul(g, x, N), gi, N)
                                          for x in elems)
                    if best is None or conj < best:
                        best = conj
    return SubgroupRep.from_tuples(N, list(best))


def minimal_conjugate_key(H, budget=20_000_000):
    return _cached(H, "minconj",
                   lambda: _sorted_tuples(minimal_conjugate(H, budget).element_set()))


def parents(H, max_ambient_order=30_000):
    return _cached(H, "parents", lambda: _parents(H, max_ambient_order))


def _parents(H, max_ambient_order=30_000):
    """Minimal proper supergroups of H in GL2(N), up to conjugacy.

    Found by closing H together with one extra element, over double
    coset representatives, then keeping inclusion-minimal results.
    Intended for small moduli; guarded by an ambient-order budget.
    """
    N = H.modulus
    if H.is_full or H.index() == 1:
        return []
    if gl2_order(N) > max_ambient_order:
        raise RuntimeError("parent search budget exceeded at modulus %d" % N)
    helems = H.element_set()
    ambient = [(a, b, c, d)
               for a in range(N) for b in range(N)
               for c in range(N) for d in range(N)
               if gcd((a * d - b * c) % N, N) == 1]
    seen_cosets = {}
    cosets = []
    for g in ambient:
        k = min(_mul(h, g, N) for h in helems)
        if k not in seen_cosets:
            seen_cosets[k] = len(cosets)
            cosets.append(g)
    # double cosets: orbits of cosets under right multiplication by H
    visited = set()
    reps = []
    for idx, g in enumerate(cosets):
        if idx in visited:
            continue
        reps.append(g)
        stack = [g]
        while stack:
            x = stack.pop()
            for h in H.generators_tuples():
                y = _mul(x, h, N)
                k = min(_mul(hh, y, N) for hh in helems)
                j = seen_cosets[k]
                if j not in visited:
                    visited.add(j)
                    stack.append(cosets[j])
    supergroups = []
    for g in reps:
        if g in helems:
            continue
        elems, _ = _close_incremental(list(H.generators_tuples()) + [g], N)
        supergroups.append(frozenset(elems))
    # inclusion-minimal distinct supergroups
    minimal = []
    for s in sorted(set(supergroups), key=len):
        if not any(t < s for t in minimal):
            minimal.append(s)
    out = []
    for s in minimal:
        K = SubgroupRep.from_tuples(N, sorted(s))
        if not any(is_conjugate(K, K2) for K2 in out):
            out.append(K)
    return out


def parent_labels(H, context=None):
    """Labels of the minimal proper supergroups, lexicographically sorted."""
    labs = []
    for K in parents(H):
        labs.append(assign_label(K, context).render())
    return tuple(sorted(labs))


def sort_key(H, context=None, use_minimal_conjugate=True):
    key = [parent_labels(H, context), orbit_signature(H), class_signature(H)]
    if use_minimal_conjugate:
        key.append(minimal_conjugate_key(H))
    return tuple(key)


def assign_label(H, context=None):
    """Label N.i.g.n for H; context lists the other members of S(N,i,g).

    context: iterable of SubgroupRep with the same level/index/genus
    (H itself need not be included).  Without context the ordinal is 1,
    which is only correct when S(N,i,g) is a singleton.
    """
    lvl = H.level()
    Hl = H.reduce(lvl) if lvl != H.modulus else H
    idx = Hl.index()
    g = invariants(Hl).genus
    if lvl == 1:
        return Label(1, 1, 0, 1)
    peers = []
    for K in (context or []):
        Kl = K.reduce(K.level()) if K.level() != K.modulus else K
        if (Kl.modulus == lvl and Kl.index() == idx
                and invariants(Kl).genus == g
                and not is_conjugate(Kl, Hl)):
            peers.append(Kl)
    if not peers:
        return Label(lvl, idx, g, 1)
    # lazy comparison: try successively more expensive invariants
    for use_mc in (False, True):
        my = sort_key(Hl, context, use_mc)
        keys = [sort_key(K, context, use_mc) for K in peers]
        if my not in keys:
            n = 1 + sum(1 for k in keys if k < my)
            return Label(lvl, idx, g, n)
    raise RuntimeError("indistinguishable subgroups in label context")
