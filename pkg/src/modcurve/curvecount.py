"""Counting F_q-points on X_H without a model.

The count splits as cusps + ordinary + supersingular + (j=0) + (j=1728).
Cusps are unipotent orbits of the coset space stable under (q 0;0 1);
the other terms are weighted sums of the permutation character of
[<H,-I>\\GL2(N)] evaluated at explicit Frobenius matrices A(a,b,D)
determined by the trace a, the conductor index b of Z[pi] in its CM
order, and that order's discriminant D.
"""

from fractions import Fraction
from math import gcd, isqrt

from .modmat import GL2Element
from .gl2group import SubgroupRep, CosetSpace, invariants


class FrobeniusTriple:
    """Trace a, conductor index b, CM-order discriminant disc, for F_q.

    b = 0 encodes Z[pi] = Z (even-power supersingular), with disc = 1.
    Otherwise 4q = a^2 - b^2*disc with disc < 0 congruent to 0 or 1 mod 4.
    """

    __slots__ = ("a", "b", "disc", "q")

    def __init__(self, a, b, disc, q):
        self.a = a
        self.b = b
        self.disc = disc
        self.q = q
        self.validate()

    def validate(self):
        if self.b < 0:
            raise ValueError("conductor index must be nonnegative")
        if self.b == 0:
            if self.disc != 1 or self.a * self.a != 4 * self.q:
                raise ValueError("b=0 requires disc=1 and a^2=4q")
            return
        if self.disc % 4 not in (0, 1):
            raise ValueError("bad discriminant residue %d" % self.disc)
        if self.disc >= 0:
            raise ValueError("discriminant must be negative when b > 0")
        if 4 * self.q != self.a * self.a - self.b * self.b * self.disc:
            raise ValueError("norm equation 4q = a^2 - b^2*disc fails")

    def __repr__(self):
        return "FrobeniusTriple(a=%d, b=%d, disc=%d, q=%d)" % (
            self.a, self.b, self.disc, self.q)


class PointCountBreakdown:
    __slots__ = ("cusps", "ordinary", "supersingular", "j0", "j1728")

    def __init__(self, cusps, ordinary, supersingular, j0, j1728):
        for v in (cusps, ordinary, supersingular, j0, j1728):
            if v < 0:
                raise ValueError("negative component")
        self.cusps = cusps
        self.ordinary = ordinary
        self.supersingular = supersingular
        self.j0 = j0
        self.j1728 = j1728

    @property
    def total(self):
        return (self.cusps + self.ordinary + self.supersingular
                + self.j0 + self.j1728)

    def __repr__(self):
        return "PointCountBreakdown(%d+%d+%d+%d+%d = %d)" % (
            self.cusps, self.ordinary, self.supersingular, self.j0,
            self.j1728, self.total)


# -- class numbers --------------------------------------------------------

_H_CACHE = {-3: 1, -4: 1}


def class_number(disc):
    """Class number h(disc) by counting reduced primitive forms.

    A form (a,b,c) with b^2-4ac = disc is reduced when |b| <= a <= c,
    with b >= 0 if |b| = a or a = c.
    """
    if disc >= 0 or disc % 4 not in (0, 1):
        raise ValueError("not a negative discriminant: %d" % disc)
    h = _H_CACHE.get(disc)
    if h is not None:
        return h
    h = 0
    b = disc & 1
    while b * b <= -disc // 3:
        m = b * b - disc
        if m % 4 == 0:
            m //= 4
            a = max(b, 1)
            while a * a <= m:
                if m % a == 0:
                    c = m // a
                    if gcd(gcd(a, b), c) == 1:
                        h += 1 if (b == 0 or a == b or a == c) else 2
                a += 1
        b += 2
    _H_CACHE[disc] = h
    return h


def class_number_oracle(disc):
    """Independent class number count, looping over a instead of b."""
    if disc >= 0 or disc % 4 not in (0, 1):
        raise ValueError("not a negative discriminant: %d" % disc)
    h = 0
    a = 1
    while 4 * a * a <= -disc * 4 // 3 + 4:
        for b in range(-a + 1, a + 1):
            if (b * b - disc) % (4 * a) != 0:
                continue
            c = (b * b - disc) // (4 * a)
            if c < a:
                continue
            if a == c and b < 0:
                continue
            if gcd(gcd(a, abs(b)), c) == 1:
                h += 1
        a += 1
    return h


def load_class_numbers(path):
    """Ingest a table of lines 'disc:h' into the memo cache."""
    n = 0
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            d, h = line.split(":")
            _H_CACHE[int(d)] = int(h)
            n += 1
    return n


# -- Frobenius matrices ----------------------------------------------------

def frobenius_matrix_mod(t, N):
    """The matrix of Frobenius on E[N] determined by a triple, mod N."""
    if gcd(t.q, N) != 1:
        raise ValueError("modulus %d not coprime to %d" % (N, t.q))
    return _amatrix(t.a, t.b, t.disc, N)


def _amatrix(a, b, disc, N):
    d = disc & 1
    m = GL2Element((a + b * d) // 2, b, b * (disc - d) // 4, (a - b * d) // 2, N)
    return m


def _legendre(a, p):
    if p == 2:
        raise ValueError("p must be odd")
    a %= p
    if a == 0:
        return 0
    return 1 if pow(a, (p - 1) // 2, p) == 1 else -1


def _prime_power(q):
    if q < 2:
        raise ValueError("not a prime power: %d" % q)
    p = 2
    while p * p <= q:
        if q % p == 0:
            e = 0
            m = q
            while m % p == 0:
                m //= p
                e += 1
            if m != 1:
                raise ValueError("not a prime power: %d" % q)
            return p, e
        p += 1 if p == 2 else 2
    return q, 1


# -- cusps -----------------------------------------------------------------

def count_cusps(H, q_residue):
    """(total, rational) cusp counts of X_H over a field with q elements.

    Rational cusps are the unipotent orbits of the coset space stable
    under right multiplication by (q 0;0 1); only q mod N matters.
    """
    N = H.modulus
    q_residue %= N
    if gcd(q_residue, N) != 1:
        raise ValueError("residue %d is not a unit mod %d" % (q_residue, N))
    if H.is_full or N == 1:
        return 1, 1
    cs = _coset_space(H)
    orbits = cs.cusp_orbits()
    if q_residue == 1 % N:
        return len(orbits), len(orbits)
    perm = cs.permutation_gl((q_residue, 0, 0, 1))
    rational = 0
    for orb in orbits:
        s = set(orb)
        if all(perm[i] in s for i in orb):
            rational += 1
    return len(orbits), rational


def _coset_space(H):
    cs = getattr(H, "_coset_space", None)
    if cs is None:
        cs = CosetSpace(H)
        H._coset_space = cs
    return cs


# -- the full count --------------------------------------------------------

# j=0 isomorphism-class table, keyed by (legendre(-3,p), e mod 2).
# Entries (aut, a_sym, b_expr, disc, mult): a_sym/b_expr are evaluated
# with p, e, u, v bound; a = 0 rows contribute once, |a| > 0 rows split
# into +a and -a with multiplicity mult/2 each.
_J0_ROWS = {
    (-1, 1): [(2, 0, "p^(e-1)/2", -1, 2)],
    (-1, 0): [(6, "p^e/2", "p^e/2", -3, 4), (6, "2p^e/2", 0, 1, 2)],
    (0, 1): [(2, 0, "p^(e-1)/2", -12, 1), (6, 0, "2p^(e-1)/2", -3, 1),
             (6, "p^(e+1)/2", "p^(e-1)/2", -3, 2)],
    (0, 0): [(4, 0, "p^e/2", -4, 2), (6, "p^e/2", "p^e/2", -3, 2),
             (12, "2p^e/2", 0, 1, 2)],
    (1, None): [(6, "u", "v", -3, 2), (6, "(u+3v)/2", "|u-v|/2", -3, 2),
                (6, "|u-3v|/2", "(u+v)/2", -3, 2)],
}

# j=1728 rows keyed by (legendre(-4,p), e mod 2); disc -1 marks -4p and
# -2 marks -p (filled in per prime).
_J1728_ROWS = {
    (-1, 1): [(2, 0, "p^(e-1)/2", -1, 1), (2, 0, "2p^(e-1)/2", -2, 1)],
    (-1, 0): [(4, 0, "p^e/2", -4, 2), (4, "2p^e/2", 0, 1, 2)],
    (0, 1): [(2, 0, "p^(e-1)/2", -8, 1), (4, "p^(e+1)/2", "p^(e-1)/2", -4, 2)],
    (0, 0): [(4, 0, "p^e/2", -4, 1), (6, "p^e/2", "p^e/2", -3, 4),
             (24, "2p^e/2", 0, 1, 2)],
    (1, None): [(4, "u", "v", -4, 2), (4, "2v", "u/2", -4, 2)],
}


def _eval_sym(expr, p, e, u, v):
    if isinstance(expr, int):
        return expr
    table = {
        "p^(e-1)/2": p ** ((e - 1) // 2),
        "2p^(e-1)/2": 2 * p ** ((e - 1) // 2),
        "p^(e+1)/2": p ** ((e + 1) // 2),
        "p^e/2": p ** (e // 2),
        "2p^e/2": 2 * p ** (e // 2),
        "u": u,
        "v": v,
        "(u+3v)/2": (u + 3 * v) // 2,
        "|u-v|/2": abs(u - v) // 2,
        "|u-3v|/2": abs(u - 3 * v) // 2,
        "(u+v)/2": (u + v) // 2,
        "2v": 2 * v,
        "u/2": u // 2,
    }
    return table[expr]


def _even_rep(q, k, p):
    """The unique (u, v), u, v > 0 even, u^2 + k*v^2 = 4q, p not | gcd(u,v).

    The primitivity condition matters only for proper prime powers, where
    imprimitive representations exist but correspond to no curve.
    """
    sols = []
    v = 2
    while k * v * v < 4 * q:
        u2 = 4 * q - k * v * v
        u = isqrt(u2)
        if (u * u == u2 and u % 2 == 0 and u > 0
                and not (u % p == 0 and v % p == 0)):
            sols.append((u, v))
        v += 2
    if len(sols) != 1:
        raise AssertionError("expected one even representation, got %r" % sols)
    return sols[0]


def _weighted_char(chi, rows, p, e, q, uv):
    """Sum of chi(A)/aut over table rows, with the +-a sign convention."""
    u, v = uv if uv else (0, 0)
    total = Fraction(0)
    for aut, a_sym, b_sym, disc, mult in rows:
        a = _eval_sym(a_sym, p, e, u, v)
        b = _eval_sym(b_sym, p, e, u, v)
        if disc == -1:
            disc = -4 * p
        elif disc == -2:
            disc = -p
        N = chi.N
        if a == 0:
            total += Fraction(mult, aut) * chi.chi(_amatrix(0, b, disc, N).tuple())
        else:
            assert mult % 2 == 0
            for s in (a, -a):
                total += Fraction(mult, 2 * aut) * chi.chi(
                    _amatrix(s, b, disc, N).tuple())
    if total.denominator != 1:
        raise AssertionError("non-integral weighted count %s" % total)
    return int(total)


class _FullChar:
    """Permutation character of the full group: constant 1."""

    def __init__(self, N):
        self.N = N

    def chi(self, g):
        return 1


def count_points(H, q):
    """Breakdown of #X_H(F_q) for q coprime to the modulus."""
    N = H.modulus
    p, e = _prime_power(q)
    if gcd(q, N) != 1:
        raise ValueError("q = %d is not coprime to the modulus %d" % (q, N))
    if H.is_full or N == 1:
        chi = _FullChar(N)
        ncusps = nrat = 1
    else:
        cs = _coset_space(H)
        chi = cs
        ncusps, nrat = count_cusps(H, q)

    # ordinary j != 0, 1728
    ordinary = 0
    amax = isqrt(4 * q - 1)
    for a in range(1, amax + 1):
        if gcd(a, q) != 1:
            continue
        d0 = a * a - 4 * q
        b = 1
        while b * b <= -d0:
            if d0 % (b * b) == 0:
                disc = d0 // (b * b)
                if disc % 4 in (0, 1) and disc < -4:
                    ordinary += class_number(disc) * chi.chi(
                        _amatrix(a, b, disc, N).tuple())
            b += 1
    # supersingular j != 0, 1728
    ss = 0
    if p > 3:
        hp = class_number(-4 * p) // 2
        s0 = 1 if p % 3 == 2 else 0
        if e % 2 == 1:
            root = p ** ((e - 1) // 2)
            if p % 4 == 1:
                ss = (hp - s0) * chi.chi(_amatrix(0, root, -4 * p, N).tuple())
            else:
                # the -p coefficient is half the class number of -p itself
                # (h(-4p) overcounts by a factor of 3 when p = 3 mod 8),
                # verified against brute-force moduli counts
                ss = (class_number(-p) // 2
                      * chi.chi(_amatrix(0, 2 * root, -p, N).tuple())
                      + (hp - s0) * chi.chi(_amatrix(0, root, -4 * p, N).tuple()))
        else:
            k3 = _legendre(-3, p) if p != 3 else 0
            k4 = _legendre(-1, p)
            count = (p - 6 + 2 * k3 + 3 * k4) // 12
            ss = count * chi.chi(_amatrix(2 * p ** (e // 2), 0, 1, N).tuple())

    # j = 0 (absent for p = 2) and j = 1728 (absent for p = 3)
    j0 = j1728 = 0
    if p != 2:
        k3 = 0 if p == 3 else _legendre(-3, p)
        uv = _even_rep(q, 3, p) if k3 == 1 else None
        rows = _J0_ROWS[(k3, None if k3 == 1 else e % 2)]
        j0 = _weighted_char(chi, rows, p, e, q, uv)
    if p != 3:
        k4 = 0 if p == 2 else _legendre(-1, p)
        uv = _even_rep(q, 4, p) if k4 == 1 else None
        rows = _J1728_ROWS[(k4, None if k4 == 1 else e % 2)]
        j1728 = _weighted_char(chi, rows, p, e, q, uv)

    return PointCountBreakdown(nrat, ordinary, ss, j0, j1728)


def zeta_data(H, p):
    """#X_H(F_{p^r}) for r = 1..g(H); empty for genus 0."""
    if p % H.modulus == 0 or gcd(p, H.modulus) != 1:
        raise ValueError("p = %d divides the modulus" % p)
    g = invariants(H).genus
    return [count_points(H, p ** r).total for r in range(1, g + 1)]


def scan_local_obstructions(H):
    """Primes p coprime to the modulus with X_H(F_p) empty.

    Only primes with p + 1 <= 2g*sqrt(p) can have an empty fiber (the
    Weil lower bound is positive beyond that), so the scan is finite.
    """
    g = invariants(H).genus
    if g == 0:
        return []
    N = H.modulus
    out = []
    for p in _primes_below(4 * g * g + 1):
        if N % p == 0:
            continue
        if 4 * g * g * p < (p + 1) * (p + 1):
            break
        if count_points(H, p).total == 0:
            out.append(p)
    return out


def _primes_below(n):
    if n <= 2:
        return []
    flags = bytearray([1]) * n
    flags[0] = flags[1] = 0
    for i in range(2, isqrt(n - 1) + 1):
        if flags[i]:
            flags[i * i::i] = bytearray(len(flags[i * i::i]))
    return [i for i in range(2, n) if flags[i]]
