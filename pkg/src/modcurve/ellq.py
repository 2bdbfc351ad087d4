"""Elliptic curves over Q and over prime fields.

Point counting, Frobenius traces, endomorphism-ring conductor indices,
integral Frobenius matrices, division polynomials, torsion-orbit
signatures, and a brute-force torsion-basis oracle that recomputes the
matrix of Frobenius from an explicit basis of E[N] over an extension
field.  The oracle shares no code with the class-polynomial formulas in
curvecount, so the two can be tested against each other.
"""

import logging
import random
from fractions import Fraction
from math import gcd, isqrt

import sympy

from .modmat import GL2Element
from .curvecount import FrobeniusTriple, _prime_power, _primes_below

log = logging.getLogger(__name__)

# exhaustive character-sum point counting below this, baby-step giant-step above
LEGENDRE_LIMIT = 1 << 16

_RNG = random.Random(1729)


# ---------------------------------------------------------------------------
# curves

class WeierstrassCurve:
    """[a1,a2,a3,a4,a6] model over Q (p=0, Fraction coefficients) or F_p."""

    __slots__ = ("ainvs", "p")

    def __init__(self, ainvs, p=0):
        if len(ainvs) != 5:
            raise ValueError("five coefficients a1,a2,a3,a4,a6 expected")
        self.p = p
        if p:
            self.ainvs = tuple(int(a) % p for a in ainvs)
        else:
            self.ainvs = tuple(Fraction(a) for a in ainvs)
        if self.discriminant() == 0:
            raise ValueError("singular curve")

    @classmethod
    def parse(cls, text, p=0):
        parts = [s.strip() for s in text.strip().strip("[]").split(",")]
        if p:
            return cls([int(s) for s in parts], p)
        return cls([Fraction(s) for s in parts])

    def render(self):
        return ",".join(str(a) for a in self.ainvs)

    def b_invariants(self):
        a1, a2, a3, a4, a6 = self.ainvs
        b2 = a1 * a1 + 4 * a2
        b4 = 2 * a4 + a1 * a3
        b6 = a3 * a3 + 4 * a6
        b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4
        if self.p:
            return b2 % self.p, b4 % self.p, b6 % self.p, b8 % self.p
        return b2, b4, b6, b8

    def c_invariants(self):
        b2, b4, b6, _ = self.b_invariants()
        c4 = b2 * b2 - 24 * b4
        c6 = -b2 ** 3 + 36 * b2 * b4 - 216 * b6
        if self.p:
            return c4 % self.p, c6 % self.p
        return c4, c6

    def discriminant(self):
        b2, b4, b6, b8 = self.b_invariants()
        d = -b2 * b2 * b8 - 8 * b4 ** 3 - 27 * b6 * b6 + 9 * b2 * b4 * b6
        return d % self.p if self.p else d

    def j_invariant(self):
        c4, _ = self.c_invariants()
        d = self.discriminant()
        if self.p:
            return c4 ** 3 * pow(d, -1, self.p) % self.p
        return Fraction(c4 ** 3, d)

    def integral_model(self):
        """Isomorphic curve over Q with integer coefficients."""
        if self.p:
            return self
        u = 1
        for k, a in zip((1, 2, 3, 4, 6), self.ainvs):
            den = a.denominator
            while u ** k % den:
                u *= sympy.factorint(den // gcd(den, u ** k)).popitem()[0]
        scaled = [a * u ** k for k, a in zip((1, 2, 3, 4, 6), self.ainvs)]
        assert all(a.denominator == 1 for a in scaled)
        return WeierstrassCurve([int(a) for a in scaled])

    def reduction(self, p):
        if self.p:
            raise ValueError("already over a finite field")
        E = self.integral_model()
        Ep = WeierstrassCurve.__new__(WeierstrassCurve)
        Ep.p = p
        Ep.ainvs = tuple(int(a) % p for a in E.ainvs)
        if _disc_mod(Ep) == 0:
            raise ValueError("bad reduction at %d" % p)
        return Ep

    def __repr__(self):
        field = "F_%d" % self.p if self.p else "Q"
        return "WeierstrassCurve([%s] / %s)" % (self.render(), field)


def _disc_mod(E):
    b2, b4, b6, b8 = E.b_invariants()
    return (-b2 * b2 * b8 - 8 * b4 ** 3 - 27 * b6 * b6 + 9 * b2 * b4 * b6) % E.p


def bad_primes(E, B):
    """Primes p <= B where the integral model of E has singular reduction."""
    E = E.integral_model()
    out = []
    for p in _primes_below(B + 1):
        Ep = WeierstrassCurve.__new__(WeierstrassCurve)
        Ep.p = p
        Ep.ainvs = tuple(int(a) % p for a in E.ainvs)
        if _disc_mod(Ep) == 0:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# dense polynomials over F_p (p > 0) or Z (p = 0); lists, low degree first

def _ptrim(f):
    while f and f[-1] == 0:
        f.pop()
    return f


def _padd(f, g, p):
    n = max(len(f), len(g))
    out = [(f[i] if i < len(f) else 0) + (g[i] if i < len(g) else 0)
           for i in range(n)]
    if p:
        out = [c % p for c in out]
    return _ptrim(out)


def _psub(f, g, p):
    n = max(len(f), len(g))
    out = [(f[i] if i < len(f) else 0) - (g[i] if i < len(g) else 0)
           for i in range(n)]
    if p:
        out = [c % p for c in out]
    return _ptrim(out)


def _pmul(f, g, p):
    if not f or not g:
        return []
    out = [0] * (len(f) + len(g) - 1)
    for i, a in enumerate(f):
        if a:
            for j, b in enumerate(g):
                out[i + j] += a * b
    if p:
        out = [c % p for c in out]
    return _ptrim(out)


def _pscale(f, c, p):
    out = [a * c for a in f]
    if p:
        out = [a % p for a in out]
    return _ptrim(out)


def _pdivmod(f, g, p):
    """Quotient and remainder; over Z the division must be exact in steps."""
    if not g:
        raise ZeroDivisionError("polynomial division by zero")
    f = list(f)
    q = [0] * max(len(f) - len(g) + 1, 0)
    if p:
        ginv = pow(g[-1], -1, p)
    for i in range(len(f) - len(g), -1, -1):
        if len(f) < len(g) + i:
            continue
        c = f[len(g) + i - 1]
        if c == 0:
            continue
        if p:
            c = c * ginv % p
        else:
            if c % g[-1]:
                raise ValueError("inexact polynomial division over Z")
            c //= g[-1]
        q[i] = c
        for j, b in enumerate(g):
            f[i + j] -= c * b
            if p:
                f[i + j] %= p
    return _ptrim(q), _ptrim(f)


def _pexactdiv(f, g, p):
    q, r = _pdivmod(f, g, p)
    if r:
        raise ValueError("inexact polynomial division")
    return q


def _pmod(f, g, p):
    return _pdivmod(f, g, p)[1]


def _pgcd(f, g, p):
    while g:
        f, g = g, _pmod(f, g, p)
    if f:
        f = _pscale(f, pow(f[-1], -1, p), p)
    return f


def _ppowmod(f, e, g, p):
    out = [1]
    f = _pmod(f, g, p)
    while e:
        if e & 1:
            out = _pmod(_pmul(out, f, p), g, p)
        f = _pmod(_pmul(f, f, p), g, p)
        e >>= 1
    return out


def _pderiv(f, p):
    out = [i * c for i, c in enumerate(f)][1:]
    if p:
        out = [c % p for c in out]
    return _ptrim(out)


def _peval(f, x0, p):
    acc = 0
    for c in reversed(f):
        acc = acc * x0 + c
        if p:
            acc %= p
    return acc


def _fp_distinct_roots(f, p, rng=None):
    """Distinct roots in F_p of f, by gcd with x^p - x and random splitting."""
    rng = rng or _RNG
    f = [c % p for c in f]
    _ptrim(f)
    if len(f) <= 1:
        return []
    xp = _ppowmod([0, 1], p, f, p)
    h = _pgcd(_psub(xp, [0, 1], p), f, p)
    roots = []
    stack = [h]
    while stack:
        g = stack.pop()
        if len(g) <= 1:
            continue
        if len(g) == 2:
            roots.append(-g[0] * pow(g[1], -1, p) % p)
            continue
        if p == 2:
            for r in (0, 1):
                if _peval(g, r, p) == 0:
                    roots.append(r)
            continue
        while True:
            d = rng.randrange(p)
            t = _ppowmod([d, 1], (p - 1) // 2, g, p)
            s = _pgcd(_psub(t, [1], p), g, p)
            if 0 < len(s) - 1 < len(g) - 1:
                stack.append(s)
                stack.append(_pexactdiv(g, s, p))
                break
    return sorted(roots)


def _fp_roots_with_multiplicity(f, p, rng=None):
    out = []
    for r in _fp_distinct_roots(f, p, rng):
        m = 0
        g = [c % p for c in f]
        while True:
            q, rem = _pdivmod(g, [-r % p, 1], p)
            if rem:
                break
            m += 1
            g = q
        out.append((r, m))
    return out


# ---------------------------------------------------------------------------
# division polynomials (univariate convention)
#
# With s = 2y + a1*x + a3 one has s^2 = g(x) = 4x^3 + b2*x^2 + 2*b4*x + b6,
# and psi_n = P_n for odd n, psi_n = P_n * s for even n, where the P_n are
# polynomials in x alone.  Roots of P_n (odd n) resp. P_n * g (even n) are
# the x-coordinates of the nontrivial points of order dividing n.

class _DivisionPolys:
    def __init__(self, E):
        self.p = E.p
        b2, b4, b6, b8 = E.b_invariants()
        self.g = _ptrim([b6, 2 * b4, b2, 4]
                        if not E.p else [b6 % E.p, 2 * b4 % E.p, b2, 4 % E.p])
        self.g2 = _pmul(self.g, self.g, self.p)
        p3 = [b8, 3 * b6, 3 * b4, b2, 3]
        p4 = [b4 * b8 - b6 * b6, b2 * b8 - b4 * b6, 10 * b8, 10 * b6,
              5 * b4, b2, 2]
        if E.p:
            p3 = [c % E.p for c in p3]
            p4 = [c % E.p for c in p4]
        self.cache = {0: [], 1: [1], 2: [1], 3: _ptrim(p3), 4: _ptrim(p4)}

    def P(self, n):
        if n in self.cache:
            return self.cache[n]
        p = self.p
        m = n // 2
        if n & 1:
            t1 = _pmul(self.P(m + 2), _pmul(self.P(m), _pmul(self.P(m), self.P(m), p), p), p)
            t2 = _pmul(self.P(m - 1), _pmul(self.P(m + 1), _pmul(self.P(m + 1), self.P(m + 1), p), p), p)
            if m % 2 == 0:
                out = _psub(_pmul(self.g2, t1, p), t2, p)
            else:
                out = _psub(t1, _pmul(self.g2, t2, p), p)
        else:
            t1 = _pmul(self.P(m + 2), _pmul(self.P(m - 1), self.P(m - 1), p), p)
            t2 = _pmul(self.P(m - 2), _pmul(self.P(m + 1), self.P(m + 1), p), p)
            out = _pmul(self.P(m), _psub(t1, t2, p), p)
        self.cache[n] = out
        return out

    def primitive(self, n):
        """Polynomial whose roots are x-coords of points of exact order n."""
        pk = _factor_prime_power(n)
        if pk is None:
            raise ValueError("prime-power order expected, got %d" % n)
        ell, k = pk
        if n == 2:
            return self.g
        if ell == 2:
            return _pexactdiv(self.P(n), self.P(n // 2), self.p)
        if k == 1:
            return self.P(n)
        return _pexactdiv(self.P(n), self.P(n // ell), self.p)


def division_polynomial(E, n):
    """P_n as above; combine with g for even n to get all order-n x-coords."""
    return _DivisionPolys(E).P(n)


def _factor_prime_power(n):
    p, e = _prime_power(n) if n > 1 else (0, 0)
    return (p, e) if p else None


# ---------------------------------------------------------------------------
# trace of Frobenius

def trace_of_frobenius(E):
    p = E.p
    if not p:
        raise ValueError("curve must be over a prime field")
    if p <= 3:
        count = 1
        a1, a2, a3, a4, a6 = E.ainvs
        for x in range(p):
            for y in range(p):
                if (y * y + a1 * x * y + a3 * y
                        - (x ** 3 + a2 * x * x + a4 * x + a6)) % p == 0:
                    count += 1
        return p + 1 - count
    A, B = _short_model(E)
    if p <= LEGENDRE_LIMIT:
        return _trace_charsum(A, B, p)
    return _trace_bsgs(A, B, p)


def _short_model(E):
    """A, B with y^2 = x^3 + Ax + B isomorphic to E; requires p > 3."""
    c4, c6 = E.c_invariants()
    p = E.p
    A = -c4 * pow(48, -1, p) % p
    B = -c6 * pow(864, -1, p) % p
    return A, B


def _trace_charsum(A, B, p):
    qr = bytearray(p)
    for t in range(1, (p - 1) // 2 + 1):
        qr[t * t % p] = 1
    s = 0
    for x in range(p):
        v = (x * x * x + A * x + B) % p
        if v:
            s += 1 if qr[v] else -1
    return -s


# short-model point arithmetic over F_p with plain integers

def _sp_add(P, Q, A, p):
    if P is None:
        return Q
    if Q is None:
        return P
    x1, y1 = P
    x2, y2 = Q
    if x1 == x2:
        if (y1 + y2) % p == 0:
            return None
        lam = (3 * x1 * x1 + A) * pow(2 * y1, -1, p) % p
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, p) % p
    x3 = (lam * lam - x1 - x2) % p
    return x3, (lam * (x1 - x3) - y1) % p


def _sp_mul(n, P, A, p):
    if n < 0:
        n, P = -n, (P[0], -P[1] % p) if P else None
    R = None
    while n:
        if n & 1:
            R = _sp_add(R, P, A, p)
        P = _sp_add(P, P, A, p)
        n >>= 1
    return R


def _sp_random_point(A, B, p, rng):
    while True:
        x = rng.randrange(p)
        v = (x * x * x + A * x + B) % p
        if v == 0:
            return x, 0
        if pow(v, (p - 1) // 2, p) == 1:
            return x, _mod_sqrt(v, p)


def _mod_sqrt(a, p):
    """Tonelli-Shanks square root mod an odd prime; a assumed a residue."""
    if p % 4 == 3:
        return pow(a, (p + 1) // 4, p)
    s, t = 0, p - 1
    while t % 2 == 0:
        s, t = s + 1, t // 2
    z = 2
    while pow(z, (p - 1) // 2, p) != p - 1:
        z += 1
    c = pow(z, t, p)
    r = pow(a, (t + 1) // 2, p)
    u = pow(a, t, p)
    while u != 1:
        k, v = 0, u
        while v != 1:
            v = v * v % p
            k += 1
        b = pow(c, 1 << (s - k - 1), p)
        r = r * b % p
        c = b * b % p
        u = u * c % p
        s = k
    return r


def _point_order_multiples(A, B, p, P):
    """Values k in the Hasse interval with k*P = O, by baby-step giant-step."""
    s2 = 2 * isqrt(p) + 1
    lo, width = p + 1 - s2, 2 * s2
    m = isqrt(width) + 1
    baby = {}
    Q = None
    for j in range(m + 1):
        if Q is not None:
            baby.setdefault(Q[0], []).append((j, Q[1]))
        else:
            baby.setdefault(None, []).append((j, 0))
        Q = _sp_add(Q, P, A, p)
    mP = _sp_mul(m, P, A, p)
    S = _sp_mul(lo, P, A, p)
    matches = []
    for i in range(width // m + 2):
        key = S[0] if S is not None else None
        if key in baby:
            for j, yj in baby[key]:
                for k in (lo + i * m - j, lo + i * m + j):
                    if lo <= k <= lo + width and _sp_mul(k, P, A, p) is None:
                        matches.append(k)
        S = _sp_add(S, mP, A, p)
    return sorted(set(matches))


def _point_order(A, B, p, P):
    ks = _point_order_multiples(A, B, p, P)
    n = ks[0]
    for k in ks[1:]:
        n = gcd(n, k)
    for q in sympy.factorint(n):
        while n % q == 0 and _sp_mul(n // q, P, A, p) is None:
            n //= q
    return n


def _trace_bsgs(A, B, p, rng=None):
    """Mestre-style order finding on the curve and its quadratic twist."""
    rng = rng or _RNG
    d = 2
    while pow(d, (p - 1) // 2, p) != p - 1:
        d += 1
    At, Bt = A * d * d % p, B * d * d * d % p
    s2 = 2 * isqrt(p) + 1
    L = [1, 1]   # known divisors of #E and #E_twist
    while True:
        for which, (Ai, Bi) in enumerate(((A, B), (At, Bt))):
            P = _sp_random_point(Ai, Bi, p, rng)
            L[which] = L[which] * _point_order(Ai, Bi, p, P) // gcd(
                L[which], _point_order(Ai, Bi, p, P))
            # candidates N = #E: N = 0 mod L[0], 2p+2-N = 0 mod L[1]
            cands = []
            n0 = ((p + 1 - s2) // L[0] + 1) * L[0]
            for N in range(n0 - L[0], p + 1 + s2 + 1, L[0]):
                if N >= p + 1 - s2 and (2 * p + 2 - N) % L[1] == 0:
                    cands.append(N)
            if len(cands) == 1:
                return p + 1 - cands[0]


# ---------------------------------------------------------------------------
# extension fields F_q = F_p[x]/(h)

def _find_irreducible(p, r, rng=None):
    rng = rng or _RNG
    if r == 1:
        return [0, 1]
    fac = sympy.factorint(r)
    while True:
        h = [rng.randrange(p) for _ in range(r)] + [1]
        xq = _ppowmod([0, 1], p ** r, h, p)
        if _psub(xq, [0, 1], p):
            continue
        if all(len(_pgcd(_psub(_ppowmod([0, 1], p ** (r // q), h, p),
                               [0, 1], p), h, p)) <= 1 for q in fac):
            return h


class Fq:
    """Arithmetic in F_p[x]/(h); elements are coefficient tuples."""

    def __init__(self, p, h):
        self.p = p
        self.h = list(h)
        self.r = len(h) - 1
        self.q = p ** self.r
        self.zero = (0,) * self.r
        self.one = tuple([1] + [0] * (self.r - 1)) if self.r else ()
        self._as_matrix = None

    def embed(self, c):
        return tuple([c % self.p] + [0] * (self.r - 1))

    def add(self, a, b):
        p = self.p
        return tuple((x + y) % p for x, y in zip(a, b))

    def sub(self, a, b):
        p = self.p
        return tuple((x - y) % p for x, y in zip(a, b))

    def neg(self, a):
        p = self.p
        return tuple(-x % p for x in a)

    def mul(self, a, b):
        out = _pmod(_pmul(list(a), list(b), self.p), self.h, self.p)
        return tuple(out + [0] * (self.r - len(out)))

    def scalar(self, c, a):
        p = self.p
        c %= p
        return tuple(x * c % p for x in a)

    def inv(self, a):
        # extended Euclid in F_p[x]
        p = self.p
        r0, r1 = self.h, _ptrim(list(a))
        s0, s1 = [], [1]
        while r1:
            q, rem = _pdivmod(r0, r1, p)
            r0, r1 = r1, rem
            s0, s1 = s1, _psub(s0, _pmul(q, s1, p), p)
        if len(r0) != 1:
            raise ZeroDivisionError("not invertible")
        out = _pscale(s0, pow(r0[0], -1, p), p)
        return tuple(out + [0] * (self.r - len(out)))

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def pow(self, a, e):
        if e < 0:
            return self.pow(self.inv(a), -e)
        out = self.one
        while e:
            if e & 1:
                out = self.mul(out, a)
            a = self.mul(a, a)
            e >>= 1
        return out

    def frobenius(self, a):
        return self.pow(a, self.p)

    def rand(self, rng=None):
        rng = rng or _RNG
        return tuple(rng.randrange(self.p) for _ in range(self.r))

    def is_square(self, a):
        if self.p == 2:
            return True
        if a == self.zero:
            return True
        return self.pow(a, (self.q - 1) // 2) == self.one

    def sqrt(self, a, rng=None):
        """A square root of a, or None."""
        rng = rng or _RNG
        if a == self.zero:
            return self.zero
        if self.p == 2:
            return self.pow(a, self.q // 2)
        if not self.is_square(a):
            return None
        s, t = 0, self.q - 1
        while t % 2 == 0:
            s, t = s + 1, t // 2
        while True:
            z = self.rand(rng)
            if z != self.zero and not self.is_square(z):
                break
        c = self.pow(z, t)
        r = self.pow(a, (t + 1) // 2)
        u = self.pow(a, t)
        while u != self.one:
            k, v = 0, u
            while v != self.one:
                v = self.mul(v, v)
                k += 1
            b = self.pow(c, 1 << (s - k - 1))
            r = self.mul(r, b)
            c = self.mul(b, b)
            u = self.mul(u, c)
            s = k
        return r

    def solve_artin_schreier(self, c):
        """z with z^2 + z = c in characteristic 2, or None; F_2-linear."""
        assert self.p == 2
        if self._as_matrix is None:
            cols = []
            for i in range(self.r):
                e = tuple(1 if j == i else 0 for j in range(self.r))
                cols.append(self.add(self.mul(e, e), e))
            self._as_matrix = cols
        # solve sum z_i * cols[i] = c over F_2 by elimination
        rows = [[cols[i][j] for i in range(self.r)] + [c[j]]
                for j in range(self.r)]
        n = self.r
        piv = []
        rank = 0
        for col in range(n):
            sel = next((i for i in range(rank, n) if rows[i][col]), None)
            if sel is None:
                continue
            rows[rank], rows[sel] = rows[sel], rows[rank]
            for i in range(n):
                if i != rank and rows[i][col]:
                    rows[i] = [(x + y) % 2 for x, y in zip(rows[i], rows[rank])]
            piv.append(col)
            rank += 1
        for i in range(rank, n):
            if rows[i][n]:
                return None
        z = [0] * n
        for i, col in enumerate(piv):
            z[col] = rows[i][n]
        return tuple(z)


# generic affine point arithmetic on a full Weierstrass model over F

def _ec_neg(F, a, P):
    if P is None:
        return None
    a1, a2, a3, a4, a6 = a
    x, y = P
    return x, F.neg(F.add(y, F.add(F.mul(a1, x), a3)))


def _ec_add(F, a, P, Q):
    if P is None:
        return Q
    if Q is None:
        return P
    a1, a2, a3, a4, a6 = a
    x1, y1 = P
    x2, y2 = Q
    if x1 == x2:
        if F.add(F.add(y1, y2), F.add(F.mul(a1, x1), a3)) == F.zero:
            return None
        num = F.add(F.add(F.scalar(3, F.mul(x1, x1)), F.scalar(2, F.mul(a2, x1))),
                    F.sub(a4, F.mul(a1, y1)))
        den = F.add(F.scalar(2, y1), F.add(F.mul(a1, x1), a3))
    else:
        num = F.sub(y2, y1)
        den = F.sub(x2, x1)
    lam = F.div(num, den)
    x3 = F.sub(F.sub(F.sub(F.add(F.mul(lam, lam), F.mul(a1, lam)), a2), x1), x2)
    y3 = F.sub(F.sub(F.mul(lam, F.sub(x1, x3)), y1),
               F.add(F.mul(a1, x3), a3))
    return x3, y3


def _ec_mul(F, a, n, P):
    if n < 0:
        return _ec_mul(F, a, -n, _ec_neg(F, a, P))
    R = None
    while n:
        if n & 1:
            R = _ec_add(F, a, R, P)
        P = _ec_add(F, a, P, P)
        n >>= 1
    return R


def _ec_lift_x(F, a, x, rng=None):
    """A point (x, y) on the curve, or None if x is not an x-coordinate."""
    a1, a2, a3, a4, a6 = a
    bb = F.add(F.mul(a1, x), a3)
    cc = F.add(F.add(F.mul(x, F.mul(x, x)), F.mul(a2, F.mul(x, x))),
               F.add(F.mul(a4, x), a6))
    if F.p == 2:
        if bb == F.zero:
            return x, F.sqrt(cc)
        binv = F.inv(bb)
        z = F.solve_artin_schreier(F.mul(cc, F.mul(binv, binv)))
        if z is None:
            return None
        return x, F.mul(bb, z)
    # y = (-bb + sqrt(bb^2 + 4cc)) / 2
    disc = F.add(F.mul(bb, bb), F.scalar(4, cc))
    s = F.sqrt(disc, rng)
    if s is None:
        return None
    return x, F.mul(F.sub(s, bb), F.inv(F.embed(2)))


# ---------------------------------------------------------------------------
# torsion-basis oracle

def torsion_field_degree(E, N):
    """Degree over F_p of the field generated by the points of order N."""
    p = E.p
    dp = _DivisionPolys(E)
    prim = dp.primitive(N)
    r = 1
    x = sympy.Symbol("x")
    poly = sympy.Poly(list(reversed(prim)), x, modulus=p)
    for fac, _ in poly.factor_list()[1]:
        g = [int(c) % p for c in reversed(fac.all_coeffs())]
        d = len(g) - 1
        r = _lcm(r, d * _y_extension_degree(E, g, d))
    return r


def _y_extension_degree(E, g, d):
    """1 or 2: does lifting x to a point require a quadratic extension?"""
    p = E.p
    a1, a2, a3, a4, a6 = E.ainvs
    if p == 2:
        bb = _pmod([a3, a1], g, p)
        cc = _pmod([a6, a4, a2, 1], g, p)
        if not bb:
            return 1
        binv = _fqpoly_inv(bb, g, p)
        c = _pmod(_pmul(cc, _pmul(binv, binv, p), p), g, p)
        # trace of c from F_{2^d} to F_2
        tr = []
        t = c
        for _ in range(d):
            tr = _padd(tr, t, p)
            t = _pmod(_pmul(t, t, p), g, p)
        return 1 if not tr else 2
    gg = _pmod(_curve_quartic(E), g, p)
    if not gg:
        return 1
    t = _ppowmod(gg, (p ** d - 1) // 2, g, p)
    return 1 if t == [1] else 2


def _curve_quartic(E):
    b2, b4, b6, _ = E.b_invariants()
    p = E.p
    out = [b6, 2 * b4, b2, 4]
    return _ptrim([c % p for c in out]) if p else _ptrim(out)


def _fqpoly_inv(a, g, p):
    r0, r1 = list(g), _ptrim(list(a))
    s0, s1 = [], [1]
    while r1:
        q, rem = _pdivmod(r0, r1, p)
        r0, r1 = r1, rem
        s0, s1 = s1, _psub(s0, _pmul(q, s1, p), p)
    return _pscale(s0, pow(r0[0], -1, p), p)


def _lcm(a, b):
    return a * b // gcd(a, b)


def _trace_powers(a1, p, r):
    """Traces of Frobenius for F_{p^k}, k = 1..r, by the standard recursion."""
    out = [None, a1]
    prev2, prev1 = 2, a1
    for _ in range(r - 1):
        prev2, prev1 = prev1, a1 * prev1 - p * prev2
        out.append(prev1)
    return out


def oracle_frobenius_matrix(E, N, rng=None, max_degree=64):
    """Matrix of the p-power Frobenius on an explicit basis of E[N].

    Brute force: determine the torsion field F_q from the division
    polynomial, sample random points to build a basis of E[N], then read
    off the images of the basis under x -> x^p.  Independent of the
    CM-order bookkeeping used by the formula path.
    """
    rng = rng or _RNG
    p = E.p
    if not p:
        raise ValueError("curve must be over a prime field")
    if gcd(p, N) != 1:
        raise ValueError("N must be coprime to p")
    pk = _factor_prime_power(N)
    if pk is None:
        raise ValueError("prime-power N expected")
    ell, _ = pk
    r = torsion_field_degree(E, N)
    if r > max_degree:
        raise ValueError("torsion field degree %d exceeds budget" % r)
    F = Fq(p, _find_irreducible(p, r, rng))
    a = [F.embed(c) for c in E.ainvs]
    n = F.q + 1 - _trace_powers(trace_of_frobenius(E), p, r)[r]
    e = 0
    while n % ell == 0:
        n //= ell
        e += 1
    cof = n  # prime-to-ell part of the group order

    def sample():
        while True:
            P = _ec_lift_x(F, a, F.rand(rng), rng)
            if P is not None and P[1] is not None:
                Q = _ec_mul(F, a, cof, P)
                if Q is not None:
                    return Q

    def reduce_to_N(Q):
        # Q has ell-power order; push it down into E[N]
        chain = [Q]
        while chain[-1] is not None:
            chain.append(_ec_mul(F, a, ell, chain[-1]))
        k = len(chain) - 1  # ord(Q) = ell^k
        want = 0
        while ell ** want < N:
            want += 1
        return chain[max(0, k - want)]

    for _ in range(400):
        P1 = reduce_to_N(sample())
        P2 = reduce_to_N(sample())
        table = {}
        R1 = None
        ok = True
        for i in range(N):
            R = R1
            for j in range(N):
                if R in table:
                    ok = False
                    break
                table[R] = (i, j)
                R = _ec_add(F, a, R, P2)
            if not ok:
                break
            R1 = _ec_add(F, a, R1, P1)
        if ok and len(table) == N * N:
            break
    else:
        raise RuntimeError("failed to find a basis of E[%d]" % N)

    def frob(P):
        return (F.frobenius(P[0]), F.frobenius(P[1]))

    i1, j1 = table[frob(P1)]
    i2, j2 = table[frob(P2)]
    M = GL2Element(i1, i2, j1, j2, N)
    assert M.det() == p % N, "oracle determinant mismatch"
    assert M.trace() == trace_of_frobenius(E) % N, "oracle trace mismatch"
    return M


# ---------------------------------------------------------------------------
# endomorphism data: trace, conductor index, CM discriminant

def _fundamental_decomposition(D):
    """v, D0 with D = v^2 * D0 and D0 a fundamental discriminant."""
    m = 1
    for q, e in sympy.factorint(-D).items():
        if e % 2:
            m *= q
    D0 = -m if -m % 4 == 1 else -4 * m
    v = isqrt(D // D0)
    assert v * v * D0 == D
    return v, D0


def endomorphism_data(E, rng=None):
    """FrobeniusTriple (a, b, disc) for an ordinary curve, j != 0, 1728."""
    p = E.p
    if not p:
        raise ValueError("curve must be over a prime field")
    j = E.j_invariant()
    a = trace_of_frobenius(E)
    if a % p == 0:
        raise ValueError("supersingular curve")
    if p > 3 and j in (0, 1728 % p):
        raise ValueError("j = 0, 1728 handled by the CM lookup table")
    D = a * a - 4 * p
    v, D0 = _fundamental_decomposition(D)
    b = 1
    for ell, k in sympy.factorint(v).items():
        if ell <= 13:
            b *= ell ** _volcano_floor_distance(j, ell, p, k, rng)
        else:
            b *= ell ** _scalar_valuation(E, a, ell, k)
    return FrobeniusTriple(a, b, D // (b * b), p)


def _scalar_valuation(E, a, ell, kmax):
    """max k <= kmax with Frobenius scalar on E[ell^k]: x^p = x([a/2])."""
    dp = _DivisionPolys(E)
    p = E.p
    k = 0
    while k < kmax:
        prim = dp.primitive(ell ** (k + 1))
        c = a * pow(2, -1, ell ** (k + 1)) % ell ** (k + 1)
        xp = _ppowmod([0, 1], p, prim, p)
        num = _pmul(dp.P(c - 1), dp.P(c + 1), p)
        den = _pmul(dp.P(c), dp.P(c), p)
        if c % 2:
            num = _pmul(num, dp.g, p)
        else:
            den = _pmul(den, dp.g, p)
        lhs = _pmod(_pmul(xp, den, p), prim, p)
        rhs = _pmod(_psub(_pmul([0, 1], den, p), num, p), prim, p)
        if lhs != rhs:
            break
        k += 1
    return k


# modular polynomial cache: data/modpoly_<ell>.txt lines "i j c" (i >= j)
_MODPOLY_CACHE = {}


def modular_polynomial(ell):
    """Coefficient dict {(i, j): c} of the classical modular polynomial."""
    if ell in _MODPOLY_CACHE:
        return _MODPOLY_CACHE[ell]
    import importlib.resources as res
    ref = res.files("modcurve").joinpath("data/modpoly_%d.txt" % ell)
    coeffs = {}
    with ref.open() as f:
        for line in f:
            i, j, c = line.split()
            coeffs[(int(i), int(j))] = int(c)
            coeffs[(int(j), int(i))] = int(c)
    _MODPOLY_CACHE[ell] = coeffs
    return coeffs


def _instantiate_modpoly(ell, j0, p):
    """Phi_ell(j0, x) over F_p as a coefficient list."""
    coeffs = modular_polynomial(ell)
    out = [0] * (ell + 2)
    jp = [1]
    for _ in range(ell + 1):
        jp.append(jp[-1] * j0 % p)
    for (i, jj), c in coeffs.items():
        out[i] = (out[i] + c * jp[jj]) % p
    return _ptrim(out)


def _volcano_floor_distance(j0, ell, p, budget, rng=None):
    """Length of the shortest descending isogeny path from j0 to the floor.

    Non-backtracking search, capped at budget; below the surface every
    vertex has a unique ascending edge, so the cap makes ascending or
    crater-bound paths report at least the true descending distance.
    """
    rng = rng or _RNG

    def descend(j_cur, j_prev, left):
        # at depth >= 1 a floor vertex has exactly one neighbor (its
        # ascending edge); everything else has at least two
        f = _instantiate_modpoly(ell, j_cur, p)
        nbrs = _fp_roots_with_multiplicity(f, p, rng)
        total = sum(m for _, m in nbrs)
        if total <= 1 and j_prev is None:
            return 0
        if left == 0:
            return 0
        best = None
        for r, m in nbrs:
            if j_prev is not None and r == j_prev:
                m -= 1
            if m <= 0:
                continue
            nxt = _instantiate_modpoly(ell, r, p)
            if sum(mm for _, mm in
                   _fp_roots_with_multiplicity(nxt, p, rng)) <= 1:
                d = 1  # r is on the floor
            else:
                d = 1 + descend(r, j_cur, left - 1)
            if best is None or d < best:
                best = d
        return left if best is None else best

    return descend(j0, None, budget)


# ---------------------------------------------------------------------------
# Frobenius matrices for a curve over Q

class FrobeniusRecord:
    __slots__ = ("p", "triple", "method")

    def __init__(self, p, triple, method):
        self.p = p
        self.triple = triple
        self.method = method

    def matrix_mod(self, N):
        from .curvecount import frobenius_matrix_mod
        return frobenius_matrix_mod(self.triple, N)

    def __repr__(self):
        return "FrobeniusRecord(p=%d, %r, %s)" % (self.p, self.triple, self.method)


def _two_torsion_full(E):
    """True when all of E[2] is rational over F_p."""
    p = E.p
    if p == 2:
        return False
    g = _curve_quartic(E)
    return len(_fp_distinct_roots(g, p)) == 3


def frobenius_record(E, p):
    Ep = E.reduction(p) if not E.p else E
    a = trace_of_frobenius(Ep)
    j = Ep.j_invariant()
    if a % p == 0:
        # supersingular: Z[pi] has index 1 or 2 in End, settled by E[2]
        D = a * a - 4 * p
        v, D0 = _fundamental_decomposition(D)
        assert v in (1, 2)
        if v == 2 and _two_torsion_full(Ep):
            return FrobeniusRecord(p, FrobeniusTriple(a, 2, D // 4, p),
                                   "supersingular")
        return FrobeniusRecord(p, FrobeniusTriple(a, 1, D, p), "supersingular")
    if p > 3 and j in (0, 1728 % p):
        # extra automorphisms force the maximal CM order
        disc = -3 if j == 0 else -4
        D = a * a - 4 * p
        b = isqrt(D // disc)
        assert b * b * disc == D
        return FrobeniusRecord(p, FrobeniusTriple(a, b, disc, p), "table4")
    return FrobeniusRecord(p, endomorphism_data(Ep), "ordinary-volcano")


def frobenius_matrices(E, B, workers=1):
    """FrobeniusRecord for every good prime p <= B; bad primes are skipped."""
    E = E.integral_model()
    bad = set(bad_primes(E, B))
    good = [p for p in _primes_below(B + 1) if p not in bad]
    if bad:
        log.debug("skipping bad primes %s", sorted(bad))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(frobenius_record, [E] * len(good), good))
    return [frobenius_record(E, p) for p in good]


# ---------------------------------------------------------------------------
# torsion orbits over Q

class TorsionOrbitSignature:
    """Galois-orbit sizes of the points of each exact order dividing N."""

    __slots__ = ("modulus", "by_order")

    def __init__(self, modulus, by_order):
        self.modulus = modulus
        self.by_order = dict(by_order)

    @property
    def sizes(self):
        return self.by_order[self.modulus]

    def render(self, order=None):
        sizes = self.by_order[order or self.modulus]
        out = []
        for s in sorted(set(sizes)):
            m = sizes.count(s)
            out.append("%d^%d" % (s, m) if m > 1 else "%d" % s)
        return ",".join(out)

    def __repr__(self):
        return "TorsionOrbitSignature(%d, %s)" % (self.modulus, self.by_order)


def _orbit_sizes_exact_order(E, n):
    """Galois-orbit sizes of the points of exact order n on E/Q."""
    x, t = sympy.symbols("x t")
    dp = _DivisionPolys(E)
    gq = _curve_quartic(E)
    if n == 2:
        poly = sympy.Poly(list(reversed(gq)), x, domain="QQ")
        return sorted(int(sympy.degree(f, x))
                      for f, _ in poly.factor_list()[1])
    prim = dp.primitive(n)
    poly = sympy.Poly(list(reversed(prim)), x, domain="QQ")
    gq_expr = sympy.Poly(list(reversed(gq)), x, domain="QQ").as_expr()
    sizes = []
    for fac, mult in poly.factor_list()[1]:
        assert mult == 1
        g_expr = fac.as_expr()
        for c in range(1, 50):
            # z = c*x + eta separates the points for generic c
            mz = sympy.resultant((t - c * x) ** 2 - gq_expr, g_expr, x)
            mz = sympy.Poly(mz, t)
            if sympy.gcd(mz, mz.diff(t)).degree() == 0:
                break
        else:
            raise RuntimeError("no separating linear form found")
        for h, hm in mz.factor_list()[1]:
            assert hm == 1
            sizes.append(int(sympy.degree(h, t)))
    return sorted(sizes)


def torsion_orbits(E, N):
    """Orbit signature of E[N]; N a prime power (desk scale N <= 27)."""
    if E.p:
        raise ValueError("curve must be over Q")
    pk = _factor_prime_power(N)
    if pk is None:
        raise ValueError("prime-power modulus expected")
    ell, k = pk
    E = E.integral_model()
    by_order = {}
    for i in range(1, k + 1):
        by_order[ell ** i] = _orbit_sizes_exact_order(E, ell ** i)
    return TorsionOrbitSignature(N, by_order)
