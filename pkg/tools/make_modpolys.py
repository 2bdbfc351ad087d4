"""Generate classical modular polynomial data files.

Phi_ell(X, Y) for ell in {2,3,5,7,11,13}, computed from the q-expansion
of j: the elementary symmetric functions of the ell+1 conjugates
j(ell*tau), j((tau+k)/ell) are level-1 modular functions, recovered as
integer q-series via power sums (the twisted sum over k is ell times the
U_ell operator applied to j^m, which picks out every ell-th coefficient)
and then expressed as polynomials in j by principal-part elimination.

Series carry an explicit validity bound so truncation error can never
contaminate a coefficient that is used.

Verification: symmetry, the Kronecker congruence
Phi_ell = (X^ell - Y)(X - Y^ell) mod ell, and for ell=2 the classical
printed polynomial.  Output: src/modcurve/data/modpoly_<ell>.txt with
lines "i j c" for i >= j (symmetric completion implied).

Usage: python3 tools/make_modpolys.py [ell ...]
"""

import os
import sys
import time

DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "src", "modcurve", "data")

PHI2 = {
    (3, 0): 1, (2, 2): -1, (2, 1): 1488, (2, 0): -162000,
    (1, 1): 40773375, (1, 0): 8748000000, (0, 0): -157464000000000,
}


# Laurent series: (offset, coeffs, valid) = sum_{i} coeffs[i] q^(offset+i),
# trustworthy through q^valid only.

def ser(off, cs, valid):
    while cs and cs[0] == 0:
        cs = cs[1:]
        off += 1
    cs = cs[: max(valid - off + 1, 0)]
    return off, list(cs), valid


def ser_mul(a, b):
    ao, ac, av = a
    bo, bc, bv = b
    valid = min(av + bo, bv + ao)
    off = ao + bo
    n = valid - off + 1
    out = [0] * max(n, 0)
    for i, x in enumerate(ac):
        if x and i < n:
            for j, y in enumerate(bc[: n - i]):
                if y:
                    out[i + j] += x * y
    return ser(off, out, valid)


def ser_add(a, b):
    ao, ac, av = a
    bo, bc, bv = b
    valid = min(av, bv)
    off = min(ao, bo)
    out = [0] * max(max(ao + len(ac), bo + len(bc)) - off, 0)
    for i, x in enumerate(ac):
        out[ao - off + i] += x
    for i, x in enumerate(bc):
        out[bo - off + i] += x
    return ser(off, out, valid)


def ser_scale(a, c):
    return a[0], [c * x for x in a[1]], a[2]


def ser_coeff(a, n):
    off, cs, valid = a
    assert n <= valid, "coefficient %d beyond validity %d" % (n, valid)
    i = n - off
    return cs[i] if 0 <= i < len(cs) else 0


def j_series(nterms):
    """q-expansion of j through q^nterms."""
    n = nterms + 2
    e4 = [0] * n
    e4[0] = 1
    for d in range(1, n):
        c = 240 * d ** 3
        for m in range(d, n, d):
            e4[m] += c
    # prod (1-q^k) via the pentagonal number theorem, then ^24
    eta = [0] * n
    eta[0] = 1
    k = 1
    while True:
        g1 = k * (3 * k - 1) // 2
        g2 = k * (3 * k + 1) // 2
        if g1 >= n:
            break
        sign = -1 if k % 2 else 1
        eta[g1] += sign
        if g2 < n:
            eta[g2] += sign
        k += 1

    def pmul(f, g):
        out = [0] * n
        for i, x in enumerate(f):
            if x:
                for j, y in enumerate(g[: n - i]):
                    if y:
                        out[i + j] += x * y
        return out

    d24 = [1] + [0] * (n - 1)
    sq = eta
    e = 24
    while e:
        if e & 1:
            d24 = pmul(d24, sq)
        e >>= 1
        if e:
            sq = pmul(sq, sq)
    num = pmul(pmul(e4, e4), e4)
    quo = [0] * n
    for i in range(n):
        acc = num[i]
        for k2 in range(i):
            acc -= quo[k2] * d24[i - k2]
        quo[i] = acc
    return ser(-1, quo, nterms)


def compute_phi(ell, margin=3):
    # validity loss through Newton's identities is at most ell per level
    # plus the pole ell+1 of the symmetric functions themselves
    need = margin + (ell + 1) * (ell + 2)
    jterms = ell * need + ell + 2
    t0 = time.time()
    j = j_series(jterms)
    jp = [ser(0, [1], jterms), j]
    for m in range(2, ell + 2):
        jp.append(ser_mul(jp[-1], j))
    print("  j powers done %.1fs" % (time.time() - t0))
    ps = [None]
    for m in range(1, ell + 2):
        # ell * U_ell(j^m): picks coefficients at indices divisible by ell
        v1 = jp[m][2] // ell
        lo = -(m // ell + (1 if m % ell else 0))
        part1 = ser(lo, [ell * ser_coeff(jp[m], ell * nn)
                         for nn in range(lo, v1 + 1)], v1)
        # (j^m)(q^ell)
        v2 = ell * jp[m][2]
        cs = []
        for nn in range(-m, jp[m][2] + 1):
            cs.append(ser_coeff(jp[m], nn))
            cs.extend([0] * (ell - 1))
        part2 = ser(-m * ell, cs, v2)
        ps.append(ser_add(part1, part2))
    es = [ser(0, [1], jterms)]
    for i in range(1, ell + 2):
        acc = ser(0, [], jterms)
        for k in range(1, i + 1):
            acc = ser_add(acc, ser_scale(ser_mul(es[i - k], ps[k]),
                                         (-1) ** (k - 1)))
        off, cs, valid = acc
        assert valid >= margin, "validity exhausted at e_%d (%d)" % (i, valid)
        assert all(c % i == 0 for c in cs), "Newton division failure at %d" % i
        es.append(ser(off, [c // i for c in cs], valid))
    print("  symmetric functions done %.1fs" % (time.time() - t0))
    coeffs = {}
    for i in range(1, ell + 2):
        cur = es[i]
        poly = {}
        while cur[1] and cur[0] < 0:
            d = -cur[0]
            c = cur[1][0]
            poly[d] = c
            cur = ser_add(cur, ser_scale(jp[d], -c))
        poly[0] = ser_coeff(cur, 0)
        cur = ser_add(cur, ser(0, [-poly[0]], cur[2]))
        assert cur[2] >= margin and not cur[1], \
            "reduction residue for e_%d: %r" % (i, cur[1][:6])
        for d, c in poly.items():
            if c:
                coeffs[(ell + 1 - i, d)] = (-1) ** i * c
    coeffs[(ell + 1, 0)] = 1
    return coeffs


def symmetrize(coeffs, ell):
    out = {}
    for (i, jj), c in coeffs.items():
        if (jj, i) in coeffs:
            assert coeffs[(jj, i)] == c, "asymmetry at %s" % ((i, jj),)
        out[(i, jj)] = c
        out[(jj, i)] = c
    return out


def check_kronecker(coeffs, ell):
    want = {(ell + 1, 0): 1, (ell, ell): -1 % ell, (1, 1): -1 % ell,
            (0, ell + 1): 1}
    got = {k: c % ell for k, c in coeffs.items() if c % ell}
    assert got == {k: v % ell for k, v in want.items() if v % ell}, \
        "Kronecker congruence fails for ell=%d" % ell


def main():
    ells = [int(a) for a in sys.argv[1:]] or [2, 3, 5, 7, 11, 13]
    os.makedirs(DATA_DIR, exist_ok=True)
    for ell in ells:
        t0 = time.time()
        print("ell =", ell)
        coeffs = compute_phi(ell)
        coeffs = symmetrize(coeffs, ell)
        check_kronecker(coeffs, ell)
        if ell == 2:
            assert {k: v for k, v in coeffs.items() if k[0] >= k[1]} == PHI2, \
                "Phi_2 does not match the classical polynomial"
        path = os.path.join(DATA_DIR, "modpoly_%d.txt" % ell)
        with open(path, "w") as f:
            for (i, jj) in sorted(coeffs):
                if i >= jj:
                    f.write("%d %d %d\n" % (i, jj, coeffs[(i, jj)]))
        print("  wrote %s  (%.1fs)" % (path, time.time() - t0))


if __name__ == "__main__":
    main()
