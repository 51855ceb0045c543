"""Slow affine secp256k1 arithmetic on plain integers.

Independent of libsecp256k1; used only as an oracle in tests.
"""

import hashlib

P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
G = (
    0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
    0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8,
)
INF = None


def on_curve(pt):
    if pt is INF:
        return True
    x, y = pt
    return (y * y - x * x * x - 7) % P == 0


def add(a, b):
    if a is INF:
        return b
    if b is INF:
        return a
    if a[0] == b[0] and (a[1] + b[1]) % P == 0:
        return INF
    if a == b:
        lam = 3 * a[0] * a[0] * pow(2 * a[1], -1, P) % P
    else:
        lam = (b[1] - a[1]) * pow(b[0] - a[0], -1, P) % P
    x = (lam * lam - a[0] - b[0]) % P
    return (x, (lam * (a[0] - x) - a[1]) % P)


def mul(pt, k):
    k %= N
    acc = INF
    while k:
        if k & 1:
            acc = add(acc, pt)
        pt = add(pt, pt)
        k >>= 1
    return acc


def iterated(pt, k):
    """k-fold repeated addition, no double-and-add."""
    acc = INF
    for _ in range(k):
        acc = add(acc, pt)
    return acc


def encode(pt) -> bytes:
    if pt is INF:
        return bytes(33)
    return bytes([2 + (pt[1] & 1)]) + pt[0].to_bytes(32, "big")


def decode(data: bytes):
    if data == bytes(33):
        return INF
    x = int.from_bytes(data[1:], "big")
    y = pow((x**3 + 7) % P, (P + 1) // 4, P)
    if (y & 1) != (data[0] & 1):
        y = P - y
    pt = (x, y)
    assert on_curve(pt)
    return pt


def hash_to_curve(tag: bytes, data: bytes):
    """Try-and-increment, even y; spelled out independently of the package."""
    ctr = 0
    while True:
        digest = hashlib.sha256(
            len(tag).to_bytes(2, "big") + tag + data + ctr.to_bytes(4, "big")
        ).digest()
        x = int.from_bytes(digest, "big") % P
        rhs = (x**3 + 7) % P
        y = pow(rhs, (P + 1) // 4, P)
        if y * y % P == rhs:
            if y & 1:
                y = P - y
            return (x, y)
        ctr += 1
