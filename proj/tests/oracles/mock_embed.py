"""Independent reference for the mock embedder and PINC.

Prints the values frozen into test_retrieval.cpp and test_evalkit.cpp.
Run: python3 tests/oracles/mock_embed.py
"""
import math
import re

EDGE = set(".,;:!?\"'`()[]{}")
MASK = (1 << 64) - 1


def fnv1a64(s: str) -> int:
    h = 0xCBF29CE484222325
    for b in s.encode():
        h ^= b
        h = (h * 0x100000001B3) & MASK
    return h


def tokenize(text: str):
    out = []
    for word in re.split(r"[ \t\n\r\f\v]+", text):
        w = word
        while w and w[0] in EDGE:
            w = w[1:]
        while w and w[-1] in EDGE:
            w = w[:-1]
        if w:
            out.append(w.lower() if w.isascii() else "".join(c.lower() if "A" <= c <= "Z" else c for c in w))
    return out


def embed(text: str):
    acc = [0.0] * 256
    toks = tokenize(text)
    feats = toks + [toks[i] + " " + toks[i + 1] for i in range(len(toks) - 1)]
    for f in feats:
        h = fnv1a64(f)
        acc[h % 256] += -1.0 if (h >> 32) & 1 else 1.0
    n = math.sqrt(sum(x * x for x in acc))
    if n == 0:
        return [1.0] + [0.0] * 255
    return [x / n for x in acc]


def cosine(a, b):
    return sum(x * y for x, y in zip(a, b)) / math.sqrt(sum(x * x for x in a)) / math.sqrt(sum(y * y for y in b))


def pinc(src, cand, max_n=4):
    s, c = tokenize(src), tokenize(cand)
    vals = []
    for n in range(1, max_n + 1):
        cg = {tuple(c[i:i + n]) for i in range(len(c) - n + 1)}
        if not cg:
            continue
        sg = {tuple(s[i:i + n]) for i in range(len(s) - n + 1)}
        vals.append(1 - len(cg & sg) / len(cg))
    return sum(vals) / len(vals)


if __name__ == "__main__":
    print("fnv1a64('a') = %#x" % fnv1a64("a"))
    print("fnv1a64('limits') = %#x" % fnv1a64("limits"))
    pairs = [
        ("The derivative measures the instantaneous rate of change.",
         "Derivatives measure the rate of change of a function."),
        ("A limit describes the value a function approaches.",
         "The chain rule differentiates compositions of functions."),
        ("vectors span a space", "vectors span a space"),
    ]
    for a, b in pairs:
        ea, eb = embed(a), embed(b)
        # the C++ side stores float32, so round-trip through float before comparing
        import struct
        fa = [struct.unpack("f", struct.pack("f", x))[0] for x in ea]
        fb = [struct.unpack("f", struct.pack("f", x))[0] for x in eb]
        nz = [(i, round(x, 9)) for i, x in enumerate(ea) if x != 0][:3]
        print(repr(a), repr(b), "cos=%.12f" % cosine(fa, fb), "first nonzero:", nz)
    print("pinc worked = %.15f" % pinc("a b c d", "a b x y", 2))
    print("pinc sentence = %.15f" % pinc("the cat sat on the mat", "the cat lay on the red mat"))
