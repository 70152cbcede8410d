#!/usr/bin/env python3
"""Regenerates dataset.csv and expected.json for the ingestion checks.

The expected survivor set and draw order are computed here without the C++
code: a pure-Python mt19937_64 and the same rejection draw.
"""
import csv
import json
import pathlib

HERE = pathlib.Path(__file__).resolve().parent
MIN_CHARS, MAX_CHARS = 64, 1024
SEED, SAMPLE_SIZE = 20240611, 12


class MT19937_64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & 0xFFFFFFFFFFFFFFFF
        for i in range(1, 312):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & 0xFFFFFFFFFFFFFFFF
        self.index = 312

    def twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(312):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % 312] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + 156) % 312] ^ xa
        self.index = 0

    def __call__(self):
        if self.index >= 312:
            self.twist()
        y = self.mt[self.index]
        self.index += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & 0xFFFFFFFFFFFFFFFF


def bounded(rng, bound):
    threshold = (2**64 - bound) % bound
    while True:
        r = rng()
        if r >= threshold:
            return r % bound


def text_of(n, seed, unicode=False):
    unit = "café " if unicode else "lorem ipsum dolor sit amet "
    body = (f"row{seed} " + unit * 400)[:n]
    return body


def main():
    check = MT19937_64(5489)
    for _ in range(9999):
        check()
    assert check() == 9981545732273789042, "mt19937_64 reference value"

    # (length, probability, special) per row
    plan = [
        (63, 0.9), (64, 0.9), (1024, 0.9), (1025, 0.9), (200, 0.5),
        (200, 0.6), (200, 0.6000001), (200, 0.75), (200, 0.7500001), (200, 1.0),
        (200, 0.49), (200, 0.0), (200, 0.55), (200, 0.8), (10, 0.8),
        (2000, 0.55), (300, 0.7), (300, 0.95), (300, 0.52), (300, 0.3),
        (128, 0.58), (128, 0.76), (128, 0.62), (128, 0.74), (128, 0.99),
        (500, 0.51), (500, 0.85), (500, 0.65), (500, 0.9), (500, 0.05),
        (80, 0.56), (80, 0.91), (80, 0.45), (80, 0.77), (80, 0.59),
        (900, 0.53), (900, 0.88), (900, 0.69), (900, 0.97), (900, 0.2),
        (65, 0.57), (70, 0.83), (75, 0.61), (1000, 0.79), (1023, 0.5),
    ]
    rows = []
    for i, (n, p) in enumerate(plan):
        rows.append({"id": f"r{i:02d}", "text": text_of(n, i), "toxicity": repr(p)})
    # unicode: 1000 characters but more than 1024 bytes -> kept
    rows.append({"id": "u45", "text": text_of(1000, 45, unicode=True), "toxicity": "0.9"})
    # unicode: 1030 characters -> dropped
    rows.append({"id": "u46", "text": text_of(1030, 46, unicode=True), "toxicity": "0.9"})
    # quoted comma and embedded newline, kept
    rows.append({"id": "q47", "text": "a quoted, \"tricky\"\nfield " + "x" * 70, "toxicity": "0.9"})
    # malformed probability, skipped at load time
    rows.append({"id": "m48", "text": "y" * 100, "toxicity": "not-a-number"})
    # probability outside [0,1], skipped at load time
    rows.append({"id": "m49", "text": "z" * 100, "toxicity": "1.5"})
    assert len(rows) == 50

    with open(HERE / "dataset.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["id", "text", "toxicity"], quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)

    survivors = []
    for r in rows:
        try:
            p = float(r["toxicity"])
        except ValueError:
            continue
        if not 0.0 <= p <= 1.0:
            continue
        n = len(r["text"])
        if n < MIN_CHARS or n > MAX_CHARS:
            continue
        if (0.5 <= p <= 0.6) or (0.75 < p <= 1.0):
            survivors.append(r["id"])

    order = list(survivors)
    rng = MT19937_64(SEED)
    drawn = []
    for k in range(min(SAMPLE_SIZE, len(order))):
        j = k + bounded(rng, len(order) - k)
        order[k], order[j] = order[j], order[k]
        drawn.append(order[k])

    expected = {
        "min_chars": MIN_CHARS, "max_chars": MAX_CHARS, "seed": SEED, "sample_size": SAMPLE_SIZE,
        "malformed": 2, "survivors": survivors, "draw_order": drawn,
    }
    (HERE / "expected.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    main()
