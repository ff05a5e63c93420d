"""Hand-traced dev-set fronts for the operating-point rule.

Each case lists (id, accuracy, cost, K) rows, the delta used, the expected
winner, and where useful the expected tail quantile and removed ids.
"""

from conftest import record

CASES = [
    # the three-point example: 0.88 sits inside the 0.05 band too, so the
    # 80th-percentile cost over {5, 10, 100} is 10 + 0.6 * 90 = 64
    dict(name="worked-example", delta=0.05, expect="A", q=64.0, removed=["B"],
         rows=[("A", 0.90, 10, 5), ("B", 0.905, 100, 8), ("C", 0.88, 5, 3)]),
    # narrowing the band to {0.90, 0.905} gives 10 + 0.8 * 90 = 82
    dict(name="worked-example-narrow", delta=0.02, expect="A", q=82.0, removed=["B"],
         rows=[("A", 0.90, 10, 5), ("B", 0.905, 100, 8), ("C", 0.88, 5, 3)]),
    dict(name="single", delta=0.05, expect="only", q=42.0, removed=[],
         rows=[("only", 0.7, 42, 6)]),
    dict(name="complexity-tiebreak", delta=0.05, expect="k4", removed=[],
         rows=[("k7", 0.85, 300, 7), ("k4", 0.85, 300, 4)]),
    # costs {50, 50, 100}: q = 50 + 0.6 * 50 = 80; the 100-cost point goes
    dict(name="all-tie-accuracy", delta=0.05, expect="c", q=80.0, removed=["a"],
         rows=[("a", 0.8, 100, 5), ("b", 0.8, 50, 9), ("c", 0.8, 50, 4)]),
    # P_tau = {x1, x2, cheap}; q = 200; the whole tail is removed and the
    # cheaper, slightly less accurate genome wins
    dict(name="whole-tail-removed", delta=0.05, expect="cheap", q=200.0, removed=["x1", "x2"],
         rows=[("x1", 0.90, 200, 5), ("x2", 0.905, 200, 6), ("cheap", 0.895, 10, 3),
               ("lo1", 0.85, 20, 4), ("lo2", 0.80, 30, 4)]),
    # alternative 1.5pp short of the bar: tail member survives
    dict(name="alternative-too-inaccurate", delta=0.05, expect="hi", q=82.0, removed=[],
         rows=[("hi", 0.92, 100, 5), ("lo", 0.90, 10, 3)]),
    # alternative costs 85 > 0.8 * 100: tail member survives
    dict(name="alternative-too-expensive", delta=0.05, expect="hi", q=97.0, removed=[],
         rows=[("hi", 0.92, 100, 5), ("mid", 0.915, 85, 3)]),
    dict(name="outside-band-ignored", delta=0.05, expect="best", q=500.0, removed=[],
         rows=[("best", 0.95, 500, 9), ("cheap", 0.80, 1, 2)]),
    dict(name="full-tie-lowest-id", delta=0.05, expect="a", removed=[],
         rows=[("b", 0.9, 10, 3), ("a", 0.9, 10, 3)]),
]


def records_of(case):
    return [record(gid, acc, cost, k) for gid, acc, cost, k in case["rows"]]
