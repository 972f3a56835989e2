"""Freezes Welch t-test expectations computed at 50 significant digits."""

import json
import os
import random

import mpmath as mp

mp.mp.dps = 50
OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "stats", "welch.json")


def welch(a, b):
    a = [mp.mpf(x) for x in a]
    b = [mp.mpf(x) for x in b]
    na, nb = len(a), len(b)
    ma, mb = mp.fsum(a) / na, mp.fsum(b) / nb
    va = mp.fsum((x - ma) ** 2 for x in a) / (na - 1)
    vb = mp.fsum((x - mb) ** 2 for x in b) / (nb - 1)
    se2 = va / na + vb / nb
    t = (ma - mb) / mp.sqrt(se2)
    df = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    p = mp.betainc(df / 2, mp.mpf(1) / 2, 0, df / (df + t * t), regularized=True)
    return float(t), float(df), float(p)


rng = random.Random(20261014)
cases = []
a, b = [1, 2, 3], [2, 3, 4]
t, df, p = welch(a, b)
cases.append({"a": a, "b": b, "statistic": t, "df": df, "p_value": p})
while len(cases) < 201:
    na, nb = rng.randint(2, 30), rng.randint(2, 30)
    mu, shift = rng.uniform(-50, 50), rng.choice([0.0, rng.uniform(-5, 5), rng.uniform(-40, 40)])
    sa, sb = rng.uniform(0.1, 20), rng.uniform(0.1, 20)
    a = [round(rng.gauss(mu, sa), 3) for _ in range(na)]
    b = [round(rng.gauss(mu + shift, sb), 3) for _ in range(nb)]
    if len(set(a)) < 2 or len(set(b)) < 2:
        continue
    t, df, p = welch(a, b)
    cases.append({"a": a, "b": b, "statistic": t, "df": df, "p_value": p})

with open(OUT, "w") as f:
    json.dump(cases, f, indent=1)
    f.write("\n")
print(cases[0])
