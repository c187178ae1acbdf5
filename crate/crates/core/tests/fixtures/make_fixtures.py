"""Regenerates the CSV fixtures and golden prediction files.

The golden values are computed here from the defining formulas, without
reference to the Rust implementation:

* kb: exhaustive enumeration of exact-fit vertices of the pooled check loss,
* js: Siddiqui sparsity weights and a weighted least-squares solve,
* np: Nadaraya-Watson and jackknife sums written out directly, with the
  closed form phi = 20/7 - 285 sqrt(2) / 224 of the one-dimensional
  jackknife biweight kernel.

Run from this directory:  python3 make_fixtures.py
"""

import csv
import datetime as dt
import itertools
import math
from fractions import Fraction

import numpy as np
from scipy.stats import norm

rng = np.random.default_rng(20240611)


def fmt(v):
    return "NA" if v is None or not math.isfinite(v) else f"{v:.16e}"


# ---------------------------------------------------------------- cyclone
def cyclone():
    years = list(range(1899, 2010))  # 111 years
    sparse = {1901, 1904, 1912, 1919, 1925, 1933, 1947}
    with open("cyclone.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["year", "wind", "sst"])
        for y in years:
            sst = round(float(26.5 + 0.01 * (y - 1899) + rng.normal(0, 0.3)), 3)
            count = int(rng.integers(3, 10)) if y in sparse else int(rng.integers(10, 26))
            for _ in range(count):
                wind = max(30.0, float(rng.gamma(6.0, 12.0) + 5 * (sst - 26.5)))
                w.writerow([y, round(wind, 1), sst])


# -------------------------------------------------------------- pollution
def pollution():
    day = dt.date(2018, 7, 1)
    end = dt.date(2020, 6, 30)
    with open("pollution.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "pm25", "temp"])
        while day <= end:
            temp = round(float(25 + 8 * math.sin(2 * math.pi * (day.timetuple().tm_yday - 100) / 365) + rng.normal(0, 1.5)), 2)
            level = 60 + 40 * math.cos(2 * math.pi * (day.month - 1) / 12)
            for _ in range(int(rng.integers(10, 14))):
                v = float(level + rng.normal(0, 15) - 0.8 * (temp - 25))
                if rng.random() < 0.01:
                    v = -abs(v) / 10  # sensor glitch, dropped on ingest
                w.writerow([day.isoformat(), round(v, 2), temp])
            day += dt.timedelta(days=1)


# ----------------------------------------------------------------- golden
N_T, K_REP, TRAIN = 20, 12, 16
TAUS = [0.5, 0.9]


def small():
    xs = np.round(rng.uniform(-2, 2, N_T), 4)
    reps = [np.round(1.0 + 0.8 * x + 0.3 * x * x + rng.normal(0, 1, K_REP), 4) for x in xs]
    with open("small.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "y", "x"])
        for t, (x, r) in enumerate(zip(xs, reps), start=1):
            for y in r:
                w.writerow([t, float(y), float(x)])
    return [float(x) for x in xs], [[float(v) for v in r] for r in reps]


def rank(m, tau):
    return max(1, min(m, math.ceil(Fraction(m) * Fraction(tau))))


def sample_quantile(values, tau):
    s = sorted(values)
    return s[rank(len(s), tau) - 1]


def rho(u, tau):
    return u * (tau - (1.0 if u < 0 else 0.0))


def kb(xs, reps, tau):
    obs = [((1.0, x), y) for x, r in zip(xs, reps) for y in r]
    best = (math.inf, None)
    for (a, ya), (b, yb) in itertools.combinations(obs, 2):
        m = np.array([a, b])
        if abs(np.linalg.det(m)) < 1e-12:
            continue
        beta = np.linalg.solve(m, [ya, yb])
        loss = sum(rho(y - beta[0] * r[0] - beta[1] * r[1], tau) for r, y in obs)
        if loss < best[0]:
            best = (loss, beta)
    return best[1]


def js(xs, reps, tau):
    q, wts = [], []
    for r in reps:
        k = len(r)
        h = min(0.5 * min(tau, 1 - tau), k ** (-1.0 / 3.0))
        spread = sample_quantile(r, tau + h) - sample_quantile(r, tau - h)
        f = 2 * h / spread
        q.append(sample_quantile(r, tau))
        wts.append(k * f * f / (tau * (1 - tau)))  # 1 / omega
    X = np.column_stack([np.ones(len(xs)), xs])
    W = np.diag(wts)
    return np.linalg.solve(X.T @ W @ X, X.T @ W @ np.array(q))


def kern(u):
    return 15 / 16 * (1 - u * u) ** 2 if abs(u) < 1 else 0.0


PHI_JK = 20 / 7 - 285 * math.sqrt(2) / 224


class Np:
    def __init__(self, xs, reps, tau):
        n = len(xs)
        self.mean = sum(xs) / n
        self.sd = math.sqrt(sum((x - self.mean) ** 2 for x in xs) / n)
        self.z = [(x - self.mean) / self.sd for x in xs]
        self.q = [sample_quantile(r, tau) for r in reps]
        self.b = n ** -0.2

    def weights(self, z, b):
        return [kern((z - zt) / b) for zt in self.z]

    def nw_at(self, z, b):
        w = self.weights(z, b)
        assert sum(1 for v in w if v > 0) >= 3
        return sum(a * q for a, q in zip(w, self.q)) / sum(w)

    def jk_at(self, z):
        return 2 * self.nw_at(z, self.b) - self.nw_at(z, math.sqrt(2) * self.b)

    def nw(self, x):
        return self.nw_at((x - self.mean) / self.sd, self.b)

    def ci(self, x, alpha=0.05):
        z = (x - self.mean) / self.sd
        w = self.weights(z, self.b)
        point = self.jk_at(z)
        var = sum(wt * (q - self.jk_at(zt)) ** 2 for wt, q, zt in zip(w, self.q, self.z) if wt > 0) / sum(w)
        half = norm.ppf(1 - alpha / 2) * math.sqrt(var) * math.sqrt(PHI_JK) / math.sqrt(sum(w))
        return point, point - half, point + half


def golden(xs, reps):
    tr_x, tr_r = xs[:TRAIN], reps[:TRAIN]
    te = list(range(TRAIN, N_T))
    with open("small_golden.csv", "w", newline="") as f:
        f.write("time,method,tau,prediction,lower,upper\n")
        for tau in TAUS:
            fits = {"kb": kb(tr_x, tr_r, tau), "js": js(tr_x, tr_r, tau)}
            model = Np(tr_x, tr_r, tau)
            for m in ["kb", "js", "np"]:
                for i in te:
                    x = xs[i]
                    p = model.nw(x) if m == "np" else fits[m][0] + fits[m][1] * x
                    f.write(f"{i + 1},{m},{tau},{fmt(p)},NA,NA\n")
    with open("small_golden_ci.csv", "w", newline="") as f:
        f.write("time,method,tau,prediction,lower,upper\n")
        for tau in TAUS:
            model = Np(tr_x, tr_r, tau)
            for i in te:
                p, lo, hi = model.ci(xs[i])
                f.write(f"{i + 1},np,{tau},{fmt(p)},{fmt(lo)},{fmt(hi)}\n")


if __name__ == "__main__":
    cyclone()
    pollution()
    xs, reps = small()
    golden(xs, reps)
