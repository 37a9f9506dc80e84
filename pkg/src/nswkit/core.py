"""Instances, valuations, NSW evaluation and the brute-force oracle.

Item sets are passed around as iterables of item indices.  Internally small
universes (at most ``TABLE_MAX_ITEMS`` items) are handled through value
tables indexed by bitmask, where bit ``j`` stands for item ``j``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NEG_INF = float("-inf")
TOL = 1e-9
TABLE_MAX_ITEMS = 20
BRUTE_FORCE_LIMIT = 10**7

_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def to_mask(items: Iterable[int]) -> int:
    mask = 0
    for j in items:
        mask |= 1 << int(j)
    return mask


def mask_items(mask: int) -> tuple[int, ...]:
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return tuple(out)


def _check_items(items, num_items: int) -> tuple[int, ...]:
    s = tuple(sorted(set(int(j) for j in items)))
    if s and (s[0] < 0 or s[-1] >= num_items):
        raise IndexError(f"item index out of range [0, {num_items}): {s}")
    return s


class Valuation:
    """Base class.  Subclasses implement ``_value`` and ``table``."""

    num_items: int

    def value(self, items: Iterable[int]) -> float:
        return self._value(_check_items(items, self.num_items))

    def log_value(self, items: Iterable[int]) -> float:
        v = self.value(items)
        return math.log(v) if v > 0 else NEG_INF

    def table(self) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _value(self, items: tuple[int, ...]) -> float:
        raise NotImplementedError


def _table_guard(m: int):
    if m > TABLE_MAX_ITEMS:
        raise ValueError(f"value table needs num_items <= {TABLE_MAX_ITEMS}, got {m}")


@dataclass(frozen=True, eq=False)
class Additive(Valuation):
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def num_items(self) -> int:
        return len(self.values)

    def _value(self, items):
        return float(sum(self.values[j] for j in items))

    def table(self) -> np.ndarray:
        _table_guard(self.num_items)
        tab = np.zeros(1)
        for v in self.values:
            tab = np.concatenate([tab, tab + v])
        return tab

    def to_dict(self):
        return {"type": "additive", "values": list(self.values)}


@dataclass(frozen=True, eq=False)
class Coverage(Valuation):
    """v(S) = size of the union of the ground subsets covered by items of S."""

    ground_size: int
    item_sets: tuple

    def __post_init__(self):
        object.__setattr__(self, "item_sets", tuple(tuple(sorted(set(int(a) for a in s))) for s in self.item_sets))

    @property
    def num_items(self) -> int:
        return len(self.item_sets)

    def _value(self, items):
        covered = set()
        for j in items:
            covered.update(self.item_sets[j])
        return float(len(covered))

    def _packed(self) -> np.ndarray:
        bits = np.zeros((self.num_items, max(self.ground_size, 1)), dtype=bool)
        for j, s in enumerate(self.item_sets):
            bits[j, list(s)] = True
        return np.packbits(bits, axis=1)

    def table(self) -> np.ndarray:
        _table_guard(self.num_items)
        packed = self._packed()
        union = np.zeros((1, packed.shape[1]), dtype=np.uint8)
        for j in range(self.num_items):
            union = np.concatenate([union, union | packed[j]])
        return _POPCOUNT8[union].sum(axis=1).astype(float)

    def to_dict(self):
        return {"type": "coverage", "ground_size": self.ground_size, "item_sets": [list(s) for s in self.item_sets]}


@dataclass(frozen=True, eq=False)
class Table(Valuation):
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        m = int(round(math.log2(len(vals)))) if len(vals) else -1
        if m < 0 or (1 << m) != len(vals):
            raise ValueError("table length must be a power of two")
        _table_guard(m)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def num_items(self) -> int:
        return int(len(self.values)).bit_length() - 1

    def _value(self, items):
        return float(self.values[to_mask(items)])

    def table(self) -> np.ndarray:
        return self.values.copy()

    def to_dict(self):
        return {"type": "table", "values": self.values.tolist()}


@dataclass(frozen=True, eq=False)
class PartitionSystem(Valuation):
    """Heavy or light agent of the partition-system gap family.

    Set items A[p][q][o] (p < k, q < lam, o < k) have index (p*lam + q)*k + o,
    followed by k - lam large items.  A heavy agent of group p values the
    union of its own set items inside the grid [k]^h (h = k*lam, r = k^h)
    plus ``t`` if it holds a large item.  A light agent (p, q, o) gets 1 iff
    it holds any item A[p][q][*].
    """

    k: int
    lam: int
    t: float
    role: str
    group: int
    coordinate: int = -1
    index: int = -1

    def __post_init__(self):
        if not (2 <= self.lam < self.k):
            raise ValueError("need 2 <= lam < k")
        if self.role not in ("heavy", "light"):
            raise ValueError("role must be 'heavy' or 'light'")

    @property
    def num_items(self) -> int:
        return self.k * self.k * self.lam + (self.k - self.lam)

    @property
    def h(self) -> int:
        return self.k * self.lam

    @property
    def log_r(self) -> float:
        return self.h * math.log(self.k)

    def set_item(self, p: int, q: int, o: int) -> int:
        return (p * self.lam + q) * self.k + o

    def _counts(self, items) -> tuple[list[int], bool]:
        k, lam = self.k, self.lam
        n_set = k * k * lam
        counts = [0] * lam
        large = False
        for j in items:
            if j >= n_set:
                large = True
                continue
            p, rest = divmod(j, lam * k)
            if p == self.group:
                counts[rest // k] += 1
        return counts, large

    def _log_union_fraction(self, counts) -> float:
        # log(1 - prod_q (1 - n_q/k)), -inf when nothing is covered
        if not any(counts):
            return NEG_INF
        s = 0.0
        for n in counts:
            if n >= self.k:
                return 0.0
            s += math.log1p(-n / self.k)
        return math.log(-math.expm1(s))

    def log_value(self, items) -> float:
        items = _check_items(items, self.num_items)
        if self.role == "light":
            return 0.0 if self._light_hit(items) else NEG_INF
        counts, large = self._counts(items)
        lu = self._log_union_fraction(counts)
        set_part = self.log_r + lu if lu > NEG_INF else NEG_INF
        if large:
            return float(np.logaddexp(math.log(self.t), set_part)) if set_part > NEG_INF else math.log(self.t)
        return set_part

    def _light_hit(self, items) -> bool:
        lo = self.set_item(self.group, self.coordinate, 0)
        return any(lo <= j < lo + self.k for j in items)

    def _value(self, items):
        if self.role == "light":
            return 1.0 if self._light_hit(items) else 0.0
        lv = self.log_value(items)
        return math.exp(lv) if lv > NEG_INF else 0.0

    def table(self) -> np.ndarray:
        m = self.num_items
        _table_guard(m)
        masks = np.arange(1 << m, dtype=np.int64)
        k, lam = self.k, self.lam
        if self.role == "light":
            lo = self.set_item(self.group, self.coordinate, 0)
            block = ((1 << k) - 1) << lo
            return ((masks & block) != 0).astype(float)
        prod = np.ones(len(masks))
        for q in range(lam):
            lo = self.set_item(self.group, q, 0)
            n_q = np.zeros(len(masks), dtype=np.int64)
            for o in range(k):
                n_q += (masks >> (lo + o)) & 1
            prod *= 1.0 - n_q / k
        r = math.exp(self.log_r)
        large_block = ((1 << (k - lam)) - 1) << (k * k * lam)
        return r * (1.0 - prod) + self.t * ((masks & large_block) != 0)

    def to_dict(self):
        d = {"type": "partition_system", "k": self.k, "lambda": self.lam, "t": self.t,
             "role": self.role, "group": self.group}
        if self.role == "light":
            d.update(coordinate=self.coordinate, index=self.index)
        return d


@dataclass(frozen=True)
class Agent:
    weight: float
    valuation: Valuation


@dataclass(frozen=True)
class Instance:
    num_items: int
    agents: tuple

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    @property
    def weights(self) -> np.ndarray:
        return np.array([a.weight for a in self.agents])


@dataclass(frozen=True)
class Violation:
    field: str
    predicate: str
    detail: str = ""


def value_table(val: Valuation) -> np.ndarray:
    """Cached read-only value table of a valuation."""
    tab = getattr(val, "_cached_table", None)
    if tab is None:
        tab = np.asarray(val.table(), dtype=float)
        tab.setflags(write=False)
        object.__setattr__(val, "_cached_table", tab)
    return tab


def evaluate(valuation: Valuation, s: Iterable[int]) -> float:
    return valuation.value(s)


def log_nsw(instance: Instance, alloc: Sequence[Iterable[int]]) -> float:
    """Weighted log-NSW; ``NEG_INF`` when some agent's bundle is worthless."""
    if len(alloc) != instance.num_agents:
        raise ValueError("allocation must list one bundle per agent")
    seen: set = set()
    total = 0.0
    for agent, bundle in zip(instance.agents, alloc):
        bundle = _check_items(bundle, instance.num_items)
        if seen.intersection(bundle):
            raise ValueError("bundles must be disjoint")
        seen.update(bundle)
        lv = agent.valuation.log_value(bundle)
        if lv == NEG_INF:
            return NEG_INF
        total += agent.weight * lv
    return total


def log_tables(instance: Instance) -> np.ndarray:
    """(n, 2^m) array of w_i * ln v_i(mask), -inf where the value is 0."""
    rows = []
    for a in instance.agents:
        tab = value_table(a.valuation)
        with np.errstate(divide="ignore"):
            rows.append(a.weight * np.where(tab > 0, np.log(np.maximum(tab, 1e-300)), NEG_INF))
    return np.array(rows)


def _chunk_scores(start, stop, n, m, ltab, pow2):
    idx = np.arange(start, stop, dtype=np.int64)
    digits = np.empty((len(idx), m), dtype=np.int64)
    rem = idx.copy()
    for j in range(m - 1, -1, -1):  # item 0 is the most significant digit
        digits[:, j] = rem % n
        rem //= n
    score = np.zeros(len(idx))
    for i in range(n):
        masks = ((digits == i) * pow2).sum(axis=1)
        score += ltab[i][masks]
    return score


def brute_force_opt(instance: Instance, threads: int = 1, chunk: int = 1 << 16):
    """Exhaustive search over all n^m full assignments.

    Returns (allocation, value).  Ties within ``TOL`` go to the
    lexicographically smallest assignment vector (item 0 first).
    """
    n, m = instance.num_agents, instance.num_items
    if n == 0:
        raise ValueError("instance has no agents")
    total = n**m
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force guard: {n}^{m} > {BRUTE_FORCE_LIMIT}")
    ltab = log_tables(instance)
    pow2 = (1 << np.arange(m, dtype=np.int64))
    bounds = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]

    def run(b):
        return _chunk_scores(b[0], b[1], n, m, ltab, pow2)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as ex:
            maxima = list(ex.map(lambda b: run(b).max(), bounds))
    else:
        maxima = [run(b).max() for b in bounds]
    best = max(maxima)
    winner = None
    for b, mx in zip(bounds, maxima):
        if best == NEG_INF or mx >= best - TOL:
            sc = run(b)
            hit = np.nonzero(sc >= best - TOL)[0] if best > NEG_INF else np.array([0])
            winner = b[0] + int(hit[0])
            break
    digits = []
    rem = winner
    for _ in range(m):
        digits.append(rem % n)
        rem //= n
    digits.reverse()
    alloc = [tuple(j for j in range(m) if digits[j] == i) for i in range(n)]
    return alloc, log_nsw(instance, alloc)


def _spot_sets(m: int, rng: np.random.Generator, count: int):
    for _ in range(count):
        s = rng.random(m) < rng.random()
        yield tuple(np.nonzero(s)[0])


def check_valuation(val: Valuation, name: str, exhaustive_limit: int = 12, samples: int = 200) -> list:
    out = []
    m = val.num_items
    if m <= exhaustive_limit:
        tab = value_table(val)
        if abs(tab[0]) > TOL:
            out.append(Violation(name, "empty-set value is 0", f"v(empty)={tab[0]}"))
        if tab.min() < -TOL:
            out.append(Violation(name, "nonnegative", f"min value {tab.min()}"))
        masks = np.arange(1 << m)
        mono = sub = False
        for a in range(m):
            base = masks[(masks >> a) & 1 == 0]
            if np.any(tab[base | (1 << a)] < tab[base] - TOL):
                mono = True
            for b in range(a + 1, m):
                s = base[(base >> b) & 1 == 0]
                lhs = tab[s | (1 << a)] + tab[s | (1 << b)]
                rhs = tab[s | (1 << a) | (1 << b)] + tab[s]
                if np.any(lhs < rhs - TOL):
                    sub = True
        if mono:
            out.append(Violation(name, "monotone"))
        if sub:
            out.append(Violation(name, "submodular"))
        return out
    rng = np.random.default_rng(0)
    if abs(val.value(())) > TOL:
        out.append(Violation(name, "empty-set value is 0"))
    for s in _spot_sets(m, rng, samples):
        rest = [j for j in range(m) if j not in s]
        if len(rest) < 2:
            continue
        a, b = (int(x) for x in rng.choice(rest, 2, replace=False))
        fs, fa, fb, fab = (val.value(s), val.value(s + (a,)), val.value(s + (b,)), val.value(s + (a, b)))
        if fa < fs - TOL or fab < fa - TOL:
            out.append(Violation(name, "monotone", f"spot check at {s}"))
            break
        if fa + fb < fab + fs - TOL:
            out.append(Violation(name, "submodular", f"spot check at {s}"))
            break
    return out


def validate_instance(instance: Instance) -> list:
    """Empty list iff the instance invariants hold."""
    out = []
    if instance.num_agents == 0:
        out.append(Violation("agents", "at least one agent"))
        return out
    wsum = float(sum(a.weight for a in instance.agents))
    if abs(wsum - 1.0) > TOL:
        out.append(Violation("agents.weight", "weights sum to 1", f"sum={wsum}"))
    for i, a in enumerate(instance.agents):
        if not (0.0 < a.weight <= 1.0):
            out.append(Violation(f"agents[{i}].weight", "weight in (0,1]", f"weight={a.weight}"))
        val = a.valuation
        name = f"agents[{i}].valuation"
        if val.num_items != instance.num_items:
            out.append(Violation(name, "covers num_items items", f"{val.num_items} != {instance.num_items}"))
            continue
        if isinstance(val, Coverage):
            bad = [s for s in val.item_sets if s and (s[0] < 0 or s[-1] >= val.ground_size)]
            if bad:
                out.append(Violation(name, "item sets inside ground set"))
                continue
        if isinstance(val, Additive) and any(v < 0 for v in val.values):
            out.append(Violation(name, "nonnegative", "negative additive value"))
            continue
        out.extend(check_valuation(val, name))
    return out


def valuation_from_dict(d: dict) -> Valuation:
    kind = d["type"]
    if kind == "additive":
        return Additive(tuple(d["values"]))
    if kind == "coverage":
        return Coverage(int(d["ground_size"]), tuple(tuple(s) for s in d["item_sets"]))
    if kind == "table":
        return Table(np.asarray(d["values"], dtype=float))
    if kind == "partition_system":
        return PartitionSystem(int(d["k"]), int(d["lambda"]), float(d["t"]), d["role"], int(d["group"]),
                               int(d.get("coordinate", -1)), int(d.get("index", -1)))
    raise ValueError(f"unknown valuation type {kind!r}")


def instance_to_dict(instance: Instance) -> dict:
    return {"num_items": instance.num_items,
            "agents": [{"weight": a.weight, "valuation": a.valuation.to_dict()} for a in instance.agents]}


def instance_from_dict(d: dict) -> Instance:
    agents = [Agent(float(a["weight"]), valuation_from_dict(a["valuation"])) for a in d["agents"]]
    return Instance(int(d["num_items"]), tuple(agents))


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def save_instance(instance: Instance, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2)


def random_coverage(m: int, ground_size: int, rng: np.random.Generator, density: float = 0.3) -> Coverage:
    sets = []
    for _ in range(m):
        s = np.nonzero(rng.random(ground_size) < density)[0]
        if len(s) == 0:
            s = [int(rng.integers(ground_size))]
        sets.append(tuple(int(a) for a in s))
    return Coverage(ground_size, tuple(sets))


def random_instance(n: int, m: int, rng: np.random.Generator, ground_size: int = 8, kind: str = "coverage") -> Instance:
    w = rng.dirichlet(np.full(n, 2.0))
    w = w / w.sum()
    agents = []
    for i in range(n):
        if kind == "additive":
            val: Valuation = Additive(tuple(rng.integers(1, 6, size=m).astype(float)))
        else:
            val = random_coverage(m, ground_size, rng)
        agents.append(Agent(float(w[i]), val))
    return Instance(m, tuple(agents))


def all_subsets(items: Sequence[int]):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)
