"""Builders and reference implementations shared by the test modules."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from guiparse.core import BBox, Element, Kind, Language, Platform, Screen
from guiparse.geometry import iou


def box(*xs) -> BBox:
    return BBox(*(float(x) for x in xs))


def el(semantics: str, *xs, kind: Kind = Kind.TEXT, score=None) -> Element:
    return Element(kind, semantics, box(*xs), score)


def screen(elements=(), sid: str = "s0", platform=Platform.MOBILE, language=Language.EN) -> Screen:
    return Screen(sid, 1080, 1920, platform, language, tuple(elements))


def random_box(rng: np.random.Generator, lo: float = 0.0, hi: float = 1.0, min_size: float = 1e-3) -> BBox:
    while True:
        x = np.sort(rng.uniform(lo, hi, 2))
        y = np.sort(rng.uniform(lo, hi, 2))
        if x[1] - x[0] >= min_size and y[1] - y[0] >= min_size:
            return BBox(float(x[0]), float(y[0]), float(x[1]), float(y[1]))


# -- exhaustive assignment oracle -------------------------------------------------

_PERMS: dict[tuple[int, int], np.ndarray] = {}


def _perms(n: int, m: int) -> np.ndarray:
    if (n, m) not in _PERMS:
        _PERMS[n, m] = np.array(list(itertools.permutations(range(m), n)), dtype=np.int64).reshape(-1, n)
    return _PERMS[n, m]


def brute_force_assignments(cost: np.ndarray) -> tuple[Fraction, list[tuple[tuple[int, int], ...]]]:
    """Exact minimum total cost over every full assignment of the shorter
    side, and all assignments (as sorted pair tuples) attaining it."""
    cost = np.asarray(cost, dtype=np.float64)
    transposed = cost.shape[0] > cost.shape[1]
    c = cost.T if transposed else cost
    n, m = c.shape
    perms = _perms(n, m)
    totals = c[np.arange(n)[None, :], perms].sum(axis=1)
    # float sums only shortlist candidates; the decision is made exactly
    cand = np.flatnonzero(totals <= totals.min() + 1e-9 * max(1.0, abs(totals.min())))
    exact = {}
    for k in cand:
        cols = perms[k]
        exact[k] = sum((Fraction(float(c[i, cols[i]])) for i in range(n)), Fraction(0))
    best = min(exact.values())
    winners = []
    for k, v in exact.items():
        if v == best:
            pairs = [(i, int(j)) for i, j in enumerate(perms[k])]
            if transposed:
                pairs = [(j, i) for i, j in pairs]
            winners.append(tuple(sorted(pairs)))
    return best, winners


def exact_total(cost: np.ndarray, pairs) -> Fraction:
    return sum((Fraction(float(cost[i, j])) for i, j in pairs), Fraction(0))


# -- brute-force greedy suppression oracle ----------------------------------------

def nms_reference(elements, iou_thresh: float, order, class_aware: bool = False) -> list[int]:
    """Greedy suppression characterised as a fixed point and found by search.

    The kept set S is the unique subset such that, walking ``order``, an
    element belongs to S exactly when no earlier member of S overlaps it by
    more than the threshold. Every subset is tried.
    """
    n = len(elements)
    rank = {i: r for r, i in enumerate(order)}

    def conflicts(a: int, b: int) -> bool:
        if class_aware and elements[a].kind != elements[b].kind:
            return False
        return iou(elements[a].box, elements[b].box) > iou_thresh

    found = []
    for mask in range(1 << n):
        members = {i for i in range(n) if mask >> i & 1}
        ok = True
        for i in range(n):
            blocked = any(conflicts(i, j) for j in members if rank[j] < rank[i])
            if (i in members) == blocked:
                ok = False
                break
        if ok:
            found.append(members)
    assert len(found) == 1, "the greedy fixed point must be unique"
    return sorted(found[0], key=lambda i: rank[i])


# -- tiny decoder instances for gradient checks ------------------------------------

def tiny_instance(seed: int, decoder: str = "continuous", mu: float = 0.0, max_targets: int = 3):
    """A small model with its own label vocabulary plus one training instance."""
    from guiparse.routedecode.loss import TrainConfig
    from guiparse.routedecode.model import ModelConfig, init_model
    from guiparse.routedecode.tokens import LabelVocab
    from guiparse.routedecode.train import sample_instance
    from guiparse.synth import SynthConfig, gen_screen, rasterize

    sc = SynthConfig(seed=seed, grid=4, feature_dim=10, elements_mean=3)
    s = gen_screen(sc, 0).screen
    vocab = LabelVocab(tuple(sorted({e.semantics for e in s.elements})))
    bins, digits = (4, 2) if decoder == "discrete" else (32, 1)
    mc = ModelConfig(grid=4, feature_dim=10, hidden=6, token_dim=8, pos_freqs=1, seed=seed,
                     decoder=decoder, bins=bins, digits=digits)
    model = init_model(mc, vocab)
    cfg = TrainConfig(mu=mu, max_targets=max_targets)
    inst = sample_instance(s, rasterize(s, sc), np.random.default_rng(seed), cfg)
    return model, inst, cfg


def full_loss_fn(model, inst, cfg):
    """``fn`` for ``grad_check``: the complete per-instance training loss."""
    from guiparse.routedecode.train import instance_loss

    def fn():
        model.store.zero_grad()
        loss, _ = instance_loss(model, inst, cfg)
        return loss, {n: g.copy() for n, g in model.store.grads.items()}

    return fn

