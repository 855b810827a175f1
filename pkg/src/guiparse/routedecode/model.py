"""Toy vision adapter, presence head, and the two coordinate decoders.

Shapes: a screen is ``P = grid**2`` patches; ``A`` is the adapted feature
sequence ``(P, hidden)``; ``E`` stacks the ``m`` query embeddings of one
screen ``(m, token_dim)``.

Continuous decoder: one cross-attention read of ``A`` by the [VG] embedding,
an MLP, and a 4-way regression head squashed into a valid box.
Discrete baseline: the same trunk, but the box is emitted as
``4 * digits`` classification steps fed back autoregressively.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

from .. import neural as nn
from ..core import BBox
from ..synth import SIG_OFFSET, dequantize, quantize_coord
from .tokens import LabelVocab, default_vocab

# octaves of the reference-point encoding fed to the digit head; the finest
# has a period of two bins at the default 32 bins
_REF_FREQS = 5

# keeps squashed coordinates strictly inside (0, 1) so boxes never degenerate
_SQUASH_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    grid: int = 16
    feature_dim: int = 32
    hidden: int = 64
    token_dim: int = 32
    pos_freqs: int = 4
    decoder: str = "continuous"
    bins: int = 32
    digits: int = 1
    activation: str = "gelu"
    init_half_size: float = 0.45
    seed: int = 0

    def __post_init__(self):
        if self.decoder not in ("continuous", "discrete"):
            raise ValueError("decoder must be 'continuous' or 'discrete'")
        if self.activation not in nn.ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(nn.ACTIVATIONS)}")
        if self.bins < 2 or self.digits < 1:
            raise ValueError("need bins >= 2 and digits >= 1")
        if self.base ** self.digits != self.bins:
            raise ValueError(f"bins={self.bins} is not a perfect power for digits={self.digits}")
        if not 4 <= self.hidden <= 256:
            raise ValueError("hidden must lie in [4, 256]")

    @property
    def base(self) -> int:
        return int(round(self.bins ** (1.0 / self.digits)))

    @property
    def steps_per_box(self) -> int:
        return 4 * self.digits if self.decoder == "discrete" else 1

    @property
    def sig_dim(self) -> int:
        return self.feature_dim - SIG_OFFSET

    @property
    def pos_dim(self) -> int:
        return 2 + 4 * self.pos_freqs


@dataclass
class DecoderModel:
    config: ModelConfig
    vocab: LabelVocab
    store: nn.ParamStore
    counters: dict[str, int] = field(default_factory=lambda: {"decoder_calls": 0, "discrete_steps": 0})

    @property
    def act(self):
        return nn.ACTIVATIONS[self.config.activation]

    def n_params(self) -> int:
        return self.store.n_params()

    def meta(self) -> dict:
        return {"model": asdict(self.config), "labels": list(self.vocab.labels)}


@lru_cache(maxsize=8)
def positional_encoding(grid: int, freqs: int) -> np.ndarray:
    """Patch-center coordinates plus sin/cos features, ``(grid**2, 2 + 4*freqs)``."""
    c = (np.arange(grid) + 0.5) / grid
    ys, xs = np.meshgrid(c, c, indexing="ij")
    x, y = xs.reshape(-1), ys.reshape(-1)
    cols = [x, y]
    for k in range(freqs):
        w = math.pi * 2.0**k
        cols += [np.sin(w * x), np.cos(w * x), np.sin(w * y), np.cos(w * y)]
    pe = np.stack(cols, axis=1)
    pe.setflags(write=False)
    return pe


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)


def init_model(config: ModelConfig = ModelConfig(), vocab: Optional[LabelVocab] = None) -> DecoderModel:
    vocab = vocab or default_vocab()
    rng = np.random.default_rng([config.seed, 17])
    H, F, D, Pd = config.hidden, config.feature_dim, config.token_dim, config.pos_dim
    st = nn.ParamStore()
    # vision adapter
    st.add("adapter.W1", _glorot(rng, F, H))
    st.add("adapter.b1", np.zeros(H))
    st.add("adapter.W2", _glorot(rng, H, H))
    st.add("adapter.b2", np.zeros(H))
    # presence head (stand-in for the reserved-token logits of the language model)
    st.add("presence.Wq", _glorot(rng, D, H))
    st.add("presence.Wk", _glorot(rng, H, H))
    st.add("presence.W1", _glorot(rng, H, H))
    st.add("presence.b1", np.zeros(H))
    st.add("presence.W2", _glorot(rng, H, 2))
    st.add("presence.b2", np.zeros(2))
    # decoder trunk
    st.add("decoder.Wq", _glorot(rng, D, H))
    st.add("decoder.Wk", _glorot(rng, H, H))
    st.add("decoder.Wpk", _glorot(rng, Pd, H))
    st.add("decoder.Wv", _glorot(rng, H, H))
    st.add("decoder.Wpv", _glorot(rng, Pd, H))
    st.add("decoder.Wo", _glorot(rng, H, H))
    st.add("decoder.bo", np.zeros(H))
    st.add("decoder.W1", _glorot(rng, H, H))
    st.add("decoder.b1", np.zeros(H))
    st.add("decoder.Wr", _glorot(rng, 2, H))
    st.add("text.W", _glorot(rng, H, vocab.n_classes) * 0.1)
    st.add("text.b", np.zeros(vocab.n_classes))
    if config.decoder == "continuous":
        st.add("coord.W", _glorot(rng, H, 4) * 0.1)
        size = math.log(math.expm1(config.init_half_size))  # inverse softplus
        st.add("coord.b", np.array([0.0, 0.0, size, size]))
    else:
        st.add("digit.step", rng.standard_normal((config.steps_per_box, H)) * 0.1)
        st.add("digit.prev", rng.standard_normal((config.base + 1, H)) * 0.1)  # last row = BOS
        st.add("digit.Wref", _glorot(rng, 2 + 4 * _REF_FREQS, H))
        st.add("digit.W", _glorot(rng, H, config.base) * 0.1)
        st.add("digit.b", np.zeros(config.base))
    return DecoderModel(config, vocab, st)


def zero_heads(model: DecoderModel) -> None:
    """Zero the output heads and the decoder query projection.

    Attention becomes uniform, so the reference point is the screen center,
    and both decoders then emit boxes centered exactly there.
    """
    for name in list(model.store.params):
        if name.startswith(("coord.", "digit.W", "digit.b", "decoder.Wq")):
            model.store.params[name][...] = 0.0


def model_bytes(model: DecoderModel) -> bytes:
    return nn.checkpoint_bytes(model.store.params, model.meta())


def model_from_bytes(data: bytes) -> DecoderModel:
    """Rebuild a model from ``model_bytes`` output; tensor names and shapes
    must match what its recorded config produces."""
    params, meta = nn.parse_checkpoint(data)
    try:
        config = ModelConfig(**meta["model"])
        vocab = LabelVocab(tuple(meta["labels"]))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"checkpoint metadata is not a decoder model: {exc}") from exc
    model = init_model(config, vocab)
    expected = {n: p.shape for n, p in model.store.params.items()}
    found = {n: p.shape for n, p in params.items()}
    if expected != found:
        raise ValueError("checkpoint tensors do not match the recorded model config")
    for n, p in params.items():
        model.store.params[n][...] = p
    return model


def save_model(path, model: DecoderModel) -> None:
    Path(path).write_bytes(model_bytes(model))


def load_model(path) -> DecoderModel:
    return model_from_bytes(Path(path).read_bytes())


# -- vision adapter ------------------------------------------------------------

def adapter_fwd(model: DecoderModel, grid_feats: np.ndarray):
    cfg = model.config
    X = np.asarray(grid_feats, dtype=np.float64).reshape(cfg.grid * cfg.grid, cfg.feature_dim)
    p = model.store.params
    fwd, _ = model.act
    u = nn.linear_fwd(X, p["adapter.W1"], p["adapter.b1"])
    a = fwd(u)
    A = nn.linear_fwd(a, p["adapter.W2"], p["adapter.b2"])
    return A, (X, u, a)


def adapter_bwd(model: DecoderModel, cache, dA: np.ndarray) -> None:
    X, u, a = cache
    p, g = model.store.params, model.store.grads
    _, bwd = model.act
    da, dW2, db2 = nn.linear_bwd(a, p["adapter.W2"], dA)
    g["adapter.W2"] += dW2
    g["adapter.b2"] += db2
    du = bwd(u, da)
    _, dW1, db1 = nn.linear_bwd(X, p["adapter.W1"], du)
    g["adapter.W1"] += dW1
    g["adapter.b1"] += db1


def adapt_vision(grid_feats: np.ndarray, model: DecoderModel) -> np.ndarray:
    cfg = model.config
    if np.shape(grid_feats) != (cfg.grid, cfg.grid, cfg.feature_dim):
        raise nn.ShapeError(
            f"feature grid {np.shape(grid_feats)} != {(cfg.grid, cfg.grid, cfg.feature_dim)}"
        )
    return adapter_fwd(model, grid_feats)[0]


# -- presence head -------------------------------------------------------------

def presence_fwd(model: DecoderModel, A: np.ndarray, E: np.ndarray):
    """Logits ``(m, 2)`` over ([VG], [REJ]) for each query embedding."""
    p = model.store.params
    fwd, _ = model.act
    q = E @ p["presence.Wq"]
    K = A @ p["presence.Wk"]
    o, attn = nn.cross_attention_fwd(q, K, A)
    f = o * q
    u = nn.linear_fwd(f, p["presence.W1"], p["presence.b1"])
    h = fwd(u)
    logits = nn.linear_fwd(h, p["presence.W2"], p["presence.b2"])
    return logits, (A, E, q, K, o, attn, f, u, h)


def presence_bwd(model: DecoderModel, cache, dlogits: np.ndarray) -> np.ndarray:
    A, E, q, K, o, attn, f, u, h = cache
    p, g = model.store.params, model.store.grads
    _, bwd = model.act
    dh, dW2, db2 = nn.linear_bwd(h, p["presence.W2"], dlogits)
    g["presence.W2"] += dW2
    g["presence.b2"] += db2
    du = bwd(u, dh)
    df, dW1, db1 = nn.linear_bwd(f, p["presence.W1"], du)
    g["presence.W1"] += dW1
    g["presence.b1"] += db1
    do = df * q
    dq = df * o
    dq2, dK, dV = nn.cross_attention_bwd(do, q, K, A, attn)
    dq = dq + dq2
    g["presence.Wq"] += E.T @ dq
    g["presence.Wk"] += A.T @ dK
    return dK @ p["presence.Wk"].T + dV


# -- decoder trunk ---------------------------------------------------------------
#
# Besides the attended features, the trunk returns a reference point: the
# attention-weighted mean of patch centers. Both decoders see it (as a logit)
# through ``decoder.Wr``; the continuous head also predicts the box center
# as an offset from it, so moving attention onto the target moves the box.

def trunk_fwd(model: DecoderModel, A: np.ndarray, E: np.ndarray):
    cfg = model.config
    p = model.store.params
    H = cfg.hidden
    PE = positional_encoding(cfg.grid, cfg.pos_freqs)
    q = E @ p["decoder.Wq"]
    K = A @ p["decoder.Wk"] + PE @ p["decoder.Wpk"]
    V = np.concatenate([A @ p["decoder.Wv"] + PE @ p["decoder.Wpv"], PE[:, :2]], axis=1)
    out, attn = nn.cross_attention_fwd(q, K, V)
    o, ref = out[:, :H], out[:, H:]
    ref_logit = np.log(ref / (1.0 - ref))
    z = nn.linear_fwd(o, p["decoder.Wo"], p["decoder.bo"]) + q + ref_logit @ p["decoder.Wr"]
    return z, ref, (A, E, PE, q, K, V, o, ref, ref_logit, attn)


def trunk_bwd(model: DecoderModel, cache, dz: np.ndarray, dref_direct: Optional[np.ndarray] = None) -> np.ndarray:
    A, E, PE, q, K, V, o, ref, ref_logit, attn = cache
    p, g = model.store.params, model.store.grads
    do, dWo, dbo = nn.linear_bwd(o, p["decoder.Wo"], dz)
    g["decoder.Wo"] += dWo
    g["decoder.bo"] += dbo
    g["decoder.Wr"] += ref_logit.T @ dz
    dref = (dz @ p["decoder.Wr"].T) / (ref * (1.0 - ref))
    if dref_direct is not None:
        dref = dref + dref_direct
    dq, dK, dV = nn.cross_attention_bwd(np.concatenate([do, dref], axis=1), q, K, V, attn)
    dV = dV[:, : model.config.hidden]
    dq = dq + dz
    g["decoder.Wq"] += E.T @ dq
    g["decoder.Wk"] += A.T @ dK
    g["decoder.Wpk"] += PE.T @ dK
    g["decoder.Wv"] += A.T @ dV
    g["decoder.Wpv"] += PE.T @ dV
    return dK @ p["decoder.Wk"].T + dV @ p["decoder.Wv"].T


def _hidden_fwd(model: DecoderModel, x: np.ndarray):
    p = model.store.params
    u = nn.linear_fwd(x, p["decoder.W1"], p["decoder.b1"])
    return model.act[0](u), u


def _hidden_bwd(model: DecoderModel, x: np.ndarray, u: np.ndarray, dh: np.ndarray) -> np.ndarray:
    p, g = model.store.params, model.store.grads
    du = model.act[1](u, dh)
    dx, dW1, db1 = nn.linear_bwd(x, p["decoder.W1"], du)
    g["decoder.W1"] += dW1
    g["decoder.b1"] += db1
    return dx


# -- continuous head ---------------------------------------------------------------

def _soft_limit(x: np.ndarray, limit: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``limit * tanh(x / limit)`` shrunk by a hair: close to ``x`` when
    ``|x|`` is well inside ``limit`` and never reaching it. Returns the value
    and ``tanh`` (kept for the backward pass)."""
    t = np.tanh(x / limit)
    return (1.0 - 2.0 * _SQUASH_EPS) * limit * t, t


def _soft_limit_bwd(x, limit, t, dy):
    """Gradients of ``_soft_limit`` w.r.t. ``x`` and ``limit``."""
    k = 1.0 - 2.0 * _SQUASH_EPS
    sech2 = 1.0 - t * t
    return dy * k * sech2, dy * k * (t - (x / limit) * sech2)


def squash_box(raw: np.ndarray, ref: np.ndarray):
    """Map raw ``(m, 4)`` outputs to valid corner boxes around reference points.

    ``raw`` holds a center offset (x, y) and a size pre-activation (w, h).
    The center is ``ref`` plus the offset, soft-limited by the distance from
    ``ref`` to the nearer screen edge; the half-size is the softplus of the
    size pre-activation soft-limited by the room left around the center.
    Both limits are approached but never reached, so every box lies strictly
    inside the screen with positive area. Away from the limits the map is
    close to the identity, which keeps the regression target linear.
    """
    delta = raw[:, :2]
    m = np.minimum(ref, 1.0 - ref)
    off, t_c = _soft_limit(delta, m)
    c = ref + off
    size = np.logaddexp(0.0, raw[:, 2:]) + 1e-9
    room = np.minimum(c, 1.0 - c)
    half, t_h = _soft_limit(size, room)
    corners = np.concatenate([c - half, c + half], axis=1)
    return corners, (raw, ref, delta, m, t_c, c, size, room, t_h)


def squash_box_bwd(cache, dcorners: np.ndarray):
    """Returns ``(draw, dref)``."""
    raw, ref, delta, m, t_c, c, size, room, t_h = cache
    dc = dcorners[:, :2] + dcorners[:, 2:]
    dhalf = dcorners[:, 2:] - dcorners[:, :2]
    dsize, droom = _soft_limit_bwd(size, room, t_h, dhalf)
    dc = dc + droom * np.where(c <= 0.5, 1.0, -1.0)
    ddelta, dm = _soft_limit_bwd(delta, m, t_c, dc)
    dref = dc + dm * np.where(ref <= 0.5, 1.0, -1.0)
    draw = np.concatenate([ddelta, dsize * nn.sigmoid(raw[:, 2:])], axis=1)
    return draw, dref


def continuous_fwd(model: DecoderModel, A: np.ndarray, E: np.ndarray):
    """Boxes ``(m, 4)`` and text logits ``(m, n_classes)`` for ``m`` queries."""
    p = model.store.params
    z, ref, tcache = trunk_fwd(model, A, E)
    h, u = _hidden_fwd(model, z)
    raw = nn.linear_fwd(h, p["coord.W"], p["coord.b"])
    corners, scache = squash_box(raw, ref)
    text = nn.linear_fwd(h, p["text.W"], p["text.b"])
    return corners, text, (tcache, z, u, h, scache)


def continuous_bwd(model: DecoderModel, cache, dcorners: np.ndarray, dtext: np.ndarray) -> np.ndarray:
    tcache, z, u, h, scache = cache
    p, g = model.store.params, model.store.grads
    draw, dref = squash_box_bwd(scache, dcorners)
    dh, dW, db = nn.linear_bwd(h, p["coord.W"], draw)
    g["coord.W"] += dW
    g["coord.b"] += db
    dh2, dWt, dbt = nn.linear_bwd(h, p["text.W"], dtext)
    g["text.W"] += dWt
    g["text.b"] += dbt
    dz = _hidden_bwd(model, z, u, dh + dh2)
    return trunk_bwd(model, tcache, dz, dref)


# -- discrete head -------------------------------------------------------------------

def box_digits(box: BBox, config: ModelConfig) -> list[int]:
    """Target digit sequence: each coordinate's bin index in base ``config.base``,
    most significant digit first, coordinates in (x1, y1, x2, y2) order."""
    out = []
    for c in box.as_tuple():
        t = quantize_coord(c, config.bins)
        digs = []
        for _ in range(config.digits):
            digs.append(t % config.base)
            t //= config.base
        out.extend(reversed(digs))
    return out


def digits_to_tokens(digits, config: ModelConfig) -> list[int]:
    tokens = []
    for c in range(4):
        t = 0
        for d in digits[c * config.digits:(c + 1) * config.digits]:
            t = t * config.base + int(d)
        tokens.append(t)
    return tokens


def ref_encoding(ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sin/cos features of the reference point ``(m, 2 + 4*_REF_FREQS)`` and
    their derivative w.r.t. ``ref`` (same shape, per-axis)."""
    cols, dcols = [ref], [np.ones_like(ref)]
    for k in range(_REF_FREQS):
        w = math.pi * 2.0**k
        cols += [np.sin(w * ref), np.cos(w * ref)]
        dcols += [w * np.cos(w * ref), -w * np.sin(w * ref)]
    return np.concatenate(cols, axis=1), np.concatenate(dcols, axis=1)


def _digit_inputs(model: DecoderModel, z: np.ndarray, ref: np.ndarray):
    p = model.store.params
    enc, denc = ref_encoding(ref)
    return z + enc @ p["digit.Wref"], (enc, denc)


def _digit_inputs_bwd(model: DecoderModel, rcache, dzr: np.ndarray) -> np.ndarray:
    """Accumulates ``digit.Wref`` and returns the gradient w.r.t. ``ref``."""
    enc, denc = rcache
    p, g = model.store.params, model.store.grads
    g["digit.Wref"] += enc.T @ dzr
    dall = (dzr @ p["digit.Wref"].T) * denc
    # every feature block is an (x, y) pair
    return dall.reshape(len(dall), -1, 2).sum(axis=1)


def discrete_fwd(model: DecoderModel, A: np.ndarray, E: np.ndarray, prev: np.ndarray):
    """Teacher-forced digit logits ``(m, S, base)`` and text logits.

    ``prev[i, s]`` is the digit fed at step ``s`` (``base`` = BOS at step 0).
    """
    p = model.store.params
    m, S = prev.shape
    z, ref, tcache = trunk_fwd(model, A, E)
    h_text, u_text = _hidden_fwd(model, z)
    text = nn.linear_fwd(h_text, p["text.W"], p["text.b"])
    zr, rcache = _digit_inputs(model, z, ref)
    x = zr[:, None, :] + p["digit.step"][None, :S, :] + p["digit.prev"][prev]
    x2 = x.reshape(m * S, -1)
    h, u = _hidden_fwd(model, x2)
    logits = nn.linear_fwd(h, p["digit.W"], p["digit.b"]).reshape(m, S, -1)
    return logits, text, (tcache, rcache, z, h_text, u_text, prev, x2, h, u)


def discrete_bwd(model: DecoderModel, cache, dlogits: np.ndarray, dtext: np.ndarray) -> np.ndarray:
    tcache, rcache, z, h_text, u_text, prev, x2, h, u = cache
    p, g = model.store.params, model.store.grads
    m, S, _ = dlogits.shape
    dh, dW, db = nn.linear_bwd(h, p["digit.W"], dlogits.reshape(m * S, -1))
    g["digit.W"] += dW
    g["digit.b"] += db
    dx = _hidden_bwd(model, x2, u, dh).reshape(m, S, -1)
    g["digit.step"][:S] += dx.sum(axis=0)
    np.add.at(g["digit.prev"], prev, dx)
    dzr = dx.sum(axis=1)
    dref = _digit_inputs_bwd(model, rcache, dzr)
    dht, dWt, dbt = nn.linear_bwd(h_text, p["text.W"], dtext)
    g["text.W"] += dWt
    g["text.b"] += dbt
    dz = dzr + _hidden_bwd(model, z, u_text, dht)
    return trunk_bwd(model, tcache, dz, dref)


# -- inference entry points ------------------------------------------------------------

def decode_coords(vg_embedding: np.ndarray, adapted: np.ndarray, model: DecoderModel) -> BBox:
    """One decoder call turns one [VG] embedding into one box."""
    if model.config.decoder != "continuous":
        raise ValueError("decode_coords needs a continuous-decoder model")
    model.counters["decoder_calls"] += 1
    corners, _, _ = continuous_fwd(model, adapted, np.asarray(vg_embedding, dtype=np.float64).reshape(1, -1))
    return BBox(*(float(c) for c in corners[0]))


def decode_discrete(vg_embedding: np.ndarray, adapted: np.ndarray, model: DecoderModel) -> tuple[BBox, int]:
    """Greedy autoregressive digit decoding; returns the box and steps taken.

    Bin centers are used for each coordinate. When the two tokens of an axis
    coincide or cross, the axis is rebuilt as the span of the bins involved
    so the result is a valid box; bin centers are kept as the box center.
    """
    cfg = model.config
    if cfg.decoder != "discrete":
        raise ValueError("decode_discrete needs a discrete-decoder model")
    model.counters["decoder_calls"] += 1
    E = np.asarray(vg_embedding, dtype=np.float64).reshape(1, -1)
    p = model.store.params
    z, ref, _ = trunk_fwd(model, adapted, E)
    z, _ = _digit_inputs(model, z, ref)
    digits = []
    prev = cfg.base
    prefix = 0
    for s in range(cfg.steps_per_box):
        x = z + p["digit.step"][s] + p["digit.prev"][prev]
        h, _ = _hidden_fwd(model, x)
        logits = h @ p["digit.W"] + p["digit.b"]
        k = s % cfg.digits
        prefix = 0 if k == 0 else prefix * cfg.base + prev
        prev = _pick_digit(logits[0], prefix, k, high=(s // cfg.digits) >= 2, config=cfg)
        digits.append(prev)
        model.counters["discrete_steps"] += 1
    tokens = digits_to_tokens(digits, cfg)
    return tokens_to_box(tokens, cfg.bins), cfg.steps_per_box


def _pick_digit(logits: np.ndarray, prefix: int, k: int, high: bool, config: ModelConfig) -> int:
    """Arg-max digit. Ties go to the digit whose sub-range is centered
    nearest the middle of the screen; between the two middle candidates the
    low corner takes the lower one and the high corner the upper one."""
    best = np.flatnonzero(logits == logits.max())
    if len(best) == 1:
        return int(best[0])
    scale = config.base ** (k + 1)
    # distance to the middle in units of half a sub-range, kept integral so
    # the two middle candidates tie exactly
    dist = [abs(2 * (prefix * config.base + int(d)) + 1 - scale) for d in best]
    near = [int(d) for d, e in zip(best, dist) if e == min(dist)]
    return near[-1] if high else near[0]


def tokens_to_box(tokens, bins: int) -> BBox:
    raw = dequantize(tokens, bins)
    x1, y1, x2, y2 = raw.as_tuple()
    tx1, ty1, tx2, ty2 = (int(t) for t in tokens)
    if x2 <= x1:
        lo, hi = min(tx1, tx2), max(tx1, tx2)
        x1, x2 = lo / bins, (hi + 1) / bins
    if y2 <= y1:
        lo, hi = min(ty1, ty2), max(ty1, ty2)
        y1, y2 = lo / bins, (hi + 1) / bins
    return BBox(x1, y1, x2, y2)
