"""The architecture search space: points, bounds, unit-cube decoding, feasibility
and the GP feature map.

Search points are expressed in full-size units (d_model 1024..2048 etc.).
``SearchSpace.channel_scale`` maps them onto the desk-size base model by
integer division.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .model import SKIP, SWA, AttentionKind

KIND_LETTERS = ("F", "S", "K")  # full, sliding-window, skip
EFFICIENT = frozenset("SK")

FEATURE_VERSION = 1
FEATURE_NAMES = (
    "d_layers", "d_ffn", "d_model",
    "n_full", "n_swa", "n_skip",
    "efficient_adjacent", "first_full", "last_full",
)


@dataclass(frozen=True)
class SearchPoint:
    d_layers: int
    d_ffn: int
    d_model: int
    attn_pattern: tuple  # letters from KIND_LETTERS, one per layer

    def __post_init__(self):
        object.__setattr__(self, "attn_pattern", tuple(self.attn_pattern))
        if len(self.attn_pattern) != self.d_layers:
            raise ValueError(f"pattern length {len(self.attn_pattern)} != d_layers {self.d_layers}")
        bad = set(self.attn_pattern) - set(KIND_LETTERS)
        if bad:
            raise ValueError(f"unknown attention letters {sorted(bad)}")

    def encode(self) -> str:
        return f"L{self.d_layers}-F{self.d_ffn}-M{self.d_model}-P={'.'.join(self.attn_pattern)}"

    def __str__(self):
        return self.encode()

    @property
    def n_skip(self) -> int:
        return self.attn_pattern.count("K")

    @property
    def n_swa(self) -> int:
        return self.attn_pattern.count("S")

    @property
    def n_full(self) -> int:
        return self.attn_pattern.count("F")

    def attention_kinds(self, swa_window: int) -> tuple[AttentionKind, ...]:
        lut = {"F": AttentionKind.full(), "S": AttentionKind.swa(swa_window), "K": AttentionKind.skip()}
        return tuple(lut[c] for c in self.attn_pattern)


_POINT_RE = re.compile(r"^L(\d+)-F(\d+)-M(\d+)-P=([FSK](?:\.[FSK])*)$")


def parse_point(text: str) -> SearchPoint:
    """Inverse of :meth:`SearchPoint.encode`, e.g. ``L3-F2048-M1024-P=F.K.F``."""
    m = _POINT_RE.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse search point {text!r}")
    return SearchPoint(int(m[1]), int(m[2]), int(m[3]), tuple(m[4].split(".")))


def point_from_kinds(d_ffn: int, d_model: int, kinds) -> SearchPoint:
    letters = []
    for k in kinds:
        letters.append("K" if k.tag == SKIP else "S" if k.tag == SWA else "F")
    return SearchPoint(len(letters), d_ffn, d_model, tuple(letters))


@dataclass(frozen=True)
class SearchSpace:
    layer_choices: tuple = tuple(range(10, 17))
    ffn_choices: tuple = tuple(range(2048, 8192 + 1, 256))
    model_choices: tuple = tuple(range(1024, 2048 + 1, 128))
    kinds: tuple = KIND_LETTERS
    max_consecutive_efficient: int = 2
    channel_scale: int = 16

    @property
    def max_layers(self) -> int:
        return max(self.layer_choices)

    @property
    def dims(self) -> int:
        return 3 + self.max_layers

    def contains(self, point: SearchPoint) -> bool:
        return (point.d_layers in self.layer_choices and point.d_ffn in self.ffn_choices
                and point.d_model in self.model_choices and set(point.attn_pattern) <= set(self.kinds))

    def to_dict(self) -> dict:
        return {"layer_choices": list(self.layer_choices), "ffn_choices": list(self.ffn_choices),
                "model_choices": list(self.model_choices), "kinds": list(self.kinds),
                "max_consecutive_efficient": self.max_consecutive_efficient,
                "channel_scale": self.channel_scale}

    @classmethod
    def from_dict(cls, d: dict, allow_out_of_bounds: bool = False) -> "SearchSpace":
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        space = cls(**kw)
        if not allow_out_of_bounds:
            ref = cls()
            if (not set(space.layer_choices) <= set(ref.layer_choices)
                    or not set(space.ffn_choices) <= set(ref.ffn_choices)
                    or not set(space.model_choices) <= set(ref.model_choices)
                    or not set(space.kinds) <= set(ref.kinds)):
                raise ValueError("search space overrides leave the standard bounds "
                                 "(set allow_out_of_bounds to permit this)")
        return space

    def scaled(self, point: SearchPoint) -> SearchPoint:
        """Map a full-size point onto desk-size channel counts."""
        s = self.channel_scale
        if point.d_ffn % s or point.d_model % s:
            raise ValueError(f"{point} is not divisible by channel_scale={s}")
        return SearchPoint(point.d_layers, point.d_ffn // s, point.d_model // s, point.attn_pattern)

    def decode_point(self, u) -> SearchPoint:
        """Map a point of [0, 1)^dims onto the discrete space by equal-width binning.

        Coordinates are (layers, ffn, model, kind_0 .. kind_{max_layers-1});
        kind slots beyond the decoded depth are ignored.
        """
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dims,):
            raise ValueError(f"expected {self.dims} coordinates, got {u.shape}")

        def pick(x, choices):
            i = int(np.floor(min(max(x, 0.0), np.nextafter(1.0, 0.0)) * len(choices)))
            return choices[min(i, len(choices) - 1)]

        d_l = pick(u[0], self.layer_choices)
        pattern = tuple(pick(x, self.kinds) for x in u[3:3 + d_l])
        return SearchPoint(d_l, pick(u[1], self.ffn_choices), pick(u[2], self.model_choices), pattern)

    def is_feasible(self, point: SearchPoint) -> bool:
        return is_feasible(point, self.max_consecutive_efficient)

    def featurize(self, point: SearchPoint) -> np.ndarray:
        return featurize(point, self)

    def neighbors(self, point: SearchPoint) -> list[SearchPoint]:
        """Single-step mutations: one dimension moved to an adjacent choice, one
        layer added/removed at the end, or one layer's attention kind changed."""
        out = []
        for attr, choices in (("d_ffn", self.ffn_choices), ("d_model", self.model_choices)):
            i = choices.index(getattr(point, attr))
            for j in (i - 1, i + 1):
                if 0 <= j < len(choices):
                    kw = dict(d_layers=point.d_layers, d_ffn=point.d_ffn, d_model=point.d_model,
                              attn_pattern=point.attn_pattern)
                    kw[attr] = choices[j]
                    out.append(SearchPoint(**kw))
        if point.d_layers - 1 in self.layer_choices:
            out.append(SearchPoint(point.d_layers - 1, point.d_ffn, point.d_model, point.attn_pattern[:-1]))
        if point.d_layers + 1 in self.layer_choices:
            out.append(SearchPoint(point.d_layers + 1, point.d_ffn, point.d_model, point.attn_pattern + ("F",)))
        for i, c in enumerate(point.attn_pattern):
            for k in self.kinds:
                if k != c:
                    pat = point.attn_pattern[:i] + (k,) + point.attn_pattern[i + 1:]
                    out.append(SearchPoint(point.d_layers, point.d_ffn, point.d_model, pat))
        return out


def is_feasible(point: SearchPoint, max_consecutive: int = 2) -> bool:
    """False iff more than ``max_consecutive`` adjacent layers are all SWA or skip."""
    run = 0
    for c in point.attn_pattern:
        run = run + 1 if c in EFFICIENT else 0
        if run > max_consecutive:
            return False
    return True


def featurize(point: SearchPoint, space: SearchSpace | None = None) -> np.ndarray:
    """Fixed-length GP input, see ``FEATURE_NAMES``.

    Dimensions are min-max normalized over the space; kind counts and the
    efficient-efficient adjacency count are divided by ``max_layers``; the
    first/last full-attention indices by ``max_layers - 1`` (1.0 / 0.0 when the
    pattern has no full layer).
    """
    space = space or SearchSpace()
    lc, fc, mc = space.layer_choices, space.ffn_choices, space.model_choices

    def norm(x, choices):
        lo, hi = min(choices), max(choices)
        return 0.0 if hi == lo else (x - lo) / (hi - lo)

    pat = point.attn_pattern
    L = space.max_layers
    adj = sum(1 for a, b in zip(pat, pat[1:]) if a in EFFICIENT and b in EFFICIENT)
    full_idx = [i for i, c in enumerate(pat) if c == "F"]
    first = full_idx[0] / (L - 1) if full_idx else 1.0
    last = full_idx[-1] / (L - 1) if full_idx else 0.0
    return np.array([
        norm(point.d_layers, lc), norm(point.d_ffn, fc), norm(point.d_model, mc),
        pat.count("F") / L, pat.count("S") / L, pat.count("K") / L,
        adj / L, first, last,
    ])
