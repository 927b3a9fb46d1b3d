"""Parity-structured generator with exact label-conditional distributions.

Label ``y`` selects the strings whose XOR over all ``n`` bits equals
``parity_target[y]``, uniformly. Noise acts in the logical frame as
independent per-bit flips, then correlated two-bit flips, then conditional
decay ("crosstalk": bit ``i`` relaxes 1 -> 0 with probability ``r`` while
bit ``k`` reads 1).

Flip channels of any weight keep uniform pair marginals uniform, so on a
parity source they never leak label information below the full set. The
crosstalk channel is the knob that produces pairwise leakage: for n = 3 it
gives a label-conditional pair TV of ``r / 2`` with no singleton leakage.
Sampled records are then moved into the raw hardware frame (role rotation,
then twirl mask), which is what :func:`mobius_falsify.records.aggregate`
undoes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import permutations

import numpy as np

from . import _seeding
from .records import CircuitRecord, Dataset, format_bitstring, rotate_outcome

A1_MASKS = tuple(range(8))
A1B_ROLE_PERMS = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def _parity(x):
    return bin(int(x)).count("1") & 1


@dataclass(frozen=True)
class NoiseSpec:
    n: int = 3
    parity_target: tuple = (0, 1)
    flip_probs: tuple = ()
    pair_flip: dict = field(default_factory=dict)
    crosstalk: dict = field(default_factory=dict)
    masks: tuple = (0,)
    role_perms: tuple = ()
    shots_per_circuit: int = 512
    seed: int = 0

    def __post_init__(self):
        n = self.n
        if not 2 <= n <= 16:
            raise ValueError(f"n must be in [2, 16], got {n}")
        flips = tuple(float(e) for e in self.flip_probs) or (0.0,) * n
        if len(flips) == 1:
            flips = flips * n
        if len(flips) != n:
            raise ValueError(f"flip_probs needs 1 or {n} entries")
        if any(not 0.0 <= e <= 1.0 for e in flips):
            raise ValueError("flip probabilities must lie in [0, 1]")
        pair = {}
        for key, r in dict(self.pair_flip).items():
            i, j = sorted(int(v) for v in key)
            if not (0 <= i < j < n):
                raise ValueError(f"bad pair {key!r}")
            if not 0.0 <= r <= 1.0:
                raise ValueError("pair flip probabilities must lie in [0, 1]")
            pair[(i, j)] = float(r)
        cross = {}
        for key, r in dict(self.crosstalk).items():
            i, k = (int(v) for v in key)
            if i == k or not (0 <= i < n and 0 <= k < n):
                raise ValueError(f"bad crosstalk pair {key!r}")
            if not 0.0 <= r <= 1.0:
                raise ValueError("crosstalk probabilities must lie in [0, 1]")
            cross[(i, k)] = float(r)
        perms = tuple(tuple(p) for p in self.role_perms) or (tuple(range(n)),)
        for p in perms:
            if sorted(p) != list(range(n)):
                raise ValueError(f"role perm {p} is not a permutation of 0..{n - 1}")
        masks = tuple(int(m) for m in self.masks)
        if not masks or any(not 0 <= m < (1 << n) for m in masks):
            raise ValueError("masks must be nonempty n-bit words")
        if tuple(self.parity_target) not in ((0, 1), (1, 0)):
            raise ValueError("parity_target must assign distinct parities to the labels")
        if self.shots_per_circuit <= 0:
            raise ValueError("shots_per_circuit must be positive")
        object.__setattr__(self, "flip_probs", flips)
        object.__setattr__(self, "pair_flip", pair)
        object.__setattr__(self, "crosstalk", cross)
        object.__setattr__(self, "role_perms", perms)
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "parity_target", tuple(self.parity_target))

    @classmethod
    def preset(cls, name, eps=0.0, seed=0, **overrides):
        """``"a1"``: 2 labels x 8 masks; ``"a1b"``: additionally 3 role rotations."""
        if name == "a1":
            base = dict(masks=A1_MASKS)
        elif name == "a1b":
            base = dict(masks=A1_MASKS, role_perms=A1B_ROLE_PERMS)
        else:
            raise ValueError(f"unknown preset {name!r}")
        base.update(n=3, flip_probs=(eps,), shots_per_circuit=512, seed=seed)
        base.update(overrides)
        return cls(**base)

    @property
    def n_circuits(self):
        return 2 * len(self.masks) * len(self.role_perms)

    def to_dict(self):
        d = asdict(self)
        d["pair_flip"] = {f"{i},{j}": r for (i, j), r in self.pair_flip.items()}
        d["crosstalk"] = {f"{i},{k}": r for (i, k), r in self.crosstalk.items()}
        d["flip_probs"] = list(self.flip_probs)
        d["masks"] = [format_bitstring(m, self.n) for m in self.masks]
        d["role_perms"] = [list(p) for p in self.role_perms]
        d["parity_target"] = list(self.parity_target)
        return d


@dataclass(frozen=True, eq=False)
class ExactJoint:
    """Exact ``p(x | y)`` for both labels, shape ``(2, 2**n)``."""

    n: int
    probs: np.ndarray

    def conditionals(self):
        return self.probs

    def label_weights(self):
        return np.array([0.5, 0.5])


def _flip_channel(p, flip_word, r):
    if r == 0.0:
        return p
    idx = np.arange(p.shape[-1])
    return (1.0 - r) * p + r * p[..., idx ^ flip_word]


def _decay_channel(p, target, control, r):
    if r == 0.0:
        return p
    idx = np.arange(p.shape[-1])
    hit = ((idx >> target) & 1 == 1) & ((idx >> control) & 1 == 1)
    moved = np.where(hit, r * p, 0.0)
    out = p - moved
    np.add.at(out, (slice(None), idx[hit] ^ (1 << target)), moved[:, hit])
    return out


def exact_joint(spec):
    """Analytic label-conditional distributions of ``spec`` (masks and perms cancel)."""
    n = spec.n
    K = 1 << n
    parity = np.array([_parity(x) for x in range(K)])
    probs = np.zeros((2, K))
    for y in (0, 1):
        valid = parity == spec.parity_target[y]
        probs[y, valid] = 1.0 / valid.sum()
    for v, eps in enumerate(spec.flip_probs):
        probs = _flip_channel(probs, 1 << v, eps)
    for (i, j), r in spec.pair_flip.items():
        probs = _flip_channel(probs, (1 << i) | (1 << j), r)
    for (i, k), r in spec.crosstalk.items():
        probs = _decay_channel(probs, i, k, r)
    return ExactJoint(n, probs)


def noisy_parity_error(eps, n=3):
    """Probability that symmetric per-bit flips change the parity of ``n`` bits."""
    return (1.0 - (1.0 - 2.0 * eps) ** n) / 2.0


def sample_dataset(spec):
    """Draw raw-frame circuit records; record ``r`` uses its own derived stream."""
    joint = exact_joint(spec)
    n = spec.n
    K = 1 << n
    records = []
    index = 0
    for y in (0, 1):
        for pi, perm in enumerate(spec.role_perms):
            physical = np.array([rotate_outcome(x, perm) for x in range(K)])
            for mask in spec.masks:
                rng = _seeding.stream(spec.seed, "synth", index)
                logical = rng.multinomial(spec.shots_per_circuit, joint.probs[y])
                raw = {}
                for x in np.flatnonzero(logical):
                    raw[int(physical[x]) ^ mask] = int(logical[x])
                records.append(
                    CircuitRecord(
                        label=y,
                        mask=mask,
                        role_perm=perm,
                        raw_counts=raw,
                        shots=spec.shots_per_circuit,
                        circuit_id=f"y{y}-r{pi}-m{format_bitstring(mask, n)}",
                    )
                )
                index += 1
    return Dataset(n, records, provenance="synthetic", metadata={"noise_spec": spec.to_dict()})


def all_role_perms(n):
    return tuple(permutations(range(n)))
