r"""End-to-end simulation of the randomness amplification protocol.

One run consumes a stream of weak-source bits and N five-party boxes:

1. draw 5N input bits, one quintuple per box group, and collect outcomes;
2. discard quintuplets whose setting is outside the Bell test's support;
   abort if fewer than N/3 survive;
3. group survivors into N_b equal blocks of N_d = floor(survivors/N_b)
   quintuplets (excess dropped from the tail), then draw log2(N_b) more
   source bits to pick the distillation block;
4. every other block must be consistent with the maximal violation
   (right outcome parity on every quintuplet), otherwise abort;
5. the final bit is the hash of the per-quintuplet majority bits of the
   distillation block.

Weak sources emit bits whose conditional probability of either value
stays inside [eps, 1-eps]; adversarial sources choose the bias within
that band as an arbitrary function of the bits already emitted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .distill import extract_bit, hash_family_table, majority
from .mermin import BellFunctional, ghz_correlations, mermin_coefficients
from .polytope import ConditionalDistribution, is_nonsignalling

__all__ = [
    "EpsilonSource",
    "BoxModel",
    "ProtocolConfig",
    "ProtocolTranscript",
    "MonteCarloSummary",
    "ProtocolError",
    "sample_source",
    "check_quintuplet",
    "run_protocol",
    "monte_carlo",
]


class ProtocolError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Weak randomness sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonSource:
    """Bit source with per-bit bias confined to [epsilon, 1 - epsilon].

    ``policy``, when given, makes the source adversarial: it maps the
    tuple of bits emitted so far to the probability of the next bit
    being 1, and the result is clamped into the allowed band so the
    source invariant holds by construction.  Without a policy the source
    is honest i.i.d. with fixed ``bias``.
    """

    epsilon: float
    bias: float = 0.5
    policy: Callable[[tuple[int, ...]], float] | None = None
    seed: int | None = None

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 0.5:
            raise ValueError(f"epsilon must be in (0, 1/2], got {self.epsilon}")
        if not self.epsilon <= self.bias <= 1.0 - self.epsilon + 1e-15:
            raise ValueError(
                f"bias {self.bias} outside [{self.epsilon}, {1 - self.epsilon}]")

    @classmethod
    def honest_uniform(cls, seed: int | None = None) -> "EpsilonSource":
        return cls(epsilon=0.5, bias=0.5, seed=seed)

    @classmethod
    def adversarial_constant(cls, epsilon: float, bias: float,
                             seed: int | None = None) -> "EpsilonSource":
        """Stateless adversary that always picks the same (clamped) bias."""
        return cls(epsilon=epsilon, bias=0.5,
                   policy=lambda history, _b=bias: _b, seed=seed)

    def clamp(self, bias: float) -> float:
        return min(max(bias, self.epsilon), 1.0 - self.epsilon)


class _SourceStream:
    """Stateful sampler for one protocol run; counts bits consumed."""

    def __init__(self, source: EpsilonSource, rng: np.random.Generator):
        self.source = source
        self.rng = rng
        self.emitted: list[int] = []

    @property
    def bits_used(self) -> int:
        return len(self.emitted)

    def draw(self, count: int) -> np.ndarray:
        src = self.source
        if src.policy is None:
            bits = (self.rng.random(count) < src.bias).astype(np.int64)
            self.emitted.extend(int(b) for b in bits)
            return bits
        out = np.empty(count, dtype=np.int64)
        for i in range(count):
            p_one = src.clamp(float(src.policy(tuple(self.emitted))))
            bit = int(self.rng.random() < p_one)
            out[i] = bit
            self.emitted.append(bit)
        return out


def sample_source(source: EpsilonSource, count: int,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``count`` bits from a fresh stream of the source."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if rng is None:
        rng = np.random.default_rng(source.seed)
    return _SourceStream(source, rng).draw(count)


# ---------------------------------------------------------------------------
# Box models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxModel:
    """Behaviour of one quintuplet of devices, fresh instance per use."""

    kind: str  # ideal-quantum | local-deterministic | custom-nonsignalling
    parties: int = 5
    strategy: tuple[tuple[int, int], ...] | None = None
    distribution: ConditionalDistribution | None = None

    def __post_init__(self):
        if self.kind == "local-deterministic":
            if self.strategy is None or len(self.strategy) != self.parties:
                raise ValueError("local-deterministic boxes need one "
                                 "(output|input=0, output|input=1) pair per party")
        elif self.kind == "custom-nonsignalling":
            if self.distribution is None:
                raise ValueError("custom boxes need a distribution")
            if self.distribution.parties != self.parties:
                raise ValueError("distribution party count mismatch")
            if not is_nonsignalling(self.distribution, tol=1e-9):
                raise ValueError("custom box distribution is signalling")
        elif self.kind != "ideal-quantum":
            raise ValueError(f"unknown box kind {self.kind!r}")

    @classmethod
    def ideal_quantum(cls, parties: int = 5) -> "BoxModel":
        return cls(kind="ideal-quantum", parties=parties)

    @classmethod
    def local_deterministic(cls, strategy: Sequence[Sequence[int]]) -> "BoxModel":
        strat = tuple((int(s[0]), int(s[1])) for s in strategy)
        return cls(kind="local-deterministic", parties=len(strat),
                   strategy=strat)

    @classmethod
    def all_zero(cls, parties: int = 5) -> "BoxModel":
        return cls.local_deterministic(((0, 0),) * parties)

    @classmethod
    def custom_nonsignalling(cls, dist: ConditionalDistribution) -> "BoxModel":
        return cls(kind="custom-nonsignalling", parties=dist.parties,
                   distribution=dist)

    def _cumulative_table(self) -> np.ndarray | None:
        dist = (ghz_correlations(self.parties)
                if self.kind == "ideal-quantum" else self.distribution)
        if dist is None:
            return None
        d = 2 ** self.parties
        return np.cumsum(dist.values.reshape(d, d), axis=1)

    def sample(self, settings: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
        """Outcomes for a batch of settings, one independent box each."""
        settings = np.asarray(settings, dtype=np.int64)
        if self.kind == "local-deterministic":
            out = np.zeros_like(settings)
            for i, (on0, on1) in enumerate(self.strategy):
                x_i = (settings >> i) & 1
                a_i = np.where(x_i == 0, on0, on1)
                out |= a_i << i
            return out
        cumulative = self._cumulative_table()
        u = rng.random(len(settings))
        rows = cumulative[settings]
        return (u[:, None] >= rows).sum(axis=1)


# ---------------------------------------------------------------------------
# Protocol
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProtocolConfig:
    n_quintuplets: int  # N
    n_blocks: int       # N_b, a power of 2
    hash_function: str | Sequence[int] = "xor"
    source: EpsilonSource = field(default_factory=EpsilonSource.honest_uniform)
    boxes: BoxModel = field(default_factory=BoxModel.ideal_quantum)
    seed: int | None = None

    def __post_init__(self):
        n, nb = self.n_quintuplets, self.n_blocks
        if n < 3:
            raise ValueError(f"need at least 3 quintuplets, got {n}")
        if nb < 1 or nb & (nb - 1):
            raise ValueError(f"block count must be a power of 2, got {nb}")
        if 3 * nb > n:
            raise ValueError(
                f"block count {nb} too large for {n} quintuplets: a "
                "non-aborted run could leave empty blocks")
        if isinstance(self.hash_function, str):
            if self.hash_function not in ("xor", "const0", "const1"):
                raise ValueError(
                    f"unknown hash family {self.hash_function!r}")
        else:
            table = tuple(int(b) for b in self.hash_function)
            if len(table) & (len(table) - 1) or not table:
                raise ValueError("hash table length must be a power of 2")
            object.__setattr__(self, "hash_function", table)

    def resolve_hash(self, block_size: int) -> np.ndarray:
        if isinstance(self.hash_function, str):
            return hash_family_table(self.hash_function, block_size)
        table = np.asarray(self.hash_function, dtype=np.int64)
        if len(table) != 2 ** block_size:
            raise ProtocolError(
                f"hash table has arity {len(table).bit_length() - 1}, but "
                f"the run produced blocks of size {block_size}")
        return table


@dataclass(frozen=True)
class ProtocolTranscript:
    """Complete record of one run; ``final_bit`` is None iff aborted."""

    inputs: np.ndarray              # N quintuple settings
    outputs: np.ndarray             # N quintuple outcomes
    surviving: np.ndarray           # indices kept by step 2, in order
    abort_stage: str                # none | step2 | step4
    block_size: int | None          # N_d
    n_blocks: int | None
    distill_index: int | None       # l, 0-based
    r_values: np.ndarray | None     # per block, including the distilling one
    g: int | None
    side_information: dict | None   # l plus all non-distillation blocks
    final_bit: int | None           # k
    source_bits_used: int

    def block_slice(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(settings, outcomes) of block j over the kept survivors."""
        if self.block_size is None:
            raise ProtocolError("run aborted before blocks were formed")
        kept = self.surviving[: self.n_blocks * self.block_size]
        sel = kept[j * self.block_size: (j + 1) * self.block_size]
        return self.inputs[sel], self.outputs[sel]


def check_quintuplet(outcome: int, setting: int,
                     bell: BellFunctional) -> bool:
    """True iff the outcome parity matches the test's target at ``setting``.

    Settings outside the support never reach this check in the protocol
    (they are discarded in step 2) and are rejected here.
    """
    if setting not in bell.support:
        raise ValueError(
            f"setting {setting} is not part of the Bell test support")
    parity = bin(outcome).count("1") & 1
    return parity == bell.parity_target[setting]


def _pack_quintuples(bits: np.ndarray, parties: int) -> np.ndarray:
    weights = 1 << np.arange(parties, dtype=np.int64)
    return bits.reshape(-1, parties) @ weights


def run_protocol(config: ProtocolConfig,
                 rng: np.random.Generator | None = None,
                 bell: BellFunctional | None = None) -> ProtocolTranscript:
    if bell is None:
        bell = mermin_coefficients(config.boxes.parties)
    n, n_b = config.n_quintuplets, config.n_blocks
    parties = config.boxes.parties
    if rng is None:
        rng = np.random.default_rng(config.seed)
    seq = rng.spawn(2)
    stream = _SourceStream(config.source, seq[0])
    box_rng = seq[1]

    # Step 1: inputs from the source, outcomes from the boxes.
    input_bits = stream.draw(parties * n)
    inputs = _pack_quintuples(input_bits, parties)
    outputs = config.boxes.sample(inputs, box_rng)

    # Step 2: keep supported settings; abort if fewer than N/3 survive.
    support = np.zeros(2 ** parties, dtype=bool)
    support[list(bell.support)] = True
    surviving = np.flatnonzero(support[inputs])
    if 3 * len(surviving) < n:
        return ProtocolTranscript(
            inputs=inputs, outputs=outputs, surviving=surviving,
            abort_stage="step2", block_size=None, n_blocks=None,
            distill_index=None, r_values=None, g=None,
            side_information=None, final_bit=None,
            source_bits_used=stream.bits_used)

    # Step 3: contiguous blocks over the survivors, excess dropped from
    # the tail; the distilling block index comes from log2(N_b) more
    # source bits read big-endian.
    block_size = len(surviving) // n_b
    kept = surviving[: n_b * block_size]
    l_bits = stream.draw(int(np.log2(n_b))) if n_b > 1 else np.zeros(0, int)
    distill_index = 0
    for b in l_bits:
        distill_index = (distill_index << 1) | int(b)

    # Step 4: wrong correlations in any non-distillation block abort.
    targets = np.full(2 ** parties, -1, dtype=np.int64)
    for x in bell.support:
        targets[x] = bell.parity_target[x]
    kept_inputs = inputs[kept]
    kept_outputs = outputs[kept]
    parities = np.zeros(len(kept), dtype=np.int64)
    for i in range(parties):
        parities ^= (kept_outputs >> i) & 1
    right = (parities == targets[kept_inputs]).reshape(n_b, block_size)
    r_values = right.all(axis=1).astype(np.int64)
    g = int(np.all(np.delete(r_values, distill_index)))
    side_information = {
        "distill_index": distill_index,
        "blocks": [
            {"settings": inputs[kept[j * block_size:(j + 1) * block_size]].tolist(),
             "outcomes": outputs[kept[j * block_size:(j + 1) * block_size]].tolist()}
            for j in range(n_b) if j != distill_index
        ],
    }
    if g == 0:
        return ProtocolTranscript(
            inputs=inputs, outputs=outputs, surviving=surviving,
            abort_stage="step4", block_size=block_size, n_blocks=n_b,
            distill_index=distill_index, r_values=r_values, g=0,
            side_information=side_information, final_bit=None,
            source_bits_used=stream.bits_used)

    # Step 5: hash the majority bits of the distilling block.
    table = config.resolve_hash(block_size)
    start = distill_index * block_size
    block_outputs = kept_outputs[start: start + block_size]
    k = extract_bit(block_outputs, table)
    return ProtocolTranscript(
        inputs=inputs, outputs=outputs, surviving=surviving,
        abort_stage="none", block_size=block_size, n_blocks=n_b,
        distill_index=distill_index, r_values=r_values, g=1,
        side_information=side_information, final_bit=k,
        source_bits_used=stream.bits_used)


# ---------------------------------------------------------------------------
# Monte Carlo harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonteCarloSummary:
    runs: int
    step2_aborts: int
    step4_aborts: int
    completed: int
    k_counts: dict
    maj_zero: int
    maj_total: int
    source_bits_total: int

    @property
    def step2_abort_rate(self) -> float:
        return self.step2_aborts / self.runs

    @property
    def step4_abort_rate(self) -> float:
        return self.step4_aborts / self.runs

    @property
    def k_one_rate(self) -> float:
        """Empirical P(k=1 | not aborted)."""
        done = self.k_counts["0"] + self.k_counts["1"]
        return self.k_counts["1"] / done if done else float("nan")

    @property
    def maj_zero_rate(self) -> float:
        return self.maj_zero / self.maj_total if self.maj_total else float("nan")

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "step2_aborts": self.step2_aborts,
            "step4_aborts": self.step4_aborts,
            "completed": self.completed,
            "k_counts": dict(self.k_counts),
            "k_one_rate": self.k_one_rate,
            "maj_zero": self.maj_zero,
            "maj_total": self.maj_total,
            "maj_zero_rate": self.maj_zero_rate,
            "source_bits_total": self.source_bits_total,
        }


def monte_carlo(config: ProtocolConfig, runs: int,
                collect: Callable[[ProtocolTranscript], None] | None = None,
                ) -> MonteCarloSummary:
    """Run the protocol ``runs`` times with independent spawned seeds."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    bell = mermin_coefficients(config.boxes.parties)
    root = np.random.SeedSequence(config.seed)
    step2 = step4 = 0
    k_counts = {"0": 0, "1": 0, "empty": 0}
    maj_zero = maj_total = 0
    bits_total = 0
    for child in root.spawn(runs):
        transcript = run_protocol(config, rng=np.random.default_rng(child),
                                  bell=bell)
        bits_total += transcript.source_bits_used
        if transcript.abort_stage == "step2":
            step2 += 1
            k_counts["empty"] += 1
        elif transcript.abort_stage == "step4":
            step4 += 1
            k_counts["empty"] += 1
        else:
            k_counts[str(transcript.final_bit)] += 1
        if transcript.abort_stage != "step2":
            kept = transcript.surviving[
                : transcript.n_blocks * transcript.block_size]
            for a in transcript.outputs[kept]:
                maj_total += 1
                maj_zero += 1 - majority(int(a))
        if collect is not None:
            collect(transcript)
    return MonteCarloSummary(
        runs=runs, step2_aborts=step2, step4_aborts=step4,
        completed=runs - step2 - step4, k_counts=k_counts,
        maj_zero=maj_zero, maj_total=maj_total,
        source_bits_total=bits_total)
