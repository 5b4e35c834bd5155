"""Laplace mechanism, privacy-budget ledger and seeded random streams."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

LEDGER_TOL = 1e-12


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class PrivacyBudget:
    """Total budget and its split between the total count and the leaf counts.

    ``strict_leaf_scale`` publishes leaves at scale ``1/epsilon`` instead of
    ``1/((1 - beta) * epsilon)``; the ledger cap then grows to
    ``(1 + beta) * epsilon`` because the two charges no longer sum to epsilon.
    """

    epsilon_total: float
    beta: float = 0.04
    strict_leaf_scale: bool = False

    def __post_init__(self):
        if not self.epsilon_total > 0:
            raise ValueError("epsilon_total must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")

    @property
    def total_count_epsilon(self) -> float:
        return self.beta * self.epsilon_total

    @property
    def leaf_epsilon(self) -> float:
        if self.strict_leaf_scale:
            return self.epsilon_total
        return self.epsilon_total - self.total_count_epsilon

    @property
    def partition_parameter(self) -> float:
        """Non-private parameter used in the level-2 granularity rule."""
        return 0.5 * self.epsilon_total

    @property
    def ledger_cap(self) -> float:
        return self.total_count_epsilon + self.leaf_epsilon


@dataclass(frozen=True)
class BudgetCharge:
    label: str
    epsilon: float
    group: Optional[str] = None  # None means sequential composition

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("a charge must spend a positive epsilon")


@dataclass
class BudgetLedger:
    """Ordered record of budget charges.

    Sequential charges add up; charges sharing a parallel ``group`` cost the
    maximum within the group. Every charge is checked against the cap before
    it is recorded.
    """

    epsilon_total: float
    charges: list[BudgetCharge] = field(default_factory=list)

    def consumed(self) -> float:
        return _consumed(self.charges)

    def remaining(self) -> float:
        return self.epsilon_total - self.consumed()

    def charge(self, charge: BudgetCharge) -> None:
        after = _consumed(self.charges + [charge])
        if after > self.epsilon_total + LEDGER_TOL * max(1.0, self.epsilon_total):
            raise BudgetExceededError(
                f"charge {charge.label!r} ({charge.epsilon:g}) would raise consumption to "
                f"{after:.12g} > {self.epsilon_total:.12g}"
            )
        self.charges.append(charge)

    def charge_parallel(self, label: str, epsilon: float, group: str, n: int = 1) -> None:
        """Record one parallel group of ``n`` equal charges at once."""
        if n <= 0:
            return
        first = BudgetCharge(label, epsilon, group)
        self.charge(first)
        self.charges.extend([first] * (n - 1))

    def copy(self) -> "BudgetLedger":
        return BudgetLedger(self.epsilon_total, list(self.charges))


def _consumed(charges) -> float:
    sequential = 0.0
    groups: dict[str, float] = {}
    for c in charges:
        if c.group is None:
            sequential += c.epsilon
        else:
            groups[c.group] = max(groups.get(c.group, 0.0), c.epsilon)
    return math.fsum([sequential, *groups.values()])


def consumed(ledger: BudgetLedger) -> float:
    return ledger.consumed()


class RandomStream:
    """Deterministic random source addressed by ``(seed, path)``.

    Children extend the path, so the draws of one child never depend on how
    many draws were taken from a sibling.
    """

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
        self.path = tuple(int(p) for p in path)
        self._gen: Optional[np.random.Generator] = None

    def child(self, *ids: int) -> "RandomStream":
        return RandomStream(self.seed, self.path + ids)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def uniform(self, size=None):
        return self.generator.random(size)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, path={self.path})"


def laplace_from_uniform(u, scale):
    """Inverse-CDF transform of uniform draws in [0, 1) to Laplace(0, scale)."""
    v = np.asarray(u, dtype=float) - 0.5
    # 1 - 2|v| lies in (0, 1]; v = -0.5 maps to the far left tail, never log(0).
    out = -scale * np.sign(v) * np.log1p(-2.0 * np.abs(v))
    return out if out.ndim else float(out)


def laplace_sample(scale: float, rng: RandomStream, size=None):
    if not scale > 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")
    return laplace_from_uniform(rng.uniform(size), scale)


def noisy_value(
    true_value,
    epsilon_portion: float,
    sensitivity: float,
    ledger: BudgetLedger,
    charge: BudgetCharge,
    rng: RandomStream,
    noise: bool = True,
):
    """Laplace mechanism: ``true_value + Lap(sensitivity / epsilon_portion)``.

    The charge is recorded before the draw; a rejected charge leaves both the
    ledger and the stream untouched. With ``noise=False`` the charge is still
    recorded and the true value is returned, which is the zero-noise limit
    used in tests.
    """
    if not sensitivity > 0:
        raise ValueError("sensitivity must be positive")
    ledger.charge(charge)
    if not noise or math.isinf(epsilon_portion):
        return true_value
    size = None if np.ndim(true_value) == 0 else np.shape(true_value)
    return true_value + laplace_sample(sensitivity / epsilon_portion, rng, size)
