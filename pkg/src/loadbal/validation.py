"""Input validation helpers used at estimator and function boundaries."""

from __future__ import annotations

import numbers

import numpy as np

from .core import Instance, validate
from .exceptions import InfeasibleInstanceError, InvalidScheduleError


def check_random_state(seed) -> np.random.Generator:
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts ``None``, an int, a :class:`~numpy.random.SeedSequence` or an
    existing generator (returned unchanged).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy.random.Generator")


def check_instance(instance: Instance) -> Instance:
    """Raise if ``instance`` violates any invariant, else return it."""
    if not isinstance(instance, Instance):
        raise TypeError(f"expected an Instance, got {type(instance).__name__}")
    problems = validate(instance)
    if problems:
        cls = InfeasibleInstanceError if any("no feasible machine" in p for p in problems) else ValueError
        raise cls("; ".join(problems))
    return instance


def check_permutation(order, count: int) -> np.ndarray:
    """Validate that ``order`` is a permutation of ``range(count)``.

    ``None`` stands for the identity order.  Objects exposing a
    ``permutation`` attribute (arrival schedules) are unwrapped.
    """
    if order is None:
        return np.arange(count, dtype=np.int64)
    order = getattr(order, "permutation", order)
    order = np.asarray(order, dtype=np.int64).ravel()
    if order.shape[0] != count:
        raise InvalidScheduleError(f"schedule has {order.shape[0]} items, expected {count}")
    seen = np.zeros(count, dtype=bool)
    if count and (order.min() < 0 or order.max() >= count):
        raise InvalidScheduleError(f"schedule references items outside [0, {count})")
    seen[order] = True
    if not seen.all():
        raise InvalidScheduleError("schedule repeats some items and misses others")
    return order
