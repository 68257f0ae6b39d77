"""Closed-form fan-out amplification of single-server outliers.

A request fanned out to ``sc`` leaf servers, each hosting ``k`` independent
instances, is an outlier when any of its ``sc * k`` sub-requests is:

    op_sj = 1 - (1 - op) ** (sc * k)

and the inverse gives the single-server budget that meets a service-level
target. All evaluation goes through ``log1p``/``expm1`` so that the regime of
interest (op around 1e-5, fan-out around 1e4) keeps full double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class OutlierRatio(float):
    """A proportion in [0, 1] that also remembers ``log(1 - value)``.

    Service-level ratios at large fan-out round to 1.0 as doubles even though
    their complement ``(1 - op) ** n`` is perfectly representable in log
    space. Carrying the log-survival keeps :func:`required_single_server_outlier`
    exact for such inputs. Arithmetic on an ``OutlierRatio`` yields plain
    floats.
    """

    log_survival: float

    def __new__(cls, value: float, log_survival: float | None = None):
        value = float(value)
        if not (0.0 <= value <= 1.0) or math.isnan(value):
            raise ValueError(f"outlier ratio must lie in [0, 1], got {value}")
        self = super().__new__(cls, value)
        if log_survival is None:
            log_survival = -math.inf if value == 1.0 else math.log1p(-value)
        self.log_survival = float(log_survival)
        return self

    def __repr__(self) -> str:
        return f"OutlierRatio({float(self)!r}, log_survival={self.log_survival!r})"


def _as_ratio(op) -> OutlierRatio:
    return op if isinstance(op, OutlierRatio) else OutlierRatio(op)


def _check_count(name: str, n) -> int:
    if int(n) != n or n < 1:
        raise ValueError(f"{name} must be an integer >= 1, got {n}")
    return int(n)


@dataclass(frozen=True)
class AmplificationParams:
    sc: int
    k: int = 1
    threshold_ns: int | None = None  # label only

    def __post_init__(self):
        _check_count("sc", self.sc)
        _check_count("k", self.k)

    @property
    def fanout(self) -> int:
        return self.sc * self.k


def service_outlier_virtualized(op, sc: int, k: int = 1) -> OutlierRatio:
    """Service-level outlier proportion for ``sc`` servers with ``k`` instances each."""
    op = _as_ratio(op)
    n = _check_count("sc", sc) * _check_count("k", k)
    log_s = n * op.log_survival
    return OutlierRatio(0.0 - math.expm1(log_s), log_survival=log_s)


def service_outlier(op, sc: int) -> OutlierRatio:
    """``1 - (1 - op) ** sc``.

    >>> service_outlier(0.5, 2)
    OutlierRatio(0.75, log_survival=-1.3862943611198906)
    """
    return service_outlier_virtualized(op, sc, 1)


def required_single_server_outlier(op_sj, sc: int, k: int = 1) -> OutlierRatio:
    """Largest single-server proportion that keeps the service at ``op_sj``."""
    op_sj = _as_ratio(op_sj)
    n = _check_count("sc", sc) * _check_count("k", k)
    if math.isinf(op_sj.log_survival):
        raise ValueError("a service-level outlier proportion of 1 has no finite single-server budget")
    log_s = op_sj.log_survival / n
    return OutlierRatio(0.0 - math.expm1(log_s), log_survival=log_s)


def reduction_factor(measured_op, target_op_sj, sc: int, k: int = 1) -> float:
    """How many times ``measured_op`` must shrink to meet ``target_op_sj``."""
    measured = float(measured_op)
    if not (0.0 < measured <= 1.0):
        raise ValueError(f"measured outlier proportion must lie in (0, 1], got {measured}")
    if not (0.0 < float(target_op_sj) < 1.0):
        raise ValueError(f"target must lie in (0, 1), got {float(target_op_sj)}")
    budget = required_single_server_outlier(target_op_sj, sc, k)
    if budget == 0.0:
        raise ValueError("required single-server budget underflows to 0")
    return measured / float(budget)
