"""Monte Carlo pulsed-measurement records and the N/T estimator.

Each shot draws a latent phonon number m from the thermal law, then a
quadrature outcome y from the conditional Gaussian Normal(2mA, e^{-2r}).
Assignment rounds y to the nearest outcome center (ties to even, clamped at
zero); estimation inverts the ensemble mean, <Y> = 2AN.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import hbar, k as k_B
from scipy.special import erfc

from . import protocol


@dataclass(frozen=True)
class MeasurementRecord:
    y: np.ndarray
    m_true: np.ndarray
    params: protocol.ProtocolParams
    seed: int

    @property
    def shots(self):
        return len(self.y)


@dataclass(frozen=True)
class EstimateReport:
    N_hat: float
    N_stderr: float
    T_hat: float | None
    T_stderr: float | None
    misassign_rate: float
    shots: int
    seed: int


def sample_record(p, shots, seed):
    """Draw a reproducible record of (y, m_true) pairs.

    The thermal draw uses the geometric identity: with q = 1/(N+1),
    (geometric(q) - 1) has law N^m / (N+1)^{m+1} exactly.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    m = rng.geometric(1.0 / (p.N + 1.0), size=shots) - 1
    y = 2.0 * p.A * m + math.exp(-p.r) * rng.standard_normal(shots)
    return MeasurementRecord(y=y, m_true=m, params=p, seed=seed)


def assign_m(y, p):
    """Nearest outcome center: round(y / 2A), half to even, clamped at 0."""
    m = np.rint(np.asarray(y) / (2.0 * p.A)).astype(int)
    m = np.maximum(m, 0)
    return int(m) if np.isscalar(y) else m


def interior_misassignment(A, r):
    """Two-sided tail past half the center spacing: erfc(A e^r / sqrt 2)."""
    return float(erfc(A * math.exp(r) / math.sqrt(2.0)))


def misassignment_probability(p):
    """P(n)-averaged misassignment; the m = 0 bin is one-sided.

    Interior m lose to |noise| > A on either side; m = 0 only to noise > A
    (the clamp absorbs the negative side), so its tail carries half weight:
    total = (1 - P(0)/2) erfc(A e^r / sqrt 2).
    """
    if p.A <= 0:
        raise ValueError("pulse area A must be > 0")
    p0 = 1.0 / (p.N + 1.0)
    return (1.0 - 0.5 * p0) * interior_misassignment(p.A, p.r)


def _dT_dN(N, nu):
    lg = math.log1p(1.0 / N)
    return hbar * nu / k_B / (lg * lg * N * (N + 1.0))


def estimate(record):
    """Invert <Y> = 2AN; propagate the standard error to T by delta method.

    A nonpositive N estimate leaves the temperature undefined; the T fields
    are then None (serialized as JSON null).
    """
    if record.shots < 2:
        raise ValueError("estimation needs at least 2 shots")
    p = record.params
    n_hat = float(np.mean(record.y)) / (2.0 * p.A)
    n_stderr = float(np.std(record.y, ddof=1)) / (
        2.0 * p.A * math.sqrt(record.shots))
    if n_hat > 0:
        t_hat = protocol.temperature_from_N(n_hat, p.nu)
        t_stderr = _dT_dN(n_hat, p.nu) * n_stderr
    else:
        t_hat = None
        t_stderr = None
    mis = float(np.mean(assign_m(record.y, p) != record.m_true))
    return EstimateReport(N_hat=n_hat, N_stderr=n_stderr, T_hat=t_hat,
                          T_stderr=t_stderr, misassign_rate=mis,
                          shots=record.shots, seed=record.seed)


def write_record_csv(record, fh):
    """CSV rows `shot,y,m_true`, floats in shortest round-trip form."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["shot", "y", "m_true"])
    for i in range(record.shots):
        w.writerow([i, repr(float(record.y[i])), int(record.m_true[i])])


def report_json_dict(report):
    """The report with the documented export keys."""
    return {
        "n_hat": report.N_hat,
        "n_stderr": report.N_stderr,
        "t_hat_kelvin": report.T_hat,
        "t_stderr_kelvin": report.T_stderr,
        "misassign_rate": report.misassign_rate,
        "shots": report.shots,
        "seed": report.seed,
    }
