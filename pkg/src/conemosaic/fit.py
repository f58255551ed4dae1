"""Asymmetric power-law model of log cone density versus signed eccentricity.

The model for log density at signed eccentricity r (negative = nasal),
with fixed effects (kappa, pi_n, pi_t, rho) and per-participant effects
(k_s, p_ns, p_ts, r_s):

    r >= 0:  kappa + k_s + (pi_n + p_ns) * ln(|r| + rho + r_s)
    r <  0:  kappa + k_s + (pi_n - pi_t + p_ns - p_ts) * ln(rho + r_s)
                         + (pi_t + p_ts) * ln(|r| + rho + r_s)

The two branches agree at r = 0 by construction. Natural logarithms
throughout; a base-b report divides kappa-like quantities by ln(b) and
variance-like ones by ln(b)^2 while exponents and rho are base-free.

Fitting minimizes squared log residuals with a Levenberg-Marquardt loop
over (kappa, pi_n, pi_t, ln rho); rho is optimized in log space to stay
positive. A one-sided sample (all r >= 0 or all r < 0) cannot identify
both exponents, so they are tied together and the report says which
branch was missing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .density import DensitySample
from .errors import (
    Diverged,
    InvalidOffset,
    NonPositiveDensity,
    OutOfRange,
    Underdetermined,
    UnknownParticipant,
)

MAX_ITERATIONS = 200
INITIAL_DAMPING = 1e-3
COST_TOLERANCE = 1e-10
STEP_TOLERANCE = 1e-12

MAX_ECCENTRICITY_DEG = 15.0


@dataclass(frozen=True)
class PowerFitParams:
    kappa: float
    pi_n: float
    pi_t: float
    rho: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.kappa, self.pi_n, self.pi_t, self.rho)):
            raise ValueError("parameters must be finite")
        if self.rho <= 0:
            raise InvalidOffset(f"rho must be positive, got {self.rho}")


@dataclass(frozen=True)
class RandomEffects:
    k_s: float = 0.0
    p_ns: float = 0.0
    p_ts: float = 0.0
    r_s: float = 0.0


ZERO_EFFECTS = RandomEffects()


@dataclass(frozen=True)
class VarianceComponents:
    sigma2: float = 0.0
    sigma2_s: float = 0.0
    sigma2_ns: float = 0.0
    sigma2_ts: float = 0.0
    sigma2_rs: float = 0.0


@dataclass
class FitReport:
    params: PowerFitParams
    effects: Dict[str, RandomEffects]
    variances: VarianceComponents
    residuals: List[float]
    rms_log_residual: float
    iterations: int
    converged: bool
    frozen_exponent: Optional[str] = None  # 'nasal' or 'temporal' when one branch was absent


def eval_log_density(params: PowerFitParams, effects: Optional[RandomEffects],
                     r: float) -> float:
    """Natural-log density at signed eccentricity r degrees."""
    e = effects if effects is not None else ZERO_EFFECTS
    offset = params.rho + e.r_s
    if offset <= 0:
        raise InvalidOffset(f"rho + r_s = {offset} must be positive")
    base = params.kappa + e.k_s
    outer = math.log(abs(r) + offset)
    if r >= 0:
        return base + (params.pi_n + e.p_ns) * outer
    return (base
            + (params.pi_n - params.pi_t + e.p_ns - e.p_ts) * math.log(offset)
            + (params.pi_t + e.p_ts) * outer)


def _model_and_jacobian(theta: np.ndarray, r: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # theta = (kappa, pi_n, pi_t, ln rho); returns model values and
    # d(model)/d(theta) rows aligned with r
    kappa, pi_n, pi_t, lnrho = theta
    rho = math.exp(lnrho)
    absr = np.abs(r)
    outer = np.log(absr + rho)
    neg = r < 0
    model = np.where(neg,
                     kappa + (pi_n - pi_t) * lnrho + pi_t * outer,
                     kappa + pi_n * outer)
    jac = np.empty((len(r), 4))
    jac[:, 0] = 1.0
    jac[:, 1] = np.where(neg, lnrho, outer)
    jac[:, 2] = np.where(neg, outer - lnrho, 0.0)
    shrink = rho / (absr + rho)  # d outer / d ln rho
    jac[:, 3] = np.where(neg, (pi_n - pi_t) + pi_t * shrink, pi_n * shrink)
    return model, jac


def _sample_arrays(samples: Sequence[DensitySample]) -> Tuple[np.ndarray, np.ndarray]:
    r = np.array([s.eccentricity_deg for s in samples], dtype=np.float64)
    d = np.array([s.density for s in samples], dtype=np.float64)
    bad = np.flatnonzero(d <= 0)
    if len(bad):
        i = int(bad[0])
        raise NonPositiveDensity(f"sample {i} has density {d[i]}, cannot take its log")
    return r, np.log(d)


def residuals_jacobian(params: PowerFitParams,
                       samples: Sequence[DensitySample]) -> Tuple[np.ndarray, np.ndarray]:
    """Log residuals and their Jacobian over (kappa, pi_n, pi_t, ln rho)."""
    r, logd = _sample_arrays(samples)
    theta = np.array([params.kappa, params.pi_n, params.pi_t, math.log(params.rho)])
    model, jac = _model_and_jacobian(theta, r)
    return logd - model, -jac


def _levenberg_marquardt(theta0: np.ndarray, r: np.ndarray, logd: np.ndarray,
                         expand: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int, bool]:
    """Minimize squared residuals over the reduced parameters theta0.

    expand maps reduced parameters to the full (kappa, pi_n, pi_t, ln rho)
    vector; tied exponents share one column. Returns (theta, residuals,
    iterations, converged).
    """
    theta = theta0.copy()
    model, jac_full = _model_and_jacobian(expand @ theta, r)
    res = logd - model
    cost = float(res @ res)
    lam = INITIAL_DAMPING
    iterations = 0
    converged = False
    while iterations < MAX_ITERATIONS:
        iterations += 1
        jac = -(jac_full @ expand)
        jtj = jac.T @ jac
        grad = jac.T @ res
        diag = np.maximum(np.diag(jtj), 1e-12)
        try:
            step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        if not np.all(np.isfinite(step)):
            raise Diverged("non-finite step")
        if float(np.linalg.norm(step)) < STEP_TOLERANCE:
            converged = True
            break
        trial = theta + step
        model, jac_trial = _model_and_jacobian(expand @ trial, r)
        trial_res = logd - model
        trial_cost = float(trial_res @ trial_res)
        if not math.isfinite(trial_cost):
            lam *= 10.0
            continue
        if trial_cost < cost:
            drop = cost - trial_cost
            theta = trial
            res = trial_res
            jac_full = jac_trial
            relative = drop / cost if cost > 0 else 0.0
            cost = trial_cost
            lam /= 10.0
            if relative < COST_TOLERANCE or cost == 0.0:
                converged = True
                break
        else:
            lam *= 10.0
    if not math.isfinite(cost):
        raise Diverged("non-finite cost")
    return theta, res, iterations, converged


def _fit_report(samples: Sequence[DensitySample]) -> FitReport:
    r, logd = _sample_arrays(samples)
    n = len(r)
    if n < 4:
        raise Underdetermined(f"{n} positive-density samples, need at least 4")
    has_pos = bool(np.any(r >= 0))
    has_neg = bool(np.any(r < 0))
    frozen = None
    if has_pos and has_neg:
        expand = np.eye(4)
        theta0 = np.array([float(logd.max()), -0.5, -0.5, 0.0])
    else:
        # one-sided data identifies a single exponent; tie the two together
        frozen = "temporal" if not has_neg else "nasal"
        expand = np.array([[1.0, 0.0, 0.0],
                           [0.0, 1.0, 0.0],
                           [0.0, 1.0, 0.0],
                           [0.0, 0.0, 1.0]])
        theta0 = np.array([float(logd.max()), -0.5, 0.0])

    theta, res, iterations, converged = _levenberg_marquardt(theta0, r, logd, expand)
    full = expand @ theta
    params = PowerFitParams(float(full[0]), float(full[1]), float(full[2]),
                            float(math.exp(full[3])))
    ssr = float(res @ res)
    dof = n - len(theta)
    sigma2 = ssr / dof if dof > 0 else 0.0
    return FitReport(
        params=params,
        effects={},
        variances=VarianceComponents(sigma2=sigma2),
        residuals=[float(v) for v in res],
        rms_log_residual=math.sqrt(ssr / n),
        iterations=iterations,
        converged=converged,
        frozen_exponent=frozen,
    )


def fit_fixed(samples: Sequence[DensitySample]) -> FitReport:
    """Fit the fixed effects to all samples pooled; random effects stay zero."""
    return _fit_report(list(samples))


def fit_two_stage(samples: Sequence[DensitySample]) -> FitReport:
    """Per-participant fits, then pooled fixed effects and deviation variances.

    Fixed effects are the across-participant means (rho through the mean of
    ln rho); random effects are each participant's deviations, with r_s the
    difference of rho values so that fixed + deviation reproduces the
    participant's own curve exactly.
    """
    groups: Dict[str, List[DensitySample]] = {}
    for s in samples:
        groups.setdefault(s.participant_id, []).append(s)
    if not groups:
        raise Underdetermined("no samples")
    pids = sorted(groups)
    stage1: Dict[str, FitReport] = {}
    for pid in pids:
        try:
            stage1[pid] = _fit_report(groups[pid])
        except (NonPositiveDensity, Underdetermined, Diverged) as exc:
            raise type(exc)(f"participant {pid!r}: {exc}") from exc
    if len(pids) == 1:
        pid = pids[0]
        rep = stage1[pid]
        rep.effects = {pid: ZERO_EFFECTS}
        return rep

    kappas = np.array([stage1[p].params.kappa for p in pids])
    pi_ns = np.array([stage1[p].params.pi_n for p in pids])
    pi_ts = np.array([stage1[p].params.pi_t for p in pids])
    rhos = np.array([stage1[p].params.rho for p in pids])
    ln_rhos = np.log(rhos)
    params = PowerFitParams(float(kappas.mean()), float(pi_ns.mean()),
                            float(pi_ts.mean()), float(math.exp(ln_rhos.mean())))
    effects = {
        pid: RandomEffects(
            k_s=float(kappas[i] - params.kappa),
            p_ns=float(pi_ns[i] - params.pi_n),
            p_ts=float(pi_ts[i] - params.pi_t),
            r_s=float(rhos[i] - params.rho),
        )
        for i, pid in enumerate(pids)
    }
    ssr = 0.0
    dof = 0
    residuals: List[float] = []
    for pid in pids:
        rep = stage1[pid]
        residuals.extend(rep.residuals)
        ssr += float(np.dot(rep.residuals, rep.residuals))
        dof += len(rep.residuals) - (3 if rep.frozen_exponent else 4)
    variances = VarianceComponents(
        sigma2=ssr / dof if dof > 0 else 0.0,
        sigma2_s=float(np.var(kappas, ddof=1)),
        sigma2_ns=float(np.var(pi_ns, ddof=1)),
        sigma2_ts=float(np.var(pi_ts, ddof=1)),
        sigma2_rs=float(np.var(rhos, ddof=1)),
    )
    frozen_set = {stage1[p].frozen_exponent for p in pids}
    return FitReport(
        params=params,
        effects=effects,
        variances=variances,
        residuals=residuals,
        rms_log_residual=math.sqrt(ssr / len(residuals)),
        iterations=sum(stage1[p].iterations for p in pids),
        converged=all(stage1[p].converged for p in pids),
        frozen_exponent=frozen_set.pop() if len(frozen_set) == 1 else None,
    )


def predict_curve(report: FitReport, r_grid: Sequence[float],
                  participant: Optional[str] = None) -> List[Tuple[float, float]]:
    """Densities along r_grid; the population curve unless a participant is named."""
    if participant is None:
        effects = ZERO_EFFECTS
    else:
        if participant not in report.effects:
            raise UnknownParticipant(f"participant {participant!r} not in report")
        effects = report.effects[participant]
    out = []
    for r in r_grid:
        if abs(r) > MAX_ECCENTRICITY_DEG:
            raise OutOfRange(f"|r| = {abs(r)} > {MAX_ECCENTRICITY_DEG}")
        out.append((float(r), math.exp(eval_log_density(report.params, effects, float(r)))))
    return out


def rescale_log_base(report: FitReport, base: float) -> FitReport:
    """Re-express log-density quantities in the given log base.

    Intercept-like values divide by ln(base), variance-like ones by
    ln(base)^2; exponents and the eccentricity offset are base-free.
    """
    if base <= 0 or base == 1.0:
        raise ValueError(f"log base must be positive and != 1, got {base}")
    lb = math.log(base)
    params = replace(report.params, kappa=report.params.kappa / lb)
    effects = {pid: replace(e, k_s=e.k_s / lb) for pid, e in report.effects.items()}
    v = report.variances
    variances = VarianceComponents(
        sigma2=v.sigma2 / lb ** 2,
        sigma2_s=v.sigma2_s / lb ** 2,
        sigma2_ns=v.sigma2_ns,
        sigma2_ts=v.sigma2_ts,
        sigma2_rs=v.sigma2_rs,
    )
    return FitReport(
        params=params,
        effects=effects,
        variances=variances,
        residuals=[r / lb for r in report.residuals],
        rms_log_residual=report.rms_log_residual / lb,
        iterations=report.iterations,
        converged=report.converged,
        frozen_exponent=report.frozen_exponent,
    )
