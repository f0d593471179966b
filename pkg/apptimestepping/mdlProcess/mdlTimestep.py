"""
One step of the semi-implicit and fully implicit Euler schemes.

Both schemes are solved by Picard iteration around the diagonal Stokes
operator (I - nu k Laplacian), starting from the previous level.
"""
import math
from dataclasses import dataclass

import numpy as np

from .logger import Logger
from .mdlEnum import Scheme
from .mdlErrors import AnalysisInputError, NonConvergence
from .mdlSpectral import SpectralField, h1_inner, inner, nonlinear_term, project_leray

logger = Logger.get_logger()


@dataclass(frozen=True)
class SchemeConfig:
    k: float
    nu: float
    scheme: str = Scheme.SemiImplicit
    fp_tol: float = 1e-12
    fp_max_iter: int = 100
    deterministic: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise AnalysisInputError(f"Timestep k must be finite and > 0, got {self.k!r}")
        if not (math.isfinite(self.nu) and self.nu > 0):
            raise AnalysisInputError(f"Viscosity nu must be finite and > 0, got {self.nu!r}")
        if self.scheme not in Scheme.All:
            raise AnalysisInputError(f"Unknown scheme {self.scheme!r}")
        if not self.fp_tol > 0:
            raise AnalysisInputError(f"fp_tol must be > 0, got {self.fp_tol!r}")
        if self.fp_max_iter < 1:
            raise AnalysisInputError(f"fp_max_iter must be >= 1, got {self.fp_max_iter!r}")


@dataclass(frozen=True)
class StepResult:
    u_new: SpectralField
    fp_iters: int
    fp_residual: float
    energy_identity_residual: float
    increment_h1_sq: float


def _relative_h1_increment(new, old, floor_sq=0.0):
    """
    |grad(new - old)| relative to the largest of |grad new|, |grad old| and sqrt(floor_sq);
    the absolute step when all of them vanish.
    """
    diff = new - old
    step = math.sqrt(max(h1_inner(diff, diff), 0.0))
    size = math.sqrt(max(h1_inner(new, new), h1_inner(old, old), floor_sq, 0.0))
    if size > 0:
        return step / size
    return step


def _picard(u_prev, f_n, cfg, advecting):
    grid = u_prev.grid
    stokes = 1.0 + cfg.nu * cfg.k * grid.K2
    source = u_prev.coeffs + cfg.k * f_n.coeffs
    current = u_prev
    increment = math.inf
    # iterates that shrink towards a zero solution are measured against the data
    prev_h1_sq = h1_inner(u_prev, u_prev)

    with np.errstate(over='ignore', invalid='ignore'):
        for iteration in range(1, cfg.fp_max_iter + 1):
            advection = nonlinear_term(advecting(current), current)
            rhs = project_leray(source - cfg.k * advection.coeffs, grid)
            candidate = SpectralField(grid, rhs.coeffs / stokes)
            increment = _relative_h1_increment(candidate, current, prev_h1_sq)
            if not math.isfinite(increment):
                logger.warning(f"Fixed-point iterate diverged at iteration {iteration} (k={cfg.k!r})")
                raise NonConvergence(iteration, increment)
            current = candidate
            if increment <= cfg.fp_tol:
                return current, iteration, increment

    logger.warning(f"Fixed-point iteration hit fp_max_iter={cfg.fp_max_iter} (k={cfg.k!r}, increment={increment!r})")
    raise NonConvergence(cfg.fp_max_iter, increment)


def _result(u_prev, u_new, f_n, cfg, iterations, increment):
    diff = u_new - u_prev
    return StepResult(
        u_new=u_new,
        fp_iters=iterations,
        fp_residual=increment,
        energy_identity_residual=energy_identity_residual(u_prev, u_new, f_n, cfg),
        increment_h1_sq=h1_inner(diff, diff),
    )


def semi_implicit_step(u_prev, f_n, cfg):
    """(u^n - u^{n-1})/k + P(u^{n-1}.grad u^n) = nu Lap u^n + f^n."""
    if cfg.scheme != Scheme.SemiImplicit:
        raise AnalysisInputError(f"semi_implicit_step called with scheme {cfg.scheme!r}")
    u_prev._same_grid(f_n)
    u_new, iterations, increment = _picard(u_prev, f_n, cfg, lambda current: u_prev)
    return _result(u_prev, u_new, f_n, cfg, iterations, increment)


def fully_implicit_step(u_prev, f_n, cfg):
    """(u^n - u^{n-1})/k + P(u^n.grad u^n) = nu Lap u^n + f^n."""
    if cfg.scheme != Scheme.FullyImplicit:
        raise AnalysisInputError(f"fully_implicit_step called with scheme {cfg.scheme!r}")
    u_prev._same_grid(f_n)
    u_new, iterations, increment = _picard(u_prev, f_n, cfg, lambda current: current)
    return _result(u_prev, u_new, f_n, cfg, iterations, increment)


def step(u_prev, f_n, cfg):
    if cfg.scheme == Scheme.SemiImplicit:
        return semi_implicit_step(u_prev, f_n, cfg)
    return fully_implicit_step(u_prev, f_n, cfg)


def energy_identity_residual(u_prev, u_new, f_n, cfg):
    """
    Relative defect of
        |u^n|^2 + |u^n - u^{n-1}|^2 + 2 nu k |grad u^n|^2 = |u^{n-1}|^2 + 2k (f^n, u^n),
    which holds for both schemes because the advection term is orthogonal to u^n.
    Scaled by max(|u^{n-1}|^2, |u^n|^2) so a forced step from rest stays relative.
    """
    diff = u_new - u_prev
    new_l2 = inner(u_new, u_new)
    prev_l2 = inner(u_prev, u_prev)
    lhs = new_l2 + inner(diff, diff) + 2.0 * cfg.nu * cfg.k * h1_inner(u_new, u_new)
    rhs = prev_l2 + 2.0 * cfg.k * inner(f_n, u_new)
    scale = max(prev_l2, new_l2, 1e-300)
    return abs(lhs - rhs) / scale
