"""
Scalar side of the stability theory: uniform bounds, smallness conditions,
the cubic G(y;x) = (c4 k/nu^3) y^3 - (1 + nu k/(2 c0)) y + x, timestep
restrictions, discrete Gronwall envelopes, comparison sequences and the
per-step verdicts recorded along a trajectory.

Everything here is a pure function of floats (plus norms of fields), so it
is re-entrant and safe to call from worker threads.
"""
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .logger import Logger
from .mdlEnum import ConstraintTag, MonitorVariant, Scheme, SmallnessVariant
from .mdlErrors import AnalysisInputError, BlowUp, Infeasible, RestrictionViolated
from .mdlSpectral import inner, laplacian, nonlinear_term, norms, random_divfree

logger = Logger.get_logger()

CUBE_ROOT_2 = 2.0 ** (1.0 / 3.0)
ROOT_RTOL = 1e-13


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise AnalysisInputError(f"{name} must be finite and > 0, got {value!r}")


def _non_negative(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise AnalysisInputError(f"{name} must be finite and >= 0, got {value!r}")


def _ratio(num, den):
    """num/den with num/0 = +inf (an unconstrained k)."""
    return num / den if den > 0 else math.inf


@dataclass(frozen=True)
class ConstantsSet:
    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c3: Optional[float] = None
    c4: float = 1.0
    c5: float = 1.0

    def __post_init__(self):
        for name in ('c0', 'c1', 'c2', 'c4', 'c5'):
            _positive(name, getattr(self, name))
        derived = math.sqrt(self.c2 / self.c0)
        if self.c3 is None:
            object.__setattr__(self, 'c3', derived)
        else:
            _positive('c3', self.c3)
            if abs(self.c3 ** 2 * self.c0 - self.c2) > 1e-12 * self.c2:
                raise AnalysisInputError(
                    f"c3 must equal sqrt(c2/c0) = {derived!r}, got {self.c3!r}")

    @classmethod
    def from_mapping(cls, values):
        known = {key: float(value) for key, value in values.items()
                 if key in ('c0', 'c1', 'c2', 'c3', 'c4', 'c5') and value is not None}
        return cls(**known)

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class BoundsReport:
    nu: float
    k: float
    u0_l2_sq: float
    u0_h1_sq: float
    f_hm1_sup_sq: float
    f_l2_sup_sq: float
    K0: float
    K1: float
    K0_tilde: float
    K1_tilde: float
    K_lemma: float
    F_short: float
    F_full: float

    def as_dict(self):
        return asdict(self)


def lemma_K(grad_prev_sq, f_l2_sup_sq, nu, c0):
    """K^(n-1) = |grad u^{n-1}|^2 + (10 c0/nu)|f|^2."""
    return grad_prev_sq + 10.0 * c0 / nu * f_l2_sup_sq


def bounds_from_norms(u0_l2_sq, u0_h1_sq, f_hm1_sup_sq, f_l2_sup_sq, nu, consts, k):
    _positive('nu', nu)
    _positive('k', k)
    for name, value in (('|u0|^2', u0_l2_sq), ('|grad u0|^2', u0_h1_sq),
                        ('|f|_{H^-1}^2', f_hm1_sup_sq), ('|f|_{L^2}^2', f_l2_sup_sq)):
        _non_negative(name, value)
    c0, c4 = consts.c0, consts.c4
    nu2 = nu * nu
    return BoundsReport(
        nu=nu,
        k=k,
        u0_l2_sq=u0_l2_sq,
        u0_h1_sq=u0_h1_sq,
        f_hm1_sup_sq=f_hm1_sup_sq,
        f_l2_sup_sq=f_l2_sup_sq,
        K0=u0_l2_sq + c0 / nu2 * f_hm1_sup_sq,
        K1=u0_h1_sq + 2.0 * c0 / nu2 * f_l2_sup_sq,
        K0_tilde=u0_l2_sq + 2.0 * c0 / nu2 * f_hm1_sup_sq,
        K1_tilde=u0_h1_sq + 10.0 * c0 / nu2 * f_l2_sup_sq,
        K_lemma=lemma_K(u0_h1_sq, f_l2_sup_sq, nu, c0),
        F_short=(nu2 * f_l2_sup_sq / c4) ** (1.0 / 3.0),
        F_full=(2.0 * nu2 * f_l2_sup_sq / c4) ** (1.0 / 3.0),
    )


def compute_bounds(u0, forcing, nu, consts, k, times=None):
    """
    Bounds for initial data u0 and a ForcingSpec. The sup-in-time forcing
    norms are taken over `times` (the evaluation times of the run), which
    under-approximates the true supremum for time-modulated forcing.
    """
    bundle = norms(u0)
    f_hm1, f_l2 = forcing.sup_norms(u0.grid, times if times is not None else [0.0])
    return bounds_from_norms(bundle.l2_sq, bundle.h1_sq, f_hm1, f_l2, nu, consts, k)


@dataclass(frozen=True)
class Check:
    """value <= threshold, with slack in native units and as a fraction of the threshold."""
    ok: bool
    value: float
    threshold: float
    slack: float
    fraction: float
    applicable: bool = True

    @classmethod
    def le(cls, value, threshold):
        slack = threshold - value
        if threshold != 0 and math.isfinite(threshold):
            fraction = slack / abs(threshold)
        else:
            fraction = 0.0 if slack == 0 else math.copysign(1.0, slack)
        return cls(ok=bool(slack >= 0), value=float(value), threshold=float(threshold),
                   slack=float(slack), fraction=float(fraction))

    @classmethod
    def not_applicable(cls):
        return cls(ok=True, value=0.0, threshold=0.0, slack=0.0, fraction=0.0, applicable=False)

    @property
    def label(self):
        if not self.applicable:
            return "na"
        return "true" if self.ok else "false"


def smallness_check(bounds, consts, nu, k, variant):
    if variant == SmallnessVariant.ContinuousK0K1:
        return Check.le(bounds.K0 * bounds.K1, consts.c2 * nu ** 4)
    if variant == SmallnessVariant.ContinuousK1:
        return Check.le(bounds.K1, consts.c3 * nu ** 2)
    if variant == SmallnessVariant.Semi:
        value = ((bounds.K0 + k * bounds.f_hm1_sup_sq / nu)
                 * (bounds.K1 + 2.0 * k * bounds.f_l2_sup_sq / nu))
        return Check.le(value, consts.c2 * nu ** 4)
    if variant == SmallnessVariant.Full:
        value = bounds.u0_h1_sq + 2.0 * consts.c0 / nu ** 2 * bounds.f_l2_sup_sq
        return Check.le(value, nu ** 2 / (2.0 * math.sqrt(consts.c0 * consts.c4)))
    raise AnalysisInputError(f"Unknown smallness variant {variant!r}")


@dataclass(frozen=True)
class CubicAnalysis:
    x: float
    cubic_coeff: float
    linear_coeff: float
    y_plus: float
    y_minus: float
    g_at_y_plus: float
    y0: float
    y1: float
    y2: float
    has_positive_roots: bool
    is_degenerate: bool
    a: float
    y_star: float

    def G(self, y):
        return (self.cubic_coeff * y * y - self.linear_coeff) * y + self.x

    def dG(self, y):
        return 3.0 * self.cubic_coeff * y * y - self.linear_coeff

    def roots(self):
        if not self.has_positive_roots:
            return (self.y0,)
        return (self.y0, self.y1, self.y2)

    def as_dict(self):
        return asdict(self)


def _bracketed_root(analysis, lo, hi):
    """
    Brent's method on an analytic bracket, then Newton polish inside it.
    None when G does not change sign over the bracket.
    """
    if np.sign(analysis.G(lo)) * np.sign(analysis.G(hi)) > 0:
        return None
    solution = optimize.root_scalar(analysis.G, bracket=(lo, hi), method='brentq',
                                    xtol=1e-300, rtol=ROOT_RTOL)
    y = solution.root
    residual = abs(analysis.G(y))
    for _ in range(4):
        slope = analysis.dG(y)
        if slope == 0 or residual == 0:
            break
        candidate = y - analysis.G(y) / slope
        if not lo <= candidate <= hi or abs(analysis.G(candidate)) >= residual:
            break
        y, residual = candidate, abs(analysis.G(candidate))
    return y


def cubic_analyze(grad_prev_sq, f_l2_sup_sq, nu, k, consts):
    _non_negative('grad_prev_sq', grad_prev_sq)
    _non_negative('f_l2_sup_sq', f_l2_sup_sq)
    _positive('nu', nu)
    _positive('k', k)
    c0, c4 = consts.c0, consts.c4

    x = grad_prev_sq + 2.0 * k * f_l2_sup_sq / nu
    cubic = c4 * k / nu ** 3
    linear = 1.0 + nu * k / (2.0 * c0)
    y_plus = math.sqrt(linear / (3.0 * cubic))
    # same polynomial form as CubicAnalysis.G, so the sign decides the brackets consistently
    g_plus = (cubic * y_plus * y_plus - linear) * y_plus + x
    outer = math.sqrt(linear / cubic)
    base = dict(
        x=x, cubic_coeff=cubic, linear_coeff=linear, y_plus=y_plus, y_minus=-y_plus,
        g_at_y_plus=g_plus, a=2.0 * c4 * x * x / nu ** 3,
        y_star=x / (1.0 + nu * k / (4.0 * c0)),
    )

    if x == 0.0:
        # G = y (cubic y^2 - linear): closed-form roots 0 and +-sqrt(linear/cubic)
        return CubicAnalysis(y0=-outer, y1=0.0, y2=outer, has_positive_roots=True,
                             is_degenerate=True, **base)

    shape = CubicAnalysis(y0=math.nan, y1=math.nan, y2=math.nan, has_positive_roots=False,
                          is_degenerate=False, **base)
    reach = outer + x / linear
    y0 = _bracketed_root(shape, -reach, -y_plus)
    if y0 is None:
        y0 = math.nan
    if g_plus < 0:
        y1 = _bracketed_root(shape, 0.0, y_plus)
        y2 = _bracketed_root(shape, y_plus, reach)
    else:
        y1 = y2 = None
    if y1 is not None and y2 is not None:
        return CubicAnalysis(y0=y0, y1=y1, y2=y2, has_positive_roots=True,
                             is_degenerate=False, **base)
    return CubicAnalysis(y0=y0, y1=math.nan, y2=math.nan, has_positive_roots=False,
                         is_degenerate=False, **base)


@dataclass(frozen=True)
class ConstraintBound:
    tag: str
    k_max: float
    description: str
    evaluate: Callable[[float], Check] = field(compare=False, repr=False)

    def holds(self, k, rtol=1e-12):
        check = self.evaluate(k)
        return check.value <= check.threshold + rtol * abs(check.threshold)


@dataclass(frozen=True)
class AdmissibleStep:
    variant: str
    k_max: float
    binding: Optional[str]
    constraints: tuple

    def holds(self, k, rtol=1e-12):
        return all(constraint.holds(k, rtol) for constraint in self.constraints)

    def failing(self, k, rtol=1e-12):
        return [c.tag for c in self.constraints if not c.holds(k, rtol)]

    def table(self):
        return [{'tag': c.tag, 'k_max': c.k_max, 'description': c.description}
                for c in self.constraints]


def _constraint_sqrt_form(tag, description, lhs, scale, nu, c4):
    """lhs <= (nu^3/(scale c4 k))^(1/2) / or the 1/2-weighted variant folded into scale."""
    k_max = _ratio(nu ** 3, scale * c4 * lhs * lhs)
    return ConstraintBound(tag, k_max, description,
                           lambda k: Check.le(lhs, math.sqrt(nu ** 3 / (scale * c4 * k))))


def dt_restrictions(bounds, consts, variant):
    """
    Largest timestep satisfying every restriction of a monitor variant, with
    each restriction's own k_max. Raises Infeasible when a condition that does
    not involve k already fails.
    """
    nu = bounds.nu
    c0, c2, c4, c5 = consts.c0, consts.c2, consts.c4, consts.c5
    f2, fm, g0 = bounds.f_l2_sup_sq, bounds.f_hm1_sup_sq, bounds.u0_h1_sq
    constraints = []

    if variant == MonitorVariant.SemiShort:
        spread = 2.0 * g0 + bounds.F_short
        k_max = _ratio(nu ** 3, 2.0 * c4 * spread ** 2)
        constraints.append(ConstraintBound(
            ConstraintTag.Dtf5, k_max, "k <= nu^3 / (2 c4 (2|grad u0|^2 + F)^2)",
            lambda k: Check.le(k, k_max)))

    elif variant == MonitorVariant.SemiSmall:
        threshold = c2 * nu ** 4
        a, b = fm / nu, 2.0 * f2 / nu
        spare = threshold - bounds.K0 * bounds.K1
        if spare < 0:
            raise Infeasible(ConstraintTag.K0K1s,
                             f"K0*K1 = {bounds.K0 * bounds.K1!r} exceeds c2 nu^4 = {threshold!r} for every k > 0 (K0K1s)")
        linear = bounds.K0 * b + bounds.K1 * a
        # positive root of a b k^2 + linear k - spare = 0, in cancellation-free form
        k_max = _ratio(2.0 * spare, linear + math.sqrt(linear * linear + 4.0 * a * b * spare))
        constraints.append(ConstraintBound(
            ConstraintTag.K0K1s, k_max, "(K0 + k|f|_{H^-1}^2/nu)(K1 + 2k|f|^2/nu) <= c2 nu^4",
            lambda k: Check.le((bounds.K0 + a * k) * (bounds.K1 + b * k), threshold)))

    elif variant == MonitorVariant.FullShort:
        k_tilde = 2.0 * g0 + 2.0 * bounds.F_short + 10.0 * c0 / nu * f2
        lhs_y = (1.0 + c5 / nu ** 4 * bounds.K0_tilde * k_tilde) * k_tilde + fm / nu ** 2
        constraints.append(_constraint_sqrt_form(
            ConstraintTag.Dtfx1, "K~ <= (1/2)(nu^3/(3 c4 k))^(1/2)", k_tilde, 12.0, nu, c4))
        constraints.append(_constraint_sqrt_form(
            ConstraintTag.Dtfy1, "(1 + c5 K~0 K~/nu^4) K~ + |f|_{H^-1}^2/nu^2 <= (nu^3/(12 c4 k))^(1/2)",
            lhs_y, 12.0, nu, c4))
        dtf4 = _ratio(nu ** (5.0 / 3.0), 2.0 * c4 ** (1.0 / 3.0) * f2 ** (2.0 / 3.0))
        constraints.append(ConstraintBound(
            ConstraintTag.Dtf4, dtf4, "k <= nu^(5/3) / (2 c4^(1/3) |f|^(4/3))",
            lambda k: Check.le(k, dtf4)))
        spread = 2.0 * g0 + (1.0 + CUBE_ROOT_2) * nu ** (2.0 / 3.0) * f2 ** (1.0 / 3.0) / c4 ** (1.0 / 3.0)
        constraints.append(ConstraintBound(
            ConstraintTag.Dtfz, _ratio((CUBE_ROOT_2 - 1.0) * nu ** 3, 2.0 * c4 * spread ** 2),
            "(2|grad u0|^2 + (1 + 2^(1/3)) nu^(2/3)|f|^(2/3)/c4^(1/3))^2 <= (2^(1/3) - 1) nu^3/(2 c4 k)",
            lambda k: Check.le(spread ** 2, (CUBE_ROOT_2 - 1.0) * nu ** 3 / (2.0 * c4 * k))))

    elif variant == MonitorVariant.FullSmall:
        hypf = smallness_check(bounds, consts, nu, bounds.k, SmallnessVariant.Full)
        if not hypf.ok:
            raise Infeasible(ConstraintTag.Hypf,
                             f"|grad u0|^2 + 2c0|f|^2/nu^2 = {hypf.value!r} exceeds "
                             f"nu^2/(2 sqrt(c0 c4)) = {hypf.threshold!r} (hypf)")
        k1t = bounds.K1_tilde
        lhs_b = (1.0 + c5 / nu ** 4 * bounds.K0_tilde * k1t) * k1t + fm / nu ** 2
        dtf0 = c0 / nu
        constraints.append(ConstraintBound(
            ConstraintTag.Dtf0, dtf0, "k <= c0/nu", lambda k: Check.le(k, dtf0)))
        constraints.append(_constraint_sqrt_form(
            ConstraintTag.Dtfa, "K~1 <= (1/2)(nu^3/(3 c4 k))^(1/2)", k1t, 12.0, nu, c4))
        constraints.append(_constraint_sqrt_form(
            ConstraintTag.Dtfb, "(1 + c5 K~0 K~1/nu^4) K~1 + |f|_{H^-1}^2/nu^2 <= (nu^3/(12 c4 k))^(1/2)",
            lhs_b, 12.0, nu, c4))

    else:
        raise AnalysisInputError(f"Monitor variant {variant!r} has no timestep restrictions")

    binding = min(constraints, key=lambda c: c.k_max)
    k_max = binding.k_max
    return AdmissibleStep(variant=variant, k_max=k_max,
                          binding=binding.tag if math.isfinite(k_max) else None,
                          constraints=tuple(constraints))


def gronwall_envelope(b, x0, r_max, n):
    """(1+b) x_n <= x_{n-1} + r_{n-1}  implies  x_n <= (1+b)^-n x0 + (1+b)/b max r_j."""
    _positive('b', b)
    _non_negative('x0', x0)
    _non_negative('r_max', r_max)
    if n < 0:
        raise AnalysisInputError(f"n must be >= 0, got {n!r}")
    return (1.0 + b) ** (-n) * x0 + (1.0 + b) / b * r_max


def l2_envelope(bounds, consts, n):
    """Gronwall-integrated L2 recurrence; tends to (1 + nu k/c0) c0 |f|_{H^-1}^2 / nu^2 as n grows."""
    b = bounds.nu * bounds.k / consts.c0
    return gronwall_envelope(b, bounds.u0_l2_sq, bounds.k * bounds.f_hm1_sup_sq / bounds.nu, n)


def blowup_time(z0, nu, c4, growth=1.0):
    _non_negative('z0', z0)
    _positive('nu', nu)
    _positive('c4', c4)
    return _ratio(nu ** 3, 2.0 * growth * c4 * z0 * z0)


def doubling_time(z0, nu, c4, growth=1.0):
    """Time at which the comparison solution reaches z^2 = 2 z0^2."""
    return blowup_time(z0, nu, c4, growth) / 2.0


def comparison_ode(z0, nu, c4, t, growth=1.0):
    """
    z(t)^2 for dz/dt = growth (c4/nu^3) z^3, i.e.
    z(t)^2 = z0^2 / (1 - 2 growth t c4 z0^2 / nu^3).
    growth=1 is the continuous estimate; growth=2 matches the discrete g.
    """
    _non_negative('t', t)
    limit = blowup_time(z0, nu, c4, growth)
    if t >= limit:
        raise BlowUp(f"t={t!r} is not below the blow-up time {limit!r}")
    return z0 * z0 / (1.0 - t / limit)


def comparison_seq(z0, nu, c4, k, n, growth=2.0):
    """zeta_0..zeta_n of zeta_j = zeta_{j-1} + k growth (c4/nu^3) zeta_{j-1}^3."""
    _non_negative('z0', z0)
    _positive('nu', nu)
    _positive('c4', c4)
    _positive('k', k)
    rate = k * growth * c4 / nu ** 3
    values = np.empty(int(n) + 1)
    values[0] = z0
    with np.errstate(over='ignore'):
        for j in range(1, int(n) + 1):
            prev = values[j - 1]
            values[j] = prev + rate * prev ** 3
    return values


def one_step_explicit_bound(grad_prev_sq, f_l2_sup_sq, nu, k, c4):
    """(1 + a k) x with a = 2 c4 x^2/nu^3, valid while a k <= 2^(1/3) - 1."""
    _non_negative('grad_prev_sq', grad_prev_sq)
    _non_negative('f_l2_sup_sq', f_l2_sup_sq)
    _positive('nu', nu)
    _positive('k', k)
    x = grad_prev_sq + 2.0 * k * f_l2_sup_sq / nu
    a = 2.0 * c4 * x * x / nu ** 3
    if a * k > CUBE_ROOT_2 - 1.0:
        raise RestrictionViolated(f"a*k = {a * k!r} exceeds 2^(1/3) - 1 (dtf3)")
    return (1.0 + a * k) * x


@dataclass(frozen=True)
class HorizonReport:
    z0: float
    t_star_continuous: float
    t_star_semi: float
    t_f_star: float
    blowup_time: float

    def as_dict(self):
        return asdict(self)


def horizons(bounds, consts):
    nu, c4 = bounds.nu, consts.c4
    z0 = bounds.u0_h1_sq + bounds.F_short
    z0_full = bounds.u0_h1_sq + bounds.F_full
    return HorizonReport(
        z0=z0,
        t_star_continuous=_ratio(nu ** 3, 4.0 * c4 * z0 * z0),
        t_star_semi=_ratio(nu ** 3, 8.0 * c4 * z0 * z0),
        t_f_star=_ratio(nu ** 3, 8.0 * c4 * z0_full * z0_full),
        blowup_time=blowup_time(z0, nu, c4),
    )


# Inequalities assumed by the step lemmas; every other applicable check is a conclusion.
HYPOTHESIS_CHECKS = ('smallness', 'dtfx', 'dtfy', 'dtf1', 'dtf2_posterior', 'dtf2_prior',
                     'linf_recurrence')


@dataclass(frozen=True)
class StepVerdict:
    l2_recurrence: Check
    l2_bound: Check
    h1_recurrence: Check
    dtfx: Check
    dtfy: Check
    y1_membership: Check
    linf_recurrence: Check
    smallness: Check
    dtf1: Check
    dtf2_posterior: Check
    dtf2_prior: Check
    explicit_bound: Check
    bound: Check
    cubic: CubicAnalysis = field(repr=False)

    def checks(self):
        return {name: getattr(self, name) for name in self.__dataclass_fields__ if name != 'cubic'}

    def hypothesis_checks(self):
        return {name: check for name, check in self.checks().items() if name in HYPOTHESIS_CHECKS}

    def conclusion_checks(self):
        return {name: check for name, check in self.checks().items() if name not in HYPOTHESIS_CHECKS}

    @property
    def l2_recurrence_ok(self):
        return self.l2_recurrence.ok

    @property
    def h1_recurrence_ok(self):
        return self.h1_recurrence.ok

    @property
    def lemma_hypotheses(self):
        if not self.dtfx.applicable:
            return self.dtfx
        return min((self.dtfx, self.dtfy), key=lambda check: check.slack)

    @property
    def lemma_hypotheses_ok(self):
        return self.dtfx.ok and self.dtfy.ok

    @property
    def y1_membership_ok(self):
        return self.y1_membership.ok

    @property
    def linf_recurrence_ok(self):
        return self.linf_recurrence.ok

    @property
    def bound_ok(self):
        return self.bound.ok

    @property
    def smallness_ok(self):
        return self.smallness.ok

    @property
    def slack_min(self):
        fractions = [check.fraction for check in self.checks().values() if check.applicable]
        return min(fractions) if fractions else math.nan


def monitored_h1_bound(bounds, variant):
    """Right-hand side of the H1 conclusion for a monitor variant (None for 'none')."""
    if variant == MonitorVariant.SemiSmall:
        return bounds.K1 + 2.0 * bounds.k / bounds.nu * bounds.f_l2_sup_sq
    if variant in (MonitorVariant.SemiShort, MonitorVariant.FullShort):
        return 2.0 * bounds.u0_h1_sq + bounds.F_short
    if variant == MonitorVariant.FullSmall:
        return bounds.K1_tilde
    return None


def step_verdict(prev, new, f_n_hm1_sq, f_n_l2_sq, cfg, consts, bounds, variant):
    """
    Evaluate every per-step inequality for the step prev -> new.
    `prev` and `new` are NormBundles; f_n_* are the norms of this step's forcing.
    A false verdict is data, never an error.
    """
    nu, k = cfg.nu, cfg.k
    c0, c1, c4, c5 = consts.c0, consts.c1, consts.c4, consts.c5
    f2, fm = bounds.f_l2_sup_sq, bounds.f_hm1_sup_sq
    full = cfg.scheme == Scheme.FullyImplicit
    na = Check.not_applicable()

    cubic = cubic_analyze(prev.h1_sq, f2, nu, k, consts)
    x = cubic.x
    y = new.h1_sq

    l2_recurrence = Check.le((1.0 + nu * k / c0) * new.l2_sq, prev.l2_sq + k * f_n_hm1_sq / nu)
    l2_bound = Check.le(new.l2_sq, bounds.K0 + k / nu * fm)

    if full:
        h1_recurrence = Check.le(-cubic.G(y), 0.0)
        K = lemma_K(prev.h1_sq, f2, nu, c0)
        dtfx = Check.le(K, 0.5 * math.sqrt(nu ** 3 / (3.0 * c4 * k)))
        dtfy = Check.le((1.0 + c5 / nu ** 4 * bounds.K0_tilde * K) * K + fm / nu ** 2,
                        math.sqrt(nu ** 3 / (12.0 * c4 * k)))
        y1_membership = Check.le(y, cubic.y1) if cubic.has_positive_roots else na
        linf_recurrence = Check.le((1.0 + nu * k / (4.0 * c0)) * y, x)
        smallness = Check.le(x, nu ** 2 / (2.0 * math.sqrt(c0 * c4)))
        dtf1 = Check.le(x, 2.0 / 3.0 * math.sqrt(nu ** 3 / (3.0 * c4 * k)))
        dtf2_rhs = math.sqrt(nu ** 3 / (3.0 * c4 * k))

        def dtf2_lhs(l2_sq):
            return ((2.0 + 2.0 * c5 / nu ** 4 * l2_sq * prev.h1_sq) * prev.h1_sq
                    + 2.0 / nu ** 2 * fm)

        dtf2_posterior = Check.le(dtf2_lhs(new.l2_sq), dtf2_rhs)
        dtf2_prior = Check.le(dtf2_lhs(bounds.K0 + k / nu * fm), dtf2_rhs)
        if cubic.a * k <= CUBE_ROOT_2 - 1.0:
            explicit_bound = Check.le(y, (1.0 + cubic.a * k) * x)
        else:
            explicit_bound = na
    else:
        h1_recurrence = Check.le(y + (1.5 * nu - c1 * prev.l3) * k * new.h2_sq,
                                 prev.h1_sq + 2.0 * k / nu * f_n_l2_sq)
        smallness = Check.le(prev.l3, nu / (2.0 * c1))
        dtfx = dtfy = y1_membership = linf_recurrence = na
        dtf1 = dtf2_posterior = dtf2_prior = explicit_bound = na

    limit = monitored_h1_bound(bounds, variant)
    bound = Check.le(y, limit) if limit is not None else na

    return StepVerdict(
        l2_recurrence=l2_recurrence, l2_bound=l2_bound, h1_recurrence=h1_recurrence,
        dtfx=dtfx, dtfy=dtfy, y1_membership=y1_membership, linf_recurrence=linf_recurrence,
        smallness=smallness, dtf1=dtf1, dtf2_posterior=dtf2_posterior, dtf2_prior=dtf2_prior,
        explicit_bound=explicit_bound, bound=bound, cubic=cubic,
    )


@dataclass(frozen=True)
class EstimatedConstants:
    """Lower estimates: the true constants are at least these values."""
    c0: float
    c1: float
    c4: float
    samples: int

    def as_dict(self):
        return asdict(self)


def estimate_constants(grid, samples=32, seed=0):
    """
    Maximise the defining ratios over seeded random solenoidal fields:
    c0 from |u|^2/|grad u|^2, c1 from 2|(u.grad u, Lap u)|/(|u|_{L^3}|Lap u|^2),
    c4 from (27/16) (|(u.grad u, Lap u)|/(|grad u|^{3/2}|Lap u|^{3/2}))^4.
    """
    if samples < 1:
        raise AnalysisInputError(f"samples must be >= 1, got {samples!r}")
    rng = np.random.default_rng(seed)
    best = {'c0': 0.0, 'c1': 0.0, 'c4': 0.0}
    for _ in range(samples):
        kmax = float(rng.uniform(1.0, grid.kmax_axis))
        slope = float(rng.uniform(0.0, 3.0))
        u = random_divfree(grid, int(rng.integers(2 ** 31)), slope, 1.0, kmax)
        bundle = norms(u)
        if bundle.h1_sq == 0:
            continue
        trilinear = abs(inner(nonlinear_term(u, u), laplacian(u)))
        best['c0'] = max(best['c0'], bundle.l2_sq / bundle.h1_sq)
        best['c1'] = max(best['c1'], 2.0 * trilinear / (bundle.l3 * bundle.h2_sq))
        ratio = trilinear / (bundle.h1_sq ** 0.75 * bundle.h2_sq ** 0.75)
        best['c4'] = max(best['c4'], 27.0 / 16.0 * ratio ** 4)
    logger.info(f"Estimated constants over {samples} samples: {best}")
    return EstimatedConstants(samples=samples, **best)
