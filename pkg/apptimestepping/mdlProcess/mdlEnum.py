class Scheme:
    SemiImplicit = "semi_implicit"
    FullyImplicit = "fully_implicit"

    All = (SemiImplicit, FullyImplicit)


class MonitorVariant:
    SemiSmall = "semi_small"
    SemiShort = "semi_short"
    FullSmall = "full_small"
    FullShort = "full_short"
    NoMonitor = "none"

    All = (SemiSmall, SemiShort, FullSmall, FullShort, NoMonitor)
    Restricted = (SemiSmall, SemiShort, FullSmall, FullShort)
    ShortTime = (SemiShort, FullShort)
    SmallData = (SemiSmall, FullSmall)


class SmallnessVariant:
    ContinuousK0K1 = "continuous_K0K1"
    ContinuousK1 = "continuous_K1"
    Semi = "semi"
    Full = "full"

    All = (ContinuousK0K1, ContinuousK1, Semi, Full)


class Termination:
    Completed = "completed"
    HorizonReached = "horizon_reached"
    NonConvergence = "nonconvergence"
    BoundViolated = "bound_violated"


class ConstraintTag:
    """Mnemonic labels, one per displayed inequality."""
    Dtf5 = "dtf5"
    K0K1s = "K0K1s"
    Dtfx1 = "dtfx1"
    Dtfy1 = "dtfy1"
    Dtf4 = "dtf4"
    Dtfz = "dtfz"
    Dtf0 = "dtf0"
    Dtfa = "dtfa"
    Dtfb = "dtfb"
    Hypf = "hypf"
    K0K1 = "K0K1"


class FieldKind:
    Zero = "zero"
    Shear = "shear"
    PlanarVortex = "planar_vortex"
    Random = "random"
    File = "file"

    All = (Zero, Shear, PlanarVortex, Random, File)


class ForcingKind:
    Zero = "zero"
    Modes = "modes"
    Random = "random"

    All = (Zero, Modes, Random)


class Modulation:
    NoModulation = "none"
    Cosine = "cosine"
    Ramp = "ramp"

    All = (NoModulation, Cosine, Ramp)


# Column order of the time-series CSV
TIME_SERIES_COLUMNS = [
    'n', 't', 'l2_sq', 'h1_sq', 'h2_sq', 'l3', 'fp_iters', 'energy_residual',
    'verdict_l2', 'verdict_h1', 'verdict_lemma', 'verdict_y1', 'verdict_bound',
    'y1', 'y2', 'y_plus', 'slack_min',
]
