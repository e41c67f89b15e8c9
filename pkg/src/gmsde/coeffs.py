"""Coefficient triples (f, g, sigma), their time averages, and diagnostics.

Shapes, for a batch of states x with shape (n, d):

    f(t, x)     -> (n, d)     drift
    g(t, x)     -> (n, d)     coefficient of d<B>
    sigma(t, x) -> (n, d, m)  diffusion; column j multiplies dB^j

All presets are one-dimensional in the state (d = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.integrate import trapezoid

__all__ = [
    "CoefficientTriple",
    "AveragedTriple",
    "ModulusKappa",
    "kappa_eval",
    "example4_triple",
    "example4_averaged",
    "decaying_perturbation_triple",
    "zero_triple",
    "bs_market_triple",
    "scaled_triple",
    "averaging_deviation",
    "cesaro_deviation",
    "growth_scan",
    "AVERAGING_FACTOR",
    "PRESETS",
    "make_preset",
]

# (1/pi) * int_0^pi sin(s) ds
AVERAGING_FACTOR = 2.0 / math.pi

DEFAULT_K_TRUNC = 1000


def _batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None]
    return x


@dataclass(frozen=True)
class CoefficientTriple:
    """Time-dependent coefficients.

    ``joint`` may return (f, g, sigma) in one call; presets use it to share
    series evaluations.  ``envelope`` is the optional lambda(t) of the
    modulus hypothesis and is never used by the solver.
    """

    f: Callable
    g: Callable
    sigma: Callable
    d: int = 1
    m: int = 1
    growth_L1: Optional[float] = None
    envelope: Optional[Callable] = None
    joint: Optional[Callable] = None
    name: str = ""

    def evaluate(self, t: float, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = _batch(x)
        if self.joint is not None:
            return self.joint(t, x)
        return self.f(t, x), self.g(t, x), self.sigma(t, x)

    def check_growth(self, radius: float = 10.0, grid_points: int = 201, time_points: int = 64) -> bool:
        if self.growth_L1 is None:
            return True
        return growth_scan(self, radius, grid_points, time_points) <= self.growth_L1 * (1 + 1e-12)


@dataclass(frozen=True)
class AveragedTriple:
    """Time-free averaged coefficients with the same shapes as the paired triple."""

    f_bar: Callable
    g_bar: Callable
    sigma_bar: Callable
    d: int = 1
    m: int = 1
    joint: Optional[Callable] = None
    name: str = ""

    def evaluate(self, t: float, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = _batch(x)
        if self.joint is not None:
            return self.joint(x)
        return self.f_bar(x), self.g_bar(x), self.sigma_bar(x)

    def as_triple(self) -> CoefficientTriple:
        joint = None
        if self.joint is not None:
            joint = lambda t, x: self.joint(x)
        return CoefficientTriple(
            f=lambda t, x: self.f_bar(x),
            g=lambda t, x: self.g_bar(x),
            sigma=lambda t, x: self.sigma_bar(x),
            d=self.d,
            m=self.m,
            joint=joint,
            name=self.name,
        )

    def consistent_with(self, triple: CoefficientTriple) -> bool:
        return self.d == triple.d and self.m == triple.m


# ---------------------------------------------------------------------------
# moduli


@dataclass(frozen=True)
class ModulusKappa:
    variant: str
    eta: float
    scale_C: float = 1.0

    def __post_init__(self):
        if self.variant not in ("kappa1_log", "kappa2_logsq_patch"):
            raise ValueError(f"unknown modulus variant {self.variant!r}")
        if not 0 < self.eta < 1 / math.e:
            raise ValueError("eta must lie in (0, 1/e)")
        if not self.scale_C > 0:
            raise ValueError("scale_C must be positive")

    @property
    def rho(self) -> float:
        """lim kappa(x) / log(1/x) as x -> 0."""
        return self.scale_C


def kappa_eval(mod: ModulusKappa, x):
    """Patched log moduli: log(1/x) below eta, a bounded continuation above.

    kappa1: log(1/eta) - 1 + eta/x for x > eta.
    kappa2: ((sqrt(l) - 1/(2 sqrt(l))) x + eta/(2 sqrt(l)))^2 / x^2 with
    l = log(1/eta), for x > eta.
    """
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("kappa is defined for x > 0 only")
    eta = mod.eta
    log_inv_eta = math.log(1.0 / eta)
    small = x <= eta
    xs = np.where(small, x, eta)
    xl = np.where(small, eta, x)
    inner = -np.log(xs)
    if mod.variant == "kappa1_log":
        outer = log_inv_eta - 1.0 + eta / xl
    else:
        rl = math.sqrt(log_inv_eta)
        outer = ((rl - 0.5 / rl) * xl + 0.5 * eta / rl) ** 2 / xl**2
    out = mod.scale_C * np.where(small, inner, outer)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# example family: sine series


def _series_parts(x: np.ndarray, k_trunc: int, m: int):
    """Return (S2(x), S3(x), sigma row (n, m)) for x of shape (n,).

    S2 = sum_{k<=K} sin(kx)/k^2, S3 = sum_{k<=K} sin^2(kx)/k^3.
    """
    kmax = max(k_trunc, m)
    k = np.arange(1, kmax + 1, dtype=float)
    s = np.sin(np.multiply.outer(x, k))
    sk = s[:, :k_trunc]
    kk = k[:k_trunc]
    s2 = sk @ (1.0 / kk**2)
    s3 = (sk * sk) @ (1.0 / kk**3)
    row = s[:, :m] * k[:m] ** -1.5
    return s2, s3, row


def _example4_joint(scale_t: Callable, k_trunc: int, m: int):
    def joint(t, x):
        x = _batch(x)
        s2, s3, row = _series_parts(x[:, 0], k_trunc, m)
        c = scale_t(t)
        return (c * s2)[:, None], (c * s3)[:, None], (c * row)[:, None, :]

    return joint


def _split(joint: Callable, time_free: bool = False):
    idx = lambda i: (lambda x: joint(0.0, x)[i]) if time_free else (lambda t, x: joint(t, x)[i])
    return idx(0), idx(1), idx(2)


def example4_triple(k_trunc: int = DEFAULT_K_TRUNC, m: int = DEFAULT_K_TRUNC) -> CoefficientTriple:
    """Sine-series family with time factor sin(s), truncated at ``k_trunc``
    (drift and d<B> terms) and ``m`` (diffusion row).

    The drift truncation tail is bounded by sum_{k > K} k^-2 <= 1/K.
    """
    if k_trunc < 1 or m < 1:
        raise ValueError("k_trunc and m must be >= 1")
    joint = _example4_joint(math.sin, k_trunc, m)
    f, g, sigma = _split(joint)
    # |f|^2 + |g|^2 + |sigma|^2 <= zeta(2)^2 + zeta(3)^2 + zeta(3)
    zeta2, zeta3 = math.pi**2 / 6, 1.2020569031595942
    return CoefficientTriple(
        f, g, sigma, d=1, m=m,
        growth_L1=zeta2**2 + zeta3**2 + zeta3,
        envelope=lambda t: abs(math.sin(t)),
        joint=joint,
        name=f"example4(K={k_trunc}, m={m})",
    )


def example4_averaged(k_trunc: int = DEFAULT_K_TRUNC, m: int = DEFAULT_K_TRUNC) -> AveragedTriple:
    """Example family with sin(s) replaced by its half-period mean 2/pi."""
    if k_trunc < 1 or m < 1:
        raise ValueError("k_trunc and m must be >= 1")
    joint_t = _example4_joint(lambda t: AVERAGING_FACTOR, k_trunc, m)
    joint = lambda x: joint_t(0.0, x)
    f, g, sigma = _split(joint_t, time_free=True)
    return AveragedTriple(f, g, sigma, d=1, m=m, joint=joint, name=f"example4_avg(K={k_trunc}, m={m})")


def decaying_perturbation_triple(base: AveragedTriple, gamma: float) -> CoefficientTriple:
    """f = (1 + gamma e^-s) f_bar, g likewise, sigma = sqrt(1 + gamma e^-s) sigma_bar.

    The normalised deviations over [0, T1] are bounded by gamma/T1 times a
    sup of the averaged coefficients, so they vanish as T1 grows.
    """
    if not gamma >= 0:
        raise ValueError("gamma must be nonnegative")

    def joint(t, x):
        fb, gb, sb = base.evaluate(0.0, x)
        c = 1.0 + gamma * math.exp(-t)
        return c * fb, c * gb, math.sqrt(c) * sb

    f, g, sigma = _split(joint)
    return CoefficientTriple(
        f, g, sigma, d=base.d, m=base.m,
        envelope=lambda t: 1.0 + gamma * math.exp(-t),
        joint=joint,
        name=f"decaying(gamma={gamma}, base={base.name})",
    )


def zero_triple(d: int = 1, m: int = 1) -> CoefficientTriple:
    def joint(t, x):
        x = _batch(x)
        n = x.shape[0]
        return np.zeros((n, d)), np.zeros((n, d)), np.zeros((n, d, m))

    f, g, sigma = _split(joint)
    return CoefficientTriple(f, g, sigma, d=d, m=m, growth_L1=0.0, joint=joint, name="zero")


def bs_market_triple(b: float = 0.05, beta: float = 0.0, sigma: float = 0.2) -> CoefficientTriple:
    """Linear market dynamics dS = b S dt + beta S d<B> + sigma S dB with constant rates."""

    def joint(t, x):
        x = _batch(x)
        return b * x, beta * x, (sigma * x)[:, :, None]

    f, g, s = _split(joint)
    return CoefficientTriple(
        f, g, s, d=1, m=1, growth_L1=b * b + beta * beta + sigma * sigma, joint=joint,
        name=f"bs_market(b={b}, beta={beta}, sigma={sigma})",
    )


def scaled_triple(triple: CoefficientTriple, c: float) -> CoefficientTriple:
    def joint(t, x):
        f, g, s = triple.evaluate(t, x)
        return c * f, c * g, c * s

    f, g, s = _split(joint)
    return CoefficientTriple(f, g, s, d=triple.d, m=triple.m, joint=joint, name=f"{c}*{triple.name}")


def _frozen(triple: CoefficientTriple) -> AveragedTriple:
    """Time-independent triple viewed as its own average."""
    joint = lambda x: triple.evaluate(0.0, x)
    f, g, s = _split(lambda t, x: joint(x), time_free=True)
    return AveragedTriple(f, g, s, d=triple.d, m=triple.m, joint=joint, name=triple.name)


# ---------------------------------------------------------------------------
# diagnostics


class Deviation(NamedTuple):
    dev_f: float
    dev_g: float
    dev_sigma_sq: float


def _time_profile(triple, averaged, x, t1, quad_points):
    if not t1 > 0:
        raise ValueError("t1 must be positive")
    if quad_points < 16:
        raise ValueError("quad_points must be >= 16")
    x = _batch(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))
    s = np.linspace(0.0, t1, quad_points)
    fb, gb, sb = averaged.evaluate(0.0, x)
    fs, gs, ss = [], [], []
    for si in s:
        f, g, sg = triple.evaluate(float(si), x)
        fs.append(f[0] - fb[0])
        gs.append(g[0] - gb[0])
        ss.append(sg[0] - sb[0])
    return s, np.array(fs), np.array(gs), np.array(ss)


def averaging_deviation(triple, averaged, x, t1: float, quad_points: int = 2049) -> Deviation:
    """Composite-trapezoid estimates of

        (1/T1) int_0^T1 |f(s,x) - f_bar(x)| ds,   same for g,
        (1/T1) int_0^T1 |sigma(s,x) - sigma_bar(x)|^2 ds.
    """
    s, df, dg, ds = _time_profile(triple, averaged, x, t1, quad_points)
    nf = np.linalg.norm(df, axis=-1)
    ng = np.linalg.norm(dg, axis=-1)
    ns = np.sum(ds.reshape(len(s), -1) ** 2, axis=-1)
    return Deviation(
        float(trapezoid(nf, s) / t1), float(trapezoid(ng, s) / t1), float(trapezoid(ns, s) / t1)
    )


def cesaro_deviation(triple, averaged, x, t1: float, quad_points: int = 2049) -> Deviation:
    """Signed variant: |(1/T1) int_0^T1 (f(s,x) - f_bar(x)) ds| (and |.|^2 for sigma)."""
    s, df, dg, ds = _time_profile(triple, averaged, x, t1, quad_points)
    mf = trapezoid(df, s, axis=0) / t1
    mg = trapezoid(dg, s, axis=0) / t1
    ms = trapezoid(ds, s, axis=0) / t1
    return Deviation(float(np.linalg.norm(mf)), float(np.linalg.norm(mg)), float(np.sum(ms**2)))


def growth_scan(triple, radius: float, grid_points: int = 201, time_points: int = 64) -> float:
    """Smallest L1 with |f|^2 + |g|^2 + |sigma|^2 <= L1 (1 + |x|^2) on the scan grid.

    Scans x in [-radius, radius] (first coordinate; other coordinates zero)
    and t in [0, 2 pi].
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    d = triple.d
    xs = np.zeros((grid_points, d))
    xs[:, 0] = np.linspace(-radius, radius, grid_points)
    denom = 1.0 + np.sum(xs**2, axis=-1)
    worst = 0.0
    for t in np.linspace(0.0, 2 * math.pi, time_points):
        f, g, s = triple.evaluate(float(t), xs)
        num = np.sum(f**2, -1) + np.sum(g**2, -1) + np.sum(s.reshape(grid_points, -1) ** 2, -1)
        worst = max(worst, float(np.max(num / denom)))
    return worst


# ---------------------------------------------------------------------------
# preset registry


def _preset_example4(k_trunc=DEFAULT_K_TRUNC, m=DEFAULT_K_TRUNC, **_):
    return example4_triple(k_trunc, m), example4_averaged(k_trunc, m)


def _preset_decaying(gamma=1.0, k_trunc=DEFAULT_K_TRUNC, m=DEFAULT_K_TRUNC, **_):
    base = example4_averaged(k_trunc, m)
    return decaying_perturbation_triple(base, gamma), base


def _preset_zero(**_):
    z = zero_triple()
    return z, _frozen(z)


def _preset_bs_market(market_b=0.05, market_beta=0.0, market_sigma=0.2, **_):
    tr = bs_market_triple(market_b, market_beta, market_sigma)
    return tr, _frozen(tr)


PRESETS = {
    "example4": _preset_example4,
    "decaying": _preset_decaying,
    "zero": _preset_zero,
    "bs_market": _preset_bs_market,
}


def make_preset(name: str, **params) -> tuple[CoefficientTriple, AveragedTriple]:
    """(original triple, averaged triple) for a registered preset."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(**params)
