"""
functional_zoo.py

Evaluable functionals Field → ℝ and the concrete members used by every suite.

Zoo (weights f, g, h from jet_lagrangian.standard_coefficients):

    F2, F3            ∫ f φⁿ                                local
    G                 ∫∫ g(x,y) φ(x) φ(y)                   bilinear kernel, g > 0 everywhere
    H                 ∫ g (φ′)²                             local
    I                 ∫ f e^φ                               local
    J                 exp(∫ f φ)                            analytic, not local
    K                 ∫ f sin φ                             local
    L_quartic         ∫ h φ⁴ + g (φ′)²                      local
    unbounded_order   Σ_n ∫ χ_n(φ) φ^(|n|) P_ρ              local, derivative order grows with |φ|

and the partially additive counterexample F_nl = (1-χ)∫φ + χ(∫φ)^N built by
make_counterexample.

Every member carries closed-form derivatives (orders 1–3 where they exist)
so the derivative engine can be checked against them. The weight of Fₙ is
used in both the value and the derivative.
"""

import math
import logging
import threading
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from grid_core import (
    TWO_PI,
    Field,
    GridSpec,
    SupportWindow,
    bump,
    integrate,
    plateau_cutoff,
    smooth_step,
    smooth_step_prime,
    sobolev_norm,
    sobolev_weights,
    spectral_derivative,
)
from jet_core import extract_jet
from jet_lagrangian import (
    Coeff,
    Func,
    JetExpr,
    JetVar,
    Pow,
    Prod,
    euler_lagrange,
    evaluate,
    evaluate_along,
    max_jet_order,
    quartic_gradient,
    standard_coefficients,
    to_prefix,
)

FUNCTIONAL_KINDS = ("local", "bilinear_kernel", "analytic", "counterexample", "unbounded_order")

# Poisson-kernel radius for the unbounded-order weight: ĝ(n) = ρ^|n|.
UNBOUNDED_RHO = 0.6

# G kernel: w⊗w + ε (cos⊗cos + sin⊗sin), w = 1 + 0.5 sin x.
KERNEL_EPS = 0.1

DerivativeRule = Callable[[Field, Sequence[Field]], float]


# ─── Functional ───────────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class Functional:
    name: str
    evaluate: Callable[[Field], float]
    kind: str
    jet_order: Optional[int] = None
    window: Optional[SupportWindow] = None
    density: Optional[JetExpr] = None
    derivatives: Mapping[int, DerivativeRule] = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ValueError(f"Unknown functional kind {self.kind!r}; expected one of {FUNCTIONAL_KINDS}")

    def __call__(self, phi: Field) -> float:
        return float(self.evaluate(phi))

    def has_analytic(self, order: int) -> bool:
        return order in self.derivatives

    def analytic_derivative(self, phi: Field, dirs: Sequence[Field]) -> float:
        rule = self.derivatives.get(len(dirs))
        if rule is None:
            raise ValueError(f"{self.name} has no closed-form derivative of order {len(dirs)}")
        return float(rule(phi, list(dirs)))

    def metadata(self) -> Dict[str, str]:
        meta = {
            "name": self.name,
            "kind": self.kind,
            "jet_order": "" if self.jet_order is None else str(self.jet_order),
            "window": "full" if self.window is None or self.window.is_full
            else f"{self.window.center!r}:{self.window.radius!r}",
            "analytic_orders": ",".join(str(k) for k in sorted(self.derivatives)),
            "description": self.description,
        }
        if self.density is not None:
            meta["density"] = to_prefix(self.density)
        return meta


def _product(dirs: Sequence[Field]) -> np.ndarray:
    out = np.ones_like(dirs[0].samples)
    for v in dirs:
        out = out * v.samples
    return out


def _integral(grid: GridSpec, values: np.ndarray) -> float:
    return float(grid.spacing * np.sum(values))


# ─── Local functionals ────────────────────────────────────────────────────────

class _WindowedDensity:
    """f times the window's plateau cutoff, built once per grid."""

    def __init__(self, density: JetExpr, window: Optional[SupportWindow]):
        self.density = density
        self.window = window
        self._cache: Dict[GridSpec, Tuple[JetExpr, JetExpr]] = {}
        self._lock = threading.Lock()

    def on(self, grid: GridSpec) -> Tuple[JetExpr, JetExpr]:
        """(windowed density, its Euler–Lagrange expression) on `grid`."""
        with self._lock:
            cached = self._cache.get(grid)
            if cached is None:
                expr = self.density
                if self.window is not None and not self.window.is_full:
                    cutoff = plateau_cutoff(grid, self.window.center, self.window.radius)
                    expr = Prod((Coeff("window", cutoff), expr))
                cached = (expr, euler_lagrange(expr).expr)
                self._cache[grid] = cached
            return cached


def make_local(f: JetExpr, window: Optional[SupportWindow] = None, name: Optional[str] = None,
               description: str = "",
               derivatives: Optional[Mapping[int, DerivativeRule]] = None) -> Functional:
    """F(ψ) = ∫ f(j^k_x ψ) χ_window(x) dx, the window folded in as a coefficient."""
    windowed = _WindowedDensity(f, window)

    def value(phi: Field) -> float:
        expr, _ = windowed.on(phi.grid)
        return _integral(phi.grid, evaluate_along(expr, phi))

    def first(phi: Field, dirs: Sequence[Field]) -> float:
        _, el = windowed.on(phi.grid)
        return _integral(phi.grid, evaluate_along(el, phi) * dirs[0].samples)

    rules: Dict[int, DerivativeRule] = {1: first}
    rules.update(derivatives or {})
    return Functional(
        name=name or f"local{to_prefix(f)}",
        evaluate=value,
        kind="local",
        jet_order=max_jet_order(f),
        window=window,
        density=f,
        derivatives=rules,
        description=description or f"∫ {to_prefix(f)} dx",
    )


def evaluate_by_jets(F: Functional, phi: Field) -> float:
    """Slow reference path for local functionals: extract a jet per node, then sum."""
    if F.kind != "local" or F.density is None:
        raise ValueError(f"{F.name} is not a local functional")
    grid = phi.grid
    cutoff = None
    if F.window is not None and not F.window.is_full:
        cutoff = plateau_cutoff(grid, F.window.center, F.window.radius).samples
    k = F.jet_order or 0
    total = 0.0
    for idx, x in enumerate(grid.nodes):
        val = evaluate(F.density, extract_jet(phi, x, k))
        total += val if cutoff is None else cutoff[idx] * val
    return grid.spacing * total


# ─── Bilinear kernel ──────────────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class SeparableKernel:
    """g(x, y) = Σ_i c_i a_i(x) a_i(y): smooth, symmetric, cheap on any grid."""

    weights: Tuple[float, ...]
    factors: Tuple[Field, ...]

    def moments(self, psi: Field) -> np.ndarray:
        return np.array([integrate(a * psi) for a in self.factors])

    def pair(self, psi: Field, chi: Field) -> float:
        """∫∫ g(x,y) ψ(x) χ(y)."""
        return float(np.sum(np.array(self.weights) * self.moments(psi) * self.moments(chi)))

    def apply(self, psi: Field) -> Field:
        """x ↦ ∫ g(x,y) ψ(y) dy."""
        out = np.zeros_like(psi.samples)
        for c, a, m in zip(self.weights, self.factors, self.moments(psi)):
            out = out + c * m * a.samples
        return Field(psi.grid, out)

    def matrix(self) -> np.ndarray:
        return sum(c * np.outer(a.samples, a.samples) for c, a in zip(self.weights, self.factors))


def default_kernel(grid: GridSpec) -> SeparableKernel:
    x = grid.nodes
    w = Field(grid, 1.0 + 0.5 * np.sin(x))
    return SeparableKernel(
        weights=(1.0, KERNEL_EPS, KERNEL_EPS),
        factors=(w, Field(grid, np.cos(x)), Field(grid, np.sin(x))),
    )


def make_bilocal(kernel: SeparableKernel, name: str = "G") -> Functional:
    zero = lambda phi, dirs: 0.0  # noqa: E731
    return Functional(
        name=name,
        evaluate=lambda phi: kernel.pair(phi, phi),
        kind="bilinear_kernel",
        derivatives={
            1: lambda phi, dirs: 2.0 * kernel.pair(phi, dirs[0]),
            2: lambda phi, dirs: 2.0 * kernel.pair(dirs[0], dirs[1]),
            3: zero,
        },
        description="∫∫ g(x,y) φ(x) φ(y), g = w⊗w + ε(cos⊗cos + sin⊗sin)",
    )


# ─── Closed-form zoo members ──────────────────────────────────────────────────

def make_power(n: int, f: Field) -> Functional:
    """Fₙ(φ) = ∫ f φⁿ."""

    def rule(k):
        def d(phi, dirs):
            if k > n:
                return 0.0
            c = math.factorial(n) / math.factorial(n - k)
            return c * _integral(phi.grid, f.samples * phi.samples ** (n - k) * _product(dirs))
        return d

    base = make_local(Prod((Coeff("f", f), Pow(JetVar(0), n))), name=f"F{n}",
                      description=f"∫ f φ^{n}")
    return replace(base, derivatives={k: rule(k) for k in (1, 2, 3)})


def make_gradient_energy(g: Field) -> Functional:
    """H(φ) = ∫ g (φ′)²."""

    def d1(phi, dirs):
        dp, dv = spectral_derivative(phi, 1), spectral_derivative(dirs[0], 1)
        return 2.0 * integrate(g * dp * dv)

    def d2(phi, dirs):
        a, b = spectral_derivative(dirs[0], 1), spectral_derivative(dirs[1], 1)
        return 2.0 * integrate(g * a * b)

    base = make_local(Prod((Coeff("g", g), Pow(JetVar(1), 2))), name="H", description="∫ g (φ′)²")
    return replace(base, derivatives={1: d1, 2: d2, 3: lambda p, d: 0.0})


def make_exponential(f: Field) -> Functional:
    """I(φ) = ∫ f e^φ; every derivative is ∫ f e^φ Π v."""

    def rule(phi, dirs):
        return _integral(phi.grid, f.samples * np.exp(phi.samples) * _product(dirs))

    base = make_local(Prod((Coeff("f", f), Func("exp", JetVar(0)))), name="I", description="∫ f e^φ")
    return replace(base, derivatives={1: rule, 2: rule, 3: rule})


def make_exp_integral(f: Field) -> Functional:
    """J(φ) = exp(∫ f φ)."""

    def value(phi):
        return math.exp(integrate(f * phi))

    def rule(phi, dirs):
        return value(phi) * math.prod(integrate(f * v) for v in dirs)

    return Functional(
        name="J",
        evaluate=value,
        kind="analytic",
        derivatives={1: rule, 2: rule, 3: rule},
        description="exp(∫ f φ)",
    )


_SIN_CYCLE = (np.sin, np.cos, lambda s: -np.sin(s), lambda s: -np.cos(s))


def make_sine(f: Field) -> Functional:
    """K(φ) = ∫ f sin φ."""

    def rule(k):
        return lambda phi, dirs: _integral(phi.grid, f.samples * _SIN_CYCLE[k % 4](phi.samples) * _product(dirs))

    base = make_local(Prod((Coeff("f", f), Func("sin", JetVar(0)))), name="K", description="∫ f sin φ")
    return replace(base, derivatives={k: rule(k) for k in (1, 2, 3)})


def make_quartic(h: Field, g: Field) -> Functional:
    """∫ h φ⁴ + g (φ′)²."""

    def d1(phi, dirs):
        v = dirs[0]
        dp, dv = spectral_derivative(phi, 1), spectral_derivative(v, 1)
        return integrate(4.0 * h * phi * phi * phi * v + 2.0 * g * dp * dv)

    def d2(phi, dirs):
        a, b = dirs
        da, db = spectral_derivative(a, 1), spectral_derivative(b, 1)
        return integrate(12.0 * h * phi * phi * a * b + 2.0 * g * da * db)

    def d3(phi, dirs):
        return _integral(phi.grid, 24.0 * h.samples * phi.samples * _product(dirs))

    base = make_local(quartic_gradient(h, g), name="L_quartic", description="∫ h φ⁴ + g (φ′)²")
    return replace(base, derivatives={1: d1, 2: d2, 3: d3})


# ─── Unbounded-order functional ───────────────────────────────────────────────

def _omega(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def _omega_prime(t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ti ** 2)) * (-2.0 * ti / (1.0 - ti ** 2) ** 2)
    return out


def partition_bands(phi: Field) -> range:
    """Bands n whose χ_n can fire somewhere on φ's range."""
    top = int(math.floor(phi.max_abs())) + 1
    return range(-top - 1, top + 2)


def value_partition(s: np.ndarray, bands: Sequence[int]):
    """χ_n(s) = ω(s-n) / Σ_m ω(s-m) and its s-derivative, for every band n."""
    om = {n: _omega(s - n) for n in bands}
    om_p = {n: _omega_prime(s - n) for n in bands}
    denom = sum(om.values())
    denom_p = sum(om_p.values())
    chi = {n: om[n] / denom for n in bands}
    chi_p = {n: (om_p[n] * denom - om[n] * denom_p) / denom ** 2 for n in bands}
    return chi, chi_p


def poisson_weight(grid: GridSpec, rho: float = UNBOUNDED_RHO) -> Field:
    x = grid.nodes
    return Field(grid, (1.0 - rho ** 2) / (1.0 - 2.0 * rho * np.cos(x) + rho ** 2))


def make_unbounded_order(rho: float = UNBOUNDED_RHO) -> Functional:
    """
    Σ_n ∫ χ_n(φ(x)) φ^(|n|)(x) g(x) dx, g the Poisson kernel with ĝ(n) = ρ^|n|.

    At φ ≡ n (integer) only χ_n fires, so the first derivative pairs v^(n) with g.
    """

    def value(phi):
        g = poisson_weight(phi.grid, rho)
        bands = partition_bands(phi)
        chi, _ = value_partition(phi.samples, bands)
        total = np.zeros_like(phi.samples)
        for n in bands:
            if not np.any(chi[n]):
                continue
            total += chi[n] * spectral_derivative(phi, abs(n)).samples
        return _integral(phi.grid, total * g.samples)

    def first(phi, dirs):
        v = dirs[0]
        g = poisson_weight(phi.grid, rho)
        bands = partition_bands(phi)
        chi, chi_p = value_partition(phi.samples, bands)
        total = np.zeros_like(phi.samples)
        for n in bands:
            if not (np.any(chi[n]) or np.any(chi_p[n])):
                continue
            total += chi_p[n] * v.samples * spectral_derivative(phi, abs(n)).samples
            total += chi[n] * spectral_derivative(v, abs(n)).samples
        return _integral(phi.grid, total * g.samples)

    return Functional(
        name="unbounded_order",
        evaluate=value,
        kind="unbounded_order",
        derivatives={1: first},
        description=f"Σ_n ∫ χ_n(φ) φ^(|n|) P_ρ, ρ={rho}",
    )


# ─── Counterexample ───────────────────────────────────────────────────────────

@lru_cache(maxsize=None)
def embedding_constant(grid: GridSpec) -> float:
    """C with ‖f‖_{C⁰} ≤ C ‖f‖_{H²}: (1/2π) (Σ_n (1+n²)^{-2})^{1/2} over the grid's modes."""
    return float(np.sqrt(np.sum(1.0 / sobolev_weights(grid, 1))) / TWO_PI)


def counterexample_thresholds(grid: GridSpec) -> Tuple[float, float]:
    """(a, b) = (1/(3C²), 1/(2C²)): χ = 1 below a, 0 above b."""
    c = embedding_constant(grid)
    return 1.0 / (3.0 * c * c), 1.0 / (2.0 * c * c)


def distance_from_one(f: Field) -> float:
    return float(np.max(np.abs(1.0 - f.samples)))


def counterexample_cutoff(f: Field) -> float:
    """χ(f) = s(‖1 - f‖²_{H²})."""
    a, b = counterexample_thresholds(f.grid)
    q = sobolev_norm(1.0 - f, 1) ** 2
    return float(smooth_step(q, a, b))


def make_counterexample(N: int = 2) -> Functional:
    """F_nl(f) = (1 - χ(f)) ∫f + χ(f) (∫f)^N."""
    if N < 2:
        raise ValueError(f"Counterexample exponent N must be ≥ 2, got {N}")

    def value(f):
        chi = counterexample_cutoff(f)
        s = integrate(f)
        return (1.0 - chi) * s + chi * s ** N

    def first(f, dirs):
        v = dirs[0]
        grid = f.grid
        a, b = counterexample_thresholds(grid)
        resid = 1.0 - f
        q = sobolev_norm(resid, 1) ** 2
        chi = float(smooth_step(q, a, b))
        chi_p = float(smooth_step_prime(q, a, b))
        weights = sobolev_weights(grid, 1)
        dq = TWO_PI ** 2 * float(np.sum(weights * 2.0 * np.real(np.conj(resid.spectrum) * -v.spectrum)))
        s, sv = integrate(f), integrate(v)
        return (1.0 - chi) * sv + chi * N * s ** (N - 1) * sv + chi_p * dq * (s ** N - s)

    return Functional(
        name="F_nl",
        evaluate=value,
        kind="counterexample",
        derivatives={1: first},
        description=f"(1-χ)∫f + χ(∫f)^{N}, χ = s(‖1-f‖²_H²)",
    )


@dataclass(frozen=True)
class HammersteinWitness:
    phi1: Field
    phi2: Field
    phi3: Field
    residual: float
    expected: float
    scale: float


def hammerstein_witness(grid: GridSpec, N: int = 2, radius: float = 0.5) -> HammersteinWitness:
    """
    φ₂ = 1 with unit-peak bumps φ₁, φ₃ at π/2 and 3π/2.

    χ vanishes on 1+φ₁, 1+φ₃ and 1+φ₁+φ₃ but equals 1 at φ₂, so the
    Hammerstein residual is exactly (2π)^N - 2π.
    """
    F = make_counterexample(N)
    phi1 = bump(SupportWindow(math.pi / 2, radius), grid, peak=1.0)
    phi3 = bump(SupportWindow(3 * math.pi / 2, radius), grid, peak=1.0)
    phi2 = Field.constant(grid, 1.0)
    values = [F(phi1 + phi2 + phi3), F(phi1 + phi2), F(phi2 + phi3), F(phi2)]
    residual = values[0] - values[1] - values[2] + values[3]
    logging.info(f"[zoo] Hammerstein witness N={N}: residual={residual:.12g}")
    return HammersteinWitness(
        phi1=phi1, phi2=phi2, phi3=phi3,
        residual=residual,
        expected=TWO_PI ** N - TWO_PI,
        scale=max(abs(v) for v in values),
    )


# ─── The zoo ──────────────────────────────────────────────────────────────────

def zoo(grid: GridSpec) -> List[Functional]:
    c = standard_coefficients(grid)
    return [
        make_power(2, c["f"]),
        make_power(3, c["f"]),
        make_bilocal(default_kernel(grid)),
        make_gradient_energy(c["g"]),
        make_exponential(c["f"]),
        make_exp_integral(c["f"]),
        make_sine(c["f"]),
        make_quartic(c["h"], c["g"]),
        make_unbounded_order(),
    ]


def zoo_by_name(grid: GridSpec, counterexample_n: int = 2) -> Dict[str, Functional]:
    members = {F.name: F for F in zoo(grid)}
    members["F_nl"] = make_counterexample(counterexample_n)
    return members
