"""
jet_lagrangian.py

Lagrangian densities f(x, u0, u1, …, uk) as immutable expression trees over
jet coordinates, plus the variational operators built on them.

Node kinds:
    Const(value)            real constant
    Coord()                 the coordinate x
    JetVar(j)               u_j, the j-th derivative slot of the jet
    Coeff(name, source, d)  d-th derivative of a coefficient Field (h, g, f, …)
    Sum(terms) / Prod(factors) / Pow(base, n) / Func(name, arg)   name ∈ {sin, cos, exp}

Operators:
    vertical_derivative  ∂f/∂u_j
    total_derivative     D_x f = ∂f/∂x + Σ_j u_{j+1} ∂f/∂u_j   (∂/∂x acts on Coeff by spectral derivative)
    vertical_euler       ρf = Σ_j u_j ∂f/∂u_j
    euler_lagrange       EL(f) = Σ_j (-1)^j D_x^j ∂f/∂u_j, with the telescoping boundary current J
                         such that ρf = u0 · EL(f) + D_x J pointwise

Prefix notation (print/parse round-trips exactly):

    expr  := number | "x" | "u" digits | "(coef" name digits ")"
           | "(+" expr+ ")" | "(*" expr+ ")" | "(^" expr integer ")" | "(" fname expr ")"

Simplification is deliberately shallow: flatten, fold constants, merge like
terms and repeated factors. Deciding that an expression is zero is left to
numerical evaluation.
"""

import re
import logging
from dataclasses import dataclass, field as dc_field
from functools import cached_property, reduce, singledispatch
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from grid_core import Field, GridSpec, spectral_derivative
from jet_core import Jet, jets_along

FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}

_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")
_JETVAR_RE = re.compile(r"^u(\d+)$")


# ─── Nodes ────────────────────────────────────────────────────────────────────

class JetExpr:
    """Base class; arithmetic operators build trees."""

    grid: Optional[GridSpec] = None

    def __add__(self, other):
        return Sum((self, as_expr(other)))

    def __radd__(self, other):
        return Sum((as_expr(other), self))

    def __sub__(self, other):
        return Sum((self, Prod((Const(-1.0), as_expr(other)))))

    def __rsub__(self, other):
        return Sum((as_expr(other), Prod((Const(-1.0), self))))

    def __mul__(self, other):
        return Prod((self, as_expr(other)))

    def __rmul__(self, other):
        return Prod((as_expr(other), self))

    def __neg__(self):
        return Prod((Const(-1.0), self))

    def __pow__(self, exponent):
        return Pow(self, exponent)

    def __str__(self):
        return to_prefix(self)


def as_expr(value) -> JetExpr:
    if isinstance(value, JetExpr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"Cannot use {type(value).__name__} in a jet expression")


def _combined_grid(children) -> Optional[GridSpec]:
    grid = None
    for child in children:
        g = child.grid
        if g is None:
            continue
        if grid is None:
            grid = g
        elif g != grid:
            raise ValueError(
                f"Jet expression mixes coefficient fields from different grids "
                f"(n={grid.n_points} and n={g.n_points})"
            )
    return grid


@dataclass(frozen=True)
class Const(JetExpr):
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))


@dataclass(frozen=True)
class Coord(JetExpr):
    pass


@dataclass(frozen=True)
class JetVar(JetExpr):
    order: int

    def __post_init__(self):
        if int(self.order) < 0:
            raise ValueError(f"Jet variable order must be ≥ 0, got {self.order}")
        object.__setattr__(self, "order", int(self.order))


@dataclass(frozen=True)
class Coeff(JetExpr):
    name: str
    source: Field
    deriv: int = 0

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValueError(f"Coefficient name {self.name!r} is not an identifier")
        if self.deriv < 0:
            raise ValueError(f"Coefficient derivative order must be ≥ 0, got {self.deriv}")

    @property
    def grid(self) -> GridSpec:
        return self.source.grid

    @cached_property
    def samples(self) -> np.ndarray:
        return spectral_derivative(self.source, self.deriv).samples


@dataclass(frozen=True)
class Sum(JetExpr):
    terms: Tuple[JetExpr, ...]
    grid: Optional[GridSpec] = dc_field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        terms = tuple(as_expr(t) for t in self.terms)
        if not terms:
            raise ValueError("Sum needs at least one term")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "grid", _combined_grid(terms))


@dataclass(frozen=True)
class Prod(JetExpr):
    factors: Tuple[JetExpr, ...]
    grid: Optional[GridSpec] = dc_field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        factors = tuple(as_expr(f) for f in self.factors)
        if not factors:
            raise ValueError("Prod needs at least one factor")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "grid", _combined_grid(factors))


@dataclass(frozen=True)
class Pow(JetExpr):
    base: JetExpr
    exponent: int
    grid: Optional[GridSpec] = dc_field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if isinstance(self.exponent, bool) or int(self.exponent) != self.exponent or self.exponent < 0:
            raise ValueError(f"Pow exponent must be a non-negative integer, got {self.exponent!r}")
        object.__setattr__(self, "base", as_expr(self.base))
        object.__setattr__(self, "exponent", int(self.exponent))
        object.__setattr__(self, "grid", self.base.grid)


@dataclass(frozen=True)
class Func(JetExpr):
    name: str
    arg: JetExpr
    grid: Optional[GridSpec] = dc_field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.name not in FUNCS:
            raise ValueError(f"Unknown function {self.name!r}; expected one of {sorted(FUNCS)}")
        object.__setattr__(self, "arg", as_expr(self.arg))
        object.__setattr__(self, "grid", self.arg.grid)


def u(j: int) -> JetVar:
    return JetVar(j)


def sin(e) -> Func:
    return Func("sin", as_expr(e))


def cos(e) -> Func:
    return Func("cos", as_expr(e))


def exp(e) -> Func:
    return Func("exp", as_expr(e))


@dataclass(frozen=True)
class ELResult:
    expr: JetExpr
    boundary_current: Optional[JetExpr] = None


# ─── Structure queries ────────────────────────────────────────────────────────

def _children(node: JetExpr) -> Tuple[JetExpr, ...]:
    if isinstance(node, Sum):
        return node.terms
    if isinstance(node, Prod):
        return node.factors
    if isinstance(node, Pow):
        return (node.base,)
    if isinstance(node, Func):
        return (node.arg,)
    return ()


def max_jet_order(expr: JetExpr) -> int:
    """Largest j with u_j in the tree; 0 when no jet variable appears."""
    if isinstance(expr, JetVar):
        return expr.order
    return max((max_jet_order(c) for c in _children(expr)), default=0)


def depends_on_jet(expr: JetExpr) -> bool:
    if isinstance(expr, JetVar):
        return True
    return any(depends_on_jet(c) for c in _children(expr))


def contains_coordinate(expr: JetExpr) -> bool:
    if isinstance(expr, Coord):
        return True
    return any(contains_coordinate(c) for c in _children(expr))


def coefficient_fields(expr: JetExpr) -> Dict[str, Field]:
    """name → source Field for every coefficient in the tree."""
    if isinstance(expr, Coeff):
        return {expr.name: expr.source}
    out: Dict[str, Field] = {}
    for c in _children(expr):
        for name, src in coefficient_fields(c).items():
            if name in out and out[name] is not src:
                raise ValueError(f"Coefficient name {name!r} is bound to two different fields")
            out[name] = src
    return out


# ─── Partial derivatives ──────────────────────────────────────────────────────

@singledispatch
def _partial(node: JetExpr, var) -> JetExpr:
    raise TypeError(f"No derivative rule for {type(node).__name__}")


@_partial.register
def _(node: Const, var):
    return Const(0.0)


@_partial.register
def _(node: Coord, var):
    return Const(1.0 if isinstance(var, Coord) else 0.0)


@_partial.register
def _(node: JetVar, var):
    return Const(1.0 if node == var else 0.0)


@_partial.register
def _(node: Coeff, var):
    if isinstance(var, Coord):
        return Coeff(node.name, node.source, node.deriv + 1)
    return Const(0.0)


@_partial.register
def _(node: Sum, var):
    return Sum(tuple(_partial(t, var) for t in node.terms))


@_partial.register
def _(node: Prod, var):
    terms = []
    for i, fi in enumerate(node.factors):
        rest = node.factors[:i] + node.factors[i + 1:]
        terms.append(Prod((_partial(fi, var),) + rest))
    return Sum(tuple(terms))


@_partial.register
def _(node: Pow, var):
    n = node.exponent
    if n == 0:
        return Const(0.0)
    return Prod((Const(float(n)), Pow(node.base, n - 1), _partial(node.base, var)))


@_partial.register
def _(node: Func, var):
    inner = _partial(node.arg, var)
    if node.name == "sin":
        outer = Func("cos", node.arg)
    elif node.name == "cos":
        outer = Prod((Const(-1.0), Func("sin", node.arg)))
    else:
        outer = node
    return Prod((outer, inner))


def vertical_derivative(f: JetExpr, j: int) -> JetExpr:
    """∂f/∂u_j with x and the other u_i held fixed."""
    return simplify(_partial(f, JetVar(j)))


def explicit_x_derivative(f: JetExpr) -> JetExpr:
    return simplify(_partial(f, Coord()))


def total_derivative(f: JetExpr) -> JetExpr:
    """D_x f = ∂f/∂x + Σ_j u_{j+1} ∂f/∂u_j."""
    terms = [_partial(f, Coord())]
    for j in range(max_jet_order(f) + 1):
        terms.append(Prod((JetVar(j + 1), _partial(f, JetVar(j)))))
    return simplify(Sum(tuple(terms)))


def total_derivative_power(f: JetExpr, times: int) -> JetExpr:
    for _ in range(times):
        f = total_derivative(f)
    return f


def vertical_euler(f: JetExpr) -> JetExpr:
    """ρf = Σ_j u_j ∂f/∂u_j."""
    terms = [Prod((JetVar(j), _partial(f, JetVar(j)))) for j in range(max_jet_order(f) + 1)]
    return simplify(Sum(tuple(terms)))


def euler_lagrange(f: JetExpr) -> ELResult:
    """
    EL(f) = Σ_j (-1)^j D_x^j (∂f/∂u_j), plus the boundary current

        J = Σ_{j≥1} Σ_{i<j} (-1)^i u_{j-1-i} D_x^i (∂f/∂u_j)

    which makes ρf - u0 · EL(f) = D_x J hold identically.
    """
    k = max_jet_order(f)
    el_terms = []
    current_terms = []
    for j in range(k + 1):
        p = vertical_derivative(f, j)
        derivs = [p]
        for _ in range(j):
            derivs.append(total_derivative(derivs[-1]))
        el_terms.append(Prod((Const((-1.0) ** j), derivs[j])))
        for i in range(j):
            current_terms.append(
                Prod((Const((-1.0) ** i), JetVar(j - 1 - i), derivs[i]))
            )
    expr = simplify(Sum(tuple(el_terms)))
    current = simplify(Sum(tuple(current_terms))) if current_terms else Const(0.0)
    logging.debug(f"[lagrangian] EL({to_prefix(f)}) = {to_prefix(expr)}")
    return ELResult(expr=expr, boundary_current=current)


# ─── Simplification ───────────────────────────────────────────────────────────

def _split_coefficient(node: JetExpr):
    """(c, rest) with node = c · rest; rest is None for a pure constant."""
    if isinstance(node, Const):
        return node.value, None
    if isinstance(node, Prod) and isinstance(node.factors[0], Const):
        rest = node.factors[1:]
        return node.factors[0].value, rest[0] if len(rest) == 1 else Prod(rest)
    return 1.0, node


def _scaled(c: float, rest: JetExpr) -> JetExpr:
    if c == 1.0:
        return rest
    if isinstance(rest, Prod):
        return Prod((Const(c),) + rest.factors)
    return Prod((Const(c), rest))


@singledispatch
def simplify(node: JetExpr) -> JetExpr:
    return node


@simplify.register
def _(node: Sum):
    flat = []
    for t in node.terms:
        s = simplify(t)
        flat.extend(s.terms if isinstance(s, Sum) else (s,))
    constant = 0.0
    buckets: Dict[str, list] = {}
    for t in flat:
        c, rest = _split_coefficient(t)
        if rest is None:
            constant += c
            continue
        key = to_prefix(rest)
        if key in buckets:
            buckets[key][0] += c
        else:
            buckets[key] = [c, rest]
    out = [_scaled(c, rest) for key, (c, rest) in sorted(buckets.items()) if c != 0.0]
    if constant != 0.0:
        out.insert(0, Const(constant))
    if not out:
        return Const(0.0)
    return out[0] if len(out) == 1 else Sum(tuple(out))


@simplify.register
def _(node: Prod):
    flat = []
    for f in node.factors:
        s = simplify(f)
        flat.extend(s.factors if isinstance(s, Prod) else (s,))
    constant = 1.0
    powers: Dict[str, list] = {}
    for f in flat:
        if isinstance(f, Const):
            constant *= f.value
            continue
        base, n = (f.base, f.exponent) if isinstance(f, Pow) else (f, 1)
        key = to_prefix(base)
        if key in powers:
            powers[key][1] += n
        else:
            powers[key] = [base, n]
    if constant == 0.0:
        return Const(0.0)
    out = []
    for key in sorted(powers):
        base, n = powers[key]
        if n == 0:
            continue
        out.append(base if n == 1 else Pow(base, n))
    if not out:
        return Const(constant)
    if constant != 1.0:
        out.insert(0, Const(constant))
    return out[0] if len(out) == 1 else Prod(tuple(out))


@simplify.register
def _(node: Pow):
    base = simplify(node.base)
    n = node.exponent
    if n == 0:
        return Const(1.0)
    if n == 1:
        return base
    if isinstance(base, Const):
        return Const(base.value ** n)
    if isinstance(base, Pow):
        return simplify(Pow(base.base, base.exponent * n))
    return Pow(base, n)


@simplify.register
def _(node: Func):
    arg = simplify(node.arg)
    if isinstance(arg, Const):
        return Const(float(FUNCS[node.name](arg.value)))
    return Func(node.name, arg)


# ─── Evaluation ───────────────────────────────────────────────────────────────

@dataclass
class _Env:
    x: Union[float, np.ndarray]
    u: Sequence
    node: object  # callable GridSpec -> index or slice


@singledispatch
def _eval(node: JetExpr, env: _Env):
    raise TypeError(f"Cannot evaluate {type(node).__name__}")


@_eval.register
def _(node: Const, env):
    return node.value


@_eval.register
def _(node: Coord, env):
    return env.x


@_eval.register
def _(node: JetVar, env):
    if node.order >= len(env.u):
        raise ValueError(
            f"Jet of order {len(env.u) - 1} cannot supply u{node.order}; "
            f"extract a jet of order ≥ {node.order}"
        )
    return env.u[node.order]


@_eval.register
def _(node: Coeff, env):
    return node.samples[env.node(node.grid)]


@_eval.register
def _(node: Sum, env):
    return reduce(lambda a, b: a + b, (_eval(t, env) for t in node.terms))


@_eval.register
def _(node: Prod, env):
    return reduce(lambda a, b: a * b, (_eval(f, env) for f in node.factors))


@_eval.register
def _(node: Pow, env):
    return _eval(node.base, env) ** node.exponent


@_eval.register
def _(node: Func, env):
    return FUNCS[node.name](_eval(node.arg, env))


def evaluate(f: JetExpr, jet: Jet) -> float:
    """Value of f at one jet; coefficient fields are sampled at the jet's base point."""
    if jet.order < max_jet_order(f):
        raise ValueError(
            f"Jet of order {jet.order} cannot supply u{max_jet_order(f)} for {to_prefix(f)}"
        )
    env = _Env(x=jet.base_point, u=jet.values, node=lambda grid: grid.node_index(jet.base_point))
    return float(_eval(f, env))


def evaluate_along(f: JetExpr, phi: Field) -> np.ndarray:
    """x ↦ f(j^k_x φ) at every grid node."""
    if f.grid is not None and f.grid != phi.grid:
        raise ValueError(
            f"Expression coefficients live on n={f.grid.n_points}, field on n={phi.grid.n_points}"
        )
    stack = jets_along(phi, max_jet_order(f))
    env = _Env(x=phi.grid.nodes, u=stack, node=lambda grid: slice(None))
    out = _eval(f, env)
    return np.broadcast_to(np.asarray(out, dtype=float), (phi.grid.n_points,)).copy()


# ─── Prefix notation ──────────────────────────────────────────────────────────

@singledispatch
def to_prefix(node: JetExpr) -> str:
    raise TypeError(f"Cannot print {type(node).__name__}")


@to_prefix.register
def _(node: Const):
    return repr(node.value)


@to_prefix.register
def _(node: Coord):
    return "x"


@to_prefix.register
def _(node: JetVar):
    return f"u{node.order}"


@to_prefix.register
def _(node: Coeff):
    return f"(coef {node.name} {node.deriv})"


@to_prefix.register
def _(node: Sum):
    return "(+ " + " ".join(to_prefix(t) for t in node.terms) + ")"


@to_prefix.register
def _(node: Prod):
    return "(* " + " ".join(to_prefix(f) for f in node.factors) + ")"


@to_prefix.register
def _(node: Pow):
    return f"(^ {to_prefix(node.base)} {node.exponent})"


@to_prefix.register
def _(node: Func):
    return f"({node.name} {to_prefix(node.arg)})"


def parse_prefix(text: str, coefficients: Optional[Mapping[str, Field]] = None) -> JetExpr:
    """Inverse of to_prefix. Coefficient names are resolved through `coefficients`."""
    tokens = _TOKEN_RE.findall(text)
    if not tokens:
        raise ValueError("Empty jet expression")
    registry = dict(coefficients or {})

    def expect_close(pos):
        if pos >= len(tokens) or tokens[pos] != ")":
            raise ValueError(f"Expected ')' at token {pos} in {text!r}")
        return pos + 1

    def parse(pos):
        if pos >= len(tokens):
            raise ValueError(f"Unexpected end of expression {text!r}")
        tok = tokens[pos]
        if tok == ")":
            raise ValueError(f"Unexpected ')' at token {pos} in {text!r}")
        if tok != "(":
            if tok == "x":
                return Coord(), pos + 1
            m = _JETVAR_RE.match(tok)
            if m:
                return JetVar(int(m.group(1))), pos + 1
            try:
                return Const(float(tok)), pos + 1
            except ValueError:
                raise ValueError(f"Unknown token {tok!r} in {text!r}") from None
        op = tokens[pos + 1] if pos + 1 < len(tokens) else ")"
        if op == "coef":
            name, deriv = tokens[pos + 2], int(tokens[pos + 3])
            if name not in registry:
                raise ValueError(f"Coefficient {name!r} not in registry {sorted(registry)}")
            return Coeff(name, registry[name], deriv), expect_close(pos + 4)
        if op == "^":
            base, p = parse(pos + 2)
            return Pow(base, int(tokens[p])), expect_close(p + 1)
        if op in FUNCS:
            arg, p = parse(pos + 2)
            return Func(op, arg), expect_close(p)
        if op in ("+", "*"):
            items, p = [], pos + 2
            while p < len(tokens) and tokens[p] != ")":
                item, p = parse(p)
                items.append(item)
            p = expect_close(p)
            return (Sum if op == "+" else Prod)(tuple(items)), p
        raise ValueError(f"Unknown operator {op!r} in {text!r}")

    expr, end = parse(0)
    if end != len(tokens):
        raise ValueError(f"Trailing tokens after position {end} in {text!r}")
    return expr


# ─── Built-in densities ───────────────────────────────────────────────────────

def standard_coefficients(grid: GridSpec) -> Dict[str, Field]:
    """Smooth, strictly positive weights used throughout the zoo and the identities."""
    x = grid.nodes
    return {
        "f": Field(grid, 1.0 + 0.5 * np.cos(x)),
        "g": Field(grid, 1.0 + 0.3 * np.sin(x)),
        "h": Field(grid, 1.0 + 0.25 * np.cos(2.0 * x)),
    }


def quadratic() -> JetExpr:
    return Pow(JetVar(0), 2)


def quartic_gradient(h: Field, g: Field) -> JetExpr:
    """h u0⁴ + g u1²."""
    return Sum((Prod((Coeff("h", h), Pow(JetVar(0), 4))), Prod((Coeff("g", g), Pow(JetVar(1), 2)))))


def gradient_energy(g: Field) -> JetExpr:
    return Prod((Coeff("g", g), Pow(JetVar(1), 2)))


def sine_density(f: Field) -> JetExpr:
    return Prod((Coeff("f", f), Func("sin", JetVar(0))))


def exponential_density(f: Field) -> JetExpr:
    return Prod((Coeff("f", f), Func("exp", JetVar(0))))


def builtin_lagrangians(grid: GridSpec) -> Dict[str, JetExpr]:
    c = standard_coefficients(grid)
    return {
        "linear": JetVar(0),
        "quadratic": quadratic(),
        "quartic_gradient": quartic_gradient(c["h"], c["g"]),
        "gradient_energy": gradient_energy(c["g"]),
        "sine": sine_density(c["f"]),
        "exponential": exponential_density(c["f"]),
    }


# ─── Random trees ─────────────────────────────────────────────────────────────

def random_jet_expr(rng: np.random.Generator, max_order: int = 2, depth: int = 3,
                    coefficients: Sequence[Coeff] = ()) -> JetExpr:
    """Random tree with jet variables up to u_{max_order}; exp only wraps leaves."""

    def leaf():
        roll = rng.random()
        if coefficients and roll < 0.2:
            return coefficients[int(rng.integers(len(coefficients)))]
        if roll < 0.35:
            return Const(round(float(rng.uniform(-2.0, 2.0)), 3))
        return JetVar(int(rng.integers(0, max_order + 1)))

    def build(level):
        if level == 0 or rng.random() < 0.25:
            return leaf()
        kind = int(rng.integers(4))
        if kind == 0:
            return Sum((build(level - 1), build(level - 1)))
        if kind == 1:
            return Prod((build(level - 1), build(level - 1)))
        if kind == 2:
            return Pow(build(level - 1), int(rng.integers(2, 4)))
        name = ("sin", "cos", "exp")[int(rng.integers(3))]
        return Func(name, leaf() if name == "exp" else build(level - 1))

    return build(depth)


def describe(f: JetExpr) -> str:
    """One-line summary for report headers."""
    return f"{to_prefix(f)} [order {max_jet_order(f)}]"

