"""Charts, multivector fields, differential forms, and the graded calculus
connecting them.

A Chart is an ordered list of coordinate names with a sampling box per name
and an optional integer weight per name (weights drive push_scale).

Tensors store one Expression per strictly increasing index tuple; degree 0
uses the empty tuple.  All graded products reduce to one primitive: merging
two increasing index tuples with the inversion-count sign.

Conventions fixed here and relied on everywhere else:

* wedge on components:  (A, f) . (B, g)  ->  (sign(A,B), A|B, f*g).
* schouten(P, Q) for a p-vector and q-vector is
      T(P,Q) - (-1)^((p-1)(q-1)) T(Q,P),
  where T(P,Q) contracts the right slot-derivative of P with the coordinate
  derivative of Q.  Degree (1,1) gives the usual vector-field commutator,
  [X, f] = X(f), and the bracket obeys the graded Leibniz rule over wedge.
* full_contract pairs a p-vector with a p-form component-by-component
  (determinant convention).
* push_scale(T) rescales every weighted coordinate, substituting
  x -> nu^w(x) * x in coefficients and multiplying each component by
  nu^(-sum of index weights) for multivectors and nu^(+sum) for forms.
  A tensor T "has scaling degree k" when push_scale(T) = nu^k T.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

from . import expr as ex
from .expr import Expression


@dataclass
class Chart:
    names: tuple
    box: dict = field(default_factory=dict)      # name -> (lo, hi)
    weights: dict = field(default_factory=dict)  # name -> int, default 0

    def __post_init__(self):
        self.names = tuple(self.names)
        assert len(set(self.names)) == len(self.names), "duplicate coordinate"
        for n in self.box:
            assert n in self.names, f"box for unknown coordinate '{n}'"
        for n in self.weights:
            assert n in self.names, f"weight for unknown coordinate '{n}'"

    @property
    def dim(self):
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def weight(self, name: str) -> int:
        return self.weights.get(name, 0)

    def sample_box(self, extra: Mapping[str, tuple] = None) -> dict:
        out = {}
        for n in self.names:
            out[n] = self.box.get(n, (-1.0, 1.0))
        if extra:
            out.update(extra)
        return out

    def extend(self, names, box=None, weights=None) -> "Chart":
        nb = dict(self.box)
        nw = dict(self.weights)
        if box:
            nb.update(box)
        if weights:
            nw.update(weights)
        return Chart(self.names + tuple(names), nb, nw)

    def with_weights(self, weights: Mapping[str, int]) -> "Chart":
        return Chart(self.names, dict(self.box), dict(weights))

    def vars(self):
        return {n: ex.var(n) for n in self.names}


def tangent_chart(chart: Chart, suffix: str = "_dot", dot_box=(-1.0, 1.0)) -> Chart:
    """Double the chart with velocity coordinates appended after the base ones."""
    dotted = tuple(n + suffix for n in chart.names)
    for d in dotted:
        assert d not in chart.names, f"name clash: {d}"
    box = {d: dot_box for d in dotted}
    return chart.extend(dotted, box=box)


def _merge_indices(a: tuple, b: tuple):
    """Merge two strictly increasing tuples; (sign, merged) or None on overlap."""
    inversions = 0
    for x in b:
        for y in a:
            if y == x:
                return None
            if y > x:
                inversions += 1
    return (-1) ** inversions, tuple(sorted(a + b))


def _normalize_key(key, chart: Chart):
    """Accept index or name tuples in any order; return (sign, increasing tuple)."""
    idx = tuple(chart.index(k) if isinstance(k, str) else int(k) for k in key)
    assert all(0 <= i < chart.dim for i in idx), key
    assert len(set(idx)) == len(idx), f"repeated index in {key}"
    srt = tuple(sorted(idx))
    # sign of the sorting permutation
    inversions = sum(1 for i in range(len(idx)) for j in range(i + 1, len(idx))
                     if idx[i] > idx[j])
    return (-1) ** inversions, srt


class _Tensor:
    """Shared container behaviour for MultivectorField / DifferentialForm."""

    def __init__(self, chart: Chart, degree: int, comps: Mapping = None):
        # degree may exceed dim: such a tensor is necessarily zero
        assert 0 <= degree
        self.chart = chart
        self.degree = degree
        self.comps = {}
        if comps:
            for key, val in comps.items():
                if not isinstance(key, tuple):
                    key = (key,)
                sign, nk = _normalize_key(key, chart)
                assert len(nk) == degree, f"key {key} has wrong length"
                cur = self.comps.get(nk, ex.ZERO)
                self.comps[nk] = ex.add(cur, ex.mul(ex.num(sign), ex.coerce(val)))
        self._drop_zeros()

    def _drop_zeros(self):
        self.comps = {k: v for k, v in self.comps.items()
                      if not (isinstance(v, ex.Num) and v.value == 0)}

    def component(self, *key) -> Expression:
        if not key and self.degree == 0:
            return self.comps.get((), ex.ZERO)
        sign, nk = _normalize_key(key, self.chart)
        return ex.mul(ex.num(sign), self.comps.get(nk, ex.ZERO))

    def _new(self, comps):
        return type(self)(self.chart, self.degree, comps)

    def __add__(self, other):
        assert type(other) is type(self) and other.chart == self.chart
        assert other.degree == self.degree
        out = dict(self.comps)
        for k, v in other.comps.items():
            out[k] = ex.add(out.get(k, ex.ZERO), v)
        return self._new(out)

    def __sub__(self, other):
        return self + other.scale(-1)

    def scale(self, c):
        c = ex.coerce(c)
        return self._new({k: ex.mul(c, v) for k, v in self.comps.items()})

    def map_coeffs(self, fn):
        return self._new({k: fn(v) for k, v in self.comps.items()})

    def is_structurally_zero(self) -> bool:
        return not self.comps

    def free_vars(self):
        out = set()
        for v in self.comps.values():
            out |= ex.free_vars(v)
        return out

    def key_names(self, key):
        return tuple(self.chart.names[i] for i in key)

    def pretty(self, basis: str) -> str:
        if not self.comps:
            return "0"
        bits = []
        for k in sorted(self.comps):
            names = "^".join(f"{basis}[{n}]" for n in self.key_names(k))
            coeff = ex.to_text(self.comps[k])
            bits.append(f"({coeff}) {names}" if names else coeff)
        return "  +  ".join(bits)


class MultivectorField(_Tensor):
    def __repr__(self):
        return f"MultivectorField(deg {self.degree}: {self.pretty('dd')})"


class DifferentialForm(_Tensor):
    def __repr__(self):
        return f"DifferentialForm(deg {self.degree}: {self.pretty('d')})"


def mvf(chart, degree, comps=None) -> MultivectorField:
    return MultivectorField(chart, degree, comps)


def form(chart, degree, comps=None) -> DifferentialForm:
    return DifferentialForm(chart, degree, comps)


def scalar(chart, e) -> MultivectorField:
    return MultivectorField(chart, 0, {(): ex.coerce(e)})


# ----- graded products -----

def _table_product(t1: dict, t2: dict) -> dict:
    out = {}
    for a, f in t1.items():
        for b, g in t2.items():
            m = _merge_indices(a, b)
            if m is None:
                continue
            sign, key = m
            out[key] = ex.add(out.get(key, ex.ZERO),
                              ex.mul(ex.num(sign), f, g))
    return out


def wedge(A: _Tensor, B: _Tensor) -> _Tensor:
    assert type(A) is type(B) and A.chart == B.chart
    return type(A)(A.chart, A.degree + B.degree, _table_product(A.comps, B.comps))


# ----- Schouten bracket -----

def _right_deriv(comps: dict, k: int, degree: int) -> dict:
    """Right slot-derivative: strip index k with sign (-1)^(degree-1-j)."""
    out = {}
    for key, val in comps.items():
        if k not in key:
            continue
        j = key.index(k)
        nk = key[:j] + key[j + 1:]
        sign = (-1) ** (degree - 1 - j)
        out[nk] = ex.add(out.get(nk, ex.ZERO), ex.mul(ex.num(sign), val))
    return out


def _half_bracket(P: MultivectorField, Q: MultivectorField) -> dict:
    chart = P.chart
    out = {}
    for k, name in enumerate(chart.names):
        dP = _right_deriv(P.comps, k, P.degree)
        if not dP:
            continue
        dQ = {key: ex.differentiate(val, name) for key, val in Q.comps.items()}
        for key, val in _table_product(dP, dQ).items():
            out[key] = ex.add(out.get(key, ex.ZERO), val)
    return out


def schouten(P: MultivectorField, Q: MultivectorField) -> MultivectorField:
    """Schouten bracket of a p-vector and q-vector (degree p+q-1)."""
    assert P.chart == Q.chart
    p, q = P.degree, Q.degree
    if p + q == 0:
        return mvf(P.chart, 0)
    sign = -((-1) ** ((p - 1) * (q - 1)))
    t1 = _half_bracket(P, Q)
    t2 = _half_bracket(Q, P)
    out = dict(t1)
    for k, v in t2.items():
        out[k] = ex.add(out.get(k, ex.ZERO), ex.mul(ex.num(sign), v))
    return mvf(P.chart, p + q - 1, out)


# ----- exterior derivative -----

def de_rham(w: DifferentialForm) -> DifferentialForm:
    chart = w.chart
    out = {}
    for key, val in w.comps.items():
        for k, name in enumerate(chart.names):
            dv = ex.differentiate(val, name)
            if isinstance(dv, ex.Num) and dv.value == 0:
                continue
            m = _merge_indices((k,), key)
            if m is None:
                continue
            sign, nk = m
            out[nk] = ex.add(out.get(nk, ex.ZERO), ex.mul(ex.num(sign), dv))
    return form(chart, w.degree + 1, out)


# ----- complete (tangent) lift -----

def tangent_lift(P: MultivectorField, tchart: Chart = None,
                 suffix: str = "_dot") -> MultivectorField:
    """Complete lift of a p-vector to the doubled chart (base then dotted).

    Acts as the derivation sending f to its fibrewise-linear lift and each
    coordinate direction theta_a to theta_a_dot, plus the terms where exactly
    one slot stays undotted.
    """
    chart = P.chart
    n = chart.dim
    if tchart is None:
        tchart = tangent_chart(chart, suffix)
    assert tchart.names[:n] == chart.names
    out = {}

    def put(key, val):
        out[key] = ex.add(out.get(key, ex.ZERO), val)

    for key, val in P.comps.items():
        dotted = tuple(a + n for a in key)
        lin = []
        for k, name in enumerate(chart.names):
            dv = ex.differentiate(val, name)
            if isinstance(dv, ex.Num) and dv.value == 0:
                continue
            lin.append(ex.mul(ex.var(tchart.names[k + n]), dv))
        if lin:
            put(dotted, ex.add(*lin))
        for j, a in enumerate(key):
            rest = tuple(b + n for i, b in enumerate(key) if i != j)
            nk = (a,) + rest  # base index first: already increasing
            put(nk, ex.mul(ex.num((-1) ** j), val))
    return mvf(tchart, P.degree, out)


# ----- smooth maps, pullback, pushforward -----

@dataclass
class SmoothMap:
    src: Chart
    dst: Chart
    comps: dict  # dst name -> Expression in src coordinates

    def __post_init__(self):
        assert set(self.comps) == set(self.dst.names), "need every target coordinate"
        self.comps = {k: ex.coerce(v) for k, v in self.comps.items()}
        src_names = set(self.src.names)
        for k, v in self.comps.items():
            extra = ex.free_vars(v) - src_names
            assert not extra, f"component {k} uses unknown names {sorted(extra)}"

    def __call__(self, name: str) -> Expression:
        return self.comps[name]

    def apply(self, e) -> Expression:
        """Pull a target-chart function back along the map (compose)."""
        return ex.substitute(ex.coerce(e), self.comps)

    def then(self, other: "SmoothMap") -> "SmoothMap":
        assert self.dst.names == other.src.names
        return SmoothMap(self.src, other.dst,
                         {k: ex.substitute(v, self.comps)
                          for k, v in other.comps.items()})


def identity_map(chart: Chart) -> SmoothMap:
    return SmoothMap(chart, chart, {n: ex.var(n) for n in chart.names})


def pullback(w: DifferentialForm, smap: SmoothMap) -> DifferentialForm:
    """Pull a form on the target chart back to the source chart."""
    assert w.chart.names == smap.dst.names
    src = smap.src
    out = {}
    for key, val in w.comps.items():
        table = {(): smap.apply(val)}
        for a in key:
            dphi = {}
            for b, uname in enumerate(src.names):
                dv = ex.differentiate(smap.comps[w.chart.names[a]], uname)
                if isinstance(dv, ex.Num) and dv.value == 0:
                    continue
                dphi[(b,)] = dv
            table = _table_product(table, dphi)
        for k, v in table.items():
            out[k] = ex.add(out.get(k, ex.ZERO), v)
    return form(src, w.degree, out)


def pushforward(P: MultivectorField, fwd: SmoothMap, inv: SmoothMap) -> MultivectorField:
    """Push a multivector through a diffeomorphism given with its inverse."""
    assert P.chart.names == fwd.src.names
    assert fwd.dst.names == inv.src.names and inv.dst.names == fwd.src.names
    dst = fwd.dst
    out = {}
    for key, val in P.comps.items():
        table = {(): val}
        for a in key:
            jac = {}
            for b, yname in enumerate(dst.names):
                dv = ex.differentiate(fwd.comps[yname], P.chart.names[a])
                if isinstance(dv, ex.Num) and dv.value == 0:
                    continue
                jac[(b,)] = dv
            table = _table_product(table, jac)
        for k, v in table.items():
            out[k] = ex.add(out.get(k, ex.ZERO), inv.apply(v))
    return mvf(dst, P.degree, out)


# ----- scaling action -----

def push_scale(T: _Tensor, nu: str = "nu") -> _Tensor:
    """Transport T along the weighted scaling x -> nu^w(x) x.

    The result lives on the chart extended by the scale parameter.  Each
    coefficient gets the coordinate substitution; each component picks up
    nu^(-sum of its index weights) for multivectors, nu^(+sum) for forms.
    """
    chart = T.chart
    assert nu not in chart.names, f"scale parameter '{nu}' clashes with a coordinate"
    bigchart = chart.extend((nu,), box={nu: (0.5, 2.0)})
    nu_v = ex.var(nu)
    subs = {n: ex.mul(ex.pow_(nu_v, w), ex.var(n))
            for n, w in chart.weights.items() if w != 0}
    sgn = 1 if isinstance(T, DifferentialForm) else -1
    out = {}
    for key, val in T.comps.items():
        wsum = sum(chart.weight(chart.names[i]) for i in key)
        out[key] = ex.mul(ex.pow_(nu_v, sgn * wsum), ex.substitute(val, subs))
    return type(T)(bigchart, T.degree, out)


def has_scaling_degree(T: _Tensor, k: int, nu: str = "nu", *,
                       tol: float = ex.DEFAULT_TOL, trials: int = ex.DEFAULT_TRIALS,
                       seed: int = ex.DEFAULT_SEED) -> bool:
    """Check push_scale(T) == nu^k T numerically over the chart box."""
    ps = push_scale(T, nu)
    box = ps.chart.sample_box()
    nu_k = ex.pow_(ex.var(nu), k)
    keys = set(ps.comps) | set(T.comps)
    for key in keys:
        delta = ex.sub(ps.comps.get(key, ex.ZERO),
                       ex.mul(nu_k, T.comps.get(key, ex.ZERO)))
        if not ex.is_zero(delta, box, tol=tol, trials=trials, seed=seed):
            return False
    return True


# ----- contractions and Lie derivatives -----

def vector_apply(X: MultivectorField, f) -> Expression:
    assert X.degree == 1
    f = ex.coerce(f)
    parts = [ex.mul(val, ex.differentiate(f, X.chart.names[key[0]]))
             for key, val in X.comps.items()]
    return ex.add(*parts) if parts else ex.ZERO


def sharp(B: MultivectorField, alpha: DifferentialForm) -> MultivectorField:
    """B#(alpha) = B(alpha, .) for a bivector and a 1-form."""
    assert B.degree == 2 and alpha.degree == 1 and B.chart == alpha.chart
    out = {}

    def put(i, v):
        out[(i,)] = ex.add(out.get((i,), ex.ZERO), v)

    for (i, j), val in B.comps.items():
        put(j, ex.mul(alpha.comps.get((i,), ex.ZERO), val))
        put(i, ex.neg(ex.mul(alpha.comps.get((j,), ex.ZERO), val)))
    return mvf(B.chart, 1, out)


def interior(X: MultivectorField, w: DifferentialForm) -> DifferentialForm:
    """Left interior product of a vector field with a p-form."""
    assert X.degree == 1 and X.chart == w.chart
    if w.degree == 0:
        return form(w.chart, 0)
    out = {}
    for key, val in w.comps.items():
        for j, a in enumerate(key):
            xa = X.comps.get((a,))
            if xa is None:
                continue
            nk = key[:j] + key[j + 1:]
            contrib = ex.mul(ex.num((-1) ** j), xa, val)
            out[nk] = ex.add(out.get(nk, ex.ZERO), contrib)
    return form(w.chart, w.degree - 1, out)


def lie_derivative(X: MultivectorField, w: DifferentialForm) -> DifferentialForm:
    """Cartan formula on forms."""
    return interior(X, de_rham(w)) + de_rham(interior(X, w))


def full_contract(P: MultivectorField, w: DifferentialForm) -> Expression:
    """Pair a p-vector with a p-form, component by component."""
    assert P.degree == w.degree and P.chart == w.chart
    parts = [ex.mul(val, w.comps[key]) for key, val in P.comps.items()
             if key in w.comps]
    return ex.add(*parts) if parts else ex.ZERO


def is_zero_tensor(T: _Tensor, extra_box: Mapping[str, tuple] = None, *,
                   tol: float = ex.DEFAULT_TOL, trials: int = ex.DEFAULT_TRIALS,
                   seed: int = ex.DEFAULT_SEED) -> bool:
    box = T.chart.sample_box(extra_box)
    return all(ex.is_zero(v, box, tol=tol, trials=trials, seed=seed)
               for v in T.comps.values())


def max_abs_tensor(T: _Tensor, extra_box: Mapping[str, tuple] = None, *,
                   trials: int = ex.DEFAULT_TRIALS, seed: int = ex.DEFAULT_SEED):
    """(max |component|, key, witness point) over Halton samples."""
    box = T.chart.sample_box(extra_box)
    best, bkey, bpt = 0.0, None, None
    for key, val in T.comps.items():
        m, pt = ex.max_abs(val, box, trials=trials, seed=seed)
        if m > best or bkey is None:
            best, bkey, bpt = m, key, pt
    return best, bkey, bpt
