"""Registry of validation experiments and the suite runner.

Each experiment records Monte Carlo estimates (judged by |z| <= z_max) and
deterministic residuals (judged against a tolerance); it passes when every
entry passes.  Random streams are keyed by the experiment's registry index,
so selecting a subset of experiments does not change their numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .base_space import Box, Bump, HermiteProfile, LieElement, LogArg, QuadratureRule, SeparableTerm, SmoothFunction, separable
from .calculus import (
    CylinderFunction,
    ExpLinear,
    SinProduct,
    commutator_residual,
    dir_derivative,
    dirichlet_integrand,
    dirichlet_operator_apply,
    divergence_cyl,
    flow_derivative,
    ibp_integrand,
    ibp_residual,
    lie_bracket,
    log_derivative_B,
    vector_field_inner,
    base_dirichlet_apply,
    base_tangent_inner,
)
from .chaos_fock import (
    charlier,
    charlier_all,
    charlier_gradient_kernel,
    charlier_recursion,
    cyl_gradient_kernel,
    cyl_gradient_kernel_H,
    l2_inner,
    mp_directional,
    poisson_exponential,
    second_quant_integrand,
    sigma_moments,
)
from .config import ExperimentConfig
from .configuration import ConfigBatch, from_compound, sample_batch, to_compound
from .errors import ConfigError, MpcsError
from .fixtures import (
    Frame,
    base_functions,
    bounded_cylinders,
    chaos_functions,
    ergodic_function,
    group_elements,
    lie_elements,
    nonpositive_function,
    polynomial_cylinders,
    second_functions,
    semigroup_functions,
)
from .group_action import GroupElement, act_config, rn_config, rn_point, unitary_rep
from .levy_model import base_ibp_residual
from .montecarlo import RngSpec, collect, finite_rows, summarize, z_score
from .semigroup import SpectralBaseOperator, ergodicity_probe

ZERO_TOL = 1e-12
COV_ORDER = 48  # Gauss-Legendre order per piece for integrals of moved functions


# ---------------------------------------------------------------------------
# bookkeeping


@dataclass
class Outcome:
    name: str
    anchor: str
    estimates: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return (self.error is None and all(e["pass"] for e in self.estimates)
                and all(r["pass"] for r in self.residuals))

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "anchor": self.anchor,
            "estimates": self.estimates,
            "residuals": self.residuals,
            "verdict": "pass" if self.passed else "fail",
        }
        if self.error is not None:
            d["error"] = self.error
        return d


class Context:
    """Shared objects for one experiment run."""

    def __init__(self, cfg: ExperimentConfig, index: int, outcome: Outcome):
        self.cfg = cfg
        self.index = index
        self.out = outcome
        self.model = cfg.build_model()
        self.window = cfg.window_box()
        if self.window.dim != 1:
            raise ConfigError("the experiment fixtures are one-dimensional; use a 1-d model and window")
        self.frame = Frame(self.window.lo[0], self.window.hi[0])
        self.mixing = cfg.mixing_law()
        self.n = cfg.n
        self.h0 = cfg.flow_step
        self.z_max = cfg.z_max
        self.order = cfg.quad_order

    def rng(self, k: int) -> RngSpec:
        return RngSpec(self.cfg.seed, 100 * (self.index + 1) + k)

    def sampler(self, mixed: bool | None = None, model=None, window: Box | None = None) -> Callable:
        mixed = self.cfg.measure == "mixed" if mixed is None else mixed
        mix = self.mixing if mixed else None
        model = model or self.model
        window = window or self.window
        return lambda g, m: sample_batch(model, window, g, m, mix)

    def configs(self, k: int, m: int, mixed: bool = True, model=None, window: Box | None = None) -> ConfigBatch:
        """A small deterministic batch for pointwise checks."""
        return self.sampler(mixed, model, window)(self.rng(k).generator(0), m)

    # recording -------------------------------------------------------------
    def record(self, label: str, mean: float, stderr: float, target: float | None) -> None:
        if target is None:
            z, ok = None, True
        else:
            z = z_score(mean, stderr, target)
            ok = bool(abs(z) <= self.z_max)
            target = float(target)
        self.out.estimates.append({"label": label, "mean": float(mean), "stderr": float(stderr),
                                   "target": target, "z": None if z is None else float(z), "pass": ok})

    def columns(self, k: int, labels, targets, functional: Callable, sampler: Callable | None = None,
                n: int | None = None) -> np.ndarray:
        """Estimate every column of ``functional`` (batch -> (m, K)) in one sampling pass."""
        f = lambda b: np.asarray(functional(b), dtype=float).reshape(b.m, -1)
        vals, skipped = finite_rows(collect(sampler or self.sampler(), f, n or self.n, self.rng(k),
                                            self.cfg.workers))
        for j, (lab, tgt) in enumerate(zip(labels, targets)):
            e = summarize(vals[:, j], tgt, self.z_max, skipped)
            self.record(lab, e.mean, e.stderr, tgt)
        return vals

    def check(self, label: str, value: float, tol: float, bound: str = "upper") -> None:
        value = float(value)
        ok = value <= tol if bound == "upper" else value >= tol
        self.out.residuals.append({"label": label, "value": value, "tolerance": float(tol),
                                   "bound": bound, "pass": bool(ok and math.isfinite(value))})


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _cov_rule(window: Box, s_range, order: int, pieces: int = 4) -> QuadratureRule:
    """Rule over the window with extra splits, for integrands moved by a group element."""
    xb = np.linspace(window.lo[0], window.hi[0], pieces + 1)[1:-1]
    sb = np.geomspace(s_range[0], s_range[1], pieces + 1)[1:-1]
    return QuadratureRule.build(window, s_range, order, [list(xb)], list(sb), log_marks=True)


def _wide_marks(f: SmoothFunction, g: GroupElement, window: Box) -> tuple:
    """Mark range holding the support of f o g: f's range widened by the extremes of theta."""
    xs = np.linspace(window.lo[0], window.hi[0], 2001)[:, None]
    spread = 1.05 * math.exp(float(np.max(np.abs(g.log_theta(xs)))))
    return f.s_range[0] / spread, f.s_range[1] * spread


# ---------------------------------------------------------------------------
# experiments


def _laplace(ctx: Context):
    fr, model = ctx.frame, ctx.model
    phis = [nonpositive_function(fr), -base_functions(fr)[1], -base_functions(fr)[4]]
    L = [model.integrate(lambda x, s, p=p: np.expm1(p(x, s)), QuadratureRule.for_functions([p], ctx.order))
         for p in phis]
    functional = lambda b: np.stack([np.exp(b.pair(p.value)) for p in phis], axis=1)
    ctx.columns(0, [f"poisson phi{j}" for j in range(3)], [math.exp(v) for v in L], functional,
                ctx.sampler(False))
    mix = ctx.mixing
    targets = [sum(w * math.exp(z * v) for z, w in zip(mix.z, mix.w)) for v in L]
    ctx.columns(1, [f"mixed phi{j}" for j in range(3)], targets, functional, ctx.sampler(True))


def _cov_residual(g: GroupElement, f: SmoothFunction, ctx: Context) -> float:
    rule = _cov_rule(ctx.window, _wide_marks(f, g, ctx.window), COV_ORDER)
    lhs = ctx.model.integrate(lambda x, s: f(*g.act(x, s)), rule)
    rhs = ctx.model.integrate(lambda x, s: f(x, s) * rn_point(g, ctx.model, x, s), rule)
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


def _quasiinv(ctx: Context):
    fr, model = ctx.frame, ctx.model
    Fs = bounded_cylinders(fr)
    f = base_functions(fr)[0]
    for j, (name, g) in enumerate(group_elements(fr, ctx.h0)):
        F = Fs[j]
        diff = lambda b, F=F, g=g: F(act_config(g, b)) - F(b) * rn_config(g, model, b)
        ctx.columns(j, [f"{name}: F(g w) - F(w) R_g(w)"], [0.0], diff)
        ctx.check(f"{name}: change of variables for sigma", _cov_residual(g, f, ctx), ctx.cfg.tol("rn_oracle"))


def _image_measure(ctx: Context):
    fr, model = ctx.frame, ctx.model
    phi = nonpositive_function(fr)
    f = base_functions(fr)[3]
    gs = group_elements(fr, ctx.h0)
    for j, (name, g) in enumerate([gs[1], gs[2]]):
        rule = _cov_rule(ctx.window, _wide_marks(phi, g, ctx.window), COV_ORDER)
        lap = model.integrate(lambda x, s: np.expm1(phi(*g.act(x, s))), rule)
        rule_f = _cov_rule(ctx.window, _wide_marks(f, g, ctx.window), COV_ORDER)
        mean = model.integrate(lambda x, s: f(*g.act(x, s)), rule_f)

        def functional(b, g=g):
            moved = act_config(g, b)
            return np.stack([np.exp(moved.pair(phi.value)), moved.pair(f.value)], axis=1)

        ctx.columns(j, [f"{name}: Laplace functional of g w", f"{name}: mean of <f, g w>"],
                    [math.exp(lap), mean], functional)


def _compound(ctx: Context):
    fr, model = ctx.frame, ctx.model
    name, g = group_elements(fr, ctx.h0)[2]
    u = lambda x: Bump(fr(0.1), fr(0.9)).value(np.asarray(x)[:, 0])
    Phi = lambda b: np.sin(1.3 * b.pair(lambda x, s: s * u(x)) + 0.4)
    ctx.columns(0, [f"{name}: Phi(I g w) - Phi(I w) rho_g(I w)"], [0.0],
                lambda b: Phi(act_config(g, b)) - Phi(b) * rn_config(g, model, b))
    batch = ctx.configs(1, 200)
    cs = batch.configs()
    mismatches = sum(from_compound(to_compound(c)) != c for c in cs)
    ctx.check("compound round trip mismatches", mismatches, 0)
    pair_err = max(abs(to_compound(c).integrate(u) - float(np.sum(c.s * u(c.x)))) if len(c) else 0.0 for c in cs)
    ctx.check("compound pairing", pair_err, ZERO_TOL)


def _base_ibp(ctx: Context):
    fr, model = ctx.frame, ctx.model
    es, ps, qs = lie_elements(fr), base_functions(fr), second_functions(fr)
    tol = ctx.cfg.tol("base_ibp")
    for i in range(10):
        le, p1, p2 = es[i % 5], ps[i % 5], qs[(i + i // 5) % 5]
        rule = QuadratureRule.for_functions([p1, p2], ctx.order, intersect=True)
        r = abs(base_ibp_residual(le, p1, p2, model, rule))
        ctx.check(f"{le.name} with pair {i}", r, tol)
    # negative control: integrate against a tilted density
    lo, L = fr.lo, fr.L
    tilted = lambda x, s: model.q(x, s) * np.exp(0.5 * (np.asarray(x)[:, 0] - lo) / L)
    rule = QuadratureRule.for_functions([ps[0], qs[0]], ctx.order, intersect=True)
    r = abs(base_ibp_residual(es[0], ps[0], qs[0], model, rule, density=tilted))
    ctx.check("negative control (perturbed density)", r, ctx.cfg.tol("negative_control"), "lower")


def _ibp_common(ctx: Context, mixed: bool):
    fr, model = ctx.frame, ctx.model
    Fs, es = bounded_cylinders(fr), lie_elements(fr)
    Gs = Fs[1:] + Fs[:1]
    trip = list(zip(Fs, Gs, es))
    functional = lambda b: np.stack([ibp_integrand(F, G, e, model, b) for F, G, e in trip], axis=1)
    ctx.columns(0, [f"F{j} G{(j + 1) % 5} along {e.name}" for j, (_, _, e) in enumerate(trip)],
                [0.0] * len(trip), functional, ctx.sampler(mixed))
    r = ibp_residual(Fs[0], Gs[0], LieElement.zero(1), model, ctx.sampler(mixed), ctx.n, ctx.rng(1))
    ctx.check("zero element", abs(r.mean), ZERO_TOL)


def _ibp(ctx: Context):
    _ibp_common(ctx, False)


def _ibp_mixed(ctx: Context):
    _ibp_common(ctx, True)


def _divergence(ctx: Context):
    fr, model = ctx.frame, ctx.model
    Fs, Gs, es = bounded_cylinders(fr), polynomial_cylinders(fr), lie_elements(fr)
    fields = [[(Fs[(k + 1) % 5], es[k]), (Gs[k], es[(k + 2) % 5])] for k in range(5)]

    def functional(b):
        cols = []
        for k, V in enumerate(fields):
            F = Fs[k]
            cols.append(vector_field_inner(V, F, b) + F(b) * divergence_cyl(V, model, b))
        return np.stack(cols, axis=1)

    ctx.columns(0, [f"field {k} against F{k}" for k in range(5)], [0.0] * 5, functional)
    batch = ctx.configs(1, 500)
    one = CylinderFunction.constant(base_functions(fr)[0])
    err = max(_rel(divergence_cyl([(one, e)], model, batch), log_derivative_B(e, model, batch)) for e in es)
    ctx.check("divergence of lifted constant field equals B", err, ZERO_TOL)


def _dirichlet(ctx: Context):
    fr, model = ctx.frame, ctx.model
    B, P = bounded_cylinders(fr), polynomial_cylinders(fr)
    pairs = [(B[0], B[1]), (B[2], B[3]), (B[4], B[0]), (B[1], P[2]), (P[0], P[4])]

    def functional(b):
        cols = []
        for F, G in pairs:
            HG = dirichlet_operator_apply(model, G, b)
            HF = dirichlet_operator_apply(model, F, b)
            fg = F(b) * HG
            cols += [fg - dirichlet_integrand(F, G, b), G(b) * HF - fg]
        return np.stack(cols, axis=1)

    labels = []
    for k in range(len(pairs)):
        labels += [f"pair {k}: F HG - <grad F, grad G>", f"pair {k}: G HF - F HG"]
    ctx.columns(0, labels, [0.0] * len(labels), functional)


def _lie(ctx: Context):
    fr, model = ctx.frame, ctx.model
    es, ps, Fs = lie_elements(fr), base_functions(fr), bounded_cylinders(fr)
    batch = ctx.configs(0, 20)
    # directional derivative against the flow: 20 configurations x 5 (F, e) pairs
    worst = 0.0
    for k in range(5):
        F, e = Fs[k], es[(k + 2) % 5]
        worst = max(worst, _rel(flow_derivative(F, e, batch, h0=ctx.h0), dir_derivative(e, F, batch)))
    ctx.check("directional derivative vs flow difference quotient", worst, ctx.cfg.tol("derivative"))
    pairs = [(0, 1), (0, 2), (1, 4), (2, 3), (3, 4)]
    tol_lie, tol_com = ctx.cfg.tol("lie"), ctx.cfg.tol("commutator")
    for k, (i, j) in enumerate(pairs):
        e1, e2 = es[i], es[j]
        lin = CylinderFunction.linear(ps[k])
        nested = (flow_derivative(lambda b: dir_derivative(e2, lin, b), e1, batch, h0=ctx.h0)
                  - flow_derivative(lambda b: dir_derivative(e1, lin, b), e2, batch, h0=ctx.h0))
        br = dir_derivative(lie_bracket(e1, e2), lin, batch)
        ctx.check(f"bracket [{e1.name},{e2.name}] vs nested derivatives", _rel(nested, br), tol_lie)
        err, scale = commutator_residual(e1, e2, model, Fs[k], batch)
        ctx.check(f"commutator [R({e1.name}),R({e2.name})]", err / scale, tol_com)


def _unitary(ctx: Context):
    fr, model = ctx.frame, ctx.model
    F = bounded_cylinders(fr)[0]
    gs = group_elements(fr, ctx.h0)
    for j, (name, g) in enumerate([gs[0], gs[2]]):
        ginv = g.inverse()

        def functional(b, g=g, ginv=ginv):
            Vf = unitary_rep(g, model, F, b)
            return np.stack([Vf**2 - F(b) ** 2, rn_config(ginv, model, b)], axis=1)

        ctx.columns(j, [f"{name}: |V(g)F|^2 - |F|^2", f"{name}: |V(g)1|^2"], [0.0, 1.0], functional)
    g1, g2 = gs[0][1], gs[1][1]
    batch = ctx.configs(5, 30)
    lhs = unitary_rep(g1, model, lambda w: unitary_rep(g2, model, F, w), batch)
    rhs = unitary_rep(g2 * g1, model, F, batch)
    ctx.check("V(g1) V(g2) = V(g2 g1)", float(np.max(np.abs(lhs - rhs))), ctx.cfg.tol("unitary_composition"))


def _chaos_orth(ctx: Context):
    fr, model = ctx.frame, ctx.model
    phi, psi = chaos_functions(fr)
    rule = lambda *f: QuadratureRule.for_functions(list(f), ctx.order)
    mphi, mpsi = sigma_moments(phi, model, rule(phi), 2), sigma_moments(psi, model, rule(psi), 2)
    ip = l2_inner(phi, psi, model, rule(phi, psi))
    nn = l2_inner(phi, phi, model, rule(phi))
    K = 4
    labels, targets, idx = [], [], []
    for n in range(K + 1):
        for m in range(K + 1):
            if n + m == 0:
                continue
            labels.append(f"E[Q{n}(phi) Q{m}(psi)]")
            targets.append(math.factorial(n) * ip**n if n == m else 0.0)
            idx.append(("ab", n, m))
    for n in range(1, K + 1):
        for m in range(n, K + 1):
            labels.append(f"E[Q{n}(phi) Q{m}(phi)]")
            targets.append(math.factorial(n) * nn**n if n == m else 0.0)
            idx.append(("aa", n, m))

    def functional(b):
        Qa = charlier_all(phi, model, b, K=K, moments=mphi).Q
        Qb = charlier_all(psi, model, b, K=K, moments=mpsi).Q
        return np.stack([Qa[n] * (Qb[m] if kind == "ab" else Qa[m]) for kind, n, m in idx], axis=1)

    ctx.columns(0, labels, targets, functional)
    batch = ctx.configs(1, 200)
    err = 0.0
    for n in range(7):
        direct = charlier(n, phi, model, batch, K=8, moments=mphi)
        err = max(err, _rel(charlier_recursion(n, phi, model, batch, rule(phi)), direct))
    ctx.check("explicit vs recursive Charlier, n <= 6", err, ctx.cfg.tol("charlier"))
    t, Kg = 0.2, 12
    Q = charlier_all(phi, model, batch, K=Kg, moments=mphi).Q
    series = sum(t**n / math.factorial(n) * Q[n] for n in range(Kg + 1))
    exact = poisson_exponential(phi * t, model, batch, moments=mphi * np.array([1.0, t, t * t]))
    ctx.check("generating function", _rel(series, exact), ctx.cfg.tol("charlier"))


def _annihilation(ctx: Context):
    fr, model = ctx.frame, ctx.model
    ps = base_functions(fr)
    phi, psi = ps[1], ps[0]
    rule = QuadratureRule.for_functions([phi, psi], ctx.order)
    mom = sigma_moments(psi, model, rule, 2)
    ip = l2_inner(phi, psi, model, rule)
    batch = ctx.configs(0, 20)
    worst = 0.0
    for n in range(1, 5):
        kern = lambda b, x, s, n=n: charlier_gradient_kernel(n, psi, b, x, s, mom[1], K=n)
        lhs = mp_directional(phi, kern, model, batch, rule)
        rhs = n * ip * charlier(n - 1, psi, model, batch, moments=mom)
        worst = max(worst, _rel(lhs, rhs))
    ctx.check("(grad Q_n(psi), phi) = n (phi, psi) Q_{n-1}(psi), n <= 4", worst, ctx.cfg.tol("annihilation"))


def _number_op(ctx: Context):
    fr, model = ctx.frame, ctx.model
    phi = base_functions(fr)[0]
    nn = l2_inner(phi, phi, model, QuadratureRule.for_functions([phi], ctx.order))
    m1 = sigma_moments(phi, model, QuadratureRule.for_functions([phi], ctx.order), 1)[1]
    rule = QuadratureRule.for_functions([phi], 16)

    def functional(b):
        cols = []
        for n in (1, 2, 3):
            k = lambda bb, x, s, n=n: charlier_gradient_kernel(n, phi, bb, x, s, m1, K=n)
            cols.append(second_quant_integrand("identity", k, k, model, rule, b))
        return np.stack(cols, axis=1)

    ctx.columns(0, [f"E|grad Q{n}|^2" for n in (1, 2, 3)],
                [n * math.factorial(n) * nn**n for n in (1, 2, 3)], functional)


def _second_quant(ctx: Context):
    fr, model = ctx.frame, ctx.model
    P = polynomial_cylinders(fr)
    pairs = [(P[0], P[2]), (P[2], P[4]), (P[4], P[0])]
    rules = [QuadratureRule.for_functions(list(F.phis) + list(G.phis), 24) for F, G in pairs]

    def functional(b):
        cols = []
        for (F, G), rule in zip(pairs, rules):
            kF = lambda bb, x, s, F=F: cyl_gradient_kernel(F, bb, x, s)
            kG = lambda bb, x, s, G=G: cyl_gradient_kernel_H(G, model, bb, x, s)
            cols.append(second_quant_integrand("base_dirichlet", kF, kG, model, rule, b)
                        - dirichlet_integrand(F, G, b))
        return np.stack(cols, axis=1)

    ctx.columns(0, [f"pair {k}: (grad F, H grad G) - <grad F, grad G>" for k in range(len(pairs))],
                [0.0] * len(pairs), functional)


def _semigroup(ctx: Context):
    sg = ctx.cfg.semigroup
    op = SpectralBaseOperator(sg.Nx, sg.Nu, total_mass=1.0)
    model = op.model
    win = Box([-10.0], [10.0])
    pts = ctx.configs(0, 400, mixed=False, model=model, window=win)
    x, s = pts.x, pts.s
    worst = 0.0
    for n in range(7):
        for m in range(7 - n):
            f = SmoothFunction([SeparableTerm(1.0, (HermiteProfile(n),), LogArg(HermiteProfile(m)))])
            worst = max(worst, _rel(base_dirichlet_apply(model, f, x, s), (n + m) * f(x, s)))
    ctx.check("H He_n He_m = (n + m) He_n He_m, n + m <= 6", worst, ctx.cfg.tol("eigen"))
    phis = semigroup_functions()
    batch = ctx.configs(1, 30, mixed=True, model=model, window=Box([-4.0], [4.0]))
    comp = cons = gen = spectral = 0.0
    for phi in phis:
        sp = op.project(phi)
        a = sp.heat(0.3).heat(0.7)
        b = sp.heat(1.0)
        comp = max(comp, _rel(a(x, s), b(x, s)))
        cons = max(cons, abs(op.conservation_defect(1.0, phi)))
        gen = max(gen, float(np.max(op.generator_residual(phi, batch))))
        spectral = max(spectral, _rel(sp.H(x, s), base_dirichlet_apply(model, phi, x, s)))
    ctx.check("T(0.3) T(0.7) = T(1)", comp, ctx.cfg.tol("composition"))
    ctx.check("conservativity of the heat semigroup", cons, ctx.cfg.tol("conservation"))
    ctx.check("generator of the lifted semigroup", gen, ctx.cfg.tol("generator"))
    ctx.check("spectral vs direct base operator", spectral, ctx.cfg.tol("exp_functional"))
    phi = phis[0]
    sp = op.project(phi)
    target = math.exp(op.integrate(phi))
    functional = lambda b: np.stack([op.lifted_semigroup(t, sp, b) for t in (0.0, 1.0)], axis=1)
    ctx.columns(2, ["E[T(0) F]", "E[T(1) F]"], [target, target], functional,
                ctx.sampler(False, model, win))


def _exp_identity(model, F: CylinderFunction, phi, batch: ConfigBatch, H: Callable) -> float:
    lhs = dirichlet_operator_apply(model, F, batch)
    rhs = batch.pair(lambda x, s: H(x, s) - base_tangent_inner(phi, phi, x, s)) * F(batch)
    return _rel(lhs, rhs)


def _exp_functional(ctx: Context):
    fr, model = ctx.frame, ctx.model
    tol = ctx.cfg.tol("exp_functional")
    batch = ctx.configs(0, 200)
    worst = 0.0
    for phi in base_functions(fr):
        F = CylinderFunction([phi], ExpLinear((1.0,)))
        worst = max(worst, _exp_identity(model, F, phi, batch,
                                         lambda x, s, phi=phi: base_dirichlet_apply(model, phi, x, s)))
    ctx.check("H exp<phi, w> = <H phi - |grad phi|^2, w> exp<phi, w>", worst, tol)
    sg = ctx.cfg.semigroup
    op = SpectralBaseOperator(sg.Nx, sg.Nu, total_mass=1.0)
    batch = ctx.configs(1, 50, mixed=True, model=op.model, window=Box([-4.0], [4.0]))
    worst = 0.0
    for phi in semigroup_functions():
        F = CylinderFunction([phi], ExpLinear((1.0,)))
        worst = max(worst, _exp_identity(op.model, F, phi, batch, op.project(phi).H))
    ctx.check("same identity with the spectral base operator", worst, tol)


def _ergodic_variance(op: SpectralBaseOperator, sp, t: float, zs, ws) -> float:
    pt = sp.heat(t)
    i0 = op.integrate(sp)
    i1 = op.integrate(pt)
    i2 = op.integrate(lambda x, s: pt(x, s) ** 2)
    corr = i1 - i0
    m1 = sum(w * math.exp(z * i1 - corr) for z, w in zip(zs, ws))
    m2 = sum(w * math.exp(z * (2 * i1 + i2) - 2 * corr) for z, w in zip(zs, ws))
    return m2 - m1 * m1


def _ergodicity(ctx: Context):
    sg = ctx.cfg.semigroup
    op = SpectralBaseOperator(sg.ergodic_Nx, 2, total_mass=sg.ergodic_mass)
    sp = op.project(ergodic_function(sg.ergodic_delta, sg.ergodic_offset))
    grid = list(sg.ergodic_t_grid)
    win = Box([-10.0], [10.0])
    res = {}
    for k, (label, mix) in enumerate([("pure", None), ("mixture", ctx.mixing)]):
        est = ergodicity_probe(op, sp, grid, ctx.n, ctx.rng(k), mix, win, ctx.cfg.workers)
        zs, ws = (1.0,), (1.0,)
        if mix is not None:
            zs, ws = mix.z, mix.w
        for t, e in zip(grid, est):
            ctx.record(f"{label}: Var T({t:g})F", e.mean, e.stderr, _ergodic_variance(op, sp, t, zs, ws))
        res[label] = dict(zip(grid, est))
    ratio = res["pure"][5.0].mean / res["pure"][0.0].mean
    ctx.check("pure: Var T(5)F / Var F", ratio, ctx.cfg.tol("ergodic_decay"))
    floor = res["mixture"][5.0].mean / res["pure"][5.0].mean
    ctx.check("mixture: Var T(5)F over the pure value", floor, ctx.cfg.tol("ergodic_floor"), "lower")


def _kernel(ctx: Context):
    fr, model = ctx.frame, ctx.model
    lam = Box([fr(0.25)], [fr(0.75)])
    phi = separable(0.9, [fr.bump(0.3, 0.7)], Bump(0.2, 3.0))
    F = CylinderFunction([phi], SinProduct((1.5,), 0.2))
    strata = (0, 1, 2, 3)

    def outer(b):
        cnt = b.reduce(lam.contains(b.x).astype(float)) if len(b.s) else np.zeros(b.m)
        f = F(b)
        cols = []
        for n in strata:
            ind = (cnt == n).astype(float)
            cols += [ind * f, ind]
        return np.stack(cols, axis=1)

    vals, _ = finite_rows(collect(ctx.sampler(True), outer, ctx.n, ctx.rng(0), ctx.cfg.workers))
    for j, n in enumerate(strata):
        if n == 0:
            inner_mean, inner_se = float(F(ConfigBatch(np.zeros((0, 1)), np.zeros(0), np.zeros(0, np.int64), 1))[0]), 0.0
        else:
            def sampler(g, m, n=n):
                x, s = model.sample_points(lam, g, m * n)
                return ConfigBatch(x, s, np.repeat(np.arange(m, dtype=np.int64), n), m)

            e = summarize(collect(sampler, F, ctx.cfg.n_inner, ctx.rng(1 + n), ctx.cfg.workers))
            inner_mean, inner_se = e.mean, e.stderr
        d = vals[:, 2 * j] - vals[:, 2 * j + 1] * inner_mean
        e = summarize(d)
        p = float(np.mean(vals[:, 2 * j + 1]))
        se = math.hypot(e.stderr, p * inner_se)
        ctx.record(f"N = {n}: E[F 1(N = n)] - P(N = n) E_n[F]", e.mean, se, 0.0)


# ---------------------------------------------------------------------------
# registry


@dataclass(frozen=True)
class Experiment:
    name: str
    anchor: str
    run: Callable


REGISTRY: tuple[Experiment, ...] = (
    Experiment("laplace", "Laplace transform of the Poisson and mixed Poisson measures", _laplace),
    Experiment("quasiinv", "quasi-invariance of the configuration measure under the group", _quasiinv),
    Experiment("image_measure", "image of the Poisson measure under a group element", _image_measure),
    Experiment("compound", "compound Poisson picture of the group action", _compound),
    Experiment("base_ibp", "integration by parts for the intensity measure", _base_ibp),
    Experiment("ibp", "integration by parts on configuration space", _ibp),
    Experiment("ibp_mixed", "integration by parts under a mixed Poisson measure", _ibp_mixed),
    Experiment("divergence", "divergence of cylinder vector fields", _divergence),
    Experiment("dirichlet", "intrinsic Dirichlet operator and its form", _dirichlet),
    Experiment("lie", "Lie bracket and commutation relations of the generators", _lie),
    Experiment("unitary", "unitary representation of the group", _unitary),
    Experiment("chaos_orth", "orthogonality of Charlier polynomials", _chaos_orth),
    Experiment("annihilation", "add-one-point gradient as annihilation operator", _annihilation),
    Experiment("number_op", "number operator on the n-th chaos", _number_op),
    Experiment("second_quant", "Dirichlet form as second quantisation of the base operator", _second_quant),
    Experiment("semigroup", "heat semigroup of the solvable model and its lift", _semigroup),
    Experiment("exp_functional", "Dirichlet operator on exponential functionals", _exp_functional),
    Experiment("ergodicity", "ergodic decay under the pure measure and its absence under mixtures", _ergodicity),
    Experiment("kernel", "conditional uniformity of points given their count in a window", _kernel),
)


def names() -> list[str]:
    return [e.name for e in REGISTRY]


def get(name: str) -> tuple[int, Experiment]:
    for i, e in enumerate(REGISTRY):
        if e.name == name:
            return i, e
    raise ConfigError(f"unknown experiment {name!r}; known: {', '.join(names())}")


def run_experiment(name: str, cfg: ExperimentConfig) -> Outcome:
    idx, exp = get(name)
    out = Outcome(exp.name, exp.anchor)
    try:
        exp.run(Context(cfg, idx, out))
    except ConfigError:
        raise
    except MpcsError as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def run_suite(cfg: ExperimentConfig, selection: list[str] | None = None,
              progress: Callable[[Outcome], None] | None = None) -> list[Outcome]:
    chosen = selection or cfg.experiments or names()
    for n in chosen:
        get(n)
    outcomes = []
    for n in chosen:
        o = run_experiment(n, cfg)
        if progress is not None:
            progress(o)
        outcomes.append(o)
    return outcomes
