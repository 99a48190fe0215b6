"""Sampled checks of uniform ellipticity and of the regularity assumptions.

Sample plans are deterministic.  The ``(t, s)`` nodes are ``n_levels`` evenly
spread t-levels crossed with evenly spread s-levels below them.  About
``y_points`` spatial nodes are taken (stride over the lattice).  ξ runs over
64 unit directions per dimension (``±1`` when ``d = 1``).  v is ``±1`` for
``m = 1`` and otherwise the unit basis plus ``v_directions`` seeded random
unit vectors.  For jet-dependent coefficients, z runs over the lattice
``z̄ + h·k·e_a`` with ``|h·k| <= R0`` along every jet axis ``a``.  A fixed
step ``h`` makes the lattices nested in ``R0``, so the Lipschitz estimate
cannot decrease as the ball grows.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field as dc_field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from ..errors import InvalidParameter
from ..grid import Jet, NodeBlock, TriangleGrid, index_name, multi_indices, parse_index_name
from ..holder import parabolic_report
from .common import top_indices
from .fully_nonlinear import FullyNonlinearSpec
from .linear import LinearSystemSpec
from .quasilinear import QuasilinearSystemSpec

logger = logging.getLogger(__name__)

AnySpec = Union[LinearSystemSpec, QuasilinearSystemSpec, FullyNonlinearSpec]


@dataclass
class SamplePlan:
    n_levels: int = 4
    y_points: int = 64
    xi_per_dim: int = 64
    v_directions: int = 32
    z_step: float = 0.1
    alpha: float = 0.5
    seed: int = 0
    warn_threshold: Optional[float] = None

    def __post_init__(self):
        if self.n_levels < 1 or self.y_points < 1 or self.xi_per_dim < 1 or self.v_directions < 0:
            raise InvalidParameter("sample plan counts must be positive", "systems::SamplePlan")
        if not self.z_step > 0:
            raise InvalidParameter(f"z_step must be positive, got {self.z_step!r}", "systems::SamplePlan")

    def levels(self, grid: TriangleGrid) -> List[int]:
        return sorted({int(round(x)) for x in np.linspace(0, grid.n_tau, self.n_levels)})

    def nodes(self, grid: TriangleGrid) -> List[Tuple[int, int]]:
        out = []
        for i in self.levels(grid):
            for j in sorted({int(round(x)) for x in np.linspace(0, i, self.n_levels)}):
                out.append((i, j))
        return out

    def y_stride(self, grid: TriangleGrid) -> int:
        return max(1, grid.n_spatial // self.y_points)

    def xi(self, d: int) -> np.ndarray:
        if d == 1:
            return np.array([[1.0], [-1.0]])
        n = self.xi_per_dim * d
        theta = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)

    def v(self, m: int) -> np.ndarray:
        if m == 1:
            return np.array([[1.0], [-1.0]])
        rng = np.random.default_rng(self.seed)
        random = rng.standard_normal((self.v_directions, m))
        random /= np.linalg.norm(random, axis=1, keepdims=True)
        return np.concatenate([np.eye(m), random])

    def z_lattice(self, names: Sequence[str], z_bar: Mapping[str, float], R0: float) -> List[Dict[str, float]]:
        """Centre first, then each axis from ``-k_max`` to ``k_max``."""
        center = {name: float(z_bar.get(name, 0.0)) for name in names}
        k_max = int(math.floor(R0 / self.z_step + 1e-9))
        out = [dict(center)]
        for name in names:
            for k in range(-k_max, k_max + 1):
                if k == 0:
                    continue
                z = dict(center)
                z[name] = center[name] + k * self.z_step
                out.append(z)
        return out

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EllipticityReport:
    passed: bool
    lambda_est: float
    min_ratio: float
    lambda_target: float
    worst_case: Dict[str, object] = dc_field(default_factory=dict)
    samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AssumptionReport:
    K_est: float
    L_est: float
    ellipticity: EllipticityReport
    z_bar: Dict[str, float]
    R0: float
    holder_estimates: Dict[str, float] = dc_field(default_factory=dict)
    lipschitz_by_argument: Dict[str, float] = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ellipticity"] = self.ellipticity.to_dict()
        return out


# ---------------------------------------------------------------------------
# Uniform access to the three spec classes
# ---------------------------------------------------------------------------

class _Target:
    """Labels, jet variables and derivative access for any spec class."""

    def __init__(self, spec: AnySpec):
        self.spec = spec
        self.d, self.r, self.m = spec.d, spec.r, spec.m
        if isinstance(spec, LinearSystemSpec):
            self.z_vars: List[str] = []
            self.jet_order = None
            evs = {f"A.{index_name(I)}": ev for I, ev in spec.A.items()}
            evs.update({f"B.{index_name(I)}": ev for I, ev in spec.B.items()})
            evs["f"] = spec.f
            self.evaluators = {k: v for k, v in evs.items() if not v.is_zero}
        elif isinstance(spec, QuasilinearSystemSpec):
            self.z_vars = spec.jet_variables()
            self.jet_order = spec.jet_order
            self.evaluators = {k: v for k, v in spec.evaluators().items() if not v.is_zero}
        elif isinstance(spec, FullyNonlinearSpec):
            self.z_vars = spec.jet_variables()
            self.jet_order = spec.jet_order
            self.evaluators = {"F": spec.F}
        else:
            raise InvalidParameter(f"unsupported spec type {type(spec).__name__}", "systems::check")

    def trailing(self, label: str) -> Tuple[int, ...]:
        return (self.m, self.m) if self.evaluators[label].kind == "matrix" else (self.m,)

    def jet(self, z: Optional[Mapping[str, float]]) -> Optional[Jet]:
        if self.jet_order is None:
            return None
        indices = multi_indices(self.d, self.jet_order)
        local = {I: np.full((1, 1, self.m), float(z.get(index_name(I), 0.0))) for I in indices}
        diagonal = {I: np.full((1, 1, self.m), float(z.get(index_name(I, True), 0.0))) for I in indices}
        return Jet(self.jet_order, local, diagonal, self.d)

    def value(self, label: str, block: NodeBlock, jet: Optional[Jet]) -> np.ndarray:
        return self.evaluators[label](block, jet)

    def partial(self, label: str, var: str, block: NodeBlock, jet: Optional[Jet]) -> np.ndarray:
        if isinstance(self.spec, QuasilinearSystemSpec):
            return self.spec.partial(label, var, block, jet)
        if isinstance(self.spec, FullyNonlinearSpec):
            return self.spec.partial(var, block, jet)
        return self.evaluators[label].partial(var, block, jet)

    def second_partial(self, label: str, v1: str, v2: str, block: NodeBlock, jet: Optional[Jet]) -> np.ndarray:
        if isinstance(self.spec, QuasilinearSystemSpec):
            return self.spec.second_partial(label, v1, v2, block, jet)
        if isinstance(self.spec, FullyNonlinearSpec):
            return self.spec.second_partial(v1, v2, block, jet)
        return self.evaluators[label].second_partial(v1, v2, block, jet)

    def symbol_coefficients(self, block: NodeBlock, jet: Optional[Jet]):
        """Top-order ``A^I`` and ``B^I`` as ``(..., m, m)`` arrays."""
        A, B = {}, {}
        for I in top_indices(self.d, self.r):
            if isinstance(self.spec, LinearSystemSpec):
                A[I] = self.spec.A[I](block)
                B[I] = self.spec.B[I](block)
            elif isinstance(self.spec, QuasilinearSystemSpec):
                A[I] = self.spec.A_top[I](block, jet)
                B[I] = self.spec.B_top[I](block, jet)
            else:
                A[I] = np.asarray(self.spec.partial(index_name(I), block, jet))[..., None]
                B[I] = np.asarray(self.spec.partial(index_name(I, True), block, jet))[..., None]
        return A, B

    def derivative_channels(self) -> List[Tuple[str, ...]]:
        """Tables of required derivatives: H, H_t, H_z and the second-order crosses."""
        local = [v for v in self.z_vars if not parse_index_name(v)[1]]
        diag = [v for v in self.z_vars if parse_index_name(v)[1]]
        out: List[Tuple[str, ...]] = [(), ("t",)]
        out += [(v,) for v in self.z_vars]
        out += [("t", v) for v in self.z_vars]
        out += [(a, b) for k, a in enumerate(local) for b in local[k:]]
        out += [(a, b) for a in local for b in diag]
        out += [(a, b) for k, a in enumerate(diag) for b in diag[k:]]
        return out

    def channel(self, label: str, channel: Tuple[str, ...], block: NodeBlock, jet: Optional[Jet]) -> np.ndarray:
        if not channel:
            return self.value(label, block, jet)
        if len(channel) == 1:
            return self.partial(label, channel[0], block, jet)
        return self.second_partial(label, channel[0], channel[1], block, jet)


def _sample_block(grid: TriangleGrid, nodes: Sequence[Tuple[int, int]], y_stride: int) -> NodeBlock:
    ii = np.array([i for i, _ in nodes], dtype=np.float64)
    jj = np.array([j for _, j in nodes], dtype=np.float64)
    return NodeBlock(t=(ii * grid.dtau)[:, None], s=(jj * grid.dtau)[:, None], y=grid.y[:, ::y_stride])


def _full(value, shape: Tuple[int, ...]) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=np.float64), shape)


# ---------------------------------------------------------------------------
# Ellipticity
# ---------------------------------------------------------------------------

def check_ellipticity(spec: AnySpec, grid: TriangleGrid, plan: Optional[SamplePlan] = None,
                      lambda_target: float = 1e-6, z_bar: Optional[Mapping[str, float]] = None,
                      R0: float = 1.0) -> EllipticityReport:
    """Evaluate both symbol inequalities on the sample plan.

    ``passed`` iff the smallest ratio ``Q(ξ, v) / (|ξ|^{2r} |v|²)`` is at least
    *lambda_target*; ``lambda_est`` is that ratio when passed and 0 otherwise.
    """
    if not lambda_target > 0:
        raise InvalidParameter(f"lambda_target must be positive, got {lambda_target!r}", "systems::check_ellipticity")
    plan = plan or SamplePlan()
    target = _Target(spec)
    nodes = plan.nodes(grid)
    block = _sample_block(grid, nodes, plan.y_stride(grid))
    xis = plan.xi(target.d)
    vs = plan.v(target.m)
    sign = (-1.0) ** (target.r - 1)
    tops = list(top_indices(target.d, target.r))
    xi_pow = {I: np.prod(xis[:, list(I)], axis=1) for I in tops}
    shape = block.shape + (target.m, target.m)
    zs = plan.z_lattice(target.z_vars, z_bar or {}, R0) if target.z_vars else [None]

    best = math.inf
    worst: Dict[str, object] = {}
    samples = 0
    for z in zs:
        A, B = target.symbol_coefficients(block, target.jet(z))
        qa = np.zeros(block.shape + (len(xis), len(vs)))
        qb = np.zeros_like(qa)
        for I in tops:
            fa = np.einsum("pnab,vb,va->pnv", _full(A[I], shape), vs, vs)
            fb = np.einsum("pnab,vb,va->pnv", _full(B[I], shape), vs, vs)
            qa = qa + xi_pow[I][None, None, :, None] * fa[:, :, None, :]
            qb = qb + xi_pow[I][None, None, :, None] * fb[:, :, None, :]
        scale = (np.linalg.norm(xis, axis=1) ** (2 * target.r))[None, None, :, None] \
            * (np.linalg.norm(vs, axis=1) ** 2)[None, None, None, :]
        for which, q in (("local", sign * qa / scale), ("combined", sign * (qa + qb) / scale)):
            samples += q.size
            k = int(np.argmin(q))
            if q.flat[k] < best:
                best = float(q.flat[k])
                p, n, x, v = np.unravel_index(k, q.shape)
                worst = {
                    "which": which,
                    "t": float(block.t[p, 0]), "s": float(block.s[p, 0]),
                    "y": block.y[:, n].tolist(), "z": dict(z) if z else {},
                    "xi": xis[x].tolist(), "v": vs[v].tolist(),
                }
    passed = best >= lambda_target
    report = EllipticityReport(passed=passed, lambda_est=best if passed else 0.0, min_ratio=best,
                               lambda_target=lambda_target, worst_case=worst, samples=samples)
    if not passed:
        logger.warning("ellipticity check failed for %s: min ratio %.4g < %.4g (%s)",
                       spec.name, best, lambda_target, worst.get("which"))
    return report


# ---------------------------------------------------------------------------
# Regularity assumptions
# ---------------------------------------------------------------------------

def _channel_name(label: str, channel: Tuple[str, ...]) -> str:
    return label if not channel else f"{label}_{{{','.join(channel)}}}"


def _row_block(grid: TriangleGrid, i: int) -> NodeBlock:
    return NodeBlock(t=np.full((i + 1, 1), i * grid.dtau), s=(np.arange(i + 1) * grid.dtau)[:, None], y=grid.y)


def check_assumption(spec: AnySpec, z_bar: Optional[Mapping[str, float]], R0: float, grid: TriangleGrid,
                     plan: Optional[SamplePlan] = None, lambda_target: float = 1e-6,
                     show_progress: bool = False) -> AssumptionReport:
    """Estimate the Hölder constant ``K`` and the Lipschitz constant ``L`` on the ball ``B(z̄, R0)``.

    ``K_est`` is the largest sampled ``|H(t,·,·,z)|^(alpha)`` over H, its
    first-order derivatives in ``t`` and the jet entries, and the required
    second-order crosses.  The Hölder samples use the ball centre and the two
    ends of every jet axis.  ``L_est`` is the largest difference quotient of
    ``H`` between neighbouring lattice points along any jet axis.
    """
    if not R0 > 0:
        raise InvalidParameter(f"R0 must be positive, got {R0!r}", "systems::check_assumption")
    plan = plan or SamplePlan()
    target = _Target(spec)
    z_bar = dict(z_bar or {})
    lattice = plan.z_lattice(target.z_vars, z_bar, R0) if target.z_vars else [None]
    if target.z_vars:
        k_max = int(math.floor(R0 / plan.z_step + 1e-9))
        per_axis = 2 * k_max
        holder_zs = [lattice[0]]
        for a in range(len(target.z_vars)):
            if per_axis:
                holder_zs += [lattice[1 + a * per_axis], lattice[(a + 1) * per_axis]]
    else:
        holder_zs = [None]

    holder: Dict[str, float] = {}
    work = [(label, ch) for label in target.evaluators for ch in target.derivative_channels()]
    for label, ch in tqdm(work, desc="assumption", disable=not show_progress):
        name = _channel_name(label, ch)
        best = 0.0
        for z in holder_zs:
            jet = target.jet(z)
            for i in plan.levels(grid):
                block = _row_block(grid, i)
                values = _full(target.channel(label, ch, block, jet),
                               block.shape + target.trailing(label))
                if not np.any(values):
                    continue
                row = np.ascontiguousarray(values).reshape(i + 1, grid.n_spatial, -1)
                best = max(best, parabolic_report(row, plan.alpha, grid).total)
        holder[name] = best

    lipschitz: Dict[str, float] = {}
    if target.z_vars:
        block = _sample_block(grid, plan.nodes(grid), plan.y_stride(grid))
        center = lattice[0]
        for var in target.z_vars:
            k_max = int(math.floor(R0 / plan.z_step + 1e-9))
            best = 0.0
            for label in target.evaluators:
                shape = block.shape + target.trailing(label)
                previous = None
                for k in range(-k_max, k_max + 1):
                    z = dict(center)
                    z[var] = center[var] + k * plan.z_step
                    current = _full(target.value(label, block, target.jet(z)), shape)
                    if previous is not None:
                        best = max(best, float(np.max(np.abs(current - previous))) / plan.z_step)
                    previous = current
            lipschitz[var] = best

    ellipticity = check_ellipticity(spec, grid, plan, lambda_target, z_bar, R0)
    report = AssumptionReport(
        K_est=max(holder.values(), default=0.0),
        L_est=max(lipschitz.values(), default=0.0),
        ellipticity=ellipticity,
        z_bar={name: float(z_bar.get(name, 0.0)) for name in target.z_vars},
        R0=R0,
        holder_estimates=holder,
        lipschitz_by_argument=lipschitz,
    )
    threshold = plan.warn_threshold
    if threshold is not None and max(report.K_est, report.L_est) > threshold:
        logger.warning("assumption estimates for %s exceed %.4g: K_est=%.4g, L_est=%.4g",
                       spec.name, threshold, report.K_est, report.L_est)
    logger.info("check_assumption %s: K_est=%.4g L_est=%.4g ellipticity=%s",
                spec.name, report.K_est, report.L_est, ellipticity.passed)
    return report
