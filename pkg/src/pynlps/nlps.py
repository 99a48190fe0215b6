import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

from .data.loader import build_spec, load_manufactured_solution, load_preset, preset_grid
from .errors import GateFailure, InvalidParameter, UnsupportedMultiComponent
from .fixedpoint import FixedPointConfig, SolveReport, solve_fully_nonlinear_temporal, solve_quasilinear_fixedpoint
from .grid import TriangleField, TriangleGrid, build_grid
from .holder import norm_parabolic, norm_triangle
from .linsolve import LinearSolveReport, SchemeConfig, schauder_ratio, solve_nonlocal_linear
from .quasilin import InducedSystem, check_equivalence, quasilinearize_spatial, solve_fully_nonlinear_spatial
from .systems import (
    FullyNonlinearSpec,
    LinearSystemSpec,
    QuasilinearSystemSpec,
    SamplePlan,
    check_assumption,
    check_ellipticity,
)
from .utils import io
from .utils.validator import apply_override, parse_override, require_valid_config
from .verify import (
    ConvergenceResult,
    ManufacturedSolution,
    MMSReport,
    compare_fields,
    compare_gradients,
    convergence_study,
    mms_check,
)

logger = logging.getLogger(__name__)

GRID_DEFAULTS = {"T": 1.0, "n_tau": 64, "L": 2 * math.pi, "n_y": 16}
DEFAULT_CONVERGENCE_GRIDS = [(8, 16), (16, 64), (32, 256)]
ROUTE_AGREEMENT_FACTOR = 10.0


class NLPS:
    """
    One run of pynlps: a validated config, the problem it names and the
    artifacts its solves produce.

    Parameters:
        config (dict): Run configuration (see ``schemas/RunConfigModel.json``).

    Examples:
        >>> run = NLPS({"problem": {"preset": "nonlocal_heat_linear"}, "grid": {"n_tau": 64}})
        >>> u, report = run.solve_linear()
        >>> run.write_outputs(u, report.to_dict())
    """

    def __init__(self, config: Mapping[str, Any]):
        self.config = require_valid_config(config)
        self._entry: Optional[dict] = None
        self._spec = None
        self._grid: Optional[TriangleGrid] = None
        self.field: Optional[TriangleField] = None
        self.report: Dict[str, Any] = {}
        logger.info("NLPS run for problem '%s' initialized", self.problem_id)

    @classmethod
    def from_file(cls, path, overrides: Iterable[str] = (), threads: Optional[int] = None) -> "NLPS":
        """Read a JSON/TOML config, apply ``key=value`` overrides and ``--threads``."""
        config = io.read_config(path) if path is not None else {}
        for text in overrides:
            key, value = parse_override(text)
            apply_override(config, key, value)
        if threads is not None:
            apply_override(config, "scheme.threads", threads)
        return cls(config)

    # ------------------------------------------------------------------
    # Problem and grid
    # ------------------------------------------------------------------
    @property
    def problem_id(self) -> str:
        problem = self.config["problem"]
        return problem.get("id") or problem.get("preset") or "inline"

    @property
    def entry(self) -> Optional[dict]:
        preset = self.config["problem"].get("preset")
        if preset and self._entry is None:
            self._entry = load_preset(preset)
        return self._entry

    def _dims(self) -> Tuple[int, int, int]:
        grid_cfg = self.config.get("grid", {})
        if self.entry is None:
            return int(grid_cfg.get("d", 1)), int(grid_cfg.get("r", 1)), int(grid_cfg.get("m", 1))
        dims = (self.entry.get("d", 1), self.entry.get("r", 1), self.entry.get("m", 1))
        for name, value in zip(("d", "r", "m"), dims):
            if name in grid_cfg and grid_cfg[name] != value:
                raise InvalidParameter(f"grid.{name}={grid_cfg[name]} conflicts with preset "
                                       f"'{self.entry['name']}' ({name}={value})", "cli::run")
        return dims

    @property
    def spec(self):
        """The problem spec: a preset from the catalog or inline expression terms."""
        if self._spec is None:
            problem = self.config["problem"]
            d, r, m = self._dims()
            allow_fd = problem.get("allow_fd", True)
            if self.entry is not None:
                if problem.get("terms") or problem.get("kind"):
                    raise InvalidParameter("problem.preset cannot be combined with kind/terms", "cli::run")
                self._spec = build_spec(self.entry["kind"], self.entry["terms"], d, r, m,
                                        self.entry["name"], allow_fd)
            else:
                if "kind" not in problem or "terms" not in problem:
                    raise InvalidParameter("an inline problem needs problem.kind and problem.terms", "cli::run")
                if m != 1:
                    raise UnsupportedMultiComponent("inline problems support m=1 only; use a preset for m>1",
                                                    "cli::run")
                self._spec = build_spec(problem["kind"], problem["terms"], d, r, 1, self.problem_id, allow_fd)
        return self._spec

    @property
    def grid(self) -> TriangleGrid:
        if self._grid is None:
            d, r, m = self._dims()
            settings = dict(GRID_DEFAULTS)
            if self.entry is not None:
                settings.update(preset_grid(self.entry["name"]))
            settings.update({k: v for k, v in self.config.get("grid", {}).items() if k in GRID_DEFAULTS})
            self._grid = build_grid(settings["T"], settings["n_tau"], settings["L"], settings["n_y"], d, r, m)
        return self._grid

    @property
    def scheme(self) -> SchemeConfig:
        return SchemeConfig(**self.config["scheme"])

    @property
    def fixedpoint(self) -> FixedPointConfig:
        settings = {k: v for k, v in self.config["fixedpoint"].items() if k != "variant"}
        return FixedPointConfig(**settings)

    @property
    def manufactured_solution(self) -> ManufacturedSolution:
        mms = self.config["problem"].get("mms")
        if isinstance(mms, Mapping):
            return ManufacturedSolution.from_dict(mms, self.spec.d)
        if mms:
            return load_manufactured_solution(mms)
        if self.entry is not None:
            return load_manufactured_solution(self.entry["name"])
        raise InvalidParameter("verification needs problem.mms or a preset with a manufactured solution",
                               "verify::load_manufactured_solution")

    # ------------------------------------------------------------------
    # Solves
    # ------------------------------------------------------------------
    def _require(self, cls, label: str):
        if not isinstance(self.spec, cls):
            raise InvalidParameter(f"{label} needs a {cls.kind} problem, '{self.problem_id}' is {self.spec.kind}",
                                   "cli::run")

    def solve_linear(self) -> Tuple[TriangleField, LinearSolveReport]:
        self._require(LinearSystemSpec, "solve-linear")
        u, report = solve_nonlocal_linear(self.spec, self.grid, self.scheme)
        report.schauder_ratio = schauder_ratio(u, self.spec, self.config["norms"]["l"],
                                               self.config["norms"]["with_t_derivative"])
        self.field = u
        return u, report

    def solve_quasilinear(self) -> Tuple[TriangleField, SolveReport]:
        spec = self.spec
        if isinstance(spec, LinearSystemSpec):
            spec = QuasilinearSystemSpec.from_linear(spec)
        if not isinstance(spec, QuasilinearSystemSpec):
            raise InvalidParameter(f"solve-quasilinear needs a linear or quasilinear problem, "
                                   f"'{self.problem_id}' is {self.spec.kind}", "cli::run")
        u, report = solve_quasilinear_fixedpoint(spec, self.grid, self.scheme, self.fixedpoint)
        self.field = u
        return u, report

    def solve_fullnl(self, variant: Optional[str] = None) -> Tuple[TriangleField, SolveReport]:
        """Fully-nonlinear solve by spatial (default) or temporal quasilinearization."""
        self._require(FullyNonlinearSpec, "solve-fullnl")
        variant = variant or self.config["fixedpoint"].get("variant", "spatial")
        if variant == "spatial":
            u, report = solve_fully_nonlinear_spatial(self.spec, self.grid, self.scheme, self.fixedpoint)
        elif variant == "temporal":
            u, report = solve_fully_nonlinear_temporal(self.spec, self.grid, self.scheme, self.fixedpoint)
        else:
            raise InvalidParameter(f"variant must be 'spatial' or 'temporal', got {variant!r}", "cli::run")
        self.field = u
        return u, report

    def solve(self) -> Tuple[TriangleField, Any]:
        """Solve with the route matching the problem kind."""
        if isinstance(self.spec, LinearSystemSpec):
            return self.solve_linear()
        if isinstance(self.spec, QuasilinearSystemSpec):
            return self.solve_quasilinear()
        return self.solve_fullnl()

    def quasilinearize(self) -> InducedSystem:
        self._require(FullyNonlinearSpec, "quasilinearize")
        return quasilinearize_spatial(self.spec)

    # ------------------------------------------------------------------
    # Diagnostics and verification
    # ------------------------------------------------------------------
    def norms(self, field: Optional[TriangleField] = None) -> Dict[str, Any]:
        """Triangle norm of *field* (the last solution, or a fresh solve) and optionally one slice."""
        if field is None:
            field = self.field if self.field is not None else self.solve()[0]
        settings = self.config["norms"]
        l, flag, exhaustive = settings["l"], settings["with_t_derivative"], settings.get("exhaustive")
        out: Dict[str, Any] = {
            "l": l,
            "with_t_derivative": flag,
            "norm": norm_triangle(field, l, flag, exhaustive=exhaustive),
            "sup_norm": field.sup_norm(),
            "grid": field.grid.to_dict(),
        }
        if settings.get("slice") is not None:
            out["slice"] = norm_parabolic(field, settings["slice"], l, exhaustive).to_dict()
        return out

    def verify_mms(self) -> MMSReport:
        """Manufactured-solution gate; ``problem.forcing = "given"`` trusts the configured forcing."""
        settings = self.config["verify"]
        force = self.config["problem"].get("forcing", "manufactured") == "manufactured"
        return mms_check(self.spec, self.manufactured_solution, self.grid, settings.get("route"),
                         settings["tol_factor"], self.scheme, self.fixedpoint, force=force)

    def check_equivalence(self) -> Dict[str, Any]:
        """Solve the induced system and the temporal route, then compare both ways.

        Gates the spatial/temporal agreement at ``10·(Δτ + Δy²)·scale``
        when both routes cover the same triangle.
        """
        spec = self.spec
        self._require(FullyNonlinearSpec, "check-equivalence")
        induced = quasilinearize_spatial(spec)
        joint, spatial = solve_quasilinear_fixedpoint(induced.spec, self.grid.with_components(induced.spec.m),
                                                      self.scheme, self.fixedpoint)
        u, vs = induced.split(joint)
        equivalence = check_equivalence(u, vs, spec)
        temporal_u, temporal = solve_fully_nonlinear_temporal(spec, self.grid, self.scheme, self.fixedpoint)
        out: Dict[str, Any] = {
            "equivalence": equivalence.to_dict(),
            "spatial": spatial.to_dict(),
            "temporal": temporal.to_dict(),
            "grid": u.grid.to_dict(),
        }
        if not u.grid.same_lattice(temporal_u.grid):
            logger.warning("routes stopped on different windows (%d vs %d steps); skipping agreement gate",
                           u.grid.n_tau, temporal_u.grid.n_tau)
            self.field = u
            self.report = out
            return out
        agreement = compare_fields(u, temporal_u)
        scale = max(1.0, u.sup_norm())
        agreement["tolerance"] = ROUTE_AGREEMENT_FACTOR * (u.grid.dtau + u.grid.dy ** 2) * scale
        agreement["passed"] = agreement["sup_diff"] <= agreement["tolerance"]
        out["route_agreement"] = agreement
        out["gradient_of_temporal"] = compare_gradients(temporal_u, vs)
        self.field = u
        self.report = out
        if not agreement["passed"]:
            raise GateFailure(f"spatial and temporal routes differ by {agreement['sup_diff']:.3e} "
                              f"(tolerance {agreement['tolerance']:.3e})", "verify::check_equivalence")
        return out

    def convergence(self) -> ConvergenceResult:
        settings = self.config["verify"]
        grids = [tuple(g) for g in settings.get("grids") or DEFAULT_CONVERGENCE_GRIDS]
        return convergence_study(self.spec, self.manufactured_solution, grids, settings.get("route"),
                                 self.grid.T, self.grid.L, self.scheme, self.fixedpoint,
                                 settings["show_progress"])

    def check_ellipticity(self) -> Dict[str, Any]:
        """Ellipticity and regularity-assumption estimates; fails the gate when ellipticity fails."""
        settings = self.config["verify"]
        plan = SamplePlan(alpha=self.config["fixedpoint"]["alpha"])
        ellipticity = check_ellipticity(self.spec, self.grid, plan, settings["lambda_target"], None, settings["R0"])
        assumption = check_assumption(self.spec, None, settings["R0"], self.grid, plan,
                                      settings["lambda_target"], settings["show_progress"])
        out = {"ellipticity": ellipticity.to_dict(), "assumption": assumption.to_dict()}
        self.report = out
        return out

    # ------------------------------------------------------------------
    # Artifacts
    # ------------------------------------------------------------------
    @property
    def output_dir(self) -> Path:
        return Path(self.config["output"]["dir"])

    def write_outputs(self, field: Optional[TriangleField], report: Dict[str, Any]) -> List[Path]:
        """Write the configured artifacts under ``output.dir``."""
        output = self.config["output"]
        formats = set(output["formats"])
        written: List[Path] = []
        payload = {"problem": self.problem_id, "config": self.config, **report}
        if field is not None:
            name = output["name"]
            if "nltf" in formats:
                written.append(io.write_nltf(field, self.output_dir / f"{name}.nltf", self.problem_id))
            if "csv" in formats:
                written.append(io.write_slices_csv(field, self.output_dir))
            if "parquet" in formats:
                written.append(io.write_parquet(field, self.output_dir / f"{name}.parquet"))
        if "json" in formats:
            written.append(io.write_report(payload, self.output_dir))
        return written
