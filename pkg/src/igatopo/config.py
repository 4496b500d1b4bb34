"""Run configuration: a TOML file validated against a strict schema.

Unknown keys are rejected and every validation message carries the line of
the offending entry. Lengths are in mm, conductivities in W/mK,
temperatures in K, fluxes in W/m^2, point-source bandwidths in m.
"""
from __future__ import annotations

import re
from pathlib import Path
from typing import Literal, Optional, Union

import tomli
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .assembly import Dirichlet, Neumann, Robin
from .errors import ConfigError
from .geometry import PointSource
from .materials import LAW_KINDS, MaterialLaw, make_law
from .objectives import OBJECTIVE_KINDS, ConstraintSpec, ObjectiveSpec
from .optimizer import OptimizerConfig
from .problem import ProblemSetup

__all__ = ["RunConfig", "load_config", "parse_config"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class StarBlock(_Strict):
    C: float = Field(gt=-1, lt=1)
    k: int = Field(ge=1)
    theta0: float = 0.0


class GeometryBlock(_Strict):
    L: float = Field(140.0, gt=0)
    R_in: float = Field(10.0, gt=0)
    R_out: float = Field(50.0, gt=0)
    star_in: Optional[StarBlock] = None
    star_out: Optional[StarBlock] = None

    @model_validator(mode="after")
    def _radii(self):
        if not self.R_in < self.R_out < self.L / 2:
            raise ValueError(f"need R_in < R_out < L/2, got R_in={self.R_in}, R_out={self.R_out}, L={self.L}")
        return self


class DirichletBC(_Strict):
    type: Literal["dirichlet"]
    value: float


class NeumannBC(_Strict):
    type: Literal["neumann"]
    flux: tuple[float, float]


class RobinBC(_Strict):
    type: Literal["robin"]
    h: float = Field(gt=0)
    T_inf: float


BC = Union[DirichletBC, NeumannBC, RobinBC]
_SIDES = ("left", "right", "bottom", "top")


class BCBlock(_Strict):
    left: Optional[BC] = Field(None, discriminator="type")
    right: Optional[BC] = Field(None, discriminator="type")
    bottom: Optional[BC] = Field(None, discriminator="type")
    top: Optional[BC] = Field(None, discriminator="type")

    def to_dict(self) -> dict:
        out = {}
        for side in _SIDES:
            bc = getattr(self, side)
            if isinstance(bc, DirichletBC):
                out[side] = Dirichlet(bc.value)
            elif isinstance(bc, NeumannBC):
                out[side] = Neumann(tuple(bc.flux))
            elif isinstance(bc, RobinBC):
                out[side] = Robin(bc.h, bc.T_inf)
        return out


class SourceBlock(_Strict):
    location: tuple[float, float]
    q: float
    delta: float = Field(gt=0)


class LawBlock(_Strict):
    law: str = "emt"
    v_min: Optional[float] = None
    v_max: Optional[float] = None
    kappa_m: Optional[float] = Field(None, gt=0)
    kappa_i: Optional[float] = Field(None, gt=0)
    kappa: Optional[float] = Field(None, gt=0)

    @field_validator("law")
    @classmethod
    def _known(cls, v):
        if v.lower() not in LAW_KINDS:
            raise ValueError(f"unknown law {v!r}; expected one of {LAW_KINDS}")
        return v.lower()

    def build(self) -> MaterialLaw:
        extra = {k: getattr(self, k) for k in ("v_min", "v_max", "kappa_m", "kappa_i", "kappa") if getattr(self, k) is not None}
        return make_law(self.law, **extra)


class MaterialsBlock(_Strict):
    design: LawBlock = LawBlock()
    base: float = Field(67.0, gt=0)
    inner: Optional[float] = Field(None, gt=0)
    cloak_reference: float = Field(1e-4, gt=0)


class DesignBlock(_Strict):
    spans_circ: int = Field(4, ge=1)
    spans_radial: int = Field(4, ge=1)
    symmetry: Literal["none", "x", "xy"] = "xy"
    initial: Optional[float] = None
    initial_csv: Optional[str] = None


class ObjectiveBlock(_Strict):
    kind: str = "cloak"
    chi: float = Field(0.0, ge=0)
    theta: float = 0.0

    @field_validator("kind")
    @classmethod
    def _known(cls, v):
        if v not in OBJECTIVE_KINDS:
            raise ValueError(f"unknown objective {v!r}; expected one of {OBJECTIVE_KINDS}")
        return v


class ConstraintBlock(_Strict):
    T_max: float
    radius: float = Field(15.0, gt=0)
    center: tuple[float, float] = (0.0, 0.0)
    A: float = Field(1.5, gt=1)


class OptimizerBlock(_Strict):
    max_iterations: int = Field(300, ge=0)
    objective_limit: float = Field(1e-10, gt=0)
    step_tolerance: float = Field(1e-10, gt=0)
    optimality_tolerance: float = Field(1e-10, gt=0)
    memory: int = Field(10, ge=1)
    penalty: float = Field(1.0, gt=0)
    penalty_growth: float = Field(10.0, gt=1)
    max_outer: int = Field(12, ge=1)
    feasibility_tolerance: float = Field(1e-6, gt=0)

    def build(self) -> OptimizerConfig:
        return OptimizerConfig(**self.model_dump())


class MeshBlock(_Strict):
    levels: int = Field(3, ge=0, le=8)
    beta: float = Field(1e12, gt=0)
    gamma: float = Field(0.5, gt=0, lt=1)


class OutputBlock(_Strict):
    dir: str = "out"
    vtk: bool = True
    subdivisions: int = Field(4, ge=1)


class RunConfig(_Strict):
    geometry: GeometryBlock = GeometryBlock()
    mesh: MeshBlock = MeshBlock()
    bc: BCBlock = BCBlock(left=DirichletBC(type="dirichlet", value=300.0), right=DirichletBC(type="dirichlet", value=200.0))
    bc_vertical: BCBlock = BCBlock(top=DirichletBC(type="dirichlet", value=300.0), bottom=DirichletBC(type="dirichlet", value=200.0))
    sources: list[SourceBlock] = []
    materials: MaterialsBlock = MaterialsBlock()
    design: DesignBlock = DesignBlock()
    objective: ObjectiveBlock = ObjectiveBlock()
    constraints: list[ConstraintBlock] = []
    optimizer: OptimizerBlock = OptimizerBlock()
    output: OutputBlock = OutputBlock()

    def problem_setup(self, levels: int | None = None) -> ProblemSetup:
        g = self.geometry
        star = lambda s: None if s is None else (s.C, s.k, s.theta0)  # noqa: E731
        return ProblemSetup(
            L=g.L, R_in=g.R_in, R_out=g.R_out, star_in=star(g.star_in), star_out=star(g.star_out),
            levels=self.mesh.levels if levels is None else levels,
            spans_circ=self.design.spans_circ, spans_radial=self.design.spans_radial, symmetry=self.design.symmetry,
            law=self.materials.design.build(), kappa_base=self.materials.base, kappa_in=self.materials.inner,
            kappa_cloak_reference=self.materials.cloak_reference,
            bcs=self.bc.to_dict(), bcs_vertical=self.bc_vertical.to_dict(),
            sources=tuple(PointSource(tuple(s.location), s.q, s.delta) for s in self.sources),
            objective=ObjectiveSpec(self.objective.kind, self.objective.chi, self.objective.theta),
            constraints=tuple(ConstraintSpec(c.T_max, c.radius, tuple(c.center), c.A) for c in self.constraints),
            beta=self.mesh.beta, gamma=self.mesh.gamma, initial=self.design.initial,
        )


def _line_of(text: str, loc: tuple) -> int | None:
    """Best-effort line number of a validation location in the TOML text."""
    lines = text.splitlines()
    section = None
    keys = [str(k) for k in loc if not isinstance(k, int)]
    target_section = keys[0] if keys else None
    leaf = keys[-1] if len(keys) > 1 else None
    sec_line = None
    for i, raw in enumerate(lines, 1):
        s = raw.strip()
        m = re.match(r"^\[\[?\s*([A-Za-z0-9_.]+)\s*\]\]?", s)
        if m:
            section = m.group(1).split(".")[0]
            if section == target_section and sec_line is None:
                sec_line = i
            continue
        if leaf and section == target_section and re.match(rf"^{re.escape(leaf)}\s*=", s):
            return i
        if leaf and section == target_section and re.search(rf"[{{,]\s*{re.escape(leaf)}\s*=", s):
            return i
        if section is None and target_section and re.match(rf"^{re.escape(target_section)}\s*=", s):
            return i
    if leaf:
        # the leaf may be a key of an inline table, e.g. ``left = {type = ...}``
        for i, raw in enumerate(lines, 1):
            if re.match(rf"^\s*{re.escape(keys[1])}\s*=", raw) and sec_line is not None and i > sec_line:
                return i
    return sec_line


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Validate TOML ``text``.

    Raises
    ------
    ConfigError
        On syntax errors, unknown keys or out-of-range values; the message
        names the file, the line and the key path.
    """
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            path = ".".join(str(p) for p in loc)
            line = _line_of(text, loc)
            where = f"{source}:{line}" if line else source
            msgs.append(f"{where}: {path}: {err['msg']}")
        raise ConfigError("\n".join(msgs)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_config(text, str(path))
