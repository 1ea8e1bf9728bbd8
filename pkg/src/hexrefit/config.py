"""JSON configuration for refit and transfer runs.

A refit configuration looks like::

    {
      "eps_E": 0.01, "eps_A": 0.01, "eps_m": 2e8,
      "theta_r": 1.5707963267948966,
      "targets": {"type": "uniform"},
      "max_increments": 20, "n_increments": 1, "newton_tol": 1e-5,
      "dirichlet": [{"nodeset": "corners", "dofs": "xyz"}],
      "sliding": [{"nodeset": "sides", "sharp_angle": 60}]
    }

``targets`` is ``{"type": "uniform"}`` (mean averaged edge lengths of the
input, or explicit ``"lengths"``) or ``{"type": "localized", "l_r0": ...,
"center": [...], "c": ..., "variant": "point" | "cylindrical", ...}``.
Node set ``"*"`` selects every node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from .distortion import LocalizationField, PenaltyParams, TargetShape, average_target_lengths, localized_targets
from .mesh import MeshError
from .sliding import build_interface
from .solver import RefitControls, RefitProblem, dirichlet_mask
from .transfer import FieldSpec


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


_REFIT_KEYS = {
    "eps_E", "eps_E_bar", "eps_E_hat", "eps_A", "eps_m", "theta_r", "targets", "dirichlet", "sliding",
    "max_increments", "n_increments", "newton_tol", "max_newton_iters", "line_search", "increment_ratios",
}


@dataclass
class RefitConfig:
    eps_E_bar: float = 1e-2
    eps_E_hat: float = 1e-2
    eps_A: float = 1e-2
    eps_m: float = 2e8
    theta_r: float = np.pi / 2
    targets: dict = field(default_factory=lambda: {"type": "uniform"})
    dirichlet: list = field(default_factory=list)
    sliding: list = field(default_factory=list)
    controls: RefitControls = field(default_factory=RefitControls)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - _REFIT_KEYS
        if unknown:
            raise ConfigError(f"unknown refit config key(s): {sorted(unknown)}")
        cfg = cls()
        eps_E = d.get("eps_E", 1e-2)
        cfg.eps_E_bar = float(d.get("eps_E_bar", eps_E))
        cfg.eps_E_hat = float(d.get("eps_E_hat", eps_E))
        cfg.eps_A = float(d.get("eps_A", 1e-2))
        cfg.eps_m = float(d.get("eps_m", 2e8))
        cfg.theta_r = float(d.get("theta_r", np.pi / 2))
        cfg.targets = dict(d.get("targets", {"type": "uniform"}))
        cfg.dirichlet = list(d.get("dirichlet", []))
        cfg.sliding = list(d.get("sliding", []))
        ctrl = {}
        for key in ("max_increments", "n_increments", "max_newton_iters"):
            if key in d:
                ctrl[key] = int(d[key])
        if "newton_tol" in d:
            ctrl["newton_tol"] = float(d["newton_tol"])
        for key in ("line_search", "increment_ratios"):
            if key in d:
                ctrl[key] = bool(d[key])
        cfg.controls = RefitControls(**ctrl)
        cfg.validate()
        return cfg

    def validate(self):
        eps = (self.eps_E_bar, self.eps_E_hat, self.eps_A)
        if any(e < 0 for e in eps):
            raise ConfigError("penalty parameters must be nonnegative")
        if not any(e > 0 for e in eps):
            raise ConfigError("at least one of eps_E, eps_A must be positive")
        if not self.eps_m > 0:
            raise ConfigError("eps_m must be positive")
        if not 0.0 < self.theta_r < np.pi:
            raise ConfigError("theta_r must lie in (0, pi)")
        c = self.controls
        if c.max_increments < 1 or c.n_increments < 1 or c.max_newton_iters < 1:
            raise ConfigError("increment and iteration limits must be >= 1")
        if not c.newton_tol > 0:
            raise ConfigError("newton_tol must be positive")
        kind = self.targets.get("type", "uniform")
        if kind not in ("uniform", "localized"):
            raise ConfigError(f"unknown target type {kind!r}")
        for entry in self.dirichlet:
            if "nodeset" not in entry:
                raise ConfigError("dirichlet entries need a 'nodeset'")
            dofs = entry.get("dofs", "xyz")
            if not dofs or set(dofs) - set("xyz"):
                raise ConfigError(f"dirichlet dofs must be a subset of 'xyz', got {dofs!r}")
        for entry in self.sliding:
            if "nodeset" not in entry:
                raise ConfigError("sliding entries need a 'nodeset'")

    def to_dict(self):
        d = {
            "eps_E_bar": self.eps_E_bar, "eps_E_hat": self.eps_E_hat, "eps_A": self.eps_A, "eps_m": self.eps_m,
            "theta_r": self.theta_r, "targets": self.targets, "dirichlet": self.dirichlet, "sliding": self.sliding,
        }
        defaults = RefitControls()
        for f in fields(RefitControls):
            if f.name in _REFIT_KEYS and getattr(self.controls, f.name) != getattr(defaults, f.name):
                d[f.name] = getattr(self.controls, f.name)
        return d

    def penalties(self):
        return PenaltyParams(self.eps_E_bar, self.eps_E_hat, self.eps_A)

    def localization(self):
        """The LocalizationField of a localized target spec, else None."""
        t = self.targets
        if t.get("type", "uniform") != "localized":
            return None
        try:
            return LocalizationField(
                l_r0=float(t["l_r0"]),
                center=t.get("center", [0.0, 0.0, 0.0]),
                c=float(t.get("c", 0.0)),
                variant=t.get("variant", "point"),
                r_ei=float(t.get("r_ei", 0.0)),
                l_e=float(t.get("l_e", 0.0)),
                radial=t.get("radial", "distance"),
                amplitude=float(t.get("amplitude", 1.0)),
            )
        except KeyError as exc:
            raise ConfigError(f"localized targets need {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def target_shape(self, mesh):
        loc = self.localization()
        if loc is not None:
            return localized_targets(mesh, loc.l_r0, loc.f, self.theta_r)
        lengths = self.targets.get("lengths")
        if lengths is None:
            lengths = average_target_lengths(mesh)
        lengths = np.broadcast_to(np.asarray(lengths, dtype=np.float64), (3,))
        if np.any(~(lengths > 0)):
            raise ConfigError("target lengths must be positive")
        return TargetShape.uniform(mesh.n_elements, lengths, self.theta_r)

    def build_problem(self, mesh):
        """Assemble a RefitProblem; pinned sliding nodes are those fixed in all components."""
        try:
            fixed = dirichlet_mask(
                mesh.n_nodes, [(mesh.node_set(e["nodeset"]), e.get("dofs", "xyz")) for e in self.dirichlet]
            )
            all_fixed = np.flatnonzero(fixed.reshape(-1, 3).all(axis=1))
            interfaces = [
                build_interface(
                    mesh, s["nodeset"], pinned=all_fixed, eps_m=float(s.get("eps_m", self.eps_m)),
                    sharp_angle=float(s.get("sharp_angle", 60.0)),
                )
                for s in self.sliding
            ]
        except MeshError as exc:
            raise ConfigError(str(exc)) from None
        return RefitProblem(mesh, self.target_shape(mesh), self.penalties(), interfaces, fixed, self.controls)


_FIELD_KEYS = {"scheme", "basis_order", "r_p", "c", "strict", "eigen_scheme"}


def field_spec_from_dict(d):
    unknown = set(d) - _FIELD_KEYS
    if unknown:
        raise ConfigError(f"unknown transfer config key(s): {sorted(unknown)}")
    spec = FieldSpec(
        scheme=d.get("scheme", "mls"),
        basis_order=int(d.get("basis_order", 1)),
        r_p=None if d.get("r_p") is None else float(d["r_p"]),
        c=None if d.get("c") is None else float(d["c"]),
        strict=bool(d.get("strict", False)),
        eigen_scheme=d.get("eigen_scheme", "logmls"),
    )
    if spec.scheme not in ("mls", "logmls", "rmls", "componentwise"):
        raise ConfigError(f"unknown transfer scheme {spec.scheme!r}")
    if spec.basis_order not in (0, 1, 2):
        raise ConfigError("basis_order must be 0, 1 or 2")
    if spec.r_p is not None and not spec.r_p > 0:
        raise ConfigError("r_p must be positive")
    if spec.c is not None and not spec.c > 0:
        raise ConfigError("c must be positive")
    if spec.eigen_scheme not in ("logmls", "mls"):
        raise ConfigError(f"unknown eigenvalue scheme {spec.eigen_scheme!r}")
    return spec


def transfer_specs_from_dict(d):
    """Transfer config: either one spec for all fields or ``{"fields": {name: spec}}``.

    Top-level keys act as defaults for every field; ``fields`` overrides them.
    Returns ``(default_spec_dict, {name: spec_dict})``.
    """
    d = dict(d)
    per_field = d.pop("fields", {})
    return d, per_field


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_refit_config(path):
    return RefitConfig.from_dict(load_json(path))
