"""Case configuration: TOML files plus a small expression language.

Boundary data, body forces and initial conditions are written as
arithmetic expressions of ``x, y, z, t`` (and the derived ``r, theta``),
evaluated vectorised over points.  See ``docs/config.md``.
"""

from __future__ import annotations

import ast
import operator
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "Expression", "VectorExpression", "CaseConfig", "load_config", "parse_config"]

REGIMES = ("static", "quasistatic", "dynamic")


class ConfigError(ValueError):
    """Invalid configuration, with the offending file and key in the message."""


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.Mod: operator.mod,
}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_CMPOPS = {
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
}
_FUNCS = {
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "atan2": np.arctan2,
    "hypot": np.hypot,
    "min": np.minimum,
    "max": np.maximum,
    "where": np.where,
}
_CONSTS = {"pi": np.pi, "e": np.e}
VARIABLES = ("x", "y", "z", "t", "r", "theta")


class Expression:
    """Scalar expression of x, y, z, t, r, theta; safe subset of Python syntax."""

    def __init__(self, source, params: dict | None = None):
        if isinstance(source, (int, float)):
            source = repr(float(source))
        if not isinstance(source, str):
            raise ConfigError(f"expression must be a string or number, got {type(source).__name__}")
        self.source = source
        self.params = dict(params or {})
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigError(f"{self.source!r}: only numeric constants are allowed")
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in _CONSTS and node.id not in self.params:
                raise ConfigError(f"{self.source!r}: unknown name {node.id!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigError(f"{self.source!r}: operator {type(node.op).__name__} not allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNOPS:
                raise ConfigError(f"{self.source!r}: operator {type(node.op).__name__} not allowed")
            self._check(node.operand)
        elif isinstance(node, ast.Compare):
            if len(node.ops) != 1 or type(node.ops[0]) not in _CMPOPS:
                raise ConfigError(f"{self.source!r}: only single comparisons are allowed")
            self._check(node.left)
            self._check(node.comparators[0])
        elif isinstance(node, ast.IfExp):
            for n in (node.test, node.body, node.orelse):
                self._check(n)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ConfigError(f"{self.source!r}: unknown function call")
            for a in node.args:
                self._check(a)
        else:
            raise ConfigError(f"{self.source!r}: syntax {type(node).__name__} not allowed")

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Compare):
            return _CMPOPS[type(node.ops[0])](self._eval(node.left, env), self._eval(node.comparators[0], env))
        if isinstance(node, ast.IfExp):
            return np.where(self._eval(node.test, env), self._eval(node.body, env), self._eval(node.orelse, env))
        return _FUNCS[node.func.id](*(self._eval(a, env) for a in node.args))

    def __call__(self, X, t: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = len(X)
        cols = [X[:, k] if k < X.shape[1] else np.zeros(n) for k in range(3)]
        env = dict(_CONSTS)
        env.update(self.params)
        env.update(x=cols[0], y=cols[1], z=cols[2], t=float(t),
                   r=np.hypot(cols[0], cols[1]), theta=np.arctan2(cols[1], cols[0]))
        with np.errstate(all="ignore"):
            val = self._eval(self._tree, env)
        return np.broadcast_to(np.asarray(val, dtype=float), (n,)).copy()

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


class VectorExpression:
    """One expression per component; returns (n, d)."""

    def __init__(self, sources, dim: int, params: dict | None = None):
        if isinstance(sources, (str, int, float)):
            sources = [sources]
        if len(sources) != dim:
            raise ConfigError(f"expected {dim} component expressions, got {len(sources)}")
        self.components = [Expression(s, params) for s in sources]

    def __call__(self, X, t: float = 0.0) -> np.ndarray:
        return np.column_stack([e(X, t) for e in self.components])


@dataclass
class BCSpec:
    tag: str
    kind: str
    value: list | str
    components: tuple = ()


@dataclass
class CaseConfig:
    """Parsed configuration; see ``docs/config.md`` for the keys."""

    path: Path
    regime: str
    mesh: dict
    material: dict
    bcs: list
    name: str = ""
    beta: float = 1.0
    candidates: int | None = None
    body_force: list | None = None
    params: dict = field(default_factory=dict)
    quasistatic: dict = field(default_factory=dict)
    dynamic: dict = field(default_factory=dict)
    convergence: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    forces: dict = field(default_factory=dict)

    @property
    def base_dir(self) -> Path:
        return self.path.parent

    @property
    def output_dir(self) -> Path:
        out = Path(self.output.get("dir", "output"))
        return out if out.is_absolute() else self.base_dir / out


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing key {key!r}")
    return d[key]


def parse_config(data: dict, path="<memory>") -> CaseConfig:
    path = Path(path)
    where = str(path)
    case = data.get("case", {})
    regime = case.get("regime", "static")
    if regime not in REGIMES:
        raise ConfigError(f"{where}: [case] regime {regime!r} is not one of {REGIMES}")
    mesh = _require(data, "mesh", where)
    if "path" not in mesh and "generator" not in mesh:
        raise ConfigError(f"{where}: [mesh] needs 'path' or 'generator'")
    material = dict(_require(data, "material", where))
    for key in ("E", "nu"):
        _require(material, key, f"{where}: [material]")
    params = dict(data.get("params", {}))
    bcs = []
    for i, bc in enumerate(data.get("bc", [])):
        w = f"{where}: bc[{i}]"
        kind = bc.get("kind", "dirichlet")
        if kind not in ("dirichlet", "neumann", "pressure"):
            raise ConfigError(f"{w}: unknown kind {kind!r}")
        spec = BCSpec(str(_require(bc, "tag", w)), kind, _require(bc, "value", w), tuple(bc.get("components", ())))
        try:
            if kind == "pressure":
                Expression(spec.value, params)
            else:
                vals = spec.value if isinstance(spec.value, list) else [spec.value]
                for v in vals:
                    Expression(v, params)
        except ConfigError as exc:
            raise ConfigError(f"{w}: {exc}") from None
        bcs.append(spec)
    for i, bc in enumerate(data.get("bc", [])):
        extra = set(bc) - {"tag", "kind", "value", "components"}
        if extra:
            raise ConfigError(f"{where}: bc[{i}] has unknown keys {sorted(extra)} (top-level keys must come "
                              f"before the first [[bc]] table)")
    penalty = data.get("penalty", {})
    return CaseConfig(
        path=path,
        regime=regime,
        name=case.get("name", ""),
        mesh=dict(mesh),
        material=material,
        bcs=bcs,
        beta=float(penalty.get("beta", 1.0)),
        candidates=penalty.get("candidates"),
        body_force=data.get("loads", {}).get("body_force"),
        params=params,
        quasistatic=dict(data.get("quasistatic", {})),
        dynamic=dict(data.get("dynamic", {})),
        convergence=dict(data.get("convergence", {})),
        output=dict(data.get("output", {})),
        forces=dict(data.get("forces", {})),
    )


def load_config(path) -> CaseConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(data, path)
