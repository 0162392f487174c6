"""Declarative scenario files (TOML).

A scenario declares the jet space, an optional equation, the domain of the
operators, named operator literals and ansatz defaults::

    name = "kdv"
    independents = ["x"]

    [[fibres]]
    name = "u"

    [domain]
    parity = "odd"        # covectors; "even" for a plain vector bundle
    dim = 1

    [operators]
    A1 = "D_x"
    A2 = "-1/2*D_xxx + 2*u*D_x + u_x"

    [ansatz]              # all keys optional
    degree = 2
    exp_atoms = []
    on_shell = false

    [magri]
    pair = ["A1", "A2"]
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .expr import Fibre, JetContext
from .gamma import AnsatzSpec, default_spec
from .jetcalc import Equation, Space, covectors
from .operators import OperatorTuple, TotalOperator


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    ctx: JetContext
    domain: Space
    operators: dict
    equation: Equation | None = None
    ansatz: dict = field(default_factory=dict)
    magri_pair: tuple | None = None
    default_ops: tuple = ()

    def tuple_of(self, names) -> OperatorTuple:
        names = list(names)
        if not names:
            raise ScenarioError("no operators selected")
        missing = [n for n in names if n not in self.operators]
        if missing:
            raise ScenarioError(f"unknown operators: {', '.join(missing)}")
        return OperatorTuple([self.operators[n] for n in names], names)

    def spec(self, ops: OperatorTuple, *, order=None, degree=None, on_shell=None, **extra) -> AnsatzSpec:
        use_eq = self.ansatz.get("on_shell", False) if on_shell is None else on_shell
        kwargs = {
            "degree": degree if degree is not None else self.ansatz.get("degree", 2),
            "exp_atoms": tuple(self.ansatz.get("exp_atoms", ())),
            "base_functions": tuple(self.ansatz.get("base_functions", ())),
            "equation": self.equation if use_eq else None,
        }
        if "jet_order" in self.ansatz:
            kwargs["jet_order"] = self.ansatz["jet_order"]
        kwargs.update(extra)
        spec = default_spec(ops, **kwargs)
        order = order if order is not None else self.ansatz.get("order")
        return spec.with_order(order) if order is not None else spec


def _require(data: dict, key: str, kind):
    if key not in data:
        raise ScenarioError(f"missing key {key!r}")
    value = data[key]
    if not isinstance(value, kind):
        raise ScenarioError(f"key {key!r} has the wrong type")
    return value


def scenario_from_dict(data: dict, default_name: str = "scenario") -> Scenario:
    independents = _require(data, "independents", list)
    fibres = []
    for entry in _require(data, "fibres", list):
        if isinstance(entry, str):
            entry = {"name": entry}
        fibres.append(Fibre(entry["name"], entry.get("parity", "even")))
    try:
        ctx = JetContext(tuple(independents), tuple(fibres), tuple(data.get("scalars", ())))
    except (ValueError, KeyError) as exc:
        raise ScenarioError(str(exc)) from None
    dom = data.get("domain", {})
    parity = dom.get("parity", "even")
    dim = dom.get("dim", len(ctx.dependents) if parity == "odd" else 1)
    if parity == "odd":
        if dim != len(ctx.dependents):
            raise ScenarioError("a covector domain has one component per dependent fibre")
        domain = covectors(ctx)
    elif parity == "even":
        domain = Space(dom.get("name", "xi"), dim, "even")
    else:
        raise ScenarioError(f"domain parity must be 'even' or 'odd', got {parity!r}")
    equation = None
    if "equation" in data:
        equation = Equation.from_strings(ctx, data["equation"].get("rules", ()))
    operators = {}
    for name, text in _require(data, "operators", dict).items():
        operators[name] = TotalOperator.parse(ctx, text, domain)
    ansatz = dict(data.get("ansatz", {}))
    pair = data.get("magri", {}).get("pair")
    if pair is not None:
        if len(pair) != 2 or any(p not in operators for p in pair):
            raise ScenarioError("magri.pair must name two declared operators")
        pair = tuple(pair)
    default_ops = tuple(data.get("defaults", {}).get("ops", operators))
    return Scenario(data.get("name", default_name), ctx, domain, operators, equation, ansatz, pair, default_ops)


def bundled_scenarios() -> list:
    root = resources.files("jetgamma") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".toml"))


def _read(path: str) -> tuple:
    p = Path(path)
    if p.is_file():
        return p.read_text(), p.stem
    name = p.name if p.name.endswith(".toml") else p.name + ".toml"
    res = resources.files("jetgamma") / "scenarios" / name
    if res.is_file():
        return res.read_text(), Path(name).stem
    raise ScenarioError(f"no such scenario file: {path}")


def load_toml(path: str) -> tuple:
    text, stem = _read(path)
    try:
        return tomllib.loads(text), stem
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def load_scenario(path: str) -> Scenario:
    """Load a scenario file; bare names such as ``kdv`` resolve to bundled files."""
    data, stem = load_toml(path)
    return scenario_from_dict(data, stem)


@dataclass
class Transform:
    g: TotalOperator
    g_inverse: TotalOperator
    base_functions: tuple = ()


def load_transform(path: str, scenario: Scenario) -> Transform:
    data, _ = load_toml(path)
    ctx, dom = scenario.ctx, scenario.domain
    g = TotalOperator.parse(ctx, _require(data, "g", str), dom, dom)
    gi = TotalOperator.parse(ctx, _require(data, "g_inverse", str), dom, dom)
    return Transform(g, gi, tuple(data.get("base_functions", ())))
