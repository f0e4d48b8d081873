"""Mamdani fuzzy inference over trapezoidal membership functions.

Rule strength is a T-norm (or S-norm) fold of clause degrees, implication
clips each consequent term at that strength, and clipped terms are
aggregated per output variable over ``q`` evenly spaced samples of the
output universe.  Crisp values come from centroid or mean-of-maximum
defuzzification.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from pathlib import Path

import numpy as np
import skfuzzy as fuzz
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.errors import NoActivationError, RuleBaseError

logger = logging.getLogger("fuzzy")


class TNorm(str, Enum):
    MIN = "min"
    PRODUCT = "product"


class SNorm(str, Enum):
    MAX = "max"
    PROBABILISTIC_SUM = "probabilistic_sum"


class Aggregation(str, Enum):
    MAX = "max"
    BOUNDED_SUM = "bounded_sum"


class Defuzz(str, Enum):
    CENTROID = "centroid"
    MEAN_OF_MAX = "mean_of_max"


class Connective(str, Enum):
    AND = "and"
    OR = "or"


class MembershipFunction(BaseModel):
    """Trapezoid with corners a <= b <= c <= d; a triangle when b == c."""

    model_config = ConfigDict(frozen=True)

    a: float
    b: float
    c: float
    d: float

    @model_validator(mode="after")
    def _ordered(self):
        if not self.a <= self.b <= self.c <= self.d:
            raise ValueError(f"corners must satisfy a <= b <= c <= d, got {self.corners()}")
        return self

    @classmethod
    def of(cls, corners) -> "MembershipFunction":
        a, b, c, d = corners
        return cls(a=a, b=b, c=c, d=d)

    def corners(self) -> list[float]:
        return [self.a, self.b, self.c, self.d]

    def sample(self, x: np.ndarray) -> np.ndarray:
        return fuzz.trapmf(np.asarray(x, dtype=np.float64), self.corners())


def mf_eval(mf: MembershipFunction, x: float) -> float:
    return float(mf.sample(np.array([x], dtype=np.float64))[0])


def tnorm(a: float, b: float, kind: TNorm | str = TNorm.MIN) -> float:
    if TNorm(kind) is TNorm.MIN:
        return min(a, b)
    return a * b


def snorm(a: float, b: float, kind: SNorm | str = SNorm.MAX) -> float:
    if SNorm(kind) is SNorm.MAX:
        return max(a, b)
    return a + b - a * b


class LinguisticVariable(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    universe: tuple[float, float]
    terms: dict[str, MembershipFunction]

    @model_validator(mode="after")
    def _universe(self):
        lo, hi = self.universe
        if not lo < hi:
            raise ValueError(f"{self.name}: universe_lo must be below universe_hi")
        if not self.terms:
            raise ValueError(f"{self.name}: at least one term is required")
        return self

    def positions(self, q: int) -> np.ndarray:
        """``q`` evenly spaced samples, exactly mirror-symmetric about the midpoint."""
        lo, hi = self.universe
        t = np.linspace(-1.0, 1.0, q)
        t = (t - t[::-1]) / 2
        return (lo + hi) / 2 + (hi - lo) / 2 * t


class Clause(BaseModel):
    model_config = ConfigDict(frozen=True)

    variable: str
    term: str
    negated: bool = False


class FuzzyRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    antecedent: tuple[Clause, ...] = Field(..., min_length=1)
    consequents: tuple[tuple[str, str], ...] = Field(..., min_length=1)
    connective: Connective = Connective.AND
    name: str = ""


@dataclass(frozen=True, eq=False)
class OutputDistribution:
    variable: str
    positions: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.positions.shape:
            raise RuleBaseError(f"{self.variable}: positions and values differ in length")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise RuleBaseError(f"{self.variable}: membership samples must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class RuleBase:
    inputs: dict[str, LinguisticVariable]
    outputs: dict[str, LinguisticVariable]
    rules: tuple[FuzzyRule, ...]
    and_kind: TNorm = TNorm.MIN
    or_kind: SNorm = SNorm.MAX
    aggregation: Aggregation = Aggregation.MAX
    defuzz: Defuzz = Defuzz.CENTROID
    q: int = 1001
    _samples: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        try:
            object.__setattr__(self, "and_kind", TNorm(self.and_kind))
            object.__setattr__(self, "or_kind", SNorm(self.or_kind))
            object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
            object.__setattr__(self, "defuzz", Defuzz(self.defuzz))
        except ValueError as e:
            raise RuleBaseError(str(e)) from e
        if self.q < 3 or self.q % 2 == 0:
            raise RuleBaseError(f"q must be odd and >= 3, got {self.q}")
        shared = set(self.inputs) & set(self.outputs)
        if shared:
            raise RuleBaseError(f"variables declared as both input and output: {sorted(shared)}")
        for i, rule in enumerate(self.rules):
            label = rule.name or f"rule {i + 1}"
            for clause in rule.antecedent:
                self._check_term(self.inputs, clause.variable, clause.term, label)
            for var, term in rule.consequents:
                self._check_term(self.outputs, var, term, label)
        for name, var in self.outputs.items():
            z = var.positions(self.q)
            self._samples[name] = (z, {t: mf.sample(z) for t, mf in var.terms.items()})

    @staticmethod
    def _check_term(variables: dict[str, LinguisticVariable], var: str, term: str, label: str) -> None:
        if var not in variables:
            raise RuleBaseError(f"{label}: unknown variable {var!r}")
        if term not in variables[var].terms:
            raise RuleBaseError(f"{label}: variable {var!r} has no term {term!r}")

    def referenced_inputs(self) -> set[str]:
        return {c.variable for rule in self.rules for c in rule.antecedent}

    def rule_names(self) -> list[str]:
        return [rule.name or f"rule_{i + 1}" for i, rule in enumerate(self.rules)]


def rule_strengths(rb: RuleBase, crisp_inputs: dict[str, float]) -> list[float]:
    missing = rb.referenced_inputs() - set(crisp_inputs)
    if missing:
        raise RuleBaseError(f"missing crisp inputs: {sorted(missing)}")
    degrees: dict[tuple[str, str], float] = {}
    strengths = []
    for rule in rb.rules:
        clause_degrees = []
        for clause in rule.antecedent:
            key = (clause.variable, clause.term)
            if key not in degrees:
                mf = rb.inputs[clause.variable].terms[clause.term]
                degrees[key] = mf_eval(mf, crisp_inputs[clause.variable])
            deg = degrees[key]
            clause_degrees.append(1.0 - deg if clause.negated else deg)
        if rule.connective is Connective.AND:
            strengths.append(reduce(lambda a, b: tnorm(a, b, rb.and_kind), clause_degrees))
        else:
            strengths.append(reduce(lambda a, b: snorm(a, b, rb.or_kind), clause_degrees))
    return strengths


def infer_with_strengths(
    rb: RuleBase, crisp_inputs: dict[str, float]
) -> tuple[dict[str, OutputDistribution], list[float]]:
    strengths = rule_strengths(rb, crisp_inputs)
    acc = {name: np.zeros(rb.q) for name in rb.outputs}
    for rule, s in zip(rb.rules, strengths):
        if s <= 0:
            continue
        for var, term in rule.consequents:
            clipped = np.fmin(rb._samples[var][1][term], s)
            if rb.aggregation is Aggregation.MAX:
                acc[var] = np.fmax(acc[var], clipped)
            else:
                acc[var] = np.minimum(1.0, acc[var] + clipped)
    dists = {
        name: OutputDistribution(variable=name, positions=rb._samples[name][0], values=values)
        for name, values in acc.items()
    }
    return dists, strengths


def infer(rb: RuleBase, crisp_inputs: dict[str, float]) -> dict[str, OutputDistribution]:
    return infer_with_strengths(rb, crisp_inputs)[0]


def defuzz_centroid(dist: OutputDistribution) -> float:
    total = float(dist.values.sum())
    if total <= 0:
        raise NoActivationError(f"{dist.variable}: no rule activated this output")
    return float((dist.positions * dist.values).sum() / total)


def defuzz_mean_of_max(dist: OutputDistribution) -> float:
    if not np.any(dist.values > 0):
        raise NoActivationError(f"{dist.variable}: no rule activated this output")
    return float(fuzz.defuzz(dist.positions, dist.values, "mom"))


def defuzzify(dist: OutputDistribution, method: Defuzz | str = Defuzz.CENTROID) -> float:
    if Defuzz(method) is Defuzz.CENTROID:
        return defuzz_centroid(dist)
    return defuzz_mean_of_max(dist)


def evaluate(rb: RuleBase, crisp_inputs: dict[str, float]) -> dict[str, float | None]:
    """Crisp value per output; ``None`` where nothing fired."""
    out = {}
    for name, dist in infer(rb, crisp_inputs).items():
        try:
            out[name] = defuzzify(dist, rb.defuzz)
        except NoActivationError:
            out[name] = None
    return out


def relabel(rb: RuleBase, mapping: dict[str, str], prefix: str = "") -> RuleBase:
    """Rename variables throughout a rule base; names missing from ``mapping`` are kept.

    ``prefix`` is prepended to every rule name.
    """

    def rename(var: LinguisticVariable) -> LinguisticVariable:
        return var.model_copy(update={"name": mapping.get(var.name, var.name)})

    rules = tuple(
        rule.model_copy(update={
            "antecedent": tuple(
                c.model_copy(update={"variable": mapping.get(c.variable, c.variable)})
                for c in rule.antecedent
            ),
            "consequents": tuple((mapping.get(v, v), t) for v, t in rule.consequents),
            "name": prefix + name,
        })
        for rule, name in zip(rb.rules, rb.rule_names())
    )
    return RuleBase(
        inputs={mapping.get(k, k): rename(v) for k, v in rb.inputs.items()},
        outputs={mapping.get(k, k): rename(v) for k, v in rb.outputs.items()},
        rules=rules,
        and_kind=rb.and_kind,
        or_kind=rb.or_kind,
        aggregation=rb.aggregation,
        defuzz=rb.defuzz,
        q=rb.q,
    )


# ---------------------------------------------------------------------------
# Rule-base file format
# ---------------------------------------------------------------------------


class _VariableSpec(BaseModel):
    name: str
    universe: tuple[float, float]
    terms: dict[str, tuple[float, float, float, float]]
    role: str | None = None


class _RuleSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    if_: list[list[str]] = Field(..., alias="if", min_length=1)
    then: list[tuple[str, str]] = Field(..., min_length=1)
    connective: Connective = Connective.AND
    name: str = ""


class _RuleBaseSpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    variables: list[_VariableSpec]
    rules: list[_RuleSpec]
    and_: TNorm = Field(TNorm.MIN, alias="and")
    or_: SNorm = Field(SNorm.MAX, alias="or")
    aggregation: Aggregation = Aggregation.MAX
    defuzz: Defuzz = Defuzz.CENTROID
    q: int = 1001


def _clause(raw: list[str]) -> Clause:
    if len(raw) == 2:
        return Clause(variable=raw[0], term=raw[1])
    if len(raw) == 3 and raw[2] == "not":
        return Clause(variable=raw[0], term=raw[1], negated=True)
    raise RuleBaseError(f"clause must be [var, term] or [var, term, \"not\"], got {raw}")


def rulebase_from_dict(data: dict) -> RuleBase:
    try:
        spec = _RuleBaseSpec.model_validate(data)
        rules = tuple(
            FuzzyRule(
                antecedent=tuple(_clause(c) for c in r.if_),
                consequents=tuple(r.then),
                connective=r.connective,
                name=r.name,
            )
            for r in spec.rules
        )
        consequent_vars = {v for rule in rules for v, _ in rule.consequents}
        inputs, outputs = {}, {}
        for v in spec.variables:
            var = LinguisticVariable(
                name=v.name,
                universe=v.universe,
                terms={t: MembershipFunction.of(c) for t, c in v.terms.items()},
            )
            role = v.role or ("output" if v.name in consequent_vars else "input")
            if role not in ("input", "output"):
                raise RuleBaseError(f"{v.name}: role must be input or output, got {role!r}")
            target = outputs if role == "output" else inputs
            if v.name in inputs or v.name in outputs:
                raise RuleBaseError(f"variable {v.name!r} declared twice")
            target[v.name] = var
    except ValidationError as e:
        raise RuleBaseError(f"malformed rule base: {e}") from e
    return RuleBase(
        inputs=inputs,
        outputs=outputs,
        rules=rules,
        and_kind=spec.and_,
        or_kind=spec.or_,
        aggregation=spec.aggregation,
        defuzz=spec.defuzz,
        q=spec.q,
    )


def rulebase_to_dict(rb: RuleBase) -> dict:
    def var_dict(v: LinguisticVariable, role: str) -> dict:
        return {
            "name": v.name,
            "universe": list(v.universe),
            "terms": {t: mf.corners() for t, mf in v.terms.items()},
            "role": role,
        }

    def clause(c: Clause) -> list[str]:
        return [c.variable, c.term, "not"] if c.negated else [c.variable, c.term]

    return {
        "variables": [var_dict(v, "input") for v in rb.inputs.values()]
        + [var_dict(v, "output") for v in rb.outputs.values()],
        "rules": [
            {
                "name": r.name,
                "if": [clause(c) for c in r.antecedent],
                "then": [list(t) for t in r.consequents],
                "connective": r.connective.value,
            }
            for r in rb.rules
        ],
        "and": rb.and_kind.value,
        "or": rb.or_kind.value,
        "aggregation": rb.aggregation.value,
        "defuzz": rb.defuzz.value,
        "q": rb.q,
    }


def load_rulebase(path: str | Path) -> RuleBase:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise RuleBaseError(f"{path}: invalid JSON ({e})") from e
    rb = rulebase_from_dict(data)
    logger.info("Loaded rule base %s (%d rules)", path, len(rb.rules))
    return rb
