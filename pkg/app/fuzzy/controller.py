"""Avoidance controller: nine region depths in, pitch/yaw command out.

The primary fuzzy controller looks at the centre and the four cardinal
regions.  When the centre is blocked, every cardinal neighbour is near and
the primary output has cancelled out, a second controller runs on the
centre and the four corners with its rules relabelled 45 degrees and its
output rotated back into the image frame.
"""

import logging
import math
from enum import Enum
from functools import lru_cache
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from app.errors import InvalidDepthError, NoActivationError, RuleBaseError
from app.fuzzy.engine import (
    Clause,
    FuzzyRule,
    LinguisticVariable,
    MembershipFunction,
    OutputDistribution,
    RuleBase,
    defuzzify,
    infer_with_strengths,
    load_rulebase,
    mf_eval,
    relabel,
)
from app.stereo.regions import RegionDepths

logger = logging.getLogger("controller")

INPUT_TERMS = {
    "near": (0.0, 0.0, 0.25, 0.5),
    "medium": (0.25, 0.5, 0.5, 0.75),
    "far": (0.5, 0.75, 1.0, 1.0),
}
OUTPUT_TERMS = {
    "negative": (-1.0, -1.0, -0.5, 0.0),
    "zero": (-0.5, 0.0, 0.0, 0.5),
    "positive": (0.0, 0.5, 1.0, 1.0),
}

PRIMARY_INPUTS = ("center", "up", "down", "left", "right")
CARDINALS = ("up", "down", "left", "right")
# 45 degree counter-clockwise relabelling of the primary rule base
DIAGONAL_MAP = {
    "up": "up_left",
    "right": "up_right",
    "down": "down_right",
    "left": "down_left",
    "pitch": "pitch_r",
    "yaw": "yaw_r",
}

_NEAR = MembershipFunction.of(INPUT_TERMS["near"])
_FAR = MembershipFunction.of(INPUT_TERMS["far"])


class RulePreset(str, Enum):
    PAPER_LITERAL = "paper_literal"
    PAPER_CORRECTED = "paper_corrected"


class ActiveController(str, Enum):
    PRIMARY = "primary"
    DIAGONAL = "diagonal"


class ControllerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    normalization_span_m: float = Field(3.0, gt=0)
    # preset name or path to a custom primary rule-base JSON
    rules: str = RulePreset.PAPER_CORRECTED.value
    diagonal_trigger: float = Field(0.05, ge=0, le=1)
    diagonal_near_gate: float = Field(0.5, ge=0, le=1)
    samples: int = 1001


class SteerCommand(BaseModel):
    """pitch > 0 is up, yaw > 0 is right."""

    model_config = ConfigDict(frozen=True)

    pitch: float = Field(0.0, ge=-1, le=1)
    yaw: float = Field(0.0, ge=-1, le=1)

    @property
    def magnitude(self) -> float:
        return math.hypot(self.pitch, self.yaw)


class SteerDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: SteerCommand
    active_controller: ActiveController
    rule_strengths: dict[str, float]


def normalize_depth(d_m: float, span_m: float) -> float:
    if not d_m > 0:
        raise InvalidDepthError(f"depth must be > 0 (got {d_m})")
    return min(max(d_m / span_m, 0.0), 1.0)


def _when(*clauses: tuple[str, str]) -> tuple[Clause, ...]:
    return tuple(Clause(variable=v, term=t) for v, t in clauses)


def _rule(name: str, antecedent: tuple[Clause, ...], *consequents: tuple[str, str]) -> FuzzyRule:
    return FuzzyRule(antecedent=antecedent, consequents=consequents, name=name)


def _primary_rules(preset: RulePreset) -> list[FuzzyRule]:
    c_near = ("center", "near")
    rules = [
        _rule("R1", _when(("center", "far")), ("pitch", "zero"), ("yaw", "zero")),
        _rule("R2", _when(c_near, ("up", "near"), ("down", "far")), ("pitch", "negative")),
        _rule("R3", _when(c_near, ("down", "near"), ("up", "far")), ("pitch", "positive")),
        _rule("R4", _when(c_near, ("right", "near"), ("left", "far")), ("yaw", "negative")),
        _rule("R5", _when(c_near, ("left", "near"), ("right", "far")), ("yaw", "positive")),
    ]
    if preset is RulePreset.PAPER_LITERAL:
        rules += [
            _rule("R6", _when(c_near, ("right", "near")), ("yaw", "positive")),
            _rule("R7", _when(c_near, ("up", "near")), ("pitch", "positive")),
        ]
    else:
        rules += [
            _rule("R6", _when(c_near, ("left", "near")), ("yaw", "positive")),
            _rule("R7", _when(c_near, ("down", "near")), ("pitch", "positive")),
            _rule("R6m", _when(c_near, ("right", "near")), ("yaw", "negative")),
            _rule("R7m", _when(c_near, ("up", "near")), ("pitch", "negative")),
        ]
    # both ways open: take the right path, and upward for the vertical analog
    rules += [
        _rule("T1", _when(c_near, ("left", "far"), ("right", "far")), ("yaw", "positive")),
        _rule("T2", _when(c_near, ("up", "far"), ("down", "far")), ("pitch", "positive")),
    ]
    return rules


def _preset(name: str) -> RulePreset:
    try:
        return RulePreset(name.replace("-", "_"))
    except ValueError:
        raise RuleBaseError(
            f"unknown rule preset {name!r} (expected paper_literal or paper_corrected)"
        ) from None


def build_primary_rulebase(preset: RulePreset | str = RulePreset.PAPER_CORRECTED, samples: int = 1001) -> RuleBase:
    preset = _preset(preset.value if isinstance(preset, RulePreset) else preset)
    inputs = {
        name: LinguisticVariable(
            name=name,
            universe=(0.0, 1.0),
            terms={t: MembershipFunction.of(c) for t, c in INPUT_TERMS.items()},
        )
        for name in PRIMARY_INPUTS
    }
    outputs = {
        name: LinguisticVariable(
            name=name,
            universe=(-1.0, 1.0),
            terms={t: MembershipFunction.of(c) for t, c in OUTPUT_TERMS.items()},
        )
        for name in ("pitch", "yaw")
    }
    return RuleBase(inputs=inputs, outputs=outputs, rules=tuple(_primary_rules(preset)), q=samples)


def build_diagonal_rulebase(preset: RulePreset | str = RulePreset.PAPER_CORRECTED, samples: int = 1001) -> RuleBase:
    return relabel(build_primary_rulebase(preset, samples), DIAGONAL_MAP, prefix="D")


def rotate_back(pitch_r: float, yaw_r: float) -> tuple[float, float]:
    """Map a rotated-frame command back to image pitch/yaw, clamped to [-1, 1]."""
    k = math.sqrt(2) / 2
    pitch = (pitch_r + yaw_r) * k
    yaw = (yaw_r - pitch_r) * k
    return min(max(pitch, -1.0), 1.0), min(max(yaw, -1.0), 1.0)


def _resolve_rules(rules: str, samples: int) -> RuleBase:
    try:
        return build_primary_rulebase(rules, samples)
    except RuleBaseError:
        path = Path(rules)
        if not path.is_file():
            raise
    rb = load_rulebase(path)
    missing = set(PRIMARY_INPUTS) - set(rb.inputs) | {"pitch", "yaw"} - set(rb.outputs)
    if missing:
        raise RuleBaseError(f"{path}: a primary rule base must declare {sorted(missing)}")
    return rb


class AvoidanceController:
    def __init__(self, cfg: ControllerConfig):
        self.cfg = cfg
        self.primary = _resolve_rules(cfg.rules, cfg.samples)
        self.diagonal = relabel(self.primary, DIAGONAL_MAP, prefix="D")

    def _crisp(self, dist: OutputDistribution, rb: RuleBase) -> float:
        try:
            return defuzzify(dist, rb.defuzz)
        except NoActivationError:
            logger.debug("%s: no activation, using 0", dist.variable)
            return 0.0

    def _run(self, rb: RuleBase, inputs: dict[str, float], names: tuple[str, str]):
        dists, strengths = infer_with_strengths(rb, inputs)
        a, b = (self._crisp(dists[n], rb) for n in names)
        return a, b, dict(zip(rb.rule_names(), strengths))

    def _needs_diagonal(self, norm: dict[str, float], pitch: float, yaw: float) -> bool:
        return (
            mf_eval(_FAR, norm["center"]) < 1.0
            and math.hypot(pitch, yaw) < self.cfg.diagonal_trigger
            and all(mf_eval(_NEAR, norm[k]) >= self.cfg.diagonal_near_gate for k in CARDINALS)
        )

    def steer(self, depths: RegionDepths) -> SteerDecision:
        span = self.cfg.normalization_span_m
        norm = {name: normalize_depth(v, span) for name, v in depths.as_dict().items()}

        pitch, yaw, strengths = self._run(
            self.primary, {k: norm[k] for k in PRIMARY_INPUTS}, ("pitch", "yaw")
        )
        active = ActiveController.PRIMARY
        if self._needs_diagonal(norm, pitch, yaw):
            corner_inputs = {k: norm[k] for k in self.diagonal.referenced_inputs()}
            pitch_r, yaw_r, diag = self._run(self.diagonal, corner_inputs, ("pitch_r", "yaw_r"))
            pitch, yaw = rotate_back(pitch_r, yaw_r)
            strengths.update(diag)
            active = ActiveController.DIAGONAL

        pitch = min(max(pitch, -1.0), 1.0)
        yaw = min(max(yaw, -1.0), 1.0)
        logger.debug("steer %s -> pitch=%.3f yaw=%.3f (%s)", norm, pitch, yaw, active.value)
        return SteerDecision(
            command=SteerCommand(pitch=pitch, yaw=yaw),
            active_controller=active,
            rule_strengths=strengths,
        )


@lru_cache(maxsize=8)
def get_controller(cfg: ControllerConfig) -> AvoidanceController:
    return AvoidanceController(cfg)


def decide(depths: RegionDepths, cfg: ControllerConfig | None = None) -> SteerDecision:
    return get_controller(cfg or ControllerConfig()).steer(depths)


def steer(depths: RegionDepths, cfg: ControllerConfig | None = None) -> SteerCommand:
    return decide(depths, cfg).command
