"""Shipped scenes: an empty corridor, a narrow doorway and a lateral intruder."""

from pydantic import BaseModel, ConfigDict

from app.errors import StereoAvoidError
from app.sim.world import Box, Scene, VehicleState


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    description: str
    scene: Scene
    start: VehicleState


def empty_corridor(speed: float = 0.5) -> Scenario:
    """Two side walls 3 m apart that never reach the centre of view."""
    walls = (
        Box(min=(-1.6, -1.5, -1.0), max=(-1.5, 1.5, 8.0), seed=11),
        Box(min=(1.5, -1.5, -1.0), max=(1.6, 1.5, 8.0), seed=12),
    )
    return Scenario(
        name="corridor",
        description="straight corridor, nothing ahead",
        scene=Scene(boxes=walls, bounds=((-3.0, -3.0, -2.0), (3.0, 3.0, 12.0))),
        start=VehicleState(speed=speed),
    )


def narrow_doorway(speed: float = 0.5) -> Scenario:
    """A wall 3 m ahead with a 1.6 m opening starting just right of the flight line.

    The part of the wall straight ahead sits right of the vehicle, so the
    only way through is a turn to the left.
    """
    wall = [
        Box(min=(0.1, -1.5, 3.0), max=(3.0, 1.5, 3.1), seed=21),
        Box(min=(-3.0, -1.5, 3.0), max=(-1.5, 1.5, 3.1), seed=22),
    ]
    return Scenario(
        name="doorway",
        description="wall with an opening to the left of the flight line",
        scene=Scene(boxes=tuple(wall), bounds=((-3.0, -3.0, -2.0), (3.0, 3.0, 6.0))),
        start=VehicleState(speed=speed),
    )


def lateral_intruder(speed: float = 0.5) -> Scenario:
    """A slab that cuts across from the right and closes in fast.

    Its inner edge jumps from beyond the centre rectangle (and the matching
    window around it) to inside it between t=0.9 s and t=1.0 s, when it is
    about 1.05 m ahead; two steps later it fills the flight line.
    """
    slab = Box(min=(2.55, -1.5, 3.05), max=(3.55, 1.5, 3.25), seed=31, velocity=(-2.5, 0.0, -1.5))
    return Scenario(
        name="intruder",
        description="obstacle moving in from the right region",
        scene=Scene(boxes=(slab,), bounds=((-6.0, -3.0, -2.0), (6.0, 3.0, 12.0))),
        start=VehicleState(speed=speed),
    )


SCENARIOS = {
    "corridor": empty_corridor,
    "doorway": narrow_doorway,
    "intruder": lateral_intruder,
}


def get_scenario(name: str, speed: float = 0.5) -> Scenario:
    try:
        return SCENARIOS[name](speed)
    except KeyError:
        raise StereoAvoidError(f"unknown scenario {name!r} (choose from {', '.join(SCENARIOS)})") from None
