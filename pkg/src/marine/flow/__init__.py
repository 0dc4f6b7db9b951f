"""Flow-aware marine navigation laboratory"""
import enum
import logging
import math

_LOGGER = logging.getLogger(__name__)

ACTION_LIMIT = 0.1
CONTROL_DT = 0.25
TWO_PI = 2.0 * math.pi


class MarineFlowException(Exception):
    pass


class ConfigError(MarineFlowException):
    pass


class GenerationFailed(MarineFlowException):
    def __init__(self, what: str, attempts: int):
        self.what = what
        self.attempts = attempts
        super().__init__(
            "Unable to place {} after {} attempts, config is over-constrained".format(
                what, attempts
            )
        )


class ShapeMismatch(MarineFlowException, ValueError):
    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = shapes
        super().__init__(
            "Shape mismatch in {}: {}".format(
                op, " vs ".join(str(tuple(shape)) for shape in shapes)
            )
        )


class CheckpointError(MarineFlowException):
    pass


class PolicyNotAvailable(MarineFlowException):
    pass


class SingularityKind(enum.Enum):
    SOURCE = "source"
    SINK = "sink"
    VORTEX = "vortex"


class ObstacleLayer(enum.Enum):
    SUBMERGED_STATIC = "submerged_static"
    ABOVE_WATER_STATIC = "above_water_static"
    ABOVE_WATER_DYNAMIC = "above_water_dynamic"

    @property
    def above_water(self) -> bool:
        return self is not ObstacleLayer.SUBMERGED_STATIC

    @property
    def dynamic(self) -> bool:
        return self is ObstacleLayer.ABOVE_WATER_DYNAMIC


class StepFlag(enum.Enum):
    NONE = "none"
    COLLISION = "collision"
    GOAL = "goal"
    TIMEOUT = "timeout"

    @property
    def terminal(self) -> bool:
        return self is not StepFlag.NONE


class Outcome(enum.Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"

    @staticmethod
    def from_flag(flag: StepFlag) -> "Outcome":
        if flag is StepFlag.GOAL:
            return Outcome.SUCCESS
        if flag is StepFlag.COLLISION:
            return Outcome.COLLISION
        if flag is StepFlag.TIMEOUT:
            return Outcome.TIMEOUT
        raise ValueError("Flag {} does not end an episode".format(flag))


class PolicyName(enum.Enum):
    APF = "apf"
    ORCA = "orca"
    MARINEFORMER = "marineformer"
    RANDOM = "random"


class RunMode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"
    ROLLOUT = "rollout"
    GRADCHECK = "gradcheck"
