"""Exception hierarchy with machine-parsable error codes for the CLI."""


class AdaptRegError(Exception):
    code = "GENERIC"


class ParseError(AdaptRegError):
    code = "PARSE"

    def __init__(self, path, line_no, detail):
        super().__init__(f"{path}:{line_no}: {detail}")
        self.path = path
        self.line_no = line_no


class EmptyCorpusError(AdaptRegError):
    code = "EMPTY_CORPUS"


class ConfigError(AdaptRegError):
    code = "CONFIG"


class ShapeMismatchError(AdaptRegError):
    code = "SHAPE_MISMATCH"


class SaturatedSamplerError(AdaptRegError):
    code = "SATURATED_SAMPLER"


class NonFiniteGradientError(AdaptRegError):
    code = "NON_FINITE_GRADIENT"

    def __init__(self, side, entity_id, step=None):
        loc = f"{side} row {entity_id}" + (f" at step {step}" if step is not None else "")
        super().__init__(f"non-finite gradient entry for {loc}")
        self.side = side
        self.entity_id = entity_id
        self.step = step


class IncompatibleCheckpointError(AdaptRegError):
    code = "INCOMPATIBLE_CHECKPOINT"
