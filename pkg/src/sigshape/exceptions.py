"""Exception hierarchy. Every error carries a stable machine-readable ``code``."""


class SigshapeError(Exception):
    code = "ERROR"

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details

    def to_record(self):
        record = {"error": self.code, "message": str(self)}
        record.update({k: _plain(v) for k, v in self.details.items()})
        return record


def _plain(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    return value


class InvalidMeshError(SigshapeError, ValueError):
    code = "INVALID_MESH"


class UnknownLabelError(InvalidMeshError):
    code = "UNKNOWN_LABEL"


class TangledMeshError(SigshapeError):
    code = "TANGLED_MESH"


class FixedBoundaryViolation(SigshapeError, ValueError):
    code = "FIXED_BOUNDARY_VIOLATION"


class ConvergenceError(SigshapeError):
    code = "NO_CONVERGENCE"


class TooManyConstraintsError(SigshapeError, ValueError):
    code = "TOO_MANY_CONSTRAINTS"


class NoFeasibleKKTError(SigshapeError):
    code = "NO_FEASIBLE_KKT"


class StepCollapseError(SigshapeError):
    code = "STEP_COLLAPSE"


class ConfigError(SigshapeError, ValueError):
    code = "CONFIG_ERROR"


class MeshFormatError(SigshapeError, ValueError):
    code = "PARSE_ERROR"
