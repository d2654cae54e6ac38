"""Error taxonomy for survcal.

Every failure mode callers are expected to distinguish gets its own class;
all inherit from SurvcalError so CLI entry points can catch one base.
"""


class SurvcalError(Exception):
    pass


# data ingestion / datasets

class MissingColumnError(SurvcalError):
    def __init__(self, name: str):
        super().__init__(f"missing column: {name!r}")
        self.name = name


class NonNumericValueError(SurvcalError):
    def __init__(self, row: int, column: str, value: str):
        super().__init__(f"non-numeric value {value!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column
        self.value = value


class InvalidEventFlagError(SurvcalError):
    def __init__(self, row: int, value: str):
        super().__init__(f"invalid event flag {value!r} at row {row} (expected 0 or 1)")
        self.row = row
        self.value = value


class EmptyDatasetError(SurvcalError):
    pass


class DegenerateTimesError(SurvcalError):
    pass


class InvalidRateError(SurvcalError):
    def __init__(self, what: str, value: float):
        super().__init__(f"invalid {what}: {value}")
        self.what = what
        self.value = value


class UnknownTableIdError(SurvcalError):
    def __init__(self, table_id: str):
        super().__init__(f"unknown counterexample id {table_id!r} (expected dcal, brier, or rps)")
        self.table_id = table_id


class InvalidSplitError(SurvcalError):
    pass


# estimators

class EmptyInputError(SurvcalError):
    pass


class NoEventsError(SurvcalError):
    pass


class ZeroReferenceSurvivalError(SurvcalError):
    def __init__(self, t: int):
        super().__init__(f"reference survival is 0 at t={t} while individuals remain at risk")
        self.t = t


# hazard model

class InvalidDimsError(SurvcalError):
    pass


class DimensionMismatchError(SurvcalError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"feature dimension mismatch: model expects {expected}, got {got}")
        self.expected = expected
        self.got = got


class EmptySubgroupError(SurvcalError):
    pass


class VersionMismatchError(SurvcalError):
    def __init__(self, got: str):
        super().__init__(f"unsupported model artifact version {got!r}")
        self.got = got


class CorruptArtifactError(SurvcalError):
    pass


# losses / calibration

class LengthMismatchError(SurvcalError):
    def __init__(self, a: int, b: int):
        super().__init__(f"curve length mismatch: {a} vs {b}")
        self.a = a
        self.b = b


class AllTimestepsSkippedError(SurvcalError):
    pass


class DegenerateDenominatorError(SurvcalError):
    pass


# subgroups

class UnknownFeatureError(SurvcalError):
    def __init__(self, name: str):
        super().__init__(f"unknown feature {name!r}")
        self.name = name


class NoCategoricalFeaturesError(SurvcalError):
    pass


class DuplicateNameError(SurvcalError):
    def __init__(self, name: str):
        super().__init__(f"duplicate subgroup name {name!r}")
        self.name = name


class EmptySubgroupOnTrainError(SurvcalError):
    def __init__(self, name: str):
        super().__init__(f"subgroup {name!r} has no members in the training split")
        self.name = name


# trainer

class NonFiniteLossError(SurvcalError):
    def __init__(self, iteration: int, detail: str):
        super().__init__(f"non-finite loss at outer iteration {iteration}: {detail}")
        self.iteration = iteration
        self.detail = detail


# metrics / comparison

class NoComparablePairsError(SurvcalError):
    pass


class MisalignedRunsError(SurvcalError):
    pass


class SubgroupParseError(SurvcalError):
    def __init__(self, line_no: int, detail: str):
        super().__init__(f"bad subgroup definition at line {line_no}: {detail}")
        self.line_no = line_no
        self.detail = detail
