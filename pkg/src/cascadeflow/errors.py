"""Exception types raised across the package."""


class CascadeError(Exception):
    """Base class for user-facing errors (CLI maps these to exit code 2)."""


class SchemaError(CascadeError):
    pass


class UnknownCategory(CascadeError):
    def __init__(self, row: int, column: str, label: str):
        super().__init__(f"row {row}: unknown category {label!r} in column {column!r}")
        self.row, self.column, self.label = row, column, label


class NonNumericValue(CascadeError):
    def __init__(self, row: int, column: str, text: str):
        super().__init__(f"row {row}: non-numeric value {text!r} in column {column!r}")
        self.row, self.column, self.text = row, column, text


class RowArityMismatch(CascadeError):
    def __init__(self, row: int, expected: int, got: int):
        super().__init__(f"row {row}: expected {expected} cells, got {got}")
        self.row = row


class ConstantFeature(CascadeError):
    def __init__(self, column: str):
        super().__init__(f"numerical feature {column!r} is constant on the training rows")
        self.column = column


class NoMaskableFeatures(CascadeError):
    pass


class EmptyInput(CascadeError):
    pass


class SpecialCategoryHasNoSource(CascadeError):
    pass


class NonFiniteGradient(CascadeError):
    pass


class ShapeMismatch(CascadeError):
    pass


class EmptyAfterMissingDrop(CascadeError):
    def __init__(self, feature: str):
        super().__init__(f"feature {feature!r} has no observed values")
        self.feature = feature


class SingleClassTarget(CascadeError):
    pass


class EmptyTrainingSet(CascadeError):
    pass


class EncoderHashMismatch(CascadeError):
    pass
