"""Exception hierarchy shared across the package."""


class DenseAVError(Exception):
    """Base class for all package errors."""


class InvalidShapeError(DenseAVError, ValueError):
    def __init__(self, op, message):
        self.op = op
        super().__init__(f"{op}: {message}")


class NumericDomainError(DenseAVError, ArithmeticError):
    def __init__(self, op, message="non-finite input"):
        self.op = op
        super().__init__(f"{op}: {message}")


class ContractError(DenseAVError, RuntimeError):
    """A caller broke an operation precondition."""


class ValidationError(DenseAVError, ValueError):
    """Annotation or config content violates the schema."""

    def __init__(self, message, video_id=None, field=None):
        self.video_id = video_id
        self.field = field
        where = []
        if video_id is not None:
            where.append(f"video {video_id!r}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class OrderingError(ValidationError):
    """An event whose start is not strictly before its end."""


class UniquenessError(ValidationError):
    """Duplicate identifiers."""


class StratificationError(DenseAVError, ValueError):
    pass


class UndefinedRateError(DenseAVError, ValueError):
    pass


class GenerationError(DenseAVError, ValueError):
    pass


class FeatureFormatError(DenseAVError, ValueError):
    pass


class AlignmentError(DenseAVError, ValueError):
    pass


class CheckpointFormatError(DenseAVError, ValueError):
    pass


class TrainingDivergedError(DenseAVError, RuntimeError):
    def __init__(self, epoch, batch, terms):
        self.epoch = epoch
        self.batch = batch
        self.terms = dict(terms)
        detail = ", ".join(f"{k}={v!r}" for k, v in self.terms.items())
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {detail}")


class UnknownVideoError(DenseAVError, KeyError):
    pass
