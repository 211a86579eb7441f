"""Exception hierarchy shared across the package."""


class PovsatError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(PovsatError, ValueError):
    pass


class ShapeError(PovsatError, ValueError):
    pass


class UnsupportedError(PovsatError):
    pass


class DivergenceError(PovsatError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} in epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


class DataShortageError(PovsatError):
    """Not enough examples to satisfy an experiment's sampling request."""

    def __init__(self, message: str, available: dict):
        detail = ", ".join(f"{k}={v}" for k, v in available.items())
        super().__init__(f"{message} (available: {detail})")
        self.available = dict(available)


class EmptyCatalogError(PovsatError, ValueError):
    pass


class DegenerateDistributionError(PovsatError, ValueError):
    pass


# tile IO

class TileFormatError(PovsatError, ValueError):
    pass


class TileMagicError(TileFormatError):
    pass


class TileMaxvalError(TileFormatError):
    pass


class TileTruncatedError(TileFormatError):
    pass


class TileKindError(TileFormatError):
    pass


# checkpoints

class CheckpointFormatError(PovsatError, ValueError):
    pass


class CheckpointMagicError(CheckpointFormatError):
    pass


class CheckpointVersionError(CheckpointFormatError):
    pass


class CheckpointCorruptError(CheckpointFormatError):
    """Payload does not match the declared layer dimensions."""


class CheckpointTruncatedError(CheckpointCorruptError):
    pass


class CheckpointSizeError(CheckpointCorruptError):
    pass
