"""Exception types shared across the toolkit."""


class DataFormatError(Exception):
    """Raised when an input file fails validation (magic, counts, payload)."""


class NumericalAbort(Exception):
    """Raised when training produces a non-finite loss.

    Carries the epoch/batch where the abort happened so runs can be triaged.
    """

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
