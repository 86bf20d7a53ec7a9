"""Exception hierarchy. Every error carries a machine-readable category
used by the CLI for its one-line failure output."""


class CamoError(Exception):
    category = "internal"


class InputError(CamoError):
    """An operation received input violating its contract."""

    category = "input"


class ConfigError(CamoError):
    category = "config"


class DataLoadError(CamoError):
    """Manifest or embedding ingestion failed; message names the offending entry."""

    category = "data"

    def __init__(self, message, entry_id=None):
        super().__init__(message)
        self.entry_id = entry_id


class GenerationError(CamoError):
    category = "generation"


class TrainAbortError(CamoError):
    """Non-finite loss during training; carries the ids of the offending batch."""

    category = "train"

    def __init__(self, message, batch_ids=()):
        super().__init__(message)
        self.batch_ids = list(batch_ids)
