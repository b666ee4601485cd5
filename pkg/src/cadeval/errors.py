"""Exception hierarchy shared across the toolkit.

Every error that stems from bad input data or configuration derives from
:class:`InputError`; the CLI maps those to exit status 1.
"""


class InputError(ValueError):
    """Invalid or inconsistent input data."""


class DegenerateInputError(InputError):
    """Input is well-formed but too degenerate for the requested statistic."""


class ConfigError(InputError):
    """Invalid configuration values."""


class DatasetError(InputError):
    """Manifest or detection file failed validation.

    Args:
        message: What went wrong.
        location: Where it went wrong, e.g. ``dets.jsonl:12`` or
            ``manifest.json:images[3].width``.
    """

    def __init__(self, message: str, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)
