"""Shared exception types."""


class DescryError(Exception):
    """Base class for all engine errors."""


class LoadError(DescryError):
    """Raised when an input file violates its schema or a record invariant.

    Carries a best-effort locus (path and line/record number) so callers can
    point the user at the offending input.
    """

    def __init__(self, message, path=None, line=None):
        locus = ""
        if path is not None:
            locus = f"{path}"
            if line is not None:
                locus += f":{line}"
            locus += ": "
        super().__init__(locus + message)
        self.path = path
        self.line = line
