class PlayGraderException(Exception):
    """Base exception. Raised like a log call: a message plus %-style arguments."""

    def __str__(self):
        if len(self.args) > 1 and isinstance(self.args[0], str):
            try:
                return self.args[0] % self.args[1:]
            except (TypeError, ValueError):
                pass
        return super().__str__()


class PlayGraderConfigurationException(PlayGraderException):
    pass


class PlayGraderParamException(PlayGraderException):
    pass


class PlayGraderUsageException(PlayGraderException):
    pass


class PlayGraderNumericException(PlayGraderException):
    """Raised when a state, output or loss stops being finite."""

    def __init__(self, message, *args, diagnostics=None):
        super().__init__(message, *args)
        self.diagnostics = diagnostics or {}


class PlayGraderParseException(PlayGraderParamException):

    def __init__(self, message, *args, line_number=None):
        super().__init__(message, *args)
        self.line_number = line_number


class PlayGraderIOException(PlayGraderException):
    pass
