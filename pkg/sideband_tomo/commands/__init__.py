class CommandError(Exception):
    """Failure with a message for the user and the process exit status."""

    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code
        self.message = message
