#__init__.py
__version__ = '0.1'


class SirdSwarmError(Exception):
    """Base class for every error raised by the package."""
    def __init__(self, message="SIRDSwarm error."):
        self.message = message
        super().__init__(message)
