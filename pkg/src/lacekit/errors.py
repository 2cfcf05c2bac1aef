"""Exception types shared across modules."""


class GuardError(RuntimeError):
    """A request exceeds a resource guard; the message carries the estimate."""
