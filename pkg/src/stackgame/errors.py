"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value violates its documented invariant."""


class ImpossibleObservationError(RuntimeError):
    """An observed follower action has probability zero under the current
    belief and prescription, so the Bayes posterior is undefined."""


class RolloutError(RuntimeError):
    """An episode could not be completed; carries the failing stage."""

    def __init__(self, message, stage):
        super().__init__(f"{message} (stage {stage})")
        self.stage = stage
