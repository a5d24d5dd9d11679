class ConfigError(ValueError):
    """Invalid or unresolvable experiment configuration."""


class CapExceeded(RuntimeError):
    """A size or runtime guard refused to continue."""


class DivergenceError(RuntimeError):
    """An optimiser's loss ran away from its starting value."""
