"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or key.

    ``key`` holds the dotted path of the offending entry when known.
    """

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key
        self.message = message


class EmptyPupilError(ValueError):
    """A pupil mask has no sample inside the representable band."""


class EmptyApertureError(ValueError):
    """No light-field view center lies inside the pupil disc."""

    def __init__(self, pupil):
        super().__init__(
            f"no light-field view inside aperture for pupil {pupil}; "
            "widen the diameter range (d_min) or densify the view grid"
        )
        self.pupil = pupil


class LightFieldError(ValueError):
    """Base class for light-field loading problems."""


class MetadataError(LightFieldError):
    pass


class MissingViewError(LightFieldError):
    def __init__(self, index, path):
        super().__init__(f"missing view {index}: {path}")
        self.index = index
        self.path = path


class InconsistentResolutionError(LightFieldError):
    pass


class DivergenceError(RuntimeError):
    """Optimization loss blew up or became non-finite."""


class MissingArtifactError(FileNotFoundError):
    pass
