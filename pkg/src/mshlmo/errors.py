"""Exception types shared across the registration pipeline."""


class RegistrationError(Exception):
    """Base class for all errors raised by this package."""


class ImageReadError(RegistrationError):
    """The file could not be opened or read at all."""


class FormatError(RegistrationError):
    """The file is readable but not in a supported format."""


class CorruptStreamError(RegistrationError):
    """The file claims a supported format but its content cannot be decoded."""


class SingularTransformError(RegistrationError):
    """An affine transform is (numerically) non-invertible or under-determined."""


class RegistrationFailureError(RegistrationError):
    """Matching produced fewer than 3 consistent correspondences."""
