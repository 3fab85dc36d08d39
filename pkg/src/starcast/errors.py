"""Exception hierarchy shared by every starcast module."""


class StarcastError(Exception):
    """Base class for all errors raised by this package."""


class UnsupportedSecurityLevel(StarcastError):
    pass


class MalformedLabel(StarcastError):
    pass


class PolicySyntaxError(StarcastError):
    """Raised by the policy parser; ``position`` is a 0-based character offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class InvalidAttribute(StarcastError):
    pass


class PolicyNotSatisfied(StarcastError):
    def __init__(self, message="policy not satisfied"):
        super().__init__(message)


class EpochMismatch(StarcastError):
    def __init__(self, key_epoch, header_epoch):
        super().__init__(f"epoch mismatch: key epoch {key_epoch}, ciphertext epoch {header_epoch}")
        self.key_epoch = key_epoch
        self.header_epoch = header_epoch


class ModeMismatch(StarcastError):
    pass


class AuthenticationFailure(StarcastError):
    def __init__(self, message="authentication failure"):
        super().__init__(message)


class MalformedInput(StarcastError):
    """Deserialization failure; ``offset`` points at the first offending byte."""

    def __init__(self, message, offset=None):
        where = "" if offset is None else f" (offset {offset})"
        super().__init__(f"{message}{where}")
        self.offset = offset


class UnsupportedVersion(MalformedInput):
    pass


class RegistryError(StarcastError):
    pass


class KeystoreUnavailable(RegistryError):
    """The keystore directory is missing or its registry cannot be read."""
