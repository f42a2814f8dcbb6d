"""Domain error hierarchy shared by every service in the federation."""


class FederationError(Exception):
    """Base class for all domain errors raised by this package."""


# --- model / serialization ---

class InvalidEntity(FederationError):
    pass


class MalformedEncoding(FederationError):
    pass


# --- repository access ---

class Forbidden(FederationError):
    pass


class NotFound(FederationError):
    pass


class AlreadyExists(FederationError):
    pass


class VersionConflict(FederationError):
    pass


class PathNotFound(FederationError):
    pass


class TypeMismatch(FederationError):
    pass


# --- registry / discovery ---

class WrongOrganization(FederationError):
    pass


class SourceUnreachable(FederationError):
    pass


# --- clone engine / snapshots ---

class VersionGone(FederationError):
    pass


class SelfClone(FederationError):
    pass


class NotARemoteReference(FederationError):
    pass


class UnknownCommit(FederationError):
    pass


class DirtyCheckout(FederationError):
    pass


# --- event bus ---

class BusClosed(FederationError):
    pass


class MalformedPattern(FederationError):
    pass


# --- workflow engine ---

class XmlMalformed(FederationError):
    pass


class UnsupportedElement(FederationError):
    def __init__(self, names):
        if isinstance(names, str):
            names = [names]
        self.names = list(names)
        super().__init__("unsupported BPMN element(s): " + ", ".join(self.names))


class GraphInvalid(FederationError):
    pass


class BadExpression(FederationError):
    def __init__(self, text, position):
        self.text = text
        self.position = position
        super().__init__(f"bad condition expression at {position}: {text!r}")


class UnknownProcess(FederationError):
    pass


class TaskNotOpen(FederationError):
    pass


class WrongGroup(FederationError):
    pass


class FormValidation(FederationError):
    def __init__(self, field_errors):
        self.field_errors = list(field_errors)
        super().__init__("form validation failed: " + "; ".join(self.field_errors))


# --- configuration ---

class ConfigInvalid(FederationError):
    pass
