"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for every error raised by this package."""


# conversation

class UnknownAgent(EngineError):
    pass


class EmptyContent(EngineError):
    pass


class InvalidSwitch(EngineError):
    pass


class UnknownSession(EngineError):
    pass


# registry

class RegistryError(EngineError):
    pass


class DuplicateName(RegistryError):
    pass


class DanglingReference(RegistryError):
    def __init__(self, entity: str, referrer: str):
        super().__init__(f"{referrer} references unknown entity {entity!r}")
        self.entity = entity
        self.referrer = referrer


class CycleDetected(RegistryError):
    def __init__(self, path: list):
        super().__init__(f"sub-agent cycle: {' -> '.join(path)}")
        self.path = list(path)


class MalformedSchema(RegistryError):
    pass


class UnknownFunction(RegistryError):
    pass


# gateway

class ProviderError(EngineError):
    pass


class Timeout(ProviderError):
    pass


class RateLimited(ProviderError):
    pass


# prompt assembly

class UnknownPlaceholder(EngineError):
    pass


# task runner

class MissingArgument(EngineError):
    pass


class StepFailure(EngineError):
    pass


class NotWaiting(EngineError):
    pass


class TypeMismatch(EngineError):
    pass


class DuplicateAction(EngineError):
    pass


# orchestrator

class UnknownFunctionAtDispatch(EngineError):
    pass


# evaluation

class LengthMismatch(EngineError):
    pass


class EmptyLabels(EngineError):
    pass
