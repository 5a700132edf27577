'''
@description:
- Exception types raised across the package. Each one derives from a built-in
  exception so callers that only know ``ValueError``/``RuntimeError`` still catch them.
'''


class ShapeError(ValueError):
    '''Dimension mismatch between two operands.'''


class SpecError(ValueError):
    '''
    **Purpose:**
    - Malformed or invalid network specification.

    **Attributes:**
    - ``location (str | None)``: Where the problem is, e.g. ``line 3, column 7`` or ``layers[1].hidden_dim``.
    '''

    def __init__(self, message: str, location: str = None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class CycleError(SpecError):
    '''Edge relation of a DAG spec contains a cycle.'''

    def __init__(self, cycle: list, location: str = None):
        self.cycle = list(cycle)
        path = " -> ".join(str(node) for node in self.cycle + self.cycle[:1])
        super().__init__(f"edges contain a cycle: {path}", location)


class ResourceLimitError(RuntimeError):
    '''A computation would exceed a configured cap.'''

    def __init__(self, what: str, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(f"{what}: {count} exceeds the cap of {cap}")


class InvariantError(RuntimeError):
    '''Internal engine invariant violated (missing trace, bad processing order).'''


class DivergenceError(RuntimeError):
    '''Training produced a non-finite loss.'''

    def __init__(self, episode: int, loss: float):
        self.episode = episode
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at episode {episode}")


class VerificationError(RuntimeError):
    '''One or more required verification checks failed.'''

    def __init__(self, failed: list):
        self.failed = list(failed)
        super().__init__(f"verification failed: {', '.join(self.failed)}")
