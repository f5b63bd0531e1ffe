"""Exception types raised across the package."""


class ZRPError(Exception):
    """Base class for all package errors."""


# --- rate validation ---

class NonpositiveRate(ZRPError):
    def __init__(self, k, value):
        self.k = k
        self.value = value
        super().__init__(f"g({k}) = {value} violates g(0)=0, g(k)>0 for k>=1")


class ConditionLGViolated(ZRPError):
    def __init__(self, n, increment, bound):
        self.n = n
        self.increment = increment
        self.bound = bound
        super().__init__(
            f"|g({n+1})-g({n})| = {increment} exceeds declared Lipschitz bound {bound}"
        )


class ConditionMViolated(ZRPError):
    def __init__(self, n, gap, b):
        self.n = n
        self.gap = gap
        self.b = b
        super().__init__(f"g({n}+{b})-g({n}) = {gap} <= 0: no uniform monotone gap")


# --- thermodynamic series ---

class TruncationInsufficient(ZRPError):
    pass


class OutOfRange(ZRPError):
    pass


# --- canonical ensembles / generators ---

class StateSpaceTooLarge(ZRPError):
    def __init__(self, n_states, cap):
        self.n_states = n_states
        self.cap = cap
        super().__init__(f"{n_states} states exceeds cap {cap}")


class NotReversible(ZRPError):
    pass


# --- dynamics ---

class DeadlockedState(ZRPError):
    pass


class EventBudgetExceeded(ZRPError):
    def __init__(self, cap):
        self.cap = cap
        super().__init__(f"event budget {cap} exhausted before reaching the time horizon")


# --- PDE / SDE ---

class CFLFailure(ZRPError):
    pass


class NegativeDensity(ZRPError):
    pass


# --- analysis ---

class UnsupportedKernel(ZRPError):
    pass


class InsufficientSnapshots(ZRPError):
    pass


class EmptySample(ZRPError):
    pass


class GridMismatch(ZRPError):
    pass


# --- CLI / config ---

class ConfigError(ZRPError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownBuiltin(ZRPError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown builtin name {name!r}")
