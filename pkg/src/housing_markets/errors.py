from typing import Any


class HousingMarketError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidMarketError(HousingMarketError):
    def __init__(self, violations: list[Any]) -> None:
        self.violations = violations
        details = "; ".join(str(v) for v in violations)
        super().__init__(f"Invalid market: {details}")


class NotAPermutationError(HousingMarketError):
    pass


class SameAgentError(HousingMarketError):
    pass


class NotKAllocationError(HousingMarketError):
    pass


class ImprovementError(HousingMarketError):
    pass


class TieBreakExplosionError(HousingMarketError):
    def __init__(self, count: int, cap: int) -> None:
        self.count = count
        self.cap = cap
        super().__init__(f"{count} tie-break linearizations exceed the cap of {cap}; use the IP route instead")


class CoverExplosionError(HousingMarketError):
    def __init__(self, count: int, cap: int) -> None:
        self.count = count
        self.cap = cap
        super().__init__(f"{count} cycle covers exceed the cap of {cap}")


class LimitExceededError(HousingMarketError):
    def __init__(self, limit: int) -> None:
        self.limit = limit
        super().__init__(f"Cycle search visited more than {limit} partial paths")


class CycleEnumerationLimitError(LimitExceededError):
    pass


class CapExceededError(HousingMarketError):
    def __init__(self, cap: int) -> None:
        self.cap = cap
        super().__init__(f"More than {cap} feasible allocations")


class TooLargeError(HousingMarketError):
    def __init__(self, n: int, limit: int) -> None:
        self.n = n
        self.limit = limit
        super().__init__(f"Market with {n} agents exceeds the brute-force limit of {limit}")


class ModelError(HousingMarketError):
    pass


class LpFormatError(HousingMarketError):
    pass


class SolverLimitError(HousingMarketError):
    pass


class OracleMismatchError(HousingMarketError):
    pass
