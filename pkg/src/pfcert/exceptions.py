from typing import Any, Optional


class PfcertError(Exception):
    pass


class CaseParseError(PfcertError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelError(PfcertError, ValueError):
    pass


class NoConvergence(PfcertError):
    def __init__(
        self,
        residual: float,
        iterations: int,
        singular: bool = False,
        state: Optional[Any] = None,
    ) -> None:
        self.residual = residual
        self.iterations = iterations
        self.singular = singular
        self.state = state
        reason = "singular Jacobian" if singular else "iteration limit"
        super().__init__(
            f"power flow did not converge ({reason}) after {iterations} "
            f"iterations, residual {residual:.3e}"
        )


class RelaxationError(PfcertError, ValueError):
    pass


class PreconditionError(PfcertError):
    pass


class CertificationError(PfcertError):
    def __init__(self, message: str, result: Optional[Any] = None) -> None:
        self.result = result
        super().__init__(message)
