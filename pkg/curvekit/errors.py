class CurveKitError(Exception):
    pass


class ValidationError(CurveKitError, ValueError):
    def __init__(self, message: str, *, bond_id: str | None = None, field: str | None = None) -> None:
        prefix = ""
        if bond_id is not None:
            prefix = f"bond '{bond_id}'"
            if field is not None:
                prefix += f" field '{field}'"
            prefix += ": "
        elif field is not None:
            prefix = f"field '{field}': "
        super().__init__(prefix + message)
        self.bond_id = bond_id
        self.field = field


class SnapshotParseError(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ComputationError(CurveKitError, RuntimeError):
    pass


class NoSolutionError(ComputationError):
    def __init__(self, message: str, *, bond_id: str | None = None) -> None:
        super().__init__(f"bond '{bond_id}': {message}" if bond_id is not None else message)
        self.bond_id = bond_id


class FitError(ComputationError):
    pass


class SingularSystemError(FitError):
    def __init__(self, message: str, *, condition_number: float) -> None:
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class InvalidDiscountError(ComputationError):
    def __init__(self, t: float, discount: float) -> None:
        super().__init__(f"estimated discount factor {discount:.6g} at t={t:.6g} is not positive")
        self.t = t
        self.discount = discount


class DivergenceError(FitError):
    def __init__(self, *, epoch: int, bond_index: int, loss: float) -> None:
        super().__init__(f"training diverged at epoch {epoch}, bond index {bond_index} (loss={loss})")
        self.epoch = epoch
        self.bond_index = bond_index
        self.loss = loss
