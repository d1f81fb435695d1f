class ContractError(ValueError):
    """An operation was called outside its preconditions."""


class InfeasiblePriorError(ContractError):
    """The prior graph cannot be satisfied under the declared sparseness."""


class SizeCapError(ContractError):
    """A flattened table would exceed the configured size cap."""
