"""Exception hierarchy shared by all reduction routines."""


class DaemorError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(DaemorError, ValueError):
    pass


class ValidationFailed(DaemorError, ValueError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        msg = "; ".join(str(d) for d in self.diagnostics) or "validation failed"
        super().__init__(msg)


class SingularShift(DaemorError, ArithmeticError):
    """``sigma*E - A`` failed the pivot criterion (sigma is a pole)."""

    def __init__(self, sigma, detail=""):
        self.sigma = complex(sigma)
        text = f"shift {self.sigma} is (numerically) a generalized eigenvalue"
        super().__init__(text + (f": {detail}" if detail else ""))


class SingularReducedPencil(SingularShift):
    pass


class SingularSaddle(SingularShift):
    pass


class SingularMatrix(DaemorError, ArithmeticError):
    def __init__(self, what, detail=""):
        self.what = what
        super().__init__(f"{what} is singular" + (f" ({detail})" if detail else ""))


class SingularReducedE(SingularMatrix):
    def __init__(self, detail=""):
        super().__init__(
            "reduced E",
            detail or "lower the reduced order r (need rank(E) > r)",
        )


class SingularA22(SingularMatrix):
    def __init__(self, detail=""):
        super().__init__("A22", detail)


class SingularSchurComplement(SingularMatrix):
    def __init__(self, detail=""):
        super().__init__("E11 - E12 A22^-1 A21", detail)


class SingularE11(SingularMatrix):
    def __init__(self, detail=""):
        super().__init__("E11", detail)


class SingularProjectedGram(SingularMatrix):
    def __init__(self, detail=""):
        super().__init__("A21 E11^-1 A12", detail)


class DefectivePencil(DaemorError, ArithmeticError):
    pass


class EmptyBasis(DaemorError, ValueError):
    pass


class SingularPencil(DaemorError, ArithmeticError):
    pass


class DenseLimitExceeded(DaemorError, MemoryError):
    def __init__(self, n, limit):
        self.n, self.limit = n, limit
        super().__init__(f"order {n} exceeds dense limit {limit}")


class UnstableSystem(DaemorError, ValueError):
    pass


class MaxIterExceeded(DaemorError, RuntimeError):
    pass


class ParseError(DaemorError, ValueError):
    def __init__(self, path, line=None, detail=""):
        self.path, self.line = str(path), line
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"cannot parse {where}" + (f": {detail}" if detail else ""))


class InvalidParams(DaemorError, ValueError):
    pass


class MethodStructureMismatch(DaemorError, ValueError):
    pass
