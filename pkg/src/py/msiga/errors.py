#####################################################################################
# The MIT License (MIT)
#
# Copyright (c) 2024 The msiga developers. All rights reserved.
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in
# all copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT.  IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN
# THE SOFTWARE.
#####################################################################################
"""
Exception hierarchy shared by the library and the driver.

Every error carries the process exit code the driver reports for it:
1 for numerical failures, 2 for usage and input problems.
"""


class MsigaError(RuntimeError):
    exit_code = 1


class NumericalError(MsigaError):
    exit_code = 1


class UsageError(MsigaError, ValueError):
    exit_code = 2


class DegenerateElementError(NumericalError):
    def __init__(self, element, location, det=None):
        self.element = element
        self.location = location
        self.det = det
        msg = f"degenerate macro element {element} at xi={list(location)}"
        if det is not None:
            msg += f" (det J = {det:.3e})"
        super().__init__(msg)


class SingularTileError(NumericalError):
    def __init__(self, patch, location, det=None):
        self.patch = patch
        self.location = location
        msg = f"singular tile Jacobian in patch {patch} at theta={list(location)}"
        if det is not None:
            msg += f" (det J = {det:.3e})"
        super().__init__(msg)


class ProjectionNotConvergedError(NumericalError):
    def __init__(self, tol, degrees, error):
        self.tol = tol
        self.degrees = tuple(degrees)
        self.error = error
        super().__init__(
            f"projection did not converge below tol={tol:g}: "
            f"E_proj={error:.3e} at degrees {self.degrees}")


class ConvergenceError(NumericalError):
    def __init__(self, iterations, residuals, tol):
        self.iterations = iterations
        self.residuals = list(residuals)
        self.tol = tol
        last = self.residuals[-1] if self.residuals else float('nan')
        super().__init__(f"solver did not converge in {iterations} iterations "
                         f"(relative residual {last:.3e} > {tol:g})")


class DomainError(UsageError):
    pass


class ModelError(UsageError):
    pass


class TileNotConformingError(ModelError):
    def __init__(self, axis, points):
        self.axis = axis
        self.points = [tuple(p) for p in points]
        shown = ", ".join(str(tuple(round(x, 12) for x in p))
                          for p in self.points[:8])
        more = "" if len(self.points) <= 8 else f" (+{len(self.points) - 8} more)"
        super().__init__(f"tile not periodic-conforming along axis {axis + 1}: "
                         f"unmatched control points {shown}{more}")


class UnsupportedLoadError(UsageError):
    pass


class EmptyDirichletSetError(UsageError):
    pass


class DimensionMismatchError(UsageError):
    pass


class RationalMacroError(UsageError):
    pass


class CacheError(UsageError):
    pass


class CacheKeyMismatch(CacheError):
    """Cache file is valid but was built for another key."""
