"""Independent reference formulas used only by the test-suite."""

import math

import numpy as np


def squeezed_vacuum_echo(mu: float, delta: float, t):
    """Exact return probability of the vacuum under ``mu b^dag b + delta/2 (b^dag^2 + b^2)``.

    The evolved vacuum is a squeezed vacuum, so the overlap follows from the
    Gaussian generating function:
    ``(1 + delta^2/Omega^2 sin^2(Omega t))^(-1/2)`` for ``|mu| > |delta|`` and
    the same with ``sinh`` for ``|mu| < |delta|``.
    """
    t = np.asarray(t, dtype=float)
    omega = math.sqrt(abs(mu * mu - delta * delta))
    c = delta * delta / (omega * omega)
    s2 = np.sin(omega * t) ** 2 if abs(mu) > abs(delta) else np.sinh(omega * t) ** 2
    return (1 + c * s2) ** -0.5


def two_mode_echo(g1: float, g2: float, t, omega: float = 1.0):
    """Exact vacuum echo of the two-mode effective model (decoupled sum/difference modes)."""
    return (squeezed_vacuum_echo(omega + g1, g2, t)
            * squeezed_vacuum_echo(omega - g1, g2, t))


def mirror_growth_rate(g1: float, g2: float, omega: float = 1.0, omega0: float = 1.0) -> float:
    """Linearized echo decay rate of the full model started from ``|up>|0>``.

    Near the fully excited spin state ``J_z = j - c^dag c`` and ``J_- ~ sqrt(N) c^dag``,
    so the atoms act as a boson of frequency ``-omega0`` with the roles of the
    two couplings exchanged. Returns twice the largest imaginary part of the
    normal-mode frequencies (zero for bounded motion).
    """
    # Heisenberg equations i d/dt (a, c, a^dag, c^dag) = M (a, c, a^dag, c^dag)
    m = np.array([
        [omega, g2, 0.0, g1],
        [g2, -omega0, g1, 0.0],
        [0.0, -g1, -omega, -g2],
        [-g1, 0.0, -g2, omega0],
    ])
    return float(2 * np.max(np.linalg.eigvals(m).imag))
