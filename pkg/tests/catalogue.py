"""Integral-test fixtures on the log-power family with analytic verdicts.

For F(s) = s^-gamma and f(t) = t |log t|^b (log|log t|)^d the substitution
u = |log t| turns the integral into int u^(gamma b) (log u)^(gamma d) du,
which converges iff gamma b < -1, or gamma b = -1 and gamma d < -1.  For
f(t) = t^a the integrand is a power of t, decided by the sign of the
exponent on the probed side.
"""
from pssmp.envelope import RegularVariation, TestFunction


def analytic_verdict(gamma, f: TestFunction) -> str:
    if f.a != 1:
        # t/f(t) = t^(1-a)/c: at 0 it blows up iff a > 1, at infinity iff a < 1
        grows = f.a > 1 if f.side == "zero" else f.a < 1
        return "converges" if grows else "diverges"
    e1, e2 = gamma * f.b, gamma * f.d
    if e1 < -1 or (e1 == -1 and e2 < -1):
        return "converges"
    return "diverges"


def _fixtures():
    out = []
    for side in ("zero", "infinity"):
        # gamma = 2 with f = t |log t|^-c: boundary at c = 1/2
        for c in (0.4, 0.5, 0.6, 1.0):
            out.append((2.0, TestFunction(1.0, 1.0, -c, 0.0, side)))
        # gamma = 1: boundary at b = -1, refined by the log-log factor
        for b, d in ((-0.8, 0.0), (-1.0, 0.0), (-1.0, -2.0), (-1.5, 0.0)):
            out.append((1.0, TestFunction(1.0, 1.0, b, d, side)))
        # gamma = 1/2: boundary at b = -2
        for b, d in ((-2.0, 0.0), (-3.0, 0.0)):
            out.append((0.5, TestFunction(1.0, 1.0, b, d, side)))
    # pure powers
    out.append((2.0, TestFunction(1.0, 0.5, 0.0, 0.0, "infinity")))   # f = sqrt t: converges
    out.append((2.0, TestFunction(1.0, 1.5, 0.0, 0.0, "zero")))       # converges at 0
    return out


CATALOGUE = [(RegularVariation(g), f, analytic_verdict(g, f)) for g, f in _fixtures()]
