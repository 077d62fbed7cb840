# Independent oracle: mean-field equations written from scratch, solved with scipy.
import numpy as np
from scipy.optimize import fsolve, brentq
from scipy.special import jv, jn_zeros

def rhs(y, p):
    d, dn, g1, g2, sig, wm, gm, g = p
    sm = y[0] + 1j*y[1]; sz = y[2]; a = y[3] + 1j*y[4]
    dsm = -g2*sm - 1j*d*sm + 0.5j*dn*sz - 1j*g*(a + np.conj(a))*sm
    dsz = -g1*(sz - sig) + 1j*dn*(sm - np.conj(sm))
    da = -1j*wm*a - 0.5*gm*a - 0.5j*g*sz
    return np.array([dsm.real, dsm.imag, dsz.real, da.real, da.imag])

def jac(y, p, h=1e-7):
    J = np.zeros((5, 5))
    for k in range(5):
        e = np.zeros(5); e[k] = h
        J[:, k] = (rhs(y + e, p) - rhs(y - e, p)) / (2*h)
    return J

def eq(p):
    y = fsolve(lambda y: rhs(y, p), [0, 0, -0.5, 0, 0], xtol=1e-14)
    for _ in range(5):
        y = y - np.linalg.solve(jac(y, p), rhs(y, p))
    return y

def lead(p):
    return max(np.linalg.eigvals(jac(eq(p), p)).real)

d, dn = -0.05, 0.08
wm = np.hypot(d, dn)
base = [d, dn, 0.002, 0.002, -1.0, wm, wm/1e4]
gc = brentq(lambda g: lead(base + [g]), 1e-5, 1e-2, xtol=1e-15, rtol=1e-13)
print("g_c", repr(gc))
p = base + [0.3*gc]
y = eq(p)
print("eq", [repr(v) for v in y])
ev = np.linalg.eigvals(jac(y, p))
mech = [z for z in ev if abs(abs(z.imag) - wm) < 0.2*wm and abs(z.real) < 1e-4]
print("mech ev", mech)
print("jv", [repr(jv(n, x)) for n, x in [(0, 2.5), (1, 7.3), (3, 0.4), (5, 11.0)]])
print("zeros", [list(map(repr, jn_zeros(n, 3))) for n in range(4)])
