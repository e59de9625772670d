"""Reference values for the probit tests, computed at 50 digits with mpmath."""
import mpmath as mp

mp.mp.dps = 50


def cdf(z):
    return mp.ncdf(z)


def log_cdf(z):
    return mp.log(mp.ncdf(z))


def inverse_mills(z):
    return mp.npdf(z) / mp.ncdf(z)


points = [-40, -37.5, -37, -30, -20, -10, -5, -1, 0, 1, 1.959964, 5, 10, 30]
print("z, Phi(z), log Phi(z), phi(z)/Phi(z)")
for z in points:
    z = mp.mpf(z)
    print(f"{mp.nstr(z, 10)}, {mp.nstr(cdf(z), 17)}, {mp.nstr(log_cdf(z), 17)}, {mp.nstr(inverse_mills(z), 17)}")
