"""Asymptotic secret-key-rate evaluation for the heterodyne, reverse-
reconciliation configuration, plus the QPSK AWGN BER reference.

The Holevo bound uses the standard Gaussian collective-attack formulas
(equivalent Gaussian channel parametrized by the estimated transmittance and
excess noise).  For a discrete QPSK alphabet at low modulation variance this
is an approximation of the discrete-modulation security analysis, adequate
here for order-of-magnitude key rates and the null-key threshold; it is NOT
a substitute for a discrete-modulation proof.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc


class SecurityError(ValueError):
    pass


@dataclass
class SecurityParams:
    va_snu: float            # modulation variance, per quadrature, SNU
    transmittance: float
    xi_snu: float            # excess noise at Bob, SNU
    eta: float = 1.0
    v_el_snu: float = 0.0
    beta: float = 0.95       # reconciliation efficiency
    baud_hz: float = 250e6
    revealed_fraction: float = 0.0
    deduct_revealed: bool = False

    def validate(self):
        if self.va_snu <= 0 or self.baud_hz <= 0:
            raise SecurityError("va_snu and baud_hz must be positive")
        if not 0 < self.transmittance <= 1:
            raise SecurityError("transmittance out of (0, 1]")
        if not 0 < self.eta <= 1:
            raise SecurityError("eta out of (0, 1]")
        if not 0 < self.beta <= 1:
            raise SecurityError("beta out of (0, 1]")
        if self.xi_snu < 0 or self.v_el_snu < 0:
            raise SecurityError("noise variances must be nonnegative")
        return self


@dataclass
class SecurityReport:
    mutual_information: float   # bits/symbol
    holevo_bound: float         # bits/symbol
    key_rate_raw: float         # beta*I_AB - chi_BE, signed
    key_rate_per_symbol: float  # floored at 0
    key_rate_bps: float


def _channel_noise(p: SecurityParams):
    chi_line = (1 - p.transmittance) / p.transmittance + p.xi_snu / p.transmittance
    chi_het = (2 - p.eta + 2 * p.v_el_snu) / p.eta
    chi_tot = chi_line + chi_het / p.transmittance
    return chi_line, chi_het, chi_tot


def mutual_information(p: SecurityParams):
    """Heterodyne Gaussian-channel mutual information, bits/symbol."""
    p.validate()
    V = p.va_snu + 1.0
    _, _, chi_tot = _channel_noise(p)
    return float(np.log2((V + chi_tot) / (1 + chi_tot)))


def entropy_g(x):
    """Bosonic entropy term G(x) of a symplectic eigenvalue (G(1) = 0)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    mask = x > 1 + 1e-12
    xp = x[mask]
    out[mask] = ((xp + 1) / 2) * np.log2((xp + 1) / 2) - \
                ((xp - 1) / 2) * np.log2((xp - 1) / 2)
    return out if out.shape else float(out)


def holevo_bound(p: SecurityParams, tol=1e-9):
    """Collective-attack Holevo bound chi_BE for heterodyne detection."""
    p.validate()
    V = p.va_snu + 1.0
    T = p.transmittance
    chi_line, chi_het, chi_tot = _channel_noise(p)

    A = V**2 * (1 - 2 * T) + 2 * T + T**2 * (V + chi_line) ** 2
    B = T**2 * (V * chi_line + 1) ** 2
    disc = A**2 - 4 * B
    if disc < -tol:
        raise SecurityError("nonphysical state: negative discriminant")
    disc = max(disc, 0.0)
    lam1 = np.sqrt((A + np.sqrt(disc)) / 2)
    lam2 = np.sqrt(max((A - np.sqrt(disc)) / 2, 0.0))

    denom = (T * (V + chi_tot)) ** 2
    C = (A * chi_het**2 + B + 1
         + 2 * chi_het * (V * np.sqrt(B) + T * (V + chi_line))
         + 2 * T * (V**2 - 1)) / denom
    D = ((V + np.sqrt(B) * chi_het) ** 2) / denom
    disc2 = C**2 - 4 * D
    if disc2 < -tol:
        raise SecurityError("nonphysical conditional state")
    disc2 = max(disc2, 0.0)
    lam3 = np.sqrt((C + np.sqrt(disc2)) / 2)
    lam4 = np.sqrt(max((C - np.sqrt(disc2)) / 2, 0.0))

    # allow a little float roundoff at the T = 1, xi = 0 boundary
    for lam in (lam1, lam2, lam3, lam4):
        if lam < 1 - 1e-7:
            raise SecurityError(f"nonphysical symplectic eigenvalue {lam}")
    return float(entropy_g(lam1) + entropy_g(lam2)
                 - entropy_g(lam3) - entropy_g(lam4))


def key_rate(p: SecurityParams) -> SecurityReport:
    """Devetak-Winter rate beta*I_AB - chi_BE, per symbol and per second."""
    p.validate()
    i_ab = mutual_information(p)
    chi = holevo_bound(p)
    raw = p.beta * i_ab - chi
    k_sym = max(raw, 0.0)
    scale = (1 - p.revealed_fraction) if p.deduct_revealed else 1.0
    return SecurityReport(mutual_information=i_ab, holevo_bound=chi,
                          key_rate_raw=raw, key_rate_per_symbol=k_sym,
                          key_rate_bps=k_sym * p.baud_hz * scale)


def null_key_threshold(p: SecurityParams, xi_max=1.0, tol=1e-5):
    """Excess noise at which the raw key rate crosses zero (bisection)."""
    from dataclasses import replace

    def raw(xi):
        return key_rate(replace(p, xi_snu=xi)).key_rate_raw

    lo, hi = 0.0, xi_max
    if raw(lo) <= 0:
        raise SecurityError("no positive key rate at xi = 0")
    if raw(hi) >= 0:
        raise SecurityError(f"key rate still positive at xi = {xi_max}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if raw(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def qpsk_ber_theory(snr_per_symbol):
    """Gray-coded QPSK bit error rate on AWGN: Q(sqrt(Es/N0))."""
    snr = np.asarray(snr_per_symbol, dtype=float)
    if np.any(snr < 0):
        raise SecurityError("snr must be nonnegative")
    return 0.5 * erfc(np.sqrt(snr / 2))
