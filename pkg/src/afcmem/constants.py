"""Physical constants and the Tm:YAG reference parameter sets.

All values are SI: Hz, m, 1/m.
"""

import math

C = 299_792_458.0

#: Center of the Tm:YAG 3H6 -> 3H4 inhomogeneous line.
NU0_TMYAG = 377_868e9
#: FWHM of the inhomogeneous line.
GAMMA_IN_TMYAG = 17e9

#: gamma (tooth FWHM) / gamma_tilde (Gaussian width parameter).
FWHM_PER_SIGMA = math.sqrt(8.0 * math.log(2.0))

#: Crystal cavity parameters fitted on the no-comb reflection trace.
TMYAG_CAVITY = {
    "peak_alpha": 170.0,  # 1.70 cm^-1
    "r1": 0.6927,
    "r2": 0.9999,
    "n_host": 1.799972,
    "L": 0.4350e-2,
    "s": 1.7142,
}

#: Comb parameters fitted at three detunings from NU0_TMYAG.
TMYAG_COMBS = {
    "a": {"detuning": 2.2765e9, "d_c": 1.5260, "delta": 23.4598e6, "gamma_tilde": 3.6063e6, "d0": 0.2008},
    "b": {"detuning": -2.7720e9, "d_c": 1.4867, "delta": 23.8160e6, "gamma_tilde": 2.9755e6, "d0": 0.0526},
    "c": {"detuning": -3.8675e9, "d_c": 1.4261, "delta": 24.3382e6, "gamma_tilde": 3.4462e6, "d0": 0.0254},
}

#: Near-impedance-matching offset of the fitted no-comb cavity.
IMPEDANCE_MATCH_OFFSET = -3.19e9
