"""Joint classical / CV-QKD coherent optical link simulator.

End-to-end, seed-deterministic simulation of a frequency-multiplexed QPSK
classical channel and a QPSK quantum channel sharing one coherent front end,
where the classical receiver supplies carrier frequency, phase and timing to
the quantum receiver.  Evaluates excess noise, classical BER and the
asymptotic secret key rate.
"""

__version__ = "0.1.0"
