"""RIS-assisted mmWave OFDM joint communication and sensing: manifold ADMM
hybrid beamforming with RIS phase design, baselines and a seeded harness."""

__version__ = "0.1.0"
