"""Restriction-and-relaxation robust beamforming for localization-aided mmWave links."""
