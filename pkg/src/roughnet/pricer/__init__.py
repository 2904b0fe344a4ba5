"""Fourier pricing of European calls under rough Heston."""

from roughnet.pricer.fourier import PricerConfig, call_price, surface, surfaces
from roughnet.pricer.params import RoughHestonParams, SmileGrid, VolSurface

__all__ = ["PricerConfig", "RoughHestonParams", "SmileGrid", "VolSurface", "call_price", "surface", "surfaces"]
