"""Bistable reaction-diffusion systems around a compact obstacle: planar fronts, grid simulation and barrier checks."""
