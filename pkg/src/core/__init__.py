"""
Simulation engine: network model, linear algebra, demand, pricing,
estimation, policies, simulator and scenario I/O.
"""
