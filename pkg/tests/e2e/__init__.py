"""
End-to-end checks: oracle equivalence over random instances and
long-horizon trends (marked slow).
"""
