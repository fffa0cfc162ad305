"""Human-to-robot handover simulator."""
