import os

from hypothesis import HealthCheck, settings

# "pkg" is derandomized so a test log is reproducible; "explore" draws fresh examples
common = dict(deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("pkg", max_examples=60, derandomize=True, **common)
settings.register_profile("explore", max_examples=500, **common)
settings.load_profile(os.environ.get("SDDEFELLER_HYPOTHESIS", "pkg"))
