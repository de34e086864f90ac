from hypothesis import settings

# Deterministic property-test examples so the suite is reproducible run to run.
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")
