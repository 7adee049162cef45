from hypothesis import settings

# Property tests here generate whole datasets per example; wall-clock
# deadlines only add environment-dependent flakiness.
settings.register_profile("ziptrace", deadline=None)
settings.load_profile("ziptrace")
