"""Surface controller: sync, blind beamforming, scheduling, element selection."""
