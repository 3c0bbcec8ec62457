"""AEL parameter estimation: forward models, surrogate, sampler, data and CLI."""
