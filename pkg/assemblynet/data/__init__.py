from .priors import synthetic_prior, encode_prior_channel, noisy_rater
from .phantom import PhantomSpec, Phantom, generate_phantom, generate_pool, simulate_rescan
from .pool import Pool, PoolSample, RescanImages, load_pool, write_pool
