"""
Django settings for couette_sim project.

The project has no web surface; Django provides configuration, logging,
management commands and the test runner for the shearflow app.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""
import math
import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Unused by the simulator, but Django refuses to start without one.
SECRET_KEY = os.environ.get(
    'SECRET_KEY', 'django-insecure-7v1m$k3@shearflow-local-only-2t8x#q0p!c9r'
)

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'shearflow',
]

# The test runner still needs a database connection.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

TIME_ZONE = 'UTC'

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Parallelism cap for FFT workers and sweep processes
COUETTE_THREADS = max(1, int(os.environ.get('COUETTE_THREADS', '1')))

# Output directory used when a command gets no --out
COUETTE_OUTPUT_DIR = Path(os.environ.get('COUETTE_OUTPUT_DIR', BASE_DIR / 'runs'))


# Logging
# https://docs.djangoproject.com/en/5.1/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'shearflow': {
            'handlers': ['console'],
            'level': os.environ.get('COUETTE_LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}


# Defaults for every run-file section. parse_config overlays a run file
# on top of these values; unknown keys in a run file are rejected.

SHEARFLOW_DEFAULTS = {
    'grid': {
        'n_z': 256,
        'n_v': 1024,
        'half_width': 4 * math.pi,
        'dealias_fraction': 2.0 / 3.0,
    },
    'physics': {
        'nu': 1e-3,
        'epsilon': 1e-3,
        'nonlinear': True,
    },
    'weights': {
        'kappa': 0.25,
        'c_kappa_exponent': 0.5,
        'mu': 1.0,
        's': 0.6,
        'lambda0': 1.0,
        'lambda_prime': 0.5,
        'delta_lambda': 1e-3,
        'q_tilde': 0.51,
        'sigma': 18.0,
        'beta': 6.0,
        'alpha': 1.0,
        'c0': 10.0,
    },
    'run': {
        't_max': 50.0,
        'cfl_safety': 0.4,
        'dt_max': 0.05,
        'integrator': 'rk4_integrating_factor',
        'remap_enabled': True,
        'diagnostics_stride': 10,
        'snapshot_every': 0,
        'seed': 0,
        'initial_data': 'gaussian',
        'modes': [],
        'gaussian_width': 1.0,
        'gaussian_wavenumbers': [1, 0],
        'gaussian_eta_center': 0.0,
    },
    'diagnostics': {
        'expensive': False,
        'k_watch': 2,
        'echo_prominence': 3.0,
        'echo_window': 10.0,
        'echo_transfer': False,
        'bootstrap_growth_factor': 8.0,
        'fit_window_start': 10.0,
        'fit_window_end': 100.0,
        'seam_threshold': 1e-8,
        'linear_samples': 200,
        'sobolev_index': 3.0,
        'property_samples': 1000000,
        'table_ks': [0, 1, 2, 3],
        'table_etas': [-100.0, -10.0, 0.0, 10.0, 100.0, 400.0, 1000.0],
        'table_times': [0.0, 10.0, 50.0, 100.0, 200.0, 400.0, 800.0, 2001.0],
    },
    'sweep': {
        'nu_max': 1e-3,
        'nu_min': 3e-5,
        'points': 4,
        'baseline': True,
    },
}
