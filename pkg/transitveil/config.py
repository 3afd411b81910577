import os
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _env_bool(name, default='false'):
    return os.getenv(name, default).lower() in ('1', 'true', 'yes')


class Config:
    """Base configuration."""
    DEBUG = False
    TESTING = False

    # Logging Configuration
    LOG_LEVEL = os.getenv('TRANSITVEIL_LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'
    LOG_FILE = os.getenv('TRANSITVEIL_LOG_FILE')
    LOG_JSON = _env_bool('TRANSITVEIL_LOG_JSON')

    # Run Configuration
    DEFAULT_TIME_LIMIT = float(os.getenv('TRANSITVEIL_TIME_LIMIT', 300))  # seconds
    DEFAULT_JOBS = int(os.getenv('TRANSITVEIL_JOBS', 1))

    # Search Configuration
    WRPT_CHECK_INTERVAL = 1024  # expansions between budget checks
    WRPT_MAX_TARGETS = 64
    ORACLE_MAX_STATES = 1_000_000
    ORACLE_MAX_CANDIDATES = 8
    VERIFIER_MAX_CANDIDATES = 24

    # Clustering Configuration
    CBP_MAX_ITERATIONS = 100
    CBP_RESTARTS = 8

    # Scenario Generation
    GEN_MAX_ATTEMPTS_PER_SCENARIO = 200

    # Output Configuration
    CSV_SIGNIFICANT_DIGITS = 6
    CSV_TIME_FORMAT = '{:.3f}'


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = os.getenv('TRANSITVEIL_LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    LOG_LEVEL = 'WARNING'
    DEFAULT_TIME_LIMIT = 60.0


class BenchmarkConfig(Config):
    """Long benchmark runs."""
    LOG_LEVEL = os.getenv('TRANSITVEIL_LOG_LEVEL', 'WARNING')
    DEFAULT_JOBS = int(os.getenv('TRANSITVEIL_JOBS', os.cpu_count() or 1))


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'benchmark': BenchmarkConfig,
    'default': Config
}


def get_config(name=None):
    """Return the configuration class selected by name or TRANSITVEIL_ENV."""
    name = name or os.getenv('TRANSITVEIL_ENV', 'default')
    return config.get(name, Config)
