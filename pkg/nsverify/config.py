import os

from dotenv import load_dotenv

load_dotenv()

basedir = os.path.abspath(os.path.dirname(__file__))


def _flag(name, default='0'):
    return os.environ.get(name, default).strip().lower() in ('1', 'true', 'yes', 'on')


class Config:
    OUTPUT_ROOT = os.environ.get('NSV_OUTPUT_ROOT') or 'runs'
    LOG_DIR = os.environ.get('NSV_LOG_DIR') or 'logs'
    LOG_LEVEL = os.environ.get('NSV_LOG_LEVEL') or 'INFO'
    SCENARIO_FOLDER = os.path.join(basedir, 'scenarios')

    # scipy.fft worker threads per transform
    FFT_WORKERS = int(os.environ.get('NSV_FFT_WORKERS') or 1)

    # Exponent of the W^1_sigma diagnostic, sigma > 3
    DEFAULT_SIGMA = float(os.environ.get('NSV_DEFAULT_SIGMA') or 4.0)

    # tol(dt) = C * dt**2 + floor
    TOLERANCE_FLOOR = float(os.environ.get('NSV_TOLERANCE_FLOOR') or 1e-9)
    TOLERANCE_CONSTANT = float(os.environ.get('NSV_TOLERANCE_CONSTANT') or 1.0)

    # Abort once the energy exceeds this multiple of the initial energy scale
    BLOWUP_FACTOR = float(os.environ.get('NSV_BLOWUP_FACTOR') or 1e8)

    CALIBRATION_ENSEMBLE = int(os.environ.get('NSV_CALIBRATION_ENSEMBLE') or 100)
    SHOW_PROGRESS = _flag('NSV_SHOW_PROGRESS')
    PARALLEL = int(os.environ.get('NSV_PARALLEL') or 1)
