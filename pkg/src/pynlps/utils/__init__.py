from .io import read_nltf, write_nltf, write_report, write_slices_csv
from .validator import ValidationError, validate_config
