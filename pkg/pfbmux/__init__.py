"""pfbmux: oversampled polyphase filter banks with a learned synthesis prototype for spectrum multiplexing."""

__version__ = "0.1.0"

from .utils import *
from .logger import *
from .cmd_design import run as cmd_design, setup_parser as setup_design_parser
from .cmd_train import run as cmd_train, setup_parser as setup_train_parser
from .cmd_mux import run as cmd_mux, setup_parser as setup_mux_parser
from .cmd_eval import run as cmd_eval, setup_parser as setup_eval_parser
from .cmd_bench import run as cmd_bench, setup_parser as setup_bench_parser
