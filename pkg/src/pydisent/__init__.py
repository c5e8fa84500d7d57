from .datagen import Dataset, generate, load_dataset, SyntheticSpec
from .diffutil import PyDisentException
from .engine import Checkpoint, evaluate, train, TrainConfig
from .version import __version__
