from .wave import *
from .geometric import *
from .hybrid import *
