from .scenes import *
from .responses import *
from .simulation import *
from .placement import *
