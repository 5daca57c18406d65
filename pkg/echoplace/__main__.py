import sys

from echoplace.cli import main

sys.exit(main())
