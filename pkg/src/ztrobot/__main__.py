import sys

from ztrobot.cli import main

sys.exit(main())
