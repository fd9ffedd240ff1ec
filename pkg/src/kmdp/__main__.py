import sys

from kmdp.cli import main

sys.exit(main())
