import sys

from adaef.bench.cli import main

sys.exit(main())
