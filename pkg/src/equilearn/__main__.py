import sys

from equilearn.cli import main

sys.exit(main())
