import sys

from treqs.cli import main

sys.exit(main())
