import sys

from fair_pipelines.cli import main

sys.exit(main())
