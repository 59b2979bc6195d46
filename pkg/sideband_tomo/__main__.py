import sys

from sideband_tomo.main import main

sys.exit(main())
