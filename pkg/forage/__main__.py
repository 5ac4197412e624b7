import sys

from forage.main import main

sys.exit(main())
