import sys

from docsolve.main import main

sys.exit(main())
