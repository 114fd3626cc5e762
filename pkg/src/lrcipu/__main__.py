import sys

from lrcipu.workbench import main

sys.exit(main())
