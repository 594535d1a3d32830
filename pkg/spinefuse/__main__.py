# Import built-in modules
import sys

# Import local modules
from spinefuse.cli import main


sys.exit(main())
