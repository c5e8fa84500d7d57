# -*- coding: UTF-8 -*-
#
# Copyright 2024-2026 by the pydisent Contributors
# All rights reserved.
# This file is part of the pydisent Library, Licensed under GPLv3 (the 'License')
# You may not use this work except in compliance with the License.
# You may obtain a copy of the Licence at:
#   https://www.gnu.org/licenses/gpl-3.0.en.html

import sys

from pydisent.cli import main

sys.exit(main())
